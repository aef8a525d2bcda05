#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include <nlohmann/json_fwd.hpp>

namespace urw::model {

enum class OutputHead { kGen, kPtrNet, kPtrGen, kPtrLambda };

// "gen", "ptr-net", "ptr-gen", "ptr-lambda"
std::string_view to_string(OutputHead head);
// Accepts the names above (and '_' for '-'); throws ConfigError otherwise.
OutputHead parse_head(std::string_view name);

enum class PositionEncoding { kLearned, kSinusoidal };

// "learned", "sinusoidal"
std::string_view to_string(PositionEncoding pe);
PositionEncoding parse_position_encoding(std::string_view name);

// True for the heads whose support is restricted to input tokens.
constexpr bool is_pure_pointer(OutputHead h) {
  return h == OutputHead::kPtrNet || h == OutputHead::kPtrLambda;
}

struct ModelConfig {
  std::size_t d_model = 512;
  std::size_t n_heads = 8;
  std::size_t n_layers = 6;
  std::size_t d_ff = 2048;
  std::size_t max_positions = 256;
  std::size_t max_turns = 8;
  OutputHead head = OutputHead::kPtrLambda;
  std::size_t vocab_size = 0;
  double dropout_rate = 0.1;
  // When false the gate weights the history copy distribution instead.
  bool lambda_weights_utterance = true;
  // Sinusoidal tables are fixed and not part of parameters().
  PositionEncoding position_encoding = PositionEncoding::kLearned;
  // Leading cross-attention heads of the last decoder layer averaged into the
  // copy distribution; 0 averages all heads.
  std::size_t copy_heads = 0;
  // Multiply word embeddings by sqrt(d_model) before adding positions.
  bool scale_word_embeddings = false;

  bool operator==(const ModelConfig&) const = default;
};

// Throws ConfigError naming the offending field.
void validate(const ModelConfig& config);

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});

}  // namespace urw::model
