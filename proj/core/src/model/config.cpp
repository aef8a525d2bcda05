#include "urw/model/config.hpp"

#include <cctype>
#include <nlohmann/json.hpp>

#include "urw/error.hpp"

namespace urw::model {

std::string_view to_string(OutputHead head) {
  switch (head) {
    case OutputHead::kGen: return "gen";
    case OutputHead::kPtrNet: return "ptr-net";
    case OutputHead::kPtrGen: return "ptr-gen";
    case OutputHead::kPtrLambda: return "ptr-lambda";
  }
  return "?";
}

OutputHead parse_head(std::string_view name) {
  std::string s(name);
  for (auto& c : s) {
    if (c == '_') c = '-';
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  if (s == "gen") return OutputHead::kGen;
  if (s == "ptr-net") return OutputHead::kPtrNet;
  if (s == "ptr-gen") return OutputHead::kPtrGen;
  if (s == "ptr-lambda" || s == "ptr-λ") return OutputHead::kPtrLambda;
  throw ConfigError("unknown output head '" + std::string(name) +
                    "' (expected gen, ptr-net, ptr-gen or ptr-lambda)");
}

std::string_view to_string(PositionEncoding pe) {
  return pe == PositionEncoding::kSinusoidal ? "sinusoidal" : "learned";
}

PositionEncoding parse_position_encoding(std::string_view name) {
  if (name == "learned") return PositionEncoding::kLearned;
  if (name == "sinusoidal") return PositionEncoding::kSinusoidal;
  throw ConfigError("unknown position_encoding '" + std::string(name) +
                    "' (expected learned or sinusoidal)");
}

void validate(const ModelConfig& c) {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(c.d_model, "d_model");
  positive(c.n_heads, "n_heads");
  positive(c.d_ff, "d_ff");
  positive(c.max_positions, "max_positions");
  positive(c.max_turns, "max_turns");
  positive(c.vocab_size, "vocab_size");
  if (c.d_model % c.n_heads != 0) {
    throw ConfigError("d_model " + std::to_string(c.d_model) + " is not divisible by n_heads " +
                      std::to_string(c.n_heads));
  }
  if (!(c.dropout_rate >= 0.0 && c.dropout_rate < 1.0)) {
    throw ConfigError("dropout_rate must lie in [0, 1)");
  }
  if (c.copy_heads > c.n_heads) {
    throw ConfigError("copy_heads " + std::to_string(c.copy_heads) + " exceeds n_heads " +
                      std::to_string(c.n_heads));
  }
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"d_model", c.d_model},
          {"n_heads", c.n_heads},
          {"n_layers", c.n_layers},
          {"d_ff", c.d_ff},
          {"max_positions", c.max_positions},
          {"max_turns", c.max_turns},
          {"head", std::string(to_string(c.head))},
          {"vocab_size", c.vocab_size},
          {"dropout_rate", c.dropout_rate},
          {"lambda_weights_utterance", c.lambda_weights_utterance},
          {"position_encoding", std::string(to_string(c.position_encoding))},
          {"copy_heads", c.copy_heads},
          {"scale_word_embeddings", c.scale_word_embeddings}};
}

ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig c) {
  if (!j.is_object()) throw ConfigError("model section must be an object");
  try {
    c.d_model = j.value("d_model", c.d_model);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.n_layers = j.value("n_layers", c.n_layers);
    c.d_ff = j.value("d_ff", c.d_ff);
    c.max_positions = j.value("max_positions", c.max_positions);
    c.max_turns = j.value("max_turns", c.max_turns);
    if (j.contains("head")) c.head = parse_head(j.at("head").get<std::string>());
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
    c.lambda_weights_utterance = j.value("lambda_weights_utterance", c.lambda_weights_utterance);
    c.copy_heads = j.value("copy_heads", c.copy_heads);
    c.scale_word_embeddings = j.value("scale_word_embeddings", c.scale_word_embeddings);
    if (j.contains("position_encoding")) {
      c.position_encoding = parse_position_encoding(j.at("position_encoding").get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model section: ") + e.what());
  }
  return c;
}

}  // namespace urw::model
