#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "urw/model/batch.hpp"
#include "urw/model/config.hpp"
#include "urw/model/output_head.hpp"
#include "urw/numerics/tensor.hpp"

namespace urw::model {

struct NamedParameter {
  std::string name;
  num::Tensor value;
};

struct ForwardOptions {
  // Dropout is active only when training and rng is set.
  bool training = false;
  std::mt19937_64* rng = nullptr;
};

// Final-layer decoder quantities. Unified heads fill attn/ctx, the lambda
// head fills attn_h/attn_u/ctx_h/ctx_u/lambda.
struct DecoderOutput {
  num::Tensor d;       // [B, T, d] decoder output of the last layer
  num::Tensor ctx;     // [B, T, d] cross-attention sub-layer output
  num::Tensor ctx_h;   // [B, T, d]
  num::Tensor ctx_u;   // [B, T, d]
  num::Tensor attn;    // [B, T, m] head-averaged cross-attention weights
  num::Tensor attn_h;  // [B, T, m + 1]; the last column is the sentinel
  num::Tensor attn_u;  // [B, T, m]
  num::Tensor lambda;  // [B, T]
  num::Tensor p_gen;   // [B, T]
  num::Tensor vocab_probs;  // [B, T, V]
};

class RewriterModel {
 public:
  // Xavier-uniform matrices, zero biases and gates, unit layer-norm gains.
  RewriterModel(const ModelConfig& config, std::uint64_t seed);

  RewriterModel(const RewriterModel&) = delete;
  RewriterModel& operator=(const RewriterModel&) = delete;
  RewriterModel(RewriterModel&&) = default;
  RewriterModel& operator=(RewriterModel&&) = default;

  const ModelConfig& config() const noexcept { return config_; }
  std::span<const NamedParameter> parameters() const noexcept { return params_; }
  bool has_parameter(std::string_view name) const;
  // Throws IndexError for unknown names.
  num::Tensor parameter(std::string_view name) const;
  std::size_t parameter_count() const;
  void zero_grad();

  // [B, m, d]: WE[id] + PE[pos] + TE[turn].
  num::Tensor embed_inputs(num::Tape& tape, std::span<const std::size_t> ids,
                           std::span<const std::size_t> positions,
                           std::span<const std::size_t> turns, num::Shape prefix) const;
  // Final encodings E^(L), [B, m, d].
  num::Tensor encode(num::Tape& tape, const Batch& batch, const ForwardOptions& opts = {}) const;

  // Per-layer attention weights, head-averaged.
  struct LayerTrace {
    num::Tensor self_attn;  // [B, T, T]
    num::Tensor cross;      // [B, T, m] (unified heads)
    num::Tensor cross_h;    // [B, T, m + 1]
    num::Tensor cross_u;    // [B, T, m]
    num::Tensor ctx, ctx_h, ctx_u;
  };
  // One decoder layer. `enc` may have batch 1 and is then shared by every row.
  num::Tensor decode_layer(num::Tape& tape, std::size_t layer, const num::Tensor& d_prev,
                           const num::Tensor& enc, const Batch& batch,
                           const ForwardOptions& opts = {}, LayerTrace* trace = nullptr) const;
  DecoderOutput decode(num::Tape& tape, const num::Tensor& enc, const Batch& batch,
                       const ForwardOptions& opts = {}) const;

  // sigmoid(w_d.D + w_H.C_H + w_U.C_U) over the last axis; [..., d] -> [...].
  // ContractError unless the head is ptr-lambda.
  num::Tensor compute_lambda(num::Tape& tape, const num::Tensor& d, const num::Tensor& c_h,
                             const num::Tensor& c_u) const;

  // Probability of each gold target, [B, T]; padded steps hold arbitrary values.
  num::Tensor target_probabilities(num::Tape& tape, const DecoderOutput& out,
                                   const Batch& batch) const;

  // Token-averaged negative log-likelihood of the batch targets.
  // DataError when a pointer head cannot produce a target token.
  num::Tensor nll_loss(num::Tape& tape, const Batch& batch, const ForwardOptions& opts = {}) const;

  StepState step_state(const DecoderOutput& out, const Batch& batch, std::size_t row,
                       std::size_t step) const;

  // Checks that every valid target of the batch is reachable under the head.
  void check_support(const Batch& batch) const;

 private:
  struct Attention {
    num::Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  };
  struct LayerNorm {
    num::Tensor gain, bias;
  };
  struct FeedForward {
    num::Tensor w1, b1, w2, b2;
  };
  struct EncoderLayer {
    Attention self;
    LayerNorm ln1, ln2;
    FeedForward ffn;
  };
  struct DecoderLayer {
    Attention self;
    Attention cross;    // unified heads
    Attention cross_h;  // ptr-lambda
    Attention cross_u;  // ptr-lambda
    LayerNorm ln1, ln2, ln2_u, ln3;
    FeedForward ffn;
  };

  num::Tensor add_param(std::string name, num::Shape shape, int init);
  Attention make_attention(const std::string& prefix);
  LayerNorm make_norm(const std::string& prefix);
  FeedForward make_ffn(const std::string& prefix, std::size_t in);

  num::Tensor attend(num::Tape& tape, const Attention& a, const num::Tensor& q,
                     const num::Tensor& kv, const num::Mask& mask, const ForwardOptions& opts,
                     num::Tensor* weights) const;
  num::Tensor feed_forward(num::Tape& tape, const FeedForward& f, const num::Tensor& x,
                           const ForwardOptions& opts) const;
  num::Tensor norm(num::Tape& tape, const LayerNorm& n, const num::Tensor& x) const;
  num::Tensor word_embedding(num::Tape& tape, std::span<const std::size_t> ids, num::Shape prefix) const;
  num::Tensor gate_dot(num::Tape& tape, const num::Tensor& x, const num::Tensor& w) const;
  num::Tensor drop(num::Tape& tape, const num::Tensor& x, const ForwardOptions& opts) const;

  ModelConfig config_;
  std::mt19937_64 init_rng_;
  std::vector<NamedParameter> params_;

  num::Tensor word_emb_, pos_emb_, turn_emb_;
  std::vector<EncoderLayer> enc_;
  std::vector<DecoderLayer> dec_;
  num::Tensor sentinel_;
  num::Tensor gate_d_, gate_h_, gate_u_;
  num::Tensor out_w_, out_b_;
  num::Tensor pgen_d_, pgen_c_, pgen_b_;
};

}  // namespace urw::model
