#include "urw/model/rewriter.hpp"

#include <algorithm>
#include <cmath>

#include "urw/corpus/vocabulary.hpp"
#include "urw/error.hpp"
#include "urw/numerics/ops.hpp"

namespace urw::model {

using num::Mask;
using num::Shape;
using num::Tape;
using num::Tensor;

namespace {

enum Init { kZero = 0, kXavier = 1, kOnes = 2 };

// Same encoder rows for every decoder row; only used for inference.
Tensor broadcast_batch(const Tensor& enc, std::size_t rows) {
  if (enc.dim(0) == rows) return enc;
  if (enc.dim(0) != 1) {
    throw DimensionError("encoder batch " + std::to_string(enc.dim(0)) + " vs decoder batch " +
                         std::to_string(rows));
  }
  std::vector<double> v;
  v.reserve(enc.size() * rows);
  for (std::size_t r = 0; r < rows; ++r) v.insert(v.end(), enc.data().begin(), enc.data().end());
  return Tensor::from_data({rows, enc.dim(1), enc.dim(2)}, std::move(v));
}

// keep(b, query, key) replicated across heads: [B*h, Tq, Tk]
template <typename Keep>
Mask head_mask(std::size_t B, std::size_t h, std::size_t tq, std::size_t tk, Keep keep) {
  Mask m;
  m.shape = {B * h, tq, tk};
  m.keep.resize(B * h * tq * tk);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t i = 0; i < tq; ++i) {
      for (std::size_t j = 0; j < tk; ++j) {
        const std::uint8_t k = keep(b, i, j) ? 1 : 0;
        for (std::size_t hh = 0; hh < h; ++hh) m.keep[((b * h + hh) * tq + i) * tk + j] = k;
      }
    }
  }
  return m;
}

bool has_history(const Batch& batch, std::size_t b) {
  for (std::size_t j = 0; j < batch.src_len; ++j) {
    const std::size_t k = b * batch.src_len + j;
    if (batch.src_valid[k] && batch.src_hist[k]) return true;
  }
  return false;
}

// [..., 1] -> [...]
Tensor drop_last_axis(Tape& tape, const Tensor& x) {
  Shape s(x.shape().begin(), x.shape().end() - 1);
  if (s.empty()) s.push_back(1);
  return num::reshape(tape, x, std::move(s));
}

Tensor sinusoid_table(std::size_t rows, std::size_t d) {
  std::vector<double> v(rows * d);
  for (std::size_t p = 0; p < rows; ++p) {
    for (std::size_t i = 0; i < d; ++i) {
      const double angle = static_cast<double>(p) /
                            std::pow(10000.0, static_cast<double>(i - i % 2) / static_cast<double>(d));
      v[p * d + i] = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
  return Tensor::from_data({rows, d}, std::move(v));
}

}  // namespace

RewriterModel::RewriterModel(const ModelConfig& config, std::uint64_t seed)
    : config_(config), init_rng_(seed) {
  validate(config_);
  const std::size_t d = config_.d_model;
  word_emb_ = add_param("embed.word", {config_.vocab_size, d}, kXavier);
  pos_emb_ = config_.position_encoding == PositionEncoding::kLearned
                 ? add_param("embed.position", {config_.max_positions, d}, kXavier)
                 : sinusoid_table(config_.max_positions, d);
  turn_emb_ = add_param("embed.turn", {config_.max_turns, d}, kXavier);
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    const std::string p = "encoder." + std::to_string(l) + ".";
    EncoderLayer e;
    e.self = make_attention(p + "self");
    e.ln1 = make_norm(p + "ln1");
    e.ffn = make_ffn(p + "ffn", d);
    e.ln2 = make_norm(p + "ln2");
    enc_.push_back(std::move(e));
  }
  const bool split = config_.head == OutputHead::kPtrLambda;
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    const std::string p = "decoder." + std::to_string(l) + ".";
    DecoderLayer dl;
    dl.self = make_attention(p + "self");
    dl.ln1 = make_norm(p + "ln1");
    if (split) {
      dl.cross_h = make_attention(p + "cross_h");
      dl.ln2 = make_norm(p + "ln2_h");
      dl.cross_u = make_attention(p + "cross_u");
      dl.ln2_u = make_norm(p + "ln2_u");
      dl.ffn = make_ffn(p + "ffn", 2 * d);
    } else {
      dl.cross = make_attention(p + "cross");
      dl.ln2 = make_norm(p + "ln2");
      dl.ffn = make_ffn(p + "ffn", d);
    }
    dl.ln3 = make_norm(p + "ln3");
    dec_.push_back(std::move(dl));
  }
  switch (config_.head) {
    case OutputHead::kPtrLambda:
      sentinel_ = add_param("history.sentinel", {d}, kZero);
      gate_d_ = add_param("gate.w_d", {d}, kZero);
      gate_h_ = add_param("gate.w_h", {d}, kZero);
      gate_u_ = add_param("gate.w_u", {d}, kZero);
      break;
    case OutputHead::kPtrGen:
      pgen_d_ = add_param("p_gen.w_d", {d}, kZero);
      pgen_c_ = add_param("p_gen.w_c", {d}, kZero);
      pgen_b_ = add_param("p_gen.b", {1}, kZero);
      [[fallthrough]];
    case OutputHead::kGen:
      out_w_ = add_param("output.w", {d, config_.vocab_size}, kXavier);
      out_b_ = add_param("output.b", {config_.vocab_size}, kZero);
      break;
    case OutputHead::kPtrNet:
      break;
  }
}

Tensor RewriterModel::add_param(std::string name, Shape shape, int init) {
  auto t = Tensor::zeros(shape, true);
  auto v = t.data_mut();
  if (init == kOnes) {
    std::fill(v.begin(), v.end(), 1.0);
  } else if (init == kXavier) {
    const double limit = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (auto& x : v) x = u(init_rng_);
  }
  params_.push_back({std::move(name), t});
  return t;
}

RewriterModel::Attention RewriterModel::make_attention(const std::string& p) {
  const std::size_t d = config_.d_model;
  Attention a;
  a.wq = add_param(p + ".w_q", {d, d}, kXavier);
  a.bq = add_param(p + ".b_q", {d}, kZero);
  a.wk = add_param(p + ".w_k", {d, d}, kXavier);
  a.bk = add_param(p + ".b_k", {d}, kZero);
  a.wv = add_param(p + ".w_v", {d, d}, kXavier);
  a.bv = add_param(p + ".b_v", {d}, kZero);
  a.wo = add_param(p + ".w_o", {d, d}, kXavier);
  a.bo = add_param(p + ".b_o", {d}, kZero);
  return a;
}

RewriterModel::LayerNorm RewriterModel::make_norm(const std::string& p) {
  return {add_param(p + ".gain", {config_.d_model}, kOnes),
          add_param(p + ".bias", {config_.d_model}, kZero)};
}

RewriterModel::FeedForward RewriterModel::make_ffn(const std::string& p, std::size_t in) {
  FeedForward f;
  f.w1 = add_param(p + ".w1", {in, config_.d_ff}, kXavier);
  f.b1 = add_param(p + ".b1", {config_.d_ff}, kZero);
  f.w2 = add_param(p + ".w2", {config_.d_ff, config_.d_model}, kXavier);
  f.b2 = add_param(p + ".b2", {config_.d_model}, kZero);
  return f;
}

bool RewriterModel::has_parameter(std::string_view name) const {
  return std::any_of(params_.begin(), params_.end(), [&](const auto& p) { return p.name == name; });
}

Tensor RewriterModel::parameter(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.value;
  }
  throw IndexError("no parameter named '" + std::string(name) + "'");
}

std::size_t RewriterModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void RewriterModel::zero_grad() {
  for (auto& p : params_) {
    auto t = p.value;
    t.zero_grad();
  }
}

Tensor RewriterModel::drop(Tape& tape, const Tensor& x, const ForwardOptions& opts) const {
  if (!opts.training || opts.rng == nullptr || config_.dropout_rate == 0.0) return x;
  return num::dropout(tape, x, config_.dropout_rate, *opts.rng);
}

Tensor RewriterModel::attend(Tape& tape, const Attention& a, const Tensor& q, const Tensor& kv,
                             const Mask& mask, const ForwardOptions& opts, Tensor* weights) const {
  const std::size_t h = config_.n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(config_.d_model / h));
  auto Q = num::split_heads(tape, num::add_bias(tape, num::matmul(tape, q, a.wq), a.bq), h);
  auto K = num::split_heads(tape, num::add_bias(tape, num::matmul(tape, kv, a.wk), a.bk), h);
  auto V = num::split_heads(tape, num::add_bias(tape, num::matmul(tape, kv, a.wv), a.bv), h);
  auto A = num::softmax_masked(tape, num::affine(tape, num::bmm(tape, Q, K, true), scale), mask);
  if (weights != nullptr) *weights = A;
  auto ctx = num::merge_heads(tape, num::bmm(tape, drop(tape, A, opts), V), h);
  return num::add_bias(tape, num::matmul(tape, ctx, a.wo), a.bo);
}

Tensor RewriterModel::feed_forward(Tape& tape, const FeedForward& f, const Tensor& x,
                                   const ForwardOptions& opts) const {
  auto hidden = num::relu(tape, num::add_bias(tape, num::matmul(tape, x, f.w1), f.b1));
  return drop(tape, num::add_bias(tape, num::matmul(tape, hidden, f.w2), f.b2), opts);
}

Tensor RewriterModel::norm(Tape& tape, const LayerNorm& n, const Tensor& x) const {
  return num::layer_norm(tape, x, n.gain, n.bias);
}

Tensor RewriterModel::gate_dot(Tape& tape, const Tensor& x, const Tensor& w) const {
  return num::matmul(tape, x, num::reshape(tape, w, {w.size(), 1}));
}

Tensor RewriterModel::word_embedding(Tape& tape, std::span<const std::size_t> ids, Shape prefix) const {
  auto we = num::embedding(tape, word_emb_, ids, std::move(prefix), "word embedding");
  if (!config_.scale_word_embeddings) return we;
  return num::affine(tape, we, std::sqrt(static_cast<double>(config_.d_model)));
}

Tensor RewriterModel::embed_inputs(Tape& tape, std::span<const std::size_t> ids,
                                   std::span<const std::size_t> positions,
                                   std::span<const std::size_t> turns, Shape prefix) const {
  auto we = word_embedding(tape, ids, prefix);
  auto pe = num::embedding(tape, pos_emb_, positions, prefix, "position embedding");
  auto te = num::embedding(tape, turn_emb_, turns, prefix, "turn embedding");
  return num::add(tape, num::add(tape, we, pe), te);
}

Tensor RewriterModel::encode(Tape& tape, const Batch& batch, const ForwardOptions& opts) const {
  const std::size_t B = batch.batch, m = batch.src_len;
  if (m > config_.max_positions) {
    throw DimensionError("input length " + std::to_string(m) + " exceeds max_positions " +
                         std::to_string(config_.max_positions));
  }
  auto x = embed_inputs(tape, batch.src_ids, batch.src_pos, batch.src_turn, {B, m});
  if (enc_.empty()) return x;
  const auto mask = head_mask(B, config_.n_heads, m, m, [&](std::size_t b, std::size_t, std::size_t j) {
    return batch.src_valid[b * m + j] != 0;
  });
  for (const auto& layer : enc_) {
    auto a = attend(tape, layer.self, x, x, mask, opts, nullptr);
    x = norm(tape, layer.ln1, num::add(tape, x, a));
    x = norm(tape, layer.ln2, num::add(tape, x, feed_forward(tape, layer.ffn, x, opts)));
  }
  return x;
}

Tensor RewriterModel::decode_layer(Tape& tape, std::size_t l, const Tensor& d_prev,
                                   const Tensor& enc_in, const Batch& batch,
                                   const ForwardOptions& opts, LayerTrace* trace) const {
  if (l >= dec_.size()) throw IndexError("decoder layer " + std::to_string(l) + " out of range");
  const auto& layer = dec_[l];
  const std::size_t B = batch.batch, m = batch.src_len, T = batch.tgt_len, h = config_.n_heads;
  const Tensor enc = broadcast_batch(enc_in, B);

  const auto causal = head_mask(B, h, T, T, [](std::size_t, std::size_t i, std::size_t j) { return j <= i; });
  Tensor w_self;
  auto s = attend(tape, layer.self, d_prev, d_prev, causal, opts, trace ? &w_self : nullptr);
  auto M = norm(tape, layer.ln1, num::add(tape, d_prev, s));
  if (trace) trace->self_attn = num::mean_heads(tape, w_self, h);

  if (config_.head != OutputHead::kPtrLambda) {
    const auto mask = head_mask(B, h, T, m, [&](std::size_t b, std::size_t, std::size_t j) {
      return batch.src_valid[b * m + j] != 0;
    });
    Tensor w;
    auto C = norm(tape, layer.ln2, num::add(tape, M, attend(tape, layer.cross, M, enc, mask, opts, &w)));
    if (trace) {
      trace->cross = num::mean_heads(tape, w, h, config_.copy_heads);
      trace->ctx = C;
    }
    return norm(tape, layer.ln3, num::add(tape, C, feed_forward(tape, layer.ffn, C, opts)));
  }

  // History side gets the sentinel row as position m; it is attendable only
  // when a sample has no history, so C(H) stays defined.
  std::vector<std::uint8_t> no_hist(B);
  for (std::size_t b = 0; b < B; ++b) no_hist[b] = has_history(batch, b) ? 0 : 1;
  const auto mask_h = head_mask(B, h, T, m + 1, [&](std::size_t b, std::size_t, std::size_t j) {
    if (j == m) return no_hist[b] != 0;
    const std::size_t k = b * m + j;
    return batch.src_valid[k] && batch.src_hist[k];
  });
  const auto mask_u = head_mask(B, h, T, m, [&](std::size_t b, std::size_t, std::size_t j) {
    const std::size_t k = b * m + j;
    return batch.src_valid[k] && !batch.src_hist[k];
  });
  auto enc_h = num::append_row(tape, enc, sentinel_);
  Tensor wh, wu;
  auto CH = norm(tape, layer.ln2, num::add(tape, M, attend(tape, layer.cross_h, M, enc_h, mask_h, opts, &wh)));
  auto CU = norm(tape, layer.ln2_u, num::add(tape, M, attend(tape, layer.cross_u, M, enc, mask_u, opts, &wu)));
  if (trace) {
    trace->cross_h = num::mean_heads(tape, wh, h, config_.copy_heads);
    trace->cross_u = num::mean_heads(tape, wu, h, config_.copy_heads);
    trace->ctx_h = CH;
    trace->ctx_u = CU;
  }
  auto f = feed_forward(tape, layer.ffn, num::concat_last(tape, CH, CU), opts);
  return norm(tape, layer.ln3, num::add(tape, num::add(tape, CH, CU), f));
}

DecoderOutput RewriterModel::decode(Tape& tape, const Tensor& enc, const Batch& batch,
                                    const ForwardOptions& opts) const {
  if (dec_.empty()) throw ContractError("decoding needs at least one decoder layer");
  const std::size_t B = batch.batch, T = batch.tgt_len;
  if (T > config_.max_positions) {
    throw DimensionError("decoder length " + std::to_string(T) + " exceeds max_positions " +
                         std::to_string(config_.max_positions));
  }
  auto x = num::add(tape, word_embedding(tape, batch.dec_ids, {B, T}),
                    num::embedding(tape, pos_emb_, batch.dec_pos, {B, T}, "position embedding"));
  LayerTrace last;
  for (std::size_t l = 0; l < dec_.size(); ++l) {
    x = decode_layer(tape, l, x, enc, batch, opts, l + 1 == dec_.size() ? &last : nullptr);
  }
  DecoderOutput out;
  out.d = x;
  out.attn = last.cross;
  out.ctx = last.ctx;
  out.attn_h = last.cross_h;
  out.attn_u = last.cross_u;
  out.ctx_h = last.ctx_h;
  out.ctx_u = last.ctx_u;
  switch (config_.head) {
    case OutputHead::kPtrLambda:
      out.lambda = compute_lambda(tape, x, last.ctx_h, last.ctx_u);
      break;
    case OutputHead::kPtrGen: {
      auto pre = num::add(tape, gate_dot(tape, x, pgen_d_), gate_dot(tape, last.ctx, pgen_c_));
      out.p_gen = drop_last_axis(tape, num::sigmoid(tape, num::add_bias(tape, pre, pgen_b_)));
      [[fallthrough]];
    }
    case OutputHead::kGen:
      out.vocab_probs = num::softmax(tape, num::add_bias(tape, num::matmul(tape, x, out_w_), out_b_));
      break;
    case OutputHead::kPtrNet:
      break;
  }
  return out;
}

Tensor RewriterModel::compute_lambda(Tape& tape, const Tensor& d, const Tensor& c_h,
                                     const Tensor& c_u) const {
  if (config_.head != OutputHead::kPtrLambda) {
    throw ContractError("compute_lambda needs the ptr-lambda head, model has " +
                        std::string(to_string(config_.head)));
  }
  auto pre = num::add(tape, num::add(tape, gate_dot(tape, d, gate_d_), gate_dot(tape, c_h, gate_h_)),
                      gate_dot(tape, c_u, gate_u_));
  return drop_last_axis(tape, num::sigmoid(tape, pre));
}

void RewriterModel::check_support(const Batch& batch) const {
  if (!is_pure_pointer(config_.head)) return;
  const std::size_t m = batch.src_len, T = batch.tgt_len;
  for (std::size_t b = 0; b < batch.batch; ++b) {
    for (std::size_t t = 0; t < T; ++t) {
      if (!batch.tgt_valid[b * T + t]) continue;
      const std::size_t y = batch.targets[b * T + t];
      bool found = false;
      for (std::size_t j = 0; j < m && !found; ++j) {
        found = batch.src_valid[b * m + j] && batch.src_ext[b * m + j] == y;
      }
      if (!found) {
        throw DataError("sample " + std::to_string(batch.sample_ids.at(b)) + ": reference token " +
                        std::to_string(t) + " (extended id " + std::to_string(y) +
                        ") does not occur in the input, so the " +
                        std::string(to_string(config_.head)) + " head cannot produce it");
      }
    }
  }
}

Tensor RewriterModel::target_probabilities(Tape& tape, const DecoderOutput& out,
                                           const Batch& batch) const {
  const std::size_t B = batch.batch, m = batch.src_len, T = batch.tgt_len;
  const std::size_t V = config_.vocab_size;
  // sel[b, t, j] = 1 where input position j holds the gold token of step t.
  auto selector = [&](std::size_t cols) {
    std::vector<double> s(B * T * cols, 0.0);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t j = 0; j < m; ++j)
          if (batch.src_valid[b * m + j] && batch.src_ext[b * m + j] == batch.targets[b * T + t])
            s[(b * T + t) * cols + j] = 1.0;
    return Tensor::from_data({B, T, cols}, std::move(s));
  };
  auto vocab_prob = [&](std::size_t fallback) {
    std::vector<std::size_t> idx(B * T);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = batch.targets[i] < V ? batch.targets[i] : fallback;
    return num::gather_last(tape, out.vocab_probs, idx);
  };
  switch (config_.head) {
    case OutputHead::kGen:
      return vocab_prob(corpus::kUnk);
    case OutputHead::kPtrNet:
      return num::sum_last(tape, num::mul(tape, out.attn, selector(m)));
    case OutputHead::kPtrGen: {
      std::vector<double> in_vocab(B * T);
      for (std::size_t i = 0; i < in_vocab.size(); ++i) in_vocab[i] = batch.targets[i] < V ? 1.0 : 0.0;
      auto gen = num::mul(tape, vocab_prob(0), Tensor::from_data({B, T}, std::move(in_vocab)));
      auto copy = num::sum_last(tape, num::mul(tape, out.attn, selector(m)));
      auto one_minus = num::affine(tape, out.p_gen, -1.0, 1.0);
      return num::add(tape, num::mul(tape, out.p_gen, gen), num::mul(tape, one_minus, copy));
    }
    case OutputHead::kPtrLambda: {
      auto u = num::sum_last(tape, num::mul(tape, out.attn_u, selector(m)));
      auto hs = num::sum_last(tape, num::mul(tape, out.attn_h, selector(m + 1)));
      std::vector<std::size_t> last(B * T, m);
      auto sentinel = num::gather_last(tape, out.attn_h, last);
      auto h = num::add(tape, hs, num::mul(tape, sentinel, u));
      auto lam = out.lambda;
      auto rest = num::affine(tape, lam, -1.0, 1.0);
      if (config_.lambda_weights_utterance) {
        return num::add(tape, num::mul(tape, lam, u), num::mul(tape, rest, h));
      }
      return num::add(tape, num::mul(tape, rest, u), num::mul(tape, lam, h));
    }
  }
  throw ContractError("unknown head");
}

Tensor RewriterModel::nll_loss(Tape& tape, const Batch& batch, const ForwardOptions& opts) const {
  check_support(batch);
  const std::size_t n = batch.target_tokens();
  if (n == 0) throw ContractError("nll_loss: batch has no target tokens");
  auto enc = encode(tape, batch, opts);
  auto out = decode(tape, enc, batch, opts);
  auto p = target_probabilities(tape, out, batch);
  std::vector<double> w(batch.tgt_valid.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = batch.tgt_valid[i] ? 1.0 / static_cast<double>(n) : 0.0;
  auto weighted = num::mul(tape, num::log_clamped(tape, p), Tensor::from_data(p.shape(), std::move(w)));
  return num::affine(tape, num::sum_all(tape, weighted), -1.0);
}

StepState RewriterModel::step_state(const DecoderOutput& out, const Batch& batch, std::size_t row,
                                    std::size_t step) const {
  const std::size_t m = batch.src_len, T = batch.tgt_len, V = config_.vocab_size;
  if (row >= batch.batch || step >= T) throw IndexError("step_state: row/step out of range");
  StepState s;
  s.head = config_.head;
  s.ext_size = batch.ext_size;
  s.src_ext.assign(batch.src_ext.begin() + row * m, batch.src_ext.begin() + (row + 1) * m);
  auto slice = [&](const Tensor& t, std::size_t cols, std::size_t take) {
    auto d = t.data();
    const std::size_t off = (row * T + step) * cols;
    return std::vector<double>(d.begin() + off, d.begin() + off + take);
  };
  if (out.attn.defined()) s.attn = slice(out.attn, m, m);
  if (config_.head == OutputHead::kPtrLambda) {
    s.attn_h = slice(out.attn_h, m + 1, m + 1);
    s.sentinel = s.attn_h.back();
    s.attn_h.pop_back();
    s.attn_u = slice(out.attn_u, m, m);
    s.lambda = out.lambda.data()[row * T + step];
    s.lambda_weights_utterance = config_.lambda_weights_utterance;
  }
  if (out.vocab_probs.defined()) s.vocab_probs = slice(out.vocab_probs, V, V);
  if (out.p_gen.defined()) s.p_gen = out.p_gen.data()[row * T + step];
  return s;
}

}  // namespace urw::model
