#include "urw/decoding/beam_search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "urw/error.hpp"
#include "urw/numerics/ops.hpp"

namespace urw::decoding {
namespace {

bool better(const Hypothesis& a, const Hypothesis& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.tokens < b.tokens;
}

void append_trace(Hypothesis& h, const StepResult& r) {
  if (r.has_lambda) h.lambdas.push_back(r.lambda);
  h.attention.push_back(r.copy_weights);
}

}  // namespace

std::vector<Hypothesis> beam_search(const StepFn& step, const SearchOptions& opt) {
  if (opt.beam_size == 0) throw ContractError("beam_size must be at least 1");
  if (opt.max_len == 0) throw ContractError("max_len must be at least 1");
  std::vector<Hypothesis> beam(1);
  for (std::size_t t = 0; t < opt.max_len; ++t) {
    std::vector<std::vector<std::size_t>> live;
    for (const auto& h : beam) {
      if (!h.finished) live.push_back(h.tokens);
    }
    if (live.empty()) break;
    const auto results = step(live);
    std::vector<Hypothesis> pool;
    std::size_t k = 0;
    for (const auto& h : beam) {
      if (h.finished) {
        pool.push_back(h);
        continue;
      }
      const auto& r = results.at(k++);
      for (std::size_t id = 0; id < r.probs.size(); ++id) {
        if (r.probs[id] <= 0.0) continue;
        Hypothesis n = h;
        n.tokens.push_back(id);
        n.score += std::log(r.probs[id]);
        n.finished = id == opt.eos;
        append_trace(n, r);
        pool.push_back(std::move(n));
      }
    }
    const std::size_t keep = std::min(opt.beam_size, pool.size());
    std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(keep), pool.end(), better);
    pool.resize(keep);
    beam = std::move(pool);
    if (opt.survivors != nullptr) {
      std::vector<std::vector<std::size_t>> kept;
      for (const auto& h : beam) kept.push_back(h.tokens);
      opt.survivors->push_back(std::move(kept));
    }
  }
  for (auto& h : beam) h.truncated = !h.finished;
  std::sort(beam.begin(), beam.end(), better);
  return beam;
}

Hypothesis greedy_search(const StepFn& step, std::size_t max_len, std::size_t eos) {
  if (max_len == 0) throw ContractError("max_len must be at least 1");
  Hypothesis h;
  while (h.tokens.size() < max_len && !h.finished) {
    std::vector<std::vector<std::size_t>> prefix{h.tokens};
    const auto r = step(prefix).at(0);
    std::size_t best = 0;
    for (std::size_t id = 1; id < r.probs.size(); ++id) {
      if (r.probs[id] > r.probs[best]) best = id;
    }
    if (r.probs[best] <= 0.0) throw NumericError("greedy_search: step distribution has no mass");
    h.tokens.push_back(best);
    h.score += std::log(r.probs[best]);
    h.finished = best == eos;
    append_trace(h, r);
  }
  h.truncated = !h.finished;
  return h;
}

StepFn model_step_fn(const model::RewriterModel& model, const model::EncodedInput& input) {
  const std::size_t V = model.config().vocab_size;
  num::Tape tape(false);
  std::vector<std::vector<std::size_t>> none{{}};
  auto enc_batch = model::make_prefix_batch(input, none, V);
  auto enc = model.encode(tape, enc_batch);
  return [&model, input, enc, V](std::span<const std::vector<std::size_t>> prefixes) {
    num::Tape tape(false);
    const auto batch = model::make_prefix_batch(input, prefixes, V);
    const auto out = model.decode(tape, enc, batch);
    std::vector<StepResult> results;
    for (std::size_t r = 0; r < prefixes.size(); ++r) {
      const auto state = model.step_state(out, batch, r, batch.tgt_len - 1);
      StepResult s;
      s.probs = model::output_distribution(state);
      s.copy_weights = model::copy_weights(state);
      s.has_lambda = model.config().head == model::OutputHead::kPtrLambda;
      s.lambda = state.lambda;
      results.push_back(std::move(s));
    }
    return results;
  };
}

std::size_t default_max_len(const model::EncodedInput& input) { return input.size() + 10; }

std::vector<Hypothesis> beam_search(const model::RewriterModel& model, const model::EncodedInput& input,
                                    std::size_t beam_size, std::size_t max_len) {
  SearchOptions opt;
  opt.beam_size = beam_size;
  opt.max_len = max_len == 0 ? default_max_len(input) : max_len;
  return beam_search(model_step_fn(model, input), opt);
}

Hypothesis greedy(const model::RewriterModel& model, const model::EncodedInput& input, std::size_t max_len) {
  return greedy_search(model_step_fn(model, input), max_len == 0 ? default_max_len(input) : max_len);
}

RewriteResult rewrite(const model::RewriterModel& model, const corpus::Vocabulary& vocab,
                      std::span<const corpus::Tokens> history, const corpus::Tokens& utterance,
                      std::size_t beam_size) {
  RewriteResult r;
  r.input = model::encode_input(vocab, history, utterance, model.config());
  r.best = beam_search(model, r.input, beam_size).front();
  for (auto id : r.best.tokens) {
    if (id == corpus::kEos) break;
    r.tokens.push_back(r.input.ext_token(vocab, id));
  }
  return r;
}

}  // namespace urw::decoding
