#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "urw/corpus/tokenizer.hpp"
#include "urw/corpus/vocabulary.hpp"
#include "urw/model/batch.hpp"
#include "urw/model/rewriter.hpp"

namespace urw::decoding {

struct Hypothesis {
  std::vector<std::size_t> tokens;  // extended ids, EOS included when finished
  double score = 0.0;               // sum of log-probabilities
  bool finished = false;
  bool truncated = false;           // stopped by max_len without EOS
  std::vector<double> lambdas;      // per step; empty for heads without a gate
  std::vector<std::vector<double>> attention;  // per step, copy weight per input position
};

// Distribution over extended ids for the next token after each prefix, plus
// the gate value and copy weights that produced it.
struct StepResult {
  std::vector<double> probs;
  double lambda = 0.0;
  bool has_lambda = false;
  std::vector<double> copy_weights;
};
// All prefixes passed in one call have the same length.
using StepFn = std::function<std::vector<StepResult>(std::span<const std::vector<std::size_t>> prefixes)>;

struct SearchOptions {
  std::size_t beam_size = 4;
  std::size_t max_len = 0;  // tokens including EOS; must be >= 1
  std::size_t eos = corpus::kEos;
  // When set, receives the prefixes kept after every step.
  std::vector<std::vector<std::vector<std::size_t>>>* survivors = nullptr;
};

// Beam search without length normalisation. Finished hypotheses stay in the
// beam with their final score; pruning ties go to the lexicographically
// smaller token sequence. Result is sorted best first.
std::vector<Hypothesis> beam_search(const StepFn& step, const SearchOptions& options);

// Argmax at every step, ties to the smaller id.
Hypothesis greedy_search(const StepFn& step, std::size_t max_len, std::size_t eos = corpus::kEos);

// Step function backed by a model for one encoded input; the encoder runs once.
StepFn model_step_fn(const model::RewriterModel& model, const model::EncodedInput& input);

// Default length cap: unfolded input length plus 10.
std::size_t default_max_len(const model::EncodedInput& input);

std::vector<Hypothesis> beam_search(const model::RewriterModel& model, const model::EncodedInput& input,
                                    std::size_t beam_size = 4, std::size_t max_len = 0);
Hypothesis greedy(const model::RewriterModel& model, const model::EncodedInput& input, std::size_t max_len = 0);

struct RewriteResult {
  corpus::Tokens tokens;  // EOS stripped
  Hypothesis best;
  model::EncodedInput input;
};

// ContractError on an empty utterance.
RewriteResult rewrite(const model::RewriterModel& model, const corpus::Vocabulary& vocab,
                      std::span<const corpus::Tokens> history, const corpus::Tokens& utterance,
                      std::size_t beam_size = 4);

}  // namespace urw::decoding
