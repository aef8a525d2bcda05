#pragma once

#include <cstddef>
#include <vector>

#include "urw/model/config.hpp"

namespace urw::model {

// Everything the output head needs at one decode step for one sequence.
// Attention vectors run over the m input positions; masked positions hold 0.
struct StepState {
  OutputHead head = OutputHead::kPtrLambda;
  std::size_t ext_size = 0;
  std::vector<std::size_t> src_ext;  // extended id per input position

  // ptr-net / ptr-gen: single attention over all positions.
  std::vector<double> attn;
  // ptr-lambda: history-side and utterance-side attention. `sentinel` is the
  // history-side mass on the empty-history sentinel row.
  std::vector<double> attn_h;
  std::vector<double> attn_u;
  double sentinel = 0.0;
  double lambda = 0.5;
  bool lambda_weights_utterance = true;

  // gen / ptr-gen
  std::vector<double> vocab_probs;
  double p_gen = 1.0;
};

// Probability of every extended id (vocabulary plus this input's OOV words).
// Pointer mass is summed over all positions holding the same token.
std::vector<double> output_distribution(const StepState& state);

// Copy probability carried by each input position after mixing (empty for gen).
// For ptr-lambda the sentinel mass is spread over the utterance side.
std::vector<double> copy_weights(const StepState& state);

}  // namespace urw::model
