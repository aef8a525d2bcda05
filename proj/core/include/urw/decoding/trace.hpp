#pragma once

#include <string>

#include "urw/corpus/vocabulary.hpp"
#include "urw/decoding/beam_search.hpp"
#include "urw/model/batch.hpp"

namespace urw::decoding {

// CSV matrix: a header row with the input tokens and "lambda", then one row
// per decode step holding the copy weight of every input position and the
// gate value (empty for heads without a gate). Fields are quoted when needed.
std::string trace_csv(const model::EncodedInput& input, const Hypothesis& hyp);

// Text heatmap: one line per decode step with the emitted token, the gate,
// a shaded bar over the input positions and the most attended input token.
std::string render_heatmap(const model::EncodedInput& input, const Hypothesis& hyp,
                           const corpus::Vocabulary& vocab);

// Position with the largest copy weight at `step` (first on ties).
std::size_t argmax_position(const Hypothesis& hyp, std::size_t step);

}  // namespace urw::decoding
