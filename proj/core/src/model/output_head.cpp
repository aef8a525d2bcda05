#include "urw/model/output_head.hpp"

#include "urw/error.hpp"

namespace urw::model {

std::vector<double> copy_weights(const StepState& s) {
  const std::size_t m = s.src_ext.size();
  std::vector<double> w(m, 0.0);
  switch (s.head) {
    case OutputHead::kGen:
      return {};
    case OutputHead::kPtrNet:
      for (std::size_t j = 0; j < m; ++j) w[j] = s.attn.at(j);
      break;
    case OutputHead::kPtrGen:
      for (std::size_t j = 0; j < m; ++j) w[j] = (1.0 - s.p_gen) * s.attn.at(j);
      break;
    case OutputHead::kPtrLambda: {
      const double wu = s.lambda_weights_utterance ? s.lambda : 1.0 - s.lambda;
      const double wh = 1.0 - wu;
      for (std::size_t j = 0; j < m; ++j) {
        w[j] = wu * s.attn_u.at(j) + wh * (s.attn_h.at(j) + s.sentinel * s.attn_u.at(j));
      }
      break;
    }
  }
  return w;
}

std::vector<double> output_distribution(const StepState& s) {
  std::vector<double> p(s.ext_size, 0.0);
  if (s.head == OutputHead::kGen || s.head == OutputHead::kPtrGen) {
    if (s.vocab_probs.size() > s.ext_size) throw ContractError("vocab_probs wider than ext_size");
    const double g = s.head == OutputHead::kGen ? 1.0 : s.p_gen;
    for (std::size_t v = 0; v < s.vocab_probs.size(); ++v) p[v] = g * s.vocab_probs[v];
  }
  const auto w = copy_weights(s);
  for (std::size_t j = 0; j < w.size(); ++j) {
    if (s.src_ext[j] >= s.ext_size) throw IndexError("source id beyond ext_size");
    p[s.src_ext[j]] += w[j];
  }
  return p;
}

}  // namespace urw::model
