#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "urw/model/checkpoint.hpp"
#include "urw/model/rewriter.hpp"

namespace urw::training {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<std::vector<double>> m;  // first moments, one buffer per parameter
  std::vector<std::vector<double>> v;  // second moments

  AdamState() = default;
  explicit AdamState(std::span<const model::NamedParameter> params);

  // Moments as "adam.m.<param>" / "adam.v.<param>" blobs plus "adam.step".
  std::vector<model::NamedBlob> to_blobs(std::span<const model::NamedParameter> params) const;
  // Restores from blobs written by to_blobs; returns false when none are present.
  bool from_blobs(std::span<const model::NamedBlob> blobs,
                  std::span<const model::NamedParameter> params);
};

// Bias-corrected Adam update using the gradients currently held by `params`.
// NumericError naming the parameter when a gradient is not finite.
void adam_step(std::span<const model::NamedParameter> params, AdamState& state, double lr);

// Rescales all gradients so their global L2 norm is at most max_norm and
// returns the norm before clipping. max_norm <= 0 disables clipping.
double clip_grad_norm(std::span<const model::NamedParameter> params, double max_norm);

}  // namespace urw::training
