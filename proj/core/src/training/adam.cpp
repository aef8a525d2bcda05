#include "urw/training/adam.hpp"

#include <cmath>

#include "urw/error.hpp"

namespace urw::training {

AdamState::AdamState(std::span<const model::NamedParameter> params) {
  for (const auto& p : params) {
    m.emplace_back(p.value.size(), 0.0);
    v.emplace_back(p.value.size(), 0.0);
  }
}

std::vector<model::NamedBlob> AdamState::to_blobs(std::span<const model::NamedParameter> params) const {
  std::vector<model::NamedBlob> out;
  out.push_back({"adam.step", {static_cast<double>(step)}});
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.push_back({"adam.m." + params[i].name, m[i]});
    out.push_back({"adam.v." + params[i].name, v[i]});
  }
  return out;
}

bool AdamState::from_blobs(std::span<const model::NamedBlob> blobs,
                           std::span<const model::NamedParameter> params) {
  auto find = [&](const std::string& name) -> const model::NamedBlob* {
    for (const auto& b : blobs) {
      if (b.name == name) return &b;
    }
    return nullptr;
  };
  const auto* s = find("adam.step");
  if (s == nullptr) return false;
  *this = AdamState(params);
  step = static_cast<std::size_t>(s->values.at(0));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto* bm = find("adam.m." + params[i].name);
    const auto* bv = find("adam.v." + params[i].name);
    if (bm == nullptr || bv == nullptr || bm->values.size() != m[i].size() || bv->values.size() != v[i].size()) {
      throw DataError("optimizer state missing or mis-sized for " + params[i].name);
    }
    m[i] = bm->values;
    v[i] = bv->values;
  }
  return true;
}

void adam_step(std::span<const model::NamedParameter> params, AdamState& state, double lr) {
  if (state.m.size() != params.size()) throw ContractError("adam state does not match parameters");
  for (const auto& p : params) {
    for (double g : p.value.grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter " + p.name);
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto value = params[i].value;
    auto w = value.data_mut();
    auto g = value.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
      w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + state.eps);
    }
  }
}

double clip_grad_norm(std::span<const model::NamedParameter> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (double g : p.value.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (const auto& p : params) {
      auto t = p.value;
      for (auto& g : t.grad_mut()) g *= scale;
    }
  }
  return norm;
}

}  // namespace urw::training
