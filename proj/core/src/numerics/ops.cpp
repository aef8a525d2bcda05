#include "urw/numerics/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "urw/error.hpp"

namespace urw::num {
namespace {

using NodeP = std::shared_ptr<detail::Node>;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

bool wants_grad(const Tape& tape, std::initializer_list<const Tensor*> inputs) {
  if (!tape.recording()) return false;
  for (const auto* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

Tensor finish(Shape shape, std::vector<double>&& values, bool grad, std::string_view op) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + ": non-finite value in forward output");
    }
  }
  return Tensor::from_data(std::move(shape), std::move(values), grad);
}

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

std::size_t last_dim(const Tensor& t) { return t.shape().back(); }

ConstMap cmap(const std::vector<double>& v, std::size_t rows, std::size_t cols,
              std::size_t offset = 0) {
  return ConstMap(v.data() + offset, static_cast<Eigen::Index>(rows),
                  static_cast<Eigen::Index>(cols));
}

MutMap mmap(std::vector<double>& v, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
  return MutMap(v.data() + offset, static_cast<Eigen::Index>(rows),
                static_cast<Eigen::Index>(cols));
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  auto r = finish(a.shape(), std::move(out), wants_grad(tape, {&a, &b}), "add");
  if (r.requires_grad()) {
    tape.record(r, [o = r.node(), an = a.node(), bn = b.node()] {
      for (auto* n : {an.get(), bn.get()}) {
        if (!n->requires_grad) continue;
        for (std::size_t i = 0; i < o->grad.size(); ++i) n->grad[i] += o->grad[i];
      }
    });
  }
  return r;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  auto r = finish(a.shape(), std::move(out), wants_grad(tape, {&a, &b}), "sub");
  if (r.requires_grad()) {
    tape.record(r, [o = r.node(), an = a.node(), bn = b.node()] {
      if (an->requires_grad)
        for (std::size_t i = 0; i < o->grad.size(); ++i) an->grad[i] += o->grad[i];
      if (bn->requires_grad)
        for (std::size_t i = 0; i < o->grad.size(); ++i) bn->grad[i] -= o->grad[i];
    });
  }
  return r;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  auto r = finish(a.shape(), std::move(out), wants_grad(tape, {&a, &b}), "mul");
  if (r.requires_grad()) {
    tape.record(r, [o = r.node(), an = a.node(), bn = b.node()] {
      const auto n = o->grad.size();
      if (an->requires_grad)
        for (std::size_t i = 0; i < n; ++i) an->grad[i] += o->grad[i] * bn->value[i];
      if (bn->requires_grad)
        for (std::size_t i = 0; i < n; ++i) bn->grad[i] += o->grad[i] * an->value[i];
    });
  }
  return r;
}

Tensor add_bias(Tape& tape, const Tensor& a, const Tensor& bias) {
  const auto n = last_dim(a);
  if (bias.rank() != 1 || bias.dim(0) != n) {
    throw DimensionError("add_bias: bias " + to_string(bias.shape()) + " does not fit " +
                         to_string(a.shape()));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  auto bv = bias.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % n];
  auto r = finish(a.shape(), std::move(out), wants_grad(tape, {&a, &bias}), "add_bias");
  if (r.requires_grad()) {
    tape.record(r, [o = r.node(), an = a.node(), bn = bias.node(), n] {
      if (an->requires_grad)
        for (std::size_t i = 0; i < o->grad.size(); ++i) an->grad[i] += o->grad[i];
      if (bn->requires_grad)
        for (std::size_t i = 0; i < o->grad.size(); ++i) bn->grad[i % n] += o->grad[i];
    });
  }
  return r;
}

Tensor affine(Tape& tape, const Tensor& a, double scale, double shift) {
  std::vector<double> out(a.size());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = scale * x[i] + shift;
  auto r = finish(a.shape(), std::move(out), wants_grad(tape, {&a}), "affine");
  if (r.requires_grad()) {
    tape.record(r, [o = r.node(), an = a.node(), scale] {
      for (std::size_t i = 0; i < o->grad.size(); ++i) an->grad[i] += scale * o->grad[i];
    });
  }
  return r;
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (b.rank() != 2 || a.rank() < 1 || last_dim(a) != b.dim(0)) {
    throw DimensionError("matmul: inner dimensions disagree for " + to_string(a.shape()) +
                         " x " + to_string(b.shape()));
  }
  const std::size_t k = b.dim(0);
  const std::size_t n = b.dim(1);
  const std::size_t m = a.size() / k;
  Shape shape = a.shape();
  shape.back() = n;
  std::vector<double> out(m * n);
  mmap(out, m, n).noalias() = cmap(a.node()->value, m, k) * cmap(b.node()->value, k, n);
  auto r = finish(std::move(shape), std::move(out), wants_grad(tape, {&a, &b}), "matmul");
  if (r.requires_grad()) {
    tape.record(r, [o = r.node(), an = a.node(), bn = b.node(), m, k, n] {
      auto g = cmap(o->grad, m, n);
      if (an->requires_grad) {
        mmap(an->grad, m, k).noalias() += g * cmap(bn->value, k, n).transpose();
      }
      if (bn->requires_grad) {
        mmap(bn->grad, k, n).noalias() += cmap(an->value, m, k).transpose() * g;
      }
    });
  }
  return r;
}

Tensor bmm(Tape& tape, const Tensor& a, const Tensor& b, bool transpose_b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) ||
      a.dim(2) != (transpose_b ? b.dim(2) : b.dim(1))) {
    throw DimensionError(std::string("bmm: incompatible shapes ") + to_string(a.shape()) +
                         " x " + to_string(b.shape()) + (transpose_b ? "^T" : ""));
  }
  const std::size_t batch = a.dim(0);
  const std::size_t m = a.dim(1);
  const std::size_t k = a.dim(2);
  const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
  std::vector<double> out(batch * m * n);
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  for (std::size_t s = 0; s < batch; ++s) {
    auto A = cmap(av, m, k, s * m * k);
    auto C = mmap(out, m, n, s * m * n);
    if (transpose_b) {
      C.noalias() = A * cmap(bv, n, k, s * n * k).transpose();
    } else {
      C.noalias() = A * cmap(bv, k, n, s * k * n);
    }
  }
  auto r = finish({batch, m, n}, std::move(out), wants_grad(tape, {&a, &b}), "bmm");
  if (r.requires_grad()) {
    tape.record(r, [o = r.node(), an = a.node(), bn = b.node(), batch, m, k, n, transpose_b] {
      for (std::size_t s = 0; s < batch; ++s) {
        auto G = cmap(o->grad, m, n, s * m * n);
        if (an->requires_grad) {
          auto dA = mmap(an->grad, m, k, s * m * k);
          if (transpose_b) {
            dA.noalias() += G * cmap(bn->value, n, k, s * n * k);
          } else {
            dA.noalias() += G * cmap(bn->value, k, n, s * k * n).transpose();
          }
        }
        if (bn->requires_grad) {
          auto A = cmap(an->value, m, k, s * m * k);
          if (transpose_b) {
            mmap(bn->grad, n, k, s * n * k).noalias() += G.transpose() * A;
          } else {
            mmap(bn->grad, k, n, s * k * n).noalias() += A.transpose() * G;
          }
        }
      }
    });
  }
  return r;
}

Tensor softmax_masked(Tape& tape, const Tensor& x, const Mask& mask) {
  if (mask.shape != x.shape()) {
    throw DimensionError("softmax_masked: mask " + to_string(mask.shape) + " vs input " +
                         to_string(x.shape()));
  }
  const std::size_t n = last_dim(x);
  const std::size_t rows = x.size() / n;
  const auto xv = x.data();
  std::vector<double> out(x.size(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = r * n;
    double mx = -INFINITY;
    for (std::size_t j = 0; j < n; ++j) {
      if (mask.keep[base + j]) mx = std::max(mx, xv[base + j]);
    }
    if (mx == -INFINITY) {
      throw InvalidMaskError("softmax_masked: row " + std::to_string(r) + " is fully masked");
    }
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (mask.keep[base + j]) {
        out[base + j] = std::exp(xv[base + j] - mx);
        z += out[base + j];
      }
    }
    for (std::size_t j = 0; j < n; ++j) out[base + j] /= z;
  }
  auto res = finish(x.shape(), std::move(out), wants_grad(tape, {&x}), "softmax_masked");
  if (res.requires_grad()) {
    tape.record(res, [o = res.node(), xn = x.node(), n, rows] {
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t base = r * n;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += o->value[base + j] * o->grad[base + j];
        for (std::size_t j = 0; j < n; ++j) {
          xn->grad[base + j] += o->value[base + j] * (o->grad[base + j] - dot);
        }
      }
    });
  }
  return res;
}

Tensor softmax(Tape& tape, const Tensor& x) { return softmax_masked(tape, x, Mask::all(x.shape())); }

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  const std::size_t d = last_dim(x);
  if (gain.rank() != 1 || gain.dim(0) != d || bias.rank() != 1 || bias.dim(0) != d) {
    throw DimensionError("layer_norm: gain " + to_string(gain.shape()) + " / bias " +
                         to_string(bias.shape()) + " vs input " + to_string(x.shape()));
  }
  const std::size_t rows = x.size() / d;
  const auto xv = x.data();
  const auto gv = gain.data();
  const auto bv = bias.data();
  std::vector<double> out(x.size());
  std::vector<double> xhat(x.size());
  std::vector<double> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += xv[base + j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = xv[base + j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[base + j] = (xv[base + j] - mean) * rstd[r];
      out[base + j] = xhat[base + j] * gv[j] + bv[j];
    }
  }
  auto res = finish(x.shape(), std::move(out), wants_grad(tape, {&x, &gain, &bias}), "layer_norm");
  if (res.requires_grad()) {
    tape.record(res, [o = res.node(), xn = x.node(), gn = gain.node(), bn = bias.node(),
                      xhat = std::move(xhat), rstd = std::move(rstd), d, rows] {
      const double inv_d = 1.0 / static_cast<double>(d);
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t base = r * d;
        double mean_g = 0.0;
        double mean_gx = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double g = o->grad[base + j];
          if (gn->requires_grad) gn->grad[j] += g * xhat[base + j];
          if (bn->requires_grad) bn->grad[j] += g;
          const double gh = g * gn->value[j];
          mean_g += gh;
          mean_gx += gh * xhat[base + j];
        }
        if (!xn->requires_grad) continue;
        mean_g *= inv_d;
        mean_gx *= inv_d;
        for (std::size_t j = 0; j < d; ++j) {
          const double gh = o->grad[base + j] * gn->value[j];
          xn->grad[base + j] += rstd[r] * (gh - mean_g - xhat[base + j] * mean_gx);
        }
      }
    });
  }
  return res;
}

Tensor relu(Tape& tape, const Tensor& x) {
  std::vector<double> out(x.size());
  auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  auto r = finish(x.shape(), std::move(out), wants_grad(tape, {&x}), "relu");
  if (r.requires_grad()) {
    tape.record(r, [o = r.node(), xn = x.node()] {
      for (std::size_t i = 0; i < o->grad.size(); ++i) {
        if (xn->value[i] > 0.0) xn->grad[i] += o->grad[i];
      }
    });
  }
  return r;
}

Tensor sigmoid(Tape& tape, const Tensor& x) {
  std::vector<double> out(x.size());
  auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = xv[i];
    // Branch keeps exp() from overflowing for large |v|.
    out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  auto r = finish(x.shape(), std::move(out), wants_grad(tape, {&x}), "sigmoid");
  if (r.requires_grad()) {
    tape.record(r, [o = r.node(), xn = x.node()] {
      for (std::size_t i = 0; i < o->grad.size(); ++i) {
        const double s = o->value[i];
        xn->grad[i] += o->grad[i] * s * (1.0 - s);
      }
    });
  }
  return r;
}

Tensor log_clamped(Tape& tape, const Tensor& x, double floor) {
  std::vector<double> out(x.size());
  auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(std::max(xv[i], floor));
  auto r = finish(x.shape(), std::move(out), wants_grad(tape, {&x}), "log_clamped");
  if (r.requires_grad()) {
    tape.record(r, [o = r.node(), xn = x.node(), floor] {
      for (std::size_t i = 0; i < o->grad.size(); ++i) {
        if (xn->value[i] > floor) xn->grad[i] += o->grad[i] / xn->value[i];
      }
    });
  }
  return r;
}

Tensor concat_last(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank() ||
      !std::equal(a.shape().begin(), a.shape().end() - 1, b.shape().begin())) {
    throw DimensionError("concat_last: leading axes differ " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
  const std::size_t p = last_dim(a);
  const std::size_t q = last_dim(b);
  const std::size_t rows = a.size() / p;
  Shape shape = a.shape();
  shape.back() = p + q;
  std::vector<double> out(rows * (p + q));
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(av.begin() + r * p, p, out.begin() + r * (p + q));
    std::copy_n(bv.begin() + r * q, q, out.begin() + r * (p + q) + p);
  }
  auto res = finish(std::move(shape), std::move(out), wants_grad(tape, {&a, &b}), "concat_last");
  if (res.requires_grad()) {
    tape.record(res, [o = res.node(), an = a.node(), bn = b.node(), p, q, rows] {
      for (std::size_t r = 0; r < rows; ++r) {
        const double* g = o->grad.data() + r * (p + q);
        if (an->requires_grad)
          for (std::size_t j = 0; j < p; ++j) an->grad[r * p + j] += g[j];
        if (bn->requires_grad)
          for (std::size_t j = 0; j < q; ++j) bn->grad[r * q + j] += g[p + j];
      }
    });
  }
  return res;
}

Tensor reshape(Tape& tape, const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw DimensionError("reshape: " + to_string(x.shape()) + " -> " + to_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  auto r = finish(std::move(shape), std::move(out), wants_grad(tape, {&x}), "reshape");
  if (r.requires_grad()) {
    tape.record(r, [o = r.node(), xn = x.node()] {
      for (std::size_t i = 0; i < o->grad.size(); ++i) xn->grad[i] += o->grad[i];
    });
  }
  return r;
}

Tensor embedding(Tape& tape, const Tensor& table, std::span<const std::size_t> ids, Shape prefix,
                 std::string_view table_name) {
  if (table.rank() != 2) {
    throw DimensionError(std::string(table_name) + ": embedding table must be rank 2, got " +
                         to_string(table.shape()));
  }
  if (numel(prefix) != ids.size()) {
    throw DimensionError(std::string(table_name) + ": prefix " + to_string(prefix) +
                         " does not match " + std::to_string(ids.size()) + " ids");
  }
  const std::size_t rows = table.dim(0);
  const std::size_t d = table.dim(1);
  for (auto id : ids) {
    if (id >= rows) {
      throw IndexError(std::string(table_name) + ": index " + std::to_string(id) +
                       " out of range for table with " + std::to_string(rows) + " rows");
    }
  }
  std::vector<double> out(ids.size() * d);
  auto tv = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::copy_n(tv.begin() + ids[i] * d, d, out.begin() + i * d);
  }
  prefix.push_back(d);
  auto r = finish(std::move(prefix), std::move(out), wants_grad(tape, {&table}), "embedding");
  if (r.requires_grad()) {
    tape.record(r, [o = r.node(), tn = table.node(),
                    idv = std::vector<std::size_t>(ids.begin(), ids.end()), d] {
      for (std::size_t i = 0; i < idv.size(); ++i) {
        for (std::size_t j = 0; j < d; ++j) tn->grad[idv[i] * d + j] += o->grad[i * d + j];
      }
    });
  }
  return r;
}

Tensor split_heads(Tape& tape, const Tensor& x, std::size_t heads) {
  if (x.rank() != 3 || heads == 0 || x.dim(2) % heads != 0) {
    throw DimensionError("split_heads: cannot split " + to_string(x.shape()) + " into " +
                         std::to_string(heads) + " heads");
  }
  const std::size_t B = x.dim(0), m = x.dim(1), d = x.dim(2), dh = d / heads;
  std::vector<double> out(x.size());
  auto xv = x.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < m; ++i)
        std::copy_n(xv.begin() + (b * m + i) * d + h * dh, dh,
                    out.begin() + ((b * heads + h) * m + i) * dh);
  auto r = finish({B * heads, m, dh}, std::move(out), wants_grad(tape, {&x}), "split_heads");
  if (r.requires_grad()) {
    tape.record(r, [o = r.node(), xn = x.node(), B, m, d, dh, heads] {
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t h = 0; h < heads; ++h)
          for (std::size_t i = 0; i < m; ++i) {
            const double* g = o->grad.data() + ((b * heads + h) * m + i) * dh;
            double* dst = xn->grad.data() + (b * m + i) * d + h * dh;
            for (std::size_t j = 0; j < dh; ++j) dst[j] += g[j];
          }
    });
  }
  return r;
}

Tensor merge_heads(Tape& tape, const Tensor& x, std::size_t heads) {
  if (x.rank() != 3 || heads == 0 || x.dim(0) % heads != 0) {
    throw DimensionError("merge_heads: cannot merge " + to_string(x.shape()) + " over " +
                         std::to_string(heads) + " heads");
  }
  const std::size_t B = x.dim(0) / heads, m = x.dim(1), dh = x.dim(2), d = dh * heads;
  std::vector<double> out(x.size());
  auto xv = x.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < m; ++i)
        std::copy_n(xv.begin() + ((b * heads + h) * m + i) * dh, dh,
                    out.begin() + (b * m + i) * d + h * dh);
  auto r = finish({B, m, d}, std::move(out), wants_grad(tape, {&x}), "merge_heads");
  if (r.requires_grad()) {
    tape.record(r, [o = r.node(), xn = x.node(), B, m, d, dh, heads] {
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t h = 0; h < heads; ++h)
          for (std::size_t i = 0; i < m; ++i) {
            const double* g = o->grad.data() + (b * m + i) * d + h * dh;
            double* dst = xn->grad.data() + ((b * heads + h) * m + i) * dh;
            for (std::size_t j = 0; j < dh; ++j) dst[j] += g[j];
          }
    });
  }
  return r;
}

Tensor mean_heads(Tape& tape, const Tensor& x, std::size_t heads, std::size_t count) {
  if (x.rank() != 3 || heads == 0 || x.dim(0) % heads != 0 || count > heads) {
    throw DimensionError("mean_heads: cannot average " + to_string(x.shape()) + " over " +
                         std::to_string(count) + " of " + std::to_string(heads) + " heads");
  }
  const std::size_t used = count == 0 ? heads : count;
  const std::size_t B = x.dim(0) / heads;
  const std::size_t slab = x.dim(1) * x.dim(2);
  const double inv = 1.0 / static_cast<double>(used);
  std::vector<double> out(B * slab, 0.0);
  auto xv = x.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t h = 0; h < used; ++h) {
      const std::size_t src = (b * heads + h) * slab;
      for (std::size_t i = 0; i < slab; ++i) out[b * slab + i] += xv[src + i];
    }
  for (auto& v : out) v *= inv;
  auto r = finish({B, x.dim(1), x.dim(2)}, std::move(out), wants_grad(tape, {&x}), "mean_heads");
  if (r.requires_grad()) {
    tape.record(r, [o = r.node(), xn = x.node(), B, heads, used, slab, inv] {
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t h = 0; h < used; ++h) {
          const std::size_t dst = (b * heads + h) * slab;
          for (std::size_t i = 0; i < slab; ++i) xn->grad[dst + i] += inv * o->grad[b * slab + i];
        }
    });
  }
  return r;
}

Tensor append_row(Tape& tape, const Tensor& x, const Tensor& row) {
  if (x.rank() != 3 || row.rank() != 1 || row.dim(0) != x.dim(2)) {
    throw DimensionError("append_row: row " + to_string(row.shape()) + " does not fit " +
                         to_string(x.shape()));
  }
  const std::size_t B = x.dim(0), m = x.dim(1), d = x.dim(2);
  std::vector<double> out(B * (m + 1) * d);
  auto xv = x.data();
  auto rv = row.data();
  for (std::size_t b = 0; b < B; ++b) {
    std::copy_n(xv.begin() + b * m * d, m * d, out.begin() + b * (m + 1) * d);
    std::copy_n(rv.begin(), d, out.begin() + (b * (m + 1) + m) * d);
  }
  auto r = finish({B, m + 1, d}, std::move(out), wants_grad(tape, {&x, &row}), "append_row");
  if (r.requires_grad()) {
    tape.record(r, [o = r.node(), xn = x.node(), rn = row.node(), B, m, d] {
      for (std::size_t b = 0; b < B; ++b) {
        const double* g = o->grad.data() + b * (m + 1) * d;
        if (xn->requires_grad)
          for (std::size_t i = 0; i < m * d; ++i) xn->grad[b * m * d + i] += g[i];
        if (rn->requires_grad)
          for (std::size_t j = 0; j < d; ++j) rn->grad[j] += g[m * d + j];
      }
    });
  }
  return r;
}

Tensor sum_last(Tape& tape, const Tensor& x) {
  const std::size_t n = last_dim(x);
  const std::size_t rows = x.size() / n;
  Shape shape(x.shape().begin(), x.shape().end() - 1);
  if (shape.empty()) shape.push_back(1);
  std::vector<double> out(rows, 0.0);
  auto xv = x.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) out[r] += xv[r * n + j];
  auto res = finish(std::move(shape), std::move(out), wants_grad(tape, {&x}), "sum_last");
  if (res.requires_grad()) {
    tape.record(res, [o = res.node(), xn = x.node(), n, rows] {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < n; ++j) xn->grad[r * n + j] += o->grad[r];
    });
  }
  return res;
}

Tensor sum_all(Tape& tape, const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  auto r = finish({1}, {s}, wants_grad(tape, {&x}), "sum_all");
  if (r.requires_grad()) {
    tape.record(r, [o = r.node(), xn = x.node()] {
      for (auto& g : xn->grad) g += o->grad[0];
    });
  }
  return r;
}

Tensor gather_last(Tape& tape, const Tensor& x, std::span<const std::size_t> idx) {
  const std::size_t n = last_dim(x);
  const std::size_t rows = x.size() / n;
  if (idx.size() != rows) {
    throw DimensionError("gather_last: " + std::to_string(idx.size()) + " indices for " +
                         to_string(x.shape()));
  }
  Shape shape(x.shape().begin(), x.shape().end() - 1);
  if (shape.empty()) shape.push_back(1);
  std::vector<double> out(rows);
  auto xv = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    if (idx[r] >= n) {
      throw IndexError("gather_last: index " + std::to_string(idx[r]) + " >= " + std::to_string(n));
    }
    out[r] = xv[r * n + idx[r]];
  }
  auto res = finish(std::move(shape), std::move(out), wants_grad(tape, {&x}), "gather_last");
  if (res.requires_grad()) {
    tape.record(res, [o = res.node(), xn = x.node(), iv = std::vector<std::size_t>(idx.begin(), idx.end()), n] {
      for (std::size_t r = 0; r < iv.size(); ++r) xn->grad[r * n + iv[r]] += o->grad[r];
    });
  }
  return res;
}

Tensor dropout(Tape& tape, const Tensor& x, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw ContractError("dropout rate must be < 1");
  std::bernoulli_distribution keep(1.0 - rate);
  std::vector<double> m(x.size());
  const double scale = 1.0 / (1.0 - rate);
  for (auto& v : m) v = keep(rng) ? scale : 0.0;
  return mul(tape, x, Tensor::from_data(x.shape(), std::move(m)));
}

}  // namespace urw::num
