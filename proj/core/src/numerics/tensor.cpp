#include "urw/numerics/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "urw/error.hpp"

namespace urw::num {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = numel(shape);
  return from_data(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor shape " + to_string(shape) + " has a zero dimension");
  }
  if (numel(shape) != data.size()) {
    throw DimensionError("tensor shape " + to_string(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  if (requires_grad) node->grad.assign(node->value.size(), 0.0);
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

Tensor Tensor::wrap(std::shared_ptr<detail::Node> node) { return Tensor(std::move(node)); }

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= node_->shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         to_string(node_->shape));
  }
  return node_->shape[axis];
}

std::size_t Tensor::size() const { return node_->value.size(); }

std::span<const double> Tensor::data() const { return node_->value; }
std::span<double> Tensor::data_mut() { return node_->value; }

bool Tensor::requires_grad() const { return node_->requires_grad; }

std::span<const double> Tensor::grad() const {
  if (!node_->requires_grad) throw ContractError("tensor does not require grad");
  return node_->grad;
}

std::span<double> Tensor::grad_mut() {
  if (!node_->requires_grad) throw ContractError("tensor does not require grad");
  return node_->grad;
}

void Tensor::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

double Tensor::item() const {
  if (node_->value.size() != 1) {
    throw ContractError("item() on tensor of shape " + to_string(node_->shape));
  }
  return node_->value[0];
}

Tensor Tensor::detached_copy() const { return from_data(node_->shape, node_->value, false); }

Mask Mask::all(Shape shape) {
  Mask m;
  m.keep.assign(numel(shape), 1);
  m.shape = std::move(shape);
  return m;
}

void Tape::record(const Tensor& out, std::function<void()> rule) {
  if (!recording_) return;
  entries_.push_back({out.node(), std::move(rule)});
}

void backward(const Tensor& loss, Tape& tape) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) return;
  for (auto& e : tape.entries_) {
    std::fill(e.out->grad.begin(), e.out->grad.end(), 0.0);
  }
  loss.node()->grad[0] += 1.0;
  for (auto it = tape.entries_.rbegin(); it != tape.entries_.rend(); ++it) {
    it->rule();
  }
  for (auto& e : tape.entries_) {
    for (double g : e.out->grad) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient during backward");
    }
  }
}

}  // namespace urw::num
