#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace urw::num {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty unless requires_grad
  bool requires_grad = false;
};

}  // namespace detail

// Shared handle to a dense row-major float64 array. Copying a Tensor copies
// the handle, not the buffer; ops never write into their inputs.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  std::span<const double> data() const;
  // Direct write access, intended for parameter initialisation and optimisers.
  std::span<double> data_mut();

  bool requires_grad() const;
  std::span<const double> grad() const;
  std::span<double> grad_mut();
  void zero_grad();

  double item() const;
  Tensor detached_copy() const;

  const std::shared_ptr<detail::Node>& node() const noexcept { return node_; }
  static Tensor wrap(std::shared_ptr<detail::Node> node);

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

// Boolean companion of a tensor: keep[i] != 0 marks an entry that takes part
// in normalisation.
struct Mask {
  Shape shape;
  std::vector<std::uint8_t> keep;

  static Mask all(Shape shape);
  std::size_t size() const { return keep.size(); }
};

// Define-by-run record of the ops executed during one forward pass.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const noexcept { return recording_; }
  std::size_t size() const noexcept { return entries_.size(); }

  void record(const Tensor& out, std::function<void()> rule);
  void clear() { entries_.clear(); }

 private:
  friend void backward(const Tensor& loss, Tape& tape);

  struct Entry {
    std::shared_ptr<detail::Node> out;
    std::function<void()> rule;
  };
  bool recording_;
  std::vector<Entry> entries_;
};

// Propagates d(loss)/d(.) through every recorded op in reverse order.
// Leaf gradients accumulate across calls; intermediate gradients are reset
// at the start of each call.
void backward(const Tensor& loss, Tape& tape);

}  // namespace urw::num
