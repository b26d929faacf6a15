#pragma once

// Define-by-run reverse-mode autodiff over dense f64 tensors.
//
// A Tensor is a shared handle to a node holding shape, row-major values and a
// lazily allocated gradient buffer. Operations whose inputs require gradients
// append their result node to the calling thread's Tape; backward() walks that
// tape in reverse creation order, which is a valid reverse topological order.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace gasa {

using Shape = std::vector<std::size_t>;
using Extents3 = std::array<std::size_t, 3>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct Node;
}

/// Receives the result's accumulated gradient and the result's own values.
using BackwardFn = std::function<void(std::span<const double> grad, std::span<const double> out)>;

class Tensor {
 public:
  Tensor() = default;

  /// Leaf tensor. Throws ShapeMismatch when product(shape) != values.size()
  /// or any extent is zero.
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  /// Writable view of the values; intended for leaves (optimizer updates,
  /// initialisation). Mutating a non-leaf invalidates its recorded backward.
  std::span<double> mutable_values();
  double item() const;

  bool requires_grad() const;
  bool is_leaf() const;
  std::uint64_t node_id() const;

  bool has_grad() const;
  /// Empty span when no gradient has been accumulated yet.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// New leaf with a copy of the values and no history.
  Tensor detach(bool requires_grad = false) const;

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend Tensor make_result(Shape, std::vector<double>, std::vector<Tensor>,
                            BackwardFn);

  std::shared_ptr<detail::Node> node_;
};

/// Builds an op result. When gradient recording is enabled on this thread and
/// some input requires a gradient, the node is appended to the tape and
/// `backward_fn` is invoked during backward() with the result's gradient.
/// backward_fn accumulates into inputs through grad_sink().
Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                   BackwardFn backward_fn);

/// Gradient accumulation buffer for `t`, allocated on first use; null when `t`
/// does not require a gradient.
double* grad_sink(const Tensor& t);

/// Reverse pass from a scalar root recorded on this thread's tape (or a scalar
/// leaf). Leaf gradients accumulate across calls; intermediate gradients are
/// reset at the start of each call. Throws NotScalar.
void backward(const Tensor& root);

/// The per-thread operation record.
class Tape {
 public:
  static Tape& current();

  std::size_t size() const { return nodes_.size(); }
  bool recording() const { return recording_; }
  /// Drops every recorded node; tensors still referenced elsewhere stay valid
  /// but can no longer be differentiated through.
  void clear();

  // Parent ids per recorded node, in recording order (introspection/tests).
  std::vector<std::uint64_t> node_ids() const;
  std::vector<std::vector<std::uint64_t>> parent_ids() const;

 private:
  friend class NoGradGuard;
  friend Tensor make_result(Shape, std::vector<double>, std::vector<Tensor>,
                            BackwardFn);
  friend void backward(const Tensor&);

  std::vector<std::shared_ptr<detail::Node>> nodes_;
  std::uint64_t generation_ = 1;
  bool recording_ = true;
};

/// Disables tape recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(Tape::current().recording_) { Tape::current().recording_ = false; }
  ~NoGradGuard() { Tape::current().recording_ = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace gasa
