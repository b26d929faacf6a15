#include "gasa/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>

#include "gasa/error.hpp"

namespace gasa {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool leaf = true;
  std::uint64_t id = 0;
  // Position on the owning tape, valid while tape_generation matches.
  std::size_t tape_index = 0;
  std::uint64_t tape_generation = 0;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward_fn;
};

}  // namespace detail

namespace {

std::uint64_t next_node_id() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

std::shared_ptr<detail::Node> new_node(Shape shape, std::vector<double> values, bool rg) {
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = rg;
  n->id = next_node_id();
  return n;
}

void require_node(const detail::Node* n) {
  if (n == nullptr) throw Error(ErrorKind::ShapeMismatch, "use of an undefined tensor");
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (std::any_of(shape.begin(), shape.end(), [](std::size_t e) { return e == 0; }))
    throw Error(ErrorKind::ShapeMismatch, "zero extent in shape " + shape_str(shape));
  if (shape_numel(shape) != values.size())
    throw Error(ErrorKind::ShapeMismatch, "shape " + shape_str(shape) + " needs " +
                                              std::to_string(shape_numel(shape)) +
                                              " values, got " + std::to_string(values.size()));
  return Tensor(new_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

const Shape& Tensor::shape() const {
  require_node(node_.get());
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size())
    throw Error(ErrorKind::ShapeMismatch, "axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  return s[axis];
}

std::size_t Tensor::numel() const {
  require_node(node_.get());
  return node_->value.size();
}

std::span<const double> Tensor::values() const {
  require_node(node_.get());
  return node_->value;
}

std::span<double> Tensor::mutable_values() {
  require_node(node_.get());
  return node_->value;
}

double Tensor::item() const {
  if (numel() != 1) throw Error(ErrorKind::NotScalar, "item() on shape " + shape_str(shape()));
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
bool Tensor::is_leaf() const { return !node_ || node_->leaf; }
std::uint64_t Tensor::node_id() const { return node_ ? node_->id : 0; }

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!node_) return {};
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
  require_node(node_.get());
  if (node_->grad.empty()) node_->grad.assign(node_->value.size(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_ && !node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach(bool requires_grad) const {
  require_node(node_.get());
  return Tensor(new_node(node_->shape, node_->value, requires_grad));
}

double* grad_sink(const Tensor& t) {
  auto* n = t.node();
  if (n == nullptr || !n->requires_grad) return nullptr;
  if (n->grad.empty()) n->grad.assign(n->value.size(), 0.0);
  return n->grad.data();
}

Tape& Tape::current() {
  thread_local Tape tape;
  return tape;
}

void Tape::clear() {
  for (auto& n : nodes_) {
    n->backward_fn = nullptr;
    n->parents.clear();
  }
  nodes_.clear();
  ++generation_;
}

std::vector<std::uint64_t> Tape::node_ids() const {
  std::vector<std::uint64_t> ids;
  ids.reserve(nodes_.size());
  for (const auto& n : nodes_) ids.push_back(n->id);
  return ids;
}

std::vector<std::vector<std::uint64_t>> Tape::parent_ids() const {
  std::vector<std::vector<std::uint64_t>> out;
  out.reserve(nodes_.size());
  for (const auto& n : nodes_) {
    std::vector<std::uint64_t> ids;
    for (const auto& p : n->parents) ids.push_back(p->id);
    out.push_back(std::move(ids));
  }
  return out;
}

Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                   BackwardFn backward_fn) {
  auto node = new_node(std::move(shape), std::move(values), false);
  node->leaf = false;
  Tape& tape = Tape::current();
  const bool any_grad = std::any_of(inputs.begin(), inputs.end(),
                                    [](const Tensor& t) { return t.requires_grad(); });
  if (tape.recording() && any_grad) {
    node->requires_grad = true;
    node->backward_fn = std::move(backward_fn);
    node->parents.reserve(inputs.size());
    for (auto& in : inputs)
      if (in.defined()) node->parents.push_back(in.node_ptr());
    node->tape_index = tape.nodes_.size();
    node->tape_generation = tape.generation_;
    tape.nodes_.push_back(node);
  }
  return Tensor(std::move(node));
}

void backward(const Tensor& root) {
  if (!root.defined() || root.numel() != 1)
    throw Error(ErrorKind::NotScalar,
                "backward root must hold one element, got " +
                    (root.defined() ? shape_str(root.shape()) : std::string("undefined")));
  auto* r = root.node();
  if (!r->requires_grad) return;
  if (r->leaf) {
    if (r->grad.empty()) r->grad.assign(1, 0.0);
    r->grad[0] += 1.0;
    return;
  }
  Tape& tape = Tape::current();
  if (r->tape_generation != tape.generation_ || r->tape_index >= tape.nodes_.size() ||
      tape.nodes_[r->tape_index].get() != r)
    throw Error(ErrorKind::NotScalar, "backward root is not recorded on this thread's tape");
  const std::size_t end = r->tape_index + 1;
  for (std::size_t i = 0; i < end; ++i) tape.nodes_[i]->grad.clear();
  r->grad.assign(1, 1.0);
  for (std::size_t i = end; i-- > 0;) {
    auto& n = *tape.nodes_[i];
    if (n.grad.empty() || !n.backward_fn) continue;
    n.backward_fn(n.grad, n.value);
  }
}

}  // namespace gasa
