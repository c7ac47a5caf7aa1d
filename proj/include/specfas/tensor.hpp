#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace specfas {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

// Operand shapes are incompatible for the requested op.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Input outside the op's mathematical domain (log of non-positive, zero norm,
// overflow to a non-finite value).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Misuse of the differentiation engine (non-scalar loss, mutating a
// non-leaf).
class AutodiffError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {

// Adds the gradient contribution of one op into the accumulators of its
// parents. A null accumulator means the parent does not need a gradient.
using BackwardFn = std::function<void(std::span<const double> grad_out,
                                      std::span<double* const> grad_in)>;

struct Node {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // leaves only; empty until first backward

  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;
  std::vector<double> pending;  // scratch used during one backward pass
};

}  // namespace detail

/// Dense row-major float64 tensor with optional reverse-mode tracking.
///
/// Copies share storage: a Tensor is a handle to a graph node. Values of a
/// node produced by an op are never mutated; only leaves expose mutable data
/// (used by optimizers between graph constructions).
///
/// Gradient policy: backward() accumulates into the `grad` buffer of every
/// leaf that requires grad. Calling it twice without zero_grad() sums both
/// passes. Non-leaf gradients are not retained.
class Tensor {
 public:
  Tensor();

  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor ones(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  const Shape& shape() const { return node_->shape; }
  std::size_t dim() const { return node_->shape.size(); }
  std::size_t size(std::size_t axis) const;
  std::size_t numel() const { return node_->data.size(); }

  std::span<const double> data() const { return node_->data; }
  // Mutable view of a leaf's values. Throws AutodiffError on op outputs.
  std::span<double> mutable_data();
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const { return !node_->backward; }

  bool has_grad() const { return !node_->grad.empty(); }
  // Gradient buffer; all zeros when backward has not reached this tensor.
  std::vector<double> grad() const;
  void zero_grad();

  // Same values, no history, no grad requirement.
  Tensor detach() const;
  Tensor clone() const;

  void backward() const;

  // Identity of the underlying node, for tests and graph bookkeeping.
  const detail::Node* node() const { return node_.get(); }

  // Internal constructor used by ops.
  static Tensor make_result(Shape shape, std::vector<double> values,
                            std::vector<Tensor> inputs, detail::BackwardFn backward);

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

}  // namespace specfas
