#include "specfas/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace specfas {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

std::string shape_str(const Shape& shape) { return fmt::format("[{}]", fmt::join(shape, ", ")); }

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Tensor::Tensor() : node_(std::make_shared<detail::Node>()) {
  node_->data.assign(1, 0.0);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError(fmt::format("tensor shape {} holds {} values, got {}", shape_str(shape),
                                 shape_numel(shape), values.size()));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }
Tensor Tensor::ones(Shape shape, bool requires_grad) { return full(std::move(shape), 1.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> values(shape_numel(shape), value);
  return from(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

std::size_t Tensor::size(std::size_t axis) const {
  if (axis >= dim()) {
    throw ShapeError(fmt::format("axis {} out of range for shape {}", axis, shape_str(shape())));
  }
  return node_->shape[axis];
}

std::span<double> Tensor::mutable_data() {
  if (!is_leaf()) throw AutodiffError("cannot mutate the values of an op result");
  return node_->data;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError(fmt::format("item() needs a single element, shape is {}", shape_str(shape())));
  }
  return node_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != dim()) {
    throw ShapeError(fmt::format("index of rank {} into shape {}", index.size(), shape_str(shape())));
  }
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= node_->shape[axis]) {
      throw ShapeError(fmt::format("index {} out of range on axis {} of {}", i, axis, shape_str(shape())));
    }
    flat = flat * node_->shape[axis] + i;
    ++axis;
  }
  return node_->data[flat];
}

Tensor& Tensor::set_requires_grad(bool on) {
  if (!is_leaf()) throw AutodiffError("requires_grad can only be set on leaves");
  node_->requires_grad = on;
  return *this;
}

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(numel(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const { return from(shape(), node_->data, false); }

Tensor Tensor::clone() const { return from(shape(), node_->data, requires_grad() && is_leaf()); }

Tensor Tensor::make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                           detail::BackwardFn backward) {
  Tensor out = from(std::move(shape), std::move(values), false);
  if (!g_grad_enabled) return out;
  const bool track = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
  if (!track) return out;
  out.node_->requires_grad = true;
  out.node_->backward = std::move(backward);
  out.node_->parents.reserve(inputs.size());
  for (auto& in : inputs) out.node_->parents.push_back(in.node_);
  return out;
}

void Tensor::backward() const {
  if (numel() != 1) {
    throw AutodiffError(fmt::format("backward() needs a scalar loss, shape is {}", shape_str(shape())));
  }
  if (!requires_grad()) throw AutodiffError("backward() on a tensor that does not require grad");

  // Iterative post-order DFS gives a topological order with each node once.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && !seen.count(parent)) {
        seen.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (detail::Node* n : order) n->pending.assign(n->data.size(), 0.0);
  node_->pending[0] = 1.0;

  std::vector<double*> slots;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward) {
      slots.clear();
      for (auto& p : n->parents) slots.push_back(p->requires_grad ? p->pending.data() : nullptr);
      n->backward(n->pending, slots);
    } else {
      if (n->grad.empty()) n->grad.assign(n->data.size(), 0.0);
      for (std::size_t i = 0; i < n->grad.size(); ++i) n->grad[i] += n->pending[i];
    }
  }
  for (detail::Node* n : order) {
    n->pending.clear();
    n->pending.shrink_to_fit();
  }
}

}  // namespace specfas
