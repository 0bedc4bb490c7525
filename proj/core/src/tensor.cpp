#include "julesz/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "julesz/errors.hpp"

namespace julesz {

namespace {

std::atomic<std::uint64_t> g_next_id{1};
std::atomic<bool> g_finite_checks{true};

std::shared_ptr<detail::Node> new_node(Shape shape, std::vector<double> values) {
  if (shape_size(shape) != values.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " holds " +
                     std::to_string(shape_size(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  for (auto extent : shape) {
    if (extent == 0) throw ShapeError("tensor: zero extent in shape " + shape_str(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return node;
}

void check_finite(const char* op, const std::vector<double>& values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericError(std::string(op) + ": non-finite value at flat index " +
                         std::to_string(i));
    }
  }
}

const detail::Node& require(const std::shared_ptr<detail::Node>& node) {
  if (!node) throw GraphError("tensor: use of an undefined tensor");
  return *node;
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::vector<double>& detail::Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(new_node(std::move(shape), std::move(values))) {
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return require(node_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(s));
  }
  return s[axis];
}

std::size_t Tensor::size() const { return require(node_).value.size(); }

std::span<const double> Tensor::values() const { return require(node_).value; }

std::span<double> Tensor::mutable_values() {
  require(node_);
  if (!node_->leaf) throw GraphError("tensor: values of an op result are read-only");
  return node_->value;
}

double Tensor::item() const {
  const auto& node = require(node_);
  if (node.value.size() != 1) {
    throw ShapeError("tensor: item() on shape " + shape_str(node.shape));
  }
  return node.value[0];
}

bool Tensor::requires_grad() const { return require(node_).requires_grad; }
bool Tensor::is_leaf() const { return require(node_).leaf; }
bool Tensor::has_grad() const { return !require(node_).grad.empty(); }
std::span<const double> Tensor::grad() const { return require(node_).grad; }

void Tensor::zero_grad() {
  require(node_);
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

std::uint64_t Tensor::id() const { return require(node_).id; }

Tensor Tensor::detach(bool requires_grad) const {
  const auto& node = require(node_);
  return Tensor(node.shape, node.value, requires_grad);
}

Graph Graph::trace(const Tensor& root) {
  Graph graph;
  if (!root.defined()) return graph;
  std::unordered_set<detail::Node*> seen;
  std::vector<detail::Node*> stack{root.node().get()};
  while (!stack.empty()) {
    auto* node = stack.back();
    stack.pop_back();
    if (!seen.insert(node).second) continue;
    graph.nodes_.push_back(node);
    for (const auto& parent : node->parents) {
      if (parent->requires_grad) stack.push_back(parent.get());
    }
  }
  std::sort(graph.nodes_.begin(), graph.nodes_.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->id < b->id; });
  return graph;
}

void Tensor::backward() {
  require(node_);
  if (node_->value.size() != 1) {
    throw GraphError("backward: loss must be a scalar, got shape " + shape_str(node_->shape));
  }
  if (node_->consumed) {
    throw GraphError("backward: graph already consumed; rebuild the forward pass first");
  }
  if (!node_->requires_grad) {
    throw GraphError("backward: loss does not depend on any tensor that requires grad");
  }

  const auto graph = Graph::trace(*this);
  node_->grad_buffer()[0] += 1.0;
  const auto& order = graph.nodes();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto* node = *it;
    if (node->leaf || !node->backward_fn) continue;
    node->grad_buffer();
    node->backward_fn(*node);
  }
  for (auto* node : order) {
    if (node->leaf) continue;
    node->backward_fn = nullptr;
    node->consumed = true;
  }
  // Parents are released last; releasing earlier could free nodes still in `order`.
  for (auto* node : order) {
    if (!node->leaf) node->parents.clear();
  }
}

void set_finite_checks(bool enabled) { g_finite_checks.store(enabled); }
bool finite_checks_enabled() { return g_finite_checks.load(); }

FiniteCheckScope::FiniteCheckScope(bool enabled) : previous_(finite_checks_enabled()) {
  set_finite_checks(enabled);
}
FiniteCheckScope::~FiniteCheckScope() { set_finite_checks(previous_); }

Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                   std::vector<Tensor> parents,
                   std::function<void(detail::Node&)> backward_fn) {
  if (finite_checks_enabled()) check_finite(op, values);
  auto node = new_node(std::move(shape), std::move(values));
  node->op = op;
  node->leaf = false;
  const bool needs_grad = std::any_of(parents.begin(), parents.end(),
                                      [](const Tensor& p) { return p.requires_grad(); });
  if (needs_grad) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

std::vector<double>* parent_grad(detail::Node& self, std::size_t index) {
  auto& parent = self.parents.at(index);
  if (!parent->requires_grad) return nullptr;
  return &parent->grad_buffer();
}

}  // namespace julesz
