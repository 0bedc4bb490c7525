#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace julesz {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One vertex of the dynamic differentiation graph. Ids are handed out from a
// monotone counter, so sorting by id is a topological order.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool leaf = true;
  bool consumed = false;
  std::uint64_t id = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::vector<double>& grad_buffer();
};

}  // namespace detail

/// Handle to a node of the differentiation graph.
///
/// Copies share the underlying node, the same way parameters are shared between
/// the forward pass and the optimizer. Use detach() for an independent copy.
/// A tensor of shape {} is a scalar.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  std::span<const double> values() const;
  // Write access is reserved for leaves (parameters, inputs).
  std::span<double> mutable_values();
  double item() const;

  bool requires_grad() const;
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  /// Reverse-mode sweep from this scalar. Leaf gradients accumulate until
  /// zero_grad(); the recorded graph is released afterwards, so a second call
  /// on the same loss throws GraphError.
  void backward();

  std::uint64_t id() const;

  /// Leaf copy of the values, cut from any graph.
  Tensor detach(bool requires_grad = false) const;

  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Operations reachable from a root, parents before children.
class Graph {
 public:
  static Graph trace(const Tensor& root);

  const std::vector<detail::Node*>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<detail::Node*> nodes_;
};

/// Global switch for the NaN/Inf check every forward op performs on its result.
void set_finite_checks(bool enabled);
bool finite_checks_enabled();

/// Restores the previous finite-check setting on scope exit.
class FiniteCheckScope {
 public:
  explicit FiniteCheckScope(bool enabled);
  ~FiniteCheckScope();
  FiniteCheckScope(const FiniteCheckScope&) = delete;
  FiniteCheckScope& operator=(const FiniteCheckScope&) = delete;

 private:
  bool previous_;
};

/// Builds an op result. When no parent requires a gradient the parents and the
/// backward rule are dropped and the result is a constant.
Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                   std::vector<Tensor> parents,
                   std::function<void(detail::Node&)> backward_fn);

/// Gradient buffer of a parent, allocated on first use; null when that parent
/// does not take gradients.
std::vector<double>* parent_grad(detail::Node& self, std::size_t index);

}  // namespace julesz
