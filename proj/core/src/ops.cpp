#include "julesz/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "julesz/errors.hpp"

namespace julesz {

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

const char* binary_name(BinaryOp op) {
  switch (op) {
    case BinaryOp::add: return "add";
    case BinaryOp::sub: return "sub";
    case BinaryOp::mul: return "mul";
    case BinaryOp::div: return "div";
  }
  return "?";
}

const char* unary_name(UnaryOp op) {
  switch (op) {
    case UnaryOp::relu: return "relu";
    case UnaryOp::sqrt: return "sqrt";
    case UnaryOp::log: return "log";
    case UnaryOp::square: return "square";
    case UnaryOp::neg: return "neg";
  }
  return "?";
}

}  // namespace

Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b) {
  const char* name = binary_name(op);
  if (b.shape().empty() && !a.shape().empty()) {
    // Scalar tensor on the right: broadcast with a recorded gradient.
    const double bv = b.item();
    auto out = elementwise(op, a, bv);
    if (!b.requires_grad()) return out;
    // Rebuild with b as a parent so its gradient is collected.
    const auto av = std::vector<double>(a.values().begin(), a.values().end());
    std::vector<double> values(out.values().begin(), out.values().end());
    return make_result(name, a.shape(), std::move(values), {a, b},
                       [op, av, bv](detail::Node& self) {
                         const auto& g = self.grad;
                         if (auto* ga = parent_grad(self, 0)) {
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             switch (op) {
                               case BinaryOp::add:
                               case BinaryOp::sub: (*ga)[i] += g[i]; break;
                               case BinaryOp::mul: (*ga)[i] += g[i] * bv; break;
                               case BinaryOp::div: (*ga)[i] += g[i] / bv; break;
                             }
                           }
                         }
                         if (auto* gb = parent_grad(self, 1)) {
                           double acc = 0.0;
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             switch (op) {
                               case BinaryOp::add: acc += g[i]; break;
                               case BinaryOp::sub: acc -= g[i]; break;
                               case BinaryOp::mul: acc += g[i] * av[i]; break;
                               case BinaryOp::div: acc -= g[i] * av[i] / (bv * bv); break;
                             }
                           }
                           (*gb)[0] += acc;
                         }
                       });
  }
  require_same_shape(name, a, b);
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.size());
  switch (op) {
    case BinaryOp::add:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
      break;
    case BinaryOp::sub:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
      break;
    case BinaryOp::mul:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
      break;
    case BinaryOp::div:
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (bv[i] == 0.0) {
          throw DomainError("div: zero divisor at flat index " + std::to_string(i));
        }
        out[i] = av[i] / bv[i];
      }
      break;
  }
  return make_result(name, a.shape(), std::move(out), {a, b}, [op](detail::Node& self) {
    const auto& g = self.grad;
    const auto& x = self.parents[0]->value;
    const auto& y = self.parents[1]->value;
    if (auto* ga = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        switch (op) {
          case BinaryOp::add:
          case BinaryOp::sub: (*ga)[i] += g[i]; break;
          case BinaryOp::mul: (*ga)[i] += g[i] * y[i]; break;
          case BinaryOp::div: (*ga)[i] += g[i] / y[i]; break;
        }
      }
    }
    if (auto* gb = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        switch (op) {
          case BinaryOp::add: (*gb)[i] += g[i]; break;
          case BinaryOp::sub: (*gb)[i] -= g[i]; break;
          case BinaryOp::mul: (*gb)[i] += g[i] * x[i]; break;
          case BinaryOp::div: (*gb)[i] -= g[i] * x[i] / (y[i] * y[i]); break;
        }
      }
    }
  });
}

Tensor elementwise(BinaryOp op, const Tensor& a, double b) {
  const char* name = binary_name(op);
  if (op == BinaryOp::div && b == 0.0) throw DomainError("div: zero scalar divisor");
  const auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    switch (op) {
      case BinaryOp::add: out[i] = av[i] + b; break;
      case BinaryOp::sub: out[i] = av[i] - b; break;
      case BinaryOp::mul: out[i] = av[i] * b; break;
      case BinaryOp::div: out[i] = av[i] / b; break;
    }
  }
  return make_result(name, a.shape(), std::move(out), {a}, [op, b](detail::Node& self) {
    const auto& g = self.grad;
    auto* ga = parent_grad(self, 0);
    const double factor = op == BinaryOp::mul ? b : op == BinaryOp::div ? 1.0 / b : 1.0;
    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * factor;
  });
}

Tensor reduce(Reduction kind, const Tensor& x) {
  std::vector<std::size_t> axes(x.rank());
  std::iota(axes.begin(), axes.end(), 0);
  return reduce(kind, x, std::move(axes));
}

Tensor reduce(Reduction kind, const Tensor& x, std::vector<std::size_t> axes) {
  const auto& in_shape = x.shape();
  const auto rank = in_shape.size();
  std::vector<bool> reduced(rank, false);
  for (auto axis : axes) {
    if (axis >= rank) {
      throw ShapeError("reduce: axis " + std::to_string(axis) + " invalid for " +
                       shape_str(in_shape));
    }
    reduced[axis] = true;
  }
  if (axes.empty() && rank > 0) throw ShapeError("reduce: empty reduction set");

  Shape out_shape;
  std::size_t count = 1;
  for (std::size_t d = 0; d < rank; ++d) {
    if (reduced[d]) count *= in_shape[d];
    else out_shape.push_back(in_shape[d]);
  }

  // Flat input index -> flat output index.
  const auto n = x.size();
  std::vector<std::size_t> target(n);
  {
    std::vector<std::size_t> out_stride(rank, 0);
    std::size_t stride = 1;
    for (std::size_t d = rank; d-- > 0;) {
      if (!reduced[d]) {
        out_stride[d] = stride;
        stride *= in_shape[d];
      }
    }
    std::vector<std::size_t> index(rank, 0);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t t = 0;
      for (std::size_t d = 0; d < rank; ++d) t += index[d] * out_stride[d];
      target[i] = t;
      for (std::size_t d = rank; d-- > 0;) {
        if (++index[d] < in_shape[d]) break;
        index[d] = 0;
      }
    }
  }

  const double scale = kind == Reduction::mean ? 1.0 / static_cast<double>(count) : 1.0;
  std::vector<double> out(shape_size(out_shape), 0.0);
  const auto xv = x.values();
  for (std::size_t i = 0; i < n; ++i) out[target[i]] += xv[i];
  if (kind == Reduction::mean) {
    for (auto& v : out) v /= static_cast<double>(count);
  }
  return make_result(kind == Reduction::mean ? "mean" : "sum", std::move(out_shape),
                     std::move(out), {x},
                     [target = std::move(target), scale](detail::Node& self) {
                       auto* gx = parent_grad(self, 0);
                       for (std::size_t i = 0; i < target.size(); ++i) {
                         (*gx)[i] += self.grad[target[i]] * scale;
                       }
                     });
}

Tensor map(UnaryOp kind, const Tensor& x) {
  const char* name = unary_name(kind);
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = xv[i];
    switch (kind) {
      case UnaryOp::relu: out[i] = v > 0.0 ? v : 0.0; break;
      case UnaryOp::sqrt:
        if (!(v > 0.0)) {
          throw DomainError("sqrt: non-positive input at flat index " + std::to_string(i));
        }
        out[i] = std::sqrt(v);
        break;
      case UnaryOp::log:
        if (!(v > 0.0)) {
          throw DomainError("log: non-positive input at flat index " + std::to_string(i));
        }
        out[i] = std::log(v);
        break;
      case UnaryOp::square: out[i] = v * v; break;
      case UnaryOp::neg: out[i] = -v; break;
    }
  }
  return make_result(name, x.shape(), std::move(out), {x}, [kind](detail::Node& self) {
    const auto& g = self.grad;
    const auto& in = self.parents[0]->value;
    const auto& y = self.value;
    auto& gx = *parent_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      switch (kind) {
        case UnaryOp::relu: gx[i] += in[i] > 0.0 ? g[i] : 0.0; break;
        case UnaryOp::sqrt: gx[i] += g[i] * 0.5 / y[i]; break;
        case UnaryOp::log: gx[i] += g[i] / in[i]; break;
        case UnaryOp::square: gx[i] += g[i] * 2.0 * in[i]; break;
        case UnaryOp::neg: gx[i] -= g[i]; break;
      }
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> values(x.values().begin(), x.values().end());
  return make_result("reshape", std::move(shape), std::move(values), {x},
                     [](detail::Node& self) {
                       auto& gx = *parent_grad(self, 0);
                       for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
                     });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Shape shape = parts[0].shape();
  if (axis >= shape.size()) throw ShapeError("concat: axis out of range");
  std::size_t total = 0;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    if (s.size() != shape.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != shape[d]) {
        throw ShapeError("concat: shape mismatch " + shape_str(s) + " vs " + shape_str(shape));
      }
    }
    total += s[axis];
  }
  shape[axis] = total;

  std::size_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= shape[d];
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < shape.size(); ++d) inner *= shape[d];

  std::vector<std::size_t> widths;
  std::vector<double> out(shape_size(shape));
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t width = p.shape()[axis] * inner;
    widths.push_back(width);
    const auto pv = p.values();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(o * width), width,
                  out.begin() + static_cast<std::ptrdiff_t>(o * total * inner + offset));
    }
    offset += width;
  }
  std::vector<Tensor> parents(parts.begin(), parts.end());
  return make_result("concat", std::move(shape), std::move(out), std::move(parents),
                     [widths, outer, row = total * inner](detail::Node& self) {
                       std::size_t offset = 0;
                       for (std::size_t k = 0; k < widths.size(); ++k) {
                         if (auto* gp = parent_grad(self, k)) {
                           for (std::size_t o = 0; o < outer; ++o) {
                             for (std::size_t j = 0; j < widths[k]; ++j) {
                               (*gp)[o * widths[k] + j] += self.grad[o * row + offset + j];
                             }
                           }
                         }
                         offset += widths[k];
                       }
                     });
}

Tensor slice(const Tensor& x, std::size_t begin, std::size_t end) {
  const auto& in = x.shape();
  if (in.empty() || begin >= end || end > in[0]) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for " + shape_str(in));
  }
  const std::size_t row = x.size() / in[0];
  Shape shape = in;
  shape[0] = end - begin;
  const auto xv = x.values();
  std::vector<double> out(xv.begin() + static_cast<std::ptrdiff_t>(begin * row),
                          xv.begin() + static_cast<std::ptrdiff_t>(end * row));
  return make_result("slice", std::move(shape), std::move(out), {x},
                     [offset = begin * row](detail::Node& self) {
                       auto& gx = *parent_grad(self, 0);
                       for (std::size_t i = 0; i < self.grad.size(); ++i) {
                         gx[offset + i] += self.grad[i];
                       }
                     });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  if (!(lo <= hi)) throw DomainError("clamp: empty range");
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = std::clamp(xv[i], lo, hi);
  return make_result("clamp", x.shape(), std::move(out), {x},
                     [x, lo, hi](detail::Node& self) {
                       auto& gx = *parent_grad(self, 0);
                       const auto v = x.values();
                       for (std::size_t i = 0; i < v.size(); ++i) {
                         if (v[i] >= lo && v[i] <= hi) gx[i] += self.grad[i];
                       }
                     });
}

double dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw ShapeError("dot: size mismatch");
  const auto av = a.values();
  const auto bv = b.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) acc += av[i] * bv[i];
  return acc;
}

}  // namespace julesz
