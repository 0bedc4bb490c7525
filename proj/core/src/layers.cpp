#include "julesz/layers.hpp"

#include <Eigen/Core>
#include <cmath>
#include <string>
#include <vector>

#include "julesz/errors.hpp"
#include "julesz/parallel.hpp"

namespace julesz {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixView = Eigen::Map<RowMatrix>;
using ConstMatrixView = Eigen::Map<const RowMatrix>;

// Geometry of a strided, zero-padded k x k window sweep over a C x H x W image.
struct Window {
  std::size_t channels, height, width, kernel, stride, padding, out_h, out_w;

  std::size_t rows() const { return channels * kernel * kernel; }
  std::size_t cols() const { return out_h * out_w; }
};

void im2col(const double* image, const Window& w, double* col) {
  const auto P = w.cols();
  for (std::size_t c = 0; c < w.channels; ++c) {
    for (std::size_t ki = 0; ki < w.kernel; ++ki) {
      for (std::size_t kj = 0; kj < w.kernel; ++kj) {
        double* row = col + ((c * w.kernel + ki) * w.kernel + kj) * P;
        for (std::size_t oh = 0; oh < w.out_h; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * w.stride + ki) -
                          static_cast<std::ptrdiff_t>(w.padding);
          for (std::size_t ow = 0; ow < w.out_w; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * w.stride + kj) -
                            static_cast<std::ptrdiff_t>(w.padding);
            const bool inside = ih >= 0 && iw >= 0 &&
                                ih < static_cast<std::ptrdiff_t>(w.height) &&
                                iw < static_cast<std::ptrdiff_t>(w.width);
            row[oh * w.out_w + ow] =
                inside ? image[(c * w.height + static_cast<std::size_t>(ih)) * w.width +
                               static_cast<std::size_t>(iw)]
                       : 0.0;
          }
        }
      }
    }
  }
}

// Scatter-add, the adjoint of im2col.
void col2im(const double* col, const Window& w, double* image) {
  const auto P = w.cols();
  for (std::size_t c = 0; c < w.channels; ++c) {
    for (std::size_t ki = 0; ki < w.kernel; ++ki) {
      for (std::size_t kj = 0; kj < w.kernel; ++kj) {
        const double* row = col + ((c * w.kernel + ki) * w.kernel + kj) * P;
        for (std::size_t oh = 0; oh < w.out_h; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * w.stride + ki) -
                          static_cast<std::ptrdiff_t>(w.padding);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(w.height)) continue;
          for (std::size_t ow = 0; ow < w.out_w; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * w.stride + kj) -
                            static_cast<std::ptrdiff_t>(w.padding);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w.width)) continue;
            image[(c * w.height + static_cast<std::size_t>(ih)) * w.width +
                  static_cast<std::size_t>(iw)] += row[oh * w.out_w + ow];
          }
        }
      }
    }
  }
}

void require_rank(const char* op, const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                     ", got " + shape_str(t.shape()));
  }
}

void require_bias(const char* op, const Tensor& bias, std::size_t channels) {
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != channels)) {
    throw ShapeError(std::string(op) + ": bias must be [" + std::to_string(channels) +
                     "], got " + shape_str(bias.shape()));
  }
}

// Sums per-sample partial gradients in sample order.
void reduce_partials(const std::vector<std::vector<double>>& partials, std::vector<double>& out) {
  for (const auto& part : partials) {
    for (std::size_t i = 0; i < part.size(); ++i) out[i] += part[i];
  }
}

struct NormLayout {
  std::size_t batch, channels, plane;
  bool per_instance;

  std::size_t groups() const { return per_instance ? batch * channels : channels; }
  std::size_t members() const { return per_instance ? 1 : batch; }
  std::size_t count() const { return members() * plane; }
  // Offset of the m-th contiguous plane in group g.
  std::size_t plane_offset(std::size_t g, std::size_t m) const {
    return per_instance ? g * plane : (m * channels + g) * plane;
  }
};

Tensor normalize_impl(const char* op, const Tensor& x, double eps, bool per_instance) {
  require_rank(op, x, 4, "input");
  if (!(eps > 0.0)) throw DomainError(std::string(op) + ": eps must be positive");
  const NormLayout layout{x.dim(0), x.dim(1), x.dim(2) * x.dim(3), per_instance};
  const auto xv = x.values();
  std::vector<double> y(xv.size());
  std::vector<double> inv_std(layout.groups());
  const double count = static_cast<double>(layout.count());

  for (std::size_t g = 0; g < layout.groups(); ++g) {
    double total = 0.0;
    for (std::size_t m = 0; m < layout.members(); ++m) {
      const auto base = layout.plane_offset(g, m);
      for (std::size_t s = 0; s < layout.plane; ++s) total += xv[base + s];
    }
    const double mu = total / count;
    double sq = 0.0;
    for (std::size_t m = 0; m < layout.members(); ++m) {
      const auto base = layout.plane_offset(g, m);
      for (std::size_t s = 0; s < layout.plane; ++s) {
        const double d = xv[base + s] - mu;
        sq += d * d;
      }
    }
    const double inv = 1.0 / std::sqrt(sq / count + eps);
    inv_std[g] = inv;
    for (std::size_t m = 0; m < layout.members(); ++m) {
      const auto base = layout.plane_offset(g, m);
      for (std::size_t s = 0; s < layout.plane; ++s) y[base + s] = (xv[base + s] - mu) * inv;
    }
  }

  return make_result(op, x.shape(), std::move(y), {x},
                     [layout, inv_std = std::move(inv_std)](detail::Node& self) {
                       const auto& gy = self.grad;
                       const auto& yv = self.value;
                       auto& gx = *parent_grad(self, 0);
                       const double count = static_cast<double>(layout.count());
                       for (std::size_t g = 0; g < layout.groups(); ++g) {
                         double m1 = 0.0;
                         double m2 = 0.0;
                         for (std::size_t m = 0; m < layout.members(); ++m) {
                           const auto base = layout.plane_offset(g, m);
                           for (std::size_t s = 0; s < layout.plane; ++s) {
                             m1 += gy[base + s];
                             m2 += gy[base + s] * yv[base + s];
                           }
                         }
                         m1 /= count;
                         m2 /= count;
                         for (std::size_t m = 0; m < layout.members(); ++m) {
                           const auto base = layout.plane_offset(g, m);
                           for (std::size_t s = 0; s < layout.plane; ++s) {
                             gx[base + s] +=
                                 inv_std[g] * (gy[base + s] - m1 - yv[base + s] * m2);
                           }
                         }
                       }
                     });
}

}  // namespace

const char* to_string(NormKind kind) {
  switch (kind) {
    case NormKind::none: return "none";
    case NormKind::instance: return "in";
    case NormKind::batch: return "bn";
  }
  return "?";
}

NormKind parse_norm_kind(const std::string& text) {
  if (text == "in") return NormKind::instance;
  if (text == "bn") return NormKind::batch;
  if (text == "none") return NormKind::none;
  throw std::invalid_argument("unknown normalization kind '" + text + "' (expected in|bn|none)");
}

std::size_t conv2d_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                          std::size_t padding) {
  if (stride == 0) throw ShapeError("conv2d: stride must be >= 1");
  if (in + 2 * padding < kernel) {
    throw ShapeError("conv2d: input extent " + std::to_string(in) + " too small for kernel " +
                     std::to_string(kernel));
  }
  return (in + 2 * padding - kernel) / stride + 1;
}

std::size_t conv_transpose2d_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                                    std::size_t padding) {
  if (stride == 0) throw ShapeError("conv_transpose2d: stride must be >= 1");
  const std::size_t full = (in - 1) * stride + kernel;
  if (full <= 2 * padding) throw ShapeError("conv_transpose2d: non-positive output extent");
  return full - 2 * padding;
}

Tensor conv2d(const Tensor& x, const LayerParams& p, std::size_t stride, std::size_t padding) {
  require_rank("conv2d", x, 4, "input");
  require_rank("conv2d", p.weight, 4, "weight");
  const auto N = x.dim(0), I = x.dim(1), H = x.dim(2), W = x.dim(3);
  const auto O = p.weight.dim(0), k = p.weight.dim(2);
  if (p.weight.dim(1) != I || p.weight.dim(3) != k) {
    throw ShapeError("conv2d: weight " + shape_str(p.weight.shape()) + " incompatible with input " +
                     shape_str(x.shape()));
  }
  require_bias("conv2d", p.bias, O);
  const Window win{I, H, W, k, stride, padding, conv2d_extent(H, k, stride, padding),
                   conv2d_extent(W, k, stride, padding)};
  const auto K = win.rows(), P = win.cols();

  std::vector<double> out(N * O * P);
  const auto xv = x.values();
  const auto wv = p.weight.values();
  const bool has_bias = p.bias.defined();
  const auto bv = has_bias ? p.bias.values() : std::span<const double>{};
  parallel_for(N, [&](std::size_t n) {
    std::vector<double> col(K * P);
    im2col(xv.data() + n * I * H * W, win, col.data());
    MatrixView dst(out.data() + n * O * P, static_cast<Eigen::Index>(O),
                   static_cast<Eigen::Index>(P));
    dst.noalias() = ConstMatrixView(wv.data(), static_cast<Eigen::Index>(O),
                                    static_cast<Eigen::Index>(K)) *
                    ConstMatrixView(col.data(), static_cast<Eigen::Index>(K),
                                    static_cast<Eigen::Index>(P));
    if (has_bias) {
      for (std::size_t o = 0; o < O; ++o) dst.row(static_cast<Eigen::Index>(o)).array() += bv[o];
    }
  });

  std::vector<Tensor> parents{x, p.weight};
  if (has_bias) parents.push_back(p.bias);
  return make_result(
      "conv2d", Shape{N, O, win.out_h, win.out_w}, std::move(out), std::move(parents),
      [win, N, O, has_bias](detail::Node& self) {
        const auto K = win.rows(), P = win.cols();
        const auto plane = win.channels * win.height * win.width;
        const auto& xv = self.parents[0]->value;
        const auto& wv = self.parents[1]->value;
        const auto& gy = self.grad;
        auto* gx = parent_grad(self, 0);
        auto* gw = parent_grad(self, 1);
        auto* gb = has_bias ? parent_grad(self, 2) : nullptr;
        std::vector<std::vector<double>> gw_parts(gw ? N : 0);
        ConstMatrixView weight(wv.data(), static_cast<Eigen::Index>(O),
                               static_cast<Eigen::Index>(K));
        parallel_for(N, [&](std::size_t n) {
          ConstMatrixView dy(gy.data() + n * O * P, static_cast<Eigen::Index>(O),
                             static_cast<Eigen::Index>(P));
          if (gx) {
            RowMatrix dcol = weight.transpose() * dy;
            col2im(dcol.data(), win, gx->data() + n * plane);
          }
          if (gw) {
            std::vector<double> col(K * P);
            im2col(xv.data() + n * plane, win, col.data());
            gw_parts[n].assign(O * K, 0.0);
            MatrixView(gw_parts[n].data(), static_cast<Eigen::Index>(O),
                       static_cast<Eigen::Index>(K))
                .noalias() = dy * ConstMatrixView(col.data(), static_cast<Eigen::Index>(K),
                                                  static_cast<Eigen::Index>(P))
                                      .transpose();
          }
        });
        if (gw) reduce_partials(gw_parts, *gw);
        if (gb) {
          for (std::size_t n = 0; n < N; ++n) {
            for (std::size_t o = 0; o < O; ++o) {
              double acc = 0.0;
              for (std::size_t q = 0; q < P; ++q) acc += gy[(n * O + o) * P + q];
              (*gb)[o] += acc;
            }
          }
        }
      });
}

Tensor conv_transpose2d(const Tensor& x, const LayerParams& p, std::size_t stride,
                        std::size_t padding) {
  require_rank("conv_transpose2d", x, 4, "input");
  require_rank("conv_transpose2d", p.weight, 4, "weight");
  const auto N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  const auto Co = p.weight.dim(1), k = p.weight.dim(2);
  if (p.weight.dim(0) != Ci || p.weight.dim(3) != k) {
    throw ShapeError("conv_transpose2d: weight " + shape_str(p.weight.shape()) +
                     " incompatible with input " + shape_str(x.shape()));
  }
  require_bias("conv_transpose2d", p.bias, Co);
  const auto Ho = conv_transpose2d_extent(H, k, stride, padding);
  const auto Wo = conv_transpose2d_extent(W, k, stride, padding);
  // The output image is the input of the conv2d this op is the adjoint of.
  const Window win{Co, Ho, Wo, k, stride, padding, H, W};
  const auto K = win.rows(), P = win.cols();

  std::vector<double> out(N * Co * Ho * Wo, 0.0);
  const auto xv = x.values();
  const auto wv = p.weight.values();
  const bool has_bias = p.bias.defined();
  const auto bv = has_bias ? p.bias.values() : std::span<const double>{};
  parallel_for(N, [&](std::size_t n) {
    RowMatrix col = ConstMatrixView(wv.data(), static_cast<Eigen::Index>(Ci),
                                    static_cast<Eigen::Index>(K))
                        .transpose() *
                    ConstMatrixView(xv.data() + n * Ci * P, static_cast<Eigen::Index>(Ci),
                                    static_cast<Eigen::Index>(P));
    double* dst = out.data() + n * Co * Ho * Wo;
    col2im(col.data(), win, dst);
    if (has_bias) {
      for (std::size_t c = 0; c < Co; ++c) {
        for (std::size_t s = 0; s < Ho * Wo; ++s) dst[c * Ho * Wo + s] += bv[c];
      }
    }
  });

  std::vector<Tensor> parents{x, p.weight};
  if (has_bias) parents.push_back(p.bias);
  return make_result(
      "conv_transpose2d", Shape{N, Co, Ho, Wo}, std::move(out), std::move(parents),
      [win, N, Ci, has_bias](detail::Node& self) {
        const auto K = win.rows(), P = win.cols();
        const auto out_plane = win.channels * win.height * win.width;
        const auto& xv = self.parents[0]->value;
        const auto& wv = self.parents[1]->value;
        const auto& gy = self.grad;
        auto* gx = parent_grad(self, 0);
        auto* gw = parent_grad(self, 1);
        auto* gb = has_bias ? parent_grad(self, 2) : nullptr;
        std::vector<std::vector<double>> gw_parts(gw ? N : 0);
        ConstMatrixView weight(wv.data(), static_cast<Eigen::Index>(Ci),
                               static_cast<Eigen::Index>(K));
        parallel_for(N, [&](std::size_t n) {
          std::vector<double> dcol(K * P);
          im2col(gy.data() + n * out_plane, win, dcol.data());
          ConstMatrixView dcol_view(dcol.data(), static_cast<Eigen::Index>(K),
                                    static_cast<Eigen::Index>(P));
          if (gx) {
            MatrixView dx(gx->data() + n * Ci * P, static_cast<Eigen::Index>(Ci),
                          static_cast<Eigen::Index>(P));
            dx.noalias() += weight * dcol_view;
          }
          if (gw) {
            gw_parts[n].assign(Ci * K, 0.0);
            MatrixView(gw_parts[n].data(), static_cast<Eigen::Index>(Ci),
                       static_cast<Eigen::Index>(K))
                .noalias() = ConstMatrixView(xv.data() + n * Ci * P,
                                             static_cast<Eigen::Index>(Ci),
                                             static_cast<Eigen::Index>(P)) *
                             dcol_view.transpose();
          }
        });
        if (gw) reduce_partials(gw_parts, *gw);
        if (gb) {
          const auto plane = win.height * win.width;
          for (std::size_t n = 0; n < N; ++n) {
            for (std::size_t c = 0; c < win.channels; ++c) {
              double acc = 0.0;
              for (std::size_t s = 0; s < plane; ++s) acc += gy[n * out_plane + c * plane + s];
              (*gb)[c] += acc;
            }
          }
        }
      });
}

Tensor linear(const Tensor& x, const LayerParams& p) {
  require_rank("linear", x, 2, "input");
  require_rank("linear", p.weight, 2, "weight");
  const auto N = x.dim(0), I = x.dim(1), O = p.weight.dim(0);
  if (p.weight.dim(1) != I) {
    throw ShapeError("linear: weight " + shape_str(p.weight.shape()) + " incompatible with input " +
                     shape_str(x.shape()));
  }
  require_bias("linear", p.bias, O);
  const bool has_bias = p.bias.defined();
  std::vector<double> out(N * O);
  ConstMatrixView xm(x.values().data(), static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(I));
  ConstMatrixView wm(p.weight.values().data(), static_cast<Eigen::Index>(O),
                     static_cast<Eigen::Index>(I));
  MatrixView ym(out.data(), static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(O));
  ym.noalias() = xm * wm.transpose();
  if (has_bias) {
    const auto bv = p.bias.values();
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t o = 0; o < O; ++o) out[n * O + o] += bv[o];
    }
  }
  std::vector<Tensor> parents{x, p.weight};
  if (has_bias) parents.push_back(p.bias);
  return make_result("linear", Shape{N, O}, std::move(out), std::move(parents),
                     [N, I, O, has_bias](detail::Node& self) {
                       const auto n_ = static_cast<Eigen::Index>(N);
                       const auto i_ = static_cast<Eigen::Index>(I);
                       const auto o_ = static_cast<Eigen::Index>(O);
                       ConstMatrixView dy(self.grad.data(), n_, o_);
                       if (auto* gx = parent_grad(self, 0)) {
                         MatrixView(gx->data(), n_, i_).noalias() +=
                             dy * ConstMatrixView(self.parents[1]->value.data(), o_, i_);
                       }
                       if (auto* gw = parent_grad(self, 1)) {
                         MatrixView(gw->data(), o_, i_).noalias() +=
                             dy.transpose() *
                             ConstMatrixView(self.parents[0]->value.data(), n_, i_);
                       }
                       if (has_bias) {
                         if (auto* gb = parent_grad(self, 2)) {
                           for (std::size_t n = 0; n < N; ++n) {
                             for (std::size_t o = 0; o < O; ++o) {
                               (*gb)[o] += self.grad[n * O + o];
                             }
                           }
                         }
                       }
                     });
}

Tensor instance_norm(const Tensor& x, double eps) {
  return normalize_impl("instance_norm", x, eps, true);
}

Tensor batch_norm(const Tensor& x, double eps) {
  return normalize_impl("batch_norm", x, eps, false);
}

Tensor scale_bias(const Tensor& y, const Tensor& s, const Tensor& b) {
  require_rank("scale_bias", y, 4, "input");
  const auto N = y.dim(0), C = y.dim(1), S = y.dim(2) * y.dim(3);
  if (s.rank() != 1 || s.dim(0) != C || b.rank() != 1 || b.dim(0) != C) {
    throw ShapeError("scale_bias: scale/bias must be [" + std::to_string(C) + "], got " +
                     shape_str(s.shape()) + " and " + shape_str(b.shape()));
  }
  const auto yv = y.values();
  const auto sv = s.values();
  const auto bv = b.values();
  std::vector<double> out(yv.size());
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      const auto base = (n * C + c) * S;
      for (std::size_t i = 0; i < S; ++i) out[base + i] = sv[c] * yv[base + i] + bv[c];
    }
  }
  return make_result("scale_bias", y.shape(), std::move(out), {y, s, b},
                     [N, C, S](detail::Node& self) {
                       const auto& g = self.grad;
                       const auto& yv = self.parents[0]->value;
                       const auto& sv = self.parents[1]->value;
                       auto* gy = parent_grad(self, 0);
                       auto* gs = parent_grad(self, 1);
                       auto* gb = parent_grad(self, 2);
                       for (std::size_t n = 0; n < N; ++n) {
                         for (std::size_t c = 0; c < C; ++c) {
                           const auto base = (n * C + c) * S;
                           double ds = 0.0;
                           double db = 0.0;
                           for (std::size_t i = 0; i < S; ++i) {
                             if (gy) (*gy)[base + i] += g[base + i] * sv[c];
                             ds += g[base + i] * yv[base + i];
                             db += g[base + i];
                           }
                           if (gs) (*gs)[c] += ds;
                           if (gb) (*gb)[c] += db;
                         }
                       }
                     });
}

Tensor normalize(const Tensor& x, NormKind kind, double eps) {
  switch (kind) {
    case NormKind::instance: return instance_norm(x, eps);
    case NormKind::batch: return batch_norm(x, eps);
    case NormKind::none: return x;
  }
  return x;
}

}  // namespace julesz
