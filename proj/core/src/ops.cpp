#include "stgan/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>

namespace stgan::ops {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

// Geometry of one im2col unfolding: an input plane stack (channels, h, w)
// seen through a kernel window producing an (out_h, out_w) grid.
struct Unfold {
  int channels, h, w, kernel, stride, pad, out_h, out_w;
  int rows() const { return channels * kernel * kernel; }
  int cols() const { return out_h * out_w; }
};

// Output columns [lo, hi) whose input column ox * stride - pad + kx is in [0, w).
struct ColumnRange {
  int lo, hi;
};

ColumnRange valid_columns(const Unfold& u, int kx) {
  const int shift = kx - u.pad;
  int lo = shift >= 0 ? 0 : (-shift + u.stride - 1) / u.stride;
  int hi = u.w - 1 - shift < 0 ? 0 : (u.w - 1 - shift) / u.stride + 1;
  lo = std::min(lo, u.out_w);
  hi = std::clamp(hi, lo, u.out_w);
  return {lo, hi};
}

template <typename T>
void im2col(const T* src, const Unfold& u, T* cols) {
  const int k = u.kernel;
  for (int c = 0; c < u.channels; ++c) {
    const T* plane = src + static_cast<std::size_t>(c) * u.h * u.w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = cols + static_cast<std::size_t>((c * k + ky) * k + kx) * u.cols();
        const auto [lo, hi] = valid_columns(u, kx);
        const int shift = kx - u.pad;
        for (int oy = 0; oy < u.out_h; ++oy) {
          const int iy = oy * u.stride - u.pad + ky;
          T* dst = row + oy * u.out_w;
          if (iy < 0 || iy >= u.h) {
            std::fill(dst, dst + u.out_w, T{0});
            continue;
          }
          const T* line = plane + static_cast<std::size_t>(iy) * u.w + shift;
          std::fill(dst, dst + lo, T{0});
          if (u.stride == 1) {
            std::copy(line + lo, line + hi, dst + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox] = line[ox * u.stride];
          }
          std::fill(dst + hi, dst + u.out_w, T{0});
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add columns back onto the plane stack.
template <typename T>
void col2im(const T* cols, const Unfold& u, T* dst) {
  const int k = u.kernel;
  for (int c = 0; c < u.channels; ++c) {
    T* plane = dst + static_cast<std::size_t>(c) * u.h * u.w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = cols + static_cast<std::size_t>((c * k + ky) * k + kx) * u.cols();
        const auto [lo, hi] = valid_columns(u, kx);
        const int shift = kx - u.pad;
        for (int oy = 0; oy < u.out_h; ++oy) {
          const int iy = oy * u.stride - u.pad + ky;
          if (iy < 0 || iy >= u.h) continue;
          T* line = plane + static_cast<std::size_t>(iy) * u.w + shift;
          const T* src = row + oy * u.out_w;
          if (u.stride == 1) {
            for (int ox = lo; ox < hi; ++ox) line[ox] += src[ox];
          } else {
            for (int ox = lo; ox < hi; ++ox) line[ox * u.stride] += src[ox];
          }
        }
      }
    }
  }
}

struct AlignedDelete {
  void operator()(void* p) const { ::operator delete(p, std::align_val_t{kTensorAlignment}); }
};

// Uninitialized aligned buffer; every caller overwrites it completely before reading.
template <typename T>
std::unique_ptr<T[], AlignedDelete> scratch(std::size_t n) {
  return std::unique_ptr<T[], AlignedDelete>(
      static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t{kTensorAlignment})));
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError(what);
}

std::vector<Var> with_optional(Var x, Var w, Var b) {
  std::vector<Var> v{x, w};
  if (b.valid()) v.push_back(b);
  return v;
}

}  // namespace

template <typename T>
Var conv2d(Graph<T>& g, Var x, Var weight, Var bias, ConvGeometry geom) {
  const Tensor<T>& xv = g.value(x);
  const Tensor<T>& wv = g.value(weight);
  const Shape xs = xv.shape();
  const Shape ws = wv.shape();
  require(ws.c == xs.c && ws.h == geom.kernel && ws.w == geom.kernel,
          "conv2d: weight " + ws.str() + " incompatible with input " + xs.str());
  require(!bias.valid() || g.value(bias).size() == static_cast<std::size_t>(ws.n),
          "conv2d: bias size");
  const int out_c = ws.n;
  const int oh = conv_out_extent(xs.h, geom.kernel, geom.stride, geom.pad);
  const int ow = conv_out_extent(xs.w, geom.kernel, geom.stride, geom.pad);
  require(oh > 0 && ow > 0, "conv2d: empty output for input " + xs.str());
  const Unfold u{xs.c, xs.h, xs.w, geom.kernel, geom.stride, geom.pad, oh, ow};

  Tensor<T> out(Shape{xs.n, out_c, oh, ow});
  const auto cols = scratch<T>(static_cast<std::size_t>(u.rows()) * u.cols());
  CMapMat<T> wm(wv.data(), out_c, u.rows());
  const T* bv = bias.valid() ? g.value(bias).data() : nullptr;
  for (int n = 0; n < xs.n; ++n) {
    MapMat<T> om(out.sample(n), out_c, u.cols());
    if (geom.kernel == 1 && geom.stride == 1 && geom.pad == 0) {
      om.noalias() = wm * CMapMat<T>(xv.sample(n), u.rows(), u.cols());
    } else {
      im2col(xv.sample(n), u, cols.get());
      om.noalias() = wm * CMapMat<T>(cols.get(), u.rows(), u.cols());
    }
    if (bv) {
      for (int c = 0; c < out_c; ++c) om.row(c).array() += bv[c];
    }
  }

  const std::vector<Var> parents = with_optional(x, weight, bias);
  return g.emit(std::move(out), std::span<const Var>(parents),
                [xi = x.id, wi = weight.id, bi = bias.id, u, out_c](Graph<T>& gr, int self) {
                  const Tensor<T>& dy = gr.grad_buffer(self);
                  const Tensor<T>& xval = gr.value(xi);
                  const Tensor<T>& wval = gr.value(wi);
                  const bool need_x = gr.requires_grad(xi);
                  const bool need_w = gr.requires_grad(wi);
                  const bool need_b = bi >= 0 && gr.requires_grad(bi);
                  const bool pointwise = u.kernel == 1 && u.stride == 1 && u.pad == 0;
                  const auto cols = scratch<T>(static_cast<std::size_t>(u.rows()) * u.cols());
                  CMapMat<T> wm(wval.data(), out_c, u.rows());
                  for (int n = 0; n < dy.shape().n; ++n) {
                    CMapMat<T> dym(dy.sample(n), out_c, u.cols());
                    if (need_w) {
                      MapMat<T> dw(gr.grad_buffer(wi).data(), out_c, u.rows());
                      if (pointwise) {
                        dw.noalias() += dym * CMapMat<T>(xval.sample(n), u.rows(), u.cols()).transpose();
                      } else {
                        im2col(xval.sample(n), u, cols.get());
                        dw.noalias() += dym * CMapMat<T>(cols.get(), u.rows(), u.cols()).transpose();
                      }
                    }
                    if (need_b) {
                      T* db = gr.grad_buffer(bi).data();
                      for (int c = 0; c < out_c; ++c) db[c] += dym.row(c).sum();
                    }
                    if (need_x) {
                      T* dx = gr.grad_buffer(xi).sample(n);
                      if (pointwise) {
                        MapMat<T>(dx, u.rows(), u.cols()).noalias() += wm.transpose() * dym;
                      } else {
                        MapMat<T>(cols.get(), u.rows(), u.cols()).noalias() = wm.transpose() * dym;
                        col2im(cols.get(), u, dx);
                      }
                    }
                  }
                });
}

template <typename T>
Var conv_transpose2d(Graph<T>& g, Var x, Var weight, Var bias, ConvGeometry geom) {
  const Tensor<T>& xv = g.value(x);
  const Tensor<T>& wv = g.value(weight);
  const Shape xs = xv.shape();
  const Shape ws = wv.shape();
  require(ws.n == xs.c && ws.h == geom.kernel && ws.w == geom.kernel,
          "conv_transpose2d: weight " + ws.str() + " incompatible with input " + xs.str());
  require(geom.output_pad < geom.stride, "conv_transpose2d: output_pad must be < stride");
  const int out_c = ws.c;
  require(!bias.valid() || g.value(bias).size() == static_cast<std::size_t>(out_c),
          "conv_transpose2d: bias size");
  const int oh = conv_transpose_out_extent(xs.h, geom.kernel, geom.stride, geom.pad, geom.output_pad);
  const int ow = conv_transpose_out_extent(xs.w, geom.kernel, geom.stride, geom.pad, geom.output_pad);
  // Unfolding of the *output* grid whose strided convolution lands on x.
  const Unfold u{out_c, oh, ow, geom.kernel, geom.stride, geom.pad, xs.h, xs.w};

  Tensor<T> out(Shape{xs.n, out_c, oh, ow});
  const auto cols = scratch<T>(static_cast<std::size_t>(u.rows()) * u.cols());
  CMapMat<T> wm(wv.data(), xs.c, u.rows());
  const T* bv = bias.valid() ? g.value(bias).data() : nullptr;
  for (int n = 0; n < xs.n; ++n) {
    MapMat<T>(cols.get(), u.rows(), u.cols()).noalias() =
        wm.transpose() * CMapMat<T>(xv.sample(n), xs.c, u.cols());
    col2im(cols.get(), u, out.sample(n));
    for (int c = 0; bv && c < out_c; ++c) {
      T* p = out.plane(n, c);
      for (std::size_t i = 0; i < out.shape().plane(); ++i) p[i] += bv[c];
    }
  }

  const std::vector<Var> parents = with_optional(x, weight, bias);
  return g.emit(std::move(out), std::span<const Var>(parents),
                [xi = x.id, wi = weight.id, bi = bias.id, u, in_c = xs.c](Graph<T>& gr, int self) {
                  const Tensor<T>& dy = gr.grad_buffer(self);
                  const Tensor<T>& xval = gr.value(xi);
                  const Tensor<T>& wval = gr.value(wi);
                  const bool need_x = gr.requires_grad(xi);
                  const bool need_w = gr.requires_grad(wi);
                  const bool need_b = bi >= 0 && gr.requires_grad(bi);
                  const auto cols = scratch<T>(static_cast<std::size_t>(u.rows()) * u.cols());
                  CMapMat<T> wm(wval.data(), in_c, u.rows());
                  for (int n = 0; n < dy.shape().n; ++n) {
                    if (need_b) {
                      T* db = gr.grad_buffer(bi).data();
                      for (int c = 0; c < u.channels; ++c) {
                        const T* p = dy.plane(n, c);
                        T s{0};
                        for (std::size_t i = 0; i < dy.shape().plane(); ++i) s += p[i];
                        db[c] += s;
                      }
                    }
                    if (!need_x && !need_w) continue;
                    im2col(dy.sample(n), u, cols.get());
                    CMapMat<T> cm(cols.get(), u.rows(), u.cols());
                    if (need_w) {
                      MapMat<T>(gr.grad_buffer(wi).data(), in_c, u.rows()).noalias() +=
                          CMapMat<T>(xval.sample(n), in_c, u.cols()) * cm.transpose();
                    }
                    if (need_x) {
                      MapMat<T>(gr.grad_buffer(xi).sample(n), in_c, u.cols()).noalias() += wm * cm;
                    }
                  }
                });
}

template <typename T>
Var instance_norm(Graph<T>& g, Var x, T eps) {
  const Tensor<T>& xv = g.value(x);
  const Shape s = xv.shape();
  const std::size_t hw = s.plane();
  Tensor<T> out(s);
  auto inv_std = std::make_shared<std::vector<T>>(static_cast<std::size_t>(s.n) * s.c);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const T* p = xv.plane(n, c);
      T mean{0};
      for (std::size_t i = 0; i < hw; ++i) mean += p[i];
      mean /= static_cast<T>(hw);
      T var{0};
      for (std::size_t i = 0; i < hw; ++i) var += (p[i] - mean) * (p[i] - mean);
      var /= static_cast<T>(hw);
      const T is = T{1} / std::sqrt(var + eps);
      (*inv_std)[static_cast<std::size_t>(n) * s.c + c] = is;
      T* q = out.plane(n, c);
      for (std::size_t i = 0; i < hw; ++i) q[i] = (p[i] - mean) * is;
    }
  }
  return g.emit(std::move(out), {x}, [xi = x.id, inv_std](Graph<T>& gr, int self) {
    const Tensor<T>& dy = gr.grad_buffer(self);
    const Tensor<T>& y = gr.value(self);
    Tensor<T>& dx = gr.grad_buffer(xi);
    const Shape s = y.shape();
    const std::size_t hw = s.plane();
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const T* gy = dy.plane(n, c);
        const T* yy = y.plane(n, c);
        T mean_g{0}, mean_gy{0};
        for (std::size_t i = 0; i < hw; ++i) {
          mean_g += gy[i];
          mean_gy += gy[i] * yy[i];
        }
        mean_g /= static_cast<T>(hw);
        mean_gy /= static_cast<T>(hw);
        const T is = (*inv_std)[static_cast<std::size_t>(n) * s.c + c];
        T* gx = dx.plane(n, c);
        for (std::size_t i = 0; i < hw; ++i) gx[i] += is * (gy[i] - mean_g - yy[i] * mean_gy);
      }
    }
  });
}

template <typename T>
Var leaky_relu(Graph<T>& g, Var x, T slope) {
  Tensor<T> out = g.value(x);
  for (auto& v : out.span()) v = v > T{0} ? v : slope * v;
  return g.emit(std::move(out), {x}, [xi = x.id, slope](Graph<T>& gr, int self) {
    const Tensor<T>& dy = gr.grad_buffer(self);
    const Tensor<T>& xv = gr.value(xi);
    Tensor<T>& dx = gr.grad_buffer(xi);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += xv[i] > T{0} ? dy[i] : slope * dy[i];
  });
}

template <typename T>
Var relu(Graph<T>& g, Var x) {
  return leaky_relu(g, x, T{0});
}

template <typename T>
Var tanh(Graph<T>& g, Var x) {
  Tensor<T> out = g.value(x);
  for (auto& v : out.span()) v = std::tanh(v);
  return g.emit(std::move(out), {x}, [xi = x.id](Graph<T>& gr, int self) {
    const Tensor<T>& dy = gr.grad_buffer(self);
    const Tensor<T>& y = gr.value(self);
    Tensor<T>& dx = gr.grad_buffer(xi);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * (T{1} - y[i] * y[i]);
  });
}

template <typename T>
Var add(Graph<T>& g, Var a, Var b) {
  Tensor<T> out = g.value(a);
  out += g.value(b);
  return g.emit(std::move(out), {a, b}, [ai = a.id, bi = b.id](Graph<T>& gr, int self) {
    const Tensor<T>& dy = gr.grad_buffer(self);
    if (gr.requires_grad(ai)) gr.grad_buffer(ai) += dy;
    if (gr.requires_grad(bi)) gr.grad_buffer(bi) += dy;
  });
}

template <typename T>
Var concat_channels(Graph<T>& g, Var a, Var b) {
  const Tensor<T>& av = g.value(a);
  const Tensor<T>& bv = g.value(b);
  const Shape sa = av.shape();
  const Shape sb = bv.shape();
  require(sa.n == sb.n && sa.h == sb.h && sa.w == sb.w,
          "concat_channels: " + sa.str() + " vs " + sb.str());
  Tensor<T> out(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
  const std::size_t na = static_cast<std::size_t>(sa.c) * sa.plane();
  const std::size_t nb = static_cast<std::size_t>(sb.c) * sb.plane();
  for (int n = 0; n < sa.n; ++n) {
    std::copy_n(av.sample(n), na, out.sample(n));
    std::copy_n(bv.sample(n), nb, out.sample(n) + na);
  }
  return g.emit(std::move(out), {a, b}, [ai = a.id, bi = b.id, na, nb](Graph<T>& gr, int self) {
    const Tensor<T>& dy = gr.grad_buffer(self);
    const int batch = dy.shape().n;
    for (int n = 0; n < batch; ++n) {
      const T* src = dy.sample(n);
      if (gr.requires_grad(ai)) {
        T* da = gr.grad_buffer(ai).sample(n);
        for (std::size_t i = 0; i < na; ++i) da[i] += src[i];
      }
      if (gr.requires_grad(bi)) {
        T* db = gr.grad_buffer(bi).sample(n);
        for (std::size_t i = 0; i < nb; ++i) db[i] += src[na + i];
      }
    }
  });
}

template <typename T>
Var max_pool2(Graph<T>& g, Var x) {
  const Tensor<T>& xv = g.value(x);
  const Shape s = xv.shape();
  require(s.h % 2 == 0 && s.w % 2 == 0, "max_pool2: odd extent in " + s.str());
  Tensor<T> out(Shape{s.n, s.c, s.h / 2, s.w / 2});
  auto arg = std::make_shared<std::vector<int>>(out.size());
  std::size_t o = 0;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const T* p = xv.plane(n, c);
      for (int y = 0; y < s.h / 2; ++y) {
        for (int xx = 0; xx < s.w / 2; ++xx, ++o) {
          int best = (2 * y) * s.w + 2 * xx;
          for (int idx : {(2 * y) * s.w + 2 * xx + 1, (2 * y + 1) * s.w + 2 * xx,
                          (2 * y + 1) * s.w + 2 * xx + 1}) {
            if (p[idx] > p[best]) best = idx;
          }
          (*arg)[o] = best;
          out[o] = p[best];
        }
      }
    }
  }
  return g.emit(std::move(out), {x}, [xi = x.id, arg](Graph<T>& gr, int self) {
    const Tensor<T>& dy = gr.grad_buffer(self);
    Tensor<T>& dx = gr.grad_buffer(xi);
    const Shape so = dy.shape();
    std::size_t o = 0;
    for (int n = 0; n < so.n; ++n) {
      for (int c = 0; c < so.c; ++c) {
        T* p = dx.plane(n, c);
        for (std::size_t i = 0; i < so.plane(); ++i, ++o) p[(*arg)[o]] += dy[o];
      }
    }
  });
}

template <typename T>
Var linear_combination(Graph<T>& g, const std::vector<std::pair<Var, T>>& terms) {
  require(!terms.empty(), "linear_combination: no terms");
  T total{0};
  std::vector<Var> parents;
  parents.reserve(terms.size());
  for (const auto& [v, c] : terms) {
    total += c * g.value(v).item();
    parents.push_back(v);
  }
  return g.emit(Tensor<T>::scalar(total), std::span<const Var>(parents),
                [terms](Graph<T>& gr, int self) {
                  const T d = gr.grad_buffer(self)[0];
                  for (const auto& [v, c] : terms) {
                    if (gr.requires_grad(v)) gr.grad_buffer(v.id)[0] += c * d;
                  }
                });
}

#define STGAN_INSTANTIATE_OPS(T)                                               \
  template Var conv2d<T>(Graph<T>&, Var, Var, Var, ConvGeometry);              \
  template Var conv_transpose2d<T>(Graph<T>&, Var, Var, Var, ConvGeometry);    \
  template Var instance_norm<T>(Graph<T>&, Var, T);                            \
  template Var relu<T>(Graph<T>&, Var);                                        \
  template Var leaky_relu<T>(Graph<T>&, Var, T);                               \
  template Var tanh<T>(Graph<T>&, Var);                                        \
  template Var add<T>(Graph<T>&, Var, Var);                                    \
  template Var concat_channels<T>(Graph<T>&, Var, Var);                        \
  template Var max_pool2<T>(Graph<T>&, Var);                                   \
  template Var linear_combination<T>(Graph<T>&, const std::vector<std::pair<Var, T>>&);

STGAN_INSTANTIATE_OPS(float)
STGAN_INSTANTIATE_OPS(double)

}  // namespace stgan::ops
