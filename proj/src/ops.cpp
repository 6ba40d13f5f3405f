#include "windcnn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "windcnn/errors.hpp"
#include "windcnn/mac_counter.hpp"

namespace windcnn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

// Upper bound on im2col buffer elements; output rows are processed in chunks.
constexpr std::int64_t kColumnBudget = std::int64_t{1} << 22;

struct ConvGeometry {
  std::int64_t n, cin, h, w;
  std::int64_t cout, k, stride, pad, groups;
  std::int64_t hout, wout;
  std::int64_t cin_g, cout_g, patch;  // patch = cin_g * k * k

  std::int64_t positions() const { return hout * wout; }
  bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
  bool depthwise() const { return cin_g == 1 && cout_g == 1 && groups > 1; }
  std::int64_t chunk_rows() const {
    return std::clamp<std::int64_t>(kColumnBudget / std::max<std::int64_t>(1, patch * wout), 1,
                                    hout);
  }
  // Output columns ox whose input column ox*stride - pad + kx lies inside [0, w).
  std::pair<std::int64_t, std::int64_t> valid_columns(std::int64_t kx) const {
    std::int64_t lo = 0;
    while (lo < wout && lo * stride - pad + kx < 0) ++lo;
    std::int64_t hi = wout;
    while (hi > lo && (hi - 1) * stride - pad + kx >= w) --hi;
    return {lo, hi};
  }
};

// Fills col (patch x rows*wout) for output rows [oy0, oy0+rows) of one group.
template <typename T>
void im2col(const T* in, const ConvGeometry& g, std::int64_t oy0, std::int64_t rows, T* col) {
  const std::int64_t cols = rows * g.wout;
  for (std::int64_t c = 0; c < g.cin_g; ++c) {
    for (std::int64_t ky = 0; ky < g.k; ++ky) {
      for (std::int64_t kx = 0; kx < g.k; ++kx) {
        T* dst = col + ((c * g.k + ky) * g.k + kx) * cols;
        const auto [lo, hi] = g.valid_columns(kx);
        for (std::int64_t r = 0; r < rows; ++r) {
          T* d = dst + r * g.wout;
          const std::int64_t iy = (oy0 + r) * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) {
            std::fill(d, d + g.wout, T{0});
            continue;
          }
          const T* src = in + (c * g.h + iy) * g.w - g.pad + kx;
          std::fill(d, d + lo, T{0});
          for (std::int64_t ox = lo; ox < hi; ++ox) d[ox] = src[ox * g.stride];
          std::fill(d + hi, d + g.wout, T{0});
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, std::int64_t oy0, std::int64_t rows, T* in) {
  const std::int64_t cols = rows * g.wout;
  for (std::int64_t c = 0; c < g.cin_g; ++c) {
    for (std::int64_t ky = 0; ky < g.k; ++ky) {
      for (std::int64_t kx = 0; kx < g.k; ++kx) {
        const T* src = col + ((c * g.k + ky) * g.k + kx) * cols;
        const auto [lo, hi] = g.valid_columns(kx);
        for (std::int64_t r = 0; r < rows; ++r) {
          const std::int64_t iy = (oy0 + r) * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          const T* s = src + r * g.wout;
          T* dst = in + (c * g.h + iy) * g.w - g.pad + kx;
          for (std::int64_t ox = lo; ox < hi; ++ox) dst[ox * g.stride] += s[ox];
        }
      }
    }
  }
}

ConvGeometry conv_geometry(const Shape& in, const Shape& wt, Conv2dOptions o) {
  if (o.stride < 1) throw ShapeError("conv2d: stride must be >= 1, got " + std::to_string(o.stride));
  if (o.padding < 0) throw ShapeError("conv2d: padding must be >= 0, got " + std::to_string(o.padding));
  if (o.groups < 1) throw ShapeError("conv2d: groups must be >= 1, got " + std::to_string(o.groups));
  if (wt.h != wt.w || wt.h < 1) throw ShapeError("conv2d: kernel must be square, got weight " + wt.str());
  if (in.c != wt.c * o.groups) {
    throw ShapeError("conv2d: input channel dimension C=" + std::to_string(in.c) +
                     " does not match weight in-channels " + std::to_string(wt.c) + " x groups " +
                     std::to_string(o.groups));
  }
  if (wt.n % o.groups != 0) {
    throw ShapeError("conv2d: output channel dimension Cout=" + std::to_string(wt.n) +
                     " not divisible by groups " + std::to_string(o.groups));
  }
  ConvGeometry g{};
  g.n = in.n;
  g.cin = in.c;
  g.h = in.h;
  g.w = in.w;
  g.cout = wt.n;
  g.k = wt.h;
  g.stride = o.stride;
  g.pad = o.padding;
  g.groups = o.groups;
  const std::int64_t hspan = in.h + 2 * o.padding - g.k;
  const std::int64_t wspan = in.w + 2 * o.padding - g.k;
  if (hspan < 0) throw ShapeError("conv2d: height H=" + std::to_string(in.h) + " smaller than kernel");
  if (wspan < 0) throw ShapeError("conv2d: width W=" + std::to_string(in.w) + " smaller than kernel");
  g.hout = hspan / o.stride + 1;
  g.wout = wspan / o.stride + 1;
  g.cin_g = in.c / o.groups;
  g.cout_g = wt.n / o.groups;
  g.patch = g.cin_g * g.k * g.k;
  return g;
}

template <typename T>
void depthwise_forward(const T* in, const T* wt, const ConvGeometry& g, T* out) {
  for (std::int64_t ky = 0; ky < g.k; ++ky) {
    for (std::int64_t kx = 0; kx < g.k; ++kx) {
      const T wv = wt[ky * g.k + kx];
      const auto [lo, hi] = g.valid_columns(kx);
      for (std::int64_t oy = 0; oy < g.hout; ++oy) {
        const std::int64_t iy = oy * g.stride - g.pad + ky;
        if (iy < 0 || iy >= g.h) continue;
        const T* src = in + iy * g.w - g.pad + kx;
        T* dst = out + oy * g.wout;
        for (std::int64_t ox = lo; ox < hi; ++ox) dst[ox] += wv * src[ox * g.stride];
      }
    }
  }
}

template <typename T>
void depthwise_backward(const T* in, const T* wt, const T* dout, const ConvGeometry& g, T* din,
                        T* dwt) {
  for (std::int64_t ky = 0; ky < g.k; ++ky) {
    for (std::int64_t kx = 0; kx < g.k; ++kx) {
      const T wv = wt[ky * g.k + kx];
      const auto [lo, hi] = g.valid_columns(kx);
      T acc{0};
      for (std::int64_t oy = 0; oy < g.hout; ++oy) {
        const std::int64_t iy = oy * g.stride - g.pad + ky;
        if (iy < 0 || iy >= g.h) continue;
        const std::int64_t offset = iy * g.w - g.pad + kx;
        const T* d = dout + oy * g.wout;
        if (dwt) {
          const T* src = in + offset;
          for (std::int64_t ox = lo; ox < hi; ++ox) acc += d[ox] * src[ox * g.stride];
        }
        if (din) {
          T* dst = din + offset;
          for (std::int64_t ox = lo; ox < hi; ++ox) dst[ox * g.stride] += wv * d[ox];
        }
      }
      if (dwt) dwt[ky * g.k + kx] += acc;
    }
  }
}

void require_same_shape(const char* op, const Shape& a, const Shape& b) {
  if (a.n != b.n) throw ShapeError(std::string(op) + ": batch dimension N mismatch " + a.str() + " vs " + b.str());
  if (a.c != b.c) throw ShapeError(std::string(op) + ": channel dimension C mismatch " + a.str() + " vs " + b.str());
  if (a.h != b.h) throw ShapeError(std::string(op) + ": height dimension H mismatch " + a.str() + " vs " + b.str());
  if (a.w != b.w) throw ShapeError(std::string(op) + ": width dimension W mismatch " + a.str() + " vs " + b.str());
}

void require_channel_vector(const char* op, const char* what, const Shape& s, std::int64_t c) {
  if (s != Shape{1, c, 1, 1}) {
    throw ShapeError(std::string(op) + ": " + what + " must be (1," + std::to_string(c) +
                     ",1,1), got " + s.str());
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 Conv2dOptions options) {
  const ConvGeometry g = conv_geometry(input.shape(), weight.shape(), options);
  if (bias.defined()) require_channel_vector("conv2d", "bias", bias.shape(), g.cout);

  const std::int64_t P = g.positions();
  std::vector<T> out(static_cast<std::size_t>(g.n * g.cout * P), T{0});
  MacCounter::record(g.n * g.cout * P * g.patch);

  const T* in = input.ptr();
  const T* wt = weight.ptr();
  std::vector<T> col;
  for (std::int64_t n = 0; n < g.n; ++n) {
    for (std::int64_t grp = 0; grp < g.groups; ++grp) {
      const T* in_g = in + (n * g.cin + grp * g.cin_g) * g.h * g.w;
      T* out_g = out.data() + (n * g.cout + grp * g.cout_g) * P;
      const T* w_g = wt + grp * g.cout_g * g.patch;
      if (g.depthwise()) {
        depthwise_forward(in_g, w_g, g, out_g);
        continue;
      }
      ConstMatMap<T> wmat(w_g, g.cout_g, g.patch, Eigen::OuterStride<>(g.patch));
      if (g.pointwise()) {
        ConstMatMap<T> x(in_g, g.cin_g, P, Eigen::OuterStride<>(P));
        MatMap<T> y(out_g, g.cout_g, P, Eigen::OuterStride<>(P));
        y.noalias() = wmat * x;
        continue;
      }
      const std::int64_t rows = g.chunk_rows();
      col.resize(static_cast<std::size_t>(g.patch * rows * g.wout));
      for (std::int64_t oy0 = 0; oy0 < g.hout; oy0 += rows) {
        const std::int64_t r = std::min(rows, g.hout - oy0);
        const std::int64_t cols = r * g.wout;
        im2col(in_g, g, oy0, r, col.data());
        ConstMatMap<T> x(col.data(), g.patch, cols, Eigen::OuterStride<>(cols));
        MatMap<T> y(out_g + oy0 * g.wout, g.cout_g, cols, Eigen::OuterStride<>(P));
        y.noalias() = wmat * x;
      }
    }
    if (bias.defined()) {
      const T* b = bias.ptr();
      for (std::int64_t co = 0; co < g.cout; ++co) {
        T* o = out.data() + (n * g.cout + co) * P;
        for (std::int64_t p = 0; p < P; ++p) o[p] += b[co];
      }
    }
  }

  return make_result<T>(
      Shape{g.n, g.cout, g.hout, g.wout}, std::move(out), {&input, &weight, &bias},
      [g](detail::TensorNode<T>& self) {
        auto& in_node = *self.parents[0];
        auto& w_node = *self.parents[1];
        auto* b_node = self.parents[2].get();
        const std::int64_t P = g.positions();
        const T* dout = self.grad.data();
        T* din = in_node.requires_grad ? in_node.ensure_grad().data() : nullptr;
        T* dwt = w_node.requires_grad ? w_node.ensure_grad().data() : nullptr;
        const T* in = in_node.data.data();
        const T* wt = w_node.data.data();
        std::vector<T> col;
        std::vector<T> dcol;
        for (std::int64_t n = 0; n < g.n; ++n) {
          for (std::int64_t grp = 0; grp < g.groups; ++grp) {
            const std::int64_t in_off = (n * g.cin + grp * g.cin_g) * g.h * g.w;
            const T* dout_g = dout + (n * g.cout + grp * g.cout_g) * P;
            const std::int64_t w_off = grp * g.cout_g * g.patch;
            if (g.depthwise()) {
              depthwise_backward(in + in_off, wt + w_off, dout_g, g, din ? din + in_off : nullptr,
                                 dwt ? dwt + w_off : nullptr);
              continue;
            }
            ConstMatMap<T> wmat(wt + w_off, g.cout_g, g.patch, Eigen::OuterStride<>(g.patch));
            if (g.pointwise()) {
              ConstMatMap<T> dy(dout_g, g.cout_g, P, Eigen::OuterStride<>(P));
              ConstMatMap<T> x(in + in_off, g.cin_g, P, Eigen::OuterStride<>(P));
              if (dwt) {
                MatMap<T> dw(dwt + w_off, g.cout_g, g.patch, Eigen::OuterStride<>(g.patch));
                dw.noalias() += dy * x.transpose();
              }
              if (din) {
                MatMap<T> dx(din + in_off, g.cin_g, P, Eigen::OuterStride<>(P));
                dx.noalias() += wmat.transpose() * dy;
              }
              continue;
            }
            const std::int64_t rows = g.chunk_rows();
            for (std::int64_t oy0 = 0; oy0 < g.hout; oy0 += rows) {
              const std::int64_t r = std::min(rows, g.hout - oy0);
              const std::int64_t cols = r * g.wout;
              ConstMatMap<T> dy(dout_g + oy0 * g.wout, g.cout_g, cols, Eigen::OuterStride<>(P));
              if (dwt) {
                col.resize(static_cast<std::size_t>(g.patch * cols));
                im2col(in + in_off, g, oy0, r, col.data());
                ConstMatMap<T> x(col.data(), g.patch, cols, Eigen::OuterStride<>(cols));
                MatMap<T> dw(dwt + w_off, g.cout_g, g.patch, Eigen::OuterStride<>(g.patch));
                dw.noalias() += dy * x.transpose();
              }
              if (din) {
                dcol.resize(static_cast<std::size_t>(g.patch * cols));
                MatMap<T> dx(dcol.data(), g.patch, cols, Eigen::OuterStride<>(cols));
                dx.noalias() = wmat.transpose() * dy;
                col2im_add(dcol.data(), g, oy0, r, din + in_off);
              }
            }
          }
        }
        if (b_node && b_node->requires_grad) {
          T* db = b_node->ensure_grad().data();
          for (std::int64_t n = 0; n < g.n; ++n) {
            for (std::int64_t co = 0; co < g.cout; ++co) {
              const T* d = dout + (n * g.cout + co) * P;
              T acc{0};
              for (std::int64_t p = 0; p < P; ++p) acc += d[p];
              db[co] += acc;
            }
          }
        }
      });
}

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& input) {
  const Shape s = input.shape();
  if (s.h % 2 != 0) throw ShapeError("maxpool2d: height H=" + std::to_string(s.h) + " is odd");
  if (s.w % 2 != 0) throw ShapeError("maxpool2d: width W=" + std::to_string(s.w) + " is odd");
  const Shape os{s.n, s.c, s.h / 2, s.w / 2};
  std::vector<T> out(static_cast<std::size_t>(os.numel()));
  std::vector<std::int64_t> argmax(out.size());
  const T* x = input.ptr();
  for (std::int64_t plane = 0; plane < s.n * s.c; ++plane) {
    const T* src = x + plane * s.h * s.w;
    for (std::int64_t oy = 0; oy < os.h; ++oy) {
      for (std::int64_t ox = 0; ox < os.w; ++ox) {
        std::int64_t best = (2 * oy) * s.w + 2 * ox;
        for (std::int64_t idx : {best + 1, best + s.w, best + s.w + 1}) {
          if (src[idx] > src[best]) best = idx;
        }
        const std::size_t o = static_cast<std::size_t>((plane * os.h + oy) * os.w + ox);
        out[o] = src[best];
        argmax[o] = plane * s.h * s.w + best;
      }
    }
  }
  return make_result<T>(os, std::move(out), {&input},
                        [argmax = std::move(argmax)](detail::TensorNode<T>& self) {
                          auto& dx = self.parents[0]->ensure_grad();
                          for (std::size_t o = 0; o < argmax.size(); ++o) {
                            dx[static_cast<std::size_t>(argmax[o])] += self.grad[o];
                          }
                        });
}

template <typename T>
Tensor<T> avgpool2d(const Tensor<T>& input, int factor) {
  const Shape s = input.shape();
  if (factor < 1) throw ShapeError("avgpool2d: factor must be >= 1");
  if (s.h % factor != 0 || s.w % factor != 0) {
    throw ShapeError("avgpool2d: extent " + s.str() + " not divisible by " + std::to_string(factor));
  }
  const Shape os{s.n, s.c, s.h / factor, s.w / factor};
  const T inv = T{1} / static_cast<T>(factor * factor);
  std::vector<T> out(static_cast<std::size_t>(os.numel()), T{0});
  const T* x = input.ptr();
  for (std::int64_t plane = 0; plane < s.n * s.c; ++plane) {
    for (std::int64_t y = 0; y < s.h; ++y) {
      for (std::int64_t xx = 0; xx < s.w; ++xx) {
        out[static_cast<std::size_t>((plane * os.h + y / factor) * os.w + xx / factor)] +=
            x[(plane * s.h + y) * s.w + xx];
      }
    }
  }
  for (T& v : out) v *= inv;
  return make_result<T>(os, std::move(out), {&input}, [s, os, factor, inv](detail::TensorNode<T>& self) {
    auto& dx = self.parents[0]->ensure_grad();
    for (std::int64_t plane = 0; plane < s.n * s.c; ++plane) {
      for (std::int64_t y = 0; y < s.h; ++y) {
        for (std::int64_t xx = 0; xx < s.w; ++xx) {
          dx[static_cast<std::size_t>((plane * s.h + y) * s.w + xx)] +=
              inv * self.grad[static_cast<std::size_t>((plane * os.h + y / factor) * os.w + xx / factor)];
        }
      }
    }
  });
}

template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& input, int factor) {
  if (factor < 1) throw ShapeError("upsample_nearest: factor must be >= 1, got " + std::to_string(factor));
  const Shape s = input.shape();
  const Shape os{s.n, s.c, s.h * factor, s.w * factor};
  std::vector<T> out(static_cast<std::size_t>(os.numel()));
  const T* x = input.ptr();
  for (std::int64_t plane = 0; plane < s.n * s.c; ++plane) {
    for (std::int64_t oy = 0; oy < os.h; ++oy) {
      const T* src = x + (plane * s.h + oy / factor) * s.w;
      T* dst = out.data() + (plane * os.h + oy) * os.w;
      for (std::int64_t ox = 0; ox < os.w; ++ox) dst[ox] = src[ox / factor];
    }
  }
  return make_result<T>(os, std::move(out), {&input}, [s, os, factor](detail::TensorNode<T>& self) {
    auto& dx = self.parents[0]->ensure_grad();
    for (std::int64_t plane = 0; plane < s.n * s.c; ++plane) {
      for (std::int64_t oy = 0; oy < os.h; ++oy) {
        T* dst = dx.data() + (plane * s.h + oy / factor) * s.w;
        const T* src = self.grad.data() + (plane * os.h + oy) * os.w;
        for (std::int64_t ox = 0; ox < os.w; ++ox) dst[ox / factor] += src[ox];
      }
    }
  });
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape sa = a.shape();
  const Shape sb = b.shape();
  if (sa.n != sb.n) throw ShapeError("concat_channels: batch dimension N mismatch " + sa.str() + " vs " + sb.str());
  if (sa.h != sb.h) throw ShapeError("concat_channels: height dimension H mismatch " + sa.str() + " vs " + sb.str());
  if (sa.w != sb.w) throw ShapeError("concat_channels: width dimension W mismatch " + sa.str() + " vs " + sb.str());
  const Shape os{sa.n, sa.c + sb.c, sa.h, sa.w};
  const std::int64_t la = sa.c * sa.h * sa.w;
  const std::int64_t lb = sb.c * sb.h * sb.w;
  std::vector<T> out(static_cast<std::size_t>(os.numel()));
  for (std::int64_t n = 0; n < sa.n; ++n) {
    std::copy_n(a.ptr() + n * la, la, out.data() + n * (la + lb));
    std::copy_n(b.ptr() + n * lb, lb, out.data() + n * (la + lb) + la);
  }
  return make_result<T>(os, std::move(out), {&a, &b}, [la, lb, n = sa.n](detail::TensorNode<T>& self) {
    for (int side = 0; side < 2; ++side) {
      auto& parent = *self.parents[static_cast<std::size_t>(side)];
      if (!parent.requires_grad) continue;
      auto& d = parent.ensure_grad();
      const std::int64_t len = side == 0 ? la : lb;
      const std::int64_t off = side == 0 ? 0 : la;
      for (std::int64_t i = 0; i < n; ++i) {
        const T* src = self.grad.data() + i * (la + lb) + off;
        T* dst = d.data() + i * len;
        for (std::int64_t j = 0; j < len; ++j) dst[j] += src[j];
      }
    }
  });
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::int64_t begin, std::int64_t end) {
  const Shape s = x.shape();
  if (begin < 0 || end < begin || end > s.c) {
    throw ShapeError("slice_channels: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") outside channel dimension C=" + std::to_string(s.c));
  }
  const Shape os{s.n, end - begin, s.h, s.w};
  const std::int64_t hw = s.h * s.w;
  std::vector<T> out(static_cast<std::size_t>(os.numel()));
  for (std::int64_t n = 0; n < s.n; ++n) {
    std::copy_n(x.ptr() + (n * s.c + begin) * hw, os.c * hw, out.data() + n * os.c * hw);
  }
  return make_result<T>(os, std::move(out), {&x}, [s, os, begin, hw](detail::TensorNode<T>& self) {
    auto& d = self.parents[0]->ensure_grad();
    for (std::int64_t n = 0; n < s.n; ++n) {
      const T* src = self.grad.data() + n * os.c * hw;
      T* dst = d.data() + (n * s.c + begin) * hw;
      for (std::int64_t j = 0; j < os.c * hw; ++j) dst[j] += src[j];
    }
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("add", a.shape(), b.shape());
  std::vector<T> out(a.data().begin(), a.data().end());
  const T* pb = b.ptr();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += pb[i];
  return make_result<T>(a.shape(), std::move(out), {&a, &b}, [](detail::TensorNode<T>& self) {
    for (auto& parent : self.parents) {
      if (!parent->requires_grad) continue;
      auto& d = parent->ensure_grad();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc{0};
  for (T v : x.data()) acc += v;
  return make_result<T>(Shape{1, 1, 1, 1}, std::vector<T>{acc}, {&x}, [](detail::TensorNode<T>& self) {
    auto& d = self.parents[0]->ensure_grad();
    for (T& v : d) v += self.grad[0];
  });
}

template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& x, const std::vector<T>& weights) {
  if (static_cast<std::int64_t>(weights.size()) != x.numel()) {
    throw ShapeError("weighted_sum: " + std::to_string(weights.size()) + " weights for tensor " +
                     x.shape().str());
  }
  T acc{0};
  const T* p = x.ptr();
  for (std::size_t i = 0; i < weights.size(); ++i) acc += p[i] * weights[i];
  return make_result<T>(Shape{1, 1, 1, 1}, std::vector<T>{acc}, {&x},
                        [weights](detail::TensorNode<T>& self) {
                          auto& d = self.parents[0]->ensure_grad();
                          for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[0] * weights[i];
                        });
}

template <typename T>
Tensor<T> layernorm_channels(const Tensor<T>& input, const Tensor<T>& scale, const Tensor<T>& shift,
                             double eps) {
  const Shape s = input.shape();
  require_channel_vector("layernorm_channels", "scale", scale.shape(), s.c);
  require_channel_vector("layernorm_channels", "shift", shift.shape(), s.c);
  if (!(eps > 0)) throw ShapeError("layernorm_channels: eps must be > 0");
  const std::int64_t hw = s.h * s.w;
  std::vector<T> xhat(static_cast<std::size_t>(s.numel()));
  std::vector<T> inv_std(static_cast<std::size_t>(s.n * hw));
  std::vector<T> out(xhat.size());
  std::vector<T> mean(static_cast<std::size_t>(hw));
  std::vector<T> var(static_cast<std::size_t>(hw));
  const T inv_c = T{1} / static_cast<T>(s.c);
  const T* x = input.ptr();
  const T* gamma = scale.ptr();
  const T* beta = shift.ptr();
  for (std::int64_t n = 0; n < s.n; ++n) {
    const T* xn = x + n * s.c * hw;
    std::fill(mean.begin(), mean.end(), T{0});
    std::fill(var.begin(), var.end(), T{0});
    for (std::int64_t c = 0; c < s.c; ++c) {
      for (std::int64_t p = 0; p < hw; ++p) mean[p] += xn[c * hw + p];
    }
    for (T& m : mean) m *= inv_c;
    for (std::int64_t c = 0; c < s.c; ++c) {
      for (std::int64_t p = 0; p < hw; ++p) {
        const T d = xn[c * hw + p] - mean[p];
        var[p] += d * d;
      }
    }
    T* is = inv_std.data() + n * hw;
    for (std::int64_t p = 0; p < hw; ++p) is[p] = T{1} / std::sqrt(var[p] * inv_c + static_cast<T>(eps));
    for (std::int64_t c = 0; c < s.c; ++c) {
      T* xh = xhat.data() + (n * s.c + c) * hw;
      T* o = out.data() + (n * s.c + c) * hw;
      for (std::int64_t p = 0; p < hw; ++p) {
        xh[p] = (xn[c * hw + p] - mean[p]) * is[p];
        o[p] = gamma[c] * xh[p] + beta[c];
      }
    }
  }
  return make_result<T>(
      s, std::move(out), {&input, &scale, &shift},
      [s, hw, inv_c, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::TensorNode<T>& self) {
        auto& in_node = *self.parents[0];
        auto& scale_node = *self.parents[1];
        auto& shift_node = *self.parents[2];
        const T* dy = self.grad.data();
        if (scale_node.requires_grad || shift_node.requires_grad) {
          T* dg = scale_node.requires_grad ? scale_node.ensure_grad().data() : nullptr;
          T* db = shift_node.requires_grad ? shift_node.ensure_grad().data() : nullptr;
          for (std::int64_t n = 0; n < s.n; ++n) {
            for (std::int64_t c = 0; c < s.c; ++c) {
              const std::int64_t off = (n * s.c + c) * hw;
              T ag{0};
              T ab{0};
              for (std::int64_t p = 0; p < hw; ++p) {
                ag += dy[off + p] * xhat[off + p];
                ab += dy[off + p];
              }
              if (dg) dg[c] += ag;
              if (db) db[c] += ab;
            }
          }
        }
        if (!in_node.requires_grad) return;
        T* dx = in_node.ensure_grad().data();
        const T* gamma = scale_node.data.data();
        std::vector<T> m1(static_cast<std::size_t>(hw));
        std::vector<T> m2(static_cast<std::size_t>(hw));
        for (std::int64_t n = 0; n < s.n; ++n) {
          std::fill(m1.begin(), m1.end(), T{0});
          std::fill(m2.begin(), m2.end(), T{0});
          for (std::int64_t c = 0; c < s.c; ++c) {
            const std::int64_t off = (n * s.c + c) * hw;
            for (std::int64_t p = 0; p < hw; ++p) {
              const T g = dy[off + p] * gamma[c];
              m1[p] += g;
              m2[p] += g * xhat[off + p];
            }
          }
          const T* is = inv_std.data() + n * hw;
          for (std::int64_t c = 0; c < s.c; ++c) {
            const std::int64_t off = (n * s.c + c) * hw;
            for (std::int64_t p = 0; p < hw; ++p) {
              const T g = dy[off + p] * gamma[c];
              dx[off + p] += is[p] * (g - m1[p] * inv_c - xhat[off + p] * m2[p] * inv_c);
            }
          }
        }
      });
}

template <typename T>
RunningStats<T> RunningStats<T>::make(std::int64_t channels) {
  return RunningStats{Tensor<T>(Shape{1, channels, 1, 1}, T{0}), Tensor<T>(Shape{1, channels, 1, 1}, T{1})};
}

template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& input, const Tensor<T>& scale, const Tensor<T>& shift,
                      RunningStats<T>& stats, Mode mode, double eps, double momentum) {
  const Shape s = input.shape();
  require_channel_vector("batchnorm2d", "scale", scale.shape(), s.c);
  require_channel_vector("batchnorm2d", "shift", shift.shape(), s.c);
  require_channel_vector("batchnorm2d", "running mean", stats.mean.shape(), s.c);
  require_channel_vector("batchnorm2d", "running var", stats.var.shape(), s.c);
  const std::int64_t hw = s.h * s.w;
  const std::int64_t count = s.n * hw;
  if (mode == Mode::train && count < 2) {
    throw ShapeError("batchnorm2d: train mode needs N*H*W >= 2, got " + std::to_string(count) +
                     " for input " + s.str());
  }
  const T* x = input.ptr();
  std::vector<T> mean(static_cast<std::size_t>(s.c));
  std::vector<T> inv_std(static_cast<std::size_t>(s.c));
  if (mode == Mode::train) {
    T* rm = stats.mean.ptr();
    T* rv = stats.var.ptr();
    for (std::int64_t c = 0; c < s.c; ++c) {
      T m{0};
      for (std::int64_t n = 0; n < s.n; ++n) {
        const T* p = x + (n * s.c + c) * hw;
        for (std::int64_t i = 0; i < hw; ++i) m += p[i];
      }
      m /= static_cast<T>(count);
      T v{0};
      for (std::int64_t n = 0; n < s.n; ++n) {
        const T* p = x + (n * s.c + c) * hw;
        for (std::int64_t i = 0; i < hw; ++i) v += (p[i] - m) * (p[i] - m);
      }
      const T biased = v / static_cast<T>(count);
      mean[c] = m;
      inv_std[c] = T{1} / std::sqrt(biased + static_cast<T>(eps));
      const T mom = static_cast<T>(momentum);
      rm[c] = (T{1} - mom) * rm[c] + mom * m;
      rv[c] = (T{1} - mom) * rv[c] + mom * (v / static_cast<T>(count - 1));
    }
  } else {
    for (std::int64_t c = 0; c < s.c; ++c) {
      mean[c] = stats.mean.ptr()[c];
      inv_std[c] = T{1} / std::sqrt(stats.var.ptr()[c] + static_cast<T>(eps));
    }
  }
  std::vector<T> xhat(static_cast<std::size_t>(s.numel()));
  std::vector<T> out(xhat.size());
  const T* gamma = scale.ptr();
  const T* beta = shift.ptr();
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t c = 0; c < s.c; ++c) {
      const std::int64_t off = (n * s.c + c) * hw;
      for (std::int64_t i = 0; i < hw; ++i) {
        xhat[off + i] = (x[off + i] - mean[c]) * inv_std[c];
        out[off + i] = gamma[c] * xhat[off + i] + beta[c];
      }
    }
  }
  const bool batch_stats = mode == Mode::train;
  return make_result<T>(
      s, std::move(out), {&input, &scale, &shift},
      [s, hw, count, batch_stats, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          detail::TensorNode<T>& self) {
        auto& in_node = *self.parents[0];
        auto& scale_node = *self.parents[1];
        auto& shift_node = *self.parents[2];
        const T* dy = self.grad.data();
        std::vector<T> sum_dy(static_cast<std::size_t>(s.c), T{0});
        std::vector<T> sum_dy_xhat(static_cast<std::size_t>(s.c), T{0});
        for (std::int64_t n = 0; n < s.n; ++n) {
          for (std::int64_t c = 0; c < s.c; ++c) {
            const std::int64_t off = (n * s.c + c) * hw;
            for (std::int64_t i = 0; i < hw; ++i) {
              sum_dy[c] += dy[off + i];
              sum_dy_xhat[c] += dy[off + i] * xhat[off + i];
            }
          }
        }
        if (scale_node.requires_grad) {
          auto& dg = scale_node.ensure_grad();
          for (std::int64_t c = 0; c < s.c; ++c) dg[c] += sum_dy_xhat[c];
        }
        if (shift_node.requires_grad) {
          auto& db = shift_node.ensure_grad();
          for (std::int64_t c = 0; c < s.c; ++c) db[c] += sum_dy[c];
        }
        if (!in_node.requires_grad) return;
        T* dx = in_node.ensure_grad().data();
        const T* gamma = scale_node.data.data();
        const T inv_count = T{1} / static_cast<T>(count);
        for (std::int64_t n = 0; n < s.n; ++n) {
          for (std::int64_t c = 0; c < s.c; ++c) {
            const std::int64_t off = (n * s.c + c) * hw;
            const T k = gamma[c] * inv_std[c];
            if (batch_stats) {
              const T m1 = sum_dy[c] * inv_count;
              const T m2 = sum_dy_xhat[c] * inv_count;
              for (std::int64_t i = 0; i < hw; ++i) dx[off + i] += k * (dy[off + i] - m1 - xhat[off + i] * m2);
            } else {
              for (std::int64_t i = 0; i < hw; ++i) dx[off + i] += k * dy[off + i];
            }
          }
        }
      });
}

template <typename T>
Tensor<T> activation(const Tensor<T>& input, Activation kind) {
  std::vector<T> out(input.data().begin(), input.data().end());
  if (kind == Activation::relu) {
    for (T& v : out) v = v > T{0} ? v : T{0};
    return make_result<T>(input.shape(), std::move(out), {&input}, [](detail::TensorNode<T>& self) {
      auto& parent = *self.parents[0];
      auto& d = parent.ensure_grad();
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (parent.data[i] > T{0}) d[i] += self.grad[i];
      }
    });
  }
  // Exact form x * Phi(x).
  for (T& v : out) v = v * T{0.5} * std::erfc(-v / std::sqrt(T{2}));
  return make_result<T>(input.shape(), std::move(out), {&input}, [](detail::TensorNode<T>& self) {
    auto& parent = *self.parents[0];
    auto& d = parent.ensure_grad();
    const T inv_sqrt_2pi = T{0.3989422804014327};
    for (std::size_t i = 0; i < d.size(); ++i) {
      const T x = parent.data[i];
      const T cdf = T{0.5} * std::erfc(-x / std::sqrt(T{2}));
      const T pdf = inv_sqrt_2pi * std::exp(T{-0.5} * x * x);
      d[i] += self.grad[i] * (cdf + x * pdf);
    }
  });
}

template <typename T>
Tensor<T> dropout2d(const Tensor<T>& input, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0) || rate >= 1.0) {
    throw ConfigError("dropout2d: rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (mode == Mode::eval || rate == 0.0) return input;
  const Shape s = input.shape();
  const std::int64_t hw = s.h * s.w;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(static_cast<std::size_t>(s.n * s.c));
  for (T& m : mask) m = rng.uniform() < rate ? T{0} : keep_scale;
  std::vector<T> out(input.data().begin(), input.data().end());
  for (std::size_t plane = 0; plane < mask.size(); ++plane) {
    T* p = out.data() + plane * hw;
    for (std::int64_t i = 0; i < hw; ++i) p[i] *= mask[plane];
  }
  return make_result<T>(s, std::move(out), {&input}, [hw, mask = std::move(mask)](detail::TensorNode<T>& self) {
    auto& d = self.parents[0]->ensure_grad();
    for (std::size_t plane = 0; plane < mask.size(); ++plane) {
      for (std::int64_t i = 0; i < hw; ++i) {
        d[plane * hw + i] += mask[plane] * self.grad[plane * hw + i];
      }
    }
  });
}

#define WINDCNN_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Conv2dOptions); \
  template Tensor<T> maxpool2d(const Tensor<T>&);                                               \
  template Tensor<T> avgpool2d(const Tensor<T>&, int);                                          \
  template Tensor<T> upsample_nearest(const Tensor<T>&, int);                                   \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> slice_channels(const Tensor<T>&, std::int64_t, std::int64_t);             \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> sum(const Tensor<T>&);                                                     \
  template Tensor<T> weighted_sum(const Tensor<T>&, const std::vector<T>&);                    \
  template Tensor<T> layernorm_channels(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,  \
                                        double);                                                \
  template struct RunningStats<T>;                                                              \
  template Tensor<T> batchnorm2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,         \
                                 RunningStats<T>&, Mode, double, double);                       \
  template Tensor<T> activation(const Tensor<T>&, Activation);                                 \
  template Tensor<T> dropout2d(const Tensor<T>&, double, Mode, Rng&);

WINDCNN_INSTANTIATE_OPS(float)
WINDCNN_INSTANTIATE_OPS(double)

}  // namespace windcnn
