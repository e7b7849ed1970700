#pragma once

// Forward/backward kernels for single-sample activations. Spatial tensors
// are H x W x C row-major; dense activations are rank-1 vectors.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "roadinspect/error.hpp"
#include "roadinspect/rng.hpp"
#include "roadinspect/tensor.hpp"

namespace roadinspect::nn {

namespace detail {

inline void require_rank(const Shape& s, std::size_t rank, const char* what) {
  if (s.size() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " + shape_string(s));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Conv2D: valid padding, stride 1, cross-correlation.
// x: H x W x Cin, w: k x k x Cin x Cout, b: Cout.

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b) {
  detail::require_rank(x.shape(), 3, "conv2d input");
  detail::require_rank(w.shape(), 4, "conv2d weight");
  const std::size_t H = x.dim(0), W = x.dim(1), Cin = x.dim(2);
  const std::size_t k = w.dim(0), Cout = w.dim(3);
  if (w.dim(1) != k || w.dim(2) != Cin) {
    throw ShapeError("conv2d: weight " + shape_string(w.shape()) + " incompatible with input " + shape_string(x.shape()));
  }
  if (b.size() != Cout) throw ShapeError("conv2d: bias length != filters");
  if (H < k || W < k) throw ShapeError("conv2d: input " + shape_string(x.shape()) + " smaller than kernel");

  const std::size_t Ho = H - k + 1, Wo = W - k + 1;
  BasicTensor<T> out({Ho, Wo, Cout});
  const T* xp = x.data().data();
  const T* wp = w.data().data();
  T* op = out.data().data();
  for (std::size_t i = 0; i < Ho; ++i) {
    for (std::size_t j = 0; j < Wo; ++j) {
      T* o = op + (i * Wo + j) * Cout;
      for (std::size_t co = 0; co < Cout; ++co) o[co] = b[co];
      for (std::size_t u = 0; u < k; ++u) {
        for (std::size_t v = 0; v < k; ++v) {
          const T* xin = xp + ((i + u) * W + (j + v)) * Cin;
          const T* wk = wp + (u * k + v) * Cin * Cout;
          for (std::size_t c = 0; c < Cin; ++c) {
            const T xv = xin[c];
            const T* wrow = wk + c * Cout;
            for (std::size_t co = 0; co < Cout; ++co) o[co] += xv * wrow[co];
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
struct ConvGrads {
  BasicTensor<T> grad_x, grad_w, grad_b;
};

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& grad_out) {
  detail::require_rank(x.shape(), 3, "conv2d input");
  detail::require_rank(w.shape(), 4, "conv2d weight");
  detail::require_rank(grad_out.shape(), 3, "conv2d grad");
  const std::size_t H = x.dim(0), W = x.dim(1), Cin = x.dim(2);
  const std::size_t k = w.dim(0), Cout = w.dim(3);
  if (w.dim(2) != Cin || H < k || W < k) throw ShapeError("conv2d backward: inconsistent input/weight");
  const std::size_t Ho = H - k + 1, Wo = W - k + 1;
  if (grad_out.shape() != Shape{Ho, Wo, Cout}) {
    throw ShapeError("conv2d backward: grad shape " + shape_string(grad_out.shape()) + " != forward output");
  }

  ConvGrads<T> g{BasicTensor<T>(x.shape()), BasicTensor<T>(w.shape()), BasicTensor<T>({Cout})};
  const T* xp = x.data().data();
  const T* wp = w.data().data();
  const T* gp = grad_out.data().data();
  T* gx = g.grad_x.data().data();
  T* gw = g.grad_w.data().data();
  T* gb = g.grad_b.data().data();
  for (std::size_t i = 0; i < Ho; ++i) {
    for (std::size_t j = 0; j < Wo; ++j) {
      const T* go = gp + (i * Wo + j) * Cout;
      for (std::size_t co = 0; co < Cout; ++co) gb[co] += go[co];
      for (std::size_t u = 0; u < k; ++u) {
        for (std::size_t v = 0; v < k; ++v) {
          const std::size_t xoff = ((i + u) * W + (j + v)) * Cin;
          const std::size_t woff = (u * k + v) * Cin * Cout;
          for (std::size_t c = 0; c < Cin; ++c) {
            const T xv = xp[xoff + c];
            const T* wrow = wp + woff + c * Cout;
            T* gwrow = gw + woff + c * Cout;
            T acc = 0;
            for (std::size_t co = 0; co < Cout; ++co) {
              gwrow[co] += xv * go[co];
              acc += wrow[co] * go[co];
            }
            gx[xoff + c] += acc;
          }
        }
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// 2x2 max pooling, stride 2, trailing odd row/column dropped.

template <typename T>
struct PoolResult {
  BasicTensor<T> out;
  std::vector<std::uint32_t> argmax;  // flat input index per output element
};

template <typename T>
PoolResult<T> maxpool2_forward(const BasicTensor<T>& x) {
  detail::require_rank(x.shape(), 3, "maxpool input");
  const std::size_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
  if (H < 2 || W < 2) throw ShapeError("maxpool: input " + shape_string(x.shape()) + " smaller than 2x2");
  const std::size_t Ho = H / 2, Wo = W / 2;
  PoolResult<T> r{BasicTensor<T>({Ho, Wo, C}), std::vector<std::uint32_t>(Ho * Wo * C)};
  for (std::size_t i = 0; i < Ho; ++i) {
    for (std::size_t j = 0; j < Wo; ++j) {
      for (std::size_t c = 0; c < C; ++c) {
        std::size_t best = ((2 * i) * W + 2 * j) * C + c;
        // Row-major scan; strict '>' keeps the first maximum on ties.
        for (std::size_t du = 0; du < 2; ++du) {
          for (std::size_t dv = 0; dv < 2; ++dv) {
            const std::size_t idx = ((2 * i + du) * W + (2 * j + dv)) * C + c;
            if (x[idx] > x[best]) best = idx;
          }
        }
        const std::size_t o = (i * Wo + j) * C + c;
        r.out[o] = x[best];
        r.argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return r;
}

template <typename T>
BasicTensor<T> maxpool2_backward(const Shape& input_shape, const std::vector<std::uint32_t>& argmax,
                                 const BasicTensor<T>& grad_out) {
  if (argmax.size() != grad_out.size()) throw ShapeError("maxpool backward: argmax/grad length mismatch");
  BasicTensor<T> gx(input_shape);
  for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += grad_out[o];
  return gx;
}

// ---------------------------------------------------------------------------
// Elementwise activations.

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& x) {
  BasicTensor<T> y = x;
  for (auto& v : y.vec()) v = v > T(0) ? v : T(0);
  return y;
}

/// Passes gradient where x > 0; the subgradient at exactly 0 is 0.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out) {
  if (x.shape() != grad_out.shape()) throw ShapeError("relu backward: shape mismatch");
  BasicTensor<T> g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(x[i] > T(0))) g[i] = T(0);
  }
  return g;
}

template <typename T>
T sigmoid(T z) {
  // Split by sign so exp never overflows.
  if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
  const T e = std::exp(z);
  return e / (T(1) + e);
}

template <typename T>
BasicTensor<T> sigmoid_forward(const BasicTensor<T>& x) {
  BasicTensor<T> y = x;
  for (auto& v : y.vec()) v = sigmoid(v);
  return y;
}

/// Takes the forward output y; dy/dx = y (1 - y).
template <typename T>
BasicTensor<T> sigmoid_backward(const BasicTensor<T>& y, const BasicTensor<T>& grad_out) {
  if (y.shape() != grad_out.shape()) throw ShapeError("sigmoid backward: shape mismatch");
  BasicTensor<T> g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= y[i] * (T(1) - y[i]);
  return g;
}

// ---------------------------------------------------------------------------
// Dense: y = x W + b with W stored in x units (inputs x outputs).

template <typename T>
BasicTensor<T> dense_forward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b) {
  detail::require_rank(w.shape(), 2, "dense weight");
  const std::size_t in = w.dim(0), units = w.dim(1);
  if (x.size() != in) {
    throw ShapeError("dense: input length " + std::to_string(x.size()) + " != " + std::to_string(in));
  }
  if (b.size() != units) throw ShapeError("dense: bias length != units");
  BasicTensor<T> y = b.reshaped({units});
  const T* wp = w.data().data();
  for (std::size_t i = 0; i < in; ++i) {
    const T xv = x[i];
    if (xv == T(0)) continue;
    const T* row = wp + i * units;
    for (std::size_t o = 0; o < units; ++o) y[o] += xv * row[o];
  }
  return y;
}

template <typename T>
struct DenseGrads {
  BasicTensor<T> grad_x, grad_w, grad_b;
};

template <typename T>
DenseGrads<T> dense_backward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& grad_out) {
  detail::require_rank(w.shape(), 2, "dense weight");
  const std::size_t in = w.dim(0), units = w.dim(1);
  if (x.size() != in || grad_out.size() != units) throw ShapeError("dense backward: shape mismatch");
  DenseGrads<T> g{BasicTensor<T>(x.shape()), BasicTensor<T>(w.shape()), grad_out.reshaped({units})};
  const T* wp = w.data().data();
  T* gw = g.grad_w.data().data();
  for (std::size_t i = 0; i < in; ++i) {
    const T xv = x[i];
    const T* row = wp + i * units;
    T* grow = gw + i * units;
    T acc = 0;
    for (std::size_t o = 0; o < units; ++o) {
      grow[o] = xv * grad_out[o];
      acc += row[o] * grad_out[o];
    }
    g.grad_x[i] = acc;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Flatten is a row-major reshape.

template <typename T>
BasicTensor<T> flatten_forward(const BasicTensor<T>& x) {
  return x.reshaped({x.size()});
}

template <typename T>
BasicTensor<T> flatten_backward(const Shape& input_shape, const BasicTensor<T>& grad_out) {
  return grad_out.reshaped(input_shape);
}

// ---------------------------------------------------------------------------
// Inverted dropout: kept elements scaled by 1 / (1 - rate); identity at inference.

template <typename T>
struct DropoutResult {
  BasicTensor<T> out;
  BasicTensor<T> mask;  // 0 or 1/(1-rate); all ones when inactive
};

template <typename T>
DropoutResult<T> dropout_forward(const BasicTensor<T>& x, double rate, Rng& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ShapeError("dropout rate must be in [0, 1)");
  DropoutResult<T> r{x, BasicTensor<T>(x.shape(), T(1))};
  if (!training || rate == 0.0) return r;
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  for (std::size_t i = 0; i < x.size(); ++i) {
    r.mask[i] = rng.uniform() < rate ? T(0) : scale;
    r.out[i] = x[i] * r.mask[i];
  }
  return r;
}

template <typename T>
BasicTensor<T> dropout_backward(const BasicTensor<T>& mask, const BasicTensor<T>& grad_out) {
  if (mask.shape() != grad_out.shape()) throw ShapeError("dropout backward: shape mismatch");
  BasicTensor<T> g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= mask[i];
  return g;
}

}  // namespace roadinspect::nn
