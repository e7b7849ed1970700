#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "roadinspect/error.hpp"
#include "roadinspect/layers.hpp"
#include "roadinspect/rng.hpp"
#include "roadinspect/tensor.hpp"

namespace roadinspect::nn {

// ---------------------------------------------------------------------------
// Layer descriptions

struct Conv2D {
  std::size_t filters = 32;
  std::size_t kernel = 3;
  friend bool operator==(const Conv2D&, const Conv2D&) = default;
};
struct MaxPool2 {
  friend bool operator==(const MaxPool2&, const MaxPool2&) = default;
};
struct ReLU {
  friend bool operator==(const ReLU&, const ReLU&) = default;
};
struct Flatten {
  friend bool operator==(const Flatten&, const Flatten&) = default;
};
struct Dense {
  std::size_t units = 1;
  friend bool operator==(const Dense&, const Dense&) = default;
};
struct Dropout {
  double rate = 0.5;
  friend bool operator==(const Dropout&, const Dropout&) = default;
};
struct Sigmoid {
  friend bool operator==(const Sigmoid&, const Sigmoid&) = default;
};

using LayerSpec = std::variant<Conv2D, MaxPool2, ReLU, Flatten, Dense, Dropout, Sigmoid>;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

inline std::string layer_name(const LayerSpec& layer) {
  return std::visit(overloaded{
                        [](const Conv2D& l) { return "conv2d(" + std::to_string(l.filters) + "," + std::to_string(l.kernel) + ")"; },
                        [](const MaxPool2&) { return std::string("maxpool2"); },
                        [](const ReLU&) { return std::string("relu"); },
                        [](const Flatten&) { return std::string("flatten"); },
                        [](const Dense& l) { return "dense(" + std::to_string(l.units) + ")"; },
                        [](const Dropout& l) {
                          char buf[32];
                          std::snprintf(buf, sizeof buf, "dropout(%g)", l.rate);
                          return std::string(buf);
                        },
                        [](const Sigmoid&) { return std::string("sigmoid"); },
                    },
                    layer);
}

struct NetworkSpec {
  Shape input_shape;  // H x W x C
  std::vector<LayerSpec> layers;
  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

struct ShapeReport {
  std::vector<Shape> outputs;         // per layer
  std::vector<Shape> weight_shapes;   // empty Shape when the layer has no parameters
  std::vector<Shape> bias_shapes;
  std::size_t param_count = 0;
};

/// Output shape of every layer plus parameter shapes; throws ShapeError when a
/// dimension would fall below 1 or a layer receives the wrong rank.
inline ShapeReport shape_infer(const NetworkSpec& spec) {
  if (spec.input_shape.size() != 3) throw ShapeError("network input must be H x W x C");
  for (auto d : spec.input_shape) {
    if (d == 0) throw ShapeError("network input dims must be >= 1");
  }
  ShapeReport r;
  Shape cur = spec.input_shape;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const std::string where = "layer " + std::to_string(i) + " (" + layer_name(spec.layers[i]) + ")";
    Shape wshape, bshape;
    std::visit(overloaded{
                   [&](const Conv2D& l) {
                     if (cur.size() != 3) throw ShapeError(where + ": needs a spatial input");
                     if (l.filters < 1 || l.kernel < 1) throw ShapeError(where + ": filters and kernel must be >= 1");
                     if (cur[0] < l.kernel || cur[1] < l.kernel) {
                       throw ShapeError(where + ": input " + shape_string(cur) + " smaller than kernel");
                     }
                     wshape = {l.kernel, l.kernel, cur[2], l.filters};
                     bshape = {l.filters};
                     cur = {cur[0] - l.kernel + 1, cur[1] - l.kernel + 1, l.filters};
                   },
                   [&](const MaxPool2&) {
                     if (cur.size() != 3) throw ShapeError(where + ": needs a spatial input");
                     if (cur[0] < 2 || cur[1] < 2) throw ShapeError(where + ": input " + shape_string(cur) + " below 2x2");
                     cur = {cur[0] / 2, cur[1] / 2, cur[2]};
                   },
                   [&](const ReLU&) {},
                   [&](const Flatten&) { cur = {shape_size(cur)}; },
                   [&](const Dense& l) {
                     if (cur.size() != 1) throw ShapeError(where + ": needs a flattened input");
                     if (l.units < 1) throw ShapeError(where + ": units must be >= 1");
                     wshape = {cur[0], l.units};
                     bshape = {l.units};
                     cur = {l.units};
                   },
                   [&](const Dropout& l) {
                     if (!(l.rate >= 0.0 && l.rate < 1.0)) throw ShapeError(where + ": rate must be in [0,1)");
                   },
                   [&](const Sigmoid&) {},
               },
               spec.layers[i]);
    if (!wshape.empty()) r.param_count += shape_size(wshape) + shape_size(bshape);
    r.outputs.push_back(cur);
    r.weight_shapes.push_back(std::move(wshape));
    r.bias_shapes.push_back(std::move(bshape));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Parameters

template <typename T>
struct LayerParams {
  BasicTensor<T> weight;  // empty for parameter-free layers
  BasicTensor<T> bias;
  bool has_params() const noexcept { return !weight.empty(); }
  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

/// One entry per layer; also used for gradients.
template <typename T>
using ParamSet = std::vector<LayerParams<T>>;

template <typename T>
ParamSet<T> zeros_like(const ParamSet<T>& params) {
  ParamSet<T> out(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_params()) continue;
    out[i].weight = BasicTensor<T>(params[i].weight.shape());
    out[i].bias = BasicTensor<T>(params[i].bias.shape());
  }
  return out;
}

template <typename To, typename From>
ParamSet<To> cast_params(const ParamSet<From>& params) {
  ParamSet<To> out(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_params()) continue;
    out[i].weight = BasicTensor<To>::cast(params[i].weight);
    out[i].bias = BasicTensor<To>::cast(params[i].bias);
  }
  return out;
}

/// Glorot half-width sqrt(6 / (fan_in + fan_out)) for a weight shape.
inline double glorot_limit(const Shape& wshape) {
  double fan_in = 0, fan_out = 0;
  if (wshape.size() == 4) {
    const double receptive = static_cast<double>(wshape[0] * wshape[1]);
    fan_in = receptive * static_cast<double>(wshape[2]);
    fan_out = receptive * static_cast<double>(wshape[3]);
  } else {
    fan_in = static_cast<double>(wshape[0]);
    fan_out = static_cast<double>(wshape[1]);
  }
  return std::sqrt(6.0 / (fan_in + fan_out));
}

/// Glorot-uniform weights, zero biases, fully determined by seed.
template <typename T = float>
ParamSet<T> init_params(const NetworkSpec& spec, std::uint64_t seed) {
  const ShapeReport shapes = shape_infer(spec);
  Rng rng(seed);
  ParamSet<T> params(spec.layers.size());
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (shapes.weight_shapes[i].empty()) continue;
    const double a = glorot_limit(shapes.weight_shapes[i]);
    BasicTensor<T> w(shapes.weight_shapes[i]);
    for (auto& v : w.vec()) {
      // Narrowing may land exactly on the limit; keep the draw strictly inside.
      T s = static_cast<T>(rng.uniform(-a, a));
      if (std::abs(static_cast<double>(s)) >= a) s = T(0);
      v = s;
    }
    params[i].weight = std::move(w);
    params[i].bias = BasicTensor<T>(shapes.bias_shapes[i]);
  }
  return params;
}

/// Throws ShapeError unless params match the inferred shapes exactly.
template <typename T>
void check_params(const NetworkSpec& spec, const ParamSet<T>& params) {
  const ShapeReport shapes = shape_infer(spec);
  if (params.size() != spec.layers.size()) throw ShapeError("parameter set has wrong layer count");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const bool expects = !shapes.weight_shapes[i].empty();
    if (expects != params[i].has_params() ||
        (expects && (params[i].weight.shape() != shapes.weight_shapes[i] ||
                     params[i].bias.shape() != shapes.bias_shapes[i]))) {
      throw ShapeError("parameters of layer " + std::to_string(i) + " do not match the network spec");
    }
  }
}

// ---------------------------------------------------------------------------
// Forward / backward

enum class Mode { Train, Eval };

template <typename T>
struct ForwardCache {
  std::vector<BasicTensor<T>> acts;                 // acts[0] input, acts[i+1] output of layer i
  std::vector<std::vector<std::uint32_t>> argmax;   // per pooling layer (empty otherwise)
  std::vector<BasicTensor<T>> masks;                // per dropout layer (empty otherwise)

  const BasicTensor<T>& output() const { return acts.back(); }
};

/// Runs one sample (H x W x C) through the network. Dropout draws from rng in
/// Train mode only.
template <typename T>
ForwardCache<T> forward_sample(const NetworkSpec& spec, const ParamSet<T>& params, const BasicTensor<T>& x, Mode mode,
                               Rng& rng) {
  if (x.shape() != spec.input_shape) {
    throw ShapeError("sample shape " + shape_string(x.shape()) + " != network input " + shape_string(spec.input_shape));
  }
  const std::size_t L = spec.layers.size();
  ForwardCache<T> c;
  c.acts.reserve(L + 1);
  c.acts.push_back(x);
  c.argmax.resize(L);
  c.masks.resize(L);
  for (std::size_t i = 0; i < L; ++i) {
    const BasicTensor<T>& in = c.acts.back();
    BasicTensor<T> out = std::visit(
        overloaded{
            [&](const Conv2D&) { return conv2d_forward(in, params[i].weight, params[i].bias); },
            [&](const MaxPool2&) {
              auto r = maxpool2_forward(in);
              c.argmax[i] = std::move(r.argmax);
              return std::move(r.out);
            },
            [&](const ReLU&) { return relu_forward(in); },
            [&](const Flatten&) { return flatten_forward(in); },
            [&](const Dense&) { return dense_forward(in, params[i].weight, params[i].bias); },
            [&](const Dropout& l) {
              auto r = dropout_forward(in, l.rate, rng, mode == Mode::Train);
              if (mode == Mode::Train) c.masks[i] = std::move(r.mask);
              return std::move(r.out);
            },
            [&](const Sigmoid&) { return sigmoid_forward(in); },
        },
        spec.layers[i]);
    c.acts.push_back(std::move(out));
  }
  return c;
}

/// Index one past the last layer whose output is the pre-sigmoid logit.
inline std::size_t logit_layer_end(const NetworkSpec& spec) {
  if (!spec.layers.empty() && std::holds_alternative<Sigmoid>(spec.layers.back())) return spec.layers.size() - 1;
  return spec.layers.size();
}

/// Back-propagates grad (w.r.t. the output of layer end-1) down to the input.
/// Gradients are accumulated into grads, which must mirror params.
template <typename T>
BasicTensor<T> backward_sample(const NetworkSpec& spec, const ParamSet<T>& params, const ForwardCache<T>& cache,
                               BasicTensor<T> grad, std::size_t end, ParamSet<T>& grads) {
  if (end > spec.layers.size() || cache.acts.size() != spec.layers.size() + 1) {
    throw ShapeError("backward: cache does not match network");
  }
  if (grad.shape() != cache.acts[end].shape()) throw ShapeError("backward: seed gradient has wrong shape");
  for (std::size_t i = end; i-- > 0;) {
    const BasicTensor<T>& in = cache.acts[i];
    const BasicTensor<T>& out = cache.acts[i + 1];
    auto accumulate = [&](const BasicTensor<T>& gw, const BasicTensor<T>& gb) {
      auto& dst = grads[i];
      for (std::size_t k = 0; k < gw.size(); ++k) dst.weight[k] += gw[k];
      for (std::size_t k = 0; k < gb.size(); ++k) dst.bias[k] += gb[k];
    };
    grad = std::visit(overloaded{
                          [&](const Conv2D&) {
                            auto g = conv2d_backward(in, params[i].weight, grad);
                            accumulate(g.grad_w, g.grad_b);
                            return std::move(g.grad_x);
                          },
                          [&](const MaxPool2&) { return maxpool2_backward(in.shape(), cache.argmax[i], grad); },
                          [&](const ReLU&) { return relu_backward(in, grad); },
                          [&](const Flatten&) { return flatten_backward(in.shape(), grad); },
                          [&](const Dense&) {
                            auto g = dense_backward(in, params[i].weight, grad);
                            accumulate(g.grad_w, g.grad_b);
                            return std::move(g.grad_x);
                          },
                          [&](const Dropout&) {
                            return cache.masks[i].empty() ? grad : dropout_backward(cache.masks[i], grad);
                          },
                          [&](const Sigmoid&) { return sigmoid_backward(out, grad); },
                      },
                      spec.layers[i]);
  }
  return grad;
}

template <typename T>
struct BatchForward {
  BasicTensor<T> outputs;  // N x output length
  std::vector<ForwardCache<T>> caches;
};

/// Forward over an N x H x W x C batch. Sample n's dropout stream is
/// Rng::stream(seed, n), so the result does not depend on evaluation order.
template <typename T>
BatchForward<T> network_forward(const NetworkSpec& spec, const ParamSet<T>& params, const BasicTensor<T>& batch,
                                Mode mode, std::uint64_t seed = 0) {
  if (batch.rank() != 4 || Shape(batch.shape().begin() + 1, batch.shape().end()) != spec.input_shape) {
    throw ShapeError("batch shape " + shape_string(batch.shape()) + " incompatible with input " +
                     shape_string(spec.input_shape));
  }
  const std::size_t N = batch.dim(0);
  const std::size_t per = shape_size(spec.input_shape);
  BatchForward<T> r;
  r.caches.reserve(N);
  std::vector<T> outs;
  for (std::size_t n = 0; n < N; ++n) {
    BasicTensor<T> x(spec.input_shape,
                     std::vector<T>(batch.data().begin() + n * per, batch.data().begin() + (n + 1) * per));
    Rng rng = Rng::stream(seed, n);
    r.caches.push_back(forward_sample(spec, params, x, mode, rng));
    const auto& o = r.caches.back().output();
    outs.insert(outs.end(), o.data().begin(), o.data().end());
  }
  const std::size_t out_len = outs.size() / N;
  r.outputs = BasicTensor<T>({N, out_len}, std::move(outs));
  return r;
}

/// Gradients of sum_n <grad_out[n], output[n]> w.r.t. every parameter;
/// per-sample contributions are reduced in sample index order.
template <typename T>
ParamSet<T> network_backward(const NetworkSpec& spec, const ParamSet<T>& params, const BatchForward<T>& fwd,
                             const BasicTensor<T>& grad_out) {
  if (grad_out.shape() != fwd.outputs.shape()) throw ShapeError("network backward: grad shape mismatch");
  ParamSet<T> grads = zeros_like(params);
  const std::size_t out_len = fwd.outputs.dim(1);
  for (std::size_t n = 0; n < fwd.caches.size(); ++n) {
    const auto& cache = fwd.caches[n];
    BasicTensor<T> g(cache.output().shape(),
                     std::vector<T>(grad_out.data().begin() + n * out_len, grad_out.data().begin() + (n + 1) * out_len));
    backward_sample(spec, params, cache, std::move(g), spec.layers.size(), grads);
  }
  return grads;
}

}  // namespace roadinspect::nn
