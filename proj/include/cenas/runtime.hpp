// Copyright 2026 The CENAS Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CENAS_RUNTIME_HPP_
#define CENAS_RUNTIME_HPP_

#include <algorithm>
#include <atomic>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <variant>
#include <vector>

#include "cenas/dataset.hpp"
#include "cenas/error.hpp"
#include "cenas/layers.hpp"
#include "cenas/rng.hpp"
#include "cenas/tensor.hpp"

namespace cenas {

template <class T>
struct BasicLayer {
  LayerKind kind;
  std::vector<BasicTensor<T>> params;  // weight, bias (empty for pool/flatten)
  friend bool operator==(const BasicLayer&, const BasicLayer&) = default;
};

/// A network with concrete weights. The last layer is always a
/// SoftmaxClassifier and adjacent layer shapes agree.
template <class T>
struct BasicModel {
  Shape3 input;
  std::vector<BasicLayer<T>> layers;

  int numClasses() const {
    return std::get<SoftmaxClassifier>(layers.back().kind).classes;
  }
  friend bool operator==(const BasicModel&, const BasicModel&) = default;
};

using ConcreteModel = BasicModel<float>;

template <class To, class From>
BasicModel<To> modelCast(const BasicModel<From>& m) {
  BasicModel<To> out;
  out.input = m.input;
  for (const auto& l : m.layers) {
    BasicLayer<To> nl{l.kind, {}};
    for (const auto& p : l.params) nl.params.push_back(tensorCast<To>(p));
    out.layers.push_back(std::move(nl));
  }
  return out;
}

/// Per-layer input shapes, plus the final output shape at index layers.size().
inline std::vector<Shape3> shapeChain(const Shape3& input,
                                      const std::vector<LayerKind>& kinds) {
  std::vector<Shape3> shapes{input};
  for (std::size_t i = 0; i < kinds.size(); ++i)
    shapes.push_back(outputShape(kinds[i], shapes.back(), static_cast<int>(i)));
  return shapes;
}

template <class T>
std::vector<LayerKind> layerKinds(const BasicModel<T>& m) {
  std::vector<LayerKind> kinds;
  for (const auto& l : m.layers) kinds.push_back(l.kind);
  return kinds;
}

/// Verifies shape consistency and parameter shapes; throws ShapeError naming
/// the offending layer.
template <class T>
std::vector<Shape3> checkModel(const BasicModel<T>& m) {
  if (m.layers.empty() || !is<SoftmaxClassifier>(m.layers.back().kind))
    throw ShapeError(static_cast<int>(m.layers.size()) - 1, {}, {},
                     "model must end with a softmax classifier");
  auto shapes = shapeChain(m.input, layerKinds(m));
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    auto expected = paramShapes(m.layers[i].kind, shapes[i]);
    const auto& params = m.layers[i].params;
    if (params.size() != expected.size())
      throw ShapeError(static_cast<int>(i), {static_cast<int>(expected.size())},
                       {static_cast<int>(params.size())}, "parameter count");
    for (std::size_t p = 0; p < params.size(); ++p)
      if (params[p].shape != expected[p])
        throw ShapeError(static_cast<int>(i), expected[p], params[p].shape,
                         paramName(p));
  }
  return shapes;
}

template <class T>
std::size_t paramCount(const BasicModel<T>& m) {
  std::size_t n = 0;
  for (const auto& l : m.layers)
    for (const auto& p : l.params) n += p.size();
  return n;
}

/// Fresh weights: uniform He-style fan-in scaling, zero biases.
inline Tensor heUniform(const std::vector<int>& shape, int fanIn, RngStream& rng) {
  Tensor t(shape);
  const double limit = std::sqrt(6.0 / std::max(fanIn, 1));
  for (auto& v : t.data) v = static_cast<float>(rng.uniform(-limit, limit));
  return t;
}

inline int fanIn(const LayerKind& k, const Shape3& in) {
  if (auto* c = std::get_if<Conv>(&k)) return c->kernel * c->kernel * in.c;
  return static_cast<int>(in.volume());
}

inline std::vector<Tensor> freshParams(const LayerKind& k, const Shape3& in,
                                       RngStream& rng) {
  std::vector<Tensor> params;
  auto shapes = paramShapes(k, in);
  if (shapes.empty()) return params;
  params.push_back(heUniform(shapes[0], fanIn(k, in), rng));
  params.emplace_back(shapes[1], 0.0f);
  return params;
}

inline ConcreteModel initModel(const Shape3& input,
                               const std::vector<LayerKind>& kinds,
                               RngStream& rng) {
  ConcreteModel m{input, {}};
  auto shapes = shapeChain(input, kinds);
  for (std::size_t i = 0; i < kinds.size(); ++i)
    m.layers.push_back({kinds[i], freshParams(kinds[i], shapes[i], rng)});
  checkModel(m);
  return m;
}

struct OptimizerConfig {
  double learningRate = 1e-4;
  double decay = 0.9;
  double epsilon = 1e-7;
};

struct TrainConfig {
  int epochs = 0;
  int batchSize = 32;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
};

/// RMSProp second-moment accumulators, shaped like the model parameters.
template <class T>
struct BasicRmsPropState {
  std::vector<std::vector<BasicTensor<T>>> accum;
};
using RmsPropState = BasicRmsPropState<float>;

template <class T>
using Gradients = std::vector<std::vector<BasicTensor<T>>>;

namespace detail {

inline std::atomic<std::uint64_t>& backwardCounter() {
  static std::atomic<std::uint64_t> counter{0};
  return counter;
}

/// Cached forward activations for a batch. values[i] is the input of layer i
/// (values[0] is the batch itself); values[L] holds the class probabilities.
template <class T>
struct Trace {
  int n = 0;
  std::vector<Shape3> shapes;
  std::vector<std::vector<T>> values;
  std::vector<std::vector<std::uint32_t>> argmax;  // max-pool routing
  std::vector<double> logits;                      // classifier pre-softmax
};

template <class T>
void convForward(const Conv& conv, const Shape3& in, const Shape3& out,
                 const BasicTensor<T>& w, const BasicTensor<T>& b, const T* x,
                 T* y, int n) {
  const int k = conv.kernel, pad = k / 2, F = conv.filters, C = in.c;
  std::vector<double> acc(static_cast<std::size_t>(F));
  for (int s = 0; s < n; ++s) {
    const T* xs = x + static_cast<std::size_t>(s) * in.volume();
    T* ys = y + static_cast<std::size_t>(s) * out.volume();
    for (int oy = 0; oy < out.h; ++oy) {
      for (int ox = 0; ox < out.w; ++ox) {
        for (int f = 0; f < F; ++f) acc[f] = static_cast<double>(b.data[f]);
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy + ky - pad;
          if (iy < 0 || iy >= in.h) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox + kx - pad;
            if (ix < 0 || ix >= in.w) continue;
            const T* px = xs + (static_cast<std::size_t>(iy) * in.w + ix) * C;
            const T* wk = w.data.data() + static_cast<std::size_t>(ky * k + kx) * C * F;
            for (int c = 0; c < C; ++c) {
              const double v = static_cast<double>(px[c]);
              if (v == 0.0) continue;
              const T* wr = wk + static_cast<std::size_t>(c) * F;
              for (int f = 0; f < F; ++f) acc[f] += v * static_cast<double>(wr[f]);
            }
          }
        }
        T* py = ys + (static_cast<std::size_t>(oy) * out.w + ox) * F;
        for (int f = 0; f < F; ++f) py[f] = static_cast<T>(acc[f] > 0.0 ? acc[f] : 0.0);
      }
    }
  }
}

template <class T>
void convBackward(const Conv& conv, const Shape3& in, const Shape3& out,
                  const BasicTensor<T>& w, const T* x, const T* y, const double* dy,
                  double* dw, double* db, double* dx, int n) {
  const int k = conv.kernel, pad = k / 2, F = conv.filters, C = in.c;
  std::vector<double> dz(static_cast<std::size_t>(F));
  for (int s = 0; s < n; ++s) {
    const T* xs = x + static_cast<std::size_t>(s) * in.volume();
    const T* ys = y + static_cast<std::size_t>(s) * out.volume();
    const double* dys = dy + static_cast<std::size_t>(s) * out.volume();
    double* dxs = dx ? dx + static_cast<std::size_t>(s) * in.volume() : nullptr;
    for (int oy = 0; oy < out.h; ++oy) {
      for (int ox = 0; ox < out.w; ++ox) {
        const std::size_t o = (static_cast<std::size_t>(oy) * out.w + ox) * F;
        bool any = false;
        for (int f = 0; f < F; ++f) {
          dz[f] = ys[o + f] > T(0) ? dys[o + f] : 0.0;
          any = any || dz[f] != 0.0;
        }
        if (!any) continue;
        for (int f = 0; f < F; ++f) db[f] += dz[f];
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy + ky - pad;
          if (iy < 0 || iy >= in.h) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox + kx - pad;
            if (ix < 0 || ix >= in.w) continue;
            const std::size_t ip = (static_cast<std::size_t>(iy) * in.w + ix) * C;
            const std::size_t wk = static_cast<std::size_t>(ky * k + kx) * C * F;
            for (int c = 0; c < C; ++c) {
              const double v = static_cast<double>(xs[ip + c]);
              const T* wr = w.data.data() + wk + static_cast<std::size_t>(c) * F;
              double* dwr = dw + wk + static_cast<std::size_t>(c) * F;
              double g = 0.0;
              for (int f = 0; f < F; ++f) {
                dwr[f] += v * dz[f];
                g += static_cast<double>(wr[f]) * dz[f];
              }
              if (dxs) dxs[ip + c] += g;
            }
          }
        }
      }
    }
  }
}

template <class T>
void poolForward(const MaxPool& pool, const Shape3& in, const Shape3& out,
                 const T* x, T* y, std::uint32_t* arg, int n) {
  const int win = pool.window, C = in.c;
  for (int s = 0; s < n; ++s) {
    const T* xs = x + static_cast<std::size_t>(s) * in.volume();
    T* ys = y + static_cast<std::size_t>(s) * out.volume();
    std::uint32_t* as = arg + static_cast<std::size_t>(s) * out.volume();
    for (int oy = 0; oy < out.h; ++oy)
      for (int ox = 0; ox < out.w; ++ox)
        for (int c = 0; c < C; ++c) {
          std::uint32_t best = 0;
          T bestV = -std::numeric_limits<T>::infinity();
          for (int dy = 0; dy < win; ++dy)
            for (int dx = 0; dx < win; ++dx) {
              const std::uint32_t idx = static_cast<std::uint32_t>(
                  ((oy * win + dy) * in.w + (ox * win + dx)) * C + c);
              if (xs[idx] > bestV) {
                bestV = xs[idx];
                best = idx;
              }
            }
          const std::size_t o = (static_cast<std::size_t>(oy) * out.w + ox) * C + c;
          ys[o] = bestV;
          as[o] = best;
        }
  }
}

// Dense forward into double pre-activations z (size n * units).
template <class T>
void denseForward(int inDim, int units, const BasicTensor<T>& w,
                  const BasicTensor<T>& b, const T* x, double* z, int n) {
  for (int s = 0; s < n; ++s) {
    const T* xs = x + static_cast<std::size_t>(s) * inDim;
    double* zs = z + static_cast<std::size_t>(s) * units;
    for (int u = 0; u < units; ++u) zs[u] = static_cast<double>(b.data[u]);
    for (int i = 0; i < inDim; ++i) {
      const double v = static_cast<double>(xs[i]);
      if (v == 0.0) continue;
      const T* wr = w.data.data() + static_cast<std::size_t>(i) * units;
      for (int u = 0; u < units; ++u) zs[u] += v * static_cast<double>(wr[u]);
    }
  }
}

template <class T>
void denseBackward(int inDim, int units, const BasicTensor<T>& w, const T* x,
                   const double* dz, double* dw, double* db, double* dx, int n) {
  for (int s = 0; s < n; ++s) {
    const T* xs = x + static_cast<std::size_t>(s) * inDim;
    const double* dzs = dz + static_cast<std::size_t>(s) * units;
    double* dxs = dx ? dx + static_cast<std::size_t>(s) * inDim : nullptr;
    for (int u = 0; u < units; ++u) db[u] += dzs[u];
    for (int i = 0; i < inDim; ++i) {
      const double v = static_cast<double>(xs[i]);
      const T* wr = w.data.data() + static_cast<std::size_t>(i) * units;
      double* dwr = dw + static_cast<std::size_t>(i) * units;
      double g = 0.0;
      for (int u = 0; u < units; ++u) {
        if (v != 0.0) dwr[u] += v * dzs[u];
        g += static_cast<double>(wr[u]) * dzs[u];
      }
      if (dxs) dxs[i] = g;
    }
  }
}

inline void softmaxRows(const double* logits, double* probs, int n, int classes) {
  for (int s = 0; s < n; ++s) {
    const double* z = logits + static_cast<std::size_t>(s) * classes;
    double* p = probs + static_cast<std::size_t>(s) * classes;
    double mx = *std::max_element(z, z + classes);
    double sum = 0.0;
    for (int c = 0; c < classes; ++c) sum += (p[c] = std::exp(z[c] - mx));
    for (int c = 0; c < classes; ++c) p[c] /= sum;
  }
}

/// Runs the network over `n` samples stored contiguously at `x`.
template <class T>
Trace<T> trace(const BasicModel<T>& m, const std::vector<Shape3>& shapes,
               const T* x, int n) {
  Trace<T> tr;
  tr.n = n;
  tr.shapes = shapes;
  const std::size_t L = m.layers.size();
  tr.values.resize(L + 1);
  tr.argmax.resize(L);
  tr.values[0].assign(x, x + static_cast<std::size_t>(n) * shapes[0].volume());
  for (std::size_t i = 0; i < L; ++i) {
    const auto& layer = m.layers[i];
    const Shape3& in = shapes[i];
    const Shape3& out = shapes[i + 1];
    auto& y = tr.values[i + 1];
    const auto& xin = tr.values[i];
    y.resize(static_cast<std::size_t>(n) * out.volume());
    if (auto* c = std::get_if<Conv>(&layer.kind)) {
      convForward(*c, in, out, layer.params[0], layer.params[1], xin.data(), y.data(), n);
    } else if (auto* p = std::get_if<MaxPool>(&layer.kind)) {
      tr.argmax[i].resize(y.size());
      poolForward(*p, in, out, xin.data(), y.data(), tr.argmax[i].data(), n);
    } else if (is<Flatten>(layer.kind)) {
      y = xin;
    } else {
      const int inDim = static_cast<int>(in.volume()), units = out.c;
      std::vector<double> z(y.size());
      denseForward(inDim, units, layer.params[0], layer.params[1], xin.data(), z.data(), n);
      if (is<Dense>(layer.kind)) {
        for (std::size_t j = 0; j < z.size(); ++j) y[j] = static_cast<T>(z[j] > 0.0 ? z[j] : 0.0);
      } else {
        std::vector<double> probs(z.size());
        softmaxRows(z.data(), probs.data(), n, units);
        for (std::size_t j = 0; j < z.size(); ++j) y[j] = static_cast<T>(probs[j]);
        tr.logits = std::move(z);
      }
    }
  }
  return tr;
}

template <class T>
double crossEntropy(const Trace<T>& tr, const std::vector<int>& labels, int classes) {
  double total = 0.0;
  for (int s = 0; s < tr.n; ++s) {
    const double* z = tr.logits.data() + static_cast<std::size_t>(s) * classes;
    double mx = *std::max_element(z, z + classes);
    double sum = 0.0;
    for (int c = 0; c < classes; ++c) sum += std::exp(z[c] - mx);
    total += std::log(sum) + mx - z[labels[s]];
  }
  return total / tr.n;
}

/// Backpropagates mean cross-entropy through a trace. Gradients are
/// accumulated in double and returned per layer/param.
template <class T>
std::vector<std::vector<std::vector<double>>> backprop(const BasicModel<T>& m,
                                                       const Trace<T>& tr,
                                                       const std::vector<int>& labels) {
  const std::size_t L = m.layers.size();
  const int n = tr.n;
  const int classes = tr.shapes[L].c;
  std::vector<std::vector<std::vector<double>>> grads(L);
  for (std::size_t i = 0; i < L; ++i)
    for (const auto& p : m.layers[i].params) grads[i].emplace_back(p.size(), 0.0);

  // d(loss)/d(logits) = (p - onehot) / n
  std::vector<double> delta(static_cast<std::size_t>(n) * classes);
  softmaxRows(tr.logits.data(), delta.data(), n, classes);
  for (int s = 0; s < n; ++s) delta[static_cast<std::size_t>(s) * classes + labels[s]] -= 1.0;
  for (auto& d : delta) d /= n;

  for (std::size_t ii = L; ii-- > 0;) {
    const auto& layer = m.layers[ii];
    const Shape3& in = tr.shapes[ii];
    const Shape3& out = tr.shapes[ii + 1];
    const bool needInput = ii > 0;
    std::vector<double> dx(needInput ? static_cast<std::size_t>(n) * in.volume() : 0, 0.0);
    if (auto* c = std::get_if<Conv>(&layer.kind)) {
      convBackward(*c, in, out, layer.params[0], tr.values[ii].data(),
                   tr.values[ii + 1].data(), delta.data(), grads[ii][0].data(),
                   grads[ii][1].data(), needInput ? dx.data() : nullptr, n);
    } else if (is<MaxPool>(layer.kind)) {
      if (needInput) {
        for (int s = 0; s < n; ++s) {
          const std::size_t ob = static_cast<std::size_t>(s) * out.volume();
          const std::size_t ib = static_cast<std::size_t>(s) * in.volume();
          for (std::size_t o = 0; o < out.volume(); ++o)
            dx[ib + tr.argmax[ii][ob + o]] += delta[ob + o];
        }
      }
    } else if (is<Flatten>(layer.kind)) {
      dx = delta;
    } else {
      std::vector<double> dz = delta;
      if (is<Dense>(layer.kind)) {
        const auto& y = tr.values[ii + 1];
        for (std::size_t j = 0; j < dz.size(); ++j)
          if (!(y[j] > T(0))) dz[j] = 0.0;
      }
      denseBackward(static_cast<int>(in.volume()), out.c, layer.params[0],
                    tr.values[ii].data(), dz.data(), grads[ii][0].data(),
                    grads[ii][1].data(), needInput ? dx.data() : nullptr, n);
    }
    delta = std::move(dx);
  }
  return grads;
}

template <class T>
void checkBatch(const BasicModel<T>& m, const BasicTensor<T>& batch) {
  const int n = batch.rank() > 0 ? std::max(1, batch.dim(0)) : 1;
  const std::vector<int> expected{n, m.input.h, m.input.w, m.input.c};
  if (batch.rank() != 4 || batch.dim(1) != m.input.h || batch.dim(2) != m.input.w ||
      batch.dim(3) != m.input.c || batch.dim(0) < 1)
    throw ShapeError(0, expected, batch.shape, "input batch [N, H, W, C]");
}

template <class T>
void checkLabels(const std::vector<int>& labels, std::size_t n, int classes) {
  if (labels.size() != n)
    throw DataError("label count " + std::to_string(labels.size()) +
                    " does not match batch size " + std::to_string(n));
  for (int l : labels)
    if (l < 0 || l >= classes)
      throw DataError("label " + std::to_string(l) + " exceeds classifier width " +
                      std::to_string(classes));
}

template <class T>
int firstNonFiniteLayer(const Trace<T>& tr) {
  for (std::size_t i = 1; i < tr.values.size(); ++i)
    for (T v : tr.values[i])
      if (!std::isfinite(v)) return static_cast<int>(i) - 1;
  for (double v : tr.logits)
    if (!std::isfinite(v)) return static_cast<int>(tr.values.size()) - 2;
  return -1;
}

/// One RMSProp update in place. Returns the batch loss.
template <class T>
double rmsPropStep(BasicModel<T>& m, const std::vector<Shape3>& shapes,
                   BasicRmsPropState<T>& state, const T* x,
                   const std::vector<int>& labels, const OptimizerConfig& opt,
                   std::size_t batchIndex) {
  const int n = static_cast<int>(labels.size());
  auto tr = trace(m, shapes, x, n);
  const double loss = crossEntropy(tr, labels, shapes.back().c);
  if (!std::isfinite(loss)) throw NonFiniteError(batchIndex, firstNonFiniteLayer(tr));
  auto grads = backprop(m, tr, labels);
  backwardCounter().fetch_add(1, std::memory_order_relaxed);
  if (state.accum.size() != m.layers.size()) {
    state.accum.clear();
    for (const auto& l : m.layers) {
      state.accum.emplace_back();
      for (const auto& p : l.params) state.accum.back().emplace_back(p.shape, T(0));
    }
  }
  const double rho = opt.decay, lr = opt.learningRate, eps = opt.epsilon;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    for (std::size_t p = 0; p < m.layers[i].params.size(); ++p) {
      auto& w = m.layers[i].params[p].data;
      auto& a = state.accum[i][p].data;
      const auto& g = grads[i][p];
      for (std::size_t j = 0; j < w.size(); ++j) {
        const double acc = rho * static_cast<double>(a[j]) + (1.0 - rho) * g[j] * g[j];
        a[j] = static_cast<T>(acc);
        w[j] = static_cast<T>(static_cast<double>(w[j]) - lr * g[j] / (std::sqrt(acc) + eps));
      }
    }
  }
#ifndef NDEBUG
  for (const auto& l : m.layers)
    for (const auto& p : l.params) assert(allFinite(p));
#endif
  return loss;
}

}  // namespace detail

/// Number of optimizer steps taken by this process (all threads).
inline std::uint64_t backwardStepCount() {
  return detail::backwardCounter().load(std::memory_order_relaxed);
}

/// Class probabilities [N, classes] for a batch [N, H, W, C].
template <class T>
BasicTensor<T> forward(const BasicModel<T>& m, const BasicTensor<T>& batch) {
  auto shapes = checkModel(m);
  detail::checkBatch(m, batch);
  const int n = batch.dim(0);
  const int classes = shapes.back().c;
  BasicTensor<T> out({n, classes});
  const std::size_t vol = m.input.volume();
  constexpr int kChunk = 64;
  for (int s = 0; s < n; s += kChunk) {
    const int k = std::min(kChunk, n - s);
    auto tr = detail::trace(m, shapes, batch.data.data() + static_cast<std::size_t>(s) * vol, k);
    std::copy(tr.values.back().begin(), tr.values.back().end(),
              out.data.begin() + static_cast<std::ptrdiff_t>(s) * classes);
  }
#ifndef NDEBUG
  if (allFinite(batch)) assert(allFinite(out));
#endif
  return out;
}

/// Mean cross-entropy and its gradient with respect to every parameter.
template <class T>
std::pair<double, Gradients<T>> lossAndGradients(const BasicModel<T>& m,
                                                 const BasicTensor<T>& batch,
                                                 const std::vector<int>& labels) {
  auto shapes = checkModel(m);
  detail::checkBatch(m, batch);
  detail::checkLabels<T>(labels, static_cast<std::size_t>(batch.dim(0)), shapes.back().c);
  auto tr = detail::trace(m, shapes, batch.data.data(), batch.dim(0));
  const double loss = detail::crossEntropy(tr, labels, shapes.back().c);
  auto raw = detail::backprop(m, tr, labels);
  Gradients<T> grads(m.layers.size());
  for (std::size_t i = 0; i < raw.size(); ++i)
    for (std::size_t p = 0; p < raw[i].size(); ++p)
      grads[i].emplace_back(m.layers[i].params[p].shape,
                            std::vector<T>(raw[i][p].begin(), raw[i][p].end()));
  return {loss, std::move(grads)};
}

/// Mean cross-entropy of the model on a batch, without gradients.
template <class T>
double loss(const BasicModel<T>& m, const BasicTensor<T>& batch,
            const std::vector<int>& labels) {
  auto shapes = checkModel(m);
  detail::checkBatch(m, batch);
  detail::checkLabels<T>(labels, static_cast<std::size_t>(batch.dim(0)), shapes.back().c);
  auto tr = detail::trace(m, shapes, batch.data.data(), batch.dim(0));
  return detail::crossEntropy(tr, labels, shapes.back().c);
}

struct StepResult {
  ConcreteModel model;
  RmsPropState state;
  double loss = 0.0;
};

/// One RMSProp step on a batch, returning the updated model and state.
inline StepResult backwardStep(ConcreteModel model, const Tensor& batch,
                               const std::vector<int>& labels, RmsPropState state,
                               double lr, OptimizerConfig opt = {},
                               std::size_t batchIndex = 0) {
  auto shapes = checkModel(model);
  detail::checkBatch(model, batch);
  detail::checkLabels<float>(labels, static_cast<std::size_t>(batch.dim(0)),
                             shapes.back().c);
  if (!(lr >= 0.0)) throw ConfigError("learning rate must be non-negative");
  opt.learningRate = lr;
  double l = detail::rmsPropStep(model, shapes, state, batch.data.data(), labels,
                                 opt, batchIndex);
  return {std::move(model), std::move(state), l};
}

/// Mini-batch RMSProp training. The shuffle order is a pure function of
/// cfg.seed, so equal seeds give bitwise-equal weights.
inline ConcreteModel train(ConcreteModel model, const LabeledDataset& data,
                           const TrainConfig& cfg) {
  if (cfg.epochs < 0) throw ConfigError("epochs must be non-negative");
  if (cfg.batchSize < 1) throw ConfigError("batch size must be positive");
  if (data.size() == 0) throw DataError("training set is empty");
  auto shapes = checkModel(model);
  if (data.height() != model.input.h || data.width() != model.input.w ||
      data.channels() != model.input.c)
    throw ShapeError(0, model.input.dims(),
                     {data.height(), data.width(), data.channels()}, "training images");
  detail::checkLabels<float>(data.labels, data.size(), shapes.back().c);
  if (cfg.epochs == 0) return model;

  RngStream rng(cfg.seed);
  RmsPropState state;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t batchIndex = 0;
  for (int e = 0; e < cfg.epochs; ++e) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    for (std::size_t s = 0; s < order.size(); s += static_cast<std::size_t>(cfg.batchSize)) {
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(s),
                                   order.begin() + static_cast<std::ptrdiff_t>(std::min(
                                       order.size(), s + static_cast<std::size_t>(cfg.batchSize))));
      Tensor batch = data.gather(idx);
      detail::rmsPropStep(model, shapes, state, batch.data.data(), data.gatherLabels(idx),
                          cfg.optimizer, batchIndex++);
    }
  }
  return model;
}

/// Argmax class per image.
inline std::vector<int> predict(const ConcreteModel& m, const Tensor& images) {
  Tensor probs = forward(m, images);
  const int classes = probs.dim(1);
  std::vector<int> out(static_cast<std::size_t>(probs.dim(0)));
  for (std::size_t s = 0; s < out.size(); ++s) {
    auto first = probs.data.begin() + static_cast<std::ptrdiff_t>(s * classes);
    out[s] = static_cast<int>(std::max_element(first, first + classes) - first);
  }
  return out;
}

/// Accuracy of the model on each class of the dataset (NaN for classes with
/// no samples).
inline std::vector<double> perClassAccuracy(const ConcreteModel& m,
                                            const LabeledDataset& data) {
  auto pred = predict(m, data.images);
  std::vector<double> hit(static_cast<std::size_t>(data.numClasses()), 0.0);
  std::vector<double> total(hit.size(), 0.0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    total[data.labels[i]] += 1.0;
    if (pred[i] == data.labels[i]) hit[data.labels[i]] += 1.0;
  }
  for (std::size_t c = 0; c < hit.size(); ++c)
    hit[c] = total[c] > 0 ? hit[c] / total[c] : std::numeric_limits<double>::quiet_NaN();
  return hit;
}

inline double accuracy(const ConcreteModel& m, const LabeledDataset& data) {
  auto pred = predict(m, data.images);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == data.labels[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

}  // namespace cenas

#endif  // CENAS_RUNTIME_HPP_
