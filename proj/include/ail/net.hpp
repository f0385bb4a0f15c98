#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ail/matrix.hpp"
#include "ail/rng.hpp"

namespace ail {

// ---------------------------------------------------------------------------
// Small dense feedforward nets with hand-written forward/backward passes.
// Hidden activation is relu, the output layer is linear, everything is
// double precision. Policy, critic and discriminator all share this.
// ---------------------------------------------------------------------------

struct DenseNet {
  std::vector<int> widths;           // input, hidden..., output
  std::vector<Matrix> weights;       // weights[k]: widths[k+1] x widths[k]
  std::vector<std::vector<double>> biases;

  int input_dim() const { return widths.front(); }
  int output_dim() const { return widths.back(); }
  int num_layers() const { return static_cast<int>(weights.size()); }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& w : weights) n += w.data.size();
    for (const auto& b : biases) n += b.size();
    return n;
  }
};

struct ForwardCache {
  Matrix input;                 // n x in
  std::vector<Matrix> pre;      // pre-activations per layer, n x widths[k+1]
  std::vector<Matrix> act;      // post-activations per layer (last is the linear output)
};

struct GradBundle {
  std::vector<Matrix> dweights;
  std::vector<std::vector<double>> dbiases;
  Matrix dinput;                // n x in, per-sample input gradients

  static GradBundle zeros_like(const DenseNet& net, int batch) {
    GradBundle g;
    g.dweights.reserve(net.weights.size());
    g.dbiases.reserve(net.biases.size());
    for (const auto& w : net.weights) g.dweights.emplace_back(w.rows, w.cols);
    for (const auto& b : net.biases) g.dbiases.emplace_back(b.size(), 0.0);
    g.dinput = Matrix(batch, net.input_dim());
    return g;
  }

  void add_scaled(const GradBundle& o, double s) {
    for (std::size_t k = 0; k < dweights.size(); ++k)
      for (std::size_t i = 0; i < dweights[k].data.size(); ++i)
        dweights[k].data[i] += s * o.dweights[k].data[i];
    for (std::size_t k = 0; k < dbiases.size(); ++k)
      for (std::size_t i = 0; i < dbiases[k].size(); ++i) dbiases[k][i] += s * o.dbiases[k][i];
  }
};

namespace net_detail {

// Orthonormalizes the columns of g in place (modified Gram-Schmidt, run
// twice for numerical robustness). Requires rows >= cols.
inline void orthonormalize_columns(Matrix& g) {
  const int r = g.rows, c = g.cols;
  for (int pass = 0; pass < 2; ++pass) {
    for (int j = 0; j < c; ++j) {
      for (int k = 0; k < j; ++k) {
        double d = 0.0;
        for (int i = 0; i < r; ++i) d += g(i, k) * g(i, j);
        for (int i = 0; i < r; ++i) g(i, j) -= d * g(i, k);
      }
      double norm = 0.0;
      for (int i = 0; i < r; ++i) norm += g(i, j) * g(i, j);
      norm = std::sqrt(norm);
      if (norm < 1e-12) norm = 1.0;
      for (int i = 0; i < r; ++i) g(i, j) /= norm;
    }
  }
}

inline Matrix orthogonal(int out, int in, double gain, Rng& rng) {
  const bool tall = out >= in;
  Matrix g(tall ? out : in, tall ? in : out);
  for (auto& v : g.data) v = rng.normal();
  orthonormalize_columns(g);
  Matrix w(out, in);
  if (tall) {
    for (int i = 0; i < out; ++i)
      for (int j = 0; j < in; ++j) w(i, j) = gain * g(i, j);
  } else {
    for (int i = 0; i < out; ++i)
      for (int j = 0; j < in; ++j) w(i, j) = gain * g(j, i);
  }
  return w;
}

}  // namespace net_detail

// Orthogonal initialization: gain sqrt(2) on hidden layers, 0.01 on the
// output layer, zero biases. Deterministic in the seed.
inline DenseNet init_net(const std::vector<int>& widths, std::uint64_t seed) {
  if (widths.size() < 2) throw std::invalid_argument("init_net: need at least input and output widths");
  for (int w : widths)
    if (w < 1) throw std::invalid_argument("init_net: widths must be >= 1");
  DenseNet net;
  net.widths = widths;
  Rng rng(seed);
  const int layers = static_cast<int>(widths.size()) - 1;
  for (int k = 0; k < layers; ++k) {
    const double gain = (k == layers - 1) ? 0.01 : std::sqrt(2.0);
    net.weights.push_back(net_detail::orthogonal(widths[k + 1], widths[k], gain, rng));
    net.biases.emplace_back(widths[k + 1], 0.0);
  }
  return net;
}

inline Matrix forward(const DenseNet& net, const Matrix& inputs, ForwardCache* cache = nullptr) {
  if (inputs.cols != net.input_dim())
    throw std::invalid_argument("forward: input dim " + std::to_string(inputs.cols) +
                                " does not match net input " + std::to_string(net.input_dim()));
  const int n = inputs.rows;
  if (cache) {
    cache->input = inputs;
    cache->pre.clear();
    cache->act.clear();
  }
  Matrix a = inputs;
  const int layers = net.num_layers();
  for (int k = 0; k < layers; ++k) {
    const Matrix& w = net.weights[k];
    const auto& b = net.biases[k];
    Matrix z(n, w.rows);
    for (int i = 0; i < n; ++i) {
      const double* ai = a.row(i);
      double* zi = z.row(i);
      for (int o = 0; o < w.rows; ++o) zi[o] = dot(w.row(o), ai, w.cols) + b[o];
    }
    if (cache) cache->pre.push_back(z);
    if (k < layers - 1) {
      for (auto& v : z.data) v = v > 0.0 ? v : 0.0;
    }
    if (cache) cache->act.push_back(z);
    a = std::move(z);
  }
  return a;
}

inline std::vector<double> forward_one(const DenseNet& net, std::span<const double> x) {
  Matrix in(1, static_cast<int>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) in(0, i) = x[i];
  Matrix out = forward(net, in);
  return {out.data.begin(), out.data.end()};
}

// Backpropagates per-sample output gradients. Returns gradients of
// sum_i <output_grads_i, out_i> with respect to parameters and inputs;
// callers fold any 1/batch factors into output_grads.
inline GradBundle backward(const DenseNet& net, const ForwardCache& cache, const Matrix& output_grads) {
  const int layers = net.num_layers();
  if (output_grads.cols != net.output_dim() || output_grads.rows != cache.input.rows)
    throw std::invalid_argument("backward: output_grads shape mismatch");
  const int n = output_grads.rows;
  GradBundle g = GradBundle::zeros_like(net, n);

  Matrix delta = output_grads;
  for (int k = layers - 1; k >= 0; --k) {
    const Matrix& w = net.weights[k];
    const Matrix& prev_act = (k == 0) ? cache.input : cache.act[k - 1];
    Matrix& dw = g.dweights[k];
    auto& db = g.dbiases[k];
    for (int i = 0; i < n; ++i) {
      const double* di = delta.row(i);
      const double* pi = prev_act.row(i);
      for (int o = 0; o < w.rows; ++o) {
        const double d = di[o];
        if (d == 0.0) continue;
        double* dwo = dw.row(o);
        for (int j = 0; j < w.cols; ++j) dwo[j] += d * pi[j];
        db[o] += d;
      }
    }
    Matrix dprev(n, w.cols);
    for (int i = 0; i < n; ++i) {
      const double* di = delta.row(i);
      double* dpi = dprev.row(i);
      for (int o = 0; o < w.rows; ++o) {
        const double d = di[o];
        if (d == 0.0) continue;
        const double* wo = w.row(o);
        for (int j = 0; j < w.cols; ++j) dpi[j] += d * wo[j];
      }
    }
    if (k > 0) {
      const Matrix& z = cache.pre[k - 1];
      for (std::size_t i = 0; i < dprev.data.size(); ++i)
        if (z.data[i] <= 0.0) dprev.data[i] = 0.0;
    }
    if (k == 0)
      g.dinput = std::move(dprev);
    else
      delta = std::move(dprev);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Adam with global-norm gradient clipping.
// ---------------------------------------------------------------------------

struct AdamState {
  std::vector<Matrix> m_w, v_w;
  std::vector<std::vector<double>> m_b, v_b;
  std::int64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline AdamState init_adam(const DenseNet& net, double lr) {
  AdamState s;
  s.lr = lr;
  for (const auto& w : net.weights) {
    s.m_w.emplace_back(w.rows, w.cols);
    s.v_w.emplace_back(w.rows, w.cols);
  }
  for (const auto& b : net.biases) {
    s.m_b.emplace_back(b.size(), 0.0);
    s.v_b.emplace_back(b.size(), 0.0);
  }
  return s;
}

inline double global_grad_norm(const GradBundle& g) {
  double sq = 0.0;
  for (const auto& w : g.dweights)
    for (double v : w.data) sq += v * v;
  for (const auto& b : g.dbiases)
    for (double v : b) sq += v * v;
  return std::sqrt(sq);
}

// Scales all gradients so the global norm is at most max_norm.
inline void clip_global_norm(GradBundle& g, double max_norm) {
  const double norm = global_grad_norm(g);
  if (norm <= max_norm || norm == 0.0) return;
  const double s = max_norm / norm;
  for (auto& w : g.dweights)
    for (double& v : w.data) v *= s;
  for (auto& b : g.dbiases)
    for (double& v : b) v *= s;
}

inline void adam_step(DenseNet& net, AdamState& adam, GradBundle grads, double max_grad_norm) {
  clip_global_norm(grads, max_grad_norm);
  adam.step += 1;
  const double bc1 = 1.0 - std::pow(adam.beta1, static_cast<double>(adam.step));
  const double bc2 = 1.0 - std::pow(adam.beta2, static_cast<double>(adam.step));
  auto update = [&](double& param, double& m, double& v, double g) {
    m = adam.beta1 * m + (1.0 - adam.beta1) * g;
    v = adam.beta2 * v + (1.0 - adam.beta2) * g * g;
    const double mhat = m / bc1;
    const double vhat = v / bc2;
    param -= adam.lr * mhat / (std::sqrt(vhat) + adam.eps);
  };
  for (std::size_t k = 0; k < net.weights.size(); ++k) {
    auto& w = net.weights[k];
    for (std::size_t i = 0; i < w.data.size(); ++i)
      update(w.data[i], adam.m_w[k].data[i], adam.v_w[k].data[i], grads.dweights[k].data[i]);
    auto& b = net.biases[k];
    for (std::size_t i = 0; i < b.size(); ++i)
      update(b[i], adam.m_b[k][i], adam.v_b[k][i], grads.dbiases[k][i]);
  }
}

// ---------------------------------------------------------------------------
// Checkpointing. JSON container, lossless for 64-bit floats.
// ---------------------------------------------------------------------------

inline nlohmann::json net_to_json(const DenseNet& net) {
  nlohmann::json j;
  j["format"] = "ail-net";
  j["version"] = 1;
  j["widths"] = net.widths;
  std::vector<double> flat;
  flat.reserve(net.param_count());
  for (std::size_t k = 0; k < net.weights.size(); ++k) {
    flat.insert(flat.end(), net.weights[k].data.begin(), net.weights[k].data.end());
    flat.insert(flat.end(), net.biases[k].begin(), net.biases[k].end());
  }
  j["params"] = flat;
  return j;
}

inline DenseNet net_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "ail-net" || j.value("version", 0) != 1)
    throw std::runtime_error("net_from_json: not a version-1 ail-net checkpoint");
  DenseNet net;
  net.widths = j.at("widths").get<std::vector<int>>();
  const auto flat = j.at("params").get<std::vector<double>>();
  std::size_t pos = 0;
  for (std::size_t k = 0; k + 1 < net.widths.size(); ++k) {
    Matrix w(net.widths[k + 1], net.widths[k]);
    for (auto& v : w.data) v = flat.at(pos++);
    net.weights.push_back(std::move(w));
    std::vector<double> b(net.widths[k + 1]);
    for (auto& v : b) v = flat.at(pos++);
    net.biases.push_back(std::move(b));
  }
  if (pos != flat.size()) throw std::runtime_error("net_from_json: parameter count mismatch");
  return net;
}

}  // namespace ail
