// Copyright 2026 The lunatc Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lunatc/error.hpp"
#include "lunatc/rng.hpp"

namespace lunatc::nn {

using Vector = std::vector<double>;

// Fully connected layer, weights row-major [out][in].
struct Dense {
  std::size_t in = 0;
  std::size_t out = 0;
  Vector weights;
  Vector biases;

  bool operator==(const Dense&) const = default;
};

struct Gradients {
  std::vector<Vector> weights;
  std::vector<Vector> biases;

  void scale(double s) {
    for (auto& w : weights) for (double& x : w) x *= s;
    for (auto& b : biases) for (double& x : b) x *= s;
  }
};

// Activations recorded by a forward pass, needed for backprop. `values[0]` is
// the input; `values[k]` the post-activation output of layer k-1.
struct Tape {
  std::vector<Vector> values;
};

// Multi-layer perceptron: ReLU on hidden layers, identity on the output.
class Mlp {
 public:
  Mlp() = default;

  // dims = {input, hidden..., output}. Weights and biases drawn uniformly from
  // [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  Mlp(const std::vector<std::size_t>& dims, Rng& rng) {
    if (dims.size() < 2) throw InvalidArgument("an MLP needs at least two dims");
    for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
      Dense layer{dims[k], dims[k + 1], Vector(dims[k] * dims[k + 1]),
                  Vector(dims[k + 1])};
      const double bound = 1.0 / std::sqrt(static_cast<double>(dims[k]));
      for (double& w : layer.weights) w = rng.uniform(-bound, bound);
      for (double& b : layer.biases) b = rng.uniform(-bound, bound);
      layers_.push_back(std::move(layer));
    }
  }

  explicit Mlp(std::vector<Dense> layers) : layers_(std::move(layers)) {
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      const auto& l = layers_[k];
      if (l.weights.size() != l.in * l.out || l.biases.size() != l.out ||
          (k > 0 && layers_[k - 1].out != l.in)) {
        throw DimensionMismatch("inconsistent layer shapes at layer " +
                                std::to_string(k));
      }
    }
  }

  std::size_t input_dim() const { return layers_.empty() ? 0 : layers_.front().in; }
  std::size_t output_dim() const { return layers_.empty() ? 0 : layers_.back().out; }
  std::vector<std::size_t> dims() const {
    std::vector<std::size_t> d;
    if (layers_.empty()) return d;
    d.push_back(layers_.front().in);
    for (const auto& l : layers_) d.push_back(l.out);
    return d;
  }
  const std::vector<Dense>& layers() const { return layers_; }
  std::vector<Dense>& layers() { return layers_; }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weights.size() + l.biases.size();
    return n;
  }

  bool operator==(const Mlp&) const = default;

  Vector forward(std::span<const double> input) const {
    check_input(input);
    Vector cur(input.begin(), input.end());
    Vector next;
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      apply(k, cur, next);
      cur.swap(next);
    }
    return cur;
  }

  Vector forward(std::span<const double> input, Tape& tape) const {
    check_input(input);
    tape.values.resize(layers_.size() + 1);
    tape.values[0].assign(input.begin(), input.end());
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      apply(k, tape.values[k], tape.values[k + 1]);
    }
    return tape.values.back();
  }

  Gradients zero_gradients() const {
    Gradients g;
    for (const auto& l : layers_) {
      g.weights.emplace_back(l.weights.size(), 0.0);
      g.biases.emplace_back(l.biases.size(), 0.0);
    }
    return g;
  }

  // Accumulates dLoss/dParams into `grads` given dLoss/dOutput for the pass
  // recorded in `tape`.
  void backward(const Tape& tape, std::span<const double> grad_output,
                Gradients& grads) const {
    Vector delta(grad_output.begin(), grad_output.end());
    Vector prev;
    for (std::size_t k = layers_.size(); k-- > 0;) {
      const Dense& l = layers_[k];
      const Vector& input = tape.values[k];
      if (k + 1 < layers_.size()) {
        // ReLU derivative on this layer's output.
        const Vector& output = tape.values[k + 1];
        for (std::size_t o = 0; o < l.out; ++o) {
          if (output[o] <= 0.0) delta[o] = 0.0;
        }
      }
      Vector& gw = grads.weights[k];
      Vector& gb = grads.biases[k];
      for (std::size_t o = 0; o < l.out; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        gb[o] += d;
        double* row = gw.data() + o * l.in;
        for (std::size_t i = 0; i < l.in; ++i) row[i] += d * input[i];
      }
      if (k == 0) break;
      prev.assign(l.in, 0.0);
      for (std::size_t o = 0; o < l.out; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        const double* row = l.weights.data() + o * l.in;
        for (std::size_t i = 0; i < l.in; ++i) prev[i] += d * row[i];
      }
      delta.swap(prev);
    }
  }

 private:
  void check_input(std::span<const double> input) const {
    if (input.size() != input_dim()) {
      throw DimensionMismatch("network expects input of size " +
                              std::to_string(input_dim()) + ", got " +
                              std::to_string(input.size()));
    }
  }

  void apply(std::size_t k, const Vector& in, Vector& out) const {
    const Dense& l = layers_[k];
    const bool hidden = k + 1 < layers_.size();
    out.resize(l.out);
    for (std::size_t o = 0; o < l.out; ++o) {
      const double* row = l.weights.data() + o * l.in;
      double s = l.biases[o];
      for (std::size_t i = 0; i < l.in; ++i) s += row[i] * in[i];
      out[o] = hidden && s < 0.0 ? 0.0 : s;
    }
  }

  std::vector<Dense> layers_;
};

// Adam with bias-corrected first and second moments.
class Adam {
 public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam() = default;
  Adam(const Mlp& net, Options options) : options_(options) {
    m_ = net.zero_gradients();
    v_ = net.zero_gradients();
  }

  const Options& options() const { return options_; }
  std::size_t steps() const { return t_; }

  void step(Mlp& net, const Gradients& g) {
    ++t_;
    const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
    auto& layers = net.layers();
    for (std::size_t k = 0; k < layers.size(); ++k) {
      update(layers[k].weights, g.weights[k], m_.weights[k], v_.weights[k], c1, c2);
      update(layers[k].biases, g.biases[k], m_.biases[k], v_.biases[k], c1, c2);
    }
  }

 private:
  void update(Vector& p, const Vector& g, Vector& m, Vector& v, double c1,
              double c2) const {
    const auto& o = options_;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g[i];
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g[i] * g[i];
      p[i] -= o.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + o.eps);
    }
  }

  Options options_;
  Gradients m_;
  Gradients v_;
  std::size_t t_ = 0;
};

inline Vector softmax(std::span<const double> logits) {
  Vector out(logits.begin(), logits.end());
  if (out.empty()) return out;
  const double mx = *std::max_element(out.begin(), out.end());
  double sum = 0.0;
  for (double& x : out) {
    x = std::exp(x - mx);
    sum += x;
  }
  for (double& x : out) x /= sum;
  return out;
}

// {"dims": [...], "weights": [[...]], "biases": [[...]]}
inline nlohmann::json to_json(const Mlp& net) {
  nlohmann::json j;
  j["dims"] = net.dims();
  j["weights"] = nlohmann::json::array();
  j["biases"] = nlohmann::json::array();
  for (const auto& l : net.layers()) {
    j["weights"].push_back(l.weights);
    j["biases"].push_back(l.biases);
  }
  return j;
}

inline Mlp mlp_from_json(const nlohmann::json& j) {
  try {
    const auto dims = j.at("dims").get<std::vector<std::size_t>>();
    const auto& weights = j.at("weights");
    const auto& biases = j.at("biases");
    if (dims.size() < 2 || weights.size() != dims.size() - 1 ||
        biases.size() != dims.size() - 1) {
      throw SchemaMismatch("checkpoint dims disagree with weight lists");
    }
    std::vector<Dense> layers;
    for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
      layers.push_back(Dense{dims[k], dims[k + 1], weights[k].get<Vector>(),
                             biases[k].get<Vector>()});
    }
    return Mlp(std::move(layers));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaMismatch(std::string("malformed network checkpoint: ") + e.what());
  } catch (const DimensionMismatch& e) {
    throw SchemaMismatch(std::string("malformed network checkpoint: ") + e.what());
  }
}

}  // namespace lunatc::nn
