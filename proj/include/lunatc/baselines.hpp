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
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lunatc/corpus.hpp"
#include "lunatc/env.hpp"
#include "lunatc/error.hpp"
#include "lunatc/nn.hpp"
#include "lunatc/oracle.hpp"
#include "lunatc/perturb.hpp"
#include "lunatc/rng.hpp"
#include "lunatc/vectors.hpp"

namespace lunatc {

// Per-position importance of a text, one entry per token.
using ImportanceVector = std::vector<double>;

using ImportanceFn = std::function<ImportanceVector(
    const TokenizedText&, const ClassifierHandle&, const SearchSpace&, QueryTally*)>;

// Replacement token for saliency probes. It must stay out of every vocabulary;
// importance_pwws checks the synonym store.
inline constexpr std::string_view kOovMarker = "qxoovmarkerqx";

// Random order over the positions that are legal on the original text.
inline AttackOutcome simple_search_attack(const TokenizedText& t,
                                          const ClassifierHandle& oracle,
                                          const SearchSpace& space, Rng& rng) {
  auto ordering = legal_actions(t, {}, space);
  rng.shuffle(ordering);
  AttackOutcome out = rollout(ordering, t, oracle, space);
  out.method = "simple-search";
  return out;
}

// Deletion importance: I_i = m(t) - m(t without token i), margins taken w.r.t.
// the prediction on t. n + 1 logit queries.
inline ImportanceVector importance_tf(const TokenizedText& t, const ClassifierHandle& oracle,
                                      QueryTally* tally = nullptr) {
  if (t.empty()) return {};
  std::vector<TokenizedText> probes;
  probes.reserve(t.size() + 1);
  probes.push_back(t);
  for (std::size_t i = 0; i < t.size(); ++i) {
    TokenizedText d = t;
    d.tokens.erase(d.tokens.begin() + static_cast<std::ptrdiff_t>(i));
    probes.push_back(std::move(d));
  }
  const auto logits = oracle.predict_logits(probes, tally);
  const ClassIndex y = argmax(logits[0]);
  const double base = margin_of(logits[0], y);
  ImportanceVector out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = base - margin_of(logits[i + 1], y);
  return out;
}

// Saliency-weighted best synonym effect:
//   s_i = m(t) - m(t with token i -> OOV marker)
//   D_i = max over admissible synonym candidates of m(t) - m(candidate), 0 if none
//   I_i = softmax(s)_i * D_i
inline ImportanceVector importance_pwws(const TokenizedText& t, const ClassifierHandle& oracle,
                                        const SearchSpace& space, QueryTally* tally = nullptr) {
  if (t.empty()) return {};
  if (space.synonym_store().contains(kOovMarker)) {
    throw InvalidArgument("the OOV marker is present in the synonym store");
  }
  std::vector<TokenizedText> probes;
  probes.push_back(t);
  for (std::size_t i = 0; i < t.size(); ++i) {
    TokenizedText d = t;
    d.tokens[i] = std::string(kOovMarker);
    probes.push_back(std::move(d));
  }
  std::vector<std::pair<std::size_t, std::size_t>> ranges(t.size(), {0, 0});
  for (std::size_t i = 0; i < t.size(); ++i) {
    ranges[i].first = probes.size();
    if (space.replaceable(t, i)) {
      for (auto& c : synonym_candidates(t, i, space)) probes.push_back(std::move(c.text));
    }
    ranges[i].second = probes.size();
  }
  const auto logits = oracle.predict_logits(probes, tally);
  const ClassIndex y = argmax(logits[0]);
  const double base = margin_of(logits[0], y);
  std::vector<double> saliency(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) saliency[i] = base - margin_of(logits[i + 1], y);
  const auto weights = nn::softmax(saliency);
  ImportanceVector out(t.size(), 0.0);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto [lo, hi] = ranges[i];
    if (lo == hi) continue;
    double best = -INFINITY;
    for (std::size_t k = lo; k < hi; ++k) best = std::max(best, base - margin_of(logits[k], y));
    out[i] = weights[i] * best;
  }
  return out;
}

inline ImportanceFn tf_importance() {
  return [](const TokenizedText& t, const ClassifierHandle& o, const SearchSpace&,
            QueryTally* tally) { return importance_tf(t, o, tally); };
}

inline ImportanceFn pwws_importance() {
  return [](const TokenizedText& t, const ClassifierHandle& o, const SearchSpace& s,
            QueryTally* tally) { return importance_pwws(t, o, s, tally); };
}

// Legal positions by decreasing score, ties to the lower position. Positions
// without a score rank last.
inline std::vector<std::size_t> order_by_importance(const TokenizedText& t,
                                                    std::span<const double> importance,
                                                    const SearchSpace& space) {
  auto ordering = legal_actions(t, {}, space);
  auto score = [&](std::size_t p) {
    return p < importance.size() ? importance[p] : -INFINITY;
  };
  std::stable_sort(ordering.begin(), ordering.end(), [&](std::size_t a, std::size_t b) {
    const double sa = score(a);
    const double sb = score(b);
    if (sa != sb) return sa > sb;
    return a < b;
  });
  return ordering;
}

// Per-text greedy attack: one importance pass on the oracle, then a rollout in
// that order. Importance queries are recorded as ordering queries.
inline AttackOutcome per_text_greedy_attack(const TokenizedText& t,
                                            const ClassifierHandle& oracle,
                                            const SearchSpace& space,
                                            const ImportanceFn& importance,
                                            std::string method = "greedy") {
  QueryTally ordering_queries;
  const auto scores = importance(t, oracle, space, &ordering_queries);
  const auto ordering = order_by_importance(t, scores, space);
  AttackOutcome out = rollout(ordering, t, oracle, space, ordering_queries);
  out.method = std::move(method);
  return out;
}

// ---------------------------------------------------------------------------
// GenFooler: a regressor from text embedding to per-position importance.

struct GenfoolerOptions {
  std::size_t folds = 5;
  std::size_t max_epochs = 40;
  double lr = 1e-3;
  std::size_t batch_size = 32;
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t max_positions = 64;
  std::uint64_t seed = 0;
};

struct GenfoolerModel {
  nn::Mlp net;
  std::size_t epochs = 0;
  std::string importance_id;
  std::vector<double> validation_curve;  // mean fold loss after each epoch

  std::size_t max_positions() const { return net.output_dim(); }
};

// Regression sample: input embedding, targets padded to L, valid length.
struct RegressionSample {
  Embedding input;
  std::vector<double> target;
  std::size_t length = 0;
};

// Masked mean squared error over valid positions of `batch`, gradient into
// `grads` (zeroed first).
inline double masked_mse_and_gradient(const nn::Mlp& net,
                                      std::span<const RegressionSample* const> batch,
                                      nn::Gradients& grads) {
  grads = net.zero_gradients();
  std::size_t valid = 0;
  for (const auto* s : batch) valid += s->length;
  if (valid == 0) return 0.0;
  const double inv = 1.0 / static_cast<double>(valid);
  double loss = 0.0;
  nn::Tape tape;
  std::vector<double> g;
  for (const auto* s : batch) {
    const auto pred = net.forward(s->input, tape);
    g.assign(pred.size(), 0.0);
    for (std::size_t i = 0; i < s->length; ++i) {
      const double err = pred[i] - s->target[i];
      loss += err * err * inv;
      g[i] = 2.0 * err * inv;
    }
    net.backward(tape, g, grads);
  }
  return loss;
}

inline double masked_mse(const nn::Mlp& net, std::span<const RegressionSample* const> batch) {
  nn::Gradients unused;
  return masked_mse_and_gradient(net, batch, unused);
}

namespace detail {

inline void regression_epoch(nn::Mlp& net, nn::Adam& adam,
                             const std::vector<const RegressionSample*>& data,
                             std::size_t batch_size, Rng& rng) {
  std::vector<const RegressionSample*> order = data;
  rng.shuffle(order);
  nn::Gradients grads;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    std::span<const RegressionSample* const> batch(order.data() + start, end - start);
    masked_mse_and_gradient(net, batch, grads);
    adam.step(net, grads);
  }
}

}  // namespace detail

inline std::vector<RegressionSample> make_regression_samples(
    const std::vector<TokenizedText>& texts, const std::vector<ImportanceVector>& targets,
    const Embedder& embedder, std::size_t max_positions) {
  std::vector<RegressionSample> out;
  for (std::size_t k = 0; k < texts.size(); ++k) {
    RegressionSample s;
    s.input = embedder.embed(texts[k]);
    s.length = std::min(targets[k].size(), max_positions);
    s.target.assign(max_positions, 0.0);
    std::copy_n(targets[k].begin(), s.length, s.target.begin());
    out.push_back(std::move(s));
  }
  return out;
}

// Fits the regressor on precomputed importance targets. The epoch count is the
// one minimizing mean validation loss across folds; the final model is then
// refit on every text for that many epochs.
inline GenfoolerModel genfooler_fit(const std::vector<RegressionSample>& samples,
                                    std::size_t input_dim, const GenfoolerOptions& opt,
                                    std::string importance_id) {
  if (opt.folds < 2) throw InvalidArgument("cross-validation needs at least two folds");
  if (samples.size() < opt.folds) {
    throw TooFewTexts(std::to_string(samples.size()) + " texts for " +
                      std::to_string(opt.folds) + " folds");
  }
  if (opt.max_epochs == 0) throw InvalidArgument("max_epochs must be positive");
  std::vector<std::size_t> dims{input_dim};
  dims.insert(dims.end(), opt.hidden.begin(), opt.hidden.end());
  dims.push_back(opt.max_positions);

  std::vector<std::size_t> perm(samples.size());
  std::iota(perm.begin(), perm.end(), 0);
  Rng split_rng = stream(opt.seed, "genfooler.folds");
  split_rng.shuffle(perm);

  std::vector<double> curve(opt.max_epochs, 0.0);
  for (std::size_t f = 0; f < opt.folds; ++f) {
    std::vector<const RegressionSample*> train, val;
    for (std::size_t k = 0; k < perm.size(); ++k) {
      (k % opt.folds == f ? val : train).push_back(&samples[perm[k]]);
    }
    Rng init = stream(opt.seed, "genfooler.init", f);
    Rng order = stream(opt.seed, "genfooler.order", f);
    nn::Mlp net(dims, init);
    nn::Adam adam(net, {.lr = opt.lr});
    for (std::size_t e = 0; e < opt.max_epochs; ++e) {
      detail::regression_epoch(net, adam, train, opt.batch_size, order);
      curve[e] += masked_mse(net, val) / static_cast<double>(opt.folds);
    }
  }
  const std::size_t best =
      static_cast<std::size_t>(std::min_element(curve.begin(), curve.end()) - curve.begin());

  std::vector<const RegressionSample*> all;
  for (const auto& s : samples) all.push_back(&s);
  Rng init = stream(opt.seed, "genfooler.init", opt.folds);
  Rng order = stream(opt.seed, "genfooler.order", opt.folds);
  GenfoolerModel model{nn::Mlp(dims, init), best + 1, std::move(importance_id), curve};
  nn::Adam adam(model.net, {.lr = opt.lr});
  for (std::size_t e = 0; e <= best; ++e) {
    detail::regression_epoch(model.net, adam, all, opt.batch_size, order);
  }
  return model;
}

// Computes importance targets on the oracle, then fits.
inline GenfoolerModel genfooler_train(const std::vector<TokenizedText>& texts,
                                      const ImportanceFn& importance,
                                      std::string importance_id,
                                      const ClassifierHandle& oracle, const SearchSpace& space,
                                      const Embedder& embedder, const GenfoolerOptions& opt) {
  if (texts.size() < opt.folds) {
    throw TooFewTexts(std::to_string(texts.size()) + " texts for " +
                      std::to_string(opt.folds) + " folds");
  }
  std::vector<ImportanceVector> targets;
  targets.reserve(texts.size());
  for (const auto& t : texts) targets.push_back(importance(t, oracle, space, nullptr));
  const auto samples = make_regression_samples(texts, targets, embedder, opt.max_positions);
  return genfooler_fit(samples, embedder.dim(), opt, std::move(importance_id));
}

// Greedy attack ordered by predicted importance. No oracle access for ordering.
inline AttackOutcome genfooler_attack(const TokenizedText& t, const GenfoolerModel& model,
                                      const Embedder& embedder, const ClassifierHandle& oracle,
                                      const SearchSpace& space) {
  const auto predicted = model.net.forward(embedder.embed(t));
  const auto ordering = order_by_importance(t, predicted, space);
  AttackOutcome out = rollout(ordering, t, oracle, space);
  out.method = "genfooler-" + model.importance_id;
  return out;
}

inline nlohmann::json to_json(const GenfoolerModel& m) {
  nlohmann::json j = nn::to_json(m.net);
  j["variant"] = "genfooler";
  j["config"] = {{"importance", m.importance_id},
                 {"epochs", m.epochs},
                 {"validation_curve", m.validation_curve}};
  return j;
}

inline GenfoolerModel genfooler_from_json(const nlohmann::json& j) {
  if (j.value("variant", std::string()) != "genfooler") {
    throw SchemaMismatch("checkpoint is not a genfooler model");
  }
  try {
    GenfoolerModel m;
    m.net = nn::mlp_from_json(j);
    const auto& c = j.at("config");
    m.importance_id = c.at("importance").get<std::string>();
    m.epochs = c.at("epochs").get<std::size_t>();
    m.validation_curve = c.value("validation_curve", std::vector<double>{});
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaMismatch(std::string("malformed genfooler checkpoint: ") + e.what());
  }
}

}  // namespace lunatc
