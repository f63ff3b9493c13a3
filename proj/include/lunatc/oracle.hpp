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
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lunatc/corpus.hpp"
#include "lunatc/error.hpp"
#include "lunatc/nn.hpp"
#include "lunatc/rng.hpp"
#include "lunatc/vectors.hpp"

namespace lunatc {

using Logits = std::vector<double>;

// Per-attack query counts. Plain integers; one owner.
struct QueryTally {
  std::uint64_t label_queries = 0;
  std::uint64_t logit_queries = 0;

  QueryTally& operator+=(const QueryTally& o) {
    label_queries += o.label_queries;
    logit_queries += o.logit_queries;
    return *this;
  }
  bool operator==(const QueryTally&) const = default;
};

// Session-wide counter shared by concurrent callers. Every query increments
// exactly one bucket; a logit query is never also counted as a label query.
class AccessCounter {
 public:
  void add(const QueryTally& t) {
    std::lock_guard lock(mu_);
    totals_ += t;
  }
  QueryTally snapshot() const {
    std::lock_guard lock(mu_);
    return totals_;
  }
  void reset() {
    std::lock_guard lock(mu_);
    totals_ = {};
  }

 private:
  mutable std::mutex mu_;
  QueryTally totals_;
};

// Index of the largest score, lowest index on ties.
inline ClassIndex argmax(std::span<const double> scores) {
  ClassIndex best = 0;
  for (ClassIndex c = 1; c < scores.size(); ++c) {
    if (scores[c] > scores[best]) best = c;
  }
  return best;
}

// F_y - max_{c != y} F_c.
inline double margin_of(std::span<const double> logits, ClassIndex y) {
  double runner_up = -INFINITY;
  for (ClassIndex c = 0; c < logits.size(); ++c) {
    if (c != y) runner_up = std::max(runner_up, logits[c]);
  }
  return logits[y] - runner_up;
}

// The attacked model F. Implementations must be deterministic and safe to call
// from several threads.
class ClassifierBackend {
 public:
  virtual ~ClassifierBackend() = default;
  virtual std::string kind() const = 0;
  virtual std::size_t num_classes() const = 0;
  virtual std::vector<Logits> logits(std::span<const TokenizedText> texts) const = 0;
  virtual std::vector<ClassIndex> labels(std::span<const TokenizedText> texts) const {
    std::vector<ClassIndex> out;
    for (const auto& l : logits(texts)) out.push_back(argmax(l));
    return out;
  }
};

// Front door to a backend: every query goes through here and is counted once
// per text, globally and optionally into a caller-owned tally.
class ClassifierHandle {
 public:
  explicit ClassifierHandle(std::shared_ptr<const ClassifierBackend> backend)
      : backend_(std::move(backend)) {
    if (!backend_) throw InvalidArgument("null classifier backend");
    if (backend_->num_classes() < 2) {
      throw InvalidArgument("a classifier needs at least two classes");
    }
  }

  std::size_t num_classes() const { return backend_->num_classes(); }
  const ClassifierBackend& backend() const { return *backend_; }
  std::shared_ptr<const ClassifierBackend> backend_ptr() const { return backend_; }
  QueryTally counters() const { return counter_.snapshot(); }
  void reset_counters() { counter_.reset(); }

  std::vector<Logits> predict_logits(std::span<const TokenizedText> texts,
                                     QueryTally* tally = nullptr) const {
    if (texts.empty()) return {};
    auto out = backend_->logits(texts);
    if (out.size() != texts.size()) {
      throw SchemaMismatch("backend returned " + std::to_string(out.size()) +
                           " rows for " + std::to_string(texts.size()) + " texts");
    }
    for (const auto& row : out) validate(row);
    record({0, texts.size()}, tally);
    return out;
  }

  Logits predict_logits(const TokenizedText& text, QueryTally* tally = nullptr) const {
    return std::move(predict_logits(std::span(&text, 1), tally).front());
  }

  ClassIndex predict_label(const TokenizedText& text, QueryTally* tally = nullptr) const {
    const auto out = backend_->labels(std::span(&text, 1));
    if (out.size() != 1 || out.front() >= num_classes()) {
      throw SchemaMismatch("backend returned an invalid label");
    }
    record({1, 0}, tally);
    return out.front();
  }

  double margin(const TokenizedText& text, ClassIndex y,
                QueryTally* tally = nullptr) const {
    if (y >= num_classes()) throw InvalidArgument("class index out of range");
    return margin_of(predict_logits(text, tally), y);
  }

 private:
  void validate(const Logits& row) const {
    if (row.size() != num_classes()) {
      throw SchemaMismatch("backend returned " + std::to_string(row.size()) +
                           " scores, expected " + std::to_string(num_classes()));
    }
    for (double v : row) {
      if (!std::isfinite(v)) throw SchemaMismatch("backend returned a non-finite score");
    }
  }

  void record(const QueryTally& t, QueryTally* tally) const {
    counter_.add(t);
    if (tally) *tally += t;
  }

  std::shared_ptr<const ClassifierBackend> backend_;
  mutable AccessCounter counter_;
};

// Pure function of the text. Used for exact brute-force checks.
class ScriptedBackend final : public ClassifierBackend {
 public:
  using Fn = std::function<Logits(const TokenizedText&)>;

  ScriptedBackend(std::size_t num_classes, Fn fn)
      : num_classes_(num_classes), fn_(std::move(fn)) {}

  std::string kind() const override { return "scripted"; }
  std::size_t num_classes() const override { return num_classes_; }
  std::vector<Logits> logits(std::span<const TokenizedText> texts) const override {
    std::vector<Logits> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(fn_(t));
    return out;
  }

 private:
  std::size_t num_classes_;
  Fn fn_;
};

// Desk-scale classifier: an MLP over a text embedding.
class MlpClassifier final : public ClassifierBackend {
 public:
  MlpClassifier(nn::Mlp net, std::shared_ptr<const Embedder> embedder)
      : net_(std::move(net)), embedder_(std::move(embedder)) {
    if (net_.input_dim() != embedder_->dim()) {
      throw DimensionMismatch("classifier input " + std::to_string(net_.input_dim()) +
                              " does not match embedding dim " +
                              std::to_string(embedder_->dim()));
    }
  }

  std::string kind() const override { return "builtin"; }
  std::size_t num_classes() const override { return net_.output_dim(); }
  std::vector<Logits> logits(std::span<const TokenizedText> texts) const override {
    std::vector<Logits> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(net_.forward(embedder_->embed(t)));
    return out;
  }
  const nn::Mlp& network() const { return net_; }

 private:
  nn::Mlp net_;
  std::shared_ptr<const Embedder> embedder_;
};

struct BuiltinTrainOptions {
  std::size_t epochs = 30;
  double lr = 1e-2;
  std::size_t hidden = 32;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

struct BuiltinModel {
  nn::Mlp net;
  double train_accuracy = 0.0;
};

// One hidden ReLU layer, softmax cross-entropy, Adam on shuffled minibatches.
inline BuiltinModel train_builtin(const std::vector<Document>& docs,
                                  const Embedder& embedder,
                                  const BuiltinTrainOptions& options) {
  std::vector<ClassIndex> present;
  for (const auto& d : docs) present.push_back(d.label);
  std::sort(present.begin(), present.end());
  present.erase(std::unique(present.begin(), present.end()), present.end());
  if (present.size() < 2) {
    throw DegenerateData("training documents cover fewer than two classes");
  }
  const std::size_t num_classes = present.back() + 1;

  std::vector<Embedding> inputs;
  inputs.reserve(docs.size());
  for (const auto& d : docs) inputs.push_back(embedder.embed(tokenize(d)));

  Rng init = stream(options.seed, "oracle.init");
  Rng order = stream(options.seed, "oracle.order");
  nn::Mlp net({embedder.dim(), options.hidden, num_classes}, init);
  nn::Adam adam(net, {.lr = options.lr});

  std::vector<std::size_t> idx(docs.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  nn::Tape tape;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    order.shuffle(idx);
    for (std::size_t start = 0; start < idx.size(); start += options.batch_size) {
      const std::size_t end = std::min(idx.size(), start + options.batch_size);
      nn::Gradients g = net.zero_gradients();
      for (std::size_t b = start; b < end; ++b) {
        const auto out = net.forward(inputs[idx[b]], tape);
        auto grad = nn::softmax(out);
        grad[docs[idx[b]].label] -= 1.0;
        net.backward(tape, grad, g);
      }
      g.scale(1.0 / static_cast<double>(end - start));
      adam.step(net, g);
    }
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (argmax(net.forward(inputs[i])) == docs[i].label) ++correct;
  }
  return {std::move(net),
          static_cast<double>(correct) / static_cast<double>(docs.size())};
}

}  // namespace lunatc
