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

#include <gtest/gtest.h>

#include "lunatc/oracle.hpp"
#include "oracles.hpp"

namespace lunatc {
namespace {

using testing::text_of;

std::shared_ptr<ScriptedBackend> constant(Logits l) {
  return std::make_shared<ScriptedBackend>(l.size(), [l](const TokenizedText&) { return l; });
}

TEST(ClassifierHandle, ScriptedLogitsAreCounted) {
  ClassifierHandle h(constant({0.3, -1.0}));
  EXPECT_EQ(h.predict_logits(text_of({"x"})), (Logits{0.3, -1.0}));
  EXPECT_EQ(h.counters(), (QueryTally{0, 1}));
  EXPECT_EQ(h.predict_logits(text_of({"x"})), h.predict_logits(text_of({"x"})));
  EXPECT_EQ(h.counters(), (QueryTally{0, 3}));
}

TEST(ClassifierHandle, LabelQueriesCountSeparately) {
  ClassifierHandle h(constant({0.2, 0.9}));
  QueryTally mine;
  for (int k = 0; k < 5; ++k) EXPECT_EQ(h.predict_label(text_of({"x"}), &mine), 1u);
  EXPECT_EQ(mine, (QueryTally{5, 0}));
  EXPECT_EQ(h.counters(), (QueryTally{5, 0}));
  h.reset_counters();
  EXPECT_EQ(h.counters(), (QueryTally{0, 0}));
}

TEST(ClassifierHandle, BatchCountsEachText) {
  auto inner = testing::linear_oracle({{"a", 1.0}});
  auto counting = std::make_shared<testing::CountingBackend>(inner);
  ClassifierHandle h(counting);
  std::vector<TokenizedText> batch = {text_of({"a"}), text_of({"b"}), text_of({"a", "a"})};
  QueryTally mine;
  const auto out = h.predict_logits(batch, &mine);
  EXPECT_EQ(out.size(), 3u);
  EXPECT_EQ(mine.logit_queries, 3u);
  EXPECT_EQ(counting->logit_texts, 3u);
  h.predict_label(batch[0]);
  h.margin(batch[1], 0);
  EXPECT_EQ(h.counters().logit_queries, counting->logit_texts);
  EXPECT_EQ(h.counters().label_queries, counting->label_texts);
}

TEST(Argmax, LowestIndexOnTies) {
  EXPECT_EQ(argmax(Logits{0.2, 0.9}), 1u);
  EXPECT_EQ(argmax(Logits{0.5, 0.5}), 0u);
  EXPECT_EQ(argmax(Logits{1, 3, 3}), 1u);
}

TEST(Margin, ClosedForms) {
  EXPECT_DOUBLE_EQ(margin_of(Logits{3, 1}, 0), 2.0);
  EXPECT_DOUBLE_EQ(margin_of(Logits{1, 3}, 0), -2.0);
  EXPECT_DOUBLE_EQ(margin_of(Logits{5, 4, 1}, 0), 1.0);
  EXPECT_DOUBLE_EQ(margin_of(Logits{5, 4, 1}, 2), -4.0);
}

TEST(ClassifierHandle, RejectsMalformedBackendReplies) {
  ClassifierHandle wrong_width(std::make_shared<ScriptedBackend>(
      2, [](const TokenizedText&) { return Logits{1.0, 2.0, 3.0}; }));
  EXPECT_THROW(wrong_width.predict_logits(text_of({"x"})), SchemaMismatch);
  ClassifierHandle nan(std::make_shared<ScriptedBackend>(
      2, [](const TokenizedText&) { return Logits{NAN, 0.0}; }));
  EXPECT_THROW(nan.predict_logits(text_of({"x"})), SchemaMismatch);
  EXPECT_THROW(ClassifierHandle(constant({1.0})), InvalidArgument);
}

TEST(ClassifierHandle, LabelIsArgmaxOfLogits) {
  Rng rng(5);
  ClassifierHandle h(testing::linear_oracle({{"a", 1.5}, {"b", -2.0}, {"c", 0.25}}, -0.1));
  const std::vector<std::string> vocab = {"a", "b", "c", "d"};
  for (int k = 0; k < 200; ++k) {
    std::vector<std::string> t;
    for (std::size_t n = rng.below(6); n > 0; --n) t.push_back(vocab[rng.below(4)]);
    const auto text = text_of(t);
    EXPECT_EQ(h.predict_label(text), argmax(h.predict_logits(text)));
  }
}

// Corpus separable by a known direction over mean embeddings.
struct Separable {
  WordVectorStore store{4};
  std::vector<Document> docs;

  explicit Separable(std::uint64_t seed) {
    Rng rng(seed);
    for (int w = 0; w < 40; ++w) {
      Embedding v(4);
      for (double& x : v) x = rng.normal();
      store.set("w" + std::to_string(w), v);
    }
    const Embedding direction = {1.0, -0.5, 0.25, 0.0};
    for (int d = 0; d < 400; ++d) {
      std::string text;
      for (std::size_t n = 3 + rng.below(5); n > 0; --n) {
        text += "w" + std::to_string(rng.below(40)) + " ";
      }
      const auto e = text_embedding(tokenize(text), store);
      const double score = dot(e, direction);
      if (std::abs(score) < 0.1) continue;  // keep a margin
      docs.push_back({"d" + std::to_string(d), text, score > 0 ? 1u : 0u});
    }
  }
};

TEST(TrainBuiltin, FitsSeparableCorpus) {
  Separable s(1);
  // The labels come from a hyperplane, so a linear rule already fits them all.
  const Embedding direction = {1.0, -0.5, 0.25, 0.0};
  std::size_t linear_ok = 0;
  for (const auto& d : s.docs) {
    const double score = dot(text_embedding(tokenize(d), s.store), direction);
    linear_ok += (score > 0) == (d.label == 1);
  }
  ASSERT_EQ(linear_ok, s.docs.size());

  MeanVectorEmbedder e(s.store);
  BuiltinTrainOptions opt;
  opt.epochs = 60;
  const auto model = train_builtin(s.docs, e, opt);
  EXPECT_GE(model.train_accuracy, 0.95);
}

TEST(TrainBuiltin, SingleClassIsDegenerate) {
  Separable s(2);
  for (auto& d : s.docs) d.label = 0;
  MeanVectorEmbedder e(s.store);
  EXPECT_THROW(train_builtin(s.docs, e, {}), DegenerateData);
}

TEST(TrainBuiltin, SameSeedSameWeights) {
  Separable s(3);
  MeanVectorEmbedder e(s.store);
  BuiltinTrainOptions opt;
  opt.epochs = 3;
  opt.seed = 9;
  EXPECT_EQ(train_builtin(s.docs, e, opt).net, train_builtin(s.docs, e, opt).net);
}

}  // namespace
}  // namespace lunatc
