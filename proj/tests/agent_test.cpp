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


#include <cmath>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <gtest/gtest.h>

#include "lunatc/agent.hpp"
#include "oracles.hpp"

namespace lunatc {
namespace {

using testing::kink_safe;
using testing::linear_oracle;
using testing::max_fd_error;
using testing::store_of;
using testing::text_of;

// Single linear layer: Q = w . x + b.
nn::Mlp linear_net(std::vector<double> w, double b = 0.0) {
  const std::size_t n = w.size();
  return nn::Mlp({nn::Dense{n, 1, std::move(w), {b}}});
}

std::vector<double> random_vector(std::size_t n, Rng& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

TEST(Epsilon, DecaysFromStartToEnd) {
  TrainConfig c;
  c.eps_start = 0.9;
  c.eps_end = 0.05;
  c.eps_decay = 100;
  EXPECT_DOUBLE_EQ(epsilon_at(c, 0), 0.9);
  EXPECT_NEAR(epsilon_at(c, 100), 0.05 + 0.85 / std::exp(1.0), 1e-12);
  EXPECT_NEAR(epsilon_at(c, 100000), 0.05, 1e-12);
  for (std::size_t s = 0; s < 500; s += 10) EXPECT_GE(epsilon_at(c, s), epsilon_at(c, s + 10));
}

TEST(TrainConfigCheck, RejectsBadValues) {
  TrainConfig c;
  c.gamma = 1.5;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.memory_capacity = 4;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.eps_end = 0.95;
  EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(QNetworkTest, ConcatenatesStateAndAction) {
  QNetwork q(QVariant::kActionEmbedding, linear_net({1, 2, 3, 4}, 0.5), 1.0);
  EXPECT_EQ(q.state_dim(), 2u);
  EXPECT_DOUBLE_EQ(q.q_value(std::vector<double>{1, 1}, std::vector<double>{1, 0}),
                   1 + 2 + 3 + 0.5);
  EXPECT_THROW(q.q_value(std::vector<double>{1}, std::vector<double>{1, 0}), DimensionMismatch);
}

TEST(QNetworkTest, DefaultShape) {
  Rng rng(1);
  TrainConfig c;
  QNetwork q(QVariant::kActionEmbedding, 16, c.hidden, 0, 1.0, rng);
  const std::vector<std::size_t> want{32, 128, 128, 64, 64, 32, 32, 1};
  EXPECT_EQ(q.net().dims(), want);
  QNetwork classic(QVariant::kClassic, 16, {8}, 10, 1.0, rng);
  EXPECT_EQ(classic.net().dims(), (std::vector<std::size_t>{16, 8, 10}));
}

TEST(QNetworkTest, CheckpointRoundTrip) {
  Rng rng(2);
  QNetwork q(QVariant::kActionEmbedding, 4, {8, 8}, 0, 0.5, rng);
  EXPECT_EQ(qnetwork_from_json(to_json(q)), q);
  QNetwork c(QVariant::kClassic, 4, {8}, 12, 1.0, rng);
  const auto back = qnetwork_from_json(to_json(c));
  EXPECT_EQ(back, c);
  EXPECT_EQ(back.max_positions(), 12u);
  auto j = to_json(q);
  j["variant"] = "tabular";
  EXPECT_THROW(qnetwork_from_json(j), SchemaMismatch);
}

ActionSet three_actions() {
  ActionSet a;
  a.positions = {0, 3, 5};
  a.embeddings = {{0, 1}, {0, 3}, {0, 2}};
  return a;
}

TEST(SelectAction, GreedyPicksTheLargestQ) {
  // Q reads the second action component.
  QNetwork q(QVariant::kActionEmbedding, linear_net({0, 0, 0, 1}), 1.0);
  Rng rng(3);
  const std::vector<double> s{0, 0};
  EXPECT_EQ(select_action(q, s, three_actions(), 0.0, rng), 3u);
}

TEST(SelectAction, GreedyTiesGoToLowestPosition) {
  QNetwork q(QVariant::kActionEmbedding, linear_net({0, 0, 0, 0}), 1.0);
  Rng rng(3);
  auto a = three_actions();
  a.positions = {4, 2, 7};
  EXPECT_EQ(select_action(q, std::vector<double>{0, 0}, a, 0.0, rng), 2u);
}

TEST(SelectAction, FullExplorationIsUniform) {
  QNetwork q(QVariant::kActionEmbedding, linear_net({0, 0, 0, 1}), 1.0);
  Rng rng(11);
  const auto a = three_actions();
  std::map<std::size_t, double> counts;
  const int n = 9000;
  for (int k = 0; k < n; ++k) counts[select_action(q, std::vector<double>{0, 0}, a, 1.0, rng)]++;
  double chi2 = 0;
  for (std::size_t p : a.positions) chi2 += std::pow(counts[p] - n / 3.0, 2) / (n / 3.0);
  const double crit = boost::math::quantile(boost::math::chi_squared(2), 0.999);
  EXPECT_LT(chi2, crit);
}

TEST(SelectAction, NothingToChoose) {
  QNetwork q(QVariant::kActionEmbedding, linear_net({0, 0, 0, 1}), 1.0);
  Rng rng(0);
  EXPECT_THROW(select_action(q, std::vector<double>{0, 0}, ActionSet{}, 0.0, rng),
               NoLegalActions);
}

TEST(SelectAction, ClassicOnlySeesLegalPositions) {
  // Output 1 scores highest but is not legal.
  nn::Mlp net({nn::Dense{1, 3, {1, 9, 2}, {0, 0, 0}}});
  QNetwork q(QVariant::kClassic, net, 1.0);
  ActionSet a;
  a.positions = {0, 2};
  Rng rng(0);
  EXPECT_EQ(select_action(q, std::vector<double>{1}, a, 0.0, rng), 2u);
  a.positions = {0, 3};
  EXPECT_THROW(q.q_values(std::vector<double>{1}, a), PositionOverflow);
}

Transition next_state_transition() {
  Transition tr;
  tr.state = {0, 0};
  tr.action = {0, 0};
  tr.reward = 1.0;
  tr.next_state = {1, 0};
  tr.next_actions.positions = {0, 1};
  tr.next_actions.embeddings = {{1, 0}, {0, 1}};
  return tr;
}

TEST(TdTarget, TerminalAndZeroDiscountUseTheRewardOnly) {
  QNetwork p(QVariant::kActionEmbedding, linear_net({1, 1, 1, 1}), 1.0);
  auto tr = next_state_transition();
  tr.done = true;
  EXPECT_EQ(td_target(p, p, tr, 0.9), 1.0);
  tr.done = false;
  EXPECT_EQ(td_target(p, p, tr, 0.0), 1.0);
}

TEST(TdTarget, ModesDifferInWhoSelectsAndWhoEvaluates) {
  // Policy prefers the second action (Q 5 vs 2); target prefers the first
  // (Q 4 vs 1).
  QNetwork policy(QVariant::kActionEmbedding, linear_net({0, 0, 2, 5}), 1.0);
  QNetwork target(QVariant::kActionEmbedding, linear_net({0, 0, 4, 1}), 1.0);
  const auto tr = next_state_transition();
  // Target picks action 0, policy evaluates it: 1 + 0.5 * 2.
  EXPECT_DOUBLE_EQ(td_target(policy, target, tr, 0.5, TargetMode::kTargetSelects), 2.0);
  // Target picks and evaluates: 1 + 0.5 * 4.
  EXPECT_DOUBLE_EQ(td_target(policy, target, tr, 0.5, TargetMode::kDqn), 3.0);
  // Policy picks action 1, target evaluates: 1 + 0.5 * 1.
  EXPECT_DOUBLE_EQ(td_target(policy, target, tr, 0.5, TargetMode::kDoubleDqn), 1.5);
}

// Random transitions for a network of the given variant and state dim.
std::vector<Transition> random_batch(const QNetwork& q, std::size_t n, Rng& rng) {
  const std::size_t d = q.state_dim();
  std::vector<Transition> out(n);
  for (auto& tr : out) {
    tr.state = random_vector(d, rng);
    tr.next_state = random_vector(d, rng);
    tr.reward = rng.normal();
    tr.done = rng.bernoulli(0.3);
    if (q.variant() == QVariant::kActionEmbedding) {
      tr.action = random_vector(d, rng);
      tr.next_actions.positions = {0, 1, 2};
      for (int k = 0; k < 3; ++k) tr.next_actions.embeddings.push_back(random_vector(d, rng));
    } else {
      tr.action_position = rng.below(q.max_positions());
      tr.next_actions.positions = {0, q.max_positions() - 1};
    }
  }
  return out;
}

std::vector<std::vector<double>> network_inputs(const QNetwork& q,
                                                const std::vector<Transition>& batch) {
  std::vector<std::vector<double>> xs;
  for (const auto& tr : batch) {
    std::vector<double> x = tr.state;
    x.insert(x.end(), tr.action.begin(), tr.action.end());
    if (q.variant() == QVariant::kClassic) x = tr.state;
    xs.push_back(std::move(x));
  }
  return xs;
}

// Targets come from a frozen network, so the loss is a plain function of the
// policy parameters.
TEST(Gradients, TdLossMatchesFiniteDifferences) {
  Rng rng(42);
  int checked = 0;
  for (int trial = 0; checked < 50 && trial < 5000; ++trial) {
    const bool classic = trial % 2;
    const std::size_t d = 2 + 2 * rng.below(3);
    const std::vector<std::size_t> hidden{4 + rng.below(6), 3 + rng.below(5)};
    QNetwork policy(classic ? QVariant::kClassic : QVariant::kActionEmbedding, d, hidden, 5,
                    1.0, rng);
    const QNetwork target(classic ? QVariant::kClassic : QVariant::kActionEmbedding, d, hidden,
                          5, 1.0, rng);
    const auto batch_store = random_batch(policy, 6, rng);
    if (!kink_safe(policy.net(), network_inputs(policy, batch_store), 1e-3)) continue;
    std::vector<const Transition*> batch;
    for (const auto& tr : batch_store) batch.push_back(&tr);
    nn::Gradients g;
    td_loss_and_gradient(policy, target, batch, 0.9, TargetMode::kDqn, g);
    auto loss = [&] {
      nn::Gradients unused;
      return td_loss_and_gradient(policy, target, batch, 0.9, TargetMode::kDqn, unused);
    };
    EXPECT_LT(max_fd_error(policy.net(), g, loss), 1e-4) << "trial " << trial;
    ++checked;
  }
  EXPECT_EQ(checked, 50);
}

TEST(ReplayMemoryTest, EvictsOldestFirst) {
  ReplayMemory<int> m(3);
  for (int k = 0; k < 5; ++k) m.push(k);
  EXPECT_EQ(m.size(), 3u);
  EXPECT_EQ(m.inserted(), 5u);
  EXPECT_EQ(m.at(0), 2);
  EXPECT_EQ(m.at(1), 3);
  EXPECT_EQ(m.at(2), 4);
  EXPECT_THROW(ReplayMemory<int>(0), InvalidArgument);
}

TEST(ReplayMemoryTest, SamplesAreDistinct) {
  ReplayMemory<int> m(50);
  for (int k = 0; k < 40; ++k) m.push(k);
  Rng rng(8);
  for (int rep = 0; rep < 100; ++rep) {
    const auto s = m.sample(32, rng);
    std::set<const int*> seen(s.begin(), s.end());
    EXPECT_EQ(seen.size(), 32u);
  }
  EXPECT_EQ(m.sample(100, rng).size(), 40u);
}

// Fixed batch of terminal transitions: plain regression onto the rewards.
TEST(TrainStep, OverfitsAFixedBatch) {
  Rng rng(4);
  TrainConfig cfg;
  QNetwork policy(QVariant::kActionEmbedding, 8, cfg.hidden, 0, 1.0, rng);
  std::vector<Transition> data(32);
  for (auto& tr : data) {
    tr.state = random_vector(8, rng);
    tr.action = random_vector(8, rng);
    tr.reward = rng.uniform(-1, 1);
    tr.done = true;
  }
  std::vector<const Transition*> batch;
  for (const auto& tr : data) batch.push_back(&tr);
  nn::Adam adam(policy.net(), {.lr = cfg.lr});
  const QNetwork target = policy;
  double loss = 0;
  std::size_t steps = 0;
  for (; steps < 2000; ++steps) {
    loss = train_step(policy, batch, target, cfg.gamma, adam);
    if (loss < 1e-3) break;
  }
  EXPECT_LT(loss, 1e-3) << "after " << steps << " steps";
}

TEST(TrainStep, EmptyBatchRejected) {
  Rng rng(4);
  QNetwork policy(QVariant::kActionEmbedding, 2, {4}, 0, 1.0, rng);
  nn::Adam adam(policy.net(), {});
  EXPECT_THROW(train_step(policy, {}, policy, 1.0, adam), InvalidArgument);
}

TEST(TrainLog, CsvHeader) {
  const auto csv = train_log_csv({{3, "d7", 1.5, true, 0.25, 0.125}});
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "round,text_id,cum_reward,success,epsilon,loss_mean");
  EXPECT_NE(csv.find("3,d7,1.500000,1,0.250000,0.125"), std::string::npos);
}

// Toy task: every text holds one "plot", and only replacing it flips the
// class. Everything else is a harmless synonym swap.
struct Toy {
  WordVectorStore store = store_of({{"good", {1, 0}},
                                    {"great", {1, 0.1}},
                                    {"movie", {0, 1}},
                                    {"film", {0.05, 1}},
                                    {"plot", {0.7, -0.7}},
                                    {"story", {0.72, -0.7}}});
  MeanVectorEmbedder embedder{store};
  SearchSpace space{store, embedder, SynonymConfig{0.95, 0.5, {}, false}};
  ClassifierHandle oracle{linear_oracle({{"plot", 2}, {"story", -2}}, 0.5)};
  AttackEnv env{oracle, space, {}};
  AgentWorld world{&env, &embedder, &store};

  std::vector<TokenizedText> texts(std::size_t n, std::size_t len, Rng& rng) const {
    const std::vector<std::string> filler{"good", "great", "movie", "film"};
    std::vector<TokenizedText> out;
    for (std::size_t k = 0; k < n; ++k) {
      std::vector<std::string> toks;
      for (std::size_t i = 0; i < len; ++i) toks.push_back(filler[rng.below(filler.size())]);
      toks[rng.below(len)] = "plot";
      out.push_back(text_of(toks, "x" + std::to_string(k)));
    }
    return out;
  }
};

TrainConfig toy_config() {
  TrainConfig c;
  c.hidden = {32, 32};
  c.lr = 1e-3;
  c.num_rounds = 40;
  c.eps_decay = 50;
  c.batch_size = 8;
  c.memory_capacity = 500;
  c.target_update_every = 3;
  return c;
}

TEST(Training, TargetSyncsOnlyOnUpdateRounds) {
  Toy toy;
  Rng rng(1);
  const auto texts = toy.texts(10, 4, rng);
  auto cfg = toy_config();
  QNetwork last_target;
  bool first = true;
  lunatc_train(texts, toy.world, cfg,
               [&](std::size_t round, const QNetwork& policy, const QNetwork& target) {
                 if ((round + 1) % cfg.target_update_every == 0) {
                   EXPECT_EQ(target, policy) << "round " << round;
                 } else if (!first) {
                   EXPECT_EQ(target, last_target) << "round " << round;
                 }
                 first = false;
                 last_target = target;
               });
}

TEST(Training, ZeroRoundsReturnsTheInitialNetwork) {
  Toy toy;
  auto cfg = toy_config();
  cfg.num_rounds = 0;
  const auto r = lunatc_train({}, toy.world, cfg);
  EXPECT_TRUE(r.log.empty());
  EXPECT_EQ(r.policy, make_qnetwork(cfg, 2));
  cfg.num_rounds = 1;
  EXPECT_THROW(lunatc_train({}, toy.world, cfg), InvalidArgument);
}

TEST(Training, SameSeedSameResult) {
  Toy toy;
  Rng rng(2);
  const auto texts = toy.texts(10, 4, rng);
  const auto cfg = toy_config();
  const auto a = lunatc_train(texts, toy.world, cfg);
  const auto b = lunatc_train(texts, toy.world, cfg);
  EXPECT_EQ(a.policy, b.policy);
  EXPECT_EQ(a.log, b.log);
  auto other = cfg;
  other.seed = 1;
  EXPECT_NE(lunatc_train(texts, toy.world, other).policy, a.policy);
}

TEST(Training, LogRowsFollowTheRounds) {
  Toy toy;
  Rng rng(3);
  const auto texts = toy.texts(5, 3, rng);
  const auto r = lunatc_train(texts, toy.world, toy_config());
  ASSERT_EQ(r.log.size(), 40u);
  for (std::size_t k = 0; k < r.log.size(); ++k) {
    EXPECT_EQ(r.log[k].round, k);
    EXPECT_GE(r.log[k].epsilon, 0.05);
  }
}

TEST(Training, ClassicRejectsLongTexts) {
  Toy toy;
  Rng rng(3);
  auto cfg = toy_config();
  cfg.max_positions = 3;
  const auto texts = toy.texts(3, 5, rng);
  EXPECT_THROW(classic_train(texts, toy.world, cfg), PositionOverflow);
  cfg.num_rounds = 0;
  const auto r = classic_train(texts, toy.world, cfg);
  EXPECT_THROW(classic_attack(texts[0], toy.world, r.policy), PositionOverflow);
}

// After training, the agent goes for "plot" first far more often than a
// uniform pick would, and its choices cost no oracle queries.
TEST(Training, LearnsWhereTheKeyWordIs) {
  Toy toy;
  Rng rng(4);
  const auto train = toy.texts(60, 5, rng);
  const auto test = toy.texts(100, 5, rng);
  auto cfg = toy_config();
  cfg.num_rounds = 1500;
  cfg.eps_decay = 1000;
  cfg.gamma = 0.5;  // with no discount every order ends in the same flip
  cfg.target_update_every = 10;
  const auto r = lunatc_train(train, toy.world, cfg);
  int hits = 0;
  for (const auto& t : test) {
    const auto o = lunatc_attack(t, toy.world, r.policy);
    EXPECT_EQ(o.method, "lunatc");
    EXPECT_EQ(o.ordering_queries.logit_queries, 0u);
    EXPECT_EQ(o.ordering_queries.label_queries, 0u);
    ASSERT_FALSE(o.actions.empty());
    if (t[o.actions.front()] == "plot") ++hits;
    EXPECT_TRUE(o.success);
  }
  EXPECT_GT(hits, 60) << "chance is 20";
}

}  // namespace
}  // namespace lunatc
