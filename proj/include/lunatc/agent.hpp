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
#include <optional>
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

// kActionEmbedding: Q(s, a) from the concatenation [s; emb_A(a)], one output.
// kClassic: Q(s, .) with one output per text position.
enum class QVariant { kActionEmbedding, kClassic };

// Which network picks the bootstrap action and which one scores it.
//   kTargetSelects: target picks, policy scores (default).
//   kDqn:           target picks and scores.
//   kDoubleDqn:     policy picks, target scores.
enum class TargetMode { kTargetSelects, kDqn, kDoubleDqn };

inline const char* variant_name(QVariant v) {
  return v == QVariant::kClassic ? "classic" : "action_emb";
}

inline const char* target_mode_name(TargetMode m) {
  switch (m) {
    case TargetMode::kTargetSelects: return "target_selects";
    case TargetMode::kDqn: return "dqn";
    case TargetMode::kDoubleDqn: return "double_dqn";
  }
  return "target_selects";
}

inline std::optional<TargetMode> parse_target_mode(std::string_view s) {
  if (s == "target_selects") return TargetMode::kTargetSelects;
  if (s == "dqn") return TargetMode::kDqn;
  if (s == "double_dqn") return TargetMode::kDoubleDqn;
  return std::nullopt;
}

struct TrainConfig {
  QVariant variant = QVariant::kActionEmbedding;
  TargetMode target_mode = TargetMode::kTargetSelects;
  double gamma = 1.0;
  double lr = 1e-4;
  std::size_t batch_size = 32;
  double eps_start = 0.9;
  double eps_end = 0.05;
  // Agent steps per e-fold of exploration decay.
  double eps_decay = 2000.0;
  std::size_t target_update_every = 10;
  std::size_t num_rounds = 1000;
  std::size_t max_turns = 30;
  std::size_t memory_capacity = 10000;
  std::uint64_t seed = 0;
  double alpha = 1.0;
  std::vector<std::size_t> hidden = {128, 128, 64, 64, 32, 32};
  std::size_t max_positions = 64;

  void validate() const {
    if (gamma < 0.0 || gamma > 1.0) throw InvalidArgument("gamma must lie in [0, 1]");
    if (eps_end > eps_start) throw InvalidArgument("eps_end must not exceed eps_start");
    if (eps_end < 0.0 || eps_start > 1.0) throw InvalidArgument("epsilon outside [0, 1]");
    if (eps_decay <= 0.0) throw InvalidArgument("eps_decay must be positive");
    if (batch_size == 0) throw InvalidArgument("batch_size must be positive");
    if (memory_capacity < batch_size) {
      throw InvalidArgument("memory_capacity must hold at least one batch");
    }
    if (target_update_every == 0) throw InvalidArgument("target_update_every must be positive");
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"variant", variant_name(c.variant)},
          {"target_mode", target_mode_name(c.target_mode)},
          {"gamma", c.gamma},
          {"lr", c.lr},
          {"batch_size", c.batch_size},
          {"eps_start", c.eps_start},
          {"eps_end", c.eps_end},
          {"eps_decay", c.eps_decay},
          {"target_update_every", c.target_update_every},
          {"num_rounds", c.num_rounds},
          {"max_turns", c.max_turns},
          {"memory_capacity", c.memory_capacity},
          {"seed", c.seed},
          {"alpha", c.alpha},
          {"hidden", c.hidden},
          {"max_positions", c.max_positions}};
}

// Exponential decay from eps_start towards eps_end.
inline double epsilon_at(const TrainConfig& c, std::size_t step) {
  return c.eps_end +
         (c.eps_start - c.eps_end) * std::exp(-static_cast<double>(step) / c.eps_decay);
}

// Legal positions of a state together with their encodings. Embeddings are
// empty for the classic variant.
struct ActionSet {
  std::vector<std::size_t> positions;
  std::vector<Embedding> embeddings;

  std::size_t size() const { return positions.size(); }
  bool empty() const { return positions.empty(); }
};

class QNetwork {
 public:
  QNetwork() = default;

  QNetwork(QVariant variant, std::size_t state_dim, const std::vector<std::size_t>& hidden,
           std::size_t max_positions, double alpha, Rng& rng)
      : variant_(variant), alpha_(alpha), max_positions_(max_positions) {
    std::vector<std::size_t> dims;
    dims.push_back(variant == QVariant::kActionEmbedding ? 2 * state_dim : state_dim);
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(variant == QVariant::kActionEmbedding ? 1 : max_positions);
    net_ = nn::Mlp(dims, rng);
  }

  QNetwork(QVariant variant, nn::Mlp net, double alpha)
      : variant_(variant), alpha_(alpha), net_(std::move(net)) {
    if (variant_ == QVariant::kActionEmbedding) {
      if (net_.output_dim() != 1 || net_.input_dim() % 2 != 0) {
        throw DimensionMismatch("action-embedding network needs input 2d and one output");
      }
    }
    max_positions_ = variant_ == QVariant::kClassic ? net_.output_dim() : 0;
  }

  QVariant variant() const { return variant_; }
  double alpha() const { return alpha_; }
  std::size_t max_positions() const { return max_positions_; }
  std::size_t state_dim() const {
    return variant_ == QVariant::kActionEmbedding ? net_.input_dim() / 2 : net_.input_dim();
  }
  const nn::Mlp& net() const { return net_; }
  nn::Mlp& net() { return net_; }

  bool operator==(const QNetwork&) const = default;

  // Q(s, a) for the action-embedding variant.
  double q_value(std::span<const double> s, std::span<const double> a) const {
    if (variant_ != QVariant::kActionEmbedding) {
      throw InvalidArgument("q_value(s, a) needs the action-embedding variant");
    }
    if (s.size() != state_dim() || a.size() != state_dim()) {
      throw DimensionMismatch("state/action embedding sizes do not match the network");
    }
    return net_.forward(concat(s, a)).front();
  }

  // Q for each action in `actions`.
  std::vector<double> q_values(std::span<const double> s, const ActionSet& actions) const {
    std::vector<double> out;
    out.reserve(actions.size());
    if (variant_ == QVariant::kActionEmbedding) {
      for (const auto& a : actions.embeddings) out.push_back(q_value(s, a));
    } else {
      const auto all = net_.forward(s);
      for (std::size_t p : actions.positions) {
        check_position(p);
        out.push_back(all[p]);
      }
    }
    return out;
  }

  // Forward for one (s, a) pair recording a tape; returns Q.
  double forward(std::span<const double> s, std::span<const double> a_emb,
                 std::size_t a_pos, nn::Tape& tape) const {
    if (variant_ == QVariant::kActionEmbedding) {
      return net_.forward(concat(s, a_emb), tape).front();
    }
    check_position(a_pos);
    return net_.forward(s, tape)[a_pos];
  }

  // Accumulates dL/dtheta given dL/dQ for the pair recorded in `tape`.
  void backward(const nn::Tape& tape, std::size_t a_pos, double grad_q,
                nn::Gradients& grads) const {
    std::vector<double> g(net_.output_dim(), 0.0);
    g[variant_ == QVariant::kActionEmbedding ? 0 : a_pos] = grad_q;
    net_.backward(tape, g, grads);
  }

  void check_position(std::size_t p) const {
    if (variant_ == QVariant::kClassic && p >= max_positions_) {
      throw PositionOverflow("position " + std::to_string(p) + " exceeds the " +
                             std::to_string(max_positions_) + " network outputs");
    }
  }

 private:
  static std::vector<double> concat(std::span<const double> s, std::span<const double> a) {
    std::vector<double> x(s.begin(), s.end());
    x.insert(x.end(), a.begin(), a.end());
    return x;
  }

  QVariant variant_ = QVariant::kActionEmbedding;
  double alpha_ = 1.0;
  std::size_t max_positions_ = 0;
  nn::Mlp net_;
};

inline nlohmann::json to_json(const QNetwork& q, const nlohmann::json& config = {}) {
  nlohmann::json j = nn::to_json(q.net());
  j["variant"] = variant_name(q.variant());
  j["alpha"] = q.alpha();
  j["config"] = config.is_null() ? nlohmann::json::object() : config;
  return j;
}

inline QNetwork qnetwork_from_json(const nlohmann::json& j) {
  const auto variant = j.value("variant", std::string());
  QVariant v;
  if (variant == "action_emb") {
    v = QVariant::kActionEmbedding;
  } else if (variant == "classic") {
    v = QVariant::kClassic;
  } else {
    throw SchemaMismatch("policy checkpoint has variant \"" + variant + "\"");
  }
  try {
    return QNetwork(v, nn::mlp_from_json(j), j.at("alpha").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw SchemaMismatch(std::string("malformed policy checkpoint: ") + e.what());
  } catch (const DimensionMismatch& e) {
    throw SchemaMismatch(std::string("malformed policy checkpoint: ") + e.what());
  }
}

// Encodes the legal positions of `text` for the given network variant.
inline ActionSet encode_actions(const TokenizedText& text,
                                std::span<const std::size_t> legal, const QNetwork& net,
                                const WordVectorStore& action_store) {
  ActionSet out;
  out.positions.assign(legal.begin(), legal.end());
  if (net.variant() == QVariant::kActionEmbedding) {
    out.embeddings.reserve(legal.size());
    for (std::size_t p : legal) {
      out.embeddings.push_back(action_embedding(text[p], p, net.alpha(), action_store));
    }
  } else {
    for (std::size_t p : legal) net.check_position(p);
  }
  return out;
}

// Greedy choice with probability 1 - epsilon, uniform otherwise. Greedy ties go
// to the lowest position.
inline std::size_t select_action(const QNetwork& net, std::span<const double> state,
                                 const ActionSet& actions, double epsilon, Rng& rng) {
  if (actions.empty()) throw NoLegalActions("no legal action to select");
  if (rng.uniform() < epsilon) return actions.positions[rng.below(actions.size())];
  const auto q = net.q_values(state, actions);
  std::size_t best = 0;
  for (std::size_t k = 1; k < q.size(); ++k) {
    if (q[k] > q[best] ||
        (q[k] == q[best] && actions.positions[k] < actions.positions[best])) {
      best = k;
    }
  }
  return actions.positions[best];
}

struct Transition {
  Embedding state;
  Embedding action;  // empty for the classic variant
  std::size_t action_position = 0;
  double reward = 0.0;
  Embedding next_state;
  ActionSet next_actions;
  bool done = false;
};

// Fixed-capacity FIFO ring.
template <typename T>
class ReplayMemory {
 public:
  explicit ReplayMemory(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw InvalidArgument("replay memory capacity must be positive");
    items_.reserve(std::min<std::size_t>(capacity_, 1 << 16));
  }

  void push(T item) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(item));
    } else {
      items_[head_] = std::move(item);
      head_ = (head_ + 1) % capacity_;
    }
    ++inserted_;
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t inserted() const { return inserted_; }

  // k-th oldest item still held.
  const T& at(std::size_t k) const { return items_[(head_ + k) % items_.size()]; }

  // `k` distinct items drawn uniformly (Floyd's algorithm).
  std::vector<const T*> sample(std::size_t k, Rng& rng) const {
    const std::size_t n = items_.size();
    k = std::min(k, n);
    std::vector<std::size_t> chosen;
    chosen.reserve(k);
    for (std::size_t j = n - k; j < n; ++j) {
      const std::size_t t = rng.below(j + 1);
      if (std::find(chosen.begin(), chosen.end(), t) == chosen.end()) {
        chosen.push_back(t);
      } else {
        chosen.push_back(j);
      }
    }
    std::vector<const T*> out;
    out.reserve(k);
    for (std::size_t idx : chosen) out.push_back(&items_[idx]);
    return out;
  }

 private:
  std::size_t capacity_;
  std::vector<T> items_;
  std::size_t head_ = 0;
  std::size_t inserted_ = 0;
};

inline double td_target(const QNetwork& policy, const QNetwork& target, const Transition& tr,
                        double gamma, TargetMode mode = TargetMode::kTargetSelects) {
  if (tr.done || tr.next_actions.empty() || gamma == 0.0) return tr.reward;
  const auto qt = target.q_values(tr.next_state, tr.next_actions);
  auto argmax_of = [&](const std::vector<double>& q) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < q.size(); ++k) {
      if (q[k] > q[best]) best = k;
    }
    return best;
  };
  double bootstrap = 0.0;
  switch (mode) {
    case TargetMode::kTargetSelects: {
      const std::size_t a = argmax_of(qt);
      const auto& acts = tr.next_actions;
      if (policy.variant() == QVariant::kActionEmbedding) {
        bootstrap = policy.q_value(tr.next_state, acts.embeddings[a]);
      } else {
        bootstrap = policy.net().forward(tr.next_state)[acts.positions[a]];
      }
      break;
    }
    case TargetMode::kDqn:
      bootstrap = qt[argmax_of(qt)];
      break;
    case TargetMode::kDoubleDqn: {
      const auto qp = policy.q_values(tr.next_state, tr.next_actions);
      bootstrap = qt[argmax_of(qp)];
      break;
    }
  }
  return tr.reward + gamma * bootstrap;
}

// Mean squared TD error over `batch`, its gradient w.r.t. the policy
// parameters written into `grads` (zeroed first). Targets are held fixed.
inline double td_loss_and_gradient(const QNetwork& policy, const QNetwork& target,
                                   std::span<const Transition* const> batch, double gamma,
                                   TargetMode mode, nn::Gradients& grads) {
  grads = policy.net().zero_gradients();
  if (batch.empty()) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  nn::Tape tape;
  for (const Transition* tr : batch) {
    const double y = td_target(policy, target, *tr, gamma, mode);
    const double q = policy.forward(tr->state, tr->action, tr->action_position, tape);
    const double err = q - y;
    loss += err * err * inv_n;
    policy.backward(tape, tr->action_position, 2.0 * err * inv_n, grads);
  }
  return loss;
}

// One Adam step on the policy network; returns the loss before the step.
inline double train_step(QNetwork& policy, std::span<const Transition* const> batch,
                         const QNetwork& target, double gamma, nn::Adam& adam,
                         TargetMode mode = TargetMode::kTargetSelects) {
  if (batch.empty()) throw InvalidArgument("empty training batch");
  nn::Gradients grads;
  const double loss = td_loss_and_gradient(policy, target, batch, gamma, mode, grads);
  adam.step(policy.net(), grads);
  return loss;
}

struct TrainLogRow {
  std::size_t round = 0;
  std::string text_id;
  double cum_reward = 0.0;
  bool success = false;
  double epsilon = 0.0;
  double loss_mean = 0.0;

  bool operator==(const TrainLogRow&) const = default;
};

inline std::string train_log_csv(const std::vector<TrainLogRow>& rows) {
  std::string out = "round,text_id,cum_reward,success,epsilon,loss_mean\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, ",%.6f,%d,%.6f,%.6g\n", r.cum_reward,
                  r.success ? 1 : 0, r.epsilon, r.loss_mean);
    out += std::to_string(r.round) + "," + r.text_id + buf;
  }
  return out;
}

struct TrainResult {
  QNetwork policy;
  std::vector<TrainLogRow> log;
};

// Everything an agent needs besides its network: the environment (oracle and
// search space), the state embedder and the store used for action embeddings.
struct AgentWorld {
  const AttackEnv* env = nullptr;
  const Embedder* state_embedder = nullptr;
  const WordVectorStore* action_store = nullptr;
};

inline QNetwork make_qnetwork(const TrainConfig& cfg, std::size_t state_dim) {
  Rng init = stream(cfg.seed, "agent.init");
  return QNetwork(cfg.variant, state_dim, cfg.hidden, cfg.max_positions, cfg.alpha, init);
}

// Deep Q-learning over attack episodes. Texts are visited in a freshly
// shuffled order on each pass; the policy is updated after every action and
// the target network is synchronized every `target_update_every` rounds.
// Called after every round with the round index and both networks.
using RoundObserver =
    std::function<void(std::size_t round, const QNetwork& policy, const QNetwork& target)>;

inline TrainResult lunatc_train(const std::vector<TokenizedText>& train_texts,
                                const AgentWorld& world, const TrainConfig& cfg,
                                const RoundObserver& observe = {}) {
  cfg.validate();
  if (train_texts.empty() && cfg.num_rounds > 0) {
    throw InvalidArgument("no training texts");
  }
  const AttackEnv base_env = *world.env;
  EnvConfig env_cfg = base_env.config();
  env_cfg.max_turns = cfg.max_turns;
  const AttackEnv env(base_env.oracle(), base_env.space(), env_cfg);

  TrainResult result{make_qnetwork(cfg, world.state_embedder->dim()), {}};
  QNetwork& policy = result.policy;
  QNetwork target = policy;
  nn::Adam adam(policy.net(), {.lr = cfg.lr});
  ReplayMemory<Transition> memory(cfg.memory_capacity);
  Rng explore = stream(cfg.seed, "agent.explore");
  Rng replay = stream(cfg.seed, "agent.replay");
  Rng order_rng = stream(cfg.seed, "agent.order");

  std::vector<std::size_t> order(train_texts.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t cursor = order.size();
  std::size_t steps = 0;

  for (std::size_t round = 0; round < cfg.num_rounds; ++round) {
    if (cursor == order.size()) {
      order_rng.shuffle(order);
      cursor = 0;
    }
    const TokenizedText& text = train_texts[order[cursor++]];
    if (cfg.variant == QVariant::kClassic && text.size() > cfg.max_positions) {
      throw PositionOverflow("text \"" + text.doc_id + "\" has " +
                             std::to_string(text.size()) + " tokens, limit is " +
                             std::to_string(cfg.max_positions));
    }
    EpisodeState state = env.reset(text);
    auto legal = env.legal(state);
    TrainLogRow row;
    row.round = round;
    row.text_id = text.doc_id;
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    Embedding s_emb = world.state_embedder->embed(state.current);
    ActionSet actions = encode_actions(state.current, legal, policy, *world.action_store);
    while (!state.done && !actions.empty()) {
      const double eps = epsilon_at(cfg, steps);
      row.epsilon = eps;
      const std::size_t a = select_action(policy, s_emb, actions, eps, explore);
      StepOutcome out = env.step(state, a);
      row.cum_reward += out.reward;

      Transition tr;
      tr.state = s_emb;
      tr.action_position = a;
      if (cfg.variant == QVariant::kActionEmbedding) {
        const auto it = std::find(actions.positions.begin(), actions.positions.end(), a);
        tr.action = actions.embeddings[static_cast<std::size_t>(it - actions.positions.begin())];
      }
      tr.reward = out.reward;
      tr.done = out.state.done;
      state = std::move(out.state);
      s_emb = world.state_embedder->embed(state.current);
      actions = state.done ? ActionSet{}
                           : encode_actions(state.current, env.legal(state), policy,
                                            *world.action_store);
      tr.next_state = s_emb;
      tr.next_actions = actions;
      memory.push(std::move(tr));
      ++steps;

      if (memory.size() >= cfg.batch_size) {
        const auto batch = memory.sample(cfg.batch_size, replay);
        loss_sum += train_step(policy, batch, target, cfg.gamma, adam, cfg.target_mode);
        ++loss_count;
      }
      if (out.flipped) row.success = true;
    }
    row.loss_mean = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    result.log.push_back(std::move(row));
    if ((round + 1) % cfg.target_update_every == 0) target = policy;
    if (observe) observe(round, policy, target);
  }
  return result;
}

// Greedy (no exploration) attack with a trained policy. Choosing positions
// needs no oracle access; queries come only from synonym selection.
inline AttackOutcome lunatc_attack(const TokenizedText& t, const AgentWorld& world,
                                   const QNetwork& policy) {
  if (policy.variant() == QVariant::kClassic && t.size() > policy.max_positions()) {
    throw PositionOverflow("text \"" + t.doc_id + "\" has " + std::to_string(t.size()) +
                           " tokens, limit is " + std::to_string(policy.max_positions()));
  }
  Rng unused(0);
  auto chooser = [&](const EpisodeState& s, std::span<const std::size_t> legal)
      -> std::optional<std::size_t> {
    const Embedding s_emb = world.state_embedder->embed(s.current);
    const ActionSet actions = encode_actions(s.current, legal, policy, *world.action_store);
    return select_action(policy, s_emb, actions, 0.0, unused);
  };
  AttackOutcome out =
      run_attack(t, world.env->oracle(), world.env->space(), chooser);
  out.method = policy.variant() == QVariant::kClassic ? "lunatc-classic" : "lunatc";
  return out;
}

// The position-indexed ablation: same training and attack loops, a network
// with one output per position.
inline TrainResult classic_train(const std::vector<TokenizedText>& train_texts,
                                 const AgentWorld& world, TrainConfig cfg) {
  cfg.variant = QVariant::kClassic;
  return lunatc_train(train_texts, world, cfg);
}

inline AttackOutcome classic_attack(const TokenizedText& t, const AgentWorld& world,
                                    const QNetwork& policy) {
  if (policy.variant() != QVariant::kClassic) {
    throw InvalidArgument("classic_attack needs a classic policy");
  }
  return lunatc_attack(t, world, policy);
}

}  // namespace lunatc
