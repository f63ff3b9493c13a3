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
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lunatc/corpus.hpp"
#include "lunatc/error.hpp"
#include "lunatc/io.hpp"
#include "lunatc/oracle.hpp"
#include "lunatc/perturb.hpp"
#include "lunatc/vectors.hpp"

namespace lunatc {

enum class DoneReason { kRunning, kFlipped, kNoActions, kMaxTurns };

struct EpisodeState {
  TokenizedText initial;
  TokenizedText current;
  // Positions acted on, in order. No-op actions are included.
  std::vector<std::size_t> replaced;
  ClassIndex y_tilde = 0;
  std::size_t turn = 0;
  bool done = false;
  DoneReason reason = DoneReason::kRunning;
  // Margin of `current` w.r.t. y_tilde once it has been observed.
  std::optional<double> margin;
};

struct StepOutcome {
  double reward = 0.0;
  // The margin-decrease component of the reward (0 for no-ops).
  double logit_reward = 0.0;
  EpisodeState state;
  bool flipped = false;
  bool changed = false;
};

struct EnvConfig {
  double noop_penalty = 0.2;
  double sim_scale = 100.0;
  std::optional<std::size_t> max_turns;
};

// Episodic attack environment over one text. Stateless itself; episodes live
// in EpisodeState values owned by the caller.
class AttackEnv {
 public:
  AttackEnv(const ClassifierHandle& oracle, const SearchSpace& space, EnvConfig config)
      : oracle_(&oracle), space_(&space), config_(config) {}

  const ClassifierHandle& oracle() const { return *oracle_; }
  const SearchSpace& space() const { return *space_; }
  const EnvConfig& config() const { return config_; }

  EpisodeState reset(const TokenizedText& t, QueryTally* tally = nullptr) const {
    EpisodeState s;
    s.initial = t;
    s.current = t;
    s.y_tilde = oracle_->predict_label(t, tally);
    return s;
  }

  std::vector<std::size_t> legal(const EpisodeState& s) const {
    return legal_actions(s.current, s.replaced, *space_);
  }

  // Reward:
  //   unchanged text          -> -noop_penalty
  //   changed, same class     -> m(S) - max(m(S'), 0)            (r_logit)
  //   changed, class flipped  -> r_logit + sim_scale * sim(S_init, S')
  StepOutcome step(const EpisodeState& state, std::size_t i,
                   QueryTally* tally = nullptr) const {
    if (state.done) throw EpisodeDone("episode already finished");
    const auto legal_now = legal(state);
    if (std::find(legal_now.begin(), legal_now.end(), i) == legal_now.end()) {
      throw IllegalAction("position " + std::to_string(i) + " is not a legal action");
    }
    StepOutcome out;
    out.state = state;
    EpisodeState& s = out.state;
    if (!s.margin) s.margin = oracle_->margin(s.current, s.y_tilde, tally);

    const PerturbResult r =
        apply_action(s.current, i, s.initial, s.y_tilde, *oracle_, *space_, tally);
    s.replaced.push_back(i);
    ++s.turn;
    out.changed = r.changed;
    if (!r.changed) {
      out.reward = -config_.noop_penalty;
    } else {
      out.logit_reward = *s.margin - std::max(r.margin, 0.0);
      out.reward = out.logit_reward;
      s.current = r.text;
      s.margin = r.margin;
      if (r.flipped) {
        out.flipped = true;
        out.reward += config_.sim_scale *
                      semantic_sim(s.initial, s.current, space_->similarity());
        s.done = true;
        s.reason = DoneReason::kFlipped;
        return out;
      }
    }
    if (legal(s).empty()) {
      s.done = true;
      s.reason = DoneReason::kNoActions;
    } else if (config_.max_turns && s.turn >= *config_.max_turns) {
      s.done = true;
      s.reason = DoneReason::kMaxTurns;
    }
    return out;
  }

 private:
  const ClassifierHandle* oracle_;
  const SearchSpace* space_;
  EnvConfig config_;
};

struct AttackOutcome {
  std::string doc_id;
  std::string method;
  std::uint64_t seed = 0;
  TokenizedText final_text;
  bool success = false;
  double similarity = 0.0;
  std::vector<std::size_t> actions;
  // All queries for this attack, and the subset spent deciding the order of
  // positions (as opposed to choosing synonyms).
  QueryTally queries;
  QueryTally ordering_queries;

  double score() const { return success ? similarity : 0.0; }
  bool operator==(const AttackOutcome&) const = default;
};

// Picks the next position given the current state and its legal positions, or
// nullopt to stop.
using ActionChooser = std::function<std::optional<std::size_t>(
    const EpisodeState&, std::span<const std::size_t>)>;

// Runs delta along the chooser's positions until the class flips or no legal
// action is left. `ordering_queries` are queries already spent by the caller
// to derive its ordering; they are added to the outcome.
inline AttackOutcome run_attack(const TokenizedText& t, const ClassifierHandle& oracle,
                                const SearchSpace& space, const ActionChooser& choose,
                                QueryTally ordering_queries = {}) {
  AttackOutcome out;
  out.doc_id = t.doc_id;
  out.ordering_queries = ordering_queries;
  QueryTally tally = ordering_queries;
  EpisodeState s;
  s.initial = t;
  s.current = t;
  s.y_tilde = oracle.predict_label(t, &tally);
  while (true) {
    const auto legal = legal_actions(s.current, s.replaced, space);
    if (legal.empty()) break;
    const auto pick = choose(s, legal);
    if (!pick) break;
    if (std::find(legal.begin(), legal.end(), *pick) == legal.end()) {
      throw IllegalAction("chooser returned illegal position " + std::to_string(*pick));
    }
    const PerturbResult r =
        apply_action(s.current, *pick, s.initial, s.y_tilde, oracle, space, &tally);
    s.replaced.push_back(*pick);
    ++s.turn;
    if (r.changed) s.current = r.text;
    if (r.flipped) {
      out.success = true;
      break;
    }
  }
  out.final_text = s.current;
  out.final_text.doc_id = t.doc_id;
  out.actions = s.replaced;
  out.similarity = semantic_sim(t, s.current, space.similarity());
  out.queries = tally;
  return out;
}

// Applies `ordering` in sequence and stops at the first flip. Entries that are
// not legal when reached (out of range, unreplaceable, repeated) are skipped.
inline AttackOutcome rollout(std::span<const std::size_t> ordering, const TokenizedText& t,
                             const ClassifierHandle& oracle, const SearchSpace& space,
                             QueryTally ordering_queries = {}) {
  std::size_t next = 0;
  auto chooser = [&](const EpisodeState&, std::span<const std::size_t> legal)
      -> std::optional<std::size_t> {
    while (next < ordering.size()) {
      const std::size_t i = ordering[next++];
      if (std::find(legal.begin(), legal.end(), i) != legal.end()) return i;
    }
    return std::nullopt;
  };
  return run_attack(t, oracle, space, chooser, ordering_queries);
}

// ---------------------------------------------------------------------------
// Outcome files: one JSON object per line.

inline nlohmann::json outcome_json(const AttackOutcome& o) {
  nlohmann::json j;
  j["doc_id"] = o.doc_id;
  j["success"] = o.success;
  j["similarity"] = o.similarity;
  j["actions"] = o.actions;
  j["final_text"] = o.final_text.joined();
  j["label_queries"] = o.queries.label_queries;
  j["logit_queries"] = o.queries.logit_queries;
  j["ordering_label_queries"] = o.ordering_queries.label_queries;
  j["ordering_logit_queries"] = o.ordering_queries.logit_queries;
  j["method"] = o.method;
  j["seed"] = o.seed;
  return j;
}

inline AttackOutcome outcome_from_json(const nlohmann::json& j) {
  AttackOutcome o;
  o.doc_id = j.at("doc_id").get<std::string>();
  o.success = j.at("success").get<bool>();
  o.similarity = j.at("similarity").get<double>();
  o.actions = j.at("actions").get<std::vector<std::size_t>>();
  o.final_text = tokenize(j.at("final_text").get<std::string>(), o.doc_id);
  o.queries.label_queries = j.at("label_queries").get<std::uint64_t>();
  o.queries.logit_queries = j.at("logit_queries").get<std::uint64_t>();
  o.ordering_queries.label_queries = j.value("ordering_label_queries", std::uint64_t{0});
  o.ordering_queries.logit_queries = j.value("ordering_logit_queries", std::uint64_t{0});
  o.method = j.at("method").get<std::string>();
  o.seed = j.at("seed").get<std::uint64_t>();
  return o;
}

inline std::string outcomes_jsonl(const std::vector<AttackOutcome>& outcomes) {
  std::string out;
  for (const auto& o : outcomes) out += outcome_json(o).dump() + "\n";
  return out;
}

inline void save_outcomes(const std::vector<AttackOutcome>& outcomes,
                          const std::filesystem::path& path) {
  io::write_file_atomic(path, outcomes_jsonl(outcomes));
}

inline std::vector<AttackOutcome> parse_outcomes(std::istream& in) {
  std::vector<AttackOutcome> out;
  detail::for_each_jsonl(in, [&](const nlohmann::json& j, std::size_t line) {
    try {
      out.push_back(outcome_from_json(j));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(e.what(), line);
    }
  });
  return out;
}

inline std::vector<AttackOutcome> load_outcomes(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path));
  return parse_outcomes(in);
}

}  // namespace lunatc
