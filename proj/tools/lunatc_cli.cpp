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


// Command-line driver. Every command reads a flat config file, writes its
// artifacts atomically under --out and leaves a frozen copy of the resolved
// config next to each artifact.

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lunatc/agent.hpp"
#include "lunatc/baselines.hpp"
#include "lunatc/config.hpp"
#include "lunatc/corpus.hpp"
#include "lunatc/env.hpp"
#include "lunatc/eval.hpp"
#include "lunatc/io.hpp"
#include "lunatc/oracle.hpp"
#include "lunatc/oracle_http.hpp"
#include "lunatc/perturb.hpp"
#include "lunatc/synthetic.hpp"
#include "lunatc/vectors.hpp"

namespace fs = std::filesystem;
using namespace lunatc;

namespace {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kUnknownMethod = 3,
  kMissingArtifact = 4,
  kSchemaMismatch = 5,
  kBackendUnavailable = 6,
  kDataError = 7,
  kIoFailure = 8,
};

class UnknownMethod : public Error {
  using Error::Error;
};
class MissingArtifact : public Error {
  using Error::Error;
};

constexpr int kSchemaVersion = 1;

const std::vector<std::string> kMethods = {"lunatc",      "lunatc-classic", "simple-search",
                                           "genfooler-tf", "genfooler-pwws", "greedy-tf",
                                           "greedy-pwws"};

bool is_known_method(const std::string& m) {
  return std::find(kMethods.begin(), kMethods.end(), m) != kMethods.end();
}
bool is_agent(const std::string& m) { return m == "lunatc" || m == "lunatc-classic"; }
bool is_genfooler(const std::string& m) { return m.rfind("genfooler-", 0) == 0; }

// Shortest text that reads back to the same double.
std::string exact(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (const auto& x : xs) {
    if (!out.empty()) out += ",";
    if constexpr (std::is_same_v<T, std::string>) {
      out += x;
    } else {
      out += std::to_string(x);
    }
  }
  return out;
}

// Reads typed values and records the effective value of every key, defaults
// included, so the frozen copy reproduces the run on its own.
class Resolver {
 public:
  explicit Resolver(const Config& in) : in_(in) {}

  double num(const std::string& k, double d) {
    const double v = in_.get_double(k, d);
    out_.set(k, exact(v));
    return v;
  }
  std::uint64_t count(const std::string& k, std::uint64_t d) {
    const auto v = in_.get_uint(k, d);
    out_.set(k, std::to_string(v));
    return v;
  }
  bool flag(const std::string& k, bool d) {
    const bool v = in_.get_bool(k, d);
    out_.set(k, v ? "true" : "false");
    return v;
  }
  std::string text(const std::string& k, const std::string& d) {
    auto v = in_.get_string(k, d);
    out_.set(k, v);
    return v;
  }
  std::vector<std::uint64_t> counts(const std::string& k, const std::vector<std::uint64_t>& d) {
    auto v = in_.get_uint_list(k, d);
    out_.set(k, join(v));
    return v;
  }
  std::vector<std::string> names(const std::string& k, const std::vector<std::string>& d) {
    auto v = in_.get_list(k, d);
    out_.set(k, join(v));
    return v;
  }
  // Paths are relative to the config file and must exist. They are frozen as
  // absolute paths so a frozen copy works from anywhere.
  fs::path input(const std::string& k, const fs::path& base) {
    fs::path p = in_.require_string(k);
    if (p.is_relative()) p = base / p;
    p = fs::absolute(p).lexically_normal();
    if (!fs::exists(p)) throw ConfigError(k + ": no such file " + p.string());
    out_.set(k, p.string());
    return p;
  }

  Config& resolved() { return out_; }

 private:
  const Config& in_;
  Config out_;
};

struct Experiment {
  Config frozen;
  std::uint64_t seed = 0;
  fs::path corpus, vectors, stopwords, lexicon;
  std::string oracle_backend;
  std::string oracle_url;
  double oracle_timeout_s = 10.0;
  std::size_t num_classes = 2;
  BuiltinTrainOptions oracle;
  SynonymConfig synonyms;
  EnvConfig env;
  SplitOptions split;
  std::string split_filter;
  std::vector<std::string> split_attackers;
  TrainConfig agent;
  std::size_t max_train_texts = 0;
  GenfoolerOptions genfooler;
  double threshold = 0.9;
  double grid_lo = 0.5, grid_hi = 0.99;
  std::size_t grid_points = 50;
  std::vector<std::uint64_t> method_seeds, baseline_seeds;
  std::vector<std::size_t> train_sizes;
  std::size_t max_test_texts = 0;
};

std::vector<std::size_t> to_sizes(const std::vector<std::uint64_t>& v) {
  return {v.begin(), v.end()};
}

Experiment resolve(const fs::path& config_path, std::optional<std::uint64_t> seed_flag) {
  Config raw;
  try {
    raw = Config::load(config_path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  } catch (const ParseError& e) {
    throw ConfigError(config_path.string() + ": " + e.what());
  }
  // Bookkeeping keys written into frozen copies; accepted and ignored.
  for (const char* k : {"run.command", "run.method", "run.schema"}) raw.get_string(k, "");
  const fs::path base = config_path.parent_path();
  Resolver r(raw);
  Experiment x;
  x.seed = r.count("seed", 0);
  if (seed_flag) {
    x.seed = *seed_flag;
    r.resolved().set("seed", std::to_string(x.seed));
  }
  x.corpus = r.input("paths.corpus", base);
  x.vectors = r.input("paths.vectors", base);
  x.stopwords = r.input("paths.stopwords", base);
  x.lexicon = r.input("paths.pos_lexicon", base);

  x.oracle_backend = r.text("oracle.backend", "builtin");
  if (x.oracle_backend != "builtin" && x.oracle_backend != "http") {
    throw ConfigError("oracle.backend must be builtin or http");
  }
  x.oracle_url = r.text("oracle.url", "");
  if (x.oracle_backend == "http" && x.oracle_url.empty()) {
    throw ConfigError("oracle.url is required for the http backend");
  }
  x.oracle_timeout_s = r.num("oracle.timeout_s", 10.0);
  x.num_classes = r.count("oracle.num_classes", 2);
  x.oracle.epochs = r.count("oracle.epochs", x.oracle.epochs);
  x.oracle.lr = r.num("oracle.lr", x.oracle.lr);
  x.oracle.hidden = r.count("oracle.hidden", x.oracle.hidden);
  x.oracle.batch_size = r.count("oracle.batch_size", x.oracle.batch_size);
  x.oracle.seed = x.seed;

  x.synonyms.word_threshold = r.num("synonym.word_threshold", x.synonyms.word_threshold);
  x.synonyms.sentence_threshold =
      r.num("synonym.sentence_threshold", x.synonyms.sentence_threshold);
  x.synonyms.pos_filter = r.flag("synonym.pos_filter", x.synonyms.pos_filter);

  x.env.noop_penalty = r.num("env.noop_penalty", x.env.noop_penalty);
  x.env.sim_scale = r.num("env.sim_scale", x.env.sim_scale);

  x.split.direction_label = r.count("split.direction_label", 0);
  x.split.train_fraction = r.num("split.train_fraction", x.split.train_fraction);
  x.split_filter = r.text("split.filter_attack", "greedy-tf");
  x.split_attackers = r.names("split.attackers", {"greedy-tf", "simple-search"});

  TrainConfig& a = x.agent;
  const auto mode = r.text("agent.target_mode", target_mode_name(a.target_mode));
  if (auto m = parse_target_mode(mode)) {
    a.target_mode = *m;
  } else {
    throw ConfigError("agent.target_mode: unknown mode '" + mode + "'");
  }
  a.gamma = r.num("agent.gamma", a.gamma);
  a.lr = r.num("agent.lr", a.lr);
  a.batch_size = r.count("agent.batch_size", a.batch_size);
  a.eps_start = r.num("agent.eps_start", a.eps_start);
  a.eps_end = r.num("agent.eps_end", a.eps_end);
  a.eps_decay = r.num("agent.eps_decay", a.eps_decay);
  a.target_update_every = r.count("agent.target_update_every", a.target_update_every);
  a.num_rounds = r.count("agent.num_rounds", a.num_rounds);
  a.max_turns = r.count("agent.max_turns", a.max_turns);
  a.memory_capacity = r.count("agent.memory_capacity", a.memory_capacity);
  a.alpha = r.num("agent.alpha", a.alpha);
  a.hidden = to_sizes(r.counts("agent.hidden", {a.hidden.begin(), a.hidden.end()}));
  a.max_positions = r.count("agent.max_positions", a.max_positions);
  a.seed = x.seed;
  a.validate();
  x.max_train_texts = r.count("agent.max_train_texts", 0);

  GenfoolerOptions& g = x.genfooler;
  g.folds = r.count("genfooler.folds", g.folds);
  g.max_epochs = r.count("genfooler.max_epochs", g.max_epochs);
  g.lr = r.num("genfooler.lr", g.lr);
  g.batch_size = r.count("genfooler.batch_size", g.batch_size);
  g.hidden = to_sizes(r.counts("genfooler.hidden", {g.hidden.begin(), g.hidden.end()}));
  g.max_positions = r.count("genfooler.max_positions", g.max_positions);
  g.seed = x.seed;

  x.threshold = r.num("eval.threshold", x.threshold);
  x.grid_lo = r.num("eval.grid_lo", x.grid_lo);
  x.grid_hi = r.num("eval.grid_hi", x.grid_hi);
  x.grid_points = r.count("eval.grid_points", x.grid_points);
  if (x.grid_points == 0) throw ConfigError("eval.grid_points must be positive");
  x.method_seeds = r.counts("eval.method_seeds", {0, 1, 2});
  x.baseline_seeds = r.counts("eval.baseline_seeds", {0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  x.train_sizes = to_sizes(r.counts("eval.train_sizes", {0, 100, 200, 300, 400, 500}));
  x.max_test_texts = r.count("eval.max_test_texts", 0);

  if (auto unread = raw.unread_keys(); !unread.empty()) {
    throw ConfigError("unknown config key '" + unread.front() + "'");
  }
  x.frozen = r.resolved();
  x.frozen.set("run.schema", std::to_string(kSchemaVersion));
  return x;
}

// Writes `artifact` and its frozen config `<stem>.config` beside it.
void write_frozen(const Experiment& x, const fs::path& artifact, const std::string& command,
                  const std::string& method) {
  Config c = x.frozen;
  c.set("run.command", command);
  c.set("run.method", method);
  fs::path p = artifact;
  p.replace_extension(".config");
  io::write_file_atomic(p, c.text());
}

// ---------------------------------------------------------------------------
// Loaded inputs shared by most commands. Not movable: the embedder and search
// space point into the vector store.

struct Workspace {
  WordVectorStore vectors;
  std::shared_ptr<MeanVectorEmbedder> embedder;
  std::unique_ptr<SearchSpace> space;
  std::unique_ptr<ClassifierHandle> oracle;
  std::unique_ptr<AttackEnv> env;
};

std::unique_ptr<Workspace> open_inputs(const Experiment& x) {
  auto w = std::make_unique<Workspace>();
  w->vectors = load_vectors(x.vectors);
  w->embedder = std::make_shared<MeanVectorEmbedder>(w->vectors);
  SynonymConfig sc = x.synonyms;
  sc.stopwords = load_stopwords(x.stopwords);
  w->space = std::make_unique<SearchSpace>(w->vectors, *w->embedder, sc,
                                           load_pos_lexicon(x.lexicon));
  return w;
}

fs::path oracle_path(const fs::path& out) { return out / "oracle.json"; }
fs::path split_path(const fs::path& out) { return out / "split.jsonl"; }
fs::path policy_path(const fs::path& out, const std::string& method, std::uint64_t seed) {
  return out / "policies" / (method + "-seed" + std::to_string(seed) + ".json");
}
fs::path outcome_path(const fs::path& out, const std::string& method, std::uint64_t seed) {
  return out / "outcomes" / (method + "-seed" + std::to_string(seed) + ".jsonl");
}

nlohmann::json read_json(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw MissingArtifact("missing " + what + " " + p.string());
  try {
    return nlohmann::json::parse(io::read_file(p));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaMismatch(p.string() + ": " + e.what());
  }
}

std::unique_ptr<Workspace> open_with_oracle(const Experiment& x, const fs::path& out) {
  auto w = open_inputs(x);
  std::shared_ptr<const ClassifierBackend> backend;
  if (x.oracle_backend == "http") {
    backend = std::make_shared<HttpBackend>(
        x.oracle_url, x.num_classes,
        std::chrono::milliseconds(static_cast<long long>(x.oracle_timeout_s * 1000.0)));
  } else {
    backend = std::make_shared<MlpClassifier>(
        nn::mlp_from_json(read_json(oracle_path(out), "oracle checkpoint")), w->embedder);
  }
  w->oracle = std::make_unique<ClassifierHandle>(backend);
  w->env = std::make_unique<AttackEnv>(*w->oracle, *w->space, x.env);
  return w;
}

DatasetSplit read_split(const fs::path& out) {
  const auto p = split_path(out);
  if (!fs::exists(p)) throw MissingArtifact("missing split " + p.string() + "; run prepare");
  return load_split(p);
}

std::vector<TokenizedText> tokenize_all(const std::vector<Document>& docs, std::size_t limit) {
  std::vector<TokenizedText> out;
  for (const auto& d : docs) {
    if (limit && out.size() == limit) break;
    out.push_back(tokenize(d));
  }
  return out;
}

ImportanceFn importance_for(const std::string& method) {
  const auto kind = method.substr(method.rfind('-') + 1);
  if (kind == "tf") return tf_importance();
  if (kind == "pwws") return pwws_importance();
  throw UnknownMethod("no importance function for " + method);
}

// Seeds a command runs: the --seed flag if given, else the configured list.
std::vector<std::uint64_t> seeds_for(const Experiment& x, const std::string& method,
                                     bool seed_flag) {
  if (seed_flag) return {x.seed};
  if (method == "simple-search") return x.baseline_seeds;
  if (method.rfind("greedy-", 0) == 0) return {x.seed};  // deterministic
  return x.method_seeds;
}

Experiment with_seed(Experiment x, std::uint64_t seed) {
  x.seed = seed;
  x.agent.seed = seed;
  x.genfooler.seed = seed;
  x.oracle.seed = seed;
  x.frozen.set("seed", std::to_string(seed));
  return x;
}

// ---------------------------------------------------------------------------
// Commands.

struct Args {
  fs::path config;
  fs::path out = "out";
  std::optional<std::uint64_t> seed;
  std::string method;
  std::string host = "127.0.0.1";
  int port = 8080;
};

void cmd_train_oracle(const Args& args) {
  const auto x = resolve(args.config, args.seed);
  if (x.oracle_backend != "builtin") {
    throw ConfigError("oracle.backend is http; there is no builtin model to train");
  }
  auto w = open_inputs(x);
  const auto model = train_builtin(load_corpus(x.corpus), *w->embedder, x.oracle);
  const auto p = oracle_path(args.out);
  io::write_file_atomic(p, nn::to_json(model.net).dump() + "\n");
  write_frozen(x, p, "train-oracle", "");
  std::printf("oracle trained: train accuracy %.4f -> %s\n", model.train_accuracy,
              p.string().c_str());
}

void cmd_prepare(const Args& args) {
  const auto x = resolve(args.config, args.seed);
  auto w = open_with_oracle(x, args.out);
  const auto& oracle = *w->oracle;
  const auto& space = *w->space;
  std::vector<FilterAttack> attackers;
  for (const auto& name : x.split_attackers) {
    if (name == "simple-search") {
      const auto seed = x.seed;
      attackers.push_back({name, [&oracle, &space, seed](const Document& d,
                                                         const TokenizedText& t) {
                             Rng rng = stream(seed, "prepare.simple_search:" + d.id);
                             return simple_search_attack(t, oracle, space, rng).success;
                           }});
    } else if (name == "greedy-tf" || name == "greedy-pwws") {
      const auto fn = importance_for(name);
      attackers.push_back({name, [&oracle, &space, fn](const Document&,
                                                       const TokenizedText& t) {
                             return per_text_greedy_attack(t, oracle, space, fn).success;
                           }});
    } else {
      throw UnknownMethod("split.attackers: '" + name + "' cannot filter texts");
    }
  }
  const auto split = build_attack_sets(
      load_corpus(x.corpus), [&](const TokenizedText& t) { return oracle.predict_label(t); },
      attackers, x.split_filter, x.split);
  const auto p = split_path(args.out);
  save_split(split, p);
  write_frozen(x, p, "prepare", "");
  std::printf("split: %zu train, %zu test -> %s\n", split.train.size(), split.test.size(),
              p.string().c_str());
}

void train_one(const Experiment& x, const Workspace& w, const std::vector<TokenizedText>& texts,
               const std::string& method, const fs::path& out) {
  const auto p = policy_path(out, method, x.seed);
  if (is_agent(method)) {
    TrainConfig cfg = x.agent;
    cfg.variant = method == "lunatc" ? QVariant::kActionEmbedding : QVariant::kClassic;
    const AgentWorld world{w.env.get(), w.embedder.get(), &w.vectors};
    const auto result = lunatc_train(texts, world, cfg);
    io::write_file_atomic(p, to_json(result.policy, to_json(cfg)).dump() + "\n");
    fs::path log = p;
    log.replace_extension(".train_log.csv");
    io::write_file_atomic(log, train_log_csv(result.log));
    std::size_t wins = 0;
    for (const auto& row : result.log) wins += row.success;
    std::printf("%s seed %llu: %zu rounds, %zu flips -> %s\n", method.c_str(),
                static_cast<unsigned long long>(x.seed), result.log.size(), wins,
                p.string().c_str());
  } else {
    const auto model = genfooler_train(texts, importance_for(method),
                                       method.substr(method.rfind('-') + 1), *w.oracle,
                                       *w.space, *w.embedder, x.genfooler);
    io::write_file_atomic(p, to_json(model).dump() + "\n");
    std::printf("%s seed %llu: %zu epochs -> %s\n", method.c_str(),
                static_cast<unsigned long long>(x.seed), model.epochs, p.string().c_str());
  }
  write_frozen(x, p, "train-policy", method);
}

void cmd_train_policy(const Args& args) {
  const std::string method = args.method.empty() ? "lunatc" : args.method;
  if (!is_known_method(method)) throw UnknownMethod("unknown method '" + method + "'");
  if (!is_agent(method) && !is_genfooler(method)) {
    throw UnknownMethod("'" + method + "' has no policy to train");
  }
  const auto base = resolve(args.config, args.seed);
  auto w = open_with_oracle(base, args.out);
  const auto texts = tokenize_all(read_split(args.out).train_documents(), base.max_train_texts);
  for (auto seed : seeds_for(base, method, args.seed.has_value())) {
    train_one(with_seed(base, seed), *w, texts, method, args.out);
  }
}

// A trained ordering model, loaded once per seed.
struct Attacker {
  std::string method;
  std::optional<QNetwork> policy;
  std::optional<GenfoolerModel> genfooler;
};

Attacker load_attacker(const std::string& method, const fs::path& out, std::uint64_t seed) {
  Attacker a{method, std::nullopt, std::nullopt};
  if (is_agent(method)) {
    a.policy = qnetwork_from_json(read_json(policy_path(out, method, seed), "policy checkpoint"));
    const auto want = method == "lunatc" ? QVariant::kActionEmbedding : QVariant::kClassic;
    if (a.policy->variant() != want) {
      throw SchemaMismatch("checkpoint variant does not match method " + method);
    }
  } else if (is_genfooler(method)) {
    a.genfooler =
        genfooler_from_json(read_json(policy_path(out, method, seed), "genfooler checkpoint"));
  }
  return a;
}

void attack_one(const Experiment& x, const Workspace& w, const std::vector<TokenizedText>& texts,
                const std::string& method, const fs::path& out, const std::string& command) {
  const Attacker a = load_attacker(method, out, x.seed);
  const AgentWorld world{w.env.get(), w.embedder.get(), &w.vectors};
  std::vector<AttackOutcome> outcomes;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const auto& t = texts[i];
    AttackOutcome o;
    if (a.policy) {
      o = lunatc_attack(t, world, *a.policy);
    } else if (a.genfooler) {
      o = genfooler_attack(t, *a.genfooler, *w.embedder, *w.oracle, *w.space);
    } else if (method == "simple-search") {
      Rng rng = stream(x.seed, "search.ordering", i);
      o = simple_search_attack(t, *w.oracle, *w.space, rng);
    } else {
      o = per_text_greedy_attack(t, *w.oracle, *w.space, importance_for(method), method);
    }
    o.method = method;
    o.seed = x.seed;
    outcomes.push_back(std::move(o));
  }
  const auto p = outcome_path(out, method, x.seed);
  save_outcomes(outcomes, p);
  write_frozen(x, p, command, method);
  std::printf("%s seed %llu: success rate %.4f at %.2f over %zu texts -> %s\n", method.c_str(),
              static_cast<unsigned long long>(x.seed),
              outcomes.empty() ? 0.0 : eval::success_rate(outcomes, x.threshold), x.threshold,
              outcomes.size(), p.string().c_str());
}

void cmd_attack(const Args& args, const std::string& command) {
  std::string method = args.method;
  if (method.empty()) method = command == "baseline" ? "simple-search" : "lunatc";
  if (!is_known_method(method)) throw UnknownMethod("unknown method '" + method + "'");
  if (command == "baseline" && is_agent(method)) {
    throw UnknownMethod("'" + method + "' is not a baseline; use attack");
  }
  const auto base = resolve(args.config, args.seed);
  auto w = open_with_oracle(base, args.out);
  const auto texts = tokenize_all(read_split(args.out).test_documents(), base.max_test_texts);
  for (auto seed : seeds_for(base, method, args.seed.has_value())) {
    attack_one(with_seed(base, seed), *w, texts, method, args.out, command);
  }
}

// method -> seed -> outcomes, read from every outcome file under out/outcomes.
using OutcomeTable = std::map<std::string, std::map<std::uint64_t, std::vector<AttackOutcome>>>;

OutcomeTable read_outcomes(const fs::path& out) {
  const fs::path dir = out / "outcomes";
  if (!fs::is_directory(dir)) throw MissingArtifact("no outcomes under " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".jsonl") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  OutcomeTable table;
  for (const auto& f : files) {
    for (auto& o : load_outcomes(f)) table[o.method][o.seed].push_back(std::move(o));
  }
  if (table.empty()) throw EmptyOutcomes("no outcome records under " + dir.string());
  return table;
}

std::vector<std::vector<AttackOutcome>> runs_of(const OutcomeTable& t, const std::string& m) {
  std::vector<std::vector<AttackOutcome>> runs;
  if (auto it = t.find(m); it != t.end()) {
    for (const auto& [seed, outcomes] : it->second) runs.push_back(outcomes);
  }
  return runs;
}

std::vector<double> thresholds_of(const Experiment& x) {
  auto grid = eval::threshold_grid(x.grid_lo, x.grid_hi, x.grid_points);
  grid.push_back(x.threshold);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

// Success-vs-threshold curves: normalized by simple search when it is
// present, raw success rates with a std band otherwise.
std::vector<eval::Curve> threshold_curves(const Experiment& x, const OutcomeTable& table) {
  const auto grid = eval::threshold_grid(x.grid_lo, x.grid_hi, x.grid_points);
  std::vector<eval::Curve> curves;
  const auto baseline = runs_of(table, "simple-search");
  for (const auto& [method, by_seed] : table) {
    const auto runs = runs_of(table, method);
    if (!baseline.empty()) {
      curves.push_back(eval::normalized_curve(method, runs, baseline, grid));
      continue;
    }
    eval::Curve c{method, "std", {}};
    for (double th : grid) {
      std::vector<double> rates;
      for (const auto& run : runs) rates.push_back(eval::success_rate(run, th));
      const double m = eval::mean_of(rates), s = eval::stddev_of(rates);
      c.points.push_back({th, m, m - s, m + s});
    }
    curves.push_back(std::move(c));
  }
  return curves;
}

void cmd_evaluate(const Args& args) {
  const auto x = resolve(args.config, args.seed);
  const auto table = read_outcomes(args.out);
  const fs::path dir = args.out / "eval";
  std::vector<eval::EvalRow> rows;
  for (const auto& [method, by_seed] : table) {
    for (const auto& [seed, outcomes] : by_seed) {
      for (double th : thresholds_of(x)) {
        rows.push_back(eval::make_eval_row(method, seed, outcomes, th));
      }
    }
  }
  eval::emit_csv(rows, dir / "eval.csv");
  std::map<std::string, std::vector<AttackOutcome>> merged;
  for (const auto& [method, by_seed] : table) {
    for (const auto& [seed, outcomes] : by_seed) {
      merged[method].insert(merged[method].end(), outcomes.begin(), outcomes.end());
    }
  }
  io::write_file_atomic(dir / "access.csv", eval::access_csv(eval::oracle_access_report(merged)));
  io::write_file_atomic(dir / "curves.csv", eval::curve_csv(threshold_curves(x, table)));
  write_frozen(x, dir / "eval.csv", "evaluate", "");
  std::printf("evaluated %zu methods -> %s\n", table.size(), dir.string().c_str());
}

std::string summary_csv(const Experiment& x, const OutcomeTable& table) {
  std::string out =
      "method,n_seeds,threshold,mean_success_rate,std_success_rate,mean_similarity,"
      "mean_label_queries,mean_logit_queries,mean_ordering_logit_queries\n";
  char buf[256];
  for (const auto& [method, by_seed] : table) {
    std::vector<double> rates, sims, labels, logits, ordering;
    for (const auto& [seed, outcomes] : by_seed) {
      const auto row = eval::make_eval_row(method, seed, outcomes, x.threshold);
      rates.push_back(row.success_rate);
      sims.push_back(row.mean_similarity);
      labels.push_back(row.mean_label_queries);
      logits.push_back(row.mean_logit_queries);
      double ord = 0.0;
      for (const auto& o : outcomes) ord += static_cast<double>(o.ordering_queries.logit_queries);
      ordering.push_back(ord / static_cast<double>(outcomes.size()));
    }
    std::snprintf(buf, sizeof buf, ",%zu,%.4f,%.6f,%.6f,%.6f,%.4f,%.4f,%.4f\n", by_seed.size(),
                  x.threshold, eval::mean_of(rates), eval::stddev_of(rates), eval::mean_of(sims),
                  eval::mean_of(labels), eval::mean_of(logits), eval::mean_of(ordering));
    out += method + buf;
  }
  return out;
}

void cmd_report(const Args& args) {
  const auto x = resolve(args.config, args.seed);
  const auto table = read_outcomes(args.out);
  const fs::path dir = args.out / "report";
  io::write_file_atomic(dir / "report.csv", summary_csv(x, table));
  const bool normalized = table.count("simple-search") > 0;
  eval::emit_svg_lineplot(threshold_curves(x, table),
                          {"Success rate vs similarity threshold", "similarity threshold",
                           normalized ? "success rate / simple search" : "success rate"},
                          dir / "success_vs_threshold.svg");
  write_frozen(x, dir / "report.csv", "report", "");
  std::printf("report -> %s\n", dir.string().c_str());
}

void cmd_sweep(const Args& args) {
  const std::string method = args.method.empty() ? "lunatc" : args.method;
  if (!is_known_method(method)) throw UnknownMethod("unknown method '" + method + "'");
  if (!is_agent(method)) throw UnknownMethod("training-size sweeps need lunatc or lunatc-classic");
  const auto x = resolve(args.config, args.seed);
  auto w = open_with_oracle(x, args.out);
  const auto split = read_split(args.out);
  const auto train = tokenize_all(split.train_documents(), 0);
  const auto test = tokenize_all(split.test_documents(), x.max_test_texts);
  const AgentWorld world{w->env.get(), w->embedder.get(), &w->vectors};
  const auto seeds = args.seed ? std::vector<std::uint64_t>{x.seed} : x.method_seeds;
  const auto curve = eval::training_size_sweep(
      method, x.train_sizes, train.size(), seeds, x.threshold,
      [&](std::size_t size, std::uint64_t seed) {
        TrainConfig cfg = x.agent;
        cfg.seed = seed;
        cfg.variant = method == "lunatc" ? QVariant::kActionEmbedding : QVariant::kClassic;
        if (size == 0) cfg.num_rounds = 0;
        const std::vector<TokenizedText> subset(train.begin(),
                                                train.begin() + static_cast<long>(size));
        const auto policy = lunatc_train(subset, world, cfg).policy;
        std::vector<AttackOutcome> outcomes;
        for (const auto& t : test) outcomes.push_back(lunatc_attack(t, world, policy));
        return outcomes;
      });
  const auto csv = args.out / "eval" / ("sweep-" + method + ".csv");
  io::write_file_atomic(csv, eval::curve_csv({curve}));
  eval::emit_svg_lineplot({curve},
                          {"Success rate vs training texts", "training texts", "success rate"},
                          args.out / "report" / ("training_size-" + method + ".svg"));
  write_frozen(x, csv, "sweep", method);
  std::printf("sweep -> %s\n", csv.string().c_str());
}

void cmd_serve_oracle(const Args& args) {
  const auto x = resolve(args.config, args.seed);
  if (x.oracle_backend != "builtin") throw ConfigError("serve-oracle serves the builtin model");
  auto w = open_inputs(x);
  auto backend = std::make_shared<MlpClassifier>(
      nn::mlp_from_json(read_json(oracle_path(args.out), "oracle checkpoint")), w->embedder);
  ClassifierServer server(backend);
  std::printf("serving /logits and /labels on %s:%d\n", args.host.c_str(), args.port);
  std::fflush(stdout);
  server.listen(args.host, args.port);
}

void cmd_synth(const Args& args) {
  synthetic::Options o;
  o.num_docs = 1600;
  o.seed = args.seed.value_or(0);
  const auto world = synthetic::generate(o);
  save_corpus(world.corpus, args.out / "corpus.jsonl");
  io::write_file_atomic(args.out / "vectors.txt", vectors_text(world.vectors));
  io::write_file_atomic(args.out / "stopwords.txt", synthetic::stopwords_text());
  io::write_file_atomic(args.out / "pos_lexicon.txt", synthetic::lexicon_text(world));
  std::printf("synthetic benchmark: %zu documents, %zu words -> %s\n", world.corpus.size(),
              world.vectors.size(), args.out.string().c_str());
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const UnknownMethod*>(&e)) return kUnknownMethod;
  if (dynamic_cast<const MissingArtifact*>(&e)) return kMissingArtifact;
  if (dynamic_cast<const SchemaMismatch*>(&e) || dynamic_cast<const ParseError*>(&e) ||
      dynamic_cast<const DimensionMismatch*>(&e)) {
    return kSchemaMismatch;
  }
  if (dynamic_cast<const BackendUnavailable*>(&e)) return kBackendUnavailable;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const InvalidArgument*>(&e)) {
    return kUsage;
  }
  if (dynamic_cast<const EmptySplit*>(&e) || dynamic_cast<const DegenerateData*>(&e) ||
      dynamic_cast<const TooFewTexts*>(&e) || dynamic_cast<const EmptyOutcomes*>(&e) ||
      dynamic_cast<const SizeExceedsCorpus*>(&e) || dynamic_cast<const PositionOverflow*>(&e)) {
    return kDataError;
  }
  if (dynamic_cast<const IoError*>(&e)) return kIoFailure;
  return kFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Universal adversarial text attacks learned by deep Q-learning."};
  app.require_subcommand(1);
  Args args;
  std::uint64_t seed = 0;

  auto add = [&](const std::string& name, const std::string& help, bool needs_config,
                 bool has_method) {
    auto* sub = app.add_subcommand(name, help);
    auto* cfg = sub->add_option("--config", args.config, "Config file (key = value)");
    if (needs_config) cfg->required()->check(CLI::ExistingFile);
    sub->add_option("--out", args.out, "Output directory")->capture_default_str();
    sub->add_option("--seed", seed, "Root seed (overrides the config)");
    if (has_method) sub->add_option("--method", args.method, "Attack method");
    return sub;
  };
  add("prepare", "Filter the corpus into attackable train and test sets", true, false);
  add("train-oracle", "Train the builtin classifier", true, false);
  add("train-policy", "Train a LUNATC policy or a GenFooler regressor", true, true);
  add("attack", "Attack the test set with any method", true, true);
  add("baseline", "Attack the test set with a baseline method", true, true);
  add("evaluate", "Aggregate outcomes into eval, access and curve tables", true, false);
  add("report", "Summary table and success-vs-threshold plot", true, false);
  add("sweep", "Success rate as a function of the number of training texts", true, true);
  auto* serve = add("serve-oracle", "Serve the builtin classifier over HTTP", true, false);
  serve->add_option("--host", args.host)->capture_default_str();
  serve->add_option("--port", args.port)->capture_default_str();
  add("synth", "Write the synthetic benchmark files", false, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  const auto* sub = app.get_subcommands().front();
  if (sub->count("--seed")) args.seed = seed;
  const std::string name = sub->get_name();
  try {
    if (name == "prepare") {
      cmd_prepare(args);
    } else if (name == "train-oracle") {
      cmd_train_oracle(args);
    } else if (name == "train-policy") {
      cmd_train_policy(args);
    } else if (name == "attack" || name == "baseline") {
      cmd_attack(args, name);
    } else if (name == "evaluate") {
      cmd_evaluate(args);
    } else if (name == "report") {
      cmd_report(args);
    } else if (name == "sweep") {
      cmd_sweep(args);
    } else if (name == "serve-oracle") {
      cmd_serve_oracle(args);
    } else if (name == "synth") {
      cmd_synth(args);
    }
  } catch (const std::exception& e) {
    std::cerr << "lunatc " << name << ": " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kOk;
}
