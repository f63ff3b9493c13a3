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
#include <limits>
#include <optional>
#include <shared_mutex>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "lunatc/corpus.hpp"
#include "lunatc/error.hpp"
#include "lunatc/io.hpp"
#include "lunatc/oracle.hpp"
#include "lunatc/vectors.hpp"

namespace lunatc {

enum class PosTag { kNoun, kVerb, kAdj, kAdv, kOther };

inline std::optional<PosTag> parse_pos_tag(std::string_view s) {
  if (s == "NOUN") return PosTag::kNoun;
  if (s == "VERB") return PosTag::kVerb;
  if (s == "ADJ") return PosTag::kAdj;
  if (s == "ADV") return PosTag::kAdv;
  if (s == "OTHER") return PosTag::kOther;
  return std::nullopt;
}

inline const char* pos_tag_name(PosTag t) {
  switch (t) {
    case PosTag::kNoun: return "NOUN";
    case PosTag::kVerb: return "VERB";
    case PosTag::kAdj: return "ADJ";
    case PosTag::kAdv: return "ADV";
    case PosTag::kOther: return "OTHER";
  }
  return "OTHER";
}

class PosLexicon {
 public:
  void set(std::string word, PosTag tag) { tags_[std::move(word)] = tag; }
  PosTag lookup(std::string_view word) const {
    auto it = tags_.find(std::string(word));
    return it == tags_.end() ? PosTag::kOther : it->second;
  }
  std::size_t size() const { return tags_.size(); }

 private:
  std::unordered_map<std::string, PosTag> tags_;
};

// Lines of `word TAG`.
inline PosLexicon parse_pos_lexicon(std::istream& in) {
  PosLexicon lex;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string word, tag, extra;
    if (!(fields >> word)) continue;
    if (!(fields >> tag) || (fields >> extra)) {
      throw ParseError("expected `word TAG`", line_no);
    }
    const auto parsed = parse_pos_tag(tag);
    if (!parsed) throw ParseError("unknown tag \"" + tag + "\"", line_no);
    lex.set(word, *parsed);
  }
  return lex;
}

inline PosLexicon load_pos_lexicon(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path));
  return parse_pos_lexicon(in);
}

inline std::unordered_set<std::string> parse_stopwords(std::istream& in) {
  std::unordered_set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::string word;
    if (fields >> word) out.insert(word);
  }
  return out;
}

inline std::unordered_set<std::string> load_stopwords(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path));
  return parse_stopwords(in);
}

// Tag of `word` standing at position i of `text`. Lexicon lookup; the context
// is accepted for taggers that need it.
inline PosTag pos_tag(const PosLexicon& lexicon, std::string_view word,
                      const TokenizedText& /*text*/, std::size_t /*i*/) {
  return lexicon.lookup(word);
}

// OTHER is compatible with everything.
inline bool pos_compatible(PosTag a, PosTag b) {
  return a == PosTag::kOther || b == PosTag::kOther || a == b;
}

struct SynonymConfig {
  double word_threshold = 0.7;
  double sentence_threshold = 0.84;
  std::unordered_set<std::string> stopwords;
  bool pos_filter = true;
};

// The search space every attack method shares: synonym store, similarity
// embedder, thresholds, stopwords and POS lexicon. Synonym lists are cached per
// word; the cache is safe under concurrent readers.
class SearchSpace {
 public:
  SearchSpace(const WordVectorStore& synonyms, const Embedder& similarity,
              SynonymConfig config, PosLexicon lexicon = {})
      : synonyms_(&synonyms),
        similarity_(&similarity),
        config_(std::move(config)),
        lexicon_(std::move(lexicon)) {
    if (config_.word_threshold < 0.0 || config_.word_threshold > 1.0 ||
        config_.sentence_threshold < 0.0 || config_.sentence_threshold > 1.0) {
      throw InvalidArgument("similarity thresholds must lie in [0, 1]");
    }
  }

  const WordVectorStore& synonym_store() const { return *synonyms_; }
  const Embedder& similarity() const { return *similarity_; }
  const SynonymConfig& config() const { return config_; }
  const PosLexicon& lexicon() const { return lexicon_; }

  bool is_stopword(const std::string& w) const { return config_.stopwords.count(w) > 0; }

  // nearest_synonyms at the configured word threshold; empty for unknown words.
  const std::vector<Neighbor>& synonyms_of(const std::string& word) const {
    {
      std::shared_lock lock(mu_);
      auto it = cache_.find(word);
      if (it != cache_.end()) return it->second;
    }
    std::vector<Neighbor> found;
    if (synonyms_->contains(word)) {
      found = nearest_synonyms(word, config_.word_threshold, *synonyms_);
    }
    std::unique_lock lock(mu_);
    return cache_.emplace(word, std::move(found)).first->second;
  }

  // Position-level legality, ignoring which positions were already replaced.
  bool replaceable(const TokenizedText& t, std::size_t i) const {
    if (i >= t.size()) return false;
    const std::string& w = t[i];
    return synonyms_->contains(w) && !is_stopword(w) && !synonyms_of(w).empty();
  }

 private:
  const WordVectorStore* synonyms_;
  const Embedder* similarity_;
  SynonymConfig config_;
  PosLexicon lexicon_;
  mutable std::shared_mutex mu_;
  mutable std::unordered_map<std::string, std::vector<Neighbor>> cache_;
};

// Ascending positions that may still be replaced.
inline std::vector<std::size_t> legal_actions(const TokenizedText& t,
                                              std::span<const std::size_t> already_replaced,
                                              const SearchSpace& space) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (std::find(already_replaced.begin(), already_replaced.end(), i) !=
        already_replaced.end()) {
      continue;
    }
    if (space.replaceable(t, i)) out.push_back(i);
  }
  return out;
}

struct PerturbResult {
  TokenizedText text;
  bool changed = false;
  std::optional<std::string> chosen_word;
  bool flipped = false;
  double sim_to_prev = 1.0;
  // Margin and predicted label of the returned text with respect to the
  // original prediction; only meaningful when changed.
  double margin = std::numeric_limits<double>::quiet_NaN();
  ClassIndex label = 0;
  std::size_t candidates_queried = 0;
};

// Candidate texts for replacing position i, after the word-level, stopword,
// POS and sentence-similarity filters. No oracle access.
struct Candidate {
  std::string word;
  TokenizedText text;
  double sim_to_prev = 0.0;
};

inline std::vector<Candidate> synonym_candidates(const TokenizedText& t, std::size_t i,
                                                 const SearchSpace& space) {
  std::vector<Candidate> out;
  const std::string& original = t[i];
  const PosTag original_tag = pos_tag(space.lexicon(), original, t, i);
  const Embedding prev = space.similarity().embed(t);
  for (const auto& n : space.synonyms_of(original)) {
    if (space.is_stopword(n.word)) continue;
    TokenizedText candidate = t;
    candidate.tokens[i] = n.word;
    if (space.config().pos_filter &&
        !pos_compatible(original_tag, pos_tag(space.lexicon(), n.word, candidate, i))) {
      continue;
    }
    const double sim = embedding_sim(prev, space.similarity().embed(candidate));
    if (sim < space.config().sentence_threshold) continue;
    out.push_back({n.word, std::move(candidate), sim});
  }
  return out;
}

// delta(t, i): replace the word at position i by the admissible synonym that
// moves the classifier most. If some candidates flip the prediction away from
// `y_tilde`, the one most similar to `t_init` wins (ties: smaller word).
// Otherwise the candidate with the smallest margin wins (ties: smaller word).
// Issues one logit query per surviving candidate.
inline PerturbResult apply_action(const TokenizedText& t, std::size_t i,
                                  const TokenizedText& t_init, ClassIndex y_tilde,
                                  const ClassifierHandle& oracle,
                                  const SearchSpace& space, QueryTally* tally = nullptr) {
  if (!space.replaceable(t, i)) {
    throw IllegalAction("position " + std::to_string(i) + " is not replaceable");
  }
  PerturbResult result;
  result.text = t;
  auto candidates = synonym_candidates(t, i, space);
  if (candidates.empty()) return result;

  std::vector<TokenizedText> texts;
  texts.reserve(candidates.size());
  for (const auto& c : candidates) texts.push_back(c.text);
  const auto logits = oracle.predict_logits(texts, tally);
  result.candidates_queried = candidates.size();

  std::optional<std::size_t> best_flip;
  double best_flip_sim = -1.0;
  std::optional<std::size_t> best_margin;
  double lowest_margin = INFINITY;
  const Embedding init_emb = space.similarity().embed(t_init);
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const ClassIndex label = argmax(logits[k]);
    if (label != y_tilde) {
      const double sim = embedding_sim(init_emb, space.similarity().embed(candidates[k].text));
      if (!best_flip || sim > best_flip_sim ||
          (sim == best_flip_sim && candidates[k].word < candidates[*best_flip].word)) {
        best_flip = k;
        best_flip_sim = sim;
      }
    }
    const double m = margin_of(logits[k], y_tilde);
    if (!best_margin || m < lowest_margin ||
        (m == lowest_margin && candidates[k].word < candidates[*best_margin].word)) {
      best_margin = k;
      lowest_margin = m;
    }
  }
  const std::size_t pick = best_flip ? *best_flip : *best_margin;
  result.changed = true;
  result.flipped = best_flip.has_value();
  result.chosen_word = candidates[pick].word;
  result.sim_to_prev = candidates[pick].sim_to_prev;
  result.margin = margin_of(logits[pick], y_tilde);
  result.label = argmax(logits[pick]);
  result.text = std::move(candidates[pick].text);
  return result;
}

}  // namespace lunatc
