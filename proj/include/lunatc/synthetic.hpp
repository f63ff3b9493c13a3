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

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "lunatc/corpus.hpp"
#include "lunatc/perturb.hpp"
#include "lunatc/rng.hpp"
#include "lunatc/vectors.hpp"

namespace lunatc::synthetic {

// Shape of the generated world. Axis 0 of every vector is the sentiment axis.
// Positive and negative sentiment clusters come in pairs sharing a context
// direction, so only the sentiment axis separates the classes. Each positive
// cluster also holds "weak" members: near synonyms that sit on the negative
// side of the axis and never occur in the corpus. Replacing a positive word by
// its weak synonym is the planted attack.
struct Options {
  std::size_t dim = 32;
  std::size_t neutral_clusters = 60;
  std::size_t neutral_cluster_size = 3;
  double neutral_noise = 0.5;
  std::size_t sentiment_clusters = 16;
  std::size_t canonical_per_cluster = 2;
  std::size_t weak_per_cluster = 1;
  double sentiment_noise = 0.3;
  double sentiment_strength = 0.5;
  double weak_strength = -0.1;
  double common_component = 0.0;
  std::size_t num_docs = 1200;
  std::size_t min_length = 8;
  std::size_t max_length = 14;
  double two_sentiment_words = 0.3;
  double stopword_rate = 0.3;
  std::uint64_t seed = 0;
};

struct World {
  WordVectorStore vectors;
  std::unordered_set<std::string> stopwords;
  PosLexicon lexicon;
  std::vector<std::pair<std::string, PosTag>> lexicon_entries;
  std::vector<Document> corpus;
  std::vector<std::string> positive_words;
  std::vector<std::string> negative_words;
  std::vector<std::string> weak_words;
};

inline const std::vector<std::string>& stopword_list() {
  static const std::vector<std::string> words = {"the", "a",   "this", "was", "is",
                                                 "and", "it",  "of",   "to",  "with"};
  return words;
}

namespace detail {

inline std::vector<double> random_direction(Rng& rng, std::size_t dim, bool skip_axis0) {
  std::vector<double> v(dim, 0.0);
  for (std::size_t k = skip_axis0 ? 1 : 0; k < dim; ++k) v[k] = rng.normal();
  const double n = norm(v);
  for (double& x : v) x /= n;
  return v;
}

// Unit vector: `axis` on dimension 0, the remaining mass along a noisy copy
// of `context` (which has no axis-0 component), plus an optional shared
// component.
inline std::vector<double> member(Rng& rng, const std::vector<double>& context,
                                  double noise, double axis, const std::vector<double>& common,
                                  double common_weight) {
  const std::size_t dim = context.size();
  auto g = random_direction(rng, dim, true);
  std::vector<double> ctx(dim);
  for (std::size_t k = 0; k < dim; ++k) ctx[k] = context[k] + noise * g[k];
  const double cn = norm(ctx);
  const double rest = std::sqrt(std::max(0.0, 1.0 - axis * axis));
  std::vector<double> v(dim);
  for (std::size_t k = 0; k < dim; ++k) v[k] = rest * ctx[k] / cn;
  v[0] = axis;
  for (std::size_t k = 0; k < dim; ++k) v[k] += common_weight * common[k];
  return v;
}

}  // namespace detail

inline World generate(const Options& o) {
  World w;
  w.vectors = WordVectorStore(o.dim);
  Rng rng = stream(o.seed, "synthetic.vectors");
  const auto common = detail::random_direction(rng, o.dim, true);

  for (const auto& s : stopword_list()) {
    w.vectors.set(s, detail::member(rng, detail::random_direction(rng, o.dim, true), 0.0,
                                    0.0, common, o.common_component));
    w.stopwords.insert(s);
  }

  std::vector<std::vector<std::string>> neutral(o.neutral_clusters);
  for (std::size_t c = 0; c < o.neutral_clusters; ++c) {
    const auto center = detail::random_direction(rng, o.dim, true);
    const PosTag tag = c % 3 == 2 ? PosTag::kVerb : PosTag::kNoun;
    for (std::size_t m = 0; m < o.neutral_cluster_size; ++m) {
      const std::string word = (tag == PosTag::kVerb ? "v" : "n") + std::to_string(c) +
                               static_cast<char>('a' + m);
      w.vectors.set(word, detail::member(rng, center, o.neutral_noise, 0.0, common,
                                         o.common_component));
      w.lexicon_entries.emplace_back(word, tag);
      neutral[c].push_back(word);
    }
  }

  std::vector<std::vector<std::string>> positive(o.sentiment_clusters);
  std::vector<std::vector<std::string>> negative(o.sentiment_clusters);
  for (std::size_t c = 0; c < o.sentiment_clusters; ++c) {
    const auto context = detail::random_direction(rng, o.dim, true);
    auto add = [&](const std::string& word, double axis, std::vector<std::string>* group) {
      w.vectors.set(word, detail::member(rng, context, o.sentiment_noise, axis, common,
                                         o.common_component));
      w.lexicon_entries.emplace_back(word, PosTag::kAdj);
      if (group) group->push_back(word);
    };
    for (std::size_t m = 0; m < o.canonical_per_cluster; ++m) {
      const std::string suffix = std::to_string(c) + static_cast<char>('a' + m);
      add("pos" + suffix, o.sentiment_strength, &positive[c]);
      add("neg" + suffix, -o.sentiment_strength, &negative[c]);
    }
    for (std::size_t m = 0; m < o.weak_per_cluster; ++m) {
      const std::string word = "weak" + std::to_string(c) + static_cast<char>('a' + m);
      add(word, o.weak_strength, nullptr);
      w.weak_words.push_back(word);
    }
  }
  for (const auto& g : positive) w.positive_words.insert(w.positive_words.end(), g.begin(), g.end());
  for (const auto& g : negative) w.negative_words.insert(w.negative_words.end(), g.begin(), g.end());
  for (const auto& [word, tag] : w.lexicon_entries) w.lexicon.set(word, tag);

  Rng doc_rng = stream(o.seed, "synthetic.corpus");
  const auto& stop = stopword_list();
  for (std::size_t d = 0; d < o.num_docs; ++d) {
    const ClassIndex label = d % 2;
    const auto& sentiment = label == 1 ? w.positive_words : w.negative_words;
    const std::size_t len =
        o.min_length + doc_rng.below(o.max_length - o.min_length + 1);
    std::vector<std::string> tokens(len);
    for (auto& t : tokens) {
      if (doc_rng.bernoulli(o.stopword_rate)) {
        t = stop[doc_rng.below(stop.size())];
      } else {
        const auto& cluster = neutral[doc_rng.below(neutral.size())];
        t = cluster[doc_rng.below(cluster.size())];
      }
    }
    const std::size_t k = doc_rng.bernoulli(o.two_sentiment_words) ? 2 : 1;
    std::vector<std::size_t> slots(len);
    for (std::size_t i = 0; i < len; ++i) slots[i] = i;
    doc_rng.shuffle(slots);
    for (std::size_t j = 0; j < k; ++j) {
      tokens[slots[j]] = sentiment[doc_rng.below(sentiment.size())];
    }
    std::string raw;
    for (std::size_t i = 0; i < len; ++i) {
      if (i) raw += ' ';
      std::string tok = tokens[i];
      if (i == 0) tok[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(tok[0])));
      raw += tok;
    }
    raw += " .";
    w.corpus.push_back({"doc" + std::to_string(d), raw, label});
  }
  return w;
}

inline std::string lexicon_text(const World& w) {
  std::string out;
  for (const auto& [word, tag] : w.lexicon_entries) {
    out += word + " " + pos_tag_name(tag) + "\n";
  }
  return out;
}

inline std::string stopwords_text() {
  std::string out;
  for (const auto& s : stopword_list()) out += s + "\n";
  return out;
}

}  // namespace lunatc::synthetic
