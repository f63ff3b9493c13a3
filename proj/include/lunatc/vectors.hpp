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
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <iostream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lunatc/corpus.hpp"
#include "lunatc/error.hpp"
#include "lunatc/io.hpp"

namespace lunatc {

using Embedding = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// Cosine similarity; 0 when either side is the zero vector.
inline double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

// Word -> fixed-dimension vector map. Rows are stored contiguously together
// with their unit-normalized copies.
class WordVectorStore {
 public:
  WordVectorStore() = default;
  explicit WordVectorStore(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return words_.size(); }
  bool contains(std::string_view word) const {
    return index_.find(std::string(word)) != index_.end();
  }
  const std::vector<std::string>& words() const { return words_; }

  // Inserts or replaces. Returns false when the word already existed.
  bool set(const std::string& word, std::span<const double> values) {
    if (dim_ == 0 && words_.empty()) dim_ = values.size();
    if (values.size() != dim_) {
      throw DimensionMismatch("vector for \"" + word + "\" has " +
                              std::to_string(values.size()) +
                              " components, expected " + std::to_string(dim_));
    }
    auto [it, inserted] = index_.emplace(word, words_.size());
    if (inserted) {
      words_.push_back(word);
      values_.resize(values_.size() + dim_);
      unit_.resize(unit_.size() + dim_);
    }
    const std::size_t row = it->second * dim_;
    std::copy(values.begin(), values.end(), values_.begin() + row);
    const double n = norm(values);
    for (std::size_t k = 0; k < dim_; ++k) {
      unit_[row + k] = n > 0.0 ? values[k] / n : 0.0;
    }
    return inserted;
  }

  std::optional<std::span<const double>> find(std::string_view word) const {
    auto it = index_.find(std::string(word));
    if (it == index_.end()) return std::nullopt;
    return row(values_, it->second);
  }
  std::optional<std::span<const double>> find_unit(std::string_view word) const {
    auto it = index_.find(std::string(word));
    if (it == index_.end()) return std::nullopt;
    return row(unit_, it->second);
  }
  std::span<const double> vector_at(std::size_t r) const { return row(values_, r); }
  std::span<const double> unit_at(std::size_t r) const { return row(unit_, r); }

 private:
  std::span<const double> row(const std::vector<double>& m, std::size_t r) const {
    return std::span<const double>(m).subspan(r * dim_, dim_);
  }

  std::size_t dim_ = 0;
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<double> values_;
  std::vector<double> unit_;
};

// Parses `word v1 ... vd` lines. Duplicate words keep the last row and emit a
// warning, either into `warnings` or on stderr.
inline WordVectorStore parse_vectors(std::istream& in,
                                     std::vector<std::string>* warnings = nullptr) {
  WordVectorStore store;
  std::string line;
  std::size_t line_no = 0;
  std::optional<std::size_t> dim;
  std::vector<double> values;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream fields(line);
    std::string word;
    if (!(fields >> word)) continue;
    values.clear();
    std::string tok;
    while (fields >> tok) {
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v)) {
        throw ParseError("bad number \"" + tok + "\"", line_no);
      }
      values.push_back(v);
    }
    if (values.empty()) throw ParseError("row has no components", line_no);
    if (!dim) dim = values.size();
    if (values.size() != *dim) {
      throw DimensionMismatch("line " + std::to_string(line_no) + ": row has " +
                              std::to_string(values.size()) +
                              " components, expected " + std::to_string(*dim));
    }
    if (!store.set(word, values)) {
      const std::string msg = "line " + std::to_string(line_no) +
                              ": duplicate word \"" + word + "\", keeping last row";
      if (warnings) {
        warnings->push_back(msg);
      } else {
        std::cerr << "warning: " << msg << "\n";
      }
    }
  }
  return store;
}

inline WordVectorStore load_vectors(const std::filesystem::path& path,
                                    std::vector<std::string>* warnings = nullptr) {
  std::istringstream in(io::read_file(path));
  return parse_vectors(in, warnings);
}

inline std::string vectors_text(const WordVectorStore& store) {
  std::string out;
  char buf[64];
  for (std::size_t r = 0; r < store.size(); ++r) {
    out += store.words()[r];
    for (double v : store.vector_at(r)) {
      std::snprintf(buf, sizeof buf, " %.9g", v);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Text embedders.

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::size_t dim() const = 0;
  virtual Embedding embed(const TokenizedText& text) const = 0;
};

// Mean of the vectors of in-vocabulary tokens; zero when none is known.
inline Embedding text_embedding(const TokenizedText& text,
                                const WordVectorStore& store) {
  Embedding out(store.dim(), 0.0);
  std::size_t known = 0;
  for (const auto& tok : text.tokens) {
    if (auto v = store.find(tok)) {
      for (std::size_t k = 0; k < out.size(); ++k) out[k] += (*v)[k];
      ++known;
    }
  }
  if (known > 0) {
    for (double& x : out) x /= static_cast<double>(known);
  }
  return out;
}

class MeanVectorEmbedder final : public Embedder {
 public:
  explicit MeanVectorEmbedder(const WordVectorStore& store) : store_(&store) {}
  std::size_t dim() const override { return store_->dim(); }
  Embedding embed(const TokenizedText& text) const override {
    return text_embedding(text, *store_);
  }

 private:
  const WordVectorStore* store_;
};

// Similarity in [0, 1]: cosine of the two embeddings with negatives clamped.
inline double semantic_sim(const TokenizedText& a, const TokenizedText& b,
                           const Embedder& embedder) {
  const Embedding ea = embedder.embed(a);
  const Embedding eb = embedder.embed(b);
  return std::max(0.0, cosine(ea, eb));
}

inline double embedding_sim(std::span<const double> a, std::span<const double> b) {
  return std::max(0.0, cosine(a, b));
}

// Sinusoidal position encoding: sin on even components, cos on odd ones.
inline Embedding pos_enc(std::size_t position, std::size_t dim) {
  if (dim % 2 != 0) {
    throw OddDimension("positional encoding needs an even dimension, got " +
                       std::to_string(dim));
  }
  Embedding out(dim);
  const double pos = static_cast<double>(position);
  for (std::size_t k = 0; k < dim / 2; ++k) {
    const double freq =
        std::pow(10000.0, static_cast<double>(2 * k) / static_cast<double>(dim));
    out[2 * k] = std::sin(pos / freq);
    out[2 * k + 1] = std::cos(pos / freq);
  }
  return out;
}

// word_vec(w) + alpha * pos_enc(i); unknown words contribute the zero vector.
inline Embedding action_embedding(std::string_view word, std::size_t position,
                                  double alpha, const WordVectorStore& store) {
  Embedding out = pos_enc(position, store.dim());
  for (double& x : out) x *= alpha;
  if (auto v = store.find(word)) {
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += (*v)[k];
  }
  return out;
}

struct Neighbor {
  std::string word;
  double cosine = 0.0;

  bool operator==(const Neighbor&) const = default;
};

// Every other word whose unit-vector cosine with `word` reaches `threshold`,
// most similar first, ties in lexicographic order. Exact linear scan.
inline std::vector<Neighbor> nearest_synonyms(std::string_view word, double threshold,
                                              const WordVectorStore& store) {
  const auto query = store.find_unit(word);
  if (!query) throw UnknownWord("\"" + std::string(word) + "\" is not in the store");
  std::vector<Neighbor> out;
  for (std::size_t r = 0; r < store.size(); ++r) {
    const std::string& other = store.words()[r];
    if (other == word) continue;
    const double c = dot(*query, store.unit_at(r));
    if (c >= threshold) out.push_back({other, c});
  }
  std::sort(out.begin(), out.end(), [](const Neighbor& a, const Neighbor& b) {
    if (a.cosine != b.cosine) return a.cosine > b.cosine;
    return a.word < b.word;
  });
  return out;
}

}  // namespace lunatc
