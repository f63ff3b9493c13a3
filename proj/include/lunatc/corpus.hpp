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
#include <cctype>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "lunatc/error.hpp"
#include "lunatc/io.hpp"

namespace lunatc {

using ClassIndex = std::size_t;

struct Document {
  std::string id;
  std::string raw_text;
  ClassIndex label = 0;

  bool operator==(const Document&) const = default;
};

// Lowercase token sequence. Houses both original texts and their perturbed
// descendants; doc_id tracks where a text came from.
struct TokenizedText {
  std::vector<std::string> tokens;
  std::string doc_id;

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
  const std::string& operator[](std::size_t i) const { return tokens[i]; }

  // Texts compare by content; provenance does not take part.
  bool operator==(const TokenizedText& other) const {
    return tokens == other.tokens;
  }

  std::string joined() const {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (i) out += ' ';
      out += tokens[i];
    }
    return out;
  }
};

namespace detail {

inline bool is_ascii_punct(unsigned char c) {
  return c < 0x80 && std::ispunct(c);
}

inline bool is_tag_start(std::string_view raw, std::size_t i) {
  if (raw[i] != '<' || i + 1 >= raw.size()) return false;
  const unsigned char next = static_cast<unsigned char>(raw[i + 1]);
  return std::isalpha(next) || next == '/' || next == '!';
}

}  // namespace detail

// Strips HTML tags, lowercases, splits on whitespace and isolates each ASCII
// punctuation character as its own token.
inline TokenizedText tokenize(std::string_view raw, std::string doc_id = {}) {
  TokenizedText out;
  out.doc_id = std::move(doc_id);
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.tokens.push_back(std::move(current));
    current.clear();
  };
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (detail::is_tag_start(raw, i)) {
      const auto close = raw.find('>', i);
      if (close != std::string_view::npos) {
        flush();
        i = close;
        continue;
      }
    }
    const auto c = static_cast<unsigned char>(raw[i]);
    if (std::isspace(c)) {
      flush();
    } else if (detail::is_ascii_punct(c)) {
      flush();
      out.tokens.emplace_back(1, static_cast<char>(c));
    } else {
      current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c))
                                 : static_cast<char>(c));
    }
  }
  flush();
  return out;
}

inline TokenizedText tokenize(const Document& doc) {
  return tokenize(doc.raw_text, doc.id);
}

// ---------------------------------------------------------------------------
// Corpus files: one JSON object per line, {"id", "text", "label"}.

namespace detail {

inline Document parse_document(const nlohmann::json& j, std::size_t line) {
  if (!j.is_object()) throw ParseError("record is not an object", line);
  for (const char* key : {"id", "text", "label"}) {
    if (!j.contains(key)) {
      throw ParseError(std::string("missing field \"") + key + "\"", line);
    }
  }
  if (!j["id"].is_string() || !j["text"].is_string()) {
    throw ParseError("\"id\" and \"text\" must be strings", line);
  }
  if (!j["label"].is_number_integer() || j["label"].get<long long>() < 0) {
    throw ParseError("\"label\" must be a non-negative integer", line);
  }
  return Document{j["id"].get<std::string>(), j["text"].get<std::string>(),
                  j["label"].get<ClassIndex>()};
}

template <typename Fn>
void for_each_jsonl(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(e.what(), line_no);
    }
    fn(j, line_no);
  }
}

}  // namespace detail

inline std::vector<Document> parse_corpus(std::istream& in) {
  std::vector<Document> docs;
  std::unordered_set<std::string> seen;
  detail::for_each_jsonl(in, [&](const nlohmann::json& j, std::size_t line) {
    Document d = detail::parse_document(j, line);
    if (!seen.insert(d.id).second) {
      throw ParseError("duplicate id \"" + d.id + "\"", line);
    }
    docs.push_back(std::move(d));
  });
  return docs;
}

inline std::vector<Document> load_corpus(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path));
  return parse_corpus(in);
}

inline nlohmann::json document_json(const Document& d) {
  nlohmann::json j;
  j["id"] = d.id;
  j["text"] = d.raw_text;
  j["label"] = d.label;
  return j;
}

inline std::string corpus_jsonl(const std::vector<Document>& docs) {
  std::string out;
  for (const auto& d : docs) out += document_json(d).dump() + "\n";
  return out;
}

inline void save_corpus(const std::vector<Document>& docs,
                        const std::filesystem::path& path) {
  io::write_file_atomic(path, corpus_jsonl(docs));
}

// ---------------------------------------------------------------------------
// Attack-set construction.

struct SplitDocument {
  Document doc;
  std::vector<std::string> attacked_by;
};

struct DatasetSplit {
  std::vector<SplitDocument> train;
  std::vector<SplitDocument> test;
  ClassIndex direction_label = 0;

  std::vector<Document> train_documents() const {
    std::vector<Document> out;
    for (const auto& s : train) out.push_back(s.doc);
    return out;
  }
  std::vector<Document> test_documents() const {
    std::vector<Document> out;
    for (const auto& s : test) out.push_back(s.doc);
    return out;
  }
};

// A named attack reduced to the question the filter asks: did it flip the
// oracle's prediction on this document?
struct FilterAttack {
  std::string name;
  std::function<bool(const Document&, const TokenizedText&)> succeeds;
};

struct SplitOptions {
  ClassIndex direction_label = 0;
  // Leading fraction of the corpus (in file order) that forms the training
  // pool; the remainder is the test pool.
  double train_fraction = 0.7;
};

// Keeps documents whose oracle prediction matches both the true label and the
// attack direction and that at least one attacker breaks. Training-pool
// documents the filter attack fails on are moved to the test set.
inline DatasetSplit build_attack_sets(
    const std::vector<Document>& docs,
    const std::function<ClassIndex(const TokenizedText&)>& predict_label,
    const std::vector<FilterAttack>& attackers,
    std::string_view train_filter_attack, const SplitOptions& options) {
  if (attackers.empty()) throw InvalidArgument("no attackers given");
  const auto filter_it =
      std::find_if(attackers.begin(), attackers.end(),
                   [&](const FilterAttack& a) { return a.name == train_filter_attack; });
  if (filter_it == attackers.end()) {
    throw InvalidArgument("train filter attack \"" +
                          std::string(train_filter_attack) +
                          "\" is not among the attackers");
  }
  DatasetSplit split;
  split.direction_label = options.direction_label;
  const auto train_pool = static_cast<std::size_t>(
      options.train_fraction * static_cast<double>(docs.size()) + 0.5);
  for (std::size_t k = 0; k < docs.size(); ++k) {
    const Document& doc = docs[k];
    const TokenizedText text = tokenize(doc);
    const ClassIndex predicted = predict_label(text);
    if (predicted != doc.label || predicted != options.direction_label) continue;
    SplitDocument entry{doc, {}};
    for (const auto& attacker : attackers) {
      if (attacker.succeeds(doc, text)) entry.attacked_by.push_back(attacker.name);
    }
    if (entry.attacked_by.empty()) continue;
    const bool filter_ok =
        std::find(entry.attacked_by.begin(), entry.attacked_by.end(),
                  train_filter_attack) != entry.attacked_by.end();
    if (k < train_pool && filter_ok) {
      split.train.push_back(std::move(entry));
    } else {
      split.test.push_back(std::move(entry));
    }
  }
  if (split.train.empty() && split.test.empty()) {
    throw EmptySplit("no document survived attack filtering");
  }
  return split;
}

// Split files extend corpus records with "split" and "attacked_by".
inline std::string split_jsonl(const DatasetSplit& split) {
  std::string out;
  auto emit = [&](const SplitDocument& s, const char* which) {
    nlohmann::json j = document_json(s.doc);
    j["split"] = which;
    j["attacked_by"] = s.attacked_by;
    out += j.dump() + "\n";
  };
  for (const auto& s : split.train) emit(s, "train");
  for (const auto& s : split.test) emit(s, "test");
  return out;
}

inline void save_split(const DatasetSplit& split,
                       const std::filesystem::path& path) {
  io::write_file_atomic(path, split_jsonl(split));
}

inline DatasetSplit parse_split(std::istream& in) {
  DatasetSplit split;
  std::optional<ClassIndex> direction;
  std::unordered_set<std::string> seen;
  detail::for_each_jsonl(in, [&](const nlohmann::json& j, std::size_t line) {
    SplitDocument s{detail::parse_document(j, line), {}};
    if (!seen.insert(s.doc.id).second) {
      throw ParseError("duplicate id \"" + s.doc.id + "\"", line);
    }
    if (!j.contains("split") || !j["split"].is_string()) {
      throw ParseError("missing field \"split\"", line);
    }
    if (!j.contains("attacked_by") || !j["attacked_by"].is_array()) {
      throw ParseError("missing field \"attacked_by\"", line);
    }
    s.attacked_by = j["attacked_by"].get<std::vector<std::string>>();
    if (direction && *direction != s.doc.label) {
      throw ParseError("split mixes attack directions", line);
    }
    direction = s.doc.label;
    const auto which = j["split"].get<std::string>();
    if (which == "train") {
      split.train.push_back(std::move(s));
    } else if (which == "test") {
      split.test.push_back(std::move(s));
    } else {
      throw ParseError("\"split\" must be \"train\" or \"test\"", line);
    }
  });
  split.direction_label = direction.value_or(0);
  return split;
}

inline DatasetSplit load_split(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path));
  return parse_split(in);
}

}  // namespace lunatc
