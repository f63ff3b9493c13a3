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


#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <set>
#include <string>

#include <gtest/gtest.h>

#include "lunatc/corpus.hpp"
#include "lunatc/io.hpp"
#include "lunatc/synthetic.hpp"

namespace lunatc {
namespace {

namespace fs = std::filesystem;

// The bundled benchmark must be exactly what the generator writes.
TEST(Synthetic, BundledDataIsReproducible) {
  const fs::path out =
      fs::temp_directory_path() / ("lunatc_synth_" + std::to_string(::getpid()));
  fs::remove_all(out);
  const std::string cmd =
      std::string(LUNATC_CLI) + " synth --out " + out.string() + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  ASSERT_TRUE(WIFEXITED(status) && WEXITSTATUS(status) == 0);
  for (const char* f : {"corpus.jsonl", "vectors.txt", "stopwords.txt", "pos_lexicon.txt"}) {
    EXPECT_EQ(io::read_file(out / f), io::read_file(fs::path(LUNATC_DATA_DIR) / f)) << f;
  }
  fs::remove_all(out);
}

synthetic::Options small(std::uint64_t seed) {
  synthetic::Options o;
  o.num_docs = 200;
  o.seed = seed;
  return o;
}

TEST(Synthetic, SameSeedSameWorld) {
  const auto a = synthetic::generate(small(3));
  const auto b = synthetic::generate(small(3));
  EXPECT_EQ(a.corpus, b.corpus);
  EXPECT_EQ(synthetic::lexicon_text(a), synthetic::lexicon_text(b));
  const auto c = synthetic::generate(small(4));
  EXPECT_NE(a.corpus, c.corpus);
}

TEST(Synthetic, CorpusShape) {
  const auto o = small(1);
  const auto w = synthetic::generate(o);
  ASSERT_EQ(w.corpus.size(), o.num_docs);
  const std::set<std::string> pos(w.positive_words.begin(), w.positive_words.end());
  const std::set<std::string> neg(w.negative_words.begin(), w.negative_words.end());
  const std::set<std::string> weak(w.weak_words.begin(), w.weak_words.end());
  std::size_t ones = 0;
  for (const auto& d : w.corpus) {
    ASSERT_TRUE(d.label == 0 || d.label == 1);
    ones += d.label;
    const auto t = tokenize(d);
    const std::size_t words = t.tokens.size() - 1;  // trailing period
    EXPECT_GE(words, o.min_length);
    EXPECT_LE(words, o.max_length);
    std::size_t own = 0;
    for (const auto& tok : t.tokens) {
      EXPECT_FALSE(weak.count(tok)) << d.id;
      const auto& mine = d.label == 1 ? pos : neg;
      const auto& theirs = d.label == 1 ? neg : pos;
      own += mine.count(tok);
      EXPECT_FALSE(theirs.count(tok)) << d.id;
    }
    EXPECT_GE(own, 1u) << d.id;
  }
  EXPECT_EQ(ones, o.num_docs / 2);
}

TEST(Synthetic, EveryWordHasVectorAndTag) {
  const auto w = synthetic::generate(small(2));
  for (const auto& [word, tag] : w.lexicon_entries) {
    EXPECT_TRUE(w.vectors.contains(word)) << word;
    EXPECT_NE(tag, PosTag::kOther);
  }
  for (const auto& s : synthetic::stopword_list()) {
    EXPECT_TRUE(w.vectors.contains(s));
    EXPECT_TRUE(w.stopwords.count(s));
  }
}

}  // namespace
}  // namespace lunatc
