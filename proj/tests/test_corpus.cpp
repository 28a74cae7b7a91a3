#include "corpus.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "oracles.hpp"

using namespace hkd;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("hkd_corpus_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  for (const auto& l : lines) out << l << '\n';
}

double mean_source_edit_distance(const SyntheticData& data, const LanguageId& a,
                                 const LanguageId& b, size_t samples) {
  const auto& pa = data.text.at(Split::train).at(a);
  const auto& pb = data.text.at(Split::train).at(b);
  const size_t n = std::min({samples, pa.size(), pb.size()});
  double total = 0.0;
  for (size_t i = 0; i < n; ++i)
    total += static_cast<double>(oracles::levenshtein(pa[i].source, pb[i].source));
  return total / static_cast<double>(n);
}

}  // namespace

TEST_CASE("vocabulary: specials, frequency order, tie-break") {
  auto v = build_vocab({{"ab", "ba"}}, TokenMode::chars);
  CHECK(v.size() == 6);
  CHECK(v.symbol(specials::pad) == "<pad>");
  CHECK(v.symbol(specials::bos) == "<s>");
  CHECK(v.symbol(specials::eos) == "</s>");
  CHECK(v.symbol(specials::unk) == "<unk>");
  // equal frequencies: lexicographic
  CHECK(v.symbol(4) == "a");
  CHECK(v.symbol(5) == "b");

  auto w = build_vocab({{"bb a"}}, TokenMode::chars);
  CHECK(w.symbol(4) == "b");  // freq 2 beats freq 1
}

TEST_CASE("vocabulary: union over a mixed multi-language corpus") {
  std::vector<std::vector<std::string>> corpora = {{"abc"}, {"cde"}, {"efa"}};
  auto v = build_vocab(corpora, TokenMode::chars);
  std::set<std::string> expected;  // independent union of per-language symbol sets
  for (const auto& corpus : corpora)
    for (const auto& s : corpus)
      for (char c : s) expected.insert(std::string(1, c));
  for (const auto& sym : expected) CHECK(v.id_of(sym) >= 0);
  CHECK(v.size() == specials::count + static_cast<int>(expected.size()));
}

TEST_CASE("vocabulary: closure on its own training text") {
  std::vector<std::string> text = {"the cat", "a cat sat"};
  auto v = build_vocab({text}, TokenMode::whitespace);
  for (const auto& sentence : text)
    for (int id : v.encode(sentence, TokenMode::whitespace)) CHECK(id != specials::unk);
}

TEST_CASE("vocabulary: language tags") {
  auto v = build_vocab({{"ab"}}, TokenMode::chars);
  v.add_language_tags({LanguageId{"b1"}, LanguageId{"a1"}});
  CHECK(v.tag_id(LanguageId{"a1"}) < v.tag_id(LanguageId{"b1"}));  // sorted insertion
  CHECK_THROWS_AS((void)v.tag_id(LanguageId{"zz"}), Error);
}

TEST_CASE("load_parallel: basics, unknowns, empty files, mismatch") {
  auto dir = temp_dir("load");
  auto v = build_vocab({{"a b c"}}, TokenMode::whitespace);

  write_lines(dir / "x.src", {"a b", "b", "c c c"});
  write_lines(dir / "x.tgt", {"b", "a a", "c"});
  auto corpus = load_parallel(dir / "x.src", dir / "x.tgt", LanguageId{"x"}, v,
                              TokenMode::whitespace, Split::train);
  CHECK(corpus.size() == 3);
  CHECK(corpus.pairs[0].source.size() == 2);
  CHECK(corpus.pairs[2].target.size() == 1);

  write_lines(dir / "u.src", {"a zzz"});
  write_lines(dir / "u.tgt", {"b b"});
  auto with_unk = load_parallel(dir / "u.src", dir / "u.tgt", LanguageId{"u"}, v,
                                TokenMode::whitespace, Split::train);
  CHECK(with_unk.pairs[0].source[1] == specials::unk);

  write_lines(dir / "e.src", {});
  write_lines(dir / "e.tgt", {});
  auto empty = load_parallel(dir / "e.src", dir / "e.tgt", LanguageId{"e"}, v,
                             TokenMode::whitespace, Split::train);
  CHECK(empty.size() == 0);

  write_lines(dir / "m.src", {"a", "b"});
  write_lines(dir / "m.tgt", {"a"});
  try {
    load_parallel(dir / "m.src", dir / "m.tgt", LanguageId{"m"}, v, TokenMode::whitespace,
                  Split::train);
    FAIL("expected alignment error");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find('2') != std::string::npos);
    CHECK(msg.find('1') != std::string::npos);
  }
}

TEST_CASE("upsample: sizes equalized, multiplicities, no pair dropped") {
  auto v = build_vocab({{"abcdefghij"}}, TokenMode::chars);
  auto make = [&](const std::string& code, int n) {
    ParallelCorpus c;
    c.lang = LanguageId{code};
    for (int i = 0; i < n; ++i) {
      std::string s(1, static_cast<char>('a' + i % 10));
      c.pairs.push_back(
          SentencePair{v.encode(s, TokenMode::chars), v.encode(s, TokenMode::chars)});
      c.pairs.back().source.push_back(4 + i);  // make pairs distinguishable
    }
    return c;
  };

  SUBCASE("sizes (10, 100) -> (100, 100)") {
    std::map<LanguageId, ParallelCorpus> corpora;
    corpora.emplace(LanguageId{"lo"}, make("lo", 10));
    corpora.emplace(LanguageId{"hi"}, make("hi", 100));
    auto up = upsample(corpora, 7);
    CHECK(up.at(LanguageId{"lo"}).size() == 100);
    CHECK(up.at(LanguageId{"hi"}).size() == 100);
  }

  SUBCASE("equal sizes: identical multisets") {
    std::map<LanguageId, ParallelCorpus> corpora;
    corpora.emplace(LanguageId{"x"}, make("x", 8));
    corpora.emplace(LanguageId{"y"}, make("y", 8));
    auto up = upsample(corpora, 11);
    for (const auto* code : {"x", "y"}) {
      auto sorted_in = corpora.at(LanguageId{code}).pairs;
      auto sorted_out = up.at(LanguageId{code}).pairs;
      auto key = [](const SentencePair& p) { return std::make_pair(p.source, p.target); };
      std::sort(sorted_in.begin(), sorted_in.end(),
                [&](auto& a, auto& b) { return key(a) < key(b); });
      std::sort(sorted_out.begin(), sorted_out.end(),
                [&](auto& a, auto& b) { return key(a) < key(b); });
      CHECK(sorted_in == sorted_out);
    }
  }

  SUBCASE("sizes (3, 7): every original pair appears at least twice") {
    std::map<LanguageId, ParallelCorpus> corpora;
    corpora.emplace(LanguageId{"lo"}, make("lo", 3));
    corpora.emplace(LanguageId{"hi"}, make("hi", 7));
    auto up = upsample(corpora, 3);
    const auto& lo = up.at(LanguageId{"lo"});
    CHECK(lo.size() == 7);
    for (const auto& orig : corpora.at(LanguageId{"lo"}).pairs) {
      const long count = std::count(lo.pairs.begin(), lo.pairs.end(), orig);
      CHECK(count >= 2);
    }
  }

  SUBCASE("property: no original pair is ever discarded") {
    Rng rng(99);
    for (int round = 0; round < 10; ++round) {
      std::map<LanguageId, ParallelCorpus> corpora;
      const int n_langs = 2 + static_cast<int>(rng.next_below(3));
      for (int l = 0; l < n_langs; ++l) {
        const std::string code = "l" + std::to_string(l);
        corpora.emplace(LanguageId{code}, make(code, 1 + static_cast<int>(rng.next_below(20))));
      }
      auto up = upsample(corpora, rng.next_seed());
      for (const auto& [lang, corpus] : corpora)
        for (const auto& orig : corpus.pairs)
          CHECK(std::count(up.at(lang).pairs.begin(), up.at(lang).pairs.end(), orig) >= 1);
    }
  }
}

TEST_CASE("make_minibatches: sizes, degenerate batch size, determinism, partition") {
  ParallelCorpus corpus;
  corpus.lang = LanguageId{"x"};
  for (int i = 0; i < 10; ++i) corpus.pairs.push_back(SentencePair{{4, i + 4}, {i + 4}});

  auto batches = make_minibatches(corpus, 4, 42);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].size() == 4);
  CHECK(batches[1].size() == 4);
  CHECK(batches[2].size() == 2);

  CHECK(make_minibatches(corpus, 100, 42).size() == 1);

  auto again = make_minibatches(corpus, 4, 42);
  for (size_t b = 0; b < batches.size(); ++b) CHECK(batches[b].pairs == again[b].pairs);

  // partition property: flattening and sorting recovers the corpus
  Rng rng(7);
  for (int round = 0; round < 20; ++round) {
    const size_t bs = 1 + rng.next_below(12);
    auto bs_batches = make_minibatches(corpus, bs, rng.next_seed());
    std::vector<SentencePair> flat;
    for (const auto& b : bs_batches) flat.insert(flat.end(), b.pairs.begin(), b.pairs.end());
    auto sorted_corpus = corpus.pairs;
    auto key = [](const SentencePair& p) { return std::make_pair(p.source, p.target); };
    std::sort(flat.begin(), flat.end(), [&](auto& a, auto& b) { return key(a) < key(b); });
    std::sort(sorted_corpus.begin(), sorted_corpus.end(),
              [&](auto& a, auto& b) { return key(a) < key(b); });
    CHECK(flat == sorted_corpus);
  }

  CHECK_THROWS_AS(make_minibatches(corpus, 0, 1), Error);
}

TEST_CASE("generate_synthetic: zero-noise family is a pure cipher clone") {
  SyntheticFamilySpec spec;
  spec.n_families = 1;
  spec.langs_per_family = 2;
  spec.noise_rate = 0.0;
  spec.train_sentences = 30;
  spec.low_resource_train_sentences = 12;
  spec.dev_sentences = 5;
  spec.test_sentences = 5;
  auto data = generate_synthetic_text(spec, 123);
  REQUIRE(data.languages.size() == 2);
  const auto& a1 = data.text.at(Split::train).at(LanguageId{"a1"});
  const auto& a2 = data.text.at(Split::train).at(LanguageId{"a2"});
  REQUIRE(a1.size() == 30);
  REQUIRE(a2.size() == 12);  // a2 is the low-resource member
  for (size_t i = 0; i < a2.size(); ++i) {
    CHECK(a1[i].target == a2[i].target);
    CHECK(a1[i].source == a2[i].source);  // same cipher, no noise
    CHECK(a1[i].source != a1[i].target);  // the cipher does transform
  }
}

TEST_CASE("generate_synthetic: intra-family edit distance below inter-family") {
  SyntheticFamilySpec spec;  // defaults: 3 families x 3 languages
  spec.noise_rate = 0.15;
  spec.train_sentences = 120;
  spec.low_resource_train_sentences = 100;
  auto data = generate_synthetic_text(spec, 5);
  REQUIRE(data.languages.size() == 9);

  double intra = 0.0, inter = 0.0;
  int intra_n = 0, inter_n = 0;
  for (const auto& a : data.languages) {
    for (const auto& b : data.languages) {
      if (a >= b) continue;
      const double d = mean_source_edit_distance(data, a, b, 100);
      if (data.family.at(a) == data.family.at(b)) {
        intra += d;
        ++intra_n;
      } else {
        inter += d;
        ++inter_n;
      }
    }
  }
  CHECK(intra / intra_n < inter / inter_n);
}

TEST_CASE("generate_synthetic: deterministic given the seed") {
  SyntheticFamilySpec spec;
  spec.train_sentences = 20;
  spec.low_resource_train_sentences = 8;
  spec.dev_sentences = 4;
  spec.test_sentences = 4;
  auto a = generate_synthetic(spec, 77);
  auto b = generate_synthetic(spec, 77);
  CHECK(a.vocab.size() == b.vocab.size());
  for (auto split : {Split::train, Split::dev, Split::test})
    for (const auto& [lang, corpus] : a.corpora.at(split))
      CHECK(corpus.pairs == b.corpora.at(split).at(lang).pairs);
  for (const auto& [lang, row] : a.raw.kb) CHECK(row == b.raw.kb.at(lang));

  auto c = generate_synthetic(spec, 78);
  CHECK(a.raw.text.at(Split::train).at(LanguageId{"a1"})[0].source !=
        c.raw.text.at(Split::train).at(LanguageId{"a1"})[0].source);
}

TEST_CASE("generate_synthetic: spec validation names the offending field") {
  SyntheticFamilySpec spec;
  spec.noise_rate = 0.6;
  try {
    generate_synthetic_text(spec, 1);
    FAIL("expected validation error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("noise_rate") != std::string::npos);
  }
  spec.noise_rate = 0.1;
  spec.low_resource_train_sentences = 10'000;
  CHECK_THROWS_AS(generate_synthetic_text(spec, 1), Error);
}

TEST_CASE("generate_synthetic: encoding covers every training sentence") {
  SyntheticFamilySpec spec;
  spec.n_families = 2;
  spec.langs_per_family = 2;
  spec.train_sentences = 15;
  spec.low_resource_train_sentences = 6;
  spec.dev_sentences = 3;
  spec.test_sentences = 3;
  auto data = generate_synthetic(spec, 9);
  for (const auto& [lang, corpus] : data.corpora.at(Split::train))
    for (const auto& pair : corpus.pairs) {
      for (int id : pair.source) CHECK(id != specials::unk);
      for (int id : pair.target) CHECK(id != specials::unk);
    }
}
