#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "common.hpp"

namespace hkd {

struct LanguageId {
  std::string code;
  auto operator<=>(const LanguageId&) const = default;
};

enum class Split { train, dev, test };

const char* split_name(Split s);
Split split_from_name(const std::string& name);

// Reserved token ids. Every Vocabulary places these four symbols first.
namespace specials {
inline constexpr int pad = 0;
inline constexpr int bos = 1;
inline constexpr int eos = 2;
inline constexpr int unk = 3;
inline constexpr int count = 4;
}  // namespace specials

enum class TokenMode { chars, whitespace };

std::vector<std::string> tokenize(const std::string& text, TokenMode mode);

/// Shared symbol table. Ids 0..3 are <pad>, <s>, </s>, <unk>; the remaining
/// symbols are ordered by descending frequency, ties broken lexicographically.
/// Language tag symbols ("<a1>") may be appended after construction.
class Vocabulary {
 public:
  Vocabulary() = default;

  int size() const { return static_cast<int>(symbols_.size()); }
  /// -1 when the symbol is absent.
  int id_of(const std::string& symbol) const;
  const std::string& symbol(int id) const;

  std::vector<int> encode(const std::string& text, TokenMode mode) const;
  std::string decode(const std::vector<int>& ids, TokenMode mode) const;

  void add_symbol(const std::string& symbol);
  void add_language_tags(const std::vector<LanguageId>& langs);
  static std::string tag_symbol(const LanguageId& lang) { return "<" + lang.code + ">"; }
  bool has_tag(const LanguageId& lang) const { return id_of(tag_symbol(lang)) >= 0; }
  /// Throws a config error if the tag was never added.
  int tag_id(const LanguageId& lang) const;

  static Vocabulary with_specials();

 private:
  std::vector<std::string> symbols_;
  std::map<std::string, int> index_;
};

/// One shared vocabulary over all languages' raw text.
Vocabulary build_vocab(const std::vector<std::vector<std::string>>& corpora, TokenMode mode);

struct SentencePair {
  std::vector<int> source;
  std::vector<int> target;
  bool operator==(const SentencePair&) const = default;
};

struct ParallelCorpus {
  LanguageId lang;
  Split split = Split::train;
  std::vector<SentencePair> pairs;
  size_t size() const { return pairs.size(); }
};

struct Batch {
  std::vector<SentencePair> pairs;
  size_t size() const { return pairs.size(); }
};

ParallelCorpus encode_corpus(const std::vector<std::pair<std::string, std::string>>& text_pairs,
                             const LanguageId& lang, const Vocabulary& vocab, TokenMode mode,
                             Split split);

ParallelCorpus load_parallel(const std::filesystem::path& src_path,
                             const std::filesystem::path& tgt_path, const LanguageId& lang,
                             const Vocabulary& vocab, TokenMode mode, Split split);

/// Repeats every corpus (remainder sampled without replacement) until all
/// corpora match the largest one's size, then reshuffles each.
std::map<LanguageId, ParallelCorpus> upsample(const std::map<LanguageId, ParallelCorpus>& corpora,
                                              uint64_t seed);

/// Seeded permutation partitioned into consecutive batches; the last batch
/// may be short. The union of batches is exactly the corpus.
std::vector<Batch> make_minibatches(const ParallelCorpus& corpus, size_t batch_size, uint64_t seed);

// ---- synthetic families ----

struct SyntheticFamilySpec {
  int n_families = 3;
  int langs_per_family = 3;
  /// Per-character substitution noise within a family; must stay below 0.5
  /// so family membership remains meaningful.
  double noise_rate = 0.08;
  int train_sentences = 240;
  int low_resource_train_sentences = 40;
  int low_resource_per_family = 1;
  int dev_sentences = 40;
  int test_sentences = 40;
  int min_sentence_words = 3;
  int max_sentence_words = 8;

  void validate() const;
};

struct RawPair {
  std::string source;
  std::string target;
};

struct SyntheticData {
  std::vector<LanguageId> languages;
  std::map<LanguageId, int> family;
  std::vector<LanguageId> low_resource;
  std::map<Split, std::map<LanguageId, std::vector<RawPair>>> text;
  /// 0/1 feature rows, family prototypes with per-language bit flips.
  std::map<LanguageId, std::vector<int>> kb;
};

/// Languages of one family share a substitution cipher over the source side;
/// the target side is drawn from one shared stream per split, so related
/// languages are noisy variants of each other.
SyntheticData generate_synthetic_text(const SyntheticFamilySpec& spec, uint64_t seed);

struct EncodedSynthetic {
  Vocabulary vocab;
  std::map<Split, std::map<LanguageId, ParallelCorpus>> corpora;
  SyntheticData raw;
};

EncodedSynthetic generate_synthetic(const SyntheticFamilySpec& spec, uint64_t seed);

}  // namespace hkd
