#include "corpus.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace hkd {

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "?";
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "dev") return Split::dev;
  if (name == "test") return Split::test;
  throw validation_error("unknown split '" + name + "'");
}

std::vector<std::string> tokenize(const std::string& text, TokenMode mode) {
  std::vector<std::string> tokens;
  if (mode == TokenMode::chars) {
    tokens.reserve(text.size());
    for (char c : text) tokens.emplace_back(1, c);
  } else {
    std::istringstream ss(text);
    std::string tok;
    while (ss >> tok) tokens.push_back(tok);
  }
  return tokens;
}

int Vocabulary::id_of(const std::string& symbol) const {
  auto it = index_.find(symbol);
  return it == index_.end() ? -1 : it->second;
}

const std::string& Vocabulary::symbol(int id) const {
  if (id < 0 || id >= size()) throw validation_error("token id out of range: " + std::to_string(id));
  return symbols_[static_cast<size_t>(id)];
}

std::vector<int> Vocabulary::encode(const std::string& text, TokenMode mode) const {
  std::vector<int> ids;
  for (const auto& tok : tokenize(text, mode)) {
    int id = id_of(tok);
    ids.push_back(id >= 0 ? id : specials::unk);
  }
  return ids;
}

std::string Vocabulary::decode(const std::vector<int>& ids, TokenMode mode) const {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (mode == TokenMode::whitespace && i > 0) out += ' ';
    out += symbol(ids[i]);
  }
  return out;
}

void Vocabulary::add_symbol(const std::string& symbol) {
  if (index_.count(symbol)) throw validation_error("duplicate vocabulary symbol '" + symbol + "'");
  index_[symbol] = size();
  symbols_.push_back(symbol);
}

void Vocabulary::add_language_tags(const std::vector<LanguageId>& langs) {
  auto sorted = langs;
  std::sort(sorted.begin(), sorted.end());
  for (const auto& lang : sorted) add_symbol(tag_symbol(lang));
}

int Vocabulary::tag_id(const LanguageId& lang) const {
  int id = id_of(tag_symbol(lang));
  if (id < 0) throw config_error("language tag " + tag_symbol(lang) + " not in vocabulary");
  return id;
}

Vocabulary Vocabulary::with_specials() {
  Vocabulary v;
  v.add_symbol("<pad>");
  v.add_symbol("<s>");
  v.add_symbol("</s>");
  v.add_symbol("<unk>");
  return v;
}

Vocabulary build_vocab(const std::vector<std::vector<std::string>>& corpora, TokenMode mode) {
  std::map<std::string, long> freq;
  size_t sentences = 0;
  for (const auto& corpus : corpora) {
    for (const auto& sentence : corpus) {
      ++sentences;
      for (const auto& tok : tokenize(sentence, mode)) ++freq[tok];
    }
  }
  if (sentences == 0) throw validation_error("build_vocab: no sentences given");

  std::vector<std::pair<std::string, long>> items(freq.begin(), freq.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary v = Vocabulary::with_specials();
  for (const auto& [sym, _] : items) v.add_symbol(sym);
  return v;
}

ParallelCorpus encode_corpus(const std::vector<std::pair<std::string, std::string>>& text_pairs,
                             const LanguageId& lang, const Vocabulary& vocab, TokenMode mode,
                             Split split) {
  ParallelCorpus corpus;
  corpus.lang = lang;
  corpus.split = split;
  corpus.pairs.reserve(text_pairs.size());
  size_t line = 0;
  for (const auto& [src, tgt] : text_pairs) {
    ++line;
    SentencePair p{vocab.encode(src, mode), vocab.encode(tgt, mode)};
    if (p.source.empty() || p.target.empty())
      throw validation_error("empty sentence at line " + std::to_string(line) + " for language " +
                             lang.code);
    corpus.pairs.push_back(std::move(p));
  }
  return corpus;
}

ParallelCorpus load_parallel(const std::filesystem::path& src_path,
                             const std::filesystem::path& tgt_path, const LanguageId& lang,
                             const Vocabulary& vocab, TokenMode mode, Split split) {
  auto src_lines = read_lines(src_path);
  auto tgt_lines = read_lines(tgt_path);
  if (src_lines.size() != tgt_lines.size())
    throw validation_error("line count mismatch for " + lang.code + ": " +
                           std::to_string(src_lines.size()) + " source lines vs " +
                           std::to_string(tgt_lines.size()) + " target lines");
  std::vector<std::pair<std::string, std::string>> pairs;
  pairs.reserve(src_lines.size());
  for (size_t i = 0; i < src_lines.size(); ++i) pairs.emplace_back(src_lines[i], tgt_lines[i]);
  return encode_corpus(pairs, lang, vocab, mode, split);
}

std::map<LanguageId, ParallelCorpus> upsample(const std::map<LanguageId, ParallelCorpus>& corpora,
                                              uint64_t seed) {
  size_t largest = 0;
  for (const auto& [_, c] : corpora) {
    if (c.pairs.empty()) throw validation_error("upsample: empty corpus for " + c.lang.code);
    largest = std::max(largest, c.size());
  }

  std::map<LanguageId, ParallelCorpus> out;
  for (const auto& [lang, c] : corpora) {
    Rng rng(derive_seed(seed, "upsample/" + lang.code));
    ParallelCorpus up;
    up.lang = c.lang;
    up.split = c.split;
    const size_t n = c.size();
    const size_t copies = largest / n;
    const size_t remainder = largest - copies * n;
    up.pairs.reserve(largest);
    for (size_t k = 0; k < copies; ++k)
      up.pairs.insert(up.pairs.end(), c.pairs.begin(), c.pairs.end());
    for (size_t idx : rng.sample_without_replacement(n, remainder)) up.pairs.push_back(c.pairs[idx]);
    rng.shuffle(up.pairs);
    out.emplace(lang, std::move(up));
  }
  return out;
}

std::vector<Batch> make_minibatches(const ParallelCorpus& corpus, size_t batch_size,
                                    uint64_t seed) {
  if (batch_size < 1) throw validation_error("batch size must be >= 1");
  std::vector<size_t> order(corpus.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  std::vector<Batch> batches;
  for (size_t start = 0; start < order.size(); start += batch_size) {
    Batch b;
    const size_t end = std::min(start + batch_size, order.size());
    for (size_t i = start; i < end; ++i) b.pairs.push_back(corpus.pairs[order[i]]);
    batches.push_back(std::move(b));
  }
  return batches;
}

// ---- synthetic families ----

void SyntheticFamilySpec::validate() const {
  if (n_families < 1) throw validation_error("synthetic.families must be >= 1");
  if (n_families > 26) throw validation_error("synthetic.families must be <= 26");
  if (langs_per_family < 1) throw validation_error("synthetic.langs_per_family must be >= 1");
  if (noise_rate < 0.0 || noise_rate >= 0.5)
    throw validation_error("synthetic.noise_rate must lie in [0, 0.5)");
  if (train_sentences < 1) throw validation_error("synthetic.train_sentences must be >= 1");
  if (low_resource_train_sentences < 1 || low_resource_train_sentences > train_sentences)
    throw validation_error(
        "synthetic.low_resource_train_sentences must lie in [1, train_sentences]");
  if (low_resource_per_family < 1 || low_resource_per_family > langs_per_family)
    throw validation_error(
        "synthetic.low_resource_per_family must lie in [1, langs_per_family]");
  if (dev_sentences < 1) throw validation_error("synthetic.dev_sentences must be >= 1");
  if (test_sentences < 1) throw validation_error("synthetic.test_sentences must be >= 1");
  if (min_sentence_words < 1) throw validation_error("synthetic.min_sentence_words must be >= 1");
  if (max_sentence_words < min_sentence_words)
    throw validation_error("synthetic.max_sentence_words must be >= min_sentence_words");
}

namespace {

constexpr int kKbFeatures = 16;
constexpr int kKbFlipsPerLanguage = 2;
constexpr int kLexiconSize = 20;

std::vector<std::string> make_lexicon(Rng& rng) {
  std::set<std::string> words;
  while (static_cast<int>(words.size()) < kLexiconSize) {
    int len = rng.next_int(2, 5);
    std::string w;
    for (int i = 0; i < len; ++i) w += static_cast<char>('a' + rng.next_below(26));
    words.insert(w);
  }
  return {words.begin(), words.end()};
}

std::vector<std::string> make_target_stream(const SyntheticFamilySpec& spec,
                                            const std::vector<std::string>& lexicon, int count,
                                            Rng& rng) {
  std::vector<std::string> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    int n_words = rng.next_int(spec.min_sentence_words, spec.max_sentence_words);
    std::string s;
    for (int w = 0; w < n_words; ++w) {
      if (w > 0) s += ' ';
      s += lexicon[rng.next_below(lexicon.size())];
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::array<char, 26> make_cipher(Rng& rng) {
  std::vector<char> letters(26);
  for (int i = 0; i < 26; ++i) letters[static_cast<size_t>(i)] = static_cast<char>('a' + i);
  rng.shuffle(letters);
  std::array<char, 26> cipher{};
  std::copy(letters.begin(), letters.end(), cipher.begin());
  return cipher;
}

std::string apply_cipher(const std::string& text, const std::array<char, 26>& cipher) {
  std::string out = text;
  for (char& c : out)
    if (c >= 'a' && c <= 'z') c = cipher[static_cast<size_t>(c - 'a')];
  return out;
}

std::string apply_noise(const std::string& text, double rate, Rng& rng) {
  std::string out = text;
  for (char& c : out) {
    if (c >= 'a' && c <= 'z' && rng.next_double() < rate)
      c = static_cast<char>('a' + rng.next_below(26));
  }
  return out;
}

int hamming(const std::vector<int>& a, const std::vector<int>& b) {
  int d = 0;
  for (size_t i = 0; i < a.size(); ++i) d += (a[i] != b[i]) ? 1 : 0;
  return d;
}

}  // namespace

SyntheticData generate_synthetic_text(const SyntheticFamilySpec& spec, uint64_t seed) {
  spec.validate();

  SyntheticData data;
  Rng lex_rng(derive_seed(seed, "synthetic/lexicon"));
  const auto lexicon = make_lexicon(lex_rng);

  // one target stream per split, shared by all languages
  std::map<Split, std::vector<std::string>> targets;
  for (auto [split, count] : {std::pair{Split::train, spec.train_sentences},
                              {Split::dev, spec.dev_sentences},
                              {Split::test, spec.test_sentences}}) {
    Rng rng(derive_seed(seed, std::string("synthetic/targets/") + split_name(split)));
    targets[split] = make_target_stream(spec, lexicon, count, rng);
  }

  std::vector<std::array<char, 26>> ciphers;
  for (int f = 0; f < spec.n_families; ++f) {
    Rng rng(derive_seed(seed, "synthetic/cipher/" + std::to_string(f)));
    ciphers.push_back(make_cipher(rng));
  }

  // family feature prototypes kept at Hamming distance >= 6 from each other
  std::vector<std::vector<int>> prototypes;
  for (int f = 0; f < spec.n_families; ++f) {
    Rng rng(derive_seed(seed, "synthetic/kb-family/" + std::to_string(f)));
    std::vector<int> proto(kKbFeatures);
    bool ok = false;
    while (!ok) {
      for (auto& bit : proto) bit = static_cast<int>(rng.next_below(2));
      ok = true;
      for (const auto& prev : prototypes)
        if (hamming(prev, proto) < 6) ok = false;
    }
    prototypes.push_back(proto);
  }

  for (int f = 0; f < spec.n_families; ++f) {
    for (int j = 0; j < spec.langs_per_family; ++j) {
      LanguageId lang{std::string(1, static_cast<char>('a' + f)) + std::to_string(j + 1)};
      data.languages.push_back(lang);
      data.family[lang] = f;
      const bool low = j >= spec.langs_per_family - spec.low_resource_per_family;
      if (low) data.low_resource.push_back(lang);

      for (auto split : {Split::train, Split::dev, Split::test}) {
        int count = static_cast<int>(targets[split].size());
        if (split == Split::train && low) count = spec.low_resource_train_sentences;
        Rng noise_rng(derive_seed(seed, "synthetic/noise/" + lang.code + "/" + split_name(split)));
        auto& pairs = data.text[split][lang];
        pairs.reserve(static_cast<size_t>(count));
        for (int i = 0; i < count; ++i) {
          const std::string& tgt = targets[split][static_cast<size_t>(i)];
          std::string src = apply_noise(apply_cipher(tgt, ciphers[static_cast<size_t>(f)]),
                                        spec.noise_rate, noise_rng);
          pairs.push_back(RawPair{std::move(src), tgt});
        }
      }

      Rng kb_rng(derive_seed(seed, "synthetic/kb-lang/" + lang.code));
      auto row = prototypes[static_cast<size_t>(f)];
      for (size_t idx : kb_rng.sample_without_replacement(kKbFeatures, kKbFlipsPerLanguage))
        row[idx] = 1 - row[idx];
      data.kb[lang] = std::move(row);
    }
  }
  return data;
}

EncodedSynthetic generate_synthetic(const SyntheticFamilySpec& spec, uint64_t seed) {
  EncodedSynthetic out;
  out.raw = generate_synthetic_text(spec, seed);

  std::vector<std::vector<std::string>> train_texts;
  for (const auto& [lang, pairs] : out.raw.text[Split::train]) {
    std::vector<std::string> sentences;
    for (const auto& p : pairs) {
      sentences.push_back(p.source);
      sentences.push_back(p.target);
    }
    train_texts.push_back(std::move(sentences));
  }
  out.vocab = build_vocab(train_texts, TokenMode::chars);
  out.vocab.add_language_tags(out.raw.languages);

  for (const auto& [split, by_lang] : out.raw.text) {
    for (const auto& [lang, pairs] : by_lang) {
      std::vector<std::pair<std::string, std::string>> text_pairs;
      text_pairs.reserve(pairs.size());
      for (const auto& p : pairs) text_pairs.emplace_back(p.source, p.target);
      out.corpora[split].emplace(lang,
                                 encode_corpus(text_pairs, lang, out.vocab, TokenMode::chars, split));
    }
  }
  return out;
}

}  // namespace hkd
