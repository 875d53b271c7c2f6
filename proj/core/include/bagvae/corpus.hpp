#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "bagvae/rng.hpp"
#include "bagvae/tensor.hpp"

namespace bagvae {

struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
};

struct SentenceExample {
  std::vector<std::string> tokens;
  Span head, tail;
  std::string head_id, tail_id, relation;
};

/// One JSON object per line:
/// {"text": str, "h": {"id": str, "pos": [start, end)}, "t": {...},
///  "relation": str}; pos are token indices after whitespace splitting.
std::vector<SentenceExample> read_corpus_jsonl(const std::string& path);
void write_corpus_jsonl(const std::string& path,
                        const std::vector<SentenceExample>& examples);

/// Lowercase ASCII letters, every decimal digit becomes '#'.
std::vector<std::string> normalize_tokens(const std::vector<std::string>& ts);
void normalize_examples(std::vector<SentenceExample>& ex);

/// Keeps the first occurrence of each (token sequence, pair, relation)
/// triple. Training split only; returns the number removed.
std::size_t dedup_train(std::vector<SentenceExample>& ex);

/// Appendix-style resizing. Sentences whose argument window alone exceeds
/// max_len are outliers (nullopt). Training split only.
std::optional<SentenceExample> resize_or_drop(const SentenceExample& ex,
                                              std::size_t max_len);

struct Vocabulary {
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;

  std::vector<std::string> id_to_word;
  std::vector<std::size_t> frequency;
  std::unordered_map<std::string, int> word_to_id;
  std::vector<std::string> relations;
  std::unordered_map<std::string, int> relation_to_id;

  int word_id(const std::string& w) const;
  int relation_id(const std::string& r) const;
  std::size_t size() const { return id_to_word.size(); }
  std::size_t num_relations() const { return relations.size(); }

  void save(const std::string& vocab_path,
            const std::string& relations_path) const;
  static Vocabulary load(const std::string& vocab_path,
                         const std::string& relations_path);
};

/// Word frequencies over UNIQUE sentences (a sentence repeated for several
/// pairs counts once); top_k kept, ties lexicographic; ids frequency-sorted
/// after the 4 reserved slots. NA is relation id 0, the rest lexicographic.
Vocabulary build_vocab(const std::vector<SentenceExample>& train,
                       const std::vector<std::string>& all_relations,
                       std::size_t top_k);

struct EncodedSentence {
  std::vector<int> token_ids;
  std::vector<int> pos_head, pos_tail;
  Span head, tail;
};

/// Relative positions are w.r.t. the first token of each span, clipped to
/// [-max_len, max_len], shifted by +max_len into [0, 2*max_len].
EncodedSentence encode_sentence(const SentenceExample& ex,
                                const Vocabulary& vocab, std::size_t max_len);

struct EncodedBag {
  std::string head_id, tail_id;
  std::vector<EncodedSentence> sentences;
  std::vector<char> labels;
};

/// Groups by ordered pair in first-appearance order; labels are the union of
/// the pair's relation annotations.
std::vector<EncodedBag> build_bags(const std::vector<SentenceExample>& ex,
                                   const Vocabulary& vocab,
                                   std::size_t max_len);

std::pair<std::vector<EncodedBag>, std::vector<EncodedBag>> split_validation(
    const std::vector<EncodedBag>& bags, double fraction, Rng& rng);

/// Matrix [vocab x dim]; every row first drawn from N(0, 0.1^2) in id order,
/// then rows found in the file overwrite. Wrong vector width is an error.
Tensor load_pretrained_vectors(const std::string& path, const Vocabulary& vocab,
                               std::size_t dim, Rng& rng);

struct PreprocessReport {
  std::size_t train_read = 0;
  std::size_t test_read = 0;
  std::size_t duplicates_removed = 0;
  std::size_t outliers_dropped = 0;
  std::size_t vocab_words = 0;
  std::size_t num_relations = 0;
  std::size_t train_bags = 0;
  std::size_t val_bags = 0;
  std::size_t test_bags = 0;
};

struct PreprocessConfig {
  std::size_t max_len = 50;
  std::size_t top_k = 40000;
  double val_fraction = 0.10;
  std::uint64_t seed = 1;
};

struct PreprocessOutput {
  Vocabulary vocab;
  std::vector<EncodedBag> train, val, test;
  PreprocessReport report;
};

PreprocessOutput preprocess(std::vector<SentenceExample> train_raw,
                            std::vector<SentenceExample> test_raw,
                            const PreprocessConfig& cfg);

/// Same pipeline with a pre-made validation split (pair-disjoint corpora);
/// val is normalized and encoded like test instead of being carved off train.
PreprocessOutput preprocess(std::vector<SentenceExample> train_raw,
                            std::vector<SentenceExample> test_raw,
                            std::vector<SentenceExample> val_raw,
                            const PreprocessConfig& cfg);

void save_encoded_bags(const std::string& path,
                       const std::vector<EncodedBag>& bags,
                       std::size_t num_relations, std::size_t max_len);
struct LoadedBags {
  std::vector<EncodedBag> bags;
  std::size_t num_relations = 0;
  std::size_t max_len = 0;
};
LoadedBags load_encoded_bags(const std::string& path);

std::set<std::pair<std::string, std::string>> collect_pairs(
    const std::vector<EncodedBag>& bags);
void write_pairs_tsv(const std::string& path,
                     const std::set<std::pair<std::string, std::string>>& ps);
std::set<std::pair<std::string, std::string>> read_pairs_tsv(
    const std::string& path);

}  // namespace bagvae
