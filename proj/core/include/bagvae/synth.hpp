#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "bagvae/corpus.hpp"
#include "bagvae/eval.hpp"
#include "bagvae/kb.hpp"

namespace bagvae {

// Synthetic distant-supervision corpus with a known answer key. Entities
// live on an integer lattice and every relation is a fixed offset vector on
// it, so the generated triples are exactly representable by a translation
// embedding. Surface sentences instantiate per-relation templates
// "<e1> fillers keyword_r fillers <e2>"; negative (NA) pairs get keyword-free
// filler sentences.
struct SynthSpec {
  std::size_t num_relations = 4;
  // fact pairs per relation; each draws a fresh head position, the tail sits
  // one relation offset away
  std::size_t entities_per_relation = 40;
  std::size_t templates_per_relation = 3;
  std::size_t min_bag_sentences = 1;
  std::size_t max_bag_sentences = 5;
  std::size_t filler_vocab = 60;
  // KB-only triples per relation over fresh entities (never surface in text)
  std::size_t kg_extra_per_relation = 40;
  std::size_t latent_dim = 8;
  // chance that a non-guaranteed sentence of a positive bag is off-template
  double noise_rate = 0.2;
  // NA pairs as a fraction of the fact pair count
  double negative_fraction = 0.5;
  double val_fraction = 0.15;
  double test_fraction = 0.25;
  std::uint64_t seed = 1;
};

struct SynthOutput {
  std::vector<SentenceExample> train, val, test;
  TripleSet triples;  // pre-pruning: all fact triples plus the KB-only extras
  std::set<std::pair<std::string, std::string>> eval_pairs;  // val + test
  // answer key over every split, ordered pair -> relation names
  std::map<std::pair<std::string, std::string>, std::set<std::string>> facts;
  std::map<std::string, std::vector<double>> latent;  // entity positions
  std::vector<std::vector<double>> offsets;           // one per relation
  std::vector<std::string> relation_names;            // aligned with offsets
  std::vector<std::string> keywords;                  // aligned with offsets
};

/// Deterministic under spec.seed. Throws std::invalid_argument on an
/// inconsistent spec (noise_rate outside [0,1), fractions that leave no
/// training data, degenerate sizes).
SynthOutput synth_generate(const SynthSpec& spec);

/// Brute-force re-check of the generator guarantees: mutually pair-disjoint
/// splits each containing a fact, at least one on-template sentence per
/// positive bag (all of them when noise_rate == 0), keyword-free NA bags,
/// every triple consistent with its relation offset in latent space, the
/// answer key matching the surface annotations. Throws on violation.
void synth_validate(const SynthOutput& out, const SynthSpec& spec);

/// Writes train.jsonl / val.jsonl / test.jsonl, triples.tsv, eval_pairs.tsv
/// and answers.tsv (head TAB tail TAB relation, sorted) under dir.
void synth_write(const SynthOutput& out, const std::string& dir);

std::map<std::pair<std::string, std::string>, std::set<std::string>>
read_answers_tsv(const std::string& path);

/// Deliberately naive O(n^2) re-implementations of the ranking metrics for
/// cross-checking: rank by placement counts instead of sorting, same
/// tie-breaking (score desc, then pair key, then relation id).
double naive_auc(const std::vector<PredictionRecord>& records);
double naive_precision_at_n(const std::vector<PredictionRecord>& records,
                            std::size_t n);

}  // namespace bagvae
