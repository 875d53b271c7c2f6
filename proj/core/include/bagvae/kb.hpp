#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "bagvae/corpus.hpp"
#include "bagvae/rng.hpp"

namespace bagvae {

struct Triple {
  int h = 0, r = 0, t = 0;
};

/// Triples with ids interned to dense ints on load. File format: three
/// tab-separated ids per line (head, relation, tail).
struct TripleSet {
  std::vector<std::string> entities;
  std::vector<std::string> relations;
  std::unordered_map<std::string, int> entity_id;
  std::unordered_map<std::string, int> relation_id;
  std::vector<Triple> triples;

  int intern_entity(const std::string& name);
  int intern_relation(const std::string& name);
  void add(const std::string& h, const std::string& r, const std::string& t);

  static TripleSet load(const std::string& path);
  void save(const std::string& path) const;
};

/// Removes every triple touching an eval pair in either orientation.
/// Returns the number removed.
std::size_t prune_eval_links(
    TripleSet& ts, const std::set<std::pair<std::string, std::string>>& pairs);

struct KbEmbeddings {
  std::size_t dim = 0;
  std::vector<std::string> entities;
  std::vector<std::string> relations;
  std::unordered_map<std::string, int> entity_id;
  std::unordered_map<std::string, int> relation_id;
  std::vector<double> ent;  // num_entities x dim, row major
  std::vector<double> rel;  // num_relations x dim

  const double* entity(int i) const { return ent.data() + i * dim; }
  const double* relation(int i) const { return rel.data() + i * dim; }

  void save(const std::string& path) const;
  static KbEmbeddings load(const std::string& path);
};

struct TransEConfig {
  std::size_t dim = 64;
  std::size_t steps = 500000;
  std::size_t batch = 1024;
  std::size_t negatives = 256;
  double lr = 0.1;
  double gamma = 10.0;
  double adv_temperature = 1.0;
  double reg_lambda = 1e-7;
  std::uint64_t seed = 1;
};

/// ||e_h + r - e_t||_2
double transe_distance(const KbEmbeddings& emb, int h, int r, int t);
/// gamma - distance (higher = more plausible).
double transe_score(const KbEmbeddings& emb, const std::string& h,
                    const std::string& r, const std::string& t, double gamma);

/// softmax(alpha * (gamma - d)) over the negatives, treated as constants.
std::vector<double> adversarial_weights(const std::vector<double>& distances,
                                        double gamma, double alpha);

/// Self-adversarial negative-sampling trainer with SGD and cubed-L3 entity
/// regularization. Corruption replaces head or tail with probability 0.5,
/// resampling while the corrupted triple exists (filtered sampling, bounded
/// retries).
KbEmbeddings transe_train(const TripleSet& ts, const TransEConfig& cfg);

struct PriorTable {
  std::size_t dim = 0;
  std::map<std::pair<std::string, std::string>, std::vector<double>> means;
  double coverage = 0.0;

  /// Nonzero mean for a covered pair, nullptr otherwise (caller treats
  /// missing as the zero vector).
  const std::vector<double>* lookup(const std::string& h,
                                    const std::string& t) const;

  void save(const std::string& path) const;
  static PriorTable load(const std::string& path);
};

/// mu = e_head - e_tail for pairs with both entities known; pairs with an
/// unknown entity are left out of the table (zero-mean fallback at use).
/// Coverage = covered / |corpus_pairs|.
PriorTable build_prior_table(
    const KbEmbeddings& emb,
    const std::set<std::pair<std::string, std::string>>& corpus_pairs);

/// Drops training bags whose pair has no table entry (zero-mean fallback
/// pairs). Evaluation bags are never filtered.
std::vector<EncodedBag> filter_prior_only(const std::vector<EncodedBag>& bags,
                                          const PriorTable& table);

}  // namespace bagvae
