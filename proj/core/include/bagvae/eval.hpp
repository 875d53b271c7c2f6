#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "bagvae/corpus.hpp"
#include "bagvae/model.hpp"
#include "bagvae/rng.hpp"

namespace bagvae {

struct PredictionRecord {
  std::string pair_key;  // head|tail
  int relation = 0;      // non-NA relation id
  double score = 0.0;
  bool is_fact = false;
};

/// One record per (bag, non-NA relation); NA is never emitted. Scores come
/// from the mean-field forward pass, so repeated calls agree bit for bit.
std::vector<PredictionRecord> collect_predictions(
    const Model& model, const std::vector<EncodedBag>& bags);

struct PRCurve {
  std::vector<std::pair<double, double>> points;  // (recall, precision)
  std::size_t total_facts = 0;
};

/// Rank by score descending, ties by (pair_key, relation) ascending.
PRCurve pr_curve(std::vector<PredictionRecord> records);
/// Trapezoid over the curve points with (0, precision@1) prepended.
double auc(const PRCurve& curve);
double precision_at_n(std::vector<PredictionRecord> records, std::size_t n);

/// Greedy decode; sample=false uses z = mu, sample=true draws eps from rng.
std::vector<int> reconstruct_sentence(const Model& model,
                                      const EncodedSentence& sent, bool sample,
                                      std::size_t max_steps, Rng* rng);

struct LatentRecord {
  std::string pair_key;
  std::vector<std::string> relations;
  std::vector<double> mu;
};

/// sample_per_bag sentences (without replacement) from every bag that has a
/// non-NA label; mu vectors from the mean-field pass.
std::vector<LatentRecord> dump_latents(const Model& model,
                                       const std::vector<EncodedBag>& bags,
                                       const Vocabulary& vocab,
                                       std::size_t sample_per_bag, Rng& rng);

void write_pr_csv(const std::string& path,
                  const std::vector<PredictionRecord>& records);
void write_pr_svg(const std::string& path, const PRCurve& curve);
void write_predictions_jsonl(const std::string& path,
                             const std::vector<PredictionRecord>& records);
void write_latents_csv(const std::string& path,
                       const std::vector<LatentRecord>& records);

/// %.17g, the round-trippable float text used in every metrics artifact.
std::string format_double(double v);

}  // namespace bagvae
