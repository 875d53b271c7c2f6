#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bagvae/corpus.hpp"
#include "bagvae/kb.hpp"
#include "bagvae/model.hpp"

namespace bagvae {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t patience = 5;
  std::size_t batch_size = 128;
  std::size_t bag_cap = 500;
  double lr = 0.001;
  double weight_decay = 1e-6;
  double clip_norm = 10.0;
  double lambda = 0.9;
  /// Logistic KL schedule; non-positive values mean "derive from the data":
  /// x0 = steps per epoch, k = 2 ln 9 / steps per epoch (a 0.1 to 0.9 rise
  /// one epoch wide).
  double beta_k = 0.0;
  double beta_x0 = -1.0;
  double input_dropout = 0.3;
  double word_dropout = 0.3;
  double teacher_force = 0.3;
  std::uint64_t seed = 1;
};

/// Annealed KL weight. The KB prior trains at beta = 1 from the start;
/// annealing only fights KL collapse under the uninformative Normal prior.
double beta_at(std::size_t step, double k, double x0, PriorMode mode);

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  std::size_t step = 0;   // global optimizer steps so far
  double beta = 0.0;
  double loss = 0.0;
  double bce = 0.0;
  double reconstruction = 0.0;
  double kl = 0.0;
  double val_auc = 0.0;
};

struct TrainResult {
  std::size_t best_epoch = 0;
  double best_auc = 0.0;
  std::size_t epochs_run = 0;
  std::string best_checkpoint;
  std::string metrics_path;
  std::vector<EpochMetrics> history;
};

/// Runs the epoch loop, writes metrics.jsonl plus per-epoch checkpoints and a
/// best alias under out_dir, and leaves the best epoch's parameters loaded in
/// the model. One rng seeded from cfg.seed drives shuffling, bag capping, and
/// sentence noise, in that order within each epoch.
TrainResult train_model(Model& model, const std::vector<EncodedBag>& train_bags,
                        const std::vector<EncodedBag>& val_bags,
                        const PriorTable* priors, const TrainConfig& cfg,
                        const std::string& out_dir);

}  // namespace bagvae
