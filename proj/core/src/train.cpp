#include "bagvae/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "bagvae/eval.hpp"
#include "bagvae/nn.hpp"

namespace bagvae {

double beta_at(std::size_t step, double k, double x0, PriorMode mode) {
  if (mode == PriorMode::kb) return 1.0;
  if (mode != PriorMode::normal)
    throw std::invalid_argument("beta schedule: baseline has no KL term");
  if (k <= 0.0) throw std::invalid_argument("beta schedule: k must be > 0");
  return 1.0 / (1.0 + std::exp(-k * (static_cast<double>(step) - x0)));
}

namespace {

EncodedBag cap_bag(const EncodedBag& b, std::size_t cap, Rng& rng) {
  if (b.sentences.size() <= cap) return b;
  EncodedBag out;
  out.head_id = b.head_id;
  out.tail_id = b.tail_id;
  out.labels = b.labels;
  for (std::size_t i : rng.sample_without_replacement(b.sentences.size(), cap))
    out.sentences.push_back(b.sentences[i]);
  return out;
}

std::size_t token_count(const EncodedBag& b) {
  std::size_t n = 0;
  for (const auto& s : b.sentences) n += s.token_ids.size();
  return n;
}

void write_metrics_line(std::ofstream& f, const EpochMetrics& m) {
  f << "{\"epoch\":" << m.epoch << ",\"step\":" << m.step
    << ",\"beta\":" << format_double(m.beta)
    << ",\"loss\":" << format_double(m.loss)
    << ",\"bce\":" << format_double(m.bce)
    << ",\"reconstruction\":" << format_double(m.reconstruction)
    << ",\"kl\":" << format_double(m.kl)
    << ",\"val_auc\":" << format_double(m.val_auc) << "}\n";
  f.flush();
}

}  // namespace

TrainResult train_model(Model& model, const std::vector<EncodedBag>& train_bags,
                        const std::vector<EncodedBag>& val_bags,
                        const PriorTable* priors, const TrainConfig& cfg,
                        const std::string& out_dir) {
  if (train_bags.empty())
    throw std::invalid_argument("train: empty training set");
  if (val_bags.empty())
    throw std::invalid_argument("train: early stopping needs validation bags");
  if (model.mode() == PriorMode::kb && priors == nullptr)
    throw std::invalid_argument("train: kb mode needs a prior table");
  if (cfg.patience < 1 || cfg.batch_size < 1)
    throw std::invalid_argument("train: patience and batch size must be >= 1");

  const std::size_t steps_per_epoch =
      (train_bags.size() + cfg.batch_size - 1) / cfg.batch_size;
  const double x0 = cfg.beta_x0 >= 0.0
                        ? cfg.beta_x0
                        : static_cast<double>(steps_per_epoch);
  const double k = cfg.beta_k > 0.0
                       ? cfg.beta_k
                       : 2.0 * std::log(9.0) /
                             static_cast<double>(steps_per_epoch);
  const bool vae = model.mode() != PriorMode::baseline;

  Rng rng(cfg.seed);
  Adam opt(cfg.lr, cfg.weight_decay, cfg.clip_norm);

  TrainResult res;
  std::filesystem::create_directories(out_dir);
  res.metrics_path = out_dir + "/metrics.jsonl";
  res.best_checkpoint = out_dir + "/checkpoint_best.bvae";
  std::ofstream metrics(res.metrics_path, std::ios::binary);
  if (!metrics) throw std::runtime_error("cannot write " + res.metrics_path);

  std::size_t global_step = 0;
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(train_bags.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::vector<EncodedBag> capped;
    capped.reserve(order.size());
    for (std::size_t i : order)
      capped.push_back(cap_bag(train_bags[i], cfg.bag_cap, rng));
    std::stable_sort(capped.begin(), capped.end(),
                     [](const EncodedBag& a, const EncodedBag& b) {
                       return token_count(a) < token_count(b);
                     });

    double sum_loss = 0.0, sum_bce = 0.0, sum_rec = 0.0, sum_kl = 0.0;
    double last_beta = vae ? beta_at(global_step, k, x0, model.mode()) : 0.0;
    for (std::size_t start = 0; start < capped.size();
         start += cfg.batch_size) {
      const std::size_t stop =
          std::min(start + cfg.batch_size, capped.size());
      const double beta =
          vae ? beta_at(global_step, k, x0, model.mode()) : 0.0;
      last_beta = beta;

      Tape tape(&model.params());
      Var batch_loss{};
      for (std::size_t bi = start; bi < stop; ++bi) {
        const EncodedBag& bag = capped[bi];
        std::vector<SentenceNoise> noise;
        noise.reserve(bag.sentences.size());
        for (const auto& s : bag.sentences)
          noise.push_back(draw_sentence_noise(
              s, model.dims(), cfg.input_dropout, cfg.word_dropout,
              cfg.teacher_force, rng));
        BagLosses parts;
        Var l = model.joint_loss(tape, bag, noise, priors, beta, cfg.lambda,
                                 &parts);
        sum_loss += parts.total;
        sum_bce += parts.bce;
        sum_rec += parts.reconstruction;
        sum_kl += parts.kl;
        batch_loss = bi == start ? l : tape.add(batch_loss, l);
      }
      batch_loss =
          tape.smul(batch_loss, 1.0 / static_cast<double>(stop - start));
      model.params().zero_grad();
      tape.backward(batch_loss);
      opt.step(model.params());
      ++global_step;
    }

    EpochMetrics em;
    em.epoch = epoch;
    em.step = global_step;
    em.beta = last_beta;
    em.loss = sum_loss / static_cast<double>(capped.size());
    em.bce = sum_bce / static_cast<double>(capped.size());
    em.reconstruction = sum_rec / static_cast<double>(capped.size());
    em.kl = sum_kl / static_cast<double>(capped.size());
    em.val_auc = auc(pr_curve(collect_predictions(model, val_bags)));
    write_metrics_line(metrics, em);
    res.history.push_back(em);

    model.save_checkpoint(
        out_dir + "/checkpoint_epoch" + std::to_string(epoch) + ".bvae",
        &opt);
    if (res.best_epoch == 0 || em.val_auc > res.best_auc) {
      res.best_epoch = epoch;
      res.best_auc = em.val_auc;
      since_best = 0;
      model.save_checkpoint(res.best_checkpoint, &opt);
    } else {
      ++since_best;
    }
    res.epochs_run = epoch;
    if (since_best >= cfg.patience) break;
  }

  model.load_checkpoint(res.best_checkpoint, nullptr);
  return res;
}

}  // namespace bagvae
