#include "bagvae/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace bagvae {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<PredictionRecord> collect_predictions(
    const Model& model, const std::vector<EncodedBag>& bags) {
  std::vector<PredictionRecord> out;
  out.reserve(bags.size() * (model.dims().relations - 1));
  for (const EncodedBag& b : bags) {
    BagPrediction pred = model.predict(b);
    for (std::size_t r = 1; r < model.dims().relations; ++r) {
      PredictionRecord rec;
      rec.pair_key = b.head_id + "|" + b.tail_id;
      rec.relation = static_cast<int>(r);
      rec.score = pred.probs[r];
      rec.is_fact = b.labels[r] != 0;
      out.push_back(rec);
    }
  }
  return out;
}

namespace {

void rank_records(std::vector<PredictionRecord>& records) {
  std::sort(records.begin(), records.end(),
            [](const PredictionRecord& a, const PredictionRecord& b) {
              if (a.score != b.score) return a.score > b.score;
              if (a.pair_key != b.pair_key) return a.pair_key < b.pair_key;
              return a.relation < b.relation;
            });
}

}  // namespace

PRCurve pr_curve(std::vector<PredictionRecord> records) {
  if (records.empty()) throw std::invalid_argument("pr curve: no records");
  rank_records(records);
  PRCurve c;
  for (const auto& r : records) c.total_facts += r.is_fact ? 1 : 0;
  if (c.total_facts == 0) throw std::invalid_argument("pr curve: no facts");
  std::size_t tp = 0;
  c.points.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    tp += records[i].is_fact ? 1 : 0;
    c.points.emplace_back(
        static_cast<double>(tp) / static_cast<double>(c.total_facts),
        static_cast<double>(tp) / static_cast<double>(i + 1));
  }
  return c;
}

double auc(const PRCurve& curve) {
  if (curve.points.empty()) throw std::invalid_argument("auc: empty curve");
  double area = 0.0;
  double pr = 0.0, pp = curve.points.front().second;  // start at (0, prec@1)
  for (const auto& [r, p] : curve.points) {
    area += (r - pr) * 0.5 * (p + pp);
    pr = r;
    pp = p;
  }
  return area;
}

double precision_at_n(std::vector<PredictionRecord> records, std::size_t n) {
  if (n == 0) throw std::invalid_argument("precision at n: n must be >= 1");
  if (n > records.size())
    throw std::invalid_argument("precision at n: n exceeds record count");
  rank_records(records);
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) tp += records[i].is_fact ? 1 : 0;
  return static_cast<double>(tp) / static_cast<double>(n);
}

std::vector<int> reconstruct_sentence(const Model& model,
                                      const EncodedSentence& sent, bool sample,
                                      std::size_t max_steps, Rng* rng) {
  if (!sample) return model.reconstruct(sent, max_steps);
  if (rng == nullptr)
    throw std::invalid_argument("sample reconstruction needs an rng");
  std::vector<double> eps(model.dims().d_z);
  for (double& e : eps) e = rng->normal();
  return model.reconstruct(sent, eps, max_steps);
}

std::vector<LatentRecord> dump_latents(const Model& model,
                                       const std::vector<EncodedBag>& bags,
                                       const Vocabulary& vocab,
                                       std::size_t sample_per_bag, Rng& rng) {
  std::vector<LatentRecord> out;
  for (const EncodedBag& b : bags) {
    bool positive = false;
    for (std::size_t r = 1; r < b.labels.size(); ++r)
      positive = positive || b.labels[r] != 0;
    if (!positive) continue;
    BagPrediction pred = model.predict(b);
    const std::size_t k = std::min(sample_per_bag, b.sentences.size());
    std::vector<std::size_t> picks =
        rng.sample_without_replacement(b.sentences.size(), k);
    std::vector<std::string> rels;
    for (std::size_t r = 1; r < b.labels.size(); ++r)
      if (b.labels[r] != 0) rels.push_back(vocab.relations[r]);
    for (std::size_t i : picks) {
      LatentRecord rec;
      rec.pair_key = b.head_id + "|" + b.tail_id;
      rec.relations = rels;
      rec.mu = pred.mu[i];
      out.push_back(rec);
    }
  }
  return out;
}

void write_pr_csv(const std::string& path,
                  const std::vector<PredictionRecord>& records) {
  std::vector<PredictionRecord> ranked = records;
  rank_records(ranked);
  PRCurve c = pr_curve(records);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "rank,score,is_fact,precision,recall\n";
  for (std::size_t i = 0; i < ranked.size(); ++i)
    f << i + 1 << ',' << format_double(ranked[i].score) << ','
      << (ranked[i].is_fact ? 1 : 0) << ','
      << format_double(c.points[i].second) << ','
      << format_double(c.points[i].first) << '\n';
}

void write_pr_svg(const std::string& path, const PRCurve& curve) {
  const int W = 480, H = 480, M = 40;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
    << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << ' ' << H << "\">\n";
  f << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  f << "<line x1=\"" << M << "\" y1=\"" << H - M << "\" x2=\"" << W - M
    << "\" y2=\"" << H - M << "\" stroke=\"black\"/>\n";
  f << "<line x1=\"" << M << "\" y1=\"" << M << "\" x2=\"" << M << "\" y2=\""
    << H - M << "\" stroke=\"black\"/>\n";
  f << "<text x=\"" << W / 2 << "\" y=\"" << H - 8
    << "\" text-anchor=\"middle\" font-size=\"14\">recall</text>\n";
  f << "<text x=\"12\" y=\"" << H / 2
    << "\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 12 "
    << H / 2 << ")\">precision</text>\n";
  f << "<polyline fill=\"none\" stroke=\"#1f6fb2\" stroke-width=\"1.5\" "
       "points=\"";
  char buf[64];
  auto px = [&](double r) { return M + r * (W - 2 * M); };
  auto py = [&](double p) { return H - M - p * (H - 2 * M); };
  std::snprintf(buf, sizeof(buf), "%.2f,%.2f", px(0.0),
                py(curve.points.empty() ? 0.0 : curve.points[0].second));
  f << buf;
  for (const auto& [r, p] : curve.points) {
    std::snprintf(buf, sizeof(buf), " %.2f,%.2f", px(r), py(p));
    f << buf;
  }
  f << "\"/>\n</svg>\n";
}

void write_predictions_jsonl(const std::string& path,
                             const std::vector<PredictionRecord>& records) {
  std::vector<PredictionRecord> ranked = records;
  rank_records(ranked);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  for (const auto& r : ranked)
    f << "{\"pair\":\"" << r.pair_key << "\",\"relation\":" << r.relation
      << ",\"score\":" << format_double(r.score)
      << ",\"fact\":" << (r.is_fact ? "true" : "false") << "}\n";
}

void write_latents_csv(const std::string& path,
                       const std::vector<LatentRecord>& records) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  for (const auto& rec : records) {
    f << rec.pair_key << ',';
    for (std::size_t i = 0; i < rec.relations.size(); ++i)
      f << (i ? ";" : "") << rec.relations[i];
    for (double v : rec.mu) f << ',' << format_double(v);
    f << '\n';
  }
}

}  // namespace bagvae
