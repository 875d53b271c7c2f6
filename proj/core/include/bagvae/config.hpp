#pragma once

#include <cstdint>
#include <string>

#include "bagvae/kb.hpp"
#include "bagvae/model.hpp"
#include "bagvae/synth.hpp"
#include "bagvae/train.hpp"

namespace bagvae {

struct PathsConfig {
  std::string train_corpus;
  std::string val_corpus;  // empty: validation is carved off train
  std::string test_corpus;
  std::string triples;
  std::string eval_pairs;
  std::string pretrained_vectors;  // empty: random init
  std::string out = "runs/default";
};

struct ModelConfig {
  std::size_t d_w = 50;
  std::size_t d_p = 8;
  std::size_t d_z = 64;
  std::size_t hidden = 256;
  std::size_t d_s = 64;
  std::size_t max_len = 50;
  std::size_t top_k = 40000;
  std::string softmax = "auto";
};

/// Full run configuration. Every field carries the published default, so an
/// empty override file reproduces the reference setup; unknown keys anywhere
/// in the file are errors.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string prior = "kb";
  double val_fraction = 0.1;
  PathsConfig paths;
  ModelConfig model;
  TrainConfig train;
  TransEConfig transe;
  SynthSpec synth;
};

/// Strict parse: unknown or ill-typed keys throw std::invalid_argument naming
/// the offending path. An empty or whitespace-only file is the empty
/// override {}; an unreadable file is an error.
RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& json_text);

/// Serializes every effective value (the resolved_config.json artifact);
/// parse_run_config(dump_run_config(c)) reproduces c exactly.
std::string dump_run_config(const RunConfig& cfg);

/// "auto" | "full" | "adaptive"
OutputSoftmax::Mode softmax_mode_from_string(const std::string& s);

}  // namespace bagvae
