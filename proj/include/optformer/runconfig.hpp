// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "optformer/corpus.hpp"
#include "optformer/optim.hpp"
#include "optformer/sam.hpp"
#include "optformer/schedule.hpp"
#include "optformer/variants.hpp"

namespace optformer {

struct TrainConfig {
  long steps = 500;
  int batch = 16;
  long eval_every = 25;
  int eval_batches = 8;
  double grad_clip = 1.0;
  SamMode sam = SamMode::Off;
  double sam_rho = 0.05;
};

struct FinetuneConfig {
  long steps = 200;
  int batch = 16;
  long eval_every = 25;
  int eval_batches = 8;
  double lr = 1e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double grad_clip = 1.0;
  double warmup_frac = 0.1;  // warmup length as a fraction of steps
  double min_mult = 0.1;     // cosine floor
};

struct DiagnosticsConfig {
  double spectrum_cutoff = 1e-6;  // relative singular-value cutoff
  int power_iters = 15;
  double power_tol = 1e-3;
  int hutchinson_probes = 10;
  double curve_alpha_max = 0.5;
  int curve_points = 11;          // odd, so alpha = 0 is sampled
  int probe_batches = 2;          // fixed validation minibatches for probes
  int probe_batch_size = 8;
  long max_dense_dim = 4096;      // T*d guard for the dense Jacobian
};

struct FilterLabConfig {
  std::vector<double> kappa_grid = {1.5, 2.0, 4.0, 9.0, 25.0, 100.0};
  int depth = 200;
  std::vector<double> epsilon_grid = {0.01, 0.1, 0.5, 1.0};
  int redundancy_samples = 1000;
  std::uint64_t seed = 0;
};

// Everything a run needs in one strict document. Unknown keys are
// rejected; every run writes the fully resolved copy beside its outputs.
struct RunConfig {
  std::uint64_t seed = 42;
  std::string out;  // output directory (CLI --out overrides)
  ModelConfig model;
  CorpusSpec corpus;
  OptimConfig optim;
  Schedule schedule;
  TrainConfig train;
  FinetuneConfig finetune;
  DiagnosticsConfig diagnostics;
  FilterLabConfig filterlab;
};

RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json run_config_to_json(const RunConfig& cfg);

// Reads a config file; // and /* */ comments are allowed.
RunConfig load_run_config(const std::string& path);

ModelConfig model_config_from_json(const nlohmann::json& j);
CorpusSpec corpus_spec_from_json(const nlohmann::json& j);

}  // namespace optformer
