// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "optformer/checkpoint.hpp"
#include "optformer/runconfig.hpp"

namespace optformer {

struct EvalRow {
  long step = 0;
  double train_loss = 0.0;  // on fixed train-split probe batches
  double val_loss = 0.0;    // on fixed val-split batches
  double lr_mult = 0.0;
};

struct RunRecord {
  std::vector<EvalRow> rows;
  double best_val_loss = 0.0;
  long best_step = 0;
  std::uint64_t eval_batch_hash = 0;
  bool diverged = false;
  std::string divergence_note;
};

// CSV with columns step,train_loss,val_loss,lr_mult (full round-trip
// precision, so identical runs produce identical bytes).
std::string run_record_csv(const RunRecord& record);

// Mean loss over a set of batches (forward only).
double eval_loss(const ModelConfig& cfg, const ParamStore& params,
                 const std::vector<Batch>& batches);

// Loss and parameter gradients (aligned with params.items()) on one batch.
GradEval loss_and_grads(const ModelConfig& cfg, const ParamStore& params, const Batch& batch);

struct TrainResult {
  Checkpoint best;
  RunRecord record;
};

// Full training run: fixed eval batches drawn once per run seed, periodic
// evaluation, best-validation checkpointing, abort-with-last-good on
// numeric divergence.
TrainResult train(const RunConfig& cfg, const std::string& cache_dir = "");

}  // namespace optformer
