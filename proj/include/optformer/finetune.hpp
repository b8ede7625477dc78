// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "optformer/checkpoint.hpp"
#include "optformer/train.hpp"

namespace optformer {

struct ForgettingRow {
  long step = 0;
  double source_loss = 0.0;
  double target_loss = 0.0;
  double lr_mult = 0.0;
};

struct ForgettingResult {
  double source_loss_before = 0.0;
  double source_loss_after = 0.0;
  double forgetting = 0.0;  // source_loss_after - source_loss_before
  std::vector<ForgettingRow> curve;
  std::uint64_t source_batch_hash = 0;
  std::uint64_t target_batch_hash = 0;
};

// Rise in source-corpus loss: L_S(after) - L_S(before).
inline double forgetting_from(double source_before, double source_after) {
  return source_after - source_before;
}

// Sequential fine-tuning protocol: loads the pretrained parameters from the
// checkpoint, fine-tunes on the target corpus with one fixed flat AdamW
// recipe (identical for every variant), and reports the source-corpus loss
// rise. Both losses are evaluated on fixed batches drawn once from
// data_seed, so every variant is scored on identical inputs.
ForgettingResult finetune_forgetting(const Checkpoint& source_ckpt, const CorpusSpec& target,
                                     const FinetuneConfig& ft, std::uint64_t data_seed = 0,
                                     const std::string& cache_dir = "");

std::string forgetting_curve_csv(const ForgettingResult& r);

}  // namespace optformer
