// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "optformer/rng.hpp"

namespace optformer {

// Synthetic corpus spec. Two built-in generators:
//  - "markov": a seeded order-2 Markov grammar. Each previous token b has
//    4 candidate successors (hash of b); the probability ranking of those
//    candidates [0.85, 0.07, 0.05, 0.03] is permuted by the pair (a, b),
//    and 3% of emissions are uniform over the vocabulary. Marginals are
//    near-uniform; conditional entropy is ~1.6 nats given b alone and
//    ~0.8 nats given (a, b).
//  - "brackets": a seeded nested-bracket language with 8 bracket types,
//    bounded depth 8, and 20% filler tokens; closing tokens must match the
//    type on top of the stack, giving long-range dependencies.
struct CorpusSpec {
  std::string name = "markov";
  int vocab = 64;
  std::uint64_t seed = 1;
  long train_tokens = 200000;
  long val_tokens = 20000;

  void validate() const;
  bool same_identity(const CorpusSpec& o) const { return name == o.name && seed == o.seed; }
};

struct Corpus {
  CorpusSpec spec;
  std::vector<int> train;
  std::vector<int> val;  // disjoint from train by offset construction
};

// Deterministic regeneration from (name, seed, sizes). When cache_dir is
// non-empty, the token stream is read from / written to a cache file keyed
// by those fields.
Corpus gen_corpus(const CorpusSpec& spec, const std::string& cache_dir = "");

// Exact transition distribution p(next | a, b) of the markov generator,
// used by tests to compute the stationary distribution of the pair chain.
std::vector<double> markov_transition_row(const CorpusSpec& spec, int a, int b);

// ---- batching ---------------------------------------------------------------

// A batch is `batch_size` windows of `window` consecutive tokens.
struct Batch {
  std::vector<std::vector<int>> windows;
};

Batch draw_batch(const std::vector<int>& split, int batch_size, int window, Rng& rng);
std::vector<Batch> draw_fixed_batches(const std::vector<int>& split, int batch_size, int window,
                                      int count, Rng& rng);

// FNV-1a over all token ids, for cross-run batch identity checks.
std::uint64_t batch_hash(const std::vector<Batch>& batches);

}  // namespace optformer
