// SPDX-License-Identifier: Apache-2.0
#include "optformer/corpus.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "optformer/error.hpp"

namespace optformer {

namespace {

constexpr long kSplitGap = 2048;      // tokens discarded between train and val
constexpr long kMarkovBurnIn = 1000;  // steps before recording starts
constexpr double kMarkovMix = 0.03;   // uniform smoothing mass
constexpr std::array<double, 4> kMarkovRanks = {0.85, 0.07, 0.05, 0.03};

std::uint64_t mix64(std::uint64_t x) {
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_keys(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return mix64(seed * 0x9e3779b97f4a7c15ULL ^ mix64(a + 0x165667b19e3779f9ULL) ^
               mix64(b * 0x2545f4914f6cdd1dULL + 17));
}

// four candidate successors of the previous token b
std::array<int, 4> markov_candidates(const CorpusSpec& spec, int b) {
  std::array<int, 4> c{};
  for (int i = 0; i < 4; ++i)
    c[static_cast<std::size_t>(i)] = static_cast<int>(
        hash_keys(spec.seed, static_cast<std::uint64_t>(b), static_cast<std::uint64_t>(100 + i)) %
        static_cast<std::uint64_t>(spec.vocab));
  return c;
}

// permutation of the rank probabilities keyed by the full context (a, b)
std::array<int, 4> markov_rank_perm(const CorpusSpec& spec, int a, int b) {
  std::array<int, 4> p = {0, 1, 2, 3};
  std::uint64_t h = hash_keys(spec.seed ^ 0xabcdef12345ULL, static_cast<std::uint64_t>(a),
                              static_cast<std::uint64_t>(b));
  for (int i = 3; i > 0; --i) {
    const int j = static_cast<int>(h % static_cast<std::uint64_t>(i + 1));
    std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(j)]);
    h = mix64(h);
  }
  return p;
}

std::vector<int> generate_markov(const CorpusSpec& spec, long total) {
  Rng rng(spec.seed ^ 0x6d61726b6f76ULL);  // stream seed
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(total));
  int a = 0, b = 1 % spec.vocab;
  for (long i = 0; i < total + kMarkovBurnIn; ++i) {
    int next;
    if (rng.uniform() < kMarkovMix) {
      next = static_cast<int>(rng.range(spec.vocab));
    } else {
      const auto cand = markov_candidates(spec, b);
      const auto perm = markov_rank_perm(spec, a, b);
      const double u = rng.uniform();
      double acc = 0.0;
      next = cand[static_cast<std::size_t>(perm[3])];
      for (int r = 0; r < 4; ++r) {
        acc += kMarkovRanks[static_cast<std::size_t>(r)];
        if (u < acc) {
          next = cand[static_cast<std::size_t>(perm[static_cast<std::size_t>(r)])];
          break;
        }
      }
    }
    if (i >= kMarkovBurnIn) out.push_back(next);
    a = b;
    b = next;
  }
  return out;
}

std::vector<int> generate_brackets(const CorpusSpec& spec, long total) {
  const int n_types = std::min(8, (spec.vocab - 1) / 2);  // keep >= 1 filler token
  const int filler_base = 2 * n_types;
  const int n_filler = spec.vocab - filler_base;
  const int max_depth = 8;
  Rng rng(spec.seed ^ 0x627261636b657473ULL);
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(total));
  std::vector<int> stack;
  while (static_cast<long>(out.size()) < total) {
    if (rng.uniform() < 0.2) {
      out.push_back(filler_base + static_cast<int>(rng.range(n_filler)));
      continue;
    }
    const bool open =
        stack.empty() || (static_cast<int>(stack.size()) < max_depth && rng.uniform() < 0.55);
    if (open) {
      const int ty = static_cast<int>(rng.range(n_types));
      stack.push_back(ty);
      out.push_back(ty);
    } else {
      const int ty = stack.back();
      stack.pop_back();
      out.push_back(n_types + ty);
    }
  }
  return out;
}

std::string cache_path(const CorpusSpec& spec, const std::string& cache_dir) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s-s%llu-v%d-t%ld-e%ld.tokens", spec.name.c_str(),
                static_cast<unsigned long long>(spec.seed), spec.vocab, spec.train_tokens,
                spec.val_tokens);
  return (std::filesystem::path(cache_dir) / buf).string();
}

}  // namespace

void CorpusSpec::validate() const {
  if (vocab < 8) throw ConfigError("CorpusSpec: vocab must be >= 8");
  if (name != "markov" && name != "brackets")
    throw ConfigError("CorpusSpec: unknown corpus '" + name + "' (valid: markov, brackets)");
  if (train_tokens < 16 || val_tokens < 16)
    throw ConfigError("CorpusSpec: split sizes too small");
}

std::vector<double> markov_transition_row(const CorpusSpec& spec, int a, int b) {
  spec.validate();
  std::vector<double> p(static_cast<std::size_t>(spec.vocab), kMarkovMix / spec.vocab);
  const auto cand = markov_candidates(spec, b);
  const auto perm = markov_rank_perm(spec, a, b);
  for (int r = 0; r < 4; ++r)
    p[static_cast<std::size_t>(cand[static_cast<std::size_t>(perm[static_cast<std::size_t>(r)])])] +=
        (1.0 - kMarkovMix) * kMarkovRanks[static_cast<std::size_t>(r)];
  return p;
}

Corpus gen_corpus(const CorpusSpec& spec, const std::string& cache_dir) {
  spec.validate();
  const long total = spec.train_tokens + kSplitGap + spec.val_tokens;

  std::vector<int> stream;
  bool from_cache = false;
  std::string path;
  if (!cache_dir.empty()) {
    std::filesystem::create_directories(cache_dir);
    path = cache_path(spec, cache_dir);
    std::ifstream in(path, std::ios::binary);
    if (in) {
      stream.resize(static_cast<std::size_t>(total));
      in.read(reinterpret_cast<char*>(stream.data()),
              static_cast<std::streamsize>(stream.size() * sizeof(int)));
      from_cache = in.gcount() == static_cast<std::streamsize>(stream.size() * sizeof(int));
      if (!from_cache) stream.clear();
    }
  }
  if (!from_cache) {
    stream = spec.name == "markov" ? generate_markov(spec, total) : generate_brackets(spec, total);
    if (!path.empty()) {
      std::ofstream out(path, std::ios::binary);
      out.write(reinterpret_cast<const char*>(stream.data()),
                static_cast<std::streamsize>(stream.size() * sizeof(int)));
    }
  }

  Corpus c;
  c.spec = spec;
  c.train.assign(stream.begin(), stream.begin() + spec.train_tokens);
  c.val.assign(stream.begin() + spec.train_tokens + kSplitGap, stream.end());
  return c;
}

Batch draw_batch(const std::vector<int>& split, int batch_size, int window, Rng& rng) {
  if (static_cast<long>(split.size()) < window)
    throw ConfigError("draw_batch: split shorter than one window");
  Batch b;
  b.windows.reserve(static_cast<std::size_t>(batch_size));
  const std::int64_t span = static_cast<std::int64_t>(split.size()) - window + 1;
  for (int i = 0; i < batch_size; ++i) {
    const std::int64_t off = rng.range(span);
    b.windows.emplace_back(split.begin() + off, split.begin() + off + window);
  }
  return b;
}

std::vector<Batch> draw_fixed_batches(const std::vector<int>& split, int batch_size, int window,
                                      int count, Rng& rng) {
  std::vector<Batch> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(draw_batch(split, batch_size, window, rng));
  return out;
}

std::uint64_t batch_hash(const std::vector<Batch>& batches) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Batch& b : batches)
    for (const auto& w : b.windows)
      for (int tok : w) {
        h ^= static_cast<std::uint64_t>(tok);
        h *= 0x100000001b3ULL;
      }
  return h;
}

}  // namespace optformer
