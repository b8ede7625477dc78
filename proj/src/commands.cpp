// SPDX-License-Identifier: Apache-2.0
#include "optformer/commands.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "optformer/filterlab.hpp"
#include "optformer/finetune.hpp"
#include "optformer/jacobian.hpp"
#include "optformer/numerics.hpp"
#include "optformer/sharpness.hpp"
#include "optformer/train.hpp"

namespace optformer {

namespace fs = std::filesystem;

namespace {

int map_error(const std::exception& e) {
  if (dynamic_cast<const SizeGuardError*>(&e)) return kExitSizeGuard;
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  return kExitUsage;
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return map_error(e);
  }
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << content;
}

RunConfig load_with_overrides(const CliOptions& opt) {
  RunConfig cfg = load_run_config(opt.config_path);
  if (opt.seed) {
    cfg.seed = *opt.seed;
    cfg.model.seed = *opt.seed;
  }
  if (!opt.out_dir.empty()) cfg.out = opt.out_dir;
  if (cfg.out.empty())
    cfg.out = (fs::path(default_out_root()) / fs::path(opt.config_path).stem()).string();
  return cfg;
}

std::string cache_dir_for(const RunConfig& cfg) {
  return (fs::path(cfg.out) / "corpus_cache").string();
}

// Writes checkpoint + record CSV + resolved config into dir.
void write_train_artifacts(const RunConfig& cfg, const TrainResult& result, const fs::path& dir) {
  fs::create_directories(dir);
  write_file(dir / "config.json", run_config_to_json(cfg).dump(2) + "\n");
  write_file(dir / "record.csv", run_record_csv(result.record));
  save_checkpoint(result.best, (dir / "best").string());
}

// Fixed validation batches exactly as the training loop draws them, so
// diagnostics probe the same inputs the checkpoint was selected on.
std::vector<Batch> rebuild_eval_batches(const RunConfig& cfg, const Corpus& corpus, int count) {
  Rng root(cfg.seed);
  root.fork(1);  // data order (unused here, keeps fork alignment readable)
  Rng eval_rng = root.fork(2);
  return draw_fixed_batches(corpus.val, cfg.train.batch, cfg.model.context + 1,
                            std::min(count, cfg.train.eval_batches), eval_rng);
}

CorpusSpec parse_target_corpus(const std::string& arg, const CorpusSpec& like) {
  CorpusSpec t = like;  // same vocab and split sizes as the source
  const auto colon = arg.find(':');
  if (colon == std::string::npos) {
    t.name = arg;
  } else {
    t.name = arg.substr(0, colon);
    t.seed = std::strtoull(arg.c_str() + colon + 1, nullptr, 10);
  }
  t.validate();
  return t;
}

}  // namespace

std::string default_out_root() {
  const char* env = std::getenv("OPTFORMER_OUT");
  return env && *env ? env : "runs";
}

int cmd_train(const CliOptions& opt) {
  return guarded([&]() {
    RunConfig cfg = load_with_overrides(opt);
    TrainResult result = train(cfg, cache_dir_for(cfg));
    write_train_artifacts(cfg, result, cfg.out);
    if (result.record.diverged) {
      std::cerr << "training diverged: " << result.record.divergence_note
                << " (last-good checkpoint written)\n";
      return kExitNumeric;
    }
    std::cout << "variant=" << to_string(cfg.model.variant)
              << " best_val_loss=" << result.record.best_val_loss
              << " best_step=" << result.record.best_step << " out=" << cfg.out << "\n";
    return kExitOk;
  });
}

int cmd_compare(const CliOptions& opt) {
  return guarded([&]() {
    if (opt.variants.size() < 2)
      throw ConfigError("compare: need at least 2 variants (--variants a,b,...)");
    RunConfig base = load_with_overrides(opt);
    std::vector<BlockVariant> variants;
    for (const std::string& name : opt.variants) variants.push_back(variant_from_string(name));

    fs::create_directories(base.out);
    std::string summary = "variant,best_val_loss,steps,eval_batch_hash,status\n";
    bool any_failed = false;
    for (BlockVariant v : variants) {
      RunConfig cfg = base;
      cfg.model.variant = v;
      cfg.out = (fs::path(base.out) / to_string(v)).string();
      char row[256];
      try {
        TrainResult result = train(cfg, cache_dir_for(base));
        write_train_artifacts(cfg, result, cfg.out);
        if (result.record.diverged)
          throw NumericError("diverged: " + result.record.divergence_note);
        std::snprintf(row, sizeof(row), "%s,%.17g,%ld,%016llx,ok\n", to_string(v).c_str(),
                      result.record.best_val_loss, cfg.train.steps,
                      static_cast<unsigned long long>(result.record.eval_batch_hash));
      } catch (const std::exception& e) {
        any_failed = true;
        std::snprintf(row, sizeof(row), "%s,nan,%ld,0,failed: %s\n", to_string(v).c_str(),
                      cfg.train.steps, e.what());
        std::cerr << "variant " << to_string(v) << " failed: " << e.what() << "\n";
      }
      summary += row;
      std::cout << row;
    }
    write_file(fs::path(base.out) / "summary.csv", summary);
    write_file(fs::path(base.out) / "config.json", run_config_to_json(base).dump(2) + "\n");
    return any_failed ? kExitNumeric : kExitOk;
  });
}

int cmd_diagnose(const CliOptions& opt) {
  return guarded([&]() {
    if (opt.checkpoint.empty()) throw ConfigError("diagnose: --checkpoint is required");
    if (opt.which.empty())
      throw ConfigError("diagnose: --which is required (jacobian|sharpness|curve|ppl|forgetting)");
    Checkpoint ckpt = load_checkpoint(opt.checkpoint);
    RunConfig cfg = run_config_from_json(ckpt.config);
    if (!opt.out_dir.empty()) cfg.out = opt.out_dir;
    fs::create_directories(cfg.out);
    write_file(fs::path(cfg.out) / "config.json", run_config_to_json(cfg).dump(2) + "\n");

    Corpus corpus = gen_corpus(cfg.corpus, cache_dir_for(cfg));

    if (opt.which == "jacobian") {
      const auto batches = rebuild_eval_batches(cfg, corpus, 1);
      const std::vector<int>& window = batches.front().windows.front();
      std::vector<int> ids(window.begin(), window.end() - 1);
      auto traj = record_trajectory(cfg.model, ckpt.params, ids);
      std::vector<Tensor> jacobians;
      for (int l = 0; l < cfg.model.layers; ++l)
        jacobians.push_back(full_block_jacobian(cfg.model, ckpt.params, l, traj[l],
                                                cfg.diagnostics.max_dense_dim));
      SpectrumReport report = spectrum_metrics(jacobians, cfg.diagnostics.spectrum_cutoff);
      write_file(fs::path(cfg.out) / "spectrum.csv", spectrum_csv(report));
      write_file(fs::path(cfg.out) / "spectrum.json", spectrum_json(report).dump(2) + "\n");
      std::cout << "min_gain_persistence=" << report.min_gain_persistence << "\n";
    } else if (opt.which == "sharpness") {
      auto batches = rebuild_eval_batches(cfg, corpus, cfg.diagnostics.probe_batches);
      SharpnessReport rep =
          sharpness_probe(cfg.model, ckpt.params, batches, cfg.diagnostics, cfg.seed);
      write_file(fs::path(cfg.out) / "sharpness.json", sharpness_json(rep).dump(2) + "\n");
      std::cout << "lambda_max=" << rep.lambda_max << " trace/N=" << rep.trace_over_n
                << " probe_std=" << rep.trace_std << "\n";
    } else if (opt.which == "curve") {
      auto batches = rebuild_eval_batches(cfg, corpus, cfg.diagnostics.probe_batches);
      CurveResult curve =
          filter_normalized_curve(cfg.model, ckpt.params, batches, cfg.seed ^ 0x63757276ULL,
                                  cfg.diagnostics.curve_alpha_max, cfg.diagnostics.curve_points);
      write_file(fs::path(cfg.out) / "curve.csv", curve_csv(curve));
      std::cout << "loss_range=" << curve.range << "\n";
    } else if (opt.which == "ppl") {
      Corpus target = corpus;
      if (!opt.target_corpus.empty())
        target = gen_corpus(parse_target_corpus(opt.target_corpus, cfg.corpus), cache_dir_for(cfg));
      RunConfig probe_cfg = cfg;
      probe_cfg.corpus = target.spec;
      auto batches = rebuild_eval_batches(probe_cfg, target, cfg.diagnostics.probe_batches);
      const double ppl = perplexity_eval(cfg.model, ckpt.params, batches);
      nlohmann::json j = {{"corpus", target.spec.name},
                          {"corpus_seed", target.spec.seed},
                          {"ppl", ppl},
                          {"ce", std::log(ppl)}};
      write_file(fs::path(cfg.out) / "ppl.json", j.dump(2) + "\n");
      std::cout << "ppl=" << ppl << "\n";
    } else if (opt.which == "forgetting") {
      if (opt.target_corpus.empty())
        throw ConfigError("diagnose forgetting: --target-corpus is required");
      CorpusSpec target = parse_target_corpus(opt.target_corpus, cfg.corpus);
      ForgettingResult res =
          finetune_forgetting(ckpt, target, cfg.finetune, cfg.seed, cache_dir_for(cfg));
      nlohmann::json j = {{"forgetting", res.forgetting},
                          {"source_loss_before", res.source_loss_before},
                          {"source_loss_after", res.source_loss_after},
                          {"source_batch_hash", res.source_batch_hash},
                          {"target_batch_hash", res.target_batch_hash}};
      write_file(fs::path(cfg.out) / "forgetting.json", j.dump(2) + "\n");
      write_file(fs::path(cfg.out) / "forgetting_curve.csv", forgetting_curve_csv(res));
      std::cout << "forgetting=" << res.forgetting << "\n";
    } else {
      throw ConfigError("diagnose: unknown --which '" + opt.which +
                        "' (jacobian|sharpness|curve|ppl|forgetting)");
    }
    return kExitOk;
  });
}

int cmd_filterlab(const CliOptions& opt) {
  return guarded([&]() {
    RunConfig cfg = load_with_overrides(opt);
    const FilterLabConfig& fl = cfg.filterlab;
    fs::create_directories(cfg.out);
    write_file(fs::path(cfg.out) / "config.json", run_config_to_json(cfg).dump(2) + "\n");

    std::string checks;
    auto check = [&](bool ok, const std::string& name) {
      checks += std::string(ok ? "[PASS] " : "[FAIL] ") + name + "\n";
    };

    auto rows = filterlab::kappa_sweep(fl.kappa_grid, fl.depth);
    write_file(fs::path(cfg.out) / "sweep.csv", filterlab::sweep_csv(rows));
    for (const auto& r : rows) {
      if (r.kappa > 1.0) {
        check(r.rho_mom < r.rho_vanilla,
              "rho_mom < rho_vanilla at kappa=" + std::to_string(r.kappa));
        check(r.crossover_n >= 0, "momentum crossover observed at kappa=" + std::to_string(r.kappa));
      } else {
        check(r.rho_mom == 0.0 && r.rho_vanilla == 0.0,
              "kappa=1 rates are both zero");
      }
      // characteristic-root moduli across the spectrum
      const auto mr = filterlab::momentum_rate(1.0, r.kappa);
      bool roots_ok = true;
      for (int i = 0; i <= 16; ++i) {
        const double lam = 1.0 + (r.kappa - 1.0) * i / 16.0;
        auto [r1, r2] = filterlab::hb_characteristic_roots(mr.eta, mr.beta, lam);
        roots_ok = roots_ok && std::abs(std::abs(r1) - mr.rho) < 1e-9 &&
                   std::abs(std::abs(r2) - mr.rho) < 1e-9;
      }
      check(roots_ok, "characteristic-root moduli equal sqrt(beta) at kappa=" +
                          std::to_string(r.kappa));
    }

    // balanced second-moment redundancy sweep
    Rng rng(fl.seed ^ 0x7265647579ULL);
    std::string red_csv = "epsilon,max_deviation,bound_tight,bound_mid,bound_half_eps,holds\n";
    for (double eps : fl.epsilon_grid) {
      bool all_hold = true;
      double worst = 0.0;
      filterlab::RedundancyReport last{};
      for (int i = 0; i < fl.redundancy_samples; ++i) {
        const int d = 8 + static_cast<int>(rng.range(56));
        const double s0 = 0.25 + 4.0 * rng.uniform();
        const double delta = rng.uniform() < 0.3 ? 0.0 : 0.1 * rng.uniform();
        std::vector<double> s(static_cast<std::size_t>(d));
        for (double& v : s) v = s0 * (1.0 + eps * rng.uniform());
        last = filterlab::diagonal_redundancy_check(s, delta, eps);
        all_hold = all_hold && last.holds &&
                   last.bound_tight <= last.bound_mid + 1e-15 &&
                   last.bound_mid <= last.bound_half_eps + 1e-15;
        worst = std::max(worst, last.deviation);
      }
      char buf[200];
      std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g,%d\n", eps, worst,
                    last.bound_tight, last.bound_mid, last.bound_half_eps, all_hold ? 1 : 0);
      red_csv += buf;
      check(all_hold, "redundancy inequality chain holds at epsilon=" + std::to_string(eps));
    }
    write_file(fs::path(cfg.out) / "redundancy.csv", red_csv);

    // token-side factorization identity and the causality-loss demonstration
    bool factor_ok = true;
    bool causality_lost = false;
    for (int i = 0; i < 20; ++i) {
      const int T = 6, d = 5;
      Tensor a = Tensor::zeros({T, T});
      for (int r = 0; r < T; ++r) {  // causal row-stochastic mixer
        double sum = 0.0;
        for (int c = 0; c <= r; ++c) {
          a.at(r, c) = 0.05 + rng.uniform();
          sum += a.at(r, c);
        }
        for (int c = 0; c <= r; ++c) a.at(r, c) /= sum;
      }
      Tensor w = Tensor::zeros({d, d});
      for (double& v : w.data) v = rng.normal();
      Tensor x = Tensor::zeros({T, d});
      for (double& v : x.data) v = rng.normal();
      // P = L^{-1/2} for a random SPD L
      Tensor g = Tensor::zeros({T, T});
      for (double& v : g.data) v = rng.normal();
      Tensor l = Tensor::zeros({T, T});
      for (int r = 0; r < T; ++r)
        for (int c = 0; c < T; ++c) {
          double acc = r == c ? 0.5 : 0.0;  // ridge keeps L well conditioned
          for (int k = 0; k < T; ++k) acc += g.at(r, k) * g.at(c, k) / T;
          l.at(r, c) = acc;
        }
      Tensor p = inv_sqrt_newton(l, 25, 0.0);
      auto rep = filterlab::token_side_factorization_check(a, w, p, x);
      factor_ok = factor_ok && rep.residual < 1e-10;
      causality_lost = causality_lost || !rep.pa_causal;
    }
    check(factor_ok, "token-side preconditioner folds into the mixing matrix (residual < 1e-10)");
    check(causality_lost, "an SPD-derived token preconditioner breaks causality of the mixer");

    write_file(fs::path(cfg.out) / "checks.txt", checks);
    std::cout << checks;
    return kExitOk;
  });
}

}  // namespace optformer
