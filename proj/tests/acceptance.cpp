// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one pass/fail line per criterion, nonzero exit if any
// criterion fails. Criteria are property-based; the full-scale training
// setups are config presets, not assertions.

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "optformer/commands.hpp"
#include "optformer/filterlab.hpp"
#include "optformer/finetune.hpp"
#include "optformer/jacobian.hpp"
#include "optformer/numerics.hpp"
#include "optformer/sharpness.hpp"
#include "optformer/train.hpp"

using namespace optformer;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int number, const std::string& name, bool pass, const std::string& detail = "") {
  std::printf("[%s] criterion %d: %s%s%s\n", pass ? "PASS" : "FAIL", number, name.c_str(),
              detail.empty() ? "" : " -- ", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

ModelConfig toy_cfg(BlockVariant v, std::uint64_t seed = 42) {
  ModelConfig cfg;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.dim = 16;
  cfg.context = 8;
  cfg.vocab = 16;
  cfg.variant = v;
  cfg.seed = seed;
  return cfg;
}

Tensor logits_of(const ModelConfig& cfg, const ParamStore& params, const std::vector<int>& ids) {
  Tape tape;
  BoundModel model = bind_params(tape, cfg, params, false);
  return tape.val(model_forward(model, ids));
}

std::vector<int> random_ids(Rng& rng, int T, int vocab) {
  std::vector<int> ids(static_cast<std::size_t>(T));
  for (int& id : ids) id = static_cast<int>(rng.range(vocab));
  return ids;
}

void pin_gate(ParamStore& params, const ModelConfig& cfg, const std::string& gate, double raw) {
  for (int l = 0; l < cfg.layers; ++l)
    for (const char* sub : {"a", "m"})
      params.get("layer" + std::to_string(l) + ".scalar." + std::string(sub) + "." + gate)
          .data[0] = raw;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

std::vector<double> singular_values(const Tensor& t) {
  Eigen::MatrixXd m(t.dim(0), t.dim(1));
  for (int i = 0; i < t.dim(0); ++i)
    for (int j = 0; j < t.dim(1); ++j) m(i, j) = t.at(i, j);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return std::vector<double>(svd.singularValues().data(),
                             svd.singularValues().data() + svd.singularValues().size());
}

// ---- criterion 1 -----------------------------------------------------------

void criterion_reduction_lattice() {
  const auto t0 = std::chrono::steady_clock::now();
  const double off = -40.0;
  const double nu_one = softplus_inverse(1.0);
  struct Case {
    BlockVariant a, b;
    std::vector<std::pair<std::string, double>> pins;
    const char* name;
  };
  const std::vector<Case> cases = {
      {BlockVariant::TMM, BlockVariant::Yurii, {{"nu", nu_one}}, "TMM(nu=1)=Yurii"},
      {BlockVariant::Yurii, BlockVariant::HB, {{"mu", off}}, "Yurii(mu=0)=HB"},
      {BlockVariant::Adam, BlockVariant::RMSProp, {{"beta1", off}}, "Adam(beta1=0)=RMSProp"},
      {BlockVariant::AdamW, BlockVariant::Adam, {{"lambda", off}}, "AdamW(lambda=0)=Adam"},
      {BlockVariant::Muon, BlockVariant::Ortho, {{"beta", off}}, "Muon(beta=0)=Ortho"},
      {BlockVariant::SOAP, BlockVariant::Shampoo, {{"beta1", off}}, "SOAP(beta1=0)=Shampoo"},
  };
  bool pass = true;
  std::string detail;
  Rng rng(20260810);
  for (const Case& c : cases) {
    ModelConfig ca = toy_cfg(c.a), cb = toy_cfg(c.b);
    ParamStore pa = init_params(ca);
    ParamStore pb = init_params(cb);
    copy_common(pa, pb);
    for (const auto& [gate, raw] : c.pins) pin_gate(pa, ca, gate, raw);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const std::vector<int> ids = random_ids(rng, ca.context, ca.vocab);
      worst = std::max(worst, max_abs_diff(logits_of(ca, pa, ids), logits_of(cb, pb, ids)));
    }
    if (worst >= 1e-12) {
      pass = false;
      detail += std::string(c.name) + " diff=" + std::to_string(worst) + "; ";
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (secs >= 10.0) {
    pass = false;
    detail += "runtime " + std::to_string(secs) + "s >= 10s";
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "6 reductions x 20 inputs, %.1fs", secs);
  report(1, "reduction lattice within 1e-12", pass, detail.empty() ? buf : detail);
}

// ---- criterion 2 -----------------------------------------------------------

void criterion_gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(77);
  bool pass = true;
  std::string detail;
  for (BlockVariant v : all_variants()) {
    ModelConfig cfg = toy_cfg(v, 7);
    ParamStore params = init_params(cfg);
    Batch batch;
    batch.windows.push_back(random_ids(rng, cfg.context + 1, cfg.vocab));
    GradEval ge = loss_and_grads(cfg, params, batch);
    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t i = 0; i < params.items().size(); ++i) {
      Tensor dir = Tensor::zeros(params.items()[i].second.shape);
      double nrm = 0.0;
      for (double& x : dir.data) {
        x = rng.normal();
        nrm += x * x;
      }
      nrm = std::sqrt(nrm);
      for (double& x : dir.data) x /= nrm;
      double analytic = 0.0;
      for (std::size_t j = 0; j < dir.data.size(); ++j)
        analytic += ge.grads[i].data[j] * dir.data[j];
      auto loss_with = [&](double sign) {
        ParamStore shifted = params;
        Tensor& t = shifted.items_mut()[i].second;
        for (std::size_t j = 0; j < t.data.size(); ++j) t.data[j] += sign * h * dir.data[j];
        return loss_and_grads(cfg, shifted, batch).loss;
      };
      const double fd = (loss_with(1.0) - loss_with(-1.0)) / (2.0 * h);
      const double denom = std::max({std::abs(fd), std::abs(analytic), 1e-6});
      worst = std::max(worst, std::abs(fd - analytic) / denom);
    }
    if (worst >= 1e-3) {
      pass = false;
      detail += to_string(v) + " rel=" + std::to_string(worst) + "; ";
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (secs >= 120.0) {
    pass = false;
    detail += "runtime " + std::to_string(secs) + "s >= 120s";
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "11 variants, %.1fs", secs);
  report(2, "end-to-end gradients match finite differences (rel < 1e-3)", pass,
         detail.empty() ? buf : detail);
}

// ---- criterion 3 -----------------------------------------------------------

void criterion_causality() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(99);
  bool pass = true;
  std::string detail;
  for (BlockVariant v : all_variants()) {
    ModelConfig cfg = toy_cfg(v);
    ParamStore params = init_params(cfg);
    const int T = cfg.context;
    std::vector<int> ids = random_ids(rng, T, cfg.vocab);
    const Tensor base = logits_of(cfg, params, ids);
    double worst = 0.0;
    for (int t = 0; t < T - 1; ++t) {
      std::vector<int> perturbed = ids;
      for (int u = t + 1; u < T; ++u)
        perturbed[static_cast<std::size_t>(u)] =
            (perturbed[static_cast<std::size_t>(u)] + 1 +
             static_cast<int>(rng.range(cfg.vocab - 1))) %
            cfg.vocab;
      const Tensor other = logits_of(cfg, params, perturbed);
      for (int i = 0; i <= t; ++i)
        for (int j = 0; j < cfg.vocab; ++j)
          worst = std::max(worst, std::abs(base.at(i, j) - other.at(i, j)));
    }
    if (worst > 1e-9) {
      pass = false;
      detail += to_string(v) + " leak=" + std::to_string(worst) + "; ";
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (secs >= 30.0) {
    pass = false;
    detail += "runtime over 30s";
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "11 variants, %.1fs", secs);
  report(3, "causality: later-token perturbations never reach earlier logits", pass,
         detail.empty() ? buf : detail);
}

// ---- criterion 4 -----------------------------------------------------------

void criterion_numerical_operators() {
  bool pass = true;
  std::string detail;

  // polar iteration vs the SVD oracle
  Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor m = Tensor::zeros({4, 8});
    double fro = 0.0;
    for (double& x : m.data) {
      x = rng.normal();
      fro += x * x;
    }
    fro = std::sqrt(fro);
    for (double& x : m.data) x /= fro;
    double prev = 1e9;
    for (int k = 1; k <= 5; ++k) {
      double dev = 0.0;
      for (double sv : singular_values(newton_schulz_polar(m, k)))
        dev = std::max(dev, std::abs(sv - 1.0));
      if (dev > prev + 1e-12) {
        pass = false;
        detail += "polar non-monotone at K=" + std::to_string(k) + "; ";
      }
      prev = dev;
    }
    if (prev > 0.3) {
      pass = false;
      detail += "polar deviation " + std::to_string(prev) + " > 0.3 at K=5; ";
    }
  }

  // inverse square root residual at K=10 for condition numbers up to 100
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 8;
    Eigen::MatrixXd g(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) g(i, j) = rng.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ();
    Eigen::VectorXd d(n);
    d(0) = 1.0;
    d(1) = 0.01;  // condition number pinned to 100
    for (int i = 2; i < n; ++i) d(i) = std::exp(-rng.uniform() * std::log(100.0));
    Eigen::MatrixXd a = q * d.asDiagonal() * q.transpose();
    a = 0.5 * (a + a.transpose());
    Tensor at = Tensor::zeros({n, n});
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) at.at(i, j) = a(i, j);
    Tensor y = inv_sqrt_newton(at, 10, 0.0);
    const double res = inv_sqrt_residual(y, at);
    if (res >= 1e-6) {
      pass = false;
      detail += "inv-sqrt residual " + std::to_string(res) + "; ";
    }
  }
  report(4, "polar and inverse-sqrt iterations meet their SVD/eigen oracles", pass, detail);
}

// ---- criterion 5 -----------------------------------------------------------

void criterion_filter_lab() {
  const auto t0 = std::chrono::steady_clock::now();
  bool pass = true;
  std::string detail;
  using namespace filterlab;

  for (double kappa : {1.5, 2.0, 4.0, 9.0, 25.0, 100.0}) {
    if (!(momentum_rate(1.0, kappa).rho < vanilla_rate(1.0, kappa).rho)) {
      pass = false;
      detail += "no strict rate improvement at kappa=" + std::to_string(kappa) + "; ";
    }
    const MomentumRates mr = momentum_rate(1.0, kappa);
    for (int i = 0; i <= 32; ++i) {
      const double lam = 1.0 + (kappa - 1.0) * i / 32.0;
      auto [r1, r2] = hb_characteristic_roots(mr.eta, mr.beta, lam);
      if (std::abs(std::abs(r1) - mr.rho) >= 1e-9 || std::abs(std::abs(r2) - mr.rho) >= 1e-9) {
        pass = false;
        detail += "root modulus off at kappa=" + std::to_string(kappa) + "; ";
        break;
      }
    }
  }

  // simulated tuned-vanilla rate on the endpoint modes
  {
    const VanillaRates vr = vanilla_rate(1.0, 9.0);
    FilterScenario s;
    s.mu_curv = 1.0;
    s.L_curv = 9.0;
    s.a = 0.0;
    s.b = 0.0;
    s.c = 1.0;
    s.eta = vr.eta_star;
    s.depth = 40;
    s.spectrum = {1.0, 9.0};
    for (const ModeTrajectory& mt : eigenmode_recurrence(s))
      for (std::size_t l = 1; l < mt.e.size(); ++l)
        if (std::abs(std::abs(mt.e[l] / mt.e[l - 1]) - vr.rho) >= 1e-6) {
          pass = false;
          detail += "endpoint-mode vanilla rate off; ";
          l = mt.e.size();
        }
  }

  // heavy-ball envelope rate and depth-50 crossover at kappa = 9
  {
    std::vector<double> spectrum;
    for (int i = 0; i <= 32; ++i) spectrum.push_back(1.0 + 8.0 * i / 32.0);
    const CompareReport rep = compare_filters(1.0, 9.0, spectrum, 200);
    if (std::abs(rep.observed_rate_momentum - 0.5) >= 0.05) {
      pass = false;
      detail += "fitted envelope rate " + std::to_string(rep.observed_rate_momentum) + "; ";
    }
    if (!(rep.worst_momentum[50] < rep.worst_vanilla[50])) {
      pass = false;
      detail += "no momentum win at depth 50; ";
    }
  }

  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (secs >= 5.0) {
    pass = false;
    detail += "runtime " + std::to_string(secs) + "s >= 5s";
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "kappa grid + depth-200 simulations, %.2fs", secs);
  report(5, "local filter theory: rates, roots, envelope, crossover", pass,
         detail.empty() ? buf : detail);
}

// ---- criterion 6 -----------------------------------------------------------

void criterion_redundancy() {
  bool pass = true;
  std::string detail;
  using namespace filterlab;

  Rng rng(6);
  for (double eps : {0.01, 0.1, 0.5, 1.0}) {
    for (int t = 0; t < 1000; ++t) {
      const int d = 4 + static_cast<int>(rng.range(60));
      const double base = 0.25 + 4.0 * rng.uniform();
      const double delta = rng.uniform() < 0.3 ? 0.0 : rng.uniform();
      std::vector<double> s(static_cast<std::size_t>(d));
      for (double& v : s) v = base * (1.0 + eps * rng.uniform());
      const RedundancyReport r = diagonal_redundancy_check(s, delta, eps);
      const bool chain = r.assumption_ok && r.deviation <= r.bound_tight + 1e-15 &&
                         r.bound_tight <= r.bound_mid + 1e-15 &&
                         r.bound_mid <= r.bound_half_eps + 1e-15;
      if (!chain) {
        pass = false;
        detail += "chain broken at eps=" + std::to_string(eps) + "; ";
        break;
      }
    }
  }

  bool causality_lost = false;
  for (int t = 0; t < 100; ++t) {
    const int T = 6, d = 5;
    Tensor a = Tensor::zeros({T, T});
    for (int i = 0; i < T; ++i) {
      double sum = 0.0;
      for (int j = 0; j <= i; ++j) {
        a.at(i, j) = 0.05 + rng.uniform();
        sum += a.at(i, j);
      }
      for (int j = 0; j <= i; ++j) a.at(i, j) /= sum;
    }
    Tensor w = Tensor::zeros({d, d}), x = Tensor::zeros({T, d}), p = Tensor::zeros({T, T});
    for (double& v : w.data) v = rng.normal();
    for (double& v : x.data) v = rng.normal();
    if (t % 2 == 0) {
      for (double& v : p.data) v = rng.normal();  // generic preconditioner
    } else {
      Eigen::MatrixXd g(T, T);
      for (int i = 0; i < T; ++i)
        for (int j = 0; j < T; ++j) g(i, j) = rng.normal();
      Eigen::MatrixXd l = g * g.transpose() / T + Eigen::MatrixXd::Identity(T, T) * 0.3;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(l);
      Eigen::MatrixXd pm = es.operatorInverseSqrt();
      for (int i = 0; i < T; ++i)
        for (int j = 0; j < T; ++j) p.at(i, j) = pm(i, j);
    }
    const FactorizationReport rep = token_side_factorization_check(a, w, p, x);
    if (rep.residual >= 1e-10) {
      pass = false;
      detail += "fold residual " + std::to_string(rep.residual) + "; ";
      break;
    }
    if (t % 2 == 1 && !rep.pa_causal) causality_lost = true;
  }
  if (!causality_lost) {
    pass = false;
    detail += "no SPD-derived preconditioner broke causality; ";
  }
  report(6, "redundancy theory: balanced-moment bound chain and token-side fold", pass, detail);
}

// ---- criterion 7 -----------------------------------------------------------

void criterion_diagnostics_oracles() {
  bool pass = true;
  std::string detail;

  // dense Jacobian vs finite differences
  for (BlockVariant v : {BlockVariant::Yurii, BlockVariant::RMSProp}) {
    ModelConfig cfg;
    cfg.layers = 2;
    cfg.heads = 2;
    cfg.dim = 8;
    cfg.context = 4;
    cfg.vocab = 12;
    cfg.variant = v;
    cfg.seed = 17;
    ParamStore params = init_params(cfg);
    std::vector<int> ids = {2, 9, 0, 4};
    auto traj = record_trajectory(cfg, params, ids);
    Tensor jac = full_block_jacobian(cfg, params, 0, traj[0]);
    const int n = static_cast<int>(traj[0].x.numel());
    auto value_at = [&](const Tensor& x_in) {
      Tape tape;
      BoundModel model = bind_params(tape, cfg, params, false);
      AuxState aux;
      if (traj[0].aux.v) aux.v = tape.constant(*traj[0].aux.v);
      if (traj[0].aux.m) aux.m = tape.constant(*traj[0].aux.m);
      if (traj[0].aux.s) aux.s = tape.constant(*traj[0].aux.s);
      for (const Tensor& r : traj[0].aux.r) aux.r.push_back(tape.constant(r));
      return tape.val(block_forward(model, 0, tape.constant(x_in), aux).first);
    };
    double worst = 0.0;
    const double h = 1e-6;
    for (int col = 0; col < n; ++col) {
      Tensor plus = traj[0].x, minus = traj[0].x;
      plus.data[static_cast<std::size_t>(col)] += h;
      minus.data[static_cast<std::size_t>(col)] -= h;
      const Tensor fp = value_at(plus), fm = value_at(minus);
      for (int row = 0; row < n; ++row)
        worst = std::max(worst, std::abs((fp.data[static_cast<std::size_t>(row)] -
                                          fm.data[static_cast<std::size_t>(row)]) /
                                             (2.0 * h) -
                                         jac.at(row, col)));
    }
    if (worst >= 1e-4) {
      pass = false;
      detail += "jacobian fd gap " + std::to_string(worst) + " (" + to_string(v) + "); ";
    }
  }

  // spectrum metrics on diagonal fixtures
  {
    Tensor j{{2, 2}, {2.0, 0.0, 0.0, 0.5}};
    SpectrumReport rep = spectrum_metrics({j}, 1e-6);
    if (std::abs(rep.min_gain_persistence - std::log(0.5)) > 1e-10 ||
        std::abs(rep.layers[0].stable_rank - 1.0625) > 1e-10 ||
        std::abs(rep.layers[0].spread - 4.0) > 1e-10) {
      pass = false;
      detail += "spectrum fixture mismatch; ";
    }
  }

  // power iteration vs the dense eigensolver
  {
    Rng rng(23);
    for (int trial = 0; trial < 4; ++trial) {
      Eigen::MatrixXd g(10, 10);
      for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 10; ++j) g(i, j) = rng.normal();
      Eigen::MatrixXd a = g * g.transpose() / 10.0 + Eigen::MatrixXd::Identity(10, 10) * 0.5;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
      const double truth = es.eigenvalues().maxCoeff();
      HvpFn op = [&](const std::vector<double>& v) {
        std::vector<double> out(10, 0.0);
        for (int i = 0; i < 10; ++i)
          for (int j = 0; j < 10; ++j) out[static_cast<std::size_t>(i)] += a(i, j) * v[static_cast<std::size_t>(j)];
        return out;
      };
      const PowerIterResult r = power_iteration(op, 10, 500, 1e-10, 100 + trial);
      if (std::abs(r.lambda_max - truth) / truth >= 1e-3) {
        pass = false;
        detail += "power iteration off by " + std::to_string(std::abs(r.lambda_max - truth) / truth) + "; ";
      }
    }
  }

  // Hutchinson under exhaustive sign enumeration at n <= 12
  {
    Rng rng(13);
    const int n = 12;
    std::vector<std::vector<double>> a(n, std::vector<double>(n));
    double trace = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j <= i; ++j) {
        a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
            a[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = rng.normal();
      }
    for (int i = 0; i < n; ++i) trace += a[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)];
    double sum = 0.0;
    for (int mask = 0; mask < (1 << n); ++mask) {
      std::vector<double> v(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = (mask >> i) & 1 ? 1.0 : -1.0;
      double quad = 0.0;
      for (int i = 0; i < n; ++i) {
        double av = 0.0;
        for (int j = 0; j < n; ++j) av += a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] * v[static_cast<std::size_t>(j)];
        quad += v[static_cast<std::size_t>(i)] * av;
      }
      sum += quad;
    }
    if (std::abs(sum / (1 << n) - trace) >= 1e-8) {
      pass = false;
      detail += "exhaustive Hutchinson mismatch; ";
    }
  }

  // filter-normalized direction norms match parameter norms
  {
    ModelConfig cfg = toy_cfg(BlockVariant::Vanilla, 9);
    ParamStore params = init_params(cfg);
    Corpus corpus = gen_corpus(CorpusSpec{"markov", 16, 3, 4000, 1000});
    Rng rng(2);
    std::vector<Batch> batches = draw_fixed_batches(corpus.val, 2, cfg.context + 1, 1, rng);
    CurveResult r = filter_normalized_curve(cfg, params, batches, 55, 0.5, 5);
    std::size_t i = 0;
    for (const auto& [name, t] : params.items()) {
      double tn = 0.0;
      for (double v : t.data) tn += v * v;
      tn = std::sqrt(tn);
      if (tn > 0.0 && std::abs(r.direction_norms[i] - tn) >= 1e-10) {
        pass = false;
        detail += "direction norm mismatch at " + name + "; ";
      }
      ++i;
    }
  }

  // schedule boundary values
  {
    Schedule wsd;
    wsd.kind = ScheduleKind::Wsd;
    wsd.total = 1000;
    wsd.warmup = 100;
    wsd.decay_start = 800;
    wsd.min_mult = 0.1;
    Schedule cosine = wsd;
    cosine.kind = ScheduleKind::WarmupCosine;
    if (schedule_value(wsd, 0) != 0.0 || schedule_value(wsd, 800) != 1.0 ||
        std::abs(schedule_value(wsd, 1000) - 0.1) > 1e-15 || schedule_value(wsd, 400) != 1.0 ||
        schedule_value(cosine, 100) != 1.0 ||
        std::abs(schedule_value(cosine, 1000) - 0.1) > 1e-12) {
      pass = false;
      detail += "schedule boundary values off; ";
    }
  }

  report(7, "diagnostics oracles: jacobian, spectrum, power, Hutchinson, curve, schedule", pass,
         detail);
}

// ---- criterion 8 -----------------------------------------------------------

std::string smoke_config_text(const std::string& out) {
  return std::string("{\n"
                     "  \"seed\": 42,\n"
                     "  \"out\": \"") +
         out +
         "\",\n"
         "  \"model\": {\"layers\": 2, \"heads\": 4, \"dim\": 32, \"context\": 64, "
         "\"vocab\": 64, \"variant\": \"vanilla\"},\n"
         "  \"corpus\": {\"name\": \"markov\", \"vocab\": 64, \"seed\": 1, "
         "\"train_tokens\": 200000, \"val_tokens\": 20000},\n"
         "  \"train\": {\"steps\": 500, \"batch\": 16, \"eval_every\": 25, \"eval_batches\": 8}\n"
         "}\n";
}

void criterion_smoke() {
  const auto t0 = std::chrono::steady_clock::now();
  bool pass = true;
  std::string detail;
  const fs::path dir = fs::temp_directory_path() / "optformer_acceptance_smoke";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path cfg_path = dir / "smoke.json";
  {
    std::ofstream out(cfg_path);
    out << smoke_config_text((dir / "compare").string());
  }

  CliOptions opt;
  opt.config_path = cfg_path.string();
  opt.variants = {"vanilla", "hb", "yurii", "tmm", "adam"};
  const int rc = cmd_compare(opt);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (rc != kExitOk) {
    pass = false;
    detail += "cmd_compare exit " + std::to_string(rc) + "; ";
  }
  if (secs >= 900.0) {
    pass = false;
    detail += "runtime " + std::to_string(secs) + "s >= 15min; ";
  }

  // every variant halves its initial validation loss
  std::string ordering;
  std::vector<std::pair<double, std::string>> finals;
  for (const std::string& v : opt.variants) {
    std::ifstream rec(dir / "compare" / v / "record.csv");
    if (!rec) {
      pass = false;
      detail += "missing record for " + v + "; ";
      continue;
    }
    std::string line;
    std::getline(rec, line);  // header
    double initial = 0.0, best = 1e300;
    bool first = true;
    while (std::getline(rec, line)) {
      const std::size_t c1 = line.find(','), c2 = line.find(',', c1 + 1);
      const std::size_t c3 = line.find(',', c2 + 1);
      const double val = std::stod(line.substr(c2 + 1, c3 - c2 - 1));
      if (first) {
        initial = val;
        first = false;
      }
      best = std::min(best, val);
    }
    if (!(best <= 0.5 * initial)) {
      pass = false;
      detail += v + " best " + std::to_string(best) + " > half of " + std::to_string(initial) + "; ";
    }
    finals.emplace_back(best, v);
  }
  std::sort(finals.begin(), finals.end());
  for (const auto& [loss, v] : finals) ordering += v + "=" + std::to_string(loss) + " ";

  // bit-reproducibility: retrain vanilla with the same seed and compare bytes
  {
    CliOptions topt;
    topt.config_path = cfg_path.string();
    topt.out_dir = (dir / "rerun").string();
    if (cmd_train(topt) != kExitOk) {
      pass = false;
      detail += "rerun failed; ";
    } else {
      auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
      };
      if (slurp(dir / "compare" / "vanilla" / "record.csv") != slurp(dir / "rerun" / "record.csv")) {
        pass = false;
        detail += "records differ across identical runs; ";
      }
      if (slurp(dir / "compare" / "vanilla" / "best.bin") != slurp(dir / "rerun" / "best.bin")) {
        pass = false;
        detail += "checkpoints differ across identical runs; ";
      }
    }
  }

  char buf[512];
  std::snprintf(buf, sizeof(buf), "%.0fs; best-val ordering (reported, not asserted): %s",
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(),
                ordering.c_str());
  report(8, "end-to-end smoke: 5-variant compare halves val loss, reproducible", pass,
         detail.empty() ? std::string(buf) : detail + " | " + buf);
  fs::remove_all(dir);
}

// ---- criterion 9 -----------------------------------------------------------

void criterion_forgetting() {
  bool pass = true;
  std::string detail;

  if (forgetting_from(1.5, 2.0) != 0.5) {
    pass = false;
    detail += "arithmetic mismatch; ";
  }

  auto quick_ckpt = [&](BlockVariant v) {
    RunConfig cfg;
    cfg.seed = 11;
    cfg.model = toy_cfg(v, 11);
    cfg.model.context = 16;
    cfg.corpus = CorpusSpec{"markov", 16, 3, 20000, 4000};
    cfg.train.steps = 4;
    cfg.train.batch = 4;
    cfg.train.eval_every = 2;
    cfg.train.eval_batches = 2;
    cfg.schedule.total = 4;
    cfg.schedule.warmup = 1;
    cfg.schedule.decay_start = 3;
    return train(cfg).best;
  };
  const Checkpoint a = quick_ckpt(BlockVariant::Vanilla);
  const Checkpoint b = quick_ckpt(BlockVariant::HB);
  CorpusSpec target{"brackets", 16, 3, 20000, 4000};
  FinetuneConfig ft;
  ft.steps = 0;
  ft.batch = 4;
  ft.eval_batches = 2;
  const ForgettingResult ra = finetune_forgetting(a, target, ft, 123);
  const ForgettingResult rb = finetune_forgetting(b, target, ft, 123);
  if (ra.forgetting != 0.0) {
    pass = false;
    detail += "nonzero forgetting at ft_steps=0; ";
  }
  if (ra.source_batch_hash != rb.source_batch_hash ||
      ra.target_batch_hash != rb.target_batch_hash) {
    pass = false;
    detail += "eval batches differ across variants; ";
  }
  report(9, "forgetting protocol: zero at ft_steps=0, shared eval batches", pass, detail);
}

}  // namespace

int main() {
  criterion_reduction_lattice();
  criterion_gradient_suite();
  criterion_causality();
  criterion_numerical_operators();
  criterion_filter_lab();
  criterion_redundancy();
  criterion_diagnostics_oracles();
  criterion_smoke();
  criterion_forgetting();
  if (g_failures == 0) {
    std::printf("acceptance: all 9 criteria passed\n");
    return 0;
  }
  std::printf("acceptance: %d criterion(s) failed\n", g_failures);
  return 1;
}
