// SPDX-License-Identifier: Apache-2.0
#include "optformer/filterlab.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "optformer/error.hpp"

namespace optformer::filterlab {

namespace {
constexpr double kDivergenceGuard = 1e12;
}

void FilterScenario::validate() const {
  if (!(mu_curv > 0.0) || L_curv < mu_curv)
    throw ConfigError("FilterScenario: need 0 < mu <= L");
  if (depth < 1) throw ConfigError("FilterScenario: depth must be >= 1");
  for (double lam : spectrum)
    if (lam < mu_curv - 1e-12 || lam > L_curv + 1e-12)
      throw ConfigError("FilterScenario: eigenvalue outside [mu, L]");
}

VanillaRates vanilla_rate(double mu, double L) {
  if (!(mu > 0.0) || L < mu) throw ConfigError("vanilla_rate: need 0 < mu <= L");
  VanillaRates r;
  r.eta_star = 2.0 / (L + mu);
  const double kappa = L / mu;
  r.rho = (kappa - 1.0) / (kappa + 1.0);
  return r;
}

MomentumRates momentum_rate(double mu, double L) {
  if (!(mu > 0.0) || L < mu) throw ConfigError("momentum_rate: need 0 < mu <= L");
  MomentumRates r;
  const double sl = std::sqrt(L), sm = std::sqrt(mu);
  r.eta = 4.0 / ((sl + sm) * (sl + sm));
  r.beta = ((sl - sm) / (sl + sm)) * ((sl - sm) / (sl + sm));
  r.rho = std::sqrt(r.beta);
  return r;
}

double alpha_coef(const FilterScenario& s, double lambda) {
  return 1.0 + s.b - (s.a + s.c) * s.eta * lambda;
}

double theta_coef(const FilterScenario& s, double lambda) {
  return s.b - s.a * s.eta * lambda;
}

std::vector<ModeTrajectory> eigenmode_recurrence(const FilterScenario& s) {
  s.validate();
  std::vector<ModeTrajectory> out;
  out.reserve(s.spectrum.size());
  for (double lambda : s.spectrum) {
    ModeTrajectory mt;
    mt.lambda = lambda;
    mt.e.reserve(static_cast<std::size_t>(s.depth) + 1);
    double e = s.e0, v = s.v0;
    mt.e.push_back(e);
    for (int l = 0; l < s.depth; ++l) {
      v = s.b * v - s.eta * lambda * (e + s.a * v);
      e = e + s.c * v;
      if (!std::isfinite(e) || std::abs(e) > kDivergenceGuard) {
        mt.unstable = true;  // flagged, not thrown: stability sweeps stay total
        break;
      }
      mt.e.push_back(e);
    }
    out.push_back(std::move(mt));
  }
  return out;
}

double fitted_envelope_rate(const std::vector<double>& e) {
  if (e.size() < 3) return 0.0;
  const std::size_t start = e.size() / 2;
  std::vector<std::pair<double, double>> pts;  // (l, log|e_l|)
  auto absv = [&](std::size_t i) { return std::abs(e[i]); };
  // local maxima of |e| in the tail; fall back to all tail points when the
  // trajectory does not oscillate
  for (std::size_t i = std::max<std::size_t>(start, 1); i + 1 < e.size(); ++i)
    if (absv(i) >= absv(i - 1) && absv(i) >= absv(i + 1) && absv(i) > 1e-300)
      pts.emplace_back(static_cast<double>(i), std::log(absv(i)));
  if (pts.size() < 2) {
    pts.clear();
    for (std::size_t i = start; i < e.size(); ++i)
      if (absv(i) > 1e-300) pts.emplace_back(static_cast<double>(i), std::log(absv(i)));
  }
  if (pts.size() < 2) return 0.0;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (auto [x, y] : pts) {
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double n = static_cast<double>(pts.size());
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return std::exp(slope);
}

CompareReport compare_filters(double mu, double L, const std::vector<double>& spectrum, int depth,
                              double e0, double v0) {
  CompareReport rep;
  const VanillaRates vr = vanilla_rate(mu, L);
  const MomentumRates mr = momentum_rate(mu, L);
  rep.rho_vanilla = vr.rho;
  rep.rho_momentum = mr.rho;

  FilterScenario van;
  van.mu_curv = mu;
  van.L_curv = L;
  van.a = 0.0;
  van.b = 0.0;
  van.c = 1.0;
  van.eta = vr.eta_star;
  van.depth = depth;
  van.spectrum = spectrum;
  van.e0 = e0;
  van.v0 = v0;

  FilterScenario mom = van;
  mom.b = mr.beta;
  mom.eta = mr.eta;

  auto worst = [&](const std::vector<ModeTrajectory>& trajs) {
    std::vector<double> w(static_cast<std::size_t>(depth) + 1, 0.0);
    for (const ModeTrajectory& mt : trajs)
      for (std::size_t l = 0; l < mt.e.size(); ++l)
        w[l] = std::max(w[l], std::abs(mt.e[l]));
    return w;
  };
  const auto van_traj = eigenmode_recurrence(van);
  const auto mom_traj = eigenmode_recurrence(mom);
  rep.worst_vanilla = worst(van_traj);
  rep.worst_momentum = worst(mom_traj);

  for (std::size_t l = 1; l < rep.worst_momentum.size(); ++l)
    if (rep.worst_momentum[l] < rep.worst_vanilla[l]) {
      rep.crossover_depth = static_cast<long>(l);
      break;
    }

  // measured constant: sup over the horizon of worst|e_l| / (rho_mom^l e0)
  const double base = rep.worst_momentum[0] > 0.0 ? rep.worst_momentum[0] : 1.0;
  if (mr.rho > 0.0) {
    double c = 0.0;
    double denom = 1.0;
    for (std::size_t l = 0; l < rep.worst_momentum.size(); ++l) {
      c = std::max(c, rep.worst_momentum[l] / (denom * base));
      denom *= mr.rho;
    }
    rep.c_mom = c;
    rep.analytic_n0 = std::max<long>(
        0, static_cast<long>(std::ceil(std::log(c) / std::log(vr.rho / mr.rho))));
  } else {
    // kappa == 1: both templates annihilate the error in one step
    rep.c_mom = 1.0;
    rep.analytic_n0 = 0;
    if (rep.crossover_depth < 0) rep.crossover_depth = 0;
  }

  rep.observed_rate_vanilla = fitted_envelope_rate(rep.worst_vanilla);
  rep.observed_rate_momentum = fitted_envelope_rate(rep.worst_momentum);
  return rep;
}

std::pair<std::complex<double>, std::complex<double>> hb_characteristic_roots(double eta,
                                                                              double beta,
                                                                              double lambda) {
  const double b = 1.0 - eta * lambda + beta;
  double disc = b * b - 4.0 * beta;
  // Near the spectrum endpoints the discriminant vanishes and its
  // computed value is pure cancellation noise; snapping it to the exact
  // double-root case keeps the moduli clean.
  if (std::abs(disc) < 1e-12 * (b * b + 4.0 * beta)) disc = 0.0;
  const std::complex<double> sq = std::sqrt(std::complex<double>(disc, 0.0));
  const std::complex<double> bc(b, 0.0);
  return {(bc + sq) / 2.0, (bc - sq) / 2.0};
}

RedundancyReport diagonal_redundancy_check(const std::vector<double>& s, double delta,
                                           double epsilon_assumed) {
  if (s.empty()) throw ConfigError("diagonal_redundancy_check: empty vector");
  if (delta < 0.0) throw ConfigError("diagonal_redundancy_check: delta must be >= 0");
  double rho_min = std::sqrt(s[0]), rho_max = std::sqrt(s[0]);
  for (double si : s) {
    if (!(si > 0.0)) throw ConfigError("diagonal_redundancy_check: s must be strictly positive");
    rho_min = std::min(rho_min, std::sqrt(si));
    rho_max = std::max(rho_max, std::sqrt(si));
  }

  RedundancyReport rep;
  rep.assumption_ok =
      rho_max * rho_max <= (1.0 + epsilon_assumed) * rho_min * rho_min * (1.0 + 1e-12);
  rep.alpha = 1.0 / (rho_min + delta);
  double dev = 0.0;
  for (double si : s) {
    const double di = 1.0 / (std::sqrt(si) + delta);
    dev = std::max(dev, std::abs(di / rep.alpha - 1.0));
  }
  rep.deviation = dev;
  rep.bound_tight = (std::sqrt(1.0 + epsilon_assumed) - 1.0) / (1.0 + delta / rho_max);
  rep.bound_mid = std::sqrt(1.0 + epsilon_assumed) - 1.0;
  rep.bound_half_eps = epsilon_assumed / 2.0;
  rep.holds = rep.assumption_ok && rep.deviation <= rep.bound_tight + 1e-15;
  return rep;
}

namespace {

Tensor matmul_plain(const Tensor& a, const Tensor& b) {
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) throw ShapeError("matmul_plain: inner dims disagree");
  Tensor c = Tensor::zeros({m, n});
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      const double v = a.at(i, p);
      if (v == 0.0) continue;
      for (int j = 0; j < n; ++j) c.at(i, j) += v * b.at(p, j);
    }
  return c;
}

}  // namespace

FactorizationReport token_side_factorization_check(const Tensor& a, const Tensor& w,
                                                   const Tensor& p, const Tensor& x) {
  const int T = a.dim(0);
  if (a.dim(1) != T || p.dim(0) != T || p.dim(1) != T || x.dim(0) != T ||
      x.dim(1) != w.dim(0) || w.dim(0) != w.dim(1))
    throw ShapeError("token_side_factorization_check: shapes do not conform");

  const Tensor axw = matmul_plain(matmul_plain(a, x), w);
  const Tensor lhs = matmul_plain(p, axw);
  const Tensor pa = matmul_plain(p, a);
  const Tensor rhs = matmul_plain(matmul_plain(pa, x), w);

  FactorizationReport rep;
  double res = 0.0;
  for (std::size_t i = 0; i < lhs.data.size(); ++i) {
    const double d = lhs.data[i] - rhs.data[i];
    res += d * d;
  }
  rep.residual = std::sqrt(res);

  rep.pa_nonnegative = true;
  rep.pa_row_stochastic = true;
  rep.pa_causal = true;
  for (int i = 0; i < T; ++i) {
    double row = 0.0;
    for (int j = 0; j < T; ++j) {
      const double v = pa.at(i, j);
      row += v;
      if (v < -1e-12) rep.pa_nonnegative = false;
      if (j > i && std::abs(v) > 1e-12) rep.pa_causal = false;
    }
    if (std::abs(row - 1.0) > 1e-9) rep.pa_row_stochastic = false;
  }
  rep.pa_row_stochastic = rep.pa_row_stochastic && rep.pa_nonnegative;
  return rep;
}

std::vector<SweepRow> kappa_sweep(const std::vector<double>& kappa_grid, int depth) {
  if (kappa_grid.empty()) throw ConfigError("kappa_sweep: empty grid");
  std::vector<SweepRow> rows;
  rows.reserve(kappa_grid.size());
  for (double kappa : kappa_grid) {
    if (!(kappa >= 1.0)) throw ConfigError("kappa_sweep: kappa must be >= 1");
    const double mu = 1.0, L = kappa;
    std::vector<double> spectrum;
    const int modes = 33;
    for (int i = 0; i < modes; ++i)
      spectrum.push_back(mu + (L - mu) * static_cast<double>(i) / (modes - 1));
    const CompareReport rep = compare_filters(mu, L, spectrum, depth);
    SweepRow row;
    row.kappa = kappa;
    row.rho_vanilla = rep.rho_vanilla;
    row.rho_mom = rep.rho_momentum;
    row.observed_rate_vanilla = rep.observed_rate_vanilla;
    row.observed_rate_mom = rep.observed_rate_momentum;
    row.crossover_n = rep.crossover_depth;
    rows.push_back(row);
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "kappa,rho_vanilla,rho_mom,observed_rate_vanilla,observed_rate_mom,crossover_N\n";
  char buf[200];
  for (const SweepRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g,%ld\n", r.kappa, r.rho_vanilla,
                  r.rho_mom, r.observed_rate_vanilla, r.observed_rate_mom, r.crossover_n);
    out += buf;
  }
  return out;
}

}  // namespace optformer::filterlab
