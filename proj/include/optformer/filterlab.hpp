// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <string>
#include <vector>

#include "optformer/tensor.hpp"

namespace optformer::filterlab {

// Local quadratic model: curvatures in [mu, L], condition number kappa =
// L/mu. Depth recurrences run on filter coefficients a (lookahead),
// b (velocity decay), c (reinjection), eta (step).
struct FilterScenario {
  double mu_curv = 1.0;
  double L_curv = 9.0;
  double a = 0.0;
  double b = 0.0;
  double c = 1.0;
  double eta = 0.2;
  int depth = 200;
  std::vector<double> spectrum;  // eigenvalues, each in [mu, L]
  double e0 = 1.0;
  double v0 = 0.0;

  double kappa() const { return L_curv / mu_curv; }
  void validate() const;
};

struct VanillaRates {
  double eta_star = 0.0;  // 2/(L+mu)
  double rho = 0.0;       // (kappa-1)/(kappa+1)
};
VanillaRates vanilla_rate(double mu, double L);

struct MomentumRates {
  double eta = 0.0;   // 4/(sqrt(L)+sqrt(mu))^2
  double beta = 0.0;  // ((sqrt(L)-sqrt(mu))/(sqrt(L)+sqrt(mu)))^2
  double rho = 0.0;   // sqrt(beta) = (sqrt(kappa)-1)/(sqrt(kappa)+1)
};
MomentumRates momentum_rate(double mu, double L);

// Second-order coefficient maps for c > 0:
// e_{l+1} = alpha(lambda) e_l - theta(lambda) e_{l-1}.
double alpha_coef(const FilterScenario& s, double lambda);
double theta_coef(const FilterScenario& s, double lambda);

struct ModeTrajectory {
  double lambda = 0.0;
  std::vector<double> e;  // e_0 .. e_N
  bool unstable = false;  // |e| exceeded the divergence guard
};

// Simulates the exact (e, v) pair per mode (valid for c = 0 as well); the
// c > 0 trajectories coincide with the second-order recurrence above.
std::vector<ModeTrajectory> eigenmode_recurrence(const FilterScenario& s);

// Least-squares decay rate of the |e| envelope (local maxima of |e| over
// the last half of the trajectory; all points when there is no
// oscillation). Returns exp(slope of log|e|).
double fitted_envelope_rate(const std::vector<double>& e);

struct CompareReport {
  std::vector<double> worst_vanilla;   // worst-mode |e| per depth
  std::vector<double> worst_momentum;
  long crossover_depth = -1;           // first depth where momentum < vanilla
  double c_mom = 1.0;                  // measured trajectory constant
  long analytic_n0 = 0;                // ceil(log C / log(rho_v/rho_m))
  double rho_vanilla = 0.0;
  double rho_momentum = 0.0;
  double observed_rate_vanilla = 0.0;
  double observed_rate_momentum = 0.0;
};

// Tuned vanilla vs heavy-ball on the same spectrum: simulated worst-mode
// errors, observed crossover depth, and the analytic depth bound computed
// from the measured constant.
CompareReport compare_filters(double mu, double L, const std::vector<double>& spectrum, int depth,
                              double e0 = 1.0, double v0 = 0.0);

// Roots of r^2 - (1 - eta*lambda + beta) r + beta = 0.
std::pair<std::complex<double>, std::complex<double>> hb_characteristic_roots(double eta,
                                                                              double beta,
                                                                              double lambda);

struct RedundancyReport {
  double alpha = 0.0;        // 1/(rho_min + delta)
  double deviation = 0.0;    // || D_s/alpha - I ||_2
  double bound_tight = 0.0;  // (sqrt(1+eps)-1)/(1+delta/rho_max)
  double bound_mid = 0.0;    // sqrt(1+eps)-1
  double bound_half_eps = 0.0;  // eps/2
  bool assumption_ok = false;   // rho_max^2/rho_min^2 <= 1+eps
  bool holds = false;           // deviation <= bound_tight
};

// Checks that the diagonal preconditioner built from a coordinate-balanced
// second-moment vector is close to a scalar multiple of the identity:
// D_s = diag(1/(sqrt(s_i)+delta)).
RedundancyReport diagonal_redundancy_check(const std::vector<double>& s, double delta,
                                           double epsilon_assumed);

struct FactorizationReport {
  double residual = 0.0;  // || P (A X W) - (P A) X W ||_F
  bool pa_nonnegative = false;
  bool pa_row_stochastic = false;
  bool pa_causal = false;  // lower-triangular
};

// P (A X W) == (P A) X W: a token-side preconditioner folds into the
// mixing matrix. Also reports whether P A still looks like an attention
// matrix.
FactorizationReport token_side_factorization_check(const Tensor& a, const Tensor& w,
                                                   const Tensor& p, const Tensor& x);

struct SweepRow {
  double kappa = 0.0;
  double rho_vanilla = 0.0;
  double rho_mom = 0.0;
  double observed_rate_vanilla = 0.0;
  double observed_rate_mom = 0.0;
  long crossover_n = 0;
};

std::vector<SweepRow> kappa_sweep(const std::vector<double>& kappa_grid, int depth);
std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace optformer::filterlab
