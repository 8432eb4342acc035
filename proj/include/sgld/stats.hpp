#pragma once

// Every statistic computed from chain trajectories: the empirical average
// Pi_hat(h), the normalizer Y = (1/m) sum |grad f(w_k)|^2, the self-normalized
// statistic W = sqrt(m eta) (Pi_hat(h) - pi(h)) / sqrt(delta Y), the martingale
// term H = -(1/sqrt m) sum <grad f(w_k), xi_{k+1}>, the remainder in component
// and residual form, tail-ratio tables against the normal tail, Kolmogorov
// distance, sorted-sample Wasserstein-1, and chain diagnostics.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sgld/dynamics.hpp"
#include "sgld/problems.hpp"
#include "sgld/stein.hpp"

namespace sgld {

// Standard normal CDF / upper tail through erfc (relative accuracy well below
// 1e-12 for |x| <= 8; the tail ratios divide by these).
double normal_cdf(double x);
double normal_tail(double x);

// (1/m) sum h(w_k).
double pi_hat(const Trajectory& traj, const TestFunction& h);

// Y = (1/m) sum |grad f(w_k)|^2.
double y_eta(const Trajectory& traj, const SteinField& field);

// W = sqrt(m eta) (Pi_hat(h) - pi_h) / sqrt(delta Y); Y = 0 -> NumericError.
double w_eta(const Trajectory& traj, const TestFunction& h, const SteinField& field, double pi_h,
             double eta, double delta);

// H = -(1/sqrt m) sum <grad f(w_k), xi_{k+1}>, using the logged xi draws.
double h_eta(const Trajectory& traj, const SteinField& field);

struct RComponents {
    double r1 = 0.0;  // (f(w_0) - f(w_m)) / sqrt(m eta delta)
    double r2 = 0.0;  // sqrt(eta/(m delta)) sum <grad f(w_k), grad_P(w_k) - grad_psi(w_k, zeta_{k+1})>
    double r3 = 0.0;  // Taylor-remainder double integral of the Hessian increment
    double r4 = 0.0;  // (1/(2 sqrt(m eta delta))) sum <hess f(w_k), Dw Dw^T - eta^2 Sigma - eta delta I>_HS
    double sum() const { return r1 + r2 + r3 + r4; }
};

// Component form of the remainder; the full remainder is -(R1+R2+R3+R4), so
// that sqrt(m eta/delta) (Pi_hat(h) - pi_h) = H - (R1+R2+R3+R4) exactly.
// R3's (s, s') double integral uses 8-point Gauss-Legendre per axis (exact
// whenever hess f is constant, where the integrand vanishes identically).
// Requires the noise log and a field Hessian; eta, delta > 0.
RComponents r_components(const Trajectory& traj, const SteinField& field, const Problem& problem,
                         double eta, double delta);

// Residual form: sqrt(m eta/delta) (Pi_hat(h) - pi_h) - H.  No Hessian needed.
double r_residual(const Trajectory& traj, const TestFunction& h, const SteinField& field,
                  double pi_h, double eta, double delta);

struct TailRow {
    double x = 0.0;
    double p_hat = 0.0;        // empirical P(W > x), strict inequality
    double normal_tail = 0.0;  // 1 - Phi(x)
    double ratio = 0.0;
    double std_error = 0.0;    // sqrt(p(1-p)/R) / (1 - Phi(x))
    int direction = +1;        // +1: W; -1: mirrored table for -W
};

struct TailTable {
    std::vector<TailRow> rows;  // the +W rows for the full grid, then the -W rows
    std::size_t n_samples = 0;
    // Filled in by the harness: which theorem regime produced the samples and
    // the symbolic x-validity scale of that regime.
    std::string regime;
    std::string validity_note;
};

// Empirical tail ratios against the standard normal at each grid point, for
// the samples and their mirror image.  Empty samples or grid -> ConfigError.
// (Statistical validity wants R >= 1e3; smaller sets are allowed for
// arithmetic checks.)
TailTable tail_ratio_table(std::span<const double> w_samples, std::span<const double> x_grid);

// Exact Kolmogorov distance of the empirical CDF to the standard normal:
// max_i max(|i/R - Phi(x_(i))|, |(i-1)/R - Phi(x_(i))|) over sorted samples.
double ks_distance(std::span<const double> samples);

// Sorted-sample L1 average (1/n) sum |a_(i) - b_(i)| -- the exact W1 between
// two equal-size empirical measures.  Unequal sizes are first reduced by
// deterministic quantile resampling of the larger set.  Empty -> ConfigError.
double w1_sorted(std::span<const double> samples_a, std::span<const double> samples_b);

// exp(gamma |w_k|^2) at the five checkpoints k in {0, m/4, m/2, 3m/4, m-1};
// replication averaging happens in the caller.  Overflowing values are
// reported as +inf (the validator treats that as failure at this gamma).
struct ExpMomentPoint {
    std::size_t k = 0;
    double value = 0.0;
};
std::array<ExpMomentPoint, 5> exp_moment_curve(const Trajectory& traj, double gamma);

// Empirical exceedance P(|Y_r - mean| >= x') across replications, reported at
// each grid point.  Requires >= 1e3 replications.
struct ConcentrationReport {
    std::vector<double> x_grid;
    std::vector<double> exceedance;
    double mean_y = 0.0;
    bool monotone_nonincreasing = true;
};
ConcentrationReport variance_concentration_check(std::span<const double> y_values,
                                                 std::span<const double> x_grid);
ConcentrationReport variance_concentration_check(std::span<const Trajectory> trajectories,
                                                 const SteinField& field,
                                                 std::span<const double> x_grid);

// Everything the audit experiment records per replication.
struct ReplicationResult {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    double pi_hat_h = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h_mart = 0.0;           // the martingale term
    RComponents r;
    double r_resid = 0.0;          // residual-form remainder
    double lhs = 0.0;              // sqrt(m eta/delta) (Pi_hat - pi_h)
    double identity_residual = 0.0;  // lhs - (h_mart - sum R_i)
    std::array<ExpMomentPoint, 5> exp_moments{};
    double exp_moment_slope = 0.0;  // least-squares slope of the curve in k
    std::string config_hash;
};

}  // namespace sgld
