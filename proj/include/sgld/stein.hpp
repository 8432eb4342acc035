#pragma once

// Stein (Poisson) equation machinery: fields f solving
//     h(x) - pi(h) = L f(x),
//     L g = <-grad_P, grad g> + (1/2) <eta Sigma + delta I, hess g>_HS,
// either in closed form for the constant-coefficient Ornstein-Uhlenbeck case
// or by truncated-horizon Monte Carlo over Euler-Maruyama paths:
//     f(x) = -int_0^T E[h(X_t(x)) - pi(h)] dt.

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sgld/dynamics.hpp"
#include "sgld/linalg.hpp"
#include "sgld/problems.hpp"
#include "sgld/rng.hpp"

namespace sgld {

struct GridAxis {
    double lo = 0.0;
    double hi = 0.0;
    int n = 0;  // node count, >= 2
};

struct GridSpec {
    std::vector<GridAxis> axes;  // one per dimension, d <= 2
};

namespace detail {
struct GridData {
    std::vector<GridAxis> axes;
    std::vector<double> f_nodes;     // node-major (row-major over axes)
    std::vector<double> grad_nodes;  // node-major x dim
    mutable std::atomic<std::uint64_t> clamp_count{0};
};
}  // namespace detail

class SteinField {
  public:
    enum class Backend { analytic, monte_carlo, grid };

    double f(std::span<const double> x) const { return f_(x); }
    void grad(std::span<const double> x, std::span<double> out) const { grad_(x, out); }
    std::vector<double> grad(std::span<const double> x) const {
        std::vector<double> g(dim_);
        grad_(x, g);
        return g;
    }
    bool has_hess() const { return static_cast<bool>(hess_); }
    void hess(std::span<const double> x, Matrix& out) const;

    Backend backend() const { return backend_; }
    // Statistical tolerance per evaluation: 0 for the analytic backend, the
    // declared Monte Carlo tolerance otherwise.
    double eval_tolerance() const { return eval_tolerance_; }
    const TestFunction& h() const { return h_; }
    double pi_h() const { return pi_h_; }
    int dim() const { return dim_; }

    // Grid backend: number of evaluations that fell outside the grid and were
    // clamped to its boundary.
    std::uint64_t clamp_count() const;

    // Assembles a field from raw callables (test stubs, python bindings).
    static SteinField from_functions(TestFunction h, double pi_h,
                                     std::function<double(std::span<const double>)> f,
                                     std::function<void(std::span<const double>, std::span<double>)> grad,
                                     std::function<void(std::span<const double>, Matrix&)> hess,
                                     Backend backend, double eval_tolerance);

  private:
    friend SteinField analytic_stein_ou(const TestFunction&, double);
    friend SteinField grid_field(const std::shared_ptr<const Problem>&, const TestFunction&,
                                 const GridSpec&, std::size_t, double, double, double, double,
                                 double, const RngStream&);
    friend SteinField load_grid_field(const std::string&);
    friend SteinField make_mc_stein_field(const std::shared_ptr<const Problem>&,
                                          const TestFunction&, const struct McFieldParams&, double,
                                          double, double, const RngStream&);
    friend void save_grid_field(const SteinField&, const std::string&);

    SteinField() : h_(TestFunction::linear({1.0})) {}

    TestFunction h_;
    double pi_h_ = 0.0;
    int dim_ = 1;
    Backend backend_ = Backend::analytic;
    double eval_tolerance_ = 0.0;
    std::function<double(std::span<const double>)> f_;
    std::function<void(std::span<const double>, std::span<double>)> grad_;
    std::function<void(std::span<const double>, Matrix&)> hess_;
    std::shared_ptr<detail::GridData> grid_;  // grid backend only
    double eta_ = 0.0, delta_ = 0.0;          // recorded for serialization
};

// Closed-form solution when the approximating SDE is OU with drift -x and
// diffusion a I (a = eta sigma^2 + delta for the Gaussian-mean problem):
//   h = amp (<v, x> + offset)  ->  f = -amp <v, x>,            pi(h) = amp * offset
//   h = amp |x - c|^2          ->  f = amp (-|x|^2/2 + 2<c,x> + d a/4),
//                                  pi(h) = amp (d a/2 + |c|^2)
// Constant h (zero direction) -> f = 0.  Custom h -> ConfigError.
SteinField analytic_stein_ou(const TestFunction& h, double a);

struct McEstimate {
    double value = 0.0;
    double std_error = 0.0;
    // Bias proxy for the truncated time integral: |E h(X_T) - pi(h)| on the
    // final grid slab.  The truncation constant of the exponential decay is
    // unknowable, so the proxy is reported instead of a rigorous bound.
    double tail_proxy = 0.0;
};

// Truncated-horizon Monte Carlo estimate of f(x): trapezoid rule over the
// Euler-Maruyama grid, n_paths independent paths, per-path streams forked
// deterministically from `base` so that repeated calls with the same base
// reuse identical noise (the CRN mechanism the derivative estimators rely on).
McEstimate stein_f_mc(const Problem& problem, const TestFunction& h, std::span<const double> x,
                      double horizon, double dt, std::size_t n_paths, double pi_h, double eta,
                      double delta, const RngStream& base);

// Central differences of stein_f_mc with common random numbers: both +/-eps
// evaluations share `base`, so path noise cancels in the difference.
std::vector<double> stein_grad_mc(const Problem& problem, const TestFunction& h,
                                  std::span<const double> x, double eps, double horizon, double dt,
                                  std::size_t n_paths, double pi_h, double eta, double delta,
                                  const RngStream& base);

// Hessian of a field by first central differences of grad_f, symmetrized.
Matrix stein_hessian_fd(const SteinField& field, std::span<const double> x, double eps);

struct ResidualReport {
    double max_residual = 0.0;
    std::vector<double> per_point;
    double tolerance = 0.0;
    bool pass = false;
};

// Max over points of |L f(x) - h(x) + pi(h)| with L the generator above.
// Requires hess; analytic fields must meet 1e-9, others their declared
// tolerance.
ResidualReport stein_residual_check(const SteinField& field, const Problem& problem, double eta,
                                    double delta, std::span<const std::vector<double>> points);

// Piecewise-(bi)linear interpolant of Monte Carlo node values of f and grad_f
// (d <= 2).  Out-of-range queries are clamped to the grid with a counted
// warning.  No Hessian (use the residual form of the remainder).
SteinField grid_field(const std::shared_ptr<const Problem>& problem, const TestFunction& h,
                      const GridSpec& spec, std::size_t n_paths, double horizon, double dt,
                      double pi_h, double eta, double delta, const RngStream& base);

// Grid-field serialization: a one-line JSON header (format tag, version, axes,
// h descriptor, pi_h, eta, delta, tolerance) followed by the node values as
// native little-endian binary doubles.  Only grid-backend fields with
// linear/quadratic h are serializable.
void save_grid_field(const SteinField& field, const std::string& path);
SteinField load_grid_field(const std::string& path);

struct McFieldParams {
    double horizon = 0.0;      // 0 -> default_stein_horizon(K1)
    double dt = 0.01;
    std::size_t n_paths = 1000;
    double eps_grad = 0.05;    // CRN finite-difference step for grad/hess
    double tolerance = 0.05;   // declared per-evaluation statistical tolerance
};

// Field whose every evaluation runs the Monte Carlo estimator (expensive;
// meant for audits at a handful of points).  grad uses CRN central
// differences; hess differences the CRN gradient.
SteinField make_mc_stein_field(const std::shared_ptr<const Problem>& problem,
                               const TestFunction& h, const McFieldParams& params, double pi_h,
                               double eta, double delta, const RngStream& base);

// Horizon such that exp(-K1 T) <= 1e-5, the exponential-ergodicity proxy for
// truncating the time integral.
double default_stein_horizon(double k1);

// pi(h) when no closed form exists: time average over one long SDE run of
// 1000/K1 time units after a 20/K1 burn-in, with batch-means standard error.
struct PiHatEstimate {
    double value = 0.0;
    double std_error = 0.0;
};
PiHatEstimate estimate_pi_h(const Problem& problem, const TestFunction& h, double eta, double delta,
                            double dt, RngStream& stream);

}  // namespace sgld
