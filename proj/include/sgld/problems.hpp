#pragma once

// Stochastic loss models psi(w, zeta): the chain's target P(w) = E psi(w, zeta)
// enters only through gradients.  A Problem exposes the stochastic gradient
// grad_psi, its mean grad_P, the gradient-noise covariance Sigma, declared
// smoothness/dissipativity constants for the validators, and optional closed
// forms (stationary laws, OU reduction) used for oracles and analytic Stein
// solutions.

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sgld/linalg.hpp"
#include "sgld/rng.hpp"

namespace sgld {

// Declared constants for the smoothness / dissipativity / sub-Gaussian
// assumptions: |grad_psi(x,z) - grad_psi(y,z)| <= L |x-y| and
// <x-y, -grad_psi(x,z) + grad_psi(y,z)> <= -K1 |x-y|^2 + K2.
struct AssumptionConstants {
    double L;
    double K1;
    double K2;
};

class Problem {
  public:
    virtual ~Problem() = default;

    int dim() const { return dim_; }
    int zeta_dim() const { return zeta_dim_; }
    const std::string& name() const { return name_; }
    const AssumptionConstants& constants() const { return constants_; }
    // Sample budget for the Monte Carlo Sigma fallback and validator checks.
    int mc_sigma_budget() const { return mc_sigma_budget_; }

    virtual void sample_zeta(RngStream& stream, std::span<double> zeta) const = 0;
    virtual void grad_psi(std::span<const double> w, std::span<const double> zeta,
                          std::span<double> out) const = 0;
    virtual void grad_p(std::span<const double> w, std::span<double> out) const = 0;

    // Gradient-noise covariance Sigma(w) = E[grad_psi grad_psi^T] - grad_P grad_P^T.
    // Default: Monte Carlo estimate over mc_sigma_budget() zeta draws (common
    // random numbers across calls), symmetrized and eigenvalue-clipped at 0 so
    // the result is usable as a diffusion matrix.  Built-ins override with the
    // closed form.
    virtual Matrix sigma(std::span<const double> w) const;

    // True when Sigma(w) does not depend on w; lets hot loops hoist the
    // diffusion square root.
    virtual bool sigma_is_constant() const { return false; }

    // Closed forms, when available. ---------------------------------------

    // Stationary variance v of the approximating SDE, i.e. its invariant law
    // is N(0, v I).
    virtual std::optional<double> sde_stationary_variance(double /*eta*/, double /*delta*/) const {
        return std::nullopt;
    }
    // Stationary variance of the chain itself (diagnostic oracle).
    virtual std::optional<double> chain_stationary_variance(double /*eta*/, double /*delta*/) const {
        return std::nullopt;
    }
    // When the approximating SDE is exactly Ornstein-Uhlenbeck with drift -x
    // and constant diffusion matrix a*I, returns a; enables the analytic Stein
    // solution family.
    virtual std::optional<double> ou_coefficient(double /*eta*/, double /*delta*/) const {
        return std::nullopt;
    }

  protected:
    Problem(std::string name, int dim, int zeta_dim, AssumptionConstants constants,
            int mc_sigma_budget = 4096)
        : name_(std::move(name)),
          dim_(dim),
          zeta_dim_(zeta_dim),
          constants_(constants),
          mc_sigma_budget_(mc_sigma_budget) {}

  private:
    std::string name_;
    int dim_;
    int zeta_dim_;
    AssumptionConstants constants_;
    int mc_sigma_budget_;
};

// psi(w, zeta) = |w - zeta|^2 / 2 with zeta ~ N(0, sigma2 I): grad_psi = w - zeta,
// grad_P(w) = w, Sigma = sigma2 I, (L, K1, K2) = (1, 1, 0).  The chain is an
// AR(1) recursion and every stationary law is Gaussian, so this problem
// carries the full set of closed forms.
std::shared_ptr<Problem> make_gaussian_mean(int d, double sigma2);

// psi(w, zeta) = |w - zeta|^2 / 2 + epsilon * cos(w_1): nonconvex for
// epsilon > 0, still dissipative; (L, K1, K2) = (1 + eps, 1/2, 2 eps^2).
// No analytic Stein solution -- chain-level experiments only.
std::shared_ptr<Problem> make_perturbed_quadratic(int d, double epsilon, double sigma2);

// Registry used by the experiment harness: problems selected by name plus a
// flat parameter map.  Unknown names or missing parameters -> ConfigError.
std::shared_ptr<Problem> make_problem(const std::string& name,
                                      const std::map<std::string, double>& params);

// ---------------------------------------------------------------------------
// Test functions h for the empirical-average statistics.
//
// The statistic theory wants Lipschitz-1 observables, so the linear kind
// normalizes its direction to unit length and the custom kind divides by its
// declared Lipschitz constant; an explicit `amplitude` factor (default 1)
// scales the whole function and is what linearity/scale tests manipulate.
// quadratic_radial h(x) = |x - c|^2 is deliberately left unnormalized: it
// exists for the analytic Stein oracle, whose closed forms assume plain x^2,
// and is only locally Lipschitz.
class TestFunction {
  public:
    enum class Kind { linear, quadratic_radial, custom };

    // h(x) = amplitude * (<v/|v|, x> + offset); v = 0 yields the constant
    // function amplitude * offset.
    static TestFunction linear(std::vector<double> direction, double offset = 0.0);
    // h(x) = amplitude * |x - center|^2.
    static TestFunction quadratic_radial(std::vector<double> center);
    // h(x) = amplitude * user(x) / lipschitz_constant.
    static TestFunction custom(std::function<double(std::span<const double>)> evaluate,
                               double lipschitz_constant, int dim);

    double operator()(std::span<const double> x) const;

    Kind kind() const { return kind_; }
    int dim() const { return dim_; }
    double amplitude() const { return amplitude_; }
    double offset() const { return offset_; }
    // Unit direction (linear) or center (quadratic_radial).
    const std::vector<double>& parameter_vector() const { return param_; }

    // Same function scaled by c (returned amplitude = c * amplitude).
    TestFunction scaled(double c) const;

  private:
    TestFunction() = default;

    Kind kind_ = Kind::linear;
    int dim_ = 0;
    double amplitude_ = 1.0;
    double offset_ = 0.0;
    std::vector<double> param_;
    std::function<double(std::span<const double>)> eval_;
};

// ---------------------------------------------------------------------------
// Assumption validators.  Global assumptions cannot be checked globally, so
// all three sample uniformly from a ball of explicit radius and report it.

struct ValidatorReport {
    std::string check;          // "lipschitz" | "dissipativity" | "subgaussian"
    bool pass = false;
    double worst_value = 0.0;   // max ratio / max inequality excess / max estimate
    std::size_t n_samples = 0;
    double radius = 0.0;
    std::uint64_t seed = 0;
    double declared_bound = 0.0;     // what worst_value was compared against
    double clipped_fraction = 0.0;   // subgaussian only
    std::string note;
    std::vector<double> per_point;   // subgaussian: estimate per grid point
};

// Max over sampled (x, y, zeta) of |grad_psi(x,z) - grad_psi(y,z)| / |x - y|;
// passes iff <= L * (1 + 1e-9).  Coincident pairs are skipped; if every pair
// degenerates -> DiagnosticError.
ValidatorReport check_lipschitz(const Problem& problem, std::size_t n_pairs, double radius,
                                RngStream& stream);

// Max over sampled triples of <x-y, -grad_psi(x,z) + grad_psi(y,z)> + K1|x-y|^2 - K2;
// passes iff the excess stays <= 1e-9 * (1 + |x-y|^2) for every sample.
ValidatorReport check_dissipativity(const Problem& problem, std::size_t n_pairs, double radius,
                                    RngStream& stream);

// Monte Carlo estimate of E exp{gamma |grad_psi(x, zeta)|^2} at each grid
// point; passes iff every estimate is finite, below `cap`, and no summand was
// clipped.  gamma = 0 is allowed and gives exactly 1.
ValidatorReport check_subgaussian(const Problem& problem, double gamma, std::size_t n_samples,
                                  std::span<const std::vector<double>> grid, RngStream& stream,
                                  double cap = 1e6);

}  // namespace sgld
