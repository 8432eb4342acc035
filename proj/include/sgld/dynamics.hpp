#pragma once

// The two simulated processes: the SGLD chain
//     w_{k+1} = w_k - eta * grad_psi(w_k, zeta_{k+1}) + sqrt(eta delta) * xi_{k+1}
// and the Euler-Maruyama discretization of its approximating SDE
//     dX_t = -grad_P(X_t) dt + Q(X_t) dB_t,   Q(x) = (eta Sigma(x) + delta I)^{1/2}.
// Plus the symmetric-PSD matrix square root that defines Q.

#include <cstdint>
#include <span>
#include <vector>

#include "sgld/linalg.hpp"
#include "sgld/problems.hpp"
#include "sgld/rng.hpp"

namespace sgld {

// Chain states with |w| beyond this radius abort the replication.
inline constexpr double kDivergenceRadius = 1e12;

struct ChainConfig {
    double eta = 0.0;                   // step size, > 0 (0 allowed: frozen chain)
    double delta = 1.0;                 // inverse temperature, >= 0
    std::size_t m = 1;                  // recorded length
    std::size_t burn_in = 0;            // discarded steps before recording
    std::uint64_t seed = 0;             // used when no explicit stream is given
    std::vector<double> initial_state;  // w_0 before burn-in; must match problem dim
    bool keep_noise_log = false;        // record (zeta, xi) pairs for audits
};

// Recorded window w_0..w_{m-1} plus the state w_m reached by the step out of
// w_{m-1} (the remainder term R1 needs f(w_m)).  When keep_noise_log is set,
// entry k of the log holds the (zeta_{k+1}, xi_{k+1}) pair that drove
// w_k -> w_{k+1}; replaying sgld_step over the log reproduces states
// bit-for-bit.
struct Trajectory {
    int dim = 0;
    int zeta_dim = 0;
    std::size_t m = 0;
    std::vector<double> states;       // m x dim, row-major
    std::vector<double> final_state;  // w_m
    bool has_noise_log = false;
    std::vector<double> zetas;        // m x zeta_dim when logged
    std::vector<double> xis;          // m x dim when logged

    std::span<const double> state(std::size_t k) const {
        return {states.data() + k * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
    }
    std::span<const double> zeta(std::size_t k) const {
        return {zetas.data() + k * static_cast<std::size_t>(zeta_dim),
                static_cast<std::size_t>(zeta_dim)};
    }
    std::span<const double> xi(std::size_t k) const {
        return {xis.data() + k * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
    }
};

struct SdePath {
    int dim = 0;
    double dt = 0.0;
    double horizon = 0.0;             // requested T; the grid ends at ceil(T/dt)*dt
    std::vector<double> times;        // length ceil(T/dt) + 1
    std::vector<double> states;       // times.size() x dim, row-major
};

// One SGLD update.  Exact arithmetic of the recursion, no clipping; a
// non-finite gradient raises ChainDivergenceError (step index 0 -- callers
// running a loop rethrow with their own index).
void sgld_step(const Problem& problem, std::span<const double> w, std::span<const double> zeta,
               std::span<const double> xi, double eta, double delta, std::span<double> out);
std::vector<double> sgld_step(const Problem& problem, std::span<const double> w,
                              std::span<const double> zeta, std::span<const double> xi, double eta,
                              double delta);

// Runs burn_in + m steps, recording the last m states.  Deterministic given
// the stream (or config.seed for the seed-only overload).  Divergence
// (|w| > 1e12, which also catches NaN states) raises ChainDivergenceError
// with the global step index.
Trajectory run_chain(const Problem& problem, const ChainConfig& config, RngStream& stream);
Trajectory run_chain(const Problem& problem, const ChainConfig& config);

// Symmetric PSD square root via eigendecomposition: eigenvalues in
// [-1e-10 * ||A||, 0) are clipped to 0, more negative ones raise NumericError,
// as does asymmetry beyond 1e-10 * max(1, ||A||).
Matrix psd_sqrt(const Matrix& a);

// One Euler-Maruyama step: x' = x - grad_P(x) dt + psd_sqrt(eta Sigma(x) + delta I) sqrt(dt) xi.
void em_step(const Problem& problem, std::span<const double> x, double dt,
             std::span<const double> xi, double eta, double delta, std::span<double> out);
std::vector<double> em_step(const Problem& problem, std::span<const double> x, double dt,
                            std::span<const double> xi, double eta, double delta);

// Euler-Maruyama path on the uniform grid {0, dt, ..., n dt}, n = ceil(T/dt),
// consuming one Gaussian stream.
SdePath sde_path(const Problem& problem, std::span<const double> x0, double horizon, double dt,
                 double eta, double delta, RngStream& stream);
SdePath sde_path(const Problem& problem, std::span<const double> x0, double horizon, double dt,
                 double eta, double delta, std::uint64_t seed);

}  // namespace sgld
