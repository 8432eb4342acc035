#include "sgld/dynamics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "sgld/errors.hpp"

namespace sgld {

namespace {

#if defined(__GNUC__)
#define SGLD_NOINLINE __attribute__((noinline))
#else
#define SGLD_NOINLINE
#endif

// Single update kernel shared by sgld_step and run_chain.  Kept out of line so
// both call the identical machine code and replaying a noise log reproduces
// states bit-for-bit (inlining could otherwise contract the arithmetic
// differently at the two sites).
SGLD_NOINLINE void sgld_update(const Problem& problem, std::span<const double> w,
                               std::span<const double> zeta, std::span<const double> xi,
                               double eta, double noise_scale, std::span<double> grad,
                               std::span<double> out) {
    problem.grad_psi(w, zeta, grad);
    double probe = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double gi = grad[i];
        probe += gi;
        out[i] = w[i] - eta * gi + noise_scale * xi[i];
    }
    if (!std::isfinite(probe))
        throw ChainDivergenceError(0, {w.begin(), w.end()}, "non-finite stochastic gradient");
}

// Euler-Maruyama kernel shared by em_step and sde_path; q_xi receives Q xi.
SGLD_NOINLINE void em_update(const Problem& problem, std::span<const double> x, double dt,
                             double sqrt_dt, const Matrix& q, std::span<const double> xi,
                             std::span<double> grad, std::span<double> q_xi,
                             std::span<double> out) {
    problem.grad_p(x, grad);
    q.multiply(xi, q_xi);
    double probe = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double gi = grad[i];
        probe += gi;
        out[i] = x[i] - gi * dt + sqrt_dt * q_xi[i];
    }
    if (!std::isfinite(probe))
        throw ChainDivergenceError(0, {x.begin(), x.end()}, "non-finite drift gradient");
}

void require_dim(const Problem& problem, std::span<const double> w, const char* who) {
    if (static_cast<int>(w.size()) != problem.dim())
        throw ConfigError(std::string(who) + ": state dimension " + std::to_string(w.size()) +
                          " does not match problem dimension " + std::to_string(problem.dim()));
}

// Diffusion matrix square root Q(x) = (eta Sigma(x) + delta I)^{1/2}.
Matrix diffusion_sqrt(const Problem& problem, std::span<const double> x, double eta,
                      double delta) {
    Matrix a = problem.sigma(x);
    for (auto& v : a.data()) v *= eta;
    for (int i = 0; i < a.rows(); ++i) a(i, i) += delta;
    return psd_sqrt(a);
}

}  // namespace

void sgld_step(const Problem& problem, std::span<const double> w, std::span<const double> zeta,
               std::span<const double> xi, double eta, double delta, std::span<double> out) {
    require_dim(problem, w, "sgld_step");
    require_dim(problem, xi, "sgld_step");
    require_dim(problem, out, "sgld_step");
    if (static_cast<int>(zeta.size()) != problem.zeta_dim())
        throw ConfigError("sgld_step: zeta dimension mismatch");
    if (!(eta >= 0.0) || !(delta >= 0.0))
        throw ConfigError("sgld_step: eta and delta must be >= 0");
    std::vector<double> grad(problem.dim());
    sgld_update(problem, w, zeta, xi, eta, std::sqrt(eta * delta), grad, out);
}

std::vector<double> sgld_step(const Problem& problem, std::span<const double> w,
                              std::span<const double> zeta, std::span<const double> xi, double eta,
                              double delta) {
    std::vector<double> out(problem.dim());
    sgld_step(problem, w, zeta, xi, eta, delta, out);
    return out;
}

Trajectory run_chain(const Problem& problem, const ChainConfig& config, RngStream& stream) {
    if (!(config.eta >= 0.0)) throw ConfigError("run_chain: eta must be >= 0");
    if (!(config.delta >= 0.0)) throw ConfigError("run_chain: delta must be >= 0");
    if (config.m < 1) throw ConfigError("run_chain: m must be >= 1");
    const int d = problem.dim();
    const int zd = problem.zeta_dim();
    const std::size_t dd = static_cast<std::size_t>(d);
    const std::size_t zdd = static_cast<std::size_t>(zd);

    std::vector<double> w(dd, 0.0);
    if (!config.initial_state.empty()) {
        require_dim(problem, config.initial_state, "run_chain");
        w = config.initial_state;
    }

    Trajectory traj;
    traj.dim = d;
    traj.zeta_dim = zd;
    traj.m = config.m;
    traj.states.resize(config.m * dd);
    if (config.keep_noise_log) {
        traj.has_noise_log = true;
        traj.zetas.resize(config.m * zdd);
        traj.xis.resize(config.m * dd);
    }

    const double noise_scale = std::sqrt(config.eta * config.delta);
    constexpr double kRadius2 = kDivergenceRadius * kDivergenceRadius;
    std::vector<double> zeta(zdd), xi(dd), grad(dd), next(dd);
    const std::size_t total = config.burn_in + config.m;
    for (std::size_t step = 0; step < total; ++step) {
        double n2 = 0.0;
        for (double v : w) n2 += v * v;
        if (!(n2 <= kRadius2))  // negated compare also catches NaN states
            throw ChainDivergenceError(step, w, "chain state left the divergence radius");
        const bool recording = step >= config.burn_in;
        const std::size_t k = step - config.burn_in;
        if (recording) std::copy(w.begin(), w.end(), traj.states.begin() + k * dd);
        problem.sample_zeta(stream, zeta);
        stream.fill_normal(xi);
        if (recording && config.keep_noise_log) {
            std::copy(zeta.begin(), zeta.end(), traj.zetas.begin() + k * zdd);
            std::copy(xi.begin(), xi.end(), traj.xis.begin() + k * dd);
        }
        try {
            sgld_update(problem, w, zeta, xi, config.eta, noise_scale, grad, next);
        } catch (const ChainDivergenceError& e) {
            throw ChainDivergenceError(step, e.state, "non-finite stochastic gradient");
        }
        std::swap(w, next);
    }
    double n2 = 0.0;
    for (double v : w) n2 += v * v;
    if (!(n2 <= kRadius2))
        throw ChainDivergenceError(total, w, "chain state left the divergence radius");
    traj.final_state = std::move(w);
    return traj;
}

Trajectory run_chain(const Problem& problem, const ChainConfig& config) {
    RngStream stream = derive_stream(config.seed, 0, "chain");
    return run_chain(problem, config, stream);
}

Matrix psd_sqrt(const Matrix& a) {
    if (a.rows() != a.cols() || a.rows() < 1)
        throw NumericError("psd_sqrt: square matrix required");
    const int d = a.rows();
    const double fro = frobenius_norm(a);
    if (max_asymmetry(a) > 1e-10 * std::max(1.0, fro))
        throw NumericError("psd_sqrt: matrix is not symmetric within tolerance");
    const double eig_floor = -1e-10 * fro;
    if (d == 1) {
        const double v = a(0, 0);
        if (v < eig_floor)
            throw NumericError("psd_sqrt: negative eigenvalue " + std::to_string(v) +
                               " beyond clipping tolerance");
        Matrix out(1, 1);
        out(0, 0) = std::sqrt(std::max(v, 0.0));
        return out;
    }
    Eigen::MatrixXd sym(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) sym(i, j) = 0.5 * (a(i, j) + a(j, i));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    if (es.info() != Eigen::Success) throw NumericError("psd_sqrt: eigendecomposition failed");
    Eigen::VectorXd lam = es.eigenvalues();
    for (int i = 0; i < d; ++i) {
        if (lam[i] < eig_floor)
            throw NumericError("psd_sqrt: negative eigenvalue " + std::to_string(lam[i]) +
                               " beyond clipping tolerance");
        lam[i] = std::sqrt(std::max(lam[i], 0.0));
    }
    Eigen::MatrixXd root = es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
    Matrix out(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) out(i, j) = 0.5 * (root(i, j) + root(j, i));
    return out;
}

void em_step(const Problem& problem, std::span<const double> x, double dt,
             std::span<const double> xi, double eta, double delta, std::span<double> out) {
    require_dim(problem, x, "em_step");
    require_dim(problem, xi, "em_step");
    require_dim(problem, out, "em_step");
    if (!(dt > 0.0)) throw ConfigError("em_step: dt must be > 0");
    if (!(eta >= 0.0) || !(delta >= 0.0)) throw ConfigError("em_step: eta and delta must be >= 0");
    const Matrix q = diffusion_sqrt(problem, x, eta, delta);
    std::vector<double> grad(problem.dim()), q_xi(problem.dim());
    em_update(problem, x, dt, std::sqrt(dt), q, xi, grad, q_xi, out);
}

std::vector<double> em_step(const Problem& problem, std::span<const double> x, double dt,
                            std::span<const double> xi, double eta, double delta) {
    std::vector<double> out(problem.dim());
    em_step(problem, x, dt, xi, eta, delta, out);
    return out;
}

SdePath sde_path(const Problem& problem, std::span<const double> x0, double horizon, double dt,
                 double eta, double delta, RngStream& stream) {
    require_dim(problem, x0, "sde_path");
    if (!(dt > 0.0)) throw ConfigError("sde_path: dt must be > 0");
    if (!(horizon >= 0.0)) throw ConfigError("sde_path: horizon must be >= 0");
    if (!(eta >= 0.0) || !(delta >= 0.0))
        throw ConfigError("sde_path: eta and delta must be >= 0");
    const int d = problem.dim();
    const std::size_t dd = static_cast<std::size_t>(d);

    // Number of steps: ceil(T/dt), except that a quotient within 1e-9 of an
    // integer snaps to it (1.0/0.01 must give 100 steps, not 101).
    const double q = horizon / dt;
    const double r = std::nearbyint(q);
    const std::size_t n = (std::abs(q - r) <= 1e-9 * std::max(1.0, q))
                              ? static_cast<std::size_t>(r)
                              : static_cast<std::size_t>(std::ceil(q));

    SdePath path;
    path.dim = d;
    path.dt = dt;
    path.horizon = horizon;
    path.times.resize(n + 1);
    path.states.resize((n + 1) * dd);
    for (std::size_t i = 0; i <= n; ++i) path.times[i] = dt * static_cast<double>(i);

    std::vector<double> x(x0.begin(), x0.end());
    std::copy(x.begin(), x.end(), path.states.begin());

    const bool constant_sigma = problem.sigma_is_constant();
    Matrix q_mat;
    if (constant_sigma) q_mat = diffusion_sqrt(problem, x, eta, delta);

    const double sqrt_dt = std::sqrt(dt);
    constexpr double kRadius2 = kDivergenceRadius * kDivergenceRadius;
    std::vector<double> xi(dd), grad(dd), q_xi(dd), next(dd);
    for (std::size_t step = 0; step < n; ++step) {
        stream.fill_normal(xi);
        if (!constant_sigma) q_mat = diffusion_sqrt(problem, x, eta, delta);
        try {
            em_update(problem, x, dt, sqrt_dt, q_mat, xi, grad, q_xi, next);
        } catch (const ChainDivergenceError& e) {
            throw ChainDivergenceError(step, e.state, "non-finite drift gradient");
        }
        double n2 = 0.0;
        for (double v : next) n2 += v * v;
        if (!(n2 <= kRadius2))
            throw ChainDivergenceError(step + 1, next, "diffusion path left the divergence radius");
        std::swap(x, next);
        std::copy(x.begin(), x.end(), path.states.begin() + (step + 1) * dd);
    }
    return path;
}

SdePath sde_path(const Problem& problem, std::span<const double> x0, double horizon, double dt,
                 double eta, double delta, std::uint64_t seed) {
    RngStream stream = derive_stream(seed, 0, "sde-path");
    return sde_path(problem, x0, horizon, dt, eta, delta, stream);
}

}  // namespace sgld
