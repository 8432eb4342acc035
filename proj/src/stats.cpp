#include "sgld/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sgld/errors.hpp"

namespace sgld {

namespace {

// 8-point Gauss-Legendre rule on [0, 1] (nodes (x_i + 1)/2, weights v_i / 2):
// exact for polynomials up to degree 15, so the R3 double integral is exact
// for any field whose Hessian is polynomial of degree <= 13 along segments.
constexpr int kGlPoints = 8;
constexpr double kGlNode[kGlPoints] = {
    (1.0 - 0.9602898564975363) / 2.0, (1.0 - 0.7966664774136267) / 2.0,
    (1.0 - 0.5255324099163290) / 2.0, (1.0 - 0.1834346424956498) / 2.0,
    (1.0 + 0.1834346424956498) / 2.0, (1.0 + 0.5255324099163290) / 2.0,
    (1.0 + 0.7966664774136267) / 2.0, (1.0 + 0.9602898564975363) / 2.0};
constexpr double kGlWeight[kGlPoints] = {
    0.1012285362903763 / 2.0, 0.2223810344533745 / 2.0, 0.3137066458778873 / 2.0,
    0.3626837833783620 / 2.0, 0.3626837833783620 / 2.0, 0.3137066458778873 / 2.0,
    0.2223810344533745 / 2.0, 0.1012285362903763 / 2.0};

double quad_form(const Matrix& a, std::span<const double> v) {
    double s = 0.0;
    for (int i = 0; i < a.rows(); ++i) {
        double row = 0.0;
        for (int j = 0; j < a.cols(); ++j) row += a(i, j) * v[j];
        s += v[i] * row;
    }
    return s;
}

double trace(const Matrix& a) {
    double s = 0.0;
    for (int i = 0; i < a.rows(); ++i) s += a(i, i);
    return s;
}

void require_noise_log(const Trajectory& traj, const char* who) {
    if (!traj.has_noise_log)
        throw ConfigError(std::string(who) + ": trajectory was recorded without a noise log "
                          "(set ChainConfig::keep_noise_log)");
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_tail(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

double pi_hat(const Trajectory& traj, const TestFunction& h) {
    if (traj.m == 0) throw ConfigError("pi_hat: empty trajectory");
    if (h.dim() != traj.dim) throw ConfigError("pi_hat: test-function dimension mismatch");
    double s = 0.0;
    for (std::size_t k = 0; k < traj.m; ++k) s += h(traj.state(k));
    return s / static_cast<double>(traj.m);
}

double y_eta(const Trajectory& traj, const SteinField& field) {
    if (traj.m == 0) throw ConfigError("y_eta: empty trajectory");
    if (field.dim() != traj.dim) throw ConfigError("y_eta: field dimension mismatch");
    std::vector<double> g(static_cast<std::size_t>(traj.dim));
    double s = 0.0;
    for (std::size_t k = 0; k < traj.m; ++k) {
        field.grad(traj.state(k), g);
        s += dot(g, g);
    }
    return s / static_cast<double>(traj.m);
}

double w_eta(const Trajectory& traj, const TestFunction& h, const SteinField& field, double pi_h,
             double eta, double delta) {
    if (!(eta > 0.0) || !(delta > 0.0)) throw ConfigError("w_eta: eta and delta must be > 0");
    const double y = y_eta(traj, field);
    if (y <= 0.0)
        throw NumericError("w_eta: normalizer Y is zero (constant Stein field along the window)");
    const double m = static_cast<double>(traj.m);
    return std::sqrt(m * eta) * (pi_hat(traj, h) - pi_h) / std::sqrt(delta * y);
}

double h_eta(const Trajectory& traj, const SteinField& field) {
    require_noise_log(traj, "h_eta");
    if (field.dim() != traj.dim) throw ConfigError("h_eta: field dimension mismatch");
    std::vector<double> g(static_cast<std::size_t>(traj.dim));
    double s = 0.0;
    for (std::size_t k = 0; k < traj.m; ++k) {
        field.grad(traj.state(k), g);
        s += dot(g, traj.xi(k));
    }
    return -s / std::sqrt(static_cast<double>(traj.m));
}

RComponents r_components(const Trajectory& traj, const SteinField& field, const Problem& problem,
                         double eta, double delta) {
    require_noise_log(traj, "r_components");
    if (!(eta > 0.0) || !(delta > 0.0))
        throw ConfigError("r_components: eta and delta must be > 0");
    if (!field.has_hess())
        throw NumericError("r_components: the component form needs a field Hessian; "
                           "use r_residual for Hessian-free backends");
    if (field.dim() != traj.dim || problem.dim() != traj.dim)
        throw ConfigError("r_components: dimension mismatch");

    const int d = traj.dim;
    const std::size_t dd = static_cast<std::size_t>(d);
    const std::size_t m = traj.m;
    const double md = static_cast<double>(m);
    const double smed = std::sqrt(md * eta * delta);

    const bool const_sigma = problem.sigma_is_constant();
    Matrix sigma_cached;
    if (const_sigma) sigma_cached = problem.sigma(traj.state(0));

    RComponents r;
    r.r1 = (field.f(traj.state(0)) - field.f(traj.final_state)) / smed;

    std::vector<double> gf(dd), gp(dd), gpsi(dd), delta_w(dd), probe(dd);
    Matrix h0, ht;
    double acc2 = 0.0, acc3 = 0.0, acc4 = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        const auto w = traj.state(k);
        const auto w_next = k + 1 < m ? traj.state(k + 1)
                                      : std::span<const double>{traj.final_state};
        for (std::size_t i = 0; i < dd; ++i) delta_w[i] = w_next[i] - w[i];

        field.grad(w, gf);
        problem.grad_p(w, gp);
        problem.grad_psi(w, traj.zeta(k), gpsi);
        for (std::size_t i = 0; i < dd; ++i) acc2 += gf[i] * (gp[i] - gpsi[i]);

        field.hess(w, h0);
        const Matrix& sigma = const_sigma ? sigma_cached : problem.sigma(w);
        acc4 += quad_form(h0, delta_w) - eta * eta * hs_inner(h0, sigma) -
                eta * delta * trace(h0);

        // J_k = int_0^1 int_0^1 s <hess f(w + s s' Dw) - hess f(w), Dw Dw^T> ds' ds
        //     = int_0^1 (1 - t) <hess f(w + t Dw) - hess f(w), Dw Dw^T> dt.
        const double q0 = quad_form(h0, delta_w);
        for (int a = 0; a < kGlPoints; ++a) {
            const double s = kGlNode[a];
            for (int b = 0; b < kGlPoints; ++b) {
                const double t = s * kGlNode[b];
                for (std::size_t i = 0; i < dd; ++i) probe[i] = w[i] + t * delta_w[i];
                field.hess(probe, ht);
                acc3 += kGlWeight[a] * kGlWeight[b] * s * (quad_form(ht, delta_w) - q0);
            }
        }
    }
    r.r2 = std::sqrt(eta / (md * delta)) * acc2;
    r.r3 = acc3 / smed;
    r.r4 = acc4 / (2.0 * smed);
    return r;
}

double r_residual(const Trajectory& traj, const TestFunction& h, const SteinField& field,
                  double pi_h, double eta, double delta) {
    if (!(eta > 0.0) || !(delta > 0.0))
        throw ConfigError("r_residual: eta and delta must be > 0");
    const double md = static_cast<double>(traj.m);
    const double lhs = std::sqrt(md * eta / delta) * (pi_hat(traj, h) - pi_h);
    return lhs - h_eta(traj, field);
}

TailTable tail_ratio_table(std::span<const double> w_samples, std::span<const double> x_grid) {
    if (w_samples.empty()) throw ConfigError("tail_ratio_table: no samples");
    if (x_grid.empty()) throw ConfigError("tail_ratio_table: empty x grid");
    std::vector<double> sorted(w_samples.begin(), w_samples.end());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());

    TailTable table;
    table.n_samples = sorted.size();
    auto push_rows = [&](int direction) {
        for (double x : x_grid) {
            TailRow row;
            row.x = x;
            row.direction = direction;
            std::size_t count;
            if (direction > 0) {
                // #{w > x}, strict
                count = sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), x);
            } else {
                // #{-w > x} = #{w < -x}, strict
                count = std::lower_bound(sorted.begin(), sorted.end(), -x) - sorted.begin();
            }
            row.p_hat = static_cast<double>(count) / n;
            row.normal_tail = normal_tail(x);
            row.ratio = row.p_hat / row.normal_tail;
            row.std_error = std::sqrt(row.p_hat * (1.0 - row.p_hat) / n) / row.normal_tail;
            table.rows.push_back(row);
        }
    };
    push_rows(+1);
    push_rows(-1);
    return table;
}

double ks_distance(std::span<const double> samples) {
    if (samples.empty()) throw ConfigError("ks_distance: no samples");
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const double cdf = normal_cdf(sorted[i]);
        worst = std::max(worst, std::abs(static_cast<double>(i + 1) / n - cdf));
        worst = std::max(worst, std::abs(static_cast<double>(i) / n - cdf));
    }
    return worst;
}

double w1_sorted(std::span<const double> samples_a, std::span<const double> samples_b) {
    if (samples_a.empty() || samples_b.empty()) throw ConfigError("w1_sorted: empty sample set");
    std::vector<double> a(samples_a.begin(), samples_a.end());
    std::vector<double> b(samples_b.begin(), samples_b.end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    // Unequal sizes: reduce the larger set to the smaller one's size by
    // midpoint-quantile resampling (deterministic, order-preserving).
    auto resample = [](const std::vector<double>& big, std::size_t n) {
        std::vector<double> out(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double q = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
            std::size_t j = static_cast<std::size_t>(q * static_cast<double>(big.size()));
            if (j >= big.size()) j = big.size() - 1;
            out[i] = big[j];
        }
        return out;
    };
    if (a.size() > b.size()) a = resample(a, b.size());
    if (b.size() > a.size()) b = resample(b, a.size());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s / static_cast<double>(a.size());
}

std::array<ExpMomentPoint, 5> exp_moment_curve(const Trajectory& traj, double gamma) {
    if (traj.m == 0) throw ConfigError("exp_moment_curve: empty trajectory");
    if (gamma < 0.0) throw ConfigError("exp_moment_curve: gamma must be >= 0");
    const std::size_t m = traj.m;
    const std::size_t ks[5] = {0, m / 4, m / 2, 3 * m / 4, m - 1};
    std::array<ExpMomentPoint, 5> out{};
    for (int i = 0; i < 5; ++i) {
        const auto w = traj.state(ks[i]);
        out[i].k = ks[i];
        out[i].value = std::exp(gamma * dot(w, w));  // overflows to +inf naturally
    }
    return out;
}

ConcentrationReport variance_concentration_check(std::span<const double> y_values,
                                                 std::span<const double> x_grid) {
    if (y_values.size() < 1000)
        throw ConfigError("variance_concentration_check: needs >= 1e3 replications, got " +
                          std::to_string(y_values.size()));
    if (x_grid.empty()) throw ConfigError("variance_concentration_check: empty x grid");
    ConcentrationReport rep;
    rep.x_grid.assign(x_grid.begin(), x_grid.end());
    double mean = 0.0;
    for (double y : y_values) mean += y;
    mean /= static_cast<double>(y_values.size());
    rep.mean_y = mean;
    for (double x : x_grid) {
        std::size_t count = 0;
        for (double y : y_values)
            if (std::abs(y - mean) >= x) ++count;
        rep.exceedance.push_back(static_cast<double>(count) /
                                 static_cast<double>(y_values.size()));
    }
    // Exceedance must fall as the threshold grows; check along ascending x.
    std::vector<std::size_t> order(x_grid.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t i, std::size_t j) { return x_grid[i] < x_grid[j]; });
    for (std::size_t i = 1; i < order.size(); ++i)
        if (rep.exceedance[order[i]] > rep.exceedance[order[i - 1]])
            rep.monotone_nonincreasing = false;
    return rep;
}

ConcentrationReport variance_concentration_check(std::span<const Trajectory> trajectories,
                                                 const SteinField& field,
                                                 std::span<const double> x_grid) {
    std::vector<double> ys;
    ys.reserve(trajectories.size());
    for (const auto& traj : trajectories) ys.push_back(y_eta(traj, field));
    return variance_concentration_check(ys, x_grid);
}

}  // namespace sgld
