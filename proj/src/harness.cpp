#include "sgld/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

#include "sgld/dynamics.hpp"
#include "sgld/errors.hpp"
#include "sgld/rng.hpp"
#include "sgld/stein.hpp"

namespace sgld {

namespace {

using nlohmann::json;

constexpr const char* kExperiments[] = {"tail-ratio",          "berry-esseen",
                                        "w1-scan",             "audit-decomposition",
                                        "audit-assumptions",   "stein-check"};

bool known_experiment(const std::string& name) {
    for (const char* e : kExperiments)
        if (name == e) return true;
    return false;
}

double now_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

// Runs fn(0..n-1) on `workers` threads, collecting results by index so the
// output is identical for any worker count.  fn must be thread-safe; the
// first exception aborts the pool and is rethrown on the caller thread.
template <typename T, typename Fn>
std::vector<T> parallel_map(std::size_t n, int workers, Fn&& fn) {
    std::vector<T> out(n);
    if (n == 0) return out;
    const int nw = std::max(1, std::min<int>(workers, 256));
    if (nw == 1 || n == 1) {
        for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr err;
    auto body = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
            if (i >= n) return;
            try {
                out[i] = fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!err) err = std::current_exception();
                next.store(n, std::memory_order_relaxed);  // drain remaining work
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(nw));
    for (int t = 0; t < nw; ++t) pool.emplace_back(body);
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
    return out;
}

// Least-squares slope of value against k over the checkpoint curve.
double ls_slope(const std::array<ExpMomentPoint, 5>& pts) {
    double mk = 0.0, mv = 0.0;
    for (const auto& p : pts) {
        mk += static_cast<double>(p.k);
        mv += p.value;
    }
    mk /= 5.0;
    mv /= 5.0;
    double num = 0.0, den = 0.0;
    for (const auto& p : pts) {
        const double dk = static_cast<double>(p.k) - mk;
        num += dk * (p.value - mv);
        den += dk * dk;
    }
    return den > 0.0 ? num / den : 0.0;
}

std::string hash_hex(const std::string& text) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(detail::fnv1a64(text)));
    return buf;
}

// One resolved (m, eta) experiment point.
struct PointPlan {
    std::size_t index = 0;
    std::size_t m = 0;
    double eta = 0.0;
    std::size_t burn_in = 0;
    std::uint64_t seed = 0;  // master for this point's replication streams
    RegimeInfo regime;
};

std::vector<PointPlan> plan_points(const ExperimentConfig& config) {
    if (config.m_list.empty())
        throw ConfigError("experiment '" + config.experiment + "' needs a nonempty m list");
    std::vector<PointPlan> points;
    for (std::size_t i = 0; i < config.m_list.size(); ++i) {
        PointPlan p;
        p.index = i;
        p.m = config.m_list[i];
        if (p.m < 1) throw ConfigError("m must be >= 1");
        p.eta = config.eta_rule.resolve(p.m);
        p.burn_in = config.burn_in.resolve(p.eta);
        p.seed = derive_stream(config.seed, i, "point").key();
        p.regime = theorem_regime(static_cast<double>(p.m), p.eta, config.delta);
        points.push_back(p);
    }
    return points;
}

json point_manifest(const PointPlan& p, const ExperimentConfig& config) {
    json j;
    j["index"] = p.index;
    j["m"] = p.m;
    j["eta"] = p.eta;
    j["delta"] = config.delta;
    j["burn_in"] = p.burn_in;
    j["seed"] = p.seed;
    j["regime"] = p.regime.tag;
    j["boundary_m"] = p.regime.boundary_m;
    j["validity_scale"] = p.regime.validity_scale;
    j["validity_note"] = p.regime.validity_note;
    // Theorem hypotheses are asymptotic (m = o(eta^{-2}), m eta -> infinity);
    // report the two products and warn -- never abort -- when a point clearly
    // violates the direction of the limit.
    const double m_eta = static_cast<double>(p.m) * p.eta;
    const double m_eta_sq = m_eta * p.eta;
    j["m_eta"] = m_eta;
    j["m_eta_sq"] = m_eta_sq;
    json warnings = json::array();
    if (m_eta <= 1.0)
        warnings.push_back("m*eta <= 1: the martingale CLT regime wants m*eta -> infinity");
    if (m_eta_sq >= 1.0)
        warnings.push_back("m*eta^2 >= 1: the hypotheses want m = o(eta^{-2})");
    j["hypothesis_warnings"] = warnings;
    return j;
}

// Stein field plus the pi(h) it is centered on; `kind` lands in the manifest.
struct FieldBundle {
    SteinField field;
    double pi_h = 0.0;
    std::string kind;
};

FieldBundle make_field(const std::shared_ptr<const Problem>& problem, const TestFunction& h,
                       double eta, double delta, const json& extra, std::uint64_t seed,
                       bool need_hessian) {
    const auto a = problem->ou_coefficient(eta, delta);
    if (a && h.kind() != TestFunction::Kind::custom) {
        SteinField field = analytic_stein_ou(h, *a);
        const double pi_h = field.pi_h();
        return FieldBundle{std::move(field), pi_h, "analytic"};
    }
    if (need_hessian)
        throw ConfigError(
            "the component-form audit needs the analytic Stein field (problem with an OU "
            "reduction and linear/quadratic h); set extra.residual_only=true for the "
            "Hessian-free residual audit");
    // Monte Carlo grid interpolant: estimate pi(h) from one long diffusion
    // run, then tabulate f and grad f on the configured axes.
    const double dt = extra.value("dt", 0.01);
    const std::size_t n_paths = extra.value("n_paths", std::size_t{1000});
    const double horizon =
        extra.value("horizon", default_stein_horizon(problem->constants().K1));
    GridSpec spec;
    if (extra.contains("grid")) {
        for (const auto& jax : extra.at("grid"))
            spec.axes.push_back({jax.at("lo").get<double>(), jax.at("hi").get<double>(),
                                 jax.at("n").get<int>()});
    } else {
        for (int k = 0; k < problem->dim(); ++k) spec.axes.push_back({-8.0, 8.0, 129});
    }
    RngStream pi_stream = derive_stream(seed, 0, "pi-h");
    const PiHatEstimate pi = estimate_pi_h(*problem, h, eta, delta, dt, pi_stream);
    return FieldBundle{grid_field(problem, h, spec, n_paths, horizon, dt, pi.value, eta, delta,
                                  derive_stream(seed, 0, "grid")),
                       pi.value, "grid"};
}

std::string require_no_commas(std::string cell) {
    if (cell.find(',') != std::string::npos || cell.find('\n') != std::string::npos)
        throw ConfigError("CSV cell would contain a separator: '" + cell + "'");
    return cell;
}

void push_row(CsvTable& table, std::vector<std::string> cells) {
    if (cells.size() != table.columns.size())
        throw ConfigError("CSV row width does not match the declared columns");
    for (auto& c : cells) c = require_no_commas(std::move(c));
    table.rows.push_back(std::move(cells));
}

// ------------------------- per-experiment runners ---------------------------

struct WSample {
    double w = 0.0;
    bool diverged = false;
};

// R replications of run_chain -> W statistic at one experiment point.
std::vector<WSample> collect_w_samples(const Problem& problem, const TestFunction& h,
                                       const FieldBundle& bundle, const PointPlan& point,
                                       const ExperimentConfig& config) {
    const auto fn = [&](std::size_t i) {
        WSample s;
        RngStream stream = derive_stream(point.seed, i, "chain");
        ChainConfig cc;
        cc.eta = point.eta;
        cc.delta = config.delta;
        cc.m = point.m;
        cc.burn_in = point.burn_in;
        cc.initial_state.assign(static_cast<std::size_t>(problem.dim()), 0.0);
        try {
            const Trajectory traj = run_chain(problem, cc, stream);
            s.w = w_eta(traj, h, bundle.field, bundle.pi_h, point.eta, config.delta);
        } catch (const ChainDivergenceError&) {
            s.diverged = true;
        }
        return s;
    };
    return parallel_map<WSample>(config.replications, config.workers, fn);
}

std::size_t split_divergent(const std::vector<WSample>& samples, std::vector<double>& values) {
    std::size_t divergent = 0;
    for (const auto& s : samples) {
        if (s.diverged)
            ++divergent;
        else
            values.push_back(s.w);
    }
    return divergent;
}

void enforce_divergence_budget(std::size_t divergent, std::size_t total) {
    if (total > 0 && static_cast<double>(divergent) > 0.01 * static_cast<double>(total))
        throw NumericError("more than 1% of replications diverged (" +
                           std::to_string(divergent) + " of " + std::to_string(total) + ")");
}

CsvTable run_tail_ratio(const ExperimentConfig& config,
                        const std::shared_ptr<const Problem>& problem, const TestFunction& h,
                        json& manifest, std::vector<std::string>& failures) {
    if (config.x_grid.empty()) throw ConfigError("tail-ratio needs a nonempty x_grid");
    CsvTable table;
    table.schema = "sgld.tail-ratio.v1";
    table.columns = {"m",   "eta",   "delta",       "regime", "direction",
                     "x",   "p_hat", "normal_tail", "ratio",  "stderr"};
    json points = json::array();
    const std::optional<double> max_dev =
        config.checks.contains("max_abs_ratio_dev")
            ? std::optional<double>(config.checks.at("max_abs_ratio_dev").get<double>())
            : std::nullopt;
    for (const PointPlan& point : plan_points(config)) {
        const double t0 = now_seconds();
        const FieldBundle bundle =
            make_field(problem, h, point.eta, config.delta, config.extra, point.seed, false);
        std::vector<double> w;
        w.reserve(config.replications);
        const std::size_t divergent = split_divergent(
            collect_w_samples(*problem, h, bundle, point, config), w);
        enforce_divergence_budget(divergent, config.replications);
        TailTable tail = tail_ratio_table(w, config.x_grid);
        tail.regime = point.regime.tag;
        tail.validity_note = point.regime.validity_note;
        for (const TailRow& row : tail.rows) {
            push_row(table, {std::to_string(point.m), fmt_double(point.eta),
                             fmt_double(config.delta), point.regime.tag,
                             row.direction > 0 ? "+1" : "-1", fmt_double(row.x),
                             fmt_double(row.p_hat), fmt_double(row.normal_tail),
                             fmt_double(row.ratio), fmt_double(row.std_error)});
            if (max_dev && std::abs(row.ratio - 1.0) > *max_dev)
                failures.push_back("tail-ratio: |ratio-1| = " +
                                   fmt_double(std::abs(row.ratio - 1.0)) + " > " +
                                   fmt_double(*max_dev) + " at x=" + fmt_double(row.x) +
                                   " direction " + (row.direction > 0 ? "+1" : "-1") +
                                   " (m=" + std::to_string(point.m) + ")");
        }
        json jp = point_manifest(point, config);
        jp["replications"] = config.replications;
        jp["divergent"] = divergent;
        jp["field"] = bundle.kind;
        jp["pi_h"] = bundle.pi_h;
        jp["seconds"] = now_seconds() - t0;
        points.push_back(jp);
    }
    manifest["points"] = points;
    return table;
}

CsvTable run_berry_esseen(const ExperimentConfig& config,
                          const std::shared_ptr<const Problem>& problem, const TestFunction& h,
                          json& manifest, std::vector<std::string>& failures) {
    CsvTable table;
    table.schema = "sgld.berry-esseen.v1";
    table.columns = {"m", "eta", "delta", "regime", "n_samples", "ks_distance"};
    json points = json::array();
    std::vector<double> ks_by_point;
    std::vector<std::size_t> m_by_point;
    for (const PointPlan& point : plan_points(config)) {
        const double t0 = now_seconds();
        const FieldBundle bundle =
            make_field(problem, h, point.eta, config.delta, config.extra, point.seed, false);
        std::vector<double> w;
        w.reserve(config.replications);
        const std::size_t divergent = split_divergent(
            collect_w_samples(*problem, h, bundle, point, config), w);
        enforce_divergence_budget(divergent, config.replications);
        const double ks = ks_distance(w);
        ks_by_point.push_back(ks);
        m_by_point.push_back(point.m);
        push_row(table, {std::to_string(point.m), fmt_double(point.eta),
                         fmt_double(config.delta), point.regime.tag, std::to_string(w.size()),
                         fmt_double(ks)});
        json jp = point_manifest(point, config);
        jp["replications"] = config.replications;
        jp["divergent"] = divergent;
        jp["field"] = bundle.kind;
        jp["ks_distance"] = ks;
        jp["seconds"] = now_seconds() - t0;
        points.push_back(jp);
    }
    manifest["points"] = points;
    if (config.checks.value("strictly_decreasing", false)) {
        for (std::size_t i = 1; i < ks_by_point.size(); ++i)
            if (!(ks_by_point[i] < ks_by_point[i - 1]))
                failures.push_back("berry-esseen: ks(m=" + std::to_string(m_by_point[i]) +
                                   ") = " + fmt_double(ks_by_point[i]) +
                                   " is not below ks(m=" + std::to_string(m_by_point[i - 1]) +
                                   ") = " + fmt_double(ks_by_point[i - 1]));
    }
    if (config.checks.contains("ratio_lower_bound_factor") && ks_by_point.size() >= 2) {
        // Predicted scale D(m) ~ m^{-1/4} ln m: the first/last ratio must
        // reach at least `factor` times the predicted ratio.
        const double factor = config.checks.at("ratio_lower_bound_factor").get<double>();
        auto scale = [](double m) { return std::pow(m, -0.25) * std::log(m); };
        const double predicted = scale(static_cast<double>(m_by_point.front())) /
                                 scale(static_cast<double>(m_by_point.back()));
        const double observed = ks_by_point.front() / ks_by_point.back();
        manifest["ks_ratio_observed"] = observed;
        manifest["ks_ratio_bound"] = factor * predicted;
        if (!(observed >= factor * predicted))
            failures.push_back("berry-esseen: first/last ks ratio " + fmt_double(observed) +
                               " below the bound " + fmt_double(factor * predicted));
    }
    return table;
}

CsvTable run_w1_scan(const ExperimentConfig& config,
                     const std::shared_ptr<const Problem>& problem, json& manifest,
                     std::vector<std::string>& failures) {
    if (problem->dim() != 1)
        throw ConfigError("w1-scan compares sorted scalar samples; it needs a d=1 problem");
    if (!config.extra.contains("etas") || config.extra.at("etas").empty())
        throw ConfigError("w1-scan needs extra.etas, the list of step sizes to scan");
    const std::vector<double> etas = config.extra.at("etas").get<std::vector<double>>();

    CsvTable table;
    table.schema = "sgld.w1-scan.v1";
    table.columns = {"m",  "eta",       "delta", "regime",
                     "n_samples", "w1", "w1_theory", "stderr"};
    json points = json::array();
    struct PairSample {
        double chain = 0.0;
        double target = 0.0;
        bool diverged = false;
    };
    std::vector<double> w1_by_eta;
    for (std::size_t pi = 0; pi < etas.size(); ++pi) {
        const double t0 = now_seconds();
        const double eta = etas[pi];
        if (!(eta > 0.0)) throw ConfigError("w1-scan: every eta must be > 0");
        const auto v_chain = problem->chain_stationary_variance(eta, config.delta);
        const auto v_sde = problem->sde_stationary_variance(eta, config.delta);
        if (!v_chain || !v_sde)
            throw ConfigError("w1-scan needs closed-form chain and diffusion stationary "
                              "variances (gaussian_mean provides both)");
        const std::size_t burn = config.burn_in.resolve(eta);
        const std::uint64_t point_seed = derive_stream(config.seed, pi, "point").key();
        const double sd_target = std::sqrt(*v_sde);
        // One i.i.d. stationary draw per replication: a burn-in long past the
        // chain's relaxation time, then a single recorded state.  Time-series
        // thinning would be cheaper but injects autocorrelation bias of the
        // same order as the W1 gap being measured.
        const auto fn = [&](std::size_t i) {
            PairSample s;
            ChainConfig cc;
            cc.eta = eta;
            cc.delta = config.delta;
            cc.m = 1;
            cc.burn_in = burn;
            cc.initial_state = {0.0};
            RngStream stream = derive_stream(point_seed, i, "chain");
            try {
                const Trajectory traj = run_chain(*problem, cc, stream);
                s.chain = traj.state(0)[0];
            } catch (const ChainDivergenceError&) {
                s.diverged = true;
            }
            s.target = sd_target * derive_stream(point_seed, i, "pi").normal();
            return s;
        };
        const auto samples =
            parallel_map<PairSample>(config.replications, config.workers, fn);
        std::vector<double> a, b;
        a.reserve(samples.size());
        b.reserve(samples.size());
        std::size_t divergent = 0;
        for (const auto& s : samples) {
            if (s.diverged) {
                ++divergent;
                continue;
            }
            a.push_back(s.chain);
            b.push_back(s.target);
        }
        enforce_divergence_budget(divergent, config.replications);
        const double w1 = w1_sorted(a, b);
        const double theory =
            std::sqrt(2.0 / std::numbers::pi) * std::abs(std::sqrt(*v_chain) - std::sqrt(*v_sde));
        // Delta-method standard error: for two centered samples whose quantile
        // functions cross only at the median, the W1 statistic fluctuates like
        // mean|a| - mean|b|, so Var(W1) ~ (Var|a - mean_a| + Var|b - mean_b|)/n.
        auto abs_dev_var = [](const std::vector<double>& v) {
            double mean = 0.0;
            for (double x : v) mean += x;
            mean /= static_cast<double>(v.size());
            double s1 = 0.0, s2 = 0.0;
            for (double x : v) {
                const double ax = std::abs(x - mean);
                s1 += ax;
                s2 += ax * ax;
            }
            const double n = static_cast<double>(v.size());
            const double m1 = s1 / n;
            return std::max(0.0, s2 / n - m1 * m1);
        };
        const double se =
            std::sqrt((abs_dev_var(a) + abs_dev_var(b)) / static_cast<double>(a.size()));
        w1_by_eta.push_back(w1);

        const RegimeInfo regime = theorem_regime(1.0, eta, config.delta);
        push_row(table, {"1", fmt_double(eta), fmt_double(config.delta), regime.tag,
                         std::to_string(a.size()), fmt_double(w1), fmt_double(theory),
                         fmt_double(se)});
        if (config.checks.contains("within_se_factor")) {
            const double factor = config.checks.at("within_se_factor").get<double>();
            if (std::abs(w1 - theory) > factor * se)
                failures.push_back("w1-scan: |w1 - theory| = " + fmt_double(std::abs(w1 - theory)) +
                                   " > " + fmt_double(factor) + " * se = " +
                                   fmt_double(factor * se) + " at eta=" + fmt_double(eta));
        }
        json jp;
        jp["index"] = pi;
        jp["eta"] = eta;
        jp["delta"] = config.delta;
        jp["burn_in"] = burn;
        jp["seed"] = point_seed;
        jp["regime"] = regime.tag;
        jp["replications"] = config.replications;
        jp["divergent"] = divergent;
        jp["w1"] = w1;
        jp["w1_theory"] = theory;
        jp["stderr"] = se;
        jp["seconds"] = now_seconds() - t0;
        points.push_back(jp);
    }
    manifest["points"] = points;
    if (config.checks.value("monotone_in_eta", false)) {
        // W1(eta) grows with eta (the chain's variance excess over the
        // diffusion's grows); check along ascending eta.
        std::vector<std::size_t> order(etas.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(),
                  [&](std::size_t i, std::size_t j) { return etas[i] < etas[j]; });
        for (std::size_t i = 1; i < order.size(); ++i)
            if (!(w1_by_eta[order[i]] > w1_by_eta[order[i - 1]]))
                failures.push_back("w1-scan: w1 is not increasing from eta=" +
                                   fmt_double(etas[order[i - 1]]) + " to eta=" +
                                   fmt_double(etas[order[i]]));
    }
    return table;
}

CsvTable run_audit_decomposition(const ExperimentConfig& config,
                                 const std::shared_ptr<const Problem>& problem,
                                 const TestFunction& h, json& manifest,
                                 std::vector<std::string>& failures) {
    const bool residual_only = config.extra.value("residual_only", false);
    const double gamma = config.extra.value("gamma", 0.05);
    CsvTable table;
    table.schema = "sgld.audit-decomposition.v1";
    table.columns = {"m",     "eta",   "delta", "regime",     "rep",
                     "seed",  "pi_hat_h", "y_eta", "w_eta",      "h_eta",
                     "r1",    "r2",    "r3",    "r4",         "r_residual",
                     "identity_abs_err", "lhs", "expmom_mean", "expmom_slope"};
    json points = json::array();

    struct AuditSample {
        ReplicationResult r;
        bool diverged = false;
    };

    for (const PointPlan& point : plan_points(config)) {
        const double t0 = now_seconds();
        const FieldBundle bundle = make_field(problem, h, point.eta, config.delta, config.extra,
                                              point.seed, /*need_hessian=*/!residual_only);
        const std::string config_hash = hash_hex(manifest.at("config").dump());
        const auto fn = [&](std::size_t i) {
            AuditSample s;
            RngStream stream = derive_stream(point.seed, i, "chain");
            ChainConfig cc;
            cc.eta = point.eta;
            cc.delta = config.delta;
            cc.m = point.m;
            cc.burn_in = point.burn_in;
            cc.keep_noise_log = true;
            cc.initial_state.assign(static_cast<std::size_t>(problem->dim()), 0.0);
            try {
                const Trajectory traj = run_chain(*problem, cc, stream);
                ReplicationResult& r = s.r;
                r.index = i;
                r.seed = stream.key();
                r.config_hash = config_hash;
                r.pi_hat_h = pi_hat(traj, h);
                r.y = y_eta(traj, bundle.field);
                r.w = w_eta(traj, h, bundle.field, bundle.pi_h, point.eta, config.delta);
                r.h_mart = h_eta(traj, bundle.field);
                r.lhs = std::sqrt(static_cast<double>(point.m) * point.eta / config.delta) *
                        (r.pi_hat_h - bundle.pi_h);
                r.r_resid = r_residual(traj, h, bundle.field, bundle.pi_h, point.eta,
                                       config.delta);
                if (!residual_only) {
                    r.r = r_components(traj, bundle.field, *problem, point.eta, config.delta);
                    r.identity_residual = r.lhs - (r.h_mart - r.r.sum());
                } else {
                    const double nan = std::numeric_limits<double>::quiet_NaN();
                    r.r = {nan, nan, nan, nan};
                    r.identity_residual = nan;
                }
                r.exp_moments = exp_moment_curve(traj, gamma);
                r.exp_moment_slope = ls_slope(r.exp_moments);
            } catch (const ChainDivergenceError&) {
                s.diverged = true;
            }
            return s;
        };
        const auto samples = parallel_map<AuditSample>(config.replications, config.workers, fn);
        std::size_t divergent = 0;
        std::vector<double> y_values;
        const std::optional<double> identity_tol =
            config.checks.contains("identity_tol")
                ? std::optional<double>(config.checks.at("identity_tol").get<double>())
                : std::nullopt;
        const bool require_r34_zero = config.checks.value("r34_zero", false);
        for (const auto& s : samples) {
            if (s.diverged) {
                ++divergent;
                continue;
            }
            const ReplicationResult& r = s.r;
            double expmom_mean = 0.0;
            for (const auto& p : r.exp_moments) expmom_mean += p.value;
            expmom_mean /= 5.0;
            y_values.push_back(r.y);
            push_row(table,
                     {std::to_string(point.m), fmt_double(point.eta), fmt_double(config.delta),
                      point.regime.tag, std::to_string(r.index), std::to_string(r.seed),
                      fmt_double(r.pi_hat_h), fmt_double(r.y), fmt_double(r.w),
                      fmt_double(r.h_mart), fmt_double(r.r.r1), fmt_double(r.r.r2),
                      fmt_double(r.r.r3), fmt_double(r.r.r4), fmt_double(r.r_resid),
                      fmt_double(std::abs(r.identity_residual)), fmt_double(r.lhs),
                      fmt_double(expmom_mean), fmt_double(r.exp_moment_slope)});
            if (identity_tol && !residual_only &&
                !(std::abs(r.identity_residual) <= *identity_tol * (1.0 + std::abs(r.lhs))))
                failures.push_back("audit-decomposition: identity residual " +
                                   fmt_double(std::abs(r.identity_residual)) +
                                   " beyond tolerance at rep " + std::to_string(r.index));
            if (require_r34_zero && !residual_only && !(r.r.r3 == 0.0 && r.r.r4 == 0.0))
                failures.push_back("audit-decomposition: R3/R4 not exactly zero at rep " +
                                   std::to_string(r.index) + " (r3=" + fmt_double(r.r.r3) +
                                   ", r4=" + fmt_double(r.r.r4) + ")");
        }
        enforce_divergence_budget(divergent, config.replications);
        json jp = point_manifest(point, config);
        jp["replications"] = config.replications;
        jp["divergent"] = divergent;
        jp["field"] = bundle.kind;
        jp["pi_h"] = bundle.pi_h;
        jp["residual_only"] = residual_only;
        jp["gamma"] = gamma;
        jp["seconds"] = now_seconds() - t0;
        // Concentration of the normalizer across replications, when there are
        // enough of them for the empirical exceedance to mean anything.
        if (y_values.size() >= 1000 && !config.x_grid.empty()) {
            const ConcentrationReport rep =
                variance_concentration_check(y_values, config.x_grid);
            jp["variance_concentration"] = {{"x_grid", rep.x_grid},
                                            {"exceedance", rep.exceedance},
                                            {"mean_y", rep.mean_y},
                                            {"monotone_nonincreasing",
                                             rep.monotone_nonincreasing}};
        }
        points.push_back(jp);

        if (config.audit && config.replications > 0) {
            // Dump the first replication's full trajectory for inspection.
            RngStream stream = derive_stream(point.seed, 0, "chain");
            ChainConfig cc;
            cc.eta = point.eta;
            cc.delta = config.delta;
            cc.m = point.m;
            cc.burn_in = point.burn_in;
            cc.keep_noise_log = true;
            cc.initial_state.assign(static_cast<std::size_t>(problem->dim()), 0.0);
            try {
                const Trajectory traj = run_chain(*problem, cc, stream);
                const std::string path =
                    (std::filesystem::path(config.out_dir) /
                     ("trajectory_m" + std::to_string(point.m) + "_rep0.csv"))
                        .string();
                dump_trajectory_csv(traj, path);
                jp["trajectory_dump"] = path;
                points.back() = jp;
            } catch (const ChainDivergenceError&) {
                // rep 0 diverged; the aggregate bookkeeping above already saw it
            }
        }
    }
    manifest["points"] = points;
    return table;
}

CsvTable run_audit_assumptions(const ExperimentConfig& config,
                               const std::shared_ptr<const Problem>& problem, json& manifest,
                               std::vector<std::string>& failures) {
    if (config.replications < 1)
        throw ConfigError("audit-assumptions uses `replications` as the per-check sample count");
    const double radius = config.extra.value("radius", 4.0);
    const double gamma = config.extra.value("gamma", 0.1);
    const double cap = config.extra.value("cap", 1e6);

    // Sub-Gaussian grid: explicit points from extra.grid (array of arrays),
    // else x_grid values along the first axis, else a small default star.
    std::vector<std::vector<double>> grid;
    const std::size_t d = static_cast<std::size_t>(problem->dim());
    if (config.extra.contains("grid")) {
        for (const auto& jp : config.extra.at("grid")) {
            auto pt = jp.get<std::vector<double>>();
            if (pt.size() != d) throw ConfigError("audit-assumptions: grid point of wrong dim");
            grid.push_back(std::move(pt));
        }
    } else if (!config.x_grid.empty()) {
        for (double x : config.x_grid) {
            std::vector<double> pt(d, 0.0);
            pt[0] = x;
            grid.push_back(std::move(pt));
        }
    } else {
        grid.push_back(std::vector<double>(d, 0.0));
        for (std::size_t k = 0; k < d; ++k) {
            std::vector<double> plus(d, 0.0), minus(d, 0.0);
            plus[k] = 2.0;
            minus[k] = -2.0;
            grid.push_back(plus);
            grid.push_back(minus);
        }
    }

    RngStream s_lip = derive_stream(config.seed, 0, "validator");
    RngStream s_dis = derive_stream(config.seed, 1, "validator");
    RngStream s_sub = derive_stream(config.seed, 2, "validator");
    std::vector<ValidatorReport> reports;
    reports.push_back(check_lipschitz(*problem, config.replications, radius, s_lip));
    reports.push_back(check_dissipativity(*problem, config.replications, radius, s_dis));
    reports.push_back(check_subgaussian(*problem, gamma, config.replications, grid, s_sub, cap));

    CsvTable table;
    table.schema = "sgld.audit-assumptions.v1";
    table.columns = {"check",     "pass",   "worst_value", "declared_bound", "n_samples",
                     "radius",    "seed",   "clipped_fraction", "note"};
    json jreports = json::array();
    for (const ValidatorReport& rep : reports) {
        push_row(table, {rep.check, rep.pass ? "1" : "0", fmt_double(rep.worst_value),
                         fmt_double(rep.declared_bound), std::to_string(rep.n_samples),
                         fmt_double(rep.radius), std::to_string(rep.seed),
                         fmt_double(rep.clipped_fraction), rep.note});
        if (config.checks.value("require_all_pass", false) && !rep.pass)
            failures.push_back("audit-assumptions: " + rep.check + " failed (worst " +
                               fmt_double(rep.worst_value) + " vs bound " +
                               fmt_double(rep.declared_bound) + ")");
        json jr;
        jr["check"] = rep.check;
        jr["pass"] = rep.pass;
        jr["worst_value"] = rep.worst_value;
        jr["declared_bound"] = rep.declared_bound;
        jr["n_samples"] = rep.n_samples;
        jr["radius"] = rep.radius;
        jr["seed"] = rep.seed;
        jr["clipped_fraction"] = rep.clipped_fraction;
        jr["note"] = rep.note;
        if (!rep.per_point.empty()) jr["per_point"] = rep.per_point;
        jreports.push_back(jr);
    }
    manifest["reports"] = jreports;
    manifest["constants"] = {{"L", problem->constants().L},
                             {"K1", problem->constants().K1},
                             {"K2", problem->constants().K2}};
    manifest["gamma"] = gamma;
    manifest["cap"] = cap;
    return table;
}

CsvTable run_stein_check(const ExperimentConfig& config,
                         const std::shared_ptr<const Problem>& problem, const TestFunction& h,
                         json& manifest, std::vector<std::string>& failures) {
    if (config.x_grid.empty())
        throw ConfigError("stein-check needs x_grid, the evaluation points for the MC solver");
    const std::size_t m0 = config.m_list.empty() ? 1 : config.m_list[0];
    const double eta = config.eta_rule.resolve(m0);
    const double delta = config.delta;
    const auto a = problem->ou_coefficient(eta, delta);
    if (!a)
        throw ConfigError("stein-check compares against the closed form; it needs a problem "
                          "with an OU reduction (gaussian_mean)");
    const SteinField field = analytic_stein_ou(h, *a);

    const double horizon = config.extra.value("horizon", 15.0);
    const double dt = config.extra.value("dt", 0.01);
    const std::size_t n_paths = config.extra.value("n_paths", std::size_t{100000});
    const std::size_t residual_points = config.extra.value("residual_points", std::size_t{20});
    const double residual_radius = config.extra.value("residual_radius", 3.0);
    const int d = problem->dim();

    CsvTable table;
    table.schema = "sgld.stein-check.v1";
    table.columns = {"eta",     "delta",   "row_kind", "x",          "f_analytic",
                     "f_mc",    "abs_err", "stderr",   "tail_proxy"};

    struct McPoint {
        double x = 0.0;
        double analytic = 0.0;
        McEstimate est;
    };
    const double t0 = now_seconds();
    const auto points = parallel_map<McPoint>(
        config.x_grid.size(), config.workers, [&](std::size_t i) {
            McPoint p;
            p.x = config.x_grid[i];
            std::vector<double> pt(static_cast<std::size_t>(d), 0.0);
            pt[0] = p.x;  // scalar grid values live on the first axis
            p.analytic = field.f(pt);
            p.est = stein_f_mc(*problem, h, pt, horizon, dt, n_paths, field.pi_h(), eta, delta,
                               derive_stream(config.seed, i, "stein-mc"));
            return p;
        });
    const std::optional<double> max_abs_err =
        config.checks.contains("max_abs_err")
            ? std::optional<double>(config.checks.at("max_abs_err").get<double>())
            : std::nullopt;
    json jpoints = json::array();
    for (const McPoint& p : points) {
        const double err = std::abs(p.est.value - p.analytic);
        push_row(table, {fmt_double(eta), fmt_double(delta), "mc-point", fmt_double(p.x),
                         fmt_double(p.analytic), fmt_double(p.est.value), fmt_double(err),
                         fmt_double(p.est.std_error), fmt_double(p.est.tail_proxy)});
        if (max_abs_err && err > *max_abs_err)
            failures.push_back("stein-check: |f_mc - f| = " + fmt_double(err) + " > " +
                               fmt_double(*max_abs_err) + " at x=" + fmt_double(p.x));
        json jp;
        jp["x"] = p.x;
        jp["f_analytic"] = p.analytic;
        jp["f_mc"] = p.est.value;
        jp["abs_err"] = err;
        jp["stderr"] = p.est.std_error;
        jp["tail_proxy"] = p.est.tail_proxy;
        jpoints.push_back(jp);
    }
    manifest["mc_points"] = jpoints;
    manifest["mc"] = {{"horizon", horizon}, {"dt", dt}, {"n_paths", n_paths}};

    // Generator residual of the closed form at random points.
    RngStream rs = derive_stream(config.seed, 0, "residual-points");
    std::vector<std::vector<double>> probes(residual_points, std::vector<double>(d));
    for (auto& pt : probes) sample_uniform_ball(rs, residual_radius, pt);
    const ResidualReport residual = stein_residual_check(field, *problem, eta, delta, probes);
    push_row(table, {fmt_double(eta), fmt_double(delta), "analytic-residual", fmt_double(0.0),
                     fmt_double(0.0), fmt_double(0.0), fmt_double(residual.max_residual),
                     fmt_double(0.0), fmt_double(0.0)});
    manifest["analytic_residual"] = {{"max", residual.max_residual},
                                     {"points", residual_points},
                                     {"radius", residual_radius}};
    if (config.checks.contains("analytic_residual")) {
        const double tol = config.checks.at("analytic_residual").get<double>();
        if (residual.max_residual > tol)
            failures.push_back("stein-check: analytic residual " +
                               fmt_double(residual.max_residual) + " > " + fmt_double(tol));
    }
    manifest["seconds"] = now_seconds() - t0;
    return table;
}

}  // namespace

// ------------------------------- rules --------------------------------------

double EtaRule::resolve(std::size_t m) const {
    switch (kind) {
        case Kind::fixed:
            if (!(value > 0.0)) throw ConfigError("eta rule: fixed eta must be > 0");
            return value;
        case Kind::power: {
            if (m < 1) throw ConfigError("eta rule: power rule needs m >= 1");
            const double eta = std::pow(static_cast<double>(m), exponent);
            if (!(eta > 0.0) || !std::isfinite(eta))
                throw ConfigError("eta rule: m^exponent is not a positive step size");
            return eta;
        }
        case Kind::coupled: {
            // Solve m = c / (eta^2 |ln eta|) on (0, e^{-1/2}), where the right
            // side decreases in eta; the second, large-eta root is not a step
            // size schedule.
            if (!(c > 0.0)) throw ConfigError("eta rule: coupled rule needs c > 0");
            auto schedule = [&](double e) { return c / (e * e * std::abs(std::log(e))); };
            double lo = 1e-12, hi = 0.6;
            if (static_cast<double>(m) < schedule(hi))
                throw ConfigError("eta rule: m too small for the coupled schedule "
                                  "m = c eta^{-2}/|ln eta| (needs m >= " +
                                  fmt_double(schedule(hi)) + ")");
            for (int it = 0; it < 200; ++it) {
                const double mid = 0.5 * (lo + hi);
                if (schedule(mid) > static_cast<double>(m))
                    lo = mid;
                else
                    hi = mid;
            }
            return 0.5 * (lo + hi);
        }
    }
    throw ConfigError("eta rule: unknown kind");
}

std::size_t BurnInRule::resolve(double eta) const {
    switch (kind) {
        case Kind::c_over_eta:
            if (!(eta > 0.0)) throw ConfigError("burn-in rule: c_over_eta needs eta > 0");
            if (c < 0.0) throw ConfigError("burn-in rule: c must be >= 0");
            return static_cast<std::size_t>(std::ceil(c / eta));
        case Kind::fixed:
            return steps;
    }
    throw ConfigError("burn-in rule: unknown kind");
}

RegimeInfo theorem_regime(double m, double eta, double delta) {
    if (!(m > 0.0) || !(eta > 0.0) || !(delta > 0.0))
        throw ConfigError("theorem_regime: m, eta, delta must be > 0");
    RegimeInfo info;
    info.boundary_m = std::pow(eta, -13.0 / 8.0) * std::pow(delta, -9.0 / 8.0);
    if (m <= info.boundary_m) {
        info.tag = "regime-i";
        info.validity_scale = std::pow(eta, -1.0 / 12.0) * std::pow(delta, 1.0 / 12.0);
        info.validity_note = "x = o(eta^{-1/12} delta^{1/12})";
    } else {
        info.tag = "regime-ii";
        info.validity_scale = std::min(std::pow(m * eta * delta, 1.0 / 6.0),
                                       1.0 / (std::sqrt(m) * eta * delta));
        info.validity_note = "x = o(min((m eta delta)^{1/6}, (sqrt(m) eta delta)^{-1}))";
    }
    return info;
}

// ----------------------------- config parsing -------------------------------

TestFunction test_function_from_spec(const nlohmann::json& h_spec) {
    if (!h_spec.is_object()) throw ConfigError("h spec must be a JSON object");
    const std::string kind = h_spec.value("kind", "");
    const double amplitude = h_spec.value("amplitude", 1.0);
    if (kind == "linear") {
        if (!h_spec.contains("direction"))
            throw ConfigError("linear h spec needs a direction array");
        TestFunction h = TestFunction::linear(h_spec.at("direction").get<std::vector<double>>(),
                                              h_spec.value("offset", 0.0));
        return amplitude == 1.0 ? h : h.scaled(amplitude);
    }
    if (kind == "quadratic_radial") {
        if (!h_spec.contains("center"))
            throw ConfigError("quadratic_radial h spec needs a center array");
        TestFunction h =
            TestFunction::quadratic_radial(h_spec.at("center").get<std::vector<double>>());
        return amplitude == 1.0 ? h : h.scaled(amplitude);
    }
    if (kind == "custom")
        throw ConfigError("config files cannot define custom test functions; use the library API");
    throw ConfigError("unknown h kind '" + kind + "' (linear | quadratic_radial)");
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    static const char* known[] = {"experiment", "problem", "h",       "eta",     "delta",
                                  "m",          "burn_in", "replications", "seed", "x_grid",
                                  "out_dir",    "workers", "audit",   "checks",  "extra"};
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw ConfigError("unknown config key '" + key + "'");
    }
    ExperimentConfig cfg;
    cfg.experiment = j.value("experiment", "");
    if (!known_experiment(cfg.experiment))
        throw ConfigError("unknown experiment '" + cfg.experiment +
                          "' (tail-ratio | berry-esseen | w1-scan | audit-decomposition | "
                          "audit-assumptions | stein-check)");
    if (j.contains("problem")) {
        const auto& jp = j.at("problem");
        if (jp.is_string()) {
            cfg.problem_name = jp.get<std::string>();
        } else {
            cfg.problem_name = jp.value("name", "gaussian_mean");
            if (jp.contains("params"))
                cfg.problem_params =
                    jp.at("params").get<std::map<std::string, double>>();
        }
    }
    if (j.contains("h")) cfg.h_spec = j.at("h");
    if (j.contains("eta")) {
        const auto& je = j.at("eta");
        if (je.is_number()) {
            cfg.eta_rule.kind = EtaRule::Kind::fixed;
            cfg.eta_rule.value = je.get<double>();
        } else {
            const std::string rule = je.value("rule", "fixed");
            if (rule == "fixed") {
                cfg.eta_rule.kind = EtaRule::Kind::fixed;
                cfg.eta_rule.value = je.at("value").get<double>();
            } else if (rule == "power") {
                cfg.eta_rule.kind = EtaRule::Kind::power;
                cfg.eta_rule.exponent = je.at("exponent").get<double>();
            } else if (rule == "coupled") {
                cfg.eta_rule.kind = EtaRule::Kind::coupled;
                cfg.eta_rule.c = je.value("c", 1.0);
            } else {
                throw ConfigError("unknown eta rule '" + rule + "' (fixed | power | coupled)");
            }
        }
    }
    cfg.delta = j.value("delta", 1.0);
    if (!(cfg.delta >= 0.0)) throw ConfigError("delta must be >= 0");
    if (j.contains("m")) {
        const auto& jm = j.at("m");
        if (jm.is_number())
            cfg.m_list = {jm.get<std::size_t>()};
        else
            cfg.m_list = jm.get<std::vector<std::size_t>>();
    }
    if (j.contains("burn_in")) {
        const auto& jb = j.at("burn_in");
        if (jb.is_number()) {
            cfg.burn_in.kind = BurnInRule::Kind::fixed;
            cfg.burn_in.steps = jb.get<std::size_t>();
        } else {
            const std::string rule = jb.value("rule", "c_over_eta");
            if (rule == "c_over_eta") {
                cfg.burn_in.kind = BurnInRule::Kind::c_over_eta;
                cfg.burn_in.c = jb.value("c", 20.0);
            } else if (rule == "fixed") {
                cfg.burn_in.kind = BurnInRule::Kind::fixed;
                cfg.burn_in.steps = jb.at("steps").get<std::size_t>();
            } else {
                throw ConfigError("unknown burn_in rule '" + rule + "' (c_over_eta | fixed)");
            }
        }
    }
    cfg.replications = j.value("replications", std::size_t{0});
    cfg.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("x_grid")) cfg.x_grid = j.at("x_grid").get<std::vector<double>>();
    cfg.out_dir = j.value("out_dir", "out");
    cfg.workers = j.value("workers", 1);
    if (cfg.workers < 1) throw ConfigError("workers must be >= 1");
    cfg.audit = j.value("audit", false);
    if (j.contains("checks")) cfg.checks = j.at("checks");
    if (j.contains("extra")) cfg.extra = j.at("extra");
    if (!cfg.checks.is_object() && !cfg.checks.is_null())
        throw ConfigError("checks must be a JSON object");
    if (!cfg.extra.is_object() && !cfg.extra.is_null())
        throw ConfigError("extra must be a JSON object");
    if (cfg.checks.is_null()) cfg.checks = json::object();
    if (cfg.extra.is_null()) cfg.extra = json::object();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
    }
    try {
        return config_from_json(j);
    } catch (ConfigError& e) {
        throw ConfigError(std::string(e.what()) + " (in '" + path + "')");
    }
}

// ------------------------------ CSV / JSON ----------------------------------

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void emit_csv(const CsvTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("emit_csv: cannot open '" + path + "' for writing");
    out << "# schema: " << table.schema << '\n';
    for (std::size_t c = 0; c < table.columns.size(); ++c)
        out << (c ? "," : "") << table.columns[c];
    out << '\n';
    for (const auto& row : table.rows) {
        if (row.size() != table.columns.size())
            throw ConfigError("emit_csv: row width mismatch in '" + path + "'");
        for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << row[c];
        out << '\n';
    }
    if (!out) throw IoError("emit_csv: write to '" + path + "' failed");
}

namespace {
std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
}
}  // namespace

CsvTable parse_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("parse_csv: cannot open '" + path + "'");
    CsvTable table;
    std::string line;
    if (!std::getline(in, line) || line.rfind("# schema: ", 0) != 0)
        throw ConfigError("parse_csv: '" + path + "' does not start with a '# schema:' line");
    table.schema = line.substr(10);
    if (!std::getline(in, line))
        throw ConfigError("parse_csv: '" + path + "' is missing a header row");
    table.columns = split_csv_line(line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != table.columns.size())
            throw ConfigError("parse_csv: row width mismatch in '" + path + "'");
        table.rows.push_back(std::move(cells));
    }
    return table;
}

void emit_json(const nlohmann::json& summary, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("emit_json: cannot open '" + path + "' for writing");
    out << summary.dump(2) << '\n';
    if (!out) throw IoError("emit_json: write to '" + path + "' failed");
}

// ------------------------------ entry point ---------------------------------

RunResult run_experiment(const ExperimentConfig& config) {
    if (!known_experiment(config.experiment))
        throw ConfigError("unknown experiment '" + config.experiment + "'");
    const bool needs_reps = config.experiment != "stein-check";
    if (needs_reps && config.replications < 1)
        throw ConfigError("experiment '" + config.experiment + "' needs replications >= 1");

    std::error_code ec;
    std::filesystem::create_directories(config.out_dir, ec);
    if (ec)
        throw IoError("cannot create output directory '" + config.out_dir + "': " + ec.message());

    const auto problem =
        std::shared_ptr<const Problem>(make_problem(config.problem_name, config.problem_params));

    json manifest;
    manifest["version"] = kVersionTag;
    manifest["experiment"] = config.experiment;
    manifest["seed"] = config.seed;
    manifest["workers"] = config.workers;
    {
        json jc;
        jc["experiment"] = config.experiment;
        jc["problem"] = {{"name", config.problem_name}, {"params", config.problem_params}};
        jc["h"] = config.h_spec;
        switch (config.eta_rule.kind) {
            case EtaRule::Kind::fixed:
                jc["eta"] = {{"rule", "fixed"}, {"value", config.eta_rule.value}};
                break;
            case EtaRule::Kind::power:
                jc["eta"] = {{"rule", "power"}, {"exponent", config.eta_rule.exponent}};
                break;
            case EtaRule::Kind::coupled:
                jc["eta"] = {{"rule", "coupled"}, {"c", config.eta_rule.c}};
                break;
        }
        jc["delta"] = config.delta;
        jc["m"] = config.m_list;
        jc["burn_in"] = config.burn_in.kind == BurnInRule::Kind::fixed
                            ? json{{"rule", "fixed"}, {"steps", config.burn_in.steps}}
                            : json{{"rule", "c_over_eta"}, {"c", config.burn_in.c}};
        jc["replications"] = config.replications;
        jc["seed"] = config.seed;
        jc["x_grid"] = config.x_grid;
        jc["checks"] = config.checks;
        jc["extra"] = config.extra;
        manifest["config"] = jc;
    }

    const double t0 = now_seconds();
    std::vector<std::string> failures;
    CsvTable table;
    const bool needs_h = config.experiment == "tail-ratio" ||
                         config.experiment == "berry-esseen" ||
                         config.experiment == "audit-decomposition" ||
                         config.experiment == "stein-check";
    TestFunction h = TestFunction::linear({1.0});
    if (needs_h) {
        if (config.h_spec.is_null())
            throw ConfigError("experiment '" + config.experiment + "' needs an h spec");
        h = test_function_from_spec(config.h_spec);
        if (h.dim() != problem->dim())
            throw ConfigError("h dimension " + std::to_string(h.dim()) +
                              " does not match problem dimension " +
                              std::to_string(problem->dim()));
    }

    if (config.experiment == "tail-ratio")
        table = run_tail_ratio(config, problem, h, manifest, failures);
    else if (config.experiment == "berry-esseen")
        table = run_berry_esseen(config, problem, h, manifest, failures);
    else if (config.experiment == "w1-scan")
        table = run_w1_scan(config, problem, manifest, failures);
    else if (config.experiment == "audit-decomposition")
        table = run_audit_decomposition(config, problem, h, manifest, failures);
    else if (config.experiment == "audit-assumptions")
        table = run_audit_assumptions(config, problem, manifest, failures);
    else
        table = run_stein_check(config, problem, h, manifest, failures);

    // Count non-finite cells so downstream consumers are warned in the summary.
    std::size_t nonfinite = 0;
    for (const auto& row : table.rows)
        for (const auto& cell : row)
            if (cell.find("nan") != std::string::npos || cell.find("inf") != std::string::npos)
                ++nonfinite;
    manifest["nonfinite_cells"] = nonfinite;

    RunResult result;
    result.csv_path =
        (std::filesystem::path(config.out_dir) / (config.experiment + ".csv")).string();
    result.manifest_path =
        (std::filesystem::path(config.out_dir) / "manifest.json").string();
    emit_csv(table, result.csv_path);
    manifest["csv"] = result.csv_path;
    manifest["seconds_total"] = now_seconds() - t0;
    manifest["checks_passed"] = failures.empty();
    manifest["failures"] = failures;
    emit_json(manifest, result.manifest_path);
    result.manifest = std::move(manifest);
    result.checks_passed = failures.empty();
    result.failures = std::move(failures);
    return result;
}

void dump_trajectory_csv(const Trajectory& traj, const std::string& path) {
    CsvTable table;
    table.schema = "sgld.trajectory.v1";
    table.columns = {"k"};
    for (int i = 0; i < traj.dim; ++i) table.columns.push_back("w_" + std::to_string(i));
    if (traj.has_noise_log) {
        for (int i = 0; i < traj.zeta_dim; ++i)
            table.columns.push_back("zeta_" + std::to_string(i));
        for (int i = 0; i < traj.dim; ++i) table.columns.push_back("xi_" + std::to_string(i));
    }
    for (std::size_t k = 0; k < traj.m; ++k) {
        std::vector<std::string> row{std::to_string(k)};
        for (double v : traj.state(k)) row.push_back(fmt_double(v));
        if (traj.has_noise_log) {
            for (double v : traj.zeta(k)) row.push_back(fmt_double(v));
            for (double v : traj.xi(k)) row.push_back(fmt_double(v));
        }
        push_row(table, std::move(row));
    }
    // Final state w_m: the step out of w_{m-1} lands here; it has no noise-log
    // entry of its own.
    std::vector<std::string> row{std::to_string(traj.m)};
    for (double v : traj.final_state) row.push_back(fmt_double(v));
    if (traj.has_noise_log)
        for (int i = 0; i < traj.zeta_dim + traj.dim; ++i) row.push_back("nan");
    push_row(table, std::move(row));
    emit_csv(table, path);
}

}  // namespace sgld
