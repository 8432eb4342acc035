// Acceptance harness: one pass/fail line per criterion, exit 0 only when all
// criteria hold.  Config-driven criteria load their experiment definitions
// from the configs directory (argv[1], default "configs"); direct-API
// criteria pin their own parameters and seeds below.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "sgld/dynamics.hpp"
#include "sgld/errors.hpp"
#include "sgld/harness.hpp"
#include "sgld/problems.hpp"
#include "sgld/rng.hpp"
#include "sgld/stats.hpp"
#include "sgld/stein.hpp"

using namespace sgld;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kMartingaleSeed = 430301;
constexpr std::uint64_t kMomentSeed = 730701;
constexpr std::uint64_t kValidatorSeed = 880001;

std::string g3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double var_of(const std::vector<double>& v, double mean) {
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return s / static_cast<double>(v.size() - 1);
}

std::size_t find_col(const CsvTable& table, const std::string& name) {
    for (std::size_t i = 0; i < table.columns.size(); ++i)
        if (table.columns[i] == name) return i;
    throw ConfigError("acceptance: column '" + name + "' missing from " + table.schema);
}

double cell_d(const CsvTable& table, std::size_t row, std::size_t col) {
    return std::strtod(table.rows.at(row).at(col).c_str(), nullptr);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("acceptance: cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Least-squares slope of v against k over five checkpoints.
double slope5(const double* k, const double* v) {
    double kb = 0.0, vb = 0.0;
    for (int j = 0; j < 5; ++j) {
        kb += k[j];
        vb += v[j];
    }
    kb /= 5.0;
    vb /= 5.0;
    double num = 0.0, den = 0.0;
    for (int j = 0; j < 5; ++j) {
        num += (k[j] - kb) * (v[j] - vb);
        den += (k[j] - kb) * (k[j] - kb);
    }
    return num / den;
}

// gaussian_mean's gradients with a deliberately understated Lipschitz
// constant; the assumption audit must reject it.
class UnderstatedLipschitz final : public Problem {
  public:
    UnderstatedLipschitz() : Problem("understated_lipschitz", 1, 1, {0.9, 1.0, 0.0}) {}
    void sample_zeta(RngStream& stream, std::span<double> zeta) const override {
        for (auto& z : zeta) z = stream.normal();
    }
    void grad_psi(std::span<const double> w, std::span<const double> zeta,
                  std::span<double> out) const override {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = w[i] - zeta[i];
    }
    void grad_p(std::span<const double> w, std::span<double> out) const override {
        std::copy(w.begin(), w.end(), out.begin());
    }
};

// Same gradients with an overstated dissipativity rate K1.
class OverstatedDissipativity final : public Problem {
  public:
    OverstatedDissipativity() : Problem("overstated_dissipativity", 1, 1, {1.0, 1.5, 0.0}) {}
    void sample_zeta(RngStream& stream, std::span<double> zeta) const override {
        for (auto& z : zeta) z = stream.normal();
    }
    void grad_psi(std::span<const double> w, std::span<const double> zeta,
                  std::span<double> out) const override {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = w[i] - zeta[i];
    }
    void grad_p(std::span<const double> w, std::span<double> out) const override {
        std::copy(w.begin(), w.end(), out.begin());
    }
};

ExperimentConfig load_into(const fs::path& configs, const std::string& file,
                           const fs::path& out_dir) {
    ExperimentConfig cfg = load_config((configs / file).string());
    cfg.out_dir = out_dir.string();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    const fs::path configs = argc > 1 ? fs::path(argv[1]) : fs::path("configs");
    const fs::path out_root = "acceptance-out";
    std::error_code ec;
    fs::remove_all(out_root, ec);
    fs::create_directories(out_root, ec);

    std::cout << "acceptance harness (" << kVersionTag << "), configs from '" << configs.string()
              << "'\n";

    int passed = 0, total = 0;
    const auto criterion = [&](int idx, const char* name, auto&& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        bool ok = false;
        std::string detail;
        try {
            ok = fn(detail);
        } catch (const std::exception& e) {
            ok = false;
            detail = std::string("exception: ") + e.what();
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        ++total;
        if (ok) ++passed;
        std::cout << (ok ? "[PASS]" : "[FAIL]") << " criterion " << idx << " (" << name
                  << "): " << detail << " [" << g3(secs) << "s]" << std::endl;
    };

    // 1. The Monte Carlo Stein solver matches the closed form, and the closed
    //    form satisfies the generator equation pointwise.
    criterion(1, "stein solver vs closed form", [&](std::string& detail) {
        const RunResult r =
            run_experiment(load_into(configs, "stein-check.json", out_root / "c1"));
        const CsvTable table = parse_csv(r.csv_path);
        const std::size_t kind = find_col(table, "row_kind"), err = find_col(table, "abs_err");
        double worst_mc = 0.0, residual = 0.0;
        for (std::size_t i = 0; i < table.rows.size(); ++i) {
            if (table.rows[i][kind] == "mc-point")
                worst_mc = std::max(worst_mc, cell_d(table, i, err));
            else
                residual = cell_d(table, i, err);
        }
        detail = "max |f_mc - f| = " + g3(worst_mc) + " (tol 0.05), generator residual = " +
                 g3(residual) + " (tol 1e-12)";
        return r.checks_passed;
    });

    // 2. The martingale + remainder decomposition reproduces the normalized
    //    deviation exactly, with the Taylor and quadratic-variation remainders
    //    identically zero for a linear test function.
    criterion(2, "decomposition identity", [&](std::string& detail) {
        const RunResult r =
            run_experiment(load_into(configs, "audit-decomposition.json", out_root / "c2"));
        const CsvTable table = parse_csv(r.csv_path);
        const std::size_t err = find_col(table, "identity_abs_err");
        const std::size_t r3 = find_col(table, "r3"), r4 = find_col(table, "r4");
        double worst = 0.0;
        bool zeros = true;
        for (std::size_t i = 0; i < table.rows.size(); ++i) {
            worst = std::max(worst, cell_d(table, i, err));
            zeros = zeros && table.rows[i][r3] == "0" && table.rows[i][r4] == "0";
        }
        detail = "max identity error = " + g3(worst) + " over " +
                 std::to_string(table.rows.size()) + " replications (tol 1e-8), r3 = r4 = 0: " +
                 (zeros ? "yes" : "NO");
        return r.checks_passed && zeros;
    });

    // 3. The martingale term is centered with variance equal to the mean
    //    gradient second moment (the normalizer the W statistic divides by).
    criterion(3, "martingale moments", [&](std::string& detail) {
        const auto p = make_gaussian_mean(1, 1.0);
        const double eta = 0.05, delta = 1.0;
        const SteinField field =
            analytic_stein_ou(TestFunction::linear({1.0}), *p->ou_coefficient(eta, delta));
        const std::size_t reps = 10000;
        std::vector<double> hs(reps), ys(reps);
        for (std::size_t i = 0; i < reps; ++i) {
            RngStream stream = derive_stream(kMartingaleSeed, i, "chain");
            ChainConfig cc;
            cc.eta = eta;
            cc.delta = delta;
            cc.m = 4096;
            cc.burn_in = 400;
            cc.keep_noise_log = true;
            cc.initial_state = {0.0};
            const Trajectory traj = run_chain(*p, cc, stream);
            hs[i] = h_eta(traj, field);
            ys[i] = y_eta(traj, field);
        }
        const double mh = mean_of(hs);
        const double vh = var_of(hs, mh);
        const double my = mean_of(ys);
        const double se_mean = std::sqrt(vh / static_cast<double>(reps));
        std::vector<double> sq(reps);
        for (std::size_t i = 0; i < reps; ++i) sq[i] = (hs[i] - mh) * (hs[i] - mh);
        const double se_var = std::sqrt(var_of(sq, mean_of(sq)) / static_cast<double>(reps));
        const bool centered = std::abs(mh) <= 4.0 * se_mean;
        const bool matched = std::abs(vh - my) <= 4.0 * se_var;
        detail = "mean = " + g3(mh) + " (4*se = " + g3(4.0 * se_mean) + "), var - mean Y = " +
                 g3(vh - my) + " (4*se = " + g3(4.0 * se_var) + "), R = 10000";
        return centered && matched;
    });

    // 4. The KS distance of the self-normalized statistic to the standard
    //    normal decreases along the m-ladder at the predicted rate.
    criterion(4, "normal-approximation decay", [&](std::string& detail) {
        const RunResult r =
            run_experiment(load_into(configs, "berry-esseen.json", out_root / "c4"));
        std::string ks;
        for (const auto& jp : r.manifest.at("points"))
            ks += (ks.empty() ? "" : " > ") + g3(jp.at("ks_distance").get<double>());
        detail = "ks: " + ks;
        if (r.manifest.contains("ks_ratio_observed"))
            detail += ", first/last = " + g3(r.manifest.at("ks_ratio_observed").get<double>()) +
                      " (bound " + g3(r.manifest.at("ks_ratio_bound").get<double>()) + ")";
        return r.checks_passed;
    });

    // 5. Upper and lower tail probabilities of W track the normal tail.
    criterion(5, "tail-probability ratios", [&](std::string& detail) {
        const RunResult r = run_experiment(load_into(configs, "tail-ratio.json", out_root / "c5"));
        const CsvTable table = parse_csv(r.csv_path);
        const std::size_t ratio = find_col(table, "ratio");
        double worst = 0.0;
        for (std::size_t i = 0; i < table.rows.size(); ++i)
            worst = std::max(worst, std::abs(cell_d(table, i, ratio) - 1.0));
        detail = "max |ratio - 1| = " + g3(worst) + " over " + std::to_string(table.rows.size()) +
                 " rows (tol 0.15)";
        return r.checks_passed;
    });

    // 6. The W1 distance between the chain's stationary law and the
    //    diffusion's matches the closed form and shrinks with eta.
    criterion(6, "chain-vs-diffusion W1 gap", [&](std::string& detail) {
        const RunResult r = run_experiment(load_into(configs, "w1-scan.json", out_root / "c6"));
        const CsvTable table = parse_csv(r.csv_path);
        const std::size_t c_eta = find_col(table, "eta"), c_w1 = find_col(table, "w1");
        const std::size_t c_th = find_col(table, "w1_theory");
        for (std::size_t i = 0; i < table.rows.size(); ++i) {
            if (i) detail += ", ";
            detail += "w1(" + table.rows[i][c_eta].substr(0, 4) + ") = " +
                      g3(cell_d(table, i, c_w1)) + " vs " + g3(cell_d(table, i, c_th));
        }
        return r.checks_passed;
    });

    // 7. Exponential moments of the stationary chain stay flat across
    //    checkpoints: each checkpoint mean sits on the closed-form value and
    //    the fitted slope is statistically zero.
    criterion(7, "uniform exponential moments", [&](std::string& detail) {
        const auto p = make_gaussian_mean(1, 1.0);
        const double eta = 0.05, delta = 1.0, gamma = 0.05;
        const double v = *p->chain_stationary_variance(eta, delta);  // 0.53846...
        const double oracle = 1.0 / std::sqrt(1.0 - 2.0 * gamma * v);
        const std::size_t reps = 4000;
        std::vector<std::vector<double>> vals(5, std::vector<double>(reps));
        std::vector<double> slopes(reps);
        double kk[5] = {0, 0, 0, 0, 0};
        for (std::size_t i = 0; i < reps; ++i) {
            ChainConfig cc;
            cc.eta = eta;
            cc.delta = delta;
            cc.m = 2048;
            cc.burn_in = 0;  // start exactly at the stationary law instead
            cc.initial_state = {std::sqrt(v) * derive_stream(kMomentSeed, i, "init").normal()};
            RngStream stream = derive_stream(kMomentSeed, i, "chain");
            const Trajectory traj = run_chain(*p, cc, stream);
            const auto curve = exp_moment_curve(traj, gamma);
            double vv[5];
            for (int j = 0; j < 5; ++j) {
                vv[j] = curve[j].value;
                vals[j][i] = vv[j];
                kk[j] = static_cast<double>(curve[j].k);
            }
            slopes[i] = slope5(kk, vv);
        }
        bool flat = true;
        double worst_dev = 0.0, worst_band = 0.0;
        for (int j = 0; j < 5; ++j) {
            const double mj = mean_of(vals[j]);
            const double se = std::sqrt(var_of(vals[j], mj) / static_cast<double>(reps));
            const double dev = std::abs(mj - oracle);
            if (dev > worst_dev) {
                worst_dev = dev;
                worst_band = 3.0 * se;
            }
            flat = flat && dev <= 3.0 * se;
        }
        const double ms = mean_of(slopes);
        const double se_s = std::sqrt(var_of(slopes, ms) / static_cast<double>(reps));
        const bool level = std::abs(ms) <= 3.0 * se_s;
        detail = "max |checkpoint mean - " + g3(oracle) + "| = " + g3(worst_dev) + " (3*se = " +
                 g3(worst_band) + "), slope = " + g3(ms) + " (3*se = " + g3(3.0 * se_s) + ")";
        return flat && level;
    });

    // 8. The assumption audit passes for both shipped problems with their
    //    declared constants and rejects deliberately wrong declarations.
    criterion(8, "assumption audit", [&](std::string& detail) {
        const RunResult rg = run_experiment(
            load_into(configs, "audit-assumptions-gaussian.json", out_root / "c8-gaussian"));
        const RunResult rp = run_experiment(
            load_into(configs, "audit-assumptions-perturbed.json", out_root / "c8-perturbed"));

        const UnderstatedLipschitz ul;
        RngStream s1 = derive_stream(kValidatorSeed, 0, "validator");
        const bool lip_rejected = !check_lipschitz(ul, 200, 3.0, s1).pass;

        const OverstatedDissipativity od;
        RngStream s2 = derive_stream(kValidatorSeed, 1, "validator");
        const bool dis_rejected = !check_dissipativity(od, 200, 3.0, s2).pass;

        const auto gm = make_gaussian_mean(1, 1.0);
        RngStream s3 = derive_stream(kValidatorSeed, 2, "validator");
        const std::vector<std::vector<double>> grid{{0.0}, {2.0}, {4.0}};
        const bool sub_rejected = !check_subgaussian(*gm, 0.6, 1000, grid, s3, 1e6).pass;

        detail = std::string("declared constants: gaussian ") +
                 (rg.checks_passed ? "pass" : "FAIL") + ", perturbed " +
                 (rp.checks_passed ? "pass" : "FAIL") + "; wrong declarations rejected: L " +
                 (lip_rejected ? "yes" : "NO") + ", K1 " + (dis_rejected ? "yes" : "NO") +
                 ", gamma " + (sub_rejected ? "yes" : "NO");
        return rg.checks_passed && rp.checks_passed && lip_rejected && dis_rejected &&
               sub_rejected;
    });

    // 9. Artifacts are byte-identical across worker counts.
    criterion(9, "worker-count determinism", [&](std::string& detail) {
        ExperimentConfig cfg =
            load_into(configs, "audit-decomposition.json", out_root / "c9-w1");
        cfg.workers = 1;
        const RunResult r1 = run_experiment(cfg);
        cfg.out_dir = (out_root / "c9-w3").string();
        cfg.workers = 3;
        const RunResult r2 = run_experiment(cfg);
        const std::string a = slurp(r1.csv_path), b = slurp(r2.csv_path);
        detail = "workers 1 vs 3: " + std::to_string(a.size()) + " CSV bytes, " +
                 (a == b ? "identical" : "DIFFERENT");
        return a == b && !a.empty();
    });

    std::cout << "acceptance: " << passed << "/" << total << " criteria passed" << std::endl;
    return passed == total ? 0 : 2;
}
