#pragma once

// Experiment orchestration: JSON configs in, CSV + manifest artifacts out.
// Replications fan out across a worker pool with per-replication streams
// derived from (point seed, replication index), and every aggregate is merged
// by replication index, so artifacts are byte-identical for any worker count.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgld/problems.hpp"
#include "sgld/stats.hpp"

namespace sgld {

inline constexpr const char* kVersionTag = "sgld 0.1.0";

struct EtaRule {
    enum class Kind { fixed, power, coupled };
    Kind kind = Kind::fixed;
    double value = 0.0;     // fixed: eta itself
    double exponent = 0.0;  // power: eta = m^exponent
    double c = 1.0;         // coupled: m = C eta^{-2} / |ln eta|, solved for eta
    double resolve(std::size_t m) const;
};

struct BurnInRule {
    enum class Kind { c_over_eta, fixed };
    Kind kind = Kind::c_over_eta;
    double c = 20.0;        // burn_in = ceil(c / eta)
    std::size_t steps = 0;  // fixed
    std::size_t resolve(double eta) const;
};

struct ExperimentConfig {
    std::string experiment;  // tail-ratio | berry-esseen | w1-scan |
                             // audit-decomposition | audit-assumptions | stein-check
    std::string problem_name = "gaussian_mean";
    std::map<std::string, double> problem_params;
    nlohmann::json h_spec;   // {"kind": "linear", "direction": [...], ...}
    EtaRule eta_rule;
    double delta = 1.0;
    std::vector<std::size_t> m_list;
    BurnInRule burn_in;
    std::size_t replications = 0;
    std::uint64_t seed = 0;
    std::vector<double> x_grid;
    std::string out_dir = "out";
    int workers = 1;
    bool audit = false;
    nlohmann::json checks;  // optional pass/fail thresholds (see experiments)
    nlohmann::json extra;   // experiment-specific knobs
};

ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
TestFunction test_function_from_spec(const nlohmann::json& h_spec);

// Theorem regime for a (m, eta, delta) point: regime-i when
// m <= eta^{-13/8} delta^{-9/8}, regime-ii otherwise, with the symbolic
// x-validity scale of that regime evaluated numerically (a scale, not a hard
// cutoff -- the o() constants are unknown).
struct RegimeInfo {
    std::string tag;            // "regime-i" | "regime-ii"
    double boundary_m = 0.0;    // eta^{-13/8} delta^{-9/8}
    double validity_scale = 0.0;
    std::string validity_note;  // the symbolic expression the scale evaluates
};
RegimeInfo theorem_regime(double m, double eta, double delta);

// In-memory CSV: schema tag, column names, preformatted cells.  Floats are
// rendered with 17 significant digits (fmt_double) so emitted artifacts are
// byte-stable and round-trip exactly.
struct CsvTable {
    std::string schema;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
};

std::string fmt_double(double v);
void emit_csv(const CsvTable& table, const std::string& path);
CsvTable parse_csv(const std::string& path);
void emit_json(const nlohmann::json& summary, const std::string& path);

struct RunResult {
    nlohmann::json manifest;      // everything written to <out>/manifest.json
    bool checks_passed = true;    // built-in check verdict (true when no checks)
    std::vector<std::string> failures;
    std::string csv_path;
    std::string manifest_path;
};

// Runs the named experiment: for each (m, eta) point, R replications of
// run_chain -> statistics, aggregated by replication index.  Writes
// <out>/<experiment>.csv and <out>/manifest.json.  Divergent replications are
// recorded, excluded and counted; more than 1% of them fails the run
// (NumericError).
RunResult run_experiment(const ExperimentConfig& config);

// Trajectory dump (columns k, w_0..w_{d-1}, plus the noise when logged); used
// by --audit runs.
void dump_trajectory_csv(const Trajectory& traj, const std::string& path);

}  // namespace sgld
