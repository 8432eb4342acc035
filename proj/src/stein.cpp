#include "sgld/stein.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <string>

#include "sgld/errors.hpp"

namespace sgld {

namespace {

// Declared per-evaluation statistical tolerance for Monte Carlo backends when
// the caller does not override it (grid fields have no tolerance parameter).
constexpr double kDefaultMcTolerance = 0.05;

std::size_t node_count(const std::vector<GridAxis>& axes) {
    std::size_t n = 1;
    for (const auto& ax : axes) n *= static_cast<std::size_t>(ax.n);
    return n;
}

// Locates x on the grid: per-axis cell index i_k (lower node) and weight t_k
// of the upper node.  Returns true when x had to be clamped to the grid box.
bool grid_locate(const detail::GridData& g, std::span<const double> x, std::size_t* i,
                 double* t) {
    bool clamped = false;
    for (std::size_t k = 0; k < g.axes.size(); ++k) {
        const auto& ax = g.axes[k];
        double v = x[k];
        if (v < ax.lo) {
            v = ax.lo;
            clamped = true;
        } else if (v > ax.hi) {
            v = ax.hi;
            clamped = true;
        }
        const double step = (ax.hi - ax.lo) / (ax.n - 1);
        const double u = (v - ax.lo) / step;
        std::size_t cell = static_cast<std::size_t>(u);
        if (cell >= static_cast<std::size_t>(ax.n - 1)) cell = static_cast<std::size_t>(ax.n - 2);
        i[k] = cell;
        t[k] = u - static_cast<double>(cell);
    }
    return clamped;
}

// (Bi)linear combination of the located cell's corner values; comp < 0 reads
// f, otherwise gradient component comp.
double grid_combine(const detail::GridData& g, const std::size_t* i, const double* t, int comp) {
    const std::size_t d = g.axes.size();
    auto val = [&](std::size_t node) {
        return comp < 0 ? g.f_nodes[node] : g.grad_nodes[node * d + static_cast<std::size_t>(comp)];
    };
    if (d == 1) return (1.0 - t[0]) * val(i[0]) + t[0] * val(i[0] + 1);
    const std::size_t n1 = static_cast<std::size_t>(g.axes[1].n);
    const std::size_t c00 = i[0] * n1 + i[1];
    return (1.0 - t[0]) * ((1.0 - t[1]) * val(c00) + t[1] * val(c00 + 1)) +
           t[0] * ((1.0 - t[1]) * val(c00 + n1) + t[1] * val(c00 + n1 + 1));
}

nlohmann::json test_function_descriptor(const TestFunction& h) {
    nlohmann::json j;
    switch (h.kind()) {
        case TestFunction::Kind::linear:
            j["kind"] = "linear";
            j["direction"] = h.parameter_vector();
            j["offset"] = h.offset();
            break;
        case TestFunction::Kind::quadratic_radial:
            j["kind"] = "quadratic_radial";
            j["center"] = h.parameter_vector();
            break;
        case TestFunction::Kind::custom:
            throw ConfigError("grid-field serialization: custom test functions have no "
                              "serializable descriptor");
    }
    j["amplitude"] = h.amplitude();
    return j;
}

TestFunction test_function_from_descriptor(const nlohmann::json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    const double amplitude = j.at("amplitude").get<double>();
    if (kind == "linear")
        return TestFunction::linear(j.at("direction").get<std::vector<double>>(),
                                    j.at("offset").get<double>())
            .scaled(amplitude);
    if (kind == "quadratic_radial")
        return TestFunction::quadratic_radial(j.at("center").get<std::vector<double>>())
            .scaled(amplitude);
    throw ConfigError("grid-field file: unknown test-function kind '" + kind + "'");
}

}  // namespace

void SteinField::hess(std::span<const double> x, Matrix& out) const {
    if (!hess_)
        throw NumericError("SteinField::hess: this backend provides no Hessian "
                           "(grid fields support only f and grad)");
    out = Matrix(dim_, dim_);
    hess_(x, out);
}

std::uint64_t SteinField::clamp_count() const {
    return grid_ ? grid_->clamp_count.load(std::memory_order_relaxed) : 0;
}

SteinField SteinField::from_functions(
    TestFunction h, double pi_h, std::function<double(std::span<const double>)> f,
    std::function<void(std::span<const double>, std::span<double>)> grad,
    std::function<void(std::span<const double>, Matrix&)> hess, Backend backend,
    double eval_tolerance) {
    if (!f || !grad) throw ConfigError("SteinField::from_functions: f and grad are required");
    SteinField field;
    field.h_ = std::move(h);
    field.pi_h_ = pi_h;
    field.dim_ = field.h_.dim();
    field.backend_ = backend;
    field.eval_tolerance_ = eval_tolerance;
    field.f_ = std::move(f);
    field.grad_ = std::move(grad);
    field.hess_ = std::move(hess);
    return field;
}

SteinField analytic_stein_ou(const TestFunction& h, double a) {
    if (h.kind() == TestFunction::Kind::custom)
        throw ConfigError("analytic_stein_ou: no closed form for custom test functions");
    if (!(a > 0.0)) throw ConfigError("analytic_stein_ou: OU diffusion coefficient must be > 0");
    const int d = h.dim();
    const double amp = h.amplitude();
    SteinField field;
    field.h_ = h;
    field.dim_ = d;
    field.backend_ = SteinField::Backend::analytic;
    field.eval_tolerance_ = 0.0;
    if (h.kind() == TestFunction::Kind::linear) {
        // L f = <-x, grad f> for linear f, so f(x) = -amp <v, x> satisfies
        // L f = amp <v, x> = h - amp * offset.  A zero direction degenerates
        // to the constant h with f = 0.
        const std::vector<double> v = h.parameter_vector();
        field.pi_h_ = amp * h.offset();
        field.f_ = [v, amp](std::span<const double> x) { return -amp * dot(v, x); };
        field.grad_ = [v, amp](std::span<const double>, std::span<double> out) {
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = -amp * v[i];
        };
        field.hess_ = [](std::span<const double>, Matrix&) {};
    } else {
        // h = amp |x - c|^2: f(x) = amp (-|x|^2/2 + 2<c,x> + d a/4) solves
        // L f = h - pi(h) with pi(h) = amp (d a/2 + |c|^2) under N(0, (a/2) I).
        const std::vector<double> c = h.parameter_vector();
        const double c2 = dot(c, c);
        field.pi_h_ = amp * (0.5 * d * a + c2);
        const double f_const = amp * 0.25 * d * a;
        field.f_ = [c, amp, f_const](std::span<const double> x) {
            return amp * (-0.5 * dot(x, x) + 2.0 * dot(c, x)) + f_const;
        };
        field.grad_ = [c, amp](std::span<const double> x, std::span<double> out) {
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = amp * (-x[i] + 2.0 * c[i]);
        };
        field.hess_ = [amp, d](std::span<const double>, Matrix& out) {
            for (int i = 0; i < d; ++i) out(i, i) = -amp;
        };
    }
    return field;
}

McEstimate stein_f_mc(const Problem& problem, const TestFunction& h, std::span<const double> x,
                      double horizon, double dt, std::size_t n_paths, double pi_h, double eta,
                      double delta, const RngStream& base) {
    if (n_paths < 2) throw ConfigError("stein_f_mc: n_paths must be >= 2 for a standard error");
    if (!(horizon >= 0.0)) throw ConfigError("stein_f_mc: horizon must be >= 0");
    const int d = problem.dim();
    if (static_cast<int>(x.size()) != d) throw ConfigError("stein_f_mc: point dimension mismatch");
    if (h.dim() != d) throw ConfigError("stein_f_mc: test-function dimension mismatch");

    double sum = 0.0, sum2 = 0.0, tail = 0.0;
    for (std::size_t p = 0; p < n_paths; ++p) {
        RngStream stream = base.fork(p, "stein-path");
        const SdePath path = sde_path(problem, x, horizon, dt, eta, delta, stream);
        const std::size_t n = path.times.size();
        // Trapezoid rule for I_p = int_0^T (h(X_t) - pi_h) dt.
        double integral = 0.0;
        double last = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const std::span<const double> state{path.states.data() + k * static_cast<std::size_t>(d),
                                                static_cast<std::size_t>(d)};
            const double g = h(state) - pi_h;
            const double w = (k == 0 || k + 1 == n) ? 0.5 : 1.0;
            integral += w * g;
            last = g;
        }
        integral *= dt;
        if (n == 1) integral = 0.0;  // horizon 0: empty time integral
        sum += integral;
        sum2 += integral * integral;
        tail += last;
    }
    const double np = static_cast<double>(n_paths);
    const double mean = sum / np;
    const double var = std::max(0.0, (sum2 - np * mean * mean) / (np - 1.0));
    McEstimate est;
    est.value = -mean;
    est.std_error = std::sqrt(var / np);
    est.tail_proxy = std::abs(tail / np);
    return est;
}

std::vector<double> stein_grad_mc(const Problem& problem, const TestFunction& h,
                                  std::span<const double> x, double eps, double horizon, double dt,
                                  std::size_t n_paths, double pi_h, double eta, double delta,
                                  const RngStream& base) {
    if (!(eps > 0.0)) throw ConfigError("stein_grad_mc: eps must be > 0");
    const int d = problem.dim();
    if (static_cast<int>(x.size()) != d)
        throw ConfigError("stein_grad_mc: point dimension mismatch");
    std::vector<double> out(d), shifted(x.begin(), x.end());
    for (int j = 0; j < d; ++j) {
        shifted[j] = x[j] + eps;
        const double fp = stein_f_mc(problem, h, shifted, horizon, dt, n_paths, pi_h, eta, delta,
                                     base).value;
        shifted[j] = x[j] - eps;
        const double fm = stein_f_mc(problem, h, shifted, horizon, dt, n_paths, pi_h, eta, delta,
                                     base).value;
        shifted[j] = x[j];
        out[j] = (fp - fm) / (2.0 * eps);
    }
    return out;
}

Matrix stein_hessian_fd(const SteinField& field, std::span<const double> x, double eps) {
    if (!(eps > 0.0)) throw ConfigError("stein_hessian_fd: eps must be > 0");
    const int d = field.dim();
    if (static_cast<int>(x.size()) != d)
        throw ConfigError("stein_hessian_fd: point dimension mismatch");
    Matrix hess(d, d);
    std::vector<double> shifted(x.begin(), x.end()), gp(d), gm(d);
    for (int j = 0; j < d; ++j) {
        shifted[j] = x[j] + eps;
        field.grad(shifted, gp);
        shifted[j] = x[j] - eps;
        field.grad(shifted, gm);
        shifted[j] = x[j];
        for (int i = 0; i < d; ++i) hess(i, j) = (gp[i] - gm[i]) / (2.0 * eps);
    }
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j) {
            const double v = 0.5 * (hess(i, j) + hess(j, i));
            hess(i, j) = hess(j, i) = v;
        }
    return hess;
}

ResidualReport stein_residual_check(const SteinField& field, const Problem& problem, double eta,
                                    double delta, std::span<const std::vector<double>> points) {
    if (points.empty()) throw ConfigError("stein_residual_check: no points given");
    if (!field.has_hess())
        throw NumericError("stein_residual_check: field provides no Hessian");
    const int d = field.dim();
    if (problem.dim() != d) throw ConfigError("stein_residual_check: dimension mismatch");
    ResidualReport rep;
    rep.tolerance =
        field.backend() == SteinField::Backend::analytic ? 1e-9 : field.eval_tolerance();
    std::vector<double> grad_p(d), grad_f(d);
    Matrix hess;
    for (const auto& x : points) {
        if (static_cast<int>(x.size()) != d)
            throw ConfigError("stein_residual_check: point dimension mismatch");
        problem.grad_p(x, grad_p);
        field.grad(x, grad_f);
        field.hess(x, hess);
        Matrix a = problem.sigma(x);
        for (auto& v : a.data()) v *= eta;
        for (int i = 0; i < d; ++i) a(i, i) += delta;
        const double lf = -dot(grad_p, grad_f) + 0.5 * hs_inner(a, hess);
        const double residual = std::abs(lf - (field.h()(x) - field.pi_h()));
        rep.per_point.push_back(residual);
        rep.max_residual = std::max(rep.max_residual, residual);
    }
    rep.pass = rep.max_residual <= rep.tolerance;
    return rep;
}

SteinField grid_field(const std::shared_ptr<const Problem>& problem, const TestFunction& h,
                      const GridSpec& spec, std::size_t n_paths, double horizon, double dt,
                      double pi_h, double eta, double delta, const RngStream& base) {
    if (!problem) throw ConfigError("grid_field: null problem");
    const int d = problem->dim();
    if (spec.axes.empty() || spec.axes.size() > 2)
        throw ConfigError("grid_field: grids support 1 or 2 dimensions");
    if (static_cast<int>(spec.axes.size()) != d)
        throw ConfigError("grid_field: axis count does not match problem dimension");
    for (const auto& ax : spec.axes)
        if (ax.n < 2 || !(ax.hi > ax.lo))
            throw ConfigError("grid_field: each axis needs n >= 2 and hi > lo");

    auto data = std::make_shared<detail::GridData>();
    data->axes = spec.axes;
    const std::size_t nodes = node_count(spec.axes);
    data->f_nodes.resize(nodes);
    data->grad_nodes.resize(nodes * static_cast<std::size_t>(d));

    // CRN finite-difference step for node gradients (matches McFieldParams).
    const double eps = 0.05;
    std::vector<double> x(d);
    for (std::size_t node = 0; node < nodes; ++node) {
        std::size_t rem = node;
        for (int k = d - 1; k >= 0; --k) {
            const auto& ax = spec.axes[static_cast<std::size_t>(k)];
            const std::size_t i = rem % static_cast<std::size_t>(ax.n);
            rem /= static_cast<std::size_t>(ax.n);
            x[static_cast<std::size_t>(k)] = ax.lo + (ax.hi - ax.lo) / (ax.n - 1) * static_cast<double>(i);
        }
        data->f_nodes[node] = stein_f_mc(*problem, h, x, horizon, dt, n_paths, pi_h, eta, delta,
                                         base.fork(node, "grid-f")).value;
        const auto g = stein_grad_mc(*problem, h, x, eps, horizon, dt, n_paths, pi_h, eta, delta,
                                     base.fork(node, "grid-g"));
        std::copy(g.begin(), g.end(), data->grad_nodes.begin() + node * static_cast<std::size_t>(d));
    }

    SteinField field;
    field.h_ = h;
    field.pi_h_ = pi_h;
    field.dim_ = d;
    field.backend_ = SteinField::Backend::grid;
    field.eval_tolerance_ = kDefaultMcTolerance;
    field.grid_ = data;
    field.eta_ = eta;
    field.delta_ = delta;
    field.f_ = [data](std::span<const double> q) {
        std::size_t i[2];
        double t[2];
        if (grid_locate(*data, q, i, t))
            data->clamp_count.fetch_add(1, std::memory_order_relaxed);
        return grid_combine(*data, i, t, -1);
    };
    field.grad_ = [data, d](std::span<const double> q, std::span<double> out) {
        std::size_t i[2];
        double t[2];
        if (grid_locate(*data, q, i, t))
            data->clamp_count.fetch_add(1, std::memory_order_relaxed);
        for (int c = 0; c < d; ++c) out[static_cast<std::size_t>(c)] = grid_combine(*data, i, t, c);
    };
    return field;
}

void save_grid_field(const SteinField& field, const std::string& path) {
    static_assert(std::endian::native == std::endian::little,
                  "grid-field files are defined as little-endian");
    if (field.backend_ != SteinField::Backend::grid || !field.grid_)
        throw ConfigError("save_grid_field: only grid-backend fields are serializable");
    nlohmann::json header;
    header["format"] = "sgld-grid-field";
    header["version"] = 1;
    header["dim"] = field.dim_;
    header["axes"] = nlohmann::json::array();
    for (const auto& ax : field.grid_->axes)
        header["axes"].push_back({{"lo", ax.lo}, {"hi", ax.hi}, {"n", ax.n}});
    header["h"] = test_function_descriptor(field.h_);
    header["pi_h"] = field.pi_h_;
    header["eta"] = field.eta_;
    header["delta"] = field.delta_;
    header["tolerance"] = field.eval_tolerance_;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_grid_field: cannot open '" + path + "' for writing");
    out << header.dump() << '\n';
    auto write_block = [&](const std::vector<double>& block) {
        out.write(reinterpret_cast<const char*>(block.data()),
                  static_cast<std::streamsize>(block.size() * sizeof(double)));
    };
    write_block(field.grid_->f_nodes);
    write_block(field.grid_->grad_nodes);
    if (!out) throw IoError("save_grid_field: write to '" + path + "' failed");
}

SteinField load_grid_field(const std::string& path) {
    static_assert(std::endian::native == std::endian::little,
                  "grid-field files are defined as little-endian");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_grid_field: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw IoError("load_grid_field: missing header in '" + path + "'");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("load_grid_field: bad header in '" + path + "': " + e.what());
    }
    try {
        if (header.at("format").get<std::string>() != "sgld-grid-field")
            throw ConfigError("load_grid_field: '" + path + "' is not a grid-field file");
        if (header.at("version").get<int>() != 1)
            throw ConfigError("load_grid_field: unsupported version in '" + path + "'");
        const int d = header.at("dim").get<int>();
        auto data = std::make_shared<detail::GridData>();
        for (const auto& jax : header.at("axes")) {
            GridAxis ax;
            ax.lo = jax.at("lo").get<double>();
            ax.hi = jax.at("hi").get<double>();
            ax.n = jax.at("n").get<int>();
            if (ax.n < 2 || !(ax.hi > ax.lo))
                throw ConfigError("load_grid_field: malformed axis in '" + path + "'");
            data->axes.push_back(ax);
        }
        if (data->axes.empty() || data->axes.size() > 2 ||
            static_cast<int>(data->axes.size()) != d)
            throw ConfigError("load_grid_field: malformed axes in '" + path + "'");
        const std::size_t nodes = node_count(data->axes);
        data->f_nodes.resize(nodes);
        data->grad_nodes.resize(nodes * static_cast<std::size_t>(d));
        auto read_block = [&](std::vector<double>& block) {
            in.read(reinterpret_cast<char*>(block.data()),
                    static_cast<std::streamsize>(block.size() * sizeof(double)));
            if (in.gcount() != static_cast<std::streamsize>(block.size() * sizeof(double)))
                throw IoError("load_grid_field: truncated node data in '" + path + "'");
        };
        read_block(data->f_nodes);
        read_block(data->grad_nodes);

        SteinField field;
        field.h_ = test_function_from_descriptor(header.at("h"));
        field.pi_h_ = header.at("pi_h").get<double>();
        field.dim_ = d;
        field.backend_ = SteinField::Backend::grid;
        field.eval_tolerance_ = header.at("tolerance").get<double>();
        field.eta_ = header.at("eta").get<double>();
        field.delta_ = header.at("delta").get<double>();
        field.grid_ = data;
        field.f_ = [data](std::span<const double> q) {
            std::size_t i[2];
            double t[2];
            if (grid_locate(*data, q, i, t))
                data->clamp_count.fetch_add(1, std::memory_order_relaxed);
            return grid_combine(*data, i, t, -1);
        };
        field.grad_ = [data, d](std::span<const double> q, std::span<double> out) {
            std::size_t i[2];
            double t[2];
            if (grid_locate(*data, q, i, t))
                data->clamp_count.fetch_add(1, std::memory_order_relaxed);
            for (int c = 0; c < d; ++c)
                out[static_cast<std::size_t>(c)] = grid_combine(*data, i, t, c);
        };
        return field;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("load_grid_field: bad header field in '" + path + "': " + e.what());
    }
}

SteinField make_mc_stein_field(const std::shared_ptr<const Problem>& problem,
                               const TestFunction& h, const McFieldParams& params, double pi_h,
                               double eta, double delta, const RngStream& base) {
    if (!problem) throw ConfigError("make_mc_stein_field: null problem");
    if (h.dim() != problem->dim())
        throw ConfigError("make_mc_stein_field: test-function dimension mismatch");
    const double horizon =
        params.horizon > 0.0 ? params.horizon : default_stein_horizon(problem->constants().K1);
    if (!(params.dt > 0.0)) throw ConfigError("make_mc_stein_field: dt must be > 0");
    if (!(params.eps_grad > 0.0)) throw ConfigError("make_mc_stein_field: eps_grad must be > 0");
    const double dt = params.dt;
    const std::size_t n_paths = params.n_paths;
    const double eps = params.eps_grad;
    const int d = problem->dim();

    SteinField field;
    field.h_ = h;
    field.pi_h_ = pi_h;
    field.dim_ = d;
    field.backend_ = SteinField::Backend::monte_carlo;
    field.eval_tolerance_ = params.tolerance;
    field.eta_ = eta;
    field.delta_ = delta;
    field.f_ = [=](std::span<const double> x) {
        return stein_f_mc(*problem, h, x, horizon, dt, n_paths, pi_h, eta, delta, base).value;
    };
    field.grad_ = [=](std::span<const double> x, std::span<double> out) {
        const auto g =
            stein_grad_mc(*problem, h, x, eps, horizon, dt, n_paths, pi_h, eta, delta, base);
        std::copy(g.begin(), g.end(), out.begin());
    };
    field.hess_ = [=](std::span<const double> x, Matrix& out) {
        std::vector<double> shifted(x.begin(), x.end());
        for (int j = 0; j < d; ++j) {
            shifted[static_cast<std::size_t>(j)] = x[j] + eps;
            const auto gp = stein_grad_mc(*problem, h, shifted, eps, horizon, dt, n_paths, pi_h,
                                          eta, delta, base);
            shifted[static_cast<std::size_t>(j)] = x[j] - eps;
            const auto gm = stein_grad_mc(*problem, h, shifted, eps, horizon, dt, n_paths, pi_h,
                                          eta, delta, base);
            shifted[static_cast<std::size_t>(j)] = x[j];
            for (int i = 0; i < d; ++i) out(i, j) = (gp[i] - gm[i]) / (2.0 * eps);
        }
        for (int i = 0; i < d; ++i)
            for (int j = i + 1; j < d; ++j) {
                const double v = 0.5 * (out(i, j) + out(j, i));
                out(i, j) = out(j, i) = v;
            }
    };
    return field;
}

double default_stein_horizon(double k1) {
    if (!(k1 > 0.0)) throw ConfigError("default_stein_horizon: K1 must be > 0");
    return std::log(1e5) / k1;
}

PiHatEstimate estimate_pi_h(const Problem& problem, const TestFunction& h, double eta, double delta,
                            double dt, RngStream& stream) {
    if (!(dt > 0.0)) throw ConfigError("estimate_pi_h: dt must be > 0");
    const double k1 = problem.constants().K1;
    if (!(k1 > 0.0)) throw ConfigError("estimate_pi_h: K1 must be > 0");
    const int d = problem.dim();
    const std::vector<double> origin(static_cast<std::size_t>(d), 0.0);
    const SdePath burn = sde_path(problem, origin, 20.0 / k1, dt, eta, delta, stream);
    const std::span<const double> start{
        burn.states.data() + (burn.times.size() - 1) * static_cast<std::size_t>(d),
        static_cast<std::size_t>(d)};
    const SdePath run = sde_path(problem, start, 1000.0 / k1, dt, eta, delta, stream);

    const std::size_t n = run.times.size();
    constexpr std::size_t kBatches = 20;
    double total = 0.0;
    double batch_sum = 0.0, batch_sum2 = 0.0;
    std::size_t done = 0;
    for (std::size_t b = 0; b < kBatches; ++b) {
        const std::size_t end = (b + 1) * n / kBatches;
        double acc = 0.0;
        std::size_t count = 0;
        for (; done < end; ++done, ++count) {
            const std::span<const double> state{
                run.states.data() + done * static_cast<std::size_t>(d), static_cast<std::size_t>(d)};
            acc += h(state);
        }
        total += acc;
        const double mean_b = acc / static_cast<double>(count);
        batch_sum += mean_b;
        batch_sum2 += mean_b * mean_b;
    }
    PiHatEstimate est;
    est.value = total / static_cast<double>(n);
    const double bm = batch_sum / kBatches;
    const double bvar = std::max(0.0, (batch_sum2 - kBatches * bm * bm) / (kBatches - 1.0));
    est.std_error = std::sqrt(bvar / kBatches);
    return est;
}

}  // namespace sgld
