#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "sgld/errors.hpp"
#include "sgld/stein.hpp"

using namespace sgld;

namespace {

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("analytic OU field for linear h") {
    const TestFunction h = TestFunction::linear({3.0, 4.0}, 0.5).scaled(2.0);
    const double a = 1.2;
    const SteinField field = analytic_stein_ou(h, a);
    CHECK(field.backend() == SteinField::Backend::analytic);
    CHECK(field.eval_tolerance() == 0.0);
    CHECK(field.dim() == 2);
    CHECK(field.pi_h() == doctest::Approx(2.0 * 0.5).epsilon(1e-15));  // amp * offset
    CHECK(field.has_hess());

    const std::vector<double> x{1.0, 1.0};
    CHECK(field.f(x) == doctest::Approx(-2.0 * 1.4).epsilon(1e-15));  // -amp <u, x>
    const auto g = field.grad(x);
    CHECK(g[0] == doctest::Approx(-1.2).epsilon(1e-15));  // -amp * 0.6
    CHECK(g[1] == doctest::Approx(-1.6).epsilon(1e-15));
    Matrix hess;
    field.hess(x, hess);
    CHECK(hess(0, 0) == 0.0);
    CHECK(hess(1, 1) == 0.0);

    // constant h (zero direction): f = 0, pi(h) = amp * offset
    const SteinField constant = analytic_stein_ou(TestFunction::linear({0.0}, 3.0), a);
    CHECK(constant.f(std::vector<double>{5.0}) == 0.0);
    CHECK(constant.pi_h() == 3.0);
}

TEST_CASE("analytic OU field for quadratic h matches frozen values") {
    const TestFunction h = TestFunction::quadratic_radial({0.0});
    const double a = 1.05;
    const SteinField field = analytic_stein_ou(h, a);
    CHECK(field.pi_h() == doctest::Approx(0.525).epsilon(1e-15));  // d a / 2
    CHECK(field.f(std::vector<double>{0.0}) == doctest::Approx(0.2625).epsilon(1e-15));  // d a / 4
    const auto g = field.grad(std::vector<double>{0.7});
    CHECK(g[0] == doctest::Approx(-0.7).epsilon(1e-15));
    Matrix hess;
    field.hess(std::vector<double>{0.7}, hess);
    CHECK(hess(0, 0) == -1.0);

    // Off-center: pi(h) picks up |c|^2, grad picks up 2c.
    const SteinField shifted = analytic_stein_ou(TestFunction::quadratic_radial({1.0, -2.0}), 2.0);
    CHECK(shifted.pi_h() == doctest::Approx(2.0 * 1.0 + 5.0).epsilon(1e-15));
    const auto g2 = shifted.grad(std::vector<double>{0.5, 0.5});
    CHECK(g2[0] == doctest::Approx(-0.5 + 2.0).epsilon(1e-15));
    CHECK(g2[1] == doctest::Approx(-0.5 - 4.0).epsilon(1e-15));
}

TEST_CASE("analytic fields satisfy the generator identity") {
    auto problem = make_gaussian_mean(2, 1.0);
    const double eta = 0.2, delta = 1.0;  // a = 1.2
    std::vector<std::vector<double>> points;
    RngStream s = derive_stream(5, 0, "residual-points");
    for (int i = 0; i < 25; ++i) {
        std::vector<double> x(2);
        sample_uniform_ball(s, 3.0, x);
        points.push_back(x);
    }
    for (const TestFunction& h :
         {TestFunction::linear({1.0, 2.0}, 0.3), TestFunction::quadratic_radial({0.5, -0.5})}) {
        const SteinField field = analytic_stein_ou(h, 1.2);
        const ResidualReport rep = stein_residual_check(field, *problem, eta, delta, points);
        CHECK(rep.pass);
        CHECK(rep.max_residual <= 1e-12);
        CHECK(rep.per_point.size() == 25);
        CHECK(rep.tolerance == 1e-9);
    }
}

TEST_CASE("analytic field rejections") {
    const TestFunction c = TestFunction::custom(
        [](std::span<const double> x) { return std::sin(x[0]); }, 1.0, 1);
    CHECK_THROWS_AS((void)analytic_stein_ou(c, 1.0), ConfigError);
    CHECK_THROWS_AS((void)analytic_stein_ou(TestFunction::linear({1.0}), 0.0), ConfigError);
    CHECK_THROWS_AS((void)analytic_stein_ou(TestFunction::linear({1.0}), -1.0), ConfigError);
}

TEST_CASE("Monte Carlo Stein values agree with the closed form") {
    auto problem = make_gaussian_mean(1, 1.0);
    const TestFunction h = TestFunction::linear({1.0});
    const double eta = 0.01, delta = 1.0;  // a = 1.01
    const std::vector<double> x{1.5};
    RngStream base = derive_stream(2718, 0, "stein-mc");
    const McEstimate est = stein_f_mc(*problem, h, x, 10.0, 0.01, 4000, 0.0, eta, delta, base);
    CHECK(std::abs(est.value - (-1.5)) < 5.0 * est.std_error + 2e-3);
    CHECK(est.std_error > 0.0);
    CHECK(est.std_error < 0.05);
    CHECK(est.tail_proxy < 0.1);  // e^{-10} decay plus MC noise on the last slab

    // Same base stream -> identical estimate, the CRN contract.
    const McEstimate again = stein_f_mc(*problem, h, x, 10.0, 0.01, 4000, 0.0, eta, delta, base);
    CHECK(again.value == est.value);
    CHECK(again.std_error == est.std_error);

    CHECK_THROWS_AS(
        (void)stein_f_mc(*problem, h, x, 10.0, 0.01, 1, 0.0, eta, delta, base), ConfigError);
}

TEST_CASE("CRN gradient estimator is nearly noiseless on the linear case") {
    auto problem = make_gaussian_mean(1, 1.0);
    const TestFunction h = TestFunction::linear({1.0});
    RngStream base = derive_stream(2719, 0, "stein-mc");
    // With shared noise the +/- eps paths differ deterministically:
    // X+_k - X-_k = 2 eps (1-dt)^k, so the divided difference equals the
    // trapezoid sum -dt [sum_k (1-dt)^k - (1 + (1-dt)^N)/2] exactly (the MC
    // noise cancels; only floating-point rounding remains).
    const double dt = 0.01;
    const std::size_t n_steps = 800;  // ceil(8.0 / dt)
    double expect = 0.0, decay = 1.0;
    for (std::size_t k = 0; k <= n_steps; ++k) {
        expect += (k == 0 || k == n_steps) ? 0.5 * decay : decay;
        decay *= 1.0 - dt;
    }
    expect *= -dt;
    const auto g =
        stein_grad_mc(*problem, h, std::vector<double>{0.5}, 0.1, 8.0, 0.01, 100, 0.0, 0.01, 1.0,
                      base);
    CHECK(g[0] == doctest::Approx(expect).epsilon(1e-9));
    CHECK(g[0] == doctest::Approx(-1.0).epsilon(1e-2));
    CHECK_THROWS_AS((void)stein_grad_mc(*problem, h, std::vector<double>{0.5}, 0.0, 8.0, 0.01,
                                        100, 0.0, 0.01, 1.0, base),
                    ConfigError);
}

TEST_CASE("finite-difference Hessian of the analytic quadratic field") {
    const SteinField field = analytic_stein_ou(TestFunction::quadratic_radial({0.0, 0.0}), 1.1);
    const Matrix hess = stein_hessian_fd(field, std::vector<double>{0.3, -0.4}, 1e-4);
    CHECK(hess(0, 0) == doctest::Approx(-1.0).epsilon(1e-9));
    CHECK(hess(1, 1) == doctest::Approx(-1.0).epsilon(1e-9));
    CHECK(hess(0, 1) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(hess(0, 1) == hess(1, 0));
}

TEST_CASE("grid field interpolates the closed form in one dimension") {
    auto problem = make_gaussian_mean(1, 1.0);
    const TestFunction h = TestFunction::linear({1.0});
    GridSpec spec;
    spec.axes.push_back({-6.0, 6.0, 61});
    RngStream base = derive_stream(33, 0, "grid");
    const SteinField field =
        grid_field(problem, h, spec, 2000, 10.0, 0.01, 0.0, 0.01, 1.0, base);
    CHECK(field.backend() == SteinField::Backend::grid);
    CHECK_FALSE(field.has_hess());
    CHECK(field.eval_tolerance() == 0.05);

    std::vector<double> g(1);
    for (double x : {-2.0, 0.0, 2.0}) {
        CHECK(std::abs(field.f(std::vector<double>{x}) - (-x)) < 0.2);
        field.grad(std::vector<double>{x}, g);
        CHECK(std::abs(g[0] - (-1.0)) < 0.2);
    }

    SUBCASE("out-of-range queries clamp and are counted") {
        CHECK(field.clamp_count() == 0);
        const double edge = field.f(std::vector<double>{6.0});
        const double beyond = field.f(std::vector<double>{11.0});
        CHECK(beyond == edge);
        CHECK(field.clamp_count() == 1);
    }
    SUBCASE("no Hessian on the grid backend") {
        Matrix hess;
        CHECK_THROWS_AS(field.hess(std::vector<double>{0.0}, hess), NumericError);
    }
}

TEST_CASE("grid field is piecewise bilinear in two dimensions") {
    auto problem = make_gaussian_mean(2, 1.0);
    const TestFunction h = TestFunction::linear({1.0, 1.0});
    GridSpec spec;
    spec.axes.push_back({-1.0, 1.0, 5});
    spec.axes.push_back({-1.0, 1.0, 5});
    RngStream base = derive_stream(34, 0, "grid");
    const SteinField field = grid_field(problem, h, spec, 200, 5.0, 0.02, 0.0, 0.05, 1.0, base);

    // Node spacing is 0.5; along a segment inside one cell the interpolant is
    // exactly linear, so the midpoint value is the average of the endpoints.
    const double f_lo = field.f(std::vector<double>{0.0, 0.1});
    const double f_hi = field.f(std::vector<double>{0.5, 0.1});
    const double f_mid = field.f(std::vector<double>{0.25, 0.1});
    CHECK(f_mid == doctest::Approx(0.5 * (f_lo + f_hi)).epsilon(1e-12));

    const double g_lo = field.f(std::vector<double>{0.1, 0.0});
    const double g_hi = field.f(std::vector<double>{0.1, 0.5});
    const double g_mid = field.f(std::vector<double>{0.1, 0.25});
    CHECK(g_mid == doctest::Approx(0.5 * (g_lo + g_hi)).epsilon(1e-12));
}

TEST_CASE("grid field round-trips through its file format") {
    auto problem = make_gaussian_mean(1, 1.0);
    const TestFunction h = TestFunction::linear({1.0}, 0.25);
    GridSpec spec;
    spec.axes.push_back({-4.0, 4.0, 17});
    RngStream base = derive_stream(35, 0, "grid");
    const SteinField field = grid_field(problem, h, spec, 200, 5.0, 0.02, 0.25, 0.1, 1.0, base);

    const std::string path = temp_path("sgld_grid_roundtrip.bin");
    save_grid_field(field, path);
    const SteinField loaded = load_grid_field(path);
    CHECK(loaded.backend() == SteinField::Backend::grid);
    CHECK(loaded.pi_h() == field.pi_h());
    CHECK(loaded.dim() == 1);
    CHECK(loaded.eval_tolerance() == field.eval_tolerance());
    CHECK(loaded.h().offset() == 0.25);

    RngStream probe = derive_stream(36, 0, "probe");
    std::vector<double> x(1), ga(1), gb(1);
    for (int i = 0; i < 20; ++i) {
        sample_uniform_ball(probe, 5.0, x);  // occasionally outside: clamping must agree too
        CHECK(field.f(x) == loaded.f(x));
        field.grad(x, ga);
        loaded.grad(x, gb);
        CHECK(ga[0] == gb[0]);
    }

    SUBCASE("truncated files are rejected") {
        const std::string cut = temp_path("sgld_grid_truncated.bin");
        save_grid_field(field, cut);
        std::filesystem::resize_file(cut, std::filesystem::file_size(cut) - 8);
        CHECK_THROWS_AS((void)load_grid_field(cut), IoError);
    }
    SUBCASE("garbage headers are rejected") {
        const std::string bad = temp_path("sgld_grid_bad.bin");
        std::ofstream out(bad);
        out << "{\"format\": \"something-else\"}\n";
        out.close();
        CHECK_THROWS_AS((void)load_grid_field(bad), ConfigError);
    }
    SUBCASE("only grid fields serialize") {
        const SteinField analytic = analytic_stein_ou(h, 1.0);
        CHECK_THROWS_AS(save_grid_field(analytic, temp_path("sgld_grid_na.bin")), ConfigError);
    }
    SUBCASE("missing files are an IO error") {
        CHECK_THROWS_AS((void)load_grid_field(temp_path("sgld_grid_missing.bin")), IoError);
    }
}

TEST_CASE("Monte Carlo field evaluates f, grad, and hess through the estimator") {
    auto problem = make_gaussian_mean(1, 1.0);
    const TestFunction h = TestFunction::linear({1.0});
    McFieldParams params;
    params.horizon = 8.0;
    params.dt = 0.01;
    params.n_paths = 4000;  // SE of the plain f estimate ~ 0.04 at this size
    params.eps_grad = 0.1;
    RngStream base = derive_stream(40, 0, "mc-field");
    const SteinField field = make_mc_stein_field(problem, h, params, 0.0, 0.01, 1.0, base);
    CHECK(field.backend() == SteinField::Backend::monte_carlo);
    CHECK(field.eval_tolerance() == params.tolerance);
    CHECK(field.has_hess());

    const std::vector<double> x{0.5};
    CHECK(std::abs(field.f(x) - (-0.5)) < 0.15);  // ~3.5 sigma at 4000 paths
    std::vector<double> g(1);
    field.grad(x, g);
    // CRN cancels the MC noise in the divided difference; what remains is the
    // deterministic trapezoid value, within 1e-2 of the continuum slope -1.
    CHECK(g[0] == doctest::Approx(-1.0).epsilon(1e-2));
    Matrix hess;
    field.hess(x, hess);
    CHECK(std::abs(hess(0, 0)) < 1e-6);  // linear h: CRN second differences vanish

    // Determinism: the field closes over its base stream by value.
    CHECK(field.f(x) == field.f(x));
}

TEST_CASE("default horizon covers five e-foldings") {
    CHECK(default_stein_horizon(1.0) == doctest::Approx(11.512925464970229).epsilon(1e-15));
    CHECK(default_stein_horizon(0.5) == doctest::Approx(23.025850929940457).epsilon(1e-15));
    CHECK_THROWS_AS((void)default_stein_horizon(0.0), ConfigError);
}

TEST_CASE("estimate_pi_h recovers the OU stationary mean of quadratic h") {
    auto problem = make_gaussian_mean(1, 1.0);
    const TestFunction h = TestFunction::quadratic_radial({0.0});
    const double eta = 0.2, delta = 1.0;  // stationary N(0, 0.6): pi(h) = 0.6
    RngStream s1 = derive_stream(50, 0, "pi-h");
    const PiHatEstimate est = estimate_pi_h(*problem, h, eta, delta, 0.01, s1);
    CHECK(est.std_error > 0.0);
    CHECK(std::abs(est.value - 0.6) < std::max(5.0 * est.std_error, 0.02));

    RngStream s2 = derive_stream(50, 0, "pi-h");
    const PiHatEstimate again = estimate_pi_h(*problem, h, eta, delta, 0.01, s2);
    CHECK(again.value == est.value);  // deterministic in the stream
}
