#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "sgld/dynamics.hpp"
#include "sgld/errors.hpp"
#include "sgld/problems.hpp"
#include "sgld/rng.hpp"

using namespace sgld;

TEST_CASE("sgld_step arithmetic on the Gaussian-mean recursion") {
    auto p = make_gaussian_mean(1, 1.0);
    const std::vector<double> w{1.0}, zeta{0.25}, xi{0.5};
    const auto out = sgld_step(*p, w, zeta, xi, 0.1, 0.9);
    // w - eta (w - zeta) + sqrt(eta delta) xi
    CHECK(out[0] == doctest::Approx(1.0 - 0.1 * 0.75 + std::sqrt(0.09) * 0.5).epsilon(1e-15));

    SUBCASE("argument validation") {
        std::vector<double> out3(3);
        CHECK_THROWS_AS((void)sgld_step(*p, std::vector<double>{1.0, 2.0}, zeta, xi, 0.1, 1.0),
                        ConfigError);
        CHECK_THROWS_AS((void)sgld_step(*p, w, std::vector<double>{1.0, 2.0}, xi, 0.1, 1.0),
                        ConfigError);
        CHECK_THROWS_AS((void)sgld_step(*p, w, zeta, xi, -0.1, 1.0), ConfigError);
        CHECK_THROWS_AS((void)sgld_step(*p, w, zeta, xi, 0.1, -1.0), ConfigError);
    }
}

TEST_CASE("run_chain is deterministic in the seed") {
    auto p = make_gaussian_mean(2, 1.0);
    ChainConfig cfg;
    cfg.eta = 0.1;
    cfg.delta = 1.0;
    cfg.m = 50;
    cfg.burn_in = 10;
    cfg.seed = 77;
    const Trajectory a = run_chain(*p, cfg);
    const Trajectory b = run_chain(*p, cfg);
    REQUIRE(a.states.size() == b.states.size());
    for (std::size_t i = 0; i < a.states.size(); ++i) CHECK(a.states[i] == b.states[i]);
    for (int i = 0; i < 2; ++i) CHECK(a.final_state[i] == b.final_state[i]);

    cfg.seed = 78;
    const Trajectory c = run_chain(*p, cfg);
    CHECK(a.states[0] != c.states[0]);  // ten burnt-in steps of different noise
}

TEST_CASE("noise log replays the chain bit-for-bit") {
    auto p = make_perturbed_quadratic(2, 0.1, 1.0);
    ChainConfig cfg;
    cfg.eta = 0.05;
    cfg.delta = 1.0;
    cfg.m = 200;
    cfg.burn_in = 25;
    cfg.seed = 4242;
    cfg.keep_noise_log = true;
    cfg.initial_state = {0.5, -0.5};
    const Trajectory traj = run_chain(*p, cfg);
    REQUIRE(traj.has_noise_log);
    REQUIRE(traj.zetas.size() == 200 * 2);
    REQUIRE(traj.xis.size() == 200 * 2);

    std::vector<double> w(traj.state(0).begin(), traj.state(0).end());
    for (std::size_t k = 0; k < traj.m; ++k) {
        for (int i = 0; i < 2; ++i) CHECK(w[i] == traj.state(k)[i]);
        w = sgld_step(*p, w, traj.zeta(k), traj.xi(k), cfg.eta, cfg.delta);
    }
    for (int i = 0; i < 2; ++i) CHECK(w[i] == traj.final_state[i]);
}

TEST_CASE("burn-in discards the prefix of the same stream") {
    auto p = make_gaussian_mean(1, 1.0);
    ChainConfig all;
    all.eta = 0.1;
    all.delta = 1.0;
    all.m = 8;
    all.burn_in = 0;
    all.seed = 5;
    const Trajectory full = run_chain(*p, all);

    ChainConfig tail = all;
    tail.burn_in = 5;
    tail.m = 3;
    const Trajectory last = run_chain(*p, tail);
    for (std::size_t k = 0; k < 3; ++k) CHECK(last.state(k)[0] == full.state(k + 5)[0]);
    CHECK(last.final_state[0] == full.final_state[0]);
}

TEST_CASE("eta = 0 freezes the chain") {
    auto p = make_gaussian_mean(1, 1.0);
    ChainConfig cfg;
    cfg.eta = 0.0;
    cfg.delta = 1.0;
    cfg.m = 10;
    cfg.initial_state = {3.25};
    const Trajectory traj = run_chain(*p, cfg);
    for (std::size_t k = 0; k < 10; ++k) CHECK(traj.state(k)[0] == 3.25);
    CHECK(traj.final_state[0] == 3.25);
}

TEST_CASE("divergent chains raise ChainDivergenceError with the global step") {
    // eta = 3 on the quadratic makes the map w -> -2w: |w| doubles each step
    // and crosses 1e12 deterministically (delta = 0 removes the noise).
    auto p = make_gaussian_mean(1, 1e-12);
    ChainConfig cfg;
    cfg.eta = 3.0;
    cfg.delta = 0.0;
    cfg.m = 100;
    cfg.initial_state = {1.0};
    try {
        (void)run_chain(*p, cfg);
        FAIL("expected ChainDivergenceError");
    } catch (const ChainDivergenceError& e) {
        CHECK(e.step >= 40);  // 2^40 > 1e12
        CHECK(e.step <= 42);
        REQUIRE(e.state.size() == 1);
        CHECK(std::abs(e.state[0]) > kDivergenceRadius);
        CHECK(std::string(e.what()).find("at step") != std::string::npos);
    }
}

TEST_CASE("psd_sqrt closed forms and properties") {
    SUBCASE("identity and scalar") {
        const Matrix i2 = psd_sqrt(Matrix::identity(2));
        CHECK(i2(0, 0) == 1.0);
        CHECK(i2(0, 1) == 0.0);
        Matrix s(1, 1);
        s(0, 0) = 4.0;
        CHECK(psd_sqrt(s)(0, 0) == 2.0);
    }
    SUBCASE("2x2 frozen values") {
        Matrix a(2, 2);
        a(0, 0) = a(1, 1) = 2.0;
        a(0, 1) = a(1, 0) = 1.0;
        const Matrix r = psd_sqrt(a);
        // eigenvalues 3 and 1: root = [[(sqrt3+1)/2, (sqrt3-1)/2], ...]
        CHECK(r(0, 0) == doctest::Approx(1.3660254037844386).epsilon(1e-12));
        CHECK(r(0, 1) == doctest::Approx(0.3660254037844386).epsilon(1e-12));
        CHECK(r(1, 0) == r(0, 1));
        CHECK(r(1, 1) == r(0, 0));
    }
    SUBCASE("square of the root recovers the matrix") {
        RngStream s = derive_stream(17, 0, "psd");
        Matrix b(3, 3);
        for (auto& v : b.data()) v = s.normal();
        Matrix a(3, 3);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double acc = 0.0;
                for (int k = 0; k < 3; ++k) acc += b(i, k) * b(j, k);
                a(i, j) = acc;
            }
        const Matrix r = psd_sqrt(a);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double acc = 0.0;
                for (int k = 0; k < 3; ++k) acc += r(i, k) * r(k, j);
                CHECK(acc == doctest::Approx(a(i, j)).epsilon(1e-10));
            }
    }
    SUBCASE("tiny negative eigenvalues clip to zero") {
        Matrix a(2, 2);
        a(0, 0) = 1.0;
        a(1, 1) = -1e-11;  // within the -1e-10 * ||A|| floor
        const Matrix r = psd_sqrt(a);
        CHECK(r(1, 1) == 0.0);
        CHECK(r(0, 0) == 1.0);
    }
    SUBCASE("rejections") {
        Matrix bad(2, 3);
        CHECK_THROWS_AS((void)psd_sqrt(bad), NumericError);
        Matrix asym(2, 2);
        asym(0, 1) = 1.0;
        asym(1, 0) = 0.0;
        CHECK_THROWS_AS((void)psd_sqrt(asym), NumericError);
        Matrix neg(1, 1);
        neg(0, 0) = -1.0;
        CHECK_THROWS_AS((void)psd_sqrt(neg), NumericError);
    }
}

TEST_CASE("em_step arithmetic with constant diffusion") {
    auto p = make_gaussian_mean(1, 1.0);
    const std::vector<double> x{2.0}, xi{-1.0};
    const double eta = 0.2, delta = 1.0, dt = 0.01;
    const auto out = em_step(*p, x, dt, xi, eta, delta);
    // x - x dt + sqrt(eta sigma2 + delta) sqrt(dt) xi
    const double expected = 2.0 - 2.0 * dt + std::sqrt(1.2) * std::sqrt(dt) * (-1.0);
    CHECK(out[0] == doctest::Approx(expected).epsilon(1e-14));
    CHECK_THROWS_AS((void)em_step(*p, x, 0.0, xi, eta, delta), ConfigError);
}

TEST_CASE("sde_path grid construction") {
    auto p = make_gaussian_mean(1, 1.0);
    const std::vector<double> x0{1.0};
    SUBCASE("exact multiples snap instead of growing an extra step") {
        const SdePath path = sde_path(*p, x0, 1.0, 0.01, 0.1, 1.0, std::uint64_t{3});
        CHECK(path.times.size() == 101);
        CHECK(path.times.back() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(path.states.size() == 101);
        CHECK(path.states[0] == 1.0);
    }
    SUBCASE("fractional horizons round up") {
        const SdePath path = sde_path(*p, x0, 0.095, 0.01, 0.1, 1.0, std::uint64_t{3});
        CHECK(path.times.size() == 11);  // 10 steps, grid ends at 0.10 >= T
        CHECK(path.times.back() == doctest::Approx(0.10).epsilon(1e-12));
    }
    SUBCASE("zero horizon returns the initial point only") {
        const SdePath path = sde_path(*p, x0, 0.0, 0.01, 0.1, 1.0, std::uint64_t{3});
        CHECK(path.times.size() == 1);
        CHECK(path.states[0] == 1.0);
    }
    SUBCASE("deterministic in the seed") {
        const SdePath a = sde_path(*p, x0, 2.0, 0.01, 0.1, 1.0, std::uint64_t{9});
        const SdePath b = sde_path(*p, x0, 2.0, 0.01, 0.1, 1.0, std::uint64_t{9});
        for (std::size_t i = 0; i < a.states.size(); ++i) CHECK(a.states[i] == b.states[i]);
    }
}

TEST_CASE("sde_path mean reverts like the OU process") {
    auto p = make_gaussian_mean(1, 1.0);
    const std::vector<double> x0{4.0};
    const int n_paths = 500;
    const double horizon = 3.0;
    double sum = 0.0;
    RngStream base = derive_stream(99, 0, "ou-mean");
    for (int i = 0; i < n_paths; ++i) {
        RngStream s = base.fork(i, "path");
        const SdePath path = sde_path(*p, x0, horizon, 0.01, 0.0, 1.0, s);
        sum += path.states.back();
    }
    const double mean = sum / n_paths;
    // E X_T = 4 e^{-T} for the OU limit; EM bias at dt = 0.01 is ~1% of it.
    // Stationary sd is sqrt(1/2), so the 5-sigma band is ~0.16 wide.
    CHECK(std::abs(mean - 4.0 * std::exp(-horizon)) < 0.17);
}

TEST_CASE("sde_path hoists the diffusion root only when Sigma is constant") {
    // Both problems report sigma_is_constant() = true, so this checks the
    // hoisted path agrees with em_step applied manually.
    auto p = make_gaussian_mean(2, 2.0);
    const std::vector<double> x0{1.0, -1.0};
    RngStream s1 = derive_stream(55, 0, "hoist");
    const SdePath path = sde_path(*p, x0, 0.05, 0.01, 0.3, 0.7, s1);

    RngStream s2 = derive_stream(55, 0, "hoist");
    std::vector<double> x = x0, xi(2);
    for (std::size_t k = 0; k + 1 < path.times.size(); ++k) {
        s2.fill_normal(xi);
        x = em_step(*p, x, 0.01, xi, 0.3, 0.7);
        for (int i = 0; i < 2; ++i) CHECK(x[i] == path.states[(k + 1) * 2 + i]);
    }
}
