#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "sgld/rng.hpp"

using sgld::RngStream;
using sgld::derive_stream;

TEST_CASE("identical keys rebuild identical streams") {
    RngStream a(0xDEADBEEFULL);
    RngStream b(0xDEADBEEFULL);
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
    RngStream c(0xDEADBEEFULL);
    RngStream d(0xDEADBEEFULL);
    for (int i = 0; i < 1000; ++i) CHECK(c.normal() == d.normal());
}

TEST_CASE("derive_stream separates index and tag") {
    RngStream base = derive_stream(42, 0, "chain");
    RngStream other_index = derive_stream(42, 1, "chain");
    RngStream other_tag = derive_stream(42, 0, "sde-path");
    RngStream other_seed = derive_stream(43, 0, "chain");
    std::set<std::uint64_t> firsts{base.next_u64(), other_index.next_u64(),
                                   other_tag.next_u64(), other_seed.next_u64()};
    CHECK(firsts.size() == 4);
}

TEST_CASE("fork derives from identity, not consumed state") {
    RngStream fresh = derive_stream(7, 3, "point");
    RngStream before = fresh.fork(5, "stein-path");

    RngStream burned = derive_stream(7, 3, "point");
    for (int i = 0; i < 100; ++i) (void)burned.normal();
    RngStream after = burned.fork(5, "stein-path");

    CHECK(before.key() == after.key());
    for (int i = 0; i < 100; ++i) CHECK(before.next_u64() == after.next_u64());
}

TEST_CASE("key survives construction") {
    RngStream s(123456789ULL);
    CHECK(s.key() == 123456789ULL);
    CHECK(derive_stream(1, 2, "x").key() == derive_stream(1, 2, "x").key());
}

TEST_CASE("uniform01 lies in [0, 1) and is unbiased") {
    RngStream s = derive_stream(2024, 0, "uniform-test");
    const int n = 100000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double u = s.uniform01();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        sum += u;
        sum2 += u * u;
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    // 5 sigma with sigma = 1/sqrt(12 n)
    CHECK(std::abs(mean - 0.5) < 5.0 / std::sqrt(12.0 * n));
    CHECK(std::abs(var - 1.0 / 12.0) < 0.002);
}

TEST_CASE("normal draws match N(0,1) moments") {
    RngStream s = derive_stream(2024, 0, "normal-test");
    const int n = 100000;
    double sum = 0.0, sum2 = 0.0, sum4 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = s.normal();
        sum += x;
        sum2 += x * x;
        sum4 += x * x * x * x;
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    const double kurt = sum4 / n;
    CHECK(std::abs(mean) < 5.0 / std::sqrt(static_cast<double>(n)));        // 5 sigma
    CHECK(std::abs(var - 1.0) < 5.0 * std::sqrt(2.0 / n));                  // 5 sigma
    CHECK(std::abs(kurt - 3.0) < 5.0 * std::sqrt(96.0 / n));                // E x^4 = 3
}

TEST_CASE("Box-Muller cache keeps the draw sequence deterministic") {
    RngStream a = derive_stream(9, 9, "bm");
    std::vector<double> first;
    for (int i = 0; i < 7; ++i) first.push_back(a.normal());

    RngStream b = derive_stream(9, 9, "bm");
    std::vector<double> second(7);
    b.fill_normal(second);
    for (int i = 0; i < 7; ++i) CHECK(first[i] == second[i]);
}

TEST_CASE("sample_uniform_ball stays inside and fills the ball") {
    RngStream s = derive_stream(31, 0, "ball");
    const double radius = 2.5;
    const int n = 50000;
    std::vector<double> x(2);
    double sum_r = 0.0, sum_x0 = 0.0;
    double max_r = 0.0;
    for (int i = 0; i < n; ++i) {
        sgld::sample_uniform_ball(s, radius, x);
        const double r = std::sqrt(x[0] * x[0] + x[1] * x[1]);
        CHECK(r <= radius * (1.0 + 1e-12));
        sum_r += r;
        sum_x0 += x[0];
        max_r = std::max(max_r, r);
    }
    // Uniform on a disc: E r = (2/3) radius, and the max approaches the boundary.
    CHECK(std::abs(sum_r / n - 2.0 * radius / 3.0) < 0.02);
    CHECK(std::abs(sum_x0 / n) < 0.03);
    CHECK(max_r > 0.999 * radius);
}

TEST_CASE("fnv1a64 matches the reference offset basis") {
    CHECK(sgld::detail::fnv1a64("") == 0xCBF29CE484222325ULL);
    CHECK(sgld::detail::fnv1a64("a") != sgld::detail::fnv1a64("b"));
}
