#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>

#include "hlab/rng.hpp"

using namespace hlab;

TEST_CASE("streams are keyed, not sequenced") {
    Stream a(42, "noise", 3), b(42, "noise", 3), c(42, "noise", 4), d(42, "other", 3);
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    CHECK(x != c.next_u64());
    CHECK(x != d.next_u64());
    Stream p(1, "parent");
    const auto child1 = p.split("kid", 0);
    p.next_u64();
    const auto child2 = p.split("kid", 0);
    CHECK(child1.key() == child2.key());
}

TEST_CASE("uniform and below") {
    Stream s(9, "u");
    double m = 0.0;
    std::array<int, 3> counts{};
    for (int i = 0; i < 30000; ++i) {
        const double u = s.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        m += u;
        ++counts[s.below(3)];
    }
    CHECK(std::abs(m / 30000 - 0.5) < 0.01);
    for (int c : counts) CHECK(std::abs(c - 10000) < 400);
}

TEST_CASE("normal moments") {
    Stream s(10, "n");
    const int n = 100000;
    double m = 0.0, q = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = s.normal();
        m += z;
        q += z * z;
    }
    m /= n;
    q = q / n - m * m;
    CHECK(std::abs(m) < 0.02);
    CHECK(std::abs(q - 1.0) < 0.02);
}
