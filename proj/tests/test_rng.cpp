// Copyright (c) 2026, MoPD lab contributors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "mopd/rng.hpp"

using namespace mopd;

TEST_SUITE("rng") {

TEST_CASE("same seed gives the same stream") {
    Rng a(42), b(42), c(43);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
        const double x = a.normal();
        CHECK(x == b.normal());
        differs |= x != c.normal();
    }
    CHECK(differs);
}

TEST_CASE("uniform stays in [0,1) and has mean one half") {
    Rng r(1);
    double s = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double u = r.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        s += u;
    }
    CHECK(std::abs(s / n - 0.5) < 4.0 * std::sqrt(1.0 / 12.0 / n));
}

TEST_CASE("normal moments") {
    Rng r(2);
    double s = 0.0, s2 = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double x = r.normal();
        s += x;
        s2 += x * x;
    }
    CHECK(std::abs(s / n) < 4.0 / std::sqrt(n));
    CHECK(std::abs(s2 / n - 1.0) < 4.0 * std::sqrt(2.0 / n));
}

TEST_CASE("uniform_index covers range evenly") {
    Rng r(3);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 70000; ++i) {
        const auto k = r.uniform_index(7);
        REQUIRE(k < 7);
        ++counts[k];
    }
    for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}

TEST_CASE("shuffle is a permutation and sample_distinct is distinct") {
    Rng r(4);
    for (int k = 0; k < 1000; ++k) {
        std::vector<int> v(1 + r.uniform_index(30));
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<int>(i);
        auto w = v;
        r.shuffle(w);
        std::sort(w.begin(), w.end());
        REQUIRE(w == v);
        const std::size_t n = 1 + r.uniform_index(20);
        const std::size_t t = 1 + r.uniform_index(n);
        const auto s = r.sample_distinct(n, t);
        REQUIRE(s.size() == t);
        std::set<std::size_t> u(s.begin(), s.end());
        REQUIRE(u.size() == t);
        REQUIRE(*u.rbegin() < n);
    }
}

TEST_CASE("state round trip resumes the stream") {
    Rng a(9);
    a.normal();
    const auto st = a.state();
    Rng b(0);
    b.set_state(st);
    for (int i = 0; i < 10; ++i) CHECK(a.normal() == b.normal());
}

TEST_CASE("derive_seed separates tags") {
    CHECK(derive_seed(1, 2) == derive_seed(1, 2));
    CHECK(derive_seed(1, 2) != derive_seed(1, 3));
    CHECK(derive_seed(1, 2) != derive_seed(2, 2));
}

}
