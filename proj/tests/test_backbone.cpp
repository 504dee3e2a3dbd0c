// Copyright (c) 2026, MoPD lab contributors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "mopd/backbone.hpp"

using namespace mopd;

namespace {

TeacherPool single_teacher(const Matrix& table) {
    TeacherPool p;
    p.tables.push_back(table);
    p.labels.push_back("t0");
    p.noisy.push_back(false);
    return p;
}

} // namespace

TEST_SUITE("backbone") {

TEST_CASE("projection has orthonormal rows") {
    const Backbone b = make_backbone(12, 8, 3);
    const Matrix& p = b.text.projection;
    for (std::size_t r = 0; r < p.rows(); ++r)
        for (std::size_t s = 0; s < p.rows(); ++s)
            CHECK(std::abs(dot(p.row_ptr(r), p.row_ptr(s), p.cols()) - (r == s ? 1.0 : 0.0)) < 1e-12);
    CHECK(make_backbone(12, 8, 3).text.projection == p);
    CHECK_THROWS_AS(make_backbone(0, 8, 3), Error);
}

TEST_CASE("zero prompt encodes the projected class token") {
    const Backbone b = make_backbone(6, 6, 1);
    Rng rng(1);
    const Vector w = oracle::gaussian(rng, 6);
    const Matrix zero(4, 6, 0.0);
    const Vector t = encode_text(b.text, zero, w);
    const Vector expect = normalize(matvec(b.text.projection, w));
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(std::abs(t[i] - expect[i]) < 1e-14);
}

TEST_CASE("encode_text matches oracle, is unit norm and permutation invariant") {
    Rng rng(2);
    for (int k = 0; k < 200; ++k) {
        const std::size_t de = 2 + rng.uniform_index(8), d = 1 + rng.uniform_index(de);
        const Backbone b = make_backbone(de, d, static_cast<std::uint64_t>(k));
        const std::size_t m = 1 + rng.uniform_index(5);
        const Matrix v = oracle::random_matrix(rng, m, de);
        const Vector w = oracle::gaussian(rng, de);
        const Vector t = encode_text(b.text, v, w);
        const auto o = oracle::encode_text(b.text.projection, v, w);
        REQUIRE(std::abs(norm(t) - 1.0) < 1e-12);
        for (std::size_t i = 0; i < d; ++i) REQUIRE(std::abs(t[i] - static_cast<double>(o[i])) < 1e-12);
        Matrix rev(m, de);
        for (std::size_t i = 0; i < m; ++i) rev.set_row(i, v.row(m - 1 - i));
        const Vector tr = encode_text(b.text, rev, w);
        for (std::size_t i = 0; i < d; ++i) REQUIRE(std::abs(t[i] - tr[i]) < 1e-14);
    }
}

TEST_CASE("encode_text rejects bad shapes") {
    const Backbone b = make_backbone(4, 4, 1);
    CHECK_THROWS_AS(encode_text(b.text, Matrix(2, 3, 0.1), Vector(4, 1.0)), Error);
    CHECK_THROWS_AS(encode_text(b.text, Matrix(2, 4, 0.1), Vector(3, 1.0)), Error);
    CHECK_THROWS_AS(encode_text(b.text, Matrix(0, 4), Vector(4, 1.0)), Error);
}

TEST_CASE("text encoder jacobian matches finite differences") {
    Rng rng(4);
    for (int k = 0; k < 20; ++k) {
        const Backbone b = make_backbone(6, 5, static_cast<std::uint64_t>(k) + 100);
        const Matrix v = oracle::random_matrix(rng, 3, 6, 0.5);
        const Vector w = oracle::gaussian(rng, 6);
        const Matrix jac = encode_text_jacobian(b.text, v, w);
        Matrix fd(5, 6);
        for (std::size_t r = 0; r < 5; ++r) {
            auto component = [&](const Matrix& row) {
                Matrix vv = v;
                vv.set_row(1, row.data());
                return encode_text(b.text, vv, w)[r];
            };
            const Matrix g = finite_difference_gradient(component, Matrix(1, 6, v.row(1)), 1e-6);
            for (std::size_t c = 0; c < 6; ++c) fd(r, c) = g[c];
        }
        REQUIRE(relative_error(jac, fd) < 1e-6);
    }
}

TEST_CASE("text encoder backward matches jacobian transpose") {
    Rng rng(5);
    const Backbone b = make_backbone(7, 4, 9);
    const Matrix v = oracle::random_matrix(rng, 2, 7);
    const Vector w = oracle::gaussian(rng, 7);
    const Vector up = oracle::gaussian(rng, 4);
    Vector sum(7, 0.0);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 7; ++j) sum[j] += v(i, j);
    const auto cache = encode_text_cached(b.text, sum, 2, w);
    const Vector g = encode_text_backward(b.text, cache, 2, up);
    const Vector expect = matvec_transposed(encode_text_jacobian(b.text, v, w), up);
    for (std::size_t j = 0; j < 7; ++j) CHECK(std::abs(g[j] - expect[j]) < 1e-13);
}

TEST_CASE("image encoder") {
    const Backbone id = make_backbone(4, 4, 1);
    const Vector u = normalize(Vector{1.0, 2.0, -1.0, 0.5});
    CHECK(encode_image(id.image, u) == u);
    CHECK_THROWS_WITH_AS(encode_image(id.image, Vector(4, 0.0)), "degenerate vector", Error);
    const Backbone lin = make_backbone(4, 3, 2, 6);
    Rng rng(3);
    for (int k = 0; k < 100; ++k) {
        const Vector raw = oracle::gaussian(rng, 6);
        const Vector f = encode_image(lin.image, raw);
        REQUIRE(f.size() == 3);
        REQUIRE(std::abs(norm(f) - 1.0) < 1e-12);
        oracle::LVec o(3, 0);
        for (std::size_t r = 0; r < 3; ++r)
            for (std::size_t c = 0; c < 6; ++c) o[r] += static_cast<oracle::LD>(lin.image.map(r, c)) * raw[c];
        o = oracle::normalize(o);
        for (std::size_t r = 0; r < 3; ++r) REQUIRE(std::abs(f[r] - static_cast<double>(o[r])) < 1e-12);
    }
}

TEST_CASE("teacher distribution examples") {
    Matrix same(3, 2);
    for (std::size_t c = 0; c < 3; ++c) same.set_row(c, {0.6, 0.8});
    const auto u = teacher_distribution(single_teacher(same), 0, {1.0, 0.3}, 0.05);
    for (double x : u) CHECK(x == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

    Matrix two(2, 2, std::vector<double>{1.0, 0.0, 0.0, 1.0});
    const auto p = teacher_distribution(single_teacher(two), 0, {1.0, 0.0}, 1.0);
    const double e = std::exp(1.0);
    CHECK(p[0] == doctest::Approx(e / (e + 1.0)).epsilon(1e-14));
    CHECK(p[1] == doctest::Approx(1.0 / (e + 1.0)).epsilon(1e-14));

    CHECK_THROWS_AS(teacher_distribution(single_teacher(two), 1, {1.0, 0.0}, 1.0), Error);
    CHECK_THROWS_AS(teacher_distribution(single_teacher(two), 0, {1.0, 0.0}, 0.0), Error);
}

TEST_CASE("teacher distribution matches oracle and is scale invariant in f") {
    Rng rng(6);
    for (int k = 0; k < 300; ++k) {
        const std::size_t c = 2 + rng.uniform_index(8), d = 2 + rng.uniform_index(6);
        const TeacherPool pool = single_teacher(oracle::unit_rows(rng, c, d));
        const Vector f = oracle::gaussian(rng, d);
        const double tau = 0.05 + rng.uniform();
        const auto p = teacher_distribution(pool, 0, f, tau);
        const auto o = oracle::teacher(pool.tables[0], f, tau);
        Vector fs = f;
        for (auto& x : fs) x *= 7.5;
        const auto ps = teacher_distribution(pool, 0, fs, tau);
        for (std::size_t i = 0; i < c; ++i) {
            REQUIRE(std::abs(p[i] - static_cast<double>(o[i])) < 1e-12);
            REQUIRE(std::abs(p[i] - ps[i]) < 1e-12);
        }
        const std::vector<int> sub{0, static_cast<int>(c - 1)};
        const auto q = teacher_distribution(pool, 0, f, tau, sub);
        const auto oq = oracle::teacher(pool.tables[0], f, tau, sub);
        REQUIRE(std::abs(q[0] - static_cast<double>(oq[0])) < 1e-12);
    }
}

TEST_CASE("pool prefix") {
    Rng rng(1);
    TeacherPool p;
    for (int k = 0; k < 3; ++k) {
        p.tables.push_back(oracle::unit_rows(rng, 2, 2));
        p.labels.push_back("t");
        p.noisy.push_back(k == 2);
    }
    CHECK(p.num_noisy() == 1);
    CHECK(p.prefix(2).size() == 2);
    CHECK(p.prefix(2).num_noisy() == 0);
    CHECK_THROWS_AS(p.prefix(4), Error);
}

}
