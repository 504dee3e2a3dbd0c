// Copyright (c) 2026, MoPD lab contributors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "mopd/synthdata.hpp"

using namespace mopd;

namespace {

std::vector<int> all_classes(const SyntheticTask& t) {
    std::vector<int> c;
    for (std::size_t i = 0; i < t.num_classes(); ++i) c.push_back(static_cast<int>(i));
    return c;
}

TaskSpec seeded(std::uint64_t seed) {
    TaskSpec s;
    s.seed = seed;
    return s;
}

} // namespace

TEST_SUITE("synthdata") {

TEST_CASE("default task layout") {
    const SyntheticTask t = generate_task(seeded(0));
    CHECK(t.num_classes() == 20);
    CHECK(t.train.size() == 20 * 16);
    CHECK(t.test.size() == 20 * 50);
    CHECK(t.base_ids.size() == 10);
    CHECK(t.new_ids.size() == 10);
    CHECK(t.base_ids.front() == 0);
    CHECK(t.new_ids.front() == 10);
    CHECK(t.is_base(3));
    CHECK(!t.is_base(15));
    CHECK(t.cluster_of(6) == 2);
    std::vector<int> count(20, 0);
    for (const auto& inst : t.train) ++count[static_cast<std::size_t>(inst.label)];
    for (int c : count) CHECK(c == 16);
}

TEST_CASE("generation is deterministic and seed dependent") {
    const SyntheticTask a = generate_task(seeded(3)), b = generate_task(seeded(3)), c = generate_task(seeded(4));
    CHECK(a.prototypes == b.prototypes);
    CHECK(a.vocabulary.tokens == b.vocabulary.tokens);
    for (std::size_t i = 0; i < a.train.size(); ++i) REQUIRE(a.train[i].f == b.train[i].f);
    CHECK(!(a.prototypes == c.prototypes));
}

TEST_CASE("prototypes are unit and pairwise below the cosine cap") {
    for (std::uint64_t s = 0; s < 10; ++s) {
        const SyntheticTask t = generate_task(seeded(s));
        for (std::size_t i = 0; i < 20; ++i) {
            REQUIRE(std::abs(norm(t.prototypes.row(i)) - 1.0) < 1e-12);
            for (std::size_t j = 0; j < i; ++j) REQUIRE(cosine(t.prototypes.row(i), t.prototypes.row(j)) < 0.95);
        }
    }
}

TEST_CASE("zero instance noise reproduces the prototypes") {
    TaskSpec s = seeded(1);
    s.sigma_x = 0.0;
    const SyntheticTask t = generate_task(s);
    for (const auto& inst : t.train) REQUIRE(inst.f == t.prototypes.row(static_cast<std::size_t>(inst.label)));
    CHECK(table_accuracy(t.prototypes, t.test, all_classes(t)) == 1.0);
}

TEST_CASE("instances are unit and ids are disjoint between splits") {
    const SyntheticTask t = generate_task(seeded(2));
    std::set<std::size_t> ids;
    for (const auto& inst : t.train) {
        REQUIRE(std::abs(norm(inst.f) - 1.0) < 1e-12);
        ids.insert(inst.id);
    }
    for (const auto& inst : t.test) REQUIRE(ids.insert(inst.id).second);
}

TEST_CASE("spec validation") {
    TaskSpec s;
    s.num_classes = 3;
    CHECK_THROWS_AS(generate_task(s), Error);
    s = {};
    s.sigma_x = -1.0;
    CHECK_THROWS_AS(generate_task(s), Error);
    s = {};
    s.base_fraction = 1.0;
    CHECK_THROWS_AS(generate_task(s), Error);
    s = {};
    s.d = 2;
    s.d_e = 2;
    CHECK_THROWS_WITH_AS(generate_task(s), "prototype rejection sampling failed (dimension too small for C)", Error);
    const Backbone wrong = make_backbone(16, 16, 0);
    CHECK_THROWS_AS(generate_task(TaskSpec{}, wrong), Error);
}

TEST_CASE("mixture labels") {
    const TeacherSpec a = parse_mixture("12T+12N");
    CHECK(a.task_related() == 12);
    CHECK(a.noisy == 12);
    CHECK(mixture_label(a) == "12T+12N");
    const TeacherSpec b = parse_mixture("24N");
    CHECK(b.task_related() == 0);
    CHECK(mixture_label(b) == "24N");
    const TeacherSpec c = parse_mixture("16T");
    CHECK(c.sigmas.size() == 16);
    CHECK(c.sigmas[12] == TeacherSpec{}.sigmas[0]);
    CHECK(mixture_label(TeacherSpec{}) == "12T");
    CHECK_THROWS_AS(parse_mixture("12X"), Error);
    CHECK_THROWS_AS(parse_mixture(""), Error);
    CHECK_THROWS_AS(parse_mixture("0T"), Error);
}

TEST_CASE("default pool: twelve labelled unit-row teachers") {
    const SyntheticTask t = generate_task(seeded(0));
    const TeacherPool p = generate_teacher_pool(t, TeacherSpec{});
    CHECK(p.size() == 12);
    CHECK(p.num_noisy() == 0);
    CHECK(p.labels[0] == "a photo of a {}.");
    for (const auto& tab : p.tables) {
        REQUIRE(tab.rows() == 20);
        for (std::size_t c = 0; c < 20; ++c) REQUIRE(std::abs(norm(tab.row(c)) - 1.0) < 1e-12);
    }
    const TeacherPool q = generate_teacher_pool(t, parse_mixture("12T+12N"));
    CHECK(q.size() == 24);
    CHECK(q.num_noisy() == 12);
    CHECK(q.labels[12] == "noisy prompt 1");
    for (std::size_t k = 0; k < 12; ++k) CHECK(q.tables[k] == p.tables[k]);
}

TEST_CASE("noiseless teacher on noiseless instances is perfect") {
    TaskSpec s = seeded(5);
    s.sigma_x = 0.0;
    const SyntheticTask t = generate_task(s);
    TeacherSpec ts;
    ts.sigmas = {0.0};
    const TeacherPool p = generate_teacher_pool(t, ts);
    CHECK(table_accuracy(p.tables[0], t.test, all_classes(t)) == 1.0);
}

TEST_CASE("noisy teachers sit at chance accuracy") {
    double acc = 0.0;
    const int seeds = 20;
    for (int s = 0; s < seeds; ++s) {
        const SyntheticTask t = generate_task(seeded(static_cast<std::uint64_t>(s)));
        const TeacherPool p = generate_teacher_pool(t, parse_mixture("1N"));
        acc += table_accuracy(p.tables[0], t.test, all_classes(t));
    }
    acc /= seeds;
    // effective sample: one independent draw per class row
    const double chance = 1.0 / 20.0;
    CHECK(std::abs(acc - chance) < 3.0 * std::sqrt(chance * (1.0 - chance) / (seeds * 20.0)));
}

TEST_CASE("teacher accuracy does not increase with teacher noise") {
    TeacherSpec ts;
    ts.sigmas = {0.0, 0.5, 1.0, 2.0, 4.0};
    std::vector<double> acc(ts.sigmas.size(), 0.0);
    for (std::uint64_t s = 0; s < 10; ++s) {
        const SyntheticTask t = generate_task(seeded(s));
        ts.seed = s;
        const TeacherPool p = generate_teacher_pool(t, ts);
        for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += table_accuracy(p.tables[k], t.test, all_classes(t));
    }
    for (std::size_t k = 1; k < acc.size(); ++k) CHECK(acc[k] <= acc[k - 1]);
    CHECK(acc.back() < acc.front());
}

TEST_CASE("domain shift: zero is identity, accuracy decreases with shift") {
    const SyntheticTask t = generate_task(seeded(0));
    const SyntheticTask same = apply_domain_shift(t, 0.0);
    CHECK(same.prototypes == t.prototypes);
    CHECK(same.test.size() == t.test.size());
    CHECK_THROWS_AS(apply_domain_shift(t, -0.1), Error);

    std::vector<double> acc(3, 0.0);
    const double shifts[] = {0.0, 0.2, 0.4};
    for (std::uint64_t s = 0; s < 5; ++s) {
        const SyntheticTask base = generate_task(seeded(s));
        for (std::size_t k = 0; k < 3; ++k) {
            const SyntheticTask sh = apply_domain_shift(base, shifts[k]);
            for (const auto& inst : sh.test) REQUIRE(std::abs(norm(inst.f) - 1.0) < 1e-12);
            acc[k] += table_accuracy(base.prototypes, sh.test, all_classes(base));
        }
    }
    CHECK(acc[1] < acc[0]);
    CHECK(acc[2] < acc[1]);
}

TEST_CASE("training subsets") {
    const SyntheticTask t = generate_task(seeded(0));
    const auto sub = training_subset(t, t.base_ids, 4);
    CHECK(sub.size() == 40);
    for (const auto& inst : sub) CHECK(t.is_base(inst.label));
    CHECK(training_subset(t, {3}).size() == 16);
    CHECK_THROWS_AS(training_subset(t, {3}, 17), Error);
    CHECK(test_subset(t, t.new_ids).size() == 500);
}

}
