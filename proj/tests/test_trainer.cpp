// Copyright (c) 2026, MoPD lab contributors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "mopd/synthdata.hpp"
#include "mopd/trainer.hpp"

using namespace mopd;

namespace {

struct Toy {
    SyntheticTask task;
    TeacherPool pool;
};

Toy toy(std::uint64_t seed, std::size_t classes = 4) {
    TaskSpec spec;
    spec.num_classes = classes;
    spec.d = 8;
    spec.d_e = 8;
    spec.shots = 8;
    spec.test_per_class = 10;
    spec.seed = seed;
    spec.clusters = 2;
    Toy t{generate_task(spec), {}};
    TeacherSpec ts;
    ts.sigmas = {0.3, 1.0, 2.0};
    ts.seed = seed;
    t.pool = generate_teacher_pool(t.task, ts);
    return t;
}

TrainConfig small_config(Variant v) {
    TrainConfig c;
    c.variant = v;
    c.pool_size = 3;
    c.top_t = 2;
    c.tau = 0.1;
    c.alpha = 0.5;
    c.beta = 0.1;
    c.epochs = 3;
    c.batch_size = 8;
    c.seed = 5;
    return c;
}

} // namespace

TEST_SUITE("trainer") {

TEST_CASE("variant names round trip and capability flags") {
    for (Variant v : {Variant::CE_ONLY, Variant::SIPD, Variant::MOPD, Variant::MOPD_R, Variant::MOPD_NO_MPS})
        CHECK(variant_from_string(to_string(v)) == v);
    CHECK_THROWS_AS(variant_from_string("MOE"), Error);
    CHECK(!uses_pool(Variant::CE_ONLY));
    CHECK(uses_pool(Variant::MOPD_R));
    CHECK(!uses_gate(Variant::MOPD_R));
    CHECK(!uses_gate(Variant::SIPD));
    CHECK(uses_gate(Variant::MOPD_NO_MPS));
}

TEST_CASE("config validation") {
    TrainConfig c;
    CHECK_NOTHROW(c.validate());
    c.top_t = 13;
    CHECK_THROWS_WITH_AS(c.validate(), "T must satisfy 1 <= T <= H", Error);
    c = {};
    c.alpha = -0.1;
    CHECK_THROWS_AS(c.validate(), Error);
    c = {};
    c.tau = 0.0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = {};
    c.variant = Variant::SIPD;
    c.sipd_teacher = 12;
    CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("pool variants require a matching pool") {
    const Toy t = toy(1);
    for (Variant v : {Variant::SIPD, Variant::MOPD, Variant::MOPD_R, Variant::MOPD_NO_MPS}) {
        const TrainConfig c = small_config(v);
        CHECK_THROWS_AS(train(c, t.task.train, t.task.backbone.text, t.task.vocabulary, nullptr), Error);
        TrainConfig wrong = c;
        wrong.pool_size = 2;
        wrong.top_t = 1;
        CHECK_THROWS_AS(train(wrong, t.task.train, t.task.backbone.text, t.task.vocabulary, &t.pool), Error);
    }
    CHECK_NOTHROW(train(small_config(Variant::CE_ONLY), t.task.train, t.task.backbone.text, t.task.vocabulary, nullptr));
}

TEST_CASE("alpha = 1, beta = 0 reproduces the ce-only trajectory") {
    const Toy t = toy(2);
    TrainConfig a = small_config(Variant::MOPD);
    a.alpha = 1.0;
    a.beta = 0.0;
    TrainConfig b = small_config(Variant::CE_ONLY);
    const TrainState sa = train(a, t.task.train, t.task.backbone.text, t.task.vocabulary, &t.pool);
    const TrainState sb = train(b, t.task.train, t.task.backbone.text, t.task.vocabulary, nullptr);
    REQUIRE(sa.history.size() == sb.history.size());
    for (std::size_t i = 0; i < sa.history.size(); ++i)
        REQUIRE(std::abs(sa.history[i].loss.total - sb.history[i].loss.total) < 1e-9);
    CHECK(relative_error(sa.model.prompt.vectors, sb.model.prompt.vectors) < 1e-9);
    CHECK(sa.gate.w == init_train_state(a, t.task.backbone.text, t.task.vocabulary).gate.w);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
    const Toy t = toy(3);
    TrainConfig c = small_config(Variant::MOPD);
    c.lr = 0.0;
    const TrainState init = init_train_state(c, t.task.backbone.text, t.task.vocabulary);
    const TrainState s = train(c, t.task.train, t.task.backbone.text, t.task.vocabulary, &t.pool);
    CHECK(s.model.prompt.vectors == init.model.prompt.vectors);
    CHECK(s.gate.w == init.gate.w);
    CHECK(s.step == 3 * 4);
}

TEST_CASE("one step moves parameters by minus lr times a verified gradient") {
    const Toy t = toy(4);
    TrainConfig c = small_config(Variant::MOPD);
    c.pool_size = 3;
    c.tau = 0.3;
    c.lr = 0.05;
    c.prompt_init_std = 0.3;
    c.gate_init_std = 1.0;
    TrainState s = init_train_state(c, t.task.backbone.text, t.task.vocabulary);
    Batch batch(t.task.train.begin(), t.task.train.begin() + 2);
    batch.push_back(t.task.train.back());
    double margin = 1e300;
    for (const auto& inst : batch) margin = std::min(margin, selection_margin(matvec_transposed(s.gate.w, inst.f), 2));
    REQUIRE(margin > 1e-3);

    TrainState probe = s;
    const CombinedResult r = batch_objective(probe, batch, c, &t.pool, {});
    auto loss_prompt = [&](const Matrix& v) {
        TrainState q = s;
        q.model.prompt.vectors = v;
        return batch_objective(q, batch, c, &t.pool, {}).loss.total;
    };
    auto loss_gate = [&](const Matrix& w) {
        TrainState q = s;
        q.gate.w = w;
        return batch_objective(q, batch, c, &t.pool, {}).loss.total;
    };
    CHECK(relative_error(r.grad_prompt, finite_difference_gradient(loss_prompt, s.model.prompt.vectors, 1e-6)) < 1e-5);
    CHECK(relative_error(r.grad_gate, finite_difference_gradient(loss_gate, s.gate.w, 1e-6)) < 1e-5);

    const Matrix v0 = s.model.prompt.vectors, w0 = s.gate.w;
    training_step(s, batch, c, &t.pool);
    for (std::size_t i = 0; i < v0.size(); ++i)
        CHECK(s.model.prompt.vectors[i] == doctest::Approx(v0[i] - c.lr * r.grad_prompt[i]).epsilon(1e-15));
    for (std::size_t i = 0; i < w0.size(); ++i)
        CHECK(s.gate.w[i] == doctest::Approx(w0[i] - c.lr * r.grad_gate[i]).epsilon(1e-15));
}

TEST_CASE("training is deterministic for a fixed seed") {
    const Toy t = toy(5);
    for (Variant v : {Variant::MOPD, Variant::MOPD_R}) {
        const TrainConfig c = small_config(v);
        const TrainState a = train(c, t.task.train, t.task.backbone.text, t.task.vocabulary, &t.pool);
        const TrainState b = train(c, t.task.train, t.task.backbone.text, t.task.vocabulary, &t.pool);
        CHECK(a.model.prompt.vectors == b.model.prompt.vectors);
        CHECK(a.gate.w == b.gate.w);
    }
}

TEST_CASE("loss decreases on a separable toy") {
    TaskSpec spec;
    spec.num_classes = 4;
    spec.d = 8;
    spec.d_e = 8;
    spec.shots = 16;
    spec.sigma_x = 0.2;
    spec.clusters = 2;
    spec.seed = 6;
    const SyntheticTask task = generate_task(spec);
    TrainConfig c = small_config(Variant::CE_ONLY);
    c.epochs = 25;
    c.lr = 0.01;
    c.batch_size = 32;
    const TrainState s = train(c, task.train, task.backbone.text, task.vocabulary, nullptr);
    REQUIRE(s.history.size() == 50);
    CHECK(s.history.back().loss.total < s.history.front().loss.total);
}

TEST_CASE("random selection with T = H equals dense uniform weighting") {
    const Toy t = toy(7);
    TrainConfig c = small_config(Variant::MOPD_R);
    c.top_t = 3;
    TrainState s = init_train_state(c, t.task.backbone.text, t.task.vocabulary);
    const Batch batch(t.task.train.begin(), t.task.train.begin() + 5);
    const CombinedResult r = batch_objective(s, batch, c, &t.pool, {});
    const std::vector<Vector> w(batch.size(), Vector(3, 1.0 / 3.0));
    const CombinedResult d = evaluate_objective(s.model, nullptr, &t.pool, batch, {0.5, 0.5, 0.0},
                                                TeacherWeights::constant(w), objective_options(c, {}));
    CHECK(std::abs(r.loss.total - d.loss.total) < 1e-12);
    CHECK(relative_error(r.grad_prompt, d.grad_prompt) < 1e-12);
}

TEST_CASE("gradient routing: selection term never reaches the prompt") {
    const Toy t = toy(8);
    TrainConfig c = small_config(Variant::MOPD);
    TrainState s = init_train_state(c, t.task.backbone.text, t.task.vocabulary);
    const Batch batch(t.task.train.begin(), t.task.train.begin() + 6);
    const CombinedResult r = batch_objective(s, batch, c, &t.pool, {});
    CHECK(frobenius_norm(r.grad_prompt_mps) == 0.0);
    CHECK(frobenius_norm(r.grad_gate_mps) > 0.0);
    CHECK(frobenius_norm(r.grad_gate_ce) == 0.0);
}

TEST_CASE("non-gated variants leave the gate at its initial value") {
    const Toy t = toy(9);
    for (Variant v : {Variant::CE_ONLY, Variant::SIPD, Variant::MOPD_R}) {
        const TrainConfig c = small_config(v);
        const TrainState init = init_train_state(c, t.task.backbone.text, t.task.vocabulary);
        const TrainState s = train(c, t.task.train, t.task.backbone.text, t.task.vocabulary, &t.pool);
        CHECK(s.gate.w == init.gate.w);
        CHECK(!make_checkpoint(s, c).gate.has_value());
    }
    const TrainConfig c = small_config(Variant::MOPD_NO_MPS);
    const TrainState s = train(c, t.task.train, t.task.backbone.text, t.task.vocabulary, &t.pool);
    CHECK(make_checkpoint(s, c).gate.has_value());
}

TEST_CASE("gate learns to prefer an informative teacher over an adversarial one") {
    double gain = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Toy t = toy(20 + seed);
        const std::size_t c = t.task.num_classes();
        Matrix adversarial(c, t.task.prototypes.cols());
        for (std::size_t k = 0; k < c; ++k) adversarial.set_row(k, t.task.prototypes.row((k + 1) % c));
        TeacherPool pool;
        pool.tables = {t.task.prototypes, adversarial};
        pool.labels = {"informative", "adversarial"};
        pool.noisy = {false, false};
        TrainConfig cfg = small_config(Variant::MOPD);
        cfg.pool_size = 2;
        cfg.top_t = 2;
        cfg.beta = 1.0;
        cfg.epochs = 20;
        cfg.lr = 0.05;
        const TrainState init = init_train_state(cfg, t.task.backbone.text, t.task.vocabulary);
        const TrainState s = train(cfg, t.task.train, t.task.backbone.text, t.task.vocabulary, &pool);
        const double before = mean_gate_weights(init.gate, t.task.train)[0];
        const double after = mean_gate_weights(s.gate, t.task.train)[0];
        CHECK(after > before);
        gain += after - before;
    }
    CHECK(gain > 0.0);
}

TEST_CASE("divergent training raises a numerical abort carrying the state") {
    const Toy t = toy(10);
    TrainConfig c = small_config(Variant::MOPD);
    c.abort_threshold = 1e-3;
    try {
        train(c, t.task.train, t.task.backbone.text, t.task.vocabulary, &t.pool);
        FAIL("expected a numerical abort");
    } catch (const NumericalAbort& e) {
        CHECK(std::string(e.what()).find("numerical abort") != std::string::npos);
        CHECK(e.state().step == 0);
        CHECK(e.loss().total > 1e-3);
    }
}

TEST_CASE("cosine decay changes the trajectory but keeps the first step") {
    const Toy t = toy(11);
    TrainConfig a = small_config(Variant::CE_ONLY);
    TrainConfig b = a;
    b.cosine_decay = true;
    const TrainState sa = train(a, t.task.train, t.task.backbone.text, t.task.vocabulary, nullptr);
    const TrainState sb = train(b, t.task.train, t.task.backbone.text, t.task.vocabulary, nullptr);
    CHECK(sa.history[0].loss.total == sb.history[0].loss.total);
    CHECK(!(sa.model.prompt.vectors == sb.model.prompt.vectors));
}

TEST_CASE("checkpoint restores the student") {
    const Toy t = toy(12);
    const TrainConfig c = small_config(Variant::MOPD);
    const TrainState s = train(c, t.task.train, t.task.backbone.text, t.task.vocabulary, &t.pool);
    const Checkpoint ck = make_checkpoint(s, c);
    CHECK(ck.steps == s.step);
    CHECK(ck.final_loss == s.history.back().loss.total);
    const StudentModel m = student_from_checkpoint(ck, t.task.backbone.text, t.task.vocabulary);
    CHECK(m.prompt.vectors == s.model.prompt.vectors);
    const Backbone other = make_backbone(5, 8, 1);
    CHECK_THROWS_AS(student_from_checkpoint(ck, other.text, t.task.vocabulary), Error);
}

}
