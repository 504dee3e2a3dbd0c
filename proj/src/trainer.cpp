// Copyright (c) 2026, MoPD lab contributors
// SPDX-License-Identifier: Apache-2.0

#include "mopd/trainer.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

namespace mopd {

std::string to_string(Variant v) {
    switch (v) {
    case Variant::CE_ONLY: return "CE_ONLY";
    case Variant::SIPD: return "SIPD";
    case Variant::MOPD: return "MOPD";
    case Variant::MOPD_R: return "MOPD_R";
    case Variant::MOPD_NO_MPS: return "MOPD_NO_MPS";
    }
    return "MOPD";
}

Variant variant_from_string(const std::string& s) {
    if (s == "CE_ONLY") return Variant::CE_ONLY;
    if (s == "SIPD") return Variant::SIPD;
    if (s == "MOPD") return Variant::MOPD;
    if (s == "MOPD_R") return Variant::MOPD_R;
    if (s == "MOPD_NO_MPS") return Variant::MOPD_NO_MPS;
    throw Error("unknown variant: " + s);
}

bool uses_pool(Variant v) { return v != Variant::CE_ONLY; }
bool uses_gate(Variant v) { return v == Variant::MOPD || v == Variant::MOPD_NO_MPS; }

std::string to_string(LabelSpace s) { return s == LabelSpace::ALL ? "all" : "base"; }

LabelSpace label_space_from_string(const std::string& s) {
    if (s == "all") return LabelSpace::ALL;
    if (s == "base") return LabelSpace::BASE;
    throw Error("unknown label_space: " + s);
}

void TrainConfig::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("alpha must lie in [0, 1]");
    if (!(beta >= 0.0)) throw Error("beta must be non-negative");
    if (pool_size < 1) throw Error("H must be >= 1");
    if (top_t < 1 || top_t > pool_size) throw Error("T must satisfy 1 <= T <= H");
    if (prompt_length < 1) throw Error("M must be >= 1");
    if (!(tau > 0.0)) throw Error("tau must be positive");
    if (!(lr >= 0.0)) throw Error("lr must be non-negative");
    if (batch_size < 1) throw Error("batch_size must be >= 1");
    if (variant == Variant::SIPD && sipd_teacher >= pool_size) throw Error("sipd_teacher out of range");
}

TrainState init_train_state(const TrainConfig& cfg, const FrozenTextEncoder& encoder,
                            const ClassVocabulary& vocabulary) {
    cfg.validate();
    TrainState s;
    s.model.encoder = encoder;
    s.model.vocabulary = vocabulary;
    s.model.tau = cfg.tau;
    s.model.prompt = init_soft_prompt(cfg.prompt_length, encoder.d_e(), cfg.prompt_init_std, cfg.seed);
    s.gate = init_gating(encoder.d(), cfg.pool_size, cfg.top_t, cfg.gate_init_std, cfg.seed);
    s.rng = Rng(derive_seed(cfg.seed, 0x7A));
    return s;
}

ObjectiveOptions objective_options(const TrainConfig& cfg, const std::vector<int>& classes) {
    ObjectiveOptions o;
    o.kl_direction = cfg.kl_direction;
    o.mean_reduction = cfg.mean_reduction;
    o.transfer = cfg.transfer;
    o.classes = classes;
    return o;
}

CombinedResult batch_objective(TrainState& state, const Batch& batch, const TrainConfig& cfg,
                               const TeacherPool* pool, const std::vector<int>& classes) {
    const ObjectiveOptions opts = objective_options(cfg, classes);
    const Variant v = cfg.variant;
    if (uses_pool(v)) {
        if (pool == nullptr) throw Error("variant " + to_string(v) + " requires a teacher pool");
        if (pool->size() != cfg.pool_size) throw Error("teacher pool size does not match H");
    }
    TermCoefficients coef;
    CombinedResult r;
    switch (v) {
    case Variant::CE_ONLY:
        coef = {1.0, 0.0, 0.0};
        r = evaluate_objective(state.model, &state.gate, nullptr, batch, coef, TeacherWeights::gate(), opts);
        r.loss.alpha = 1.0;
        r.loss.beta = 0.0;
        return r;
    case Variant::SIPD: {
        coef = {cfg.alpha, 1.0 - cfg.alpha, 0.0};
        Vector one(cfg.pool_size, 0.0);
        one[cfg.sipd_teacher] = 1.0;
        r = evaluate_objective(state.model, nullptr, pool, batch, coef,
                               TeacherWeights::constant(std::vector<Vector>(batch.size(), one)), opts);
        r.loss.mps = 0.0;
        break;
    }
    case Variant::MOPD_R: {
        coef = {cfg.alpha, 1.0 - cfg.alpha, 0.0};
        std::vector<Vector> w(batch.size(), Vector(cfg.pool_size, 0.0));
        const double wt = 1.0 / static_cast<double>(cfg.top_t);
        for (auto& row : w) {
            for (std::size_t t : state.rng.sample_distinct(cfg.pool_size, cfg.top_t)) row[t] = wt;
        }
        r = evaluate_objective(state.model, nullptr, pool, batch, coef,
                               TeacherWeights::constant(std::move(w)), opts);
        break;
    }
    case Variant::MOPD:
    case Variant::MOPD_NO_MPS:
        coef = {cfg.alpha, 1.0 - cfg.alpha, v == Variant::MOPD ? cfg.beta : 0.0};
        r = evaluate_objective(state.model, &state.gate, pool, batch, coef, TeacherWeights::gate(), opts);
        break;
    }
    r.loss.alpha = coef.ce;
    r.loss.beta = coef.mps;
    r.loss.total = coef.ce * r.loss.ce + coef.mpd * r.loss.mpd + coef.mps * r.loss.mps;
    return r;
}

namespace {

bool out_of_bounds(double x, double threshold) { return !std::isfinite(x) || std::abs(x) > threshold; }

} // namespace

LossBreakdown training_step(TrainState& state, const Batch& batch, const TrainConfig& cfg,
                            const TeacherPool* pool, const std::vector<int>& classes, double lr_scale) {
    CombinedResult r = batch_objective(state, batch, cfg, pool, classes);
    const LossBreakdown& l = r.loss;
    const double th = cfg.abort_threshold;
    if (out_of_bounds(l.ce, th) || out_of_bounds(l.mpd, th) || out_of_bounds(l.mps, th) ||
        out_of_bounds(l.total, th) || !all_finite(r.grad_prompt) ||
        (!r.grad_gate.empty() && !all_finite(r.grad_gate))) {
        throw NumericalAbort("numerical abort at epoch " + std::to_string(state.epoch) + " step " +
                                 std::to_string(state.step),
                             state, l);
    }
    const double lr = cfg.lr * lr_scale;
    axpy(-lr, r.grad_prompt, state.model.prompt.vectors);
    if (uses_gate(cfg.variant) && !r.grad_gate.empty()) axpy(-lr, r.grad_gate, state.gate.w);
    state.history.push_back({state.epoch, state.step, l, r.mean_gate_entropy});
    ++state.step;
    return l;
}

TrainState train(const TrainConfig& cfg, const std::vector<Instance>& dataset,
                 const FrozenTextEncoder& encoder, const ClassVocabulary& vocabulary,
                 const TeacherPool* pool, const std::vector<int>& classes) {
    if (dataset.empty()) throw Error("empty training set");
    TrainState state = init_train_state(cfg, encoder, vocabulary);
    const std::size_t n = dataset.size();
    const std::size_t per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const double total_steps = static_cast<double>(per_epoch * cfg.epochs);
    std::vector<std::size_t> order(n);
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        state.epoch = e;
        std::iota(order.begin(), order.end(), std::size_t{0});
        state.rng.shuffle(order);
        for (std::size_t b = 0; b < n; b += cfg.batch_size) {
            Batch batch;
            for (std::size_t i = b; i < std::min(n, b + cfg.batch_size); ++i) batch.push_back(dataset[order[i]]);
            double scale = 1.0;
            if (cfg.cosine_decay) {
                scale = 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(state.step) / total_steps));
            }
            training_step(state, batch, cfg, pool, classes, scale);
        }
    }
    state.epoch = cfg.epochs;
    return state;
}

Vector mean_gate_weights(const GatingNetwork& gate, const std::vector<Instance>& instances) {
    Vector m(gate.num_teachers(), 0.0);
    if (instances.empty()) return m;
    for (const Instance& inst : instances) {
        const GateOutput g = gate_forward(gate, inst.f);
        for (std::size_t t = 0; t < m.size(); ++t) m[t] += g.weights[t];
    }
    for (auto& x : m) x /= static_cast<double>(instances.size());
    return m;
}

Checkpoint make_checkpoint(const TrainState& state, const TrainConfig& cfg) {
    Checkpoint ck;
    ck.prompt = state.model.prompt;
    ck.tau = state.model.tau;
    if (uses_gate(cfg.variant)) ck.gate = state.gate;
    ck.variant = to_string(cfg.variant);
    ck.seed = cfg.seed;
    ck.steps = state.step;
    ck.final_loss = state.history.empty() ? 0.0 : state.history.back().loss.total;
    return ck;
}

StudentModel student_from_checkpoint(const Checkpoint& ck, const FrozenTextEncoder& encoder,
                                     const ClassVocabulary& vocabulary) {
    StudentModel m;
    m.prompt = ck.prompt;
    m.encoder = encoder;
    m.vocabulary = vocabulary;
    m.tau = ck.tau;
    if (m.prompt.vectors.cols() != encoder.d_e()) throw Error("checkpoint prompt does not match backbone");
    return m;
}

} // namespace mopd
