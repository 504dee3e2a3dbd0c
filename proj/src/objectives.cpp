// Copyright (c) 2026, MoPD lab contributors
// SPDX-License-Identifier: Apache-2.0

#include "mopd/objectives.hpp"

#include <algorithm>
#include <cmath>

namespace mopd {

std::string to_string(TransferKind k) {
    switch (k) {
    case TransferKind::KL: return "KL";
    case TransferKind::MMD: return "MMD";
    case TransferKind::COSINE: return "COSINE";
    case TransferKind::L1: return "L1";
    }
    return "KL";
}

TransferKind transfer_kind_from_string(const std::string& s) {
    if (s == "KL") return TransferKind::KL;
    if (s == "MMD") return TransferKind::MMD;
    if (s == "COSINE") return TransferKind::COSINE;
    if (s == "L1") return TransferKind::L1;
    throw Error("unknown transfer variant: " + s);
}

std::string to_string(KlDirection d) {
    return d == KlDirection::FIRST_ARG_REF ? "FIRST_ARG_REF" : "SECOND_ARG_REF";
}

KlDirection kl_direction_from_string(const std::string& s) {
    if (s == "FIRST_ARG_REF") return KlDirection::FIRST_ARG_REF;
    if (s == "SECOND_ARG_REF") return KlDirection::SECOND_ARG_REF;
    throw Error("unknown kl_direction: " + s);
}

namespace {

const double kLogFloor = std::log(kProbFloor);

struct Discrepancy {
    double value = 0.0;
    Vector dlogits; // d value / d student logits (distribution-based kinds)
};

// Distribution discrepancy between student (lp) and teacher (lq) log-probs.
Discrepancy distribution_discrepancy(TransferKind kind, KlDirection dir, const Vector& lp,
                                     const Vector& lq) {
    const std::size_t n = lp.size();
    Discrepancy out;
    out.dlogits.assign(n, 0.0);
    Vector p(n), q(n);
    for (std::size_t i = 0; i < n; ++i) {
        p[i] = std::exp(lp[i]);
        q[i] = std::exp(lq[i]);
    }
    if (kind == TransferKind::MMD) {
        Vector g(n);
        double pg = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double diff = p[i] - q[i];
            out.value += diff * diff;
            g[i] = 2.0 * diff;
            pg += p[i] * g[i];
        }
        for (std::size_t i = 0; i < n; ++i) out.dlogits[i] = p[i] * (g[i] - pg);
        return out;
    }
    if (dir == KlDirection::FIRST_ARG_REF) {
        Vector term(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            if (p[i] == 0.0) continue;
            term[i] = lp[i] - std::max(lq[i], kLogFloor);
            out.value += p[i] * term[i];
        }
        for (std::size_t i = 0; i < n; ++i) out.dlogits[i] = p[i] * (term[i] - out.value);
        return out;
    }
    // SECOND_ARG_REF: sum q ln(q / p), p floored
    double q_live = 0.0;
    std::vector<bool> live(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        if (q[i] == 0.0) continue;
        const bool floored = lp[i] < kLogFloor;
        out.value += q[i] * (lq[i] - (floored ? kLogFloor : lp[i]));
        if (!floored) {
            live[i] = true;
            q_live += q[i];
        }
    }
    for (std::size_t i = 0; i < n; ++i) out.dlogits[i] = p[i] * q_live - (live[i] ? q[i] : 0.0);
    return out;
}

// Embedding discrepancy (instance independent) and its gradient on the
// student rows.
struct EmbeddingDiscrepancy {
    double value = 0.0;
    Matrix drows;
};

EmbeddingDiscrepancy embedding_discrepancy(TransferKind kind, const Matrix& student_rows,
                                           const Matrix& teacher, const std::vector<int>& classes) {
    const std::size_t n = student_rows.rows(), d = student_rows.cols();
    EmbeddingDiscrepancy out;
    out.drows = Matrix(n, d);
    for (std::size_t c = 0; c < n; ++c) {
        const double* s = student_rows.row_ptr(c);
        const double* t = teacher.row_ptr(static_cast<std::size_t>(classes[c]));
        if (kind == TransferKind::L1) {
            for (std::size_t j = 0; j < d; ++j) {
                const double diff = s[j] - t[j];
                out.value += std::abs(diff);
                out.drows(c, j) = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
            }
        } else {
            const double sn = std::sqrt(dot(s, s, d));
            const double tn = std::sqrt(dot(t, t, d));
            const double cs = dot(s, t, d) / (sn * tn);
            out.value += 1.0 - cs;
            for (std::size_t j = 0; j < d; ++j) {
                out.drows(c, j) = -(t[j] / tn - cs * s[j] / sn) / sn;
            }
        }
    }
    return out;
}

bool is_embedding_kind(TransferKind k) {
    return k == TransferKind::COSINE || k == TransferKind::L1;
}

void check_batch(const Batch& batch) {
    if (batch.empty()) throw Error("empty batch");
}

std::vector<int> position_map(const std::vector<int>& classes, std::size_t c) {
    std::vector<int> pos(c, -1);
    for (std::size_t i = 0; i < classes.size(); ++i) pos[static_cast<std::size_t>(classes[i])] = static_cast<int>(i);
    return pos;
}

int label_position(const std::vector<int>& pos, int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= pos.size() || pos[static_cast<std::size_t>(label)] < 0) {
        throw Error("label outside the label space");
    }
    return pos[static_cast<std::size_t>(label)];
}

} // namespace

CombinedResult evaluate_objective(const StudentModel& model, const GatingNetwork* gate,
                                  const TeacherPool* pool, const Batch& batch,
                                  const TermCoefficients& coef, const TeacherWeights& weights,
                                  const ObjectiveOptions& opts) {
    check_batch(batch);
    const bool use_pool = pool != nullptr;
    const bool use_gate = use_pool && weights.source == TeacherWeights::Source::GATE;
    if (use_gate && gate == nullptr) throw Error("gated objective requires a gating network");
    if (use_gate && gate->num_teachers() != pool->size()) throw Error("gate and pool disagree on H");
    if (use_pool && weights.source == TeacherWeights::Source::FIXED && weights.fixed.size() != batch.size()) {
        throw Error("fixed teacher weights must cover the batch");
    }

    const StudentTable table = build_student_table(model, opts.classes);
    const std::vector<int> pos = position_map(table.classes, model.num_classes());
    const std::size_t n = table.classes.size();
    const std::size_t d = table.rows.cols();
    const std::size_t h = use_pool ? pool->size() : 0;
    const double tau = model.tau;

    Matrix rows_ce(n, d), rows_mpd(n, d);
    Matrix gate_mpd, gate_mps;
    if (gate != nullptr) {
        gate_mpd = Matrix(gate->w.rows(), gate->w.cols());
        gate_mps = Matrix(gate->w.rows(), gate->w.cols());
    }

    // Embedding-space transfer terms do not depend on the instance.
    std::vector<EmbeddingDiscrepancy> emb;
    std::vector<double> emb_weight;
    if (use_pool && is_embedding_kind(opts.transfer)) {
        emb.resize(h);
        emb_weight.assign(h, 0.0);
    }

    CombinedResult res;
    double ce_sum = 0.0, mpd_sum = 0.0, mps_sum = 0.0, ent_sum = 0.0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const Instance& inst = batch[b];
        const int y = label_position(pos, inst.label);
        const Vector fhat = normalize(inst.f);
        const Vector logits = student_logits(table, inst.f, tau);
        const Vector lp = log_softmax(logits);
        Vector dl_ce(n), dl_mpd(n, 0.0);
        for (std::size_t c = 0; c < n; ++c) dl_ce[c] = std::exp(lp[c]);
        dl_ce[static_cast<std::size_t>(y)] -= 1.0;
        ce_sum += -lp[static_cast<std::size_t>(y)];

        if (use_pool) {
            GateOutput go;
            Vector w;
            std::vector<std::size_t> active;
            if (use_gate) {
                go = gate_forward(*gate, inst.f);
                w = go.weights;
                active = go.selected;
            } else {
                w = weights.fixed[b];
                if (w.size() != h) throw Error("fixed weight vector length must equal H");
                for (std::size_t t = 0; t < h; ++t) {
                    if (w[t] != 0.0) active.push_back(t);
                }
            }
            ent_sum += entropy(w);
            Vector up_mpd(h, 0.0), up_mps(h, 0.0);
            for (std::size_t t : active) {
                const Vector lq = teacher_log_distribution(*pool, t, inst.f, tau, table.classes);
                double disc = 0.0;
                if (is_embedding_kind(opts.transfer)) {
                    if (emb[t].drows.empty()) {
                        emb[t] = embedding_discrepancy(opts.transfer, table.rows, pool->tables[t],
                                                       table.classes);
                    }
                    disc = emb[t].value;
                    emb_weight[t] += w[t];
                } else {
                    const Discrepancy dsc = distribution_discrepancy(opts.transfer, opts.kl_direction, lp, lq);
                    disc = dsc.value;
                    for (std::size_t c = 0; c < n; ++c) dl_mpd[c] += w[t] * dsc.dlogits[c];
                }
                mpd_sum += w[t] * disc;
                up_mpd[t] = disc;
                const double nll = -std::max(lq[static_cast<std::size_t>(y)], kLogFloor);
                mps_sum += w[t] * nll;
                up_mps[t] = nll;
            }
            if (use_gate) {
                gate_backward_accumulate(inst.f, up_mpd, go, 1.0, gate_mpd);
                gate_backward_accumulate(inst.f, up_mps, go, 1.0, gate_mps);
            }
        }
        for (std::size_t c = 0; c < n; ++c) {
            double* rc = rows_ce.row_ptr(c);
            double* rm = rows_mpd.row_ptr(c);
            for (std::size_t j = 0; j < d; ++j) {
                rc[j] += dl_ce[c] * fhat[j] / tau;
                rm[j] += dl_mpd[c] * fhat[j] / tau;
            }
        }
    }
    for (std::size_t t = 0; t < emb.size(); ++t) {
        if (emb_weight[t] != 0.0) axpy(emb_weight[t], emb[t].drows, rows_mpd);
    }

    const double scale = opts.mean_reduction ? 1.0 / static_cast<double>(batch.size()) : 1.0;
    res.grad_prompt_ce = student_table_backward(model, table, rows_ce);
    res.grad_prompt_mpd = student_table_backward(model, table, rows_mpd);
    res.grad_prompt_mps = Matrix(model.prompt.vectors.rows(), model.prompt.vectors.cols());
    if (gate != nullptr) {
        res.grad_gate_ce = Matrix(gate->w.rows(), gate->w.cols());
        res.grad_gate_mpd = gate_mpd;
        res.grad_gate_mps = gate_mps;
    }
    if (scale != 1.0) {
        for (Matrix* m : {&res.grad_prompt_ce, &res.grad_prompt_mpd, &res.grad_gate_mpd, &res.grad_gate_mps}) {
            for (auto& x : m->data()) x *= scale;
        }
    }

    res.loss.ce = ce_sum * scale;
    res.loss.mpd = mpd_sum * scale;
    res.loss.mps = mps_sum * scale;
    res.loss.total = coef.ce * res.loss.ce + coef.mpd * res.loss.mpd + coef.mps * res.loss.mps;
    res.mean_gate_entropy = use_pool ? ent_sum / static_cast<double>(batch.size()) : 0.0;

    res.grad_prompt = Matrix(res.grad_prompt_ce.rows(), res.grad_prompt_ce.cols());
    axpy(coef.ce, res.grad_prompt_ce, res.grad_prompt);
    axpy(coef.mpd, res.grad_prompt_mpd, res.grad_prompt);
    if (gate != nullptr) {
        res.grad_gate = Matrix(gate->w.rows(), gate->w.cols());
        if (use_gate) {
            axpy(coef.mpd, res.grad_gate_mpd, res.grad_gate);
            axpy(coef.mps, res.grad_gate_mps, res.grad_gate);
        }
    }
    return res;
}

LossResult ce_loss(const StudentModel& model, const Batch& batch, const ObjectiveOptions& opts) {
    auto r = evaluate_objective(model, nullptr, nullptr, batch, {1.0, 0.0, 0.0}, TeacherWeights::gate(), opts);
    return {r.loss.ce, r.grad_prompt, {}};
}

LossResult pd_loss(const StudentModel& model, const Matrix& teacher_table, const Batch& batch,
                   const ObjectiveOptions& opts) {
    TeacherPool pool;
    pool.tables.push_back(teacher_table);
    pool.labels.push_back("teacher");
    pool.noisy.push_back(false);
    std::vector<Vector> w(batch.size(), Vector{1.0});
    auto r = evaluate_objective(model, nullptr, &pool, batch, {0.0, 1.0, 0.0},
                                TeacherWeights::constant(std::move(w)), opts);
    return {r.loss.mpd, r.grad_prompt_mpd, {}};
}

LossResult mpd_loss(const StudentModel& model, const GatingNetwork& gate, const TeacherPool& pool,
                    const Batch& batch, const ObjectiveOptions& opts) {
    auto r = evaluate_objective(model, &gate, &pool, batch, {0.0, 1.0, 0.0}, TeacherWeights::gate(), opts);
    return {r.loss.mpd, r.grad_prompt_mpd, r.grad_gate_mpd};
}

LossResult mps_loss(const GatingNetwork& gate, const TeacherPool& pool, const Batch& batch,
                    double tau, const ObjectiveOptions& opts) {
    check_batch(batch);
    if (gate.num_teachers() != pool.size()) throw Error("gate and pool disagree on H");
    const std::size_t c_all = pool.tables.at(0).rows();
    std::vector<int> classes = opts.classes;
    if (classes.empty()) {
        for (std::size_t c = 0; c < c_all; ++c) classes.push_back(static_cast<int>(c));
    }
    const std::vector<int> pos = position_map(classes, c_all);
    LossResult out;
    out.grad_gate = Matrix(gate.w.rows(), gate.w.cols());
    for (const Instance& inst : batch) {
        const int y = label_position(pos, inst.label);
        const GateOutput go = gate_forward(gate, inst.f);
        Vector up(pool.size(), 0.0);
        for (std::size_t t : go.selected) {
            const Vector lq = teacher_log_distribution(pool, t, inst.f, tau, classes);
            up[t] = -std::max(lq[static_cast<std::size_t>(y)], kLogFloor);
            out.value += go.weights[t] * up[t];
        }
        gate_backward_accumulate(inst.f, up, go, 1.0, out.grad_gate);
    }
    if (opts.mean_reduction) {
        const double s = 1.0 / static_cast<double>(batch.size());
        out.value *= s;
        for (auto& x : out.grad_gate.data()) x *= s;
    }
    return out;
}

CombinedResult combined_loss(const StudentModel& model, const GatingNetwork& gate,
                             const TeacherPool& pool, const Batch& batch, double alpha, double beta,
                             const ObjectiveOptions& opts) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("alpha must lie in [0, 1]");
    if (!(beta >= 0.0)) throw Error("beta must be non-negative");
    auto r = evaluate_objective(model, &gate, &pool, batch, {alpha, 1.0 - alpha, beta},
                                TeacherWeights::gate(), opts);
    r.loss.alpha = alpha;
    r.loss.beta = beta;
    return r;
}

LossResult transfer_variant_loss(TransferKind kind, const StudentModel& model,
                                 const GatingNetwork& gate, const TeacherPool& pool,
                                 const Batch& batch, const ObjectiveOptions& opts) {
    ObjectiveOptions o = opts;
    o.transfer = kind;
    return mpd_loss(model, gate, pool, batch, o);
}

} // namespace mopd
