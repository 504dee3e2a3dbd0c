// Copyright (c) 2026, MoPD lab contributors
// SPDX-License-Identifier: Apache-2.0
//
// CE, single-teacher distillation, mixture distillation, selection loss,
// their weighted combination and the transfer-loss variants. All values and
// gradients are analytic; sums run over the batch in index order.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mopd/backbone.hpp"
#include "mopd/gating.hpp"
#include "mopd/numerics.hpp"
#include "mopd/prompt_model.hpp"

namespace mopd {

struct Instance {
    Vector f;
    int label = 0;
    std::size_t id = 0;
};

using Batch = std::vector<Instance>;

enum class TransferKind { KL, MMD, COSINE, L1 };

std::string to_string(TransferKind k);
TransferKind transfer_kind_from_string(const std::string& s);
std::string to_string(KlDirection d);
KlDirection kl_direction_from_string(const std::string& s);

struct ObjectiveOptions {
    KlDirection kl_direction = KlDirection::FIRST_ARG_REF;
    bool mean_reduction = false;
    TransferKind transfer = TransferKind::KL;
    // Label space of the softmax; empty = all classes.
    std::vector<int> classes;
};

struct LossBreakdown {
    double ce = 0.0;
    double mpd = 0.0;
    double mps = 0.0;
    double total = 0.0;
    double alpha = 1.0;
    double beta = 0.0;
};

struct LossResult {
    double value = 0.0;
    Matrix grad_prompt; // M x d_e
    Matrix grad_gate;   // d x H, zero when the loss does not touch W_g
};

struct CombinedResult {
    LossBreakdown loss;
    Matrix grad_prompt;
    Matrix grad_gate;
    // Unweighted per-term gradients.
    Matrix grad_prompt_ce, grad_prompt_mpd, grad_prompt_mps;
    Matrix grad_gate_ce, grad_gate_mpd, grad_gate_mps;
    double mean_gate_entropy = 0.0;
};

// Where the per-instance teacher weights come from.
struct TeacherWeights {
    enum class Source { GATE, FIXED } source = Source::GATE;
    // FIXED: one H-vector per batch instance (entries >= 0).
    std::vector<Vector> fixed;

    static TeacherWeights gate() { return {}; }
    static TeacherWeights constant(std::vector<Vector> w) {
        return {Source::FIXED, std::move(w)};
    }
};

struct TermCoefficients {
    double ce = 1.0;
    double mpd = 0.0;
    double mps = 0.0;
};

// General entry point used by the public losses and the trainer.
CombinedResult evaluate_objective(const StudentModel& model, const GatingNetwork* gate,
                                  const TeacherPool* pool, const Batch& batch,
                                  const TermCoefficients& coef, const TeacherWeights& weights,
                                  const ObjectiveOptions& opts);

LossResult ce_loss(const StudentModel& model, const Batch& batch, const ObjectiveOptions& opts = {});

LossResult pd_loss(const StudentModel& model, const Matrix& teacher_table, const Batch& batch,
                   const ObjectiveOptions& opts = {});

LossResult mpd_loss(const StudentModel& model, const GatingNetwork& gate, const TeacherPool& pool,
                    const Batch& batch, const ObjectiveOptions& opts = {});

// No student argument: the selection loss only sees frozen teachers and W_g.
LossResult mps_loss(const GatingNetwork& gate, const TeacherPool& pool, const Batch& batch,
                    double tau, const ObjectiveOptions& opts = {});

CombinedResult combined_loss(const StudentModel& model, const GatingNetwork& gate,
                             const TeacherPool& pool, const Batch& batch, double alpha,
                             double beta, const ObjectiveOptions& opts = {});

LossResult transfer_variant_loss(TransferKind kind, const StudentModel& model,
                                 const GatingNetwork& gate, const TeacherPool& pool,
                                 const Batch& batch, const ObjectiveOptions& opts = {});

} // namespace mopd
