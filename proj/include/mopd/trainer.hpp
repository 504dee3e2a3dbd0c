// Copyright (c) 2026, MoPD lab contributors
// SPDX-License-Identifier: Apache-2.0
//
// Mini-batch SGD over (soft prompt, W_g) for every method variant.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mopd/backbone.hpp"
#include "mopd/gating.hpp"
#include "mopd/objectives.hpp"
#include "mopd/prompt_model.hpp"
#include "mopd/rng.hpp"

namespace mopd {

enum class Variant { CE_ONLY, SIPD, MOPD, MOPD_R, MOPD_NO_MPS };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);
bool uses_pool(Variant v);
bool uses_gate(Variant v);

enum class LabelSpace { ALL, BASE };
std::string to_string(LabelSpace s);
LabelSpace label_space_from_string(const std::string& s);

struct TrainConfig {
    double alpha = 0.8;
    double beta = 0.0005;
    std::size_t top_t = 2;
    std::size_t pool_size = 12;
    std::size_t prompt_length = 4;
    double tau = 0.01;
    double lr = 0.01;
    std::size_t epochs = 200;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    Variant variant = Variant::MOPD;
    TransferKind transfer = TransferKind::KL;
    KlDirection kl_direction = KlDirection::FIRST_ARG_REF;
    bool mean_reduction = false;
    bool cosine_decay = false;
    std::size_t sipd_teacher = 0;
    LabelSpace label_space = LabelSpace::ALL;
    double prompt_init_std = 0.02;
    double gate_init_std = 0.01;
    double abort_threshold = 1e6;

    void validate() const;
};

struct LogRow {
    std::size_t epoch = 0;
    std::size_t step = 0;
    LossBreakdown loss;
    double mean_gate_entropy = 0.0;
};

struct TrainState {
    StudentModel model;
    GatingNetwork gate;
    std::size_t epoch = 0;
    std::size_t step = 0;
    Rng rng;
    std::vector<LogRow> history;
};

class NumericalAbort : public Error {
public:
    NumericalAbort(const std::string& msg, TrainState state, LossBreakdown loss)
        : Error(msg), state_(std::move(state)), loss_(loss) {}
    const TrainState& state() const { return state_; }
    const LossBreakdown& loss() const { return loss_; }

private:
    TrainState state_;
    LossBreakdown loss_;
};

TrainState init_train_state(const TrainConfig& cfg, const FrozenTextEncoder& encoder,
                            const ClassVocabulary& vocabulary);

ObjectiveOptions objective_options(const TrainConfig& cfg, const std::vector<int>& classes);

// Loss and gradients for one batch without touching parameters. Consumes
// state.rng for MOPD_R teacher draws.
CombinedResult batch_objective(TrainState& state, const Batch& batch, const TrainConfig& cfg,
                               const TeacherPool* pool, const std::vector<int>& classes);

// One simultaneous SGD update of prompt and gate. Throws NumericalAbort.
LossBreakdown training_step(TrainState& state, const Batch& batch, const TrainConfig& cfg,
                            const TeacherPool* pool, const std::vector<int>& classes = {},
                            double lr_scale = 1.0);

// Runs cfg.epochs over the dataset. classes: training label space (empty = all).
TrainState train(const TrainConfig& cfg, const std::vector<Instance>& dataset,
                 const FrozenTextEncoder& encoder, const ClassVocabulary& vocabulary,
                 const TeacherPool* pool, const std::vector<int>& classes = {});

// Mean gate weight per teacher over the instances.
Vector mean_gate_weights(const GatingNetwork& gate, const std::vector<Instance>& instances);

struct Checkpoint {
    SoftPrompt prompt;
    double tau = 0.01;
    std::optional<GatingNetwork> gate;
    std::string variant;
    std::uint64_t seed = 0;
    std::size_t steps = 0;
    double final_loss = 0.0;
    std::string backbone_hash;
    std::string task_hash;
    std::string pool_hash;
};

Checkpoint make_checkpoint(const TrainState& state, const TrainConfig& cfg);
StudentModel student_from_checkpoint(const Checkpoint& ck, const FrozenTextEncoder& encoder,
                                     const ClassVocabulary& vocabulary);

} // namespace mopd
