// Copyright (c) 2026, MoPD lab contributors
// SPDX-License-Identifier: Apache-2.0
//
// Evaluation protocols and the harmonic-mean metric.

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mopd/synthdata.hpp"
#include "mopd/trainer.hpp"

namespace mopd {

// 2ab / (a + b), 0 when a + b = 0. Inputs must lie in [0, scale].
double harmonic_mean(double acc_base, double acc_new, double scale = 1.0);

struct EvalReport {
    std::string protocol = "base-to-new";
    double acc_base = 0.0;
    double acc_new = 0.0;
    double h = 0.0;
    std::vector<std::pair<int, double>> per_class;
    Vector gate_stats; // mean gate weight per teacher over the base training split
    std::string config_hash;
};

// Counts reads of training instances by class group.
struct AccessAudit {
    std::size_t base_train_reads = 0;
    std::size_t new_train_reads = 0;
};

// Training split of the base classes, with every read recorded.
std::vector<Instance> base_training_split(const SyntheticTask& task, AccessAudit* audit = nullptr,
                                          std::size_t k = 0);

std::vector<int> training_label_space(const TrainConfig& cfg, const SyntheticTask& task);

EvalReport evaluate_base_to_new(const Checkpoint& ck, const SyntheticTask& task,
                                AccessAudit* audit = nullptr);

// Predicted class ids for every test instance, scored within its split.
std::vector<int> base_to_new_predictions(const Checkpoint& ck, const SyntheticTask& task);

struct RunOutcome {
    TrainState state;
    Checkpoint checkpoint;
    EvalReport report;
    Vector initial_gate_stats;
};

// Train on the base split, then evaluate base-to-new.
RunOutcome run_base_to_new(const TrainConfig& cfg, const SyntheticTask& task, const TeacherPool* pool,
                           AccessAudit* audit = nullptr);

struct FewShotRow {
    std::size_t shots = 0;
    double mean_acc = 0.0;
    double std_acc = 0.0;
};

// Trains on all classes with k shots per class; accuracy over all test data.
// Replicates use training seeds cfg.seed .. cfg.seed + seeds - 1.
std::vector<FewShotRow> evaluate_few_shot(const TrainConfig& cfg, const SyntheticTask& task,
                                          const TeacherPool* pool, const std::vector<std::size_t>& shots,
                                          std::size_t seeds = 3);

struct RobustnessRow {
    std::string mixture;
    std::string variant;
    double acc_base = 0.0;
    double acc_new = 0.0;
    double h = 0.0;
    double noisy_mass_initial = 0.0;
    double noisy_mass_final = 0.0;
};

// Per mixture: MOPD and MOPD_R with the same seeds, averaged over replicates.
std::vector<RobustnessRow> evaluate_robustness(const TrainConfig& cfg, const SyntheticTask& task,
                                               const std::vector<TeacherSpec>& mixtures,
                                               std::size_t seeds = 3);

struct DomainShiftRow {
    double shift = 0.0;
    double acc = 0.0; // all test classes, all labels
};

std::vector<DomainShiftRow> evaluate_domain_shift(const Checkpoint& ck, const SyntheticTask& task,
                                                  const std::vector<double>& shifts);

struct SummaryRow {
    std::string key;
    std::size_t n = 0;
    double acc_base = 0.0, acc_new = 0.0, h = 0.0;
    double h_std = 0.0;
};

SummaryRow summarize(const std::string& key, const std::vector<EvalReport>& reports);

double noisy_gate_mass(const Vector& gate_stats, const TeacherPool& pool);

std::string format_percent(double fraction);

} // namespace mopd
