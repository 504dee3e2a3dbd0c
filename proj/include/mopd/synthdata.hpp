// Copyright (c) 2026, MoPD lab contributors
// SPDX-License-Identifier: Apache-2.0
//
// Seeded synthetic tasks in embedding space and teacher pools of
// controllable quality.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mopd/backbone.hpp"
#include "mopd/numerics.hpp"
#include "mopd/objectives.hpp"

namespace mopd {

struct TaskSpec {
    std::size_t num_classes = 20;
    std::size_t d = 32;
    std::size_t d_e = 32;
    std::size_t shots = 16;
    std::size_t test_per_class = 50;
    // Expected norm of the instance noise (noise ~ N(0, I/d)).
    double sigma_x = 1.0;
    double base_fraction = 0.5;
    std::uint64_t seed = 0;

    // Prototype geometry: shared axis weight and class clusters.
    double cone = 1.0;
    std::size_t clusters = 4;
    double cluster_spread = 1.0;
    double max_prototype_cos = 0.95;

    // Student class tokens: shared text-side bias and per-class noise.
    double text_gap = 1.0;
    double token_noise = 0.7;
    double token_scale = 2.0;
};

struct SyntheticTask {
    TaskSpec spec;
    Backbone backbone;
    Matrix prototypes; // C x d, unit rows
    ClassVocabulary vocabulary;
    std::vector<Instance> train; // shots per class, all classes, class-major
    std::vector<Instance> test;  // test_per_class per class, class-major
    std::vector<int> base_ids;
    std::vector<int> new_ids;
    double shift = 0.0;

    std::size_t num_classes() const { return prototypes.rows(); }
    int cluster_of(int c) const;
    bool is_base(int c) const;
};

struct TeacherSpec {
    // One task-related teacher per entry.
    std::vector<double> sigmas{0.6, 0.3, 0.4, 0.5, 0.7, 0.8, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0};
    std::size_t noisy = 0;
    // Fraction of teacher error shared across the pool.
    double rho = 0.8;
    // Noise multiplier on classes of the teacher's expert cluster (t mod K).
    double expert_factor = 0.3;
    std::uint64_t seed = 0;

    std::size_t task_related() const { return sigmas.size(); }
    std::size_t total() const { return sigmas.size() + noisy; }
};

// "12T", "12T+12N", "24N" style label.
std::string mixture_label(const TeacherSpec& spec);
// Parses "12T+12N", "24N", "12T" with default sigma cycling.
TeacherSpec parse_mixture(const std::string& label, const TeacherSpec& base = {});

Backbone make_task_backbone(const TaskSpec& spec);
SyntheticTask generate_task(const TaskSpec& spec);
SyntheticTask generate_task(const TaskSpec& spec, const Backbone& backbone);

TeacherPool generate_teacher_pool(const SyntheticTask& task, const TeacherSpec& spec);

SyntheticTask apply_domain_shift(const SyntheticTask& task, double shift);

// Training instances of the given classes, at most k per class (0 = all).
std::vector<Instance> training_subset(const SyntheticTask& task, const std::vector<int>& classes,
                                      std::size_t k = 0);
std::vector<Instance> test_subset(const SyntheticTask& task, const std::vector<int>& classes);

// Accuracy of a frozen table on instances, scored among the given classes.
double table_accuracy(const Matrix& table, const std::vector<Instance>& instances,
                      const std::vector<int>& classes);

} // namespace mopd
