// Copyright (c) 2026, MoPD lab contributors
// SPDX-License-Identifier: Apache-2.0
//
// The student: a class-shared soft prompt read through the frozen text encoder.

#pragma once

#include <vector>

#include "mopd/backbone.hpp"
#include "mopd/numerics.hpp"

namespace mopd {

struct SoftPrompt {
    Matrix vectors; // M x d_e

    std::size_t length() const { return vectors.rows(); }
};

struct StudentModel {
    SoftPrompt prompt;
    FrozenTextEncoder encoder;
    ClassVocabulary vocabulary;
    double tau = 0.01;

    std::size_t num_classes() const { return vocabulary.num_classes(); }
};

SoftPrompt init_soft_prompt(std::size_t m, std::size_t d_e, double stddev, std::uint64_t seed);

// Label spaces: an empty class list means all classes in vocabulary order.
std::vector<int> resolve_classes(const StudentModel& model, const std::vector<int>& classes);

// Class rows plus encoder caches for the backward pass.
struct StudentTable {
    std::vector<int> classes;
    Matrix rows; // |classes| x d
    std::vector<TextEncoderCache> caches;
};

StudentTable build_student_table(const StudentModel& model, const std::vector<int>& classes = {});
Matrix student_text_table(const StudentModel& model, const std::vector<int>& classes = {});

// Gradient w.r.t. the prompt vectors (M x d_e) given dL/d(row) for every row.
Matrix student_table_backward(const StudentModel& model, const StudentTable& table,
                              const Matrix& row_grads);

// cos(t^c, f) / tau for each row of the table.
Vector student_logits(const StudentTable& table, const Vector& f, double tau);

Distribution p_soft(const StudentModel& model, const Vector& f,
                    const std::vector<int>& classes = {});
Vector log_p_soft(const StudentModel& model, const Vector& f,
                  const std::vector<int>& classes = {});

// Class id of the argmax; ties go to the earliest entry of the label space.
int predict(const StudentModel& model, const Vector& f, const std::vector<int>& classes = {});
int predict(const StudentTable& table, const Vector& f);

// Row c: d log p_soft(c|f) / d v_i (the same for every i).
struct PromptJacobian {
    std::vector<int> classes;
    Matrix dlogp; // |classes| x d_e
};
PromptJacobian grad_p_soft_wrt_prompt(const StudentModel& model, const Vector& f,
                                      const std::vector<int>& classes = {});

} // namespace mopd
