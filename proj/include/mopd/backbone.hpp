// Copyright (c) 2026, MoPD lab contributors
// SPDX-License-Identifier: Apache-2.0
//
// Frozen encoder surrogates and teacher embedding tables.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mopd/numerics.hpp"

namespace mopd {

// t = normalize(P * mean(v_1..v_M, w)), P is d x d_e.
struct FrozenTextEncoder {
    Matrix projection;

    std::size_t d() const { return projection.rows(); }
    std::size_t d_e() const { return projection.cols(); }
};

struct FrozenImageEncoder {
    bool identity = true;
    Matrix map; // d x raw_dim when not identity
};

struct ClassVocabulary {
    Matrix tokens; // C x d_e

    std::size_t num_classes() const { return tokens.rows(); }
};

struct TeacherPool {
    std::vector<Matrix> tables; // each C x d, unit rows
    std::vector<std::string> labels;
    std::vector<bool> noisy;

    std::size_t size() const { return tables.size(); }
    std::size_t num_noisy() const;
    // First h teachers.
    TeacherPool prefix(std::size_t h) const;
};

struct Backbone {
    std::uint64_t seed = 0;
    FrozenTextEncoder text;
    FrozenImageEncoder image;
};

// Orthonormal rows (d <= d_e) or columns (d > d_e) from seeded Gram-Schmidt.
Backbone make_backbone(std::size_t d_e, std::size_t d, std::uint64_t seed,
                       std::size_t raw_dim = 0);

Vector encode_text(const FrozenTextEncoder& enc, const Matrix& prompt_vectors,
                   const Vector& class_token);

// Gradient of a scalar w.r.t. the pre-pool sum s = sum_i v_i + w, given the
// upstream gradient on the unit output t. Every v_i receives this gradient.
struct TextEncoderCache {
    Vector pooled;   // P * mean
    double pooled_norm = 0.0;
    Vector output;   // normalized
};
TextEncoderCache encode_text_cached(const FrozenTextEncoder& enc, const Vector& prompt_sum,
                                    std::size_t m, const Vector& class_token);
Vector encode_text_backward(const FrozenTextEncoder& enc, const TextEncoderCache& cache,
                            std::size_t m, const Vector& upstream);

// d t / d v_i, a d x d_e matrix (identical for every i).
Matrix encode_text_jacobian(const FrozenTextEncoder& enc, const Matrix& prompt_vectors,
                            const Vector& class_token);

Vector encode_image(const FrozenImageEncoder& enc, const Vector& raw);

// softmax_c cos(t^c, f) / tau over the given class rows (all when empty).
Distribution teacher_distribution(const TeacherPool& pool, std::size_t t_index, const Vector& f,
                                  double tau, const std::vector<int>& classes = {});
Vector teacher_log_distribution(const TeacherPool& pool, std::size_t t_index, const Vector& f,
                                double tau, const std::vector<int>& classes = {});

} // namespace mopd
