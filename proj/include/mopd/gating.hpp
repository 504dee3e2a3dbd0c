// Copyright (c) 2026, MoPD lab contributors
// SPDX-License-Identifier: Apache-2.0
//
// G(f) = Softmax(KeepTop(f W_g, T)).

#pragma once

#include <cstdint>
#include <vector>

#include "mopd/numerics.hpp"

namespace mopd {

struct GatingNetwork {
    Matrix w;          // d x H
    std::size_t top_t = 2;

    std::size_t num_teachers() const { return w.cols(); }
};

GatingNetwork init_gating(std::size_t d, std::size_t h, std::size_t top_t, double stddev,
                          std::uint64_t seed);

// Keeps the T largest entries; ties at the boundary keep the lower index.
MaskedLogits keep_top(const Vector& u, std::size_t t);

struct GateOutput {
    Vector logits;                 // f W_g
    Distribution weights;          // H entries, masked ones exactly 0
    std::vector<std::size_t> selected; // kept indices, ascending
};

GateOutput gate_forward(const GatingNetwork& g, const Vector& f);

// dL/dW_g for one instance, with the kept set held fixed.
Matrix gate_backward(const GatingNetwork& g, const Vector& f, const Vector& upstream,
                     const GateOutput& out);
Matrix gate_backward(const GatingNetwork& g, const Vector& f, const Vector& upstream);

// Adds the gradient into acc (d x H) without allocating.
void gate_backward_accumulate(const Vector& f, const Vector& upstream, const GateOutput& out,
                              double scale, Matrix& acc);

// Gap between the T-th and (T+1)-th largest logits (infinity when T = H).
double selection_margin(const Vector& logits, std::size_t t);

} // namespace mopd
