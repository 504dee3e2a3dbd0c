// Copyright (c) 2026, MoPD lab contributors
// SPDX-License-Identifier: Apache-2.0

#include "mopd/gating.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "mopd/rng.hpp"

namespace mopd {

GatingNetwork init_gating(std::size_t d, std::size_t h, std::size_t top_t, double stddev,
                          std::uint64_t seed) {
    if (top_t < 1 || top_t > h) throw Error("T must satisfy 1 <= T <= H");
    Rng rng(derive_seed(seed, 0x6A));
    GatingNetwork g;
    g.top_t = top_t;
    g.w = Matrix(d, h);
    for (std::size_t i = 0; i < g.w.size(); ++i) g.w[i] = stddev * rng.normal();
    return g;
}

namespace {

std::vector<std::size_t> ranked(const Vector& u) {
    std::vector<std::size_t> idx(u.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return u[a] > u[b]; });
    return idx;
}

} // namespace

MaskedLogits keep_top(const Vector& u, std::size_t t) {
    if (t < 1 || t > u.size()) throw Error("T out of range");
    MaskedLogits m;
    m.values = u;
    m.masked.assign(u.size(), true);
    const auto idx = ranked(u);
    for (std::size_t k = 0; k < t; ++k) m.masked[idx[k]] = false;
    for (std::size_t i = 0; i < u.size(); ++i) {
        if (m.masked[i]) m.values[i] = 0.0;
    }
    return m;
}

GateOutput gate_forward(const GatingNetwork& g, const Vector& f) {
    if (f.size() != g.w.rows()) throw Error("dimension mismatch");
    GateOutput out;
    out.logits = matvec_transposed(g.w, f);
    const MaskedLogits kept = keep_top(out.logits, g.top_t);
    out.weights = softmax(kept);
    for (std::size_t i = 0; i < kept.size(); ++i) {
        if (!kept.masked[i]) out.selected.push_back(i);
    }
    return out;
}

void gate_backward_accumulate(const Vector& f, const Vector& upstream, const GateOutput& out,
                              double scale, Matrix& acc) {
    double mean = 0.0;
    for (std::size_t j : out.selected) mean += out.weights[j] * upstream[j];
    const std::size_t d = f.size();
    for (std::size_t j : out.selected) {
        const double dl = scale * out.weights[j] * (upstream[j] - mean);
        if (dl == 0.0) continue;
        for (std::size_t r = 0; r < d; ++r) acc(r, j) += f[r] * dl;
    }
}

Matrix gate_backward(const GatingNetwork& g, const Vector& f, const Vector& upstream,
                     const GateOutput& out) {
    if (upstream.size() != g.num_teachers()) throw Error("upstream length mismatch");
    Matrix grad(g.w.rows(), g.w.cols());
    gate_backward_accumulate(f, upstream, out, 1.0, grad);
    return grad;
}

Matrix gate_backward(const GatingNetwork& g, const Vector& f, const Vector& upstream) {
    return gate_backward(g, f, upstream, gate_forward(g, f));
}

double selection_margin(const Vector& logits, std::size_t t) {
    if (t >= logits.size()) return std::numeric_limits<double>::infinity();
    const auto idx = ranked(logits);
    return logits[idx[t - 1]] - logits[idx[t]];
}

} // namespace mopd
