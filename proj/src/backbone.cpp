// Copyright (c) 2026, MoPD lab contributors
// SPDX-License-Identifier: Apache-2.0

#include "mopd/backbone.hpp"

#include <cmath>

#include "mopd/rng.hpp"

namespace mopd {

namespace {

// Gram-Schmidt over the rows of a random k x n matrix (k <= n).
Matrix orthonormal_rows(std::size_t k, std::size_t n, Rng& rng) {
    Matrix q(k, n);
    for (std::size_t r = 0; r < k; ++r) {
        for (;;) {
            Vector v(n);
            for (auto& x : v) x = rng.normal();
            for (std::size_t p = 0; p < r; ++p) {
                const double c = dot(v.data(), q.row_ptr(p), n);
                for (std::size_t j = 0; j < n; ++j) v[j] -= c * q(p, j);
            }
            const double nv = norm(v);
            if (nv < 1e-8) continue;
            for (std::size_t j = 0; j < n; ++j) q(r, j) = v[j] / nv;
            break;
        }
    }
    return q;
}

Matrix random_orthonormal(std::size_t rows, std::size_t cols, Rng& rng) {
    if (rows <= cols) return orthonormal_rows(rows, cols, rng);
    Matrix t = orthonormal_rows(cols, rows, rng);
    Matrix out(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out(r, c) = t(c, r);
    return out;
}

} // namespace

std::size_t TeacherPool::num_noisy() const {
    std::size_t n = 0;
    for (bool b : noisy) n += b ? 1 : 0;
    return n;
}

TeacherPool TeacherPool::prefix(std::size_t h) const {
    if (h == 0 || h > size()) throw Error("teacher pool prefix out of range");
    TeacherPool p;
    p.tables.assign(tables.begin(), tables.begin() + static_cast<std::ptrdiff_t>(h));
    p.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(h));
    p.noisy.assign(noisy.begin(), noisy.begin() + static_cast<std::ptrdiff_t>(h));
    return p;
}

Backbone make_backbone(std::size_t d_e, std::size_t d, std::uint64_t seed, std::size_t raw_dim) {
    if (d_e == 0 || d == 0) throw Error("backbone dimensions must be positive");
    Rng rng(derive_seed(seed, 0xB0));
    Backbone b;
    b.seed = seed;
    b.text.projection = random_orthonormal(d, d_e, rng);
    if (raw_dim > 0) {
        b.image.identity = false;
        b.image.map = random_orthonormal(d, raw_dim, rng);
    }
    return b;
}

TextEncoderCache encode_text_cached(const FrozenTextEncoder& enc, const Vector& prompt_sum,
                                    std::size_t m, const Vector& class_token) {
    if (prompt_sum.size() != enc.d_e() || class_token.size() != enc.d_e()) {
        throw Error("dimension mismatch");
    }
    Vector mean(enc.d_e());
    const double inv = 1.0 / static_cast<double>(m + 1);
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] = (prompt_sum[j] + class_token[j]) * inv;
    TextEncoderCache c;
    c.pooled = matvec(enc.projection, mean);
    c.pooled_norm = norm(c.pooled);
    c.output = normalize(c.pooled);
    return c;
}

Vector encode_text_backward(const FrozenTextEncoder& enc, const TextEncoderCache& cache,
                            std::size_t m, const Vector& upstream) {
    const double gt = dot(upstream, cache.output);
    Vector g(upstream.size());
    const double scale = 1.0 / (cache.pooled_norm * static_cast<double>(m + 1));
    for (std::size_t j = 0; j < g.size(); ++j) g[j] = (upstream[j] - gt * cache.output[j]) * scale;
    return matvec_transposed(enc.projection, g);
}

namespace {

Vector prompt_sum(const Matrix& prompt_vectors, std::size_t d_e) {
    if (prompt_vectors.rows() == 0) throw Error("prompt length must be >= 1");
    if (prompt_vectors.cols() != d_e) throw Error("dimension mismatch");
    Vector s(d_e, 0.0);
    for (std::size_t i = 0; i < prompt_vectors.rows(); ++i)
        for (std::size_t j = 0; j < d_e; ++j) s[j] += prompt_vectors(i, j);
    return s;
}

} // namespace

Vector encode_text(const FrozenTextEncoder& enc, const Matrix& prompt_vectors,
                   const Vector& class_token) {
    return encode_text_cached(enc, prompt_sum(prompt_vectors, enc.d_e()), prompt_vectors.rows(),
                              class_token)
        .output;
}

Matrix encode_text_jacobian(const FrozenTextEncoder& enc, const Matrix& prompt_vectors,
                            const Vector& class_token) {
    const std::size_t m = prompt_vectors.rows();
    auto cache = encode_text_cached(enc, prompt_sum(prompt_vectors, enc.d_e()), m, class_token);
    const std::size_t d = enc.d();
    Matrix jac(d, enc.d_e());
    const double scale = 1.0 / (cache.pooled_norm * static_cast<double>(m + 1));
    for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t c = 0; c < enc.d_e(); ++c) {
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double proj = (r == k ? 1.0 : 0.0) - cache.output[r] * cache.output[k];
                s += proj * enc.projection(k, c);
            }
            jac(r, c) = s * scale;
        }
    }
    return jac;
}

Vector encode_image(const FrozenImageEncoder& enc, const Vector& raw) {
    if (enc.identity) return normalize(raw);
    return normalize(matvec(enc.map, raw));
}

Vector teacher_log_distribution(const TeacherPool& pool, std::size_t t_index, const Vector& f,
                                double tau, const std::vector<int>& classes) {
    if (t_index >= pool.size()) throw Error("teacher index out of range");
    if (!(tau > 0.0)) throw Error("tau must be positive");
    const Matrix& tab = pool.tables[t_index];
    if (tab.cols() != f.size()) throw Error("dimension mismatch");
    const double fn = norm(f);
    if (!(fn > 0.0)) throw Error("degenerate vector");
    const std::size_t n = classes.empty() ? tab.rows() : classes.size();
    Vector logits(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = classes.empty() ? i : static_cast<std::size_t>(classes[i]);
        const double* row = tab.row_ptr(c);
        const double rn = std::sqrt(dot(row, row, f.size()));
        logits[i] = dot(row, f.data(), f.size()) / (rn * fn) / tau;
    }
    return log_softmax(logits);
}

Distribution teacher_distribution(const TeacherPool& pool, std::size_t t_index, const Vector& f,
                                  double tau, const std::vector<int>& classes) {
    Vector lp = teacher_log_distribution(pool, t_index, f, tau, classes);
    for (auto& x : lp) x = std::exp(x);
    return lp;
}

} // namespace mopd
