// Copyright (c) 2026, MoPD lab contributors
// SPDX-License-Identifier: Apache-2.0

#include "mopd/prompt_model.hpp"

#include <cmath>

#include "mopd/rng.hpp"

namespace mopd {

SoftPrompt init_soft_prompt(std::size_t m, std::size_t d_e, double stddev, std::uint64_t seed) {
    if (m == 0 || d_e == 0) throw Error("prompt dimensions must be positive");
    Rng rng(derive_seed(seed, 0x50));
    SoftPrompt p;
    p.vectors = Matrix(m, d_e);
    for (std::size_t i = 0; i < p.vectors.size(); ++i) p.vectors[i] = stddev * rng.normal();
    return p;
}

std::vector<int> resolve_classes(const StudentModel& model, const std::vector<int>& classes) {
    const int c = static_cast<int>(model.num_classes());
    if (classes.empty()) {
        std::vector<int> all(static_cast<std::size_t>(c));
        for (int i = 0; i < c; ++i) all[static_cast<std::size_t>(i)] = i;
        return all;
    }
    for (int k : classes) {
        if (k < 0 || k >= c) throw Error("class id out of range");
    }
    return classes;
}

StudentTable build_student_table(const StudentModel& model, const std::vector<int>& classes) {
    const std::size_t d_e = model.encoder.d_e();
    if (model.prompt.vectors.cols() != d_e || model.vocabulary.tokens.cols() != d_e) {
        throw Error("dimension mismatch");
    }
    const std::size_t m = model.prompt.length();
    if (m == 0) throw Error("prompt length must be >= 1");
    Vector sum(d_e, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < d_e; ++j) sum[j] += model.prompt.vectors(i, j);

    StudentTable t;
    t.classes = resolve_classes(model, classes);
    t.rows = Matrix(t.classes.size(), model.encoder.d());
    t.caches.reserve(t.classes.size());
    for (std::size_t i = 0; i < t.classes.size(); ++i) {
        auto cache = encode_text_cached(model.encoder, sum, m,
                                        model.vocabulary.tokens.row(static_cast<std::size_t>(t.classes[i])));
        t.rows.set_row(i, cache.output);
        t.caches.push_back(std::move(cache));
    }
    return t;
}

Matrix student_text_table(const StudentModel& model, const std::vector<int>& classes) {
    return build_student_table(model, classes).rows;
}

Matrix student_table_backward(const StudentModel& model, const StudentTable& table,
                              const Matrix& row_grads) {
    const std::size_t m = model.prompt.length();
    const std::size_t d_e = model.encoder.d_e();
    Vector gs(d_e, 0.0);
    for (std::size_t i = 0; i < table.classes.size(); ++i) {
        const Vector g = encode_text_backward(model.encoder, table.caches[i], m, row_grads.row(i));
        for (std::size_t j = 0; j < d_e; ++j) gs[j] += g[j];
    }
    Matrix out(m, d_e);
    for (std::size_t i = 0; i < m; ++i) out.set_row(i, gs);
    return out;
}

Vector student_logits(const StudentTable& table, const Vector& f, double tau) {
    if (!(tau > 0.0)) throw Error("tau must be positive");
    if (f.size() != table.rows.cols()) throw Error("dimension mismatch");
    const double fn = norm(f);
    if (!(fn > 0.0)) throw Error("degenerate vector");
    Vector l(table.rows.rows());
    for (std::size_t c = 0; c < l.size(); ++c) {
        l[c] = dot(table.rows.row_ptr(c), f.data(), f.size()) / fn / tau;
    }
    return l;
}

Distribution p_soft(const StudentModel& model, const Vector& f, const std::vector<int>& classes) {
    return softmax(student_logits(build_student_table(model, classes), f, model.tau));
}

Vector log_p_soft(const StudentModel& model, const Vector& f, const std::vector<int>& classes) {
    return log_softmax(student_logits(build_student_table(model, classes), f, model.tau));
}

int predict(const StudentTable& table, const Vector& f) {
    // cosine ordering does not depend on tau
    return table.classes[argmax(student_logits(table, f, 1.0))];
}

int predict(const StudentModel& model, const Vector& f, const std::vector<int>& classes) {
    return predict(build_student_table(model, classes), f);
}

PromptJacobian grad_p_soft_wrt_prompt(const StudentModel& model, const Vector& f,
                                      const std::vector<int>& classes) {
    StudentTable table = build_student_table(model, classes);
    const Distribution p = softmax(student_logits(table, f, model.tau));
    const Vector fhat = normalize(f);
    const std::size_t n = table.classes.size();
    const std::size_t d = table.rows.cols();
    PromptJacobian jac;
    jac.classes = table.classes;
    jac.dlogp = Matrix(n, model.encoder.d_e());
    // d log p_y / d l_c = [c == y] - p_c; d l_c / d row_c = fhat / tau
    Matrix row_grads(n, d);
    for (std::size_t y = 0; y < n; ++y) {
        for (std::size_t c = 0; c < n; ++c) {
            const double dl = (c == y ? 1.0 : 0.0) - p[c];
            for (std::size_t j = 0; j < d; ++j) row_grads(c, j) = dl * fhat[j] / model.tau;
        }
        const Matrix g = student_table_backward(model, table, row_grads);
        jac.dlogp.set_row(y, g.row(0));
    }
    return jac;
}

} // namespace mopd
