// Copyright (c) 2026, MoPD lab contributors
// SPDX-License-Identifier: Apache-2.0

#include "mopd/numerics.hpp"

#include <algorithm>
#include <cmath>

namespace mopd {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw Error("matrix data length does not match shape");
    }
}

Vector Matrix::row(std::size_t r) const {
    return Vector(row_ptr(r), row_ptr(r) + cols_);
}

void Matrix::set_row(std::size_t r, const Vector& v) {
    if (v.size() != cols_) throw Error("row length mismatch");
    std::copy(v.begin(), v.end(), row_ptr(r));
}

MaskedLogits MaskedLogits::dense(Vector v) {
    MaskedLogits m;
    m.masked.assign(v.size(), false);
    m.values = std::move(v);
    return m;
}

std::size_t MaskedLogits::unmasked_count() const {
    return static_cast<std::size_t>(std::count(masked.begin(), masked.end(), false));
}

double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

double dot(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw Error("dimension mismatch");
    return dot(a.data(), b.data(), a.size());
}

double norm(const Vector& v) { return std::sqrt(dot(v, v)); }

Vector normalize(const Vector& v) {
    const double n = norm(v);
    if (!(n > 0.0) || !std::isfinite(n)) throw Error("degenerate vector");
    Vector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
    return out;
}

Vector matvec(const Matrix& m, const Vector& v) {
    if (m.cols() != v.size()) throw Error("dimension mismatch");
    Vector out(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) out[r] = dot(m.row_ptr(r), v.data(), v.size());
    return out;
}

Vector matvec_transposed(const Matrix& m, const Vector& v) {
    if (m.rows() != v.size()) throw Error("dimension mismatch");
    Vector out(m.cols(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double* row = m.row_ptr(r);
        for (std::size_t c = 0; c < m.cols(); ++c) out[c] += row[c] * v[r];
    }
    return out;
}

bool all_finite(const Vector& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

bool all_finite(const Matrix& m) { return all_finite(m.data()); }

Distribution softmax(const Vector& logits) { return softmax(MaskedLogits::dense(logits)); }

Distribution softmax(const MaskedLogits& logits) {
    const std::size_t n = logits.size();
    if (logits.masked.size() != n) throw Error("mask length mismatch");
    double mx = 0.0;
    bool any = false;
    for (std::size_t i = 0; i < n; ++i) {
        if (logits.masked[i]) continue;
        if (!std::isfinite(logits.values[i])) throw Error("non-finite logit");
        if (!any || logits.values[i] > mx) mx = logits.values[i];
        any = true;
    }
    if (!any) throw Error("empty support");
    Distribution p(n, 0.0);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (logits.masked[i]) continue;
        p[i] = std::exp(logits.values[i] - mx);
        z += p[i];
    }
    for (auto& x : p) x /= z;
    return p;
}

Vector log_softmax(const Vector& logits) {
    if (logits.empty()) throw Error("empty support");
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - mx);
    const double lz = mx + std::log(z);
    Vector out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lz;
    return out;
}

double cosine(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw Error("dimension mismatch");
    const double na = norm(a), nb = norm(b);
    if (!(na > 0.0) || !(nb > 0.0)) throw Error("degenerate vector");
    const double c = dot(a, b) / (na * nb);
    return std::clamp(c, -1.0, 1.0);
}

double kl_divergence(const Distribution& p, const Distribution& q, KlDirection direction) {
    if (p.size() != q.size()) throw Error("length mismatch");
    const Distribution& ref = direction == KlDirection::FIRST_ARG_REF ? p : q;
    const Distribution& other = direction == KlDirection::FIRST_ARG_REF ? q : p;
    double s = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        if (ref[i] < 0.0 || other[i] < 0.0) throw Error("negative probability");
        if (ref[i] == 0.0) continue;
        const double o = std::max(other[i], kProbFloor);
        s += ref[i] * (std::log(ref[i]) - std::log(o));
    }
    if (!std::isfinite(s)) throw Error("support violation");
    return s;
}

double entropy(const Distribution& p) {
    double s = 0.0;
    for (double x : p) {
        if (x > 0.0) s -= x * std::log(x);
    }
    return s;
}

std::size_t argmax(const Vector& v) {
    if (v.empty()) throw Error("empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) best = i;
    }
    return best;
}

Matrix finite_difference_gradient(const MatrixLoss& loss_fn, const Matrix& point, double step) {
    if (!(step > 0.0)) throw Error("finite-difference step must be positive");
    Matrix grad(point.rows(), point.cols());
    Matrix probe = point;
    for (std::size_t i = 0; i < point.size(); ++i) {
        const double x = point[i];
        probe[i] = x + step;
        const double fp = loss_fn(probe);
        probe[i] = x - step;
        const double fm = loss_fn(probe);
        probe[i] = x;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw Error("non-finite loss at finite-difference probe");
        }
        grad[i] = (fp - fm) / (2.0 * step);
    }
    return grad;
}

double frobenius_norm(const Matrix& m) { return norm(m.data()); }

double relative_error(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw Error("shape mismatch");
    double diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) diff += (a[i] - b[i]) * (a[i] - b[i]);
    const double denom = frobenius_norm(a) + frobenius_norm(b);
    if (denom == 0.0) return 0.0;
    return std::sqrt(diff) / denom;
}

void axpy(double alpha, const Matrix& x, Matrix& y) {
    if (x.size() != y.size()) throw Error("shape mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

} // namespace mopd
