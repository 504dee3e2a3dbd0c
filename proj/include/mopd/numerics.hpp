// Copyright (c) 2026, MoPD lab contributors
// SPDX-License-Identifier: Apache-2.0
//
// Dense vectors/matrices, probability primitives and the finite-difference
// gradient oracle.

#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mopd {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Vector = std::vector<double>;
// Probability vector. Entries >= 0, sum to 1.
using Distribution = std::vector<double>;

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double* row_ptr(std::size_t r) { return data_.data() + r * cols_; }
    const double* row_ptr(std::size_t r) const { return data_.data() + r * cols_; }
    Vector row(std::size_t r) const;
    void set_row(std::size_t r, const Vector& v);

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool operator==(const Matrix& o) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Logits with a per-entry mask flag. Masked entries stand for -inf without
// ever storing a non-finite value.
struct MaskedLogits {
    Vector values;
    std::vector<bool> masked;

    static MaskedLogits dense(Vector v);
    std::size_t size() const { return values.size(); }
    std::size_t unmasked_count() const;
};

enum class KlDirection { FIRST_ARG_REF, SECOND_ARG_REF };

inline constexpr double kProbFloor = 1e-12;

double dot(const double* a, const double* b, std::size_t n);
double dot(const Vector& a, const Vector& b);
double norm(const Vector& v);
// Throws "degenerate vector" on zero norm.
Vector normalize(const Vector& v);
Vector matvec(const Matrix& m, const Vector& v);
Vector matvec_transposed(const Matrix& m, const Vector& v);
bool all_finite(const Vector& v);
bool all_finite(const Matrix& m);

Distribution softmax(const Vector& logits);
Distribution softmax(const MaskedLogits& logits);
Vector log_softmax(const Vector& logits);

double cosine(const Vector& a, const Vector& b);

// FIRST_ARG_REF: sum p ln(p/q). SECOND_ARG_REF: sum q ln(q/p).
// The non-reference side is floored at kProbFloor; 0 ln 0 = 0.
double kl_divergence(const Distribution& p, const Distribution& q,
                     KlDirection direction = KlDirection::FIRST_ARG_REF);

double entropy(const Distribution& p);

std::size_t argmax(const Vector& v);

using MatrixLoss = std::function<double(const Matrix&)>;

// Central differences (f(x+h) - f(x-h)) / 2h per entry.
Matrix finite_difference_gradient(const MatrixLoss& loss_fn, const Matrix& point,
                                  double step);

// ||a - b|| / (||a|| + ||b||), 0 when both are zero.
double relative_error(const Matrix& a, const Matrix& b);
double frobenius_norm(const Matrix& m);

void axpy(double alpha, const Matrix& x, Matrix& y);

} // namespace mopd
