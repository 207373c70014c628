// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "mmfuse/matrix.hpp"

namespace mmfuse {

/// Lower clamp applied to q before taking log in cross_entropy.
inline constexpr double kCrossEntropyFloor = 1e-12;

Matrix matmul(const Matrix& a, const Matrix& b);
/// a^T * b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a * b^T without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
/// a += s * b, in place.
void axpy(Matrix& a, double s, const Matrix& b);

/// Adds `bias` (length cols) to every row.
Matrix add_row_bias(const Matrix& a, std::span<const double> bias);
/// Arithmetic mean over rows; returns a vector of length cols.
std::vector<double> mean_rows(const Matrix& a);

double dot(std::span<const double> a, std::span<const double> b);

/// Temperature softmax with max subtraction.
std::vector<double> softmax(std::span<const double> v, double temperature = 1.0);
/// log(sum(exp(v))), stabilized.
double log_sum_exp(std::span<const double> v);
/// -sum p_i log(max(q_i, kCrossEntropyFloor)).
double cross_entropy(std::span<const double> p, std::span<const double> q);
/// Shannon entropy in nats; 0 log 0 = 0.
double entropy(std::span<const double> p);

double sigmoid(double x);

/// Index of the largest element; ties resolve to the lowest index.
std::size_t argmax(std::span<const double> v);

}  // namespace mmfuse
