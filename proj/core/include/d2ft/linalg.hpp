// Copyright (c) 2026 The d2ft authors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal row-major dense matrix for the desk-scale model core. 64-bit
// throughout; loops are written in a fixed order so results are reproducible
// bit-for-bit across runs.

#pragma once

#include <cstddef>
#include <vector>

#include "d2ft/error.hpp"

namespace d2ft {

struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  void fill(double v) { data.assign(data.size(), v); }
};

inline void check_shape(const Matrix& m, int rows, int cols, const char* what) {
  if (m.rows != rows || m.cols != cols) {
    throw dimension_error(std::string(what) + ": expected " + std::to_string(rows) + "x" +
                          std::to_string(cols) + ", got " + std::to_string(m.rows) + "x" +
                          std::to_string(m.cols));
  }
}

Matrix matmul(const Matrix& a, const Matrix& b);       // a * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);    // a^T * b
Matrix matmul_nt(const Matrix& a, const Matrix& b);    // a * b^T
Matrix transpose(const Matrix& a);

void add_inplace(Matrix& a, const Matrix& b);          // a += b
void axpy_inplace(Matrix& a, double s, const Matrix& b);  // a += s*b
void scale_inplace(Matrix& a, double s);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);

/// Adds a 1 x cols row vector to every row.
void add_row_vector(Matrix& a, const Matrix& row);
/// Column sums as a 1 x cols matrix.
Matrix column_sums(const Matrix& a);
/// Mean over rows as a 1 x cols matrix.
Matrix row_mean(const Matrix& a);

/// Row-wise softmax.
Matrix softmax_rows(const Matrix& a);
/// Backward of row-wise softmax: given probs p and upstream dp, returns dlogits.
Matrix softmax_rows_backward(const Matrix& probs, const Matrix& dprobs);

/// Row-wise layer norm with frozen unit gain and zero bias.
Matrix layer_norm(const Matrix& x, double eps);
Matrix layer_norm_backward(const Matrix& x, const Matrix& dy, double eps);

double gelu(double x);
double gelu_grad(double x);
Matrix gelu(const Matrix& x);
/// dz = dy .* gelu'(z_preact)
Matrix gelu_backward(const Matrix& preact, const Matrix& dy);

bool all_finite(const Matrix& a);

}  // namespace d2ft
