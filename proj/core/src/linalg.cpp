// Copyright (c) 2026 The d2ft authors
// SPDX-License-Identifier: Apache-2.0

#include "d2ft/linalg.hpp"

#include <cmath>

namespace d2ft {

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw dimension_error("matmul: inner dims differ");
  Matrix out(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    for (int k = 0; k < a.cols; ++k) {
      double av = a(i, k);
      for (int j = 0; j < b.cols; ++j) out(i, j) += av * b(k, j);
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows) throw dimension_error("matmul_tn: inner dims differ");
  Matrix out(a.cols, b.cols);
  for (int k = 0; k < a.rows; ++k) {
    for (int i = 0; i < a.cols; ++i) {
      double av = a(k, i);
      for (int j = 0; j < b.cols; ++j) out(i, j) += av * b(k, j);
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols != b.cols) throw dimension_error("matmul_nt: inner dims differ");
  Matrix out(a.rows, b.rows);
  for (int i = 0; i < a.rows; ++i) {
    for (int j = 0; j < b.rows; ++j) {
      double s = 0.0;
      for (int k = 0; k < a.cols; ++k) s += a(i, k) * b(j, k);
      out(i, j) = s;
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols, a.rows);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j) out(j, i) = a(i, j);
  return out;
}

void add_inplace(Matrix& a, const Matrix& b) {
  check_shape(b, a.rows, a.cols, "add_inplace");
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

void axpy_inplace(Matrix& a, double s, const Matrix& b) {
  check_shape(b, a.rows, a.cols, "axpy_inplace");
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += s * b.data[i];
}

void scale_inplace(Matrix& a, double s) {
  for (double& v : a.data) v *= s;
}

Matrix add(const Matrix& a, const Matrix& b) {
  Matrix out = a;
  add_inplace(out, b);
  return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
  check_shape(b, a.rows, a.cols, "sub");
  Matrix out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  check_shape(b, a.rows, a.cols, "hadamard");
  Matrix out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
  return out;
}

void add_row_vector(Matrix& a, const Matrix& row) {
  check_shape(row, 1, a.cols, "add_row_vector");
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j) a(i, j) += row(0, j);
}

Matrix column_sums(const Matrix& a) {
  Matrix out(1, a.cols);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j) out(0, j) += a(i, j);
  return out;
}

Matrix row_mean(const Matrix& a) {
  Matrix out = column_sums(a);
  scale_inplace(out, 1.0 / a.rows);
  return out;
}

Matrix softmax_rows(const Matrix& a) {
  Matrix out(a.rows, a.cols);
  for (int i = 0; i < a.rows; ++i) {
    double mx = a(i, 0);
    for (int j = 1; j < a.cols; ++j) mx = std::max(mx, a(i, j));
    double sum = 0.0;
    for (int j = 0; j < a.cols; ++j) {
      out(i, j) = std::exp(a(i, j) - mx);
      sum += out(i, j);
    }
    for (int j = 0; j < a.cols; ++j) out(i, j) /= sum;
  }
  return out;
}

Matrix softmax_rows_backward(const Matrix& probs, const Matrix& dprobs) {
  check_shape(dprobs, probs.rows, probs.cols, "softmax_rows_backward");
  Matrix out(probs.rows, probs.cols);
  for (int i = 0; i < probs.rows; ++i) {
    double dot = 0.0;
    for (int j = 0; j < probs.cols; ++j) dot += probs(i, j) * dprobs(i, j);
    for (int j = 0; j < probs.cols; ++j) out(i, j) = probs(i, j) * (dprobs(i, j) - dot);
  }
  return out;
}

Matrix layer_norm(const Matrix& x, double eps) {
  Matrix out(x.rows, x.cols);
  for (int i = 0; i < x.rows; ++i) {
    double mean = 0.0;
    for (int j = 0; j < x.cols; ++j) mean += x(i, j);
    mean /= x.cols;
    double var = 0.0;
    for (int j = 0; j < x.cols; ++j) {
      double d = x(i, j) - mean;
      var += d * d;
    }
    var /= x.cols;
    double inv = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < x.cols; ++j) out(i, j) = (x(i, j) - mean) * inv;
  }
  return out;
}

Matrix layer_norm_backward(const Matrix& x, const Matrix& dy, double eps) {
  check_shape(dy, x.rows, x.cols, "layer_norm_backward");
  Matrix out(x.rows, x.cols);
  int n = x.cols;
  for (int i = 0; i < x.rows; ++i) {
    double mean = 0.0;
    for (int j = 0; j < n; ++j) mean += x(i, j);
    mean /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      double d = x(i, j) - mean;
      var += d * d;
    }
    var /= n;
    double inv = 1.0 / std::sqrt(var + eps);
    double dy_mean = 0.0, dy_dot = 0.0;
    for (int j = 0; j < n; ++j) {
      double y = (x(i, j) - mean) * inv;
      dy_mean += dy(i, j);
      dy_dot += dy(i, j) * y;
    }
    dy_mean /= n;
    dy_dot /= n;
    for (int j = 0; j < n; ++j) {
      double y = (x(i, j) - mean) * inv;
      out(i, j) = (dy(i, j) - dy_mean - y * dy_dot) * inv;
    }
  }
  return out;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * 0.70710678118654752440)); }

double gelu_grad(double x) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  constexpr double inv_sqrt2pi = 0.39894228040143267794;
  return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) + x * inv_sqrt2pi * std::exp(-0.5 * x * x);
}

Matrix gelu(const Matrix& x) {
  Matrix out = x;
  for (double& v : out.data) v = gelu(v);
  return out;
}

Matrix gelu_backward(const Matrix& preact, const Matrix& dy) {
  check_shape(dy, preact.rows, preact.cols, "gelu_backward");
  Matrix out(preact.rows, preact.cols);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = dy.data[i] * gelu_grad(preact.data[i]);
  return out;
}

bool all_finite(const Matrix& a) {
  for (double v : a.data)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace d2ft
