// Copyright (c) 2026 The d2ft authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "doctest.h"
#include "d2ft/linalg.hpp"

using namespace d2ft;

TEST_CASE("matmul against hand values") {
  Matrix a(2, 3);
  a.data = {1, 2, 3, 4, 5, 6};
  Matrix b(3, 2);
  b.data = {7, 8, 9, 10, 11, 12};
  Matrix c = matmul(a, b);
  CHECK(c(0, 0) == 58);
  CHECK(c(0, 1) == 64);
  CHECK(c(1, 0) == 139);
  CHECK(c(1, 1) == 154);

  Matrix ct = matmul_tn(transpose(a), b);
  CHECK(ct.data == c.data);
  Matrix cn = matmul_nt(a, transpose(b));
  CHECK(cn.data == c.data);

  Matrix bad(2, 2);
  CHECK_THROWS_AS(matmul(a, bad), Error);
}

TEST_CASE("softmax rows sum to one and match a scalar case") {
  Matrix s(1, 3);
  s.data = {1.0, 2.0, 3.0};
  Matrix p = softmax_rows(s);
  double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(p(0, 0) == doctest::Approx(std::exp(1.0) / z).epsilon(1e-14));
  CHECK(p(0, 2) == doctest::Approx(std::exp(3.0) / z).epsilon(1e-14));
  CHECK(p(0, 0) + p(0, 1) + p(0, 2) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("layer norm rows have zero mean and unit variance") {
  Matrix x(2, 4);
  x.data = {1, 2, 3, 4, -5, 0, 5, 10};
  Matrix y = layer_norm(x, 1e-5);
  for (int i = 0; i < 2; ++i) {
    double mean = 0, var = 0;
    for (int j = 0; j < 4; ++j) mean += y(i, j);
    mean /= 4;
    for (int j = 0; j < 4; ++j) var += (y(i, j) - mean) * (y(i, j) - mean);
    var /= 4;
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));  // eps shrinks it slightly
  }
}

TEST_CASE("gelu gradient matches finite differences") {
  for (double x : {-2.0, -0.3, 0.0, 0.7, 2.5}) {
    double eps = 1e-6;
    double fd = (gelu(x + eps) - gelu(x - eps)) / (2 * eps);
    CHECK(gelu_grad(x) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("softmax and layer norm backward match finite differences") {
  Matrix x(1, 4);
  x.data = {0.3, -1.2, 0.8, 0.1};
  Matrix dy(1, 4);
  dy.data = {0.5, -0.25, 1.5, -1.0};
  double eps = 1e-6;

  SUBCASE("softmax") {
    Matrix p = softmax_rows(x);
    Matrix dx = softmax_rows_backward(p, dy);
    for (int j = 0; j < 4; ++j) {
      Matrix xp = x, xm = x;
      xp(0, j) += eps;
      xm(0, j) -= eps;
      Matrix pp = softmax_rows(xp), pm = softmax_rows(xm);
      double fd = 0;
      for (int t = 0; t < 4; ++t) fd += dy(0, t) * (pp(0, t) - pm(0, t)) / (2 * eps);
      CHECK(dx(0, j) == doctest::Approx(fd).epsilon(1e-5));
    }
  }

  SUBCASE("layer norm") {
    Matrix dx = layer_norm_backward(x, dy, 1e-5);
    for (int j = 0; j < 4; ++j) {
      Matrix xp = x, xm = x;
      xp(0, j) += eps;
      xm(0, j) -= eps;
      Matrix yp = layer_norm(xp, 1e-5), ym = layer_norm(xm, 1e-5);
      double fd = 0;
      for (int t = 0; t < 4; ++t) fd += dy(0, t) * (yp(0, t) - ym(0, t)) / (2 * eps);
      CHECK(dx(0, j) == doctest::Approx(fd).epsilon(1e-5));
    }
  }
}
