// Copyright (c) 2026 The d2ft authors
// SPDX-License-Identifier: Apache-2.0
//
// Independent reference implementations used only by tests. These stay
// deliberately separate from the library's composition paths: the monolithic
// model composes full-width matrices per block, the knapsack oracles
// enumerate, and the finite-difference checker never touches the analytic
// backward.

#pragma once

#include <span>
#include <vector>

#include "d2ft/model.hpp"
#include "d2ft/scheduler.hpp"

namespace d2ft::testing {

/// Unpartitioned reference: one full Q/K/V/O projection and one full FFN per
/// block, assembled by concatenating the subnet slices.
struct MonolithicModel {
  ModelConfig cfg;
  Matrix w_embed, b_embed, pos;
  std::vector<Matrix> wq, wk, wv;  // d x d
  std::vector<Matrix> wo;          // d x d
  std::vector<Matrix> w1;          // d x ffn_hidden
  std::vector<Matrix> b1;          // 1 x ffn_hidden
  std::vector<Matrix> w2;          // ffn_hidden x d
  std::vector<Matrix> b2;          // 1 x d (sum of the H shares)
  Matrix w_cls, b_cls;
};

MonolithicModel assemble_monolithic(const SubnetModel& model);

struct MonolithicGrads {
  Matrix w_embed, b_embed, pos;
  std::vector<Matrix> wq, wk, wv, wo, w1, b1, w2, b2;
  Matrix w_cls, b_cls;
};

struct MonolithicResult {
  double loss = 0.0;
  MonolithicGrads grads;
};

MonolithicResult monolithic_forward_backward(const MonolithicModel& m,
                                             std::span<const Matrix> inputs,
                                             std::span<const int> labels);

Matrix monolithic_logits(const MonolithicModel& m, const Matrix& input);

/// Compares the partitioned model's all-p_f loss/gradients against the
/// monolithic reference; returns the maximum relative deviation over the
/// loss and every parameter gradient.
double monolithic_max_rel_deviation(const SubnetModel& model, std::span<const Matrix> inputs,
                                    std::span<const int> labels);

/// Fills every parameter of the subnet with N(0, scale) values (test models
/// want nonzero biases for gradient checks).
void randomize_subnet(Subnet& s, std::uint64_t seed, double scale);

/// Relative error between analytic and central finite-difference gradients
/// of the mean cross-entropy loss, maximized over every trainable parameter.
double fd_max_rel_error(SubnetModel& model, std::span<const Matrix> inputs,
                        std::span<const int> labels, double eps);

/// Same check for a single block subnet: scalar loss sum(y .* probe) through
/// subnet_forward, analytic gradients from subnet_backward.
double fd_subnet_max_rel_error(SubnetModel& model, int subnet_index, const Matrix& x,
                               const Matrix& probe, double eps);

/// Exhaustive 0/1 knapsack optimum over all 2^N subsets.
double subset_enumeration_best(const std::vector<double>& scores, const std::vector<int>& weights,
                               int capacity);

/// Exhaustive multiple-choice optimum over all 3^N per-item choices of
/// {p_s: (0, 0), p_o: (v_fwd[i], w_fwd), p_f: (v_full[i], w_full)}.
double mckp_enumeration_best(const std::vector<double>& v_full, const std::vector<double>& v_fwd,
                             int w_full, int w_fwd, int capacity);

}  // namespace d2ft::testing
