// Copyright (c) 2026 The d2ft authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "d2ft/error.hpp"
#include "d2ft/linalg.hpp"

namespace d2ft {

/// Labeled token-sequence dataset. Samples are seq_len x token_dim matrices;
/// token_dim must equal the model dimension. Micro-batch units are fixed
/// groups of consecutive sample indices; scoring and scheduling address
/// micro-batches by unit index, which stays stable across epoch shuffles.
struct Dataset {
  std::vector<Matrix> samples;
  std::vector<int> labels;
  int num_classes = 0;

  int size() const { return static_cast<int>(samples.size()); }

  int micro_batch_count(int micro_batch_size) const {
    if (micro_batch_size < 1 || size() % micro_batch_size != 0) {
      throw input_error("dataset size must be a multiple of the micro-batch size");
    }
    return size() / micro_batch_size;
  }

  std::span<const Matrix> unit_inputs(int unit, int micro_batch_size) const {
    return std::span<const Matrix>(samples)
        .subspan(static_cast<std::size_t>(unit) * micro_batch_size,
                 static_cast<std::size_t>(micro_batch_size));
  }

  std::span<const int> unit_labels(int unit, int micro_batch_size) const {
    return std::span<const int>(labels).subspan(
        static_cast<std::size_t>(unit) * micro_batch_size,
        static_cast<std::size_t>(micro_batch_size));
  }
};

}  // namespace d2ft
