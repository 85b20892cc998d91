// Copyright (c) 2026 The d2ft authors
// SPDX-License-Identifier: Apache-2.0
//
// Toy transformer partitioned into subnets: one attention head plus a 1/H
// slice of the block's feed-forward network per subnet, plus an embedding
// subnet at the front and a pooling/classifier subnet at the end.
//
// Block topology: attention heads and FFN slices both read the (frozen)
// layer-normalized block input and their outputs are summed into the
// residual stream. With this structure a subnet's contribution is a pure
// additive term, so the Shortcut operation removes exactly that term and
// nothing else.
//
// Per-block forward, with X the block input and k ranging over the block's
// subnets:   X_out = X + sum_k  C_k(LN(X)),
//   C_k = softmax(Q_k K_k^T / sqrt(d_h)) V_k Wo_k  +  gelu(LN(X) W1_k + b1_k) W2_k + b2_k
//
// All math is 64-bit with fixed operation order; manual gradients throughout.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "d2ft/linalg.hpp"

namespace d2ft {

inline constexpr double kLayerNormEps = 1e-5;

/// Operation codes. Numeric values double as the schedule-table codes.
enum class OperationKind : std::uint8_t {
  Full = 1,         // p_f: forward + backward
  ForwardOnly = 2,  // p_o: forward, no gradients
  Shortcut = 3,     // p_s: subnet bypassed, residual route only
};

const char* operation_name(OperationKind op);

struct ModelConfig {
  int num_blocks = 2;      // L
  int heads_per_block = 2; // H
  int model_dim = 16;      // d, divisible by H
  int ffn_hidden = 32;     // divisible by H
  int seq_len = 8;
  int num_classes = 4;
  std::uint64_t seed = 1;

  void validate() const;  // throws config errors
  int head_dim() const { return model_dim / heads_per_block; }
  int ffn_slice_dim() const { return ffn_hidden / heads_per_block; }
  int subnet_count() const { return num_blocks * heads_per_block + 2; }
  int scheduled_subnet_count() const { return num_blocks * heads_per_block; }
};

struct SubnetId {
  enum class Kind : std::uint8_t { Embed, Block, Head };
  Kind kind = Kind::Embed;
  int block = 0;  // 1-based, Block only
  int head = 0;   // 1-based, Block only

  static SubnetId embed_unit() { return {Kind::Embed, 0, 0}; }
  static SubnetId block_unit(int l, int h) { return {Kind::Block, l, h}; }
  static SubnetId head_unit() { return {Kind::Head, 0, 0}; }

  bool is_block() const { return kind == Kind::Block; }
  std::string name() const;

  bool operator==(const SubnetId&) const = default;
};

/// Low-rank adapter for one attention head's Q/K/V projections.
/// Effective weight: W_eff = W_base + scaling * down * up. The down matrices
/// start at zero, so a freshly attached adapter leaves the model bitwise
/// unchanged; base weights are frozen for as long as the adapter is attached.
struct LoraAdapter {
  int rank = 0;
  double scaling = 1.0;
  Matrix down_q, up_q;  // d x R, R x d_h
  Matrix down_k, up_k;
  Matrix down_v, up_v;
};

/// One deployable unit. Only the members for the unit's kind are allocated;
/// the rest stay empty.
struct Subnet {
  SubnetId id;

  // Block(l,h): attention head slices and FFN column/row slices. Every
  // block parameter lives in exactly one subnet; concatenating the H
  // subnets reconstructs the full block.
  Matrix wq, wk, wv;  // d x d_h each
  Matrix wo;          // d_h x d
  Matrix w1;          // d x ffn_slice
  Matrix b1;          // 1 x ffn_slice
  Matrix w2;          // ffn_slice x d
  Matrix b2;          // 1 x d/H: this subnet's column slice of the block
                      // output bias, applied at offset (head-1)*d/H
  std::optional<LoraAdapter> lora;

  // Embed: linear token embedding plus positional table.
  Matrix w_embed;  // d x d
  Matrix b_embed;  // 1 x d
  Matrix pos;      // seq_len x d

  // Head: pooled classifier.
  Matrix w_cls;  // d x num_classes
  Matrix b_cls;  // 1 x num_classes

  std::size_t parameter_count() const;       // all tensors, adapters included
  std::size_t base_parameter_count() const;  // adapters excluded
};

/// Visits every parameter tensor in the canonical (serialization) order:
///   Embed: w_embed, b_embed, pos
///   Block: wq, wk, wv, wo, w1, b1, w2, b2, then adapter tensors if attached
///          (down_q, up_q, down_k, up_k, down_v, up_v)
///   Head:  w_cls, b_cls
template <typename SubnetT, typename Fn>
void visit_tensors(SubnetT& s, Fn&& fn) {
  switch (s.id.kind) {
    case SubnetId::Kind::Embed:
      fn("w_embed", s.w_embed);
      fn("b_embed", s.b_embed);
      fn("pos", s.pos);
      break;
    case SubnetId::Kind::Block:
      fn("wq", s.wq);
      fn("wk", s.wk);
      fn("wv", s.wv);
      fn("wo", s.wo);
      fn("w1", s.w1);
      fn("b1", s.b1);
      fn("w2", s.w2);
      fn("b2", s.b2);
      if (s.lora) {
        fn("lora.down_q", s.lora->down_q);
        fn("lora.up_q", s.lora->up_q);
        fn("lora.down_k", s.lora->down_k);
        fn("lora.up_k", s.lora->up_k);
        fn("lora.down_v", s.lora->down_v);
        fn("lora.up_v", s.lora->up_v);
      }
      break;
    case SubnetId::Kind::Head:
      fn("w_cls", s.w_cls);
      fn("b_cls", s.b_cls);
      break;
  }
}

/// Visits the trainable tensors. With an adapter attached, only the adapter
/// matrices of block subnets train; every base tensor (including the embed
/// and classifier subnets) is frozen.
template <typename SubnetT, typename Fn>
void visit_trainable(SubnetT& s, bool lora_mode, Fn&& fn) {
  if (!lora_mode) {
    visit_tensors(s, fn);
    return;
  }
  if (s.id.kind == SubnetId::Kind::Block && s.lora) {
    fn("lora.down_q", s.lora->down_q);
    fn("lora.up_q", s.lora->up_q);
    fn("lora.down_k", s.lora->down_k);
    fn("lora.up_k", s.lora->up_k);
    fn("lora.down_v", s.lora->down_v);
    fn("lora.up_v", s.lora->up_v);
  }
}

/// Same-shaped container with all tensors zeroed (adapter slots included).
Subnet zeros_like(const Subnet& s);
/// acc += scale * g over all tensors.
void accumulate(Subnet& acc, const Subnet& g, double scale);

/// Intermediates captured by a Full forward; required for subnet_backward.
/// Forward-Only and Shortcut passes produce no cache.
struct ActivationCache {
  int subnet_index = -1;
  Matrix x;   // raw input
  Matrix xn;  // layer-normalized input (block/head)
  // attention
  Matrix q, k, v, probs, headout;
  // lora intermediates (x_n * down), allocated only in lora mode
  Matrix pq, pk, pv;
  // ffn
  Matrix z;  // preactivation
  Matrix g;  // gelu(z)
  // head
  Matrix pooled;  // 1 x d
};

struct ForwardResult {
  Matrix y;
  std::optional<ActivationCache> cache;
};

struct SubnetBackwardResult {
  Matrix dx;
  Subnet grads;
};

/// Loss and per-subnet gradients for one micro-batch. grads[i] is engaged
/// exactly for subnets that executed Full (the embed/head subnets always do).
struct ForwardBackwardResult {
  double loss = 0.0;
  std::vector<std::optional<Subnet>> grads;
};

/// Builds the partitioned toy model: L*H + 2 subnets, Embed first, Head
/// last, block subnets in (block-major, head-minor) order. Initialization is
/// a deterministic function of config.seed, streamed per subnet.
std::vector<Subnet> partition_model(const ModelConfig& config);

class SubnetModel {
 public:
  SubnetModel() = default;
  explicit SubnetModel(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  int subnet_count() const { return static_cast<int>(subnets_.size()); }
  int scheduled_count() const { return config_.scheduled_subnet_count(); }
  const std::vector<Subnet>& subnets() const { return subnets_; }
  std::vector<Subnet>& subnets() { return subnets_; }
  const Subnet& subnet(int i) const { return subnets_.at(static_cast<std::size_t>(i)); }
  Subnet& subnet(int i) { return subnets_.at(static_cast<std::size_t>(i)); }
  /// Canonical index of a block subnet among the scheduled rows: 0..L*H-1.
  int scheduled_index(int block, int head) const;
  /// Subnet index of scheduled row r (skips the embed subnet).
  int subnet_index_of_scheduled(int r) const { return 1 + r; }

  bool lora_enabled() const { return lora_mode_; }
  /// Adds Q/K/V adapters to every block subnet and freezes base weights.
  void attach_lora(int rank, double scaling = 1.0);

  /// Single-subnet forward. Block subnets: y = x + C(LN(x)) for Full and
  /// ForwardOnly (identical numerics; cache only for Full), y = x for
  /// Shortcut. Embed/head subnets accept only Full.
  ForwardResult subnet_forward(int subnet_index, const Matrix& x, OperationKind op) const;

  /// Backward through one subnet from a Full-forward cache. dx includes the
  /// residual route for block subnets.
  SubnetBackwardResult subnet_backward(int subnet_index, const ActivationCache& cache,
                                       const Matrix& dy) const;

  /// Full-model forward/backward over one micro-batch under a schedule
  /// column (one OperationKind per scheduled block subnet; embed and head
  /// always run Full). Loss is mean cross-entropy over the micro-batch.
  ForwardBackwardResult forward_backward(std::span<const Matrix> inputs,
                                         std::span<const int> labels,
                                         std::span<const OperationKind> schedule_column) const;

  /// Inference logits for one sample; every subnet active, no schedule.
  Matrix logits(const Matrix& input) const;

  /// Flat little-endian checkpoint (documented in the README).
  void save(const std::string& path) const;
  static SubnetModel load(const std::string& path);

  std::size_t parameter_count() const;
  /// Raw parameter bytes in canonical order; used for bitwise freeze checks.
  std::vector<std::uint8_t> parameter_bytes(bool include_adapters = true) const;

 private:
  struct BlockSubnetCache;
  Matrix block_contribution(const Subnet& s, const Matrix& xn, ActivationCache* cache) const;
  void contribution_backward(const Subnet& s, const ActivationCache& cache, const Matrix& dc,
                             Matrix& dxn, Subnet& grads) const;

  ModelConfig config_;
  std::vector<Subnet> subnets_;
  bool lora_mode_ = false;
};

/// Cross-entropy loss and dlogits for a single sample.
double cross_entropy(const Matrix& logits, int label, Matrix* dlogits);

}  // namespace d2ft
