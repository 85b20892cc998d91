// Copyright (c) 2026 The d2ft authors
// SPDX-License-Identifier: Apache-2.0

#include "d2ft/model.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "d2ft/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace d2ft {

const char* operation_name(OperationKind op) {
  switch (op) {
    case OperationKind::Full: return "p_f";
    case OperationKind::ForwardOnly: return "p_o";
    case OperationKind::Shortcut: return "p_s";
  }
  return "?";
}

void ModelConfig::validate() const {
  if (num_blocks < 1 || heads_per_block < 1 || model_dim < 1 || ffn_hidden < 1 ||
      seq_len < 1 || num_classes < 1) {
    throw config_error("model config: all dimensions must be >= 1");
  }
  if (model_dim % heads_per_block != 0) {
    throw config_error("model config: model_dim must be divisible by heads_per_block");
  }
  if (ffn_hidden % heads_per_block != 0) {
    throw config_error("model config: ffn_hidden must be divisible by heads_per_block");
  }
}

std::string SubnetId::name() const {
  switch (kind) {
    case Kind::Embed: return "embed";
    case Kind::Head: return "head";
    case Kind::Block:
      return "block(" + std::to_string(block) + "," + std::to_string(head) + ")";
  }
  return "?";
}

std::size_t Subnet::parameter_count() const {
  std::size_t n = 0;
  visit_tensors(*this, [&](const char*, const Matrix& m) { n += m.size(); });
  return n;
}

std::size_t Subnet::base_parameter_count() const {
  std::size_t n = 0;
  visit_tensors(*this, [&](const char* name, const Matrix& m) {
    if (std::strncmp(name, "lora.", 5) != 0) n += m.size();
  });
  return n;
}

Subnet zeros_like(const Subnet& s) {
  Subnet z;
  z.id = s.id;
  if (s.lora) {
    z.lora.emplace();
    z.lora->rank = s.lora->rank;
    z.lora->scaling = s.lora->scaling;
  }
  visit_tensors(s, [&](const char* name, const Matrix& m) {
    visit_tensors(z, [&](const char* zname, Matrix& zm) {
      if (std::strcmp(name, zname) == 0) zm = Matrix(m.rows, m.cols);
    });
  });
  return z;
}

void accumulate(Subnet& acc, const Subnet& g, double scale) {
  visit_tensors(acc, [&](const char* name, Matrix& am) {
    visit_tensors(g, [&](const char* gname, const Matrix& gm) {
      if (std::strcmp(name, gname) == 0 && !gm.empty()) axpy_inplace(am, scale, gm);
    });
  });
}

namespace {

void fill_gaussian(Matrix& m, std::mt19937_64& rng, double stddev) {
  for (double& v : m.data) v = stddev * gaussian(rng);
}

Subnet make_embed_subnet(const ModelConfig& cfg, std::mt19937_64& rng) {
  Subnet s;
  s.id = SubnetId::embed_unit();
  s.w_embed = Matrix(cfg.model_dim, cfg.model_dim);
  s.b_embed = Matrix(1, cfg.model_dim);
  s.pos = Matrix(cfg.seq_len, cfg.model_dim);
  fill_gaussian(s.w_embed, rng, 1.0 / std::sqrt(cfg.model_dim));
  fill_gaussian(s.pos, rng, 0.02);
  return s;
}

Subnet make_block_subnet(const ModelConfig& cfg, int l, int h, std::mt19937_64& rng) {
  Subnet s;
  s.id = SubnetId::block_unit(l, h);
  int d = cfg.model_dim, dh = cfg.head_dim(), fs = cfg.ffn_slice_dim();
  s.wq = Matrix(d, dh);
  s.wk = Matrix(d, dh);
  s.wv = Matrix(d, dh);
  s.wo = Matrix(dh, d);
  s.w1 = Matrix(d, fs);
  s.b1 = Matrix(1, fs);
  s.w2 = Matrix(fs, d);
  s.b2 = Matrix(1, d / cfg.heads_per_block);
  double inv_sqrt_d = 1.0 / std::sqrt(d);
  fill_gaussian(s.wq, rng, inv_sqrt_d);
  fill_gaussian(s.wk, rng, inv_sqrt_d);
  fill_gaussian(s.wv, rng, inv_sqrt_d);
  fill_gaussian(s.wo, rng, inv_sqrt_d);
  fill_gaussian(s.w1, rng, inv_sqrt_d);
  // Slices reassemble to a full ffn_hidden x d matrix; scale by the full fan-in.
  fill_gaussian(s.w2, rng, 1.0 / std::sqrt(cfg.ffn_hidden));
  return s;
}

Subnet make_head_subnet(const ModelConfig& cfg, std::mt19937_64& rng) {
  Subnet s;
  s.id = SubnetId::head_unit();
  s.w_cls = Matrix(cfg.model_dim, cfg.num_classes);
  s.b_cls = Matrix(1, cfg.num_classes);
  fill_gaussian(s.w_cls, rng, 1.0 / std::sqrt(cfg.model_dim));
  return s;
}

}  // namespace

std::vector<Subnet> partition_model(const ModelConfig& config) {
  config.validate();
  std::vector<Subnet> subnets;
  subnets.reserve(static_cast<std::size_t>(config.subnet_count()));
  int index = 0;
  auto rng = make_rng(config.seed, static_cast<std::uint64_t>(index++));
  subnets.push_back(make_embed_subnet(config, rng));
  for (int l = 1; l <= config.num_blocks; ++l) {
    for (int h = 1; h <= config.heads_per_block; ++h) {
      auto brng = make_rng(config.seed, static_cast<std::uint64_t>(index++));
      subnets.push_back(make_block_subnet(config, l, h, brng));
    }
  }
  auto hrng = make_rng(config.seed, static_cast<std::uint64_t>(index++));
  subnets.push_back(make_head_subnet(config, hrng));
  return subnets;
}

SubnetModel::SubnetModel(const ModelConfig& config)
    : config_(config), subnets_(partition_model(config)) {}

int SubnetModel::scheduled_index(int block, int head) const {
  return (block - 1) * config_.heads_per_block + (head - 1);
}

void SubnetModel::attach_lora(int rank, double scaling) {
  if (lora_mode_) throw state_error("lora adapters already attached");
  if (rank < 1) throw config_error("lora rank must be >= 1");
  int cap = std::min(config_.model_dim, config_.head_dim());
  if (rank > cap) {
    throw config_error("lora rank " + std::to_string(rank) + " exceeds min(d, d/H) = " +
                       std::to_string(cap));
  }
  int d = config_.model_dim, dh = config_.head_dim();
  for (std::size_t i = 0; i < subnets_.size(); ++i) {
    Subnet& s = subnets_[i];
    if (!s.id.is_block()) continue;
    auto rng = make_rng(config_.seed, 0x10000u + static_cast<std::uint64_t>(i));
    LoraAdapter a;
    a.rank = rank;
    a.scaling = scaling;
    // down starts at zero, so attaching changes nothing until training moves it
    a.down_q = Matrix(d, rank);
    a.down_k = Matrix(d, rank);
    a.down_v = Matrix(d, rank);
    a.up_q = Matrix(rank, dh);
    a.up_k = Matrix(rank, dh);
    a.up_v = Matrix(rank, dh);
    double stddev = 1.0 / std::sqrt(rank);
    fill_gaussian(a.up_q, rng, stddev);
    fill_gaussian(a.up_k, rng, stddev);
    fill_gaussian(a.up_v, rng, stddev);
    s.lora = std::move(a);
  }
  lora_mode_ = true;
}

Matrix SubnetModel::block_contribution(const Subnet& s, const Matrix& xn,
                                       ActivationCache* cache) const {
  int dh = config_.head_dim();
  Matrix q = matmul(xn, s.wq);
  Matrix k = matmul(xn, s.wk);
  Matrix v = matmul(xn, s.wv);
  Matrix pq, pk, pv;
  if (s.lora) {
    pq = matmul(xn, s.lora->down_q);
    pk = matmul(xn, s.lora->down_k);
    pv = matmul(xn, s.lora->down_v);
    axpy_inplace(q, s.lora->scaling, matmul(pq, s.lora->up_q));
    axpy_inplace(k, s.lora->scaling, matmul(pk, s.lora->up_k));
    axpy_inplace(v, s.lora->scaling, matmul(pv, s.lora->up_v));
  }
  Matrix scores = matmul_nt(q, k);
  scale_inplace(scores, 1.0 / std::sqrt(static_cast<double>(dh)));
  Matrix probs = softmax_rows(scores);
  Matrix headout = matmul(probs, v);
  Matrix contrib = matmul(headout, s.wo);

  Matrix z = matmul(xn, s.w1);
  add_row_vector(z, s.b1);
  Matrix g = gelu(z);
  Matrix ffn = matmul(g, s.w2);
  const int b2_offset = (s.id.head - 1) * s.b2.cols;
  for (int i = 0; i < ffn.rows; ++i)
    for (int j = 0; j < s.b2.cols; ++j) ffn(i, b2_offset + j) += s.b2(0, j);
  add_inplace(contrib, ffn);

  if (cache) {
    cache->xn = xn;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->probs = std::move(probs);
    cache->headout = std::move(headout);
    cache->pq = std::move(pq);
    cache->pk = std::move(pk);
    cache->pv = std::move(pv);
    cache->z = std::move(z);
    cache->g = std::move(g);
  }
  return contrib;
}

void SubnetModel::contribution_backward(const Subnet& s, const ActivationCache& cache,
                                        const Matrix& dc, Matrix& dxn, Subnet& grads) const {
  int dh = config_.head_dim();
  // ffn path
  Matrix dg = matmul_nt(dc, s.w2);
  if (!lora_mode_) {
    add_inplace(grads.w2, matmul_tn(cache.g, dc));
    const int b2_offset = (s.id.head - 1) * s.b2.cols;
    for (int i = 0; i < dc.rows; ++i)
      for (int j = 0; j < s.b2.cols; ++j) grads.b2(0, j) += dc(i, b2_offset + j);
  }
  Matrix dz = gelu_backward(cache.z, dg);
  if (!lora_mode_) {
    add_inplace(grads.w1, matmul_tn(cache.xn, dz));
    add_inplace(grads.b1, column_sums(dz));
  }
  add_inplace(dxn, matmul_nt(dz, s.w1));

  // attention path
  Matrix dheadout = matmul_nt(dc, s.wo);
  if (!lora_mode_) add_inplace(grads.wo, matmul_tn(cache.headout, dc));
  Matrix dprobs = matmul_nt(dheadout, cache.v);
  Matrix dv = matmul_tn(cache.probs, dheadout);
  Matrix dscores = softmax_rows_backward(cache.probs, dprobs);
  double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix dq = matmul(dscores, cache.k);
  scale_inplace(dq, scale);
  Matrix dk = matmul_tn(dscores, cache.q);
  scale_inplace(dk, scale);

  auto projection_backward = [&](const Matrix& dproj, const Matrix& w_base, Matrix& gw,
                                 const Matrix* p, const Matrix* down, const Matrix* up,
                                 Matrix* gdown, Matrix* gup) {
    if (s.lora) {
      double sc = s.lora->scaling;
      Matrix dup = matmul_tn(*p, dproj);
      scale_inplace(dup, sc);
      add_inplace(*gup, dup);
      Matrix dp = matmul_nt(dproj, *up);
      scale_inplace(dp, sc);
      add_inplace(*gdown, matmul_tn(cache.xn, dp));
      add_inplace(dxn, matmul_nt(dp, *down));
    } else {
      add_inplace(gw, matmul_tn(cache.xn, dproj));
    }
    add_inplace(dxn, matmul_nt(dproj, w_base));
  };

  if (s.lora) {
    projection_backward(dq, s.wq, grads.wq, &cache.pq, &s.lora->down_q, &s.lora->up_q,
                        &grads.lora->down_q, &grads.lora->up_q);
    projection_backward(dk, s.wk, grads.wk, &cache.pk, &s.lora->down_k, &s.lora->up_k,
                        &grads.lora->down_k, &grads.lora->up_k);
    projection_backward(dv, s.wv, grads.wv, &cache.pv, &s.lora->down_v, &s.lora->up_v,
                        &grads.lora->down_v, &grads.lora->up_v);
  } else {
    projection_backward(dq, s.wq, grads.wq, nullptr, nullptr, nullptr, nullptr, nullptr);
    projection_backward(dk, s.wk, grads.wk, nullptr, nullptr, nullptr, nullptr, nullptr);
    projection_backward(dv, s.wv, grads.wv, nullptr, nullptr, nullptr, nullptr, nullptr);
  }
}

ForwardResult SubnetModel::subnet_forward(int subnet_index, const Matrix& x,
                                          OperationKind op) const {
  const Subnet& s = subnet(subnet_index);
  if (!s.id.is_block() && op != OperationKind::Full) {
    throw config_error("embed/head subnets always run the full operation");
  }
  ForwardResult res;
  switch (s.id.kind) {
    case SubnetId::Kind::Embed: {
      check_shape(x, config_.seq_len, config_.model_dim, "embed input");
      Matrix y = matmul(x, s.w_embed);
      add_row_vector(y, s.b_embed);
      add_inplace(y, s.pos);
      res.y = std::move(y);
      res.cache.emplace();
      res.cache->subnet_index = subnet_index;
      res.cache->x = x;
      break;
    }
    case SubnetId::Kind::Block: {
      check_shape(x, config_.seq_len, config_.model_dim, "block input");
      if (op == OperationKind::Shortcut) {
        res.y = x;  // residual route only; the subnet contributes zero
        break;
      }
      Matrix xn = layer_norm(x, kLayerNormEps);
      ActivationCache cache;
      bool want_cache = (op == OperationKind::Full);
      Matrix contrib = block_contribution(s, xn, want_cache ? &cache : nullptr);
      res.y = add(x, contrib);
      if (want_cache) {
        cache.subnet_index = subnet_index;
        cache.x = x;
        res.cache = std::move(cache);
      }
      break;
    }
    case SubnetId::Kind::Head: {
      check_shape(x, config_.seq_len, config_.model_dim, "head input");
      Matrix xn = layer_norm(x, kLayerNormEps);
      Matrix pooled = row_mean(xn);
      Matrix y = matmul(pooled, s.w_cls);
      add_row_vector(y, s.b_cls);
      res.y = std::move(y);
      res.cache.emplace();
      res.cache->subnet_index = subnet_index;
      res.cache->x = x;
      res.cache->xn = std::move(xn);
      res.cache->pooled = std::move(pooled);
      break;
    }
  }
  return res;
}

SubnetBackwardResult SubnetModel::subnet_backward(int subnet_index, const ActivationCache& cache,
                                                  const Matrix& dy) const {
  if (cache.subnet_index != subnet_index || cache.x.empty()) {
    throw state_error("subnet_backward requires the cache of a full forward of this subnet");
  }
  const Subnet& s = subnet(subnet_index);
  SubnetBackwardResult res;
  res.grads = zeros_like(s);
  switch (s.id.kind) {
    case SubnetId::Kind::Embed: {
      check_shape(dy, config_.seq_len, config_.model_dim, "embed dy");
      res.grads.w_embed = matmul_tn(cache.x, dy);
      res.grads.b_embed = column_sums(dy);
      res.grads.pos = dy;
      res.dx = matmul_nt(dy, s.w_embed);
      break;
    }
    case SubnetId::Kind::Block: {
      check_shape(dy, config_.seq_len, config_.model_dim, "block dy");
      Matrix dxn(config_.seq_len, config_.model_dim);
      contribution_backward(s, cache, dy, dxn, res.grads);
      res.dx = add(dy, layer_norm_backward(cache.x, dxn, kLayerNormEps));
      break;
    }
    case SubnetId::Kind::Head: {
      check_shape(dy, 1, config_.num_classes, "head dy");
      res.grads.w_cls = matmul_tn(cache.pooled, dy);
      res.grads.b_cls = dy;
      Matrix dpooled = matmul_nt(dy, s.w_cls);
      Matrix dxn(config_.seq_len, config_.model_dim);
      double inv = 1.0 / config_.seq_len;
      for (int i = 0; i < dxn.rows; ++i)
        for (int j = 0; j < dxn.cols; ++j) dxn(i, j) = dpooled(0, j) * inv;
      res.dx = layer_norm_backward(cache.x, dxn, kLayerNormEps);
      break;
    }
  }
  return res;
}

double cross_entropy(const Matrix& logits, int label, Matrix* dlogits) {
  if (logits.rows != 1) throw dimension_error("cross_entropy expects a 1 x C logits row");
  if (label < 0 || label >= logits.cols) throw input_error("label out of range");
  double mx = logits(0, 0);
  for (int j = 1; j < logits.cols; ++j) mx = std::max(mx, logits(0, j));
  double sum = 0.0;
  for (int j = 0; j < logits.cols; ++j) sum += std::exp(logits(0, j) - mx);
  double loss = std::log(sum) - (logits(0, label) - mx);
  if (dlogits) {
    *dlogits = Matrix(1, logits.cols);
    for (int j = 0; j < logits.cols; ++j) (*dlogits)(0, j) = std::exp(logits(0, j) - mx) / sum;
    (*dlogits)(0, label) -= 1.0;
  }
  return loss;
}

ForwardBackwardResult SubnetModel::forward_backward(
    std::span<const Matrix> inputs, std::span<const int> labels,
    std::span<const OperationKind> schedule_column) const {
  int k_sched = scheduled_count();
  if (static_cast<int>(schedule_column.size()) != k_sched) {
    throw input_error("schedule column must have one operation per scheduled subnet");
  }
  if (inputs.size() != labels.size() || inputs.empty()) {
    throw input_error("micro-batch inputs and labels must be non-empty and aligned");
  }

  ForwardBackwardResult out;
  out.grads.resize(subnets_.size());
  out.grads.front().emplace(zeros_like(subnets_.front()));
  out.grads.back().emplace(zeros_like(subnets_.back()));
  for (int r = 0; r < k_sched; ++r) {
    if (schedule_column[r] == OperationKind::Full) {
      int si = subnet_index_of_scheduled(r);
      out.grads[static_cast<std::size_t>(si)].emplace(zeros_like(subnets_[si]));
    }
  }

  const int L = config_.num_blocks, H = config_.heads_per_block;
  const double inv_n = 1.0 / static_cast<double>(inputs.size());

  for (std::size_t sample = 0; sample < inputs.size(); ++sample) {
    const Matrix& input = inputs[sample];
    check_shape(input, config_.seq_len, config_.model_dim, "sample input");

    // forward
    ForwardResult embed = subnet_forward(0, input, OperationKind::Full);
    std::vector<Matrix> block_inputs;
    block_inputs.reserve(static_cast<std::size_t>(L) + 1);
    block_inputs.push_back(std::move(embed.y));
    std::vector<std::optional<ActivationCache>> caches(static_cast<std::size_t>(k_sched));
    for (int l = 0; l < L; ++l) {
      const Matrix& xin = block_inputs.back();
      Matrix xn = layer_norm(xin, kLayerNormEps);
      Matrix acc = xin;
      for (int h = 0; h < H; ++h) {
        int r = l * H + h;
        OperationKind op = schedule_column[r];
        if (op == OperationKind::Shortcut) continue;
        const Subnet& s = subnets_[static_cast<std::size_t>(subnet_index_of_scheduled(r))];
        ActivationCache* cptr = nullptr;
        if (op == OperationKind::Full) {
          caches[static_cast<std::size_t>(r)].emplace();
          cptr = &*caches[static_cast<std::size_t>(r)];
        }
        Matrix contrib = block_contribution(s, xn, cptr);
        add_inplace(acc, contrib);
      }
      block_inputs.push_back(std::move(acc));
    }
    const Matrix& final_x = block_inputs.back();
    Matrix xn_h = layer_norm(final_x, kLayerNormEps);
    Matrix pooled = row_mean(xn_h);
    const Subnet& head = subnets_.back();
    Matrix logits = matmul(pooled, head.w_cls);
    add_row_vector(logits, head.b_cls);

    Matrix dlogits;
    out.loss += cross_entropy(logits, labels[sample], &dlogits) * inv_n;
    scale_inplace(dlogits, inv_n);

    // backward: head
    if (!lora_mode_) {
      Subnet& head_grads = *out.grads.back();
      add_inplace(head_grads.w_cls, matmul_tn(pooled, dlogits));
      add_inplace(head_grads.b_cls, dlogits);
    }
    Matrix dpooled = matmul_nt(dlogits, head.w_cls);
    Matrix dxn_h(config_.seq_len, config_.model_dim);
    double inv_s = 1.0 / config_.seq_len;
    for (int i = 0; i < dxn_h.rows; ++i)
      for (int j = 0; j < dxn_h.cols; ++j) dxn_h(i, j) = dpooled(0, j) * inv_s;
    Matrix dx = layer_norm_backward(final_x, dxn_h, kLayerNormEps);

    // backward: blocks, in reverse
    for (int l = L - 1; l >= 0; --l) {
      const Matrix& xin = block_inputs[static_cast<std::size_t>(l)];
      Matrix dxn(config_.seq_len, config_.model_dim);
      bool any = false;
      for (int h = 0; h < H; ++h) {
        int r = l * H + h;
        if (schedule_column[r] != OperationKind::Full) continue;
        int si = subnet_index_of_scheduled(r);
        contribution_backward(subnets_[static_cast<std::size_t>(si)],
                              *caches[static_cast<std::size_t>(r)], dx, dxn,
                              *out.grads[static_cast<std::size_t>(si)]);
        any = true;
      }
      if (any) add_inplace(dx, layer_norm_backward(xin, dxn, kLayerNormEps));
    }

    // backward: embed
    if (!lora_mode_) {
      Subnet& eg = *out.grads.front();
      add_inplace(eg.w_embed, matmul_tn(input, dx));
      add_inplace(eg.b_embed, column_sums(dx));
      add_inplace(eg.pos, dx);
    }
  }
  return out;
}

Matrix SubnetModel::logits(const Matrix& input) const {
  std::vector<OperationKind> all_full(static_cast<std::size_t>(scheduled_count()),
                                      OperationKind::Full);
  Matrix x = subnet_forward(0, input, OperationKind::Full).y;
  const int L = config_.num_blocks, H = config_.heads_per_block;
  for (int l = 0; l < L; ++l) {
    Matrix xn = layer_norm(x, kLayerNormEps);
    Matrix acc = x;
    for (int h = 0; h < H; ++h) {
      int si = subnet_index_of_scheduled(l * H + h);
      add_inplace(acc, block_contribution(subnets_[static_cast<std::size_t>(si)], xn, nullptr));
    }
    x = std::move(acc);
  }
  return subnet_forward(subnet_count() - 1, x, OperationKind::Full).y;
}

std::size_t SubnetModel::parameter_count() const {
  std::size_t n = 0;
  for (const Subnet& s : subnets_) n += s.parameter_count();
  return n;
}

std::vector<std::uint8_t> SubnetModel::parameter_bytes(bool include_adapters) const {
  std::vector<std::uint8_t> bytes;
  for (const Subnet& s : subnets_) {
    visit_tensors(s, [&](const char* name, const Matrix& m) {
      if (!include_adapters && std::strncmp(name, "lora.", 5) == 0) return;
      const auto* p = reinterpret_cast<const std::uint8_t*>(m.data.data());
      bytes.insert(bytes.end(), p, p + m.data.size() * sizeof(double));
    });
  }
  return bytes;
}

namespace {

constexpr char kCheckpointMagic[8] = {'D', '2', 'F', 'T', 'C', 'K', 'P', '1'};

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

void SubnetModel::save(const std::string& path) const {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw input_error("cannot open checkpoint for writing: " + tmp);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    write_pod(out, static_cast<std::int32_t>(config_.num_blocks));
    write_pod(out, static_cast<std::int32_t>(config_.heads_per_block));
    write_pod(out, static_cast<std::int32_t>(config_.model_dim));
    write_pod(out, static_cast<std::int32_t>(config_.ffn_hidden));
    write_pod(out, static_cast<std::int32_t>(config_.seq_len));
    write_pod(out, static_cast<std::int32_t>(config_.num_classes));
    write_pod(out, static_cast<std::uint64_t>(config_.seed));
    std::uint8_t lora_flag = lora_mode_ ? 1 : 0;
    write_pod(out, lora_flag);
    if (lora_mode_) {
      const LoraAdapter& a = *subnets_[1].lora;
      write_pod(out, static_cast<std::int32_t>(a.rank));
      write_pod(out, a.scaling);
    }
    for (const Subnet& s : subnets_) {
      visit_tensors(s, [&](const char*, const Matrix& m) {
        out.write(reinterpret_cast<const char*>(m.data.data()),
                  static_cast<std::streamsize>(m.data.size() * sizeof(double)));
      });
    }
    if (!out) throw input_error("checkpoint write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw input_error("cannot move checkpoint into place: " + path);
  }
}

SubnetModel SubnetModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw input_error("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw input_error("not a model checkpoint: " + path);
  }
  ModelConfig cfg;
  cfg.num_blocks = read_pod<std::int32_t>(in);
  cfg.heads_per_block = read_pod<std::int32_t>(in);
  cfg.model_dim = read_pod<std::int32_t>(in);
  cfg.ffn_hidden = read_pod<std::int32_t>(in);
  cfg.seq_len = read_pod<std::int32_t>(in);
  cfg.num_classes = read_pod<std::int32_t>(in);
  cfg.seed = read_pod<std::uint64_t>(in);
  SubnetModel model(cfg);
  std::uint8_t lora_flag = read_pod<std::uint8_t>(in);
  if (lora_flag) {
    auto rank = read_pod<std::int32_t>(in);
    auto scaling = read_pod<double>(in);
    model.attach_lora(rank, scaling);
  }
  for (Subnet& s : model.subnets_) {
    visit_tensors(s, [&](const char*, Matrix& m) {
      in.read(reinterpret_cast<char*>(m.data.data()),
              static_cast<std::streamsize>(m.data.size() * sizeof(double)));
    });
  }
  if (!in) throw input_error("truncated checkpoint: " + path);
  return model;
}

}  // namespace d2ft
