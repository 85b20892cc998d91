// Copyright (c) 2026 The d2ft authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numeric>

#include "doctest.h"
#include "d2ft/rng.hpp"
#include "d2ft/trainer.hpp"
#include "support/oracles.hpp"

using namespace d2ft;

namespace {

ModelConfig trainer_config() {
  ModelConfig cfg;
  cfg.num_blocks = 2;
  cfg.heads_per_block = 2;
  cfg.model_dim = 8;
  cfg.ffn_hidden = 8;
  cfg.seq_len = 4;
  cfg.num_classes = 4;
  cfg.seed = 17;
  return cfg;
}

SynthDatasetSpec trainer_dataset_spec(const ModelConfig& cfg, int samples) {
  SynthDatasetSpec spec;
  spec.num_samples = samples;
  spec.num_classes = cfg.num_classes;
  spec.token_dim = cfg.model_dim;
  spec.seq_len = cfg.seq_len;
  spec.noise_level = 0.4;
  spec.seed = 23;
  return spec;
}

TrainConfig base_train_config() {
  TrainConfig tc;
  tc.epochs = 3;
  tc.learning_rate = 0.05;
  tc.momentum = 0.9;
  tc.batch_size = 10;
  tc.micro_batch_size = 2;  // 5 micro-batches per batch
  tc.seed = 3;
  tc.budget.n_full = 3;
  tc.budget.n_fwd = 1;
  return tc;
}

}  // namespace

TEST_CASE("synthetic dataset generation") {
  ModelConfig cfg = trainer_config();
  SynthDatasetSpec spec = trainer_dataset_spec(cfg, 40);

  SUBCASE("deterministic and balanced") {
    Dataset a = make_synthetic_dataset(spec);
    Dataset b = make_synthetic_dataset(spec);
    REQUIRE(a.size() == 40);
    for (int i = 0; i < a.size(); ++i) {
      CHECK(a.samples[static_cast<std::size_t>(i)].data ==
            b.samples[static_cast<std::size_t>(i)].data);
    }
    std::vector<int> counts(static_cast<std::size_t>(spec.num_classes), 0);
    for (int l : a.labels) ++counts[static_cast<std::size_t>(l)];
    for (int c : counts) CHECK(c == 10);
  }

  SUBCASE("class-mean estimates recover the spec means within 3 sigma") {
    SynthDatasetSpec big = spec;
    big.num_samples = 10000;
    Dataset ds = make_synthetic_dataset(big);
    for (int c = 0; c < big.num_classes; ++c) {
      std::vector<double> mean_est(static_cast<std::size_t>(big.token_dim), 0.0);
      int token_count = 0;
      for (int i = 0; i < ds.size(); ++i) {
        if (ds.labels[static_cast<std::size_t>(i)] != c) continue;
        const Matrix& x = ds.samples[static_cast<std::size_t>(i)];
        for (int t = 0; t < x.rows; ++t)
          for (int j = 0; j < x.cols; ++j) mean_est[static_cast<std::size_t>(j)] += x(t, j);
        token_count += x.rows;
      }
      for (double& v : mean_est) v /= token_count;
      std::vector<double> truth = synthetic_class_mean(big, c);
      double sigma = big.noise_level / std::sqrt(static_cast<double>(token_count));
      for (int j = 0; j < big.token_dim; ++j) {
        CHECK(std::abs(mean_est[static_cast<std::size_t>(j)] -
                       truth[static_cast<std::size_t>(j)]) < 3.0 * sigma);
      }
    }
  }

  SUBCASE("degenerate specs are rejected") {
    SynthDatasetSpec bad = spec;
    bad.token_dim = 0;
    CHECK_THROWS_AS(make_synthetic_dataset(bad), Error);
    SynthDatasetSpec neg = spec;
    neg.noise_level = -0.5;
    CHECK_THROWS_AS(make_synthetic_dataset(neg), Error);
    SynthDatasetSpec unbalanced = spec;
    unbalanced.num_samples = 41;
    CHECK_THROWS_AS(make_synthetic_dataset(unbalanced), Error);
  }

  SUBCASE("zero noise is linearly separable: a trained model is perfect") {
    ModelConfig small = trainer_config();
    small.num_classes = 2;
    SynthDatasetSpec sep = trainer_dataset_spec(small, 20);
    sep.num_classes = 2;
    sep.noise_level = 0.0;
    Dataset ds = make_synthetic_dataset(sep);
    SubnetModel model(small);
    TrainConfig tc = base_train_config();
    tc.policy.kind = PolicyKind::Standard;
    tc.epochs = 40;
    tc.learning_rate = 0.1;
    TrainHistory h = train(model, ds, tc);
    CHECK(h.epochs.back().top1 == 1.0);
  }
}

TEST_CASE("sgd with momentum follows the scalar recurrence") {
  Matrix p(1, 1), g(1, 1), v(1, 1);

  SUBCASE("zero momentum is plain gradient descent") {
    p(0, 0) = 1.0;
    g(0, 0) = 0.25;
    sgd_momentum_step(p, g, v, 0.1, 0.0);
    CHECK(p(0, 0) == 1.0 - 0.1 * 0.25);
  }

  SUBCASE("zero gradients never move the parameters") {
    p(0, 0) = 2.0;
    for (int i = 0; i < 5; ++i) sgd_momentum_step(p, g, v, 0.1, 0.9);
    CHECK(p(0, 0) == 2.0);
    CHECK(v(0, 0) == 0.0);
  }

  SUBCASE("two steps with constant gradient accumulate (2 + momentum)") {
    const double lr = 0.1, m = 0.9, grad = 0.5, p0 = 3.0;
    p(0, 0) = p0;
    g(0, 0) = grad;
    sgd_momentum_step(p, g, v, lr, m);
    sgd_momentum_step(p, g, v, lr, m);
    CHECK(p(0, 0) == doctest::Approx(p0 - lr * (2.0 + m) * grad).epsilon(1e-15));
  }

  SUBCASE("non-finite gradients are rejected") {
    g(0, 0) = std::nan("");
    CHECK_THROWS_AS(sgd_momentum_step(p, g, v, 0.1, 0.9), Error);
  }
}

TEST_CASE("standard policy reproduces the monolithic reference trainer") {
  ModelConfig cfg = trainer_config();
  Dataset ds = make_synthetic_dataset(trainer_dataset_spec(cfg, 40));
  TrainConfig tc = base_train_config();
  tc.policy.kind = PolicyKind::Standard;
  tc.epochs = 3;

  SubnetModel model(cfg);
  TrainHistory ours = train(model, ds, tc);

  // independent reference: monolithic matrices, same data order and SGD
  SubnetModel fresh(cfg);
  testing::MonolithicModel mono = testing::assemble_monolithic(fresh);
  const int n_mb = tc.micro_batches_per_batch();
  const int total_units = ds.micro_batch_count(tc.micro_batch_size);
  const int batches = total_units / n_mb;

  auto grads_like = [&](const testing::MonolithicModel& m) {
    testing::MonolithicGrads g;
    g.w_embed = Matrix(m.w_embed.rows, m.w_embed.cols);
    g.b_embed = Matrix(1, m.cfg.model_dim);
    g.pos = Matrix(m.cfg.seq_len, m.cfg.model_dim);
    for (int l = 0; l < m.cfg.num_blocks; ++l) {
      g.wq.emplace_back(m.cfg.model_dim, m.cfg.model_dim);
      g.wk.emplace_back(m.cfg.model_dim, m.cfg.model_dim);
      g.wv.emplace_back(m.cfg.model_dim, m.cfg.model_dim);
      g.wo.emplace_back(m.cfg.model_dim, m.cfg.model_dim);
      g.w1.emplace_back(m.cfg.model_dim, m.cfg.ffn_hidden);
      g.b1.emplace_back(1, m.cfg.ffn_hidden);
      g.w2.emplace_back(m.cfg.ffn_hidden, m.cfg.model_dim);
      g.b2.emplace_back(1, m.cfg.model_dim);
    }
    g.w_cls = Matrix(m.cfg.model_dim, m.cfg.num_classes);
    g.b_cls = Matrix(1, m.cfg.num_classes);
    return g;
  };

  testing::MonolithicGrads velocity = grads_like(mono);
  auto visit_mono = [&](testing::MonolithicModel& mm, testing::MonolithicGrads& gg,
                        testing::MonolithicGrads& vv, auto&& fn) {
    fn(mm.w_embed, gg.w_embed, vv.w_embed);
    fn(mm.b_embed, gg.b_embed, vv.b_embed);
    fn(mm.pos, gg.pos, vv.pos);
    for (int l = 0; l < mm.cfg.num_blocks; ++l) {
      fn(mm.wq[l], gg.wq[l], vv.wq[l]);
      fn(mm.wk[l], gg.wk[l], vv.wk[l]);
      fn(mm.wv[l], gg.wv[l], vv.wv[l]);
      fn(mm.wo[l], gg.wo[l], vv.wo[l]);
      fn(mm.w1[l], gg.w1[l], vv.w1[l]);
      fn(mm.b1[l], gg.b1[l], vv.b1[l]);
      fn(mm.w2[l], gg.w2[l], vv.w2[l]);
      fn(mm.b2[l], gg.b2[l], vv.b2[l]);
    }
    fn(mm.w_cls, gg.w_cls, vv.w_cls);
    fn(mm.b_cls, gg.b_cls, vv.b_cls);
  };

  std::vector<int> unit_order(static_cast<std::size_t>(total_units));
  std::iota(unit_order.begin(), unit_order.end(), 0);
  std::vector<double> ref_losses;
  const double inv_mb = 1.0 / n_mb;
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    auto erng = make_rng(tc.seed, 0xE000u + static_cast<std::uint64_t>(epoch));
    shuffle(unit_order, erng);
    double epoch_loss = 0.0;
    for (int b = 0; b < batches; ++b) {
      testing::MonolithicGrads accum = grads_like(mono);
      double batch_loss = 0.0;
      for (int j = 0; j < n_mb; ++j) {
        int unit = unit_order[static_cast<std::size_t>(b) * n_mb + static_cast<std::size_t>(j)];
        auto r = testing::monolithic_forward_backward(
            mono, ds.unit_inputs(unit, tc.micro_batch_size),
            ds.unit_labels(unit, tc.micro_batch_size));
        batch_loss += r.loss * inv_mb;
        testing::MonolithicGrads& rg = r.grads;
        visit_mono(mono, rg, accum, [&](Matrix&, Matrix& src, Matrix& dst) {
          axpy_inplace(dst, inv_mb, src);
        });
      }
      epoch_loss += batch_loss / batches;
      visit_mono(mono, accum, velocity, [&](Matrix& param, Matrix& grad, Matrix& vel) {
        sgd_momentum_step(param, grad, vel, tc.learning_rate, tc.momentum);
      });
    }
    ref_losses.push_back(epoch_loss);
  }

  REQUIRE(ours.epochs.size() == ref_losses.size());
  for (std::size_t e = 0; e < ref_losses.size(); ++e) {
    CHECK(ours.epochs[e].loss ==
          doctest::Approx(ref_losses[e]).epsilon(1e-8));
    CHECK(ours.epochs[e].compute_fraction == 1.0);
    CHECK(ours.epochs[e].comm_fraction == 1.0);
  }
}

TEST_CASE("update locality under restrictive schedules") {
  ModelConfig cfg = trainer_config();
  Dataset ds = make_synthetic_dataset(trainer_dataset_spec(cfg, 40));

  auto block_bytes = [&](const SubnetModel& m) {
    std::vector<std::uint8_t> bytes;
    for (int r = 0; r < m.scheduled_count(); ++r) {
      visit_tensors(m.subnet(1 + r), [&](const char*, const Matrix& mat) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(mat.data.data());
        bytes.insert(bytes.end(), p, p + mat.data.size() * sizeof(double));
      });
    }
    return bytes;
  };

  SUBCASE("all-shortcut blocks never change") {
    SubnetModel model(cfg);
    auto before = block_bytes(model);
    auto embed_before = model.subnet(0).w_embed.data;
    TrainConfig tc = base_train_config();
    tc.policy.kind = PolicyKind::Random;
    tc.budget.n_full = 0;
    tc.budget.n_fwd = 0;
    TrainHistory h = train(model, ds, tc);
    CHECK(block_bytes(model) == before);
    CHECK(model.subnet(0).w_embed.data != embed_before);  // embed always trains
    CHECK(h.epochs.back().compute_fraction == 0.0);
    CHECK(h.epochs.back().comm_fraction == 0.0);
  }

  SUBCASE("forward-only cells accumulate exactly zero updates") {
    SubnetModel model(cfg);
    auto before = block_bytes(model);
    TrainConfig tc = base_train_config();
    tc.policy.kind = PolicyKind::Random;
    tc.budget.n_full = 0;
    tc.budget.n_fwd = 2;
    TrainHistory h = train(model, ds, tc);
    CHECK(block_bytes(model) == before);
    // (0*5 + 2*2) / 25 of the compute, (0 + 2*0.5) / 5 of the communication
    CHECK(h.epochs.back().compute_fraction == 0.16);
    CHECK(h.epochs.back().comm_fraction == 0.2);
  }
}

TEST_CASE("realized cost fractions equal the scheduled budget exactly") {
  ModelConfig cfg = trainer_config();
  Dataset ds = make_synthetic_dataset(trainer_dataset_spec(cfg, 40));
  SubnetModel model(cfg);
  TrainConfig tc = base_train_config();
  tc.policy.kind = PolicyKind::Random;
  tc.budget.n_full = 2;
  tc.budget.n_fwd = 1;
  TrainHistory h = train(model, ds, tc);
  for (const EpochRecord& r : h.epochs) {
    CHECK(r.compute_fraction == 0.48);  // (2*5 + 1*2) / 25
    CHECK(r.comm_fraction == 0.5);      // (2 + 0.5) / 5
  }
}

TEST_CASE("evaluate") {
  ModelConfig cfg = trainer_config();
  Dataset ds = make_synthetic_dataset(trainer_dataset_spec(cfg, 80));
  SubnetModel model(cfg);

  SUBCASE("untrained accuracy sits at chance level") {
    double acc = evaluate(model, ds);
    double sigma = std::sqrt(0.25 * 0.75 / 80.0);
    CHECK(std::abs(acc - 0.25) < 3.0 * sigma + 1e-12);
  }

  SUBCASE("matches an independent argmax recount through the monolithic path") {
    testing::MonolithicModel mono = testing::assemble_monolithic(model);
    int correct = 0;
    for (int i = 0; i < ds.size(); ++i) {
      Matrix logits = testing::monolithic_logits(mono, ds.samples[static_cast<std::size_t>(i)]);
      int best = 0;
      for (int j = 1; j < logits.cols; ++j)
        if (logits(0, j) > logits(0, best)) best = j;
      if (best == ds.labels[static_cast<std::size_t>(i)]) ++correct;
    }
    CHECK(evaluate(model, ds) == static_cast<double>(correct) / ds.size());
  }

  SUBCASE("deterministic") {
    CHECK(evaluate(model, ds) == evaluate(model, ds));
  }
}

TEST_CASE("policies run end to end and schedules stay feasible") {
  ModelConfig cfg = trainer_config();
  Dataset ds = make_synthetic_dataset(trainer_dataset_spec(cfg, 40));

  for (PolicyKind kind : {PolicyKind::D2FT, PolicyKind::Random, PolicyKind::DPruningM,
                          PolicyKind::DPruningMG, PolicyKind::Scaler}) {
    SubnetModel model(cfg);
    TrainConfig tc = base_train_config();
    tc.policy.kind = kind;
    tc.policy.scaler = ScalerConfig::max();
    tc.epochs = 2;
    TrainHistory h = train(model, ds, tc);
    CHECK(h.epochs.size() == 2);
    for (const EpochRecord& r : h.epochs) {
      CHECK(std::isfinite(r.loss));
      CHECK(r.compute_fraction <= 1.0);
    }
  }
}

TEST_CASE("training under a d2ft schedule reduces the loss") {
  ModelConfig cfg = trainer_config();
  Dataset ds = make_synthetic_dataset(trainer_dataset_spec(cfg, 40));
  SubnetModel model(cfg);
  TrainConfig tc = base_train_config();
  tc.policy.kind = PolicyKind::D2FT;
  tc.epochs = 6;
  TrainHistory h = train(model, ds, tc);
  CHECK(h.epochs.back().loss < h.epochs.front().loss);
}

TEST_CASE("lora training freezes every base parameter bit") {
  ModelConfig cfg = trainer_config();
  Dataset ds = make_synthetic_dataset(trainer_dataset_spec(cfg, 40));
  SubnetModel model(cfg);
  model.attach_lora(2, 1.0);
  auto base_before = model.parameter_bytes(/*include_adapters=*/false);
  auto all_before = model.parameter_bytes(true);

  TrainConfig tc = base_train_config();
  tc.policy.kind = PolicyKind::D2FT;
  tc.cost_model = CostModel::lora_finetune();
  tc.epochs = 3;
  train(model, ds, tc);
  CHECK(model.parameter_bytes(false) == base_before);
  CHECK(model.parameter_bytes(true) != all_before);  // the adapters moved
}

TEST_CASE("infeasible budgets fail before touching the model") {
  ModelConfig cfg = trainer_config();
  Dataset ds = make_synthetic_dataset(trainer_dataset_spec(cfg, 40));
  SubnetModel model(cfg);
  auto before = model.parameter_bytes();
  TrainConfig tc = base_train_config();
  tc.budget.n_full = 5;
  tc.budget.n_fwd = 2;  // 7 > 5 micro-batches
  CHECK_THROWS_AS(train(model, ds, tc), Error);
  CHECK(model.parameter_bytes() == before);
}
