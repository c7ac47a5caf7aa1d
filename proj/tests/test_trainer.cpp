#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "specfas/ops.hpp"
#include "specfas/trainer.hpp"
#include "support.hpp"

using namespace specfas;

namespace {

RunConfig tiny_config() {
  RunConfig cfg;
  cfg.model.height = 16;
  cfg.model.width = 16;
  cfg.model.channels = {3, 4, 4};
  cfg.model.attention_maps = 2;
  cfg.model.proj_dim = 4;
  cfg.train.batch_size = 4;
  cfg.train.epochs = 2;
  cfg.train.seed = 5;
  cfg.ror.embed_dim = 8;
  return cfg;
}

TrainSetup setup_for(const RunConfig& cfg, const DatasetManifest& train) {
  TrainSetup s;
  s.config = cfg;
  s.balanced = train;
  s.ror_weights = ror_weights_for(cfg, train);
  s.total_steps = cfg.train.epochs * s.steps_per_epoch();
  return s;
}

std::vector<double> flat(const ModelParams& p) {
  std::vector<double> out;
  for (const auto& t : p.tensors()) out.insert(out.end(), t.data().begin(), t.data().end());
  return out;
}

}  // namespace

TEST_CASE("cosine schedule") {
  CHECK(std::abs(cosine_lr(0, 100, 0.01, 0.0) - 0.01) <= 1e-12);
  CHECK(std::abs(cosine_lr(100, 100, 0.01, 0.001) - 0.001) <= 1e-12);
  CHECK(std::abs(cosine_lr(50, 100, 0.01, 0.0) - 0.005) <= 1e-12);
  CHECK_THROWS_AS(cosine_lr(101, 100, 0.01, 0.0), std::out_of_range);
  CHECK_THROWS_AS(cosine_lr(0, 0, 0.01, 0.0), std::invalid_argument);
  double prev = cosine_lr(0, 37, 0.3, 0.01);
  for (std::size_t t = 1; t <= 37; ++t) {
    const double lr = cosine_lr(t, 37, 0.3, 0.01);
    CHECK(lr <= prev);
    prev = lr;
  }
}

TEST_CASE("asam one-dimensional hand computation") {
  Tensor w = Tensor::from({1}, {1.0}, true);
  const std::vector<Tensor> params{w};
  const AsamResult r = asam_step(params, [&] { return ops::sum(w * w); }, {0.1, 0.1, 0.0, 0.0});
  CHECK(r.ascended);
  CHECK(r.loss == 1.0);
  CHECK(std::abs(r.perturbed_loss - 1.21) <= 1e-12);
  CHECK(std::abs(w.data()[0] - 0.78) <= 1e-12);
  CHECK(w.grad()[0] == 0.0);
}

TEST_CASE("asam with zero radius is plain descent with weight decay") {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor w = testing::random_tensor(rng, {3, 2}, -1, 1, true);
    const Tensor a = testing::random_tensor(rng, {3, 2});
    const std::vector<double> before(w.data().begin(), w.data().end());
    const std::vector<Tensor> params{w};
    const double lr = rng.uniform(0.01, 0.5), wd = rng.uniform(0.0, 0.1);
    // f = sum(a * w^3): gradient 3 a w^2
    const AsamResult r = asam_step(params, [&] { return ops::sum(a * w * w * w); }, {lr, 0.0, 0.01, wd});
    CHECK_FALSE(r.ascended);
    for (std::size_t i = 0; i < 6; ++i) {
      const double g = 3.0 * a.data()[i] * before[i] * before[i];
      CHECK(std::abs(w.data()[i] - (before[i] - lr * (g + wd * before[i]))) <= 1e-12);
    }
  }
}

TEST_CASE("asam skips ascent on a zero gradient") {
  Tensor w = Tensor::from({2}, {0.0, 0.0}, true);
  const std::vector<Tensor> params{w};
  const AsamResult r = asam_step(params, [&] { return ops::sum(w * w); }, {0.1, 0.5, 0.01, 0.0});
  CHECK_FALSE(r.ascended);
  CHECK(w.data()[0] == 0.0);
}

TEST_CASE("asam ascent raises the loss on convex quadratics") {
  Rng rng(2);
  SUBCASE("bowl example moves along +w") {
    Tensor w = Tensor::from({2}, {1.0, 0.0}, true);
    const std::vector<Tensor> params{w};
    const AsamResult r = asam_step(params, [&] { return ops::scale(ops::sum(w * w), 0.5); }, {0.0, 0.1, 0.0, 0.0});
    CHECK(r.perturbed_loss >= r.loss);
    CHECK(r.perturbed_loss == doctest::Approx(0.5 * 1.1 * 1.1).epsilon(1e-12));
  }
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 2 + rng.index(5);
    // f(w) = 0.5 w^T (B^T B + I) w + b^T w
    const Tensor b_mat = testing::random_tensor(rng, {d, d});
    std::vector<double> q(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t k = 0; k < d; ++k) q[i * d + j] += b_mat.at({k, i}) * b_mat.at({k, j});
        if (i == j) q[i * d + j] += 1.0;
      }
    const Tensor Q = Tensor::from({d, d}, q);
    const Tensor lin = testing::random_tensor(rng, {d, 1});
    Tensor w = testing::random_tensor(rng, {d, 1}, -2, 2, true);
    const std::vector<Tensor> params{w};
    auto f = [&] {
      return ops::scale(ops::sum(ops::matmul(ops::transpose_last2(w), ops::matmul(Q, w))), 0.5) +
             ops::sum(lin * w);
    };
    const AsamResult r = asam_step(params, f, {0.01, rng.uniform(0.01, 1.0), rng.uniform(0.0, 0.1), 0.0});
    CHECK(r.perturbed_loss >= r.loss);
  }
}

TEST_CASE("epoch plumbing") {
  testing::TempDir dir("trainer");
  const SyntheticDataset ds = generate_synthetic({3, 0.01, 16, 16}, dir.path());
  RunConfig cfg = tiny_config();
  cfg.loss.xbm_capacity = 6;

  DatasetManifest eight = ds.train;
  eight.entries.clear();
  for (Label want : {Label::Real, Label::Fake}) {
    std::size_t taken = 0;
    for (const auto& e : ds.train.entries) {
      if (e.label == want && taken < 4) {
        eight.entries.push_back(e);
        ++taken;
      }
    }
  }
  TrainSetup setup = setup_for(cfg, eight);
  CHECK(setup.steps_per_epoch() == 2);

  TrainState state{ModelParams::init(cfg.model), EmbeddingBank(cfg.loss.xbm_capacity)};
  const EpochReport r = train_epoch(state, setup);
  CHECK(r.steps == 2);
  CHECK(std::isfinite(r.mean_loss));
  CHECK(r.bank_size == 6);
  CHECK(r.lr_trace.size() == 2);
  CHECK(r.lr_trace[0] == cfg.train.lr_max);
  CHECK(state.step == 2);
  CHECK(state.epoch == 1);

  SUBCASE("orders are seeded permutations") {
    auto o = epoch_order(1, 0, 10);
    CHECK(o == epoch_order(1, 0, 10));
    CHECK(o != epoch_order(1, 1, 10));
    std::sort(o.begin(), o.end());
    for (std::size_t i = 0; i < 10; ++i) CHECK(o[i] == i);
  }
  SUBCASE("batches keep class labels after mixup") {
    const std::vector<std::size_t> pos{0, 1, 2, 3, 4, 5, 6, 7};
    const Batch b = prepare_batch(setup, pos, 0, 0);
    CHECK(b.x.shape() == Shape{8, 16, 16, 33});
    for (std::size_t i = 0; i < 8; ++i) {
      CHECK(b.targets[i] == OneHotLabel::of(b.labels[i]));
      CHECK((b.weights[i] >= 0.0 && b.weights[i] <= 1.0));
    }
    const Batch again = prepare_batch(setup, pos, 0, 0);
    CHECK(std::equal(b.x.data().begin(), b.x.data().end(), again.x.data().begin()));
  }
}

TEST_CASE("reduced trainer matches a plain cross-entropy loop") {
  testing::TempDir dir("trainer_ce");
  const SyntheticDataset ds = generate_synthetic({4, 0.01, 16, 16}, dir.path());
  RunConfig cfg = tiny_config();
  cfg.loss.lambda_scl = 0.0;
  cfg.loss.gamma = 0.0;
  cfg.mixup.enabled = false;
  cfg.augment = AugmentConfig::identity();
  cfg.train.asam_rho = 0.0;
  cfg.train.lr_max = 0.05;
  cfg.ror.enabled = false;

  DatasetManifest twelve = ds.train;
  twelve.entries.resize(12);
  const TrainSetup setup = setup_for(cfg, twelve);
  TrainState state{ModelParams::init(cfg.model), EmbeddingBank(cfg.loss.xbm_capacity)};
  train_epoch(state, setup);

  // Reference loop.
  ModelParams ref = ModelParams::init(cfg.model);
  const auto order = epoch_order(cfg.train.seed, 0, 12);
  const std::size_t total = setup.total_steps;
  for (std::size_t step = 0; step < 3; ++step) {
    std::vector<Tensor> xs;
    std::vector<double> onehot;
    for (std::size_t k = 0; k < 4; ++k) {
      const ManifestEntry& e = twelve.entries[order[step * 4 + k]];
      xs.push_back(ops::reshape(load_sample(twelve, e).stacked().detach(), {1, 16, 16, 33}));
      onehot.push_back(e.label == Label::Real ? 1.0 : 0.0);
      onehot.push_back(e.label == Label::Fake ? 1.0 : 0.0);
    }
    const Tensor x = ops::concat(xs, 0);
    const Tensor y = Tensor::from({4, 2}, onehot);
    ref.zero_grad();
    const Tensor logits = model_forward(x, ref, cfg.model).logits;
    ops::scale(ops::sum(ops::log_softmax(logits) * y), -0.25).backward();
    const double lr = cfg.train.lr_min + 0.5 * (cfg.train.lr_max - cfg.train.lr_min) *
                                             (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) /
                                                             static_cast<double>(total)));
    for (auto& t : ref.tensors()) {
      auto data = t.mutable_data();
      const auto g = t.grad();
      for (std::size_t i = 0; i < data.size(); ++i) data[i] -= lr * (g[i] + cfg.train.weight_decay * data[i]);
    }
  }
  const auto a = flat(state.params), b = flat(ref);
  REQUIRE(a.size() == b.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  CHECK(worst <= 1e-9);
}

TEST_CASE("identical seeds give identical parameters") {
  testing::TempDir dir("trainer_det");
  const SyntheticDataset ds = generate_synthetic({6, 0.01, 16, 16}, dir.path());
  RunConfig cfg = tiny_config();
  cfg.train.workers = 3;
  const DatasetManifest balanced = oversample_balance(ds.train, cfg.train.seed);
  const TrainSetup setup = setup_for(cfg, balanced);
  auto run = [&] {
    TrainState s{ModelParams::init(cfg.model), EmbeddingBank(cfg.loss.xbm_capacity)};
    train_epoch(s, setup);
    return flat(s.params);
  };
  CHECK(run() == run());
}

TEST_CASE("evaluation") {
  testing::TempDir dir("trainer_eval");
  const SyntheticDataset ds = generate_synthetic({7, 0.01, 16, 16}, dir.path());
  RunConfig cfg = tiny_config();
  const ModelParams p = ModelParams::init(cfg.model);
  const Evaluation e = evaluate(p, cfg.model, ds.val, 0.5, 3);
  const ClassCounts c = ds.val.counts();
  CHECK(e.scores.size() == ds.val.entries.size());
  CHECK(e.report.counts.fakes() + e.report.counts.reals() == ds.val.entries.size());
  (void)c;
  const Evaluation all_real = evaluate(p, cfg.model, ds.val, 1.0 + 1e-9);
  CHECK(all_real.report.apcer == 100.0);
  CHECK(all_real.report.bpcer == 0.0);
  DatasetManifest empty = ds.val;
  empty.entries.clear();
  CHECK_THROWS_AS(evaluate(p, cfg.model, empty, 0.5), std::invalid_argument);
}

TEST_CASE("full run writes artefacts and training reduces the loss") {
  testing::TempDir dir("trainer_run");
  generate_synthetic({8, 0.05, 16, 16}, dir / "data");
  RunConfig cfg;
  cfg.train.seed = 5;
  cfg.train.epochs = 5;
  cfg.train.batch_size = 8;
  cfg.train.lr_max = 0.2;
  cfg.train.asam_rho = 0.05;
  cfg.loss.lambda_scl = 1e-4;
  // The bank fills within the first epoch, so epoch means compare like with like.
  cfg.loss.xbm_capacity = 16;
  std::vector<double> losses;
  const TrainRunResult r =
      run_training(cfg, dir / "data", dir / "out", [&](const EpochReport& e, const MetricsReport&) {
        losses.push_back(e.mean_loss);
      });
  REQUIRE(losses.size() == 5);
  CHECK(losses.back() < losses.front());
  for (const char* f : {"model.ckpt", "train.log", "metrics.txt", "metrics.csv"}) {
    CHECK(std::filesystem::exists(dir / "out" / f));
  }
  const std::string log = testing::slurp(dir / "out" / "train.log");
  CHECK(std::count(log.begin(), log.end(), '\n') == 5);
  CHECK(log.find("val_acer=") != std::string::npos);
  const Checkpoint ck = load_checkpoint(dir / "out" / "model.ckpt");
  CHECK(ck.config.height == 16);
  CHECK(ck.hyperparameters.at("epochs") == "5");

  RunConfig bad = cfg;
  bad.train.lr_max = 1e300;
  CHECK_THROWS_AS(run_training(bad, dir / "data", dir / "bad"), NumericalError);
}
