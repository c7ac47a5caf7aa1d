#include "specfas/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <numbers>
#include <numeric>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "specfas/augment.hpp"
#include "specfas/ops.hpp"
#include "specfas/rng.hpp"
#include "specfas/strategies.hpp"

namespace specfas {

namespace {

// Stream identifiers for Rng::derive.
constexpr std::uint64_t kOrderStream = 1;
constexpr std::uint64_t kAugmentStream = 2;
constexpr std::uint64_t kMixupStream = 3;

}  // namespace

double cosine_lr(std::size_t t, std::size_t total, double lr_max, double lr_min) {
  if (total == 0) throw std::invalid_argument("cosine schedule needs at least one step");
  if (t > total) throw std::out_of_range(fmt::format("step {} beyond schedule length {}", t, total));
  const double phase = std::numbers::pi * static_cast<double>(t) / static_cast<double>(total);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(phase));
}

AsamResult asam_step(std::span<const Tensor> params, const std::function<Tensor()>& loss_fn,
                     const AsamOptions& options) {
  std::vector<Tensor> ps(params.begin(), params.end());
  for (auto& p : ps) p.zero_grad();
  AsamResult result;
  Tensor loss = loss_fn();
  result.loss = loss.item();
  loss.backward();

  std::vector<std::vector<double>> grads;
  grads.reserve(ps.size());
  for (auto& p : ps) grads.push_back(p.grad());

  double norm_sq = 0.0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto w = ps[i].data();
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double tg = (std::abs(w[k]) + options.eta) * grads[i][k];
      norm_sq += tg * tg;
    }
  }
  const double norm = std::sqrt(norm_sq);
  result.perturbed_loss = result.loss;

  std::vector<std::vector<double>> originals;
  if (options.rho > 0.0 && norm > 0.0) {
    result.ascended = true;
    originals.reserve(ps.size());
    for (std::size_t i = 0; i < ps.size(); ++i) {
      auto w = ps[i].mutable_data();
      originals.emplace_back(w.begin(), w.end());
      for (std::size_t k = 0; k < w.size(); ++k) {
        const double scale = std::abs(w[k]) + options.eta;
        w[k] += options.rho * scale * scale * grads[i][k] / norm;
      }
    }
    for (auto& p : ps) p.zero_grad();
    Tensor perturbed = loss_fn();
    result.perturbed_loss = perturbed.item();
    perturbed.backward();
    for (std::size_t i = 0; i < ps.size(); ++i) {
      grads[i] = ps[i].grad();
      auto w = ps[i].mutable_data();
      std::copy(originals[i].begin(), originals[i].end(), w.begin());
    }
  }

  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto w = ps[i].mutable_data();
    for (std::size_t k = 0; k < w.size(); ++k) w[k] -= options.lr * (grads[i][k] + options.weight_decay * w[k]);
  }
  for (auto& p : ps) p.zero_grad();
  return result;
}

// ---------------------------------------------------------------------------

std::size_t TrainSetup::steps_per_epoch() const {
  const std::size_t bs = config.train.batch_size;
  return (balanced.entries.size() + bs - 1) / bs;
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng::derive(seed, {kOrderStream, epoch});
  rng.shuffle(order);
  return order;
}

namespace {

// Runs body(i) for i in [0, n) on up to `workers` threads; results must be
// written to per-index slots so the outcome is independent of scheduling.
template <class Body>
void parallel_for(std::size_t n, std::size_t workers, Body body) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < workers; ++t) {
    threads.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += workers) body(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

Tensor stack(const std::vector<Tensor>& items) {
  const Shape& inner = items.front().shape();
  std::vector<double> values;
  values.reserve(items.size() * items.front().numel());
  for (const auto& t : items) {
    if (t.shape() != inner) {
      throw ShapeError(fmt::format("cannot stack {} with {}", shape_str(t.shape()), shape_str(inner)));
    }
    values.insert(values.end(), t.data().begin(), t.data().end());
  }
  Shape shape{items.size()};
  shape.insert(shape.end(), inner.begin(), inner.end());
  return Tensor::from(std::move(shape), std::move(values));
}

double weight_of(const TrainSetup& setup, const std::string& id) {
  const auto it = setup.ror_weights.find(id);
  return it == setup.ror_weights.end() ? 1.0 : it->second;
}

}  // namespace

Batch prepare_batch(const TrainSetup& setup, std::span<const std::size_t> positions, std::size_t epoch,
                    std::size_t batch_index) {
  const std::size_t n = positions.size();
  if (n == 0) throw std::invalid_argument("empty batch");
  const RunConfig& cfg = setup.config;
  std::vector<Tensor> xs(n);
  parallel_for(n, cfg.train.workers, [&](std::size_t i) {
    const std::size_t pos = positions[i];
    const ManifestEntry& entry = setup.balanced.entries.at(pos);
    const Tensor x = load_sample(setup.balanced, entry).stacked().detach();
    // Streams are keyed by the position in the balanced manifest, so copies
    // of one oversampled sample draw different augmentations.
    Rng rng = Rng::derive(cfg.train.seed, {kAugmentStream, cfg.augment.seed, epoch, pos});
    xs[i] = apply_augment(x, cfg.augment, rng);
  });

  Batch batch;
  for (std::size_t i = 0; i < n; ++i) {
    const ManifestEntry& entry = setup.balanced.entries[positions[i]];
    batch.ids.push_back(entry.id);
    batch.labels.push_back(entry.label);
    batch.targets.push_back(OneHotLabel::of(entry.label));
    batch.weights.push_back(weight_of(setup, entry.id));
  }

  if (cfg.mixup.enabled) {
    Rng rng = Rng::derive(cfg.train.seed, {kMixupStream, epoch, batch_index});
    std::vector<Tensor> mixed = xs;
    std::vector<double> mixed_weights = batch.weights;
    for (Label label : {Label::Real, Label::Fake}) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < n; ++i) {
        if (batch.labels[i] == label) members.push_back(i);
      }
      if (members.size() < 2) continue;
      std::vector<std::size_t> partners = members;
      rng.shuffle(partners);
      for (std::size_t k = 0; k < members.size(); ++k) {
        const std::size_t i = members[k];
        const std::size_t j = partners[k];
        const double lambda = sample_mix_lambda(rng, cfg.mixup);
        MixedSample m = intra_class_mixup(xs[i], xs[j], batch.targets[i], batch.targets[j], lambda);
        mixed[i] = m.x;
        batch.targets[i] = m.y;
        mixed_weights[i] = lambda * batch.weights[i] + (1.0 - lambda) * batch.weights[j];
      }
    }
    xs = std::move(mixed);
    batch.weights = std::move(mixed_weights);
  }
  batch.x = stack(xs);
  return batch;
}

EpochReport train_epoch(TrainState& state, const TrainSetup& setup) {
  const RunConfig& cfg = setup.config;
  const std::size_t n = setup.balanced.entries.size();
  if (n == 0) throw std::invalid_argument("training manifest is empty");
  const std::size_t bs = cfg.train.batch_size;
  const std::vector<std::size_t> order = epoch_order(cfg.train.seed, state.epoch, n);
  const auto params = state.params.tensors();

  EpochReport report;
  report.epoch = state.epoch + 1;
  for (std::size_t start = 0, b = 0; start < n; start += bs, ++b) {
    const std::size_t end = std::min(n, start + bs);
    const std::span<const std::size_t> positions(order.data() + start, end - start);
    const Batch batch = prepare_batch(setup, positions, state.epoch, b);
    const double lr = cosine_lr(state.step, setup.total_steps, cfg.train.lr_max, cfg.train.lr_min);

    bool first = true;
    double focal_value = 0.0;
    double supcon_value = 0.0;
    Tensor z_first;
    auto forward = [&]() {
      const ModelOutput out = model_forward(batch.x, state.params, cfg.model);
      const Tensor l_c = focal_loss(out.logits, batch.targets, batch.weights, cfg.loss.gamma);
      Tensor total = l_c;
      double l_scl_value = 0.0;
      if (cfg.loss.lambda_scl > 0.0) {
        const Tensor l_scl =
            supcon_loss(out.z, batch.labels, state.bank, cfg.loss.tau, cfg.loss.normalize_positives);
        l_scl_value = l_scl.item();
        total = total_loss(l_c, l_scl, cfg.loss.lambda_scl);
      }
      if (first) {
        first = false;
        focal_value = l_c.item();
        supcon_value = l_scl_value;
        z_first = out.z.detach();
        if (!std::isfinite(total.item())) {
          throw NumericalError(fmt::format("non-finite loss at step {} (epoch {}, lr {:.6g}): focal={} supcon={}",
                                           state.step, report.epoch, lr, focal_value, supcon_value));
        }
      }
      return total;
    };
    auto loss_fn = [&]() {
      try {
        return forward();
      } catch (const DomainError& e) {
        throw NumericalError(fmt::format("degenerate state at step {} (epoch {}, lr {:.6g}): {}", state.step,
                                         report.epoch, lr, e.what()));
      }
    };
    const AsamResult step = asam_step(
        params, loss_fn, {lr, cfg.train.asam_rho, cfg.train.asam_eta, cfg.train.weight_decay});
    for (const auto& p : params) {
      for (double v : p.data()) {
        if (!std::isfinite(v)) {
          throw NumericalError(fmt::format("non-finite parameter after step {} (epoch {}, lr {:.6g})", state.step,
                                           report.epoch, lr));
        }
      }
    }
    xbm_update(state.bank, z_first, batch.labels, batch.weights);

    report.mean_loss += step.loss;
    report.mean_focal += focal_value;
    report.mean_supcon += supcon_value;
    report.lr_trace.push_back(lr);
    ++report.steps;
    ++state.step;
  }
  const double steps = static_cast<double>(report.steps);
  report.mean_loss /= steps;
  report.mean_focal /= steps;
  report.mean_supcon /= steps;
  report.bank_size = state.bank.size();
  ++state.epoch;
  return report;
}

Evaluation evaluate(const ModelParams& params, const ModelConfig& cfg, const DatasetManifest& manifest,
                    double threshold, std::size_t batch_size) {
  if (manifest.entries.empty()) throw std::invalid_argument("cannot evaluate an empty manifest");
  std::vector<const ManifestEntry*> unique;
  LabelMap labels;
  for (const auto& e : manifest.entries) {
    if (labels.emplace(e.id, e.label).second) unique.push_back(&e);
  }
  Evaluation ev;
  batch_size = std::max<std::size_t>(1, batch_size);
  for (std::size_t start = 0; start < unique.size(); start += batch_size) {
    const std::size_t end = std::min(unique.size(), start + batch_size);
    std::vector<Tensor> xs;
    for (std::size_t i = start; i < end; ++i) xs.push_back(load_sample(manifest, *unique[i]).stacked().detach());
    const auto scores = fake_scores(stack(xs), params, cfg);
    for (std::size_t i = start; i < end; ++i) ev.scores[unique[i]->id] = scores[i - start];
  }
  ev.report = acer_report(confusion(ev.scores, labels, threshold), threshold);
  return ev;
}

// ---------------------------------------------------------------------------

std::map<std::string, double> ror_weights_for(const RunConfig& config, const DatasetManifest& train) {
  if (!config.ror.enabled) return {};
  std::vector<EmbeddingRow> fakes;
  std::vector<EmbeddingRow> reals;
  if (!config.ror.embeddings.empty()) {
    std::map<std::string, std::vector<double>> table;
    for (auto& row : read_embedding_file(config.ror.embeddings)) table[row.id] = std::move(row.values);
    std::map<std::string, bool> seen;
    for (const auto& e : train.entries) {
      if (seen[e.id]) continue;
      seen[e.id] = true;
      const auto it = table.find(e.id);
      if (it == table.end()) {
        throw std::runtime_error(fmt::format("{} has no embedding for '{}'", config.ror.embeddings, e.id));
      }
      (e.label == Label::Real ? reals : fakes).push_back({e.id, it->second});
    }
  } else {
    const RandomProjectionEmbedder provider(config.ror.embed_seed, config.ror.embed_dim);
    std::map<std::string, bool> seen;
    for (const auto& e : train.entries) {
      if (seen[e.id]) continue;
      seen[e.id] = true;
      (e.label == Label::Real ? reals : fakes).push_back({e.id, provider.embed(load_sample(train, e))});
    }
  }
  return compute_ror_weights(fakes, reals);
}

namespace {

std::string epoch_line(const EpochReport& r, const MetricsReport& val) {
  return fmt::format(
      "epoch={} steps={} loss={:.17g} focal={:.17g} supcon={:.17g} lr_start={:.17g} lr_end={:.17g} bank={} "
      "val_apcer={:.17g} val_bpcer={:.17g} val_acer={:.17g}",
      r.epoch, r.steps, r.mean_loss, r.mean_focal, r.mean_supcon, r.lr_trace.front(), r.lr_trace.back(), r.bank_size,
      val.apcer, val.bpcer, val.acer);
}

}  // namespace

TrainRunResult run_training(const RunConfig& config, const std::filesystem::path& data,
                            const std::filesystem::path& out, const EpochCallback& on_epoch) {
  config.validate();
  std::filesystem::create_directories(out);

  TrainSetup setup;
  setup.config = config;
  const DatasetManifest train = read_manifest(data / "train.tsv", Split::Train);
  const DatasetManifest val = read_manifest(data / "val.tsv", Split::Val);
  if (train.entries.empty()) throw ManifestError("training manifest is empty");
  const SpectralSample probe = load_sample(train, train.entries.front());
  setup.config.model.height = probe.height();
  setup.config.model.width = probe.width();
  setup.config.model.in_channels = kInputChannels;

  setup.ror_weights = ror_weights_for(setup.config, train);
  setup.balanced = oversample_balance(train, config.train.seed);
  setup.total_steps = config.train.epochs * setup.steps_per_epoch();

  TrainRunResult result;
  result.model = setup.config.model;
  result.state.params = ModelParams::init(setup.config.model);
  result.state.bank = EmbeddingBank(config.loss.xbm_capacity);

  std::ofstream log(out / "train.log", std::ios::trunc);
  if (!log) throw std::runtime_error(fmt::format("cannot open {}", (out / "train.log").string()));
  for (std::size_t e = 0; e < config.train.epochs; ++e) {
    EpochReport report = train_epoch(result.state, setup);
    result.validation = evaluate(result.state.params, setup.config.model, val, 0.5, config.train.batch_size);
    log << epoch_line(report, result.validation.report) << '\n';
    log.flush();
    if (on_epoch) on_epoch(report, result.validation.report);
    result.epochs.push_back(std::move(report));
  }

  std::map<std::string, std::string> header;
  for (const auto& [k, v] : config.entries()) {
    if (k != "workers") header[k] = v;
  }
  save_checkpoint(out / "model.ckpt", result.state.params, setup.config.model, header);
  const std::vector<MetricsReport> reports{result.validation.report};
  std::ofstream(out / "metrics.txt", std::ios::trunc) << format_table(reports);
  std::ofstream(out / "metrics.csv", std::ios::trunc) << format_csv(reports);
  return result;
}

}  // namespace specfas
