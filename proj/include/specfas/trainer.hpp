#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "specfas/config.hpp"
#include "specfas/dataio.hpp"
#include "specfas/losses.hpp"
#include "specfas/metrics.hpp"
#include "specfas/model.hpp"

namespace specfas {

// Training produced a non-finite loss.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// lr(t) = lr_min + (lr_max - lr_min) * (1 + cos(pi * t / T)) / 2, 0 <= t <= T.
double cosine_lr(std::size_t t, std::size_t total, double lr_max, double lr_min);

struct AsamOptions {
  double lr = 0.01;
  double rho = 0.5;
  double eta = 0.01;
  double weight_decay = 0.0;
};

struct AsamResult {
  double loss = 0.0;            // at the original parameters
  double perturbed_loss = 0.0;  // at params + epsilon (equals loss when no ascent)
  bool ascended = false;
};

/// One adaptive sharpness-aware update of `params` (leaves that require grad):
///   g  = grad L(w)
///   e  = rho * T^2 g / ||T g||,  T = diag(|w| + eta)
///   g' = grad L(w + e)
///   w <- w - lr * (g' + weight_decay * w)
/// With rho = 0 or a zero gradient the ascent is skipped and g' = g.
/// `loss_fn` must rebuild the graph from the current parameter values on
/// every call.
AsamResult asam_step(std::span<const Tensor> params, const std::function<Tensor()>& loss_fn,
                     const AsamOptions& options);

// ---------------------------------------------------------------------------

struct Batch {
  Tensor x;  // [n, h, w, 33]
  std::vector<std::string> ids;
  std::vector<Label> labels;
  std::vector<OneHotLabel> targets;
  std::vector<double> weights;
};

// Everything fixed for the whole run.
struct TrainSetup {
  RunConfig config;
  DatasetManifest balanced;                  // oversampled training entries
  std::map<std::string, double> ror_weights; // by sample id; missing ids weigh 1
  std::size_t total_steps = 0;

  std::size_t steps_per_epoch() const;
};

struct TrainState {
  ModelParams params;
  EmbeddingBank bank;
  std::size_t step = 0;
  std::size_t epoch = 0;
};

struct EpochReport {
  std::size_t epoch = 0;
  std::size_t steps = 0;
  double mean_loss = 0.0;
  double mean_focal = 0.0;
  double mean_supcon = 0.0;
  std::vector<double> lr_trace;
  std::size_t bank_size = 0;
};

// Sample order of an epoch: a seeded permutation of [0, n).
std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n);

/// Loads, augments and intra-class mixes one batch. `positions` index into
/// `setup.balanced.entries`; `batch_index` selects the mixup stream.
Batch prepare_batch(const TrainSetup& setup, std::span<const std::size_t> positions, std::size_t epoch,
                    std::size_t batch_index);

/// One pass over the balanced manifest: augment -> mixup -> forward ->
/// weighted focal + lambda * supcon (batch and bank) -> ASAM -> bank update.
EpochReport train_epoch(TrainState& state, const TrainSetup& setup);

struct Evaluation {
  MetricsReport report;
  ScoreMap scores;
};

/// Fake-class probabilities for every distinct id in `manifest`, no
/// augmentation, then the metrics at `threshold`.
Evaluation evaluate(const ModelParams& params, const ModelConfig& cfg, const DatasetManifest& manifest,
                    double threshold, std::size_t batch_size = 32);

// ---------------------------------------------------------------------------

struct TrainRunResult {
  TrainState state;
  ModelConfig model;
  std::vector<EpochReport> epochs;
  Evaluation validation;
};

using EpochCallback = std::function<void(const EpochReport&, const MetricsReport&)>;

/// Full run over `<data>/train.tsv`, validated on `<data>/val.tsv` after every
/// epoch. Writes `model.ckpt`, `train.log` (one line per epoch), `metrics.txt`
/// and `metrics.csv` into `out`.
TrainRunResult run_training(const RunConfig& config, const std::filesystem::path& data,
                            const std::filesystem::path& out, const EpochCallback& on_epoch = {});

// ROR weights for a training manifest under `config.ror`.
std::map<std::string, double> ror_weights_for(const RunConfig& config, const DatasetManifest& train);

}  // namespace specfas
