#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "specfas/augment.hpp"
#include "specfas/losses.hpp"
#include "specfas/model.hpp"
#include "specfas/strategies.hpp"

namespace specfas {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double lr_max = 0.01;
  double lr_min = 0.0;
  double weight_decay = 5e-3;
  double asam_rho = 0.5;
  double asam_eta = 0.01;
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  void validate() const;
};

struct RorConfig {
  bool enabled = true;
  // Precomputed embedding file; empty selects the random-projection embedder.
  std::string embeddings;
  std::size_t embed_dim = 64;
  std::uint64_t embed_seed = 0;
};

/// Everything a training run reads from its `key = value` config file.
/// Input height and width come from the data, not from here.
struct RunConfig {
  TrainConfig train;
  LossConfig loss;
  AugmentConfig augment;
  MixupConfig mixup;
  ModelConfig model;
  RorConfig ror;

  // Throws ConfigError for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  // Every key with its resolved value, in a stable order.
  std::vector<std::pair<std::string, std::string>> entries() const;
  void validate() const;

  static RunConfig from_file(const std::filesystem::path& path);
  // Applies `key = value` lines on top of the current values. Blank lines and
  // lines starting with '#' are ignored.
  void merge_file(const std::filesystem::path& path);
  std::string to_text() const;
};

}  // namespace specfas
