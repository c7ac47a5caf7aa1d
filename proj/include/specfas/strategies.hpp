#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "specfas/dataio.hpp"
#include "specfas/rng.hpp"
#include "specfas/tensor.hpp"

namespace specfas {

struct OneHotLabel {
  std::array<double, 2> y{0.0, 0.0};

  static OneHotLabel of(Label label);
  bool operator==(const OneHotLabel&) const = default;
};

// ---------------------------------------------------------------------------
// Intra-class mixup

struct MixupConfig {
  double alpha = 1.0;
  bool enabled = true;
};

struct MixedSample {
  Tensor x;
  OneHotLabel y;
};

/// x = lambda * x_i + (1 - lambda) * x_j and the same for the labels. Both
/// samples must carry the same label, so the mixed label is that label.
MixedSample intra_class_mixup(const Tensor& x_i, const Tensor& x_j, const OneHotLabel& y_i,
                              const OneHotLabel& y_j, double lambda);

// Beta(alpha, alpha) draw; alpha = 1 is Uniform(0, 1).
double sample_mix_lambda(Rng& rng, const MixupConfig& cfg);

// ---------------------------------------------------------------------------
// Real-face oriented reweighting

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  // Unit-norm face embedding for the sample.
  virtual std::vector<double> embed(const SpectralSample& sample) const = 0;
  virtual std::string name() const = 0;
};

/// Fixed Gaussian random projection of the mean-centred, average-pooled RGB
/// plane. Deterministic in the seed; a stand-in for a face recognition model.
class RandomProjectionEmbedder : public EmbeddingProvider {
 public:
  explicit RandomProjectionEmbedder(std::uint64_t seed = 0, std::size_t dimension = 64, std::size_t grid = 8);
  std::vector<double> embed(const SpectralSample& sample) const override;
  std::string name() const override { return "random-projection"; }

 private:
  std::size_t dimension_;
  std::size_t grid_;
  std::vector<double> projection_;  // [grid * grid * 3, dimension]
};

/// Looks embeddings up by sample id from a precomputed file.
class FileEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit FileEmbeddingProvider(const std::filesystem::path& path);
  std::vector<double> embed(const SpectralSample& sample) const override;
  std::string name() const override { return "file"; }
  std::size_t size() const { return table_.size(); }

 private:
  std::map<std::string, std::vector<double>> table_;
};

struct EmbeddingRow {
  std::string id;
  std::vector<double> values;
};

// `id<TAB>v1<TAB>v2...`, one row per sample in manifest order.
void write_embedding_file(const std::filesystem::path& path, const std::vector<EmbeddingRow>& rows);
std::vector<EmbeddingRow> read_embedding_file(const std::filesystem::path& path);

/// w(fake) = max over reals of (1 + cos(e_fake, e_real)) / 2; every real gets
/// 1.0. Non-unit embeddings are renormalised with a warning.
std::map<std::string, double> compute_ror_weights(const std::vector<SpectralSample>& fakes,
                                                  const std::vector<SpectralSample>& reals,
                                                  const EmbeddingProvider& provider);

// Same rule on precomputed embedding vectors, keyed by id.
std::map<std::string, double> compute_ror_weights(const std::vector<EmbeddingRow>& fakes,
                                                  const std::vector<EmbeddingRow>& reals);

}  // namespace specfas
