#include "specfas/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace specfas {

OneHotLabel OneHotLabel::of(Label label) {
  OneHotLabel l;
  l.y[static_cast<std::size_t>(label)] = 1.0;
  return l;
}

MixedSample intra_class_mixup(const Tensor& x_i, const Tensor& x_j, const OneHotLabel& y_i,
                              const OneHotLabel& y_j, double lambda) {
  if (!(y_i == y_j)) throw std::invalid_argument("intra-class mixup needs two samples of the same class");
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument(fmt::format("mixup lambda must lie in [0, 1], got {}", lambda));
  }
  if (x_i.shape() != x_j.shape()) {
    throw ShapeError(fmt::format("mixup shape mismatch: {} vs {}", shape_str(x_i.shape()), shape_str(x_j.shape())));
  }
  const double mu = 1.0 - lambda;
  std::vector<double> out(x_i.numel());
  const auto a = x_i.data();
  const auto b = x_j.data();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = lambda * a[k] + mu * b[k];
  MixedSample mixed{Tensor::from(x_i.shape(), std::move(out)), {}};
  for (std::size_t c = 0; c < 2; ++c) mixed.y.y[c] = lambda * y_i.y[c] + mu * y_j.y[c];
  return mixed;
}

double sample_mix_lambda(Rng& rng, const MixupConfig& cfg) {
  if (!(cfg.alpha > 0.0)) throw std::invalid_argument(fmt::format("mixup alpha must be > 0, got {}", cfg.alpha));
  return rng.beta(cfg.alpha, cfg.alpha);
}

// ---------------------------------------------------------------------------

RandomProjectionEmbedder::RandomProjectionEmbedder(std::uint64_t seed, std::size_t dimension, std::size_t grid)
    : dimension_(dimension), grid_(grid) {
  if (dimension == 0 || grid == 0) throw std::invalid_argument("embedding dimension and grid must be positive");
  Rng rng = Rng::derive(seed, {0x524f52});
  projection_.resize(grid * grid * kRgbChannels * dimension);
  for (double& v : projection_) v = rng.normal();
}

std::vector<double> RandomProjectionEmbedder::embed(const SpectralSample& sample) const {
  const std::size_t h = sample.height();
  const std::size_t w = sample.width();
  if (h < grid_ || w < grid_) {
    throw ShapeError(fmt::format("image {}x{} smaller than pooling grid {}", h, w, grid_));
  }
  std::vector<double> pooled(grid_ * grid_ * kRgbChannels, 0.0);
  std::vector<double> cells(grid_ * grid_, 0.0);
  const auto rgb = sample.rgb.data();
  for (std::size_t y = 0; y < h; ++y) {
    const std::size_t gy = y * grid_ / h;
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t gx = x * grid_ / w;
      const std::size_t cell = gy * grid_ + gx;
      cells[cell] += 1.0;
      for (std::size_t c = 0; c < kRgbChannels; ++c) pooled[cell * kRgbChannels + c] += rgb[(y * w + x) * kRgbChannels + c];
    }
  }
  double mean = 0.0;
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    pooled[i] /= cells[i / kRgbChannels];
    mean += pooled[i];
  }
  mean /= static_cast<double>(pooled.size());
  for (double& v : pooled) v -= mean;

  std::vector<double> e(dimension_, 0.0);
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    const double* row = projection_.data() + i * dimension_;
    for (std::size_t d = 0; d < dimension_; ++d) e[d] += pooled[i] * row[d];
  }
  double norm = 0.0;
  for (double v : e) norm += v * v;
  norm = std::sqrt(norm);
  if (!(norm > 0.0)) throw DomainError(fmt::format("sample '{}' has a constant RGB plane; embedding is zero", sample.id));
  for (double& v : e) v /= norm;
  return e;
}

FileEmbeddingProvider::FileEmbeddingProvider(const std::filesystem::path& path) {
  for (auto& row : read_embedding_file(path)) table_[row.id] = std::move(row.values);
}

std::vector<double> FileEmbeddingProvider::embed(const SpectralSample& sample) const {
  const auto it = table_.find(sample.id);
  if (it == table_.end()) throw std::out_of_range(fmt::format("no precomputed embedding for '{}'", sample.id));
  return it->second;
}

void write_embedding_file(const std::filesystem::path& path, const std::vector<EmbeddingRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error(fmt::format("cannot open {} for writing", path.string()));
  for (const auto& row : rows) {
    out << row.id;
    for (double v : row.values) out << '\t' << fmt::format("{:.17g}", v);
    out << '\n';
  }
}

std::vector<EmbeddingRow> read_embedding_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open embedding file {}", path.string()));
  std::vector<EmbeddingRow> rows;
  std::string line;
  std::size_t lineno = 0;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw std::runtime_error(fmt::format("{}:{}: expected id<TAB>values", path.string(), lineno));
    }
    EmbeddingRow row{line.substr(0, tab), {}};
    std::istringstream values(line.substr(tab + 1));
    double v = 0.0;
    while (values >> v) row.values.push_back(v);
    if (!values.eof()) throw std::runtime_error(fmt::format("{}:{}: malformed number", path.string(), lineno));
    if (row.values.empty() || (dim != 0 && row.values.size() != dim)) {
      throw std::runtime_error(fmt::format("{}:{}: embedding has {} values, expected {}", path.string(), lineno,
                                           row.values.size(), dim));
    }
    dim = row.values.size();
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

std::vector<double> unit(std::vector<double> v, const std::string& id) {
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (!(norm > 0.0)) throw DomainError(fmt::format("embedding for '{}' has zero norm", id));
  if (std::abs(norm - 1.0) > 1e-9) {
    spdlog::warn("embedding for '{}' has norm {:.12g}; renormalising", id, norm);
    for (double& x : v) x /= norm;
  }
  return v;
}

}  // namespace

std::map<std::string, double> compute_ror_weights(const std::vector<EmbeddingRow>& fakes,
                                                  const std::vector<EmbeddingRow>& reals) {
  if (reals.empty()) throw std::invalid_argument("real-face reweighting needs at least one real sample");
  std::vector<std::vector<double>> real_vecs;
  std::map<std::string, double> weights;
  for (const auto& r : reals) {
    real_vecs.push_back(unit(r.values, r.id));
    weights[r.id] = 1.0;
  }
  for (const auto& f : fakes) {
    const auto e = unit(f.values, f.id);
    double best = -1.0;
    for (const auto& r : real_vecs) {
      if (r.size() != e.size()) {
        throw ShapeError(fmt::format("embedding size mismatch for '{}': {} vs {}", f.id, e.size(), r.size()));
      }
      double dot = 0.0;
      for (std::size_t k = 0; k < e.size(); ++k) dot += e[k] * r[k];
      best = std::max(best, std::clamp(dot, -1.0, 1.0));
    }
    weights[f.id] = (1.0 + best) / 2.0;
  }
  return weights;
}

std::map<std::string, double> compute_ror_weights(const std::vector<SpectralSample>& fakes,
                                                  const std::vector<SpectralSample>& reals,
                                                  const EmbeddingProvider& provider) {
  auto rows = [&](const std::vector<SpectralSample>& samples) {
    std::vector<EmbeddingRow> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back({s.id, provider.embed(s)});
    return out;
  };
  if (reals.empty()) throw std::invalid_argument("real-face reweighting needs at least one real sample");
  return compute_ror_weights(rows(fakes), rows(reals));
}

}  // namespace specfas
