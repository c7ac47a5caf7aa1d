#include "specfas/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "specfas/ops.hpp"

namespace specfas {

void LossConfig::validate() const {
  if (!(gamma >= 0.0)) throw std::invalid_argument(fmt::format("gamma must be >= 0, got {}", gamma));
  if (!(tau > 0.0)) throw std::invalid_argument(fmt::format("tau must be > 0, got {}", tau));
  if (!(lambda_scl >= 0.0)) throw std::invalid_argument(fmt::format("lambda_scl must be >= 0, got {}", lambda_scl));
}

double focal_loss(double p_t, double gamma) {
  if (!(p_t <= 1.0)) throw std::invalid_argument(fmt::format("p_t must be <= 1, got {}", p_t));
  const double p = std::max(p_t, kProbabilityFloor);
  return -std::pow(1.0 - p, gamma) * std::log(p);
}

Tensor focal_loss(const Tensor& logits, std::span<const OneHotLabel> targets, std::span<const double> weights,
                  double gamma) {
  if (logits.dim() != 2 || logits.size(1) != 2) {
    throw ShapeError(fmt::format("focal loss expects logits [N, 2], got {}", shape_str(logits.shape())));
  }
  const std::size_t n = logits.size(0);
  if (targets.size() != n || weights.size() != n) {
    throw ShapeError(fmt::format("focal loss: {} rows but {} targets and {} weights", n, targets.size(), weights.size()));
  }
  std::vector<double> y;
  y.reserve(2 * n);
  for (const auto& t : targets) y.insert(y.end(), t.y.begin(), t.y.end());
  const Tensor target = Tensor::from({n, 2}, std::move(y));
  const Tensor w = Tensor::from({n}, std::vector<double>(weights.begin(), weights.end()));

  const Tensor log_pt = ops::clamp_min(ops::sum_axis(ops::log_softmax(logits) * target, 1), std::log(kProbabilityFloor));
  const Tensor p_t = ops::exp(log_pt);
  const Tensor modulator = ops::pow(ops::add_scalar(-p_t, 1.0), gamma);
  return ops::mean(modulator * ops::neg(log_pt) * w);
}

// ---------------------------------------------------------------------------

void EmbeddingBank::push(const Tensor& z, std::span<const Label> labels, std::span<const double> weights) {
  if (z.dim() != 2) throw ShapeError(fmt::format("bank push expects [N, d], got {}", shape_str(z.shape())));
  const std::size_t n = z.size(0);
  const std::size_t d = z.size(1);
  if (labels.size() != n || weights.size() != n) {
    throw ShapeError(fmt::format("bank push: {} rows but {} labels and {} weights", n, labels.size(), weights.size()));
  }
  if (!entries_.empty() && entries_.front().z.size() != d) {
    throw ShapeError(fmt::format("bank holds {}-d embeddings, got {}-d", entries_.front().z.size(), d));
  }
  const auto data = z.data();
  // Only the last `capacity_` rows can survive this push.
  const std::size_t first = n > capacity_ ? n - capacity_ : 0;
  for (std::size_t i = first; i < n; ++i) {
    BankEntry e{std::vector<double>(data.begin() + static_cast<std::ptrdiff_t>(i * d),
                                    data.begin() + static_cast<std::ptrdiff_t>((i + 1) * d)),
                labels[i], weights[i]};
    double norm = 0.0;
    for (double v : e.z) norm += v * v;
    if (std::abs(std::sqrt(norm) - 1.0) > 1e-9) {
      throw DomainError(fmt::format("bank entries must be unit vectors, row {} has norm {}", i, std::sqrt(norm)));
    }
    entries_.push_back(std::move(e));
  }
  while (entries_.size() > capacity_) entries_.pop_front();
}

Tensor EmbeddingBank::embeddings() const {
  if (entries_.empty()) return Tensor::zeros({0, 0});
  const std::size_t d = entries_.front().z.size();
  std::vector<double> values;
  values.reserve(entries_.size() * d);
  for (const auto& e : entries_) values.insert(values.end(), e.z.begin(), e.z.end());
  return Tensor::from({entries_.size(), d}, std::move(values));
}

std::vector<Label> EmbeddingBank::labels() const {
  std::vector<Label> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.label);
  return out;
}

void xbm_update(EmbeddingBank& bank, const Tensor& z, std::span<const Label> labels, std::span<const double> weights) {
  bank.push(z.detach(), labels, weights);
}

Tensor supcon_loss(const Tensor& z, std::span<const Label> labels, const EmbeddingBank& bank, double tau,
                   bool normalize_positives) {
  if (z.dim() != 2 || z.size(0) == 0) {
    throw ShapeError(fmt::format("supcon expects embeddings [N >= 1, d], got {}", shape_str(z.shape())));
  }
  if (!(tau > 0.0)) throw std::invalid_argument(fmt::format("tau must be > 0, got {}", tau));
  const std::size_t n = z.size(0);
  const std::size_t d = z.size(1);
  if (labels.size() != n) throw ShapeError(fmt::format("supcon: {} embeddings but {} labels", n, labels.size()));
  {
    const auto values = z.data();
    for (std::size_t i = 0; i < n; ++i) {
      double norm = 0.0;
      for (std::size_t k = 0; k < d; ++k) norm += values[i * d + k] * values[i * d + k];
      if (!(norm > 0.0)) throw DomainError(fmt::format("supcon: embedding row {} has zero norm", i));
    }
  }

  std::vector<Label> key_labels(labels.begin(), labels.end());
  Tensor keys = z;
  if (!bank.empty()) {
    if (bank.entries().front().z.size() != d) {
      throw ShapeError(fmt::format("supcon: batch is {}-d but bank is {}-d", d, bank.entries().front().z.size()));
    }
    keys = ops::concat({z, bank.embeddings()}, 0);
    const auto bl = bank.labels();
    key_labels.insert(key_labels.end(), bl.begin(), bl.end());
  }
  const std::size_t m = key_labels.size();
  // Only the anchor itself is a key: no denominator terms, no positives.
  if (m == 1) return ops::scale(ops::sum(z), 0.0);

  const Tensor sim = ops::scale(ops::matmul(z, ops::transpose_last2(keys)), 1.0 / tau);

  std::vector<double> others(n * m, 1.0);
  std::vector<double> positives(n * m, 0.0);
  std::vector<double> row_max(n);
  std::vector<double> positive_counts(n, 0.0);
  const auto s = sim.data();
  for (std::size_t i = 0; i < n; ++i) {
    row_max[i] = *std::max_element(s.begin() + static_cast<std::ptrdiff_t>(i * m),
                                   s.begin() + static_cast<std::ptrdiff_t>((i + 1) * m));
    others[i * m + i] = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      if (k != i && key_labels[k] == labels[i]) {
        positives[i * m + k] = 1.0;
        positive_counts[i] += 1.0;
      }
    }
  }
  const Tensor others_mask = Tensor::from({n, m}, std::move(others));
  const Tensor positive_mask = Tensor::from({n, m}, positives);
  const Tensor shift = Tensor::from({n, 1}, row_max);

  // log sum_{k != i} exp(s_ik), shifted by the (constant) row maximum.
  const Tensor denom = ops::sum_axis(ops::exp(sim - shift) * others_mask, 1);
  const Tensor log_denom = ops::log(denom) + Tensor::from({n}, row_max);

  const Tensor positive_sum = ops::sum_axis(sim * positive_mask, 1);
  Tensor per_anchor = positive_sum - Tensor::from({n}, positive_counts) * log_denom;
  if (normalize_positives) {
    std::vector<double> inv(n);
    for (std::size_t i = 0; i < n; ++i) inv[i] = positive_counts[i] > 0.0 ? 1.0 / positive_counts[i] : 0.0;
    per_anchor = per_anchor * Tensor::from({n}, std::move(inv));
  }
  return ops::neg(ops::sum(per_anchor));
}

double total_loss(double l_c, double l_scl, double lambda_scl) { return l_c + lambda_scl * l_scl; }

Tensor total_loss(const Tensor& l_c, const Tensor& l_scl, double lambda_scl) {
  return l_c + ops::scale(l_scl, lambda_scl);
}

}  // namespace specfas
