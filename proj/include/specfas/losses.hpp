#pragma once

#include <cstddef>
#include <deque>
#include <span>
#include <vector>

#include "specfas/dataio.hpp"
#include "specfas/strategies.hpp"
#include "specfas/tensor.hpp"

namespace specfas {

struct LossConfig {
  double gamma = 2.0;
  double tau = 0.07;
  double lambda_scl = 10.0;
  std::size_t xbm_capacity = 1200;
  // Divide each anchor's positive sum by its positive count (the usual
  // SupCon normalisation). Off by default.
  bool normalize_positives = false;

  void validate() const;
};

// Probabilities below this are clamped before the logarithm.
inline constexpr double kProbabilityFloor = 1e-12;

// -(1 - p_t)^gamma * log(p_t) for one probability of the true class.
double focal_loss(double p_t, double gamma);

/// Weighted mean focal loss over a batch. `logits` is [N, 2], `targets` holds
/// one label per row and `weights` one factor per row (ROR weights).
Tensor focal_loss(const Tensor& logits, std::span<const OneHotLabel> targets, std::span<const double> weights,
                  double gamma);

// ---------------------------------------------------------------------------

struct BankEntry {
  std::vector<double> z;
  Label label = Label::Fake;
  double weight = 1.0;
};

/// Cross-batch memory: FIFO queue of detached unit embeddings.
class EmbeddingBank {
 public:
  explicit EmbeddingBank(std::size_t capacity = 1200) : capacity_(capacity) {}

  // Appends rows of `z` ([N, d]) in order, evicting the oldest entries past
  // capacity. Rows must have unit norm within 1e-9.
  void push(const Tensor& z, std::span<const Label> labels, std::span<const double> weights);

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::deque<BankEntry>& entries() const { return entries_; }
  // Stored embeddings as a constant [size, d] tensor.
  Tensor embeddings() const;
  std::vector<Label> labels() const;
  void clear() { entries_.clear(); }

 private:
  std::size_t capacity_;
  std::deque<BankEntry> entries_;
};

void xbm_update(EmbeddingBank& bank, const Tensor& z, std::span<const Label> labels, std::span<const double> weights);

/// Supervised contrastive loss with the bank as extra keys:
///   L_i = sum_{j != i, y_j = y_i} [ s_ij - log sum_{k != i} exp(s_ik) ],
///   s_ik = z_i . z_k / tau,   loss = -sum_i L_i,
/// where i runs over the batch and j, k over batch and bank. Gradients reach
/// the batch embeddings only.
Tensor supcon_loss(const Tensor& z, std::span<const Label> labels, const EmbeddingBank& bank, double tau,
                   bool normalize_positives = false);

double total_loss(double l_c, double l_scl, double lambda_scl);
Tensor total_loss(const Tensor& l_c, const Tensor& l_scl, double lambda_scl);

}  // namespace specfas
