#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include <unistd.h>

#include "specfas/grad_check.hpp"
#include "specfas/label.hpp"
#include "specfas/losses.hpp"
#include "specfas/ops.hpp"
#include "specfas/rng.hpp"
#include "specfas/tensor.hpp"

namespace testing {

using specfas::Label;
using specfas::Rng;
using specfas::Shape;
using specfas::Tensor;

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("specfas_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0, bool grad = false) {
  std::vector<double> v(specfas::shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), grad);
}

// Values bounded away from zero, for ops with a kink at 0.
inline Tensor away_from_zero(Rng& rng, Shape shape, double gap = 0.05) {
  std::vector<double> v(specfas::shape_numel(shape));
  for (double& x : v) {
    const double m = rng.uniform(gap, 1.0);
    x = rng.bernoulli(0.5) ? m : -m;
  }
  return Tensor::from(std::move(shape), std::move(v));
}

inline Shape random_shape(Rng& rng, std::size_t rank, std::size_t max_side = 4) {
  Shape s(rank);
  for (auto& d : s) d = 1 + rng.index(max_side);
  return s;
}

// sum(y * r) for a fixed random r, so every output element matters.
inline std::function<Tensor(const Tensor&)> weighted(std::function<Tensor(const Tensor&)> f, const Shape& out_shape,
                                                      Rng& rng) {
  const Tensor r = random_tensor(rng, out_shape);
  return [f, r](const Tensor& x) { return specfas::ops::sum(f(x) * r); };
}

inline std::vector<double> unit_vector(Rng& rng, std::size_t d) {
  std::vector<double> v(d);
  double n = 0.0;
  for (double& x : v) {
    x = rng.normal();
    n += x * x;
  }
  n = std::sqrt(n);
  for (double& x : v) x /= n;
  return v;
}

inline Tensor unit_rows(Rng& rng, std::size_t n, std::size_t d) {
  std::vector<double> all;
  for (std::size_t i = 0; i < n; ++i) {
    const auto v = unit_vector(rng, d);
    all.insert(all.end(), v.begin(), v.end());
  }
  return Tensor::from({n, d}, std::move(all));
}

// Term-by-term double loop over anchors i (batch), positives j and keys k
// (batch followed by bank), with plain exp/log.
inline double naive_supcon(const std::vector<std::vector<double>>& batch, const std::vector<Label>& batch_labels,
                           const std::vector<std::vector<double>>& bank, const std::vector<Label>& bank_labels,
                           double tau, bool normalize = false) {
  std::vector<std::vector<double>> keys = batch;
  keys.insert(keys.end(), bank.begin(), bank.end());
  std::vector<Label> key_labels = batch_labels;
  key_labels.insert(key_labels.end(), bank_labels.begin(), bank_labels.end());
  auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t q = 0; q < a.size(); ++q) s += a[q] * b[q];
    return s;
  };
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    double denom = 0.0;
    for (std::size_t k = 0; k < keys.size(); ++k) {
      if (k != i) denom += std::exp(dot(batch[i], keys[k]) / tau);
    }
    double li = 0.0;
    int positives = 0;
    for (std::size_t j = 0; j < keys.size(); ++j) {
      if (j == i || key_labels[j] != batch_labels[i]) continue;
      li += std::log(std::exp(dot(batch[i], keys[j]) / tau) / denom);
      ++positives;
    }
    if (normalize && positives > 0) li /= positives;
    total += li;
  }
  return -total;
}

inline std::vector<std::vector<double>> rows_of(const Tensor& t) {
  std::vector<std::vector<double>> out(t.size(0));
  const std::size_t d = t.size(1);
  for (std::size_t i = 0; i < out.size(); ++i) out[i].assign(t.data().begin() + i * d, t.data().begin() + (i + 1) * d);
  return out;
}

}  // namespace testing
