#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "specfas/rng.hpp"
#include "specfas/tensor.hpp"

namespace specfas {

enum class MaskVariant { BottomHalf, LeftHalf, RightHalf };

std::string to_string(MaskVariant variant);
MaskVariant parse_mask_variant(const std::string& text);

struct AugmentConfig {
  double crop_fraction = 0.9;
  double flip_prob = 0.5;
  double cutout_prob = 0.5;
  double cutout_side_fraction = 0.25;
  double mask_prob = 0.5;
  std::vector<MaskVariant> mask_variants{MaskVariant::BottomHalf, MaskVariant::LeftHalf, MaskVariant::RightHalf};
  std::uint64_t seed = 0;

  // Throws std::invalid_argument on out-of-range fields.
  void validate() const;
  // No-op configuration: every probability zero, full crop.
  static AugmentConfig identity();
};

// All helpers take and return [h, w, c] tensors and never record gradients.

Tensor flip_horizontal(const Tensor& x);
Tensor mask_half(const Tensor& x, MaskVariant variant);
// Zeroes the side x side square whose top-left corner is (top, left), clipped
// to the image.
Tensor cutout(const Tensor& x, std::ptrdiff_t top, std::ptrdiff_t left, std::size_t side);
// Copies the crop_h x crop_w window at (top, left) into the centre of an
// otherwise zero canvas of the original size.
Tensor crop_and_pad(const Tensor& x, std::size_t top, std::size_t left, std::size_t crop_h, std::size_t crop_w);

/// Random crop, horizontal flip, cutout and half-face masking, applied in
/// that order. Every random decision comes from `rng`, and the draws do not
/// depend on the channel count.
Tensor apply_augment(const Tensor& x, const AugmentConfig& cfg, Rng& rng);

}  // namespace specfas
