#include "specfas/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace specfas {

std::string to_string(MaskVariant variant) {
  switch (variant) {
    case MaskVariant::BottomHalf:
      return "bottom";
    case MaskVariant::LeftHalf:
      return "left";
    case MaskVariant::RightHalf:
      return "right";
  }
  return "unknown";
}

MaskVariant parse_mask_variant(const std::string& text) {
  if (text == "bottom") return MaskVariant::BottomHalf;
  if (text == "left") return MaskVariant::LeftHalf;
  if (text == "right") return MaskVariant::RightHalf;
  throw std::invalid_argument(fmt::format("unknown mask variant '{}' (expected bottom|left|right)", text));
}

void AugmentConfig::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(fmt::format("{} must lie in [0, 1], got {}", name, p));
  };
  auto fraction = [](double f, const char* name) {
    if (!(f > 0.0 && f <= 1.0)) throw std::invalid_argument(fmt::format("{} must lie in (0, 1], got {}", name, f));
  };
  prob(flip_prob, "flip_prob");
  prob(cutout_prob, "cutout_prob");
  prob(mask_prob, "mask_prob");
  fraction(crop_fraction, "crop_fraction");
  fraction(cutout_side_fraction, "cutout_side_fraction");
}

AugmentConfig AugmentConfig::identity() {
  AugmentConfig cfg;
  cfg.crop_fraction = 1.0;
  cfg.flip_prob = 0.0;
  cfg.cutout_prob = 0.0;
  cfg.mask_prob = 0.0;
  return cfg;
}

namespace {

struct Dims {
  std::size_t h;
  std::size_t w;
  std::size_t c;
};

Dims dims_of(const Tensor& x) {
  if (x.dim() != 3) throw ShapeError(fmt::format("augmentation expects [h, w, c], got {}", shape_str(x.shape())));
  return {x.size(0), x.size(1), x.size(2)};
}

// Zeroes pixels whose (row, col) satisfies `inside`.
template <class Pred>
Tensor zero_where(const Tensor& x, Pred inside) {
  const Dims d = dims_of(x);
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t y = 0; y < d.h; ++y) {
    for (std::size_t col = 0; col < d.w; ++col) {
      if (!inside(y, col)) continue;
      std::fill_n(out.begin() + static_cast<std::ptrdiff_t>((y * d.w + col) * d.c), d.c, 0.0);
    }
  }
  return Tensor::from(x.shape(), std::move(out));
}

std::size_t fraction_of(std::size_t n, double fraction) {
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))), 1, n);
}

}  // namespace

Tensor flip_horizontal(const Tensor& x) {
  const Dims d = dims_of(x);
  std::vector<double> out(x.numel());
  const auto in = x.data();
  for (std::size_t y = 0; y < d.h; ++y) {
    for (std::size_t col = 0; col < d.w; ++col) {
      std::copy_n(in.begin() + static_cast<std::ptrdiff_t>((y * d.w + col) * d.c), d.c,
                  out.begin() + static_cast<std::ptrdiff_t>((y * d.w + (d.w - 1 - col)) * d.c));
    }
  }
  return Tensor::from(x.shape(), std::move(out));
}

Tensor mask_half(const Tensor& x, MaskVariant variant) {
  const Dims d = dims_of(x);
  switch (variant) {
    case MaskVariant::BottomHalf:
      if (d.h % 2 != 0) throw ShapeError(fmt::format("bottom-half mask needs an even height, got {}", d.h));
      return zero_where(x, [&](std::size_t y, std::size_t) { return y >= d.h / 2; });
    case MaskVariant::LeftHalf:
      if (d.w % 2 != 0) throw ShapeError(fmt::format("left-half mask needs an even width, got {}", d.w));
      return zero_where(x, [&](std::size_t, std::size_t col) { return col < d.w / 2; });
    case MaskVariant::RightHalf:
      if (d.w % 2 != 0) throw ShapeError(fmt::format("right-half mask needs an even width, got {}", d.w));
      return zero_where(x, [&](std::size_t, std::size_t col) { return col >= d.w / 2; });
  }
  return x;
}

Tensor cutout(const Tensor& x, std::ptrdiff_t top, std::ptrdiff_t left, std::size_t side) {
  dims_of(x);
  const auto s = static_cast<std::ptrdiff_t>(side);
  return zero_where(x, [&](std::size_t y, std::size_t col) {
    const auto yy = static_cast<std::ptrdiff_t>(y);
    const auto cc = static_cast<std::ptrdiff_t>(col);
    return yy >= top && yy < top + s && cc >= left && cc < left + s;
  });
}

Tensor crop_and_pad(const Tensor& x, std::size_t top, std::size_t left, std::size_t crop_h, std::size_t crop_w) {
  const Dims d = dims_of(x);
  if (crop_h > d.h || crop_w > d.w || top + crop_h > d.h || left + crop_w > d.w) {
    throw ShapeError(fmt::format("crop {}x{} at ({}, {}) exceeds image {}", crop_h, crop_w, top, left,
                                 shape_str(x.shape())));
  }
  const std::size_t dst_top = (d.h - crop_h) / 2;
  const std::size_t dst_left = (d.w - crop_w) / 2;
  std::vector<double> out(x.numel(), 0.0);
  const auto in = x.data();
  for (std::size_t y = 0; y < crop_h; ++y) {
    std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(((top + y) * d.w + left) * d.c), crop_w * d.c,
                out.begin() + static_cast<std::ptrdiff_t>(((dst_top + y) * d.w + dst_left) * d.c));
  }
  return Tensor::from(x.shape(), std::move(out));
}

Tensor apply_augment(const Tensor& x, const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  const Dims d = dims_of(x);
  if (cfg.mask_prob > 0.0) {
    for (MaskVariant v : cfg.mask_variants) {
      const bool odd = v == MaskVariant::BottomHalf ? d.h % 2 != 0 : d.w % 2 != 0;
      if (odd) {
        throw ShapeError(fmt::format("{} mask selected but image is {}x{}", to_string(v), d.h, d.w));
      }
    }
  }
  Tensor out = x.detach();
  if (cfg.crop_fraction < 1.0) {
    const std::size_t ch = fraction_of(d.h, cfg.crop_fraction);
    const std::size_t cw = fraction_of(d.w, cfg.crop_fraction);
    const std::size_t top = rng.index(d.h - ch + 1);
    const std::size_t left = rng.index(d.w - cw + 1);
    out = crop_and_pad(out, top, left, ch, cw);
  }
  if (cfg.flip_prob > 0.0 && rng.bernoulli(cfg.flip_prob)) out = flip_horizontal(out);
  if (cfg.cutout_prob > 0.0 && rng.bernoulli(cfg.cutout_prob)) {
    const std::size_t side = fraction_of(std::min(d.h, d.w), cfg.cutout_side_fraction);
    const auto half = static_cast<std::ptrdiff_t>(side / 2);
    const auto cy = static_cast<std::ptrdiff_t>(rng.index(d.h));
    const auto cx = static_cast<std::ptrdiff_t>(rng.index(d.w));
    out = cutout(out, cy - half, cx - half, side);
  }
  if (cfg.mask_prob > 0.0 && !cfg.mask_variants.empty() && rng.bernoulli(cfg.mask_prob)) {
    out = mask_half(out, cfg.mask_variants[rng.index(cfg.mask_variants.size())]);
  }
  return out;
}

}  // namespace specfas
