#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "specfas/augment.hpp"
#include "specfas/ops.hpp"
#include "support.hpp"

using namespace specfas;

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

AugmentConfig mask_only(MaskVariant v) {
  AugmentConfig cfg = AugmentConfig::identity();
  cfg.mask_prob = 1.0;
  cfg.mask_variants = {v};
  return cfg;
}

}  // namespace

TEST_CASE("bottom half mask on ones") {
  const Tensor x = Tensor::ones({4, 4, 33});
  Rng rng(1);
  const Tensor y = apply_augment(x, mask_only(MaskVariant::BottomHalf), rng);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t k = 0; k < 33; ++k) CHECK(y.at({r, c, k}) == (r < 2 ? 1.0 : 0.0));
}

TEST_CASE("left and right masks") {
  const Tensor x = Tensor::ones({2, 6, 2});
  const Tensor l = mask_half(x, MaskVariant::LeftHalf);
  const Tensor r = mask_half(x, MaskVariant::RightHalf);
  for (std::size_t c = 0; c < 6; ++c) {
    CHECK(l.at({1, c, 1}) == (c < 3 ? 0.0 : 1.0));
    CHECK(r.at({1, c, 1}) == (c < 3 ? 1.0 : 0.0));
  }
  CHECK(parse_mask_variant(to_string(MaskVariant::RightHalf)) == MaskVariant::RightHalf);
  CHECK_THROWS_AS(parse_mask_variant("top"), std::invalid_argument);
}

TEST_CASE("identity configuration") {
  Rng rng(2);
  const Tensor x = testing::random_tensor(rng, {6, 8, 33});
  Rng r2(3);
  CHECK(values(apply_augment(x, AugmentConfig::identity(), r2)) == values(x));
}

TEST_CASE("forced flip is an involution") {
  Rng rng(4);
  const Tensor x = testing::random_tensor(rng, {5, 7, 3});
  AugmentConfig cfg = AugmentConfig::identity();
  cfg.flip_prob = 1.0;
  Rng a(5);
  const Tensor once = apply_augment(x, cfg, a);
  CHECK(once.at({2, 0, 1}) == x.at({2, 6, 1}));
  const Tensor twice = apply_augment(once, cfg, a);
  CHECK(values(twice) == values(x));
}

TEST_CASE("cutout and crop helpers") {
  const Tensor x = Tensor::ones({6, 6, 2});
  const Tensor c = cutout(x, -1, 4, 3);
  std::size_t zeros = 0;
  for (double v : c.data()) zeros += v == 0.0;
  CHECK(zeros == 2 * 2 * 2);  // clipped to rows 0..1, cols 4..5
  CHECK(c.at({0, 4, 0}) == 0.0);
  CHECK(c.at({2, 4, 0}) == 1.0);

  Rng rng(6);
  const Tensor r = testing::random_tensor(rng, {6, 6, 1});
  const Tensor p = crop_and_pad(r, 1, 2, 4, 4);
  CHECK(p.shape() == Shape{6, 6, 1});
  CHECK(p.at({1, 1, 0}) == r.at({1, 2, 0}));
  CHECK(p.at({0, 0, 0}) == 0.0);
  CHECK(p.at({5, 5, 0}) == 0.0);
}

TEST_CASE("odd dims with a half mask selected") {
  Rng rng(7);
  CHECK_THROWS_AS(apply_augment(Tensor::ones({5, 4, 3}), mask_only(MaskVariant::BottomHalf), rng), ShapeError);
  CHECK_THROWS_AS(apply_augment(Tensor::ones({4, 5, 3}), mask_only(MaskVariant::LeftHalf), rng), ShapeError);
  CHECK_NOTHROW(apply_augment(Tensor::ones({4, 5, 3}), mask_only(MaskVariant::BottomHalf), rng));
  CHECK_THROWS_AS(mask_half(Tensor::ones({3, 4, 1}), MaskVariant::BottomHalf), ShapeError);
}

TEST_CASE("config validation") {
  AugmentConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.flip_prob = 1.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = AugmentConfig{};
  cfg.crop_fraction = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("augmentation properties over random draws") {
  Rng data(8);
  const AugmentConfig cfg;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t h = 2 * (2 + data.index(6)), w = 2 * (2 + data.index(6));
    const Tensor rgb = testing::random_tensor(data, {h, w, 3}, 0.1, 1.0);
    const Tensor spec = testing::random_tensor(data, {h, w, 30}, 0.1, 1.0);
    const Tensor both = ops::concat({rgb, spec}, 2);

    Rng a(trial), b(trial), c(trial), d(trial);
    const Tensor out = apply_augment(both, cfg, a);
    CHECK(out.shape() == both.shape());

    // Same stream, same result.
    CHECK(values(apply_augment(both, cfg, b)) == values(out));

    // Applying to the parts separately then concatenating gives the same tensor.
    const Tensor parts = ops::concat({apply_augment(rgb, cfg, c), apply_augment(spec, cfg, d)}, 2);
    CHECK(values(parts) == values(out));

    // Zeroed pixels are zero across every channel.
    for (std::size_t p = 0; p < h * w; ++p) {
      bool any_zero = false, all_zero = true;
      for (std::size_t k = 0; k < 33; ++k) {
        const bool z = out.data()[p * 33 + k] == 0.0;
        any_zero |= z;
        all_zero &= z;
      }
      CHECK(any_zero == all_zero);
    }
  }
}
