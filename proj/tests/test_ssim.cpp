#include <doctest.h>

#include "fd_check.hpp"
#include "sgap/ssim.hpp"

using namespace sgap;
using namespace sgap::testing;

namespace {

TensorD clipped_random(std::vector<int> shape, uint64_t seed, double scale) {
  TensorD t = random_tensor(std::move(shape), seed, scale);
  for (auto& v : t.data) v = std::clamp(v, -0.999, 0.999);
  return t;
}

}  // namespace

TEST_CASE("ssim of an image with itself is exactly 1") {
  TensorD a = clipped_random({1, 16, 16}, 1, 0.5);
  CHECK(ssim(a, a) == 1.0);
  CHECK(distortion(a, a) == 0.0);
  TensorD rgb = clipped_random({3, 12, 12}, 2, 0.5);
  CHECK(ssim(rgb, rgb) == 1.0);
}

TEST_CASE("ssim is symmetric") {
  TensorD a = clipped_random({1, 20, 20}, 3, 0.5);
  TensorD b = clipped_random({1, 20, 20}, 4, 0.5);
  CHECK(ssim(a, b) == ssim(b, a));
}

TEST_CASE("constant images hit the closed-form value") {
  // Constants 0.5 and 0.25 after mapping to [0,1]: variances vanish, so
  // SSIM = (2*0.5*0.25 + 1e-4) / (0.5^2 + 0.25^2 + 1e-4) = 0.2501 / 0.3126.
  TensorD a({1, 24, 24}), b({1, 24, 24});
  a.fill(0.0);    // maps to 0.5
  b.fill(-0.5);   // maps to 0.25
  const double expected = 0.2501 / 0.3126;
  CHECK(ssim(a, b) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(expected == doctest::Approx(0.80006).epsilon(1e-5));
  CHECK(distortion(a, b) == doctest::Approx(1.0 - expected).epsilon(1e-12));
}

TEST_CASE("distortion stays within [0, 2]") {
  // Anti-correlated structure drives SSIM negative but never below -1.
  TensorD a({1, 16, 16}), b({1, 16, 16});
  Rng rng(5);
  for (int64_t i = 0; i < a.numel(); ++i) {
    const double v = 0.8 * std::sin(static_cast<double>(i) * 0.7) +
                     0.1 * rng.gaussian();
    a[i] = std::clamp(v, -1.0, 1.0);
    b[i] = std::clamp(-v, -1.0, 1.0);
  }
  const double d = distortion(a, b);
  CHECK(d >= 0.0);
  CHECK(d <= 2.0);
  CHECK(d > 1.0);  // opposite structure really is penalized past full loss
}

TEST_CASE("ssim decreases as independent noise grows") {
  TensorD a = clipped_random({1, 32, 32}, 6, 0.4);
  double prev = 1.0;
  for (double amp : {0.05, 0.15, 0.4}) {
    TensorD b = a;
    Rng rng(7);
    for (auto& v : b.data) v = std::clamp(v + amp * rng.gaussian(), -1.0, 1.0);
    const double s = ssim(a, b);
    CHECK(s < prev);
    prev = s;
  }
  CHECK(prev > -1.0);
}

TEST_CASE("ssim rejects mismatched or undersized inputs") {
  TensorD a({1, 16, 16}), b({1, 16, 15});
  CHECK_THROWS_AS(ssim(a, b), ShapeError);
  TensorD small({1, 8, 8});
  CHECK_THROWS_AS(ssim(small, small), ShapeError);
}

TEST_CASE("ssim backward matches finite differences") {
  TensorD a = clipped_random({1, 14, 14}, 8, 0.4);
  TensorD b = clipped_random({1, 14, 14}, 9, 0.4);

  auto loss = [&] { return 3.0 * ssim(a, b); };
  TensorD gb({1, 14, 14});
  ssim_backward_wrt_b(a, b, 3.0, gb);

  auto r = fd_compare(loss, {{b.ptr(), gb.ptr(), b.numel()}}, 60);
  CHECK(r.max_rel_err < 1e-4);
  CHECK(r.skipped == 0);
}

TEST_CASE("ssim backward on a multi-channel pair") {
  TensorD a = clipped_random({3, 12, 12}, 10, 0.4);
  TensorD b = clipped_random({3, 12, 12}, 11, 0.4);
  auto loss = [&] { return ssim(a, b); };
  TensorD gb({3, 12, 12});
  ssim_backward_wrt_b(a, b, 1.0, gb);
  auto r = fd_compare(loss, {{b.ptr(), gb.ptr(), b.numel()}}, 40);
  CHECK(r.max_rel_err < 1e-4);
}

TEST_CASE("float storage agrees with double to float precision") {
  TensorD ad = clipped_random({1, 18, 18}, 12, 0.4);
  TensorD bd = clipped_random({1, 18, 18}, 13, 0.4);
  auto af = ad.cast<float>();
  auto bf = bd.cast<float>();
  CHECK(ssim(af, bf) == doctest::Approx(ssim(ad, bd)).epsilon(1e-5));
}
