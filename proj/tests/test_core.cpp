#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "sgap/rng.hpp"
#include "sgap/tensor.hpp"

using namespace sgap;

TEST_CASE("tensor shape and indexing") {
  TensorF t({2, 3, 4, 5});
  CHECK(t.numel() == 120);
  t.at4(1, 2, 3, 4) = 7.5f;
  CHECK(t.data.back() == 7.5f);
  t.at4(0, 0, 0, 0) = 1.0f;
  CHECK(t.data.front() == 1.0f);

  TensorF img({3, 4, 5});
  img.at3(2, 3, 4) = 2.0f;
  CHECK(img.data.back() == 2.0f);
}

TEST_CASE("tensor shape validation") {
  CHECK_THROWS_AS(TensorF({2, 2}, {1.f, 2.f, 3.f}), ShapeError);
  CHECK_THROWS_AS(TensorF({-1, 4}), ShapeError);
}

TEST_CASE("stack and slice round trip") {
  TensorF a({1, 2, 2});
  TensorF b({1, 2, 2});
  std::iota(a.data.begin(), a.data.end(), 0.f);
  std::iota(b.data.begin(), b.data.end(), 10.f);
  auto batch = stack_images<float>({&a, &b});
  CHECK(batch.shape == std::vector<int>{2, 1, 2, 2});
  auto b2 = slice_image(batch, 1);
  CHECK(b2.data == b.data);

  TensorF odd({2, 2, 2});
  CHECK_THROWS_AS(stack_images<float>({&a, &odd}), ShapeError);
}

TEST_CASE("tensor cast preserves values") {
  TensorF a({3});
  a.data = {1.5f, -2.0f, 0.25f};
  auto d = a.cast<double>();
  CHECK(d[1] == -2.0);
}

TEST_CASE("rng is deterministic and seed-sensitive") {
  Rng a(123), b(123), c(124);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  bool differs = false;
  Rng a2(123);
  for (int i = 0; i < 100; ++i) differs |= (a2.next_u64() != c.next_u64());
  CHECK(differs);
}

TEST_CASE("derived streams do not disturb the parent") {
  Rng a(9);
  Rng b(9);
  (void)a.derive("noise").next_u64();
  (void)a.derive("noise", 3).next_u64();
  CHECK(a.next_u64() == b.next_u64());

  // Distinct tags and keys give distinct streams.
  Rng r(9);
  CHECK(r.derive("x").next_u64() != r.derive("y").next_u64());
  CHECK(r.derive("x", 0).next_u64() != r.derive("x", 1).next_u64());
}

TEST_CASE("uniform stays in [0,1)") {
  Rng r(5);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("gaussian moments") {
  Rng r(77);
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double g = r.gaussian();
    sum += g;
    sq += g * g;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::fabs(mean) < 0.01);
  CHECK(std::fabs(var - 1.0) < 0.02);
}

TEST_CASE("shuffle is a permutation and reproducible") {
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  auto w = v;
  Rng(3).shuffle(v.begin(), v.end());
  Rng(3).shuffle(w.begin(), w.end());
  CHECK(v == w);
  CHECK(std::set<int>(v.begin(), v.end()).size() == 50);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  bool moved = false;
  for (int i = 0; i < 50; ++i) moved |= (v[static_cast<size_t>(i)] != i);
  CHECK(moved);
}
