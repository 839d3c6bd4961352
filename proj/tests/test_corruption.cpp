#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "pae/corruption.hpp"

using namespace pae;
using namespace pae::corruption;

TEST_CASE("extreme snr leaves signal essentially untouched") {
  Rng rng(4);
  Tensor x = Tensor::randn({6, 50}, rng, 1.0);
  Rng noise_rng(5);
  Tensor y = add_noise(x, 300.0, noise_rng);
  for (std::size_t k = 0; k < x.data->size(); ++k)
    REQUIRE(std::fabs((*y.data)[k] - (*x.data)[k]) <=
            1e-10 * std::max(1.0, std::fabs((*x.data)[k])));
}

TEST_CASE("all-zero channel passes through unchanged") {
  Tensor x = Tensor::zeros({3, 40});
  for (int j = 0; j < 40; ++j) (*x.data)[j] = 1.0;  // only row 0 has signal
  Rng rng(2);
  Tensor y = add_noise(x, 20.0, rng);
  for (int j = 0; j < 40; ++j) {
    REQUIRE((*y.data)[40 + j] == 0.0);
    REQUIRE((*y.data)[80 + j] == 0.0);
  }
  bool changed = false;
  for (int j = 0; j < 40; ++j)
    if ((*y.data)[j] != (*x.data)[j]) changed = true;
  REQUIRE(changed);
}

TEST_CASE("non-finite input rejected") {
  Tensor x = Tensor::zeros({2, 4});
  (*x.data)[3] = std::numeric_limits<double>::quiet_NaN();
  Rng rng(1);
  REQUIRE_THROWS_AS(add_noise(x, 35.0, rng), ParamError);
}

TEST_CASE("measured snr matches the requested level") {
  // 1e4 Monte-Carlo channels of 200 samples each
  const int channels = 10000, cols = 200;
  Rng sig_rng(11);
  Tensor x = Tensor::randn({channels, cols}, sig_rng, 1.0);
  Rng noise_rng(12);
  Tensor y = add_noise(x, 35.0, noise_rng);
  double p_sig = 0.0, p_noise = 0.0;
  for (std::size_t k = 0; k < x.data->size(); ++k) {
    double s = (*x.data)[k], n = (*y.data)[k] - (*x.data)[k];
    p_sig += s * s;
    p_noise += n * n;
  }
  double measured = 10.0 * std::log10(p_sig / p_noise);
  REQUIRE(std::fabs(measured - 35.0) < 0.5);
}

TEST_CASE("noise is zero-mean") {
  const int channels = 500, cols = 200;  // 1e5 samples
  Tensor x = Tensor::full({channels, cols}, 1.0);
  Rng rng(21);
  Tensor y = add_noise(x, 0.0, rng);  // sigma = 1 per channel
  double mean = 0.0;
  for (std::size_t k = 0; k < x.data->size(); ++k) mean += (*y.data)[k] - 1.0;
  mean /= static_cast<double>(channels) * cols;
  REQUIRE(std::fabs(mean) < 4.0 / std::sqrt(1e5));
}

TEST_CASE("noise is deterministic per seed") {
  Rng sig(3);
  Tensor x = Tensor::randn({5, 30}, sig, 1.0);
  Rng r1(77), r2(77), r3(78);
  Tensor a = add_noise(x, 30.0, r1);
  Tensor b = add_noise(x, 30.0, r2);
  Tensor c = add_noise(x, 30.0, r3);
  REQUIRE(*a.data == *b.data);
  REQUIRE(*a.data != *c.data);
}

TEST_CASE("mask ratio zero is the identity") {
  Rng sig(6);
  Tensor xp = Tensor::randn({190, 40}, sig, 1.0);
  Rng rng(1);
  auto [masked, mask] = mask_patches(xp, 0.0, rng);
  REQUIRE(*masked.data == *xp.data);
  for (char m : mask) REQUIRE(m == 0);
}

TEST_CASE("mask ratio 0.40 zeroes exactly 76 of 190 rows") {
  Rng sig(7);
  Tensor xp = Tensor::randn({190, 40}, sig, 1.0);
  Rng rng(9);
  auto [masked, mask] = mask_patches(xp, 0.40, rng);
  int count = 0;
  for (int i = 0; i < 190; ++i) {
    if (!mask[i]) continue;
    ++count;
    for (int j = 0; j < 40; ++j) REQUIRE((*masked.data)[static_cast<std::size_t>(i) * 40 + j] == 0.0);
  }
  REQUIRE(count == 76);
}

TEST_CASE("unmasked rows are bit-identical") {
  Rng sig(8);
  Tensor xp = Tensor::randn({190, 40}, sig, 1.0);
  Rng rng(10);
  auto [masked, mask] = mask_patches(xp, 0.25, rng);
  for (int i = 0; i < 190; ++i) {
    if (mask[i]) continue;
    for (int j = 0; j < 40; ++j)
      REQUIRE((*masked.data)[static_cast<std::size_t>(i) * 40 + j] ==
              (*xp.data)[static_cast<std::size_t>(i) * 40 + j]);
  }
}

TEST_CASE("mask selection is deterministic per seed") {
  Rng sig(14);
  Tensor xp = Tensor::randn({190, 40}, sig, 1.0);
  Rng r1(5), r2(5), r3(6);
  auto [a, ma] = mask_patches(xp, 0.2, r1);
  auto [b, mb] = mask_patches(xp, 0.2, r2);
  auto [c, mc] = mask_patches(xp, 0.2, r3);
  REQUIRE(ma == mb);
  REQUIRE(*a.data == *b.data);
  REQUIRE(ma != mc);
}

TEST_CASE("mask ratio outside [0,1) rejected") {
  Rng sig(15);
  Tensor xp = Tensor::randn({10, 4}, sig, 1.0);
  Rng rng(1);
  REQUIRE_THROWS_AS(mask_patches(xp, -0.1, rng), ParamError);
  REQUIRE_THROWS_AS(mask_patches(xp, 1.0, rng), ParamError);
}

TEST_CASE("noise then mask leaves masked regions exactly zero") {
  Rng sig(16);
  Tensor x = Tensor::randn({190, 40}, sig, 1.0);
  Rng rng(17);
  Tensor noisy = add_noise(x, 20.0, rng);
  auto [out, mask] = mask_patches(noisy, 0.4, rng);
  int masked_rows = 0;
  for (int i = 0; i < 190; ++i) {
    if (!mask[i]) continue;
    ++masked_rows;
    for (int j = 0; j < 40; ++j)
      REQUIRE((*out.data)[static_cast<std::size_t>(i) * 40 + j] == 0.0);
  }
  REQUIRE(masked_rows == 76);
}
