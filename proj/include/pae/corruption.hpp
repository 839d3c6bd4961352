#pragma once

#include <cmath>
#include <vector>

#include "pae/errors.hpp"
#include "pae/rng.hpp"
#include "pae/tensor.hpp"

namespace pae::corruption {

struct CorruptionSpec {
  double snr_db = 35.0;
  double mask_ratio = 0.1;
  std::uint64_t seed = 0;
};

// Additive Gaussian noise at a per-channel SNR. Channel signal power is the
// mean square over the window; noise std is sqrt(P / 10^(snr/10)). All-zero
// channels pass through unchanged.
inline Tensor add_noise(const Tensor& x, double snr_db, Rng& rng) {
  if (!x.finite()) throw ParamError("add_noise: non-finite input");
  int rows = x.rows(), cols = x.cols();
  Tensor out = Tensor::from(x.shape, *x.data);
  double ratio = std::pow(10.0, snr_db / 10.0);
  for (int i = 0; i < rows; ++i) {
    double power = 0.0;
    for (int j = 0; j < cols; ++j) {
      double v = (*x.data)[static_cast<std::size_t>(i) * cols + j];
      power += v * v;
    }
    power /= cols;
    double sigma = std::sqrt(power / ratio);
    if (sigma == 0.0) continue;
    for (int j = 0; j < cols; ++j)
      (*out.data)[static_cast<std::size_t>(i) * cols + j] += sigma * rng.normal();
  }
  return out;
}

// Zeroes exactly round(mask_ratio * N) patch rows selected uniformly without
// replacement. Operates on the class-token-free patch sequence.
inline std::pair<Tensor, std::vector<char>> mask_patches(const Tensor& xp,
                                                         double mask_ratio, Rng& rng) {
  if (mask_ratio < 0.0 || mask_ratio >= 1.0)
    throw ParamError("mask_ratio must be in [0,1)");
  int n = xp.rows(), d = xp.cols();
  int n_mask = static_cast<int>(std::llround(mask_ratio * n));
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  // partial Fisher-Yates: first n_mask entries are the masked rows
  for (int i = 0; i < n_mask; ++i) {
    int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - i)));
    std::swap(idx[i], idx[j]);
  }
  std::vector<char> mask(n, 0);
  for (int i = 0; i < n_mask; ++i) mask[idx[i]] = 1;
  Tensor out = Tensor::from(xp.shape, *xp.data);
  for (int i = 0; i < n; ++i)
    if (mask[i])
      std::fill(out.data->begin() + static_cast<std::size_t>(i) * d,
                out.data->begin() + static_cast<std::size_t>(i + 1) * d, 0.0);
  return {std::move(out), std::move(mask)};
}

}  // namespace pae::corruption
