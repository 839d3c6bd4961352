#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "pae/errors.hpp"
#include "pae/rng.hpp"
#include "pae/tensor.hpp"

namespace pae::manifold {

struct EmbeddingConfig {
  double perplexity = 30.0;
  int iterations = 1000;
  double early_exaggeration = 12.0;
  int exaggeration_iters = 250;
  double learning_rate = 200.0;
  double momentum_initial = 0.5;
  double momentum_final = 0.8;
  int momentum_switch = 250;
  std::uint64_t seed = 7;
};

struct EmbeddingResult {
  Tensor coords;                 // [n x 2]
  std::vector<double> kl_trace;  // per iteration, nats, against the true P
};

inline std::vector<double> squared_distances(const Tensor& x) {
  int n = x.rows(), d = x.cols();
  std::vector<double> dist(static_cast<std::size_t>(n) * n, 0.0);
  const double* p = x.data->data();
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double acc = 0.0;
      const double* a = p + static_cast<std::size_t>(i) * d;
      const double* b = p + static_cast<std::size_t>(j) * d;
      for (int k = 0; k < d; ++k) {
        double diff = a[k] - b[k];
        acc += diff * diff;
      }
      dist[static_cast<std::size_t>(i) * n + j] = acc;
      dist[static_cast<std::size_t>(j) * n + i] = acc;
    }
  return dist;
}

// Per-row Gaussian bandwidths found by bisection so each conditional row has
// Shannon entropy log2(perplexity) within 1e-5 (200 iterations max). Rows are
// normalized conditional distributions with zero diagonal.
inline std::vector<double> conditional_affinities(const Tensor& x, double perplexity) {
  int n = x.rows();
  if (n < 4) throw ParamError("t-SNE needs at least 4 points");
  if (!(perplexity > 0.0 && perplexity < (n - 1) / 3.0))
    throw ParamError("perplexity must be in (0, (n-1)/3)");
  std::vector<double> dist = squared_distances(x);
  std::vector<double> cond(static_cast<std::size_t>(n) * n, 0.0);
  double target = std::log2(perplexity);

  for (int i = 0; i < n; ++i) {
    double beta_min = 0.0, beta_max = std::numeric_limits<double>::infinity();
    const double* drow = dist.data() + static_cast<std::size_t>(i) * n;
    double* prow = cond.data() + static_cast<std::size_t>(i) * n;
    double dmin = std::numeric_limits<double>::infinity();
    double dsum = 0.0;
    for (int j = 0; j < n; ++j)
      if (j != i) {
        dmin = std::min(dmin, drow[j]);
        dsum += drow[j];
      }
    // start at the row's own distance scale so bracketing costs O(1)
    // iterations regardless of the input's magnitude
    double dmean = dsum / (n - 1) - dmin;
    double beta = dmean > 0.0 ? 1.0 / dmean : 1.0;
    bool converged = false;
    double sum = 0.0, ent_lo = std::numeric_limits<double>::infinity(), ent_hi = 0.0;
    for (int iter = 0; iter < 200; ++iter) {
      sum = 0.0;
      for (int j = 0; j < n; ++j) {
        // shift by the nearest distance so the largest term is exp(0)
        prow[j] = (j == i) ? 0.0 : std::exp(-beta * (drow[j] - dmin));
        sum += prow[j];
      }
      double entropy = 0.0;  // bits
      for (int j = 0; j < n; ++j) {
        double p = prow[j] / sum;
        // p can underflow to 0 for far neighbours even when prow[j] > 0;
        // its entropy contribution is 0 either way
        if (p > 0.0) entropy -= p * std::log2(p);
      }
      ent_lo = std::min(ent_lo, entropy);
      ent_hi = std::max(ent_hi, entropy);
      double diff = entropy - target;
      if (std::fabs(diff) < 1e-5) {
        converged = true;
        break;
      }
      if (diff > 0.0) {  // entropy too high -> sharpen
        beta_min = beta;
        beta = std::isinf(beta_max) ? beta * 2.0 : 0.5 * (beta_min + beta_max);
      } else {
        beta_max = beta;
        beta = 0.5 * (beta_min + beta_max);
      }
    }
    // degenerate rows (ties or coincident points) have a beta-independent
    // entropy; their conditional is exact for any bandwidth, so accept it
    if (!converged && ent_hi - ent_lo > 1e-9)
      throw NumericError("affinity calibration did not converge at row " +
                         std::to_string(i));
    for (int j = 0; j < n; ++j) prow[j] /= sum;
  }
  return cond;
}

// Symmetrized joint affinities P = (P_cond + P_cond^T) / (2n).
inline std::vector<double> calibrate_affinities(const Tensor& x, double perplexity) {
  int n = x.rows();
  std::vector<double> cond = conditional_affinities(x, perplexity);
  std::vector<double> p(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      p[static_cast<std::size_t>(i) * n + j] =
          (cond[static_cast<std::size_t>(i) * n + j] +
           cond[static_cast<std::size_t>(j) * n + i]) /
          (2.0 * n);
  return p;
}

// Exact O(n^2) t-SNE: Student-t (1 dof) low-dimensional affinities, momentum
// gradient descent with early exaggeration. Optional init overrides the
// seeded Gaussian (std 1e-4) starting coordinates.
inline EmbeddingResult tsne_embed(const Tensor& x, const EmbeddingConfig& cfg,
                                  const Tensor* init = nullptr) {
  int n = x.rows();
  std::vector<double> p = calibrate_affinities(x, cfg.perplexity);

  Tensor y = Tensor::zeros({n, 2});
  if (init) {
    if (init->rows() != n || init->cols() != 2) throw ShapeError("t-SNE init shape");
    *y.data = *init->data;
  } else {
    for (int i = 0; i < n; ++i) {
      Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(i)));
      (*y.data)[static_cast<std::size_t>(i) * 2] = rng.normal(0.0, 1e-4);
      (*y.data)[static_cast<std::size_t>(i) * 2 + 1] = rng.normal(0.0, 1e-4);
    }
  }

  std::vector<double> vel(static_cast<std::size_t>(n) * 2, 0.0);
  std::vector<double> w(static_cast<std::size_t>(n) * n, 0.0);
  std::vector<double> grad(static_cast<std::size_t>(n) * 2, 0.0);
  EmbeddingResult result;
  result.kl_trace.reserve(cfg.iterations);

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    double exag = iter < cfg.exaggeration_iters ? cfg.early_exaggeration : 1.0;
    double momentum = iter < cfg.momentum_switch ? cfg.momentum_initial : cfg.momentum_final;

    double wsum = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        double dx = (*y.data)[i * 2] - (*y.data)[j * 2];
        double dy = (*y.data)[i * 2 + 1] - (*y.data)[j * 2 + 1];
        double wij = 1.0 / (1.0 + dx * dx + dy * dy);
        w[static_cast<std::size_t>(i) * n + j] = wij;
        w[static_cast<std::size_t>(j) * n + i] = wij;
        wsum += 2.0 * wij;
      }

    double kl = 0.0;
    std::fill(grad.begin(), grad.end(), 0.0);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        std::size_t ij = static_cast<std::size_t>(i) * n + j;
        double q = std::max(w[ij] / wsum, 1e-12);
        double mult = 4.0 * (exag * p[ij] - q) * w[ij];
        grad[i * 2] += mult * ((*y.data)[i * 2] - (*y.data)[j * 2]);
        grad[i * 2 + 1] += mult * ((*y.data)[i * 2 + 1] - (*y.data)[j * 2 + 1]);
        if (p[ij] > 0.0) kl += p[ij] * std::log(p[ij] / q);
      }
    }
    if (!std::isfinite(kl))
      throw NumericError("t-SNE overflow at iteration " + std::to_string(iter));
    result.kl_trace.push_back(kl);

    double mean0 = 0.0, mean1 = 0.0;
    for (int i = 0; i < n; ++i) {
      vel[i * 2] = momentum * vel[i * 2] - cfg.learning_rate * grad[i * 2];
      vel[i * 2 + 1] = momentum * vel[i * 2 + 1] - cfg.learning_rate * grad[i * 2 + 1];
      (*y.data)[i * 2] += vel[i * 2];
      (*y.data)[i * 2 + 1] += vel[i * 2 + 1];
      mean0 += (*y.data)[i * 2];
      mean1 += (*y.data)[i * 2 + 1];
    }
    mean0 /= n;
    mean1 /= n;
    for (int i = 0; i < n; ++i) {
      (*y.data)[i * 2] -= mean0;
      (*y.data)[i * 2 + 1] -= mean1;
    }
  }
  result.coords = std::move(y);
  return result;
}

// Mean fraction of each point's k nearest neighbours (excluding itself)
// sharing its label; the quantitative stand-in for visual cluster quality.
inline double knn_label_purity(const Tensor& coords, const std::vector<int>& labels, int k) {
  int n = coords.rows();
  if (k < 1 || k >= n) throw ParamError("purity: k out of range");
  std::vector<double> dist = squared_distances(coords);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    std::vector<std::pair<double, int>> row;
    row.reserve(n - 1);
    for (int j = 0; j < n; ++j)
      if (j != i) row.push_back({dist[static_cast<std::size_t>(i) * n + j], j});
    std::partial_sort(row.begin(), row.begin() + k, row.end());
    int same = 0;
    for (int j = 0; j < k; ++j)
      if (labels[row[j].second] == labels[i]) ++same;
    total += static_cast<double>(same) / k;
  }
  return total / n;
}

}  // namespace pae::manifold
