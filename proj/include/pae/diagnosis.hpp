#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "pae/datagen.hpp"
#include "pae/errors.hpp"
#include "pae/rng.hpp"
#include "pae/tensor.hpp"
#include "pae/training.hpp"

namespace pae::diagnosis {

// One diagnosis example: feature vector (latent or flattened raw window),
// break location index (0 = cold leg, 1 = hot leg) and size in cm.
struct Sample {
  std::vector<double> features;
  int location;
  double size_cm;
};

// ---- metrics ----

// Softmax cross-entropy summed over the batch, log-sum-exp stabilized.
inline double cross_entropy(const Tensor& logits, const Tensor& onehot) {
  if (logits.shape != onehot.shape) throw ShapeError("cross_entropy shapes differ");
  int b = logits.rows(), c = logits.cols();
  double loss = 0.0;
  for (int i = 0; i < b; ++i) {
    const double* row = logits.data->data() + static_cast<std::size_t>(i) * c;
    const double* y = onehot.data->data() + static_cast<std::size_t>(i) * c;
    double mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < c; ++j) sum += std::exp(row[j] - mx);
    double lse = mx + std::log(sum);
    for (int j = 0; j < c; ++j) loss += y[j] * (lse - row[j]);
  }
  return loss;
}

inline double joint_loss(double cls_loss, double reg_loss, double alpha) {
  if (alpha < 0.0 || alpha > 1.0) throw ParamError("alpha must be in [0,1]");
  return alpha * cls_loss + (1.0 - alpha) * reg_loss;
}

using Confusion = std::array<std::array<long, 2>, 2>;  // [truth][pred]

// Unweighted mean of per-class F1; a class with zero precision+recall
// denominator scores 0.
inline double macro_f1(const Confusion& cm) {
  double total = 0.0;
  for (int c = 0; c < 2; ++c) {
    long row = cm[c][0] + cm[c][1];
    if (row == 0)
      throw ContractError("macro_f1: class " + std::to_string(c) + " has no samples");
    long col = cm[0][c] + cm[1][c];
    double tp = static_cast<double>(cm[c][c]);
    double prec = col > 0 ? tp / col : 0.0;
    double rec = tp / row;
    double f1 = (prec + rec) > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
    total += f1;
  }
  return total / 2.0;
}

inline double rmse(const std::vector<double>& pred, const std::vector<double>& truth) {
  if (pred.size() != truth.size() || pred.empty())
    throw ParamError("rmse: length mismatch or empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double d = pred[i] - truth[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(pred.size()));
}

// ---- MLP head (shared trunk, classification + regression branches) ----

struct HeadConfig {
  std::vector<int> hidden = {128, 64, 32};
  double alpha = 0.5;
  long iterations = 256;
  int batch_size = 64;
  training::NadamConfig optimizer;
  std::uint64_t seed = 7;
};

struct DiagnosisHead {
  int input_dim = 0;
  HeadConfig cfg;
  std::vector<std::string> names;
  std::vector<Tensor> params;
  // per-feature standardization fitted on the training set; latents and raw
  // windows arrive at very different scales and the trunk expects O(1) inputs
  std::vector<double> feat_mean, feat_std;

  Tensor& get(const std::string& name) {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return params[i];
    throw ContractError("unknown head parameter " + name);
  }
};

inline DiagnosisHead init_head(int input_dim, const HeadConfig& cfg) {
  DiagnosisHead head;
  head.input_dim = input_dim;
  head.cfg = cfg;
  Rng rng(mix_seed(cfg.seed, 0xd1a6));
  int prev = input_dim;
  for (std::size_t i = 0; i < cfg.hidden.size(); ++i) {
    head.names.push_back("trunk." + std::to_string(i) + ".w");
    head.params.push_back(Tensor::randn({prev, cfg.hidden[i]}, rng, 0.02, true));
    head.names.push_back("trunk." + std::to_string(i) + ".b");
    head.params.push_back(Tensor::zeros({1, cfg.hidden[i]}, true));
    prev = cfg.hidden[i];
  }
  head.names.push_back("cls.w");
  head.params.push_back(Tensor::randn({prev, 2}, rng, 0.02, true));
  head.names.push_back("cls.b");
  head.params.push_back(Tensor::zeros({1, 2}, true));
  head.names.push_back("reg.w");
  head.params.push_back(Tensor::randn({prev, 1}, rng, 0.02, true));
  head.names.push_back("reg.b");
  head.params.push_back(Tensor::zeros({1, 1}, true));
  return head;
}

struct HeadNodes {
  Graph::NodeId logits;
  Graph::NodeId reg;  // normalized size prediction, [B x 1]
};

inline HeadNodes head_graph(Graph& g, Graph::NodeId x, DiagnosisHead& head,
                            bool detach_params = false) {
  std::vector<Graph::NodeId> ids;
  for (auto& p : head.params)
    ids.push_back(detach_params ? g.leaf_detached(p) : g.leaf(p));
  auto pid = [&](const std::string& name) {
    for (std::size_t i = 0; i < head.names.size(); ++i)
      if (head.names[i] == name) return ids[i];
    throw ContractError("unknown head parameter " + name);
  };
  Graph::NodeId t = x;
  for (std::size_t i = 0; i < head.cfg.hidden.size(); ++i) {
    std::string s = std::to_string(i);
    t = g.gelu(g.add_rowvec(g.matmul(t, pid("trunk." + s + ".w")), pid("trunk." + s + ".b")));
  }
  return {g.add_rowvec(g.matmul(t, pid("cls.w")), pid("cls.b")),
          g.add_rowvec(g.matmul(t, pid("reg.w")), pid("reg.b"))};
}

inline Tensor sample_matrix(const std::vector<Sample>& samples,
                            const std::vector<int>& idx, const DiagnosisHead& head) {
  int dim = static_cast<int>(samples[idx[0]].features.size());
  Tensor x = Tensor::zeros({static_cast<int>(idx.size()), dim});
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (int j = 0; j < dim; ++j)
      (*x.data)[static_cast<std::size_t>(i) * dim + j] =
          (samples[idx[i]].features[j] - head.feat_mean[j]) / head.feat_std[j];
  return x;
}

inline void fit_standardization(DiagnosisHead& head, const std::vector<Sample>& train) {
  int dim = head.input_dim;
  head.feat_mean.assign(dim, 0.0);
  head.feat_std.assign(dim, 0.0);
  for (const auto& s : train)
    for (int j = 0; j < dim; ++j) head.feat_mean[j] += s.features[j];
  for (int j = 0; j < dim; ++j) head.feat_mean[j] /= static_cast<double>(train.size());
  for (const auto& s : train)
    for (int j = 0; j < dim; ++j) {
      double d = s.features[j] - head.feat_mean[j];
      head.feat_std[j] += d * d;
    }
  for (int j = 0; j < dim; ++j)
    head.feat_std[j] =
        std::max(std::sqrt(head.feat_std[j] / static_cast<double>(train.size())), 1e-8);
}

// Joint-loss training of the two-branch head. Regression targets are sizes
// normalized by 35.5; predictions are de-normalized for reporting.
inline DiagnosisHead train_heads(const std::vector<Sample>& train, const HeadConfig& cfg) {
  if (train.empty()) throw ContractError("train_heads: empty training set");
  bool has0 = false, has1 = false;
  for (const auto& s : train) (s.location == 0 ? has0 : has1) = true;
  if (!has0 || !has1)
    throw ContractError("train_heads: training set contains a single class");

  DiagnosisHead head = init_head(static_cast<int>(train[0].features.size()), cfg);
  fit_standardization(head, train);
  training::Nadam opt(cfg.optimizer);
  Rng rng(mix_seed(cfg.seed, 0x5eed));
  std::vector<int> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  std::size_t cursor = order.size();  // triggers reshuffle on first batch
  int bs = std::min<int>(cfg.batch_size, static_cast<int>(train.size()));
  std::vector<Tensor*> ptrs;
  for (auto& p : head.params) ptrs.push_back(&p);

  for (long it = 0; it < cfg.iterations; ++it) {
    std::vector<int> batch;
    for (int i = 0; i < bs; ++i) {
      if (cursor == order.size()) {
        for (std::size_t j = order.size(); j > 1; --j)
          std::swap(order[j - 1], order[rng.below(j)]);
        cursor = 0;
      }
      batch.push_back(order[cursor++]);
    }
    Tensor x = sample_matrix(train, batch, head);
    Tensor onehot = Tensor::zeros({bs, 2});
    Tensor target = Tensor::zeros({bs, 1});
    for (int i = 0; i < bs; ++i) {
      (*onehot.data)[static_cast<std::size_t>(i) * 2 + train[batch[i]].location] = 1.0;
      (*target.data)[i] = train[batch[i]].size_cm / datagen::kMaxBreakCm;
    }
    for (auto& p : head.params) p.zero_grad();
    Graph g;
    HeadNodes nodes = head_graph(g, g.leaf_detached(x), head);
    Graph::NodeId ce = g.scale(g.softmax_cross_entropy(nodes.logits, g.leaf_detached(onehot)),
                               1.0 / bs);
    Graph::NodeId rl = g.mse(nodes.reg, g.leaf_detached(target));
    Graph::NodeId loss = g.add(g.scale(ce, cfg.alpha), g.scale(rl, 1.0 - cfg.alpha));
    g.backward(loss);
    opt.step(ptrs);
  }
  return head;
}

struct Prediction {
  int location;
  double size_cm;
};

inline std::vector<Prediction> predict(DiagnosisHead& head,
                                       const std::vector<Sample>& samples) {
  std::vector<int> idx(samples.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  Tensor x = sample_matrix(samples, idx, head);
  Graph g;
  HeadNodes nodes = head_graph(g, g.leaf_detached(x), head, /*detach_params=*/true);
  const auto& logits = g.val(nodes.logits);
  const auto& reg = g.val(nodes.reg);
  std::vector<Prediction> out(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out[i].location = logits[i * 2] >= logits[i * 2 + 1] ? 0 : 1;
    out[i].size_cm = reg[i] * datagen::kMaxBreakCm;
  }
  return out;
}

// ---- evaluation report ----

struct EvalReport {
  double cold_precision = 0.0;
  double hot_precision = 0.0;
  double macro_f1 = 0.0;
  double rmse_cm = 0.0;
  Confusion confusion{{{0, 0}, {0, 0}}};
  std::string mode;  // "two_stage" | "end_to_end"
  double snr_db = 0.0;
  double mask_ratio = 0.0;
};

inline nlohmann::json report_json(const EvalReport& r) {
  return {{"cold_precision", r.cold_precision},
          {"hot_precision", r.hot_precision},
          {"macro_f1", r.macro_f1},
          {"rmse_cm", r.rmse_cm},
          {"confusion",
           {{r.confusion[0][0], r.confusion[0][1]}, {r.confusion[1][0], r.confusion[1][1]}}},
          {"mode", r.mode},
          {"corruption", {{"snr_db", r.snr_db}, {"mask_ratio", r.mask_ratio}}}};
}

inline EvalReport evaluate(const std::vector<Prediction>& preds,
                           const std::vector<Sample>& truth, const std::string& mode,
                           double snr_db, double mask_ratio) {
  EvalReport r;
  r.mode = mode;
  r.snr_db = snr_db;
  r.mask_ratio = mask_ratio;
  std::vector<double> psize, tsize;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    r.confusion[truth[i].location][preds[i].location]++;
    psize.push_back(preds[i].size_cm);
    tsize.push_back(truth[i].size_cm);
  }
  long pred_cold = r.confusion[0][0] + r.confusion[1][0];
  long pred_hot = r.confusion[0][1] + r.confusion[1][1];
  r.cold_precision = pred_cold > 0 ? static_cast<double>(r.confusion[0][0]) / pred_cold : 0.0;
  r.hot_precision = pred_hot > 0 ? static_cast<double>(r.confusion[1][1]) / pred_hot : 0.0;
  r.macro_f1 = macro_f1(r.confusion);
  r.rmse_cm = rmse(psize, tsize);
  return r;
}

// ---- simple baselines ----

// k-nearest-neighbour over the latent space; majority vote for location
// (ties resolve to the smaller class index), mean neighbour size for
// regression, Euclidean metric.
inline Prediction knn_predict(const std::vector<Sample>& train,
                              const std::vector<double>& query, int k) {
  if (k < 1 || k > static_cast<int>(train.size()))
    throw ParamError("knn: k out of range");
  std::vector<std::pair<double, int>> dist;
  dist.reserve(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    double d = 0.0;
    for (std::size_t j = 0; j < query.size(); ++j) {
      double diff = train[i].features[j] - query[j];
      d += diff * diff;
    }
    dist.push_back({d, static_cast<int>(i)});
  }
  std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
  int votes[2] = {0, 0};
  double size_sum = 0.0;
  for (int i = 0; i < k; ++i) {
    votes[train[dist[i].second].location]++;
    size_sum += train[dist[i].second].size_cm;
  }
  return {votes[1] > votes[0] ? 1 : 0, size_sum / k};
}

// End-to-end comparator: the same head shape trained on flattened corrupted
// raw windows instead of latents.
inline EvalReport end_to_end_baseline(const std::vector<Sample>& train,
                                      const std::vector<Sample>& test,
                                      const HeadConfig& cfg, double snr_db,
                                      double mask_ratio) {
  DiagnosisHead head = train_heads(train, cfg);
  return evaluate(predict(head, test), test, "end_to_end", snr_db, mask_ratio);
}

}  // namespace pae::diagnosis
