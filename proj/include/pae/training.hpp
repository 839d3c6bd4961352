#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pae/datagen.hpp"
#include "pae/errors.hpp"
#include "pae/model.hpp"
#include "pae/rng.hpp"
#include "pae/tensor.hpp"

namespace pae::training {

struct CurriculumStage {
  double snr_db;
  double mask_ratio;
};

// The curriculum schedule: SNR high-interference-to-low, then repeats of the
// interference level of focus.
inline std::vector<CurriculumStage> default_schedule() {
  return {{20.0, 0.40}, {30.0, 0.25}, {40.0, 0.10}, {35.0, 0.20}, {35.0, 0.20}};
}

struct NadamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double momentum_decay = 4e-3;  // psi
};

inline void to_json(nlohmann::json& j, const NadamConfig& c) {
  j = {{"lr", c.lr}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps},
       {"momentum_decay", c.momentum_decay}};
}
inline void from_json(const nlohmann::json& j, NadamConfig& c) {
  j.at("lr").get_to(c.lr);
  j.at("beta1").get_to(c.beta1);
  j.at("beta2").get_to(c.beta2);
  j.at("eps").get_to(c.eps);
  j.at("momentum_decay").get_to(c.momentum_decay);
}

// Adam with Nesterov momentum (Dozat variant): the momentum schedule is
// mu_t = beta1 * (1 - 0.5 * 0.96^(t * psi)) and the first-moment bias
// correction uses the running product of mu up to t (and t+1 for the
// look-ahead term).
class Nadam {
 public:
  explicit Nadam(NadamConfig cfg = {}) : cfg_(cfg) {}

  // One update over a fixed set of tensors; every tensor must have a
  // populated gradient buffer.
  void step(const std::vector<Tensor*>& params) {
    if (moments_.empty()) {
      moments_.resize(params.size());
      for (std::size_t k = 0; k < params.size(); ++k) {
        moments_[k].m.assign(params[k]->size(), 0.0);
        moments_[k].v.assign(params[k]->size(), 0.0);
      }
    }
    if (moments_.size() != params.size())
      throw ContractError("nadam_step: parameter set changed between steps");
    for (auto* p : params)
      if (!p->grad) throw ContractError("nadam_step: gradient not populated");

    ++t_;
    double mu_t = mu(t_);
    double mu_next = mu(t_ + 1);
    mu_prod_ *= mu_t;
    double mu_prod_next = mu_prod_ * mu_next;
    double v_corr = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));

    for (std::size_t k = 0; k < params.size(); ++k) {
      Tensor& p = *params[k];
      auto& m = moments_[k].m;
      auto& v = moments_[k].v;
      const auto& g = *p.grad;
      auto& theta = *p.data;
      for (std::size_t i = 0; i < theta.size(); ++i) {
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        double m_hat = mu_next * m[i] / (1.0 - mu_prod_next) +
                       (1.0 - mu_t) * g[i] / (1.0 - mu_prod_);
        double v_hat = v[i] / v_corr;
        theta[i] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
      }
    }
  }

  void step(model::ModelParams& params) {
    std::vector<Tensor*> ptrs;
    ptrs.reserve(params.order.size());
    for (const auto& name : params.order) ptrs.push_back(&params.get(name));
    step(ptrs);
  }

  long t() const { return t_; }

 private:
  double mu(long t) const {
    return cfg_.beta1 * (1.0 - 0.5 * std::pow(0.96, static_cast<double>(t) *
                                                        cfg_.momentum_decay));
  }

  struct Moments {
    std::vector<double> m, v;
  };
  NadamConfig cfg_;
  std::vector<Moments> moments_;
  long t_ = 0;
  double mu_prod_ = 1.0;
};

struct LogEntry {
  long step;
  int epoch;
  int stage;
  double snr_db;
  double mask_ratio;
  double loss;
};

struct TrainLog {
  std::vector<LogEntry> entries;

  void write_csv(const std::filesystem::path& path) const {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write train log " + path.string());
    f << "step,epoch,stage,snr_db,mask_ratio,loss\n";
    char buf[64];
    for (const auto& e : entries) {
      std::snprintf(buf, sizeof(buf), "%.17g", e.loss);
      f << e.step << "," << e.epoch << "," << e.stage << "," << e.snr_db << ","
        << e.mask_ratio << "," << buf << "\n";
    }
  }
};

struct TrainConfig {
  std::string dataset_dir;
  model::ModelConfig model;
  NadamConfig optimizer;
  std::vector<CurriculumStage> schedule = default_schedule();
  int batch_size = 16;
  long max_steps = 1000;
  std::string stop_unit = "step";  // "step" | "epoch"
  long checkpoint_every = 250;
  std::uint64_t seed = 7;
  std::string out_dir;

  void validate() const {
    model.validate();
    if (schedule.empty()) throw ParamError("schedule must not be empty");
    if (batch_size < 1) throw ParamError("batch_size must be >= 1");
    if (max_steps < 1) throw ParamError("max_steps must be >= 1");
    if (stop_unit != "step" && stop_unit != "epoch")
      throw ParamError("stop_unit must be 'step' or 'epoch'");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  auto sched = nlohmann::json::array();
  for (const auto& s : c.schedule) sched.push_back({s.snr_db, s.mask_ratio});
  j = {{"dataset_dir", c.dataset_dir}, {"model", c.model}, {"optimizer", c.optimizer},
       {"schedule", sched},           {"batch_size", c.batch_size},
       {"max_steps", c.max_steps},    {"stop_unit", c.stop_unit},
       {"checkpoint_every", c.checkpoint_every}, {"seed", c.seed},
       {"out_dir", c.out_dir}};
}
inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  j.at("dataset_dir").get_to(c.dataset_dir);
  if (j.count("model")) j.at("model").get_to(c.model);
  if (j.count("optimizer")) j.at("optimizer").get_to(c.optimizer);
  if (j.count("schedule")) {
    c.schedule.clear();
    for (const auto& s : j.at("schedule"))
      c.schedule.push_back({s.at(0).get<double>(), s.at(1).get<double>()});
  }
  if (j.count("batch_size")) j.at("batch_size").get_to(c.batch_size);
  if (j.count("max_steps")) j.at("max_steps").get_to(c.max_steps);
  if (j.count("stop_unit")) j.at("stop_unit").get_to(c.stop_unit);
  if (j.count("checkpoint_every")) j.at("checkpoint_every").get_to(c.checkpoint_every);
  if (j.count("seed")) j.at("seed").get_to(c.seed);
  if (j.count("out_dir")) j.at("out_dir").get_to(c.out_dir);
}

struct EpochState {
  long step = 0;
  int epoch = 0;
};

// One curriculum epoch: for each stage in order, every training batch gets
// fresh corruption draws from the seeded stream, Eq.-style reconstruction MSE,
// backward, one optimizer update. Honors max_steps when stop_unit == "step".
inline void run_epoch(const std::vector<Tensor>& train_norm,
                      const std::vector<CurriculumStage>& schedule, int batch_size,
                      model::ModelParams& params, const model::ModelConfig& cfg,
                      Nadam& opt, Rng& rng, TrainLog& log, EpochState& st,
                      long max_steps, bool stop_on_steps) {
  if (schedule.empty()) throw ContractError("run_epoch: empty schedule");
  if (train_norm.empty()) throw ContractError("run_epoch: empty train split");
  std::vector<int> order(train_norm.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.below(i)]);

  for (std::size_t s = 0; s < schedule.size(); ++s) {
    const auto& stage = schedule[s];
    for (std::size_t b0 = 0; b0 < order.size(); b0 += batch_size) {
      std::size_t b1 = std::min(b0 + batch_size, order.size());
      params.zero_grad();
      double batch_loss = 0.0;
      double inv = 1.0 / static_cast<double>(b1 - b0);
      for (std::size_t i = b0; i < b1; ++i) {
        corruption::CorruptionSpec spec{stage.snr_db, stage.mask_ratio, rng.engine()()};
        auto res = model::reconstruct(train_norm[order[i]], spec, params, cfg,
                                      /*training=*/true, rng);
        batch_loss += res.graph->val(res.loss)[0] * inv;
        res.graph->backward(res.loss, inv);
      }
      opt.step(params);
      ++st.step;
      log.entries.push_back({st.step, st.epoch, static_cast<int>(s), stage.snr_db,
                             stage.mask_ratio, batch_loss});
      if (stop_on_steps && st.step >= max_steps) return;
    }
  }
}

struct TrainResult {
  model::ModelParams params;
  TrainLog log;
  std::vector<std::filesystem::path> checkpoints;
};

inline TrainResult train(const TrainConfig& config, const datagen::Dataset& dataset) {
  config.validate();
  namespace fs = std::filesystem;
  fs::path out = config.out_dir.empty() ? fs::path(".") : fs::path(config.out_dir);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create " + out.string() + ": " + ec.message());

  std::vector<Tensor> train_norm;
  for (const auto& tr : dataset.transients)
    if (tr.split == "train")
      train_norm.push_back(datagen::normalize(tr.channels, dataset.channel_stats));
  if (train_norm.empty()) throw ContractError("train: dataset has no train split");

  TrainResult result;
  result.params = model::init_params(config.model, mix_seed(config.seed, 0x11));
  Nadam opt(config.optimizer);
  Rng rng(mix_seed(config.seed, 0x22));
  EpochState st;
  bool stop_on_steps = config.stop_unit == "step";
  long last_ckpt = -1;

  while (true) {
    ++st.epoch;
    run_epoch(train_norm, config.schedule, config.batch_size, result.params, config.model,
              opt, rng, result.log, st, config.max_steps, stop_on_steps);
    if (config.checkpoint_every > 0 && st.step / config.checkpoint_every > last_ckpt) {
      last_ckpt = st.step / config.checkpoint_every;
      fs::path p = out / ("checkpoint_" + std::to_string(st.step) + ".ckpt");
      model::save_checkpoint(result.params, config.model, p);
      result.checkpoints.push_back(p);
    }
    if (stop_on_steps ? st.step >= config.max_steps : st.epoch >= config.max_steps) break;
  }
  fs::path final_path = out / "checkpoint.ckpt";
  model::save_checkpoint(result.params, config.model, final_path);
  result.checkpoints.push_back(final_path);
  result.log.write_csv(out / "train_log.csv");
  return result;
}

}  // namespace pae::training
