#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "pae/errors.hpp"
#include "pae/rng.hpp"
#include "pae/tensor.hpp"

namespace pae::datagen {

inline constexpr int kChannels = 38;
inline constexpr int kSamples = 200;       // 100 s at 2 Hz
inline constexpr double kSamplePeriod = 0.5;
inline constexpr double kMinBreakCm = 0.1;
inline constexpr double kMaxBreakCm = 35.5;
inline constexpr double kNoDelay = std::numeric_limits<double>::infinity();

enum class BreakLocation { ColdLeg, HotLeg };

inline std::string location_str(BreakLocation loc) {
  return loc == BreakLocation::ColdLeg ? "cold_leg" : "hot_leg";
}
inline BreakLocation location_from_str(const std::string& s) {
  if (s == "cold_leg") return BreakLocation::ColdLeg;
  if (s == "hot_leg") return BreakLocation::HotLeg;
  throw ParamError("unknown break location: " + s);
}

// Surrogate response template for one monitoring channel. A break drives the
// channel away from its baseline along a saturating exponential whose time
// constant shrinks with break size. delay == kNoDelay means the channel does
// not respond to a break at that location.
struct ChannelTemplate {
  std::string name;
  double baseline;
  double amplitude_cold;
  double amplitude_hot;
  double delay_cold;     // seconds
  double delay_hot;      // seconds
  double time_constant_ref;  // seconds, for the largest break
  double noise_floor;    // absolute std of intrinsic simulator noise
};

// Fixed, versioned surrogate plant table (schema v1). Amplitude/delay pairs
// are chosen so break location is recoverable: cold- and hot-leg responses
// differ on well over 10 channels, including several one-sided channels.
inline const std::vector<ChannelTemplate>& channel_templates() {
  static const std::vector<ChannelTemplate> table = {
      {"pzr_pressure_mpa",        15.5,  -9.0,  -8.2,   0.5,  1.0,  9.0, 0.020},
      {"pzr_level_pct",           55.0, -38.0, -33.0,   1.0,  1.5, 11.0, 0.060},
      {"pzr_temp_c",             345.0, -52.0, -47.0,   2.0,  3.0, 14.0, 0.090},
      {"cold_leg_temp_c",        293.0, -48.0, -16.0,   0.5,  4.0,  8.0, 0.080},
      {"hot_leg_temp_c",         327.0, -18.0, -46.0,   4.0,  0.5,  8.0, 0.080},
      {"core_outlet_temp_c",     330.0, -24.0, -42.0,   3.0,  1.0, 10.0, 0.080},
      {"core_inlet_temp_c",      292.0, -44.0, -20.0,   1.0,  3.5, 10.0, 0.080},
      {"avg_coolant_temp_c",     310.0, -33.0, -31.0,   1.5,  1.5,  9.0, 0.070},
      {"pv_water_level_pct",     100.0, -55.0, -47.0,   2.5,  2.0, 16.0, 0.090},
      {"hot_leg_level_pct",      100.0, -30.0, -62.0,   5.0,  1.0, 13.0, 0.090},
      {"cold_leg_flow_kgps",    4700.0, -2100., -850.,  0.5,  2.5,  7.0, 7.000},
      {"hot_leg_flow_kgps",     4700.0, -900., -2050.,  2.5,  0.5,  7.0, 7.000},
      {"rcp_dp_mpa",               0.6,  -0.34, -0.27,  1.0,  1.5,  9.0, 0.0012},
      {"rcp_speed_rpm",         1485.0, -60.0, -45.0,   6.0,  7.0, 20.0, 0.900},
      {"sg_pressure_mpa",          6.7,  -1.9,  -2.6,   3.0,  2.0, 15.0, 0.008},
      {"sg_narrow_level_pct",     50.0,  16.0,  24.0,   4.0,  2.5, 17.0, 0.070},
      {"sg_wide_level_pct",       62.0,  11.0,  17.0,   5.0,  3.0, 19.0, 0.060},
      {"sg_feed_flow_kgps",      510.0, -150., -190.,   4.0,  3.0, 13.0, 0.800},
      {"sg_steam_flow_kgps",     510.0, -210., -260.,   2.5,  1.5, 11.0, 0.800},
      {"sg_steam_temp_c",        283.0, -14.0, -19.0,   4.0,  2.5, 16.0, 0.050},
      {"containment_press_kpa",  101.0,  88.0,  76.0,   0.5,  0.5,  6.0, 0.200},
      {"containment_temp_c",      35.0,  46.0,  40.0,   1.0,  1.0,  8.0, 0.110},
      {"containment_humid_pct",   40.0,  52.0,  47.0,   1.5,  1.5,  9.0, 0.120},
      {"sump_level_m",             0.0,   2.6,   2.2,   3.0,  4.0, 12.0, 0.006},
      {"break_flow_cold_kgps",     0.0, 1450.,   0.0,   0.0, kNoDelay, 5.0, 2.500},
      {"break_flow_hot_kgps",      0.0,   0.0, 1380.,  kNoDelay, 0.0, 5.0, 2.500},
      {"si_flow_cold_kgps",        0.0, 310.0,   0.0,   2.0, kNoDelay, 10.0, 0.700},
      {"si_flow_hot_kgps",         0.0,   0.0, 290.0,  kNoDelay, 2.0, 10.0, 0.700},
      {"accumulator_level_cold", 100.0, -72.0,   0.0,   6.0, kNoDelay, 14.0, 0.150},
      {"accumulator_level_hot",  100.0,   0.0, -66.0,  kNoDelay, 6.0, 14.0, 0.150},
      {"charging_flow_kgps",      13.0,  24.0,  21.0,   1.0,  2.0,  9.0, 0.060},
      {"letdown_flow_kgps",       13.0, -12.5, -12.5,   1.0,  1.0,  8.0, 0.040},
      {"neutron_flux_pct",       100.0, -97.0, -96.0,   1.5,  1.0,  4.0, 0.220},
      {"fuel_clad_temp_c",       348.0, -36.0, -52.0,   2.0,  1.0, 12.0, 0.120},
      {"subcooling_margin_c",     28.0, -26.0, -23.0,   1.0,  1.5,  7.0, 0.070},
      {"dnbr_margin",              2.1,  -0.9,  -1.2,   1.5,  1.0,  8.0, 0.004},
      {"rwst_level_pct",          96.0, -15.0, -13.0,   4.0,  5.0, 18.0, 0.050},
      {"loop_dp_kpa",            640.0, -290., -240.,   0.5,  1.0,  7.0, 0.900},
  };
  return table;
}

struct Transient {
  std::string id;
  Tensor channels;  // [38 x 200]
  BreakLocation break_location;
  double break_size_cm;
  std::string split;  // "train" | "test"
};

struct ChannelStats {
  std::vector<double> mean;  // per channel
  std::vector<double> std;   // per channel, floored at 1e-8
};

struct Dataset {
  std::vector<Transient> transients;
  ChannelStats channel_stats;  // over the train split only
  std::uint64_t seed = 0;
};

// Saturating-exponential step response; zero before the delay.
inline double response_g(double t, double tau) {
  if (!(t > 0.0)) return 0.0;  // also covers t - inf == -inf
  return 1.0 - std::exp(-t / tau);
}

inline double break_time_constant(double tau_ref, double size_cm) {
  return tau_ref * (kMaxBreakCm / size_cm);
}

// Deterministic noise-free channel value; used by tests for the monotonicity
// property and by generate_transient.
inline double channel_response(const ChannelTemplate& tmpl, BreakLocation loc,
                               double size_cm, double t) {
  double amp = loc == BreakLocation::ColdLeg ? tmpl.amplitude_cold : tmpl.amplitude_hot;
  double delay = loc == BreakLocation::ColdLeg ? tmpl.delay_cold : tmpl.delay_hot;
  if (std::isinf(delay)) return tmpl.baseline;
  double tau = break_time_constant(tmpl.time_constant_ref, size_cm);
  return tmpl.baseline + amp * response_g(t - delay, tau);
}

inline Transient generate_transient(BreakLocation loc, double size_cm, std::uint64_t seed,
                                    const std::vector<ChannelTemplate>& templates =
                                        channel_templates()) {
  if (!(size_cm >= kMinBreakCm && size_cm <= kMaxBreakCm))
    throw ParamError("break size " + std::to_string(size_cm) + " cm outside [" +
                     std::to_string(kMinBreakCm) + ", " + std::to_string(kMaxBreakCm) + "]");
  if (static_cast<int>(templates.size()) != kChannels)
    throw ParamError("template table must have 38 channels");
  Transient tr;
  tr.channels = Tensor::zeros({kChannels, kSamples});
  tr.break_location = loc;
  tr.break_size_cm = size_cm;
  Rng rng(seed);
  for (int i = 0; i < kChannels; ++i) {
    const auto& tmpl = templates[i];
    for (int n = 0; n < kSamples; ++n) {
      double t = n * kSamplePeriod;
      double v = channel_response(tmpl, loc, size_cm, t) + tmpl.noise_floor * rng.normal();
      (*tr.channels.data)[static_cast<std::size_t>(i) * kSamples + n] = v;
    }
  }
  return tr;
}

inline ChannelStats compute_channel_stats(const std::vector<Transient>& transients) {
  ChannelStats stats;
  stats.mean.assign(kChannels, 0.0);
  stats.std.assign(kChannels, 0.0);
  std::size_t count = 0;
  for (const auto& tr : transients) {
    if (tr.split != "train") continue;
    ++count;
    for (int i = 0; i < kChannels; ++i)
      for (int n = 0; n < kSamples; ++n)
        stats.mean[i] += (*tr.channels.data)[static_cast<std::size_t>(i) * kSamples + n];
  }
  if (count == 0) throw ContractError("channel stats need a non-empty train split");
  double denom = static_cast<double>(count) * kSamples;
  for (int i = 0; i < kChannels; ++i) stats.mean[i] /= denom;
  for (const auto& tr : transients) {
    if (tr.split != "train") continue;
    for (int i = 0; i < kChannels; ++i)
      for (int n = 0; n < kSamples; ++n) {
        double d = (*tr.channels.data)[static_cast<std::size_t>(i) * kSamples + n] -
                   stats.mean[i];
        stats.std[i] += d * d;
      }
  }
  for (int i = 0; i < kChannels; ++i)
    stats.std[i] = std::max(std::sqrt(stats.std[i] / denom), 1e-8);
  return stats;
}

inline Dataset generate_dataset(int count, std::uint64_t seed) {
  if (count < 10) throw ParamError("dataset needs at least 10 transients");
  Dataset ds;
  ds.seed = seed;
  Rng size_rng(mix_seed(seed, 0x5a3e));
  double lo = std::log(kMinBreakCm), hi = std::log(kMaxBreakCm);
  for (int i = 0; i < count; ++i) {
    BreakLocation loc = (i % 2 == 0) ? BreakLocation::ColdLeg : BreakLocation::HotLeg;
    double size = std::exp(size_rng.uniform(lo, hi));
    size = std::clamp(size, kMinBreakCm, kMaxBreakCm);
    Transient tr = generate_transient(loc, size, mix_seed(seed, 1000 + i));
    char buf[16];
    std::snprintf(buf, sizeof(buf), "t%04d", i);
    tr.id = buf;
    tr.split = "train";
    ds.transients.push_back(std::move(tr));
  }
  // stratified 80/20 split per location
  Rng split_rng(mix_seed(seed, 0x517));
  for (BreakLocation loc : {BreakLocation::ColdLeg, BreakLocation::HotLeg}) {
    std::vector<int> idx;
    for (int i = 0; i < count; ++i)
      if (ds.transients[i].break_location == loc) idx.push_back(i);
    for (std::size_t i = idx.size(); i > 1; --i)
      std::swap(idx[i - 1], idx[split_rng.below(i)]);
    std::size_t n_test = static_cast<std::size_t>(std::llround(0.2 * idx.size()));
    for (std::size_t i = 0; i < n_test; ++i) ds.transients[idx[i]].split = "test";
  }
  ds.channel_stats = compute_channel_stats(ds.transients);
  return ds;
}

// Per-channel z-score with training-split stats.
inline Tensor normalize(const Tensor& channels, const ChannelStats& stats) {
  Tensor out = Tensor::zeros(channels.shape);
  int rows = channels.rows(), cols = channels.cols();
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      (*out.data)[static_cast<std::size_t>(i) * cols + j] =
          ((*channels.data)[static_cast<std::size_t>(i) * cols + j] - stats.mean[i]) /
          stats.std[i];
  return out;
}

inline Tensor denormalize(const Tensor& z, const ChannelStats& stats) {
  Tensor out = Tensor::zeros(z.shape);
  int rows = z.rows(), cols = z.cols();
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      (*out.data)[static_cast<std::size_t>(i) * cols + j] =
          (*z.data)[static_cast<std::size_t>(i) * cols + j] * stats.std[i] + stats.mean[i];
  return out;
}

// ---- dataset directory layout ----
// manifest.json + one CSV per transient (200 rows x 38 columns, header row of
// channel names, values printed with 9 significant digits).

inline void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  nlohmann::json manifest;
  manifest["schema_version"] = 1;
  manifest["seed"] = ds.seed;
  manifest["count"] = ds.transients.size();
  manifest["channel_stats"] = {{"mean", ds.channel_stats.mean},
                               {"std", ds.channel_stats.std}};
  auto records = nlohmann::json::array();

  const auto& templates = channel_templates();
  for (const auto& tr : ds.transients) {
    std::string fname = tr.id + ".csv";
    std::ofstream f(dir / fname);
    if (!f) throw IoError("cannot write " + (dir / fname).string());
    for (int i = 0; i < kChannels; ++i) f << (i ? "," : "") << templates[i].name;
    f << "\n";
    char buf[32];
    for (int n = 0; n < kSamples; ++n) {
      for (int i = 0; i < kChannels; ++i) {
        std::snprintf(buf, sizeof(buf), "%.9g",
                      (*tr.channels.data)[static_cast<std::size_t>(i) * kSamples + n]);
        f << (i ? "," : "") << buf;
      }
      f << "\n";
    }
    records.push_back({{"id", tr.id},
                       {"break_location", location_str(tr.break_location)},
                       {"break_size_cm", tr.break_size_cm},
                       {"split", tr.split},
                       {"file", fname}});
  }
  manifest["transients"] = records;
  std::ofstream mf(dir / "manifest.json");
  if (!mf) throw IoError("cannot write " + (dir / "manifest.json").string());
  mf << manifest.dump(2) << "\n";
}

inline Dataset read_dataset(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw IoError("cannot read " + (dir / "manifest.json").string());
  nlohmann::json manifest = nlohmann::json::parse(mf);
  Dataset ds;
  ds.seed = manifest.at("seed").get<std::uint64_t>();
  ds.channel_stats.mean = manifest.at("channel_stats").at("mean").get<std::vector<double>>();
  ds.channel_stats.std = manifest.at("channel_stats").at("std").get<std::vector<double>>();
  for (const auto& rec : manifest.at("transients")) {
    Transient tr;
    tr.id = rec.at("id").get<std::string>();
    tr.break_location = location_from_str(rec.at("break_location").get<std::string>());
    tr.break_size_cm = rec.at("break_size_cm").get<double>();
    tr.split = rec.at("split").get<std::string>();
    std::ifstream f(dir / rec.at("file").get<std::string>());
    if (!f) throw IoError("cannot read " + (dir / rec.at("file").get<std::string>()).string());
    tr.channels = Tensor::zeros({kChannels, kSamples});
    std::string line;
    std::getline(f, line);  // header
    for (int n = 0; n < kSamples; ++n) {
      if (!std::getline(f, line))
        throw IoError("truncated transient file for " + tr.id);
      std::size_t pos = 0;
      for (int i = 0; i < kChannels; ++i) {
        std::size_t next = line.find(',', pos);
        (*tr.channels.data)[static_cast<std::size_t>(i) * kSamples + n] =
            std::stod(line.substr(pos, next - pos));
        pos = next == std::string::npos ? line.size() : next + 1;
      }
    }
    ds.transients.push_back(std::move(tr));
  }
  return ds;
}

}  // namespace pae::datagen
