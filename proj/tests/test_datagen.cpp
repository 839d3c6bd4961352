#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "pae/datagen.hpp"

using namespace pae;
using namespace pae::datagen;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("pae_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("generate_transient is deterministic") {
  Transient a = generate_transient(BreakLocation::ColdLeg, 5.0, 42);
  Transient b = generate_transient(BreakLocation::ColdLeg, 5.0, 42);
  REQUIRE(*a.channels.data == *b.channels.data);
  Transient c = generate_transient(BreakLocation::ColdLeg, 5.0, 43);
  REQUIRE(*a.channels.data != *c.channels.data);
}

TEST_CASE("transient shape and finiteness") {
  Transient tr = generate_transient(BreakLocation::HotLeg, 0.1, 1);
  REQUIRE(tr.channels.rows() == 38);
  REQUIRE(tr.channels.cols() == 200);
  REQUIRE(tr.channels.finite());
}

TEST_CASE("break size out of range rejected") {
  REQUIRE_THROWS_AS(generate_transient(BreakLocation::ColdLeg, 0.05, 1), ParamError);
  REQUIRE_THROWS_AS(generate_transient(BreakLocation::ColdLeg, 36.0, 1), ParamError);
  REQUIRE_NOTHROW(generate_transient(BreakLocation::ColdLeg, 0.1, 1));
  REQUIRE_NOTHROW(generate_transient(BreakLocation::ColdLeg, 35.5, 1));
}

TEST_CASE("larger break deviates faster on negative-amplitude channel") {
  // noise-free comparison via channel_response at t = 50 s
  const auto& tmpl = channel_templates()[0];  // pzr_pressure_mpa, amplitude < 0
  REQUIRE(tmpl.amplitude_cold < 0.0);
  double small = channel_response(tmpl, BreakLocation::ColdLeg, 0.1, 50.0);
  double large = channel_response(tmpl, BreakLocation::ColdLeg, 35.5, 50.0);
  REQUIRE(large < small);
}

TEST_CASE("deviation magnitude non-decreasing in break size on a grid") {
  std::vector<double> sizes = {0.1, 0.5, 2.0, 8.0, 20.0, 35.5};
  std::vector<double> times = {2.0, 10.0, 30.0, 60.0, 99.5};
  for (const auto& tmpl : channel_templates())
    for (BreakLocation loc : {BreakLocation::ColdLeg, BreakLocation::HotLeg})
      for (double t : times) {
        double prev = -1.0;
        for (double s : sizes) {
          double dev = std::fabs(channel_response(tmpl, loc, s, t) - tmpl.baseline);
          REQUIRE(dev >= prev - 1e-12);
          prev = dev;
        }
      }
}

TEST_CASE("infinite delay sentinel keeps channel at baseline plus noise") {
  int idx = -1;
  const auto& templates = channel_templates();
  for (int i = 0; i < kChannels; ++i)
    if (std::isinf(templates[i].delay_hot)) { idx = i; break; }
  REQUIRE(idx >= 0);
  Transient tr = generate_transient(BreakLocation::HotLeg, 10.0, 9);
  const auto& tmpl = templates[idx];
  for (int n = 0; n < kSamples; ++n) {
    double v = (*tr.channels.data)[static_cast<std::size_t>(idx) * kSamples + n];
    REQUIRE(std::fabs(v - tmpl.baseline) < 8.0 * tmpl.noise_floor);
  }
}

TEST_CASE("template table supports location recovery") {
  const auto& templates = channel_templates();
  REQUIRE(static_cast<int>(templates.size()) == 38);
  int distinct = 0;
  std::set<std::string> names;
  for (const auto& t : templates) {
    names.insert(t.name);
    REQUIRE(t.time_constant_ref > 0.0);
    if (t.amplitude_cold != t.amplitude_hot || t.delay_cold != t.delay_hot) ++distinct;
  }
  REQUIRE(names.size() == 38);
  REQUIRE(distinct >= 10);
}

TEST_CASE("generate_dataset count, balance, and size range") {
  Dataset ds = generate_dataset(346, 7);
  REQUIRE(ds.transients.size() == 346);
  int cold = 0, hot = 0;
  for (const auto& tr : ds.transients) {
    (tr.break_location == BreakLocation::ColdLeg ? cold : hot) += 1;
    REQUIRE(tr.break_size_cm >= kMinBreakCm);
    REQUIRE(tr.break_size_cm <= kMaxBreakCm);
  }
  REQUIRE(std::abs(cold - hot) <= 1);
}

TEST_CASE("dataset generation is deterministic") {
  Dataset a = generate_dataset(40, 11);
  Dataset b = generate_dataset(40, 11);
  REQUIRE(a.transients.size() == b.transients.size());
  for (std::size_t i = 0; i < a.transients.size(); ++i) {
    REQUIRE(a.transients[i].id == b.transients[i].id);
    REQUIRE(a.transients[i].split == b.transients[i].split);
    REQUIRE(a.transients[i].break_size_cm == b.transients[i].break_size_cm);
    REQUIRE(*a.transients[i].channels.data == *b.transients[i].channels.data);
  }
  REQUIRE(a.channel_stats.mean == b.channel_stats.mean);
  REQUIRE(a.channel_stats.std == b.channel_stats.std);
}

TEST_CASE("split is stratified 80/20 per location") {
  Dataset ds = generate_dataset(346, 7);
  for (BreakLocation loc : {BreakLocation::ColdLeg, BreakLocation::HotLeg}) {
    long total = 0, test = 0;
    for (const auto& tr : ds.transients)
      if (tr.break_location == loc) {
        ++total;
        if (tr.split == "test") ++test;
      }
    REQUIRE(std::abs(test - std::llround(0.2 * total)) <= 1);
  }
}

TEST_CASE("dataset too small rejected") {
  REQUIRE_THROWS_AS(generate_dataset(5, 1), ParamError);
}

TEST_CASE("train channels are near zero mean after normalization") {
  Dataset ds = generate_dataset(60, 3);
  std::vector<double> sums(kChannels, 0.0);
  long count = 0;
  for (const auto& tr : ds.transients) {
    if (tr.split != "train") continue;
    ++count;
    Tensor z = normalize(tr.channels, ds.channel_stats);
    for (int i = 0; i < kChannels; ++i)
      for (int n = 0; n < kSamples; ++n)
        sums[i] += (*z.data)[static_cast<std::size_t>(i) * kSamples + n];
  }
  REQUIRE(count > 0);
  for (int i = 0; i < kChannels; ++i)
    REQUIRE(std::fabs(sums[i] / (count * kSamples)) < 0.05);
}

TEST_CASE("denormalize inverts normalize") {
  Dataset ds = generate_dataset(20, 5);
  const Tensor& x = ds.transients[0].channels;
  Tensor back = denormalize(normalize(x, ds.channel_stats), ds.channel_stats);
  for (std::size_t k = 0; k < x.data->size(); ++k)
    REQUIRE(std::fabs((*back.data)[k] - (*x.data)[k]) <
            1e-10 * std::max(1.0, std::fabs((*x.data)[k])));
}

TEST_CASE("constant channel normalizes to zeros") {
  ChannelStats stats;
  stats.mean.assign(kChannels, 3.0);
  stats.std.assign(kChannels, 1e-8);
  Tensor x = Tensor::full({kChannels, kSamples}, 3.0);
  Tensor z = normalize(x, stats);
  for (double v : *z.data) REQUIRE(v == 0.0);
}

TEST_CASE("channel stats use the train split only") {
  Dataset ds = generate_dataset(30, 13);
  std::vector<Transient> train_only;
  for (const auto& tr : ds.transients)
    if (tr.split == "train") train_only.push_back(tr);
  ChannelStats again = compute_channel_stats(train_only);
  REQUIRE(again.mean == ds.channel_stats.mean);
  REQUIRE(again.std == ds.channel_stats.std);
  for (auto& tr : train_only) tr.split = "test";
  REQUIRE_THROWS_AS(compute_channel_stats(train_only), ContractError);
}

TEST_CASE("dataset roundtrips through the directory format") {
  Dataset ds = generate_dataset(12, 21);
  fs::path dir = temp_dir("datagen_rt");
  write_dataset(ds, dir);
  Dataset rd = read_dataset(dir);
  REQUIRE(rd.seed == ds.seed);
  REQUIRE(rd.transients.size() == ds.transients.size());
  REQUIRE(rd.channel_stats.mean == ds.channel_stats.mean);
  for (std::size_t i = 0; i < ds.transients.size(); ++i) {
    const auto& a = ds.transients[i];
    const auto& b = rd.transients[i];
    REQUIRE(a.id == b.id);
    REQUIRE(a.split == b.split);
    REQUIRE(a.break_location == b.break_location);
    REQUIRE(a.break_size_cm == b.break_size_cm);
    for (std::size_t k = 0; k < a.channels.data->size(); ++k) {
      double av = (*a.channels.data)[k], bv = (*b.channels.data)[k];
      REQUIRE(std::fabs(av - bv) <= 1e-8 * std::max(1.0, std::fabs(av)));
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("dataset files are byte-identical across writes") {
  Dataset ds = generate_dataset(10, 31);
  fs::path d1 = temp_dir("datagen_b1");
  fs::path d2 = temp_dir("datagen_b2");
  write_dataset(ds, d1);
  write_dataset(ds, d2);
  for (const auto& entry : fs::directory_iterator(d1)) {
    fs::path name = entry.path().filename();
    REQUIRE(slurp(d1 / name) == slurp(d2 / name));
  }
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("transient CSV has header and 200 data rows") {
  Dataset ds = generate_dataset(10, 8);
  fs::path dir = temp_dir("datagen_csv");
  write_dataset(ds, dir);
  std::ifstream f(dir / (ds.transients[0].id + ".csv"));
  std::string header;
  REQUIRE(std::getline(f, header));
  REQUIRE(header.rfind(channel_templates()[0].name + ",", 0) == 0);
  int rows = 0;
  std::string line;
  while (std::getline(f, line))
    if (!line.empty()) ++rows;
  REQUIRE(rows == 200);
  fs::remove_all(dir);
}

TEST_CASE("reading a missing dataset reports an io error") {
  REQUIRE_THROWS_AS(read_dataset(fs::temp_directory_path() / "pae_no_such_dir"), IoError);
}
