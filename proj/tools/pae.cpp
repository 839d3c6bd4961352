// pae: command-line driver for dataset generation, autoencoder training,
// latent extraction, break diagnosis, and t-SNE export.
//
// Exit codes: 0 ok, 2 usage/config error, 3 I/O failure, 4 state mismatch
// (e.g. checkpoint incompatible with the dataset).

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pae/corruption.hpp"
#include "pae/datagen.hpp"
#include "pae/diagnosis.hpp"
#include "pae/errors.hpp"
#include "pae/manifold.hpp"
#include "pae/model.hpp"
#include "pae/rng.hpp"
#include "pae/tensor.hpp"
#include "pae/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pae;

namespace {

constexpr const char* kVersion = "pae 1.0.0";

struct MismatchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string timestamp_utc() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Collects the run record and writes it atomically (tmp file + rename) once
// the command has produced all its outputs.
class RunManifest {
 public:
  RunManifest(std::string command, json config, json seeds)
      : command_(std::move(command)) {
    j_["command"] = command_;
    j_["config"] = std::move(config);
    j_["seeds"] = std::move(seeds);
    j_["version"] = kVersion;
    j_["start"] = timestamp_utc();
  }

  void add_output(const fs::path& p) { outputs_.push_back(p.string()); }

  void write(const fs::path& dir) {
    j_["end"] = timestamp_utc();
    j_["outputs"] = outputs_;
    for (const auto& o : outputs_)
      if (!fs::exists(o)) throw IoError("manifest lists missing output " + o);
    fs::path final_path = dir / ("run_manifest_" + command_ + ".json");
    fs::path tmp = final_path;
    tmp += ".tmp";
    {
      std::ofstream f(tmp);
      if (!f) throw IoError("cannot write " + tmp.string());
      f << j_.dump(2) << "\n";
    }
    fs::rename(tmp, final_path);
  }

 private:
  std::string command_;
  json j_;
  std::vector<std::string> outputs_;
};

struct CorruptedWindow {
  Tensor window;  // [38 x 200], masked patch spans zeroed
  std::vector<char> mask;
};

// Noise first, then patch masking, mirroring the training-time pipeline.
CorruptedWindow corrupt_window(const Tensor& norm, double snr_db, double mask_ratio,
                               std::uint64_t seed, const model::ModelConfig& cfg) {
  Rng rng(seed);
  Tensor noisy = corruption::add_noise(norm, snr_db, rng);
  auto [xp, mask] = corruption::mask_patches(model::patchify(noisy, cfg), mask_ratio, rng);
  return {model::depatchify(xp, cfg), std::move(mask)};
}

void require_dataset_compatible(const model::ModelConfig& cfg) {
  if (cfg.channels != datagen::kChannels || cfg.samples != datagen::kSamples)
    throw MismatchError("checkpoint model is " + std::to_string(cfg.channels) + "x" +
                        std::to_string(cfg.samples) + " but the dataset is " +
                        std::to_string(datagen::kChannels) + "x" +
                        std::to_string(datagen::kSamples));
}

// ---- latents CSV (id, z0..z{L-1}, break_location, break_size_cm) ----

struct LatentRow {
  std::string id;
  std::vector<double> z;
  std::string location;
  double size_cm;
};

void write_latents_csv(const fs::path& path, const std::vector<LatentRow>& rows) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << "id";
  if (!rows.empty())
    for (std::size_t k = 0; k < rows[0].z.size(); ++k) f << ",z" << k;
  f << ",break_location,break_size_cm\n";
  char buf[32];
  for (const auto& r : rows) {
    f << r.id;
    for (double v : r.z) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      f << "," << buf;
    }
    std::snprintf(buf, sizeof(buf), "%.9g", r.size_cm);
    f << "," << r.location << "," << buf << "\n";
  }
}

std::vector<LatentRow> read_latents_csv(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(f, line)) throw IoError("empty latents file " + path.string());
  std::vector<LatentRow> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      std::size_t next = line.find(',', pos);
      cells.push_back(line.substr(pos, next - pos));
      pos = next == std::string::npos ? line.size() + 1 : next + 1;
    }
    if (cells.size() < 4) throw IoError("malformed latents row in " + path.string());
    LatentRow r;
    r.id = cells[0];
    for (std::size_t i = 1; i + 2 < cells.size(); ++i) r.z.push_back(std::stod(cells[i]));
    r.location = cells[cells.size() - 2];
    r.size_cm = std::stod(cells.back());
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---- sub-commands ----

int cmd_gen_data(int count, std::uint64_t seed, const std::string& out) {
  datagen::Dataset ds = datagen::generate_dataset(count, seed);
  fs::path dir(out);
  datagen::write_dataset(ds, dir);
  RunManifest manifest("gen-data", {{"count", count}, {"out", out}}, {{"seed", seed}});
  manifest.add_output(dir / "manifest.json");
  long train = 0, test = 0, cold = 0, hot = 0;
  for (const auto& tr : ds.transients) {
    manifest.add_output(dir / (tr.id + ".csv"));
    (tr.split == "train" ? train : test)++;
    (tr.break_location == datagen::BreakLocation::ColdLeg ? cold : hot)++;
  }
  manifest.write(dir);
  std::cout << "wrote " << ds.transients.size() << " transients to " << out << " (train "
            << train << ", test " << test << ", cold " << cold << ", hot " << hot << ")\n";
  return 0;
}

int cmd_train(const std::string& config_path) {
  std::ifstream cf(config_path);
  if (!cf) throw IoError("cannot read config " + config_path);
  training::TrainConfig config;
  try {
    config = json::parse(cf).get<training::TrainConfig>();
  } catch (const json::exception& e) {
    throw ParamError(std::string("invalid train config: ") + e.what());
  }
  config.validate();
  datagen::Dataset ds = datagen::read_dataset(config.dataset_dir);
  training::TrainResult res = training::train(config, ds);
  fs::path out = config.out_dir.empty() ? fs::path(".") : fs::path(config.out_dir);
  RunManifest manifest("train", json(config), {{"seed", config.seed}});
  for (const auto& p : res.checkpoints) manifest.add_output(p);
  manifest.add_output(out / "train_log.csv");
  manifest.write(out);
  std::cout << "trained " << res.log.entries.size() << " steps, final loss "
            << res.log.entries.back().loss << ", checkpoint "
            << (out / "checkpoint.ckpt").string() << "\n";
  return 0;
}

int cmd_encode(const std::string& ckpt, const std::string& dataset, double snr,
               double mask_ratio, std::uint64_t seed, const std::string& out) {
  auto [params, cfg] = model::load_checkpoint(ckpt);
  require_dataset_compatible(cfg);
  datagen::Dataset ds = datagen::read_dataset(dataset);
  std::vector<LatentRow> rows;
  for (std::size_t i = 0; i < ds.transients.size(); ++i) {
    const auto& tr = ds.transients[i];
    Tensor norm = datagen::normalize(tr.channels, ds.channel_stats);
    CorruptedWindow cw = corrupt_window(norm, snr, mask_ratio,
                                        mix_seed(seed, static_cast<std::uint64_t>(i)), cfg);
    model::EncodeResult enc = model::encode(cw.window, cw.mask, params, cfg);
    rows.push_back({tr.id, *enc.latent.data, datagen::location_str(tr.break_location),
                    tr.break_size_cm});
  }
  fs::path out_path(out);
  write_latents_csv(out_path, rows);
  RunManifest manifest("encode",
                       {{"checkpoint", ckpt}, {"dataset", dataset}, {"snr_db", snr},
                        {"mask_ratio", mask_ratio}, {"out", out}},
                       {{"seed", seed}});
  manifest.add_output(out_path);
  manifest.write(out_path.has_parent_path() ? out_path.parent_path() : fs::path("."));
  std::cout << "encoded " << rows.size() << " transients to " << out << "\n";
  return 0;
}

// split (by id) comes from the dataset manifest; the latents CSV carries only
// the labels
std::map<std::string, const datagen::Transient*> index_by_id(const datagen::Dataset& ds) {
  std::map<std::string, const datagen::Transient*> out;
  for (const auto& tr : ds.transients) out[tr.id] = &tr;
  return out;
}

void split_samples(const std::vector<diagnosis::Sample>& all,
                   const std::vector<std::string>& splits,
                   std::vector<diagnosis::Sample>& train, std::vector<diagnosis::Sample>& test) {
  for (std::size_t i = 0; i < all.size(); ++i)
    (splits[i] == "train" ? train : test).push_back(all[i]);
}

std::vector<diagnosis::Sample> raw_corrupted_samples(const datagen::Dataset& ds,
                                                     double snr, double mask_ratio,
                                                     std::uint64_t seed,
                                                     std::vector<std::string>& splits) {
  model::ModelConfig cfg;  // full-size geometry for the patch grid
  std::vector<diagnosis::Sample> out;
  for (std::size_t i = 0; i < ds.transients.size(); ++i) {
    const auto& tr = ds.transients[i];
    Tensor norm = datagen::normalize(tr.channels, ds.channel_stats);
    CorruptedWindow cw = corrupt_window(norm, snr, mask_ratio,
                                        mix_seed(seed, static_cast<std::uint64_t>(i)), cfg);
    out.push_back({*cw.window.data,
                   tr.break_location == datagen::BreakLocation::ColdLeg ? 0 : 1,
                   tr.break_size_cm});
    splits.push_back(tr.split);
  }
  return out;
}

void print_report(const diagnosis::EvalReport& r) {
  std::printf("  %-10s cold_prec %.4f  hot_prec %.4f  macro_f1 %.4f  rmse_cm %.4f\n",
              r.mode.c_str(), r.cold_precision, r.hot_precision, r.macro_f1, r.rmse_cm);
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << j.dump(2) << "\n";
}

int cmd_diagnose(const std::string& latents, const std::string& dataset,
                 const std::string& mode, double snr, double mask_ratio,
                 std::uint64_t seed, const std::string& out) {
  bool want_two_stage = mode == "two_stage" || mode == "both";
  bool want_end_to_end = mode == "end_to_end" || mode == "both";
  if (want_two_stage && latents.empty())
    throw ParamError("--latents is required for mode " + mode);
  datagen::Dataset ds = datagen::read_dataset(dataset);
  fs::path out_dir(out);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string());

  diagnosis::HeadConfig head_cfg;
  head_cfg.seed = seed;
  RunManifest manifest("diagnose",
                       {{"latents", latents}, {"dataset", dataset}, {"mode", mode},
                        {"snr_db", snr}, {"mask_ratio", mask_ratio}, {"out", out}},
                       {{"seed", seed}});
  std::vector<diagnosis::EvalReport> reports;

  if (want_two_stage) {
    auto rows = read_latents_csv(latents);
    auto by_id = index_by_id(ds);
    std::vector<diagnosis::Sample> train, test;
    for (const auto& r : rows) {
      auto it = by_id.find(r.id);
      if (it == by_id.end())
        throw MismatchError("latent id " + r.id + " not present in the dataset");
      diagnosis::Sample s{r.z, r.location == "cold_leg" ? 0 : 1, r.size_cm};
      (it->second->split == "train" ? train : test).push_back(std::move(s));
    }
    diagnosis::DiagnosisHead head = diagnosis::train_heads(train, head_cfg);
    auto rep = diagnosis::evaluate(diagnosis::predict(head, test), test, "two_stage",
                                   snr, mask_ratio);
    write_json_file(out_dir / "report_two_stage.json", diagnosis::report_json(rep));
    manifest.add_output(out_dir / "report_two_stage.json");
    reports.push_back(rep);
  }
  if (want_end_to_end) {
    std::vector<std::string> splits;
    auto all = raw_corrupted_samples(ds, snr, mask_ratio, seed, splits);
    std::vector<diagnosis::Sample> train, test;
    split_samples(all, splits, train, test);
    auto rep = diagnosis::end_to_end_baseline(train, test, head_cfg, snr, mask_ratio);
    write_json_file(out_dir / "report_end_to_end.json", diagnosis::report_json(rep));
    manifest.add_output(out_dir / "report_end_to_end.json");
    reports.push_back(rep);
  }
  manifest.write(out_dir);
  std::cout << "diagnosis at snr " << snr << " dB, mask " << mask_ratio << ":\n";
  for (const auto& r : reports) print_report(r);
  return 0;
}

int cmd_tsne(const std::string& input, const std::string& dataset,
             const std::string& latents, double snr, double mask_ratio,
             double perplexity, int iterations, std::uint64_t seed,
             const std::string& out) {
  datagen::Dataset ds = datagen::read_dataset(dataset);
  model::ModelConfig cfg;
  std::vector<std::string> ids;
  std::vector<std::string> locations;
  std::vector<double> sizes;
  Tensor x;

  if (input == "latent") {
    if (latents.empty()) throw ParamError("--latents is required for --input latent");
    auto rows = read_latents_csv(latents);
    if (rows.empty()) throw ParamError("latents file is empty");
    int d = static_cast<int>(rows[0].z.size());
    x = Tensor::zeros({static_cast<int>(rows.size()), d});
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::copy(rows[i].z.begin(), rows[i].z.end(),
                x.data->begin() + static_cast<std::size_t>(i) * d);
      ids.push_back(rows[i].id);
      locations.push_back(rows[i].location);
      sizes.push_back(rows[i].size_cm);
    }
  } else {
    int d = datagen::kChannels * datagen::kSamples;
    x = Tensor::zeros({static_cast<int>(ds.transients.size()), d});
    for (std::size_t i = 0; i < ds.transients.size(); ++i) {
      const auto& tr = ds.transients[i];
      Tensor norm = datagen::normalize(tr.channels, ds.channel_stats);
      Tensor row = norm;
      if (input == "corrupted")
        row = corrupt_window(norm, snr, mask_ratio,
                             mix_seed(seed, static_cast<std::uint64_t>(i)), cfg)
                  .window;
      std::copy(row.data->begin(), row.data->end(),
                x.data->begin() + static_cast<std::size_t>(i) * d);
      ids.push_back(tr.id);
      locations.push_back(datagen::location_str(tr.break_location));
      sizes.push_back(tr.break_size_cm);
    }
  }

  manifold::EmbeddingConfig ecfg;
  ecfg.perplexity = perplexity;
  ecfg.iterations = iterations;
  ecfg.seed = seed;
  manifold::EmbeddingResult res = manifold::tsne_embed(x, ecfg);

  fs::path out_dir(out);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string());
  fs::path coords_path = out_dir / ("tsne_" + input + ".csv");
  fs::path kl_path = out_dir / ("tsne_" + input + "_kl.csv");
  {
    std::ofstream f(coords_path);
    if (!f) throw IoError("cannot write " + coords_path.string());
    f << "id,x,y,break_location,break_size_cm,source\n";
    char buf[96];
    for (std::size_t i = 0; i < ids.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g,%.17g", (*res.coords.data)[i * 2],
                    (*res.coords.data)[i * 2 + 1]);
      f << ids[i] << "," << buf << "," << locations[i] << ",";
      std::snprintf(buf, sizeof(buf), "%.9g", sizes[i]);
      f << buf << "," << input << "\n";
    }
  }
  {
    std::ofstream f(kl_path);
    if (!f) throw IoError("cannot write " + kl_path.string());
    f << "iteration,kl\n";
    char buf[32];
    for (std::size_t i = 0; i < res.kl_trace.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", res.kl_trace[i]);
      f << i << "," << buf << "\n";
    }
  }
  RunManifest manifest("tsne",
                       {{"input", input}, {"dataset", dataset}, {"latents", latents},
                        {"snr_db", snr}, {"mask_ratio", mask_ratio},
                        {"perplexity", perplexity}, {"iterations", iterations},
                        {"out", out}},
                       {{"seed", seed}});
  manifest.add_output(coords_path);
  manifest.add_output(kl_path);
  manifest.write(out_dir);
  std::cout << "embedded " << ids.size() << " points (" << input << "), final kl "
            << res.kl_trace.back() << "\n";
  return 0;
}

// Full comparison pipeline: encode latents in memory, then evaluate the
// two-stage head against the end-to-end baseline under the same corruption.
int cmd_eval(const std::string& ckpt, const std::string& dataset, double snr,
             double mask_ratio, std::uint64_t seed, const std::string& out) {
  auto [params, cfg] = model::load_checkpoint(ckpt);
  require_dataset_compatible(cfg);
  datagen::Dataset ds = datagen::read_dataset(dataset);
  fs::path out_dir(out);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string());

  std::vector<diagnosis::Sample> lat_train, lat_test;
  std::vector<diagnosis::Sample> raw_all;
  std::vector<std::string> splits;
  for (std::size_t i = 0; i < ds.transients.size(); ++i) {
    const auto& tr = ds.transients[i];
    Tensor norm = datagen::normalize(tr.channels, ds.channel_stats);
    CorruptedWindow cw = corrupt_window(norm, snr, mask_ratio,
                                        mix_seed(seed, static_cast<std::uint64_t>(i)), cfg);
    model::EncodeResult enc = model::encode(cw.window, cw.mask, params, cfg);
    int loc = tr.break_location == datagen::BreakLocation::ColdLeg ? 0 : 1;
    diagnosis::Sample s{*enc.latent.data, loc, tr.break_size_cm};
    (tr.split == "train" ? lat_train : lat_test).push_back(std::move(s));
    raw_all.push_back({*cw.window.data, loc, tr.break_size_cm});
    splits.push_back(tr.split);
  }
  diagnosis::HeadConfig head_cfg;
  head_cfg.seed = seed;
  diagnosis::DiagnosisHead head = diagnosis::train_heads(lat_train, head_cfg);
  auto two_stage = diagnosis::evaluate(diagnosis::predict(head, lat_test), lat_test,
                                       "two_stage", snr, mask_ratio);
  std::vector<diagnosis::Sample> raw_train, raw_test;
  split_samples(raw_all, splits, raw_train, raw_test);
  auto end_to_end = diagnosis::end_to_end_baseline(raw_train, raw_test, head_cfg, snr,
                                                   mask_ratio);

  write_json_file(out_dir / "report_two_stage.json", diagnosis::report_json(two_stage));
  write_json_file(out_dir / "report_end_to_end.json", diagnosis::report_json(end_to_end));
  RunManifest manifest("eval",
                       {{"checkpoint", ckpt}, {"dataset", dataset}, {"snr_db", snr},
                        {"mask_ratio", mask_ratio}, {"out", out}},
                       {{"seed", seed}});
  manifest.add_output(out_dir / "report_two_stage.json");
  manifest.add_output(out_dir / "report_end_to_end.json");
  manifest.write(out_dir);
  std::cout << "evaluation at snr " << snr << " dB, mask " << mask_ratio << ":\n";
  print_report(two_stage);
  print_report(end_to_end);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"padded autoencoder pipeline for reactor transient diagnosis"};
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads, "worker threads (1 = bit-reproducible)");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic transient dataset");
  int gen_count = 346;
  std::uint64_t gen_seed = 7;
  std::string gen_out;
  gen->add_option("--count", gen_count, "number of transients");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--out", gen_out, "output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "train the autoencoder");
  std::string train_config;
  train->add_option("--config", train_config, "training config JSON")->required();

  // encode
  auto* encode = app.add_subcommand("encode", "extract latents from a checkpoint");
  std::string enc_ckpt, enc_dataset, enc_out;
  double enc_snr = 35.0, enc_mask = 0.1;
  std::uint64_t enc_seed = 7;
  encode->add_option("--checkpoint", enc_ckpt, "model checkpoint")->required();
  encode->add_option("--dataset", enc_dataset, "dataset directory")->required();
  encode->add_option("--snr", enc_snr, "corruption SNR in dB");
  encode->add_option("--mask", enc_mask, "corruption mask ratio");
  encode->add_option("--seed", enc_seed, "corruption seed");
  encode->add_option("--out", enc_out, "latents CSV path")->required();

  // diagnose
  auto* diagnose = app.add_subcommand("diagnose", "train and evaluate diagnosis heads");
  std::string dia_latents, dia_dataset, dia_mode = "two_stage", dia_out;
  double dia_snr = 35.0, dia_mask = 0.1;
  std::uint64_t dia_seed = 7;
  diagnose->add_option("--latents", dia_latents, "latents CSV (two_stage input)");
  diagnose->add_option("--dataset", dia_dataset, "dataset directory")->required();
  diagnose->add_option("--mode", dia_mode, "two_stage | end_to_end | both")
      ->check(CLI::IsMember({"two_stage", "end_to_end", "both"}));
  diagnose->add_option("--snr", dia_snr, "corruption SNR in dB");
  diagnose->add_option("--mask", dia_mask, "corruption mask ratio");
  diagnose->add_option("--seed", dia_seed, "head-training and corruption seed");
  diagnose->add_option("--out", dia_out, "report output directory")->required();

  // tsne
  auto* tsne = app.add_subcommand("tsne", "export a 2-D embedding");
  std::string ts_input, ts_dataset, ts_latents, ts_out;
  double ts_snr = 35.0, ts_mask = 0.1, ts_perplexity = 30.0;
  int ts_iterations = 1000;
  std::uint64_t ts_seed = 7;
  tsne->add_option("--input", ts_input, "clean | corrupted | latent")
      ->required()
      ->check(CLI::IsMember({"clean", "corrupted", "latent"}));
  tsne->add_option("--dataset", ts_dataset, "dataset directory")->required();
  tsne->add_option("--latents", ts_latents, "latents CSV (for --input latent)");
  tsne->add_option("--snr", ts_snr, "corruption SNR in dB");
  tsne->add_option("--mask", ts_mask, "corruption mask ratio");
  tsne->add_option("--perplexity", ts_perplexity, "t-SNE perplexity");
  tsne->add_option("--iterations", ts_iterations, "descent iterations");
  tsne->add_option("--seed", ts_seed, "embedding seed");
  tsne->add_option("--out", ts_out, "output directory")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "two-stage vs end-to-end comparison");
  std::string ev_ckpt, ev_dataset, ev_out;
  double ev_snr = 35.0, ev_mask = 0.1;
  std::uint64_t ev_seed = 7;
  eval->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required();
  eval->add_option("--dataset", ev_dataset, "dataset directory")->required();
  eval->add_option("--snr", ev_snr, "corruption SNR in dB");
  eval->add_option("--mask", ev_mask, "corruption mask ratio");
  eval->add_option("--seed", ev_seed, "pipeline seed");
  eval->add_option("--out", ev_out, "report output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_count, gen_seed, gen_out);
    if (train->parsed()) return cmd_train(train_config);
    if (encode->parsed())
      return cmd_encode(enc_ckpt, enc_dataset, enc_snr, enc_mask, enc_seed, enc_out);
    if (diagnose->parsed())
      return cmd_diagnose(dia_latents, dia_dataset, dia_mode, dia_snr, dia_mask, dia_seed,
                          dia_out);
    if (tsne->parsed())
      return cmd_tsne(ts_input, ts_dataset, ts_latents, ts_snr, ts_mask, ts_perplexity,
                      ts_iterations, ts_seed, ts_out);
    if (eval->parsed()) return cmd_eval(ev_ckpt, ev_dataset, ev_snr, ev_mask, ev_seed, ev_out);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const MismatchError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const ParamError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
