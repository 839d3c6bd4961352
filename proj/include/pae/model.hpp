#pragma once

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pae/corruption.hpp"
#include "pae/errors.hpp"
#include "pae/rng.hpp"
#include "pae/tensor.hpp"

namespace pae::model {

using corruption::CorruptionSpec;

struct ModelConfig {
  int channels = 38;            // l
  int samples = 200;            // p
  int patches_per_channel = 5;  // m
  int latent_dim = 128;
  int depth_enc = 4;
  int depth_dec = 4;
  int heads = 4;
  double mlp_ratio = 0.8;
  double dropout = 0.1;
  int lstm_hidden = 128;        // H

  int patch_len() const { return samples / patches_per_channel; }     // D
  int tokens() const { return channels * patches_per_channel; }       // N
  int head_dim() const { return patch_len() / heads; }                // D_h
  int ffn_hidden() const {
    return static_cast<int>(std::llround(mlp_ratio * patch_len()));
  }

  void validate() const {
    if (samples % patches_per_channel != 0)
      throw ParamError("samples must be divisible by patches_per_channel");
    if (patch_len() % heads != 0)
      throw ParamError("patch_len must be divisible by heads");
    if (channels < 1 || latent_dim < 1 || lstm_hidden < 1 || depth_enc < 0 ||
        depth_dec < 0)
      throw ParamError("invalid model config");
    if (dropout < 0.0 || dropout >= 1.0) throw ParamError("dropout must be in [0,1)");
  }

  static ModelConfig toy() {
    ModelConfig c;
    c.channels = 2;
    c.samples = 20;
    c.patches_per_channel = 2;
    c.latent_dim = 8;
    c.depth_enc = 2;
    c.depth_dec = 2;
    c.heads = 2;
    c.lstm_hidden = 8;
    return c;
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"channels", c.channels},
       {"samples", c.samples},
       {"patches_per_channel", c.patches_per_channel},
       {"latent_dim", c.latent_dim},
       {"depth_enc", c.depth_enc},
       {"depth_dec", c.depth_dec},
       {"heads", c.heads},
       {"mlp_ratio", c.mlp_ratio},
       {"dropout", c.dropout},
       {"lstm_hidden", c.lstm_hidden}};
}
inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  j.at("channels").get_to(c.channels);
  j.at("samples").get_to(c.samples);
  j.at("patches_per_channel").get_to(c.patches_per_channel);
  j.at("latent_dim").get_to(c.latent_dim);
  j.at("depth_enc").get_to(c.depth_enc);
  j.at("depth_dec").get_to(c.depth_dec);
  j.at("heads").get_to(c.heads);
  j.at("mlp_ratio").get_to(c.mlp_ratio);
  j.at("dropout").get_to(c.dropout);
  j.at("lstm_hidden").get_to(c.lstm_hidden);
}

// All learnable tensors, addressed by name in a fixed order.
struct ModelParams {
  std::vector<std::string> order;
  std::unordered_map<std::string, Tensor> tensors;

  Tensor& get(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ContractError("unknown parameter " + name);
    return it->second;
  }
  const Tensor& get(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ContractError("unknown parameter " + name);
    return it->second;
  }
  void add(const std::string& name, Tensor t) {
    order.push_back(name);
    tensors.emplace(name, std::move(t));
  }
  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& name : order) n += tensors.at(name).size();
    return n;
  }
  void zero_grad() {
    for (auto& name : order) tensors.at(name).zero_grad();
  }
  // Stable fingerprint of all values; used to assert the encoder is frozen.
  double checksum() const {
    double acc = 0.0;
    std::size_t i = 1;
    for (const auto& name : order)
      for (double v : *tensors.at(name).data) acc += v * std::sin(static_cast<double>(i++));
    return acc;
  }
};

inline void add_block_params(ModelParams& p, const std::string& prefix,
                             const ModelConfig& cfg, Rng& rng) {
  int d = cfg.patch_len(), dh = cfg.head_dim(), hid = cfg.ffn_hidden();
  p.add(prefix + ".ln1.gamma", Tensor::full({1, d}, 1.0, true));
  p.add(prefix + ".ln1.beta", Tensor::zeros({1, d}, true));
  p.add(prefix + ".attn.u_qkv", Tensor::randn({d, cfg.heads * 3 * dh}, rng, 0.02, true));
  p.add(prefix + ".attn.u_msa", Tensor::randn({cfg.heads * dh, d}, rng, 0.02, true));
  p.add(prefix + ".ln2.gamma", Tensor::full({1, d}, 1.0, true));
  p.add(prefix + ".ln2.beta", Tensor::zeros({1, d}, true));
  p.add(prefix + ".ffn.w1", Tensor::randn({d, hid}, rng, 0.02, true));
  p.add(prefix + ".ffn.b1", Tensor::zeros({1, hid}, true));
  p.add(prefix + ".ffn.w2", Tensor::randn({hid, d}, rng, 0.02, true));
  p.add(prefix + ".ffn.b2", Tensor::zeros({1, d}, true));
}

inline ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  ModelParams p;
  int d = cfg.patch_len(), n = cfg.tokens(), h = cfg.lstm_hidden, lat = cfg.latent_dim;
  p.add("pos_embedding", Tensor::randn({n + 1, d}, rng, 0.02, true));
  p.add("class_token", Tensor::zeros({1, d}, true));
  for (int i = 0; i < cfg.depth_enc; ++i)
    add_block_params(p, "enc." + std::to_string(i), cfg, rng);
  for (const char* gate : {"i", "f", "g", "o"}) {
    std::string gs(gate);
    p.add("lstm.w_i" + gs, Tensor::randn({d, h}, rng, 0.02, true));
    p.add("lstm.w_h" + gs, Tensor::randn({h, h}, rng, 0.02, true));
    p.add("lstm.b_i" + gs, gs == "f" ? Tensor::full({1, h}, 1.0, true)
                                     : Tensor::zeros({1, h}, true));
    p.add("lstm.b_h" + gs, Tensor::zeros({1, h}, true));
  }
  p.add("latent.0.w", Tensor::randn({h, lat}, rng, 0.02, true));
  p.add("latent.0.b", Tensor::zeros({1, lat}, true));
  p.add("latent.1.w", Tensor::randn({lat, lat}, rng, 0.02, true));
  p.add("latent.1.b", Tensor::zeros({1, lat}, true));
  p.add("latent.2.w", Tensor::randn({lat, lat}, rng, 0.02, true));
  p.add("latent.2.b", Tensor::zeros({1, lat}, true));
  p.add("dec.expand.w", Tensor::randn({lat, n * d}, rng, 0.02, true));
  p.add("dec.expand.b", Tensor::zeros({1, n * d}, true));
  for (int i = 0; i < cfg.depth_dec; ++i)
    add_block_params(p, "dec." + std::to_string(i), cfg, rng);
  return p;
}

// ---- pure data transforms ----

// [l x p] -> [N x D]; row (i*m + j) holds samples [j*D, (j+1)*D) of channel i.
// With row-major storage this is a pure reshape.
inline Tensor patchify(const Tensor& x, const ModelConfig& cfg) {
  if (x.rows() != cfg.channels || x.cols() != cfg.samples)
    throw ShapeError("patchify: expected [" + std::to_string(cfg.channels) + "x" +
                     std::to_string(cfg.samples) + "], got " + shape_str(x.shape));
  return Tensor::from({cfg.tokens(), cfg.patch_len()}, *x.data);
}

inline Tensor depatchify(const Tensor& xp, const ModelConfig& cfg) {
  if (xp.rows() != cfg.tokens() || xp.cols() != cfg.patch_len())
    throw ShapeError("depatchify: got " + shape_str(xp.shape));
  return Tensor::from({cfg.channels, cfg.samples}, *xp.data);
}

inline Tensor apply_mask(const Tensor& xp, const std::vector<char>& mask) {
  if (static_cast<int>(mask.size()) != xp.rows())
    throw ShapeError("mask length does not match patch count");
  Tensor out = Tensor::from(xp.shape, *xp.data);
  int d = xp.cols();
  for (int i = 0; i < xp.rows(); ++i)
    if (mask[i])
      std::fill(out.data->begin() + static_cast<std::size_t>(i) * d,
                out.data->begin() + static_cast<std::size_t>(i + 1) * d, 0.0);
  return out;
}

// ---- graph builders ----

struct ParamLeaves {
  std::unordered_map<std::string, Graph::NodeId> id;
  Graph::NodeId operator()(const std::string& name) const {
    auto it = id.find(name);
    if (it == id.end()) throw ContractError("unbound parameter " + name);
    return it->second;
  }
};

inline ParamLeaves bind_params(Graph& g, ModelParams& params) {
  ParamLeaves pl;
  for (const auto& name : params.order) pl.id[name] = g.leaf(params.get(name));
  return pl;
}

inline ParamLeaves bind_from_leaves(const std::vector<std::string>& order,
                                    const std::vector<Graph::NodeId>& leaves) {
  ParamLeaves pl;
  for (std::size_t i = 0; i < order.size(); ++i) pl.id[order[i]] = leaves[i];
  return pl;
}

// Class token prepended, then learnable positional terms added to all rows.
inline Graph::NodeId embed_graph(Graph& g, Graph::NodeId xp, const ParamLeaves& pl) {
  Graph::NodeId withcls = g.concat_rows(pl("class_token"), xp);
  return g.add(withcls, pl("pos_embedding"));
}

// Pre-norm residual transformer block: x + MSA(LN(x)), then x + MLP(LN(x)).
// Attention uses per-head dim D_h with 1/sqrt(D_h) scaling, no qkv biases;
// dropout sits inside the FFN only.
inline Graph::NodeId transformer_block_graph(Graph& g, Graph::NodeId x,
                                             const ParamLeaves& pl,
                                             const std::string& prefix,
                                             const ModelConfig& cfg, bool training,
                                             Rng& rng) {
  int dh = cfg.head_dim();
  Graph::NodeId x1 = g.layer_norm(x, pl(prefix + ".ln1.gamma"), pl(prefix + ".ln1.beta"));
  Graph::NodeId heads_out = -1;
  for (int h = 0; h < cfg.heads; ++h) {
    Graph::NodeId uq = g.slice_cols(pl(prefix + ".attn.u_qkv"), h * 3 * dh, (h + 1) * 3 * dh);
    Graph::NodeId qkv = g.matmul(x1, uq);
    Graph::NodeId q = g.slice_cols(qkv, 0, dh);
    Graph::NodeId k = g.slice_cols(qkv, dh, 2 * dh);
    Graph::NodeId v = g.slice_cols(qkv, 2 * dh, 3 * dh);
    Graph::NodeId att = g.softmax_rows(g.scale(g.matmul(q, g.transpose(k)),
                                               1.0 / std::sqrt(static_cast<double>(dh))));
    Graph::NodeId sa = g.matmul(att, v);
    heads_out = (h == 0) ? sa : g.concat_cols(heads_out, sa);
  }
  Graph::NodeId msa = g.matmul(heads_out, pl(prefix + ".attn.u_msa"));
  Graph::NodeId x2 = g.add(x, msa);
  Graph::NodeId x3 = g.layer_norm(x2, pl(prefix + ".ln2.gamma"), pl(prefix + ".ln2.beta"));
  Graph::NodeId f1 = g.gelu(g.add_rowvec(g.matmul(x3, pl(prefix + ".ffn.w1")),
                                         pl(prefix + ".ffn.b1")));
  f1 = g.dropout(f1, cfg.dropout, rng, training);
  Graph::NodeId f2 = g.add_rowvec(g.matmul(f1, pl(prefix + ".ffn.w2")), pl(prefix + ".ffn.b2"));
  return g.add(x2, f2);
}

// LSTM scan from the tail of the sequence toward the class token: step 1
// consumes the last row, the final step consumes row 0. Returns the final
// cell state [1 x H].
inline Graph::NodeId lstm_compress_graph(Graph& g, Graph::NodeId x, const ParamLeaves& pl,
                                         const ModelConfig& cfg) {
  int rows = g.value(x).rows();
  Graph::NodeId h = g.leaf_detached(Tensor::zeros({1, cfg.lstm_hidden}));
  Graph::NodeId c = g.leaf_detached(Tensor::zeros({1, cfg.lstm_hidden}));
  auto gate = [&](Graph::NodeId xt, const std::string& gs) {
    Graph::NodeId s = g.add(g.matmul(xt, pl("lstm.w_i" + gs)), g.matmul(h, pl("lstm.w_h" + gs)));
    s = g.add_rowvec(s, pl("lstm.b_i" + gs));
    return g.add_rowvec(s, pl("lstm.b_h" + gs));
  };
  for (int t = rows - 1; t >= 0; --t) {
    Graph::NodeId xt = g.slice_rows(x, t, t + 1);
    Graph::NodeId ig = g.sigmoid(gate(xt, "i"));
    Graph::NodeId fg = g.sigmoid(gate(xt, "f"));
    Graph::NodeId gg = g.tanh_(gate(xt, "g"));
    Graph::NodeId og = g.sigmoid(gate(xt, "o"));
    c = g.add(g.mul(fg, c), g.mul(ig, gg));
    h = g.mul(og, g.tanh_(c));
  }
  return c;
}

struct EncodeNodes {
  Graph::NodeId latent;     // [1 x latent_dim]
  Graph::NodeId class_row;  // [1 x D], post-encoder-stack row 0
};

// xp_masked is the class-token-free patch sequence with masked rows already
// zeroed (pad-style masking; positional terms are added afterwards).
inline EncodeNodes encode_graph(Graph& g, Graph::NodeId xp_masked, const ParamLeaves& pl,
                                const ModelConfig& cfg, bool training, Rng& rng) {
  Graph::NodeId x = embed_graph(g, xp_masked, pl);
  for (int i = 0; i < cfg.depth_enc; ++i)
    x = transformer_block_graph(g, x, pl, "enc." + std::to_string(i), cfg, training, rng);
  Graph::NodeId class_row = g.slice_rows(x, 0, 1);
  Graph::NodeId c = lstm_compress_graph(g, x, pl, cfg);
  Graph::NodeId h1 = g.gelu(g.add_rowvec(g.matmul(c, pl("latent.0.w")), pl("latent.0.b")));
  Graph::NodeId h2 = g.gelu(g.add_rowvec(g.matmul(h1, pl("latent.1.w")), pl("latent.1.b")));
  Graph::NodeId latent = g.add_rowvec(g.matmul(h2, pl("latent.2.w")), pl("latent.2.b"));
  return {latent, class_row};
}

// Expand latent to the token sequence, prepend the copied encoder class row,
// run the decoder stack, drop the class row, depatchify.
inline Graph::NodeId decode_graph(Graph& g, Graph::NodeId latent, Graph::NodeId class_row,
                                  const ParamLeaves& pl, const ModelConfig& cfg,
                                  bool training, Rng& rng) {
  int n = cfg.tokens(), d = cfg.patch_len();
  Graph::NodeId seq = g.add_rowvec(g.matmul(latent, pl("dec.expand.w")), pl("dec.expand.b"));
  seq = g.reshape(seq, {n, d});
  Graph::NodeId x = g.concat_rows(class_row, seq);
  for (int i = 0; i < cfg.depth_dec; ++i)
    x = transformer_block_graph(g, x, pl, "dec." + std::to_string(i), cfg, training, rng);
  x = g.slice_rows(x, 1, n + 1);
  return g.reshape(x, {cfg.channels, cfg.samples});
}

// ---- high-level eval-mode API ----

struct EncodeResult {
  Tensor latent;     // [1 x latent_dim]
  Tensor class_row;  // [1 x D]
};

inline EncodeResult encode(const Tensor& x_corrupted, const std::vector<char>& mask,
                           ModelParams& params, const ModelConfig& cfg,
                           bool training = false, Rng* rng = nullptr) {
  Rng dummy(0);
  Rng& r = rng ? *rng : dummy;
  Tensor xp = apply_mask(patchify(x_corrupted, cfg), mask);
  Graph g;
  ParamLeaves pl = bind_params(g, params);
  EncodeNodes nodes = encode_graph(g, g.leaf_detached(xp), pl, cfg, training, r);
  EncodeResult out{g.value(nodes.latent), g.value(nodes.class_row)};
  if (!out.latent.finite()) throw NumericError("non-finite value at stage encode:latent");
  return out;
}

inline Tensor decode(const Tensor& latent, const Tensor& class_row, ModelParams& params,
                     const ModelConfig& cfg, bool training = false, Rng* rng = nullptr) {
  Rng dummy(0);
  Rng& r = rng ? *rng : dummy;
  Graph g;
  ParamLeaves pl = bind_params(g, params);
  Graph::NodeId node = decode_graph(g, g.leaf_detached(latent), g.leaf_detached(class_row),
                                    pl, cfg, training, r);
  Tensor out = g.value(node);
  if (!out.finite()) throw NumericError("non-finite value at stage decode:recon");
  return out;
}

struct ReconResult {
  std::unique_ptr<Graph> graph;
  Graph::NodeId recon = -1;
  Graph::NodeId loss = -1;
  Graph::NodeId latent = -1;
  std::vector<char> mask;
  Tensor x_corrupted;  // [l x p], noise applied and masked patches zeroed
};

// Corrupt (noise first, then patch masking), encode, decode; loss is the MSE
// against the clean, uncorrupted input over all l*p elements.
inline ReconResult reconstruct(const Tensor& x_clean, const CorruptionSpec& spec,
                               ModelParams& params, const ModelConfig& cfg, bool training,
                               Rng& dropout_rng) {
  Rng corr_rng(spec.seed);
  Tensor noisy = corruption::add_noise(x_clean, spec.snr_db, corr_rng);
  auto [xp_masked, mask] = corruption::mask_patches(patchify(noisy, cfg), spec.mask_ratio,
                                                    corr_rng);
  ReconResult res;
  res.mask = mask;
  res.x_corrupted = depatchify(xp_masked, cfg);
  res.graph = std::make_unique<Graph>();
  Graph& g = *res.graph;
  ParamLeaves pl = bind_params(g, params);
  EncodeNodes enc = encode_graph(g, g.leaf_detached(xp_masked), pl, cfg, training,
                                 dropout_rng);
  res.latent = enc.latent;
  res.recon = decode_graph(g, enc.latent, enc.class_row, pl, cfg, training, dropout_rng);
  res.loss = g.mse(res.recon, g.leaf_detached(x_clean));
  if (!g.value(res.recon).finite())
    throw NumericError("non-finite value at stage reconstruct:recon");
  return res;
}

// ---- checkpoint format ----
// One line of JSON (format_version, model config, ordered tensor directory
// with byte offsets into the payload), '\n', then raw little-endian doubles.

inline void save_checkpoint(const ModelParams& params, const ModelConfig& cfg,
                            const std::filesystem::path& path) {
  nlohmann::json header;
  header["format_version"] = 1;
  header["model_config"] = cfg;
  auto dir = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& name : params.order) {
    const Tensor& t = params.get(name);
    dir.push_back({{"tensor_name", name}, {"shape", t.shape}, {"byte_offset", offset}});
    offset += t.size() * sizeof(double);
  }
  header["tensors"] = dir;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write checkpoint " + path.string());
  f << header.dump() << "\n";
  for (const auto& name : params.order) {
    const Tensor& t = params.get(name);
    f.write(reinterpret_cast<const char*>(t.data->data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!f) throw IoError("write failed for checkpoint " + path.string());
}

inline std::pair<ModelParams, ModelConfig> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read checkpoint " + path.string());
  std::string line;
  if (!std::getline(f, line)) throw IoError("checkpoint header missing in " + path.string());
  nlohmann::json header = nlohmann::json::parse(line);
  if (header.at("format_version").get<int>() != 1)
    throw IoError("unsupported checkpoint format in " + path.string());
  ModelConfig cfg = header.at("model_config").get<ModelConfig>();
  ModelParams params;
  for (const auto& entry : header.at("tensors")) {
    std::string name = entry.at("tensor_name").get<std::string>();
    Shape shape = entry.at("shape").get<Shape>();
    Tensor t = Tensor::zeros(shape, true);
    f.read(reinterpret_cast<char*>(t.data->data()),
           static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!f) throw IoError("truncated checkpoint " + path.string());
    if (params.tensors.count(name))
      throw IoError("duplicate tensor " + name + " in checkpoint " + path.string());
    params.add(name, std::move(t));
  }
  // cross-check against the expected name set for this config
  ModelParams expected = init_params(cfg, 0);
  if (expected.order != params.order)
    throw IoError("checkpoint tensor directory does not match config in " + path.string());
  return {std::move(params), cfg};
}

}  // namespace pae::model
