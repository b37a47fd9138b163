// Copyright 2026 The EPN Authors
// SPDX-License-Identifier: Apache-2.0

#include "epn/network.hpp"

#include <bit>
#include <chrono>
#include <cstring>
#include <fstream>
#include <future>
#include <json.hpp>

#include "epn/image_io.hpp"

namespace epn {

// ------------------------------------------------------------ ModelConfig

void ModelConfig::validate() const {
  if (channels.size() != static_cast<std::size_t>(kStages)) {
    throw ConfigError("channel schedule must list " + std::to_string(kStages) + " widths");
  }
  for (std::size_t k = 0; k < channels.size(); ++k) {
    if (channels[k] <= 0) throw ConfigError("channel widths must be positive");
    if (k > 0 && channels[k] != 2 * channels[k - 1]) {
      throw ConfigError("channel schedule must double at every stage");
    }
  }
  if (hor_depth < 0) throw ConfigError("hor_depth must be non-negative");
  if (input_channels <= 0) throw ConfigError("input_channels must be positive");
  for (int c : channels) block(c).validate();
  if (channels[0] % se_reduction != 0) {
    throw ConfigError("se_reduction must divide every decoder width");
  }
}

BlockConfig ModelConfig::block(int c) const {
  BlockConfig b;
  b.channels = c;
  b.expand_factor = expand_factor;
  b.shuffle_groups = shuffle_groups;
  b.se_reduction = se_reduction;
  b.use_layer_norm = !ablations.wo_ln;
  b.use_shuffle = !ablations.wo_shuffle;
  b.cimb_activation = ablations.gelu_to_relu ? Activation::kRelu : Activation::kGelu;
  b.eam_activation = ablations.eam_elu_to_relu ? Activation::kRelu : Activation::kElu;
  b.eam_from_features = ablations.eam_from_fin;
  return b;
}

KeySet bind_keys(ModelConfig& cfg) {
  auto& a = cfg.ablations;
  return {
      int_list_key("channels", cfg.channels, "channel width of each of the six scale stages"),
      int_key("hor_depth", cfg.hor_depth, "number of CIMBs in the rebuilding sub-net"),
      int_key("input_channels", cfg.input_channels, "image channels"),
      int_key("expand_factor", cfg.expand_factor, "CIMB channel expansion factor"),
      int_key("shuffle_groups", cfg.shuffle_groups, "channel shuffle groups"),
      int_key("se_reduction", cfg.se_reduction, "squeeze-excitation reduction"),
      bool_key("cimb_to_se_resblock", a.cimb_to_se_resblock, "replace every CIMB by an SE-ResBlock"),
      bool_key("wo_eam", a.wo_eam, "remove the external attention modules"),
      bool_key("wo_ln", a.wo_ln, "remove layer normalization from CIMBs"),
      bool_key("gelu_to_relu", a.gelu_to_relu, "use ReLU instead of GELU in CIMBs"),
      bool_key("wo_shuffle", a.wo_shuffle, "remove channel shuffle from CIMBs"),
      bool_key("eam_from_fin", a.eam_from_fin, "derive the attention map from incoming features"),
      bool_key("eam_elu_to_relu", a.eam_elu_to_relu, "use ReLU instead of ELU in EAMs"),
  };
}

ModelConfig tiny_model_config() {
  ModelConfig cfg;
  cfg.channels = {8, 16, 32, 64, 128, 256};
  cfg.hor_depth = 2;
  return cfg;
}

// ------------------------------------------------------------ ParamBundle

const NamedArray* ParamBundle::find(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

std::int64_t ParamBundle::total_elements() const {
  std::int64_t n = 0;
  for (const auto& e : entries_) n += static_cast<std::int64_t>(e.values.size());
  return n;
}

// ------------------------------------------------------------ MiningBlock

template <typename T>
MiningBlock<T>::MiningBlock(const BlockConfig& cfg, bool use_resblock) : use_resblock_(use_resblock) {
  if (use_resblock) {
    res_ = SeResBlock<T>(cfg.channels, cfg.se_reduction);
  } else {
    cimb_ = Cimb<T>(cfg);
  }
}

template <typename T>
Tensor<T> MiningBlock<T>::forward(const Tensor<T>& x) const {
  return use_resblock_ ? res_.forward(x) : cimb_.forward(x);
}

template <typename T>
Tensor<T> MiningBlock<T>::forward(const Tensor<T>& x, Cache& cache) const {
  return use_resblock_ ? res_.forward(x, cache.res) : cimb_.forward(x, cache.cimb);
}

template <typename T>
Tensor<T> MiningBlock<T>::backward(const Cache& cache, const Tensor<T>& dout) {
  return use_resblock_ ? res_.backward(cache.res, dout) : cimb_.backward(cache.cimb, dout);
}

template <typename T>
void MiningBlock<T>::reset_parameters(Rng& rng) {
  if (use_resblock_) res_.reset_parameters(rng); else cimb_.reset_parameters(rng);
}

template <typename T>
std::int64_t MiningBlock<T>::macs(int h, int w) const {
  return use_resblock_ ? res_.macs(h, w) : cimb_.macs(h, w);
}

// ------------------------------------------------------------------ Model

template <typename T>
Model<T>::Model(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const auto& ch = cfg_.channels;
  const bool resblocks = cfg_.ablations.cimb_to_se_resblock;
  stem_ = Conv2d<T>({cfg_.input_channels, ch[0], 3, 1, 1});
  for (int k = 0; k < ModelConfig::kStages; ++k) {
    mining_.emplace_back(cfg_.block(ch[k]), resblocks);
    eam_.emplace_back(cfg_.block(ch[k]), cfg_.input_channels);
    if (k + 1 < ModelConfig::kStages) {
      down_.emplace_back(ch[k]);
      up_.emplace_back(ch[k + 1]);
      decoder_.emplace_back(ch[k], cfg_.se_reduction);
    }
  }
  for (int j = 0; j < cfg_.hor_depth; ++j) rebuild_.emplace_back(cfg_.block(ch.back()), resblocks);
  head_ = Conv2d<T>({ch[0], cfg_.input_channels, 3, 1, 1});

  Rng rng(seed);
  stem_.reset_parameters(rng);
  for (int k = 0; k < ModelConfig::kStages; ++k) {
    mining_[k].reset_parameters(rng);
    eam_[k].reset_parameters(rng);
    if (k + 1 < ModelConfig::kStages) down_[k].reset_parameters(rng);
  }
  for (auto& b : rebuild_) b.reset_parameters(rng);
  for (int k = 0; k + 1 < ModelConfig::kStages; ++k) {
    up_[k].reset_parameters(rng);
    decoder_[k].reset_parameters(rng);
  }
  // The head starts at zero so an untrained model is the identity map.
  head_.weight.fill(T{0});
  head_.bias.fill(T{0});
}

template <typename T>
void Model<T>::check_input(const Tensor<T>& image) const {
  if (image.channels() != cfg_.input_channels) {
    throw DimensionError("model: expected " + std::to_string(cfg_.input_channels) +
                         " input channels, got " + image.shape_string());
  }
  if (image.height() <= 0 || image.width() <= 0 ||
      image.height() % ModelConfig::kAlignment != 0 ||
      image.width() % ModelConfig::kAlignment != 0) {
    throw DimensionError("model: spatial size " + image.shape_string() +
                         " is not a multiple of 32; use forward_padded");
  }
}

template <typename T>
Tensor<T> Model<T>::forward(const Tensor<T>& image) const {
  check_input(image);
  const bool use_eam = !cfg_.ablations.wo_eam;
  std::vector<Tensor<T>> skips(ModelConfig::kStages);
  Tensor<T> pyr = image;
  Tensor<T> x = stem_.forward(image);
  for (int k = 0; k < ModelConfig::kStages; ++k) {
    if (k > 0) pyr = avg_pool2(pyr);
    Tensor<T> f = mining_[k].forward(x);
    if (use_eam) f = eam_[k].forward(f, pyr);
    if (k + 1 < ModelConfig::kStages) x = down_[k].forward(f);
    skips[k] = std::move(f);
  }
  Tensor<T> d = std::move(skips.back());
  for (const auto& b : rebuild_) d = b.forward(d);
  for (int k = ModelConfig::kStages - 2; k >= 0; --k) {
    Tensor<T> u = up_[k].forward(d);
    add_inplace(u, skips[k]);
    skips[k] = Tensor<T>();
    d = decoder_[k].forward(u);
  }
  return add(head_.forward(d), image);
}

template <typename T>
Tensor<T> Model<T>::forward(const Tensor<T>& image, Cache& c) const {
  check_input(image);
  const bool use_eam = !cfg_.ablations.wo_eam;
  constexpr int S = ModelConfig::kStages;
  c.pyramid.assign(S, {});
  c.mining.assign(S, {});
  c.eam.assign(S, {});
  c.features.assign(S, {});
  c.rebuild.assign(rebuild_.size(), {});
  c.up_in.assign(S - 1, {});
  c.decoder.assign(S - 1, {});

  c.pyramid[0] = image;
  for (int k = 1; k < S; ++k) c.pyramid[k] = avg_pool2(c.pyramid[k - 1]);
  Tensor<T> x = stem_.forward(image);
  for (int k = 0; k < S; ++k) {
    Tensor<T> f = mining_[k].forward(x, c.mining[k]);
    if (use_eam) f = eam_[k].forward(f, c.pyramid[k], c.eam[k]);
    c.features[k] = std::move(f);
    if (k + 1 < S) x = down_[k].forward(c.features[k]);
  }
  Tensor<T> d = c.features.back();
  for (std::size_t j = 0; j < rebuild_.size(); ++j) d = rebuild_[j].forward(d, c.rebuild[j]);
  for (int k = S - 2; k >= 0; --k) {
    c.up_in[k] = std::move(d);
    Tensor<T> u = up_[k].forward(c.up_in[k]);
    add_inplace(u, c.features[k]);
    d = decoder_[k].forward(u, c.decoder[k]);
  }
  c.head_in = std::move(d);
  return add(head_.forward(c.head_in), image);
}

template <typename T>
void Model<T>::backward(const Cache& c, const Tensor<T>& dout) {
  const bool use_eam = !cfg_.ablations.wo_eam;
  constexpr int S = ModelConfig::kStages;
  std::vector<Tensor<T>> dfeat(S);
  Tensor<T> d = head_.backward(c.head_in, dout);
  for (int k = 0; k + 1 < S; ++k) {
    Tensor<T> du = decoder_[k].backward(c.decoder[k], d);
    d = up_[k].backward(c.up_in[k], du);
    dfeat[k] = std::move(du);
  }
  for (int j = static_cast<int>(rebuild_.size()) - 1; j >= 0; --j) {
    d = rebuild_[j].backward(c.rebuild[j], d);
  }
  dfeat[S - 1] = std::move(d);
  Tensor<T> dx;
  for (int k = S - 1; k >= 0; --k) {
    Tensor<T> df = std::move(dfeat[k]);
    if (k + 1 < S) add_inplace(df, down_[k].backward(c.features[k], dx));
    if (use_eam) df = eam_[k].backward(c.eam[k], df);
    dx = mining_[k].backward(c.mining[k], df);
  }
  stem_.backward(c.pyramid[0], dx);
}

template <typename T>
void Model<T>::zero_grad() {
  visit_params([](const std::string&, Param<T>& p) { p.zero_grad(); });
}

template <typename T>
std::int64_t Model<T>::num_params() const {
  std::int64_t n = 0;
  visit_params([&n](const std::string&, const Param<T>& p) { n += static_cast<std::int64_t>(p.numel()); });
  return n;
}

template <typename T>
std::int64_t Model<T>::macs(int h, int w) const {
  std::int64_t m = stem_.macs(h, w);
  const bool use_eam = !cfg_.ablations.wo_eam;
  for (int k = 0; k < ModelConfig::kStages; ++k) {
    const int hk = h >> k;
    const int wk = w >> k;
    m += mining_[k].macs(hk, wk);
    if (use_eam) m += eam_[k].macs(hk, wk);
    if (k + 1 < ModelConfig::kStages) {
      m += down_[k].macs(hk, wk);
      m += up_[k].macs(hk / 2, wk / 2);
      m += decoder_[k].macs(hk, wk);
    }
  }
  const int hd = h >> (ModelConfig::kStages - 1);
  const int wd = w >> (ModelConfig::kStages - 1);
  for (const auto& b : rebuild_) m += b.macs(hd, wd);
  return m + head_.macs(h, w);
}

template <typename T>
ParamBundle Model<T>::bundle() const {
  ParamBundle b;
  visit_params([&b](const std::string& name, const Param<T>& p) {
    NamedArray a{name, p.shape, std::vector<float>(p.value.size())};
    std::transform(p.value.begin(), p.value.end(), a.values.begin(),
                   [](T v) { return static_cast<float>(v); });
    b.entries().push_back(std::move(a));
  });
  return b;
}

namespace {

std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

}  // namespace

template <typename T>
void Model<T>::assign(const ParamBundle& bundle) {
  visit_params([&bundle](const std::string& name, Param<T>& p) {
    const NamedArray* a = bundle.find(name);
    if (a == nullptr) throw CheckpointError("tensor '" + name + "' missing from checkpoint");
    if (a->shape != p.shape || a->values.size() != p.value.size()) {
      throw CheckpointError("tensor '" + name + "': shape " + shape_str(a->shape) +
                            " in checkpoint, model expects " + shape_str(p.shape));
    }
    std::transform(a->values.begin(), a->values.end(), p.value.begin(),
                   [](float v) { return static_cast<T>(v); });
  });
}

// ---------------------------------------------------------------- padding

namespace {

int mirror_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

int round_up(int v, int m) { return (v + m - 1) / m * m; }

}  // namespace

template <typename T>
Tensor<T> reflect_pad(const Tensor<T>& x, int pad_bottom, int pad_right) {
  if (pad_bottom < 0 || pad_right < 0) throw DimensionError("reflect_pad: negative padding");
  if (x.height() == 0 || x.width() == 0) throw DimensionError("reflect_pad: empty tensor");
  const int h = x.height();
  const int w = x.width();
  Tensor<T> y(x.channels(), h + pad_bottom, w + pad_right);
  for (int c = 0; c < x.channels(); ++c) {
    for (int yy = 0; yy < y.height(); ++yy) {
      const int sy = mirror_index(yy, h);
      for (int xx = 0; xx < y.width(); ++xx) y.at(c, yy, xx) = x.at(c, sy, mirror_index(xx, w));
    }
  }
  return y;
}

template <typename T>
Tensor<T> crop(const Tensor<T>& x, int top, int left, int height, int width) {
  if (top < 0 || left < 0 || height < 0 || width < 0 || top + height > x.height() ||
      left + width > x.width()) {
    throw DimensionError("crop window outside " + x.shape_string());
  }
  Tensor<T> y(x.channels(), height, width);
  for (int c = 0; c < x.channels(); ++c) {
    for (int yy = 0; yy < height; ++yy) {
      std::copy_n(&x.at(c, top + yy, left), width, &y.at(c, yy, 0));
    }
  }
  return y;
}

template <typename T>
Tensor<T> forward_padded(const Model<T>& model, const Tensor<T>& image) {
  const int h = image.height();
  const int w = image.width();
  const int ph = round_up(h, ModelConfig::kAlignment) - h;
  const int pw = round_up(w, ModelConfig::kAlignment) - w;
  if (ph == 0 && pw == 0) return model.forward(image);
  return crop(model.forward(reflect_pad(image, ph, pw)), 0, 0, h, w);
}

// ----------------------------------------------------------------- tiling

std::vector<int> tile_starts(int extent, int tile, int overlap) {
  if (tile <= 0 || overlap < 0 || overlap >= tile) {
    throw ConfigError("tiling: need 0 <= overlap < tile");
  }
  if (extent <= tile) return {0};
  std::vector<int> starts;
  const int stride = tile - overlap;
  for (int s = 0;; s += stride) {
    if (s + tile >= extent) {
      starts.push_back(extent - tile);
      break;
    }
    starts.push_back(s);
  }
  return starts;
}

namespace {

// Blend weights along one axis of a tile: ramps up across overlaps shared with neighbours.
std::vector<double> feather(int start, int len, int extent, int overlap) {
  std::vector<double> w(len, 1.0);
  if (overlap == 0) return w;
  for (int i = 0; i < len; ++i) {
    const double ramp = std::min(1.0, (i + 0.5) / overlap);
    if (start > 0) w[i] = std::min(w[i], ramp);
    if (start + len < extent) {
      w[len - 1 - i] = std::min(w[len - 1 - i], ramp);
    }
  }
  return w;
}

}  // namespace

template <typename T>
Tensor<T> forward_tiled(const Model<T>& model, const Tensor<T>& image, const TileOptions& opt) {
  const int h = image.height();
  const int w = image.width();
  const auto ys = tile_starts(h, opt.tile, opt.overlap);
  const auto xs = tile_starts(w, opt.tile, opt.overlap);
  const int th = std::min(opt.tile, h);
  const int tw = std::min(opt.tile, w);

  struct Window {
    int y, x;
  };
  std::vector<Window> windows;
  for (int y : ys) {
    for (int x : xs) windows.push_back({y, x});
  }

  // Tiles run concurrently; blending below happens in window order so the
  // result is independent of the thread count.
  std::vector<Tensor<T>> outputs(windows.size());
  const int threads = std::max(1, opt.threads);
  auto work = [&](int worker) {
    for (std::size_t i = worker; i < windows.size(); i += threads) {
      outputs[i] = forward_padded(model, crop(image, windows[i].y, windows[i].x, th, tw));
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::future<void>> jobs;
    for (int t = 0; t < threads; ++t) jobs.push_back(std::async(std::launch::async, work, t));
    for (auto& j : jobs) j.get();
  }

  Tensor<double> acc(image.channels(), h, w);
  Tensor<double> weight(1, h, w);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto wy = feather(windows[i].y, th, h, opt.overlap);
    const auto wx = feather(windows[i].x, tw, w, opt.overlap);
    for (int yy = 0; yy < th; ++yy) {
      for (int xx = 0; xx < tw; ++xx) {
        const double wt = wy[yy] * wx[xx];
        weight.at(0, windows[i].y + yy, windows[i].x + xx) += wt;
        for (int c = 0; c < image.channels(); ++c) {
          acc.at(c, windows[i].y + yy, windows[i].x + xx) += wt * outputs[i].at(c, yy, xx);
        }
      }
    }
    outputs[i] = Tensor<T>();
  }
  Tensor<T> out(image.channels(), h, w);
  for (int c = 0; c < image.channels(); ++c) {
    for (int yy = 0; yy < h; ++yy) {
      for (int xx = 0; xx < w; ++xx) {
        out.at(c, yy, xx) = static_cast<T>(acc.at(c, yy, xx) / weight.at(0, yy, xx));
      }
    }
  }
  return out;
}

// ------------------------------------------------------------- checkpoint

namespace {

constexpr char kMagic[8] = {'E', 'P', 'N', 'C', 'K', 'P', 'T', '\n'};

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(const unsigned char* b) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_f32(std::string& out, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>(bits >> (8 * i)));
}

float get_f32(const unsigned char* b) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

}  // namespace

template <typename T>
void save_checkpoint(const Model<T>& model, const std::filesystem::path& path) {
  const ParamBundle bundle = model.bundle();
  ModelConfig cfg = model.config();
  nlohmann::ordered_json manifest;
  manifest["format_version"] = kCheckpointVersion;
  manifest["config"] = collect_key_values(bind_keys(cfg));
  manifest["tensors"] = nlohmann::json::array();
  std::string payload;
  payload.reserve(static_cast<std::size_t>(bundle.total_elements()) * 4);
  for (const auto& e : bundle.entries()) {
    manifest["tensors"].push_back({{"name", e.name},
                                   {"shape", e.shape},
                                   {"offset", payload.size()},
                                   {"count", e.values.size()}});
    for (float v : e.values) put_f32(payload, v);
  }
  manifest["payload_bytes"] = payload.size();
  const std::string text = manifest.dump(1);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot open checkpoint for writing");
  out.write(kMagic, sizeof(kMagic));
  put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError(path.string(), "checkpoint write failed");
}

template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open checkpoint");
  const std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
  if (blob.size() < 16 || std::memcmp(blob.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError(path.string() + ": not a checkpoint (bad header)");
  }
  const std::uint64_t mlen = get_u64(bytes + 8);
  if (mlen > blob.size() - 16) throw CheckpointError(path.string() + ": truncated manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(blob.substr(16, mlen));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": malformed manifest: " + e.what());
  }
  const std::size_t payload_start = 16 + mlen;
  const std::size_t payload_size = blob.size() - payload_start;
  try {
    const int version = manifest.at("format_version").get<int>();
    if (version != kCheckpointVersion) {
      throw CheckpointError(path.string() + ": format version " + std::to_string(version) +
                            ", expected " + std::to_string(kCheckpointVersion));
    }
    if (manifest.at("payload_bytes").get<std::size_t>() != payload_size) {
      throw CheckpointError(path.string() + ": truncated payload (" + std::to_string(payload_size) +
                            " of " + manifest.at("payload_bytes").dump() + " bytes)");
    }
    ModelConfig cfg;
    apply_key_values(bind_keys(cfg), manifest.at("config").get<KeyValues>());
    ParamBundle bundle;
    for (const auto& t : manifest.at("tensors")) {
      NamedArray a;
      a.name = t.at("name").get<std::string>();
      a.shape = t.at("shape").get<std::vector<int>>();
      const auto offset = t.at("offset").get<std::size_t>();
      const auto count = t.at("count").get<std::size_t>();
      std::size_t expect = 1;
      for (int d : a.shape) expect *= static_cast<std::size_t>(std::max(d, 0));
      if (expect != count) {
        throw CheckpointError("tensor '" + a.name + "': shape " + shape_str(a.shape) +
                              " disagrees with element count " + std::to_string(count));
      }
      if (offset > payload_size || count > (payload_size - offset) / 4) {
        throw CheckpointError("tensor '" + a.name + "': payload range out of bounds");
      }
      a.values.resize(count);
      for (std::size_t i = 0; i < count; ++i) {
        a.values[i] = get_f32(bytes + payload_start + offset + 4 * i);
      }
      bundle.entries().push_back(std::move(a));
    }
    Model<T> model(cfg, 0);
    model.assign(bundle);
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": malformed manifest: " + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(path.string() + ": invalid model config: " + e.what());
  }
}

DesnowReport desnow_image(const Model<float>& model, const std::filesystem::path& in,
                          const std::filesystem::path& out, std::optional<TileOptions> tiling) {
  const auto t0 = std::chrono::steady_clock::now();
  const Tensor<float> image = read_png<float>(in);
  DesnowReport report;
  report.height = image.height();
  report.width = image.width();
  Tensor<float> restored;
  if (tiling) {
    report.tiles = static_cast<int>(tile_starts(image.height(), tiling->tile, tiling->overlap).size() *
                                    tile_starts(image.width(), tiling->tile, tiling->overlap).size());
    restored = forward_tiled(model, image, *tiling);
  } else {
    restored = forward_padded(model, image);
  }
  write_png(clamp01(std::move(restored)), out);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

#define EPN_INSTANTIATE(T)                                                              \
  template class MiningBlock<T>;                                                        \
  template class Model<T>;                                                              \
  template Tensor<T> forward_padded<T>(const Model<T>&, const Tensor<T>&);              \
  template Tensor<T> reflect_pad<T>(const Tensor<T>&, int, int);                        \
  template Tensor<T> crop<T>(const Tensor<T>&, int, int, int, int);                     \
  template Tensor<T> forward_tiled<T>(const Model<T>&, const Tensor<T>&, const TileOptions&); \
  template void save_checkpoint<T>(const Model<T>&, const std::filesystem::path&);      \
  template Model<T> load_checkpoint<T>(const std::filesystem::path&);

EPN_INSTANTIATE(float)
EPN_INSTANTIATE(double)

}  // namespace epn
