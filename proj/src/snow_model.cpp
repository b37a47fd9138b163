// Copyright 2026 The EPN Authors
// SPDX-License-Identifier: Apache-2.0

#include "epn/snow_model.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include "epn/image_io.hpp"

namespace epn {

namespace {

void require_map(const Tensor<double>& m, int channels, int h, int w, const char* name) {
  if (m.channels() != channels || m.height() != h || m.width() != w) {
    throw DimensionError(std::string("snow params: ") + name + " has shape " + m.shape_string() +
                         ", expected " + std::to_string(channels) + "x" + std::to_string(h) + "x" +
                         std::to_string(w));
  }
}

void require_range(const Tensor<double>& m, double lo, double hi, const char* name) {
  for (double v : m.values()) {
    if (!(v >= lo && v <= hi)) {
      throw DomainError(std::string("snow params: ") + name + " value " + std::to_string(v) +
                        " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
  }
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

void SnowParams::validate(bool allow_zero_transmission) const {
  const int h = t_map.height();
  const int w = t_map.width();
  if (h <= 0 || w <= 0) throw DimensionError("snow params: empty maps");
  require_map(t_map, 1, h, w, "t_map");
  require_map(z_mask, 1, h, w, "z_mask");
  require_map(r_mask, 1, h, w, "r_mask");
  require_map(c_map, 3, h, w, "c_map");
  require_map(a_map, 3, h, w, "a_map");
  for (double v : t_map.values()) {
    if (!(v <= 1.0) || v < 0.0 || (v == 0.0 && !allow_zero_transmission)) {
      throw DomainError("snow params: transmission " + std::to_string(v) + " outside (0, 1]");
    }
  }
  for (double v : r_mask.values()) {
    if (v != 0.0 && v != 1.0) throw DomainError("snow params: r_mask must be binary");
  }
  require_range(z_mask, 0.0, 1.0, "z_mask");
  require_range(c_map, 0.0, 1.0, "c_map");
  require_range(a_map, 0.0, 1.0, "a_map");
}

void SynthConfig::validate() const {
  auto check_int = [](const std::pair<int, int>& r, int lo, const char* name) {
    if (r.first < lo || r.second < r.first) {
      throw ConfigError(std::string("synth: invalid ") + name + " range");
    }
  };
  check_int(streak_count_range, 0, "streak_count_range");
  check_int(streak_length_range, 1, "streak_length_range");
  check_int(particle_count_range, 0, "particle_count_range");
  check_int(particle_size_range, 1, "particle_size_range");
  if (haze_strength_range.first < 0.0 || haze_strength_range.second < haze_strength_range.first ||
      haze_strength_range.second >= 1.0) {
    throw ConfigError("synth: haze_strength_range must satisfy 0 <= lo <= hi < 1");
  }
  if (atmospheric_light_range.first < 0.0 ||
      atmospheric_light_range.second < atmospheric_light_range.first ||
      atmospheric_light_range.second > 1.0) {
    throw ConfigError("synth: atmospheric_light_range must lie in [0, 1]");
  }
}

KeySet bind_keys(SynthConfig& cfg) {
  return {
      int_pair_key("streak_count_range", cfg.streak_count_range, "number of snow streaks"),
      int_pair_key("streak_length_range", cfg.streak_length_range, "streak length in pixels"),
      int_pair_key("particle_count_range", cfg.particle_count_range, "number of snow particles"),
      int_pair_key("particle_size_range", cfg.particle_size_range, "particle radius in pixels"),
      double_pair_key("haze_strength_range", cfg.haze_strength_range,
                      "veiling strength; transmission = 1 - strength * smooth field"),
      double_pair_key("atmospheric_light_range", cfg.atmospheric_light_range,
                      "per-image atmospheric light"),
      u64_key("rng_seed", cfg.rng_seed, "generator seed"),
  };
}

ImageTensor synthesize_snow(const ImageTensor& clean, const SnowParams& p, SynthOptions options) {
  if (clean.channels() != 3 || clean.height() != p.height() || clean.width() != p.width()) {
    throw DimensionError("synthesize_snow: clean image " + clean.shape_string() +
                         " does not match snow maps of size " + std::to_string(p.height()) + "x" +
                         std::to_string(p.width()));
  }
  p.validate(options.allow_zero_transmission);
  const std::size_t hw = clean.plane_size();
  ImageTensor out(3, clean.height(), clean.width());
  const double* z = p.z_mask.data();
  const double* r = p.r_mask.data();
  const double* t = p.t_map.data();
  for (int c = 0; c < 3; ++c) {
    const double* j = clean.data() + c * hw;
    const double* col = p.c_map.data() + c * hw;
    const double* a = p.a_map.data() + c * hw;
    double* o = out.data() + c * hw;
    for (std::size_t i = 0; i < hw; ++i) {
      const double zr = z[i] * r[i];
      const double k = j[i] * (1.0 - zr) + col[i] * zr;
      o[i] = k * t[i] + a[i] * (1.0 - t[i]);
    }
  }
  return out;
}

SnowParams generate_snow_params(const SynthConfig& cfg, int height, int width) {
  cfg.validate();
  if (height <= 0 || width <= 0) {
    throw DimensionError("generate_snow_params: dimensions must be positive");
  }
  std::mt19937_64 rng(cfg.rng_seed);
  auto uniform = [&rng](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  auto uniform_int = [&rng](std::pair<int, int> r) {
    return std::uniform_int_distribution<int>(r.first, r.second)(rng);
  };

  SnowParams p;
  p.z_mask = Tensor<double>(1, height, width);
  p.r_mask = Tensor<double>(1, height, width);
  p.c_map = Tensor<double>(3, height, width);
  p.a_map = Tensor<double>(3, height, width);
  p.t_map = Tensor<double>(1, height, width);

  auto deposit = [&](int y, int x, double opacity) {
    if (y < 0 || y >= height || x < 0 || x >= width) return;
    double& z = p.z_mask.at(0, y, x);
    z = std::max(z, opacity);
  };

  // Streaks: straight segments at uniformly distributed angles.
  const int streaks = uniform_int(cfg.streak_count_range);
  for (int s = 0; s < streaks; ++s) {
    const double y0 = uniform(0.0, height);
    const double x0 = uniform(0.0, width);
    const double angle = uniform(0.0, std::numbers::pi);
    const double length = uniform_int(cfg.streak_length_range);
    const double opacity = uniform(0.4, 0.9);
    const double dy = std::sin(angle);
    const double dx = std::cos(angle);
    for (double t = 0.0; t <= length; t += 0.5) {
      deposit(static_cast<int>(std::floor(y0 + t * dy)), static_cast<int>(std::floor(x0 + t * dx)),
              opacity);
    }
  }

  // Particles: soft discs.
  const int particles = uniform_int(cfg.particle_count_range);
  for (int s = 0; s < particles; ++s) {
    const double cy = uniform(0.0, height);
    const double cx = uniform(0.0, width);
    const double radius = uniform_int(cfg.particle_size_range) + 0.5;
    const double opacity = uniform(0.6, 1.0);
    const int r = static_cast<int>(std::ceil(radius));
    for (int y = static_cast<int>(cy) - r; y <= static_cast<int>(cy) + r; ++y) {
      for (int x = static_cast<int>(cx) - r; x <= static_cast<int>(cx) + r; ++x) {
        const double d = std::hypot(y + 0.5 - cy, x + 0.5 - cx);
        if (d < radius) deposit(y, x, opacity * (1.0 - 0.5 * d / radius));
      }
    }
  }
  for (std::size_t i = 0; i < p.z_mask.size(); ++i) {
    p.r_mask[i] = p.z_mask[i] > 0.0 ? 1.0 : 0.0;
  }

  // Snow colour: near-white with a slight per-image tint and per-pixel jitter.
  const double base = uniform(0.85, 1.0);
  double tint[3];
  for (double& t : tint) t = uniform(-0.03, 0.03);
  for (int c = 0; c < 3; ++c) {
    for (auto& v : p.c_map.plane(c)) v = std::clamp(base + tint[c] + uniform(-0.02, 0.02), 0.0, 1.0);
  }

  const double airlight = uniform(cfg.atmospheric_light_range.first,
                                  cfg.atmospheric_light_range.second);
  p.a_map.fill(airlight);

  // Transmission: bilinear upsampling of a coarse random grid (spatially smooth).
  constexpr int kGrid = 4;
  double grid[kGrid + 1][kGrid + 1];
  for (auto& row : grid) {
    for (double& g : row) g = uniform(0.0, 1.0);
  }
  const double strength = uniform(cfg.haze_strength_range.first, cfg.haze_strength_range.second);
  for (int y = 0; y < height; ++y) {
    const double gy = (y + 0.5) / height * kGrid;
    const int iy = std::min(static_cast<int>(gy), kGrid - 1);
    const double fy = gy - iy;
    for (int x = 0; x < width; ++x) {
      const double gx = (x + 0.5) / width * kGrid;
      const int ix = std::min(static_cast<int>(gx), kGrid - 1);
      const double fx = gx - ix;
      const double field = (1 - fy) * ((1 - fx) * grid[iy][ix] + fx * grid[iy][ix + 1]) +
                           fy * ((1 - fx) * grid[iy + 1][ix] + fx * grid[iy + 1][ix + 1]);
      p.t_map.at(0, y, x) = 1.0 - strength * field;
    }
  }
  return p;
}

ImageTensor procedural_scene(std::uint64_t seed, int height, int width) {
  if (height <= 0 || width <= 0) throw DimensionError("procedural_scene: empty size");
  std::mt19937_64 rng(seed);
  auto uniform = [&rng](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  ImageTensor img(3, height, width);
  double top[3], bottom[3];
  for (int c = 0; c < 3; ++c) {
    top[c] = uniform(0.1, 0.9);
    bottom[c] = uniform(0.1, 0.9);
  }
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < height; ++y) {
      const double t = (y + 0.5) / height;
      for (int x = 0; x < width; ++x) img.at(c, y, x) = (1 - t) * top[c] + t * bottom[c];
    }
  }
  // A few coloured discs and bars with soft edges.
  const int shapes = 3 + static_cast<int>(uniform(0.0, 4.0));
  for (int s = 0; s < shapes; ++s) {
    const double cy = uniform(0.0, height);
    const double cx = uniform(0.0, width);
    const double ry = uniform(0.1, 0.35) * height;
    const double rx = uniform(0.1, 0.35) * width;
    const bool disc = uniform(0.0, 1.0) < 0.5;
    double colour[3];
    for (double& v : colour) v = uniform(0.05, 0.95);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const double u = (y + 0.5 - cy) / ry;
        const double v = (x + 0.5 - cx) / rx;
        const double d = disc ? std::sqrt(u * u + v * v) : std::max(std::abs(u), std::abs(v));
        const double alpha = std::clamp((1.0 - d) * 4.0, 0.0, 1.0);
        for (int c = 0; c < 3; ++c) {
          double& px = img.at(c, y, x);
          px = (1 - alpha) * px + alpha * colour[c];
        }
      }
    }
  }
  // Low-amplitude texture.
  const double fy = uniform(0.05, 0.3);
  const double fx = uniform(0.05, 0.3);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        double& px = img.at(c, y, x);
        px = std::clamp(px + 0.03 * std::sin(fy * y + fx * x + c), 0.0, 1.0);
      }
    }
  }
  return img;
}

SnowParams transform_params(const SnowParams& p, int rotations, bool flip) {
  SnowParams q;
  q.z_mask = dihedral(p.z_mask, rotations, flip);
  q.r_mask = dihedral(p.r_mask, rotations, flip);
  q.c_map = dihedral(p.c_map, rotations, flip);
  q.a_map = dihedral(p.a_map, rotations, flip);
  q.t_map = dihedral(p.t_map, rotations, flip);
  return q;
}

// ---------------------------------------------------------------- dataset

std::string pair_id(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%05d", index);
  return buf;
}

namespace {

void write_maps(const SnowParams& p, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  for (const Tensor<double>* m : {&p.z_mask, &p.r_mask, &p.c_map, &p.a_map, &p.t_map}) {
    for (double v : m->values()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      char b[8];
      for (int i = 0; i < 8; ++i) b[i] = static_cast<char>(bits >> (8 * i));
      out.write(b, 8);
    }
  }
  if (!out) throw IoError(path.string(), "write failed");
}

}  // namespace

int make_pair_dataset(const SynthConfig& cfg, const std::vector<ImageTensor>& cleans,
                      const std::filesystem::path& out_dir) {
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError(out_dir.string(), "cannot create directory: " + ec.message());
  int written = 0;
  for (std::size_t i = 0; i < cleans.size(); ++i) {
    const std::string id = pair_id(static_cast<int>(i));
    SynthConfig item = cfg;
    item.rng_seed = splitmix64(cfg.rng_seed ^ splitmix64(i));
    // The stored clean image is 8-bit, so synthesis starts from the quantized scene.
    const ImageTensor clean = quantize8(cleans[i]);
    const SnowParams params = generate_snow_params(item, clean.height(), clean.width());
    const ImageTensor snowy = clamp01(synthesize_snow(clean, params));

    write_png(snowy, out_dir / (id + "_snow.png"));
    write_png(clean, out_dir / (id + "_gt.png"));
    write_maps(params, out_dir / (id + "_maps.bin"));
    KeyValues manifest{{"id", id},
                       {"height", std::to_string(clean.height())},
                       {"width", std::to_string(clean.width())},
                       {"seed", std::to_string(item.rng_seed)},
                       {"maps_file", id + "_maps.bin"},
                       {"maps_layout", "z_mask:1,r_mask:1,c_map:3,a_map:3,t_map:1 float64le planar"},
                       {"snowy", id + "_snow.png"},
                       {"clean", id + "_gt.png"}};
    write_key_values(manifest, out_dir / (id + "_params.txt"));
    ++written;
  }
  return written;
}

SnowParams load_snow_params(const std::filesystem::path& manifest_path) {
  const KeyValues kv = read_key_values(manifest_path);
  auto get = [&](const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw IoError(manifest_path.string(), "missing key '" + key + "'");
    return it->second;
  };
  const int h = std::stoi(get("height"));
  const int w = std::stoi(get("width"));
  const auto maps_path = manifest_path.parent_path() / get("maps_file");
  std::ifstream in(maps_path, std::ios::binary);
  if (!in) throw IoError(maps_path.string(), "cannot open map dump");
  SnowParams p;
  p.z_mask = Tensor<double>(1, h, w);
  p.r_mask = Tensor<double>(1, h, w);
  p.c_map = Tensor<double>(3, h, w);
  p.a_map = Tensor<double>(3, h, w);
  p.t_map = Tensor<double>(1, h, w);
  for (Tensor<double>* m : {&p.z_mask, &p.r_mask, &p.c_map, &p.a_map, &p.t_map}) {
    for (double& v : m->values()) {
      unsigned char b[8];
      if (!in.read(reinterpret_cast<char*>(b), 8)) {
        throw IoError(maps_path.string(), "truncated map dump");
      }
      std::uint64_t bits = 0;
      for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
      v = std::bit_cast<double>(bits);
    }
  }
  return p;
}

}  // namespace epn
