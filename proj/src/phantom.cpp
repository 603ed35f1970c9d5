#include "sgan/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace sgan {

namespace {

uint64_t mix_seed(uint64_t seed, uint64_t index) {
  // splitmix64 over the combined word
  uint64_t z = seed ^ (index * 0x9e3779b97f4a7c15ULL) ^ 0xd1b54a32d192ed03ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  const double u = (rng() >> 11) * 0x1.0p-53;  // [0,1)
  return lo + u * (hi - lo);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {  // inclusive
  return lo + static_cast<int>(uniform(rng, 0.0, 1.0) * (hi - lo + 1));
}

double gaussian(std::mt19937_64& rng) {
  // Box-Muller; implementation pinned so datasets are reproducible
  // independent of the standard library's normal_distribution.
  double u1 = uniform(rng, 0.0, 1.0);
  while (u1 <= 1e-300) u1 = uniform(rng, 0.0, 1.0);
  const double u2 = uniform(rng, 0.0, 1.0);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// Smooth tissue field from random Gaussian blobs, rescaled to [0, 1].
Image blob_field(std::mt19937_64& rng, int size, int count) {
  Image b(size, size, 0.0);
  for (int i = 0; i < count; ++i) {
    const double cx = uniform(rng, 0.0, size);
    const double cy = uniform(rng, 0.0, size);
    const double s = uniform(rng, size / 10.0, size / 4.0);
    const double a = uniform(rng, 0.3, 1.0);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        b.at(y, x) += a * std::exp(-d2 / (2.0 * s * s));
      }
  }
  const double mx = *std::max_element(b.pixels.begin(), b.pixels.end());
  if (mx > 0) {
    for (double& v : b.pixels) v /= mx;
  }
  return b;
}

// Stamps an anti-aliased disc of diameter `width` centered at (cx, cy).
void stamp(Image& img, double cx, double cy, double width) {
  const double r = width / 2.0;
  const int lo_y = std::max(0, static_cast<int>(std::floor(cy - r - 1)));
  const int hi_y = std::min(img.height - 1, static_cast<int>(std::ceil(cy + r + 1)));
  const int lo_x = std::max(0, static_cast<int>(std::floor(cx - r - 1)));
  const int hi_x = std::min(img.width - 1, static_cast<int>(std::ceil(cx + r + 1)));
  for (int y = lo_y; y <= hi_y; ++y)
    for (int x = lo_x; x <= hi_x; ++x) {
      const double d = std::hypot(x - cx, y - cy);
      const double cover = std::clamp(r + 0.5 - d, 0.0, 1.0);
      img.at(y, x) = std::max(img.at(y, x), cover);
    }
}

// Curvilinear random-walk path rasterized with anti-aliased width.
void draw_vessel(Image& raster, std::mt19937_64& rng, int size,
                 double min_width, double max_width) {
  double x = uniform(rng, 0.1 * size, 0.9 * size);
  double y = uniform(rng, 0.1 * size, 0.9 * size);
  double angle = uniform(rng, 0.0, 2.0 * M_PI);
  const double width = uniform(rng, min_width, max_width);
  const int steps = static_cast<int>(1.5 * size);
  for (int i = 0; i < steps; ++i) {
    stamp(raster, x, y, width);
    angle += 0.15 * gaussian(rng);
    x += std::cos(angle);
    y += std::sin(angle);
    if (x < -2 || y < -2 || x > size + 2 || y > size + 2) break;
  }
}

std::string stem_for(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "ph_%05d", index);
  return buf;
}

json params_to_json(const PhantomParams& p) {
  return json{{"size", p.size},
              {"min_vessels", p.min_vessels},
              {"max_vessels", p.max_vessels},
              {"min_width", p.min_width},
              {"max_width", p.max_width},
              {"tissue_blob_count", p.tissue_blob_count},
              {"noise_std", p.noise_std},
              {"seed", p.seed}};
}

PhantomParams params_from_json(const json& j) {
  PhantomParams p;
  p.size = j.at("size");
  p.min_vessels = j.at("min_vessels");
  p.max_vessels = j.at("max_vessels");
  p.min_width = j.at("min_width");
  p.max_width = j.at("max_width");
  p.tissue_blob_count = j.at("tissue_blob_count");
  p.noise_std = j.at("noise_std");
  p.seed = j.at("seed");
  return p;
}

}  // namespace

SamplePair generate_phantom(const PhantomParams& params, int index) {
  if (params.size % 8 != 0) {
    throw std::invalid_argument("phantom size must be divisible by 8");
  }
  if (params.noise_std < 0) {
    throw std::invalid_argument("noise_std must be >= 0");
  }
  std::mt19937_64 rng(mix_seed(params.seed, static_cast<uint64_t>(index)));
  const int size = params.size;

  Image tissue = blob_field(rng, size, params.tissue_blob_count);
  Image vessels(size, size, 0.0);
  const int n_vessels = uniform_int(rng, params.min_vessels, params.max_vessels);
  for (int i = 0; i < n_vessels; ++i) {
    draw_vessel(vessels, rng, size, params.min_width, params.max_width);
  }

  SamplePair s;
  s.stem = stem_for(index);
  s.vessel_mask = Image(size, size, 0.0);
  for (size_t i = 0; i < s.vessel_mask.size(); ++i) {
    s.vessel_mask.pixels[i] = vessels.pixels[i] >= 0.5 ? 1.0 : 0.0;
  }

  s.t1 = Image(size, size);
  s.t2 = Image(size, size);
  s.mra = Image(size, size);
  for (size_t i = 0; i < s.t1.size(); ++i) {
    const double b = tissue.pixels[i];
    const double v = vessels.pixels[i];
    // Two different tissue contrast mappings; vessels faint/dark in both.
    double t1 = (0.25 + 0.6 * b) * (1.0 - 0.7 * v);
    double t2 = (0.85 - 0.55 * b) * (1.0 - 0.5 * v);
    double mra = 0.12 + 0.1 * b + 0.8 * v;
    if (params.noise_std > 0) {
      t1 += params.noise_std * gaussian(rng);
      t2 += params.noise_std * gaussian(rng);
      mra += params.noise_std * gaussian(rng);
    }
    s.t1.pixels[i] = std::clamp(t1, 0.0, 1.0);
    s.t2.pixels[i] = std::clamp(t2, 0.0, 1.0);
    s.mra.pixels[i] = std::clamp(mra, 0.0, 1.0);
  }
  return s;
}

void write_sample(const std::string& dir, const SamplePair& sample) {
  const fs::path d(dir);
  write_pgm16((d / (sample.stem + "_t1.pgm")).string(), sample.t1);
  write_pgm16((d / (sample.stem + "_t2.pgm")).string(), sample.t2);
  write_pgm16((d / (sample.stem + "_mra.pgm")).string(), sample.mra);
  write_pgm16((d / (sample.stem + "_mask.pgm")).string(), sample.vessel_mask);
}

SamplePair read_sample(const std::string& dir, const std::string& stem) {
  const fs::path d(dir);
  SamplePair s;
  s.stem = stem;
  s.t1 = read_pgm16((d / (stem + "_t1.pgm")).string());
  s.t2 = read_pgm16((d / (stem + "_t2.pgm")).string());
  s.mra = read_pgm16((d / (stem + "_mra.pgm")).string());
  s.vessel_mask = read_pgm16((d / (stem + "_mask.pgm")).string());
  auto same = [&](const Image& a) {
    return a.height == s.t1.height && a.width == s.t1.width;
  };
  if (!same(s.t2) || !same(s.mra) || !same(s.vessel_mask)) {
    throw std::runtime_error("channel size mismatch for stem " + stem);
  }
  for (double& v : s.vessel_mask.pixels) v = v >= 0.5 ? 1.0 : 0.0;
  return s;
}

DatasetManifest build_dataset(const PhantomParams& params, int n_train,
                              int n_test, const std::string& out_dir,
                              bool overwrite) {
  if (n_train <= 0 || n_test <= 0) {
    throw std::invalid_argument("n_train and n_test must be positive");
  }
  const fs::path d(out_dir);
  if (fs::exists(d) && !fs::is_empty(d) && !overwrite) {
    throw std::runtime_error("output directory not empty (pass overwrite): " +
                             out_dir);
  }
  fs::create_directories(d);

  DatasetManifest m;
  m.params = params;
  for (int i = 0; i < n_train + n_test; ++i) {
    SamplePair s = generate_phantom(params, i);
    write_sample(out_dir, s);
    (i < n_train ? m.train : m.test).push_back(s.stem);
  }
  json j{{"version", m.version},
         {"params", params_to_json(params)},
         {"seed", params.seed},
         {"train", m.train},
         {"test", m.test}};
  std::ofstream f(d / "manifest.json");
  f << j.dump(2) << "\n";
  if (!f) throw std::runtime_error("failed to write manifest.json");
  return m;
}

DatasetManifest read_manifest(const std::string& dataset_dir) {
  std::ifstream f(fs::path(dataset_dir) / "manifest.json");
  if (!f) {
    throw std::runtime_error("missing manifest.json in " + dataset_dir);
  }
  json j = json::parse(f);
  DatasetManifest m;
  m.version = j.at("version");
  m.params = params_from_json(j.at("params"));
  m.train = j.at("train").get<std::vector<std::string>>();
  m.test = j.at("test").get<std::vector<std::string>>();
  return m;
}

}  // namespace sgan
