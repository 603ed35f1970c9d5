#include "sgan/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace sgan {

namespace {

void check_same_size(const Image& a, const Image& b, const char* op) {
  if (a.height != b.height || a.width != b.width) {
    throw std::invalid_argument(std::string(op) + ": image size mismatch " +
                                std::to_string(a.height) + "x" +
                                std::to_string(a.width) + " vs " +
                                std::to_string(b.height) + "x" +
                                std::to_string(b.width));
  }
}

int clamp_idx(int i, int n) { return std::clamp(i, 0, n - 1); }

// Separable Gaussian smoothing with edge replication, radius 3 sigma.
Image gaussian_smooth(const Image& img, double sigma) {
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * r + 1);
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    k[i + r] = std::exp(-i * i / (2.0 * sigma * sigma));
    sum += k[i + r];
  }
  for (double& v : k) v /= sum;

  Image tmp(img.height, img.width), out(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i)
        acc += k[i + r] * img.at(y, clamp_idx(x + i, img.width));
      tmp.at(y, x) = acc;
    }
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i)
        acc += k[i + r] * tmp.at(clamp_idx(y + i, img.height), x);
      out.at(y, x) = acc;
    }
  return out;
}

}  // namespace

double psnr(const Image& reference, const Image& generated) {
  check_same_size(reference, generated, "psnr");
  const double peak =
      *std::max_element(reference.pixels.begin(), reference.pixels.end());
  if (peak == 0.0) {
    throw std::invalid_argument("psnr: reference image is constant zero");
  }
  double mse = 0.0;
  for (size_t i = 0; i < reference.size(); ++i) {
    const double d = reference.pixels[i] - generated.pixels[i];
    mse += d * d;
  }
  mse /= static_cast<double>(reference.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

Image hessian_vesselness(const Image& image, const std::vector<double>& scales,
                         double beta) {
  if (scales.empty()) {
    throw std::invalid_argument("hessian_vesselness: empty scale list");
  }
  for (double s : scales) {
    if (s <= 0) throw std::invalid_argument("hessian_vesselness: scale <= 0");
  }
  const int H = image.height, W = image.width;
  Image result(H, W, 0.0);
  const double two_beta2 = 2.0 * beta * beta;

  for (double sigma : scales) {
    Image g = gaussian_smooth(image, sigma);
    const double s2 = sigma * sigma;  // scale normalization
    Image ixx(H, W), iyy(H, W), ixy(H, W);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const int xm = clamp_idx(x - 1, W), xp = clamp_idx(x + 1, W);
        const int ym = clamp_idx(y - 1, H), yp = clamp_idx(y + 1, H);
        ixx.at(y, x) = s2 * (g.at(y, xp) - 2.0 * g.at(y, x) + g.at(y, xm));
        iyy.at(y, x) = s2 * (g.at(yp, x) - 2.0 * g.at(y, x) + g.at(ym, x));
        ixy.at(y, x) = s2 * 0.25 *
                       (g.at(yp, xp) - g.at(yp, xm) - g.at(ym, xp) +
                        g.at(ym, xm));
      }
    // auto c: half the maximum Frobenius norm at this scale
    double max_frob = 0.0;
    for (int i = 0; i < H * W; ++i) {
      const double f = std::sqrt(ixx.pixels[i] * ixx.pixels[i] +
                                 2.0 * ixy.pixels[i] * ixy.pixels[i] +
                                 iyy.pixels[i] * iyy.pixels[i]);
      max_frob = std::max(max_frob, f);
    }
    if (max_frob == 0.0) continue;  // flat image at this scale
    const double c = 0.5 * max_frob;
    const double two_c2 = 2.0 * c * c;

    for (int i = 0; i < H * W; ++i) {
      const double a = ixx.pixels[i], b = ixy.pixels[i], d = iyy.pixels[i];
      const double tr = 0.5 * (a + d);
      const double disc = std::sqrt(0.25 * (a - d) * (a - d) + b * b);
      double l1 = tr - disc, l2 = tr + disc;
      if (std::fabs(l1) > std::fabs(l2)) std::swap(l1, l2);  // |l1| <= |l2|
      if (l2 >= 0.0) continue;  // dark or flat structure
      const double R = l1 / l2;
      const double S2 = a * a + 2.0 * b * b + d * d;
      const double v = std::exp(-R * R / two_beta2) *
                       (1.0 - std::exp(-S2 / two_c2));
      result.pixels[i] = std::max(result.pixels[i], v);
    }
  }
  return result;
}

SegmentationMap segment_vessels(const Image& image,
                                const SegmentationParams& params) {
  if (params.threshold <= 0.0 || params.threshold >= 1.0) {
    throw std::invalid_argument("segment_vessels: threshold must be in (0,1)");
  }
  Image v = hessian_vesselness(image, params.scales, params.beta);
  SegmentationMap seg;
  seg.params = params;
  seg.mask = Image(image.height, image.width, 0.0);
  for (size_t i = 0; i < v.size(); ++i) {
    seg.mask.pixels[i] = v.pixels[i] >= params.threshold ? 1.0 : 0.0;
  }
  return seg;
}

double dice(const Image& a, const Image& b) {
  check_same_size(a, b, "dice");
  int64_t inter = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    const bool pa = a.pixels[i] != 0.0;
    const bool pb = b.pixels[i] != 0.0;
    na += pa;
    nb += pb;
    inter += pa && pb;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

EvalReport evaluate_test_set(const std::string& model_output_dir,
                             const std::string& reference_dir,
                             const SegmentationParams& params) {
  const std::string gen_suffix = "_mra_gen.pgm";
  const std::string ref_suffix = "_mra.pgm";

  std::map<std::string, fs::path> generated;  // sorted stems => deterministic
  for (const auto& e : fs::directory_iterator(model_output_dir)) {
    const std::string name = e.path().filename().string();
    if (name.size() > gen_suffix.size() &&
        name.ends_with(gen_suffix)) {
      generated[name.substr(0, name.size() - gen_suffix.size())] = e.path();
    }
  }

  EvalReport report;
  report.params = params;
  std::vector<double> psnrs, dices;
  for (const auto& [stem, gen_path] : generated) {
    const fs::path ref_path = fs::path(reference_dir) / (stem + ref_suffix);
    if (!fs::exists(ref_path)) {
      report.warnings.push_back("no reference for stem " + stem);
      ++report.warning_count;
      continue;
    }
    Image ref = read_pgm16(ref_path.string());
    Image gen = read_pgm16(gen_path.string());
    PerImageResult r;
    r.stem = stem;
    const double p = psnr(ref, gen);
    if (std::isinf(p)) {
      ++report.infinite_psnr_count;
    } else {
      r.psnr_db = p;
      psnrs.push_back(p);
    }
    auto seg_ref = segment_vessels(ref, params);
    auto seg_gen = segment_vessels(gen, params);
    r.dice_score = dice(seg_ref.mask, seg_gen.mask);
    dices.push_back(r.dice_score);
    report.per_image.push_back(std::move(r));
  }
  report.pair_count = static_cast<int>(report.per_image.size());
  if (report.pair_count == 0) {
    throw std::runtime_error("evaluate_test_set: no generated/reference pairs");
  }

  auto mean_std = [](const std::vector<double>& v, double& m, double& sd) {
    if (v.empty()) {
      m = sd = 0.0;
      return;
    }
    m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    sd = 0.0;
    for (double x : v) sd += (x - m) * (x - m);
    sd = std::sqrt(sd / static_cast<double>(v.size()));
  };
  mean_std(psnrs, report.mean_psnr, report.std_psnr);
  mean_std(dices, report.mean_dice, report.std_dice);
  return report;
}

void write_report_json(const EvalReport& report, const std::string& path) {
  json per = json::array();
  for (const auto& r : report.per_image) {
    json item{{"stem", r.stem}, {"dice", r.dice_score}};
    if (r.psnr_db) {
      item["psnr_db"] = *r.psnr_db;
      item["psnr_infinite"] = false;
    } else {
      item["psnr_db"] = nullptr;
      item["psnr_infinite"] = true;
    }
    per.push_back(std::move(item));
  }
  json j{{"version", 1},
         {"params",
          {{"scales", report.params.scales},
           {"beta", report.params.beta},
           {"threshold", report.params.threshold}}},
         {"per_image", per},
         {"aggregates",
          {{"pair_count", report.pair_count},
           {"infinite_psnr_count", report.infinite_psnr_count},
           {"warning_count", report.warning_count},
           {"mean_psnr_db", report.mean_psnr},
           {"std_psnr_db", report.std_psnr},
           {"mean_dice", report.mean_dice},
           {"std_dice", report.std_dice}}}};
  std::ofstream f(path);
  f << j.dump(2) << "\n";
  if (!f) throw std::runtime_error("failed to write report: " + path);
}

void write_report_csv(const EvalReport& report, const std::string& path) {
  std::ofstream f(path);
  f << "stem,psnr_db,dice\n";
  f.precision(17);
  for (const auto& r : report.per_image) {
    f << r.stem << ",";
    if (r.psnr_db) {
      f << *r.psnr_db;
    } else {
      f << "inf";
    }
    f << "," << r.dice_score << "\n";
  }
  if (!f) throw std::runtime_error("failed to write report: " + path);
}

}  // namespace sgan
