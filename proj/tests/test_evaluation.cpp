#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "sgan/evaluation.hpp"
#include "sgan/phantom.hpp"

using namespace sgan;
namespace fs = std::filesystem;

namespace {

Image ridge_image(int size, double sigma_profile) {
  // bright horizontal ridge through the middle row
  Image img(size, size, 0.0);
  const double cy = size / 2.0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      img.at(y, x) =
          std::exp(-(y - cy) * (y - cy) / (2.0 * sigma_profile * sigma_profile));
  return img;
}

Image rotate90(const Image& img) {
  Image out(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      out.at(x, img.height - 1 - y) = img.at(y, x);
  return out;
}

fs::path temp_dir(const std::string& tag) {
  auto d = fs::temp_directory_path() / ("sgan_eval_" + tag);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("psnr exact cases") {
  Image ref(10, 10, 0.0);
  ref.at(0, 0) = 1.0;
  CHECK(std::isinf(psnr(ref, ref)));

  // one pixel off by 1 over 100 pixels: MSE 0.01, peak 1 -> 20 dB
  Image gen = ref;
  gen.at(5, 5) = 1.0;
  gen.at(0, 0) = 1.0;
  Image ref2 = ref;
  ref2.at(5, 5) = 0.0;
  CHECK(psnr(ref2, gen) == doctest::Approx(20.0).epsilon(1e-12));

  // uniform difference 0.5: MSE 0.25 -> 10 log10(4)
  Image a(4, 4, 1.0), b(4, 4, 0.5);
  CHECK(psnr(a, b) == doctest::Approx(10.0 * std::log10(4.0)).epsilon(1e-12));
}

TEST_CASE("psnr errors") {
  Image a(4, 4, 0.0), b(5, 4, 0.0);
  CHECK_THROWS_AS(psnr(a, b), std::invalid_argument);
  Image z(4, 4, 0.0);
  CHECK_THROWS_AS(psnr(z, z), std::invalid_argument);
}

TEST_CASE("psnr invariant under identical pixel permutation") {
  std::mt19937_64 rng(3);
  Image a(8, 8), b(8, 8);
  for (size_t i = 0; i < a.size(); ++i) {
    a.pixels[i] = (rng() >> 11) * 0x1.0p-53;
    b.pixels[i] = (rng() >> 11) * 0x1.0p-53;
  }
  const double base = psnr(a, b);
  std::vector<size_t> perm(a.size());
  for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  Image ap(8, 8), bp(8, 8);
  for (size_t i = 0; i < perm.size(); ++i) {
    ap.pixels[i] = a.pixels[perm[i]];
    bp.pixels[i] = b.pixels[perm[i]];
  }
  CHECK(psnr(ap, bp) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("vesselness of constant image is zero") {
  Image img(16, 16, 0.42);
  auto v = hessian_vesselness(img, {1.0, 2.0}, 0.5);
  for (double x : v.pixels) CHECK(x == 0.0);
}

TEST_CASE("vesselness rejects empty or bad scales") {
  Image img(8, 8, 0.0);
  CHECK_THROWS_AS(hessian_vesselness(img, {}, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(hessian_vesselness(img, {-1.0}, 0.5), std::invalid_argument);
}

TEST_CASE("ridge centerline vesselness dominates background") {
  auto img = ridge_image(32, 1.5);
  auto v = hessian_vesselness(img, {1.0, 2.0, 3.0}, 0.5);
  double center = 0.0, background = 0.0;
  for (int x = 4; x < 28; ++x) {
    center = std::max(center, v.at(16, x));
    background = std::max(background, v.at(4, x));
  }
  CHECK(center >= 10.0 * std::max(background, 1e-12));
}

TEST_CASE("vesselness map values lie in [0, 1]") {
  auto s = generate_phantom(PhantomParams{}, 0);
  auto v = hessian_vesselness(s.mra, {1.0, 2.0, 3.0}, 0.5);
  for (double x : v.pixels) {
    CHECK(x >= 0.0);
    CHECK(x <= 1.0);
  }
}

TEST_CASE("axis-aligned rotation commutes with vesselness") {
  auto s = generate_phantom(PhantomParams{}, 3);
  auto v = hessian_vesselness(s.mra, {1.0, 2.0}, 0.5);
  auto vr = hessian_vesselness(rotate90(s.mra), {1.0, 2.0}, 0.5);
  auto rv = rotate90(v);
  for (size_t i = 0; i < rv.size(); ++i)
    CHECK(vr.pixels[i] == doctest::Approx(rv.pixels[i]).epsilon(1e-12));
}

TEST_CASE("segment_vessels threshold behavior") {
  auto s = generate_phantom(PhantomParams{}, 5);
  SegmentationParams p;
  auto v = hessian_vesselness(s.mra, p.scales, p.beta);
  const double vmax = *std::max_element(v.pixels.begin(), v.pixels.end());
  REQUIRE(vmax > 0.0);

  SegmentationParams high = p;
  high.threshold = std::min(0.999, vmax + 1e-6);
  if (high.threshold > vmax) {
    auto seg = segment_vessels(s.mra, high);
    for (double x : seg.mask.pixels) CHECK(x == 0.0);
  }

  SegmentationParams tiny = p;
  tiny.threshold = 1e-9;
  auto seg = segment_vessels(s.mra, tiny);
  for (size_t i = 0; i < v.size(); ++i)
    CHECK(seg.mask.pixels[i] == (v.pixels[i] > 0.0 ? 1.0 : 0.0));

  // monotone: raising the threshold never grows the mask
  SegmentationParams lo = p, hi = p;
  lo.threshold = 0.1;
  hi.threshold = 0.3;
  auto mlo = segment_vessels(s.mra, lo).mask;
  auto mhi = segment_vessels(s.mra, hi).mask;
  for (size_t i = 0; i < mlo.size(); ++i)
    CHECK(mhi.pixels[i] <= mlo.pixels[i]);
}

TEST_CASE("segment_vessels validates threshold and is reproducible") {
  auto s = generate_phantom(PhantomParams{}, 2);
  SegmentationParams p;
  p.threshold = 1.5;
  CHECK_THROWS_AS(segment_vessels(s.mra, p), std::invalid_argument);

  SegmentationParams def;
  auto a = segment_vessels(s.mra, def);
  auto b = segment_vessels(s.mra, def);
  for (size_t i = 0; i < a.mask.size(); ++i)
    CHECK(a.mask.pixels[i] == b.mask.pixels[i]);
}

TEST_CASE("dice exact cases and symmetry") {
  Image a(4, 4, 0.0), b(4, 4, 0.0);
  CHECK(dice(a, b) == 1.0);  // both empty
  a.at(0, 0) = 1.0;
  a.at(0, 1) = 1.0;
  b.at(0, 1) = 1.0;
  b.at(3, 3) = 1.0;
  CHECK(dice(a, b) == doctest::Approx(0.5));  // 2*1/(2+2)
  CHECK(dice(a, b) == dice(b, a));

  Image c(4, 4, 0.0), d(4, 4, 0.0);
  c.at(0, 0) = 1.0;
  d.at(1, 1) = 1.0;
  CHECK(dice(c, d) == 0.0);  // disjoint
  CHECK(dice(c, c) == 1.0);  // identical non-empty
}

TEST_CASE("segmentation against ground truth on phantoms reaches Dice 0.7") {
  PhantomParams p;
  SegmentationParams seg;
  double total = 0.0;
  const int n = 10;
  for (int i = 0; i < n; ++i) {
    auto s = generate_phantom(p, i);
    auto m = segment_vessels(s.mra, seg);
    total += dice(m.mask, s.vessel_mask);
  }
  CHECK(total / n >= 0.7);
}

TEST_CASE("evaluate_test_set on identical pairs") {
  auto ref_dir = temp_dir("ref");
  auto gen_dir = temp_dir("gen");
  PhantomParams p;
  const int n = 3;
  for (int i = 0; i < n; ++i) {
    auto s = generate_phantom(p, i);
    write_pgm16((ref_dir / (s.stem + "_mra.pgm")).string(), s.mra);
    write_pgm16((gen_dir / (s.stem + "_mra_gen.pgm")).string(), s.mra);
  }
  // one unpaired generated file
  auto stray = generate_phantom(p, 99);
  write_pgm16((gen_dir / "stray_mra_gen.pgm").string(), stray.mra);

  SegmentationParams seg;
  auto report = evaluate_test_set(gen_dir.string(), ref_dir.string(), seg);
  CHECK(report.pair_count == n);
  CHECK(report.infinite_psnr_count == n);
  CHECK(report.warning_count == 1);
  CHECK(report.mean_dice == doctest::Approx(1.0));

  auto json_path = (ref_dir / "report.json").string();
  auto csv_path = (ref_dir / "report.csv").string();
  write_report_json(report, json_path);
  write_report_csv(report, csv_path);

  std::ifstream csv(csv_path);
  std::string line;
  int rows = 0;
  bool saw_inf = false;
  while (std::getline(csv, line)) {
    if (line.find("inf") != std::string::npos) saw_inf = true;
    ++rows;
  }
  CHECK(rows == n + 1);  // header + one per pair
  CHECK(saw_inf);
}

TEST_CASE("evaluate_test_set aggregate matches hand-recomputed mean") {
  auto ref_dir = temp_dir("ref2");
  auto gen_dir = temp_dir("gen2");
  PhantomParams p;
  for (int i = 0; i < 4; ++i) {
    auto s = generate_phantom(p, i);
    write_pgm16((ref_dir / (s.stem + "_mra.pgm")).string(), s.mra);
    auto noisy = s.mra;
    for (size_t j = 0; j < noisy.size(); j += 7)
      noisy.pixels[j] = std::clamp(noisy.pixels[j] + 0.05, 0.0, 1.0);
    write_pgm16((gen_dir / (s.stem + "_mra_gen.pgm")).string(), noisy);
  }
  SegmentationParams seg;
  auto report = evaluate_test_set(gen_dir.string(), ref_dir.string(), seg);
  REQUIRE(report.pair_count == 4);
  double mp = 0.0, md = 0.0;
  for (const auto& r : report.per_image) {
    REQUIRE(r.psnr_db.has_value());
    mp += *r.psnr_db;
    md += r.dice_score;
  }
  CHECK(report.mean_psnr == doctest::Approx(mp / 4).epsilon(1e-12));
  CHECK(report.mean_dice == doctest::Approx(md / 4).epsilon(1e-12));

  auto again = evaluate_test_set(gen_dir.string(), ref_dir.string(), seg);
  CHECK(again.mean_psnr == report.mean_psnr);
  CHECK(again.mean_dice == report.mean_dice);
}

TEST_CASE("evaluate_test_set with zero pairs errors") {
  auto ref_dir = temp_dir("ref3");
  auto gen_dir = temp_dir("gen3");
  SegmentationParams seg;
  CHECK_THROWS_AS(
      evaluate_test_set(gen_dir.string(), ref_dir.string(), seg),
      std::runtime_error);
}
