#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sgan/image.hpp"

namespace sgan {

struct SegmentationParams {
  std::vector<double> scales = {1.0, 2.0, 3.0};
  double beta = 0.5;
  double threshold = 0.15;
};

// Binary vessel mask plus the parameters that produced it, so "same
// parameters" across an original/generated pair is machine-checkable.
struct SegmentationMap {
  Image mask;  // values in {0, 1}
  SegmentationParams params;
};

// 10 log10(max(y)^2 / MSE), in dB. Zero MSE returns +infinity.
double psnr(const Image& reference, const Image& generated);

// Frangi-style 2D vesselness for bright tubular structures, maximum over
// scales, values in [0, 1]. Scale-normalized derivatives (sigma^2 factor);
// per-scale c is half the maximum Hessian Frobenius norm.
Image hessian_vesselness(const Image& image, const std::vector<double>& scales,
                         double beta);

SegmentationMap segment_vessels(const Image& image,
                                const SegmentationParams& params);

// 2|a^b| / (|a|+|b|); both-empty pairs score 1.0.
double dice(const Image& a, const Image& b);

struct PerImageResult {
  std::string stem;
  std::optional<double> psnr_db;  // nullopt encodes the +inf sentinel
  double dice_score = 0.0;
};

struct EvalReport {
  SegmentationParams params;
  std::vector<PerImageResult> per_image;
  int pair_count = 0;
  int infinite_psnr_count = 0;
  int warning_count = 0;                  // unpaired files skipped
  std::vector<std::string> warnings;
  double mean_psnr = 0.0;                 // over finite values
  double std_psnr = 0.0;
  double mean_dice = 0.0;
  double std_dice = 0.0;
};

// Pairs <stem>_mra.pgm in reference_dir with <stem>_mra_gen.pgm in
// model_output_dir. Errors if no pair is found.
EvalReport evaluate_test_set(const std::string& model_output_dir,
                             const std::string& reference_dir,
                             const SegmentationParams& params);

void write_report_json(const EvalReport& report, const std::string& path);
void write_report_csv(const EvalReport& report, const std::string& path);

}  // namespace sgan
