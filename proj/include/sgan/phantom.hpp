#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sgan/image.hpp"

namespace sgan {

// Aligned (t1, t2, mra) triple with the ground-truth vessel raster.
struct SamplePair {
  Image t1;
  Image t2;
  Image mra;
  Image vessel_mask;  // values in {0, 1}
  std::string stem;
};

struct PhantomParams {
  int size = 64;               // must be divisible by 8
  int min_vessels = 3;
  int max_vessels = 6;
  double min_width = 1.0;      // pixels
  double max_width = 3.0;
  int tissue_blob_count = 8;
  double noise_std = 0.02;
  uint64_t seed = 1;
};

// Deterministic in (params, index); every sample independently reproducible.
SamplePair generate_phantom(const PhantomParams& params, int index);

// <stem>_{t1,t2,mra,mask}.pgm in dir; mask quantizes to {0, 65535}.
void write_sample(const std::string& dir, const SamplePair& sample);
SamplePair read_sample(const std::string& dir, const std::string& stem);

struct DatasetManifest {
  int version = 1;
  PhantomParams params;
  std::vector<std::string> train;
  std::vector<std::string> test;
};

// Generates n_train + n_test samples under out_dir and writes manifest.json.
// Refuses a non-empty out_dir unless overwrite is set.
DatasetManifest build_dataset(const PhantomParams& params, int n_train,
                              int n_test, const std::string& out_dir,
                              bool overwrite = false);

DatasetManifest read_manifest(const std::string& dataset_dir);

}  // namespace sgan
