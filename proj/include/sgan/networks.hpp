#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sgan/image.hpp"
#include "sgan/phantom.hpp"
#include "sgan/steerable.hpp"
#include "sgan/tensor.hpp"

namespace sgan {

struct GeneratorConfig {
  int in_channels = 2;
  int out_channels = 1;
  int base_width = 64;
  int n_downsample = 3;
  int n_residual_blocks = 9;
  int n_upsample = 3;
};

struct DiscriminatorConfig {
  int in_channels = 3;  // two conditioning channels + one MRA channel
  int base_width = 64;
  int n_strided = 3;  // stride 2
  int n_plain = 2;    // stride 1; the last layer emits the patch logits
  double leaky_slope = 0.2;
};

struct LossWeights {
  double lambda_adv = 0.005;
  double lambda_rec = 0.8;
  double lambda_steer = 0.145;
};

struct TrainConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int total_epochs = 50;
  int decay_start_epoch = 30;
  int batch_size = 4;
  uint64_t seed = 1;
};

enum class AdvMode { NonSaturating, Saturating };

struct ConvLayer {
  Tensor weight;
  Tensor bias;
  int stride = 1;
  int pad = 0;
  bool transposed = false;

  Tensor forward(const Tensor& x) const;
};

struct BatchNormLayer {
  Tensor gamma;
  Tensor beta;
  RunningStats stats;

  Tensor forward(const Tensor& x, BnMode mode);
};

// Johnson-style encoder / residual / decoder generator. 7x7 convolutions at
// the ends, 3x3 in between, 4x4 fractional-stride convolutions for
// upsampling (exact size doubling), tanh output.
class GeneratorNet {
 public:
  GeneratorNet() = default;
  GeneratorNet(const GeneratorConfig& cfg, uint64_t init_seed);

  Tensor forward(const Tensor& x, BnMode mode);

  std::vector<Tensor> params();
  std::vector<std::pair<std::string, Tensor>> named_params();
  std::vector<std::pair<std::string, RunningStats*>> named_stats();
  void zero_grads();

  const GeneratorConfig& config() const { return cfg_; }

 private:
  struct ResBlock {
    ConvLayer c1, c2;
    BatchNormLayer b1, b2;
  };
  GeneratorConfig cfg_;
  ConvLayer head_;
  BatchNormLayer head_bn_;
  std::vector<ConvLayer> down_;
  std::vector<BatchNormLayer> down_bn_;
  std::vector<ResBlock> blocks_;
  std::vector<ConvLayer> up_;
  std::vector<BatchNormLayer> up_bn_;
  ConvLayer tail_;
};

// PatchGAN discriminator over the channel-concatenated (x, y) pair;
// raw logits out (sigmoid lives in the losses).
class DiscriminatorNet {
 public:
  DiscriminatorNet() = default;
  DiscriminatorNet(const DiscriminatorConfig& cfg, uint64_t init_seed);

  Tensor forward(const Tensor& x, const Tensor& y, BnMode mode);

  std::vector<Tensor> params();
  std::vector<std::pair<std::string, Tensor>> named_params();
  std::vector<std::pair<std::string, RunningStats*>> named_stats();
  void zero_grads();

  const DiscriminatorConfig& config() const { return cfg_; }

 private:
  DiscriminatorConfig cfg_;
  std::vector<ConvLayer> layers_;
  std::vector<BatchNormLayer> bns_;  // for layers 1 .. n-2
};

// --- losses -----------------------------------------------------------------

// -mean log sigma(real) - mean log(1 - sigma(fake)), in logit space.
Tensor adversarial_loss_d(const Tensor& real_logits, const Tensor& fake_logits);

// NonSaturating: -mean log sigma(fake); Saturating: mean log(1 - sigma(fake)).
Tensor adversarial_loss_g(const Tensor& fake_logits, AdvMode mode);

// Mean absolute difference.
Tensor reconstruction_loss(const Tensor& y, const Tensor& y_hat);

Tensor total_generator_loss(const Tensor& adv, const Tensor& rec,
                            const Tensor& steer, const LossWeights& w);

// Constant until decay_start_epoch, then linear to 0 at total_epochs.
// e is 1-based.
double lr_at_epoch(int e, const TrainConfig& cfg);

// --- data normalization -------------------------------------------------------

struct VolumeStats {
  double mean = 0.0;
  double std = 1.0;
};

// Statistics over the entire stack (not per slice); normalizes in place.
VolumeStats normalize_volume(std::vector<Image>& stack);
void denormalize(Image& img, const VolumeStats& stats);

// Per-channel input statistics used to assemble training batches.
struct InputNormalization {
  VolumeStats t1;
  VolumeStats t2;
};

// x: standardized (t1, t2); y: mra mapped affinely to [-1, 1] for tanh.
Tensor make_input_batch(const std::vector<const SamplePair*>& samples,
                        const InputNormalization& norm);
Tensor make_target_batch(const std::vector<const SamplePair*>& samples);
Image target_to_image(const Tensor& y, int batch_index);

// --- training -----------------------------------------------------------------

struct StepLosses {
  double d_loss = 0.0;
  double g_adv = 0.0;
  double g_rec = 0.0;
  double g_steer = 0.0;
  double g_total = 0.0;
};

struct TrainState {
  GeneratorNet generator;
  DiscriminatorNet discriminator;
  std::vector<AdamState> g_opt;
  std::vector<AdamState> d_opt;
  GeneratorConfig g_cfg;
  DiscriminatorConfig d_cfg;
  TrainConfig train_cfg;
  LossWeights weights;
  AdvMode adv_mode = AdvMode::NonSaturating;
  InputNormalization norm;
  int epochs_completed = 0;
};

TrainState make_train_state(const GeneratorConfig& g_cfg,
                            const DiscriminatorConfig& d_cfg,
                            const TrainConfig& train_cfg,
                            const LossWeights& weights,
                            const InputNormalization& norm);

// One discriminator update (fake detached) then one generator update.
StepLosses train_step(TrainState& state, const Tensor& x, const Tensor& y,
                      const FilterBank& bank, double lr);

// Full epoch over `data` in a seed-and-epoch-determined order. epoch is
// 1-based; returns per-epoch mean losses.
StepLosses train_epoch(TrainState& state,
                       const std::vector<SamplePair>& data,
                       const FilterBank& bank, int epoch);

// --- checkpoints --------------------------------------------------------------
// Container: "SGAN" magic, u32 version, u64 JSON header length, JSON header
// (configs, epoch, parameter manifest with shapes and byte offsets), then
// little-endian f64 blobs in manifest order. Written atomically.

void checkpoint_save(TrainState& state, const std::string& path);
TrainState checkpoint_load(const std::string& path);

}  // namespace sgan
