#include "sgan/networks.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace sgan {

namespace {

double uniform01(std::mt19937_64& rng) { return (rng() >> 11) * 0x1.0p-53; }

double gaussian(std::mt19937_64& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 1e-300) u1 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * M_PI * uniform01(rng));
}

Tensor gaussian_tensor(std::vector<int> shape, std::mt19937_64& rng,
                       double mean, double std) {
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = mean + std * gaussian(rng);
  return Tensor::from_values(std::move(shape), std::move(v), true);
}

// Conv weights N(0, 0.02), zero bias.
ConvLayer make_conv(std::mt19937_64& rng, int cout, int cin, int k, int stride,
                    int pad, bool transposed = false) {
  ConvLayer layer;
  layer.stride = stride;
  layer.pad = pad;
  layer.transposed = transposed;
  // transposed kernels are stored Cin x Cout x kh x kw
  layer.weight = transposed ? gaussian_tensor({cin, cout, k, k}, rng, 0.0, 0.02)
                            : gaussian_tensor({cout, cin, k, k}, rng, 0.0, 0.02);
  layer.bias = Tensor::zeros({cout}, true);
  return layer;
}

// gamma ~ N(1, 0.02), beta 0.
BatchNormLayer make_bn(std::mt19937_64& rng, int channels) {
  BatchNormLayer bn;
  bn.gamma = gaussian_tensor({channels}, rng, 1.0, 0.02);
  bn.beta = Tensor::zeros({channels}, true);
  return bn;
}

void push_params(std::vector<std::pair<std::string, Tensor>>& out,
                 const std::string& prefix, const ConvLayer& c) {
  out.emplace_back(prefix + ".w", c.weight);
  out.emplace_back(prefix + ".b", c.bias);
}

void push_params(std::vector<std::pair<std::string, Tensor>>& out,
                 const std::string& prefix, const BatchNormLayer& bn) {
  out.emplace_back(prefix + ".gamma", bn.gamma);
  out.emplace_back(prefix + ".beta", bn.beta);
}

}  // namespace

Tensor ConvLayer::forward(const Tensor& x) const {
  return transposed ? conv_transpose2d(x, weight, bias, stride, pad)
                    : conv2d(x, weight, bias, stride, pad);
}

Tensor BatchNormLayer::forward(const Tensor& x, BnMode mode) {
  return batch_norm(x, gamma, beta, stats, mode);
}

GeneratorNet::GeneratorNet(const GeneratorConfig& cfg, uint64_t init_seed)
    : cfg_(cfg) {
  if (cfg.n_downsample != cfg.n_upsample) {
    throw std::invalid_argument(
        "generator: n_downsample must equal n_upsample");
  }
  std::mt19937_64 rng(init_seed);
  int w = cfg.base_width;
  head_ = make_conv(rng, w, cfg.in_channels, 7, 1, 3);
  head_bn_ = make_bn(rng, w);
  for (int i = 0; i < cfg.n_downsample; ++i) {
    down_.push_back(make_conv(rng, 2 * w, w, 3, 2, 1));
    down_bn_.push_back(make_bn(rng, 2 * w));
    w *= 2;
  }
  for (int i = 0; i < cfg.n_residual_blocks; ++i) {
    ResBlock b;
    b.c1 = make_conv(rng, w, w, 3, 1, 1);
    b.b1 = make_bn(rng, w);
    b.c2 = make_conv(rng, w, w, 3, 1, 1);
    b.b2 = make_bn(rng, w);
    blocks_.push_back(std::move(b));
  }
  for (int i = 0; i < cfg.n_upsample; ++i) {
    // 4x4 stride-2 pad-1 transposed conv doubles the spatial size exactly
    up_.push_back(make_conv(rng, w / 2, w, 4, 2, 1, /*transposed=*/true));
    up_bn_.push_back(make_bn(rng, w / 2));
    w /= 2;
  }
  tail_ = make_conv(rng, cfg.out_channels, w, 7, 1, 3);
}

Tensor GeneratorNet::forward(const Tensor& x, BnMode mode) {
  if (x.rank() != 4 || x.shape()[1] != cfg_.in_channels) {
    throw std::invalid_argument("generator: expected N x " +
                                std::to_string(cfg_.in_channels) +
                                " x H x W input, got " + shape_str(x.shape()));
  }
  const int multiple = 1 << cfg_.n_downsample;
  if (x.shape()[2] % multiple != 0 || x.shape()[3] % multiple != 0) {
    throw std::invalid_argument(
        "generator: spatial size must be a multiple of " +
        std::to_string(multiple) + ", got " + shape_str(x.shape()));
  }
  Tensor h = relu(head_bn_.forward(head_.forward(x), mode));
  for (size_t i = 0; i < down_.size(); ++i) {
    h = relu(down_bn_[i].forward(down_[i].forward(h), mode));
  }
  for (auto& b : blocks_) {
    Tensor r = relu(b.b1.forward(b.c1.forward(h), mode));
    r = b.b2.forward(b.c2.forward(r), mode);
    h = add(h, r);
  }
  for (size_t i = 0; i < up_.size(); ++i) {
    h = relu(up_bn_[i].forward(up_[i].forward(h), mode));
  }
  return tanh_act(tail_.forward(h));
}

std::vector<std::pair<std::string, Tensor>> GeneratorNet::named_params() {
  std::vector<std::pair<std::string, Tensor>> out;
  push_params(out, "g.head", head_);
  push_params(out, "g.head_bn", head_bn_);
  for (size_t i = 0; i < down_.size(); ++i) {
    push_params(out, "g.down" + std::to_string(i), down_[i]);
    push_params(out, "g.down" + std::to_string(i) + "_bn", down_bn_[i]);
  }
  for (size_t i = 0; i < blocks_.size(); ++i) {
    const std::string p = "g.res" + std::to_string(i);
    push_params(out, p + ".c1", blocks_[i].c1);
    push_params(out, p + ".b1", blocks_[i].b1);
    push_params(out, p + ".c2", blocks_[i].c2);
    push_params(out, p + ".b2", blocks_[i].b2);
  }
  for (size_t i = 0; i < up_.size(); ++i) {
    push_params(out, "g.up" + std::to_string(i), up_[i]);
    push_params(out, "g.up" + std::to_string(i) + "_bn", up_bn_[i]);
  }
  push_params(out, "g.tail", tail_);
  return out;
}

std::vector<std::pair<std::string, RunningStats*>> GeneratorNet::named_stats() {
  std::vector<std::pair<std::string, RunningStats*>> out;
  out.emplace_back("g.head_bn", &head_bn_.stats);
  for (size_t i = 0; i < down_bn_.size(); ++i) {
    out.emplace_back("g.down" + std::to_string(i) + "_bn", &down_bn_[i].stats);
  }
  for (size_t i = 0; i < blocks_.size(); ++i) {
    const std::string p = "g.res" + std::to_string(i);
    out.emplace_back(p + ".b1", &blocks_[i].b1.stats);
    out.emplace_back(p + ".b2", &blocks_[i].b2.stats);
  }
  for (size_t i = 0; i < up_bn_.size(); ++i) {
    out.emplace_back("g.up" + std::to_string(i) + "_bn", &up_bn_[i].stats);
  }
  return out;
}

std::vector<Tensor> GeneratorNet::params() {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_params()) out.push_back(t);
  return out;
}

void GeneratorNet::zero_grads() {
  for (auto& t : params()) t.zero_grad();
}

DiscriminatorNet::DiscriminatorNet(const DiscriminatorConfig& cfg,
                                   uint64_t init_seed)
    : cfg_(cfg) {
  std::mt19937_64 rng(init_seed);
  int cin = cfg.in_channels;
  int w = cfg.base_width;
  for (int i = 0; i < cfg.n_strided; ++i) {
    layers_.push_back(make_conv(rng, w, cin, 4, 2, 1));
    cin = w;
    w *= 2;
  }
  for (int i = 0; i < cfg.n_plain; ++i) {
    const bool last = i == cfg.n_plain - 1;
    layers_.push_back(make_conv(rng, last ? 1 : w, cin, 4, 1, 1));
    cin = last ? 1 : w;
  }
  // batch norm on all hidden layers except the first (PatchGAN convention)
  for (size_t i = 1; i + 1 < layers_.size(); ++i) {
    bns_.push_back(make_bn(rng, layers_[i].weight.shape()[0]));
  }
}

Tensor DiscriminatorNet::forward(const Tensor& x, const Tensor& y,
                                 BnMode mode) {
  if (x.shape()[0] != y.shape()[0] || x.shape()[2] != y.shape()[2] ||
      x.shape()[3] != y.shape()[3]) {
    throw std::invalid_argument("discriminator: misaligned x " +
                                shape_str(x.shape()) + " and y " +
                                shape_str(y.shape()));
  }
  Tensor h = concat_channels(x, y);
  for (size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i].forward(h);
    if (i + 1 == layers_.size()) break;  // raw logits
    if (i >= 1) h = bns_[i - 1].forward(h, mode);
    h = leaky_relu(h, cfg_.leaky_slope);
  }
  return h;
}

std::vector<std::pair<std::string, Tensor>> DiscriminatorNet::named_params() {
  std::vector<std::pair<std::string, Tensor>> out;
  for (size_t i = 0; i < layers_.size(); ++i) {
    push_params(out, "d.conv" + std::to_string(i), layers_[i]);
  }
  for (size_t i = 0; i < bns_.size(); ++i) {
    push_params(out, "d.bn" + std::to_string(i + 1), bns_[i]);
  }
  return out;
}

std::vector<std::pair<std::string, RunningStats*>>
DiscriminatorNet::named_stats() {
  std::vector<std::pair<std::string, RunningStats*>> out;
  for (size_t i = 0; i < bns_.size(); ++i) {
    out.emplace_back("d.bn" + std::to_string(i + 1), &bns_[i].stats);
  }
  return out;
}

std::vector<Tensor> DiscriminatorNet::params() {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_params()) out.push_back(t);
  return out;
}

void DiscriminatorNet::zero_grads() {
  for (auto& t : params()) t.zero_grad();
}

// --- losses -----------------------------------------------------------------

Tensor adversarial_loss_d(const Tensor& real_logits,
                          const Tensor& fake_logits) {
  if (real_logits.shape() != fake_logits.shape()) {
    throw std::invalid_argument("adversarial_loss_d: logit grids differ: " +
                                shape_str(real_logits.shape()) + " vs " +
                                shape_str(fake_logits.shape()));
  }
  // -log sigma(r) = softplus(-r); -log(1 - sigma(f)) = softplus(f)
  return add(mean(softplus(scale(real_logits, -1.0))),
             mean(softplus(fake_logits)));
}

Tensor adversarial_loss_g(const Tensor& fake_logits, AdvMode mode) {
  if (mode == AdvMode::NonSaturating) {
    return mean(softplus(scale(fake_logits, -1.0)));
  }
  // log(1 - sigma(f)) = -softplus(f)
  return scale(mean(softplus(fake_logits)), -1.0);
}

Tensor reconstruction_loss(const Tensor& y, const Tensor& y_hat) {
  if (y.shape() != y_hat.shape()) {
    throw std::invalid_argument("reconstruction_loss: shape mismatch " +
                                shape_str(y.shape()) + " vs " +
                                shape_str(y_hat.shape()));
  }
  return mean(abs(subtract(y, y_hat)));
}

Tensor total_generator_loss(const Tensor& adv, const Tensor& rec,
                            const Tensor& steer, const LossWeights& w) {
  return add(add(scale(adv, w.lambda_adv), scale(rec, w.lambda_rec)),
             scale(steer, w.lambda_steer));
}

double lr_at_epoch(int e, const TrainConfig& cfg) {
  if (e < 1 || e > cfg.total_epochs) {
    throw std::invalid_argument("lr_at_epoch: epoch " + std::to_string(e) +
                                " outside [1, " +
                                std::to_string(cfg.total_epochs) + "]");
  }
  if (e <= cfg.decay_start_epoch) return cfg.learning_rate;
  return cfg.learning_rate * static_cast<double>(cfg.total_epochs - e) /
         static_cast<double>(cfg.total_epochs - cfg.decay_start_epoch);
}

// --- data normalization -------------------------------------------------------

VolumeStats normalize_volume(std::vector<Image>& stack) {
  int64_t n = 0;
  double sum = 0.0;
  for (const auto& img : stack) {
    for (double v : img.pixels) sum += v;
    n += static_cast<int64_t>(img.size());
  }
  if (n == 0) throw std::invalid_argument("normalize_volume: empty stack");
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (const auto& img : stack) {
    for (double v : img.pixels) ss += (v - mean) * (v - mean);
  }
  const double std = std::sqrt(ss / static_cast<double>(n));
  if (std == 0.0) {
    throw std::invalid_argument("normalize_volume: constant stack (std = 0)");
  }
  for (auto& img : stack) {
    for (double& v : img.pixels) v = (v - mean) / std;
  }
  return {mean, std};
}

void denormalize(Image& img, const VolumeStats& stats) {
  for (double& v : img.pixels) v = v * stats.std + stats.mean;
}

Tensor make_input_batch(const std::vector<const SamplePair*>& samples,
                        const InputNormalization& norm) {
  if (samples.empty()) throw std::invalid_argument("empty batch");
  const int B = static_cast<int>(samples.size());
  const int H = samples[0]->t1.height, W = samples[0]->t1.width;
  std::vector<double> v;
  v.reserve(static_cast<size_t>(B) * 2 * H * W);
  for (const auto* s : samples) {
    for (double p : s->t1.pixels) v.push_back((p - norm.t1.mean) / norm.t1.std);
    for (double p : s->t2.pixels) v.push_back((p - norm.t2.mean) / norm.t2.std);
  }
  return Tensor::from_values({B, 2, H, W}, std::move(v));
}

Tensor make_target_batch(const std::vector<const SamplePair*>& samples) {
  if (samples.empty()) throw std::invalid_argument("empty batch");
  const int B = static_cast<int>(samples.size());
  const int H = samples[0]->mra.height, W = samples[0]->mra.width;
  std::vector<double> v;
  v.reserve(static_cast<size_t>(B) * H * W);
  for (const auto* s : samples) {
    // [0,1] -> [-1,1] so the target lies in the tanh range
    for (double p : s->mra.pixels) v.push_back(2.0 * p - 1.0);
  }
  return Tensor::from_values({B, 1, H, W}, std::move(v));
}

Image target_to_image(const Tensor& y, int batch_index) {
  const int H = y.shape()[2], W = y.shape()[3];
  Image img(H, W);
  const auto v = y.values();
  const int64_t off = static_cast<int64_t>(batch_index) * H * W;
  for (int64_t i = 0; i < static_cast<int64_t>(img.size()); ++i) {
    img.pixels[i] = std::clamp((v[off + i] + 1.0) / 2.0, 0.0, 1.0);
  }
  return img;
}

// --- training -----------------------------------------------------------------

TrainState make_train_state(const GeneratorConfig& g_cfg,
                            const DiscriminatorConfig& d_cfg,
                            const TrainConfig& train_cfg,
                            const LossWeights& weights,
                            const InputNormalization& norm) {
  TrainState st;
  st.g_cfg = g_cfg;
  st.d_cfg = d_cfg;
  st.train_cfg = train_cfg;
  st.weights = weights;
  st.norm = norm;
  st.generator = GeneratorNet(g_cfg, train_cfg.seed * 2 + 1);
  st.discriminator = DiscriminatorNet(d_cfg, train_cfg.seed * 2 + 2);
  st.g_opt.resize(st.generator.params().size());
  st.d_opt.resize(st.discriminator.params().size());
  return st;
}

namespace {

double checked_loss(const Tensor& t, const char* term) {
  const double v = t.item();
  if (!std::isfinite(v)) {
    throw std::runtime_error(std::string("non-finite loss term: ") + term);
  }
  return v;
}

}  // namespace

StepLosses train_step(TrainState& state, const Tensor& x, const Tensor& y,
                      const FilterBank& bank, double lr) {
  StepLosses out;
  AdamHyper hyper;
  hyper.lr = lr;
  hyper.beta1 = state.train_cfg.beta1;
  hyper.beta2 = state.train_cfg.beta2;

  // generator forward once; the discriminator step sees the detached copy
  Tensor fake = state.generator.forward(x, BnMode::Train);
  Tensor fake_const = fake.detach();

  // --- discriminator update
  Tensor d_real = state.discriminator.forward(x, y, BnMode::Train);
  Tensor d_fake = state.discriminator.forward(x, fake_const, BnMode::Train);
  Tensor d_loss = adversarial_loss_d(d_real, d_fake);
  out.d_loss = checked_loss(d_loss, "d_loss");
  state.discriminator.zero_grads();
  d_loss.backward();
  {
    auto d_params = state.discriminator.params();
    adam_step(d_params, state.d_opt, hyper);
  }

  // --- generator update
  Tensor g_logits = state.discriminator.forward(x, fake, BnMode::Train);
  Tensor g_adv = adversarial_loss_g(g_logits, state.adv_mode);
  Tensor g_rec = reconstruction_loss(y, fake);
  Tensor g_steer = state.weights.lambda_steer != 0.0
                       ? steerable_loss(y, fake, bank)
                       : Tensor::scalar(0.0);
  Tensor g_total = total_generator_loss(g_adv, g_rec, g_steer, state.weights);
  out.g_adv = checked_loss(g_adv, "g_adv");
  out.g_rec = checked_loss(g_rec, "g_rec");
  out.g_steer = checked_loss(g_steer, "g_steer");
  out.g_total = checked_loss(g_total, "g_total");
  state.generator.zero_grads();
  state.discriminator.zero_grads();  // scratch; D is not stepped here
  g_total.backward();
  {
    auto g_params = state.generator.params();
    adam_step(g_params, state.g_opt, hyper);
  }
  return out;
}

StepLosses train_epoch(TrainState& state, const std::vector<SamplePair>& data,
                       const FilterBank& bank, int epoch) {
  if (data.empty()) throw std::invalid_argument("train_epoch: no data");
  const double lr = lr_at_epoch(epoch, state.train_cfg);

  // epoch-indexed shuffle, stateless across epochs so runs can resume
  std::vector<size_t> order(data.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(state.train_cfg.seed * 1000003ULL +
                      static_cast<uint64_t>(epoch));
  std::shuffle(order.begin(), order.end(), rng);

  StepLosses total;
  int steps = 0;
  const int B = state.train_cfg.batch_size;
  for (size_t start = 0; start < order.size(); start += B) {
    std::vector<const SamplePair*> batch;
    for (size_t i = start; i < std::min(order.size(), start + B); ++i) {
      batch.push_back(&data[order[i]]);
    }
    Tensor x = make_input_batch(batch, state.norm);
    Tensor y = make_target_batch(batch);
    StepLosses s = train_step(state, x, y, bank, lr);
    total.d_loss += s.d_loss;
    total.g_adv += s.g_adv;
    total.g_rec += s.g_rec;
    total.g_steer += s.g_steer;
    total.g_total += s.g_total;
    ++steps;
  }
  total.d_loss /= steps;
  total.g_adv /= steps;
  total.g_rec /= steps;
  total.g_steer /= steps;
  total.g_total /= steps;
  state.epochs_completed = epoch;
  return total;
}

}  // namespace sgan
