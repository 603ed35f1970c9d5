#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "sgan/networks.hpp"

using namespace sgan;
namespace fs = std::filesystem;

namespace {

Tensor random_input(std::vector<int> shape, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = uni(rng);
  return Tensor::from_values(std::move(shape), std::move(v));
}

GeneratorConfig tiny_generator() {
  GeneratorConfig cfg;
  cfg.base_width = 4;
  cfg.n_downsample = 2;
  cfg.n_residual_blocks = 2;
  cfg.n_upsample = 2;
  return cfg;
}

DiscriminatorConfig tiny_discriminator() {
  DiscriminatorConfig cfg;
  cfg.base_width = 4;
  cfg.n_strided = 2;  // 16x16 training images
  return cfg;
}

std::vector<SamplePair> tiny_dataset(int n, int size, uint64_t seed) {
  PhantomParams params;
  params.size = size;
  params.seed = seed;
  std::vector<SamplePair> out;
  for (int i = 0; i < n; ++i) out.push_back(generate_phantom(params, i));
  return out;
}

InputNormalization stats_for(const std::vector<SamplePair>& data) {
  std::vector<Image> t1s, t2s;
  for (const auto& s : data) {
    t1s.push_back(s.t1);
    t2s.push_back(s.t2);
  }
  InputNormalization norm;
  norm.t1 = normalize_volume(t1s);
  norm.t2 = normalize_volume(t2s);
  return norm;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  auto va = a.values(), vb = b.values();
  for (size_t i = 0; i < va.size(); ++i)
    m = std::max(m, std::abs(va[i] - vb[i]));
  return m;
}

std::vector<double> snapshot(std::vector<Tensor> params) {
  std::vector<double> out;
  for (auto& p : params)
    for (double v : p.values()) out.push_back(v);
  return out;
}

}  // namespace

TEST_CASE("generator output shape matches input and stays within tanh range") {
  GeneratorNet g(tiny_generator(), 7);
  Tensor x = random_input({2, 2, 32, 32}, 11);
  Tensor y = g.forward(x, BnMode::Train);
  CHECK(y.shape() == std::vector<int>{2, 1, 32, 32});
  for (double v : y.values()) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("generator is deterministic for a fixed init seed") {
  Tensor x = random_input({1, 2, 16, 16}, 3);
  GeneratorNet a(tiny_generator(), 42), b(tiny_generator(), 42);
  Tensor ya = a.forward(x, BnMode::Train);
  Tensor yb = b.forward(x, BnMode::Train);
  CHECK(max_abs_diff(ya, yb) == 0.0);

  GeneratorNet c(tiny_generator(), 43);
  Tensor yc = c.forward(x, BnMode::Train);
  CHECK(max_abs_diff(ya, yc) > 0.0);
}

TEST_CASE("generator rejects sizes the downsampling path cannot handle") {
  GeneratorNet g(tiny_generator(), 7);
  Tensor x = random_input({1, 2, 18, 18}, 3);
  CHECK_THROWS_AS(g.forward(x, BnMode::Train), std::invalid_argument);
}

TEST_CASE("discriminator patch grid sizes") {
  DiscriminatorConfig cfg;  // full depth: three strided + two plain layers
  cfg.base_width = 4;
  DiscriminatorNet d(cfg, 5);
  Tensor x = random_input({1, 2, 64, 64}, 8);
  Tensor y = random_input({1, 1, 64, 64}, 9);
  CHECK(d.forward(x, y, BnMode::Train).shape() ==
        std::vector<int>{1, 1, 6, 6});

  Tensor x2 = random_input({1, 2, 32, 32}, 8);
  Tensor y2 = random_input({1, 1, 32, 32}, 9);
  CHECK(d.forward(x2, y2, BnMode::Train).shape() ==
        std::vector<int>{1, 1, 2, 2});
}

TEST_CASE("adversarial losses at zero logits equal log 2 values") {
  Tensor zeros = Tensor::zeros({1, 1, 2, 2});
  const double ln2 = std::log(2.0);
  CHECK(adversarial_loss_d(zeros, zeros).item() ==
        doctest::Approx(2.0 * ln2).epsilon(1e-12));
  CHECK(adversarial_loss_g(zeros, AdvMode::NonSaturating).item() ==
        doctest::Approx(ln2).epsilon(1e-12));
  CHECK(adversarial_loss_g(zeros, AdvMode::Saturating).item() ==
        doctest::Approx(-ln2).epsilon(1e-12));
}

TEST_CASE("adversarial losses match the sigmoid cross-entropy definition") {
  Tensor real = random_input({1, 1, 3, 3}, 21);
  Tensor fake = random_input({1, 1, 3, 3}, 22);
  auto sigmoid = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };

  double d_ref = 0.0, g_ns_ref = 0.0, g_sat_ref = 0.0;
  auto rv = real.values(), fv = fake.values();
  for (size_t i = 0; i < rv.size(); ++i) {
    d_ref += -std::log(sigmoid(rv[i])) - std::log(1.0 - sigmoid(fv[i]));
    g_ns_ref += -std::log(sigmoid(fv[i]));
    g_sat_ref += std::log(1.0 - sigmoid(fv[i]));
  }
  d_ref /= rv.size();
  g_ns_ref /= rv.size();
  g_sat_ref /= rv.size();

  CHECK(adversarial_loss_d(real, fake).item() ==
        doctest::Approx(d_ref).epsilon(1e-12));
  CHECK(adversarial_loss_g(fake, AdvMode::NonSaturating).item() ==
        doctest::Approx(g_ns_ref).epsilon(1e-12));
  CHECK(adversarial_loss_g(fake, AdvMode::Saturating).item() ==
        doctest::Approx(g_sat_ref).epsilon(1e-12));
}

TEST_CASE("discriminator loss gradient is sigma(logit) - target") {
  Tensor real = random_input({1, 1, 2, 2}, 31);
  Tensor fake = random_input({1, 1, 2, 2}, 32);
  real.node()->requires_grad = true;
  real.node()->needs_grad = true;
  fake.node()->requires_grad = true;
  fake.node()->needs_grad = true;
  Tensor loss = adversarial_loss_d(real, fake);
  loss.backward();
  auto sigmoid = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  const double n = 4.0;
  for (int i = 0; i < 4; ++i) {
    CHECK(real.grad()[i] ==
          doctest::Approx((sigmoid(real.values()[i]) - 1.0) / n)
              .epsilon(1e-10));
    CHECK(fake.grad()[i] ==
          doctest::Approx(sigmoid(fake.values()[i]) / n).epsilon(1e-10));
  }
}

TEST_CASE("reconstruction loss is the mean absolute difference") {
  Tensor y = Tensor::from_values({1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
  Tensor y_hat = Tensor::from_values({1, 1, 2, 2}, {1.5, 2.0, 1.0, 5.0});
  CHECK(reconstruction_loss(y, y_hat).item() ==
        doctest::Approx((0.5 + 0.0 + 2.0 + 1.0) / 4.0).epsilon(1e-12));
  CHECK(reconstruction_loss(y, y).item() == 0.0);
}

TEST_CASE("total generator loss is the weighted sum of its terms") {
  Tensor adv = Tensor::scalar(2.0);
  Tensor rec = Tensor::scalar(1.0);
  Tensor steer = Tensor::scalar(1.0);
  LossWeights w;  // 0.005, 0.8, 0.145
  CHECK(total_generator_loss(adv, rec, steer, w).item() ==
        doctest::Approx(0.005 * 2.0 + 0.8 + 0.145).epsilon(1e-12));

  LossWeights only_rec{0.0, 1.0, 0.0};
  CHECK(total_generator_loss(adv, rec, steer, only_rec).item() ==
        doctest::Approx(1.0).epsilon(1e-12));

  // linear in each weight
  LossWeights doubled{0.01, 1.6, 0.29};
  CHECK(total_generator_loss(adv, rec, steer, doubled).item() ==
        doctest::Approx(2.0 * (0.005 * 2.0 + 0.8 + 0.145)).epsilon(1e-12));
}

TEST_CASE("learning rate schedule: constant then linear decay to zero") {
  TrainConfig cfg;  // lr 2e-4, 50 epochs, decay from 30
  CHECK(lr_at_epoch(1, cfg) == doctest::Approx(2e-4));
  CHECK(lr_at_epoch(30, cfg) == doctest::Approx(2e-4));
  CHECK(lr_at_epoch(40, cfg) == doctest::Approx(1e-4));
  CHECK(lr_at_epoch(50, cfg) == doctest::Approx(0.0));
  CHECK_THROWS_AS(lr_at_epoch(0, cfg), std::invalid_argument);
  CHECK_THROWS_AS(lr_at_epoch(51, cfg), std::invalid_argument);
}

TEST_CASE("normalize_volume standardizes across the whole stack") {
  std::vector<Image> stack{Image(4, 4, 0.2), Image(4, 4, 0.8)};
  VolumeStats stats = normalize_volume(stack);
  CHECK(stats.mean == doctest::Approx(0.5).epsilon(1e-12));

  double mean = 0.0, sq = 0.0;
  int n = 0;
  for (const auto& img : stack)
    for (double v : img.pixels) {
      mean += v;
      sq += v * v;
      ++n;
    }
  mean /= n;
  CHECK(mean == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(sq / n == doctest::Approx(1.0).epsilon(1e-10));

  // per-slice normalization would send both slices to zero; the stack
  // statistics keep their contrast
  CHECK(stack[0].pixels[0] == doctest::Approx(-1.0).epsilon(1e-10));
  CHECK(stack[1].pixels[0] == doctest::Approx(1.0).epsilon(1e-10));

  // round trip
  denormalize(stack[0], stats);
  CHECK(stack[0].pixels[0] == doctest::Approx(0.2).epsilon(1e-12));

  std::vector<Image> flat{Image(4, 4, 0.5)};
  CHECK_THROWS_AS(normalize_volume(flat), std::invalid_argument);
}

TEST_CASE("target batch maps [0,1] to [-1,1] and back") {
  auto data = tiny_dataset(1, 16, 99);
  std::vector<const SamplePair*> batch{&data[0]};
  Tensor y = make_target_batch(batch);
  CHECK(y.shape() == std::vector<int>{1, 1, 16, 16});
  CHECK(y.values()[5] ==
        doctest::Approx(2.0 * data[0].mra.pixels[5] - 1.0).epsilon(1e-12));
  Image back = target_to_image(y, 0);
  for (size_t i = 0; i < back.pixels.size(); ++i)
    CHECK(back.pixels[i] ==
          doctest::Approx(data[0].mra.pixels[i]).epsilon(1e-12));
}

TEST_CASE("train_step is deterministic and only updates the right networks") {
  auto data = tiny_dataset(2, 16, 5);
  auto norm = stats_for(data);
  TrainConfig tc;
  tc.seed = 17;
  FilterBank bank = build_filter_bank();
  std::vector<const SamplePair*> batch{&data[0], &data[1]};
  Tensor x = make_input_batch(batch, norm);
  Tensor y = make_target_batch(batch);

  TrainState s1 = make_train_state(tiny_generator(), tiny_discriminator(), tc,
                                   LossWeights{}, norm);
  TrainState s2 = make_train_state(tiny_generator(), tiny_discriminator(), tc,
                                   LossWeights{}, norm);

  auto g_before = snapshot(s1.generator.params());
  auto d_before = snapshot(s1.discriminator.params());

  StepLosses l1 = train_step(s1, x, y, bank, tc.learning_rate);
  StepLosses l2 = train_step(s2, x, y, bank, tc.learning_rate);
  CHECK(l1.d_loss == l2.d_loss);
  CHECK(l1.g_total == l2.g_total);
  CHECK(std::isfinite(l1.g_total));
  CHECK(l1.g_total ==
        doctest::Approx(0.005 * l1.g_adv + 0.8 * l1.g_rec + 0.145 * l1.g_steer)
            .epsilon(1e-9));

  auto g_after = snapshot(s1.generator.params());
  auto d_after = snapshot(s1.discriminator.params());
  CHECK(g_after != g_before);
  CHECK(d_after != d_before);
  CHECK(snapshot(s2.generator.params()) == g_after);
  CHECK(snapshot(s2.discriminator.params()) == d_after);
}

TEST_CASE("pure reconstruction training reduces the loss") {
  auto data = tiny_dataset(2, 16, 11);
  auto norm = stats_for(data);
  TrainConfig tc;
  tc.seed = 23;
  FilterBank bank = build_filter_bank();
  std::vector<const SamplePair*> batch{&data[0], &data[1]};
  Tensor x = make_input_batch(batch, norm);
  Tensor y = make_target_batch(batch);

  TrainState s = make_train_state(tiny_generator(), tiny_discriminator(), tc,
                                  LossWeights{0.0, 1.0, 0.0}, norm);
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 50; ++i) {
    StepLosses l = train_step(s, x, y, bank, tc.learning_rate);
    if (i == 0) first = l.g_rec;
    last = l.g_rec;
  }
  CHECK(last < 0.5 * first);
}

TEST_CASE("train_epoch runs both networks and reports finite mean losses") {
  auto data = tiny_dataset(4, 16, 31);
  auto norm = stats_for(data);
  TrainConfig tc;
  tc.batch_size = 2;
  tc.seed = 3;
  FilterBank bank = build_filter_bank();
  TrainState s = make_train_state(tiny_generator(), tiny_discriminator(), tc,
                                  LossWeights{}, norm);
  StepLosses l = train_epoch(s, data, bank, 1);
  CHECK(std::isfinite(l.d_loss));
  CHECK(std::isfinite(l.g_total));
  CHECK(l.g_rec > 0.0);
  CHECK(s.epochs_completed == 1);
}

TEST_CASE("checkpoint round trip restores the exact training state") {
  auto data = tiny_dataset(2, 16, 41);
  auto norm = stats_for(data);
  TrainConfig tc;
  tc.seed = 29;
  FilterBank bank = build_filter_bank();
  std::vector<const SamplePair*> batch{&data[0], &data[1]};
  Tensor x = make_input_batch(batch, norm);
  Tensor y = make_target_batch(batch);

  TrainState s = make_train_state(tiny_generator(), tiny_discriminator(), tc,
                                  LossWeights{}, norm);
  for (int i = 0; i < 3; ++i) train_step(s, x, y, bank, tc.learning_rate);
  s.epochs_completed = 1;

  const std::string path =
      (fs::temp_directory_path() / "sgan_ckpt_test.bin").string();
  checkpoint_save(s, path);
  TrainState r = checkpoint_load(path);

  CHECK(r.epochs_completed == 1);
  CHECK(r.train_cfg.seed == 29);
  CHECK(r.norm.t1.mean == s.norm.t1.mean);
  CHECK(snapshot(r.generator.params()) == snapshot(s.generator.params()));
  CHECK(snapshot(r.discriminator.params()) ==
        snapshot(s.discriminator.params()));

  // same next step from both states
  StepLosses ls = train_step(s, x, y, bank, tc.learning_rate);
  StepLosses lr = train_step(r, x, y, bank, tc.learning_rate);
  CHECK(ls.d_loss == lr.d_loss);
  CHECK(ls.g_total == lr.g_total);

  // save -> load -> save produces identical bytes
  const std::string path2 = path + ".2";
  TrainState r2 = checkpoint_load(path);
  checkpoint_save(r2, path2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)),
                 std::istreambuf_iterator<char>());
  std::string b2((std::istreambuf_iterator<char>(f2)),
                 std::istreambuf_iterator<char>());
  CHECK(b1 == b2);
  fs::remove(path);
  fs::remove(path2);
}

TEST_CASE("checkpoint load rejects garbage and truncated files") {
  const std::string path =
      (fs::temp_directory_path() / "sgan_ckpt_bad.bin").string();
  {
    std::ofstream f(path, std::ios::binary);
    f << "not a checkpoint";
  }
  CHECK_THROWS_WITH_AS(checkpoint_load(path),
                       doctest::Contains("not an SGAN checkpoint"),
                       std::runtime_error);

  auto norm = InputNormalization{};
  TrainConfig tc;
  TrainState s = make_train_state(tiny_generator(), tiny_discriminator(), tc,
                                  LossWeights{}, norm);
  checkpoint_save(s, path);
  const auto full = fs::file_size(path);
  fs::resize_file(path, full - 128);
  CHECK_THROWS_WITH_AS(checkpoint_load(path), doctest::Contains("truncated"),
                       std::runtime_error);
  fs::remove(path);
}

TEST_CASE("resumed training reproduces the uninterrupted trajectory") {
  auto data = tiny_dataset(4, 16, 51);
  auto norm = stats_for(data);
  TrainConfig tc;
  tc.batch_size = 2;
  tc.total_epochs = 4;
  tc.decay_start_epoch = 2;
  tc.seed = 61;
  FilterBank bank = build_filter_bank();

  TrainState straight = make_train_state(tiny_generator(),
                                         tiny_discriminator(), tc,
                                         LossWeights{}, norm);
  StepLosses straight_losses;
  for (int e = 1; e <= 4; ++e)
    straight_losses = train_epoch(straight, data, bank, e);

  TrainState first = make_train_state(tiny_generator(), tiny_discriminator(),
                                      tc, LossWeights{}, norm);
  for (int e = 1; e <= 2; ++e) train_epoch(first, data, bank, e);
  const std::string path =
      (fs::temp_directory_path() / "sgan_ckpt_resume.bin").string();
  checkpoint_save(first, path);
  TrainState resumed = checkpoint_load(path);
  StepLosses resumed_losses;
  for (int e = 3; e <= 4; ++e)
    resumed_losses = train_epoch(resumed, data, bank, e);

  CHECK(resumed_losses.d_loss == straight_losses.d_loss);
  CHECK(resumed_losses.g_total == straight_losses.g_total);
  CHECK(snapshot(resumed.generator.params()) ==
        snapshot(straight.generator.params()));
  fs::remove(path);
}
