#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "sgan/steerable.hpp"
#include "sgan/tensor.hpp"

using namespace sgan;
using sgan::testing::grad_check;
using sgan::testing::random_tensor;

namespace {

std::vector<double> filter_image(const Tensor& image, const Tensor& kernel) {
  const int pad = (kernel.shape()[2] - 1) / 2;
  auto out = conv2d(image, kernel, 1, pad);
  return {out.values().begin(), out.values().end()};
}

FilterBank single_kernel_bank(double value) {
  // One 1x1 "filter" so the response difference is directly controllable.
  FilterBank bank;
  bank.size = 1;
  bank.kernels.push_back(Tensor::from_values({1, 1, 1, 1}, {value}));
  bank.orientations.push_back(0.0);
  bank.kinds.push_back(KernelKind::Even);
  bank.stacked = Tensor::from_values({1, 1, 1, 1}, {value});
  return bank;
}

}  // namespace

TEST_CASE("first-derivative kernel at theta 0 is antisymmetric in x") {
  auto k = gaussian_derivative_kernel(1, 0.0, 1.0, 5);
  auto v = k.values();
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x)
      CHECK(v[y * 5 + x] == doctest::Approx(-v[y * 5 + (4 - x)]).epsilon(1e-12));
}

TEST_CASE("second-derivative kernel at theta 0 is symmetric in x") {
  auto k = gaussian_derivative_kernel(2, 0.0, 1.0, 5);
  auto v = k.values();
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x)
      CHECK(v[y * 5 + x] == doctest::Approx(v[y * 5 + (4 - x)]).epsilon(1e-12));
}

TEST_CASE("first-derivative kernel at pi/2 is the transposed theta-0 kernel") {
  auto k0 = gaussian_derivative_kernel(1, 0.0, 1.0, 5);
  auto k90 = gaussian_derivative_kernel(1, M_PI / 2.0, 1.0, 5);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x)
      CHECK(std::fabs(k90.values()[y * 5 + x] - k0.values()[x * 5 + y]) <
            1e-10);
}

TEST_CASE("kernel argument validation") {
  CHECK_THROWS_AS(gaussian_derivative_kernel(1, 0.0, 1.0, 4),
                  std::invalid_argument);
  CHECK_THROWS_AS(gaussian_derivative_kernel(1, 0.0, -1.0, 5),
                  std::invalid_argument);
  CHECK_THROWS_AS(gaussian_derivative_kernel(3, 0.0, 1.0, 5),
                  std::invalid_argument);
}

TEST_CASE("filter bank layout: K=20 gives 10 even + 10 odd") {
  auto bank = build_filter_bank(20, 5, 1.0);
  REQUIRE(bank.count() == 20);
  for (int i = 0; i < 10; ++i) {
    CHECK(bank.kinds[i] == KernelKind::Even);
    CHECK(bank.kinds[10 + i] == KernelKind::Odd);
    CHECK(bank.orientations[i] == doctest::Approx(i * M_PI / 10.0));
    CHECK(bank.orientations[10 + i] == doctest::Approx(i * M_PI / 10.0));
  }
}

TEST_CASE("filter bank K=2 gives one even and one odd kernel at 0") {
  auto bank = build_filter_bank(2, 5, 1.0);
  REQUIRE(bank.count() == 2);
  CHECK(bank.kinds[0] == KernelKind::Even);
  CHECK(bank.kinds[1] == KernelKind::Odd);
  CHECK(bank.orientations[0] == 0.0);
  CHECK(bank.orientations[1] == 0.0);
}

TEST_CASE("odd K rejected") {
  CHECK_THROWS_AS(build_filter_bank(7, 5, 1.0), std::invalid_argument);
}

TEST_CASE("all bank kernels have zero sum and unit norm") {
  auto bank = build_filter_bank(20, 5, 1.0);
  for (const auto& k : bank.kernels) {
    double s = 0.0, n = 0.0;
    for (double v : k.values()) {
      s += v;
      n += v * v;
    }
    CHECK(std::fabs(s) <= 1e-8);
    CHECK(std::fabs(std::sqrt(n) - 1.0) <= 1e-12);
  }
}

TEST_CASE("steering at a basis angle reproduces the basis response") {
  std::mt19937_64 rng(17);
  auto img = random_tensor({1, 1, 16, 16}, rng);
  auto basis = make_steering_basis(1.0, 5);
  std::array<std::vector<double>, 3> resp;
  for (int j = 0; j < 3; ++j) resp[j] = filter_image(img, basis.kernels[j]);
  auto steered = steer_second_derivative(0.0, resp, basis);
  for (size_t i = 0; i < steered.size(); ++i)
    CHECK(std::fabs(steered[i] - resp[0][i]) < 1e-12);
}

TEST_CASE("steered response matches direct filtering at pi/4") {
  std::mt19937_64 rng(29);
  auto img = random_tensor({1, 1, 16, 16}, rng);
  auto basis = make_steering_basis(1.0, 5);
  std::array<std::vector<double>, 3> resp;
  for (int j = 0; j < 3; ++j) resp[j] = filter_image(img, basis.kernels[j]);
  auto steered = steer_second_derivative(M_PI / 4.0, resp, basis);
  auto direct =
      filter_image(img, gaussian_derivative_kernel(2, M_PI / 4.0, 1.0, 5));
  for (size_t i = 0; i < steered.size(); ++i)
    CHECK(std::fabs(steered[i] - direct[i]) < 1e-6);
}

TEST_CASE("steering matches direct filtering at 100 random angles") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> angle(0.0, M_PI);
  auto img = random_tensor({1, 1, 12, 12}, rng);
  auto basis = make_steering_basis(1.0, 5);
  std::array<std::vector<double>, 3> resp;
  for (int j = 0; j < 3; ++j) resp[j] = filter_image(img, basis.kernels[j]);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const double theta = angle(rng);
    auto steered = steer_second_derivative(theta, resp, basis);
    auto direct =
        filter_image(img, gaussian_derivative_kernel(2, theta, 1.0, 5));
    for (size_t i = 0; i < steered.size(); ++i)
      worst = std::max(worst, std::fabs(steered[i] - direct[i]));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("steering weights sum to one at any angle") {
  std::mt19937_64 rng(37);
  std::uniform_real_distribution<double> angle(-10.0, 10.0);
  auto basis = make_steering_basis(1.0, 5);
  for (int t = 0; t < 100; ++t) {
    auto w = basis.weights(angle(rng));
    CHECK(w[0] + w[1] + w[2] == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("steerable loss of identical images is zero") {
  std::mt19937_64 rng(41);
  auto y = random_tensor({1, 1, 16, 16}, rng);
  auto bank = build_filter_bank(20, 5, 1.0);
  CHECK(steerable_loss(y, y, bank).item() == 0.0);
}

TEST_CASE("Huber branches: uniform response difference 0.5 and 2") {
  auto bank = single_kernel_bank(1.0);
  auto y = Tensor::full({1, 1, 8, 8}, 0.5);
  auto zero = Tensor::full({1, 1, 8, 8}, 0.0);
  CHECK(steerable_loss(y, zero, bank).item() == doctest::Approx(0.125).epsilon(1e-12));
  auto y2 = Tensor::full({1, 1, 8, 8}, 2.0);
  CHECK(steerable_loss(y2, zero, bank).item() == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("Huber is C1 at the branch joint") {
  const double eps = 1e-9;
  auto lo = huber_unit(Tensor::scalar(1.0 - eps)).item();
  auto hi = huber_unit(Tensor::scalar(1.0 + eps)).item();
  CHECK(std::fabs(lo - 0.5) < 1e-8);
  CHECK(std::fabs(hi - 0.5) < 1e-8);
  // derivative from both sides
  auto x1 = Tensor::scalar(1.0 - eps, true);
  huber_unit(x1).backward();
  auto x2 = Tensor::scalar(1.0 + eps, true);
  huber_unit(x2).backward();
  CHECK(x1.grad()[0] == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(x2.grad()[0] == doctest::Approx(1.0).epsilon(1e-8));
  auto x3 = Tensor::scalar(-1.0 - eps, true);
  huber_unit(x3).backward();
  CHECK(x3.grad()[0] == doctest::Approx(-1.0).epsilon(1e-8));
}

TEST_CASE("steerable loss is symmetric and non-negative") {
  std::mt19937_64 rng(43);
  auto bank = build_filter_bank(20, 5, 1.0);
  for (int t = 0; t < 5; ++t) {
    auto a = random_tensor({1, 1, 12, 12}, rng);
    auto b = random_tensor({1, 1, 12, 12}, rng);
    const double lab = steerable_loss(a, b, bank).item();
    const double lba = steerable_loss(b, a, bank).item();
    CHECK(lab >= 0.0);
    CHECK(lab == doctest::Approx(lba).epsilon(1e-14));
  }
}

TEST_CASE("constant offset to both images leaves the loss unchanged") {
  std::mt19937_64 rng(47);
  auto bank = build_filter_bank(20, 5, 1.0);
  auto a = random_tensor({1, 1, 12, 12}, rng);
  auto b = random_tensor({1, 1, 12, 12}, rng);
  const double base = steerable_loss(a, b, bank).item();
  const double shifted =
      steerable_loss(add_scalar(a, 3.7), add_scalar(b, 3.7), bank).item();
  CHECK(std::fabs(base - shifted) <= 1e-10);
}

TEST_CASE("steerable loss rejects multi-channel input") {
  auto bank = build_filter_bank(2, 5, 1.0);
  auto y = Tensor::full({1, 2, 8, 8}, 0.0);
  CHECK_THROWS_AS(steerable_loss(y, y, bank), std::invalid_argument);
}

TEST_CASE("steerable loss gradient w.r.t. y_hat passes finite differences") {
  std::mt19937_64 rng(53);
  auto bank = build_filter_bank(4, 5, 1.0);
  std::vector<Tensor> leaves = {random_tensor({1, 1, 8, 8}, rng)};
  auto y = random_tensor({1, 1, 8, 8}, rng);
  auto f = [&](std::vector<Tensor>& l) { return steerable_loss(y, l[0], bank); };
  auto r = grad_check(f, leaves);
  CHECK(r.max_rel_err < 1e-4);
}
