#include "sgan/steerable.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace sgan {

namespace {

// Raw analytic samples, before mean subtraction and normalization.
std::vector<double> sample_kernel(int order, double theta, double sigma,
                                  int size) {
  const int r = size / 2;
  const double s2 = sigma * sigma;
  const double c = std::cos(theta), s = std::sin(theta);
  std::vector<double> k(static_cast<size_t>(size) * size);
  for (int yy = -r; yy <= r; ++yy) {
    for (int xx = -r; xx <= r; ++xx) {
      const double g = std::exp(-(xx * xx + yy * yy) / (2.0 * s2));
      double v;
      if (order == 1) {
        v = -(xx * c + yy * s) / s2 * g;
      } else {
        const double gxx = (xx * xx - s2) / (s2 * s2) * g;
        const double gyy = (yy * yy - s2) / (s2 * s2) * g;
        const double gxy = (xx * yy) / (s2 * s2) * g;
        v = gxx * c * c + 2.0 * gxy * c * s + gyy * s * s;
      }
      k[(yy + r) * size + (xx + r)] = v;
    }
  }
  return k;
}

double vec_mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / v.size();
}

double vec_norm(const std::vector<double>& v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  return std::sqrt(n);
}

void check_kernel_args(int order, double sigma, int size) {
  if (order != 1 && order != 2) {
    throw std::invalid_argument("gaussian_derivative_kernel: order must be 1 or 2");
  }
  if (sigma <= 0) {
    throw std::invalid_argument("gaussian_derivative_kernel: sigma must be > 0");
  }
  if (size < 1 || size % 2 == 0) {
    throw std::invalid_argument("gaussian_derivative_kernel: size must be odd, got " +
                                std::to_string(size));
  }
}

}  // namespace

Tensor gaussian_derivative_kernel(int order, double theta, double sigma,
                                  int size) {
  check_kernel_args(order, sigma, size);
  auto k = sample_kernel(order, theta, sigma, size);
  const double m = vec_mean(k);
  for (double& v : k) v -= m;
  const double n = vec_norm(k);
  if (n == 0.0) {
    throw std::runtime_error("gaussian_derivative_kernel: degenerate kernel");
  }
  for (double& v : k) v /= n;
  return Tensor::from_values({1, 1, size, size}, std::move(k));
}

FilterBank build_filter_bank(int K, int size, double sigma) {
  if (K < 2 || K % 2 != 0) {
    throw std::invalid_argument(
        "build_filter_bank: K must be even and >= 2, got " + std::to_string(K));
  }
  FilterBank bank;
  bank.sigma = sigma;
  bank.size = size;
  const int half = K / 2;
  std::vector<double> stacked;
  stacked.reserve(static_cast<size_t>(K) * size * size);
  for (int pass = 0; pass < 2; ++pass) {
    const int order = pass == 0 ? 2 : 1;  // even kernels first
    for (int i = 0; i < half; ++i) {
      const double theta = i * M_PI / half;
      Tensor k = gaussian_derivative_kernel(order, theta, sigma, size);
      stacked.insert(stacked.end(), k.values().begin(), k.values().end());
      bank.kernels.push_back(std::move(k));
      bank.orientations.push_back(theta);
      bank.kinds.push_back(pass == 0 ? KernelKind::Even : KernelKind::Odd);
    }
  }
  bank.stacked = Tensor::from_values({K, 1, size, size}, std::move(stacked));
  return bank;
}

std::array<double, 3> SteeringBasis::weights(double theta) const {
  std::array<double, 3> w;
  for (int j = 0; j < 3; ++j) {
    const double tj = j * M_PI / 3.0;
    w[j] = (1.0 + 2.0 * std::cos(2.0 * (theta - tj))) / 3.0;
  }
  return w;
}

double SteeringBasis::norm_at(double theta) const {
  auto k = sample_kernel(2, theta, sigma, size);
  const double m = vec_mean(k);
  for (double& v : k) v -= m;
  return vec_norm(k);
}

SteeringBasis make_steering_basis(double sigma, int size) {
  check_kernel_args(2, sigma, size);
  SteeringBasis b;
  b.sigma = sigma;
  b.size = size;
  for (int j = 0; j < 3; ++j) {
    const double tj = j * M_PI / 3.0;
    auto raw = sample_kernel(2, tj, sigma, size);
    const double m = vec_mean(raw);
    if (j == 0) b.sample_mean = m;
    for (double& v : raw) v -= m;
    b.basis_norms[j] = vec_norm(raw);
    b.kernels[j] = gaussian_derivative_kernel(2, tj, sigma, size);
  }
  return b;
}

std::vector<double> steer_second_derivative(
    double theta, const std::array<std::vector<double>, 3>& basis_responses,
    const SteeringBasis& basis) {
  const size_t n = basis_responses[0].size();
  if (basis_responses[1].size() != n || basis_responses[2].size() != n) {
    throw std::invalid_argument(
        "steer_second_derivative: basis response maps differ in size");
  }
  // Responses were produced by normalized kernels; un-normalize, steer with
  // the trig weights (exact for the analytic family, and the grid mean is
  // orientation-invariant), re-normalize by the norm at theta.
  const auto w = basis.weights(theta);
  const double inv_norm = 1.0 / basis.norm_at(theta);
  std::array<double, 3> coef;
  for (int j = 0; j < 3; ++j) coef[j] = w[j] * basis.basis_norms[j] * inv_norm;
  std::vector<double> out(n, 0.0);
  for (int j = 0; j < 3; ++j) {
    const double c = coef[j];
    const double* r = basis_responses[j].data();
    for (size_t i = 0; i < n; ++i) out[i] += c * r[i];
  }
  return out;
}

Tensor steerable_loss(const Tensor& y, const Tensor& y_hat,
                      const FilterBank& bank) {
  if (y.rank() != 4 || y.shape()[1] != 1) {
    throw std::invalid_argument("steerable_loss: expected N x 1 x H x W, got " +
                                shape_str(y.shape()));
  }
  if (y.shape() != y_hat.shape()) {
    throw std::invalid_argument("steerable_loss: shape mismatch " +
                                shape_str(y.shape()) + " vs " +
                                shape_str(y_hat.shape()));
  }
  const int pad = (bank.size - 1) / 2;
  // Single conv with the stacked bank: N x K x H x W response maps.
  Tensor ry = conv2d(y, bank.stacked, 1, pad);
  Tensor rh = conv2d(y_hat, bank.stacked, 1, pad);
  return mean(huber_unit(subtract(ry, rh)));
}

}  // namespace sgan
