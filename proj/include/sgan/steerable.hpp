#pragma once

#include <array>
#include <vector>

#include "sgan/tensor.hpp"

namespace sgan {

enum class KernelKind { Even, Odd };  // 2nd / 1st derivative of Gaussian

// Orientation-selective filter bank. Immutable after construction.
struct FilterBank {
  std::vector<Tensor> kernels;        // each 1 x 1 x size x size, unit L2 norm
  std::vector<double> orientations;   // radians in [0, pi)
  std::vector<KernelKind> kinds;
  double sigma = 1.0;
  int size = 5;

  // All kernels stacked as K x 1 x size x size, for single-conv filtering.
  Tensor stacked;

  int count() const { return static_cast<int>(kernels.size()); }
};

// Samples the order-th directional derivative of an isotropic Gaussian
// along `theta` on the integer grid, mean-subtracted and L2-normalized.
// x is the column offset, y the row offset (image convention).
Tensor gaussian_derivative_kernel(int order, double theta, double sigma,
                                  int size);

// K/2 even + K/2 odd kernels at orientations i*pi/(K/2). K must be even.
FilterBank build_filter_bank(int K = 20, int size = 5, double sigma = 1.0);

// Second-derivative steering basis at orientations {0, pi/3, 2pi/3},
// carrying the scalars needed to steer normalized responses exactly.
struct SteeringBasis {
  double sigma;
  int size;
  std::array<Tensor, 3> kernels;      // normalized, as gaussian_derivative_kernel
  std::array<double, 3> basis_norms;  // L2 norms before normalization
  double sample_mean;                 // grid mean, orientation-invariant

  // Interpolation weights (1/3)(1 + 2 cos 2(theta - theta_j)).
  std::array<double, 3> weights(double theta) const;

  // L2 norm of the mean-subtracted kernel at `theta`.
  double norm_at(double theta) const;
};

SteeringBasis make_steering_basis(double sigma = 1.0, int size = 5);

// Steers the three basis response maps (computed with basis.kernels) to
// angle theta; matches direct filtering with
// gaussian_derivative_kernel(2, theta, sigma, size) up to rounding.
std::vector<double> steer_second_derivative(
    double theta, const std::array<std::vector<double>, 3>& basis_responses,
    const SteeringBasis& basis);

// Mean over pixels and filters of the unit-Huber penalty between filter
// responses of y and y_hat. Inputs N x 1 x H x W; responses keep H x W
// (zero padding). Differentiable through both arguments.
Tensor steerable_loss(const Tensor& y, const Tensor& y_hat,
                      const FilterBank& bank);

}  // namespace sgan
