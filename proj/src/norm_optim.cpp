#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "sgan/tensor.hpp"

namespace sgan {

Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  RunningStats& stats, BnMode mode, double momentum,
                  double eps) {
  if (input.rank() != 4) {
    throw std::invalid_argument("batch_norm expects N x C x H x W input, got " +
                                shape_str(input.shape()));
  }
  if (eps <= 0) throw std::invalid_argument("batch_norm: eps must be > 0");
  const int N = input.shape()[0], C = input.shape()[1];
  const int H = input.shape()[2], W = input.shape()[3];
  if (gamma.rank() != 1 || gamma.shape()[0] != C || beta.rank() != 1 ||
      beta.shape()[0] != C) {
    throw std::invalid_argument("batch_norm: gamma/beta must have shape [" +
                                std::to_string(C) + "]");
  }
  if (mode == BnMode::Eval && !stats.initialized) {
    throw std::runtime_error(
        "batch_norm: eval mode before running stats were initialized");
  }

  const int64_t plane = static_cast<int64_t>(H) * W;
  const int64_t m = static_cast<int64_t>(N) * plane;  // samples per channel

  std::vector<double> mu(C), inv_sigma(C);
  auto pin = input.node();
  if (mode == BnMode::Train) {
    if (!stats.initialized) {
      stats.mean.assign(C, 0.0);
      stats.var.assign(C, 1.0);
    }
    for (int c = 0; c < C; ++c) {
      double s = 0.0;
      for (int n = 0; n < N; ++n) {
        const double* x = pin->value.data() + (n * C + c) * plane;
        for (int64_t i = 0; i < plane; ++i) s += x[i];
      }
      mu[c] = s / static_cast<double>(m);
      double v = 0.0;
      for (int n = 0; n < N; ++n) {
        const double* x = pin->value.data() + (n * C + c) * plane;
        for (int64_t i = 0; i < plane; ++i) {
          const double d = x[i] - mu[c];
          v += d * d;
        }
      }
      const double var = v / static_cast<double>(m);
      inv_sigma[c] = 1.0 / std::sqrt(var + eps);
      // running var uses the unbiased estimate
      const double var_unbiased =
          m > 1 ? v / static_cast<double>(m - 1) : var;
      stats.mean[c] = (1.0 - momentum) * stats.mean[c] + momentum * mu[c];
      stats.var[c] = (1.0 - momentum) * stats.var[c] + momentum * var_unbiased;
    }
    stats.initialized = true;
  } else {
    for (int c = 0; c < C; ++c) {
      mu[c] = stats.mean[c];
      inv_sigma[c] = 1.0 / std::sqrt(stats.var[c] + eps);
    }
  }

  auto pg = gamma.node();
  auto pb = beta.node();
  const bool train = mode == BnMode::Train;

  auto node = std::make_shared<Tensor::Node>();
  node->shape = input.shape();
  node->value.resize(pin->value.size());
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const double* x = pin->value.data() + (n * C + c) * plane;
      double* y = node->value.data() + (n * C + c) * plane;
      const double g = pg->value[c], b = pb->value[c];
      for (int64_t i = 0; i < plane; ++i) {
        y[i] = g * (x[i] - mu[c]) * inv_sigma[c] + b;
      }
    }
  }

  if (pin->needs_grad || pg->needs_grad || pb->needs_grad) {
    node->needs_grad = true;
    node->parents = {pin, pg, pb};
    node->backprop = [pin, pg, pb, mu, inv_sigma, N, C, plane, m,
                      train](Tensor::Node& o) {
      for (int c = 0; c < C; ++c) {
        // channel-wise reductions of dy and dy * xhat
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int n = 0; n < N; ++n) {
          const double* dy = o.grad.data() + (n * C + c) * plane;
          const double* x = pin->value.data() + (n * C + c) * plane;
          for (int64_t i = 0; i < plane; ++i) {
            sum_dy += dy[i];
            sum_dy_xhat += dy[i] * (x[i] - mu[c]) * inv_sigma[c];
          }
        }
        if (pg->needs_grad) {
          pg->ensure_grad();
          pg->grad[c] += sum_dy_xhat;
        }
        if (pb->needs_grad) {
          pb->ensure_grad();
          pb->grad[c] += sum_dy;
        }
        if (pin->needs_grad) {
          pin->ensure_grad();
          const double g_over_sigma = pg->value[c] * inv_sigma[c];
          const double mean_dy = sum_dy / static_cast<double>(m);
          const double mean_dy_xhat = sum_dy_xhat / static_cast<double>(m);
          for (int n = 0; n < N; ++n) {
            const double* dy = o.grad.data() + (n * C + c) * plane;
            const double* x = pin->value.data() + (n * C + c) * plane;
            double* dx = pin->grad.data() + (n * C + c) * plane;
            if (train) {
              for (int64_t i = 0; i < plane; ++i) {
                const double xhat = (x[i] - mu[c]) * inv_sigma[c];
                dx[i] +=
                    g_over_sigma * (dy[i] - mean_dy - xhat * mean_dy_xhat);
              }
            } else {
              // running stats treated as constants
              for (int64_t i = 0; i < plane; ++i) {
                dx[i] += g_over_sigma * dy[i];
              }
            }
          }
        }
      }
    };
  }
  return Tensor(std::move(node));
}

void adam_step(std::vector<Tensor>& params, std::vector<AdamState>& states,
               const AdamHyper& hyper) {
  if (params.size() != states.size()) {
    throw std::invalid_argument("adam_step: params/states size mismatch");
  }
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    AdamState& st = states[i];
    if (!p.has_grad()) {
      throw std::runtime_error("adam_step: parameter " + std::to_string(i) +
                               " has no gradient");
    }
    const int64_t n = p.size();
    if (st.first_moment.empty()) {
      st.first_moment.assign(n, 0.0);
      st.second_moment.assign(n, 0.0);
    }
    if (static_cast<int64_t>(st.first_moment.size()) != n) {
      throw std::invalid_argument("adam_step: state " + std::to_string(i) +
                                  " does not match parameter shape");
    }
    st.step_count += 1;
    const double bc1 = 1.0 - std::pow(hyper.beta1, st.step_count);
    const double bc2 = 1.0 - std::pow(hyper.beta2, st.step_count);
    auto g = p.grad();
    auto v = p.values();
    for (int64_t j = 0; j < n; ++j) {
      st.first_moment[j] =
          hyper.beta1 * st.first_moment[j] + (1.0 - hyper.beta1) * g[j];
      st.second_moment[j] = hyper.beta2 * st.second_moment[j] +
                            (1.0 - hyper.beta2) * g[j] * g[j];
      const double m_hat = st.first_moment[j] / bc1;
      const double v_hat = st.second_moment[j] / bc2;
      v[j] -= hyper.lr * m_hat / (std::sqrt(v_hat) + hyper.eps);
    }
  }
}

}  // namespace sgan
