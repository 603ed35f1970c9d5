#include <algorithm>
#include <memory>
#include <stdexcept>
#include <string>

#include "sgan/parallel.hpp"
#include "sgan/tensor.hpp"

namespace sgan {

namespace {

struct ConvDims {
  int N, Cin, H, W;    // input
  int Cout, kh, kw;    // kernel
  int Ho, Wo;          // output
  int stride, pad;
};

// Valid output index range [lo, hi) for a fixed kernel offset k:
// requires 0 <= o*stride - pad + k < extent.
inline void out_range(int extent, int out_extent, int stride, int pad, int k,
                      int& lo, int& hi) {
  lo = std::max(0, (pad - k + stride - 1) / stride);
  hi = std::min(out_extent, (extent - 1 + pad - k) / stride + 1);
}

// out(plane Ho x Wo) += sum over kernel taps of w * in(plane H x W),
// out index o maps to input index o*stride - pad + k.
void correlate_plane(const double* in, int H, int W, const double* ker, int kh,
                     int kw, double* out, int Ho, int Wo, int stride, int pad) {
  for (int a = 0; a < kh; ++a) {
    int oh_lo, oh_hi;
    out_range(H, Ho, stride, pad, a, oh_lo, oh_hi);
    for (int b = 0; b < kw; ++b) {
      const double w = ker[a * kw + b];
      if (w == 0.0) continue;
      int ow_lo, ow_hi;
      out_range(W, Wo, stride, pad, b, ow_lo, ow_hi);
      for (int oh = oh_lo; oh < oh_hi; ++oh) {
        const double* in_row = in + (oh * stride - pad + a) * W - pad + b;
        double* out_row = out + oh * Wo;
        for (int ow = ow_lo; ow < ow_hi; ++ow) {
          out_row[ow] += w * in_row[ow * stride];
        }
      }
    }
  }
}

// Adjoint of correlate_plane: scatters a Ho x Wo plane back to H x W.
void scatter_plane(const double* src, int Ho, int Wo, const double* ker, int kh,
                   int kw, double* dst, int H, int W, int stride, int pad) {
  for (int a = 0; a < kh; ++a) {
    int oh_lo, oh_hi;
    out_range(H, Ho, stride, pad, a, oh_lo, oh_hi);
    for (int b = 0; b < kw; ++b) {
      const double w = ker[a * kw + b];
      if (w == 0.0) continue;
      int ow_lo, ow_hi;
      out_range(W, Wo, stride, pad, b, ow_lo, ow_hi);
      for (int oh = oh_lo; oh < oh_hi; ++oh) {
        const double* src_row = src + oh * Wo;
        double* dst_row = dst + (oh * stride - pad + a) * W - pad + b;
        for (int ow = ow_lo; ow < ow_hi; ++ow) {
          dst_row[ow * stride] += w * src_row[ow];
        }
      }
    }
  }
}

// ker_grad[a,b] += sum over the valid grid of out[oh,ow] * in[ih,iw].
void tap_products(const double* in, int H, int W, const double* out, int Ho,
                  int Wo, double* ker_grad, int kh, int kw, int stride,
                  int pad) {
  for (int a = 0; a < kh; ++a) {
    int oh_lo, oh_hi;
    out_range(H, Ho, stride, pad, a, oh_lo, oh_hi);
    for (int b = 0; b < kw; ++b) {
      int ow_lo, ow_hi;
      out_range(W, Wo, stride, pad, b, ow_lo, ow_hi);
      double acc = 0.0;
      for (int oh = oh_lo; oh < oh_hi; ++oh) {
        const double* in_row = in + (oh * stride - pad + a) * W - pad + b;
        const double* out_row = out + oh * Wo;
        for (int ow = ow_lo; ow < ow_hi; ++ow) {
          acc += out_row[ow] * in_row[ow * stride];
        }
      }
      ker_grad[a * kw + b] += acc;
    }
  }
}

ConvDims conv_dims(const Tensor& input, const Tensor& kernel, int stride,
                   int padding, bool transposed) {
  if (input.rank() != 4 || kernel.rank() != 4) {
    throw std::invalid_argument("conv2d expects rank-4 input and kernel, got " +
                                shape_str(input.shape()) + " and " +
                                shape_str(kernel.shape()));
  }
  if (stride < 1) throw std::invalid_argument("stride must be positive");
  if (padding < 0) throw std::invalid_argument("padding must be non-negative");
  ConvDims d;
  d.N = input.shape()[0];
  d.Cin = input.shape()[1];
  d.H = input.shape()[2];
  d.W = input.shape()[3];
  d.stride = stride;
  d.pad = padding;
  d.kh = kernel.shape()[2];
  d.kw = kernel.shape()[3];
  if (transposed) {
    if (kernel.shape()[0] != d.Cin) {
      throw std::invalid_argument(
          "conv_transpose2d: kernel in-channels " +
          std::to_string(kernel.shape()[0]) + " != input channels " +
          std::to_string(d.Cin));
    }
    d.Cout = kernel.shape()[1];
    d.Ho = (d.H - 1) * stride - 2 * padding + d.kh;
    d.Wo = (d.W - 1) * stride - 2 * padding + d.kw;
    if (d.Ho <= 0 || d.Wo <= 0) {
      throw std::invalid_argument("conv_transpose2d: non-positive output size");
    }
  } else {
    if (kernel.shape()[1] != d.Cin) {
      throw std::invalid_argument("conv2d: kernel in-channels " +
                                  std::to_string(kernel.shape()[1]) +
                                  " != input channels " +
                                  std::to_string(d.Cin));
    }
    d.Cout = kernel.shape()[0];
    if (d.H + 2 * padding < d.kh || d.W + 2 * padding < d.kw) {
      throw std::invalid_argument(
          "conv2d: kernel " + std::to_string(d.kh) + "x" + std::to_string(d.kw) +
          " larger than padded input " + std::to_string(d.H + 2 * padding) +
          "x" + std::to_string(d.W + 2 * padding));
    }
    d.Ho = (d.H + 2 * padding - d.kh) / stride + 1;
    d.Wo = (d.W + 2 * padding - d.kw) / stride + 1;
  }
  return d;
}

void check_bias(const Tensor& bias, int Cout, const char* op) {
  if (!bias.defined()) return;
  if (bias.rank() != 1 || bias.shape()[0] != Cout) {
    throw std::invalid_argument(std::string(op) + ": bias shape " +
                                shape_str(bias.shape()) + " != [" +
                                std::to_string(Cout) + "]");
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int stride, int padding) {
  const ConvDims d = conv_dims(input, kernel, stride, padding, false);
  check_bias(bias, d.Cout, "conv2d");

  auto pin = input.node();
  auto pker = kernel.node();
  auto pbias = bias.defined() ? bias.node() : nullptr;
  const int64_t in_plane = static_cast<int64_t>(d.H) * d.W;
  const int64_t out_plane = static_cast<int64_t>(d.Ho) * d.Wo;
  const int64_t ker_sz = static_cast<int64_t>(d.kh) * d.kw;

  auto backprop = [pin, pker, pbias, d, in_plane, out_plane,
                   ker_sz](Tensor::Node& o) {
    if (pin->needs_grad) {
      pin->ensure_grad();
      parallel_for(static_cast<int64_t>(d.N) * d.Cin, [&](int64_t idx) {
        const int n = static_cast<int>(idx / d.Cin);
        const int ci = static_cast<int>(idx % d.Cin);
        double* gin = pin->grad.data() + (n * d.Cin + ci) * in_plane;
        for (int co = 0; co < d.Cout; ++co) {
          scatter_plane(o.grad.data() + (n * d.Cout + co) * out_plane, d.Ho,
                        d.Wo, pker->value.data() + (co * d.Cin + ci) * ker_sz,
                        d.kh, d.kw, gin, d.H, d.W, d.stride, d.pad);
        }
      });
    }
    if (pker->needs_grad) {
      pker->ensure_grad();
      parallel_for(d.Cout, [&](int64_t co) {
        for (int ci = 0; ci < d.Cin; ++ci) {
          double* gk = pker->grad.data() + (co * d.Cin + ci) * ker_sz;
          for (int n = 0; n < d.N; ++n) {
            tap_products(pin->value.data() + (n * d.Cin + ci) * in_plane, d.H,
                         d.W, o.grad.data() + (n * d.Cout + co) * out_plane,
                         d.Ho, d.Wo, gk, d.kh, d.kw, d.stride, d.pad);
          }
        }
      });
    }
    if (pbias && pbias->needs_grad) {
      pbias->ensure_grad();
      for (int n = 0; n < d.N; ++n) {
        for (int co = 0; co < d.Cout; ++co) {
          const double* g = o.grad.data() + (n * d.Cout + co) * out_plane;
          double acc = 0.0;
          for (int64_t i = 0; i < out_plane; ++i) acc += g[i];
          pbias->grad[co] += acc;
        }
      }
    }
  };

  std::vector<std::shared_ptr<Tensor::Node>> parents = {pin, pker};
  if (pbias) parents.push_back(pbias);
  Tensor out = Tensor(nullptr);
  {
    auto node = std::make_shared<Tensor::Node>();
    node->shape = {d.N, d.Cout, d.Ho, d.Wo};
    node->value.assign(static_cast<int64_t>(d.N) * d.Cout * out_plane, 0.0);
    bool needs = pin->needs_grad || pker->needs_grad ||
                 (pbias && pbias->needs_grad);
    if (needs) {
      node->needs_grad = true;
      node->parents = std::move(parents);
      node->backprop = backprop;
    }
    out = Tensor(std::move(node));
  }

  double* ov = out.values().data();
  parallel_for(static_cast<int64_t>(d.N) * d.Cout, [&](int64_t idx) {
    const int n = static_cast<int>(idx / d.Cout);
    const int co = static_cast<int>(idx % d.Cout);
    double* plane = ov + (n * d.Cout + co) * out_plane;
    if (pbias) {
      std::fill_n(plane, out_plane, pbias->value[co]);
    }
    for (int ci = 0; ci < d.Cin; ++ci) {
      correlate_plane(pin->value.data() + (n * d.Cin + ci) * in_plane, d.H, d.W,
                      pker->value.data() + (co * d.Cin + ci) * ker_sz, d.kh,
                      d.kw, plane, d.Ho, d.Wo, d.stride, d.pad);
    }
  });
  return out;
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride,
              int padding) {
  return conv2d(input, kernel, Tensor(), stride, padding);
}

Tensor conv_transpose2d(const Tensor& input, const Tensor& kernel,
                        const Tensor& bias, int stride, int padding) {
  const ConvDims d = conv_dims(input, kernel, stride, padding, true);
  check_bias(bias, d.Cout, "conv_transpose2d");

  auto pin = input.node();
  auto pker = kernel.node();
  auto pbias = bias.defined() ? bias.node() : nullptr;
  const int64_t in_plane = static_cast<int64_t>(d.H) * d.W;
  const int64_t out_plane = static_cast<int64_t>(d.Ho) * d.Wo;
  const int64_t ker_sz = static_cast<int64_t>(d.kh) * d.kw;

  // Note the role swap relative to conv2d: the forward pass scatters with
  // the output plane as the "large" grid (extent Ho, out-extent H).
  auto backprop = [pin, pker, pbias, d, in_plane, out_plane,
                   ker_sz](Tensor::Node& o) {
    if (pin->needs_grad) {
      pin->ensure_grad();
      parallel_for(static_cast<int64_t>(d.N) * d.Cin, [&](int64_t idx) {
        const int n = static_cast<int>(idx / d.Cin);
        const int ci = static_cast<int>(idx % d.Cin);
        double* gin = pin->grad.data() + (n * d.Cin + ci) * in_plane;
        for (int co = 0; co < d.Cout; ++co) {
          correlate_plane(o.grad.data() + (n * d.Cout + co) * out_plane, d.Ho,
                          d.Wo, pker->value.data() + (ci * d.Cout + co) * ker_sz,
                          d.kh, d.kw, gin, d.H, d.W, d.stride, d.pad);
        }
      });
    }
    if (pker->needs_grad) {
      pker->ensure_grad();
      parallel_for(d.Cin, [&](int64_t ci) {
        for (int co = 0; co < d.Cout; ++co) {
          double* gk = pker->grad.data() + (ci * d.Cout + co) * ker_sz;
          for (int n = 0; n < d.N; ++n) {
            tap_products(o.grad.data() + (n * d.Cout + co) * out_plane, d.Ho,
                         d.Wo, pin->value.data() + (n * d.Cin + ci) * in_plane,
                         d.H, d.W, gk, d.kh, d.kw, d.stride, d.pad);
          }
        }
      });
    }
    if (pbias && pbias->needs_grad) {
      pbias->ensure_grad();
      for (int n = 0; n < d.N; ++n) {
        for (int co = 0; co < d.Cout; ++co) {
          const double* g = o.grad.data() + (n * d.Cout + co) * out_plane;
          double acc = 0.0;
          for (int64_t i = 0; i < out_plane; ++i) acc += g[i];
          pbias->grad[co] += acc;
        }
      }
    }
  };

  auto node = std::make_shared<Tensor::Node>();
  node->shape = {d.N, d.Cout, d.Ho, d.Wo};
  node->value.assign(static_cast<int64_t>(d.N) * d.Cout * out_plane, 0.0);
  bool needs =
      pin->needs_grad || pker->needs_grad || (pbias && pbias->needs_grad);
  if (needs) {
    node->needs_grad = true;
    node->parents = {pin, pker};
    if (pbias) node->parents.push_back(pbias);
    node->backprop = backprop;
  }
  Tensor out(std::move(node));

  double* ov = out.values().data();
  parallel_for(static_cast<int64_t>(d.N) * d.Cout, [&](int64_t idx) {
    const int n = static_cast<int>(idx / d.Cout);
    const int co = static_cast<int>(idx % d.Cout);
    double* plane = ov + (n * d.Cout + co) * out_plane;
    if (pbias) std::fill_n(plane, out_plane, pbias->value[co]);
    for (int ci = 0; ci < d.Cin; ++ci) {
      scatter_plane(pin->value.data() + (n * d.Cin + ci) * in_plane, d.H, d.W,
                    pker->value.data() + (ci * d.Cout + co) * ker_sz, d.kh,
                    d.kw, plane, d.Ho, d.Wo, d.stride, d.pad);
    }
  });
  return out;
}

Tensor conv_transpose2d(const Tensor& input, const Tensor& kernel, int stride,
                        int padding) {
  return conv_transpose2d(input, kernel, Tensor(), stride, padding);
}

}  // namespace sgan
