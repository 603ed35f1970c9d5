#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sgan {

// Dense double-precision tensor with reverse-mode autodiff.
// Shapes use the N x C x H x W convention for images; rank <= 4.
// Tensor is a cheap handle (shared_ptr semantics); the autodiff graph
// is held alive by the handles of its results.
class Tensor {
 public:
  struct Node;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value,
                     bool requires_grad = false);
  static Tensor from_values(std::vector<int> shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const;
  int64_t size() const;
  int rank() const;

  std::span<double> values();
  std::span<const double> values() const;
  double item() const;  // scalar tensors only

  bool requires_grad() const;
  void set_requires_grad(bool v);

  bool has_grad() const;
  std::span<double> grad();
  std::span<const double> grad() const;
  void zero_grad();

  // Value copy detached from the graph (no parents, no grad requirement).
  Tensor detach() const;

  // Populates grad buffers of every reachable tensor that needs one.
  // Must be called on a scalar. Repeated calls accumulate.
  void backward() const;

  std::shared_ptr<Node> node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

struct Tensor::Node {
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until needed
  bool requires_grad = false;
  bool needs_grad = false;  // requires_grad or depends on such a leaf
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;  // accumulates into parents' grads

  int64_t size() const { return static_cast<int64_t>(value.size()); }
  void ensure_grad();
};

int64_t shape_size(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

// --- pointwise / reductions ---------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor subtract(const Tensor& a, const Tensor& b);
Tensor multiply(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor square(const Tensor& a);
Tensor log(const Tensor& a);  // errors on non-positive input

// Stacks two N x C x H x W tensors along the channel axis.
Tensor concat_channels(const Tensor& a, const Tensor& b);

// --- activations ----------------------------------------------------------

enum class Activation { Relu, LeakyRelu, Tanh, Sigmoid };

Tensor activation(const Tensor& x, Activation kind, double slope = 0.2);
Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope = 0.2);
Tensor tanh_act(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// log(1 + exp(x)), evaluated without overflow; derivative sigmoid(x).
Tensor softplus(const Tensor& x);

// Unit-parameter Huber: 0.5 x^2 for |x| <= 1, |x| - 0.5 otherwise.
Tensor huber_unit(const Tensor& x);

// --- convolutions ---------------------------------------------------------

// Cross-correlation (kernel not flipped). input N x Cin x H x W,
// kernel Cout x Cin x kh x kw. Output H' = (H + 2 pad - kh) / stride + 1.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int stride, int padding);
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride,
              int padding);

// Adjoint of conv2d. input N x Cin x H x W, kernel Cin x Cout x kh x kw.
// Output H' = (H - 1) stride - 2 pad + kh.
Tensor conv_transpose2d(const Tensor& input, const Tensor& kernel,
                        const Tensor& bias, int stride, int padding);
Tensor conv_transpose2d(const Tensor& input, const Tensor& kernel, int stride,
                        int padding);

// --- batch normalization ----------------------------------------------------

struct RunningStats {
  std::vector<double> mean;
  std::vector<double> var;
  bool initialized = false;
};

enum class BnMode { Train, Eval };

// Per-channel normalization over N, H, W. Train mode uses batch statistics
// and updates `stats`; eval mode reads `stats` (error if uninitialized).
Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  RunningStats& stats, BnMode mode, double momentum = 0.1,
                  double eps = 1e-5);

// --- optimizer --------------------------------------------------------------

struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  int64_t step_count = 0;
};

struct AdamHyper {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard Adam with bias correction. Grads are read, not reset.
void adam_step(std::vector<Tensor>& params, std::vector<AdamState>& states,
               const AdamHyper& hyper);

}  // namespace sgan
