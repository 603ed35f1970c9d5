#include "sgan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

namespace sgan {

int64_t shape_size(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int e : shape) n *= e;
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

void Tensor::Node::ensure_grad() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
}

namespace {

std::shared_ptr<Tensor::Node> make_node(std::vector<int> shape) {
  if (shape.size() > 4) {
    throw std::invalid_argument("tensor rank > 4 not supported, got shape " +
                                shape_str(shape));
  }
  for (int e : shape) {
    if (e <= 0) throw std::invalid_argument("non-positive extent in shape " + shape_str(shape));
  }
  auto n = std::make_shared<Tensor::Node>();
  n->shape = std::move(shape);
  n->value.assign(shape_size(n->shape), 0.0);
  return n;
}

// Result node wired to its parents; needs_grad propagates forward.
std::shared_ptr<Tensor::Node> make_result(
    std::vector<int> shape, std::vector<std::shared_ptr<Tensor::Node>> parents,
    std::function<void(Tensor::Node&)> backprop) {
  auto n = make_node(std::move(shape));
  bool needs = false;
  for (const auto& p : parents) needs = needs || (p && p->needs_grad);
  if (needs) {
    n->needs_grad = true;
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return n;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
}

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  auto n = make_node(std::move(shape));
  n->requires_grad = n->needs_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.node()->value.begin(), t.node()->value.end(), value);
  return t;
}

Tensor Tensor::from_values(std::vector<int> shape, std::vector<double> values,
                           bool requires_grad) {
  if (static_cast<int64_t>(values.size()) != shape_size(shape)) {
    throw std::invalid_argument("value count " + std::to_string(values.size()) +
                                " does not match shape " + shape_str(shape));
  }
  Tensor t = zeros(std::move(shape), requires_grad);
  t.node()->value = std::move(values);
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values({1}, {value}, requires_grad);
}

const std::vector<int>& Tensor::shape() const { return node_->shape; }
int64_t Tensor::size() const { return node_->size(); }
int Tensor::rank() const { return static_cast<int>(node_->shape.size()); }

std::span<double> Tensor::values() { return node_->value; }
std::span<const double> Tensor::values() const { return node_->value; }

double Tensor::item() const {
  if (size() != 1) {
    throw std::invalid_argument("item() on non-scalar tensor of shape " +
                                shape_str(shape()));
  }
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

void Tensor::set_requires_grad(bool v) {
  node_->requires_grad = v;
  node_->needs_grad = v || !node_->parents.empty();
}

bool Tensor::has_grad() const { return !node_->grad.empty(); }

std::span<double> Tensor::grad() {
  node_->ensure_grad();
  return node_->grad;
}

std::span<const double> Tensor::grad() const { return node_->grad; }

void Tensor::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  auto n = make_node(node_->shape);
  n->value = node_->value;
  return Tensor(std::move(n));
}

void Tensor::backward() const {
  if (size() != 1) {
    throw std::invalid_argument("backward() requires a scalar loss, got shape " +
                                shape_str(shape()));
  }
  // Topological order over the needs_grad subgraph.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      Node* p = n->parents[i++].get();
      if (p && p->needs_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  // Accumulation happens at the leaves; interior grads are scratch space
  // and reset per call so repeated backward sums leaf gradients correctly.
  for (Node* n : order) {
    if (n->backprop) std::fill(n->grad.begin(), n->grad.end(), 0.0);
  }
  node_->ensure_grad();
  node_->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop) n->backprop(*n);
  }
}

// --- pointwise --------------------------------------------------------------

namespace {

// Elementwise binary op where both gradients are simple weights of the
// output gradient evaluated per element.
template <class F, class DA, class DB>
Tensor binary_pointwise(const Tensor& a, const Tensor& b, const char* name,
                        F f, DA da, DB db) {
  check_same_shape(a, b, name);
  auto pa = a.node(), pb = b.node();
  auto out = make_result(
      a.shape(), {pa, pb}, [pa, pb, da, db](Tensor::Node& o) {
        const int64_t n = o.size();
        if (pa->needs_grad) {
          pa->ensure_grad();
          for (int64_t i = 0; i < n; ++i)
            pa->grad[i] += o.grad[i] * da(pa->value[i], pb->value[i]);
        }
        if (pb->needs_grad) {
          pb->ensure_grad();
          for (int64_t i = 0; i < n; ++i)
            pb->grad[i] += o.grad[i] * db(pa->value[i], pb->value[i]);
        }
      });
  const int64_t n = out->size();
  for (int64_t i = 0; i < n; ++i) out->value[i] = f(pa->value[i], pb->value[i]);
  return Tensor(std::move(out));
}

template <class F, class DF>
Tensor unary_pointwise(const Tensor& a, F f, DF df) {
  auto pa = a.node();
  auto out = make_result(a.shape(), {pa}, [pa, df](Tensor::Node& o) {
    pa->ensure_grad();
    const int64_t n = o.size();
    for (int64_t i = 0; i < n; ++i)
      pa->grad[i] += o.grad[i] * df(pa->value[i]);
  });
  const int64_t n = out->size();
  for (int64_t i = 0; i < n; ++i) out->value[i] = f(pa->value[i]);
  return Tensor(std::move(out));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_pointwise(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor subtract(const Tensor& a, const Tensor& b) {
  return binary_pointwise(
      a, b, "subtract", [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor multiply(const Tensor& a, const Tensor& b) {
  return binary_pointwise(
      a, b, "multiply", [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double s) {
  return unary_pointwise(
      a, [s](double x) { return s * x; }, [s](double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary_pointwise(
      a, [s](double x) { return x + s; }, [](double) { return 1.0; });
}

Tensor sum(const Tensor& a) {
  auto pa = a.node();
  auto out = make_result({1}, {pa}, [pa](Tensor::Node& o) {
    pa->ensure_grad();
    for (auto& g : pa->grad) g += o.grad[0];
  });
  out->value[0] = std::accumulate(pa->value.begin(), pa->value.end(), 0.0);
  return Tensor(std::move(out));
}

Tensor mean(const Tensor& a) {
  const double inv_n = 1.0 / static_cast<double>(a.size());
  auto pa = a.node();
  auto out = make_result({1}, {pa}, [pa, inv_n](Tensor::Node& o) {
    pa->ensure_grad();
    const double g = o.grad[0] * inv_n;
    for (auto& gi : pa->grad) gi += g;
  });
  out->value[0] =
      std::accumulate(pa->value.begin(), pa->value.end(), 0.0) * inv_n;
  return Tensor(std::move(out));
}

Tensor abs(const Tensor& a) {
  // subgradient at 0 defined as 0
  return unary_pointwise(
      a, [](double x) { return std::fabs(x); },
      [](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Tensor square(const Tensor& a) {
  return unary_pointwise(
      a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Tensor log(const Tensor& a) {
  for (double v : a.values()) {
    if (!(v > 0.0)) {
      throw std::domain_error("log: non-positive input value " +
                              std::to_string(v));
    }
  }
  return unary_pointwise(
      a, [](double x) { return std::log(x); },
      [](double x) { return 1.0 / x; });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.rank() != 4 || b.rank() != 4) {
    throw std::invalid_argument("concat_channels expects rank-4 tensors");
  }
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3]) {
    throw std::invalid_argument("concat_channels: incompatible shapes " +
                                shape_str(sa) + " vs " + shape_str(sb));
  }
  const int N = sa[0], Ca = sa[1], Cb = sb[1], H = sa[2], W = sa[3];
  const int64_t plane = static_cast<int64_t>(H) * W;
  auto pa = a.node(), pb = b.node();
  auto out = make_result(
      {N, Ca + Cb, H, W}, {pa, pb}, [pa, pb, N, Ca, Cb, plane](Tensor::Node& o) {
        for (int n = 0; n < N; ++n) {
          const double* go = o.grad.data() + n * (Ca + Cb) * plane;
          if (pa->needs_grad) {
            pa->ensure_grad();
            double* ga = pa->grad.data() + n * Ca * plane;
            for (int64_t i = 0; i < Ca * plane; ++i) ga[i] += go[i];
          }
          if (pb->needs_grad) {
            pb->ensure_grad();
            double* gb = pb->grad.data() + n * Cb * plane;
            for (int64_t i = 0; i < Cb * plane; ++i)
              gb[i] += go[Ca * plane + i];
          }
        }
      });
  for (int n = 0; n < N; ++n) {
    double* vo = out->value.data() + n * (Ca + Cb) * plane;
    std::copy_n(pa->value.data() + n * Ca * plane, Ca * plane, vo);
    std::copy_n(pb->value.data() + n * Cb * plane, Cb * plane,
                vo + Ca * plane);
  }
  return Tensor(std::move(out));
}

// --- activations --------------------------------------------------------------

Tensor relu(const Tensor& x) {
  return unary_pointwise(
      x, [](double v) { return v > 0 ? v : 0.0; },
      [](double v) { return v > 0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  return unary_pointwise(
      x, [slope](double v) { return v > 0 ? v : slope * v; },
      [slope](double v) { return v > 0 ? 1.0 : slope; });
}

Tensor tanh_act(const Tensor& x) {
  return unary_pointwise(
      x, [](double v) { return std::tanh(v); },
      [](double v) {
        const double t = std::tanh(v);
        return 1.0 - t * t;
      });
}

Tensor sigmoid(const Tensor& x) {
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  return unary_pointwise(x, sig, [sig](double v) {
    const double s = sig(v);
    return s * (1.0 - s);
  });
}

Tensor softplus(const Tensor& x) {
  return unary_pointwise(
      x,
      [](double v) {
        // log(1 + e^v) = max(v, 0) + log1p(e^-|v|)
        return std::max(v, 0.0) + std::log1p(std::exp(-std::fabs(v)));
      },
      [](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

Tensor huber_unit(const Tensor& x) {
  return unary_pointwise(
      x,
      [](double v) {
        const double a = std::fabs(v);
        return a <= 1.0 ? 0.5 * v * v : a - 0.5;
      },
      [](double v) { return std::clamp(v, -1.0, 1.0); });
}

Tensor activation(const Tensor& x, Activation kind, double slope) {
  switch (kind) {
    case Activation::Relu:
      return relu(x);
    case Activation::LeakyRelu:
      return leaky_relu(x, slope);
    case Activation::Tanh:
      return tanh_act(x);
    case Activation::Sigmoid:
      return sigmoid(x);
  }
  throw std::invalid_argument("unknown activation kind");
}

}  // namespace sgan
