#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sgan/evaluation.hpp"
#include "sgan/phantom.hpp"
#include "sgan/steerable.hpp"
#include "sgan/tensor.hpp"

namespace py = pybind11;
using namespace sgan;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Image image_from_array(const Array& arr) {
  if (arr.ndim() != 2) throw std::invalid_argument("expected a 2D array");
  Image img(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)));
  std::copy(arr.data(), arr.data() + arr.size(), img.pixels.begin());
  return img;
}

py::array image_to_array(const Image& img) {
  py::array_t<double> out({img.height, img.width});
  std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
  return out;
}

Tensor tensor_from_array(const Array& arr) {
  std::vector<int> shape(arr.ndim());
  for (py::ssize_t i = 0; i < arr.ndim(); ++i)
    shape[i] = static_cast<int>(arr.shape(i));
  std::vector<double> values(arr.data(), arr.data() + arr.size());
  return Tensor::from_values(std::move(shape), std::move(values));
}

py::array tensor_to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  auto v = t.values();
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

Tensor plane_tensor(const Array& arr) {
  Image img = image_from_array(arr);
  return Tensor::from_values({1, 1, img.height, img.width},
                             std::move(img.pixels));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "steerable-filter GAN core operations";

  m.def(
      "conv2d",
      [](const Array& input, const Array& kernel, int stride, int padding) {
        return tensor_to_array(
            conv2d(tensor_from_array(input), tensor_from_array(kernel),
                   stride, padding));
      },
      py::arg("input"), py::arg("kernel"), py::arg("stride") = 1,
      py::arg("padding") = 0,
      "Cross-correlation of an NCHW input with an OIHW kernel.");

  m.def(
      "gaussian_derivative_kernel",
      [](int order, double theta, double sigma, int size) {
        Tensor k = gaussian_derivative_kernel(order, theta, sigma, size);
        auto v = k.values();
        py::array_t<double> out({size, size});
        std::copy(v.begin(), v.end(), out.mutable_data());
        return out;
      },
      py::arg("order"), py::arg("theta"), py::arg("sigma") = 1.0,
      py::arg("size") = 5,
      "Oriented Gaussian derivative sampled on the grid, zero-mean, unit L2.");

  m.def(
      "filter_bank",
      [](int k, int size, double sigma) {
        FilterBank bank = build_filter_bank(k, size, sigma);
        py::array_t<double> kernels({bank.count(), size, size});
        double* dst = kernels.mutable_data();
        for (const auto& kt : bank.kernels) {
          auto v = kt.values();
          dst = std::copy(v.begin(), v.end(), dst);
        }
        std::vector<std::string> kinds;
        for (KernelKind kind : bank.kinds)
          kinds.push_back(kind == KernelKind::Even ? "even" : "odd");
        return py::make_tuple(kernels, bank.orientations, kinds);
      },
      py::arg("k") = 20, py::arg("size") = 5, py::arg("sigma") = 1.0,
      "Returns (kernels [K,size,size], orientations, kinds).");

  m.def(
      "steerable_loss",
      [](const Array& y, const Array& y_hat, int k, int size, double sigma) {
        FilterBank bank = build_filter_bank(k, size, sigma);
        return steerable_loss(plane_tensor(y), plane_tensor(y_hat), bank)
            .item();
      },
      py::arg("y"), py::arg("y_hat"), py::arg("k") = 20, py::arg("size") = 5,
      py::arg("sigma") = 1.0,
      "Mean Huber penalty between oriented filter responses of two images.");

  m.def(
      "psnr",
      [](const Array& reference, const Array& generated) {
        return psnr(image_from_array(reference), image_from_array(generated));
      },
      py::arg("reference"), py::arg("generated"));

  m.def(
      "dice",
      [](const Array& a, const Array& b) {
        return dice(image_from_array(a), image_from_array(b));
      },
      py::arg("a"), py::arg("b"));

  m.def(
      "vesselness",
      [](const Array& image, const std::vector<double>& scales, double beta) {
        return image_to_array(
            hessian_vesselness(image_from_array(image), scales, beta));
      },
      py::arg("image"), py::arg("scales") = std::vector<double>{1.0, 2.0, 3.0},
      py::arg("beta") = 0.5);

  m.def(
      "segment_vessels",
      [](const Array& image, double threshold) {
        SegmentationParams params;
        params.threshold = threshold;
        return image_to_array(
            segment_vessels(image_from_array(image), params).mask);
      },
      py::arg("image"), py::arg("threshold") = 0.15);

  m.def(
      "generate_phantom",
      [](int index, int size, uint64_t seed) {
        PhantomParams params;
        params.size = size;
        params.seed = seed;
        SamplePair s = generate_phantom(params, index);
        py::dict out;
        out["t1"] = image_to_array(s.t1);
        out["t2"] = image_to_array(s.t2);
        out["mra"] = image_to_array(s.mra);
        out["mask"] = image_to_array(s.vessel_mask);
        out["stem"] = s.stem;
        return out;
      },
      py::arg("index") = 0, py::arg("size") = 64, py::arg("seed") = 1,
      "Deterministic phantom (t1, t2, mra, mask) sample.");

  m.def(
      "read_pgm",
      [](const std::string& path) { return image_to_array(read_pgm16(path)); },
      py::arg("path"));

  m.def(
      "write_pgm",
      [](const std::string& path, const Array& image) {
        write_pgm16(path, image_from_array(image));
      },
      py::arg("path"), py::arg("image"));
}
