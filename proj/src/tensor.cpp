#include "lossmix/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace lossmix {

namespace {
std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_product(shape_)) {
    throw std::invalid_argument("tensor data length " +
                                std::to_string(data_.size()) +
                                " does not match shape " + shape_string());
  }
  check_finite("Tensor construction");
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
  Tensor t(std::move(shape));
  for (double& v : t.data_) v = value;
  t.check_finite("Tensor::full");
  return t;
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw std::invalid_argument("rows(): tensor is not rank 2");
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw std::invalid_argument("cols(): tensor is not rank 2");
  return shape_[1];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return data_[r * cols() + c];
}

double& Tensor::at(std::size_t r, std::size_t c) {
  return data_[r * cols() + c];
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << "x";
    os << shape_[i];
  }
  os << ")";
  return os.str();
}

void Tensor::check_finite(const char* context) const {
  for (double v : data_) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument(std::string(context) +
                                  ": tensor contains a non-finite value");
    }
  }
}

namespace {
void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                a.shape_string() + " vs " + b.shape_string());
  }
}
}  // namespace

Tensor lerp(const Tensor& a, const Tensor& b, double lam) {
  require_same_shape(a, b, "lerp");
  Tensor out(a.shape());
  const double w = 1.0 - lam;
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = lam * a[i] + w * b[i];
  out.check_finite("lerp");
  return out;
}

Tensor operator+(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "operator+");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  out.check_finite("operator+");
  return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "operator-");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  out.check_finite("operator-");
  return out;
}

Tensor operator*(double s, const Tensor& a) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = s * a[i];
  out.check_finite("operator*");
  return out;
}

}  // namespace lossmix
