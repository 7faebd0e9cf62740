#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace lossmix {

/// Dense n-dimensional array of doubles, row-major. The universal numeric
/// carrier for spectrograms, network parameters and targets. Public
/// operations keep every element finite; constructors taking data validate.
class Tensor {
 public:
  Tensor() = default;

  /// Zero-filled tensor of the given shape.
  explicit Tensor(std::vector<std::size_t> shape);

  /// Tensor with explicit contents. Throws std::invalid_argument when the
  /// data length does not match the shape or any value is non-finite.
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor full(std::vector<std::size_t> shape, double value);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }

  /// Dimensions of a rank-2 tensor (frames x bins, out x in).
  std::size_t rows() const;
  std::size_t cols() const;

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double at(std::size_t r, std::size_t c) const;
  double& at(std::size_t r, std::size_t c);

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_string() const;

  /// Throws std::invalid_argument if any element is NaN or infinite.
  void check_finite(const char* context) const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

/// Elementwise lam*a + (1-lam)*b. Shapes must match.
Tensor lerp(const Tensor& a, const Tensor& b, double lam);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(double s, const Tensor& a);

}  // namespace lossmix
