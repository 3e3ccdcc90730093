#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace aircast {

// Dense row-major tensor of 64-bit floats, rank 0..5.
// The network code uses the axis convention [batch, time, height, width, channels]
// with the channel axis last (and therefore contiguous).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, double fill);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({}, std::vector<double>{v}); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  double min() const;
  double max() const;
  double sum() const;
  double mean() const;

  /// Same data, new shape; element counts must match.
  Tensor reshaped(std::vector<std::size_t> shape) const;

  void fill(double v);
  void add_scaled(const Tensor& other, double factor);  // this += factor * other

  std::string shape_string() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::size_t shape_size(const std::vector<std::size_t>& shape);

}  // namespace aircast
