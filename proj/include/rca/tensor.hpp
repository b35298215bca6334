#pragma once

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace rca {

/// Dense row-major tensor of doubles with a small rank. The flat buffer is
/// shared, so reshapes are views; every arithmetic op allocates fresh output.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)),
        buf_(std::make_shared<std::vector<double>>(count(shape_), 0.0)) {}

  Tensor(std::vector<std::size_t> shape, std::vector<double> values)
      : shape_(std::move(shape)),
        buf_(std::make_shared<std::vector<double>>(std::move(values))) {
    if (buf_->size() != count(shape_)) {
      throw std::invalid_argument("Tensor: value count does not match shape");
    }
  }

  static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<std::size_t> shape, double v) {
    Tensor t(std::move(shape));
    std::fill(t.buf_->begin(), t.buf_->end(), v);
    return t;
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return buf_ ? buf_->size() : 0; }
  bool empty() const { return numel() == 0; }

  std::size_t dim(std::size_t i) const { return shape_.at(i); }

  /// Row/column view for rank-2 use; rank-1 tensors count as a single row.
  std::size_t rows() const {
    if (shape_.empty()) return 0;
    return shape_.size() == 1 ? 1 : shape_[0];
  }
  std::size_t cols() const {
    if (shape_.empty()) return 0;
    return shape_.size() == 1 ? shape_[0] : numel() / shape_[0];
  }

  double* data() { return buf_->data(); }
  const double* data() const { return buf_->data(); }

  double& operator[](std::size_t i) { return (*buf_)[i]; }
  double operator[](std::size_t i) const { return (*buf_)[i]; }

  double& at(std::size_t r, std::size_t c) { return (*buf_)[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return (*buf_)[r * cols() + c]; }

  /// View with a new shape over the same buffer.
  Tensor reshaped(std::vector<std::size_t> shape) const {
    if (count(shape) != numel()) {
      throw std::invalid_argument("Tensor::reshaped: element count mismatch");
    }
    Tensor t;
    t.shape_ = std::move(shape);
    t.buf_ = buf_;
    return t;
  }

  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.buf_ = std::make_shared<std::vector<double>>(*buf_);
    return t;
  }

  void fill(double v) { std::fill(buf_->begin(), buf_->end(), v); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool shares_buffer(const Tensor& o) const { return buf_ && buf_ == o.buf_; }

  const std::vector<double>& vec() const { return *buf_; }

  std::string shape_str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (i) os << 'x';
      os << shape_[i];
    }
    os << ']';
    return os.str();
  }

 private:
  static std::size_t count(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return shape.empty() ? 0 : n;
  }

  std::vector<std::size_t> shape_;
  std::shared_ptr<std::vector<double>> buf_;
};

}  // namespace rca
