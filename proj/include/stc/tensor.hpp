#pragma once

#include <memory>
#include <span>
#include <vector>

#include "stc/shape.hpp"

namespace stc {

class Tape;

// Dense f64 tensor. Value semantics with shared storage: copies alias the
// same data and gradient buffers. By convention data is immutable after
// construction; the optimizer mutates parameters through mutable_data()
// strictly between steps, never while a tape referencing them is alive.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(const Shape& shape, double fill = 0.0)
      : shape_(shape),
        data_(std::make_shared<std::vector<double>>(shape.numel(), fill)) {}

  Tensor(const Shape& shape, std::vector<double> data) : shape_(shape) {
    if (static_cast<int64_t>(data.size()) != shape.numel())
      throw ValidationError(strfmt("Tensor: data length %zu does not match shape %s",
                                   data.size(), shape.str().c_str()));
    data_ = std::make_shared<std::vector<double>>(std::move(data));
  }

  static Tensor scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

  bool defined() const { return static_cast<bool>(data_); }
  const Shape& shape() const { return shape_; }
  int64_t numel() const { return shape_.numel(); }

  std::span<const double> data() const { return {data_->data(), data_->size()}; }
  std::span<double> mutable_data() { return {data_->data(), data_->size()}; }
  // For backward closures: aliases the storage instead of copying it. Valid
  // because data is immutable while a tape holding the closure is alive.
  std::shared_ptr<const std::vector<double>> shared_data() const { return data_; }

  double operator[](int64_t i) const { return (*data_)[i]; }
  // Scalar convenience accessor.
  double value() const {
    if (numel() != 1)
      throw ValidationError(strfmt("Tensor::value: shape %s is not scalar", shape_.str().c_str()));
    return (*data_)[0];
  }

  bool requires_grad() const { return static_cast<bool>(grad_); }

  Tensor& set_requires_grad(bool on) {
    if (on && !grad_) grad_ = std::make_shared<std::vector<double>>(numel(), 0.0);
    if (!on) grad_.reset();
    return *this;
  }

  std::span<double> grad() { return {grad_->data(), grad_->size()}; }
  std::span<const double> grad() const { return {grad_->data(), grad_->size()}; }
  void zero_grad() {
    if (grad_) std::fill(grad_->begin(), grad_->end(), 0.0);
  }

 private:
  Shape shape_;
  std::shared_ptr<std::vector<double>> data_;
  std::shared_ptr<std::vector<double>> grad_;
  // Autodiff linkage: set when this tensor is the output of a recorded op.
  Tape* tape_ = nullptr;
  int node_ = -1;
  friend class Tape;
};

}  // namespace stc
