#include "motionforge/tensor.hpp"

#include <cmath>
#include <string>

#include "motionforge/errors.hpp"

namespace motionforge {

namespace {

std::string shape_string(const Shape3& s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" +
         std::to_string(s.width);
}

}  // namespace

Tensor3::Tensor3(int channels, int height, int width, double fill)
    : Tensor3(Shape3{channels, height, width}, fill) {}

Tensor3::Tensor3(Shape3 shape, double fill) : shape_(shape) {
  if (shape.channels < 0 || shape.height < 0 || shape.width < 0) {
    throw InvalidParameter("negative tensor dimension");
  }
  data_.assign(shape.size(), fill);
}

Tensor3::Tensor3(Shape3 shape, std::vector<double> values) : shape_(shape), data_(std::move(values)) {
  if (data_.size() != shape.size()) {
    throw ShapeMismatch("tensor data length " + std::to_string(data_.size()) +
                        " does not match shape " + shape_string(shape));
  }
}

std::span<double> Tensor3::channel(int c) {
  const std::size_t plane = static_cast<std::size_t>(shape_.height) * shape_.width;
  return std::span<double>(data_).subspan(static_cast<std::size_t>(c) * plane, plane);
}

std::span<const double> Tensor3::channel(int c) const {
  const std::size_t plane = static_cast<std::size_t>(shape_.height) * shape_.width;
  return std::span<const double>(data_).subspan(static_cast<std::size_t>(c) * plane, plane);
}

bool Tensor3::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) {
      return false;
    }
  }
  return true;
}

void Tensor3::fill(double value) { data_.assign(data_.size(), value); }

Tensor3& Tensor3::operator+=(const Tensor3& other) {
  require_same_shape(*this, other, "tensor +=");
  for (std::size_t i = 0; i < data_.size(); ++i) {
    data_[i] += other.data_[i];
  }
  return *this;
}

Tensor3& Tensor3::operator-=(const Tensor3& other) {
  require_same_shape(*this, other, "tensor -=");
  for (std::size_t i = 0; i < data_.size(); ++i) {
    data_[i] -= other.data_[i];
  }
  return *this;
}

Tensor3& Tensor3::operator*=(double s) {
  for (double& v : data_) {
    v *= s;
  }
  return *this;
}

void require_same_shape(const Tensor3& a, const Tensor3& b, std::string_view what) {
  if (a.shape() != b.shape()) {
    throw ShapeMismatch(std::string(what) + ": shape " + shape_string(a.shape()) + " vs " +
                        shape_string(b.shape()));
  }
}

Tensor3 axpby(double a, const Tensor3& x, double b, const Tensor3& y) {
  require_same_shape(x, y, "axpby");
  Tensor3 out(x.shape());
  auto o = out.data();
  auto xs = x.data();
  auto ys = y.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = a * xs[i] + b * ys[i];
  }
  return out;
}

}  // namespace motionforge
