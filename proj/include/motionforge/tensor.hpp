#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace motionforge {

struct Shape3 {
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(channels) * static_cast<std::size_t>(height) *
           static_cast<std::size_t>(width);
  }
  bool operator==(const Shape3&) const = default;
};

/// Dense channel-major (C, H, W) tensor of doubles. The numeric workhorse
/// behind images, masks, flows and latents.
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(int channels, int height, int width, double fill = 0.0);
  explicit Tensor3(Shape3 shape, double fill = 0.0);
  Tensor3(Shape3 shape, std::vector<double> values);

  int channels() const { return shape_.channels; }
  int height() const { return shape_.height; }
  int width() const { return shape_.width; }
  const Shape3& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(int c, int y, int x) { return data_[index(c, y, x)]; }
  double at(int c, int y, int x) const { return data_[index(c, y, x)]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> channel(int c);
  std::span<const double> channel(int c) const;

  const std::vector<double>& values() const { return data_; }

  bool all_finite() const;
  void fill(double value);

  Tensor3& operator+=(const Tensor3& other);
  Tensor3& operator-=(const Tensor3& other);
  Tensor3& operator*=(double s);

  bool operator==(const Tensor3&) const = default;

 private:
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * static_cast<std::size_t>(shape_.height) +
            static_cast<std::size_t>(y)) *
               static_cast<std::size_t>(shape_.width) +
           static_cast<std::size_t>(x);
  }

  Shape3 shape_;
  std::vector<double> data_;
};

/// Throws ShapeMismatch naming `what` when the shapes differ.
void require_same_shape(const Tensor3& a, const Tensor3& b, std::string_view what);

/// a*x + b*y, elementwise.
Tensor3 axpby(double a, const Tensor3& x, double b, const Tensor3& y);

}  // namespace motionforge
