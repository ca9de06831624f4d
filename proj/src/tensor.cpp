#include "evoattack/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>

namespace evoattack {

std::string to_string(const Shape& s) {
  return std::to_string(s.height) + "x" + std::to_string(s.width) + "x" +
         std::to_string(s.channels);
}

ImageTensor::ImageTensor(Shape shape, std::vector<float> data)
    : BoundedTensor(shape, std::move(data), 0.0f, 1.0f, "ImageTensor") {}

ImageTensor ImageTensor::filled(Shape shape, float value) {
  return ImageTensor(shape, std::vector<float>(shape.size(), value));
}

ImageTensor ImageTensor::clamped(Shape shape, std::vector<float> data) {
  for (float& v : data) v = std::clamp(v, 0.0f, 1.0f);
  return ImageTensor(shape, std::move(data));
}

Perturbation::Perturbation(Shape shape, std::vector<float> data)
    : BoundedTensor(shape, std::move(data), -1.0f, 1.0f, "Perturbation") {}

Perturbation Perturbation::zeros(Shape shape) {
  return Perturbation(shape, std::vector<float>(shape.size(), 0.0f));
}

Perturbation Perturbation::clipped(Shape shape, std::vector<float> data) {
  for (float& v : data) v = std::clamp(v, -1.0f, 1.0f);
  return Perturbation(shape, std::move(data));
}

bool Perturbation::is_zero() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return v == 0.0f; });
}

std::size_t Perturbation::count_nonzero() const {
  return static_cast<std::size_t>(
      std::count_if(data_.begin(), data_.end(), [](float v) { return v != 0.0f; }));
}

std::size_t Perturbation::content_hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint64_t word) {
    for (int i = 0; i < 8; ++i) {
      h ^= (word >> (8 * i)) & 0xffu;
      h *= 1099511628211ULL;
    }
  };
  mix(shape_.height);
  mix(shape_.width);
  mix(shape_.channels);
  for (float v : data_) {
    // +0 and -0 hash alike so equal tensors always share a bucket.
    mix(v == 0.0f ? 0u : std::bit_cast<std::uint32_t>(v));
  }
  return static_cast<std::size_t>(h);
}

ImageTensor apply(const ImageTensor& base, const Perturbation& pert) {
  if (base.shape() != pert.shape())
    throw ShapeError("apply: image shape " + to_string(base.shape()) +
                     " does not match perturbation shape " + to_string(pert.shape()));
  std::vector<float> out(base.size());
  auto b = base.data();
  auto p = pert.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(b[i] + p[i], 0.0f, 1.0f);
  return ImageTensor(base.shape(), std::move(out));
}

Perturbation difference(const ImageTensor& a, const ImageTensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("difference: shapes " + to_string(a.shape()) + " and " +
                     to_string(b.shape()) + " differ");
  std::vector<float> out(a.size());
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return Perturbation::clipped(a.shape(), std::move(out));
}

}  // namespace evoattack
