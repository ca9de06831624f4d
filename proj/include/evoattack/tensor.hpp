#ifndef EVOATTACK_TENSOR_HPP
#define EVOATTACK_TENSOR_HPP

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace evoattack {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class RangeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Shape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;

  std::size_t pixels() const { return height * width; }
  std::size_t size() const { return height * width * channels; }
  // Channel-interleaved, row-major.
  std::size_t index(std::size_t row, std::size_t col, std::size_t ch) const {
    return (row * width + col) * channels + ch;
  }

  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

/// Shared storage for the two bounded tensor kinds. Values are immutable once
/// constructed; every constructor validates shape and range.
template <class Derived>
class BoundedTensor {
 public:
  const Shape& shape() const { return shape_; }
  std::span<const float> data() const { return data_; }
  std::size_t size() const { return data_.size(); }
  float operator[](std::size_t i) const { return data_[i]; }
  float at(std::size_t row, std::size_t col, std::size_t ch) const {
    return data_[shape_.index(row, col, ch)];
  }
  /// Moves the buffer out, e.g. to build a modified copy.
  std::vector<float> release() && { return std::move(data_); }

  friend bool operator==(const BoundedTensor& a, const BoundedTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 protected:
  BoundedTensor() = default;
  BoundedTensor(Shape shape, std::vector<float> data, float lo, float hi, const char* what)
      : shape_(shape), data_(std::move(data)) {
    if (shape_.height == 0 || shape_.width == 0 || shape_.channels == 0)
      throw ShapeError(std::string(what) + ": empty shape " + to_string(shape_));
    if (data_.size() != shape_.size())
      throw ShapeError(std::string(what) + ": data length " + std::to_string(data_.size()) +
                       " does not match shape " + to_string(shape_));
    for (float v : data_) {
      // NaN fails both comparisons.
      if (!(v >= lo && v <= hi))
        throw RangeError(std::string(what) + ": element " + std::to_string(v) + " outside [" +
                         std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
  }

  Shape shape_;
  std::vector<float> data_;
};

/// Pixel intensities in [0,1]. Holds both the original example and
/// adversarial candidates.
class ImageTensor : public BoundedTensor<ImageTensor> {
 public:
  ImageTensor() = default;
  ImageTensor(Shape shape, std::vector<float> data);
  static ImageTensor filled(Shape shape, float value);
  /// Clamps each value into [0,1] before validation.
  static ImageTensor clamped(Shape shape, std::vector<float> data);
};

/// Signed perturbation, every element in [-1,1]. The GA genome.
class Perturbation : public BoundedTensor<Perturbation> {
 public:
  Perturbation() = default;
  Perturbation(Shape shape, std::vector<float> data);
  static Perturbation zeros(Shape shape);
  /// Clips each value into [-1,1] before validation.
  static Perturbation clipped(Shape shape, std::vector<float> data);

  bool is_zero() const;
  std::size_t count_nonzero() const;
  /// FNV-1a over shape and raw element bits.
  std::size_t content_hash() const;
};

/// Class index in [0, K).
struct Label {
  std::size_t index = 0;
  friend bool operator==(const Label&, const Label&) = default;
};

/// min(1, max(0, base + pert)) elementwise.
ImageTensor apply(const ImageTensor& base, const Perturbation& pert);

/// a - b, which always lies in [-1,1] for valid images.
Perturbation difference(const ImageTensor& a, const ImageTensor& b);

}  // namespace evoattack

#endif  // EVOATTACK_TENSOR_HPP
