#ifndef EVOATTACK_TESTS_FIXTURES_HPP
#define EVOATTACK_TESTS_FIXTURES_HPP

#include <cmath>
#include <random>
#include <vector>

#include "evoattack/oracle.hpp"
#include "evoattack/tensor.hpp"

namespace evoattack::testing {

// Half-brightness setup used by the end-to-end suites: a textured gray image
// whose left half is brighter than its right half by `gap` on average.
inline constexpr double kHalfGap = 0.002;
inline constexpr double kHalfTemperature = 0.004;  // clean margin tanh(0.25) ~= 0.245

inline ImageTensor half_brightness_image(Shape shape, std::uint64_t seed, double gap = kHalfGap) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> texture(-0.1, 0.1);
  std::vector<double> v(shape.size());
  for (auto& x : v) x = 0.5 + texture(rng);
  // Centre each half exactly on 0.5 +- gap/2.
  const std::size_t half = shape.width / 2;
  double left = 0.0, right = 0.0;
  for (std::size_t r = 0; r < shape.height; ++r)
    for (std::size_t c = 0; c < shape.width; ++c)
      for (std::size_t k = 0; k < shape.channels; ++k) {
        const double x = v[shape.index(r, c, k)];
        if (c < half) left += x;
        else if (c >= shape.width - half) right += x;
      }
  const double count = static_cast<double>(shape.height * half * shape.channels);
  const double shift_left = 0.5 + gap / 2 - left / count;
  const double shift_right = 0.5 - gap / 2 - right / count;
  std::vector<float> data(v.size());
  for (std::size_t r = 0; r < shape.height; ++r)
    for (std::size_t c = 0; c < shape.width; ++c)
      for (std::size_t k = 0; k < shape.channels; ++k) {
        const std::size_t i = shape.index(r, c, k);
        double x = v[i];
        if (c < half) x += shift_left;
        else if (c >= shape.width - half) x += shift_right;
        data[i] = static_cast<float>(x);
      }
  return ImageTensor(shape, std::move(data));
}

// Independent recomputation of the half-brightness softmax.
inline std::vector<double> half_brightness_probs(const ImageTensor& img, double temperature) {
  const Shape s = img.shape();
  const std::size_t half = s.width / 2;
  long double left = 0, right = 0;
  for (std::size_t r = 0; r < s.height; ++r)
    for (std::size_t c = 0; c < s.width; ++c)
      for (std::size_t k = 0; k < s.channels; ++k) {
        if (c < half) left += img.at(r, c, k);
        else if (c >= s.width - half) right += img.at(r, c, k);
      }
  const long double n = static_cast<long double>(s.height * half * s.channels);
  const long double d = (right / n - left / n) / temperature;
  const long double p0 = 1.0L / (1.0L + std::exp(d));
  return {static_cast<double>(p0), static_cast<double>(1.0L - p0)};
}

// Prototype setup for targeted runs: K textures 0.5 + U(-amp, amp) around a
// common gray; examples are a prototype plus small Gaussian noise.
inline constexpr double kProtoAmplitude = 0.04;
inline constexpr double kProtoTemperature = 0.05;
inline constexpr double kProtoExampleNoise = 0.02;

inline std::vector<ImageTensor> prototype_set(Shape shape, std::size_t classes, std::uint64_t seed,
                                              double amplitude = kProtoAmplitude) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-amplitude, amplitude);
  std::vector<ImageTensor> out;
  for (std::size_t k = 0; k < classes; ++k) {
    std::vector<float> d(shape.size());
    for (auto& x : d) x = static_cast<float>(0.5 + u(rng));
    out.emplace_back(shape, std::move(d));
  }
  return out;
}

inline ImageTensor prototype_example(const ImageTensor& proto, std::uint64_t seed,
                                     double noise = kProtoExampleNoise) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, noise);
  std::vector<float> d(proto.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<float>(proto[i] + n(rng));
  return ImageTensor::clamped(proto.shape(), std::move(d));
}

}  // namespace evoattack::testing

#endif  // EVOATTACK_TESTS_FIXTURES_HPP
