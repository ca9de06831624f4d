#include "evoattack/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "evoattack/tensor_io.hpp"

namespace evoattack {
namespace {

ConfidenceVector softmax(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> e(logits.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    e[k] = std::exp(logits[k] - m);
    sum += e[k];
  }
  for (double& v : e) v /= sum;
  return ConfidenceVector(std::move(e));
}

}  // namespace

ConfidenceVector::ConfidenceVector(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.size() < 2)
    throw std::invalid_argument("ConfidenceVector: need at least 2 classes, got " +
                                std::to_string(probs_.size()));
  double sum = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0) || !std::isfinite(p))
      throw std::invalid_argument("ConfidenceVector: invalid probability " + std::to_string(p));
    sum += p;
  }
  if (std::abs(sum - 1.0) > kTolerance)
    throw std::invalid_argument("ConfidenceVector: probabilities sum to " + std::to_string(sum));
}

ConfidenceVector ConfidenceVector::one_hot(std::size_t label, std::size_t classes) {
  std::vector<double> v(classes, 0.0);
  v.at(label) = 1.0;
  return ConfidenceVector(std::move(v));
}

Label ConfidenceVector::top1() const {
  std::size_t best = 0;
  for (std::size_t k = 1; k < probs_.size(); ++k)
    if (probs_[k] > probs_[best]) best = k;
  return {best};
}

Label ConfidenceVector::top2() const {
  const std::size_t first = top1().index;
  std::size_t best = first == 0 ? 1 : 0;
  for (std::size_t k = 0; k < probs_.size(); ++k)
    if (k != first && probs_[k] > probs_[best]) best = k;
  return {best};
}

void Oracle::check_shape(const ImageTensor& image) const {
  if (image.shape() != input_shape())
    throw OracleError(OracleError::Kind::Shape, "oracle expects " + to_string(input_shape()) +
                                                    ", got " + to_string(image.shape()));
}

ConfidenceVector Oracle::query(const ImageTensor& image) {
  check_shape(image);
  queries_.fetch_add(1, std::memory_order_relaxed);
  auto conf = evaluate(image);
  if (conf.size() != num_classes())
    throw OracleError(OracleError::Kind::ClassCount,
                      "oracle returned " + std::to_string(conf.size()) + " classes, expected " +
                          std::to_string(num_classes()));
  return conf;
}

BinaryOutcome Oracle::query_binary(const ImageTensor& image) {
  auto conf = query(image);
  return {conf.top1(), conf.size()};
}

HalfBrightnessOracle::HalfBrightnessOracle(Shape shape, double temperature, bool binary_only)
    : shape_(shape), temperature_(temperature), binary_only_(binary_only) {
  if (shape.width < 2 || shape.height == 0 || shape.channels == 0)
    throw std::invalid_argument("HalfBrightnessOracle: image must be at least 2 pixels wide");
  if (!(temperature > 0.0))
    throw std::invalid_argument("HalfBrightnessOracle: temperature must be positive");
}

ConfidenceVector HalfBrightnessOracle::evaluate(const ImageTensor& image) {
  const std::size_t half = shape_.width / 2;
  const std::size_t right_begin = shape_.width - half;
  double left = 0.0;
  double right = 0.0;
  for (std::size_t r = 0; r < shape_.height; ++r) {
    for (std::size_t c = 0; c < half; ++c)
      for (std::size_t k = 0; k < shape_.channels; ++k) left += image.at(r, c, k);
    for (std::size_t c = right_begin; c < shape_.width; ++c)
      for (std::size_t k = 0; k < shape_.channels; ++k) right += image.at(r, c, k);
  }
  const double count = static_cast<double>(shape_.height * half * shape_.channels);
  const double logits[2] = {left / count / temperature_, right / count / temperature_};
  auto conf = softmax(logits);
  return binary_only_ ? ConfidenceVector::one_hot(conf.top1().index, 2) : conf;
}

PrototypeOracle::PrototypeOracle(std::vector<ImageTensor> prototypes, double temperature,
                                 bool binary_only)
    : prototypes_(std::move(prototypes)), temperature_(temperature), binary_only_(binary_only) {
  if (prototypes_.size() < 2)
    throw std::invalid_argument("PrototypeOracle: need at least 2 prototypes");
  for (const auto& p : prototypes_)
    if (p.shape() != prototypes_.front().shape())
      throw ShapeError("PrototypeOracle: prototypes differ in shape");
  if (!(temperature > 0.0))
    throw std::invalid_argument("PrototypeOracle: temperature must be positive");
}

PrototypeOracle PrototypeOracle::from_files(std::span<const std::filesystem::path> paths,
                                            double temperature, bool binary_only) {
  std::vector<ImageTensor> protos;
  protos.reserve(paths.size());
  for (const auto& p : paths) protos.push_back(load_image(p));
  return PrototypeOracle(std::move(protos), temperature, binary_only);
}

ConfidenceVector PrototypeOracle::evaluate(const ImageTensor& image) {
  std::vector<double> logits(prototypes_.size());
  auto x = image.data();
  for (std::size_t k = 0; k < prototypes_.size(); ++k) {
    auto p = prototypes_[k].data();
    double d2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double diff = static_cast<double>(x[i]) - p[i];
      d2 += diff * diff;
    }
    logits[k] = -std::sqrt(d2) / temperature_;
  }
  auto conf = softmax(logits);
  return binary_only_ ? ConfidenceVector::one_hot(conf.top1().index, conf.size()) : conf;
}

ConfidenceVector monte_carlo_confidence(Oracle& oracle, const ImageTensor& image,
                                        std::size_t n_samples, double sigma,
                                        std::mt19937_64& rng) {
  if (n_samples == 0) throw std::invalid_argument("monte_carlo_confidence: n_samples must be >= 1");
  if (!(sigma >= 0.0)) throw std::invalid_argument("monte_carlo_confidence: sigma must be >= 0");

  std::vector<std::size_t> hits(oracle.num_classes(), 0);
  if (sigma == 0.0) {
    for (std::size_t s = 0; s < n_samples; ++s) ++hits.at(oracle.query_binary(image).label.index);
  } else {
    std::normal_distribution<double> noise(0.0, sigma);
    auto base = image.data();
    std::vector<float> buf(base.size());
    for (std::size_t s = 0; s < n_samples; ++s) {
      for (std::size_t i = 0; i < buf.size(); ++i)
        buf[i] = static_cast<float>(base[i] + noise(rng));
      auto noisy = ImageTensor::clamped(image.shape(), buf);
      ++hits.at(oracle.query_binary(noisy).label.index);
    }
  }

  std::vector<double> probs(hits.size());
  for (std::size_t k = 0; k < hits.size(); ++k)
    probs[k] = static_cast<double>(hits[k]) / static_cast<double>(n_samples);
  return ConfidenceVector(std::move(probs));
}

}  // namespace evoattack
