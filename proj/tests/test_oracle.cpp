#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <thread>

#include "evoattack/oracle.hpp"
#include "evoattack/tensor_io.hpp"
#include "fixtures.hpp"

using namespace evoattack;

namespace {

// Always answers `label`.
class ConstantOracle : public Oracle {
 public:
  ConstantOracle(Shape s, std::size_t classes, std::size_t label)
      : shape_(s), classes_(classes), label_(label) {}
  std::size_t num_classes() const override { return classes_; }
  Shape input_shape() const override { return shape_; }

 protected:
  ConfidenceVector evaluate(const ImageTensor&) override { return ConfidenceVector::one_hot(label_, classes_); }

 private:
  Shape shape_;
  std::size_t classes_, label_;
};

class FixedOracle : public Oracle {
 public:
  explicit FixedOracle(std::vector<double> p) : probs_(std::move(p)) {}
  std::size_t num_classes() const override { return probs_.size(); }
  Shape input_shape() const override { return {1, 1, 1}; }

 protected:
  ConfidenceVector evaluate(const ImageTensor&) override { return ConfidenceVector(probs_); }

 private:
  std::vector<double> probs_;
};

ImageTensor left_right(Shape s, float left, float right) {
  std::vector<float> v(s.size());
  for (std::size_t r = 0; r < s.height; ++r)
    for (std::size_t c = 0; c < s.width; ++c)
      for (std::size_t k = 0; k < s.channels; ++k) v[s.index(r, c, k)] = c < s.width / 2 ? left : right;
  return ImageTensor(s, v);
}

}  // namespace

TEST_CASE("confidence vectors are validated") {
  CHECK_THROWS(ConfidenceVector({1.0}));
  CHECK_THROWS(ConfidenceVector({0.6, 0.6}));
  CHECK_THROWS(ConfidenceVector({1.1, -0.1}));
  CHECK_THROWS(ConfidenceVector({NAN, 1.0}));
  CHECK_NOTHROW(ConfidenceVector({0.3, 0.7 + 5e-7}));
}

TEST_CASE("top labels break ties toward the lowest index") {
  const ConfidenceVector c({0.2, 0.4, 0.4});
  CHECK(c.top1().index == 1);
  CHECK(c.top2().index == 2);
  const ConfidenceVector flat({0.25, 0.25, 0.25, 0.25});
  CHECK(flat.top1().index == 0);
  CHECK(flat.top2().index == 1);
  const ConfidenceVector d({0.7, 0.1, 0.2});
  CHECK(d.top1().index == 0);
  CHECK(d.top2().index == 2);
}

TEST_CASE("half-brightness matches the closed form") {
  const Shape s{8, 8, 1};
  HalfBrightnessOracle oracle(s, 0.1);
  const auto img = left_right(s, 0.7f, 0.4f);
  const auto c = oracle.query(img);
  const double p0 = 1.0 / (1.0 + std::exp((0.4 - 0.7) / 0.1));
  CHECK(c[0] == doctest::Approx(p0).epsilon(1e-6));
  CHECK(c[0] > 0.9);
  CHECK(c.top1().index == 0);

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto t = testing::half_brightness_image({32, 32, 1}, seed);
    HalfBrightnessOracle o({32, 32, 1}, testing::kHalfTemperature);
    const auto ref = testing::half_brightness_probs(t, testing::kHalfTemperature);
    const auto got = o.query(t);
    CHECK(got[0] == doctest::Approx(ref[0]).epsilon(1e-9));
    CHECK(got[0] - got[1] >= 0.2);
  }
}

TEST_CASE("uniform gray is an even split") {
  for (const Shape s : {Shape{4, 4, 1}, Shape{5, 7, 3}}) {
    HalfBrightnessOracle oracle(s, 0.05);
    const auto c = oracle.query(ImageTensor::filled(s, 0.5f));
    CHECK(c[0] == 0.5);
    CHECK(c[1] == 0.5);
  }
}

TEST_CASE("odd widths ignore the centre column") {
  const Shape s{2, 3, 1};
  HalfBrightnessOracle oracle(s, 0.1);
  const ImageTensor img(s, {0.5f, 1.0f, 0.5f, 0.5f, 0.0f, 0.5f});
  CHECK(oracle.query(img)[0] == 0.5);
}

TEST_CASE("every query is counted once") {
  const Shape s{4, 4, 1};
  HalfBrightnessOracle oracle(s, 0.1);
  const auto img = ImageTensor::filled(s, 0.3f);
  CHECK(oracle.query_count() == 0);
  oracle.query(img);
  CHECK(oracle.query_count() == 1);
  oracle.query_binary(img);
  CHECK(oracle.query_count() == 2);
  for (int i = 0; i < 100; ++i) oracle.query(img);
  CHECK(oracle.query_count() == 102);
}

TEST_CASE("concurrent queries are all counted") {
  const Shape s{4, 4, 1};
  HalfBrightnessOracle oracle(s, 0.1);
  const auto img = ImageTensor::filled(s, 0.3f);
  std::vector<std::thread> pool;
  for (int t = 0; t < 8; ++t)
    pool.emplace_back([&] {
      for (int i = 0; i < 250; ++i) oracle.query(img);
    });
  for (auto& t : pool) t.join();
  CHECK(oracle.query_count() == 2000);
}

TEST_CASE("shape mismatch is an oracle error and is not counted") {
  HalfBrightnessOracle oracle({4, 4, 1}, 0.1);
  try {
    oracle.query(ImageTensor::filled({4, 4, 3}, 0.5f));
    FAIL("expected an error");
  } catch (const OracleError& e) {
    CHECK(e.kind() == OracleError::Kind::Shape);
    CHECK_FALSE(e.retryable());
  }
  CHECK(oracle.query_count() == 0);
}

TEST_CASE("binary outcome is the argmax one-hot") {
  FixedOracle a({0.7, 0.3});
  const auto img = ImageTensor::filled({1, 1, 1}, 0.0f);
  auto out = a.query_binary(img);
  CHECK(out.label.index == 0);
  CHECK(out.as_vector() == ConfidenceVector({1.0, 0.0}));

  FixedOracle tie({0.5, 0.5});
  CHECK(tie.query_binary(img).label.index == 0);
  CHECK(tie.query_count() == 1);
}

TEST_CASE("binary-only builtins answer one-hot") {
  const Shape s{4, 4, 1};
  HalfBrightnessOracle oracle(s, 0.1, true);
  CHECK(oracle.binary_only());
  const auto c = oracle.query(left_right(s, 0.2f, 0.3f));
  CHECK(c[0] == 0.0);
  CHECK(c[1] == 1.0);
}

TEST_CASE("prototype oracle scores by distance") {
  const Shape s{2, 2, 1};
  std::vector<ImageTensor> protos{ImageTensor::filled(s, 0.0f), ImageTensor::filled(s, 0.5f),
                                  ImageTensor::filled(s, 1.0f)};
  PrototypeOracle oracle(protos, 0.5);
  const auto c = oracle.query(ImageTensor::filled(s, 0.375f));
  // distances 0.75, 0.25, 1.25 over four pixels
  const double e[3] = {std::exp(-0.75 / 0.5), std::exp(-0.25 / 0.5), std::exp(-1.25 / 0.5)};
  const double z = e[0] + e[1] + e[2];
  for (int k = 0; k < 3; ++k) CHECK(c[k] == doctest::Approx(e[k] / z).epsilon(1e-9));
  CHECK(c.top1().index == 1);

  CHECK_THROWS(PrototypeOracle({ImageTensor::filled(s, 0.0f)}, 0.5));
  CHECK_THROWS_AS(PrototypeOracle({ImageTensor::filled(s, 0.0f), ImageTensor::filled({1, 1, 1}, 0.0f)}, 0.5),
                  ShapeError);
  CHECK_THROWS(PrototypeOracle(protos, 0.0));
}

TEST_CASE("prototypes load from flat binary files") {
  const auto dir = std::filesystem::temp_directory_path() / "evoattack_test_oracle";
  std::filesystem::create_directories(dir);
  const auto protos = testing::prototype_set({6, 6, 1}, 4, 1);
  std::vector<std::filesystem::path> files;
  for (std::size_t k = 0; k < protos.size(); ++k) {
    files.push_back(dir / ("p" + std::to_string(k) + ".bin"));
    save_image(protos[k], files.back());
  }
  auto oracle = PrototypeOracle::from_files(files, 0.05);
  CHECK(oracle.num_classes() == 4);
  for (std::size_t k = 0; k < 4; ++k) CHECK(oracle.query(protos[k]).top1().index == k);
}

TEST_CASE("Monte-Carlo with a constant model is one-hot") {
  const Shape s{4, 4, 1};
  ConstantOracle oracle(s, 3, 2);
  std::mt19937_64 rng(1);
  const auto c = monte_carlo_confidence(oracle, ImageTensor::filled(s, 0.5f), 50, kDefaultNoiseSigma, rng);
  CHECK(c == ConfidenceVector::one_hot(2, 3));
  CHECK(oracle.query_count() == 50);
}

TEST_CASE("Monte-Carlo with zero noise equals the binary outcome") {
  const Shape s{4, 4, 1};
  HalfBrightnessOracle oracle(s, 0.1);
  const auto img = left_right(s, 0.2f, 0.3f);
  std::mt19937_64 rng(1);
  const auto before = rng;
  const auto c = monte_carlo_confidence(oracle, img, 10, 0.0, rng);
  CHECK(c == oracle.query_binary(img).as_vector());
  CHECK(oracle.query_count() == 11);
  CHECK(rng == before);
}

TEST_CASE("Monte-Carlo matches a brute-force recomputation bit for bit") {
  const Shape s{16, 16, 1};
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto img = testing::half_brightness_image(s, seed, 0.0005);
    HalfBrightnessOracle oracle(s, testing::kHalfTemperature, true);
    std::mt19937_64 rng(seed);
    const auto est = monte_carlo_confidence(oracle, img, 100, kDefaultNoiseSigma, rng);

    std::mt19937_64 ref_rng(seed);
    std::normal_distribution<double> noise(0.0, kDefaultNoiseSigma);
    std::size_t right = 0;
    for (int n = 0; n < 100; ++n) {
      std::vector<float> v(s.size());
      for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = std::clamp(static_cast<float>(img[i] + noise(ref_rng)), 0.0f, 1.0f);
      const auto p = testing::half_brightness_probs(ImageTensor(s, v), testing::kHalfTemperature);
      right += p[1] > p[0] ? 1 : 0;
    }
    CHECK(est[1] == static_cast<double>(right) / 100);
    CHECK(est[0] == static_cast<double>(100 - right) / 100);
    CHECK(oracle.query_count() == 100);
  }
}

TEST_CASE("Monte-Carlo estimate converges to the smoothed probability") {
  // Right-minus-left mean under noise is Gaussian with sd sigma*sqrt(2/n_half);
  // clamping is negligible for pixels near 0.5.
  const Shape s{8, 8, 1};
  const double shift = 0.02;
  const auto img = left_right(s, 0.5f, static_cast<float>(0.5 + shift));
  HalfBrightnessOracle oracle(s, 0.01, true);
  std::mt19937_64 rng(5);
  const std::size_t n = 4000;
  const auto est = monte_carlo_confidence(oracle, img, n, kDefaultNoiseSigma, rng);
  const double sd = kDefaultNoiseSigma * std::sqrt(2.0 / 32.0);
  const double p1 = 0.5 * std::erfc(-shift / sd / std::sqrt(2.0));
  const double se = std::sqrt(p1 * (1 - p1) / n);
  CHECK(std::abs(est[1] - p1) < 3 * se);
}

TEST_CASE("Monte-Carlo argument checks") {
  const Shape s{2, 2, 1};
  HalfBrightnessOracle oracle(s, 0.1);
  std::mt19937_64 rng(1);
  CHECK_THROWS(monte_carlo_confidence(oracle, ImageTensor::filled(s, 0.5f), 0, 0.1, rng));
  CHECK_THROWS(monte_carlo_confidence(oracle, ImageTensor::filled(s, 0.5f), 5, -0.1, rng));
}
