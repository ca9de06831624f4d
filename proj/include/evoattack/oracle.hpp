#ifndef EVOATTACK_ORACLE_HPP
#define EVOATTACK_ORACLE_HPP

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "evoattack/tensor.hpp"

namespace evoattack {

class OracleError : public std::runtime_error {
 public:
  enum class Kind { Shape, Transport, Malformed, ClassCount };
  OracleError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }
  bool retryable() const { return kind_ == Kind::Transport; }

 private:
  Kind kind_;
};

/// Per-label output of the target model: K >= 2 non-negative values summing
/// to 1 within `kTolerance`.
class ConfidenceVector {
 public:
  static constexpr double kTolerance = 1e-6;

  explicit ConfidenceVector(std::vector<double> probs);
  static ConfidenceVector one_hot(std::size_t label, std::size_t classes);

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::span<const double> probs() const { return probs_; }

  /// Highest-confidence label; ties go to the lowest index.
  Label top1() const;
  /// Second-highest label under the same tie rule.
  Label top2() const;

  friend bool operator==(const ConfidenceVector&, const ConfidenceVector&) = default;

 private:
  std::vector<double> probs_;
};

struct BinaryOutcome {
  Label label;
  std::size_t classes = 0;
  ConfidenceVector as_vector() const { return ConfidenceVector::one_hot(label.index, classes); }
};

struct OracleStats {
  std::uint64_t total_queries = 0;
  std::optional<std::uint64_t> queries_at_first_success;
};

/// The target model. Every call through `query`/`query_binary` is counted
/// exactly once; the counter is atomic so concurrent callers are safe when
/// `concurrent_safe()` holds.
class Oracle {
 public:
  virtual ~Oracle() = default;

  virtual std::size_t num_classes() const = 0;
  virtual Shape input_shape() const = 0;
  /// The model only reports its predicted label (one-hot vectors).
  virtual bool binary_only() const { return false; }
  virtual bool concurrent_safe() const { return true; }

  ConfidenceVector query(const ImageTensor& image);
  /// Argmax of the model output as a one-hot outcome. Counts one query.
  BinaryOutcome query_binary(const ImageTensor& image);

  std::uint64_t query_count() const { return queries_.load(std::memory_order_relaxed); }

 protected:
  /// Uncounted model evaluation; the shape has already been checked.
  virtual ConfidenceVector evaluate(const ImageTensor& image) = 0;

 private:
  void check_shape(const ImageTensor& image) const;
  std::atomic<std::uint64_t> queries_{0};
};

/// Two classes scored by the mean brightness of the left and right halves:
/// probs = softmax([mean_left, mean_right] / temperature). With an odd width
/// the centre column belongs to neither half.
class HalfBrightnessOracle : public Oracle {
 public:
  HalfBrightnessOracle(Shape shape, double temperature, bool binary_only = false);

  std::size_t num_classes() const override { return 2; }
  Shape input_shape() const override { return shape_; }
  bool binary_only() const override { return binary_only_; }
  double temperature() const { return temperature_; }

 protected:
  ConfidenceVector evaluate(const ImageTensor& image) override;

 private:
  Shape shape_;
  double temperature_;
  bool binary_only_;
};

/// K classes scored by softmax(-distance(image, prototype_k) / temperature),
/// Euclidean distance over all elements.
class PrototypeOracle : public Oracle {
 public:
  PrototypeOracle(std::vector<ImageTensor> prototypes, double temperature,
                  bool binary_only = false);
  static PrototypeOracle from_files(std::span<const std::filesystem::path> paths,
                                    double temperature, bool binary_only = false);

  std::size_t num_classes() const override { return prototypes_.size(); }
  Shape input_shape() const override { return prototypes_.front().shape(); }
  bool binary_only() const override { return binary_only_; }
  const std::vector<ImageTensor>& prototypes() const { return prototypes_; }

 protected:
  ConfidenceVector evaluate(const ImageTensor& image) override;

 private:
  std::vector<ImageTensor> prototypes_;
  double temperature_;
  bool binary_only_;
};

struct RemoteOptions {
  std::string endpoint;  // e.g. "http://127.0.0.1:8080"
  int max_retries = 3;   // extra attempts after a transport failure
  double timeout_seconds = 30.0;
  std::optional<std::size_t> expected_classes;
  std::optional<Shape> expected_shape;
};

struct RemoteInfo {
  std::size_t classes = 0;
  Shape shape;
  bool binary_only = false;
};

/// Probes GET /info once; used by the CLI's serve-info-check.
RemoteInfo fetch_remote_info(const RemoteOptions& options);

/// Environment variable that overrides the remote endpoint.
inline constexpr const char* kEndpointEnv = "EVOATTACK_ORACLE_URL";

/// Client for the JSON-over-HTTP oracle protocol:
///   GET  /info    -> {"classes":K, "shape":[H,W,C], "binary_only":bool}
///   POST /predict <- {"shape":[H,W,C], "data":[...]}  -> {"probs":[...]}
/// Transport failures are retried up to `max_retries` times inside a single
/// counted query. Malformed responses fail the query immediately.
class RemoteOracle : public Oracle {
 public:
  explicit RemoteOracle(RemoteOptions options);

  std::size_t num_classes() const override { return info_.classes; }
  Shape input_shape() const override { return info_.shape; }
  bool binary_only() const override { return info_.binary_only; }

 protected:
  ConfidenceVector evaluate(const ImageTensor& image) override;

 private:
  RemoteOptions options_;
  RemoteInfo info_;
};

/// Validates a /predict payload against the protocol: K entries, all finite
/// and non-negative, summing to 1 within 1e-4 (or exactly one-hot when
/// binary_only). Returns the renormalised vector.
ConfidenceVector parse_probs(std::span<const double> probs, std::size_t classes, bool binary_only);

inline constexpr double kDefaultNoiseSigma = 30.0 / 255.0;

/// Estimates a confidence vector for a label-only model: the mean of
/// one-hot outcomes over `n_samples` noisy copies image + N(0, sigma^2),
/// each clamped to [0,1]. Noise is drawn sample by sample, element by
/// element, from one std::normal_distribution over `rng`. sigma == 0 draws
/// nothing. Counts exactly `n_samples` queries.
ConfidenceVector monte_carlo_confidence(Oracle& oracle, const ImageTensor& image,
                                        std::size_t n_samples, double sigma,
                                        std::mt19937_64& rng);

}  // namespace evoattack

#endif  // EVOATTACK_ORACLE_HPP
