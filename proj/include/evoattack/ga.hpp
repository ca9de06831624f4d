#ifndef EVOATTACK_GA_HPP
#define EVOATTACK_GA_HPP

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "evoattack/metrics.hpp"
#include "evoattack/oracle.hpp"
#include "evoattack/tensor.hpp"

namespace evoattack {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Diversity grid for the initial population. Individual i takes the i-th
/// tuple (cyclically) of sizes x counts x sigmas, sigma varying fastest.
struct InitGrid {
  std::vector<double> sigmas{5.0 / 255, 10.0 / 255, 15.0 / 255, 20.0 / 255, 25.0 / 255};
  std::vector<std::size_t> counts{50, 100, 150, 200, 250};
  std::vector<std::size_t> sizes{1};

  struct Tuple {
    double sigma;
    std::size_t count;
    std::size_t size;
  };
  std::size_t tuple_count() const { return sigmas.size() * counts.size() * sizes.size(); }
  Tuple tuple(std::size_t i) const;
};

/// Label-only target: confidences are Monte-Carlo estimates.
struct BinarySettings {
  std::size_t n_samples = 100;
  double sigma = kDefaultNoiseSigma;
};

/// Which maximum Z normalises the perturbation term: the initial
/// population (Z over A^0) or the first generation that contains a success.
enum class ZNormalization { FirstSuccess, Initial };

struct AttackConfig {
  std::size_t population_size = 20;
  std::size_t max_generations = 100;
  double crossover_prob = 1.0;
  double mutation_prob = 0.003;
  double alpha = 3.0;
  /// Early-exit threshold gamma on the best fitness; disabled when empty.
  std::optional<double> fitness_threshold;
  ZParams z_params = ZParams::machine();
  InitGrid init_grid;
  /// Share of elements redrawn by one mutation (at least one element).
  double mutation_fraction = 0.001;
  ZNormalization z_normalization = ZNormalization::FirstSuccess;
  /// Charge unsuccessful individuals the full perturbation weight (P - alpha,
  /// i.e. normalised Z taken as 1) so that a fresh success is not ranked
  /// below the failures it just escaped. When false, the failure branch is
  /// the bare confidence gap.
  bool saturate_failure_penalty = true;
  std::optional<Label> target;
  std::optional<BinarySettings> binary;
  std::uint64_t rng_seed = 0;
  bool parallel_evaluation = true;
  /// Skip the oracle for children identical to a parent or an earlier
  /// sibling and copy its confidence instead.
  bool reuse_evaluations = true;
  /// Replace the first individuals of the initial population.
  std::vector<Perturbation> seed_perturbations;

  /// MNIST/CIFAR-scale defaults: N=20, T=100, P_m=0.003.
  static AttackConfig small_images();
  /// ImageNet-scale defaults: N=50, T=400, P_m=0.001, 5000..15000 noise points.
  static AttackConfig large_images();

  void validate() const;
};

struct Individual {
  Perturbation pert;
  std::optional<ConfidenceVector> confidence{};
  std::optional<double> fitness{};
  double performance = 0.0;  // P, or p(y_tar) - p(y0) when targeted
  double z = 0.0;
  bool successful = false;
};

struct Population {
  std::vector<Individual> individuals;
  std::size_t generation = 0;
  std::optional<double> z_denominator;
};

// ---------------------------------------------------------------------------
// Operators

Population init_population(const ImageTensor& original, const AttackConfig& config,
                           std::mt19937_64& rng);

/// Confidence gap: p(y1) - p(y0) if the top label differs from y0,
/// p(y2) - p(y0) otherwise.
double attack_performance(const ConfidenceVector& conf, Label y0);

/// Success test for one confidence vector under the configured mode.
bool is_successful(const ConfidenceVector& conf, Label y0, const std::optional<Label>& target);

/// Fills performance, successful and fitness from the cached confidence and Z.
/// The perturbation term only applies to successful individuals and only
/// once a denominator is known.
double fitness(const Individual& ind, Label y0, std::optional<double> z_denominator,
               const AttackConfig& config);
double fitness(const Individual& ind, Label y0, const Population& pop, const AttackConfig& config);

struct SelectionWeights {
  std::vector<double> probability;  // f
  std::vector<double> cumulative;   // fr, last entry exactly 1
};

/// Fitness-proportionate weights. When any fitness is <= 0, all values are
/// shifted by -min + eps with eps = 1e-6 * (max - min + 1); equal values give
/// uniform weights.
SelectionWeights selection_weights(std::span<const double> fitness);

/// First index i with u < cumulative[i].
std::size_t roulette_select(std::span<const double> cumulative, double u);
std::size_t roulette_select(std::span<const double> cumulative, std::mt19937_64& rng);

/// child1 = a*B + b*(1-B), child2 = a*(1-B) + b*B, with one mask entry per
/// pixel location shared by all channels.
std::pair<Perturbation, Perturbation> crossover_with_mask(const Perturbation& a,
                                                          const Perturbation& b,
                                                          std::span<const std::uint8_t> mask);
std::pair<Perturbation, Perturbation> crossover(const Perturbation& a, const Perturbation& b,
                                                double crossover_prob, std::mt19937_64& rng);

/// Elementwise p * c, clipped to [-1,1].
Perturbation apply_mutation(const Perturbation& p, std::span<const float> c);
/// With probability mutation_prob, redraws max(1, round(fraction * size))
/// elements of C uniformly in [0,2] (others 1) and applies it.
Perturbation mutate(const Perturbation& p, double mutation_prob, double fraction,
                    std::mt19937_64& rng);

/// Father-son mixed selection: top N of parents + children by fitness, ties
/// broken by lower Z and then parents before children. Returns the new
/// individuals in rank order.
std::vector<Individual> select_survivors(std::span<const Individual> parents,
                                         std::span<const Individual> children);

// ---------------------------------------------------------------------------
// Evaluation

/// Queries the oracle for each individual lacking a confidence vector.
/// Binary mode draws each Monte-Carlo estimate from its own stream seeded by
/// (rng_seed, generation, index), so the parallel and serial paths agree
/// bit for bit. Returns the number of oracle evaluations performed.
std::size_t evaluate_confidences(std::span<Individual*> pending, const ImageTensor& original,
                                 Oracle& oracle, const AttackConfig& config,
                                 std::size_t generation);

namespace serial {
std::size_t evaluate_confidences(std::span<Individual*> pending, const ImageTensor& original,
                                 Oracle& oracle, const AttackConfig& config,
                                 std::size_t generation);
}  // namespace serial

// ---------------------------------------------------------------------------
// Driver

struct GenerationRecord {
  std::size_t generation = 0;  // 1-based
  double best_fitness = 0.0;
  double best_performance = 0.0;
  double best_z = 0.0;
  double best_l2_per_pixel = 0.0;
  bool best_successful = false;
  std::uint64_t cumulative_queries = 0;
};

enum class AttackStatus {
  Completed,              // loop ran to T or the threshold
  AlreadyAdversarial,     // original not classified as y0
  InfrastructureFailure,  // oracle error; result is partial
};

const char* to_string(AttackStatus status);

struct AttackResult {
  AttackStatus status = AttackStatus::Completed;
  std::string error;
  std::optional<Individual> best;
  std::optional<ImageTensor> adversarial;
  Label true_label;
  Label final_label;
  bool succeeded = false;
  std::vector<GenerationRecord> history;
  /// Queries consumed by the optimisation loop; the clean-image check is
  /// reported separately in `precheck_queries`.
  OracleStats stats;
  std::uint64_t precheck_queries = 0;
  /// Binary mode only: one label query on the final adversarial image, which
  /// then decides `final_label` and `succeeded`.
  std::uint64_t verification_queries = 0;
  std::size_t cache_hits = 0;
  std::optional<PerturbationReport> first_success_perturbation;
  std::optional<double> z_denominator;
};

AttackResult run_attack(const ImageTensor& original, Label y0, Oracle& oracle,
                        const AttackConfig& config);

}  // namespace evoattack

#endif  // EVOATTACK_GA_HPP
