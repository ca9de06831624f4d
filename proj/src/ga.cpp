#include "evoattack/ga.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <unordered_map>

namespace evoattack {
namespace {

double uniform01(std::mt19937_64& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

std::mt19937_64 evaluation_stream(std::uint64_t seed, std::size_t generation, std::size_t slot) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(generation), static_cast<std::uint32_t>(slot)};
  return std::mt19937_64(seq);
}

void evaluate_one(Individual& ind, const ImageTensor& original, Oracle& oracle,
                  const AttackConfig& config, std::size_t generation, std::size_t slot) {
  const ImageTensor candidate = apply(original, ind.pert);
  ind.z = z_metric(ind.pert, config.z_params);
  if (config.binary) {
    auto rng = evaluation_stream(config.rng_seed, generation, slot);
    ind.confidence =
        monte_carlo_confidence(oracle, candidate, config.binary->n_samples, config.binary->sigma, rng);
  } else {
    ind.confidence = oracle.query(candidate);
  }
}

// Performance and success follow directly from the cached confidence.
void score(Individual& ind, Label y0, const AttackConfig& config) {
  const auto& conf = *ind.confidence;
  ind.successful = is_successful(conf, y0, config.target);
  ind.performance = config.target ? conf[config.target->index] - conf[y0.index]
                                  : attack_performance(conf, y0);
}

bool ranks_before(const Individual& a, std::size_t ia, const Individual& b, std::size_t ib) {
  if (*a.fitness != *b.fitness) return *a.fitness > *b.fitness;
  if (a.z != b.z) return a.z < b.z;
  return ia < ib;
}

}  // namespace

InitGrid::Tuple InitGrid::tuple(std::size_t i) const {
  const std::size_t n = tuple_count();
  if (n == 0) throw ConfigError("init grid is empty");
  i %= n;
  const std::size_t s = i % sigmas.size();
  i /= sigmas.size();
  const std::size_t c = i % counts.size();
  i /= counts.size();
  return {sigmas[s], counts[c], sizes[i]};
}

AttackConfig AttackConfig::small_images() { return AttackConfig{}; }

AttackConfig AttackConfig::large_images() {
  AttackConfig c;
  c.population_size = 50;
  c.max_generations = 400;
  c.mutation_prob = 0.001;
  c.init_grid.counts = {5000, 7500, 10000, 12500, 15000};
  return c;
}

void AttackConfig::validate() const {
  if (population_size < 2 || population_size % 2 != 0)
    throw ConfigError("population_size must be even and >= 2, got " + std::to_string(population_size));
  if (max_generations < 1) throw ConfigError("max_generations must be >= 1");
  if (!(crossover_prob >= 0.0 && crossover_prob <= 1.0))
    throw ConfigError("crossover_prob must lie in [0,1]");
  if (!(mutation_prob >= 0.0 && mutation_prob <= 1.0))
    throw ConfigError("mutation_prob must lie in [0,1]");
  if (!(alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
  if (!(mutation_fraction >= 0.0 && mutation_fraction <= 1.0))
    throw ConfigError("mutation_fraction must lie in [0,1]");
  if (init_grid.tuple_count() == 0) throw ConfigError("init grid is empty");
  for (double s : init_grid.sigmas)
    if (!(s >= 0.0)) throw ConfigError("init grid sigma must be >= 0");
  for (std::size_t s : init_grid.sizes)
    if (s == 0) throw ConfigError("init grid patch size must be >= 1");
  if (binary) {
    if (binary->n_samples == 0) throw ConfigError("binary n_samples must be >= 1");
    if (!(binary->sigma >= 0.0)) throw ConfigError("binary sigma must be >= 0");
  }
  if (seed_perturbations.size() > population_size)
    throw ConfigError("more seed perturbations than population slots");
  try {
    z_params.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

Population init_population(const ImageTensor& original, const AttackConfig& config,
                           std::mt19937_64& rng) {
  const Shape shape = original.shape();
  if (config.init_grid.tuple_count() == 0) throw ConfigError("init grid is empty");
  Population pop;
  pop.generation = 1;
  pop.individuals.reserve(config.population_size);

  for (std::size_t i = 0; i < config.population_size; ++i) {
    const auto t = config.init_grid.tuple(i);
    if (t.size > shape.height || t.size > shape.width)
      throw ConfigError("noise patch " + std::to_string(t.size) + " larger than image " +
                        to_string(shape));
    std::vector<float> data(shape.size(), 0.0f);
    std::uniform_int_distribution<std::size_t> row(0, shape.height - t.size);
    std::uniform_int_distribution<std::size_t> col(0, shape.width - t.size);
    std::normal_distribution<double> noise(0.0, t.sigma > 0.0 ? t.sigma : 1.0);
    for (std::size_t k = 0; k < t.count; ++k) {
      const std::size_t r0 = row(rng);
      const std::size_t c0 = col(rng);
      for (std::size_t r = r0; r < r0 + t.size; ++r)
        for (std::size_t c = c0; c < c0 + t.size; ++c)
          for (std::size_t ch = 0; ch < shape.channels; ++ch)
            data[shape.index(r, c, ch)] = t.sigma > 0.0 ? static_cast<float>(noise(rng)) : 0.0f;
    }
    pop.individuals.push_back(Individual{.pert = Perturbation::clipped(shape, std::move(data))});
  }

  for (std::size_t i = 0; i < config.seed_perturbations.size(); ++i) {
    if (config.seed_perturbations[i].shape() != shape)
      throw ShapeError("seed perturbation " + std::to_string(i) + " has shape " +
                       to_string(config.seed_perturbations[i].shape()));
    pop.individuals[i] = Individual{.pert = config.seed_perturbations[i]};
  }
  return pop;
}

double attack_performance(const ConfidenceVector& conf, Label y0) {
  if (conf.size() < 2) throw std::invalid_argument("attack_performance: need K >= 2");
  const Label y1 = conf.top1();
  if (y1 != y0) return conf[y1.index] - conf[y0.index];
  return conf[conf.top2().index] - conf[y0.index];
}

bool is_successful(const ConfidenceVector& conf, Label y0, const std::optional<Label>& target) {
  const Label y1 = conf.top1();
  return target ? y1 == *target : y1 != y0;
}

double fitness(const Individual& ind, Label y0, std::optional<double> z_denominator,
               const AttackConfig& config) {
  if (!ind.confidence) throw std::invalid_argument("fitness: individual has not been evaluated");
  const auto& conf = *ind.confidence;
  const double perf = config.target ? conf[config.target->index] - conf[y0.index]
                                    : attack_performance(conf, y0);
  if (!is_successful(conf, y0, config.target))
    return config.saturate_failure_penalty ? perf - config.alpha : perf;
  if (z_denominator) return perf - config.alpha / *z_denominator * ind.z;
  return perf;
}

double fitness(const Individual& ind, Label y0, const Population& pop, const AttackConfig& config) {
  return fitness(ind, y0, pop.z_denominator, config);
}

SelectionWeights selection_weights(std::span<const double> fitness) {
  if (fitness.empty()) throw std::invalid_argument("selection_weights: empty population");
  const auto [lo, hi] = std::minmax_element(fitness.begin(), fitness.end());
  const double min = *lo;
  const double max = *hi;
  const std::size_t n = fitness.size();
  SelectionWeights w;
  w.probability.assign(n, 1.0 / static_cast<double>(n));
  if (max != min) {
    std::vector<double> shifted(fitness.begin(), fitness.end());
    if (min <= 0.0) {
      const double eps = 1e-6 * (max - min + 1.0);
      for (double& v : shifted) v = v - min + eps;
    }
    const double total = std::accumulate(shifted.begin(), shifted.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) w.probability[i] = shifted[i] / total;
  }
  w.cumulative.resize(n);
  std::partial_sum(w.probability.begin(), w.probability.end(), w.cumulative.begin());
  w.cumulative.back() = 1.0;
  return w;
}

std::size_t roulette_select(std::span<const double> cumulative, double u) {
  for (std::size_t i = 0; i < cumulative.size(); ++i)
    if (u < cumulative[i]) return i;
  return cumulative.size() - 1;
}

std::size_t roulette_select(std::span<const double> cumulative, std::mt19937_64& rng) {
  return roulette_select(cumulative, uniform01(rng));
}

std::pair<Perturbation, Perturbation> crossover_with_mask(const Perturbation& a,
                                                          const Perturbation& b,
                                                          std::span<const std::uint8_t> mask) {
  if (a.shape() != b.shape())
    throw ShapeError("crossover: parent shapes " + to_string(a.shape()) + " and " +
                     to_string(b.shape()) + " differ");
  const Shape& s = a.shape();
  if (mask.size() != s.pixels()) throw ShapeError("crossover: mask must have one entry per pixel");
  std::vector<float> c1(s.size());
  std::vector<float> c2(s.size());
  for (std::size_t p = 0; p < s.pixels(); ++p) {
    const bool take_a = mask[p] != 0;
    for (std::size_t k = 0; k < s.channels; ++k) {
      const std::size_t i = p * s.channels + k;
      c1[i] = take_a ? a[i] : b[i];
      c2[i] = take_a ? b[i] : a[i];
    }
  }
  return {Perturbation(s, std::move(c1)), Perturbation(s, std::move(c2))};
}

std::pair<Perturbation, Perturbation> crossover(const Perturbation& a, const Perturbation& b,
                                                double crossover_prob, std::mt19937_64& rng) {
  if (a.shape() != b.shape())
    throw ShapeError("crossover: parent shapes " + to_string(a.shape()) + " and " +
                     to_string(b.shape()) + " differ");
  if (!(uniform01(rng) < crossover_prob)) return {a, b};
  std::vector<std::uint8_t> mask(a.shape().pixels());
  std::bernoulli_distribution coin(0.5);
  for (auto& m : mask) m = coin(rng) ? 1 : 0;
  return crossover_with_mask(a, b, mask);
}

Perturbation apply_mutation(const Perturbation& p, std::span<const float> c) {
  if (c.size() != p.size()) throw ShapeError("mutation matrix does not match perturbation");
  std::vector<float> out(p.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = p[i] * c[i];
  return Perturbation::clipped(p.shape(), std::move(out));
}

Perturbation mutate(const Perturbation& p, double mutation_prob, double fraction,
                    std::mt19937_64& rng) {
  if (!(uniform01(rng) < mutation_prob)) return p;
  const std::size_t n = p.size();
  const auto m = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));
  std::vector<float> c(n, 1.0f);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::uniform_real_distribution<float> factor(0.0f, 2.0f);
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t i = pick(rng);
    c[i] = factor(rng);
  }
  return apply_mutation(p, c);
}

std::vector<Individual> select_survivors(std::span<const Individual> parents,
                                         std::span<const Individual> children) {
  const std::size_t n = parents.size();
  std::vector<const Individual*> pool;
  pool.reserve(n + children.size());
  for (const auto& ind : parents) pool.push_back(&ind);
  for (const auto& ind : children) pool.push_back(&ind);
  for (const auto* ind : pool)
    if (!ind->fitness) throw std::invalid_argument("select_survivors: unevaluated individual");

  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&pool](std::size_t a, std::size_t b) {
    return ranks_before(*pool[a], a, *pool[b], b);
  });

  std::vector<Individual> next;
  next.reserve(n);
  for (std::size_t k = 0; k < n; ++k) next.push_back(*pool[order[k]]);
  return next;
}

std::size_t evaluate_confidences(std::span<Individual*> pending, const ImageTensor& original,
                                 Oracle& oracle, const AttackConfig& config,
                                 std::size_t generation) {
  if (!config.parallel_evaluation || !oracle.concurrent_safe())
    return serial::evaluate_confidences(pending, original, oracle, config, generation);

  const auto n = static_cast<std::ptrdiff_t>(pending.size());
  std::vector<std::exception_ptr> errors(pending.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      evaluate_one(*pending[i], original, oracle, config, generation, static_cast<std::size_t>(i));
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return pending.size();
}

namespace serial {

std::size_t evaluate_confidences(std::span<Individual*> pending, const ImageTensor& original,
                                 Oracle& oracle, const AttackConfig& config,
                                 std::size_t generation) {
  for (std::size_t i = 0; i < pending.size(); ++i)
    evaluate_one(*pending[i], original, oracle, config, generation, i);
  return pending.size();
}

}  // namespace serial

const char* to_string(AttackStatus status) {
  switch (status) {
    case AttackStatus::Completed: return "completed";
    case AttackStatus::AlreadyAdversarial: return "already_adversarial";
    case AttackStatus::InfrastructureFailure: return "infrastructure_failure";
  }
  return "unknown";
}

namespace {

/// One optimisation run; owns the RNG, the population and the bookkeeping.
class AttackRun {
 public:
  AttackRun(const ImageTensor& original, Label y0, Oracle& oracle, const AttackConfig& config)
      : original_(original), y0_(y0), oracle_(oracle), config_(config), rng_(config.rng_seed) {
    queries_per_eval_ = config.binary ? config.binary->n_samples : 1;
  }

  void execute(AttackResult& result) {
    loop_start_ = oracle_.query_count();
    pop_ = init_population(original_, config_, rng_);
    evaluate_batch(pop_.individuals, {}, 1, result);
    if (config_.z_normalization == ZNormalization::Initial) {
      double max_z = 0.0;
      for (const auto& ind : pop_.individuals) max_z = std::max(max_z, ind.z);
      if (max_z > 0.0) pop_.z_denominator = max_z;
    }
    assign_fitness(pop_.individuals);
    pop_.individuals = select_survivors(pop_.individuals, {});
    evaluated_ = true;

    for (std::size_t t = 1;; ++t) {
      record(t, result);
      if (config_.fitness_threshold && *pop_.individuals.front().fitness > *config_.fitness_threshold)
        break;
      if (t == config_.max_generations) break;

      auto children = breed();
      evaluate_batch(children, pop_.individuals, t + 1, result);
      assign_fitness(children);
      pop_.individuals = select_survivors(pop_.individuals, children);
      pop_.generation = t + 1;
    }
  }

  void finish(AttackResult& result) const {
    result.stats.total_queries = oracle_.query_count() - loop_start_;
    result.z_denominator = pop_.z_denominator;
    if (!evaluated_) return;
    const Individual& best = pop_.individuals.front();
    result.best = best;
    result.adversarial = apply(original_, best.pert);
    result.final_label = best.confidence->top1();
    result.succeeded = best.successful;
  }

 private:
  void evaluate_batch(std::vector<Individual>& batch, std::span<const Individual> known,
                      std::size_t generation, AttackResult& result) {
    std::unordered_multimap<std::size_t, const Individual*> seen;
    for (const auto& ind : known) seen.emplace(ind.pert.content_hash(), &ind);

    std::vector<Individual*> pending;
    std::vector<std::pair<std::size_t, const Individual*>> copies;
    std::vector<bool> queried(batch.size(), false);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const std::size_t h = batch[i].pert.content_hash();
      const Individual* source = nullptr;
      auto [lo, hi] = config_.reuse_evaluations ? seen.equal_range(h) : std::pair{seen.end(), seen.end()};
      for (auto it = lo; it != hi && !source; ++it)
        if (it->second->pert == batch[i].pert) source = it->second;
      if (source) {
        copies.emplace_back(i, source);
        ++result.cache_hits;
      } else {
        pending.push_back(&batch[i]);
        queried[i] = true;
        seen.emplace(h, &batch[i]);
      }
    }

    const std::uint64_t before = oracle_.query_count() - loop_start_;
    evaluate_confidences(pending, original_, oracle_, config_, generation);
    for (const auto& [i, source] : copies) {
      batch[i].confidence = source->confidence;
      batch[i].z = source->z;
    }

    std::uint64_t issued = 0;
    double max_success_z = 0.0;
    bool any_success = false;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (queried[i]) issued += queries_per_eval_;
      score(batch[i], y0_, config_);
      if (!batch[i].successful) continue;
      if (!result.stats.queries_at_first_success) {
        result.stats.queries_at_first_success = before + issued;
        result.first_success_perturbation = perturbation_report(batch[i].pert, config_.z_params);
      }
      any_success = true;
      max_success_z = std::max(max_success_z, batch[i].z);
    }
    if (config_.z_normalization == ZNormalization::FirstSuccess && !pop_.z_denominator &&
        any_success && max_success_z > 0.0)
      pop_.z_denominator = max_success_z;
  }

  void assign_fitness(std::vector<Individual>& batch) const {
    for (auto& ind : batch) ind.fitness = fitness(ind, y0_, pop_.z_denominator, config_);
  }

  std::vector<Individual> breed() {
    std::vector<double> fit;
    fit.reserve(pop_.individuals.size());
    for (const auto& ind : pop_.individuals) fit.push_back(*ind.fitness);
    const auto weights = selection_weights(fit);

    std::vector<Individual> children;
    children.reserve(config_.population_size);
    for (std::size_t n = 0; n < config_.population_size / 2; ++n) {
      const auto& a = pop_.individuals[roulette_select(weights.cumulative, rng_)].pert;
      const auto& b = pop_.individuals[roulette_select(weights.cumulative, rng_)].pert;
      auto [c1, c2] = crossover(a, b, config_.crossover_prob, rng_);
      children.push_back(Individual{.pert = mutate(c1, config_.mutation_prob, config_.mutation_fraction, rng_)});
      children.push_back(Individual{.pert = mutate(c2, config_.mutation_prob, config_.mutation_fraction, rng_)});
    }
    return children;
  }

  void record(std::size_t t, AttackResult& result) const {
    const Individual& best = pop_.individuals.front();
    GenerationRecord rec;
    rec.generation = t;
    rec.best_fitness = *best.fitness;
    rec.best_performance = best.performance;
    rec.best_z = best.z;
    rec.best_l2_per_pixel = lp_report(best.pert).l2_per_pixel;
    rec.best_successful = best.successful;
    rec.cumulative_queries = oracle_.query_count() - loop_start_;
    result.history.push_back(rec);
  }

  const ImageTensor& original_;
  Label y0_;
  Oracle& oracle_;
  const AttackConfig& config_;
  std::mt19937_64 rng_;
  std::uint64_t queries_per_eval_ = 1;
  std::uint64_t loop_start_ = 0;
  Population pop_;
  bool evaluated_ = false;
};

}  // namespace

AttackResult run_attack(const ImageTensor& original, Label y0, Oracle& oracle,
                        const AttackConfig& config) {
  config.validate();
  if (original.shape() != oracle.input_shape())
    throw ShapeError("run_attack: image shape " + to_string(original.shape()) +
                     " does not match oracle input " + to_string(oracle.input_shape()));
  const std::size_t k = oracle.num_classes();
  if (y0.index >= k) throw ConfigError("true label out of range for the oracle");
  if (config.target && (config.target->index >= k || *config.target == y0))
    throw ConfigError("target label must be a valid class different from the true label");

  AttackResult result;
  result.true_label = y0;
  result.final_label = y0;

  const std::uint64_t start = oracle.query_count();
  std::optional<ConfidenceVector> clean;
  try {
    clean = config.binary ? oracle.query_binary(original).as_vector() : oracle.query(original);
  } catch (const OracleError& e) {
    result.status = AttackStatus::InfrastructureFailure;
    result.error = e.what();
    result.precheck_queries = oracle.query_count() - start;
    return result;
  }
  result.precheck_queries = oracle.query_count() - start;

  if (clean->top1() != y0) {
    Individual ind{.pert = Perturbation::zeros(original.shape()), .confidence = clean};
    score(ind, y0, config);
    ind.fitness = fitness(ind, y0, std::nullopt, config);
    result.status = AttackStatus::AlreadyAdversarial;
    result.final_label = clean->top1();
    result.succeeded = ind.successful;
    result.best = std::move(ind);
    result.adversarial = original;
    if (result.succeeded) result.stats.queries_at_first_success = 0;
    return result;
  }

  AttackRun run(original, y0, oracle, config);
  try {
    run.execute(result);
  } catch (const OracleError& e) {
    result.status = AttackStatus::InfrastructureFailure;
    result.error = e.what();
  }
  run.finish(result);

  if (config.binary && result.status == AttackStatus::Completed && result.adversarial) {
    const std::uint64_t before = oracle.query_count();
    try {
      result.final_label = oracle.query_binary(*result.adversarial).label;
      result.succeeded = config.target ? result.final_label == *config.target
                                       : result.final_label != y0;
    } catch (const OracleError& e) {
      result.status = AttackStatus::InfrastructureFailure;
      result.error = e.what();
    }
    result.verification_queries = oracle.query_count() - before;
  }
  return result;
}

}  // namespace evoattack
