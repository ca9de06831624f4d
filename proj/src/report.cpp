#include "evoattack/report.hpp"

#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "evoattack/tensor_io.hpp"

namespace evoattack {

using nlohmann::json;

json to_json(const PerturbationReport& r) {
  return {{"z", r.z}, {"l0", r.l0}, {"l2_per_pixel", r.l2_per_pixel}, {"linf", r.linf}};
}

json to_json(const AttackConfig& c) {
  json j;
  j["population_size"] = c.population_size;
  j["max_generations"] = c.max_generations;
  j["crossover_prob"] = c.crossover_prob;
  j["mutation_prob"] = c.mutation_prob;
  j["mutation_fraction"] = c.mutation_fraction;
  j["saturate_failure_penalty"] = c.saturate_failure_penalty;
  j["reuse_evaluations"] = c.reuse_evaluations;
  j["alpha"] = c.alpha;
  j["fitness_threshold"] = c.fitness_threshold ? json(*c.fitness_threshold) : json(nullptr);
  j["z_params"] = {{"pm1", c.z_params.pm1}, {"pm2", c.z_params.pm2}};
  j["init_grid"] = {{"sigmas", c.init_grid.sigmas},
                    {"counts", c.init_grid.counts},
                    {"sizes", c.init_grid.sizes}};
  j["z_normalization"] =
      c.z_normalization == ZNormalization::FirstSuccess ? "first_success" : "initial";
  j["target"] = c.target ? json(c.target->index) : json(nullptr);
  j["binary"] = c.binary ? json{{"n_samples", c.binary->n_samples}, {"sigma", c.binary->sigma}}
                         : json(nullptr);
  j["rng_seed"] = c.rng_seed;
  j["parallel_evaluation"] = c.parallel_evaluation;
  j["seed_perturbations"] = c.seed_perturbations.size();
  return j;
}

AttackConfig config_from_json(const json& j, AttackConfig c) {
  if (!j.is_object()) throw ConfigError("attack config must be a JSON object");
  static const std::set<std::string> known = {
      "population_size", "max_generations",   "crossover_prob", "mutation_prob",
      "mutation_fraction", "alpha",           "fitness_threshold", "z_params",
      "init_grid",       "z_normalization",   "target",         "binary",
      "rng_seed",        "parallel_evaluation", "seed_perturbations",
      "saturate_failure_penalty", "reuse_evaluations"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");

  try {
    if (j.contains("population_size")) c.population_size = j["population_size"].get<std::size_t>();
    if (j.contains("max_generations")) c.max_generations = j["max_generations"].get<std::size_t>();
    if (j.contains("crossover_prob")) c.crossover_prob = j["crossover_prob"].get<double>();
    if (j.contains("mutation_prob")) c.mutation_prob = j["mutation_prob"].get<double>();
    if (j.contains("mutation_fraction")) c.mutation_fraction = j["mutation_fraction"].get<double>();
    if (j.contains("alpha")) c.alpha = j["alpha"].get<double>();
    if (j.contains("reuse_evaluations")) c.reuse_evaluations = j["reuse_evaluations"].get<bool>();
    if (j.contains("saturate_failure_penalty"))
      c.saturate_failure_penalty = j["saturate_failure_penalty"].get<bool>();
    if (j.contains("fitness_threshold")) {
      const auto& v = j["fitness_threshold"];
      c.fitness_threshold = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
    }
    if (j.contains("z_params")) {
      const auto& z = j["z_params"];
      c.z_params.pm1 = z.value("pm1", c.z_params.pm1);
      c.z_params.pm2 = z.value("pm2", c.z_params.pm2);
    }
    if (j.contains("init_grid")) {
      const auto& g = j["init_grid"];
      if (g.contains("sigmas")) c.init_grid.sigmas = g["sigmas"].get<std::vector<double>>();
      if (g.contains("counts")) c.init_grid.counts = g["counts"].get<std::vector<std::size_t>>();
      if (g.contains("sizes")) c.init_grid.sizes = g["sizes"].get<std::vector<std::size_t>>();
    }
    if (j.contains("z_normalization")) {
      const auto s = j["z_normalization"].get<std::string>();
      if (s == "first_success") c.z_normalization = ZNormalization::FirstSuccess;
      else if (s == "initial") c.z_normalization = ZNormalization::Initial;
      else throw ConfigError("z_normalization must be 'first_success' or 'initial'");
    }
    if (j.contains("target")) {
      const auto& v = j["target"];
      c.target = v.is_null() ? std::nullopt : std::optional<Label>(Label{v.get<std::size_t>()});
    }
    if (j.contains("binary")) {
      const auto& v = j["binary"];
      if (v.is_null() || v == false) {
        c.binary.reset();
      } else {
        BinarySettings b;
        if (v.is_object()) {
          b.n_samples = v.value("n_samples", b.n_samples);
          b.sigma = v.value("sigma", b.sigma);
        }
        c.binary = b;
      }
    }
    if (j.contains("rng_seed")) c.rng_seed = j["rng_seed"].get<std::uint64_t>();
    if (j.contains("parallel_evaluation")) c.parallel_evaluation = j["parallel_evaluation"].get<bool>();
    if (j.contains("seed_perturbations")) {
      c.seed_perturbations.clear();
      for (const auto& p : j["seed_perturbations"])
        c.seed_perturbations.push_back(load_perturbation(p.get<std::string>()));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("attack config: ") + e.what());
  }
  return c;
}

json to_json(const AttackResult& r, const AttackConfig& config) {
  json j;
  j["schema"] = kReportSchema;
  j["config"] = to_json(config);
  j["rng_seed"] = config.rng_seed;
  j["status"] = to_string(r.status);
  j["error"] = r.error;
  j["succeeded"] = r.succeeded;
  j["true_label"] = r.true_label.index;
  j["final_label"] = r.final_label.index;
  j["target"] = config.target ? json(config.target->index) : json(nullptr);
  j["queries"] = {
      {"total", r.stats.total_queries},
      {"first_success", r.stats.queries_at_first_success
                            ? json(*r.stats.queries_at_first_success)
                            : json(nullptr)},
      {"precheck", r.precheck_queries},
      {"verification", r.verification_queries},
      {"cache_hits", r.cache_hits},
  };
  j["z_denominator"] = r.z_denominator ? json(*r.z_denominator) : json(nullptr);
  if (r.best) {
    j["perturbation"] = to_json(perturbation_report(r.best->pert, config.z_params));
    j["best"] = {{"fitness", r.best->fitness ? json(*r.best->fitness) : json(nullptr)},
                 {"P", r.best->performance},
                 {"Z", r.best->z},
                 {"successful", r.best->successful}};
  } else {
    j["perturbation"] = nullptr;
    j["best"] = nullptr;
  }
  j["first_success_perturbation"] =
      r.first_success_perturbation ? to_json(*r.first_success_perturbation) : json(nullptr);
  json rows = json::array();
  for (const auto& h : r.history)
    rows.push_back({{"t", h.generation},
                    {"best_fitness", h.best_fitness},
                    {"best_P", h.best_performance},
                    {"best_Z", h.best_z},
                    {"best_l2_per_pixel", h.best_l2_per_pixel},
                    {"best_successful", h.best_successful},
                    {"cumulative_queries", h.cumulative_queries}});
  j["history"] = std::move(rows);
  return j;
}

std::string history_csv(const AttackResult& r) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "generation,best_fitness,best_P,best_Z,cumulative_queries\n";
  for (const auto& h : r.history)
    out << h.generation << ',' << h.best_fitness << ',' << h.best_performance << ',' << h.best_z
        << ',' << h.cumulative_queries << '\n';
  return out.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << text;
  if (!out) throw IoError(path.string() + ": write failed");
}

}  // namespace evoattack
