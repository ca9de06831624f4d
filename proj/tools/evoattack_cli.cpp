// evoattack command line.
//
// Exit codes: 0 success (including campaigns where some attacks failed),
// 1 unexpected error, 2 configuration/input error, 3 oracle/infrastructure error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>

#include "evoattack/campaign.hpp"
#include "evoattack/metrics.hpp"
#include "evoattack/report.hpp"
#include "evoattack/tensor_io.hpp"

using nlohmann::json;
using namespace evoattack;

namespace {

// Flags that override AttackConfig fields; unset flags leave the file values.
struct ConfigFlags {
  std::string config_file;
  std::optional<std::size_t> population, generations, target, mc_samples;
  std::optional<double> pc, pm, alpha, gamma, pm1, pm2, mutation_fraction, mc_sigma;
  std::optional<std::uint64_t> seed;
  std::vector<double> sigmas;
  std::vector<std::size_t> counts, sizes;
  std::vector<std::string> seed_perturbations;
  std::string z_normalization;
  bool binary = false;
  bool serial = false;
  bool literal_failure = false;
  bool no_reuse = false;

  void add_to(CLI::App* app) {
    app->add_option("--config", config_file, "AttackConfig JSON file");
    app->add_option("--population", population, "Population size N (even)");
    app->add_option("--generations", generations, "Maximum generations T");
    app->add_option("--pc", pc, "Crossover probability");
    app->add_option("--pm", pm, "Mutation probability");
    app->add_option("--alpha", alpha, "Perturbation weight in the fitness");
    app->add_option("--gamma", gamma, "Early-exit fitness threshold");
    app->add_option("--pm1", pm1, "Z metric slope");
    app->add_option("--pm2", pm2, "Z metric offset");
    app->add_option("--mutation-fraction", mutation_fraction, "Share of elements touched per mutation");
    app->add_option("--sigmas", sigmas, "Init noise std devs (normalised units)");
    app->add_option("--counts", counts, "Init noise point counts");
    app->add_option("--sizes", sizes, "Init noise patch sizes");
    app->add_option("--z-normalization", z_normalization, "first_success | initial")
        ->check(CLI::IsMember({"first_success", "initial"}));
    app->add_option("--target", target, "Target label (targeted attack)");
    app->add_flag("--binary", binary, "Label-only oracle: Monte-Carlo confidence estimates");
    app->add_option("--mc-samples", mc_samples, "Monte-Carlo samples per estimate");
    app->add_option("--mc-sigma", mc_sigma, "Monte-Carlo noise std dev (normalised units)");
    app->add_option("--seed", seed, "RNG seed (random when omitted)");
    app->add_option("--seed-perturbations", seed_perturbations, "Flat-binary initial perturbations");
    app->add_flag("--serial", serial, "Evaluate individuals sequentially");
    app->add_flag("--bare-failure-fitness", literal_failure,
                  "Score unsuccessful individuals by the confidence gap alone");
    app->add_flag("--no-reuse", no_reuse, "Query the oracle for duplicate children too");
  }

  json overrides() const {
    json j = json::object();
    if (!config_file.empty()) {
      std::ifstream in(config_file);
      if (!in) throw ConfigError(config_file + ": cannot open");
      try {
        j = json::parse(in);
      } catch (const json::parse_error& e) {
        throw ConfigError(config_file + ": " + e.what());
      }
    }
    if (population) j["population_size"] = *population;
    if (generations) j["max_generations"] = *generations;
    if (pc) j["crossover_prob"] = *pc;
    if (pm) j["mutation_prob"] = *pm;
    if (alpha) j["alpha"] = *alpha;
    if (gamma) j["fitness_threshold"] = *gamma;
    if (pm1) j["z_params"]["pm1"] = *pm1;
    if (pm2) j["z_params"]["pm2"] = *pm2;
    if (mutation_fraction) j["mutation_fraction"] = *mutation_fraction;
    if (!sigmas.empty()) j["init_grid"]["sigmas"] = sigmas;
    if (!counts.empty()) j["init_grid"]["counts"] = counts;
    if (!sizes.empty()) j["init_grid"]["sizes"] = sizes;
    if (!z_normalization.empty()) j["z_normalization"] = z_normalization;
    if (target) j["target"] = *target;
    if (binary || mc_samples || mc_sigma) {
      json b = j.contains("binary") && j["binary"].is_object() ? j["binary"] : json::object();
      if (mc_samples) b["n_samples"] = *mc_samples;
      if (mc_sigma) b["sigma"] = *mc_sigma;
      j["binary"] = b;
    }
    if (seed) j["rng_seed"] = *seed;
    if (!seed_perturbations.empty()) j["seed_perturbations"] = seed_perturbations;
    if (serial) j["parallel_evaluation"] = false;
    if (literal_failure) j["saturate_failure_penalty"] = false;
    if (no_reuse) j["reuse_evaluations"] = false;
    return j;
  }
};

struct OracleFlags {
  std::string builtin;
  std::vector<std::size_t> shape;
  std::optional<double> temperature;
  bool binary_only = false;
  std::vector<std::string> prototypes;
  std::string remote;
  std::optional<int> retries;
  std::optional<double> timeout;

  void add_to(CLI::App* app) {
    app->add_option("--oracle", builtin, "Builtin oracle: half-brightness | prototype")
        ->check(CLI::IsMember({"half-brightness", "prototype"}));
    app->add_option("--shape", shape, "Oracle input shape H W C")->expected(3);
    app->add_option("--temperature", temperature, "Builtin oracle softmax temperature");
    app->add_flag("--binary-only", binary_only, "Builtin oracle reports labels only");
    app->add_option("--prototypes", prototypes, "Prototype images (flat binary or PNG)");
    app->add_option("--remote", remote,
                    std::string("Remote oracle endpoint (env ") + kEndpointEnv + ")");
    app->add_option("--retries", retries, "Remote transport retries");
    app->add_option("--timeout", timeout, "Remote timeout in seconds");
  }

  // Flags win over the campaign file; the environment overrides the file endpoint.
  void apply(OracleSpec& spec) const {
    if (const char* env = std::getenv(kEndpointEnv); env && *env) spec.endpoint = env;
    if (!remote.empty()) spec.endpoint = remote;
    if (!builtin.empty()) {
      spec.builtin = builtin;
      if (remote.empty()) spec.endpoint.clear();
    }
    if (!shape.empty()) spec.shape = {shape[0], shape[1], shape[2]};
    if (temperature) spec.temperature = *temperature;
    if (binary_only) spec.binary_only = true;
    if (!prototypes.empty()) {
      spec.prototypes.clear();
      for (const auto& p : prototypes) spec.prototypes.emplace_back(p);
    }
    if (retries) spec.max_retries = *retries;
    if (timeout) spec.timeout_seconds = *timeout;
  }
};

struct CampaignFlags {
  std::string campaign;
  std::string image;
  std::optional<std::size_t> label;
  std::string out;
  bool parallel_examples = false;

  void add_to(CLI::App* app) {
    app->add_option("--campaign", campaign, "Campaign JSON file");
    app->add_option("--image", image, "Single input image (instead of --campaign)");
    app->add_option("--label", label, "True label of --image");
    app->add_option("--out", out, "Output directory");
    app->add_flag("--parallel-examples", parallel_examples, "Run examples concurrently");
  }
};

CampaignSpec build_spec(const CampaignFlags& cf, const ConfigFlags& config, const OracleFlags& oracle) {
  json j;
  std::filesystem::path base;
  if (!cf.campaign.empty()) {
    std::ifstream in(cf.campaign);
    if (!in) throw ConfigError(cf.campaign + ": cannot open campaign file");
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError(cf.campaign + ": " + e.what());
    }
    base = std::filesystem::path(cf.campaign).parent_path();
  } else {
    if (cf.image.empty() || !cf.label) throw ConfigError("give --campaign or both --image and --label");
    j["examples"] = json::array({{{"image", cf.image}, {"label", *cf.label}}});
    j["oracle"] = {{"builtin", "half-brightness"}};
  }
  if (!j.contains("oracle")) j["oracle"] = {{"builtin", "half-brightness"}};

  json merged = j.value("config", json::object());
  merged.merge_patch(config.overrides());
  j["config"] = merged;
  if (!cf.out.empty()) j["output_dir"] = std::filesystem::absolute(cf.out).string();
  if (cf.parallel_examples) j["parallel_examples"] = true;

  CampaignSpec spec = campaign_from_json(j, base);
  oracle.apply(spec.oracle);
  if (spec.oracle.endpoint.empty() && spec.oracle.builtin == "half-brightness" &&
      spec.oracle.shape.size() == 0)
    spec.oracle.shape = load_image(spec.examples.front().image).shape();
  return spec;
}

int report_error(const std::exception& e, int code) {
  std::cerr << "error: " << e.what() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Black-box adversarial perturbation search with a genetic algorithm"};
  app.require_subcommand(1);

  auto* attack = app.add_subcommand("attack", "Run an attack campaign");
  CampaignFlags attack_campaign;
  ConfigFlags attack_config;
  OracleFlags attack_oracle;
  attack_campaign.add_to(attack);
  attack_config.add_to(attack);
  attack_oracle.add_to(attack);

  auto* sweep = app.add_subcommand("sweep-alpha", "Repeat a campaign over several alpha values");
  CampaignFlags sweep_campaign;
  ConfigFlags sweep_config;
  OracleFlags sweep_oracle;
  std::vector<double> alphas;
  sweep_campaign.add_to(sweep);
  sweep_config.add_to(sweep);
  sweep_oracle.add_to(sweep);
  sweep->add_option("--alphas", alphas, "Alpha values")->required();

  auto* metrics = app.add_subcommand("metrics", "Perturbation metrics of image_a - image_b");
  std::string image_a, image_b;
  double pm1 = ZParams::naked_eye().pm1;
  double pm2 = ZParams::naked_eye().pm2;
  metrics->add_option("image_a", image_a)->required();
  metrics->add_option("image_b", image_b)->required();
  metrics->add_option("--pm1", pm1, "Z metric slope")->capture_default_str();
  metrics->add_option("--pm2", pm2, "Z metric offset")->capture_default_str();

  auto* info = app.add_subcommand("serve-info-check", "Probe a remote oracle's /info endpoint");
  std::string endpoint;
  int retries = 3;
  double timeout = 10.0;
  info->add_option("--endpoint", endpoint, std::string("Endpoint URL (env ") + kEndpointEnv + ")");
  info->add_option("--retries", retries)->capture_default_str();
  info->add_option("--timeout", timeout)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*attack) {
      const auto spec = build_spec(attack_campaign, attack_config, attack_oracle);
      const auto outcome = run_campaign(spec);
      std::cout << outcome.summary.dump(2) << "\n";
      return outcome.infrastructure_failure ? kExitInfrastructure : kExitOk;
    }
    if (*sweep) {
      const auto spec = build_spec(sweep_campaign, sweep_config, sweep_oracle);
      bool infra = false;
      const auto rows = sweep_alpha(spec, alphas, &infra);
      const auto csv = sweep_csv(rows);
      std::filesystem::create_directories(spec.output_dir);
      write_text(spec.output_dir / "sweep_alpha.csv", csv);
      std::cout << csv;
      return infra ? kExitInfrastructure : kExitOk;
    }
    if (*metrics) {
      const ZParams params{pm1, pm2};
      params.validate();
      const auto a = load_image(image_a);
      const auto b = load_image(image_b);
      std::cout << to_json(perturbation_report(difference(a, b), params)).dump(2) << "\n";
      return kExitOk;
    }
    if (*info) {
      RemoteOptions opt;
      if (const char* env = std::getenv(kEndpointEnv); env && *env) opt.endpoint = env;
      if (!endpoint.empty()) opt.endpoint = endpoint;
      if (opt.endpoint.empty()) throw ConfigError("no endpoint: pass --endpoint or set " + std::string(kEndpointEnv));
      opt.max_retries = retries;
      opt.timeout_seconds = timeout;
      const auto r = fetch_remote_info(opt);
      std::cout << json{{"classes", r.classes},
                        {"shape", {r.shape.height, r.shape.width, r.shape.channels}},
                        {"binary_only", r.binary_only}}
                       .dump()
                << "\n";
      return kExitOk;
    }
  } catch (const OracleError& e) {
    return report_error(e, kExitInfrastructure);
  } catch (const ConfigError& e) {
    return report_error(e, kExitConfig);
  } catch (const IoError& e) {
    return report_error(e, kExitConfig);
  } catch (const std::invalid_argument& e) {
    return report_error(e, kExitConfig);
  } catch (const std::exception& e) {
    return report_error(e, 1);
  }
  return kExitOk;
}
