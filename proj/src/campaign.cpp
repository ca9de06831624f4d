#include "evoattack/campaign.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "evoattack/report.hpp"
#include "evoattack/tensor_io.hpp"

namespace evoattack {

using nlohmann::json;

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::string example_dir_name(std::size_t i) {
  std::ostringstream s;
  s << "example_" << std::setw(4) << std::setfill('0') << i;
  return s.str();
}

}  // namespace

std::unique_ptr<Oracle> make_oracle(const OracleSpec& spec) {
  if (!spec.endpoint.empty()) {
    RemoteOptions opt;
    opt.endpoint = spec.endpoint;
    opt.max_retries = spec.max_retries;
    opt.timeout_seconds = spec.timeout_seconds;
    return std::make_unique<RemoteOracle>(opt);
  }
  if (spec.builtin == "half-brightness")
    return std::make_unique<HalfBrightnessOracle>(spec.shape, spec.temperature, spec.binary_only);
  if (spec.builtin == "prototype") {
    std::vector<ImageTensor> protos;
    for (const auto& p : spec.prototypes) protos.push_back(load_image(p));
    return std::make_unique<PrototypeOracle>(std::move(protos), spec.temperature, spec.binary_only);
  }
  throw ConfigError("unknown builtin oracle '" + spec.builtin + "'");
}

CampaignSpec campaign_from_json(const json& j, const std::filesystem::path& base_dir) {
  CampaignSpec spec;
  try {
    const auto& o = j.at("oracle");
    if (o.contains("remote")) {
      spec.oracle.endpoint = o["remote"].get<std::string>();
      spec.oracle.max_retries = o.value("max_retries", spec.oracle.max_retries);
      spec.oracle.timeout_seconds = o.value("timeout", spec.oracle.timeout_seconds);
    } else {
      spec.oracle.builtin = o.at("builtin").get<std::string>();
      spec.oracle.temperature = o.value("temperature", spec.oracle.temperature);
      spec.oracle.binary_only = o.value("binary_only", false);
      if (o.contains("shape")) {
        const auto s = o["shape"].get<std::vector<std::size_t>>();
        if (s.size() != 3) throw ConfigError("oracle shape must be [H,W,C]");
        spec.oracle.shape = {s[0], s[1], s[2]};
      }
      if (o.contains("prototypes"))
        for (const auto& p : o["prototypes"])
          spec.oracle.prototypes.push_back(resolve(base_dir, p.get<std::string>()));
    }

    json config = j.value("config", json::object());
    if (config.contains("rng_seed")) {
      spec.base_seed = config["rng_seed"].get<std::uint64_t>();
    } else {
      spec.base_seed = std::random_device{}() | (std::uint64_t{std::random_device{}()} << 32);
      config["rng_seed"] = spec.base_seed;
    }
    if (config.contains("seed_perturbations")) {
      json resolved = json::array();
      for (const auto& p : config["seed_perturbations"])
        resolved.push_back(resolve(base_dir, p.get<std::string>()).string());
      config["seed_perturbations"] = resolved;
    }
    spec.config = config_from_json(config);

    for (const auto& e : j.at("examples")) {
      CampaignExample ex;
      ex.image = resolve(base_dir, e.at("image").get<std::string>());
      ex.label = {e.at("label").get<std::size_t>()};
      if (e.contains("target") && !e["target"].is_null()) ex.target = Label{e["target"].get<std::size_t>()};
      spec.examples.push_back(ex);
    }
    if (spec.examples.empty()) throw ConfigError("campaign has no examples");
    spec.output_dir = resolve(base_dir, j.value("output_dir", std::string("out")));
    spec.parallel_examples = j.value("parallel_examples", false);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("campaign file: ") + e.what());
  }
  return spec;
}

CampaignSpec load_campaign(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open campaign file");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return campaign_from_json(j, path.parent_path());
}

CampaignOutcome run_campaign(const CampaignSpec& spec) {
  spec.config.validate();
  std::filesystem::create_directories(spec.output_dir);

  // Inputs are loaded and checked up front so config errors surface before any query.
  std::vector<ImageTensor> images;
  for (const auto& ex : spec.examples) images.push_back(load_image(ex.image));

  const std::size_t n = spec.examples.size();
  CampaignOutcome outcome;
  outcome.reports.resize(n);
  std::vector<std::string> errors(n);
  std::vector<char> infra(n, 0);

  auto run_one = [&](std::size_t i) {
    AttackConfig config = spec.config;
    config.rng_seed = spec.base_seed + i;
    if (spec.examples[i].target) config.target = spec.examples[i].target;

    std::unique_ptr<Oracle> oracle;
    AttackResult result;
    try {
      oracle = make_oracle(spec.oracle);
    } catch (const OracleError& e) {
      result.status = AttackStatus::InfrastructureFailure;
      result.error = e.what();
      result.true_label = result.final_label = spec.examples[i].label;
    }
    if (oracle) result = run_attack(images[i], spec.examples[i].label, *oracle, config);

    const auto dir = spec.output_dir / example_dir_name(i);
    std::filesystem::create_directories(dir);
    json report = to_json(result, config);
    report["image"] = spec.examples[i].image.string();
    if (result.adversarial) {
      save_image(*result.adversarial, dir / "adversarial.png", ImageFormat::Png);
      save_image(*result.adversarial, dir / "adversarial.bin", ImageFormat::FlatBinary);
    }
    write_text(dir / "report.json", report.dump(2) + "\n");
    write_text(dir / "history.csv", history_csv(result));
    infra[i] = result.status == AttackStatus::InfrastructureFailure;
    outcome.reports[i] = std::move(report);
  };

  const bool parallel = spec.parallel_examples && spec.oracle.endpoint.empty();
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    try {
      run_one(static_cast<std::size_t>(i));
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) throw IoError(e);

  outcome.infrastructure_failure = std::any_of(infra.begin(), infra.end(), [](char c) { return c; });
  outcome.summary = summarize(outcome.reports);
  outcome.summary["rng_seed"] = spec.base_seed;
  write_text(spec.output_dir / "summary.json", outcome.summary.dump(2) + "\n");
  return outcome;
}

json summarize(const std::vector<json>& reports) {
  if (reports.empty()) throw std::invalid_argument("summarize: no reports");
  std::vector<AttackOutcome> outcomes;
  std::vector<double> l2, total, first, final_p, final_z;
  std::size_t infra = 0;
  for (const auto& r : reports) {
    AttackOutcome o;
    o.true_label = {r.at("true_label").get<std::size_t>()};
    o.final_label = {r.at("final_label").get<std::size_t>()};
    if (!r.at("target").is_null()) o.target = Label{r["target"].get<std::size_t>()};
    outcomes.push_back(o);
    if (r.at("status") == "infrastructure_failure") ++infra;
    total.push_back(r.at("queries").at("total").get<double>());
    const auto& fs = r["queries"].at("first_success");
    if (!fs.is_null()) first.push_back(fs.get<double>());
    if (r.at("succeeded").get<bool>() && !r.at("perturbation").is_null())
      l2.push_back(r["perturbation"].at("l2_per_pixel").get<double>());
    if (!r.at("best").is_null()) {
      final_p.push_back(r["best"].at("P").get<double>());
      final_z.push_back(r["best"].at("Z").get<double>());
    }
  }
  json s;
  s["schema"] = kReportSchema;
  s["examples"] = reports.size();
  s["successes"] = std::count_if(reports.begin(), reports.end(),
                                 [](const json& r) { return r.at("succeeded").get<bool>(); });
  s["infrastructure_failures"] = infra;
  s["asr"] = asr(outcomes, SuccessCriterion::PerExample);
  s["mean_l2_per_pixel"] = mean(l2);
  s["mean_queries"] = mean(total);
  s["median_queries"] = median(total);
  s["mean_first_success_queries"] = first.empty() ? json(nullptr) : json(mean(first));
  s["median_first_success_queries"] = first.empty() ? json(nullptr) : json(median(first));
  s["mean_final_P"] = mean(final_p);
  s["mean_final_Z"] = mean(final_z);
  return s;
}

std::vector<SweepRow> sweep_alpha(const CampaignSpec& spec, const std::vector<double>& alphas,
                                  bool* infrastructure_failure) {
  if (alphas.empty()) throw ConfigError("sweep-alpha needs at least one alpha");
  std::vector<SweepRow> rows;
  for (std::size_t k = 0; k < alphas.size(); ++k) {
    CampaignSpec run = spec;
    run.config.alpha = alphas[k];
    run.output_dir = spec.output_dir / ("alpha_" + std::to_string(k));
    const auto outcome = run_campaign(run);
    if (infrastructure_failure && outcome.infrastructure_failure) *infrastructure_failure = true;
    rows.push_back({alphas[k], outcome.summary["mean_final_P"].get<double>(),
                    outcome.summary["mean_final_Z"].get<double>(),
                    outcome.summary["asr"].get<double>()});
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << std::setprecision(17) << "alpha,mean_final_P,mean_final_Z,asr\n";
  for (const auto& r : rows)
    out << r.alpha << ',' << r.mean_final_p << ',' << r.mean_final_z << ',' << r.asr << '\n';
  return out.str();
}

}  // namespace evoattack
