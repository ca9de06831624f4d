#ifndef EVOATTACK_CAMPAIGN_HPP
#define EVOATTACK_CAMPAIGN_HPP

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "evoattack/ga.hpp"
#include "evoattack/oracle.hpp"

namespace evoattack {

/// How to build the target model. Exactly one of `builtin` / `endpoint`.
struct OracleSpec {
  std::string builtin;  // "half-brightness" | "prototype"
  Shape shape;          // half-brightness only
  double temperature = 1.0;
  bool binary_only = false;
  std::vector<std::filesystem::path> prototypes;  // prototype only
  std::string endpoint;
  int max_retries = 3;
  double timeout_seconds = 30.0;
};

std::unique_ptr<Oracle> make_oracle(const OracleSpec& spec);

struct CampaignExample {
  std::filesystem::path image;
  Label label;
  std::optional<Label> target;
};

struct CampaignSpec {
  std::vector<CampaignExample> examples;
  AttackConfig config;
  /// Recorded in every report; per-example seeds are base + index.
  std::uint64_t base_seed = 0;
  OracleSpec oracle;
  std::filesystem::path output_dir;
  bool parallel_examples = false;
};

/// Parses a campaign file. Relative paths resolve against `base_dir`.
/// A missing "rng_seed" is replaced by a fresh random seed.
CampaignSpec campaign_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
CampaignSpec load_campaign(const std::filesystem::path& path);

struct CampaignOutcome {
  std::vector<nlohmann::json> reports;  // one per example, in input order
  nlohmann::json summary;
  bool infrastructure_failure = false;
};

/// Runs every example against its own oracle instance and writes
///   <out>/example_NNNN/{adversarial.png, adversarial.bin, report.json, history.csv}
///   <out>/summary.json
CampaignOutcome run_campaign(const CampaignSpec& spec);

/// Pure aggregation over per-example reports: ASR, mean per-pixel L2 of
/// successful examples, mean/median total and first-success queries.
nlohmann::json summarize(const std::vector<nlohmann::json>& reports);

struct SweepRow {
  double alpha = 0.0;
  double mean_final_p = 0.0;
  double mean_final_z = 0.0;
  double asr = 0.0;
};

/// Runs the campaign once per alpha (outputs under <out>/alpha_<k>/).
std::vector<SweepRow> sweep_alpha(const CampaignSpec& spec, const std::vector<double>& alphas,
                                  bool* infrastructure_failure = nullptr);
std::string sweep_csv(const std::vector<SweepRow>& rows);

/// Stable process exit codes.
enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitInfrastructure = 3 };

}  // namespace evoattack

#endif  // EVOATTACK_CAMPAIGN_HPP
