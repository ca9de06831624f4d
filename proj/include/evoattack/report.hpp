#ifndef EVOATTACK_REPORT_HPP
#define EVOATTACK_REPORT_HPP

#include <filesystem>
#include <string>

#include <json.hpp>

#include "evoattack/ga.hpp"
#include "evoattack/metrics.hpp"

namespace evoattack {

inline constexpr int kReportSchema = 1;

nlohmann::json to_json(const PerturbationReport& r);
nlohmann::json to_json(const AttackConfig& config);

/// Reads an AttackConfig from a JSON object. Missing keys keep the values
/// already in `base`; unknown keys are rejected.
AttackConfig config_from_json(const nlohmann::json& j, AttackConfig base = {});

/// Full per-example report (schema 1): config echo, status, labels, query
/// accounting, final perturbation, history rows.
nlohmann::json to_json(const AttackResult& result, const AttackConfig& config);

/// generation,best_fitness,best_P,best_Z,cumulative_queries
std::string history_csv(const AttackResult& result);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace evoattack

#endif  // EVOATTACK_REPORT_HPP
