#ifndef EVOATTACK_METRICS_HPP
#define EVOATTACK_METRICS_HPP

#include <cstddef>
#include <optional>
#include <span>

#include "evoattack/tensor.hpp"

namespace evoattack {

/// Slope/offset of the sigmoid mapping used by the Z metric.
struct ZParams {
  double pm1 = 15.0;
  double pm2 = 3.0;

  /// Tuned for optimisation (perturbations mostly below 110/255).
  static constexpr ZParams machine() { return {15.0, 3.0}; }
  /// Tuned to match visual sensitivity; used for reporting.
  static constexpr ZParams naked_eye() { return {10.0, 5.8}; }

  void validate() const;
};

struct PerturbationReport {
  double z = 0.0;
  std::size_t l0 = 0;         // pixels with any nonzero channel
  double l2_per_pixel = 0.0;  // sum(d^2) / (H*W*C)
  double linf = 0.0;
};

/// Contribution of one element: sigmoid(|d|*pm1 - pm2) - sigmoid(-pm2).
/// Written as a single fraction with expm1 so that any nonzero |d| gives a
/// strictly positive result.
double z_term(double delta, const ZParams& params);

/// Z metric, summed over rows, columns and channels. Partial sums are taken
/// over fixed-size blocks in parallel and combined in block order, so the
/// result does not depend on the thread count.
double z_metric(const Perturbation& pert, const ZParams& params);

/// L0 / per-pixel L2 / Linf; `z` is left at zero.
PerturbationReport lp_report(const Perturbation& pert);

/// lp_report plus the Z metric.
PerturbationReport perturbation_report(const Perturbation& pert, const ZParams& params);

namespace serial {
double z_metric(const Perturbation& pert, const ZParams& params);
PerturbationReport lp_report(const Perturbation& pert);
}  // namespace serial

// PerExample: targeted when the outcome carries a target, else non-targeted.
enum class SuccessCriterion { NonTargeted, Targeted, PerExample };

struct AttackOutcome {
  Label final_label;
  Label true_label;
  std::optional<Label> target;
};

/// Attack success rate. Targeted: fraction with final == target;
/// non-targeted: fraction with final != true. Throws on an empty list or a
/// targeted outcome without a target.
double asr(std::span<const AttackOutcome> outcomes, SuccessCriterion criterion);

}  // namespace evoattack

#endif  // EVOATTACK_METRICS_HPP
