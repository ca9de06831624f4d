#include "evoattack/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace evoattack {
namespace {

constexpr std::size_t kBlock = 4096;

std::size_t block_count(std::size_t n) { return (n + kBlock - 1) / kBlock; }

}  // namespace

void ZParams::validate() const {
  if (!(pm1 > 0.0) || !(pm2 > 0.0))
    throw std::invalid_argument("ZParams: pm1 and pm2 must be positive (got " +
                                std::to_string(pm1) + ", " + std::to_string(pm2) + ")");
}

double z_term(double delta, const ZParams& params) {
  const double x = std::abs(delta) * params.pm1;
  const double e2 = std::exp(params.pm2);
  return e2 * -std::expm1(-x) / ((1.0 + std::exp(params.pm2 - x)) * (1.0 + e2));
}

double z_metric(const Perturbation& pert, const ZParams& params) {
  auto d = pert.data();
  const std::size_t n = d.size();
  const std::size_t blocks = block_count(n);
  std::vector<double> partial(blocks, 0.0);
#pragma omp parallel for schedule(static)
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t end = std::min(n, (b + 1) * kBlock);
    double s = 0.0;
    for (std::size_t i = b * kBlock; i < end; ++i)
      if (d[i] != 0.0f) s += z_term(d[i], params);
    partial[b] = s;
  }
  double total = 0.0;
  for (double s : partial) total += s;
  return total;
}

PerturbationReport lp_report(const Perturbation& pert) {
  auto d = pert.data();
  const Shape& shape = pert.shape();
  const std::size_t c = shape.channels;
  const std::size_t pixels = shape.pixels();
  const std::size_t pix_per_block = std::max<std::size_t>(1, kBlock / c);
  const std::size_t blocks = (pixels + pix_per_block - 1) / pix_per_block;

  std::vector<double> sq(blocks, 0.0);
  std::vector<double> mx(blocks, 0.0);
  std::vector<std::size_t> changed(blocks, 0);
#pragma omp parallel for schedule(static)
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t end = std::min(pixels, (b + 1) * pix_per_block);
    for (std::size_t p = b * pix_per_block; p < end; ++p) {
      bool any = false;
      for (std::size_t k = 0; k < c; ++k) {
        const double v = d[p * c + k];
        if (v != 0.0) {
          any = true;
          sq[b] += v * v;
          mx[b] = std::max(mx[b], std::abs(v));
        }
      }
      changed[b] += any ? 1 : 0;
    }
  }

  PerturbationReport r;
  double sum_sq = 0.0;
  for (std::size_t b = 0; b < blocks; ++b) {
    sum_sq += sq[b];
    r.linf = std::max(r.linf, mx[b]);
    r.l0 += changed[b];
  }
  r.l2_per_pixel = sum_sq / static_cast<double>(shape.size());
  return r;
}

PerturbationReport perturbation_report(const Perturbation& pert, const ZParams& params) {
  auto r = lp_report(pert);
  r.z = z_metric(pert, params);
  return r;
}

namespace serial {

double z_metric(const Perturbation& pert, const ZParams& params) {
  double total = 0.0;
  for (float v : pert.data()) total += z_term(v, params);
  return total;
}

PerturbationReport lp_report(const Perturbation& pert) {
  const Shape& shape = pert.shape();
  PerturbationReport r;
  double sum_sq = 0.0;
  for (std::size_t p = 0; p < shape.pixels(); ++p) {
    bool any = false;
    for (std::size_t k = 0; k < shape.channels; ++k) {
      const double v = pert[p * shape.channels + k];
      sum_sq += v * v;
      r.linf = std::max(r.linf, std::abs(v));
      any = any || v != 0.0;
    }
    if (any) ++r.l0;
  }
  r.l2_per_pixel = sum_sq / static_cast<double>(shape.size());
  return r;
}

}  // namespace serial

double asr(std::span<const AttackOutcome> outcomes, SuccessCriterion criterion) {
  if (outcomes.empty()) throw std::invalid_argument("asr: empty outcome list");
  std::size_t hits = 0;
  for (const auto& o : outcomes) {
    const bool targeted = criterion == SuccessCriterion::Targeted ||
                          (criterion == SuccessCriterion::PerExample && o.target);
    if (targeted) {
      if (!o.target) throw std::invalid_argument("asr: targeted outcome without a target label");
      hits += o.final_label == *o.target ? 1 : 0;
    } else {
      hits += o.final_label == o.true_label ? 0 : 1;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(outcomes.size());
}

}  // namespace evoattack
