#pragma once

// Step-size schedules. Two families carry convergence guarantees:
//   constant_theorem  alpha_k = lambda / sqrt(K), beta_k = 1 / sqrt(K)
//                     (horizon-dependent constants; min-gradient rate O(1/sqrt(K)))
//   diminishing       alpha_k = a / (k + b), beta_k = alpha_k / lambda
//                     (liminf of the gradient norm goes to zero)
// `fixed` holds user-chosen constants with no guarantee attached.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fedsim/core.hpp"

namespace fedsim {

enum class ScheduleKind { constant_theorem, diminishing, fixed };

struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::constant_theorem;
  double a = 1.0;      // diminishing numerator, or the fixed value
  double b = 1.0;      // diminishing denominator offset
};

struct StepSizes {
  double alpha = 0.0;
  double beta = 0.0;
};

// Rounds are 1-based: the k-th entry of the result drives round k.
inline std::vector<StepSizes> make_schedule(ScheduleKind kind, int rounds_K,
                                            double lambda, double a = 1.0,
                                            double b = 1.0) {
  require(rounds_K > 0, "make_schedule: rounds_K must be positive");
  require(lambda > 0.0, "make_schedule: lambda must be positive");
  std::vector<StepSizes> steps(rounds_K);
  switch (kind) {
    case ScheduleKind::constant_theorem: {
      const double beta = 1.0 / std::sqrt(static_cast<double>(rounds_K));
      for (auto& s : steps) s = {lambda * beta, beta};
      break;
    }
    case ScheduleKind::diminishing: {
      require(a > 0.0, "make_schedule: diminishing needs a > 0");
      require(b >= 0.0, "make_schedule: diminishing needs b >= 0");
      for (int k = 1; k <= rounds_K; ++k) {
        const double alpha = a / (k + b);
        steps[k - 1] = {alpha, alpha / lambda};
      }
      break;
    }
    case ScheduleKind::fixed: {
      require(a >= 0.0, "make_schedule: fixed value must be >= 0");
      for (auto& s : steps) s = {a, a};
      break;
    }
  }
  return steps;
}

// Alpha and beta may follow different schedules; each side of the pair is
// taken from the corresponding component of its own schedule.
inline std::vector<StepSizes> resolve_schedules(const ScheduleSpec& alpha_spec,
                                                const ScheduleSpec& beta_spec,
                                                int rounds_K, double lambda) {
  const auto alphas = make_schedule(alpha_spec.kind, rounds_K, lambda,
                                    alpha_spec.a, alpha_spec.b);
  const auto betas = make_schedule(beta_spec.kind, rounds_K, lambda,
                                   beta_spec.a, beta_spec.b);
  std::vector<StepSizes> steps(rounds_K);
  for (int k = 0; k < rounds_K; ++k)
    steps[k] = {alphas[k].alpha, betas[k].beta};
  return steps;
}

inline ScheduleKind schedule_kind_from_string(const std::string& s) {
  if (s == "constant_theorem") return ScheduleKind::constant_theorem;
  if (s == "diminishing") return ScheduleKind::diminishing;
  if (s == "fixed") return ScheduleKind::fixed;
  throw ConfigError("unknown schedule kind '" + s +
                    "' (want constant_theorem, diminishing, or fixed)");
}

inline const char* to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::constant_theorem: return "constant_theorem";
    case ScheduleKind::diminishing: return "diminishing";
    case ScheduleKind::fixed: return "fixed";
  }
  return "?";
}

}  // namespace fedsim
