#include "schedlab/schedules.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "schedlab/errors.hpp"
#include "schedlab/numeric.hpp"

namespace schedlab {

namespace {

struct KindName {
  ScheduleKind kind;
  std::string_view name;
};

constexpr KindName kKindNames[] = {
    {ScheduleKind::Constant, "constant"},
    {ScheduleKind::InvSqrt, "inv_sqrt"},
    {ScheduleKind::InvT, "inv_t"},
    {ScheduleKind::Cosine, "cosine"},
    {ScheduleKind::LnSqrtTheory, "lnsqrt_theory"},
    {ScheduleKind::LnSqrtPractical, "lnsqrt_practical"},
    {ScheduleKind::Stagewise, "stagewise"},
};

// Schedule value for eta0 = 1. Every kind is multiplicative in eta0, so
// eta(spec, t) == spec.eta0 * unit_eta(spec, t) exactly.
double unit_eta(const ScheduleSpec& spec, std::int64_t t) {
  const double td = static_cast<double>(t);
  switch (spec.kind) {
    case ScheduleKind::Constant:
      return 1.0;
    case ScheduleKind::InvSqrt:
      return 1.0 / (1.0 + spec.alpha * std::sqrt(td));
    case ScheduleKind::InvT:
      return 1.0 / (1.0 + spec.alpha * td);
    case ScheduleKind::Cosine:
      if (t == spec.horizon) return 0.0;
      return 0.5 * (1.0 + std::cos(td * std::numbers::pi / static_cast<double>(spec.horizon)));
    case ScheduleKind::LnSqrtTheory:
      return 1.0 / (std::sqrt(td) + std::log(td));
    case ScheduleKind::LnSqrtPractical:
      return 1.0 / (1.0 + spec.alpha * (std::sqrt(td) + std::log(td)));
    case ScheduleKind::Stagewise: {
      const auto passed = std::upper_bound(spec.milestones.begin(), spec.milestones.end(), t) -
                          spec.milestones.begin();
      return std::pow(spec.drop_factor, static_cast<double>(passed));
    }
  }
  return 1.0;
}

void require_ln_sqrt_theory(const ScheduleSpec& spec) {
  if (spec.kind != ScheduleKind::LnSqrtTheory) {
    throw ValidationError("summation bounds apply to lnsqrt_theory only, got " +
                          std::string(to_string(spec.kind)));
  }
  spec.validate();
}

LemmaReport lower_report(double eta0, std::int64_t T, const PartialSums& s) {
  LemmaReport r;
  r.T = T;
  r.partial_sum = s.sum;
  r.partial_sum_sq = s.sum_sq;
  r.bound = eta0 * (std::sqrt(static_cast<double>(T)) - 1.0);
  r.margin = s.sum - r.bound;
  r.holds = r.margin >= 0.0;
  return r;
}

SquaredSumReport upper_report(double eta0, std::int64_t T, const PartialSums& s) {
  SquaredSumReport r;
  r.T = T;
  r.partial_sum = s.sum;
  r.partial_sum_sq = s.sum_sq;
  const double eta0_sq = eta0 * eta0;
  const double log_t = std::log(static_cast<double>(T));
  r.bound = eta0_sq * log_t;
  r.margin = s.sum_sq - r.bound;
  r.holds = r.margin <= 0.0;
  r.bound_safe = eta0_sq * (1.0 + log_t);
  r.margin_safe = s.sum_sq - r.bound_safe;
  r.holds_safe = r.margin_safe <= 0.0;
  return r;
}

ScheduleSpec ln_sqrt_theory(double eta0) {
  ScheduleSpec spec;
  spec.kind = ScheduleKind::LnSqrtTheory;
  spec.eta0 = eta0;
  return spec;
}

}  // namespace

std::string_view to_string(ScheduleKind kind) {
  for (const auto& kn : kKindNames) {
    if (kn.kind == kind) return kn.name;
  }
  return "unknown";
}

ScheduleKind parse_schedule_kind(std::string_view name) {
  for (const auto& kn : kKindNames) {
    if (kn.name == name) return kn.kind;
  }
  throw ValidationError("unknown schedule kind '" + std::string(name) + "'");
}

void ScheduleSpec::validate() const {
  if (!std::isfinite(eta0) || eta0 <= 0.0) {
    throw ValidationError("eta0 must be positive and finite");
  }
  if (kind == ScheduleKind::LnSqrtTheory && eta0 > 1.0) {
    throw ValidationError("lnsqrt_theory requires eta0 in (0, 1]");
  }
  if (!std::isfinite(alpha) || alpha < 0.0) {
    throw ValidationError("alpha must be non-negative and finite");
  }
  if (kind == ScheduleKind::Cosine && horizon < 1) {
    throw ValidationError("cosine schedule requires horizon >= 1");
  }
  if (!std::isfinite(drop_factor) || drop_factor <= 0.0 || drop_factor >= 1.0) {
    throw ValidationError("drop_factor must lie in (0, 1)");
  }
  for (std::size_t i = 0; i < milestones.size(); ++i) {
    if (milestones[i] < 1) throw ValidationError("milestones must be positive");
    if (i > 0 && milestones[i] <= milestones[i - 1]) {
      throw ValidationError("milestones must be strictly increasing");
    }
  }
}

double eta(const ScheduleSpec& spec, std::int64_t t) {
  spec.validate();
  if (t < 1) throw ValidationError("step index t must be >= 1, got " + std::to_string(t));
  if (spec.kind == ScheduleKind::Cosine && t > spec.horizon) {
    throw ValidationError("cosine step index " + std::to_string(t) + " exceeds horizon " +
                          std::to_string(spec.horizon));
  }
  return spec.eta0 * unit_eta(spec, t);
}

PartialSums partial_sums(const ScheduleSpec& spec, std::int64_t T) {
  spec.validate();
  if (T < 1) throw ValidationError("T must be >= 1");
  if (spec.kind == ScheduleKind::Cosine && T > spec.horizon) {
    throw ValidationError("cosine partial sums cannot exceed the horizon");
  }
  CompensatedSum sum;
  CompensatedSum sum_sq;
  for (std::int64_t t = 1; t <= T; ++t) {
    const double e = spec.eta0 * unit_eta(spec, t);
    sum.add(e);
    sum_sq.add(e * e);
  }
  return {sum.value(), sum_sq.value()};
}

LemmaReport verify_lemma1(const ScheduleSpec& spec, std::int64_t T) {
  require_ln_sqrt_theory(spec);
  return lower_report(spec.eta0, T, partial_sums(spec, T));
}

LemmaReport verify_lemma1(double eta0, std::int64_t T) {
  return verify_lemma1(ln_sqrt_theory(eta0), T);
}

SquaredSumReport verify_lemma2(const ScheduleSpec& spec, std::int64_t T) {
  require_ln_sqrt_theory(spec);
  return upper_report(spec.eta0, T, partial_sums(spec, T));
}

SquaredSumReport verify_lemma2(double eta0, std::int64_t T) {
  return verify_lemma2(ln_sqrt_theory(eta0), T);
}

std::vector<LemmaSweepRow> lemma_sweep(double eta0, std::vector<std::int64_t> horizons) {
  const ScheduleSpec spec = ln_sqrt_theory(eta0);
  spec.validate();
  std::sort(horizons.begin(), horizons.end());
  horizons.erase(std::unique(horizons.begin(), horizons.end()), horizons.end());
  if (!horizons.empty() && horizons.front() < 1) throw ValidationError("T must be >= 1");

  std::vector<LemmaSweepRow> rows;
  rows.reserve(horizons.size());
  CompensatedSum sum;
  CompensatedSum sum_sq;
  std::int64_t t = 0;
  for (std::int64_t T : horizons) {
    // Same accumulation order as partial_sums, so rows match verify_lemma1/2 bit for bit.
    while (t < T) {
      ++t;
      const double e = spec.eta0 * unit_eta(spec, t);
      sum.add(e);
      sum_sq.add(e * e);
    }
    const PartialSums s{sum.value(), sum_sq.value()};
    rows.push_back({lower_report(eta0, T, s), upper_report(eta0, T, s)});
  }
  return rows;
}

std::vector<std::int64_t> sweep_horizons(std::int64_t T_max, std::int64_t exhaustive_limit,
                                         int points_per_decade) {
  if (T_max < 1) throw ValidationError("T_max must be >= 1");
  if (points_per_decade < 1) throw ValidationError("points_per_decade must be >= 1");
  std::vector<std::int64_t> out;
  const std::int64_t dense_end = std::min(T_max, std::max<std::int64_t>(exhaustive_limit, 1));
  for (std::int64_t T = 1; T <= dense_end; ++T) out.push_back(T);
  if (T_max > dense_end) {
    const double ratio = std::pow(10.0, 1.0 / points_per_decade);
    double next = static_cast<double>(dense_end) * ratio;
    while (next < static_cast<double>(T_max)) {
      const auto T = static_cast<std::int64_t>(std::llround(next));
      if (T > out.back()) out.push_back(T);
      next *= ratio;
    }
    if (out.back() != T_max) out.push_back(T_max);
  }
  return out;
}

}  // namespace schedlab
