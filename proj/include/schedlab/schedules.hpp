#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace schedlab {

enum class ScheduleKind {
  Constant,
  InvSqrt,          // eta0 / (1 + alpha sqrt(t))
  InvT,             // eta0 / (1 + alpha t)
  Cosine,           // eta0/2 (1 + cos(t pi / T))
  LnSqrtTheory,     // eta0 / (sqrt(t) + ln t), eta0 in (0, 1]
  LnSqrtPractical,  // eta0 / (1 + alpha (sqrt(t) + ln t))
  Stagewise,        // eta0 * drop_factor^(#milestones <= t)
};

/// Canonical config name of a schedule kind ("lnsqrt_theory", "inv_sqrt", ...).
std::string_view to_string(ScheduleKind kind);
/// Inverse of to_string; throws ValidationError on an unknown name.
ScheduleKind parse_schedule_kind(std::string_view name);

/// A deterministic step-size rule. The step index t is 1-based everywhere.
struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::Constant;
  double eta0 = 0.1;
  double alpha = 0.0;
  std::int64_t horizon = 1;
  std::vector<std::int64_t> milestones;
  double drop_factor = 0.1;

  /// Throws ValidationError when an invariant is broken.
  void validate() const;

  bool operator==(const ScheduleSpec&) const = default;
};

/// Step size at 1-based index t. Strictly positive, except Cosine at
/// t == horizon which is exactly 0.
double eta(const ScheduleSpec& spec, std::int64_t t);

struct PartialSums {
  double sum = 0.0;     // sum_{t=1..T} eta_t
  double sum_sq = 0.0;  // sum_{t=1..T} eta_t^2
};

/// Direct compensated summation in increasing t.
PartialSums partial_sums(const ScheduleSpec& spec, std::int64_t T);

/// Outcome of checking one summation inequality at one horizon T.
/// margin is the partial quantity minus the bound, so a lower bound holds
/// when margin >= 0 and an upper bound holds when margin <= 0.
struct LemmaReport {
  std::int64_t T = 0;
  double partial_sum = 0.0;
  double partial_sum_sq = 0.0;
  double bound = 0.0;
  bool holds = false;
  double margin = 0.0;
};

/// Squared-sum report: the bound eta0^2 ln T plus the corrected
/// bound eta0^2 (1 + ln T).
struct SquaredSumReport : LemmaReport {
  double bound_safe = 0.0;
  bool holds_safe = false;
  double margin_safe = 0.0;
};

/// Lower bound: sum eta_t >= eta0 (sqrt(T) - 1) for the ln-sqrt schedule.
LemmaReport verify_lemma1(double eta0, std::int64_t T);
LemmaReport verify_lemma1(const ScheduleSpec& spec, std::int64_t T);

/// Upper bound: sum eta_t^2 <= eta0^2 ln T, and the corrected eta0^2 (1 + ln T).
SquaredSumReport verify_lemma2(double eta0, std::int64_t T);
SquaredSumReport verify_lemma2(const ScheduleSpec& spec, std::int64_t T);

/// Both lemmas evaluated at every requested horizon from one cumulative pass.
struct LemmaSweepRow {
  LemmaReport lower;
  SquaredSumReport upper;
};

/// horizons need not be sorted; each row matches verify_lemma1/2 at that T.
std::vector<LemmaSweepRow> lemma_sweep(double eta0, std::vector<std::int64_t> horizons);

/// Every T in [1, min(T_max, exhaustive_limit)] followed by a geometric
/// subsample (points_per_decade) up to T_max, always including T_max.
std::vector<std::int64_t> sweep_horizons(std::int64_t T_max, std::int64_t exhaustive_limit = 10'000,
                                         int points_per_decade = 20);

}  // namespace schedlab
