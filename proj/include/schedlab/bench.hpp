#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "schedlab/config.hpp"
#include "schedlab/objectives.hpp"
#include "schedlab/schedules.hpp"

namespace schedlab {

struct PreparedData {
  std::shared_ptr<const SparseDataset> train;
  std::shared_ptr<const SparseDataset> test;
  double bandwidth = 1.0;
};

/// Loads or generates the examples, maps labels to {0, 1} and splits them.
PreparedData prepare_data(const ExperimentConfig& config);

std::unique_ptr<Objective> make_objective(const ExperimentConfig& config, const PreparedData& data);

/// Zero dual weights for the kernel model; seeded small weights for the MLP.
std::vector<double> initial_point(const ExperimentConfig& config, const Objective& objective, std::uint64_t seed);

struct EpochRow {
  std::int64_t epoch = 0;
  std::int64_t outer = 0;
  std::int64_t t = 0;
  double eta_t = 0.0;
  double train_loss = 0.0;
  std::optional<double> test_accuracy;
  std::optional<double> grad_norm_sq;
  double wall_ms = 0.0;  // since the start of the run

  bool operator==(const EpochRow&) const = default;
};

struct RunRecord {
  std::string config_hash;
  std::string label;
  std::string dataset;
  std::string objective;
  std::string schedule;
  std::string optimizer;
  double eta0 = 0.0;
  double alpha = 0.0;
  std::uint64_t seed = 0;
  std::int64_t epochs_budget = 0;
  std::size_t batch_size = 0;
  std::int64_t restarts = 1;
  std::string report;
  std::vector<EpochRow> epochs;  // every metrics_every-th epoch plus the last
  std::int64_t reported_epoch = 0;
  double final_train_loss = 0.0;
  std::optional<double> final_test_accuracy;
  std::size_t armijo_failures = 0;
  double wall_ms = 0.0;

  bool operator==(const RunRecord&) const = default;
};

/// Mean with a two-sided t-interval half-width; no half-width for one value.
struct Interval {
  double mean = 0.0;
  std::optional<double> half_width;
  std::size_t n = 0;
};

Interval t_interval(std::span<const double> values, double level = 0.95);

struct SeedFailure {
  std::uint64_t seed = 0;
  std::string message;
};

struct ExperimentResult {
  std::string label;
  std::string config_hash;
  std::vector<RunRecord> records;  // completed seeds, in config order
  std::vector<SeedFailure> failures;
  std::optional<Interval> train_loss;
  std::optional<Interval> test_accuracy;

  std::size_t completed() const { return records.size(); }
};

/// One seeded run. Objectives are immutable, so one may serve every seed.
RunRecord run_seed(const ExperimentConfig& config, const Objective& objective, std::uint64_t seed);
RunRecord run_seed(const ExperimentConfig& config, const PreparedData& data, std::uint64_t seed);

/// Every seed in turn. A TrainingError ends only that seed.
ExperimentResult run_experiment(const ExperimentConfig& config, const PreparedData& data);
ExperimentResult run_experiment(const ExperimentConfig& config);

struct ComparisonRow {
  std::string label;
  std::string schedule;
  ExperimentResult result;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;             // sorted by label
  std::vector<std::string> best_train_loss;    // labels tied for the lowest mean
  std::vector<std::string> best_test_accuracy; // labels tied for the highest mean
};

/// Throws ValidationError unless the configs differ only in their schedule.
void require_same_budget(const std::vector<ExperimentConfig>& configs);

ComparisonTable compare_results(std::vector<ExperimentResult> results);
ComparisonTable compare_schedules(const std::vector<ExperimentConfig>& configs);

/// Seeds completed by both where a has the strictly lower final train loss.
std::size_t seed_wins(const ExperimentResult& a, const ExperimentResult& b);

void write_comparison(const ComparisonTable& table, std::ostream& out);

/// Least-squares line through (log T, log value).
struct RateEstimate {
  double slope = 0.0;
  double intercept = 0.0;
  double residual = 0.0;  // root-mean-square of the fit residuals
  std::int64_t t_min = 0;
  std::int64_t t_max = 0;
  std::size_t points = 0;
};

/// Needs at least 10 points spanning at least 1.5 decades of T.
RateEstimate estimate_rate(std::span<const std::int64_t> horizons, std::span<const double> values);

/// round(16 * 2^(k/2)) for k = 0..12, i.e. 16 ... 1024 on a sqrt(2) grid.
std::vector<std::int64_t> default_rate_horizons();

struct RateMeasurement {
  std::vector<std::int64_t> horizons;
  std::vector<double> mean_grad_norm_sq;  // over seeds, at each horizon
  std::size_t seeds = 0;
  RateEstimate fit;
};

/// For each horizon T, the expected |grad f|^2 at the output iterate drawn
/// with probability eta_t / sum eta_t over epochs 1..T, averaged over seeds.
/// Horizons are prefixes of one run per seed, so the schedule must not
/// depend on T.
RateMeasurement measure_rate(const ExperimentConfig& config, const PreparedData& data);

/// The weighted expectation above for every prefix of one monitored trace.
std::vector<double> expected_output_grad_norm(const MetricTrace& trace, std::span<const std::int64_t> horizons);

struct LemmaCheck {
  double eta0 = 0.0;
  std::int64_t t_max = 0;
  std::vector<LemmaSweepRow> rows;
  std::vector<std::int64_t> lower_failures;       // sum eta_t < eta0 (sqrt T - 1)
  std::vector<std::int64_t> upper_failures;       // sum eta_t^2 > eta0^2 ln T
  std::vector<std::int64_t> upper_safe_failures;  // sum eta_t^2 > eta0^2 (1 + ln T)
};

LemmaCheck check_lemmas(double eta0, std::int64_t t_max);
void write_lemma_report(const LemmaCheck& check, std::ostream& out);

}  // namespace schedlab
