#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "schedlab/objectives.hpp"
#include "schedlab/rng.hpp"
#include "schedlab/schedules.hpp"

namespace schedlab {

struct OptimizerState {
  std::vector<double> x;
  std::optional<std::vector<double>> momentum_buf;
  std::optional<std::vector<double>> adam_m;
  std::optional<std::vector<double>> adam_v;
  std::uint64_t step_count = 0;
  double current_eta = 0.0;

  bool operator==(const OptimizerState&) const = default;
};

/// x <- x - eta * grad. Throws TrainingError on a non-finite gradient.
OptimizerState sgd_step(OptimizerState state, std::span<const double> grad, double eta);

/// Writes a stochastic gradient at the given point.
using GradientFn = std::function<void(std::span<const double> at, std::span<double> grad)>;

/// Lookahead Nesterov: v <- mu v - eta g(x + mu v); x <- x + v.
OptimizerState nesterov_step(OptimizerState state, const GradientFn& grad_fn, double eta, double mu);

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double eta = 1e-3;
};

/// Bias-corrected Adam; the correction exponent is step_count + 1.
OptimizerState adam_step(OptimizerState state, std::span<const double> grad, const AdamHyper& hyper);

struct ArmijoResult {
  double eta = 0.0;
  int backtracks = 0;
  bool satisfied = true;  // false: gave up after max_backtracks
};

/// Largest eta = eta_max * backtrack^k, k <= max_backtracks, with
/// f_B(x - eta g) <= f_B(x) - c eta |g|^2 on the same batch.
ArmijoResult armijo_search(const Objective& objective, std::span<const double> x,
                           std::span<const std::size_t> batch, double eta_max, double c, double backtrack,
                           int max_backtracks = 50);

/// Same search when f_B(x) and g = grad f_B(x) are already known.
ArmijoResult armijo_search(const Objective& objective, std::span<const double> x,
                           std::span<const std::size_t> batch, double loss_at_x, std::span<const double> grad,
                           double eta_max, double c, double backtrack, int max_backtracks = 50);

/// Reduce-on-plateau for a metric that should decrease.
struct PlateauState {
  double eta = 0.1;
  double factor = 0.1;
  int patience = 10;
  double threshold = 1e-4;  // relative improvement required
  double floor = 1e-8;
  double best = std::numeric_limits<double>::infinity();
  int bad_epochs = 0;
};

/// Records one epoch metric; after `patience` consecutive epochs without a
/// relative improvement of `threshold`, multiplies eta by `factor` (never
/// below `floor`). Returns the step size for the next epoch.
double plateau_update(PlateauState& state, double metric);

enum class OptimizerKind { Sgd, SgdNesterov, Adam, SgdArmijo, SgdPlateau };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(std::string_view name);

struct TrainConfig {
  ScheduleSpec schedule;
  OptimizerKind optimizer = OptimizerKind::Sgd;
  double momentum = 0.0;
  std::size_t batch_size = 64;
  std::int64_t inner_T = 1;  // epochs per outer iteration; t advances once per epoch; 0 only evaluates x0
  std::int64_t outer_l = 1;  // warm restarts
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double armijo_c = 0.1;
  double armijo_backtrack = 0.9;
  double armijo_eta_max = 1.0;
  double plateau_factor = 0.1;
  int plateau_patience = 10;

  bool monitor_grad_norm = false;  // full-gradient norm after every epoch
  bool record_snapshots = false;   // keep x_t with weight eta_t for every epoch

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct StepRecord {
  std::int64_t outer = 0;   // 0-based outer iteration
  std::int64_t t = 0;       // 1-based schedule index within the outer iteration
  std::uint64_t step = 0;   // global update counter before this step
  double eta = 0.0;
  double minibatch_loss = 0.0;
  double grad_norm_sq = 0.0;  // squared norm of the stochastic gradient used

  bool operator==(const StepRecord&) const = default;
};

struct EpochRecord {
  std::int64_t epoch = 0;  // global epoch; 0 is the initial point
  std::int64_t outer = 0;
  std::int64_t t = 0;      // 0 for the initial point
  double eta = 0.0;        // step size used during the epoch; 0 for the initial point
  double train_loss = 0.0;
  std::optional<double> test_accuracy;
  std::optional<double> grad_norm_sq;  // full gradient, when monitored

  bool operator==(const EpochRecord&) const = default;
};

/// The iterate x_t at the start of epoch t, weighted by eta_t.
struct Snapshot {
  std::int64_t outer = 0;
  std::int64_t t = 0;
  double weight = 0.0;
  std::vector<double> x;

  bool operator==(const Snapshot&) const = default;
};

struct MetricTrace {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  std::vector<Snapshot> snapshots;
  std::vector<double> final_x;
  std::size_t armijo_failures = 0;

  bool operator==(const MetricTrace&) const = default;
};

/// Called after each epoch record (including the initial one) is appended.
using EpochObserver = std::function<void(const EpochRecord&)>;

/// One inner loop (outer index 0): inner_T epochs of shuffled minibatches.
/// All steps of epoch t use eta(schedule, t). The first epoch record is the
/// initial point.
MetricTrace run_inner(const Objective& objective, const TrainConfig& config, std::span<const double> x0,
                      const EpochObserver& observer = {});

/// outer_l inner loops; the schedule restarts at t = 1 each time while the
/// iterate and optimizer buffers carry over.
MetricTrace run_warm_restarts(const Objective& objective, const TrainConfig& config, std::span<const double> x0,
                              const EpochObserver& observer = {});

/// Draws a snapshot with probability eta_t / sum eta_t. When `outer` is set,
/// only snapshots of that outer iteration take part.
const Snapshot& sample_output_iterate(const MetricTrace& trace, Rng& rng,
                                      std::optional<std::int64_t> outer = std::nullopt);

}  // namespace schedlab
