#include "schedlab/optim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "schedlab/data.hpp"
#include "schedlab/errors.hpp"
#include "schedlab/numeric.hpp"

namespace schedlab {

namespace {

void require_finite_grad(std::span<const double> grad, std::uint64_t step) {
  if (!all_finite(grad)) {
    throw TrainingError("non-finite gradient component at step " + std::to_string(step));
  }
}

void require_dims(const OptimizerState& state, std::span<const double> grad) {
  if (grad.size() != state.x.size()) {
    throw ValidationError("gradient dimension " + std::to_string(grad.size()) + " != iterate dimension " +
                          std::to_string(state.x.size()));
  }
}

void require_step(double eta) {
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw ValidationError("step size must be finite and >= 0");
}

struct OptimizerName {
  OptimizerKind kind;
  std::string_view name;
};

constexpr OptimizerName kOptimizerNames[] = {
    {OptimizerKind::Sgd, "sgd"},
    {OptimizerKind::SgdNesterov, "sgd_nesterov"},
    {OptimizerKind::Adam, "adam"},
    {OptimizerKind::SgdArmijo, "sgd_armijo"},
    {OptimizerKind::SgdPlateau, "sgd_plateau"},
};

// Shared driver for run_inner and run_warm_restarts.
class Trainer {
 public:
  Trainer(const Objective& objective, const TrainConfig& config, std::span<const double> x0,
          const EpochObserver& observer)
      : objective_(objective), config_(config), observer_(observer), grad_(objective.dimension()) {
    config_.validate();
    if (x0.size() != objective.dimension()) {
      throw ValidationError("initial point has dimension " + std::to_string(x0.size()) + ", objective expects " +
                            std::to_string(objective.dimension()));
    }
    if (objective.num_examples() == 0) throw ValidationError("objective has no examples");
    state_.x.assign(x0.begin(), x0.end());
    const std::size_t d = state_.x.size();
    const bool uses_momentum = config_.optimizer == OptimizerKind::SgdNesterov ||
                               (config_.optimizer == OptimizerKind::SgdPlateau && config_.momentum > 0.0);
    if (uses_momentum) state_.momentum_buf.emplace(d, 0.0);
    if (config_.optimizer == OptimizerKind::Adam) {
      state_.adam_m.emplace(d, 0.0);
      state_.adam_v.emplace(d, 0.0);
    }
    trace_.epochs.push_back(evaluate(0, 0, 0, 0.0));
    if (observer_) observer_(trace_.epochs.back());
  }

  void run_outer(std::int64_t outer) {
    PlateauState plateau;
    plateau.eta = config_.schedule.eta0;
    plateau.factor = config_.plateau_factor;
    plateau.patience = config_.plateau_patience;

    const std::uint64_t shuffle_seed = derive_seed(config_.seed, {static_cast<std::uint64_t>(outer)});
    for (std::int64_t t = 1; t <= config_.inner_T; ++t) {
      const double eta_t =
          config_.optimizer == OptimizerKind::SgdPlateau ? plateau.eta : eta(config_.schedule, t);
      if (config_.record_snapshots) trace_.snapshots.push_back({outer, t, eta_t, state_.x});

      const auto batches = minibatch_indices(objective_.num_examples(), config_.batch_size, shuffle_seed,
                                             static_cast<std::uint64_t>(t));
      for (const auto& batch : batches) {
        const std::uint64_t step = state_.step_count;
        try {
          trace_.steps.push_back(step_once(batch, eta_t, outer, t));
        } catch (const TrainingError& e) {
          throw TrainingError("outer " + std::to_string(outer) + ", epoch " + std::to_string(t) + ", step " +
                              std::to_string(step) + ": " + e.what());
        }
      }
      ++epoch_;
      try {
        trace_.epochs.push_back(evaluate(epoch_, outer, t, eta_t));
      } catch (const TrainingError& e) {
        throw TrainingError("outer " + std::to_string(outer) + ", epoch " + std::to_string(t) +
                            ", evaluation: " + e.what());
      }
      if (observer_) observer_(trace_.epochs.back());
      if (config_.optimizer == OptimizerKind::SgdPlateau) plateau_update(plateau, trace_.epochs.back().train_loss);
    }
  }

  MetricTrace finish() {
    trace_.final_x = state_.x;
    return std::move(trace_);
  }

 private:
  StepRecord step_once(std::span<const std::size_t> batch, double eta_t, std::int64_t outer, std::int64_t t) {
    StepRecord rec;
    rec.outer = outer;
    rec.t = t;
    rec.step = state_.step_count;
    rec.eta = eta_t;
    const bool nesterov = state_.momentum_buf.has_value();

    if (nesterov) {
      const GradientFn grad_fn = [&](std::span<const double> at, std::span<double> g) {
        rec.minibatch_loss = objective_.loss_and_grad(at, batch, g);
        rec.grad_norm_sq = squared_norm(g);
      };
      state_ = nesterov_step(std::move(state_), grad_fn, eta_t, config_.momentum);
      return rec;
    }

    rec.minibatch_loss = objective_.loss_and_grad(state_.x, batch, grad_);
    rec.grad_norm_sq = squared_norm(grad_);
    switch (config_.optimizer) {
      case OptimizerKind::Adam:
        state_ = adam_step(std::move(state_), grad_,
                           {config_.adam_beta1, config_.adam_beta2, config_.adam_eps, eta_t});
        break;
      case OptimizerKind::SgdArmijo: {
        require_finite_grad(grad_, state_.step_count);
        const ArmijoResult ls = armijo_search(objective_, state_.x, batch, rec.minibatch_loss, grad_,
                                              config_.armijo_eta_max, config_.armijo_c, config_.armijo_backtrack);
        if (!ls.satisfied) ++trace_.armijo_failures;
        rec.eta = ls.eta;
        state_ = sgd_step(std::move(state_), grad_, ls.eta);
        break;
      }
      default:
        state_ = sgd_step(std::move(state_), grad_, eta_t);
        break;
    }
    return rec;
  }

  EpochRecord evaluate(std::int64_t epoch, std::int64_t outer, std::int64_t t, double eta_t) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.outer = outer;
    rec.t = t;
    rec.eta = eta_t;
    if (config_.monitor_grad_norm) {
      rec.train_loss = objective_.full_grad(state_.x, grad_);
      rec.grad_norm_sq = squared_norm(grad_);
    } else {
      rec.train_loss = objective_.full_loss(state_.x);
    }
    rec.test_accuracy = objective_.test_accuracy(state_.x);
    return rec;
  }

  const Objective& objective_;
  TrainConfig config_;
  const EpochObserver& observer_;
  OptimizerState state_;
  MetricTrace trace_;
  std::vector<double> grad_;
  std::int64_t epoch_ = 0;
};

}  // namespace

OptimizerState sgd_step(OptimizerState state, std::span<const double> grad, double eta) {
  require_dims(state, grad);
  require_step(eta);
  require_finite_grad(grad, state.step_count);
  for (std::size_t i = 0; i < state.x.size(); ++i) state.x[i] -= eta * grad[i];
  ++state.step_count;
  state.current_eta = eta;
  return state;
}

OptimizerState nesterov_step(OptimizerState state, const GradientFn& grad_fn, double eta, double mu) {
  require_step(eta);
  if (!(mu >= 0.0 && mu < 1.0)) throw ValidationError("momentum must lie in [0, 1)");
  const std::size_t d = state.x.size();
  if (!state.momentum_buf) state.momentum_buf.emplace(d, 0.0);
  auto& v = *state.momentum_buf;
  if (v.size() != d) throw ValidationError("momentum buffer dimension mismatch");

  std::vector<double> lookahead(d);
  for (std::size_t i = 0; i < d; ++i) lookahead[i] = state.x[i] + mu * v[i];
  std::vector<double> g(d);
  grad_fn(lookahead, g);
  require_finite_grad(g, state.step_count);
  for (std::size_t i = 0; i < d; ++i) {
    v[i] = mu * v[i] - eta * g[i];
    state.x[i] += v[i];
  }
  ++state.step_count;
  state.current_eta = eta;
  return state;
}

OptimizerState adam_step(OptimizerState state, std::span<const double> grad, const AdamHyper& hyper) {
  require_dims(state, grad);
  require_step(hyper.eta);
  if (!(hyper.beta1 >= 0.0 && hyper.beta1 < 1.0) || !(hyper.beta2 >= 0.0 && hyper.beta2 < 1.0)) {
    throw ValidationError("Adam betas must lie in [0, 1)");
  }
  if (!(hyper.eps > 0.0)) throw ValidationError("Adam eps must be positive");
  require_finite_grad(grad, state.step_count);
  const std::size_t d = state.x.size();
  if (!state.adam_m) state.adam_m.emplace(d, 0.0);
  if (!state.adam_v) state.adam_v.emplace(d, 0.0);
  auto& m = *state.adam_m;
  auto& v = *state.adam_v;

  const double k = static_cast<double>(state.step_count + 1);
  const double correction1 = 1.0 - std::pow(hyper.beta1, k);
  const double correction2 = 1.0 - std::pow(hyper.beta2, k);
  for (std::size_t i = 0; i < d; ++i) {
    m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * grad[i];
    v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * grad[i] * grad[i];
    const double m_hat = m[i] / correction1;
    const double v_hat = v[i] / correction2;
    state.x[i] -= hyper.eta * m_hat / (std::sqrt(v_hat) + hyper.eps);
  }
  ++state.step_count;
  state.current_eta = hyper.eta;
  return state;
}

ArmijoResult armijo_search(const Objective& objective, std::span<const double> x,
                           std::span<const std::size_t> batch, double loss_at_x, std::span<const double> grad,
                           double eta_max, double c, double backtrack, int max_backtracks) {
  if (!(c > 0.0 && c < 1.0)) throw ValidationError("Armijo c must lie in (0, 1)");
  if (!(backtrack > 0.0 && backtrack < 1.0)) throw ValidationError("Armijo backtrack must lie in (0, 1)");
  if (!(eta_max > 0.0) || !std::isfinite(eta_max)) throw ValidationError("Armijo eta_max must be positive");
  if (max_backtracks < 0) throw ValidationError("max_backtracks must be >= 0");
  if (!std::isfinite(loss_at_x)) throw TrainingError("non-finite loss before line search");

  const double g_sq = squared_norm(grad);
  std::vector<double> trial(x.size());
  double step = eta_max;
  for (int k = 0;; ++k) {
    for (std::size_t i = 0; i < x.size(); ++i) trial[i] = x[i] - step * grad[i];
    const double f_trial = objective.loss(trial, batch);
    if (!std::isfinite(f_trial)) throw TrainingError("non-finite loss during Armijo probe");
    if (f_trial <= loss_at_x - c * step * g_sq) return {step, k, true};
    if (k == max_backtracks) return {step, k, false};
    step *= backtrack;
  }
}

ArmijoResult armijo_search(const Objective& objective, std::span<const double> x,
                           std::span<const std::size_t> batch, double eta_max, double c, double backtrack,
                           int max_backtracks) {
  std::vector<double> grad(objective.dimension());
  const double f = objective.loss_and_grad(x, batch, grad);
  return armijo_search(objective, x, batch, f, grad, eta_max, c, backtrack, max_backtracks);
}

double plateau_update(PlateauState& state, double metric) {
  if (!std::isfinite(metric)) throw ValidationError("plateau metric must be finite");
  const bool improved =
      !std::isfinite(state.best) || metric < state.best - state.threshold * std::abs(state.best);
  if (improved) {
    state.best = metric;
    state.bad_epochs = 0;
  } else if (++state.bad_epochs >= state.patience) {
    state.eta = std::max(state.eta * state.factor, state.floor);
    state.bad_epochs = 0;
  }
  return state.eta;
}

std::string_view to_string(OptimizerKind kind) {
  for (const auto& on : kOptimizerNames) {
    if (on.kind == kind) return on.name;
  }
  return "unknown";
}

OptimizerKind parse_optimizer_kind(std::string_view name) {
  for (const auto& on : kOptimizerNames) {
    if (on.name == name) return on.kind;
  }
  throw ValidationError("unknown optimizer '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  schedule.validate();
  if (inner_T < 0) throw ValidationError("inner_T must be >= 0");
  if (outer_l < 1) throw ValidationError("outer_l must be >= 1");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (schedule.kind == ScheduleKind::Cosine && schedule.horizon < inner_T) {
    throw ValidationError("cosine horizon must cover inner_T");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("momentum must lie in [0, 1)");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ValidationError("Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ValidationError("Adam eps must be positive");
  if (!(armijo_c > 0.0 && armijo_c < 1.0)) throw ValidationError("armijo_c must lie in (0, 1)");
  if (!(armijo_backtrack > 0.0 && armijo_backtrack < 1.0)) {
    throw ValidationError("armijo_backtrack must lie in (0, 1)");
  }
  if (!(armijo_eta_max > 0.0)) throw ValidationError("armijo_eta_max must be positive");
  if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) throw ValidationError("plateau_factor must lie in (0, 1)");
  if (plateau_patience < 1) throw ValidationError("plateau_patience must be >= 1");
}

MetricTrace run_inner(const Objective& objective, const TrainConfig& config, std::span<const double> x0,
                      const EpochObserver& observer) {
  Trainer trainer(objective, config, x0, observer);
  trainer.run_outer(0);
  return trainer.finish();
}

MetricTrace run_warm_restarts(const Objective& objective, const TrainConfig& config, std::span<const double> x0,
                              const EpochObserver& observer) {
  Trainer trainer(objective, config, x0, observer);
  for (std::int64_t outer = 0; outer < config.outer_l; ++outer) trainer.run_outer(outer);
  return trainer.finish();
}

const Snapshot& sample_output_iterate(const MetricTrace& trace, Rng& rng, std::optional<std::int64_t> outer) {
  std::vector<const Snapshot*> pool;
  CompensatedSum total;
  for (const auto& s : trace.snapshots) {
    if (outer && s.outer != *outer) continue;
    pool.push_back(&s);
    total.add(s.weight);
  }
  if (pool.empty()) throw ValidationError("no snapshots to sample from");
  const double mass = total.value();
  if (!(mass > 0.0)) throw ValidationError("snapshot weights sum to zero");

  const double u = uniform01(rng) * mass;
  double cumulative = 0.0;
  for (const Snapshot* s : pool) {
    cumulative += s->weight;
    if (u < cumulative) return *s;
  }
  // Rounding can leave u just above the running sum; fall back to the last positive weight.
  for (auto it = pool.rbegin(); it != pool.rend(); ++it) {
    if ((*it)->weight > 0.0) return **it;
  }
  return *pool.back();
}

}  // namespace schedlab
