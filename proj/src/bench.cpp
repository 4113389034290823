#include "schedlab/bench.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "schedlab/errors.hpp"
#include "schedlab/fetch.hpp"
#include "schedlab/numeric.hpp"
#include "schedlab/rng.hpp"

namespace schedlab {

namespace {

constexpr std::uint64_t kInitStream = 0x1417;
constexpr std::uint64_t kOutputIterateStream = 0x0a7e;

std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void reject_bzip2(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  char magic[3] = {};
  in.read(magic, 3);
  if (in.gcount() == 3 && magic[0] == 'B' && magic[1] == 'Z' && magic[2] == 'h') {
    throw IoError(file.string() + " is bzip2-compressed; decompress it and set dataset.path");
  }
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

// Text of the config with the schedule settings removed.
std::string budget_text(const ExperimentConfig& config) {
  static constexpr std::string_view kScheduleKeys[] = {"schedule", "eta0", "alpha", "horizon", "milestones",
                                                       "drop_factor"};
  std::istringstream in(canonical_text(config));
  std::string out, line;
  while (std::getline(in, line)) {
    const auto key = line.substr(0, line.find(' '));
    if (std::find(std::begin(kScheduleKeys), std::end(kScheduleKeys), key) != std::end(kScheduleKeys)) continue;
    out += line;
    out += '\n';
  }
  return out;
}

std::string first_difference(const std::string& a, const std::string& b) {
  std::istringstream ia(a), ib(b);
  std::string la, lb;
  while (std::getline(ia, la) && std::getline(ib, lb)) {
    if (la != lb) return la + " vs " + lb;
  }
  return "different key sets";
}

}  // namespace

PreparedData prepare_data(const ExperimentConfig& config) {
  config.validate();
  const DatasetSource& src = config.dataset;
  const KnownDataset* known = find_known_dataset(src.name);

  SparseDataset full;
  if (src.is_blobs()) {
    full = make_blobs(src.blobs_n, src.blobs_dim, src.blobs_separation, src.blobs_seed);
  } else {
    std::optional<std::size_t> dimension;
    if (src.dimension > 0) {
      dimension = src.dimension;
    } else if (known) {
      dimension = known->dimension;
    }
    std::filesystem::path file;
    if (!src.path.empty()) {
      file = src.path;
    } else {
      FetchRequest request;
      request.name = src.name;
      request.url = !src.url.empty() ? src.url : std::string(known->url);
      request.sha256 = !src.sha256.empty() ? src.sha256 : (known ? std::string(known->sha256) : std::string());
      request.cache_dir = config.cache_dir.empty() ? default_cache_dir() : std::filesystem::path(config.cache_dir);
      request.offline = config.offline;
      file = fetch_dataset(request);
    }
    reject_bzip2(file);
    full = load_libsvm(file, src.name, dimension);
  }
  full = normalize_labels(std::move(full));
  auto parts = split(full, config.split);

  PreparedData data;
  data.train = std::make_shared<const SparseDataset>(std::move(parts.train));
  data.test = std::make_shared<const SparseDataset>(std::move(parts.test));
  data.bandwidth = config.bandwidth > 0.0 ? config.bandwidth : (known ? known->bandwidth : 1.0);
  return data;
}

std::unique_ptr<Objective> make_objective(const ExperimentConfig& config, const PreparedData& data) {
  switch (config.objective) {
    case ObjectiveKind::Kernel:
      return std::make_unique<KernelClassifier>(data.train, data.bandwidth, data.test,
                                                config.kernel_cache_mb * (std::size_t{1} << 20));
    case ObjectiveKind::Mlp:
      return std::make_unique<SmallMlp>(data.train, config.mlp_hidden, data.test);
  }
  throw ValidationError("unknown objective kind");
}

std::vector<double> initial_point(const ExperimentConfig& config, const Objective& objective, std::uint64_t seed) {
  if (config.objective == ObjectiveKind::Mlp) {
    const auto& mlp = dynamic_cast<const SmallMlp&>(objective);
    return mlp.initial_params(derive_seed(seed, {kInitStream}), config.mlp_init_scale);
  }
  return std::vector<double>(objective.dimension(), 0.0);
}

Interval t_interval(std::span<const double> values, double level) {
  if (values.empty()) throw ValidationError("t_interval needs at least one value");
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("confidence level must lie in (0, 1)");
  Interval out;
  out.n = values.size();
  CompensatedSum sum;
  for (double v : values) sum.add(v);
  out.mean = sum.value() / static_cast<double>(out.n);
  if (out.n < 2) return out;
  CompensatedSum sq;
  for (double v : values) sq.add((v - out.mean) * (v - out.mean));
  const double sd = std::sqrt(sq.value() / static_cast<double>(out.n - 1));
  const boost::math::students_t dist(static_cast<double>(out.n - 1));
  const double q = boost::math::quantile(dist, 0.5 + level / 2.0);
  out.half_width = q * sd / std::sqrt(static_cast<double>(out.n));
  return out;
}

RunRecord run_seed(const ExperimentConfig& config, const Objective& objective, std::uint64_t seed) {
  TrainConfig train = config.train;
  train.seed = seed;
  if (config.report == ReportMode::SampledIterate) train.record_snapshots = true;
  const auto x0 = initial_point(config, objective, seed);

  RunRecord rec;
  rec.config_hash = config_hash(config);
  rec.label = config.label;
  rec.dataset = config.dataset.name;
  rec.objective = std::string(to_string(config.objective));
  rec.schedule = std::string(to_string(train.schedule.kind));
  rec.optimizer = std::string(to_string(train.optimizer));
  rec.eta0 = train.schedule.eta0;
  rec.alpha = train.schedule.alpha;
  rec.seed = seed;
  rec.epochs_budget = train.inner_T;
  rec.batch_size = train.batch_size;
  rec.restarts = train.outer_l;
  rec.report = std::string(to_string(config.report));

  std::vector<double> wall;
  const auto start = std::chrono::steady_clock::now();
  const MetricTrace trace =
      run_warm_restarts(objective, train, x0, [&](const EpochRecord&) { wall.push_back(elapsed_ms(start)); });
  rec.wall_ms = elapsed_ms(start);
  rec.armijo_failures = trace.armijo_failures;

  const std::size_t last = trace.epochs.size() - 1;
  for (std::size_t i = 0; i < trace.epochs.size(); ++i) {
    const EpochRecord& e = trace.epochs[i];
    if (e.epoch % config.metrics_every != 0 && i != last) continue;
    rec.epochs.push_back({e.epoch, e.outer, e.t, e.eta, e.train_loss, e.test_accuracy, e.grad_norm_sq, wall[i]});
  }

  switch (config.report) {
    case ReportMode::LastEpoch:
      rec.reported_epoch = trace.epochs[last].epoch;
      rec.final_train_loss = trace.epochs[last].train_loss;
      rec.final_test_accuracy = trace.epochs[last].test_accuracy;
      break;
    case ReportMode::BestEpoch: {
      const auto best = std::min_element(trace.epochs.begin(), trace.epochs.end(),
                                         [](const auto& a, const auto& b) { return a.train_loss < b.train_loss; });
      rec.reported_epoch = best->epoch;
      rec.final_train_loss = best->train_loss;
      rec.final_test_accuracy = best->test_accuracy;
      break;
    }
    case ReportMode::SampledIterate: {
      Rng rng(derive_seed(seed, {kOutputIterateStream}));
      const Snapshot& pick = sample_output_iterate(trace, rng, train.outer_l - 1);
      rec.reported_epoch = pick.outer * train.inner_T + pick.t - 1;
      rec.final_train_loss = objective.full_loss(pick.x);
      rec.final_test_accuracy = objective.test_accuracy(pick.x);
      break;
    }
  }
  return rec;
}

RunRecord run_seed(const ExperimentConfig& config, const PreparedData& data, std::uint64_t seed) {
  return run_seed(config, *make_objective(config, data), seed);
}

ExperimentResult run_experiment(const ExperimentConfig& config, const PreparedData& data) {
  config.validate();
  ExperimentResult result;
  result.label = config.label;
  result.config_hash = config_hash(config);
  const auto objective = make_objective(config, data);
  for (const std::uint64_t seed : config.seeds) {
    try {
      result.records.push_back(run_seed(config, *objective, seed));
    } catch (const TrainingError& e) {
      result.failures.push_back({seed, e.what()});
    }
  }
  if (result.records.empty()) return result;

  std::vector<double> losses, accuracies;
  for (const auto& r : result.records) {
    losses.push_back(r.final_train_loss);
    if (r.final_test_accuracy) accuracies.push_back(*r.final_test_accuracy);
  }
  result.train_loss = t_interval(losses);
  if (accuracies.size() == result.records.size()) result.test_accuracy = t_interval(accuracies);
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  return run_experiment(config, prepare_data(config));
}

void require_same_budget(const std::vector<ExperimentConfig>& configs) {
  if (configs.size() < 2) throw ValidationError("a comparison needs at least two configs");
  const std::string reference = budget_text(configs.front());
  for (std::size_t i = 0; i < configs.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (configs[i].label == configs[j].label) {
        throw ValidationError("two configs share the label '" + configs[i].label + "'");
      }
    }
    const std::string other = budget_text(configs[i]);
    if (other != reference) {
      throw ValidationError("'" + configs[i].label + "' and '" + configs.front().label +
                            "' differ beyond the schedule: " + first_difference(other, reference));
    }
  }
}

ComparisonTable compare_results(std::vector<ExperimentResult> results) {
  ComparisonTable table;
  for (auto& r : results) {
    std::string schedule = r.records.empty() ? std::string() : r.records.front().schedule;
    table.rows.push_back({r.label, std::move(schedule), std::move(r)});
  }
  std::sort(table.rows.begin(), table.rows.end(), [](const auto& a, const auto& b) { return a.label < b.label; });

  std::optional<double> best_loss, best_acc;
  for (const auto& row : table.rows) {
    if (row.result.train_loss && (!best_loss || row.result.train_loss->mean < *best_loss)) {
      best_loss = row.result.train_loss->mean;
    }
    if (row.result.test_accuracy && (!best_acc || row.result.test_accuracy->mean > *best_acc)) {
      best_acc = row.result.test_accuracy->mean;
    }
  }
  for (const auto& row : table.rows) {
    if (best_loss && row.result.train_loss && row.result.train_loss->mean == *best_loss) {
      table.best_train_loss.push_back(row.label);
    }
    if (best_acc && row.result.test_accuracy && row.result.test_accuracy->mean == *best_acc) {
      table.best_test_accuracy.push_back(row.label);
    }
  }
  return table;
}

ComparisonTable compare_schedules(const std::vector<ExperimentConfig>& configs) {
  require_same_budget(configs);
  for (const auto& c : configs) c.validate();
  const PreparedData data = prepare_data(configs.front());
  std::vector<ExperimentResult> results;
  for (const auto& c : configs) results.push_back(run_experiment(c, data));
  return compare_results(std::move(results));
}

std::size_t seed_wins(const ExperimentResult& a, const ExperimentResult& b) {
  std::map<std::uint64_t, double> b_loss;
  for (const auto& r : b.records) b_loss[r.seed] = r.final_train_loss;
  std::size_t wins = 0;
  for (const auto& r : a.records) {
    const auto it = b_loss.find(r.seed);
    if (it != b_loss.end() && r.final_train_loss < it->second) ++wins;
  }
  return wins;
}

void write_comparison(const ComparisonTable& table, std::ostream& out) {
  auto cell = [](const std::optional<Interval>& iv) {
    if (!iv) return std::string("-");
    char buf[64];
    if (iv->half_width) {
      std::snprintf(buf, sizeof buf, "%.4f +- %.4f", iv->mean, *iv->half_width);
    } else {
      std::snprintf(buf, sizeof buf, "%.4f", iv->mean);
    }
    return std::string(buf);
  };
  char line[256];
  std::snprintf(line, sizeof line, "%-20s %-18s %6s  %-22s %-22s\n", "label", "schedule", "seeds", "train_loss",
                "test_accuracy");
  out << line;
  for (const auto& row : table.rows) {
    const std::string seeds =
        std::to_string(row.result.completed()) + "/" +
        std::to_string(row.result.completed() + row.result.failures.size());
    std::snprintf(line, sizeof line, "%-20s %-18s %6s  %-22s %-22s\n", row.label.c_str(), row.schedule.c_str(),
                  seeds.c_str(), cell(row.result.train_loss).c_str(), cell(row.result.test_accuracy).c_str());
    out << line;
  }
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
    return s.empty() ? std::string("-") : s;
  };
  out << "lowest train_loss: " << join(table.best_train_loss) << '\n';
  out << "highest test_accuracy: " << join(table.best_test_accuracy) << '\n';
  for (const auto& a : table.rows) {
    for (const auto& b : table.rows) {
      if (&a == &b) continue;
      out << "seeds where " << a.label << " has lower train_loss than " << b.label << ": "
          << seed_wins(a.result, b.result) << '\n';
    }
  }
}

RateEstimate estimate_rate(std::span<const std::int64_t> horizons, std::span<const double> values) {
  if (horizons.size() != values.size()) throw ValidationError("horizons and values differ in length");
  if (horizons.size() < 10) {
    throw ValidationError("a rate fit needs at least 10 points, got " + std::to_string(horizons.size()));
  }
  const auto [lo, hi] = std::minmax_element(horizons.begin(), horizons.end());
  if (*lo < 1) throw ValidationError("horizons must be >= 1");
  if (std::log10(static_cast<double>(*hi) / static_cast<double>(*lo)) < 1.5) {
    throw ValidationError("horizons must span at least 1.5 decades");
  }
  const std::size_t n = horizons.size();
  std::vector<double> lx(n), ly(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(values[i] > 0.0) || !std::isfinite(values[i])) throw ValidationError("rate values must be positive");
    lx[i] = std::log(static_cast<double>(horizons[i]));
    ly[i] = std::log(values[i]);
  }
  CompensatedSum sx, sy;
  for (std::size_t i = 0; i < n; ++i) {
    sx.add(lx[i]);
    sy.add(ly[i]);
  }
  const double mx = sx.value() / static_cast<double>(n);
  const double my = sy.value() / static_cast<double>(n);
  CompensatedSum sxx, sxy;
  for (std::size_t i = 0; i < n; ++i) {
    sxx.add((lx[i] - mx) * (lx[i] - mx));
    sxy.add((lx[i] - mx) * (ly[i] - my));
  }
  RateEstimate est;
  est.slope = sxy.value() / sxx.value();
  est.intercept = my - est.slope * mx;
  CompensatedSum rss;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = ly[i] - (est.intercept + est.slope * lx[i]);
    rss.add(r * r);
  }
  est.residual = std::sqrt(rss.value() / static_cast<double>(n));
  est.t_min = *lo;
  est.t_max = *hi;
  est.points = n;
  return est;
}

std::vector<std::int64_t> default_rate_horizons() {
  std::vector<std::int64_t> out;
  for (int k = 0; k <= 12; ++k) out.push_back(std::llround(16.0 * std::pow(2.0, k / 2.0)));
  return out;
}

std::vector<double> expected_output_grad_norm(const MetricTrace& trace, std::span<const std::int64_t> horizons) {
  const std::int64_t epochs = static_cast<std::int64_t>(trace.epochs.size()) - 1;
  for (std::size_t i = 0; i < horizons.size(); ++i) {
    if (horizons[i] < 1 || horizons[i] > epochs || (i > 0 && horizons[i] <= horizons[i - 1])) {
      throw ValidationError("horizons must be strictly increasing within 1.." + std::to_string(epochs));
    }
  }
  std::vector<double> out;
  CompensatedSum weight, weighted;
  std::size_t next = 0;
  for (std::int64_t t = 1; t <= epochs && next < horizons.size(); ++t) {
    const EpochRecord& start = trace.epochs[static_cast<std::size_t>(t - 1)];
    const EpochRecord& during = trace.epochs[static_cast<std::size_t>(t)];
    if (during.outer != 0) throw ValidationError("rate traces must come from a single inner loop");
    if (!start.grad_norm_sq) throw ValidationError("rate traces need monitor_grad_norm");
    weight.add(during.eta);
    weighted.add(during.eta * *start.grad_norm_sq);
    if (t == horizons[next]) {
      if (!(weight.value() > 0.0)) throw ValidationError("step sizes sum to zero");
      out.push_back(weighted.value() / weight.value());
      ++next;
    }
  }
  return out;
}

RateMeasurement measure_rate(const ExperimentConfig& config, const PreparedData& data) {
  config.validate();
  if (config.train.outer_l != 1) throw ValidationError("rate measurement uses a single inner loop (restarts = 1)");
  if (config.train.schedule.kind == ScheduleKind::Cosine) {
    throw ValidationError("the cosine schedule depends on its horizon, so prefixes are not valid runs");
  }
  RateMeasurement m;
  m.horizons = config.rate_horizons.empty() ? default_rate_horizons() : config.rate_horizons;
  m.seeds = config.seeds.size();
  std::vector<CompensatedSum> sums(m.horizons.size());

  const auto objective = make_objective(config, data);
  TrainConfig train = config.train;
  train.inner_T = m.horizons.back();
  train.monitor_grad_norm = true;
  for (const std::uint64_t seed : config.seeds) {
    train.seed = seed;
    const auto trace = run_inner(*objective, train, initial_point(config, *objective, seed));
    const auto values = expected_output_grad_norm(trace, m.horizons);
    for (std::size_t i = 0; i < values.size(); ++i) sums[i].add(values[i]);
  }
  for (const auto& s : sums) m.mean_grad_norm_sq.push_back(s.value() / static_cast<double>(m.seeds));
  m.fit = estimate_rate(m.horizons, m.mean_grad_norm_sq);
  return m;
}

LemmaCheck check_lemmas(double eta0, std::int64_t t_max) {
  if (t_max < 1) throw ValidationError("tmax must be >= 1");
  LemmaCheck check;
  check.eta0 = eta0;
  check.t_max = t_max;
  check.rows = lemma_sweep(eta0, sweep_horizons(t_max));
  for (const auto& row : check.rows) {
    if (!row.lower.holds) check.lower_failures.push_back(row.lower.T);
    if (!row.upper.holds) check.upper_failures.push_back(row.upper.T);
    if (!row.upper.holds_safe) check.upper_safe_failures.push_back(row.upper.T);
  }
  return check;
}

void write_lemma_report(const LemmaCheck& check, std::ostream& out) {
  out << "T,sum_eta,lower_bound,lower_margin,lower_holds,sum_eta_sq,upper_bound,upper_margin,upper_holds,"
         "upper_bound_safe,upper_margin_safe,upper_holds_safe\n";
  for (const auto& row : check.rows) {
    const auto& lo = row.lower;
    const auto& up = row.upper;
    out << lo.T << ',' << fmt(lo.partial_sum) << ',' << fmt(lo.bound) << ',' << fmt(lo.margin) << ','
        << (lo.holds ? 1 : 0) << ',' << fmt(up.partial_sum_sq) << ',' << fmt(up.bound) << ',' << fmt(up.margin)
        << ',' << (up.holds ? 1 : 0) << ',' << fmt(up.bound_safe) << ',' << fmt(up.margin_safe) << ','
        << (up.holds_safe ? 1 : 0) << '\n';
  }
}

}  // namespace schedlab
