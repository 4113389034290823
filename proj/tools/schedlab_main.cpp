#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "schedlab/bench.hpp"
#include "schedlab/config.hpp"
#include "schedlab/emit.hpp"
#include "schedlab/errors.hpp"
#include "schedlab/fetch.hpp"

namespace {

using namespace schedlab;

constexpr int kExitValidation = 1;
constexpr int kExitTraining = 2;
constexpr int kExitIo = 3;

std::string describe(const std::optional<Interval>& iv) {
  if (!iv) return "-";
  char buf[64];
  if (iv->half_width) {
    std::snprintf(buf, sizeof buf, "%.4f +- %.4f", iv->mean, *iv->half_width);
  } else {
    std::snprintf(buf, sizeof buf, "%.4f", iv->mean);
  }
  return buf;
}

void report(const ExperimentConfig& config, const ExperimentResult& result) {
  std::cerr << "[" << config.label << "] " << config.dataset.name << " " << to_string(config.train.schedule.kind)
            << " epochs=" << config.train.inner_T << " batch=" << config.train.batch_size
            << " restarts=" << config.train.outer_l << " seeds " << result.completed() << "/" << config.seeds.size()
            << " train_loss " << describe(result.train_loss) << " test_accuracy " << describe(result.test_accuracy)
            << " (" << to_string(config.report) << ", hash " << result.config_hash << ")\n";
  for (const auto& f : result.failures) std::cerr << "  seed " << f.seed << " failed: " << f.message << '\n';
}

std::vector<ExperimentConfig> load_experiments(const std::string& path, bool offline) {
  auto experiments = load_config(path).experiments();
  for (auto& e : experiments) e.offline = e.offline || offline;
  return experiments;
}

int cmd_run(const std::string& config_path, const std::string& out, const std::string& format, bool offline) {
  const auto experiments = load_experiments(config_path, offline);
  std::vector<RunRecord> records;
  bool any_empty = false;
  for (const auto& config : experiments) {
    const auto result = run_experiment(config);
    report(config, result);
    any_empty = any_empty || result.completed() == 0;
    records.insert(records.end(), result.records.begin(), result.records.end());
  }
  const ExperimentConfig& first = experiments.front();
  const OutputFormat fmt = format.empty() ? first.format : parse_output_format(format);
  emit(records, fmt, out.empty() ? first.output : out);
  return any_empty ? kExitTraining : 0;
}

int cmd_compare(const std::string& config_path, bool offline) {
  const auto experiments = load_experiments(config_path, offline);
  const auto table = compare_schedules(experiments);
  for (const auto& row : table.rows) {
    for (const auto& f : row.result.failures) {
      std::cerr << "[" << row.label << "] seed " << f.seed << " failed: " << f.message << '\n';
    }
  }
  write_comparison(table, std::cout);
  return 0;
}

int cmd_check_lemmas(double eta0, std::int64_t tmax, const std::string& out) {
  const auto check = check_lemmas(eta0, tmax);
  if (out.empty()) {
    write_lemma_report(check, std::cout);
  } else {
    std::ofstream file(out);
    if (!file) throw IoError("cannot write " + out);
    write_lemma_report(check, file);
    if (!file.flush()) throw IoError("failed writing " + out);
  }
  auto list = [](const std::vector<std::int64_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size() && i < 20; ++i) s += (i ? "," : "") + std::to_string(v[i]);
    if (v.size() > 20) s += ",...";
    return s.empty() ? std::string("none") : s;
  };
  std::cerr << "horizons checked: " << check.rows.size() << " (T <= " << tmax << ")\n"
            << "sum eta_t >= eta0 (sqrt T - 1) fails at: " << list(check.lower_failures) << '\n'
            << "sum eta_t^2 <= eta0^2 ln T fails at: " << list(check.upper_failures) << '\n'
            << "sum eta_t^2 <= eta0^2 (1 + ln T) fails at: " << list(check.upper_safe_failures) << '\n';
  return 0;
}

int cmd_rate(const std::string& config_path, bool offline) {
  const auto experiments = load_experiments(config_path, offline);
  for (const auto& config : experiments) {
    const auto m = measure_rate(config, prepare_data(config));
    std::cout << "[" << config.label << "] T,mean_grad_norm_sq\n";
    for (std::size_t i = 0; i < m.horizons.size(); ++i) {
      std::cout << m.horizons[i] << ',' << m.mean_grad_norm_sq[i] << '\n';
    }
    std::cout << "slope " << m.fit.slope << " intercept " << m.fit.intercept << " rms_residual " << m.fit.residual
              << " over T in [" << m.fit.t_min << ", " << m.fit.t_max << "], " << m.fit.points << " points, "
              << m.seeds << " seeds\n";
  }
  return 0;
}

int cmd_fetch(const std::string& name, const std::string& url, const std::string& sha256, const std::string& cache,
              bool offline) {
  FetchRequest request;
  request.name = name;
  request.url = url;
  request.sha256 = sha256;
  if (const KnownDataset* known = find_known_dataset(name)) {
    if (request.url.empty()) request.url = known->url;
    if (request.sha256.empty()) request.sha256 = known->sha256;
  }
  if (request.url.empty()) throw ValidationError("dataset '" + name + "' is not known; pass --url");
  request.cache_dir = cache.empty() ? default_cache_dir() : std::filesystem::path(cache);
  request.offline = offline;
  std::cout << fetch_dataset(request).string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Step-size schedule benchmarks for SGD"};
  app.require_subcommand(1);

  std::string config_path, out, format, dataset, url, sha256, cache;
  bool offline = false;
  double eta0 = 1.0;
  std::int64_t tmax = 10'000;

  auto* run = app.add_subcommand("run", "Train every seed of every variant and emit per-epoch metrics");
  run->add_option("--config", config_path, "Experiment config file")->required();
  run->add_option("--out", out, "Output file (default: config `output`, else stdout)");
  run->add_option("--format", format, "csv or json (default: config `format`)")
      ->check(CLI::IsMember({"csv", "json"}));
  run->add_flag("--offline", offline, "Use cached datasets only");

  auto* compare = app.add_subcommand("compare", "Compare schedules that share one budget");
  compare->add_option("--config", config_path, "Config with one [variant] per schedule")->required();
  compare->add_flag("--offline", offline, "Use cached datasets only");

  auto* lemmas = app.add_subcommand("check-lemmas", "Check the partial-sum bounds of the ln-sqrt schedule");
  lemmas->add_option("--eta0", eta0, "Initial step size in (0, 1]")->required();
  lemmas->add_option("--tmax", tmax, "Largest horizon")->required();
  lemmas->add_option("--out", out, "Report file (default: stdout)");

  auto* rate = app.add_subcommand("rate", "Fit the decay rate of the expected gradient norm");
  rate->add_option("--config", config_path, "Experiment config file")->required();
  rate->add_flag("--offline", offline, "Use cached datasets only");

  auto* fetch = app.add_subcommand("fetch", "Download a dataset into the cache");
  fetch->add_option("--dataset", dataset, "Dataset name")->required();
  fetch->add_option("--url", url, "Source URL (default: built-in for known names)");
  fetch->add_option("--sha256", sha256, "Expected checksum");
  fetch->add_option("--cache-dir", cache, "Cache directory (default: $SCHEDLAB_CACHE or ~/.cache/schedlab)");
  fetch->add_flag("--offline", offline, "Only report a cached copy");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*run) return cmd_run(config_path, out, format, offline);
    if (*compare) return cmd_compare(config_path, offline);
    if (*lemmas) return cmd_check_lemmas(eta0, tmax, out);
    if (*rate) return cmd_rate(config_path, offline);
    if (*fetch) return cmd_fetch(dataset, url, sha256, cache, offline);
  } catch (const ParseError& e) {
    std::cerr << "error: line " << e.line() << ": " << e.what() << '\n';
    return kExitValidation;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const TrainingError& e) {
    std::cerr << "training error: " << e.what() << '\n';
    return kExitTraining;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kExitIo;
  }
  return 0;
}
