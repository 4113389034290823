#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <unistd.h>

#include "doctest.h"
#include "schedlab/bench.hpp"
#include "schedlab/config.hpp"
#include "schedlab/emit.hpp"
#include "schedlab/errors.hpp"
#include "schedlab/fetch.hpp"

using namespace schedlab;

namespace {

ExperimentConfig parse_one(const std::string& text) {
  std::istringstream in(text);
  const auto file = parse_config(in);
  REQUIRE(file.experiments().size() == 1);
  return file.experiments().front();
}

const char* kBlobKernel = R"(
dataset = blobs
blobs.n = 60
blobs.separation = 3
objective = kernel
kernel.bandwidth = 1
schedule = lnsqrt_practical
eta0 = 0.5
alpha = 0.01
epochs = 3
batch_size = 8
seeds = 1, 2, 3
)";

std::string strip_last_column(const std::string& csv) {
  std::istringstream in(csv);
  std::string out, line;
  while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + '\n';
  return out;
}

RunRecord sample_record(std::uint64_t seed) {
  RunRecord r;
  r.config_hash = "0123456789abcdef";
  r.label = "lnsqrt";
  r.dataset = "a1a";
  r.objective = "kernel";
  r.schedule = "lnsqrt_practical";
  r.optimizer = "sgd";
  r.eta0 = 0.05;
  r.alpha = 1e-5;
  r.seed = seed;
  r.epochs_budget = 1;
  r.batch_size = 64;
  r.report = "last_epoch";
  r.epochs = {{0, 0, 0, 0.0, std::numbers::ln2, 0.5, std::nullopt, 1.25},
              {1, 0, 1, 0.1 / 3.0, 0.6931, std::nullopt, 1e-300, 2.5}};
  r.reported_epoch = 1;
  r.final_train_loss = 0.6931;
  r.wall_ms = 2.5;
  return r;
}

ExperimentResult fake_result(std::string label, std::vector<double> losses, std::vector<double> accuracies) {
  ExperimentResult r;
  r.label = std::move(label);
  for (std::size_t i = 0; i < losses.size(); ++i) {
    RunRecord rec = sample_record(i);
    rec.schedule = r.label;
    rec.final_train_loss = losses[i];
    rec.final_test_accuracy = accuracies[i];
    r.records.push_back(rec);
  }
  r.train_loss = t_interval(losses);
  r.test_accuracy = t_interval(accuracies);
  return r;
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("parses keys, comments and defaults") {
    const auto c = parse_one(R"(
# leading comment
dataset = mushrooms   # trailing comment
schedule = lnsqrt_practical
eta0 = 0.05
alpha = 0.00001
seeds = 0,1,2,3,4
)");
    CHECK(c.dataset.name == "mushrooms");
    CHECK(c.train.schedule.kind == ScheduleKind::LnSqrtPractical);
    CHECK(c.train.schedule.eta0 == 0.05);
    CHECK(c.train.schedule.alpha == 1e-5);
    CHECK(c.train.inner_T == 50);
    CHECK(c.train.batch_size == 64);
    CHECK(c.train.momentum == 0.0);
    CHECK(c.report == ReportMode::LastEpoch);
    CHECK(c.seeds == std::vector<std::uint64_t>{0, 1, 2, 3, 4});
  }

  TEST_CASE("variants override the base") {
    std::istringstream in(std::string(kBlobKernel) + R"(
[variant new]
[variant baseline]
schedule = inv_sqrt
alpha = 1
)");
    const auto file = parse_config(in);
    const auto runs = file.experiments();
    REQUIRE(runs.size() == 2);
    CHECK(runs[0].label == "new");
    CHECK(runs[0].train.schedule.kind == ScheduleKind::LnSqrtPractical);
    CHECK(runs[1].label == "baseline");
    CHECK(runs[1].train.schedule.kind == ScheduleKind::InvSqrt);
    CHECK(runs[1].train.schedule.alpha == 1.0);
    CHECK(runs[1].train.inner_T == 3);
  }

  TEST_CASE("errors carry line numbers") {
    auto line_of = [](const std::string& text) -> std::size_t {
      std::istringstream in(text);
      try {
        (void)parse_config(in);
      } catch (const ParseError& e) {
        return e.line();
      }
      return 0;
    };
    CHECK(line_of("dataset = blobs\nbogus = 1\n") == 2);
    CHECK(line_of("dataset = blobs\n\neta0 = fast\n") == 3);
    CHECK(line_of("dataset = blobs\neta0 = 0.1\neta0 = 0.2\n") == 3);
    CHECK(line_of("dataset = blobs\n[profile x]\n") == 2);
    CHECK(line_of("dataset = blobs\nno equals sign\n") == 2);
    CHECK(line_of("dataset = blobs\n[variant a]\n[variant a]\n") == 3);
    CHECK(line_of("schedule = cosine_restarts\n") == 1);
  }

  TEST_CASE("alpha is required by the schedules that use it") {
    std::istringstream missing("dataset = blobs\nschedule = inv_sqrt\neta0 = 0.1\n");
    CHECK_THROWS_AS(parse_config(missing), ValidationError);
    std::istringstream present("dataset = blobs\nschedule = inv_sqrt\neta0 = 0.1\nalpha = 0\n");
    CHECK_NOTHROW(parse_config(present));
    std::istringstream theory("dataset = blobs\nschedule = lnsqrt_theory\neta0 = 1\n");
    CHECK_NOTHROW(parse_config(theory));
  }

  TEST_CASE("semantic validation") {
    for (const char* text : {"dataset = blobs\nseeds =\n", "dataset = blobs\nseeds = 1,1\n",
                             "dataset = unknown_set\n", "dataset = blobs\nschedule = lnsqrt_theory\neta0 = 2\n",
                             "dataset = blobs\nsplit.train_fraction = 1\n", "dataset = blobs\nepochs = -1\n",
                             "dataset = blobs\nreport = sampled_iterate\nepochs = 0\n"}) {
      CAPTURE(text);
      std::istringstream in(text);
      CHECK_THROWS_AS(parse_config(in), ValidationError);
    }
  }

  TEST_CASE("property: canonical text round-trips and fixes the hash") {
    const auto c = parse_one(kBlobKernel);
    const auto again = parse_one(canonical_text(c));
    CHECK(config_hash(again) == config_hash(c));
    CHECK(canonical_text(again) == canonical_text(c));

    // Reordering, spacing and comments do not matter.
    const auto shuffled = parse_one(R"(seeds=1,2,3
batch_size   =   8
epochs = 3   # short
alpha = 0.01
eta0 = 0.50
schedule = lnsqrt_practical
kernel.bandwidth = 1.0
objective = kernel
blobs.separation = 3
blobs.n = 60
dataset = blobs
)");
    CHECK(config_hash(shuffled) == config_hash(c));
    CHECK(config_hash(c).size() == 16);
  }

  TEST_CASE("property: every hashed field changes the hash") {
    const auto base = parse_one(kBlobKernel);
    const std::string h = config_hash(base);
    std::istringstream lines(canonical_text(base));
    std::string line;
    std::size_t checked = 0;
    while (std::getline(lines, line)) {
      const std::string key = line.substr(0, line.find(' '));
      // A value that stays valid for each key.
      std::string alt = "7";
      if (key == "dataset") alt = "mushrooms";
      if (key.starts_with("dataset.") && key != "dataset.dimension") alt = "x";
      if (key == "monitor_grad_norm") alt = "true";
      if (key == "split.shuffle") alt = "false";
      if (key == "objective") alt = "mlp";
      if (key == "schedule") alt = "inv_t";
      if (key == "optimizer") alt = "adam";
      if (key == "report") alt = "best_epoch";
      if (key == "split.train_fraction" || key == "eta0" || key == "momentum" || key == "drop_factor" ||
          key.starts_with("adam.") || key.starts_with("armijo.") || key == "plateau.factor") {
        alt = "0.25";
      }
      if (key == "milestones" || key == "rate.horizons") alt = "2,4";
      if (key == "seeds") alt = "1,2";
      if (key == "horizon") alt = "9";
      CAPTURE(key);
      std::istringstream one(canonical_text(base));
      std::string text;
      std::string l;
      while (std::getline(one, l)) text += (l.substr(0, l.find(' ')) == key ? key + " = " + alt : l) + '\n';
      std::istringstream in(text);
      ExperimentConfig parsed;
      try {
        parsed = parse_config(in).base;
      } catch (const ValidationError& e) {
        FAIL_CHECK("alternative value rejected: " << e.what());
        continue;
      }
      CHECK(config_hash(parsed) != h);
      ++checked;
    }
    CHECK(checked == 41);
  }

  TEST_CASE("delivery settings stay out of the hash") {
    const auto c = parse_one(kBlobKernel);
    const auto d = parse_one(std::string(kBlobKernel) + "output = out.csv\nformat = json\noffline = true\n");
    CHECK(config_hash(c) == config_hash(d));
    CHECK(d.format == OutputFormat::Json);
    CHECK(d.offline);
  }

  TEST_CASE("the annotated example documents the real defaults") {
    const auto documented = load_config(std::filesystem::path(SCHEDLAB_SOURCE_DIR) / "configs" / "example.conf").base;
    const auto minimal =
        parse_one("dataset = blobs\nschedule = lnsqrt_practical\neta0 = 0.05\nalpha = 0.00001\n");
    CHECK(canonical_text(documented) == canonical_text(minimal));
    CHECK(documented == minimal);
  }

  TEST_CASE("example configs shipped with the project parse") {
    const std::filesystem::path dir = std::filesystem::path(SCHEDLAB_SOURCE_DIR) / "configs";
    std::size_t seen = 0;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      if (entry.path().extension() != ".conf") continue;
      CAPTURE(entry.path().string());
      CHECK_NOTHROW(load_config(entry.path()));
      ++seen;
    }
    CHECK(seen >= 3);
  }
}

TEST_SUITE("bench") {
  TEST_CASE("t interval") {
    const std::vector<double> xs{0.81, 0.83, 0.82, 0.85, 0.80};
    const auto iv = t_interval(xs);
    CHECK(iv.n == 5);
    CHECK(iv.mean == doctest::Approx(0.822).epsilon(1e-14));
    REQUIRE(iv.half_width);
    CHECK(*iv.half_width == doctest::Approx(0.023883883880999813).epsilon(1e-12));
    const std::vector<double> one{0.4};
    CHECK_FALSE(t_interval(one).half_width.has_value());
    CHECK_THROWS_AS(t_interval(std::vector<double>{}), ValidationError);
  }

  TEST_CASE("zero epochs report the starting point") {
    auto c = parse_one(kBlobKernel);
    c.train.inner_T = 0;
    const auto result = run_experiment(c);
    REQUIRE(result.completed() == 3);
    for (const auto& r : result.records) {
      REQUIRE(r.epochs.size() == 1);
      CHECK(r.final_train_loss == doctest::Approx(std::numbers::ln2).epsilon(1e-15));
      CHECK(r.reported_epoch == 0);
    }
  }

  TEST_CASE("blob experiment: records, budget fields and intervals") {
    const auto c = parse_one(kBlobKernel);
    const auto result = run_experiment(c);
    CHECK(result.completed() == 3);
    CHECK(result.failures.empty());
    CHECK(result.config_hash == config_hash(c));
    const auto& r = result.records.front();
    CHECK(r.epochs.size() == 4);
    CHECK(r.epochs_budget == 3);
    CHECK(r.batch_size == 8);
    CHECK(r.schedule == "lnsqrt_practical");
    for (const auto& e : r.epochs) {
      if (e.epoch > 0) CHECK(e.eta_t == eta(c.train.schedule, e.t));
    }
    CHECK(r.final_train_loss < std::numbers::ln2);
    REQUIRE(result.train_loss);
    REQUIRE(result.test_accuracy);
    CHECK(result.test_accuracy->mean > 0.8);
  }

  TEST_CASE("metrics cadence keeps the last epoch") {
    auto c = parse_one(kBlobKernel);
    c.train.inner_T = 5;
    c.metrics_every = 2;
    const auto data = prepare_data(c);
    const auto r = run_seed(c, data, 1);
    std::vector<std::int64_t> epochs;
    for (const auto& e : r.epochs) epochs.push_back(e.epoch);
    CHECK(epochs == std::vector<std::int64_t>{0, 2, 4, 5});
  }

  TEST_CASE("report modes") {
    auto c = parse_one(kBlobKernel);
    const auto data = prepare_data(c);
    c.report = ReportMode::BestEpoch;
    const auto best = run_seed(c, data, 1);
    for (const auto& e : best.epochs) CHECK(best.final_train_loss <= e.train_loss);
    c.report = ReportMode::SampledIterate;
    const auto sampled = run_seed(c, data, 1);
    CHECK(sampled.reported_epoch >= 0);
    CHECK(sampled.reported_epoch < 3);
    CHECK(sampled.final_test_accuracy.has_value());
    CHECK(run_seed(c, data, 1).reported_epoch == sampled.reported_epoch);
  }

  TEST_CASE("a failing seed does not stop the others") {
    // A step of 3e307 overflows the dual weights for one of these seeds only.
    auto c = parse_one(kBlobKernel);
    c.train.schedule.kind = ScheduleKind::Constant;
    c.train.schedule.eta0 = 3e307;
    c.train.batch_size = 2;
    c.seeds = {1, 2, 3, 4, 5};
    const auto result = run_experiment(c);
    CHECK(result.completed() == 4);
    REQUIRE(result.failures.size() == 1);
    CHECK(result.failures[0].message.find("non-finite") != std::string::npos);
    REQUIRE(result.train_loss.has_value());
    CHECK(result.train_loss->n == 4);
    for (const auto& r : result.records) CHECK(r.seed != result.failures[0].seed);

    c.train.schedule.eta0 = 1e308;
    const auto all_fail = run_experiment(c);
    CHECK(all_fail.completed() == 0);
    CHECK(all_fail.failures.size() == 5);
    CHECK_FALSE(all_fail.train_loss.has_value());
  }

  TEST_CASE("determinism: csv matches byte for byte apart from wall time") {
    auto c = parse_one(kBlobKernel);
    c.train.monitor_grad_norm = true;
    std::ostringstream a, b;
    write_csv(run_experiment(c).records, a);
    write_csv(run_experiment(c).records, b);
    CHECK(strip_last_column(a.str()) == strip_last_column(b.str()));
    CHECK(a.str().size() > 100);
  }

  TEST_CASE("mlp experiment on blobs") {
    auto c = parse_one(kBlobKernel);
    c.objective = ObjectiveKind::Mlp;
    c.mlp_hidden = 4;
    const auto result = run_experiment(c);
    CHECK(result.completed() == 3);
    CHECK(result.records[0].final_train_loss != result.records[1].final_train_loss);
  }

  TEST_CASE("local libsvm file as the dataset") {
    const auto dir = std::filesystem::temp_directory_path() / ("schedlab_bench_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    const auto path = dir / "toy.libsvm";
    {
      std::ofstream out(path);
      for (int i = 0; i < 20; ++i) out << (i % 2 ? "+1" : "-1") << " 1:" << (i % 2 ? 1.0 : -1.0) << " 3:0.5\n";
    }
    auto c = parse_one("dataset = toy\ndataset.path = " + path.string() + "\nepochs = 2\nseeds = 0\n");
    const auto data = prepare_data(c);
    CHECK(data.train->size() == 16);
    CHECK(data.test->size() == 4);
    CHECK(data.train->dimension == 3);
    CHECK(data.bandwidth == 1.0);
    CHECK(data.train->label_map->negative == -1.0);

    {
      std::ofstream out(path, std::ios::binary);
      out << "BZh91AY&SY";
    }
    CHECK_THROWS_AS(prepare_data(c), IoError);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("known datasets pick up their bandwidth") {
    auto c = parse_one("dataset = mushrooms\noffline = true\ncache_dir = /nonexistent/schedlab\n");
    CHECK_THROWS_AS(prepare_data(c), IoError);
    CHECK(find_known_dataset("mushrooms")->bandwidth == 0.5);
  }
}

TEST_SUITE("compare") {
  TEST_CASE("budget mismatch is rejected") {
    auto a = parse_one(kBlobKernel);
    a.label = "a";
    auto b = a;
    b.label = "b";
    b.train.schedule.kind = ScheduleKind::InvSqrt;
    CHECK_NOTHROW(require_same_budget({a, b}));
    b.train.inner_T = 4;
    CHECK_THROWS_AS(require_same_budget({a, b}), ValidationError);
    b = a;
    b.label = "b";
    b.seeds = {1, 2};
    CHECK_THROWS_AS(require_same_budget({a, b}), ValidationError);
    b = a;
    CHECK_THROWS_AS(require_same_budget({a, b}), ValidationError);  // same label
    CHECK_THROWS_AS(require_same_budget({a}), ValidationError);
  }

  TEST_CASE("identical schedules under two names give identical columns") {
    auto a = parse_one(kBlobKernel);
    a.label = "first";
    auto b = a;
    b.label = "second";
    const auto table = compare_schedules({a, b});
    REQUIRE(table.rows.size() == 2);
    CHECK(table.rows[0].result.train_loss->mean == table.rows[1].result.train_loss->mean);
    CHECK(table.rows[0].result.test_accuracy->mean == table.rows[1].result.test_accuracy->mean);
    CHECK(table.best_train_loss == std::vector<std::string>{"first", "second"});
    CHECK(seed_wins(table.rows[0].result, table.rows[1].result) == 0);
  }

  TEST_CASE("property: comparison is symmetric under reordering") {
    const auto x = fake_result("lnsqrt", {0.43, 0.44, 0.42}, {0.83, 0.82, 0.84});
    const auto y = fake_result("inv_sqrt", {0.44, 0.43, 0.45}, {0.82, 0.83, 0.81});
    const auto z = fake_result("cosine", {0.50, 0.49, 0.51}, {0.80, 0.80, 0.80});
    const auto t1 = compare_results({x, y, z});
    const auto t2 = compare_results({z, x, y});
    REQUIRE(t1.rows.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(t1.rows[i].label == t2.rows[i].label);
      CHECK(t1.rows[i].result.train_loss->mean == t2.rows[i].result.train_loss->mean);
    }
    CHECK(t1.best_train_loss == std::vector<std::string>{"lnsqrt"});
    CHECK(t1.best_test_accuracy == std::vector<std::string>{"lnsqrt"});
    CHECK(t1.best_train_loss == t2.best_train_loss);
    CHECK(seed_wins(x, y) == 2);
    CHECK(seed_wins(y, x) == 1);

    std::ostringstream out;
    write_comparison(t1, out);
    CHECK(out.str().find("lowest train_loss: lnsqrt") != std::string::npos);
  }

  TEST_CASE("blob comparison of two schedules runs both") {
    std::istringstream in(std::string(kBlobKernel) + "[variant new]\n[variant baseline]\nschedule = inv_sqrt\nalpha = 1\n");
    const auto table = compare_schedules(parse_config(in).experiments());
    REQUIRE(table.rows.size() == 2);
    CHECK(table.rows[0].label == "baseline");
    CHECK(table.rows[0].schedule == "inv_sqrt");
    CHECK(table.rows[1].schedule == "lnsqrt_practical");
    CHECK(table.rows[0].result.completed() == 3);
  }
}

TEST_SUITE("rate") {
  TEST_CASE("fit on ln T / sqrt T over T = 10..10^4") {
    std::vector<std::int64_t> T;
    std::vector<double> g;
    for (std::int64_t t = 10; t <= 10'000; ++t) {
      T.push_back(t);
      g.push_back(3.0 * std::log(static_cast<double>(t)) / std::sqrt(static_cast<double>(t)));
    }
    const auto est = estimate_rate(T, g);
    CHECK(est.slope == doctest::Approx(-0.35865214428488024).epsilon(1e-9));
    CHECK(est.intercept == doctest::Approx(2.0346915912918906).epsilon(1e-9));
    CHECK(est.slope >= -0.45);
    CHECK(est.slope <= -0.35);
    CHECK(est.t_min == 10);
    CHECK(est.t_max == 10'000);
  }

  TEST_CASE("constant and 1/T sequences") {
    std::vector<std::int64_t> T;
    std::vector<double> flat, inverse;
    for (int k = 0; k <= 30; ++k) {
      const auto t = static_cast<std::int64_t>(std::llround(10.0 * std::pow(10.0, k / 10.0)));
      T.push_back(t);
      flat.push_back(2.5);
      inverse.push_back(4.0 / static_cast<double>(t));
    }
    CHECK(std::abs(estimate_rate(T, flat).slope) < 1e-12);
    const auto inv = estimate_rate(T, inverse);
    CHECK(inv.slope == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(inv.residual < 1e-12);
  }

  TEST_CASE("insufficient data is rejected") {
    std::vector<std::int64_t> few{10, 100, 1000, 10000};
    std::vector<double> v(4, 1.0);
    CHECK_THROWS_AS(estimate_rate(few, v), ValidationError);
    std::vector<std::int64_t> narrow;
    for (int t = 100; t < 112; ++t) narrow.push_back(t);
    CHECK_THROWS_AS(estimate_rate(narrow, std::vector<double>(narrow.size(), 1.0)), ValidationError);
    std::vector<std::int64_t> wide = default_rate_horizons();
    std::vector<double> bad(wide.size(), 1.0);
    bad[3] = 0.0;
    CHECK_THROWS_AS(estimate_rate(wide, bad), ValidationError);
  }

  TEST_CASE("default horizon grid") {
    CHECK(default_rate_horizons() ==
          std::vector<std::int64_t>{16, 23, 32, 45, 64, 91, 128, 181, 256, 362, 512, 724, 1024});
  }

  TEST_CASE("expected output gradient norm weights by step size") {
    MetricTrace trace;
    trace.epochs = {{0, 0, 0, 0.0, 1.0, std::nullopt, 4.0},
                    {1, 0, 1, 0.8, 1.0, std::nullopt, 2.0},
                    {2, 0, 2, 0.2, 1.0, std::nullopt, 1.0}};
    const std::vector<std::int64_t> h{1, 2};
    const auto v = expected_output_grad_norm(trace, h);
    REQUIRE(v.size() == 2);
    CHECK(v[0] == 4.0);
    CHECK(v[1] == doctest::Approx((0.8 * 4.0 + 0.2 * 2.0) / 1.0).epsilon(1e-15));
    const std::vector<std::int64_t> too_far{3};
    CHECK_THROWS_AS(expected_output_grad_norm(trace, too_far), ValidationError);
  }

  TEST_CASE("rate measurement on a small blob set") {
    auto c = parse_one(
        "dataset = blobs\nblobs.n = 80\nobjective = mlp\nmlp.hidden = 4\nschedule = lnsqrt_theory\neta0 = 1\n"
        "batch_size = 16\nseeds = 0,1\nrate.horizons = 2,3,4,6,8,11,16,23,32,45,64,91\n");
    const auto m = measure_rate(c, prepare_data(c));
    CHECK(m.mean_grad_norm_sq.size() == 12);
    CHECK(m.fit.points == 12);
    CHECK(std::isfinite(m.fit.slope));
    c.train.schedule.kind = ScheduleKind::Cosine;
    c.train.schedule.horizon = 91;
    c.train.inner_T = 91;
    CHECK_THROWS_AS(measure_rate(c, prepare_data(c)), ValidationError);
  }
}

TEST_SUITE("lemmas") {
  TEST_CASE("eta0 = 1 up to 10: the squared-sum bound fails at 1..4 only") {
    const auto check = check_lemmas(1.0, 10);
    CHECK(check.rows.size() == 10);
    CHECK(check.lower_failures.empty());
    CHECK(check.upper_failures == std::vector<std::int64_t>{1, 2, 3, 4});
    CHECK(check.upper_safe_failures.empty());
  }

  TEST_CASE("margins scale with eta0") {
    const auto unit = check_lemmas(1.0, 2000);
    const auto small = check_lemmas(0.05, 2000);
    REQUIRE(unit.rows.size() == small.rows.size());
    for (std::size_t i = 0; i < unit.rows.size(); ++i) {
      CHECK(small.rows[i].lower.margin == doctest::Approx(0.05 * unit.rows[i].lower.margin).epsilon(1e-12));
      CHECK(small.rows[i].upper.margin == doctest::Approx(0.0025 * unit.rows[i].upper.margin).epsilon(1e-12));
    }
  }

  TEST_CASE("report file") {
    std::ostringstream out;
    write_lemma_report(check_lemmas(1.0, 5), out);
    std::istringstream in(out.str());
    std::string header, row;
    std::getline(in, header);
    CHECK(header.starts_with("T,sum_eta,lower_bound,lower_margin,lower_holds"));
    int rows = 0;
    while (std::getline(in, row)) ++rows;
    CHECK(rows == 5);
    CHECK(out.str().find("\n4,") != std::string::npos);
  }
}

TEST_SUITE("emit") {
  TEST_CASE("csv layout") {
    const std::vector<RunRecord> one{sample_record(3)};
    std::ostringstream out;
    write_csv(one, out);
    std::istringstream in(out.str());
    std::string header, r1, r2, extra;
    std::getline(in, header);
    CHECK(header == "dataset,schedule,optimizer,eta0,alpha,seed,epoch,eta_t,train_loss,test_accuracy,grad_norm_sq,wall_ms");
    std::getline(in, r1);
    std::getline(in, r2);
    CHECK_FALSE(std::getline(in, extra));
    CHECK(r1 == "a1a,lnsqrt_practical,sgd,0.05,1e-05,3,0,0,0.6931471805599453,0.5,,1.25");
    CHECK(r2 == "a1a,lnsqrt_practical,sgd,0.05,1e-05,3,1,0.03333333333333333,0.6931,,1e-300,2.5");
  }

  TEST_CASE("empty record list") {
    std::ostringstream csv, js;
    write_csv({}, csv);
    CHECK(csv.str() ==
          "dataset,schedule,optimizer,eta0,alpha,seed,epoch,eta_t,train_loss,test_accuracy,grad_norm_sq,wall_ms\n");
    write_json({}, js);
    CHECK(js.str().find("\"records\": []") != std::string::npos);
    std::istringstream in(js.str());
    CHECK(read_json(in).empty());
  }

  TEST_CASE("property: json round-trips records exactly") {
    std::vector<RunRecord> records{sample_record(0), sample_record(1)};
    records[1].final_test_accuracy = 0.829;
    records[1].label = "quote \" and, comma";
    auto c = parse_one(kBlobKernel);
    c.train.monitor_grad_norm = true;
    for (auto& r : run_experiment(c).records) records.push_back(r);
    std::ostringstream out;
    write_json(records, out);
    CHECK(out.str().find("\"schema_version\": \"1\"") != std::string::npos);
    std::istringstream in(out.str());
    CHECK(read_json(in) == records);
  }

  TEST_CASE("malformed json") {
    std::istringstream bad("{\"schema_version\": \"2\", \"records\": []}");
    CHECK_THROWS_AS(read_json(bad), ValidationError);
    std::istringstream broken("{");
    CHECK_THROWS_AS(read_json(broken), ValidationError);
  }

  TEST_CASE("emit to files") {
    const std::vector<RunRecord> one{sample_record(0)};
    const auto path = std::filesystem::temp_directory_path() / ("schedlab_emit_" + std::to_string(::getpid()) + ".json");
    emit(one, OutputFormat::Json, path);
    std::ifstream in(path);
    CHECK(read_json(in) == one);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(emit(one, OutputFormat::Csv, "/nonexistent/dir/out.csv"), IoError);
  }
}
