#include "schedlab/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <set>
#include <sstream>

#include "schedlab/errors.hpp"
#include "schedlab/fetch.hpp"

namespace schedlab {

namespace {

template <typename Enum>
struct NamedValue {
  Enum value;
  std::string_view name;
};

constexpr NamedValue<ObjectiveKind> kObjectiveNames[] = {{ObjectiveKind::Kernel, "kernel"},
                                                         {ObjectiveKind::Mlp, "mlp"}};
constexpr NamedValue<ReportMode> kReportNames[] = {{ReportMode::LastEpoch, "last_epoch"},
                                                   {ReportMode::BestEpoch, "best_epoch"},
                                                   {ReportMode::SampledIterate, "sampled_iterate"}};
constexpr NamedValue<OutputFormat> kFormatNames[] = {{OutputFormat::Csv, "csv"}, {OutputFormat::Json, "json"}};

template <typename Enum, std::size_t N>
std::string_view name_of(const NamedValue<Enum> (&table)[N], Enum value) {
  for (const auto& e : table) {
    if (e.value == value) return e.name;
  }
  return "unknown";
}

template <typename Enum, std::size_t N>
Enum value_of(const NamedValue<Enum> (&table)[N], std::string_view name, std::string_view what) {
  for (const auto& e : table) {
    if (e.name == name) return e.value;
  }
  throw ValidationError("unknown " + std::string(what) + " '" + std::string(name) + "'");
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  if (trim(s).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    out.push_back(trim(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double to_double(std::string_view s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ValidationError("expected a finite number, got '" + std::string(s) + "'");
  }
  return v;
}

template <typename Int>
Int to_int(std::string_view s) {
  Int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ValidationError("expected an integer, got '" + std::string(s) + "'");
  }
  return v;
}

bool to_bool(std::string_view s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw ValidationError("expected true or false, got '" + std::string(s) + "'");
}

std::string fmt_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename Int>
std::string fmt_list(const std::vector<Int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

struct Field {
  std::string_view key;
  std::function<void(ExperimentConfig&, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;  // empty: not hashed
};

// Hashed fields in canonical order, followed by delivery settings.
const std::vector<Field>& fields() {
  using C = ExperimentConfig;
  using S = std::string_view;
  static const std::vector<Field> table = {
      {"dataset", [](C& c, S v) { c.dataset.name = v; }, [](const C& c) { return c.dataset.name; }},
      {"dataset.path", [](C& c, S v) { c.dataset.path = v; }, [](const C& c) { return c.dataset.path; }},
      {"dataset.url", [](C& c, S v) { c.dataset.url = v; }, [](const C& c) { return c.dataset.url; }},
      {"dataset.sha256", [](C& c, S v) { c.dataset.sha256 = v; }, [](const C& c) { return c.dataset.sha256; }},
      {"dataset.dimension", [](C& c, S v) { c.dataset.dimension = to_int<std::size_t>(v); },
       [](const C& c) { return std::to_string(c.dataset.dimension); }},
      {"blobs.n", [](C& c, S v) { c.dataset.blobs_n = to_int<std::size_t>(v); },
       [](const C& c) { return std::to_string(c.dataset.blobs_n); }},
      {"blobs.dim", [](C& c, S v) { c.dataset.blobs_dim = to_int<std::size_t>(v); },
       [](const C& c) { return std::to_string(c.dataset.blobs_dim); }},
      {"blobs.separation", [](C& c, S v) { c.dataset.blobs_separation = to_double(v); },
       [](const C& c) { return fmt_double(c.dataset.blobs_separation); }},
      {"blobs.seed", [](C& c, S v) { c.dataset.blobs_seed = to_int<std::uint64_t>(v); },
       [](const C& c) { return std::to_string(c.dataset.blobs_seed); }},
      {"split.train_fraction", [](C& c, S v) { c.split.train_fraction = to_double(v); },
       [](const C& c) { return fmt_double(c.split.train_fraction); }},
      {"split.seed", [](C& c, S v) { c.split.seed = to_int<std::uint64_t>(v); },
       [](const C& c) { return std::to_string(c.split.seed); }},
      {"split.shuffle", [](C& c, S v) { c.split.shuffle = to_bool(v); },
       [](const C& c) { return fmt_bool(c.split.shuffle); }},
      {"objective", [](C& c, S v) { c.objective = parse_objective_kind(v); },
       [](const C& c) { return std::string(to_string(c.objective)); }},
      {"kernel.bandwidth", [](C& c, S v) { c.bandwidth = to_double(v); },
       [](const C& c) { return fmt_double(c.bandwidth); }},
      {"kernel.cache_mb", [](C& c, S v) { c.kernel_cache_mb = to_int<std::size_t>(v); },
       [](const C& c) { return std::to_string(c.kernel_cache_mb); }},
      {"mlp.hidden", [](C& c, S v) { c.mlp_hidden = to_int<std::size_t>(v); },
       [](const C& c) { return std::to_string(c.mlp_hidden); }},
      {"mlp.init_scale", [](C& c, S v) { c.mlp_init_scale = to_double(v); },
       [](const C& c) { return fmt_double(c.mlp_init_scale); }},
      {"schedule", [](C& c, S v) { c.train.schedule.kind = parse_schedule_kind(v); },
       [](const C& c) { return std::string(to_string(c.train.schedule.kind)); }},
      {"eta0", [](C& c, S v) { c.train.schedule.eta0 = to_double(v); },
       [](const C& c) { return fmt_double(c.train.schedule.eta0); }},
      {"alpha", [](C& c, S v) { c.train.schedule.alpha = to_double(v); },
       [](const C& c) { return fmt_double(c.train.schedule.alpha); }},
      {"horizon", [](C& c, S v) { c.train.schedule.horizon = to_int<std::int64_t>(v); },
       [](const C& c) { return std::to_string(c.train.schedule.horizon); }},
      {"milestones",
       [](C& c, S v) {
         c.train.schedule.milestones.clear();
         for (auto item : split_list(v)) c.train.schedule.milestones.push_back(to_int<std::int64_t>(item));
       },
       [](const C& c) { return fmt_list(c.train.schedule.milestones); }},
      {"drop_factor", [](C& c, S v) { c.train.schedule.drop_factor = to_double(v); },
       [](const C& c) { return fmt_double(c.train.schedule.drop_factor); }},
      {"optimizer", [](C& c, S v) { c.train.optimizer = parse_optimizer_kind(v); },
       [](const C& c) { return std::string(to_string(c.train.optimizer)); }},
      {"momentum", [](C& c, S v) { c.train.momentum = to_double(v); },
       [](const C& c) { return fmt_double(c.train.momentum); }},
      {"batch_size", [](C& c, S v) { c.train.batch_size = to_int<std::size_t>(v); },
       [](const C& c) { return std::to_string(c.train.batch_size); }},
      {"epochs", [](C& c, S v) { c.train.inner_T = to_int<std::int64_t>(v); },
       [](const C& c) { return std::to_string(c.train.inner_T); }},
      {"restarts", [](C& c, S v) { c.train.outer_l = to_int<std::int64_t>(v); },
       [](const C& c) { return std::to_string(c.train.outer_l); }},
      {"adam.beta1", [](C& c, S v) { c.train.adam_beta1 = to_double(v); },
       [](const C& c) { return fmt_double(c.train.adam_beta1); }},
      {"adam.beta2", [](C& c, S v) { c.train.adam_beta2 = to_double(v); },
       [](const C& c) { return fmt_double(c.train.adam_beta2); }},
      {"adam.eps", [](C& c, S v) { c.train.adam_eps = to_double(v); },
       [](const C& c) { return fmt_double(c.train.adam_eps); }},
      {"armijo.c", [](C& c, S v) { c.train.armijo_c = to_double(v); },
       [](const C& c) { return fmt_double(c.train.armijo_c); }},
      {"armijo.backtrack", [](C& c, S v) { c.train.armijo_backtrack = to_double(v); },
       [](const C& c) { return fmt_double(c.train.armijo_backtrack); }},
      {"armijo.eta_max", [](C& c, S v) { c.train.armijo_eta_max = to_double(v); },
       [](const C& c) { return fmt_double(c.train.armijo_eta_max); }},
      {"plateau.factor", [](C& c, S v) { c.train.plateau_factor = to_double(v); },
       [](const C& c) { return fmt_double(c.train.plateau_factor); }},
      {"plateau.patience", [](C& c, S v) { c.train.plateau_patience = to_int<int>(v); },
       [](const C& c) { return std::to_string(c.train.plateau_patience); }},
      {"monitor_grad_norm", [](C& c, S v) { c.train.monitor_grad_norm = to_bool(v); },
       [](const C& c) { return fmt_bool(c.train.monitor_grad_norm); }},
      {"seeds",
       [](C& c, S v) {
         c.seeds.clear();
         for (auto item : split_list(v)) c.seeds.push_back(to_int<std::uint64_t>(item));
       },
       [](const C& c) { return fmt_list(c.seeds); }},
      {"report", [](C& c, S v) { c.report = parse_report_mode(v); },
       [](const C& c) { return std::string(to_string(c.report)); }},
      {"metrics_every", [](C& c, S v) { c.metrics_every = to_int<std::int64_t>(v); },
       [](const C& c) { return std::to_string(c.metrics_every); }},
      {"rate.horizons",
       [](C& c, S v) {
         c.rate_horizons.clear();
         for (auto item : split_list(v)) c.rate_horizons.push_back(to_int<std::int64_t>(item));
       },
       [](const C& c) { return fmt_list(c.rate_horizons); }},
      {"output", [](C& c, S v) { c.output = v; }, {}},
      {"format", [](C& c, S v) { c.format = parse_output_format(v); }, {}},
      {"offline", [](C& c, S v) { c.offline = to_bool(v); }, {}},
      {"cache_dir", [](C& c, S v) { c.cache_dir = v; }, {}},
  };
  return table;
}

const Field* find_field(std::string_view key) {
  for (const auto& f : fields()) {
    if (f.key == key) return &f;
  }
  return nullptr;
}

bool schedule_uses_alpha(ScheduleKind kind) {
  return kind == ScheduleKind::InvSqrt || kind == ScheduleKind::InvT || kind == ScheduleKind::LnSqrtPractical;
}

struct Assignment {
  std::string key;
  std::string value;
  std::size_t line;
};

struct Section {
  std::string label;
  std::size_t line = 0;
  std::vector<Assignment> assignments;
};

void apply(ExperimentConfig& config, std::set<std::string>& seen_keys, const Section& section) {
  for (const auto& a : section.assignments) {
    const Field* field = find_field(a.key);
    try {
      field->set(config, a.value);
    } catch (const ParseError&) {
      throw;
    } catch (const ValidationError& e) {
      throw ParseError(a.line, a.key + ": " + e.what());
    }
    seen_keys.insert(a.key);
  }
}

void finish(ExperimentConfig& config, const std::set<std::string>& seen_keys) {
  if (schedule_uses_alpha(config.train.schedule.kind) && !seen_keys.contains("alpha")) {
    throw ValidationError("schedule " + std::string(to_string(config.train.schedule.kind)) +
                          " needs an explicit alpha");
  }
  config.validate();
}

}  // namespace

std::string_view to_string(ObjectiveKind kind) { return name_of(kObjectiveNames, kind); }
std::string_view to_string(ReportMode mode) { return name_of(kReportNames, mode); }
std::string_view to_string(OutputFormat format) { return name_of(kFormatNames, format); }
ObjectiveKind parse_objective_kind(std::string_view name) { return value_of(kObjectiveNames, name, "objective"); }
ReportMode parse_report_mode(std::string_view name) { return value_of(kReportNames, name, "report mode"); }
OutputFormat parse_output_format(std::string_view name) { return value_of(kFormatNames, name, "output format"); }

TrainConfig default_train_config() {
  TrainConfig c;
  c.inner_T = 50;
  c.batch_size = 64;
  return c;
}

void ExperimentConfig::validate() const {
  if (dataset.name.empty() && dataset.path.empty()) throw ValidationError("config needs a dataset");
  if (dataset.is_blobs()) {
    if (dataset.blobs_n < 2) throw ValidationError("blobs.n must be >= 2");
    if (dataset.blobs_dim < 1) throw ValidationError("blobs.dim must be >= 1");
    if (!(dataset.blobs_separation >= 0.0)) throw ValidationError("blobs.separation must be >= 0");
  } else if (dataset.path.empty() && dataset.url.empty() && !find_known_dataset(dataset.name)) {
    throw ValidationError("dataset '" + dataset.name + "' is not known; give dataset.path or dataset.url");
  }
  if (!(split.train_fraction > 0.0 && split.train_fraction < 1.0)) {
    throw ValidationError("split.train_fraction must lie in (0, 1)");
  }
  if (!(bandwidth >= 0.0)) throw ValidationError("kernel.bandwidth must be >= 0 (0 picks the default)");
  if (mlp_hidden < 1) throw ValidationError("mlp.hidden must be >= 1");
  if (!(mlp_init_scale >= 0.0)) throw ValidationError("mlp.init_scale must be >= 0");
  train.validate();
  if (seeds.empty()) throw ValidationError("at least one seed is required");
  std::vector<std::uint64_t> sorted = seeds;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) throw ValidationError("seeds must be distinct");
  if (metrics_every < 1) throw ValidationError("metrics_every must be >= 1");
  if (report == ReportMode::SampledIterate && train.inner_T < 1) {
    throw ValidationError("report = sampled_iterate needs epochs >= 1");
  }
  for (std::size_t i = 0; i < rate_horizons.size(); ++i) {
    if (rate_horizons[i] < 1 || (i > 0 && rate_horizons[i] <= rate_horizons[i - 1])) {
      throw ValidationError("rate.horizons must be positive and strictly increasing");
    }
  }
}

std::string canonical_text(const ExperimentConfig& config) {
  std::string out;
  for (const auto& f : fields()) {
    if (!f.get) continue;
    out += f.key;
    out += " = ";
    out += f.get(config);
    out += '\n';
  }
  return out;
}

std::string config_hash(const ExperimentConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char ch : canonical_text(config)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<ExperimentConfig> ConfigFile::experiments() const {
  if (variants.empty()) return {base};
  return variants;
}

ConfigFile parse_config(std::istream& in) {
  Section base;
  std::vector<Section> variants;
  Section* current = &base;
  std::set<std::string> keys_in_section;

  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '#' && (i == 0 || line[i - 1] == ' ' || line[i - 1] == '\t')) {
        line = line.substr(0, i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError(line_no, "unterminated section header");
      const auto inner = trim(line.substr(1, line.size() - 2));
      constexpr std::string_view kVariant = "variant";
      if (!inner.starts_with(kVariant) || inner.size() == kVariant.size() ||
          (inner[kVariant.size()] != ' ' && inner[kVariant.size()] != '\t')) {
        throw ParseError(line_no, "section must read [variant <label>]");
      }
      const std::string label(trim(inner.substr(kVariant.size())));
      for (const auto& v : variants) {
        if (v.label == label) throw ParseError(line_no, "duplicate variant '" + label + "'");
      }
      variants.push_back({label, line_no, {}});
      current = &variants.back();
      keys_in_section.clear();
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(line_no, "expected key = value");
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw ParseError(line_no, "missing key before '='");
    if (!find_field(key)) throw ParseError(line_no, "unknown key '" + key + "'");
    if (!keys_in_section.insert(key).second) throw ParseError(line_no, "key '" + key + "' repeated");
    current->assignments.push_back({key, value, line_no});
  }
  if (in.bad()) throw IoError("failed reading config");

  ConfigFile file;
  std::set<std::string> base_keys;
  apply(file.base, base_keys, base);
  file.base.label = "base";
  for (const auto& section : variants) {
    ExperimentConfig config = file.base;
    std::set<std::string> keys = base_keys;
    apply(config, keys, section);
    config.label = section.label;
    try {
      finish(config, keys);
    } catch (const ValidationError& e) {
      throw ValidationError("variant '" + section.label + "': " + e.what());
    }
    file.variants.push_back(std::move(config));
  }
  if (variants.empty()) finish(file.base, base_keys);
  return file;
}

ConfigFile load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  return parse_config(in);
}

}  // namespace schedlab
