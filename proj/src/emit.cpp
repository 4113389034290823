#include "schedlab/emit.hpp"

#include <charconv>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "schedlab/errors.hpp"

namespace schedlab {

namespace {

using nlohmann::json;

constexpr std::string_view kSchemaVersion = "1";

std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// Dataset names and labels never need quoting except for these characters.
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> read_optional(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

json to_json(const RunRecord& r) {
  json epochs = json::array();
  for (const auto& e : r.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"outer", e.outer},
                      {"t", e.t},
                      {"eta_t", e.eta_t},
                      {"train_loss", e.train_loss},
                      {"test_accuracy", optional_number(e.test_accuracy)},
                      {"grad_norm_sq", optional_number(e.grad_norm_sq)},
                      {"wall_ms", e.wall_ms}});
  }
  return {{"config_hash", r.config_hash},
          {"label", r.label},
          {"dataset", r.dataset},
          {"objective", r.objective},
          {"schedule", r.schedule},
          {"optimizer", r.optimizer},
          {"eta0", r.eta0},
          {"alpha", r.alpha},
          {"seed", r.seed},
          {"epochs_budget", r.epochs_budget},
          {"batch_size", r.batch_size},
          {"restarts", r.restarts},
          {"report", r.report},
          {"epochs", std::move(epochs)},
          {"reported_epoch", r.reported_epoch},
          {"final_train_loss", r.final_train_loss},
          {"final_test_accuracy", optional_number(r.final_test_accuracy)},
          {"armijo_failures", r.armijo_failures},
          {"wall_ms", r.wall_ms}};
}

RunRecord from_json(const json& j) {
  RunRecord r;
  r.config_hash = j.at("config_hash").get<std::string>();
  r.label = j.at("label").get<std::string>();
  r.dataset = j.at("dataset").get<std::string>();
  r.objective = j.at("objective").get<std::string>();
  r.schedule = j.at("schedule").get<std::string>();
  r.optimizer = j.at("optimizer").get<std::string>();
  r.eta0 = j.at("eta0").get<double>();
  r.alpha = j.at("alpha").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.epochs_budget = j.at("epochs_budget").get<std::int64_t>();
  r.batch_size = j.at("batch_size").get<std::size_t>();
  r.restarts = j.at("restarts").get<std::int64_t>();
  r.report = j.at("report").get<std::string>();
  for (const auto& e : j.at("epochs")) {
    r.epochs.push_back({e.at("epoch").get<std::int64_t>(), e.at("outer").get<std::int64_t>(),
                        e.at("t").get<std::int64_t>(), e.at("eta_t").get<double>(),
                        e.at("train_loss").get<double>(), read_optional(e.at("test_accuracy")),
                        read_optional(e.at("grad_norm_sq")), e.at("wall_ms").get<double>()});
  }
  r.reported_epoch = j.at("reported_epoch").get<std::int64_t>();
  r.final_train_loss = j.at("final_train_loss").get<double>();
  r.final_test_accuracy = read_optional(j.at("final_test_accuracy"));
  r.armijo_failures = j.at("armijo_failures").get<std::size_t>();
  r.wall_ms = j.at("wall_ms").get<double>();
  return r;
}

}  // namespace

void write_csv(std::span<const RunRecord> records, std::ostream& out) {
  out << "dataset,schedule,optimizer,eta0,alpha,seed,epoch,eta_t,train_loss,test_accuracy,grad_norm_sq,wall_ms\n";
  for (const auto& r : records) {
    const std::string prefix = csv_field(r.dataset) + ',' + r.schedule + ',' + r.optimizer + ',' + fmt(r.eta0) +
                               ',' + fmt(r.alpha) + ',' + std::to_string(r.seed) + ',';
    for (const auto& e : r.epochs) {
      out << prefix << e.epoch << ',' << fmt(e.eta_t) << ',' << fmt(e.train_loss) << ','
          << (e.test_accuracy ? fmt(*e.test_accuracy) : "") << ',' << (e.grad_norm_sq ? fmt(*e.grad_norm_sq) : "")
          << ',' << fmt(e.wall_ms) << '\n';
    }
  }
}

void write_json(std::span<const RunRecord> records, std::ostream& out) {
  json arr = json::array();
  for (const auto& r : records) arr.push_back(to_json(r));
  const json doc = {{"schema_version", kSchemaVersion}, {"records", std::move(arr)}};
  out << doc.dump(2) << '\n';
}

std::vector<RunRecord> read_json(std::istream& in) {
  try {
    const json doc = json::parse(in);
    if (doc.at("schema_version").get<std::string>() != kSchemaVersion) {
      throw ValidationError("unsupported schema_version " + doc.at("schema_version").dump());
    }
    std::vector<RunRecord> out;
    for (const auto& r : doc.at("records")) out.push_back(from_json(r));
    return out;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed results JSON: ") + e.what());
  }
}

void emit(std::span<const RunRecord> records, OutputFormat format, const std::filesystem::path& path) {
  auto write = [&](std::ostream& out) {
    if (format == OutputFormat::Csv) {
      write_csv(records, out);
    } else {
      write_json(records, out);
    }
  };
  if (path.empty()) {
    write(std::cout);
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  write(out);
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace schedlab
