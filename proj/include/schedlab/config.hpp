#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "schedlab/data.hpp"
#include "schedlab/optim.hpp"

namespace schedlab {

enum class ObjectiveKind { Kernel, Mlp };
enum class ReportMode { LastEpoch, BestEpoch, SampledIterate };
enum class OutputFormat { Csv, Json };

std::string_view to_string(ObjectiveKind kind);
std::string_view to_string(ReportMode mode);
std::string_view to_string(OutputFormat format);
ObjectiveKind parse_objective_kind(std::string_view name);
ReportMode parse_report_mode(std::string_view name);
OutputFormat parse_output_format(std::string_view name);

/// Where the examples come from. A local path wins over a download; the
/// name "blobs" selects the synthetic generator.
struct DatasetSource {
  std::string name;
  std::string path;
  std::string url;     // empty: registry URL for a known name
  std::string sha256;  // empty: registry digest, else trust-on-first-use
  std::size_t dimension = 0;  // 0: registry value, else the largest index seen

  std::size_t blobs_n = 500;
  std::size_t blobs_dim = 2;
  double blobs_separation = 2.0;
  std::uint64_t blobs_seed = 0;

  bool is_blobs() const { return name == "blobs"; }
  bool operator==(const DatasetSource&) const = default;
};

/// Binary tasks train for 50 epochs with minibatches of 64 unless told otherwise.
TrainConfig default_train_config();

struct ExperimentConfig {
  std::string label;  // variant name; not part of the hash
  DatasetSource dataset;
  SplitSpec split;
  ObjectiveKind objective = ObjectiveKind::Kernel;
  double bandwidth = 0.0;  // 0: registry value for a known dataset, else 1
  std::size_t kernel_cache_mb = 1024;
  std::size_t mlp_hidden = 16;
  double mlp_init_scale = 0.1;
  TrainConfig train = default_train_config();
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  ReportMode report = ReportMode::LastEpoch;
  std::int64_t metrics_every = 1;
  std::vector<std::int64_t> rate_horizons;  // empty: default grid

  // Delivery settings; excluded from the hash.
  std::string output;
  OutputFormat format = OutputFormat::Csv;
  bool offline = false;
  std::string cache_dir;

  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

/// Every hashed setting as `key = value` lines in a fixed order. The text
/// parses back to an equal configuration (minus delivery settings).
std::string canonical_text(const ExperimentConfig& config);

/// 64-bit FNV-1a of canonical_text, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

/// Base settings plus `[variant <label>]` sections that override them.
struct ConfigFile {
  ExperimentConfig base;
  std::vector<ExperimentConfig> variants;

  /// The variants when there are any, otherwise the base alone.
  std::vector<ExperimentConfig> experiments() const;
};

/// `key = value` lines; `#` starts a comment. Unknown keys, repeated keys
/// within a section and malformed values raise ParseError with the line.
ConfigFile parse_config(std::istream& in);
ConfigFile load_config(const std::filesystem::path& path);

}  // namespace schedlab
