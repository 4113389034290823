#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace schedlab {

/// One non-zero entry. `index` is the 0-based column (LIBSVM index minus one).
struct Feature {
  std::uint32_t index = 0;
  double value = 0.0;

  bool operator==(const Feature&) const = default;
};

struct SparseExample {
  double label = 0.0;
  std::vector<Feature> features;  // strictly ascending index

  bool operator==(const SparseExample&) const = default;
};

/// Raw labels mapped to 0 and 1 by normalize_labels.
struct LabelMap {
  double negative = 0.0;
  double positive = 1.0;

  bool operator==(const LabelMap&) const = default;
};

struct SparseDataset {
  std::string name;
  std::vector<SparseExample> examples;
  std::size_t dimension = 0;  // number of columns; every index < dimension
  std::optional<LabelMap> label_map;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }
  // Counts examples with label > 0 (raw +1 or normalized 1).
  std::size_t positive_count() const;
  std::size_t negative_count() const { return size() - positive_count(); }

  bool operator==(const SparseDataset&) const = default;
};

/// Reads `<label> <idx>:<val> ...` lines. Blank lines and `#` comments are
/// skipped. The dimension is the largest index seen unless `dimension`
/// overrides it (the override must cover every index).
SparseDataset parse_libsvm(std::istream& in, std::string name = {},
                           std::optional<std::size_t> dimension = std::nullopt);
SparseDataset load_libsvm(const std::filesystem::path& path, std::string name = {},
                          std::optional<std::size_t> dimension = std::nullopt);

/// Writes LIBSVM text with round-trip precision.
void write_libsvm(const SparseDataset& dataset, std::ostream& out);

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  bool shuffle = true;

  bool operator==(const SplitSpec&) const = default;
};

struct TrainTestSplit {
  SparseDataset train;
  SparseDataset test;
};

/// Seeded shuffle, then the first round(fraction * n) examples (clamped to
/// [1, n-1]) become the training set.
TrainTestSplit split(const SparseDataset& dataset, const SplitSpec& spec);

/// Maps the smaller of exactly two raw labels to 0 and the larger to 1.
SparseDataset normalize_labels(SparseDataset dataset);

/// Fisher-Yates permutation of 0..n-1 from a stream keyed by (seed, epoch),
/// cut into consecutive chunks of batch_size; the last chunk may be short.
std::vector<std::vector<std::size_t>> minibatch_indices(std::size_t n, std::size_t batch_size,
                                                        std::uint64_t seed, std::uint64_t epoch);

/// Two Gaussian clouds in `dim` dimensions centred at +-separation/2 along
/// every axis, labels 0/1 balanced. Stored densely as a SparseDataset.
SparseDataset make_blobs(std::size_t n, std::size_t dim, double separation, std::uint64_t seed);

}  // namespace schedlab
