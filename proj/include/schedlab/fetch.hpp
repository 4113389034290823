#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace schedlab {

/// A dataset the harness knows how to obtain, with the reference sizes it
/// is expected to produce after the 80:20 split.
struct KnownDataset {
  std::string_view name;
  std::string_view url;
  std::string_view sha256;  // empty: digest recorded on first fetch
  std::size_t dimension;
  std::size_t train_size;
  std::size_t test_size;
  double bandwidth;
};

const KnownDataset* find_known_dataset(std::string_view name);

struct FetchRequest {
  std::string name;
  std::string url;
  std::string sha256;  // lowercase hex; empty means trust-on-first-use
  std::filesystem::path cache_dir;
  bool offline = false;
  int retries = 3;
};

/// Returns the cached file for the request, downloading it when needed.
///
/// Layout: `<cache>/<name>/<sha256-prefix>/<name>.libsvm` with a sibling
/// `<name>.meta` holding url, checksum and fetch timestamp. Downloads go to a
/// `.part` file under an exclusive `.lock` and are renamed into place only
/// after the checksum matches; a mismatching file is moved aside with a
/// `.quarantine` suffix and an IoError is thrown. Offline mode never touches
/// the network and throws IoError on a cache miss.
std::filesystem::path fetch_dataset(const FetchRequest& request);

/// $SCHEDLAB_CACHE, else $HOME/.cache/schedlab, else ./.schedlab-cache.
std::filesystem::path default_cache_dir();

std::string sha256_file(const std::filesystem::path& path);

/// First 16 hex characters; names the per-checksum cache directory.
std::string checksum_prefix(std::string_view sha256_hex);

}  // namespace schedlab
