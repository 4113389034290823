#include "schedlab/fetch.hpp"

#include <curl/curl.h>
#include <fcntl.h>
#include <openssl/evp.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cerrno>
#include <ctime>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <thread>
#include <vector>

#include "schedlab/errors.hpp"

namespace schedlab {

namespace fs = std::filesystem;

namespace {

// Pools are the files whose example counts give the reference 80:20 split sizes.
const std::array<KnownDataset, 5> kKnown = {{
    {"a1a", "https://www.csie.ntu.edu.tw/~cjlin/libsvmtools/datasets/binary/a1a.t", "", 123, 24765, 6191, 1.0},
    {"a2a", "https://www.csie.ntu.edu.tw/~cjlin/libsvmtools/datasets/binary/a2a.t", "", 123, 24237, 6060, 1.0},
    {"mushrooms", "https://www.csie.ntu.edu.tw/~cjlin/libsvmtools/datasets/binary/mushrooms", "", 112, 6499, 1625,
     0.5},
    {"rcv1", "https://www.csie.ntu.edu.tw/~cjlin/libsvmtools/datasets/binary/rcv1_train.binary.bz2", "", 47236,
     16194, 4048, 0.25},
    {"w1a", "https://www.csie.ntu.edu.tw/~cjlin/libsvmtools/datasets/binary/w1a.t", "", 300, 37818, 9454, 1.0},
}};

struct CurlGlobal {
  CurlGlobal() { curl_global_init(CURL_GLOBAL_DEFAULT); }
  ~CurlGlobal() { curl_global_cleanup(); }
};

void ensure_curl() { static CurlGlobal global; }

size_t write_to_stream(char* ptr, size_t size, size_t nmemb, void* userdata) {
  auto* out = static_cast<std::ofstream*>(userdata);
  out->write(ptr, static_cast<std::streamsize>(size * nmemb));
  return out->good() ? size * nmemb : 0;
}

// One transfer attempt; returns an error message, empty on success.
std::string download_once(const std::string& url, const fs::path& dest) {
  ensure_curl();
  std::ofstream out(dest, std::ios::binary | std::ios::trunc);
  if (!out) return "cannot open " + dest.string();
  std::unique_ptr<CURL, decltype(&curl_easy_cleanup)> curl(curl_easy_init(), &curl_easy_cleanup);
  if (!curl) return "curl_easy_init failed";
  curl_easy_setopt(curl.get(), CURLOPT_URL, url.c_str());
  curl_easy_setopt(curl.get(), CURLOPT_FOLLOWLOCATION, 1L);
  curl_easy_setopt(curl.get(), CURLOPT_FAILONERROR, 1L);
  curl_easy_setopt(curl.get(), CURLOPT_CONNECTTIMEOUT, 30L);
  curl_easy_setopt(curl.get(), CURLOPT_WRITEFUNCTION, &write_to_stream);
  curl_easy_setopt(curl.get(), CURLOPT_WRITEDATA, &out);
  const CURLcode rc = curl_easy_perform(curl.get());
  out.close();
  if (rc != CURLE_OK) return curl_easy_strerror(rc);
  if (!out) return "write failure on " + dest.string();
  return {};
}

std::string iso_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_meta(const fs::path& path, const FetchRequest& req, const std::string& digest) {
  std::ofstream meta(path, std::ios::trunc);
  meta << "name=" << req.name << '\n'
       << "url=" << req.url << '\n'
       << "sha256=" << digest << '\n'
       << "fetched=" << iso_timestamp() << '\n';
  if (!meta) throw IoError("cannot write " + path.string());
}

// Exclusive O_EXCL lock file; waits for a concurrent fetcher to finish.
class CacheLock {
 public:
  explicit CacheLock(fs::path path) : path_(std::move(path)) {
    for (int attempt = 0; attempt < 600; ++attempt) {
      fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
      if (fd_ >= 0) return;
      if (errno != EEXIST) throw IoError("cannot create lock " + path_.string());
      std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
    throw IoError("timed out waiting for lock " + path_.string());
  }
  ~CacheLock() {
    ::close(fd_);
    std::error_code ec;
    fs::remove(path_, ec);
  }
  CacheLock(const CacheLock&) = delete;
  CacheLock& operator=(const CacheLock&) = delete;

 private:
  fs::path path_;
  int fd_ = -1;
};

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

fs::path data_file(const fs::path& dir, const std::string& name) { return dir / (name + ".libsvm"); }
fs::path meta_file(const fs::path& dir, const std::string& name) { return dir / (name + ".meta"); }

void quarantine(const fs::path& file) {
  std::error_code ec;
  fs::rename(file, fs::path(file.string() + ".quarantine"), ec);
}

// Unpinned lookup: the first checksum directory (sorted) with both files.
std::optional<fs::path> find_unpinned(const fs::path& root, const std::string& name) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) return std::nullopt;
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root, ec)) {
    if (entry.is_directory() && fs::exists(data_file(entry.path(), name)) &&
        fs::exists(meta_file(entry.path(), name))) {
      dirs.push_back(entry.path());
    }
  }
  if (dirs.empty()) return std::nullopt;
  std::sort(dirs.begin(), dirs.end());
  return data_file(dirs.front(), name);
}

}  // namespace

const KnownDataset* find_known_dataset(std::string_view name) {
  for (const auto& k : kKnown) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

fs::path default_cache_dir() {
  if (const char* env = std::getenv("SCHEDLAB_CACHE"); env && *env) return env;
  if (const char* home = std::getenv("HOME"); home && *home) return fs::path(home) / ".cache" / "schedlab";
  return ".schedlab-cache";
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw IoError("sha256 init failed");
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  hex.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[md[i] >> 4]);
    hex.push_back(kHex[md[i] & 0xf]);
  }
  return hex;
}

std::string checksum_prefix(std::string_view sha256_hex) { return std::string(sha256_hex.substr(0, 16)); }

fs::path fetch_dataset(const FetchRequest& request) {
  if (request.name.empty()) throw ValidationError("dataset name is empty");
  const std::string pinned = lower(request.sha256);
  if (!pinned.empty() && pinned.size() != 64) throw ValidationError("sha256 must be 64 hex characters");
  const fs::path root = request.cache_dir / request.name;

  if (!pinned.empty()) {
    const fs::path dir = root / checksum_prefix(pinned);
    const fs::path file = data_file(dir, request.name);
    if (fs::exists(file)) {
      if (sha256_file(file) == pinned) return file;
      quarantine(file);
    }
  } else if (auto hit = find_unpinned(root, request.name)) {
    return *hit;
  }

  if (request.offline) {
    throw IoError("dataset '" + request.name + "' not in cache " + request.cache_dir.string() + " (offline)");
  }
  if (request.url.empty()) throw ValidationError("no URL configured for dataset '" + request.name + "'");

  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw IoError("cannot create cache directory " + root.string() + ": " + ec.message());
  CacheLock lock(root / (request.name + ".lock"));

  // Another process may have completed the fetch while we waited.
  if (!pinned.empty()) {
    const fs::path file = data_file(root / checksum_prefix(pinned), request.name);
    if (fs::exists(file) && sha256_file(file) == pinned) return file;
  } else if (auto hit = find_unpinned(root, request.name)) {
    return *hit;
  }

  const fs::path part = root / (request.name + ".part");
  std::string last_error;
  bool ok = false;
  for (int attempt = 0; attempt < std::max(1, request.retries); ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(250 << attempt));
    last_error = download_once(request.url, part);
    if (last_error.empty()) {
      ok = true;
      break;
    }
  }
  if (!ok) {
    fs::remove(part, ec);
    throw IoError("fetching " + request.url + " failed after " + std::to_string(std::max(1, request.retries)) +
                  " attempt(s): " + last_error);
  }

  const std::string digest = sha256_file(part);
  if (!pinned.empty() && digest != pinned) {
    quarantine(part);
    throw IoError("checksum mismatch for '" + request.name + "': expected " + pinned + ", got " + digest);
  }
  if (pinned.empty()) {
    std::cerr << "warning: no checksum pinned for '" << request.name << "'; recorded sha256 " << digest << '\n';
  }

  const fs::path dir = root / checksum_prefix(digest);
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const fs::path file = data_file(dir, request.name);
  fs::rename(part, file, ec);
  if (ec) throw IoError("cannot move download into cache: " + ec.message());
  write_meta(meta_file(dir, request.name), request, digest);
  return file;
}

}  // namespace schedlab
