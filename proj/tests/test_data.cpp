#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <unistd.h>

#include "doctest.h"
#include "schedlab/data.hpp"
#include "schedlab/errors.hpp"
#include "schedlab/fetch.hpp"
#include "schedlab/rng.hpp"

using namespace schedlab;
namespace fs = std::filesystem;

namespace {

SparseDataset parse(const std::string& text) {
  std::istringstream in(text);
  return parse_libsvm(in, "t");
}

SparseDataset synthetic(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  SparseDataset ds;
  ds.name = "synthetic";
  ds.dimension = 50;
  for (std::size_t i = 0; i < n; ++i) {
    SparseExample ex;
    ex.label = (i % 3 == 0) ? 1.0 : -1.0;
    for (std::uint32_t j = 0; j < 50; ++j) {
      if (uniform01(rng) < 0.2) ex.features.push_back({j, std::round(uniform01(rng) * 1e6) / 1e3 + static_cast<double>(i)});
    }
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("schedlab-test-" + std::to_string(::getpid()) + "-" +
                                        std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

}  // namespace

TEST_SUITE("data") {
  TEST_CASE("parse a single LIBSVM line") {
    const auto ds = parse("+1 3:1 11:1\n");
    REQUIRE(ds.size() == 1);
    CHECK(ds.examples[0].label == 1.0);
    CHECK(ds.examples[0].features == std::vector<Feature>{{2, 1.0}, {10, 1.0}});
    CHECK(ds.dimension == 11);
  }

  TEST_CASE("parse multiple lines, comments and blanks") {
    const auto ds = parse("# header\n-1 1:0.5\n\n   \n+1 2:2   # trailing\n");
    REQUIRE(ds.size() == 2);
    CHECK(ds.dimension == 2);
    CHECK(ds.examples[0].label == -1.0);
    CHECK(ds.examples[0].features == std::vector<Feature>{{0, 0.5}});
    CHECK(ds.examples[1].features == std::vector<Feature>{{1, 2.0}});
    CHECK(ds.positive_count() == 1);
    CHECK(ds.negative_count() == 1);
  }

  TEST_CASE("label-only lines are examples with no features") {
    const auto ds = parse("1\n-1 4:1\n");
    REQUIRE(ds.size() == 2);
    CHECK(ds.examples[0].features.empty());
  }

  TEST_CASE("parse errors carry line numbers") {
    auto line_of = [](const std::string& text) -> std::size_t {
      try {
        parse(text);
      } catch (const ParseError& e) {
        return e.line();
      }
      return 0;
    };
    CHECK(line_of("+1 1:1\n+1 3:1 2:1\n") == 2);  // descending
    CHECK(line_of("+1 2:1 2:1\n") == 1);          // duplicate
    CHECK(line_of("+1 1:1\n\n-1 x:1\n") == 3);    // bad index
    CHECK(line_of("+1 1:abc\n") == 1);            // bad value
    CHECK(line_of("+1 1\n") == 1);                // missing colon
    CHECK(line_of("abc 1:1\n") == 1);             // bad label
    CHECK(line_of("+1 0:1\n") == 1);              // 0 is not a LIBSVM index
    CHECK(line_of("+1 1:nan\n") == 1);
    CHECK_THROWS_AS(parse(""), ParseError);
    CHECK_THROWS_AS(parse("# only comments\n\n"), ParseError);
  }

  TEST_CASE("declared dimension overrides the observed maximum") {
    std::istringstream in("+1 3:1\n");
    CHECK(parse_libsvm(in, "x", 123).dimension == 123);
    std::istringstream small("+1 30:1\n");
    CHECK_THROWS_AS(parse_libsvm(small, "x", 10), ValidationError);
  }

  TEST_CASE("property: write then parse is the identity") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto ds = synthetic(200, seed);
      std::ostringstream out;
      write_libsvm(ds, out);
      std::istringstream in(out.str());
      auto back = parse_libsvm(in, ds.name, ds.dimension);
      CHECK(back == ds);
    }
  }

  TEST_CASE("split sizes") {
    const auto two = split(synthetic(2, 1), {0.8, 3, true});
    CHECK(two.train.size() == 1);
    CHECK(two.test.size() == 1);

    auto sizes = [](std::size_t n) {
      SparseDataset ds;
      ds.dimension = 1;
      ds.examples.assign(n, SparseExample{1.0, {}});
      const auto s = split(ds, {});
      return std::pair{s.train.size(), s.test.size()};
    };
    CHECK(sizes(8124) == std::pair<std::size_t, std::size_t>{6499, 1625});
    CHECK(sizes(30956) == std::pair<std::size_t, std::size_t>{24765, 6191});
    CHECK(sizes(20242) == std::pair<std::size_t, std::size_t>{16194, 4048});
    CHECK(sizes(47272) == std::pair<std::size_t, std::size_t>{37818, 9454});

    CHECK_THROWS_AS(split(synthetic(10, 1), {1.0, 0, true}), ValidationError);
    CHECK_THROWS_AS(split(synthetic(10, 1), {0.0, 0, true}), ValidationError);
    CHECK_THROWS_AS(split(synthetic(1, 1), {}), ValidationError);
  }

  TEST_CASE("split without shuffle keeps file order") {
    const auto ds = synthetic(10, 2);
    const auto s = split(ds, {0.8, 0, false});
    CHECK(s.train.examples.front() == ds.examples.front());
    CHECK(s.test.examples.back() == ds.examples.back());
  }

  TEST_CASE("property: split is a disjoint cover, deterministic per seed") {
    // Unique labels identify examples.
    SparseDataset ds;
    ds.dimension = 1;
    for (int i = 0; i < 1000; ++i) ds.examples.push_back({static_cast<double>(i), {{0, 1.0}}});
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const auto s = split(ds, {0.8, seed, true});
      REQUIRE(s.train.size() == 800);
      REQUIRE(s.test.size() == 200);
      std::set<double> seen;
      for (const auto& e : s.train.examples) seen.insert(e.label);
      for (const auto& e : s.test.examples) seen.insert(e.label);
      REQUIRE(seen.size() == 1000);
      const auto again = split(ds, {0.8, seed, true});
      REQUIRE(again.train == s.train);
    }
    CHECK_FALSE(split(ds, {0.8, 1, true}).train == split(ds, {0.8, 2, true}).train);
  }

  TEST_CASE("normalize labels") {
    auto pm = normalize_labels(parse("-1 1:1\n+1 1:1\n-1 2:1\n"));
    CHECK(pm.examples[0].label == 0.0);
    CHECK(pm.examples[1].label == 1.0);
    CHECK(pm.label_map == LabelMap{-1.0, 1.0});

    auto twelve = normalize_labels(parse("2 1:1\n1 1:1\n"));
    CHECK(twelve.examples[0].label == 1.0);
    CHECK(twelve.examples[1].label == 0.0);
    CHECK(twelve.label_map == LabelMap{1.0, 2.0});

    CHECK_THROWS_AS(normalize_labels(parse("1 1:1\n2 1:1\n3 1:1\n")), ValidationError);
    CHECK_THROWS_AS(normalize_labels(parse("1 1:1\n1 2:1\n")), ValidationError);
  }

  TEST_CASE("minibatches") {
    const auto four = minibatch_indices(4, 2, 9, 1);
    REQUIRE(four.size() == 2);
    std::set<std::size_t> all(four[0].begin(), four[0].end());
    all.insert(four[1].begin(), four[1].end());
    CHECK(all == std::set<std::size_t>{0, 1, 2, 3});

    const auto five = minibatch_indices(5, 2, 9, 1);
    REQUIRE(five.size() == 3);
    CHECK(five[0].size() == 2);
    CHECK(five[1].size() == 2);
    CHECK(five[2].size() == 1);

    CHECK(minibatch_indices(100, 7, 42, 3) == minibatch_indices(100, 7, 42, 3));
    CHECK_FALSE(minibatch_indices(100, 7, 42, 3) == minibatch_indices(100, 7, 42, 4));
    CHECK_THROWS_AS(minibatch_indices(4, 0, 1, 1), ValidationError);
  }

  TEST_CASE("property: every epoch's batches partition 0..n-1") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t n = 1 + uniform_index(rng, 500);
      const std::size_t b = 1 + uniform_index(rng, 64);
      const auto batches = minibatch_indices(n, b, rng(), rng());
      std::vector<int> hits(n, 0);
      for (const auto& batch : batches) {
        REQUIRE(batch.size() <= b);
        for (std::size_t i : batch) ++hits[i];
      }
      REQUIRE(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
    }
  }

  TEST_CASE("blobs are balanced and deterministic") {
    const auto a = make_blobs(500, 2, 2.0, 1);
    CHECK(a.size() == 500);
    CHECK(a.positive_count() == 250);
    CHECK(a.dimension == 2);
    CHECK(a == make_blobs(500, 2, 2.0, 1));
    CHECK_FALSE(a == make_blobs(500, 2, 2.0, 2));
  }
}

TEST_SUITE("fetch") {
  TEST_CASE("sha256 of a known vector") {
    TempDir tmp;
    write_file(tmp.path / "abc", "abc");
    CHECK(sha256_file(tmp.path / "abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(checksum_prefix("ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad") ==
          "ba7816bf8f01cfea");
  }

  TEST_CASE("download, cache layout and offline hit") {
    TempDir tmp;
    const fs::path src = tmp.path / "source.txt";
    write_file(src, "+1 1:1\n-1 2:1\n");
    const std::string digest = sha256_file(src);

    FetchRequest req;
    req.name = "toy";
    req.url = "file://" + src.string();
    req.sha256 = digest;
    req.cache_dir = tmp.path / "cache";
    const fs::path got = fetch_dataset(req);
    CHECK(got == tmp.path / "cache" / "toy" / checksum_prefix(digest) / "toy.libsvm");
    CHECK(fs::exists(got.parent_path() / "toy.meta"));
    CHECK(load_libsvm(got).size() == 2);

    std::ifstream meta(got.parent_path() / "toy.meta");
    std::string text((std::istreambuf_iterator<char>(meta)), std::istreambuf_iterator<char>());
    CHECK(text.find("sha256=" + digest) != std::string::npos);
    CHECK(text.find("url=file://") != std::string::npos);
    CHECK(text.find("fetched=") != std::string::npos);

    // Cache hit needs no network: the source is gone and we are offline.
    fs::remove(src);
    req.offline = true;
    CHECK(fetch_dataset(req) == got);
  }

  TEST_CASE("unpinned fetch records the digest and is idempotent") {
    TempDir tmp;
    const fs::path src = tmp.path / "source.txt";
    write_file(src, "+1 1:1\n");
    FetchRequest req;
    req.name = "toy";
    req.url = "file://" + src.string();
    req.cache_dir = tmp.path / "cache";
    const fs::path first = fetch_dataset(req);
    CHECK(first.parent_path().filename() == checksum_prefix(sha256_file(src)));
    req.offline = true;
    CHECK(fetch_dataset(req) == first);
  }

  TEST_CASE("checksum mismatch refuses and quarantines the download") {
    TempDir tmp;
    const fs::path src = tmp.path / "source.txt";
    write_file(src, "+1 1:1\n");
    FetchRequest req;
    req.name = "toy";
    req.url = "file://" + src.string();
    req.sha256 = std::string(64, '0');
    req.cache_dir = tmp.path / "cache";
    CHECK_THROWS_AS(fetch_dataset(req), IoError);
    CHECK(fs::exists(tmp.path / "cache" / "toy" / "toy.part.quarantine"));
    CHECK_FALSE(fs::exists(tmp.path / "cache" / "toy" / checksum_prefix(req.sha256)));
  }

  TEST_CASE("offline cache miss and exhausted retries are I/O errors") {
    TempDir tmp;
    FetchRequest req;
    req.name = "toy";
    req.url = "file://" + (tmp.path / "missing").string();
    req.cache_dir = tmp.path / "cache";
    req.offline = true;
    CHECK_THROWS_AS(fetch_dataset(req), IoError);
    req.offline = false;
    req.retries = 2;
    CHECK_THROWS_AS(fetch_dataset(req), IoError);
    CHECK_FALSE(fs::exists(tmp.path / "cache" / "toy" / "toy.lock"));
  }

  TEST_CASE("known datasets") {
    const auto* a1a = find_known_dataset("a1a");
    REQUIRE(a1a != nullptr);
    CHECK(a1a->dimension == 123);
    CHECK(a1a->train_size == 24765);
    CHECK(find_known_dataset("mushrooms")->bandwidth == 0.5);
    CHECK(find_known_dataset("rcv1")->bandwidth == 0.25);
    CHECK(find_known_dataset("cifar10") == nullptr);
  }

  TEST_CASE("cache dir honours SCHEDLAB_CACHE") {
    ::setenv("SCHEDLAB_CACHE", "/tmp/some-cache", 1);
    CHECK(default_cache_dir() == fs::path("/tmp/some-cache"));
    ::unsetenv("SCHEDLAB_CACHE");
    CHECK(default_cache_dir() != fs::path("/tmp/some-cache"));
  }

  // Needs the public LIBSVM server; enable with SCHEDLAB_NETWORK_TESTS=1.
  TEST_CASE("fresh mushrooms fetch parses to 8124 examples" *
            doctest::skip(std::getenv("SCHEDLAB_NETWORK_TESTS") == nullptr)) {
    TempDir tmp;
    const auto* known = find_known_dataset("mushrooms");
    FetchRequest req{"mushrooms", std::string(known->url), std::string(known->sha256), tmp.path, false, 3};
    const auto ds = load_libsvm(fetch_dataset(req), "mushrooms", known->dimension);
    CHECK(ds.size() == 8124);
    CHECK(ds.dimension == 112);
  }
}
