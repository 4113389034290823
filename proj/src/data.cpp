#include "schedlab/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <string_view>

#include "schedlab/errors.hpp"
#include "schedlab/rng.hpp"

namespace schedlab {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f'; }

double parse_real(std::string_view tok, std::size_t line_no, const char* what) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw ParseError(line_no, std::string("malformed ") + what + " '" + std::string(tok) + "'");
  }
  if (!std::isfinite(v)) throw ParseError(line_no, std::string("non-finite ") + what);
  return v;
}

std::uint32_t parse_index(std::string_view tok, std::size_t line_no) {
  std::uint64_t idx = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), idx);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw ParseError(line_no, "malformed feature index '" + std::string(tok) + "'");
  }
  if (idx == 0) throw ParseError(line_no, "feature indices are 1-based; got 0");
  if (idx > 0xffffffffULL) throw ParseError(line_no, "feature index out of range");
  return static_cast<std::uint32_t>(idx - 1);
}

// Subset copy preserving dataset metadata.
SparseDataset take(const SparseDataset& src, const std::vector<std::size_t>& order,
                   std::size_t begin, std::size_t end) {
  SparseDataset out;
  out.name = src.name;
  out.dimension = src.dimension;
  out.label_map = src.label_map;
  out.examples.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) out.examples.push_back(src.examples[order[i]]);
  return out;
}

std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_index(rng, i));
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

}  // namespace

std::size_t SparseDataset::positive_count() const {
  return static_cast<std::size_t>(
      std::count_if(examples.begin(), examples.end(), [](const auto& e) { return e.label > 0.0; }));
}

SparseDataset parse_libsvm(std::istream& in, std::string name, std::optional<std::size_t> dimension) {
  SparseDataset ds;
  ds.name = std::move(name);
  std::size_t max_index = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view rest(line);
    if (const auto hash = rest.find('#'); hash != std::string_view::npos) rest = rest.substr(0, hash);

    SparseExample ex;
    bool have_label = false;
    std::size_t pos = 0;
    while (pos < rest.size()) {
      while (pos < rest.size() && is_space(rest[pos])) ++pos;
      if (pos >= rest.size()) break;
      std::size_t end = pos;
      while (end < rest.size() && !is_space(rest[end])) ++end;
      const std::string_view tok = rest.substr(pos, end - pos);
      pos = end;

      if (!have_label) {
        ex.label = parse_real(tok, line_no, "label");
        have_label = true;
        continue;
      }
      const auto colon = tok.find(':');
      if (colon == std::string_view::npos) {
        throw ParseError(line_no, "expected index:value, got '" + std::string(tok) + "'");
      }
      Feature f;
      f.index = parse_index(tok.substr(0, colon), line_no);
      f.value = parse_real(tok.substr(colon + 1), line_no, "feature value");
      if (!ex.features.empty()) {
        const auto prev = ex.features.back().index;
        if (f.index == prev) {
          throw ParseError(line_no, "duplicate feature index " + std::to_string(f.index + 1));
        }
        if (f.index < prev) {
          throw ParseError(line_no, "feature indices must be ascending (" + std::to_string(f.index + 1) +
                                        " after " + std::to_string(prev + 1) + ")");
        }
      }
      max_index = std::max<std::size_t>(max_index, std::size_t{f.index} + 1);
      ex.features.push_back(f);
    }
    if (have_label) ds.examples.push_back(std::move(ex));
  }
  if (in.bad()) throw IoError("read failure while parsing LIBSVM data");
  if (ds.examples.empty()) throw ParseError(line_no, "no examples in LIBSVM input");

  if (dimension) {
    if (*dimension < max_index) {
      throw ValidationError("declared dimension " + std::to_string(*dimension) +
                            " is smaller than max feature index " + std::to_string(max_index));
    }
    ds.dimension = *dimension;
  } else {
    ds.dimension = max_index;
  }
  return ds;
}

SparseDataset load_libsvm(const std::filesystem::path& path, std::string name,
                          std::optional<std::size_t> dimension) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  if (name.empty()) name = path.stem().string();
  return parse_libsvm(in, std::move(name), dimension);
}

void write_libsvm(const SparseDataset& dataset, std::ostream& out) {
  char buf[64];
  auto put = [&](double v) {
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out.write(buf, ptr - buf);
  };
  for (const auto& ex : dataset.examples) {
    put(ex.label);
    for (const auto& f : ex.features) {
      out << ' ' << (std::uint64_t{f.index} + 1) << ':';
      put(f.value);
    }
    out << '\n';
  }
  if (!out) throw IoError("write failure while emitting LIBSVM data");
}

TrainTestSplit split(const SparseDataset& dataset, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw ValidationError("train_fraction must lie in (0, 1)");
  }
  const std::size_t n = dataset.size();
  if (n < 2) throw ValidationError("cannot split fewer than 2 examples");
  // Nearest integer, kept inside [1, n-1] so neither side is empty.
  const auto rounded = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(n)));
  const std::size_t n_train = std::clamp<std::size_t>(rounded, 1, n - 1);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (spec.shuffle) {
    Rng rng(derive_seed(spec.seed, {0x5b117ULL}));
    order = permutation(n, rng);
  }
  return {take(dataset, order, 0, n_train), take(dataset, order, n_train, n)};
}

SparseDataset normalize_labels(SparseDataset dataset) {
  std::set<double> distinct;
  for (const auto& ex : dataset.examples) {
    distinct.insert(ex.label);
    if (distinct.size() > 2) throw ValidationError("more than two distinct labels");
  }
  if (distinct.size() != 2) throw ValidationError("binary labels required, found one distinct value");
  const LabelMap map{*distinct.begin(), *distinct.rbegin()};
  for (auto& ex : dataset.examples) ex.label = ex.label == map.positive ? 1.0 : 0.0;
  dataset.label_map = map;
  return dataset;
}

std::vector<std::vector<std::size_t>> minibatch_indices(std::size_t n, std::size_t batch_size,
                                                        std::uint64_t seed, std::uint64_t epoch) {
  if (batch_size == 0) throw ValidationError("batch_size must be >= 1");
  Rng rng(derive_seed(seed, {epoch}));
  const auto perm = permutation(n, rng);
  std::vector<std::vector<std::size_t>> batches;
  batches.reserve((n + batch_size - 1) / batch_size);
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start),
                         perm.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

SparseDataset make_blobs(std::size_t n, std::size_t dim, double separation, std::uint64_t seed) {
  if (n == 0 || dim == 0) throw ValidationError("make_blobs needs n >= 1 and dim >= 1");
  Rng rng(derive_seed(seed, {0xb10b5ULL}));
  SparseDataset ds;
  ds.name = "blobs";
  ds.dimension = dim;
  ds.label_map = LabelMap{0.0, 1.0};
  ds.examples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& ex = ds.examples[i];
    ex.label = static_cast<double>(i % 2);
    const double centre = (ex.label > 0.5 ? 0.5 : -0.5) * separation;
    ex.features.resize(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      ex.features[j] = {static_cast<std::uint32_t>(j), centre + standard_normal(rng)};
    }
  }
  return ds;
}

}  // namespace schedlab
