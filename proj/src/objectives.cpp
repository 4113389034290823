#include "schedlab/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "schedlab/errors.hpp"
#include "schedlab/numeric.hpp"

namespace schedlab {

namespace {

void check_batch(std::span<const std::size_t> batch, std::size_t n) {
  if (batch.empty()) throw ValidationError("empty batch");
  for (std::size_t i : batch) {
    if (i >= n) throw ValidationError("batch index " + std::to_string(i) + " out of range");
  }
}

double checked_loss(double loss) {
  if (!std::isfinite(loss)) throw TrainingError("non-finite loss");
  return loss;
}

// Binary cross-entropy of sigmoid(z) against y in {0, 1}.
double logistic_loss(double z, double y) { return softplus(z) - y * z; }

std::vector<double> densify(const SparseDataset& ds, std::size_t dim) {
  std::vector<double> out(ds.size() * dim, 0.0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (const auto& f : ds.examples[i].features) {
      if (f.index >= dim) throw ValidationError("feature index exceeds network input dimension");
      out[i * dim + f.index] = f.value;
    }
  }
  return out;
}

std::vector<double> labels_of(const SparseDataset& ds) {
  std::vector<double> y;
  y.reserve(ds.size());
  for (const auto& ex : ds.examples) {
    if (ex.label != 0.0 && ex.label != 1.0) throw ValidationError("labels must be normalized to {0, 1}");
    y.push_back(ex.label);
  }
  return y;
}

}  // namespace

// ---------------------------------------------------------------------------

double Objective::loss(std::span<const double> x, std::span<const std::size_t> batch) const {
  std::vector<double> scratch(dimension());
  return loss_and_grad(x, batch, scratch);
}

std::vector<std::size_t> Objective::all_indices() const {
  std::vector<std::size_t> idx(num_examples());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

double Objective::full_loss(std::span<const double> x) const { return loss(x, all_indices()); }

double Objective::full_grad(std::span<const double> x, std::span<double> grad) const {
  return loss_and_grad(x, all_indices(), grad);
}

// ---------------------------------------------------------------------------

QuadraticObjective::QuadraticObjective(std::size_t dim)
    : centers_(1, std::vector<double>(dim, 0.0)), curvature_(dim, 1.0) {
  if (dim == 0) throw ValidationError("quadratic dimension must be >= 1");
}

QuadraticObjective::QuadraticObjective(std::vector<std::vector<double>> centers, std::vector<double> curvature)
    : centers_(std::move(centers)), curvature_(std::move(curvature)) {
  if (centers_.empty() || curvature_.empty()) throw ValidationError("quadratic needs centers and curvature");
  for (const auto& c : centers_) {
    if (c.size() != curvature_.size()) throw ValidationError("center dimension mismatch");
  }
  for (double a : curvature_) {
    if (!(a >= 0.0) || !std::isfinite(a)) throw ValidationError("curvature must be finite and >= 0");
  }
}

double QuadraticObjective::loss_and_grad(std::span<const double> x, std::span<const std::size_t> batch,
                                         std::span<double> grad) const {
  check_batch(batch, centers_.size());
  const std::size_t d = curvature_.size();
  std::fill(grad.begin(), grad.end(), 0.0);
  double total = 0.0;
  for (std::size_t i : batch) {
    const auto& c = centers_[i];
    for (std::size_t k = 0; k < d; ++k) {
      const double r = x[k] - c[k];
      total += 0.5 * curvature_[k] * r * r;
      grad[k] += curvature_[k] * r;
    }
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (double& g : grad) g *= inv;
  return checked_loss(total * inv);
}

std::optional<double> QuadraticObjective::smoothness() const {
  return *std::max_element(curvature_.begin(), curvature_.end());
}

// ---------------------------------------------------------------------------

double squared_distance(std::span<const Feature> x, std::span<const Feature> y) {
  double s = 0.0;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < x.size() && j < y.size()) {
    if (x[i].index == y[j].index) {
      const double d = x[i].value - y[j].value;
      s += d * d;
      ++i;
      ++j;
    } else if (x[i].index < y[j].index) {
      s += x[i].value * x[i].value;
      ++i;
    } else {
      s += y[j].value * y[j].value;
      ++j;
    }
  }
  for (; i < x.size(); ++i) s += x[i].value * x[i].value;
  for (; j < y.size(); ++j) s += y[j].value * y[j].value;
  return s;
}

double rbf_kernel(std::span<const Feature> x, std::span<const Feature> y, double sigma) {
  if (!(sigma > 0.0)) throw ValidationError("kernel bandwidth must be positive");
  return std::exp(-squared_distance(x, y) / (2.0 * sigma * sigma));
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// ---------------------------------------------------------------------------

KernelClassifier::KernelClassifier(std::shared_ptr<const SparseDataset> train, double bandwidth,
                                   std::shared_ptr<const SparseDataset> test, std::size_t cache_budget_bytes)
    : train_(std::move(train)), test_(std::move(test)), bandwidth_(bandwidth) {
  if (!train_ || train_->empty()) throw ValidationError("kernel classifier needs a non-empty training set");
  if (!(bandwidth_ > 0.0) || !std::isfinite(bandwidth_)) throw ValidationError("bandwidth must be positive");
  labels_of(*train_);
  if (test_) labels_of(*test_);

  const std::size_t n = train_->size();
  const double train_bytes = static_cast<double>(n) * static_cast<double>(n) * sizeof(double);
  double budget = static_cast<double>(cache_budget_bytes);
  if (train_bytes <= budget) {
    train_cache_.resize(n * n);
    for (std::size_t i = 0; i < n; ++i) train_row(i, std::span(train_cache_).subspan(i * n, n));
    budget -= train_bytes;
  }
  if (test_ && !test_->empty()) {
    const std::size_t m = test_->size();
    if (static_cast<double>(m) * static_cast<double>(n) * sizeof(double) <= budget) {
      test_cache_.resize(m * n);
      for (std::size_t i = 0; i < m; ++i) {
        const auto& xi = test_->examples[i].features;
        for (std::size_t j = 0; j < n; ++j) {
          test_cache_[i * n + j] = rbf_kernel(train_->examples[j].features, xi, bandwidth_);
        }
      }
    }
  }
}

void KernelClassifier::train_row(std::size_t i, std::span<double> out) const {
  const auto& xi = train_->examples[i].features;
  for (std::size_t j = 0; j < out.size(); ++j) {
    out[j] = rbf_kernel(train_->examples[j].features, xi, bandwidth_);
  }
}

std::span<const double> KernelClassifier::row(std::size_t i, std::vector<double>& scratch) const {
  const std::size_t n = train_->size();
  if (!train_cache_.empty()) return std::span<const double>(train_cache_).subspan(i * n, n);
  scratch.resize(n);
  train_row(i, scratch);
  return scratch;
}

double KernelClassifier::loss_and_grad(std::span<const double> w, std::span<const std::size_t> batch,
                                       std::span<double> grad) const {
  const std::size_t n = train_->size();
  check_batch(batch, n);
  std::fill(grad.begin(), grad.end(), 0.0);
  std::vector<double> scratch;
  double total = 0.0;
  for (std::size_t i : batch) {
    const auto k = row(i, scratch);
    const double m = dot(w, k);
    const double y = train_->examples[i].label;
    total += logistic_loss(m, y);
    const double r = sigmoid(m) - y;
    for (std::size_t j = 0; j < n; ++j) grad[j] += r * k[j];
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (double& g : grad) g *= inv;
  return checked_loss(total * inv);
}

double KernelClassifier::loss(std::span<const double> w, std::span<const std::size_t> batch) const {
  check_batch(batch, train_->size());
  std::vector<double> scratch;
  double total = 0.0;
  for (std::size_t i : batch) total += logistic_loss(dot(w, row(i, scratch)), train_->examples[i].label);
  return checked_loss(total / static_cast<double>(batch.size()));
}

double KernelClassifier::margin(std::span<const double> w, std::span<const Feature> x) const {
  double m = 0.0;
  for (std::size_t j = 0; j < train_->size(); ++j) m += w[j] * rbf_kernel(train_->examples[j].features, x, bandwidth_);
  return m;
}

std::optional<double> KernelClassifier::test_accuracy(std::span<const double> w) const {
  if (!test_ || test_->empty()) return std::nullopt;
  const std::size_t n = train_->size();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test_->size(); ++i) {
    const double m = test_cache_.empty()
                         ? margin(w, test_->examples[i].features)
                         : dot(w, std::span<const double>(test_cache_).subspan(i * n, n));
    const double predicted = m > 0.0 ? 1.0 : 0.0;
    if (predicted == test_->examples[i].label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test_->size());
}

// ---------------------------------------------------------------------------

SmallMlp::SmallMlp(std::shared_ptr<const SparseDataset> train, std::size_t hidden,
                   std::shared_ptr<const SparseDataset> test)
    : hidden_(hidden) {
  if (!train || train->empty()) throw ValidationError("MLP needs a non-empty training set");
  if (hidden_ == 0) throw ValidationError("MLP hidden width must be >= 1");
  input_ = train->dimension;
  if (input_ == 0) throw ValidationError("MLP input dimension must be >= 1");
  features_ = densify(*train, input_);
  labels_ = labels_of(*train);
  if (test) {
    test_features_ = densify(*test, input_);
    test_labels_ = labels_of(*test);
  }
}

double SmallMlp::logit(std::span<const double> params, std::span<const double> features) const {
  const std::size_t d = input_;
  const std::size_t h = hidden_;
  const double* w1 = params.data();
  const double* b1 = w1 + h * d;
  const double* w2 = b1 + h;
  double z = params[h * (d + 2)];
  for (std::size_t k = 0; k < h; ++k) {
    double a = b1[k];
    for (std::size_t j = 0; j < d; ++j) a += w1[k * d + j] * features[j];
    z += w2[k] * std::tanh(a);
  }
  return z;
}

double SmallMlp::loss_and_grad(std::span<const double> params, std::span<const std::size_t> batch,
                               std::span<double> grad) const {
  check_batch(batch, labels_.size());
  const std::size_t d = input_;
  const std::size_t h = hidden_;
  const double* w1 = params.data();
  const double* b1 = w1 + h * d;
  const double* w2 = b1 + h;
  const double b2 = params[h * (d + 2)];
  double* g_w1 = grad.data();
  double* g_b1 = g_w1 + h * d;
  double* g_w2 = g_b1 + h;
  double& g_b2 = grad[h * (d + 2)];
  std::fill(grad.begin(), grad.end(), 0.0);

  std::vector<double> act(h);
  double total = 0.0;
  for (std::size_t i : batch) {
    const double* x = features_.data() + i * d;
    double z = b2;
    for (std::size_t k = 0; k < h; ++k) {
      double a = b1[k];
      for (std::size_t j = 0; j < d; ++j) a += w1[k * d + j] * x[j];
      act[k] = std::tanh(a);
      z += w2[k] * act[k];
    }
    const double y = labels_[i];
    total += logistic_loss(z, y);
    const double dz = sigmoid(z) - y;
    g_b2 += dz;
    for (std::size_t k = 0; k < h; ++k) {
      g_w2[k] += dz * act[k];
      const double da = dz * w2[k] * (1.0 - act[k] * act[k]);
      g_b1[k] += da;
      for (std::size_t j = 0; j < d; ++j) g_w1[k * d + j] += da * x[j];
    }
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (double& g : grad) g *= inv;
  return checked_loss(total * inv);
}

double SmallMlp::loss(std::span<const double> params, std::span<const std::size_t> batch) const {
  check_batch(batch, labels_.size());
  double total = 0.0;
  for (std::size_t i : batch) {
    total += logistic_loss(logit(params, std::span(features_).subspan(i * input_, input_)), labels_[i]);
  }
  return checked_loss(total / static_cast<double>(batch.size()));
}

std::optional<double> SmallMlp::test_accuracy(std::span<const double> params) const {
  if (test_labels_.empty()) return std::nullopt;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test_labels_.size(); ++i) {
    const double z = logit(params, std::span(test_features_).subspan(i * input_, input_));
    if ((z > 0.0 ? 1.0 : 0.0) == test_labels_[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test_labels_.size());
}

std::vector<double> SmallMlp::initial_params(std::uint64_t seed, double scale) const {
  Rng rng(derive_seed(seed, {0x313bULL}));
  std::vector<double> p(dimension(), 0.0);
  const std::size_t w1 = hidden_ * input_;
  for (std::size_t i = 0; i < w1; ++i) p[i] = scale * standard_normal(rng);
  for (std::size_t k = 0; k < hidden_; ++k) p[w1 + hidden_ + k] = scale * standard_normal(rng);
  return p;
}

// ---------------------------------------------------------------------------

double finite_diff_check(const Objective& objective, std::span<const double> x, double eps) {
  if (!(eps > 0.0)) throw ValidationError("finite-difference step must be positive");
  std::vector<double> analytic(objective.dimension());
  objective.full_grad(x, analytic);
  std::vector<double> probe(x.begin(), x.end());
  double worst = 0.0;
  for (std::size_t k = 0; k < probe.size(); ++k) {
    const double saved = probe[k];
    probe[k] = saved + eps;
    const double up = objective.full_loss(probe);
    probe[k] = saved - eps;
    const double down = objective.full_loss(probe);
    probe[k] = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double denom = std::max({1.0, std::abs(analytic[k]), std::abs(numeric)});
    worst = std::max(worst, std::abs(analytic[k] - numeric) / denom);
  }
  return worst;
}

double grad_norm_sq(const Objective& objective, std::span<const double> x) {
  std::vector<double> g(objective.dimension());
  objective.full_grad(x, g);
  return squared_norm(g);
}

double estimate_smoothness(const Objective& objective, std::span<const double> center, double radius,
                           std::size_t num_pairs, Rng& rng) {
  const std::size_t d = objective.dimension();
  std::vector<double> a(d), b(d), ga(d), gb(d);
  double worst = 0.0;
  for (std::size_t p = 0; p < num_pairs; ++p) {
    for (std::size_t k = 0; k < d; ++k) {
      a[k] = center[k] + radius * (2.0 * uniform01(rng) - 1.0);
      b[k] = center[k] + radius * (2.0 * uniform01(rng) - 1.0);
    }
    objective.full_grad(a, ga);
    objective.full_grad(b, gb);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      num += (ga[k] - gb[k]) * (ga[k] - gb[k]);
      den += (a[k] - b[k]) * (a[k] - b[k]);
    }
    if (den > 0.0) worst = std::max(worst, std::sqrt(num / den));
  }
  return worst;
}

double gradient_noise(const Objective& objective, std::span<const double> x, std::size_t batch_size) {
  const std::size_t n = objective.num_examples();
  if (batch_size == 0 || batch_size > n) throw ValidationError("batch size must lie in [1, n]");
  if (n == 1) return 0.0;
  const std::size_t d = objective.dimension();
  std::vector<double> full(d), gi(d);
  objective.full_grad(x, full);
  double per_sample = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t one[] = {i};
    objective.loss_and_grad(x, one, gi);
    for (std::size_t k = 0; k < d; ++k) per_sample += (gi[k] - full[k]) * (gi[k] - full[k]);
  }
  per_sample /= static_cast<double>(n);
  const double b = static_cast<double>(batch_size);
  const double nn = static_cast<double>(n);
  return per_sample * (nn - b) / (b * (nn - 1.0));
}

}  // namespace schedlab
