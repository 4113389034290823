#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "schedlab/data.hpp"
#include "schedlab/rng.hpp"

namespace schedlab {

/// Finite-sum objective f(x) = (1/n) sum_i f_i(x).
///
/// Batch methods return the mean over the batch, so passing every index
/// reproduces the full objective exactly. Implementations are immutable
/// after construction and safe to share between concurrent runs.
class Objective {
 public:
  virtual ~Objective() = default;

  virtual std::size_t dimension() const = 0;
  virtual std::size_t num_examples() const = 0;

  /// Mean loss over `batch`; writes the mean gradient into `grad`
  /// (size dimension()).
  virtual double loss_and_grad(std::span<const double> x, std::span<const std::size_t> batch,
                               std::span<double> grad) const = 0;
  virtual double loss(std::span<const double> x, std::span<const std::size_t> batch) const;

  double full_loss(std::span<const double> x) const;
  double full_grad(std::span<const double> x, std::span<double> grad) const;

  /// Held-out accuracy for classifiers with a test set.
  virtual std::optional<double> test_accuracy(std::span<const double>) const { return std::nullopt; }

  /// Gradient Lipschitz constant when known analytically.
  virtual std::optional<double> smoothness() const { return std::nullopt; }

  /// 0..n-1, the whole-dataset batch.
  std::vector<std::size_t> all_indices() const;
};

/// f_i(x) = 1/2 sum_k a_k (x_k - c_ik)^2. The default is f(x) = |x|^2 / 2.
class QuadraticObjective final : public Objective {
 public:
  explicit QuadraticObjective(std::size_t dim);
  QuadraticObjective(std::vector<std::vector<double>> centers, std::vector<double> curvature);

  std::size_t dimension() const override { return curvature_.size(); }
  std::size_t num_examples() const override { return centers_.size(); }
  double loss_and_grad(std::span<const double> x, std::span<const std::size_t> batch,
                       std::span<double> grad) const override;
  std::optional<double> smoothness() const override;

 private:
  std::vector<std::vector<double>> centers_;
  std::vector<double> curvature_;
};

/// exp(-|x - y|^2 / (2 sigma^2)), distance taken over the union of indices.
double rbf_kernel(std::span<const Feature> x, std::span<const Feature> y, double sigma);
double squared_distance(std::span<const Feature> x, std::span<const Feature> y);

/// softplus(z) = log(1 + e^z) without overflow.
double softplus(double z);
double sigmoid(double z);

/// Unregularized kernel logistic regression over dual weights.
///
/// The margin of training example i is m_i = sum_j w_j K(x_j, x_i) with
/// labels in {0, 1}; the loss is the binary cross-entropy of sigmoid(m_i).
/// When n_train^2 (and then n_test * n_train) doubles fit in
/// `cache_budget_bytes` the kernel matrix is computed once in the
/// constructor; otherwise rows are recomputed on demand.
class KernelClassifier final : public Objective {
 public:
  KernelClassifier(std::shared_ptr<const SparseDataset> train, double bandwidth,
                   std::shared_ptr<const SparseDataset> test = nullptr,
                   std::size_t cache_budget_bytes = std::size_t{1} << 30);

  std::size_t dimension() const override { return train_->size(); }
  std::size_t num_examples() const override { return train_->size(); }
  double loss_and_grad(std::span<const double> w, std::span<const std::size_t> batch,
                       std::span<double> grad) const override;
  double loss(std::span<const double> w, std::span<const std::size_t> batch) const override;
  std::optional<double> test_accuracy(std::span<const double> w) const override;

  double bandwidth() const { return bandwidth_; }
  const SparseDataset& train() const { return *train_; }
  bool train_cached() const { return !train_cache_.empty(); }
  bool test_cached() const { return !test_cache_.empty(); }

  /// Margin sum_j w_j K(x_j, x) for an arbitrary point.
  double margin(std::span<const double> w, std::span<const Feature> x) const;

 private:
  void train_row(std::size_t i, std::span<double> out) const;
  std::span<const double> row(std::size_t i, std::vector<double>& scratch) const;

  std::shared_ptr<const SparseDataset> train_;
  std::shared_ptr<const SparseDataset> test_;
  double bandwidth_;
  std::vector<double> train_cache_;  // row-major n_train x n_train
  std::vector<double> test_cache_;   // row-major n_test x n_train
};

/// Fully connected d -> hidden -> 1 network with tanh hidden units and a
/// logistic output, trained with binary cross-entropy.
///
/// Parameter layout: W1 (hidden x d, row-major), b1 (hidden), w2 (hidden), b2.
class SmallMlp final : public Objective {
 public:
  SmallMlp(std::shared_ptr<const SparseDataset> train, std::size_t hidden = 16,
           std::shared_ptr<const SparseDataset> test = nullptr);

  std::size_t dimension() const override { return hidden_ * (input_ + 2) + 1; }
  std::size_t num_examples() const override { return labels_.size(); }
  double loss_and_grad(std::span<const double> params, std::span<const std::size_t> batch,
                       std::span<double> grad) const override;
  double loss(std::span<const double> params, std::span<const std::size_t> batch) const override;
  std::optional<double> test_accuracy(std::span<const double> params) const override;

  std::size_t input_dim() const { return input_; }
  std::size_t hidden() const { return hidden_; }

  /// Gaussian N(0, scale^2) weights, zero biases.
  std::vector<double> initial_params(std::uint64_t seed, double scale = 0.1) const;

  /// Output logit for one dense input row.
  double logit(std::span<const double> params, std::span<const double> features) const;

 private:
  std::size_t input_;
  std::size_t hidden_;
  std::vector<double> features_;  // row-major n x input
  std::vector<double> labels_;
  std::vector<double> test_features_;
  std::vector<double> test_labels_;
};

/// Max over coordinates of |analytic - numeric| / max(1, |analytic|, |numeric|),
/// with central differences of the full loss at step eps.
double finite_diff_check(const Objective& objective, std::span<const double> x, double eps = 1e-5);

/// |grad f(x)|^2 of the full objective.
double grad_norm_sq(const Objective& objective, std::span<const double> x);

/// Max of |grad f(a) - grad f(b)| / |a - b| over random pairs drawn uniformly
/// from the box center +- radius.
double estimate_smoothness(const Objective& objective, std::span<const double> center, double radius,
                           std::size_t num_pairs, Rng& rng);

/// Exact E|g_B - grad f(x)|^2 for a uniformly drawn batch of size b without
/// replacement, from the per-example gradients.
double gradient_noise(const Objective& objective, std::span<const double> x, std::size_t batch_size = 1);

}  // namespace schedlab
