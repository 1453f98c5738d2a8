#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "pdmis/random.hpp"

namespace pdmis {

/// Element of the sample space R^n.
using Point = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Numerically stable log(sum(exp(v))). Returns -inf for an empty span or
/// when every entry is -inf. Summation runs in span order.
double log_sum_exp(std::span<const double> values);

/// Multivariate normal N(mean, cov). The Cholesky factor and the log
/// normalizer are computed once at construction.
class Gaussian {
 public:
  /// Throws DimensionMismatch for a non-square or wrongly sized covariance,
  /// NotPositiveDefinite when the factorization fails. Covariances that are
  /// symmetric to within 1e-12 of their largest entry are symmetrized;
  /// anything less symmetric is rejected as not positive definite.
  Gaussian(Point mean, Matrix cov);

  std::size_t dim() const { return static_cast<std::size_t>(mean_.size()); }
  const Point& mean() const { return mean_; }
  const Matrix& cov() const { return cov_; }
  /// Lower triangular L with L L^T = cov.
  const Matrix& chol() const { return chol_; }
  /// -(n/2) log(2 pi) - sum(log(diag(L))).
  double log_norm() const { return log_norm_; }

  double logpdf(const Point& x) const;

  /// logpdf without the dimension check; `x` must point at dim() values.
  double logpdf_unchecked(const double* x) const;

  /// mean + L z, z ~ N(0, I). Consumes exactly dim() normals from `rng`.
  Point sample(RandomStream& rng) const;

 private:
  Point mean_;
  Matrix cov_;
  Matrix chol_;
  Eigen::VectorXd inv_diag_;
  double log_norm_ = 0.0;
};

/// Equal-weight mixture (1/M) sum_j q_j(x).
class Mixture {
 public:
  /// Throws InvalidSize when empty, DimensionMismatch when components disagree.
  explicit Mixture(std::vector<Gaussian> components);

  std::size_t size() const { return components_.size(); }
  std::size_t dim() const { return components_.front().dim(); }
  const std::vector<Gaussian>& components() const { return components_; }

  double logpdf(const Point& x) const;

  /// Classical procedure: pick a component uniformly, then sample it.
  std::vector<Point> sample_random(std::size_t count, RandomStream& rng) const;

  /// One draw from every component, in component order. The returned set is
  /// jointly distributed as the mixture.
  std::vector<Point> sample_deterministic(RandomStream& rng) const;

  /// Exact mixture mean.
  Point mean() const;
  /// Exact mixture covariance.
  Matrix covariance() const;

 private:
  std::vector<Gaussian> components_;
};

/// Unnormalized target log-density pi(x) with an evaluation counter.
///
/// Evaluation is const and may be called from several threads at once as
/// long as the wrapped function is itself thread safe; the counter is atomic.
class TargetDensity {
 public:
  using LogDensityFn = std::function<double(const Point&)>;

  TargetDensity(std::size_t dim, LogDensityFn log_density);
  TargetDensity(TargetDensity&& other) noexcept;
  TargetDensity(const TargetDensity&) = delete;
  TargetDensity& operator=(const TargetDensity&) = delete;

  /// Target whose density is exactly the given (normalized) mixture.
  static TargetDensity from_mixture(Mixture mixture);
  static TargetDensity from_gaussian(Gaussian g);

  std::size_t dim() const { return dim_; }

  /// log pi(x). Throws DimensionMismatch, or NonFiniteDensity when the
  /// wrapped function returns NaN or +inf. -inf is a valid result.
  double logpdf(const Point& x) const;

  std::uint64_t eval_count() const { return count_.load(std::memory_order_relaxed); }
  void reset_count() { count_.store(0, std::memory_order_relaxed); }

 private:
  std::size_t dim_;
  LogDensityFn log_density_;
  mutable std::atomic<std::uint64_t> count_{0};
};

/// The five-component bivariate Gaussian mixture used as the benchmark target.
Mixture reference_mixture();

/// Analytic mean of reference_mixture(): (1.6, 1.4).
Point reference_mean();

}  // namespace pdmis
