#include "pdmis/density.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <Eigen/Cholesky>

#include "pdmis/errors.hpp"

namespace pdmis {

namespace {

constexpr double kSymmetryTol = 1e-12;
constexpr std::size_t kStackDim = 16;

std::string dim_message(const char* what, std::size_t expected, std::size_t got) {
  return std::string(what) + ": expected dimension " + std::to_string(expected) + ", got " +
         std::to_string(got);
}

}  // namespace

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double hi = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(hi)) return hi;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - hi);
  return hi + std::log(acc);
}

// --- Gaussian ---------------------------------------------------------------

Gaussian::Gaussian(Point mean, Matrix cov) : mean_(std::move(mean)), cov_(std::move(cov)) {
  const auto n = mean_.size();
  if (n < 1) throw DimensionMismatch("Gaussian: mean must have at least one entry");
  if (cov_.rows() != n || cov_.cols() != n) {
    throw DimensionMismatch("Gaussian: covariance must be " + std::to_string(n) + "x" +
                            std::to_string(n));
  }
  if (!mean_.allFinite() || !cov_.allFinite()) {
    throw NotPositiveDefinite("Gaussian: non-finite mean or covariance entry");
  }
  const double scale = cov_.cwiseAbs().maxCoeff();
  if ((cov_ - cov_.transpose()).cwiseAbs().maxCoeff() > kSymmetryTol * scale) {
    throw NotPositiveDefinite("Gaussian: covariance is not symmetric");
  }
  cov_ = (0.5 * (cov_ + cov_.transpose())).eval();

  Eigen::LLT<Matrix> llt(cov_);
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefinite("Gaussian: covariance is not positive definite");
  }
  chol_ = llt.matrixL();
  const Eigen::VectorXd diag = chol_.diagonal();
  if (!(diag.array() > 0.0).all() || !diag.allFinite()) {
    throw NotPositiveDefinite("Gaussian: Cholesky factor has a non-positive pivot");
  }
  inv_diag_ = diag.cwiseInverse();
  log_norm_ = -0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi) -
              diag.array().log().sum();
}

double Gaussian::logpdf(const Point& x) const {
  if (static_cast<std::size_t>(x.size()) != dim()) {
    throw DimensionMismatch(dim_message("Gaussian::logpdf", dim(), x.size()));
  }
  return logpdf_unchecked(x.data());
}

double Gaussian::logpdf_unchecked(const double* x) const {
  const std::size_t n = dim();
  const double* mu = mean_.data();
  const double* L = chol_.data();  // column major
  const double* inv = inv_diag_.data();

  // Forward substitution L z = x - mu, accumulating |z|^2.
  auto solve = [&](double* z) {
    double quad = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      double r = x[k] - mu[k];
      for (std::size_t l = 0; l < k; ++l) r -= L[l * n + k] * z[l];
      z[k] = r * inv[k];
      quad += z[k] * z[k];
    }
    return quad;
  };

  double quad;
  if (n <= kStackDim) {
    std::array<double, kStackDim> z;
    quad = solve(z.data());
  } else {
    std::vector<double> z(n);
    quad = solve(z.data());
  }
  return log_norm_ - 0.5 * quad;
}

Point Gaussian::sample(RandomStream& rng) const {
  Eigen::VectorXd z(dim());
  for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = rng.normal();
  return mean_ + chol_.triangularView<Eigen::Lower>() * z;
}

// --- Mixture ----------------------------------------------------------------

Mixture::Mixture(std::vector<Gaussian> components) : components_(std::move(components)) {
  if (components_.empty()) throw InvalidSize("Mixture: needs at least one component");
  const std::size_t n = components_.front().dim();
  for (const auto& g : components_) {
    if (g.dim() != n) throw DimensionMismatch(dim_message("Mixture", n, g.dim()));
  }
}

double Mixture::logpdf(const Point& x) const {
  if (static_cast<std::size_t>(x.size()) != dim()) {
    throw DimensionMismatch(dim_message("Mixture::logpdf", dim(), x.size()));
  }
  std::vector<double> terms(components_.size());
  for (std::size_t j = 0; j < components_.size(); ++j) {
    terms[j] = components_[j].logpdf_unchecked(x.data());
  }
  return log_sum_exp(terms) - std::log(static_cast<double>(components_.size()));
}

std::vector<Point> Mixture::sample_random(std::size_t count, RandomStream& rng) const {
  std::vector<Point> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t j = rng.index(components_.size());
    out.push_back(components_[j].sample(rng));
  }
  return out;
}

std::vector<Point> Mixture::sample_deterministic(RandomStream& rng) const {
  std::vector<Point> out;
  out.reserve(components_.size());
  for (const auto& g : components_) out.push_back(g.sample(rng));
  return out;
}

Point Mixture::mean() const {
  Point m = Point::Zero(static_cast<Eigen::Index>(dim()));
  for (const auto& g : components_) m += g.mean();
  return m / static_cast<double>(components_.size());
}

Matrix Mixture::covariance() const {
  const Point m = mean();
  Matrix c = Matrix::Zero(m.size(), m.size());
  for (const auto& g : components_) {
    const Point d = g.mean() - m;
    c += g.cov() + d * d.transpose();
  }
  return c / static_cast<double>(components_.size());
}

// --- TargetDensity ----------------------------------------------------------

TargetDensity::TargetDensity(std::size_t dim, LogDensityFn log_density)
    : dim_(dim), log_density_(std::move(log_density)) {
  if (dim_ < 1) throw InvalidSize("TargetDensity: dimension must be >= 1");
  if (!log_density_) throw InvalidSize("TargetDensity: empty log-density function");
}

TargetDensity::TargetDensity(TargetDensity&& other) noexcept
    : dim_(other.dim_),
      log_density_(std::move(other.log_density_)),
      count_(other.count_.load(std::memory_order_relaxed)) {}

TargetDensity TargetDensity::from_mixture(Mixture mixture) {
  const std::size_t n = mixture.dim();
  return TargetDensity(n, [m = std::move(mixture)](const Point& x) { return m.logpdf(x); });
}

TargetDensity TargetDensity::from_gaussian(Gaussian g) {
  const std::size_t n = g.dim();
  return TargetDensity(n, [g = std::move(g)](const Point& x) { return g.logpdf(x); });
}

double TargetDensity::logpdf(const Point& x) const {
  if (static_cast<std::size_t>(x.size()) != dim_) {
    throw DimensionMismatch(dim_message("TargetDensity::logpdf", dim_, x.size()));
  }
  count_.fetch_add(1, std::memory_order_relaxed);
  const double v = log_density_(x);
  if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
    throw NonFiniteDensity("TargetDensity::logpdf: log-density returned NaN or +inf");
  }
  return v;
}

// --- reference target -------------------------------------------------------

Mixture reference_mixture() {
  auto make = [](double m0, double m1, double s00, double s01, double s11) {
    Point mean(2);
    mean << m0, m1;
    Matrix cov(2, 2);
    cov << s00, s01, s01, s11;
    return Gaussian(std::move(mean), std::move(cov));
  };
  std::vector<Gaussian> comps;
  comps.push_back(make(-10, -10, 2, 0.6, 1));
  comps.push_back(make(0, 16, 2, -0.4, 2));
  comps.push_back(make(13, 8, 2, 0.8, 2));
  comps.push_back(make(-9, 7, 3, 0, 0.5));
  comps.push_back(make(14, -14, 2, -0.1, 2));
  return Mixture(std::move(comps));
}

Point reference_mean() {
  Point m(2);
  m << 1.6, 1.4;
  return m;
}

}  // namespace pdmis
