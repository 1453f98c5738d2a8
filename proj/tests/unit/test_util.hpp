#pragma once

#include <vector>

#include "oracles.hpp"
#include "pdmis/density.hpp"

namespace testutil {

inline pdmis::Point point(std::initializer_list<double> v) {
  pdmis::Point p(static_cast<Eigen::Index>(v.size()));
  Eigen::Index k = 0;
  for (double x : v) p[k++] = x;
  return p;
}

inline std::vector<double> to_std(const pdmis::Point& p) {
  return std::vector<double>(p.data(), p.data() + p.size());
}

inline pdmis::Gaussian to_gaussian(const oracle::Gauss& g) {
  const auto n = static_cast<Eigen::Index>(g.mean.size());
  pdmis::Point mean(n);
  pdmis::Matrix cov(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    mean[r] = g.mean[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < n; ++c) cov(r, c) = g.cov[static_cast<std::size_t>(r * n + c)];
  }
  return pdmis::Gaussian(mean, cov);
}

/// Random SPD Gaussian in 1 or 2 dimensions.
inline oracle::Gauss random_gauss(pdmis::RandomStream& rng, std::size_t dim) {
  oracle::Gauss g;
  for (std::size_t d = 0; d < dim; ++d) g.mean.push_back(rng.uniform(-5.0, 5.0));
  if (dim == 1) {
    g.cov = {rng.uniform(0.3, 4.0)};
  } else {
    const double a = rng.uniform(0.3, 4.0), c = rng.uniform(0.3, 4.0);
    const double rho = rng.uniform(-0.8, 0.8);
    const double b = rho * std::sqrt(a * c);
    g.cov = {a, b, b, c};
  }
  return g;
}

inline double rel_err(long double got, long double want) {
  if (want == 0.0L) return static_cast<double>(std::fabs(got));
  return static_cast<double>(std::fabs((got - want) / want));
}

}  // namespace testutil
