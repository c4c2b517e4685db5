#pragma once

#include <cstddef>
#include <vector>

namespace drm {

/// Standard normal density.
double normal_pdf(double x);

/// Standard normal CDF, accurate over the full double range.
double normal_cdf(double x);

/// Inverse standard normal CDF (Wichura's AS 241, double precision).
/// Throws std::domain_error for p outside (0,1).
double normal_quantile(double p);

/// Least-squares slope of y against x.
double ols_slope(const std::vector<double>& x, const std::vector<double>& y);

/// Order statistic at 1-based index ceil(z*n) of a copy of `values`.
double empirical_quantile(std::vector<double> values, double z);

}  // namespace drm
