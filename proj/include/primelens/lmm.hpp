#pragma once

// Random-intercept linear mixed model fitted by restricted maximum
// likelihood.
//
//   y = X b + Z u + e,   u ~ N(0, s2_group I),   e ~ N(0, s2 I)
//
// where Z indicates group membership. For a fixed variance ratio
// lambda = s2_group / s2, the fixed effects and s2 have closed forms
// (generalized least squares), which leaves a one-dimensional search over
// lambda. The search finds the root of the analytic derivative of the
// profiled REML log-likelihood, so the optimum is located to machine
// precision rather than to a log-likelihood tolerance.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace primelens {

struct Coefficient {
  std::string name;
  double beta = 0.0;
  double std_err = 0.0;
  double z = 0.0;
  double p = 1.0;
};

// Fills z = beta / std_err and the two-sided normal p-value.
Coefficient make_coefficient(std::string name, double beta, double std_err);

struct LmmFit {
  std::string dependent_variable;
  std::vector<Coefficient> coefficients;  // intercept first
  double sigma2_residual = 0.0;           // "scale"
  double sigma2_group = 0.0;
  double sigma2_group_se = 0.0;           // NaN on the boundary
  double variance_ratio = 0.0;            // sigma2_group / sigma2_residual
  double loglik_reml = 0.0;
  double r2_marginal = 0.0;
  bool converged = false;
  std::size_t n_obs = 0;
  std::size_t n_groups = 0;
  std::size_t min_group_size = 0;
  std::size_t max_group_size = 0;
  double mean_group_size = 0.0;

  const Coefficient& coefficient(const std::string& name) const;
};

struct LmmOptions {
  // Fit at this variance ratio instead of searching.
  std::optional<double> fixed_ratio;
  double max_ratio = 1e8;
};

// Fits y on an intercept plus `columns` (column-major, each of length n)
// with a random intercept per distinct `groups` label. Throws
// InvalidArgument for fewer than two groups or too few rows, and
// RankDeficiency naming the aliased columns.
LmmFit fit_random_intercept(std::span<const std::vector<double>> columns,
                            std::span<const std::string> names, std::span<const double> y,
                            std::span<const std::string> groups, std::string dependent_variable,
                            const LmmOptions& options = {});

// REML log-likelihood at an arbitrary (s2, s2_group), for diagnostics and
// tests of optimality.
double reml_loglik(std::span<const std::vector<double>> columns, std::span<const double> y,
                   std::span<const std::string> groups, double s2, double s2_group);

// Profiled REML log-likelihood as a function of the variance ratio.
double profiled_reml_loglik(std::span<const std::vector<double>> columns, std::span<const double> y,
                            std::span<const std::string> groups, double ratio);

}  // namespace primelens
