#include "primelens/lmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

#include <Eigen/Dense>
#include <boost/math/tools/roots.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include "primelens/error.hpp"
#include "primelens/stats.hpp"

namespace primelens {

Coefficient make_coefficient(std::string name, double beta, double std_err) {
  Coefficient c;
  c.name = std::move(name);
  c.beta = beta;
  c.std_err = std_err;
  c.z = beta / std_err;
  c.p = stats::normal_two_sided_p(c.z);
  return c;
}

const Coefficient& LmmFit::coefficient(const std::string& name) const {
  for (const auto& c : coefficients)
    if (c.name == name) return c;
  throw InvalidArgument("no coefficient named '" + name + "'");
}

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Sufficient statistics for the profiled likelihood. Data are centred
// within groups once; everything that depends on lambda then reduces to
// p x p work plus one residual pass, and no step subtracts two nearly equal
// totals when lambda is large.
class Problem {
 public:
  Problem(const MatrixXd& x, const VectorXd& y, const std::vector<std::size_t>& group_of,
          std::size_t n_groups)
      : n_(static_cast<double>(x.rows())), p_(static_cast<double>(x.cols())) {
    const Eigen::Index p = x.cols();
    sizes_ = VectorXd::Zero(static_cast<Eigen::Index>(n_groups));
    s_ = MatrixXd::Zero(p, static_cast<Eigen::Index>(n_groups));
    t_ = VectorXd::Zero(static_cast<Eigen::Index>(n_groups));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const auto g = static_cast<Eigen::Index>(group_of[static_cast<std::size_t>(i)]);
      sizes_(g) += 1.0;
      s_.col(g) += x.row(i).transpose();
      t_(g) += y(i);
    }
    xc_ = x;
    yc_ = y;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const auto g = static_cast<Eigen::Index>(group_of[static_cast<std::size_t>(i)]);
      xc_.row(i) -= s_.col(g).transpose() / sizes_(g);
      yc_(i) -= t_(g) / sizes_(g);
    }
    w_ = xc_.transpose() * xc_;
    wy_ = xc_.transpose() * yc_;
  }

  struct Eval {
    double ratio = 0.0;
    VectorXd beta;
    MatrixXd a_inv;
    double q = 0.0;
    double log_det_a = 0.0;
    double sum_log_h = 0.0;
    double loglik = 0.0;     // profiled over sigma^2
    double gradient = 0.0;   // d loglik / d ratio
  };

  double dof() const { return n_ - p_; }

  Eval evaluate(double ratio) const {
    Eval e;
    e.ratio = ratio;
    const VectorXd h = (ratio * sizes_).array() + 1.0;     // 1 + lambda n_g
    const VectorXd d = (sizes_.array() * h.array()).inverse();  // 1 / (n_g h_g)
    MatrixXd a = w_ + s_ * d.asDiagonal() * s_.transpose();
    VectorXd b = wy_ + s_ * (d.array() * t_.array()).matrix();
    Eigen::LDLT<MatrixXd> ldlt(a);
    e.beta = ldlt.solve(b);
    e.a_inv = ldlt.solve(MatrixXd::Identity(a.rows(), a.cols()));
    e.log_det_a = ldlt.vectorD().array().log().sum();

    const VectorXd u = t_ - s_.transpose() * e.beta;
    const double within = (yc_ - xc_ * e.beta).squaredNorm();
    e.q = within + (u.array().square() * d.array()).sum();
    e.sum_log_h = h.array().log().sum();
    const double s2 = e.q / dof();
    e.loglik = -0.5 * (dof() * (1.0 + std::log(2.0 * std::numbers::pi * s2)) + e.sum_log_h +
                       e.log_det_a);

    const VectorXd h2 = h.array().square();
    const double dq = (u.array().square() / h2.array()).sum();
    const double dlogh = (sizes_.array() / h.array()).sum();
    const VectorXd lev = (s_.transpose() * e.a_inv * s_).diagonal();
    const double dloga = (lev.array() / h2.array()).sum();
    e.gradient = -0.5 * (-dof() * dq / e.q + dlogh - dloga);
    return e;
  }

  // Unprofiled criterion at (s2, s2_group).
  double loglik_at(double s2, double s2_group) const {
    const Eval e = evaluate(s2_group / s2);
    return -0.5 * (dof() * std::log(2.0 * std::numbers::pi) + dof() * std::log(s2) + e.sum_log_h +
                   e.log_det_a + e.q / s2);
  }

 private:
  double n_;
  double p_;
  VectorXd sizes_;
  MatrixXd s_;  // column g: sum of X rows in group g
  VectorXd t_;  // sum of y in group g
  MatrixXd xc_;
  VectorXd yc_;
  MatrixXd w_;
  VectorXd wy_;
};

struct Prepared {
  MatrixXd x;
  VectorXd y;
  std::vector<std::size_t> group_of;
  std::vector<std::size_t> group_sizes;
};

Prepared prepare(std::span<const std::vector<double>> columns, std::span<const double> y,
                 std::span<const std::string> groups) {
  const std::size_t n = y.size();
  if (groups.size() != n) throw InvalidArgument("groups and response differ in length");
  for (const auto& c : columns)
    if (c.size() != n) throw InvalidArgument("design column length differs from response");
  Prepared out;
  out.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(columns.size() + 1));
  out.y.resize(static_cast<Eigen::Index>(n));
  std::map<std::string, std::size_t> index;
  for (const auto& g : groups) index.emplace(g, 0);
  std::size_t k = 0;
  for (auto& [label, i] : index) i = k++;
  out.group_sizes.assign(index.size(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out.x(r, 0) = 1.0;
    for (std::size_t j = 0; j < columns.size(); ++j)
      out.x(r, static_cast<Eigen::Index>(j + 1)) = columns[j][i];
    out.y(r) = y[i];
    if (!std::isfinite(y[i])) throw InvalidArgument("non-finite response at row " + std::to_string(i));
    const std::size_t g = index.at(groups[i]);
    out.group_of.push_back(g);
    ++out.group_sizes[g];
  }
  if (!out.x.allFinite()) throw InvalidArgument("non-finite value in design matrix");
  return out;
}

void check_rank(const MatrixXd& x, std::span<const std::string> names) {
  constexpr double kThreshold = 1e-9;
  std::vector<std::string> aliased;
  std::vector<Eigen::Index> kept;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    kept.push_back(j);
    MatrixXd sub(x.rows(), static_cast<Eigen::Index>(kept.size()));
    for (std::size_t k = 0; k < kept.size(); ++k) sub.col(static_cast<Eigen::Index>(k)) = x.col(kept[k]);
    Eigen::ColPivHouseholderQR<MatrixXd> qr(sub);
    qr.setThreshold(kThreshold);
    if (qr.rank() < static_cast<Eigen::Index>(kept.size())) {
      kept.pop_back();
      aliased.push_back(j == 0 ? std::string("Intercept") : names[static_cast<std::size_t>(j - 1)]);
    }
  }
  if (!aliased.empty()) {
    std::string list;
    for (const auto& a : aliased) list += (list.empty() ? "" : ", ") + a;
    throw RankDeficiency(aliased, "design matrix is rank deficient; aliased columns: " + list);
  }
}

// Largest profiled log-likelihood over [0, max_ratio]. Interior optima are
// roots of the gradient, bracketed on a log grid and refined with TOMS 748.
Problem::Eval search(const Problem& problem, double max_ratio, bool& interior) {
  std::vector<double> grid{0.0};
  for (double e = -8.0; e <= 8.0 + 1e-9; e += 0.5) {
    const double r = std::pow(10.0, e);
    if (r < max_ratio) grid.push_back(r);
  }
  grid.push_back(max_ratio);

  std::vector<Problem::Eval> evals;
  evals.reserve(grid.size());
  for (double r : grid) evals.push_back(problem.evaluate(r));

  Problem::Eval best = evals.front();
  interior = false;
  if (evals.back().loglik > best.loglik) best = evals.back();

  auto gradient = [&](double r) { return problem.evaluate(r).gradient; };
  for (std::size_t i = 0; i + 1 < evals.size(); ++i) {
    const double ga = evals[i].gradient;
    const double gb = evals[i + 1].gradient;
    if (!(ga > 0.0 && gb <= 0.0)) continue;
    double root = evals[i + 1].ratio;
    if (gb < 0.0) {
      std::uintmax_t max_iter = 200;
      auto [lo, hi] = boost::math::tools::toms748_solve(gradient, evals[i].ratio, evals[i + 1].ratio,
                                                        ga, gb,
                                                        boost::math::tools::eps_tolerance<double>(52),
                                                        max_iter);
      root = 0.5 * (lo + hi);
    }
    Problem::Eval e = problem.evaluate(root);
    if (e.loglik > best.loglik) {
      best = std::move(e);
      interior = true;
    }
  }
  return best;
}

}  // namespace

double profiled_reml_loglik(std::span<const std::vector<double>> columns, std::span<const double> y,
                            std::span<const std::string> groups, double ratio) {
  auto prep = prepare(columns, y, groups);
  Problem problem(prep.x, prep.y, prep.group_of, prep.group_sizes.size());
  return problem.evaluate(ratio).loglik;
}

double reml_loglik(std::span<const std::vector<double>> columns, std::span<const double> y,
                   std::span<const std::string> groups, double s2, double s2_group) {
  auto prep = prepare(columns, y, groups);
  Problem problem(prep.x, prep.y, prep.group_of, prep.group_sizes.size());
  return problem.loglik_at(s2, s2_group);
}

LmmFit fit_random_intercept(std::span<const std::vector<double>> columns,
                            std::span<const std::string> names, std::span<const double> y,
                            std::span<const std::string> groups, std::string dependent_variable,
                            const LmmOptions& options) {
  if (names.size() != columns.size()) throw InvalidArgument("one name per design column required");
  auto prep = prepare(columns, y, groups);
  const std::size_t n = y.size();
  const std::size_t p = columns.size() + 1;
  if (prep.group_sizes.size() < 2) throw InvalidArgument("at least two groups are required");
  if (n <= p) {
    throw InvalidArgument("need more rows (" + std::to_string(n) + ") than fixed effects (" +
                          std::to_string(p) + ")");
  }
  check_rank(prep.x, names);
  {
    const VectorXd resid = prep.y - prep.x * prep.x.householderQr().solve(prep.y);
    if (resid.squaredNorm() <= 1e-24 * std::max(1.0, prep.y.squaredNorm())) {
      throw InvalidArgument("the fixed effects reproduce the response exactly; variances are undefined");
    }
  }

  Problem problem(prep.x, prep.y, prep.group_of, prep.group_sizes.size());
  LmmFit fit;
  fit.dependent_variable = std::move(dependent_variable);
  Problem::Eval best;
  if (options.fixed_ratio) {
    if (!(*options.fixed_ratio >= 0.0)) throw InvalidArgument("fixed variance ratio must be >= 0");
    best = problem.evaluate(*options.fixed_ratio);
    fit.converged = true;
  } else {
    bool interior = false;
    best = search(problem, options.max_ratio, interior);
    if (interior) {
      const double step = std::max(best.ratio * 1e-7, 1e-300);
      const double lo = problem.evaluate(std::max(0.0, best.ratio - step)).loglik;
      const double hi = problem.evaluate(best.ratio + step).loglik;
      fit.converged = std::abs(lo - best.loglik) < 1e-10 && std::abs(hi - best.loglik) < 1e-10;
    }
  }

  const double s2 = best.q / problem.dof();
  fit.sigma2_residual = s2;
  fit.variance_ratio = best.ratio;
  fit.sigma2_group = best.ratio * s2;
  fit.loglik_reml = best.loglik;

  const MatrixXd cov = s2 * best.a_inv;
  for (std::size_t j = 0; j < p; ++j) {
    const auto k = static_cast<Eigen::Index>(j);
    fit.coefficients.push_back(make_coefficient(j == 0 ? std::string("Intercept") : names[j - 1],
                                                best.beta(k), std::sqrt(cov(k, k))));
  }

  if (fit.converged && best.ratio > 0.0 && !options.fixed_ratio) {
    // Observed information of the unprofiled criterion by central differences.
    const double v0 = s2;
    const double v1 = fit.sigma2_group;
    const double h0 = 1e-4 * v0;
    const double h1 = 1e-4 * v1;
    auto f = [&](double a, double b) { return problem.loglik_at(a, b); };
    const double f00 = f(v0, v1);
    const double d00 = (f(v0 + h0, v1) - 2.0 * f00 + f(v0 - h0, v1)) / (h0 * h0);
    const double d11 = (f(v0, v1 + h1) - 2.0 * f00 + f(v0, v1 - h1)) / (h1 * h1);
    const double d01 = (f(v0 + h0, v1 + h1) - f(v0 + h0, v1 - h1) - f(v0 - h0, v1 + h1) +
                        f(v0 - h0, v1 - h1)) /
                       (4.0 * h0 * h1);
    const double det = d00 * d11 - d01 * d01;
    const double var = -d00 / det;
    fit.sigma2_group_se = var > 0.0 ? std::sqrt(var) : std::numeric_limits<double>::quiet_NaN();
  } else {
    fit.sigma2_group_se = std::numeric_limits<double>::quiet_NaN();
  }

  const VectorXd fitted = prep.x * best.beta;
  std::vector<double> fv(fitted.data(), fitted.data() + fitted.size());
  const double var_fixed = stats::sample_variance(fv);
  fit.r2_marginal = var_fixed / (var_fixed + fit.sigma2_group + fit.sigma2_residual);

  fit.n_obs = n;
  fit.n_groups = prep.group_sizes.size();
  fit.min_group_size = *std::min_element(prep.group_sizes.begin(), prep.group_sizes.end());
  fit.max_group_size = *std::max_element(prep.group_sizes.begin(), prep.group_sizes.end());
  fit.mean_group_size = static_cast<double>(n) / static_cast<double>(fit.n_groups);
  return fit;
}

}  // namespace primelens
