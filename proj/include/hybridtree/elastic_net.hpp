#pragma once

// Least squares with none / ridge / LASSO / elastic-net penalties. The
// penalized problem
//
//   (1/2n) ||y - b0 - X b||^2 + lambda [ (1-alpha)/2 ||b||^2 + alpha ||b||_1 ]
//
// is solved by cyclic coordinate descent on columns standardized to mean 0 and
// sum of squares 1. The intercept is never penalized.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hybridtree/dataframe.hpp"
#include "hybridtree/detail/folds.hpp"
#include "hybridtree/errors.hpp"
#include "hybridtree/log.hpp"

namespace hybridtree::enet {

// argmin_b (b - t)^2 + lambda |b|  =  (|t| - lambda/2)^+ sgn(t)
inline double soft_threshold(double t, double lambda) {
  const double half = lambda / 2.0;
  if (t > 0.0 && half < t) return t - half;
  if (t < 0.0 && half < -t) return t + half;
  return 0.0;
}

struct PenaltySpec {
  double alpha = 1.0;                 // 1 = LASSO, 0 = ridge
  std::optional<double> lambda;       // nullopt = choose lambda.min by cross-validation

  bool operator==(const PenaltySpec&) const = default;
};

inline void validate(const PenaltySpec& p) {
  if (!(p.alpha >= 0.0 && p.alpha <= 1.0)) throw ValidationError("elastic net alpha must lie in [0, 1]");
  if (p.lambda && !(*p.lambda >= 0.0 && std::isfinite(*p.lambda)))
    throw ValidationError("elastic net lambda must be finite and >= 0");
}

enum class FitMethod { kOls, kRidge, kElasticNet };

inline const char* to_string(FitMethod m) {
  switch (m) {
    case FitMethod::kOls: return "ols";
    case FitMethod::kRidge: return "ridge";
    case FitMethod::kElasticNet: return "elastic_net";
  }
  return "unknown";
}

inline FitMethod fit_method_from_string(const std::string& s) {
  if (s == "ols") return FitMethod::kOls;
  if (s == "ridge") return FitMethod::kRidge;
  if (s == "elastic_net") return FitMethod::kElasticNet;
  throw ValidationError("unknown fit method '" + s + "'");
}

// Coefficients are on the original feature scale. The standardized-space
// solution is kept alongside so either form can produce predictions.
struct LinearFit {
  FitMethod method = FitMethod::kOls;
  double intercept = 0.0;
  Eigen::VectorXd coefficients;
  std::vector<double> center;  // per feature
  std::vector<double> scale;   // per feature; 1 for columns left out of the fit
  std::vector<bool> active;    // false for columns excluded (constant in the sample)
  double standardized_intercept = 0.0;
  Eigen::VectorXd standardized_coefficients;
  PenaltySpec penalty;
  bool converged = true;
  int iterations = 0;

  double predict(std::span<const double> row) const {
    double v = intercept;
    for (Eigen::Index j = 0; j < coefficients.size(); ++j) v += coefficients[j] * row[static_cast<std::size_t>(j)];
    return v;
  }

  double predict_standardized(std::span<const double> row) const {
    double v = standardized_intercept;
    for (Eigen::Index j = 0; j < standardized_coefficients.size(); ++j) {
      const auto k = static_cast<std::size_t>(j);
      v += standardized_coefficients[j] * (row[k] - center[k]) / scale[k];
    }
    return v;
  }

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const {
    return (x * coefficients).array() + intercept;
  }
};

struct FitOptions {
  bool fit_intercept = true;
  bool standardize = true;  // false: columns are centered but keep their scale
  double tol = 1e-10;       // sweep change relative to the response norm
  int max_iter = 10000;     // sweeps
};

namespace detail {

struct Design {
  Eigen::MatrixXd xs;  // centered and scaled
  Eigen::VectorXd yc;
  double y_mean = 0.0;
  std::vector<double> center, scale;
  std::vector<bool> active;
};

// Constant columns (zero spread) are marked inactive instead of failing.
inline Design make_design(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, bool intercept, bool standardize) {
  Design d;
  const auto n = x.rows(), p = x.cols();
  d.xs = x;
  d.y_mean = intercept ? y.mean() : 0.0;
  d.yc = y.array() - d.y_mean;
  d.center.assign(static_cast<std::size_t>(p), 0.0);
  d.scale.assign(static_cast<std::size_t>(p), 1.0);
  d.active.assign(static_cast<std::size_t>(p), true);
  for (Eigen::Index j = 0; j < p; ++j) {
    auto col = d.xs.col(j);
    const auto k = static_cast<std::size_t>(j);
    const double mean = intercept ? col.mean() : 0.0;
    const double ss = (col.array() - mean).square().sum();
    const double tiny = 1e-24 * std::max(1.0, mean * mean) * static_cast<double>(std::max<Eigen::Index>(n, 1));
    if (!(ss > tiny)) {
      d.active[k] = false;
      d.center[k] = mean;
      col.setZero();
      continue;
    }
    d.center[k] = mean;
    if (standardize) d.scale[k] = std::sqrt(ss);
    col = (col.array() - mean) / d.scale[k];
  }
  return d;
}

inline LinearFit finish(FitMethod method, const Design& d, const Eigen::VectorXd& beta_std) {
  LinearFit fit;
  fit.method = method;
  fit.center = d.center;
  fit.scale = d.scale;
  fit.active = d.active;
  fit.standardized_coefficients = beta_std;
  fit.standardized_intercept = d.y_mean;
  fit.coefficients.resize(beta_std.size());
  double icpt = d.y_mean;
  for (Eigen::Index j = 0; j < beta_std.size(); ++j) {
    const auto k = static_cast<std::size_t>(j);
    fit.coefficients[j] = beta_std[j] / d.scale[k];
    icpt -= fit.coefficients[j] * d.center[k];
  }
  fit.intercept = icpt;
  return fit;
}

// Cyclic coordinate descent on a prepared design. `beta` holds the starting
// point on entry and the solution on exit. Returns (converged, sweeps).
inline std::pair<bool, int> coordinate_descent(const Eigen::MatrixXd& xs, const Eigen::VectorXd& yc,
                                               const std::vector<bool>& active, double alpha, double lambda,
                                               double tol, int max_iter, Eigen::VectorXd& beta) {
  const double n = static_cast<double>(xs.rows());
  const auto p = xs.cols();
  Eigen::VectorXd col_ss(p);
  for (Eigen::Index j = 0; j < p; ++j) col_ss[j] = xs.col(j).squaredNorm();
  Eigen::VectorXd resid = yc - xs * beta;
  const double l1 = n * lambda * alpha;
  const double l2 = n * lambda * (1.0 - alpha);
  // Changes are measured as |delta b_k| * ||x_k|| relative to ||yc|| so the
  // stopping rule does not depend on the units of the response.
  const double ynorm = yc.norm();
  const double threshold = tol * (ynorm > 0.0 ? ynorm : 1.0);
  auto sweep_over = [&](bool nonzero_only) {
    double max_change = 0.0;
    for (Eigen::Index k = 0; k < p; ++k) {
      if (!active[static_cast<std::size_t>(k)]) continue;
      const double old = beta[k];
      if (nonzero_only && old == 0.0) continue;
      // partial-residual inner product  sum_i (r_i + x_ik b_k) x_ik
      const double z = xs.col(k).dot(resid) + col_ss[k] * old;
      const double updated = soft_threshold(z, 2.0 * l1) / (col_ss[k] + l2);
      if (updated != old) {
        resid.noalias() -= (updated - old) * xs.col(k);
        beta[k] = updated;
        max_change = std::max(max_change, std::abs(updated - old) * std::sqrt(col_ss[k]));
      }
    }
    return max_change;
  };
  // Full sweeps alternate with inner loops over the current nonzero set.
  int sweeps = 0;
  while (sweeps < max_iter) {
    ++sweeps;
    if (sweep_over(false) < threshold) return {true, sweeps};
    while (sweeps < max_iter) {
      ++sweeps;
      if (sweep_over(true) < threshold) break;
    }
  }
  return {false, max_iter};
}

}  // namespace detail

// Value of the penalized objective at (intercept, beta) on the given design.
inline double elastic_net_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double intercept,
                                    const Eigen::VectorXd& beta, double alpha, double lambda) {
  const double n = static_cast<double>(x.rows());
  const Eigen::VectorXd r = (y - x * beta).array() - intercept;
  return r.squaredNorm() / (2.0 * n) +
         lambda * ((1.0 - alpha) / 2.0 * beta.squaredNorm() + alpha * beta.lpNorm<1>());
}

// Ordinary least squares via the normal equations on standardized columns.
// Throws RankDeficiencyError when n <= p, a column is constant, or the
// reciprocal condition number of the standardized Gram matrix is below 1e-12.
inline LinearFit fit_ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, bool fit_intercept = true) {
  const auto n = x.rows(), p = x.cols();
  if (y.size() != n) throw ValidationError("fit_ols: X and y lengths differ");
  if (n <= p)
    throw RankDeficiencyError("fit_ols: need more rows (" + std::to_string(n) + ") than features (" +
                              std::to_string(p) + ")");
  auto d = detail::make_design(x, y, fit_intercept, true);
  for (std::size_t k = 0; k < d.active.size(); ++k)
    if (!d.active[k]) throw RankDeficiencyError("fit_ols: column " + std::to_string(k) + " is constant");
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  if (p > 0) {
    const Eigen::MatrixXd gram = d.xs.transpose() * d.xs;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
    const double hi = eig.eigenvalues().maxCoeff();
    const double lo = eig.eigenvalues().minCoeff();
    if (!(hi > 0.0) || !(lo / hi >= 1e-12))
      throw RankDeficiencyError("fit_ols: normal equations are singular or ill-conditioned (rcond " +
                                std::to_string(hi > 0.0 ? lo / hi : 0.0) + ")");
    beta = gram.ldlt().solve(d.xs.transpose() * d.yc);
  }
  return detail::finish(FitMethod::kOls, d, beta);
}

// Closed-form ridge (X'X + lambda I)^{-1} X'y on the centered design. The
// columns are not rescaled: lambda acts on the coefficients as supplied.
inline LinearFit fit_ridge(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda,
                           bool fit_intercept = true) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ValidationError("fit_ridge: lambda must be > 0");
  if (y.size() != x.rows()) throw ValidationError("fit_ridge: X and y lengths differ");
  auto d = detail::make_design(x, y, fit_intercept, false);
  // inactive columns were zeroed, so their coefficient solves to 0
  Eigen::MatrixXd a = d.xs.transpose() * d.xs;
  a.diagonal().array() += lambda;
  Eigen::VectorXd beta = a.ldlt().solve(d.xs.transpose() * d.yc);
  auto fit = detail::finish(FitMethod::kRidge, d, beta);
  fit.penalty = PenaltySpec{0.0, lambda};
  return fit;
}

// Warm start for the coordinate descent, in standardized coordinates.
inline LinearFit fit_elastic_net(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const PenaltySpec& penalty,
                                 const FitOptions& opts = {}, const Eigen::VectorXd* start = nullptr) {
  validate(penalty);
  if (!penalty.lambda) throw ValidationError("fit_elastic_net: lambda must be fixed (resolve lambda.min first)");
  if (!(opts.tol > 0.0)) throw ValidationError("fit_elastic_net: tol must be > 0");
  if (y.size() != x.rows()) throw ValidationError("fit_elastic_net: X and y lengths differ");
  if (x.rows() == 0) throw ValidationError("fit_elastic_net: no rows");
  auto d = detail::make_design(x, y, opts.fit_intercept, opts.standardize);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(x.cols());
  if (start && start->size() == x.cols()) beta = *start;
  for (std::size_t k = 0; k < d.active.size(); ++k)
    if (!d.active[k]) beta[static_cast<Eigen::Index>(k)] = 0.0;
  auto [converged, sweeps] =
      detail::coordinate_descent(d.xs, d.yc, d.active, penalty.alpha, *penalty.lambda, opts.tol, opts.max_iter, beta);
  auto fit = detail::finish(FitMethod::kElasticNet, d, beta);
  fit.penalty = penalty;
  fit.converged = converged;
  fit.iterations = sweeps;
  if (!converged)
    warn("fit_elastic_net: no convergence after " + std::to_string(sweeps) + " sweeps (lambda " +
         std::to_string(*penalty.lambda) + ")");
  return fit;
}

// Smallest lambda at which every coefficient is zero. For alpha = 0 the
// value for alpha = 0.001 is used so the grid stays finite.
inline double lambda_max(const Eigen::MatrixXd& xs, const Eigen::VectorXd& yc, double alpha) {
  const double n = static_cast<double>(xs.rows());
  const double a = std::max(alpha, 1e-3);
  return n > 0 ? (xs.transpose() * yc).cwiseAbs().maxCoeff() / (n * a) : 0.0;
}

struct LambdaCurve {
  std::vector<double> lambdas;   // decreasing
  std::vector<double> mean_mse;  // held-out mean squared error
  std::vector<double> sd_mse;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
};

struct LambdaPathOptions {
  int n_lambda = 100;
  double min_ratio = 1e-4;
  double tol = 1e-5;  // only ranks lambdas, so looser than a final fit
  int max_iter = 10000;
};

// k-fold cross-validated choice of lambda on a log-spaced grid from lambda_max
// down to lambda_max * min_ratio. Ties go to the larger lambda.
inline LambdaCurve lambda_path_cv(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double alpha, int k,
                                  std::uint64_t seed, const LambdaPathOptions& opts = {}) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("lambda_path_cv: alpha must lie in [0, 1]");
  const auto n = static_cast<std::size_t>(x.rows());
  if (k < 2 || n < static_cast<std::size_t>(k)) throw ValidationError("lambda_path_cv: need n >= k >= 2");
  LambdaCurve curve;
  const auto full = detail::make_design(x, y, true, true);
  curve.lambda_max = lambda_max(full.xs, full.yc, alpha);
  if (!(curve.lambda_max > 0.0)) {
    // constant response or no usable column: nothing to shrink
    curve.lambda_min = curve.lambda_max;
    return curve;
  }
  const int m = std::max(opts.n_lambda, 1);
  for (int i = 0; i < m; ++i) {
    const double frac = m == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(m - 1);
    curve.lambdas.push_back(curve.lambda_max * std::pow(opts.min_ratio, frac));
  }
  const auto folds = hybridtree::detail::fold_assignment(n, static_cast<std::size_t>(k), seed);
  std::vector<std::vector<double>> mse(static_cast<std::size_t>(m));
  for (int f = 0; f < k; ++f) {
    std::vector<Eigen::Index> train, test;
    for (std::size_t i = 0; i < n; ++i)
      (folds[i] == static_cast<std::size_t>(f) ? test : train).push_back(static_cast<Eigen::Index>(i));
    const Eigen::MatrixXd xt = x(train, Eigen::all);
    const Eigen::VectorXd yt = y(train);
    const auto d = detail::make_design(xt, yt, true, true);
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(x.cols());
    for (int i = 0; i < m; ++i) {
      detail::coordinate_descent(d.xs, d.yc, d.active, alpha, curve.lambdas[static_cast<std::size_t>(i)], opts.tol,
                                 opts.max_iter, beta);
      const auto fit = detail::finish(FitMethod::kElasticNet, d, beta);
      double sse = 0.0;
      for (auto r : test) {
        const double e = y[r] - (fit.intercept + x.row(r).dot(fit.coefficients));
        sse += e * e;
      }
      mse[static_cast<std::size_t>(i)].push_back(sse / static_cast<double>(test.size()));
    }
  }
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < m; ++i) {
    const auto& v = mse[static_cast<std::size_t>(i)];
    double mean = 0.0;
    for (double e : v) mean += e;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double e : v) var += (e - mean) * (e - mean);
    curve.mean_mse.push_back(mean);
    curve.sd_mse.push_back(v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0);
    if (mean < best) {
      best = mean;
      curve.lambda_min = curve.lambdas[static_cast<std::size_t>(i)];
    }
  }
  return curve;
}

}  // namespace hybridtree::enet
