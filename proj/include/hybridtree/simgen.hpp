#pragma once

// Synthetic insurance portfolio: correlated Gaussian continuous features,
// integer-valued categorical features, and a compound Poisson-gamma (Tweedie)
// response with optional white noise on the positive claims.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hybridtree/dataframe.hpp"
#include "hybridtree/detail/text.hpp"
#include "hybridtree/errors.hpp"
#include "hybridtree/log.hpp"

namespace hybridtree::sim {

inline constexpr std::array<double, 4> kCategoryLevels{-3.0, -2.0, 1.0, 4.0};
inline constexpr double kRateCap = 1e12;
inline constexpr const char* kRngName = "mt19937_64 per-row substreams (splitmix64 keyed by seed, row, stream)";

// Coefficients are laid out as (intercept, continuous..., categorical...); each
// feature group is cut into thirds of strong, weak and zero effects.
inline std::vector<double> make_beta(double intercept, int p_continuous, int p_categorical,
                                     std::array<double, 3> continuous_blocks,
                                     std::array<double, 3> categorical_blocks) {
  std::vector<double> beta{intercept};
  for (int i = 0; i < p_continuous; ++i) beta.push_back(continuous_blocks[static_cast<std::size_t>(3 * i / p_continuous)]);
  for (int i = 0; i < p_categorical; ++i)
    beta.push_back(categorical_blocks[static_cast<std::size_t>(3 * i / p_categorical)]);
  return beta;
}

inline std::vector<double> default_beta_poisson(int pc = 30, int pk = 30) {
  return make_beta(-0.1, pc, pk, {0.5, 0.1, 0.0}, {-0.5, 0.1, 0.0});
}

inline std::vector<double> default_beta_gamma(int pc = 30, int pk = 30) {
  return make_beta(6.0, pc, pk, {0.5, -0.1, 0.0}, {0.5, -0.1, 0.0});
}

struct SimConfig {
  std::size_t n = 10000;
  int p_continuous = 30;
  int p_categorical = 30;
  double rho = 0.5;  // Cov(x_i, x_j) = rho^|i-j|
  std::vector<double> beta_poisson = default_beta_poisson();
  std::vector<double> beta_gamma = default_beta_gamma();
  double power = 1.5;
  double phi = 2.0;
  std::optional<double> noise_sd;  // absolute; when unset noise_scale * sd(positive totals) is used
  double noise_scale = 0.05;
  std::uint64_t seed = 1;
};

inline void validate(const SimConfig& c) {
  if (c.n == 0) throw ValidationError("simulate: n must be >= 1");
  if (c.p_continuous < 0 || c.p_categorical < 0) throw ValidationError("simulate: feature counts must be >= 0");
  if (!(c.power > 1.0 && c.power < 2.0)) throw ValidationError("simulate: power must lie in (1, 2)");
  if (!(c.phi > 0.0)) throw ValidationError("simulate: phi must be > 0");
  if (!(c.rho > -1.0 && c.rho < 1.0)) throw ValidationError("simulate: rho must lie in (-1, 1)");
  const auto width = static_cast<std::size_t>(1 + c.p_continuous + c.p_categorical);
  if (c.beta_poisson.size() != width || c.beta_gamma.size() != width)
    throw ValidationError("simulate: coefficient vectors need " + std::to_string(width) +
                          " entries (intercept first)");
  if (c.noise_sd && !(*c.noise_sd >= 0.0)) throw ValidationError("simulate: noise sd must be >= 0");
  if (!(c.noise_scale >= 0.0)) throw ValidationError("simulate: noise scale must be >= 0");
}

inline nlohmann::json to_json(const SimConfig& c) {
  nlohmann::json j{{"n", c.n},
                   {"p_continuous", c.p_continuous},
                   {"p_categorical", c.p_categorical},
                   {"rho", c.rho},
                   {"beta_poisson", c.beta_poisson},
                   {"beta_gamma", c.beta_gamma},
                   {"power", c.power},
                   {"phi", c.phi},
                   {"noise_scale", c.noise_scale},
                   {"seed", c.seed}};
  if (c.noise_sd) j["noise_sd"] = *c.noise_sd;
  return j;
}

// Missing keys keep defaults. When only the feature counts change, the
// coefficient vectors are rebuilt for the new sizes.
inline SimConfig sim_config_from_json(const nlohmann::json& j, SimConfig c = {}) {
  try {
    if (j.contains("n")) c.n = j.at("n").get<std::size_t>();
    bool resized = false;
    if (j.contains("p_continuous")) { c.p_continuous = j.at("p_continuous").get<int>(); resized = true; }
    if (j.contains("p_categorical")) { c.p_categorical = j.at("p_categorical").get<int>(); resized = true; }
    if (resized) {
      c.beta_poisson = default_beta_poisson(c.p_continuous, c.p_categorical);
      c.beta_gamma = default_beta_gamma(c.p_continuous, c.p_categorical);
    }
    if (j.contains("rho")) c.rho = j.at("rho").get<double>();
    if (j.contains("beta_poisson")) c.beta_poisson = j.at("beta_poisson").get<std::vector<double>>();
    if (j.contains("beta_gamma")) c.beta_gamma = j.at("beta_gamma").get<std::vector<double>>();
    if (j.contains("power")) c.power = j.at("power").get<double>();
    if (j.contains("phi")) c.phi = j.at("phi").get<double>();
    if (j.contains("noise_sd")) c.noise_sd = j.at("noise_sd").get<double>();
    if (j.contains("noise_scale")) c.noise_scale = j.at("noise_scale").get<double>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("simulation config: ") + e.what());
  }
  return c;
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Independent generator for (seed, row, stream); results do not depend on
// how rows are scheduled.
inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t row, std::uint64_t stream) {
  return std::mt19937_64(splitmix64(splitmix64(splitmix64(seed) ^ row) ^ (stream * 0xD6E8FEB86659FD93ULL)));
}

inline double linear_predictor(std::span<const double> x, const std::vector<double>& beta) {
  if (x.size() + 1 != beta.size())
    throw ValidationError("linear predictor: row has " + std::to_string(x.size()) + " features, coefficients expect " +
                          std::to_string(beta.size() - 1));
  double eta = beta[0];
  for (std::size_t j = 0; j < x.size(); ++j) eta += x[j] * beta[j + 1];
  return eta;
}

}  // namespace detail

inline Eigen::MatrixXd covariance(const SimConfig& c) {
  const auto p = static_cast<Eigen::Index>(c.p_continuous);
  Eigen::MatrixXd sigma(p, p);
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = 0; j < p; ++j) sigma(i, j) = std::pow(c.rho, static_cast<double>(std::abs(i - j)));
  return sigma;
}

// n x (p_continuous + p_categorical): N(0, Sigma) columns via the Cholesky
// factor of Sigma, then categorical columns uniform on {-3, -2, 1, 4}.
inline Eigen::MatrixXd gen_features(const SimConfig& c) {
  validate(c);
  const auto pc = static_cast<Eigen::Index>(c.p_continuous);
  const auto pk = static_cast<Eigen::Index>(c.p_categorical);
  Eigen::MatrixXd lower;
  if (pc > 0) {
    Eigen::LLT<Eigen::MatrixXd> llt(covariance(c));
    if (llt.info() != Eigen::Success) throw ValidationError("simulate: covariance is not positive definite");
    lower = llt.matrixL();
  }
  Eigen::MatrixXd x(static_cast<Eigen::Index>(c.n), pc + pk);
  Eigen::VectorXd z(pc);
  for (std::size_t i = 0; i < c.n; ++i) {
    auto rng = detail::substream(c.seed, i, 0);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_int_distribution<int> level(0, static_cast<int>(kCategoryLevels.size()) - 1);
    for (Eigen::Index j = 0; j < pc; ++j) z[j] = normal(rng);
    const auto r = static_cast<Eigen::Index>(i);
    if (pc > 0) x.row(r).head(pc) = (lower * z).transpose();
    for (Eigen::Index j = 0; j < pk; ++j) x(r, pc + j) = kCategoryLevels[static_cast<std::size_t>(level(rng))];
  }
  return x;
}

// Poisson mean exp(x b)^(2-power) / (phi (2-power)), capped at 1e12.
inline double lambda_of(std::span<const double> x, const SimConfig& c) {
  const double eta = detail::linear_predictor(x, c.beta_poisson);
  const double log_lambda = (2.0 - c.power) * eta - std::log(c.phi * (2.0 - c.power));
  if (log_lambda > std::log(kRateCap)) {
    warn("lambda_of: Poisson mean exp(" + std::to_string(log_lambda) + ") capped at 1e12");
    return kRateCap;
  }
  return std::exp(log_lambda);
}

struct GammaParams {
  double shape = 1.0;
  double rate = 1.0;
};

// shape (2-power)/(power-1); rate exp(x b)^(1-power) / (phi (power-1)), kept in [1e-12, 1e12].
inline GammaParams gamma_params_of(std::span<const double> x, const SimConfig& c) {
  const double eta = detail::linear_predictor(x, c.beta_gamma);
  GammaParams g;
  g.shape = (2.0 - c.power) / (c.power - 1.0);
  const double log_rate = (1.0 - c.power) * eta - std::log(c.phi * (c.power - 1.0));
  const double cap = std::log(kRateCap);
  if (log_rate > cap || log_rate < -cap) {
    warn("gamma_params_of: rate exp(" + std::to_string(log_rate) + ") clamped to [1e-12, 1e12]");
    g.rate = std::exp(std::clamp(log_rate, -cap, cap));
  } else {
    g.rate = std::exp(log_rate);
  }
  return g;
}

struct RowLatents {
  double lambda = 0.0;
  std::uint64_t claims = 0;  // N_i
  double shape = 0.0;
  double rate = 0.0;
  double total = 0.0;        // compound sum before noise
};

struct SimulatedPortfolio {
  Dataset dataset;
  std::vector<RowLatents> latents;
  SimConfig config;
  double noise_sd = 0.0;  // resolved noise level
};

inline Schema portfolio_schema(const SimConfig& c) {
  Schema s;
  for (int j = 1; j <= c.p_continuous; ++j) s.push_back({"x" + std::to_string(j), ColumnKind::kContinuous, {}});
  // integer-valued categoricals enter the regression as numbers
  for (int j = 1; j <= c.p_categorical; ++j) s.push_back({"c" + std::to_string(j), ColumnKind::kContinuous, {}});
  s.push_back({"y", ColumnKind::kResponse, {}});
  return s;
}

inline SimulatedPortfolio simulate(const SimConfig& c) {
  validate(c);
  SimulatedPortfolio out;
  out.config = c;
  Dataset& ds = out.dataset;
  ds.schema = portfolio_schema(c);
  for (std::size_t j = 0; j + 1 < ds.schema.size(); ++j)
    ds.features.push_back({ds.schema[j].name, FeatureKind::kContinuous, j});
  ds.x = gen_features(c);
  ds.y.resize(static_cast<Eigen::Index>(c.n));
  out.latents.resize(c.n);

  Eigen::VectorXd row(ds.x.cols());
  for (std::size_t i = 0; i < c.n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    row = ds.x.row(r);
    const std::span<const double> xs(row.data(), static_cast<std::size_t>(row.size()));
    auto& lat = out.latents[i];
    lat.lambda = lambda_of(xs, c);
    const auto g = gamma_params_of(xs, c);
    lat.shape = g.shape;
    lat.rate = g.rate;
    auto rng = detail::substream(c.seed, i, 1);
    std::poisson_distribution<std::uint64_t> poisson(lat.lambda);
    lat.claims = poisson(rng);
    if (lat.claims > 0) {
      // a sum of N iid Gamma(shape, rate) draws is Gamma(N * shape, rate)
      std::gamma_distribution<double> gamma(static_cast<double>(lat.claims) * g.shape, 1.0 / g.rate);
      lat.total = gamma(rng);
    }
    ds.y[r] = lat.total;
  }

  if (c.noise_sd) {
    out.noise_sd = *c.noise_sd;
  } else {
    double sum = 0.0, sumsq = 0.0;
    std::size_t m = 0;
    for (const auto& lat : out.latents)
      if (lat.total > 0.0) {
        sum += lat.total;
        ++m;
      }
    const double mean = m ? sum / static_cast<double>(m) : 0.0;
    for (const auto& lat : out.latents)
      if (lat.total > 0.0) sumsq += (lat.total - mean) * (lat.total - mean);
    const double sd = m > 1 ? std::sqrt(sumsq / static_cast<double>(m - 1)) : 0.0;
    out.noise_sd = c.noise_scale * sd;
  }
  if (out.noise_sd > 0.0) {
    for (std::size_t i = 0; i < c.n; ++i) {
      if (!(out.latents[i].total > 0.0)) continue;
      auto rng = detail::substream(c.seed, i, 2);
      std::normal_distribution<double> noise(0.0, out.noise_sd);
      const auto r = static_cast<Eigen::Index>(i);
      ds.y[r] = std::max(0.0, ds.y[r] + noise(rng));
    }
  }
  return out;
}

inline double zero_fraction(const Eigen::VectorXd& y) {
  if (y.size() == 0) return 0.0;
  return static_cast<double>((y.array() == 0.0).count()) / static_cast<double>(y.size());
}

inline void write_latents_csv(std::ostream& out, const SimulatedPortfolio& p) {
  hybridtree::detail::write_csv_row(out, {"row", "lambda", "claims", "shape", "rate", "total", "response"});
  for (std::size_t i = 0; i < p.latents.size(); ++i) {
    const auto& l = p.latents[i];
    using hybridtree::detail::format_double;
    hybridtree::detail::write_csv_row(
        out, {std::to_string(i + 1), format_double(l.lambda), std::to_string(l.claims), format_double(l.shape),
              format_double(l.rate), format_double(l.total), format_double(p.dataset.y[static_cast<Eigen::Index>(i)])});
  }
}

}  // namespace hybridtree::sim
