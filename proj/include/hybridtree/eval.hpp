#pragma once

// Validation measures, k-fold cross-validation, grid search, and the rescaled
// model comparison table.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "hybridtree/baselines.hpp"
#include "hybridtree/dataframe.hpp"
#include "hybridtree/detail/folds.hpp"
#include "hybridtree/detail/text.hpp"
#include "hybridtree/errors.hpp"
#include "hybridtree/hybrid.hpp"
#include "hybridtree/log.hpp"

namespace hybridtree::eval {

namespace detail {

inline void check_pair(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
  if (y.size() != yhat.size()) throw ValidationError("metric inputs differ in length");
  if (y.size() < 2) throw ValidationError("metrics need at least 2 observations");
}

}  // namespace detail

// Ordered Gini: actuals ranked by ascending prediction (ties keep row order).
inline double gini_index(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
  detail::check_pair(y, yhat);
  const auto n = static_cast<std::size_t>(y.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return yhat[static_cast<Eigen::Index>(a)] < yhat[static_cast<Eigen::Index>(b)];
  });
  double total = 0.0, weighted = 0.0;
  bool ties = false;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = y[static_cast<Eigen::Index>(order[i])];
    total += v;
    weighted += static_cast<double>(i + 1) * v;
    if (i > 0 && yhat[static_cast<Eigen::Index>(order[i])] == yhat[static_cast<Eigen::Index>(order[i - 1])]) ties = true;
  }
  if (!(total > 0.0)) throw UndefinedMetricError("gini index undefined: actuals sum to zero");
  if (ties) warn("gini index: tied predictions ordered by row index");
  const double nd = static_cast<double>(n);
  return 1.0 - 2.0 / (nd - 1.0) * (nd - weighted / total);
}

inline double r_squared(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
  detail::check_pair(y, yhat);
  const double sst = (y.array() - y.mean()).square().sum();
  if (!(sst > 0.0)) throw UndefinedMetricError("R2 undefined: actuals are constant");
  return 1.0 - (yhat - y).squaredNorm() / sst;
}

// Moments use 1/N; a constant prediction gives zero covariance and CCC 0.
inline double ccc(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
  detail::check_pair(y, yhat);
  const double n = static_cast<double>(y.size());
  const double my = y.mean(), mh = yhat.mean();
  const double vy = (y.array() - my).square().sum() / n;
  const double vh = (yhat.array() - mh).square().sum() / n;
  const double cov = ((y.array() - my) * (yhat.array() - mh)).sum() / n;
  const double denom = vh + vy + (mh - my) * (mh - my);
  if (!(denom > 0.0)) throw UndefinedMetricError("CCC undefined: both series constant and equal");
  return 2.0 * cov / denom;
}

inline double rmse(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
  detail::check_pair(y, yhat);
  return std::sqrt((yhat - y).squaredNorm() / static_cast<double>(y.size()));
}

inline double mae(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
  detail::check_pair(y, yhat);
  return (yhat - y).cwiseAbs().sum() / static_cast<double>(y.size());
}

// MAPE and MPE average over rows with a nonzero actual only.
inline double mape(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
  detail::check_pair(y, yhat);
  double s = 0.0;
  std::size_t used = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y[i] == 0.0) continue;
    s += std::abs((yhat[i] - y[i]) / y[i]);
    ++used;
  }
  if (used == 0) throw UndefinedMetricError("MAPE undefined: all actuals are zero");
  return s / static_cast<double>(used);
}

inline double mpe(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
  detail::check_pair(y, yhat);
  double s = 0.0;
  std::size_t used = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y[i] == 0.0) continue;
    s += (yhat[i] - y[i]) / y[i];
    ++used;
  }
  if (used == 0) throw UndefinedMetricError("MPE undefined: all actuals are zero");
  return s / static_cast<double>(used);
}

enum class Measure { kGini, kR2, kCcc, kRmse, kMae, kMape, kMpe };
inline constexpr Measure kMeasures[] = {Measure::kGini, Measure::kR2,  Measure::kCcc, Measure::kRmse,
                                        Measure::kMae,  Measure::kMape, Measure::kMpe};
inline constexpr std::size_t kMeasureCount = 7;

inline const char* to_string(Measure m) {
  switch (m) {
    case Measure::kGini: return "gini";
    case Measure::kR2: return "r2";
    case Measure::kCcc: return "ccc";
    case Measure::kRmse: return "rmse";
    case Measure::kMae: return "mae";
    case Measure::kMape: return "mape";
    case Measure::kMpe: return "mpe";
  }
  return "?";
}

inline bool higher_is_better(Measure m) { return m == Measure::kGini || m == Measure::kR2 || m == Measure::kCcc; }

// Undefined measures are NaN with an explanatory note.
struct MetricReport {
  double gini = 0, r2 = 0, ccc = 0, rmse = 0, mae = 0, mape = 0, mpe = 0;
  std::size_t n = 0;
  std::size_t n_nonzero = 0;  // rows used by MAPE and MPE
  std::vector<std::string> notes;

  double value(Measure m) const {
    switch (m) {
      case Measure::kGini: return gini;
      case Measure::kR2: return r2;
      case Measure::kCcc: return ccc;
      case Measure::kRmse: return rmse;
      case Measure::kMae: return mae;
      case Measure::kMape: return mape;
      case Measure::kMpe: return mpe;
    }
    return std::numeric_limits<double>::quiet_NaN();
  }
};

inline MetricReport compute_metrics(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
  detail::check_pair(y, yhat);
  MetricReport r;
  r.n = static_cast<std::size_t>(y.size());
  r.n_nonzero = static_cast<std::size_t>((y.array() != 0.0).count());
  auto guarded = [&](double (*f)(const Eigen::VectorXd&, const Eigen::VectorXd&)) {
    try {
      return f(y, yhat);
    } catch (const UndefinedMetricError& e) {
      r.notes.emplace_back(e.what());
      return std::numeric_limits<double>::quiet_NaN();
    }
  };
  r.gini = guarded(gini_index);
  r.r2 = guarded(r_squared);
  r.ccc = guarded(ccc);
  r.rmse = rmse(y, yhat);
  r.mae = mae(y, yhat);
  r.mape = guarded(mape);
  r.mpe = guarded(mpe);
  return r;
}

inline nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json j;
  for (Measure m : kMeasures) {
    const double v = r.value(m);
    if (std::isfinite(v))
      j[to_string(m)] = v;
    else
      j[to_string(m)] = nullptr;
  }
  j["n"] = r.n;
  j["n_used_mape_mpe"] = r.n_nonzero;
  j["notes"] = r.notes;
  return j;
}

// ---------------------------------------------------------------------------
// Cross-validation

// A fitted model maps a dataset (same layout as training) to predictions.
using Predictor = std::function<Eigen::VectorXd(const Dataset&)>;
using Learner = std::function<Predictor(const Dataset&)>;

struct CvResult {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double sd = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> fold_rmse;  // NaN for a failed fold
  bool valid = false;
  std::string error;
};

inline CvResult kfold_cv(const Dataset& ds, const Learner& learner, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ValidationError("cross-validation needs k >= 2");
  if (ds.n() < k) throw ValidationError("cross-validation needs at least k rows");
  const auto fold = hybridtree::detail::fold_assignment(ds.n(), k, seed);
  CvResult res;
  res.fold_rmse.assign(k, std::numeric_limits<double>::quiet_NaN());
  res.valid = true;
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < ds.n(); ++i) (fold[i] == f ? test : train).push_back(i);
    try {
      const Dataset dtr = select_rows(ds, train);
      const Dataset dte = select_rows(ds, test);
      const Predictor model = learner(dtr);
      const Eigen::VectorXd pred = model(dte);
      res.fold_rmse[f] = std::sqrt((pred - dte.y).squaredNorm() / static_cast<double>(dte.n()));
    } catch (const std::exception& e) {
      res.valid = false;
      if (res.error.empty()) res.error = "fold " + std::to_string(f + 1) + ": " + e.what();
    }
  }
  if (!res.valid) return res;
  double s = 0.0;
  for (double v : res.fold_rmse) s += v;
  res.mean = s / static_cast<double>(k);
  double ss = 0.0;
  for (double v : res.fold_rmse) ss += (v - res.mean) * (v - res.mean);
  res.sd = std::sqrt(ss / static_cast<double>(k - 1));
  return res;
}

// ---------------------------------------------------------------------------
// Grid search

using ParamValue = std::variant<double, std::string>;
using ParamSet = std::vector<std::pair<std::string, ParamValue>>;
// Parameters in enumeration order; the last one varies fastest.
using GridSpec = std::vector<std::pair<std::string, std::vector<ParamValue>>>;

inline std::string to_string(const ParamValue& v) {
  if (const auto* d = std::get_if<double>(&v)) return hybridtree::detail::format_double(*d);
  return std::get<std::string>(v);
}

inline std::optional<ParamValue> find_param(const ParamSet& ps, const std::string& name) {
  for (const auto& [k, v] : ps)
    if (k == name) return v;
  return std::nullopt;
}

inline std::vector<ParamSet> expand_grid(const GridSpec& grid) {
  if (grid.empty()) throw ValidationError("grid is empty");
  for (const auto& [name, values] : grid)
    if (values.empty()) throw ValidationError("grid parameter '" + name + "' has no values");
  std::vector<ParamSet> cells;
  std::vector<std::size_t> idx(grid.size(), 0);
  while (true) {
    ParamSet ps;
    for (std::size_t i = 0; i < grid.size(); ++i) ps.emplace_back(grid[i].first, grid[i].second[idx[i]]);
    cells.push_back(std::move(ps));
    std::size_t d = grid.size();
    while (d > 0) {
      --d;
      if (++idx[d] < grid[d].second.size()) break;
      idx[d] = 0;
      if (d == 0) return cells;
    }
  }
}

struct GridResult {
  std::vector<ParamSet> cells;
  std::vector<CvResult> results;
  std::size_t winner = 0;
};

namespace detail {

inline double numeric_param(const ParamSet& ps, const std::string& name) {
  if (auto v = find_param(ps, name))
    if (const auto* d = std::get_if<double>(&*v)) return *d;
  return 0.0;
}

// True when cell i beats cell j: lower CV RMSE, then larger cp, then
// shallower maxdepth, then earlier in enumeration order.
inline bool cell_better(const GridResult& g, std::size_t i, std::size_t j) {
  const double mi = g.results[i].mean, mj = g.results[j].mean;
  if (mi != mj) return mi < mj;
  const double cpi = numeric_param(g.cells[i], "cp"), cpj = numeric_param(g.cells[j], "cp");
  if (cpi != cpj) return cpi > cpj;
  const double di = numeric_param(g.cells[i], "maxdepth");
  const double dj = numeric_param(g.cells[j], "maxdepth");
  if (di != dj) return di < dj;
  return i < j;
}

}  // namespace detail

using LearnerFactory = std::function<Learner(const ParamSet&)>;

inline GridResult grid_search(const Dataset& ds, const GridSpec& grid, const LearnerFactory& factory, std::size_t k,
                              std::uint64_t seed) {
  GridResult g;
  g.cells = expand_grid(grid);
  for (const auto& cell : g.cells) {
    Learner learner;
    try {
      learner = factory(cell);
    } catch (const ValidationError& e) {
      CvResult bad;
      bad.fold_rmse.assign(k, std::numeric_limits<double>::quiet_NaN());
      bad.error = e.what();
      g.results.push_back(std::move(bad));
      continue;
    }
    g.results.push_back(kfold_cv(ds, learner, k, seed));
  }
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < g.cells.size(); ++i) {
    if (!g.results[i].valid) continue;
    if (!best || detail::cell_better(g, i, *best)) best = i;
  }
  if (!best) {
    std::string why = g.results.empty() ? "" : g.results.front().error;
    throw std::runtime_error("grid search: every cell failed (" + why + ")");
  }
  g.winner = *best;
  return g;
}

// Applies grid parameters on top of a base configuration. Accepts snake_case
// and camelCase names.
inline HybridHyperparams apply_params(HybridHyperparams hp, const ParamSet& ps) {
  for (const auto& [name, value] : ps) {
    const double* d = std::get_if<double>(&value);
    auto num = [&]() {
      if (!d) throw ValidationError("grid parameter '" + name + "' must be numeric");
      return *d;
    };
    auto integer = [&]() {
      const double v = num();
      if (v != std::floor(v)) throw ValidationError("grid parameter '" + name + "' must be an integer");
      return static_cast<int>(v);
    };
    if (name == "cp") {
      hp.cp = num();
    } else if (name == "maxdepth") {
      hp.maxdepth = integer();
    } else if (name == "minsplit") {
      hp.minsplit = integer();
    } else if (name == "zeroThreshold" || name == "zero_threshold") {
      hp.zero_threshold = num();
    } else if (name == "glmWhich" || name == "glm_which") {
      hp.glm_which = num();
    } else if (name == "glmLambda" || name == "glm_lambda") {
      if (d) {
        hp.glm_lambda = *d;
      } else if (std::get<std::string>(value) == "lambda.min") {
        hp.glm_lambda.reset();
      } else {
        throw ValidationError("glmLambda must be numeric or \"lambda.min\"");
      }
    } else if (name == "minNodeForLinear" || name == "min_node_linear") {
      hp.min_node_linear = integer();
    } else if (name == "severityLearner" || name == "severity_learner") {
      if (d) throw ValidationError("severityLearner must be a string");
      hp.severity_learner = severity_learner_from_string(std::get<std::string>(value));
    } else {
      throw ValidationError("unknown grid parameter '" + name + "'");
    }
  }
  validate(hp);
  return hp;
}

inline Eigen::VectorXd clipped_predictions(const HybridModel& model, const Dataset& ds) {
  const auto preds = predict_batch(model, ds);
  Eigen::VectorXd out(static_cast<Eigen::Index>(preds.size()));
  for (std::size_t i = 0; i < preds.size(); ++i) out[static_cast<Eigen::Index>(i)] = preds[i].clipped;
  return out;
}

inline Learner hybrid_learner(const HybridHyperparams& hp) {
  validate(hp);
  return [hp](const Dataset& train) -> Predictor {
    auto model = std::make_shared<HybridModel>(fit(train, hp));
    return [model](const Dataset& ds) { return clipped_predictions(*model, ds); };
  };
}

inline LearnerFactory hybrid_learner_factory(const HybridHyperparams& base) {
  return [base](const ParamSet& ps) { return hybrid_learner(apply_params(base, ps)); };
}

inline Learner constant_mean_learner() {
  return [](const Dataset& train) -> Predictor {
    const double m = baseline::ConstantMean::fit(train.y).value;
    return [m](const Dataset& ds) { return Eigen::VectorXd::Constant(static_cast<Eigen::Index>(ds.n()), m); };
  };
}

inline Learner regression_tree_learner(const baseline::RegressionTreeParams& params) {
  return [params](const Dataset& train) -> Predictor {
    const Dataset enc = hybridtree::detail::needs_encoding(train) ? encode_categoricals(train) : train;
    auto tree = std::make_shared<baseline::RegressionTree>(baseline::RegressionTree::fit(enc.x, enc.y, params));
    return [tree](const Dataset& input) {
      const Dataset ds = hybridtree::detail::needs_encoding(input) ? encode_categoricals(input) : input;
      Eigen::VectorXd out(static_cast<Eigen::Index>(ds.n()));
      Eigen::VectorXd row(ds.x.cols());
      for (Eigen::Index i = 0; i < ds.x.rows(); ++i) {
        row = ds.x.row(i);
        out[i] = tree->predict(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
      }
      return out;
    };
  };
}

// Grid JSON: {"name": [values...], ...} in file order; a scalar is a
// one-value list.
inline GridSpec grid_from_json(const nlohmann::ordered_json& j) {
  if (!j.is_object()) throw ValidationError("grid must be a JSON object");
  GridSpec grid;
  auto convert = [](const std::string& name, const nlohmann::ordered_json& v) -> ParamValue {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) return v.get<std::string>();
    throw ValidationError("grid parameter '" + name + "' has a non-numeric, non-string value");
  };
  for (const auto& [name, values] : j.items()) {
    std::vector<ParamValue> vs;
    if (values.is_array()) {
      for (const auto& v : values) vs.push_back(convert(name, v));
    } else {
      vs.push_back(convert(name, values));
    }
    grid.emplace_back(name, std::move(vs));
  }
  return grid;
}

inline nlohmann::ordered_json to_json(const ParamSet& ps) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [k, v] : ps) {
    if (const auto* d = std::get_if<double>(&v)) {
      // integral values (maxdepth, minsplit) read back as integers
      if (std::floor(*d) == *d && std::abs(*d) < 1e15)
        j[k] = static_cast<std::int64_t>(*d);
      else
        j[k] = *d;
    } else
      j[k] = std::get<std::string>(v);
  }
  return j;
}

// One row per cell: parameters, fold RMSEs, mean, sd, validity.
inline std::string cv_table_csv(const GridResult& g) {
  std::ostringstream out;
  std::vector<std::string> header{"cell"};
  const ParamSet& first = g.cells.front();
  for (const auto& [k, v] : first) header.push_back(k);
  const std::size_t k = g.results.front().fold_rmse.size();
  for (std::size_t f = 0; f < k; ++f) header.push_back("fold" + std::to_string(f + 1) + "_rmse");
  for (const char* h : {"mean_rmse", "sd_rmse", "valid", "winner", "error"}) header.emplace_back(h);
  hybridtree::detail::write_csv_row(out, header);
  auto num = [](double v) { return std::isfinite(v) ? hybridtree::detail::format_double(v) : std::string(); };
  for (std::size_t i = 0; i < g.cells.size(); ++i) {
    std::vector<std::string> row{std::to_string(i + 1)};
    for (const auto& [name, v] : g.cells[i]) row.push_back(to_string(v));
    for (double v : g.results[i].fold_rmse) row.push_back(num(v));
    row.push_back(num(g.results[i].mean));
    row.push_back(num(g.results[i].sd));
    row.push_back(g.results[i].valid ? "true" : "false");
    row.push_back(i == g.winner ? "true" : "false");
    row.push_back(g.results[i].error);
    hybridtree::detail::write_csv_row(out, row);
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Comparison table

// 100 * (v - worst) / (best - worst) with orientation per measure. NaN inputs
// stay NaN and are ignored when locating best and worst.
inline std::vector<double> rescale(const std::vector<double>& values, Measure m, std::string* note = nullptr) {
  const bool higher = higher_is_better(m);
  std::vector<double> score(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    double v = values[i];
    if (m == Measure::kMpe) v = std::abs(v);
    score[i] = higher ? v : -v;
  }
  double best = -std::numeric_limits<double>::infinity(), worst = std::numeric_limits<double>::infinity();
  for (double s : score) {
    if (std::isnan(s)) continue;
    best = std::max(best, s);
    worst = std::min(worst, s);
  }
  std::vector<double> out(values.size(), std::numeric_limits<double>::quiet_NaN());
  if (!(best >= worst)) return out;
  if (best == worst) {
    if (note) *note = std::string(to_string(m)) + ": all models tie, every model gets 100";
    for (std::size_t i = 0; i < out.size(); ++i)
      if (!std::isnan(score[i])) out[i] = 100.0;
    return out;
  }
  for (std::size_t i = 0; i < out.size(); ++i)
    if (!std::isnan(score[i])) out[i] = 100.0 * (score[i] - worst) / (best - worst);
  return out;
}

struct ComparisonTable {
  std::string dataset;  // "train" or "test"
  std::vector<std::string> models;
  std::vector<std::array<double, kMeasureCount>> raw;
  std::vector<std::array<double, kMeasureCount>> rescaled;
  std::vector<std::string> notes;

  std::string to_csv() const {
    std::ostringstream out;
    hybridtree::detail::write_csv_row(out, {"dataset", "model", "measure", "value", "rescaled"});
    auto num = [](double v) { return std::isfinite(v) ? hybridtree::detail::format_double(v) : std::string(); };
    for (std::size_t i = 0; i < models.size(); ++i)
      for (std::size_t m = 0; m < kMeasureCount; ++m)
        hybridtree::detail::write_csv_row(
            out, {dataset, models[i], to_string(kMeasures[m]), num(raw[i][m]), num(rescaled[i][m])});
    return out.str();
  }

  // Heat table: one row per model, one column per measure; red at 0 through
  // blue at 100, raw value printed in each cell.
  std::string to_svg() const {
    const int cw = 110, ch = 36, left = 170, top = 60;
    const int w = left + cw * static_cast<int>(kMeasureCount) + 20;
    const int h = top + ch * static_cast<int>(models.size()) + 20;
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    s << "<text x=\"10\" y=\"24\" font-size=\"15\">Model comparison (" << xml_escape(dataset) << ")</text>\n";
    for (std::size_t m = 0; m < kMeasureCount; ++m)
      s << "<text x=\"" << left + cw * static_cast<int>(m) + cw / 2 << "\" y=\"" << top - 8
        << "\" text-anchor=\"middle\">" << to_string(kMeasures[m]) << "</text>\n";
    for (std::size_t i = 0; i < models.size(); ++i) {
      const int y = top + ch * static_cast<int>(i);
      s << "<text x=\"10\" y=\"" << y + ch / 2 + 4 << "\">" << xml_escape(models[i]) << "</text>\n";
      for (std::size_t m = 0; m < kMeasureCount; ++m) {
        const int x = left + cw * static_cast<int>(m);
        const double r = rescaled[i][m];
        s << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cw << "\" height=\"" << ch << "\" fill=\""
          << color(r) << "\" stroke=\"white\"/>\n";
        std::ostringstream label;
        if (std::isfinite(raw[i][m])) {
          label.precision(4);
          label << raw[i][m];
        } else {
          label << "NA";
        }
        s << "<text x=\"" << x + cw / 2 << "\" y=\"" << y + ch / 2 + 4 << "\" text-anchor=\"middle\" fill=\"white\">"
          << label.str() << "</text>\n";
      }
    }
    s << "</svg>\n";
    return s.str();
  }

 private:
  static std::string color(double r) {
    if (!std::isfinite(r)) return "#999999";
    const double t = std::clamp(r / 100.0, 0.0, 1.0);
    const int red = static_cast<int>(std::lround(215 * (1 - t) + 33 * t));
    const int green = static_cast<int>(std::lround(48 * (1 - t) + 102 * t));
    const int blue = static_cast<int>(std::lround(39 * (1 - t) + 172 * t));
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", red, green, blue);
    return buf;
  }
  static std::string xml_escape(const std::string& in) {
    std::string out;
    for (char c : in) {
      switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
      }
    }
    return out;
  }
};

inline ComparisonTable build_table(const std::string& dataset, const std::vector<std::string>& names,
                                   const std::vector<MetricReport>& reports) {
  if (names.size() < 2) throw ValidationError("comparison needs at least 2 models");
  ComparisonTable t;
  t.dataset = dataset;
  t.models = names;
  t.raw.resize(names.size());
  t.rescaled.resize(names.size());
  for (std::size_t i = 0; i < names.size(); ++i) {
    for (std::size_t m = 0; m < kMeasureCount; ++m) t.raw[i][m] = reports[i].value(kMeasures[m]);
    for (const auto& n : reports[i].notes) t.notes.push_back(names[i] + ": " + n);
  }
  for (std::size_t m = 0; m < kMeasureCount; ++m) {
    std::vector<double> col(names.size());
    for (std::size_t i = 0; i < names.size(); ++i) col[i] = t.raw[i][m];
    std::string note;
    const auto r = rescale(col, kMeasures[m], &note);
    if (!note.empty()) t.notes.push_back(note);
    for (std::size_t i = 0; i < names.size(); ++i) t.rescaled[i][m] = r[i];
  }
  return t;
}

struct NamedPredictor {
  std::string name;
  Predictor predict;
};

// Tables for the training and the test data, in that order.
inline std::pair<ComparisonTable, ComparisonTable> comparison_table(const std::vector<NamedPredictor>& models,
                                                                    const Dataset& train, const Dataset& test) {
  if (models.size() < 2) throw ValidationError("comparison needs at least 2 models");
  std::vector<std::string> names;
  std::vector<MetricReport> tr, te;
  for (const auto& m : models) {
    names.push_back(m.name);
    tr.push_back(compute_metrics(train.y, m.predict(train)));
    te.push_back(compute_metrics(test.y, m.predict(test)));
  }
  return {build_table("train", names, tr), build_table("test", names, te)};
}

}  // namespace hybridtree::eval
