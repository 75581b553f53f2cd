#pragma once

// Hybrid tree: a classification tree decides claim occurrence, and every
// terminal carries its own severity model (zero, node mean, or a penalized
// linear fit). The resulting predictor is piecewise linear in the features.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "hybridtree/cart.hpp"
#include "hybridtree/dataframe.hpp"
#include "hybridtree/detail/text.hpp"
#include "hybridtree/elastic_net.hpp"
#include "hybridtree/errors.hpp"
#include "hybridtree/log.hpp"
#include "hybridtree/version.hpp"

namespace hybridtree {

enum class SeverityLearner { kOls, kElasticNet };

inline const char* to_string(SeverityLearner s) { return s == SeverityLearner::kOls ? "ols" : "elastic_net"; }

inline SeverityLearner severity_learner_from_string(const std::string& s) {
  if (s == "ols" || s == "glm") return SeverityLearner::kOls;
  if (s == "elastic_net" || s == "glmnet") return SeverityLearner::kElasticNet;
  throw ValidationError("unknown severity learner '" + s + "' (expected ols or elastic_net)");
}

struct HybridHyperparams {
  double cp = 0.0001;
  int maxdepth = 8;
  int minsplit = 8;
  double zero_threshold = 0.25;
  SeverityLearner severity_learner = SeverityLearner::kOls;
  double glm_which = 1.0;               // elastic-net mixing alpha
  std::optional<double> glm_lambda;     // nullopt = lambda.min
  int min_node_linear = 40;
  int lambda_folds = 10;
  std::uint64_t seed = 0;

  bool operator==(const HybridHyperparams&) const = default;
};

inline void validate(const HybridHyperparams& hp) {
  cart::validate(cart::TreeParams{hp.cp, hp.maxdepth, hp.minsplit, cart::Impurity::kGini});
  if (!(hp.zero_threshold >= 0.0 && hp.zero_threshold <= 1.0))
    throw ValidationError("zero threshold must lie in [0, 1]");
  if (!(hp.glm_which >= 0.0 && hp.glm_which <= 1.0)) throw ValidationError("glm-which must lie in [0, 1]");
  if (hp.glm_lambda && !(*hp.glm_lambda >= 0.0 && std::isfinite(*hp.glm_lambda)))
    throw ValidationError("glm-lambda must be finite and >= 0");
  if (hp.min_node_linear < 2) throw ValidationError("min-node-linear must be >= 2");
  if (hp.lambda_folds < 2) throw ValidationError("lambda folds must be >= 2");
}

inline nlohmann::json to_json(const HybridHyperparams& hp) {
  nlohmann::json j{{"cp", hp.cp},
                   {"maxdepth", hp.maxdepth},
                   {"minsplit", hp.minsplit},
                   {"zero_threshold", hp.zero_threshold},
                   {"severity_learner", to_string(hp.severity_learner)},
                   {"glm_which", hp.glm_which},
                   {"min_node_linear", hp.min_node_linear},
                   {"lambda_folds", hp.lambda_folds},
                   {"seed", hp.seed}};
  if (hp.glm_lambda)
    j["glm_lambda"] = *hp.glm_lambda;
  else
    j["glm_lambda"] = "lambda.min";
  return j;
}

// Missing keys keep their defaults.
inline HybridHyperparams hyperparams_from_json(const nlohmann::json& j, HybridHyperparams hp = {}) {
  try {
    if (j.contains("cp")) hp.cp = j.at("cp").get<double>();
    if (j.contains("maxdepth")) hp.maxdepth = j.at("maxdepth").get<int>();
    if (j.contains("minsplit")) hp.minsplit = j.at("minsplit").get<int>();
    if (j.contains("zero_threshold")) hp.zero_threshold = j.at("zero_threshold").get<double>();
    if (j.contains("severity_learner"))
      hp.severity_learner = severity_learner_from_string(j.at("severity_learner").get<std::string>());
    if (j.contains("glm_which")) hp.glm_which = j.at("glm_which").get<double>();
    if (j.contains("glm_lambda")) {
      const auto& l = j.at("glm_lambda");
      if (l.is_string()) {
        if (l.get<std::string>() != "lambda.min")
          throw ValidationError("glm_lambda must be a number or \"lambda.min\"");
        hp.glm_lambda.reset();
      } else {
        hp.glm_lambda = l.get<double>();
      }
    }
    if (j.contains("min_node_linear")) hp.min_node_linear = j.at("min_node_linear").get<int>();
    if (j.contains("lambda_folds")) hp.lambda_folds = j.at("lambda_folds").get<int>();
    if (j.contains("seed")) hp.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("hyperparameters: ") + e.what());
  }
  return hp;
}

struct ZeroModel {};
struct MeanModel {
  double value = 0.0;
};
struct LinearModel {
  enet::LinearFit fit;
};
using NodeModel = std::variant<ZeroModel, MeanModel, LinearModel>;

inline const char* variant_name(const NodeModel& m) {
  return std::visit(
      [](const auto& v) -> const char* {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, ZeroModel>) return "zero";
        else if constexpr (std::is_same_v<T, MeanModel>) return "mean";
        else return "linear";
      },
      m);
}

struct TerminalModel {
  NodeModel model;
  std::size_t n = 0;
  std::size_t n_zero = 0;  // training rows with zero response
  double mean_response = 0.0;
  std::string note;        // why this variant was chosen

  double zero_fraction() const { return n ? static_cast<double>(n_zero) / static_cast<double>(n) : 0.0; }
};

struct FitMetadata {
  std::uint64_t seed = 0;
  std::string software_version = kVersionString;
  double alpha = 0.0;  // cost-complexity alpha that cp resolved to
};

struct Prediction {
  std::uint64_t terminal_id = 0;
  double raw = 0.0;      // unclipped model output
  double clipped = 0.0;  // max(raw, 0)
};

struct HybridModel {
  cart::Tree tree;
  std::map<std::uint64_t, TerminalModel> terminals;
  HybridHyperparams hyperparams;
  Schema schema;
  std::vector<Feature> features;  // encoded feature layout the model expects
  FitMetadata metadata;

  std::vector<std::string> feature_names() const {
    std::vector<std::string> names;
    for (const auto& f : features) names.push_back(f.name);
    return names;
  }
};

namespace detail {

inline bool needs_encoding(const Dataset& ds) {
  return std::any_of(ds.features.begin(), ds.features.end(),
                     [](const Feature& f) { return f.kind == FeatureKind::kCategoryIndex; });
}

// OLS on the node's non-constant columns; dropped columns get no coefficient.
inline enet::LinearFit fit_ols_dropping_constants(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    if (x.col(j).maxCoeff() != x.col(j).minCoeff()) keep.push_back(j);
  const Eigen::MatrixXd xs = x(Eigen::all, keep);
  const auto sub = enet::fit_ols(xs, y);
  enet::LinearFit fit;
  fit.method = enet::FitMethod::kOls;
  const auto p = static_cast<std::size_t>(x.cols());
  fit.coefficients = Eigen::VectorXd::Zero(x.cols());
  fit.standardized_coefficients = Eigen::VectorXd::Zero(x.cols());
  fit.center.assign(p, 0.0);
  fit.scale.assign(p, 1.0);
  fit.active.assign(p, false);
  for (Eigen::Index j = 0; j < x.cols(); ++j) fit.center[static_cast<std::size_t>(j)] = x.col(j).mean();
  for (std::size_t k = 0; k < keep.size(); ++k) {
    const auto j = keep[k];
    const auto uj = static_cast<std::size_t>(j);
    fit.coefficients[j] = sub.coefficients[static_cast<Eigen::Index>(k)];
    fit.standardized_coefficients[j] = sub.standardized_coefficients[static_cast<Eigen::Index>(k)];
    fit.center[uj] = sub.center[k];
    fit.scale[uj] = sub.scale[k];
    fit.active[uj] = true;
  }
  // constant columns are absorbed by the intercept
  fit.intercept = sub.intercept;
  fit.standardized_intercept = sub.standardized_intercept;
  return fit;
}

}  // namespace detail

inline HybridModel fit(const Dataset& input, const HybridHyperparams& hp) {
  validate(hp);
  if (input.n() == 0) throw ValidationError("fit: empty dataset");
  const Dataset ds = detail::needs_encoding(input) ? encode_categoricals(input) : input;

  HybridModel model;
  model.hyperparams = hp;
  model.schema = ds.schema;
  model.features = ds.features;
  model.metadata.seed = hp.seed;

  const cart::TreeParams tp{hp.cp, hp.maxdepth, hp.minsplit, cart::Impurity::kGini};
  const auto occurrence = ds.occurrence();
  const cart::Tree full = cart::grow(ds.x, occurrence, tp);
  model.metadata.alpha = cart::cp_to_alpha(full, hp.cp);
  model.tree = cart::prune(full, model.metadata.alpha);

  std::map<std::size_t, std::vector<Eigen::Index>> rows_of;
  for (Eigen::Index i = 0; i < ds.x.rows(); ++i) {
    const Eigen::VectorXd row = ds.x.row(i);
    rows_of[model.tree.locate(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())))].push_back(i);
  }

  for (const auto& [index, rows] : rows_of) {
    const auto& nd = model.tree.nodes()[index];
    TerminalModel tm;
    tm.n = rows.size();
    double sum = 0.0;
    for (auto r : rows) {
      sum += ds.y[r];
      tm.n_zero += static_cast<std::size_t>(ds.y[r] == 0.0);
    }
    tm.mean_response = sum / static_cast<double>(tm.n);

    if (!nd.beta_f()) {
      tm.model = ZeroModel{};
      tm.note = "majority class is no claim";
    } else if (tm.zero_fraction() > hp.zero_threshold) {
      tm.model = ZeroModel{};
      tm.note = "zero fraction above threshold";
    } else if (tm.n < static_cast<std::size_t>(hp.min_node_linear)) {
      tm.model = MeanModel{tm.mean_response};
      tm.note = "too few rows for a linear model";
    } else {
      const Eigen::MatrixXd xn = ds.x(rows, Eigen::all);
      const Eigen::VectorXd yn = ds.y(rows);
      try {
        if (hp.severity_learner == SeverityLearner::kOls) {
          tm.model = LinearModel{detail::fit_ols_dropping_constants(xn, yn)};
          tm.note = "ols";
        } else {
          double lambda = 0.0;
          if (hp.glm_lambda) {
            lambda = *hp.glm_lambda;
          } else if (tm.n >= static_cast<std::size_t>(hp.lambda_folds)) {
            lambda = enet::lambda_path_cv(xn, yn, hp.glm_which, hp.lambda_folds, hp.seed + nd.id).lambda_min;
          }
          tm.model = LinearModel{enet::fit_elastic_net(xn, yn, enet::PenaltySpec{hp.glm_which, lambda})};
          tm.note = "elastic_net";
        }
      } catch (const RankDeficiencyError& e) {
        warn("terminal " + std::to_string(nd.id) + ": linear fit failed (" + e.what() + "); using node mean");
        tm.model = MeanModel{tm.mean_response};
        tm.note = "linear fit failed, mean fallback";
      }
    }
    model.terminals.emplace(nd.id, std::move(tm));
  }
  return model;
}

inline Prediction predict_detailed(const HybridModel& model, std::span<const double> row) {
  if (row.size() != model.features.size())
    throw ValidationError("predict: row has " + std::to_string(row.size()) + " features, model expects " +
                          std::to_string(model.features.size()));
  const auto& nd = model.tree.nodes()[model.tree.locate(row)];
  Prediction out;
  out.terminal_id = nd.id;
  const auto it = model.terminals.find(nd.id);
  if (it == model.terminals.end()) throw ValidationError("model has no severity model for terminal " + std::to_string(nd.id));
  if (nd.beta_f()) {
    out.raw = std::visit(
        [&](const auto& m) -> double {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, ZeroModel>) return 0.0;
          else if constexpr (std::is_same_v<T, MeanModel>) return m.value;
          else return m.fit.predict(row);
        },
        it->second.model);
  }
  out.clipped = std::max(out.raw, 0.0);
  return out;
}

inline double predict(const HybridModel& model, std::span<const double> row) {
  return predict_detailed(model, row).clipped;
}

// Brings a dataset into the model's encoded feature layout, or throws naming
// the first column that does not line up.
inline Dataset align_to_model(const HybridModel& model, const Dataset& input) {
  Dataset ds = detail::needs_encoding(input) ? encode_categoricals(input) : input;
  const std::size_t p = std::max(ds.features.size(), model.features.size());
  for (std::size_t j = 0; j < p; ++j) {
    if (j >= ds.features.size())
      throw ValidationError("schema mismatch: data lacks column '" + model.features[j].name + "'");
    if (j >= model.features.size())
      throw ValidationError("schema mismatch: unexpected column '" + ds.features[j].name + "'");
    if (ds.features[j].name != model.features[j].name)
      throw ValidationError("schema mismatch: expected column '" + model.features[j].name + "', found '" +
                            ds.features[j].name + "'");
  }
  return ds;
}

inline std::vector<Prediction> predict_batch(const HybridModel& model, const Dataset& input) {
  const Dataset ds = align_to_model(model, input);
  std::vector<Prediction> out;
  out.reserve(ds.n());
  Eigen::VectorXd row(ds.x.cols());
  for (Eigen::Index i = 0; i < ds.x.rows(); ++i) {
    row = ds.x.row(i);
    out.push_back(predict_detailed(model, std::span<const double>(row.data(), static_cast<std::size_t>(row.size()))));
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON persistence

inline constexpr const char* kModelFormat = "hybridtree-model";

namespace detail {

inline nlohmann::json fit_to_json(const enet::LinearFit& f) {
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  nlohmann::json j{{"type", "linear"},
                   {"method", enet::to_string(f.method)},
                   {"intercept", f.intercept},
                   {"coefficients", vec(f.coefficients)},
                   {"center", f.center},
                   {"scale", f.scale},
                   {"active", f.active},
                   {"standardized_intercept", f.standardized_intercept},
                   {"standardized_coefficients", vec(f.standardized_coefficients)},
                   {"alpha", f.penalty.alpha},
                   {"converged", f.converged},
                   {"iterations", f.iterations}};
  if (f.penalty.lambda) j["lambda"] = *f.penalty.lambda;
  return j;
}

inline enet::LinearFit fit_from_json(const nlohmann::json& j, std::size_t p) {
  enet::LinearFit f;
  f.method = enet::fit_method_from_string(j.at("method").get<std::string>());
  f.intercept = j.at("intercept").get<double>();
  auto coef = j.at("coefficients").get<std::vector<double>>();
  auto scoef = j.at("standardized_coefficients").get<std::vector<double>>();
  f.center = j.at("center").get<std::vector<double>>();
  f.scale = j.at("scale").get<std::vector<double>>();
  f.active = j.at("active").get<std::vector<bool>>();
  if (coef.size() != p || scoef.size() != p || f.center.size() != p || f.scale.size() != p || f.active.size() != p)
    throw IngestionError("linear node model has the wrong number of coefficients");
  f.coefficients = Eigen::Map<Eigen::VectorXd>(coef.data(), static_cast<Eigen::Index>(p));
  f.standardized_coefficients = Eigen::Map<Eigen::VectorXd>(scoef.data(), static_cast<Eigen::Index>(p));
  f.standardized_intercept = j.at("standardized_intercept").get<double>();
  f.penalty.alpha = j.at("alpha").get<double>();
  if (j.contains("lambda")) f.penalty.lambda = j.at("lambda").get<double>();
  f.converged = j.at("converged").get<bool>();
  f.iterations = j.at("iterations").get<int>();
  return f;
}

inline const char* feature_kind_name(FeatureKind k) {
  switch (k) {
    case FeatureKind::kContinuous: return "continuous";
    case FeatureKind::kCategoryIndex: return "category_index";
    case FeatureKind::kIndicator: return "indicator";
  }
  return "continuous";
}

inline FeatureKind feature_kind_from(const std::string& s) {
  if (s == "continuous") return FeatureKind::kContinuous;
  if (s == "category_index") return FeatureKind::kCategoryIndex;
  if (s == "indicator") return FeatureKind::kIndicator;
  throw IngestionError("unknown feature kind '" + s + "'");
}

}  // namespace detail

inline nlohmann::json to_json(const HybridModel& model) {
  nlohmann::json features = nlohmann::json::array();
  for (const auto& f : model.features)
    features.push_back({{"name", f.name}, {"kind", detail::feature_kind_name(f.kind)}, {"source", f.source_column}});
  nlohmann::json nodes = nlohmann::json::object();
  for (const auto& [id, tm] : model.terminals) {
    nlohmann::json j = std::visit(
        [](const auto& m) -> nlohmann::json {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, ZeroModel>) return {{"type", "zero"}};
          else if constexpr (std::is_same_v<T, MeanModel>) return {{"type", "mean"}, {"value", m.value}};
          else return detail::fit_to_json(m.fit);
        },
        tm.model);
    j["n"] = tm.n;
    j["n_zero"] = tm.n_zero;
    j["mean_response"] = tm.mean_response;
    j["note"] = tm.note;
    nodes[std::to_string(id)] = std::move(j);
  }
  return {{"format", kModelFormat},
          {"version", kVersionString},
          {"schema", schema_to_json(model.schema).at("columns")},
          {"features", features},
          {"hyperparams", to_json(model.hyperparams)},
          {"tree", cart::tree_to_json(model.tree)},
          {"node_models", nodes},
          {"metadata",
           {{"seed", model.metadata.seed},
            {"software_version", model.metadata.software_version},
            {"cost_complexity_alpha", model.metadata.alpha},
            {"cp_semantics", "alpha = cp * root misclassification loss"}}}};
}

inline HybridModel model_from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object() || j.value("format", "") != kModelFormat) throw IngestionError("not a hybridtree model file");
    const auto version = j.at("version").get<std::string>();
    const int major = std::stoi(version.substr(0, version.find('.')));
    if (major > kVersionMajor)
      throw VersionError("model file version " + version + " is newer than this software (" + kVersionString + ")");
    HybridModel m;
    m.schema = schema_from_json(j.at("schema"));
    for (const auto& f : j.at("features"))
      m.features.push_back({f.at("name").get<std::string>(), detail::feature_kind_from(f.at("kind").get<std::string>()),
                            f.at("source").get<std::size_t>()});
    m.hyperparams = hyperparams_from_json(j.at("hyperparams"));
    m.tree = cart::tree_from_json(j.at("tree"));
    if (m.tree.n_features() != m.features.size()) throw IngestionError("tree and feature list disagree");
    const auto& meta = j.at("metadata");
    m.metadata.seed = meta.at("seed").get<std::uint64_t>();
    m.metadata.software_version = meta.at("software_version").get<std::string>();
    m.metadata.alpha = meta.at("cost_complexity_alpha").get<double>();
    for (auto it = j.at("node_models").begin(); it != j.at("node_models").end(); ++it) {
      const auto& nj = it.value();
      TerminalModel tm;
      const auto type = nj.at("type").get<std::string>();
      if (type == "zero") tm.model = ZeroModel{};
      else if (type == "mean") tm.model = MeanModel{nj.at("value").get<double>()};
      else if (type == "linear") tm.model = LinearModel{detail::fit_from_json(nj, m.features.size())};
      else throw IngestionError("unknown node model type '" + type + "'");
      tm.n = nj.at("n").get<std::size_t>();
      tm.n_zero = nj.at("n_zero").get<std::size_t>();
      tm.mean_response = nj.at("mean_response").get<double>();
      tm.note = nj.at("note").get<std::string>();
      m.terminals.emplace(std::stoull(it.key()), std::move(tm));
    }
    for (const auto* t : m.tree.terminals())
      if (!m.terminals.count(t->id))
        throw IngestionError("terminal " + std::to_string(t->id) + " has no node model");
    if (m.terminals.size() != m.tree.n_terminals()) throw IngestionError("node models do not match tree terminals");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError(std::string("malformed model file: ") + e.what());
  } catch (const std::invalid_argument& e) {
    if (dynamic_cast<const ValidationError*>(&e)) throw;
    throw IngestionError(std::string("malformed model file: ") + e.what());
  }
}

inline std::string serialize(const HybridModel& model) { return to_json(model).dump(2) + "\n"; }

inline void save(const HybridModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write model file '" + path + "'");
  out << serialize(model);
}

inline HybridModel load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open model file '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError("model file '" + path + "': " + e.what());
  }
  return model_from_json(j);
}

// ---------------------------------------------------------------------------
// Reporting

// Columns are the non-zero terminals; rows are the intercept then each feature.
// Empty cells mark coefficients that are exactly zero or were never fitted.
struct CoefficientTable {
  std::vector<std::uint64_t> terminals;
  std::vector<std::string> rows;
  std::vector<std::vector<std::optional<double>>> cells;  // [row][terminal]

  bool empty() const { return terminals.empty(); }

  std::string to_csv() const {
    std::ostringstream os;
    std::vector<std::string> fields{"term"};
    for (auto t : terminals) fields.push_back(std::to_string(t));
    hybridtree::detail::write_csv_row(os, fields);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      fields.assign(1, rows[r]);
      for (const auto& c : cells[r]) fields.push_back(c ? hybridtree::detail::format_double(*c) : "");
      hybridtree::detail::write_csv_row(os, fields);
    }
    return os.str();
  }
};

inline CoefficientTable coefficient_report(const HybridModel& model) {
  CoefficientTable t;
  t.rows.push_back("(Intercept)");
  for (const auto& f : model.features) t.rows.push_back(f.name);
  t.cells.resize(t.rows.size());
  for (const auto& [id, tm] : model.terminals) {
    if (std::holds_alternative<ZeroModel>(tm.model)) continue;
    t.terminals.push_back(id);
    if (const auto* m = std::get_if<MeanModel>(&tm.model)) {
      t.cells[0].push_back(m->value);
      for (std::size_t r = 1; r < t.rows.size(); ++r) t.cells[r].push_back(std::nullopt);
      continue;
    }
    const auto& fit = std::get<LinearModel>(tm.model).fit;
    t.cells[0].push_back(fit.intercept);
    for (std::size_t j = 0; j < model.features.size(); ++j) {
      const double c = fit.coefficients[static_cast<Eigen::Index>(j)];
      t.cells[j + 1].push_back(fit.active[j] && c != 0.0 ? std::optional<double>(c) : std::nullopt);
    }
  }
  return t;
}

// One line per terminal: counts, zero fraction and chosen variant.
inline std::string terminal_summary_csv(const HybridModel& model) {
  std::ostringstream os;
  hybridtree::detail::write_csv_row(
      os, {"terminal_id", "depth", "n", "n_positive", "zero_fraction", "beta_f", "model", "value", "note"});
  for (const auto* nd : model.tree.terminals()) {
    const auto& tm = model.terminals.at(nd->id);
    std::string value;
    if (const auto* m = std::get_if<MeanModel>(&tm.model)) value = hybridtree::detail::format_double(m->value);
    if (std::holds_alternative<ZeroModel>(tm.model)) value = "0";
    hybridtree::detail::write_csv_row(
        os, {std::to_string(nd->id), std::to_string(nd->depth), std::to_string(nd->n), std::to_string(nd->n_positive),
             hybridtree::detail::format_double(tm.zero_fraction()), nd->beta_f() ? "1" : "0", variant_name(tm.model),
             value, tm.note});
  }
  return os.str();
}

}  // namespace hybridtree
