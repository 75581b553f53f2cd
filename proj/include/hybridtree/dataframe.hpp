#pragma once

// Columnar dataset with schema, CSV ingestion, categorical encoding and the
// mean-zero / unit-sum-of-squares column standardization used by the solvers.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hybridtree/detail/text.hpp"
#include "hybridtree/errors.hpp"

namespace hybridtree {

enum class ColumnKind { kContinuous, kCategorical, kResponse, kCount };

inline const char* to_string(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::kContinuous: return "continuous";
    case ColumnKind::kCategorical: return "categorical";
    case ColumnKind::kResponse: return "response";
    case ColumnKind::kCount: return "count";
  }
  return "unknown";
}

inline ColumnKind column_kind_from_string(const std::string& s) {
  if (s == "continuous") return ColumnKind::kContinuous;
  if (s == "categorical") return ColumnKind::kCategorical;
  if (s == "response") return ColumnKind::kResponse;
  if (s == "count") return ColumnKind::kCount;
  throw IngestionError("schema: unknown column kind '" + s + "'");
}

struct ColumnSchema {
  std::string name;
  ColumnKind kind = ColumnKind::kContinuous;
  std::vector<std::string> categories;  // categorical only, first is the reference level

  bool operator==(const ColumnSchema&) const = default;
};

using Schema = std::vector<ColumnSchema>;

inline void validate_schema(const Schema& schema) {
  std::size_t responses = 0, counts = 0;
  std::set<std::string> names;
  for (const auto& col : schema) {
    if (col.name.empty()) throw IngestionError("schema: column with empty name");
    if (!names.insert(col.name).second)
      throw IngestionError("schema: duplicate column name '" + col.name + "'");
    if (col.kind == ColumnKind::kResponse) ++responses;
    if (col.kind == ColumnKind::kCount) ++counts;
    if (col.kind == ColumnKind::kCategorical) {
      if (col.categories.empty())
        throw IngestionError("schema: categorical column '" + col.name + "' lists no categories");
      std::set<std::string> seen(col.categories.begin(), col.categories.end());
      if (seen.size() != col.categories.size())
        throw IngestionError("schema: categorical column '" + col.name + "' has duplicate categories");
    } else if (!col.categories.empty()) {
      throw IngestionError("schema: only categorical columns may list categories ('" + col.name + "')");
    }
  }
  if (responses != 1)
    throw IngestionError("schema: exactly one response column required, found " + std::to_string(responses));
  if (counts > 1) throw IngestionError("schema: at most one count column allowed");
}

inline nlohmann::json schema_to_json(const Schema& schema) {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : schema) {
    nlohmann::json j{{"name", c.name}, {"kind", to_string(c.kind)}};
    if (c.kind == ColumnKind::kCategorical) j["categories"] = c.categories;
    cols.push_back(std::move(j));
  }
  return nlohmann::json{{"columns", cols}};
}

// Accepts either {"columns": [...]} or a bare array of column objects.
inline Schema schema_from_json(const nlohmann::json& j) {
  const nlohmann::json* cols = &j;
  if (j.is_object()) {
    if (!j.contains("columns")) throw IngestionError("schema: missing 'columns'");
    cols = &j.at("columns");
  }
  if (!cols->is_array()) throw IngestionError("schema: 'columns' must be an array");
  Schema schema;
  for (const auto& c : *cols) {
    if (!c.is_object() || !c.contains("name") || !c.contains("kind"))
      throw IngestionError("schema: every column needs 'name' and 'kind'");
    ColumnSchema col;
    col.name = c.at("name").get<std::string>();
    col.kind = column_kind_from_string(c.at("kind").get<std::string>());
    if (c.contains("categories")) {
      for (const auto& cat : c.at("categories")) {
        col.categories.push_back(cat.is_string() ? cat.get<std::string>() : cat.dump());
      }
    }
    schema.push_back(std::move(col));
  }
  validate_schema(schema);
  return schema;
}

inline Schema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open schema file '" + path + "'");
  try {
    return schema_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError("schema '" + path + "': " + e.what());
  }
}

enum class FeatureKind {
  kContinuous,
  kCategoryIndex,  // raw categorical, stored as the index into its category list
  kIndicator,      // 0/1 dummy produced by encode_categoricals
};

struct Feature {
  std::string name;
  FeatureKind kind = FeatureKind::kContinuous;
  std::size_t source_column = 0;  // index into Dataset::schema

  bool operator==(const Feature&) const = default;
};

// Immutable after construction; row i of `x` pairs with `y[i]`.
struct Dataset {
  Schema schema;
  std::vector<Feature> features;
  Eigen::MatrixXd x;  // n x p
  Eigen::VectorXd y;  // non-negative claim response
  std::optional<Eigen::VectorXd> counts;

  std::size_t n() const { return static_cast<std::size_t>(x.rows()); }
  std::size_t p() const { return static_cast<std::size_t>(x.cols()); }

  std::vector<std::string> feature_names() const {
    std::vector<std::string> names;
    names.reserve(features.size());
    for (const auto& f : features) names.push_back(f.name);
    return names;
  }

  const ColumnSchema& response_column() const {
    for (const auto& c : schema)
      if (c.kind == ColumnKind::kResponse) return c;
    throw ValidationError("dataset has no response column");
  }

  // Claim occurrence: count > 0 when a count column exists, otherwise response > 0.
  std::vector<int> occurrence() const {
    std::vector<int> occ(n());
    for (std::size_t i = 0; i < n(); ++i) {
      double v = counts ? (*counts)[static_cast<Eigen::Index>(i)] : y[static_cast<Eigen::Index>(i)];
      occ[i] = v > 0.0 ? 1 : 0;
    }
    return occ;
  }
};

inline Dataset select_rows(const Dataset& ds, std::span<const std::size_t> rows) {
  Dataset out;
  out.schema = ds.schema;
  out.features = ds.features;
  const auto m = static_cast<Eigen::Index>(rows.size());
  out.x.resize(m, ds.x.cols());
  out.y.resize(m);
  if (ds.counts) out.counts = Eigen::VectorXd(m);
  for (Eigen::Index r = 0; r < m; ++r) {
    const auto src = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)]);
    out.x.row(r) = ds.x.row(src);
    out.y[r] = ds.y[src];
    if (ds.counts) (*out.counts)[r] = (*ds.counts)[src];
  }
  return out;
}

// With `response_optional`, missing response and count columns load as 0
// (prediction inputs need not carry the outcome).
inline Dataset load_csv(std::istream& in, const Schema& schema, const std::string& source = "<stream>",
                        bool response_optional = false) {
  validate_schema(schema);
  std::size_t line = 0;
  detail::CsvRecord rec;
  if (!detail::read_csv_record(in, rec, line))
    throw IngestionError(source + ": missing header row");
  if (!rec.fields.empty() && rec.fields[0].rfind("\xEF\xBB\xBF", 0) == 0) rec.fields[0].erase(0, 3);

  std::unordered_map<std::string, std::size_t> header;
  for (std::size_t i = 0; i < rec.fields.size(); ++i) header.emplace(rec.fields[i], i);

  constexpr auto kAbsent = static_cast<std::size_t>(-1);
  std::vector<std::size_t> field_of(schema.size());
  for (std::size_t c = 0; c < schema.size(); ++c) {
    auto it = header.find(schema[c].name);
    if (it == header.end()) {
      if (response_optional && (schema[c].kind == ColumnKind::kResponse || schema[c].kind == ColumnKind::kCount)) {
        field_of[c] = kAbsent;
        continue;
      }
      throw IngestionError(source + ": missing column '" + schema[c].name + "' in header");
    }
    field_of[c] = it->second;
  }

  Dataset ds;
  ds.schema = schema;
  for (std::size_t c = 0; c < schema.size(); ++c) {
    if (schema[c].kind == ColumnKind::kContinuous)
      ds.features.push_back({schema[c].name, FeatureKind::kContinuous, c});
    else if (schema[c].kind == ColumnKind::kCategorical)
      ds.features.push_back({schema[c].name, FeatureKind::kCategoryIndex, c});
  }
  const bool has_count = std::any_of(schema.begin(), schema.end(),
                                     [](const auto& c) { return c.kind == ColumnKind::kCount; });

  std::vector<double> xs, ys, cs;
  std::size_t row = 0;
  while (detail::read_csv_record(in, rec, line)) {
    if (rec.fields.size() == 1 && rec.fields[0].empty()) continue;  // blank line
    ++row;
    auto where = [&](std::size_t c) {
      return source + ": row " + std::to_string(row) + " (line " + std::to_string(rec.line) +
             "), column '" + schema[c].name + "'";
    };
    if (rec.fields.size() != header.size())
      throw IngestionError(source + ": row " + std::to_string(row) + " (line " + std::to_string(rec.line) +
                           ") has " + std::to_string(rec.fields.size()) + " fields, expected " +
                           std::to_string(header.size()));
    for (std::size_t c = 0; c < schema.size(); ++c) {
      if (field_of[c] == kAbsent) {
        (schema[c].kind == ColumnKind::kResponse ? ys : cs).push_back(0.0);
        continue;
      }
      const std::string& raw = rec.fields[field_of[c]];
      if (raw.empty() || raw == "NA" || raw == "NaN") throw IngestionError(where(c) + ": missing value");
      const auto& col = schema[c];
      if (col.kind == ColumnKind::kCategorical) {
        auto it = std::find(col.categories.begin(), col.categories.end(), raw);
        if (it == col.categories.end()) {
          // numeric labels may be written differently ("1" vs "1.0")
          auto num = detail::parse_double(raw);
          if (num) {
            it = std::find_if(col.categories.begin(), col.categories.end(), [&](const std::string& cat) {
              auto cv = detail::parse_double(cat);
              return cv && *cv == *num;
            });
          }
        }
        if (it == col.categories.end()) throw IngestionError(where(c) + ": unknown category '" + raw + "'");
        xs.push_back(static_cast<double>(it - col.categories.begin()));
        continue;
      }
      auto v = detail::parse_double(raw);
      if (!v) throw IngestionError(where(c) + ": cannot parse '" + raw + "' as a number");
      if (!std::isfinite(*v)) throw IngestionError(where(c) + ": non-finite value");
      switch (col.kind) {
        case ColumnKind::kContinuous: xs.push_back(*v); break;
        case ColumnKind::kResponse:
          if (*v < 0.0) throw IngestionError(where(c) + ": negative response");
          ys.push_back(*v);
          break;
        case ColumnKind::kCount:
          if (*v < 0.0 || std::floor(*v) != *v)
            throw IngestionError(where(c) + ": count must be a non-negative integer");
          cs.push_back(*v);
          break;
        case ColumnKind::kCategorical: break;
      }
    }
  }

  const auto n = static_cast<Eigen::Index>(row);
  const auto p = static_cast<Eigen::Index>(ds.features.size());
  ds.x.resize(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) ds.x(i, j) = xs[static_cast<std::size_t>(i * p + j)];
  ds.y = Eigen::Map<Eigen::VectorXd>(ys.data(), n);
  if (has_count) ds.counts = Eigen::Map<Eigen::VectorXd>(cs.data(), n);
  return ds;
}

inline Dataset load_csv(const std::string& path, const Schema& schema, bool response_optional = false) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open data file '" + path + "'");
  return load_csv(in, schema, path, response_optional);
}

// Writes the raw (un-encoded) dataset back out in schema column order.
inline void write_csv(std::ostream& out, const Dataset& ds) {
  for (const auto& f : ds.features)
    if (f.kind == FeatureKind::kIndicator)
      throw ValidationError("write_csv: dataset is already encoded; write the raw dataset instead");
  std::vector<std::string> fields;
  for (const auto& c : ds.schema) fields.push_back(c.name);
  detail::write_csv_row(out, fields);
  std::vector<std::size_t> feature_of(ds.schema.size(), 0);
  for (std::size_t j = 0; j < ds.features.size(); ++j) feature_of[ds.features[j].source_column] = j;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (std::size_t c = 0; c < ds.schema.size(); ++c) {
      const auto& col = ds.schema[c];
      switch (col.kind) {
        case ColumnKind::kContinuous:
          fields[c] = detail::format_double(ds.x(r, static_cast<Eigen::Index>(feature_of[c])));
          break;
        case ColumnKind::kCategorical:
          fields[c] = col.categories.at(static_cast<std::size_t>(ds.x(r, static_cast<Eigen::Index>(feature_of[c]))));
          break;
        case ColumnKind::kResponse: fields[c] = detail::format_double(ds.y[r]); break;
        case ColumnKind::kCount: fields[c] = detail::format_double((*ds.counts)[r]); break;
      }
    }
    detail::write_csv_row(out, fields);
  }
}

// Expands each categorical column with k > 2 levels into k-1 indicator columns
// (reference level = first category). Two-level columns already are 0/1
// indicators and pass through unchanged.
inline Dataset encode_categoricals(const Dataset& ds) {
  Dataset out;
  out.schema = ds.schema;
  out.y = ds.y;
  out.counts = ds.counts;
  std::vector<std::pair<std::size_t, int>> plan;  // (source feature, level or -1 for copy)
  for (std::size_t j = 0; j < ds.features.size(); ++j) {
    const auto& f = ds.features[j];
    if (f.kind != FeatureKind::kCategoryIndex) {
      out.features.push_back(f);
      plan.emplace_back(j, -1);
      continue;
    }
    const auto& cats = ds.schema[f.source_column].categories;
    if (cats.size() <= 2) {
      out.features.push_back({f.name, FeatureKind::kIndicator, f.source_column});
      plan.emplace_back(j, -1);
      continue;
    }
    for (std::size_t level = 1; level < cats.size(); ++level) {
      out.features.push_back({f.name + "=" + cats[level], FeatureKind::kIndicator, f.source_column});
      plan.emplace_back(j, static_cast<int>(level));
    }
  }
  out.x.resize(ds.x.rows(), static_cast<Eigen::Index>(plan.size()));
  for (std::size_t k = 0; k < plan.size(); ++k) {
    const auto [src, level] = plan[k];
    const auto col = ds.x.col(static_cast<Eigen::Index>(src));
    if (level < 0)
      out.x.col(static_cast<Eigen::Index>(k)) = col;
    else
      out.x.col(static_cast<Eigen::Index>(k)) = (col.array() == static_cast<double>(level)).cast<double>();
  }
  return out;
}

// Per-column affine map x -> (x - center) / scale, chosen so the transformed
// column has mean 0 and sum of squares 1.
struct Standardization {
  std::vector<std::size_t> columns;
  std::vector<double> center;
  std::vector<double> scale;

  void apply(Eigen::MatrixXd& x) const {
    for (std::size_t k = 0; k < columns.size(); ++k) {
      auto col = x.col(static_cast<Eigen::Index>(columns[k]));
      col = (col.array() - center[k]) / scale[k];
    }
  }

  void invert(Eigen::MatrixXd& x) const {
    for (std::size_t k = 0; k < columns.size(); ++k) {
      auto col = x.col(static_cast<Eigen::Index>(columns[k]));
      col = col.array() * scale[k] + center[k];
    }
  }
};

// Throws DomainError naming the first constant column.
inline Standardization fit_standardization(const Eigen::MatrixXd& x, std::span<const std::size_t> columns,
                                           std::span<const std::string> names = {}) {
  Standardization s;
  for (auto j : columns) {
    if (j >= static_cast<std::size_t>(x.cols())) throw ValidationError("standardize: column index out of range");
    const auto col = x.col(static_cast<Eigen::Index>(j));
    const double mean = col.mean();
    const double ss = (col.array() - mean).square().sum();
    const double scale = std::sqrt(ss);
    if (!(scale > 0.0) || !std::isfinite(scale) || scale <= 1e-12 * std::max(1.0, std::abs(mean)) * std::sqrt(double(x.rows()))) {
      std::string label = j < names.size() ? "'" + std::string(names[j]) + "'" : "#" + std::to_string(j);
      throw DomainError("standardize: column " + label + " is constant (scale would be 0)");
    }
    s.columns.push_back(j);
    s.center.push_back(mean);
    s.scale.push_back(scale);
  }
  return s;
}

inline std::pair<Dataset, Standardization> standardize(const Dataset& ds, std::span<const std::size_t> columns) {
  const auto names = ds.feature_names();
  Standardization s = fit_standardization(ds.x, columns, names);
  Dataset out = ds;
  s.apply(out.x);
  return {std::move(out), std::move(s)};
}

inline std::pair<Dataset, Standardization> standardize(const Dataset& ds) {
  std::vector<std::size_t> all(ds.p());
  for (std::size_t j = 0; j < all.size(); ++j) all[j] = j;
  return standardize(ds, all);
}

}  // namespace hybridtree
