#include <gtest/gtest.h>

#include <random>
#include <set>
#include <sstream>

#include "hybridtree/dataframe.hpp"
#include "hybridtree/detail/folds.hpp"
#include "hybridtree/detail/text.hpp"

using namespace hybridtree;

namespace {

Schema simple_schema() { return {{"x1", ColumnKind::kContinuous, {}}, {"y", ColumnKind::kResponse, {}}}; }

Schema lgpif_schema() {
  return {{"CoverageBC", ColumnKind::kContinuous, {}},
          {"lnDeductBC", ColumnKind::kContinuous, {}},
          {"NoClaimCreditBC", ColumnKind::kContinuous, {}},
          {"TypeCity", ColumnKind::kCategorical, {"0", "1"}},
          {"TypeCounty", ColumnKind::kCategorical, {"0", "1"}},
          {"TypeMisc", ColumnKind::kCategorical, {"0", "1"}},
          {"TypeSchool", ColumnKind::kCategorical, {"0", "1"}},
          {"TypeTown", ColumnKind::kCategorical, {"0", "1"}},
          {"ClaimBC", ColumnKind::kResponse, {}}};
}

std::string ingestion_message(const std::string& csv, const Schema& schema) {
  std::istringstream in(csv);
  try {
    load_csv(in, schema, "data.csv");
  } catch (const IngestionError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(LoadCsv, ThreeRowFile) {
  std::istringstream in("x1,y\n1,0\n2,5.5\n3,0\n");
  const Dataset ds = load_csv(in, simple_schema());
  EXPECT_EQ(ds.n(), 3u);
  EXPECT_EQ(ds.p(), 1u);
  EXPECT_DOUBLE_EQ(ds.x(1, 0), 2.0);
  EXPECT_DOUBLE_EQ(ds.y[1], 5.5);
  EXPECT_EQ(ds.occurrence(), (std::vector<int>{0, 1, 0}));
}

TEST(LoadCsv, UnparseableValueNamesRowAndColumn) {
  const auto msg = ingestion_message("x1,y\n1,0\nabc,2\n", simple_schema());
  EXPECT_NE(msg.find("row 2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("'x1'"), std::string::npos) << msg;
  EXPECT_NE(msg.find("abc"), std::string::npos) << msg;
}

TEST(LoadCsv, Errors) {
  EXPECT_NE(ingestion_message("x1\n1\n", simple_schema()).find("missing column 'y'"), std::string::npos);
  EXPECT_NE(ingestion_message("x1,y\n1,\n", simple_schema()).find("missing value"), std::string::npos);
  EXPECT_NE(ingestion_message("x1,y\nNA,1\n", simple_schema()).find("missing value"), std::string::npos);
  EXPECT_NE(ingestion_message("x1,y\n1,-2\n", simple_schema()).find("negative response"), std::string::npos);
  EXPECT_NE(ingestion_message("x1,y\n1,2,3\n", simple_schema()).find("fields"), std::string::npos);
  Schema cat{{"c", ColumnKind::kCategorical, {"a", "b"}}, {"y", ColumnKind::kResponse, {}}};
  EXPECT_NE(ingestion_message("c,y\nz,1\n", cat).find("unknown category 'z'"), std::string::npos);
  Schema cnt{{"x1", ColumnKind::kContinuous, {}}, {"y", ColumnKind::kResponse, {}}, {"n", ColumnKind::kCount, {}}};
  EXPECT_NE(ingestion_message("x1,y,n\n1,2,1.5\n", cnt).find("count"), std::string::npos);
}

TEST(LoadCsv, ExtraColumnsQuotesAndBlankLines) {
  std::istringstream in("id,\"x1\",note,y\r\n7,1.5,\"a, \"\"quoted\"\" note\",2\r\n\r\n8,2.5,plain,0\r\n");
  const Dataset ds = load_csv(in, simple_schema());
  ASSERT_EQ(ds.n(), 2u);
  EXPECT_DOUBLE_EQ(ds.x(0, 0), 1.5);
  EXPECT_DOUBLE_EQ(ds.x(1, 0), 2.5);
  EXPECT_DOUBLE_EQ(ds.y[0], 2.0);
}

TEST(LoadCsv, CountColumnDrivesOccurrence) {
  Schema s{{"x1", ColumnKind::kContinuous, {}}, {"y", ColumnKind::kResponse, {}}, {"n", ColumnKind::kCount, {}}};
  std::istringstream in("x1,y,n\n1,0,1\n2,3,0\n");
  const Dataset ds = load_csv(in, s);
  EXPECT_EQ(ds.occurrence(), (std::vector<int>{1, 0}));
}

TEST(LoadCsv, LgpifStyleSchemaHasEightFeatures) {
  std::ostringstream csv;
  csv << "CoverageBC,lnDeductBC,NoClaimCreditBC,TypeCity,TypeCounty,TypeMisc,TypeSchool,TypeTown,ClaimBC\n"
      << "4,10,0,1,0,0,0,0,55920\n"
      << "1.2,7.6,1,0,0,0,1,0,0\n";
  std::istringstream in(csv.str());
  const Dataset ds = encode_categoricals(load_csv(in, lgpif_schema()));
  EXPECT_EQ(ds.p(), 8u);
  EXPECT_EQ(ds.n(), 2u);
}

TEST(LoadCsv, Deterministic) {
  const std::string text = "x1,y\n0.1,1\n0.2,0\n0.30000000000000004,7\n";
  std::istringstream a(text), b(text);
  const Dataset da = load_csv(a, simple_schema()), db = load_csv(b, simple_schema());
  EXPECT_EQ(da.x, db.x);
  EXPECT_EQ(da.y, db.y);
}

TEST(WriteCsv, RoundTripIsExact) {
  Schema s{{"x1", ColumnKind::kContinuous, {}},
           {"c", ColumnKind::kCategorical, {"-3", "-2", "1", "4"}},
           {"y", ColumnKind::kResponse, {}}};
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  std::ostringstream csv;
  csv << "x1,c,y\n";
  for (int i = 0; i < 50; ++i)
    csv << detail::format_double(nd(rng)) << "," << std::vector<std::string>{"-3", "-2", "1", "4"}[i % 4] << ","
        << detail::format_double(std::abs(nd(rng)) * 1e4) << "\n";
  std::istringstream in(csv.str());
  const Dataset ds = load_csv(in, s);
  std::ostringstream out;
  write_csv(out, ds);
  EXPECT_EQ(out.str(), csv.str());
}

TEST(Schema, JsonRoundTripAndValidation) {
  const Schema s = lgpif_schema();
  EXPECT_EQ(schema_from_json(schema_to_json(s)), s);
  EXPECT_EQ(schema_from_json(schema_to_json(s)["columns"]), s);
  EXPECT_THROW(validate_schema({{"x", ColumnKind::kContinuous, {}}}), IngestionError);
  EXPECT_THROW(validate_schema({{"y", ColumnKind::kResponse, {}}, {"y2", ColumnKind::kResponse, {}}}), IngestionError);
  EXPECT_THROW(validate_schema({{"c", ColumnKind::kCategorical, {"a", "a"}}, {"y", ColumnKind::kResponse, {}}}),
               IngestionError);
  EXPECT_THROW(validate_schema({{"x", ColumnKind::kContinuous, {}}, {"x", ColumnKind::kResponse, {}}}),
               IngestionError);
}

TEST(Standardize, ColumnOneTwoThree) {
  Dataset ds;
  ds.schema = simple_schema();
  ds.features = {{"x1", FeatureKind::kContinuous, 0}};
  ds.x = Eigen::MatrixXd(3, 1);
  ds.x << 1, 2, 3;
  ds.y = Eigen::VectorXd::Zero(3);
  const auto [out, st] = standardize(ds);
  const double r = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(out.x(0, 0), -r, 1e-15);
  EXPECT_NEAR(out.x(1, 0), 0.0, 1e-15);
  EXPECT_NEAR(out.x(2, 0), r, 1e-15);
}

TEST(Standardize, ConstantColumnIsNamed) {
  Dataset ds;
  ds.schema = simple_schema();
  ds.features = {{"x1", FeatureKind::kContinuous, 0}};
  ds.x = Eigen::MatrixXd::Constant(3, 1, 5.0);
  ds.y = Eigen::VectorXd::Zero(3);
  try {
    standardize(ds);
    FAIL() << "expected DomainError";
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("'x1'"), std::string::npos);
  }
}

// Property: mean 0, sum of squares 1, idempotent, and invertible.
TEST(Standardize, Properties) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-100, 100);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 3 + trial % 40, p = 1 + trial % 5;
    Eigen::MatrixXd x(n, p);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < p; ++j) x(i, j) = u(rng) * (j + 1) + 1000.0 * j;
    std::vector<std::size_t> cols(static_cast<std::size_t>(p));
    for (int j = 0; j < p; ++j) cols[static_cast<std::size_t>(j)] = static_cast<std::size_t>(j);
    const auto st = fit_standardization(x, cols);
    Eigen::MatrixXd z = x;
    st.apply(z);
    for (int j = 0; j < p; ++j) {
      EXPECT_NEAR(z.col(j).mean(), 0.0, 1e-12);
      EXPECT_NEAR(z.col(j).squaredNorm(), 1.0, 1e-12);
    }
    const auto again = fit_standardization(z, cols);
    Eigen::MatrixXd zz = z;
    again.apply(zz);
    EXPECT_LT((zz - z).cwiseAbs().maxCoeff(), 1e-12);
    st.invert(z);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < p; ++j) EXPECT_NEAR(z(i, j), x(i, j), 1e-10 * std::max(1.0, std::abs(x(i, j))));
  }
}

TEST(EncodeCategoricals, IndicatorCounts) {
  Schema s{{"a", ColumnKind::kCategorical, {"-3", "-2", "1", "4"}},
           {"b", ColumnKind::kCategorical, {"-3", "-2", "1", "4"}},
           {"flag", ColumnKind::kCategorical, {"no", "yes"}},
           {"y", ColumnKind::kResponse, {}}};
  std::istringstream in("a,b,flag,y\n-3,4,yes,1\n1,-2,no,0\n4,4,no,2\n");
  const Dataset raw = load_csv(in, s);
  const Dataset enc = encode_categoricals(raw);
  ASSERT_EQ(enc.p(), 7u);
  EXPECT_EQ(enc.features[0].name, "a=-2");
  EXPECT_EQ(enc.features[2].name, "a=4");
  EXPECT_EQ(enc.features[6].name, "flag");
  EXPECT_EQ(enc.n(), raw.n());
  // row order preserved: row 2 has a=4, b=4
  EXPECT_EQ(enc.x(2, 2), 1.0);
  EXPECT_EQ(enc.x(2, 5), 1.0);
  EXPECT_EQ(enc.x(0, 0) + enc.x(0, 1) + enc.x(0, 2), 0.0);  // reference level
  EXPECT_EQ(enc.x.col(6), raw.x.col(2));
  EXPECT_EQ(enc.y, raw.y);
}

TEST(Text, DoubleRoundTrip) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng) * std::pow(10.0, i % 20 - 10);
    EXPECT_EQ(*detail::parse_double(detail::format_double(v)), v);
  }
  EXPECT_FALSE(detail::parse_double("1.5x"));
  EXPECT_FALSE(detail::parse_double(""));
  EXPECT_EQ(*detail::parse_double(" +2.5 "), 2.5);
}

TEST(Folds, PartitionAndDeterminism) {
  for (std::size_t n : {10u, 11u, 97u}) {
    for (std::size_t k : {2u, 5u, 10u}) {
      const auto f = detail::fold_assignment(n, k, 42);
      EXPECT_EQ(f, detail::fold_assignment(n, k, 42));
      std::vector<std::size_t> sizes(k, 0);
      for (auto v : f) {
        ASSERT_LT(v, k);
        ++sizes[v];
      }
      const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
      EXPECT_LE(*hi - *lo, 1u);
    }
  }
  const auto loo = detail::fold_assignment(10, 10, 1);
  EXPECT_EQ(std::set<std::size_t>(loo.begin(), loo.end()).size(), 10u);
}
