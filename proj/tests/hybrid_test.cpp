#include <gtest/gtest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

#include "hybridtree/hybrid.hpp"
#include "hybridtree/simgen.hpp"

using namespace hybridtree;

namespace {

Dataset small_portfolio(std::uint64_t seed, std::size_t n = 1200) {
  sim::SimConfig c;
  c.n = n;
  c.p_continuous = 6;
  c.p_categorical = 3;
  c.beta_poisson = sim::make_beta(-0.1, 6, 3, {0.5, 0.1, 0.0}, {-0.5, 0.1, 0.0});
  c.beta_gamma = sim::make_beta(6.0, 6, 3, {0.5, -0.1, 0.0}, {0.5, -0.1, 0.0});
  c.seed = seed;
  return sim::simulate(c).dataset;
}

HybridHyperparams htglm() {
  HybridHyperparams hp;
  hp.cp = 0.0001;
  hp.maxdepth = 8;
  hp.zero_threshold = 0.25;
  hp.severity_learner = SeverityLearner::kOls;
  return hp;
}

std::span<const double> as_span(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

enet::LinearFit plain_fit(double intercept, std::vector<double> coef) {
  enet::LinearFit f;
  f.intercept = intercept;
  f.standardized_intercept = intercept;
  f.coefficients = Eigen::Map<Eigen::VectorXd>(coef.data(), static_cast<Eigen::Index>(coef.size()));
  f.standardized_coefficients = f.coefficients;
  f.center.assign(coef.size(), 0.0);
  f.scale.assign(coef.size(), 1.0);
  f.active.assign(coef.size(), true);
  return f;
}

// Hand-built model: CoverageBC < 100 goes to a linear terminal (id 2);
// otherwise NoClaimCreditBC < 0.5 gives Mean(13500) (id 6), else Zero (id 7).
HybridModel hand_model() {
  HybridModel m;
  for (const char* name : {"CoverageBC", "lnDeductBC", "NoClaimCreditBC"}) {
    m.schema.push_back({name, ColumnKind::kContinuous, {}});
    m.features.push_back({name, FeatureKind::kContinuous, m.features.size()});
  }
  m.schema.push_back({"y", ColumnKind::kResponse, {}});
  std::vector<cart::TreeNode> nodes(5);
  nodes[0] = {1, 0, 100, 70, 0.42, cart::SplitRule{0, 100.0}, 1, 2};
  nodes[1] = {2, 1, 50, 40, 0.0, std::nullopt, -1, -1};
  nodes[2] = {3, 1, 50, 30, 0.48, cart::SplitRule{2, 0.5}, 3, 4};
  nodes[3] = {6, 2, 25, 20, 0.0, std::nullopt, -1, -1};
  nodes[4] = {7, 2, 25, 10, 0.0, std::nullopt, -1, -1};
  m.tree = cart::Tree(nodes, cart::TreeParams{}, 3);
  m.terminals[2] = TerminalModel{LinearModel{plain_fit(-172854, {15251, 16777, -16254})}, 50, 10, 0.0, "ols"};
  m.terminals[6] = TerminalModel{MeanModel{13500}, 25, 5, 13500, "mean"};
  m.terminals[7] = TerminalModel{ZeroModel{}, 25, 15, 0.0, "zero"};
  return m;
}

}  // namespace

TEST(HybridPredict, TableFourArithmetic) {
  const auto m = hand_model();
  const std::vector<double> row{4, 10, 0};
  const auto p = predict_detailed(m, row);
  EXPECT_EQ(p.terminal_id, 2u);
  EXPECT_DOUBLE_EQ(p.raw, 55920.0);
  EXPECT_DOUBLE_EQ(p.clipped, 55920.0);
}

TEST(HybridPredict, MeanZeroAndClipping) {
  const auto m = hand_model();
  EXPECT_EQ(predict(m, std::vector<double>{200, 0, 0}), 13500.0);
  EXPECT_EQ(predict(m, std::vector<double>{200, 0, 1}), 0.0);
  // intercept alone is negative: raw keeps it, clipped is 0
  const auto p = predict_detailed(m, std::vector<double>{0, 0, 0});
  EXPECT_EQ(p.raw, -172854.0);
  EXPECT_EQ(p.clipped, 0.0);
  EXPECT_THROW(predict(m, std::vector<double>{1, 2}), ValidationError);
}

TEST(HybridPredict, BetaFGatesBeforeNodeModel) {
  auto m = hand_model();
  // id 7 holds 10 of 25 positives: beta_f = 0, so even a Mean model predicts 0
  m.terminals[7].model = MeanModel{999.0};
  EXPECT_EQ(predict(m, std::vector<double>{200, 0, 1}), 0.0);
}

TEST(HybridFit, ZeroThresholdZero) {
  const auto ds = small_portfolio(3);
  auto hp = htglm();
  hp.zero_threshold = 0.0;
  const auto m = fit(ds, hp);
  for (const auto& [id, tm] : m.terminals)
    if (tm.n_zero > 0) {
      EXPECT_TRUE(std::holds_alternative<ZeroModel>(tm.model)) << id;
    }
}

TEST(HybridFit, AllPositiveIsPlainRegression) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd;
  Dataset ds;
  for (const char* name : {"a", "b", "c"}) {
    ds.schema.push_back({name, ColumnKind::kContinuous, {}});
    ds.features.push_back({name, FeatureKind::kContinuous, ds.features.size()});
  }
  ds.schema.push_back({"y", ColumnKind::kResponse, {}});
  ds.x.resize(1000, 3);
  ds.y.resize(1000);
  for (int i = 0; i < 1000; ++i) {
    for (int j = 0; j < 3; ++j) ds.x(i, j) = nd(rng);
    ds.y[i] = 100.0 + 3.0 * ds.x(i, 0) - 2.0 * ds.x(i, 1) + nd(rng);
  }
  const auto m = fit(ds, htglm());
  ASSERT_EQ(m.tree.n_terminals(), 1u);
  const auto& lin = std::get<LinearModel>(m.terminals.at(1).model).fit;
  const auto ols = enet::fit_ols(ds.x, ds.y);
  EXPECT_NEAR(lin.intercept, ols.intercept, 1e-9);
  EXPECT_LT((lin.coefficients - ols.coefficients).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(HybridFit, NodeModelRules) {
  const auto ds = small_portfolio(5, 3000);
  for (auto learner : {SeverityLearner::kOls, SeverityLearner::kElasticNet}) {
    auto hp = htglm();
    hp.severity_learner = learner;
    hp.glm_lambda = 1.0;
    const auto m = fit(ds, hp);
    EXPECT_EQ(m.terminals.size(), m.tree.n_terminals());
    // recompute node membership and check each rule against the raw rows
    std::map<std::uint64_t, std::vector<Eigen::Index>> rows;
    for (Eigen::Index i = 0; i < ds.x.rows(); ++i) {
      const Eigen::VectorXd r = ds.x.row(i);
      rows[cart::classify(m.tree, as_span(r)).terminal_id].push_back(i);
    }
    for (const auto& [id, tm] : m.terminals) {
      const auto& idx = rows[id];
      ASSERT_EQ(idx.size(), tm.n);
      double sum = 0.0;
      std::size_t zeros = 0;
      for (auto i : idx) {
        sum += ds.y[i];
        zeros += ds.y[i] == 0.0;
      }
      EXPECT_EQ(zeros, tm.n_zero);
      const bool beta_f = m.tree.node(id).beta_f();
      const double zf = static_cast<double>(zeros) / static_cast<double>(idx.size());
      if (!beta_f || zf > hp.zero_threshold) {
        EXPECT_TRUE(std::holds_alternative<ZeroModel>(tm.model));
      } else if (idx.size() < 40) {
        ASSERT_TRUE(std::holds_alternative<MeanModel>(tm.model));
        EXPECT_NEAR(std::get<MeanModel>(tm.model).value, sum / static_cast<double>(idx.size()), 1e-9);
      } else {
        EXPECT_FALSE(std::holds_alternative<ZeroModel>(tm.model));
      }
    }
  }
}

TEST(HybridFit, RankDeficientNodeFallsBackToMean) {
  Dataset ds;
  for (const char* name : {"a", "b"}) {
    ds.schema.push_back({name, ColumnKind::kContinuous, {}});
    ds.features.push_back({name, FeatureKind::kContinuous, ds.features.size()});
  }
  ds.schema.push_back({"y", ColumnKind::kResponse, {}});
  ds.x.resize(50, 2);
  ds.y.resize(50);
  for (int i = 0; i < 50; ++i) {
    ds.x(i, 0) = i;
    ds.x(i, 1) = 2.0 * i;  // collinear
    ds.y[i] = 10.0 + i;
  }
  ScopedWarningCapture capture;
  const auto m = fit(ds, htglm());
  ASSERT_EQ(m.terminals.size(), 1u);
  EXPECT_TRUE(std::holds_alternative<MeanModel>(m.terminals.begin()->second.model));
  EXPECT_FALSE(capture.messages().empty());
}

TEST(HybridBatch, MatchesSingleAndClassify) {
  const auto ds = small_portfolio(6);
  const auto m = fit(ds, htglm());
  const auto batch = predict_batch(m, ds);
  ASSERT_EQ(batch.size(), ds.n());
  std::map<std::uint64_t, int> from_batch, from_tree;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    const Eigen::VectorXd r = ds.x.row(static_cast<Eigen::Index>(i));
    const auto single = predict_detailed(m, as_span(r));
    EXPECT_EQ(single.raw, batch[i].raw);
    EXPECT_EQ(single.terminal_id, batch[i].terminal_id);
    ++from_batch[batch[i].terminal_id];
    ++from_tree[cart::classify(m.tree, as_span(r)).terminal_id];
  }
  EXPECT_EQ(from_batch, from_tree);

  const std::vector<std::size_t> first{0};
  const auto one = predict_batch(m, select_rows(ds, first));
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].clipped, batch[0].clipped);
}

TEST(HybridBatch, ShuffleEquivariance) {
  const auto ds = small_portfolio(7, 600);
  const auto m = fit(ds, htglm());
  std::vector<std::size_t> perm(ds.n());
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(1);
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto base = predict_batch(m, ds);
  const auto shuffled = predict_batch(m, select_rows(ds, perm));
  for (std::size_t i = 0; i < perm.size(); ++i) EXPECT_EQ(shuffled[i].raw, base[perm[i]].raw);
}

TEST(HybridBatch, SchemaMismatchNamesColumn) {
  const auto ds = small_portfolio(8, 400);
  const auto m = fit(ds, htglm());
  Dataset other = ds;
  other.features[2].name = "renamed";
  try {
    predict_batch(m, other);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("x3"), std::string::npos);
  }
}

TEST(HybridIo, RoundTripPredictsIdentically) {
  const auto ds = small_portfolio(9);
  for (auto learner : {SeverityLearner::kOls, SeverityLearner::kElasticNet}) {
    auto hp = htglm();
    hp.severity_learner = learner;
    hp.glm_lambda = 5.0;
    const auto m = fit(ds, hp);
    const auto back = model_from_json(nlohmann::json::parse(serialize(m)));
    EXPECT_EQ(serialize(back), serialize(m));
    std::mt19937_64 rng(2);
    std::normal_distribution<double> nd(0.0, 2.0);
    Eigen::VectorXd row(static_cast<Eigen::Index>(ds.p()));
    for (int r = 0; r < 100; ++r) {
      for (Eigen::Index j = 0; j < row.size(); ++j) row[j] = nd(rng);
      EXPECT_EQ(predict_detailed(m, as_span(row)).raw, predict_detailed(back, as_span(row)).raw);
    }
  }
  const auto hm = hand_model();
  EXPECT_EQ(serialize(model_from_json(nlohmann::json::parse(serialize(hm)))), serialize(hm));
}

TEST(HybridIo, LoadErrors) {
  const auto m = hand_model();
  const auto dir = std::filesystem::temp_directory_path() / "hybridtree_hybrid_test";
  std::filesystem::create_directories(dir);
  const auto good = (dir / "m.json").string();
  save(m, good);
  EXPECT_EQ(serialize(load(good)), serialize(m));

  const std::string text = serialize(m);
  const auto truncated = (dir / "t.json").string();
  std::ofstream(truncated) << text.substr(0, text.size() / 2);
  EXPECT_THROW(load(truncated), IngestionError);

  auto j = nlohmann::json::parse(text);
  j["version"] = std::to_string(kVersionMajor + 1) + ".0.0";
  const auto newer = (dir / "v.json").string();
  std::ofstream(newer) << j.dump();
  EXPECT_THROW(load(newer), VersionError);

  j = nlohmann::json::parse(text);
  j["node_models"].erase("6");
  EXPECT_THROW(model_from_json(j), IngestionError);
  EXPECT_THROW(load((dir / "missing.json").string()), IngestionError);
  std::filesystem::remove_all(dir);
}

TEST(CoefficientReport, Shapes) {
  auto m = hand_model();
  auto t = coefficient_report(m);
  ASSERT_EQ(t.terminals, (std::vector<std::uint64_t>{2, 6}));
  ASSERT_EQ(t.rows.size(), 4u);
  EXPECT_EQ(*t.cells[0][0], -172854.0);
  EXPECT_EQ(*t.cells[1][0], 15251.0);
  EXPECT_EQ(*t.cells[0][1], 13500.0);
  EXPECT_FALSE(t.cells[1][1].has_value());

  for (auto& [id, tm] : m.terminals) tm.model = ZeroModel{};
  EXPECT_TRUE(coefficient_report(m).empty());

  // single Linear terminal over 3 features: 4 rows, 1 column
  auto single = hand_model();
  single.terminals[6].model = ZeroModel{};
  t = coefficient_report(single);
  EXPECT_EQ(t.terminals.size(), 1u);
  EXPECT_EQ(t.cells.size(), 4u);
  EXPECT_EQ(t.cells[0].size(), 1u);
}

TEST(CoefficientReport, LargeLambdaLeavesBlanks) {
  const auto ds = small_portfolio(10, 3000);
  auto hp = htglm();
  hp.severity_learner = SeverityLearner::kElasticNet;
  hp.zero_threshold = 1.0;
  hp.glm_lambda = 1e12;
  const auto m = fit(ds, hp);
  const auto t = coefficient_report(m);
  ASSERT_FALSE(t.empty());
  for (std::size_t r = 1; r < t.rows.size(); ++r)
    for (const auto& c : t.cells[r]) EXPECT_FALSE(c.has_value());
  for (const auto& c : t.cells[0]) EXPECT_TRUE(c.has_value());
}

// Properties over several fitted models: every row lands in exactly one
// terminal, Zero terminals predict exactly 0, and Linear terminals are affine.
TEST(HybridProperties, PartitionZeroRuleAffinity) {
  for (std::uint64_t seed = 20; seed < 23; ++seed) {
    const auto ds = small_portfolio(seed, 2000);
    auto hp = htglm();
    hp.zero_threshold = 0.5;
    const auto m = fit(ds, hp);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.5);
    Eigen::VectorXd row(static_cast<Eigen::Index>(ds.p()));
    for (int r = 0; r < 200; ++r) {
      for (Eigen::Index j = 0; j < row.size(); ++j) row[j] = nd(rng);
      const auto p = predict_detailed(m, as_span(row));
      int hits = 0;
      for (const auto* t : m.tree.terminals()) hits += t->id == p.terminal_id;
      EXPECT_EQ(hits, 1);
      const auto& tm = m.terminals.at(p.terminal_id);
      if (tm.zero_fraction() > hp.zero_threshold) {
        EXPECT_EQ(p.raw, 0.0);
      }
      if (std::holds_alternative<LinearModel>(tm.model) && m.tree.node(p.terminal_id).beta_f()) {
        // second differences along feature 0, skipped when a probe leaves the cell
        const double h = 0.01;
        Eigen::VectorXd a = row, c = row;
        a[0] -= h;
        c[0] += h;
        const auto pa = predict_detailed(m, as_span(a)), pc = predict_detailed(m, as_span(c));
        if (pa.terminal_id != p.terminal_id || pc.terminal_id != p.terminal_id) continue;
        const double second = pa.raw - 2.0 * p.raw + pc.raw;
        EXPECT_LT(std::abs(second), 1e-9 * std::max(1.0, std::abs(p.raw)));
      }
    }
  }
}

TEST(HybridProperties, Determinism) {
  const auto ds = small_portfolio(30);
  auto hp = htglm();
  hp.severity_learner = SeverityLearner::kElasticNet;
  hp.seed = 4;
  EXPECT_EQ(serialize(fit(ds, hp)), serialize(fit(ds, hp)));
}

TEST(HybridConfig, Validation) {
  auto hp = htglm();
  hp.zero_threshold = 1.01;
  EXPECT_THROW(fit(small_portfolio(1, 100), hp), ValidationError);
  hp = htglm();
  hp.min_node_linear = 1;
  EXPECT_THROW(validate(hp), ValidationError);
  hp = htglm();
  hp.glm_which = -0.1;
  EXPECT_THROW(validate(hp), ValidationError);
  const auto j = to_json(htglm());
  EXPECT_EQ(hyperparams_from_json(j), htglm());
}
