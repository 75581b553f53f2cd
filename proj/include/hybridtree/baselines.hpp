#pragma once

// Reference predictors for model comparison: the training mean, and a plain
// regression tree with mean leaves.

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "hybridtree/cart.hpp"
#include "hybridtree/errors.hpp"

namespace hybridtree::baseline {

struct ConstantMean {
  double value = 0.0;

  static ConstantMean fit(const Eigen::VectorXd& y) {
    if (y.size() == 0) throw ValidationError("constant mean: no rows");
    return {y.mean()};
  }
  double predict(std::span<const double>) const { return value; }
};

struct RegressionTreeParams {
  double cp = 0.01;  // a split must cut the root SSE by at least this fraction
  int maxdepth = 30;
  int minsplit = 20;
};

// Least-squares CART with mean leaves and rpart-style complexity stopping.
class RegressionTree {
 public:
  struct Node {
    std::optional<cart::SplitRule> split;
    int left = -1;
    int right = -1;
    std::size_t n = 0;
    double mean = 0.0;
  };

  static RegressionTree fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const RegressionTreeParams& params) {
    if (x.rows() == 0 || x.rows() != y.size()) throw ValidationError("regression tree: bad training data");
    if (params.maxdepth < 1 || params.minsplit < 2 || !(params.cp >= 0.0))
      throw ValidationError("regression tree: invalid parameters");
    RegressionTree tree;
    tree.p_ = static_cast<std::size_t>(x.cols());
    std::vector<std::size_t> all(static_cast<std::size_t>(x.rows()));
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const double mean = y.mean();
    const double root_sse = (y.array() - mean).square().sum();
    const double min_gain = std::max(params.cp * root_sse, 1e-12 * root_sse);
    tree.grow(x, y, std::move(all), 0, params, min_gain);
    return tree;
  }

  double predict(std::span<const double> row) const {
    if (row.size() != p_) throw ValidationError("regression tree: feature count mismatch");
    std::size_t i = 0;
    while (nodes_[i].split) i = static_cast<std::size_t>(nodes_[i].split->goes_left(row[nodes_[i].split->feature]) ? nodes_[i].left : nodes_[i].right);
    return nodes_[i].mean;
  }

  const std::vector<Node>& nodes() const { return nodes_; }

 private:
  int grow(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::vector<std::size_t> rows, int depth,
           const RegressionTreeParams& params, double min_gain) {
    const int index = static_cast<int>(nodes_.size());
    Node nd;
    nd.n = rows.size();
    double sum = 0.0;
    for (auto r : rows) sum += y[static_cast<Eigen::Index>(r)];
    nd.mean = sum / static_cast<double>(nd.n);
    nodes_.push_back(nd);
    if (depth >= params.maxdepth || rows.size() < static_cast<std::size_t>(params.minsplit)) return index;

    double sse = 0.0;
    for (auto r : rows) sse += (y[static_cast<Eigen::Index>(r)] - nd.mean) * (y[static_cast<Eigen::Index>(r)] - nd.mean);
    std::optional<cart::SplitRule> best;
    double best_gain = min_gain;
    std::vector<std::pair<double, double>> sorted(rows.size());
    const std::size_t n = rows.size();
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      for (std::size_t i = 0; i < n; ++i)
        sorted[i] = {x(static_cast<Eigen::Index>(rows[i]), j), y[static_cast<Eigen::Index>(rows[i])]};
      std::sort(sorted.begin(), sorted.end());
      double left_sum = 0.0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        left_sum += sorted[i].second;
        if (sorted[i].first == sorted[i + 1].first) continue;
        const double nl = static_cast<double>(i + 1), nr = static_cast<double>(n - i - 1);
        const double right_sum = sum - left_sum;
        // SSE reduction of the split: between-group sum of squares
        const double gain = left_sum * left_sum / nl + right_sum * right_sum / nr - sum * sum / static_cast<double>(n);
        if (gain > best_gain) {
          best_gain = gain;
          best = cart::SplitRule{static_cast<std::size_t>(j), cart::split_point(sorted[i].first, sorted[i + 1].first)};
        }
      }
    }
    if (!best || best_gain > sse) return index;
    std::vector<std::size_t> left, right;
    for (auto r : rows)
      (best->goes_left(x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(best->feature))) ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    nodes_[static_cast<std::size_t>(index)].split = best;
    const int l = grow(x, y, std::move(left), depth + 1, params, min_gain);
    const int r = grow(x, y, std::move(right), depth + 1, params, min_gain);
    nodes_[static_cast<std::size_t>(index)].left = l;
    nodes_[static_cast<std::size_t>(index)].right = r;
    return index;
  }

  std::vector<Node> nodes_;
  std::size_t p_ = 0;
};

}  // namespace hybridtree::baseline
