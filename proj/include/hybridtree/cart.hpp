#pragma once

// Binary classification tree for claim occurrence: impurity functions,
// exhaustive split search, depth-bounded recursive growth and
// cost-complexity pruning on misclassification loss.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hybridtree/dataframe.hpp"
#include "hybridtree/detail/text.hpp"
#include "hybridtree/errors.hpp"

namespace hybridtree::cart {

namespace detail {
inline void check_proportion(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("impurity: proportion must lie in [0, 1]");
}
}  // namespace detail

inline double gini(double p) {
  detail::check_proportion(p);
  return 2.0 * p * (1.0 - p);
}

inline double misclassification(double p) {
  detail::check_proportion(p);
  return 1.0 - std::max(p, 1.0 - p);
}

// Cross-entropy with 0 ln 0 = 0.
inline double entropy(double p) {
  detail::check_proportion(p);
  double h = 0.0;
  if (p > 0.0) h -= p * std::log(p);
  if (p < 1.0) h -= (1.0 - p) * std::log(1.0 - p);
  return h;
}

enum class Impurity { kGini, kEntropy, kMisclassification };

inline double impurity(Impurity kind, double p) {
  switch (kind) {
    case Impurity::kGini: return gini(p);
    case Impurity::kEntropy: return entropy(p);
    case Impurity::kMisclassification: return misclassification(p);
  }
  return 0.0;
}

inline const char* to_string(Impurity kind) {
  switch (kind) {
    case Impurity::kGini: return "gini";
    case Impurity::kEntropy: return "entropy";
    case Impurity::kMisclassification: return "misclassification";
  }
  return "unknown";
}

inline Impurity impurity_from_string(const std::string& s) {
  if (s == "gini") return Impurity::kGini;
  if (s == "entropy") return Impurity::kEntropy;
  if (s == "misclassification") return Impurity::kMisclassification;
  throw ValidationError("unknown impurity '" + s + "'");
}

// Weighted child impurity w_L I(p_L) + w_R I(p_R) from class counts.
inline double weighted_child_impurity(Impurity kind, std::size_t n_left, std::size_t pos_left,
                                      std::size_t n_right, std::size_t pos_right) {
  const double n = static_cast<double>(n_left + n_right);
  const double pl = static_cast<double>(pos_left) / static_cast<double>(n_left);
  const double pr = static_cast<double>(pos_right) / static_cast<double>(n_right);
  return static_cast<double>(n_left) / n * impurity(kind, pl) +
         static_cast<double>(n_right) / n * impurity(kind, pr);
}

// A split must lower node impurity by more than this to count as an improvement.
inline constexpr double kMinImpurityDecrease = 1e-12;

// Left child holds rows with x[feature] < threshold.
struct SplitRule {
  std::size_t feature = 0;
  double threshold = 0.0;

  bool goes_left(double value) const { return value < threshold; }
  bool operator==(const SplitRule&) const = default;
};

struct SplitCandidate {
  SplitRule rule;
  double child_impurity = 0.0;   // weighted impurity of the two children
  double parent_impurity = 0.0;
};

// Midpoint between two consecutive distinct sorted values that still separates
// them under the `x < s` rule.
inline double split_point(double lo, double hi) {
  double s = lo + (hi - lo) / 2.0;
  if (!(s > lo)) s = hi;
  return s;
}

// Exhaustive search over every feature and every midpoint between consecutive
// distinct values of the node's rows. Ties go to the lowest feature index, then
// the lowest threshold. Returns nullopt when no split lowers impurity.
inline std::optional<SplitCandidate> best_split(const Eigen::MatrixXd& x, std::span<const int> occurrence,
                                                std::span<const std::size_t> rows,
                                                Impurity kind = Impurity::kGini) {
  const std::size_t n = rows.size();
  if (n < 2) return std::nullopt;
  std::size_t pos = 0;
  for (auto r : rows) pos += static_cast<std::size_t>(occurrence[r] != 0);
  const double parent = impurity(kind, static_cast<double>(pos) / static_cast<double>(n));
  if (pos == 0 || pos == n) return std::nullopt;

  std::optional<SplitCandidate> best;
  // For Gini, candidates are ranked by the exact rational
  // (posL negL / nL + posR negR / nR) so equal splits tie exactly.
  __int128 best_num = 0, best_den = 1;
  std::vector<std::pair<double, int>> sorted(n);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    for (std::size_t i = 0; i < n; ++i)
      sorted[i] = {x(static_cast<Eigen::Index>(rows[i]), j), occurrence[rows[i]] != 0 ? 1 : 0};
    std::sort(sorted.begin(), sorted.end());
    std::size_t n_left = 0, pos_left = 0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      ++n_left;
      pos_left += static_cast<std::size_t>(sorted[i].second);
      if (sorted[i].first == sorted[i + 1].first) continue;
      const std::size_t n_right = n - n_left, pos_right = pos - pos_left;
      const double score = weighted_child_impurity(kind, n_left, pos_left, n_right, pos_right);
      bool better = !best;
      if (kind == Impurity::kGini) {
        const __int128 num = static_cast<__int128>(pos_left * (n_left - pos_left)) * static_cast<__int128>(n_right) +
                             static_cast<__int128>(pos_right * (n_right - pos_right)) * static_cast<__int128>(n_left);
        const __int128 den = static_cast<__int128>(n_left) * static_cast<__int128>(n_right);
        if (best) better = num * best_den < best_num * den;
        if (better) {
          best_num = num;
          best_den = den;
        }
      } else if (best) {
        better = score < best->child_impurity;
      }
      if (better) {
        best = SplitCandidate{{static_cast<std::size_t>(j), split_point(sorted[i].first, sorted[i + 1].first)},
                              score, parent};
      }
    }
  }
  if (!best || !(best->child_impurity < parent - kMinImpurityDecrease)) return std::nullopt;
  return best;
}

struct TreeParams {
  double cp = 0.01;
  int maxdepth = 30;
  int minsplit = 8;  // rows a node needs before a split is attempted
  Impurity split_impurity = Impurity::kGini;
};

inline void validate(const TreeParams& p) {
  if (!(p.cp >= 0.0) || !std::isfinite(p.cp)) throw ValidationError("cp must be a finite value >= 0");
  if (p.maxdepth < 1 || p.maxdepth > 62) throw ValidationError("maxdepth must lie in [1, 62]");
  if (p.minsplit < 2) throw ValidationError("minsplit must be >= 2");
}

struct TreeNode {
  std::uint64_t id = 1;  // root 1; children of m are 2m and 2m+1
  int depth = 0;
  std::size_t n = 0;
  std::size_t n_positive = 0;
  double impurity = 0.0;  // split impurity of this node
  std::optional<SplitRule> split;
  int left = -1;  // indices into Tree::nodes
  int right = -1;

  bool is_terminal() const { return !split.has_value(); }
  bool beta_f() const { return 2 * n_positive > n; }
  double positive_fraction() const { return n ? static_cast<double>(n_positive) / static_cast<double>(n) : 0.0; }
  std::size_t misclassified() const { return std::min(n_positive, n - n_positive); }
};

class Tree {
 public:
  Tree() = default;
  Tree(std::vector<TreeNode> nodes, TreeParams params, std::size_t n_features)
      : nodes_(std::move(nodes)), params_(params), n_features_(n_features) {}

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const TreeNode& root() const { return nodes_.front(); }
  const TreeParams& params() const { return params_; }
  std::size_t n_features() const { return n_features_; }

  const TreeNode& node(std::uint64_t id) const {
    for (const auto& nd : nodes_)
      if (nd.id == id) return nd;
    throw ValidationError("tree has no node " + std::to_string(id));
  }

  std::vector<const TreeNode*> terminals() const {
    std::vector<const TreeNode*> out;
    for (const auto& nd : nodes_)
      if (nd.is_terminal()) out.push_back(&nd);
    return out;
  }

  std::size_t n_terminals() const {
    return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(),
                                                  [](const TreeNode& nd) { return nd.is_terminal(); }));
  }

  int depth() const {
    int d = 0;
    for (const auto& nd : nodes_) d = std::max(d, nd.depth);
    return d;
  }

  // Index into nodes() of the terminal whose region contains `row`.
  std::size_t locate(std::span<const double> row) const {
    if (row.size() != n_features_)
      throw ValidationError("classify: row has " + std::to_string(row.size()) + " features, tree expects " +
                            std::to_string(n_features_));
    std::size_t idx = 0;
    while (const auto& split = nodes_[idx].split) {
      idx = static_cast<std::size_t>(split->goes_left(row[split->feature]) ? nodes_[idx].left : nodes_[idx].right);
    }
    return idx;
  }

  // Sum of misclassification losses w_m Mis(p_m) over terminals.
  double terminal_loss() const {
    std::size_t m = 0;
    for (const auto& nd : nodes_)
      if (nd.is_terminal()) m += nd.misclassified();
    return static_cast<double>(m) / static_cast<double>(root().n);
  }

 private:
  std::vector<TreeNode> nodes_;
  TreeParams params_;
  std::size_t n_features_ = 0;
};

struct Classification {
  std::uint64_t terminal_id;
  bool beta_f;
};

inline Classification classify(const Tree& tree, std::span<const double> row) {
  const auto& nd = tree.nodes()[tree.locate(row)];
  return {nd.id, nd.beta_f()};
}

inline Tree grow(const Eigen::MatrixXd& x, std::span<const int> occurrence, const TreeParams& params) {
  validate(params);
  if (x.rows() == 0) throw ValidationError("grow: empty dataset");
  if (static_cast<std::size_t>(x.rows()) != occurrence.size())
    throw ValidationError("grow: occurrence length does not match rows");

  std::vector<TreeNode> nodes;
  struct Pending {
    std::vector<std::size_t> rows;
    std::uint64_t id;
    int depth;
    int parent;
    bool is_left;
  };
  std::vector<std::size_t> all(static_cast<std::size_t>(x.rows()));
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  std::vector<Pending> stack;
  stack.push_back({std::move(all), 1, 0, -1, false});

  while (!stack.empty()) {
    Pending cur = std::move(stack.back());
    stack.pop_back();
    TreeNode nd;
    nd.id = cur.id;
    nd.depth = cur.depth;
    nd.n = cur.rows.size();
    for (auto r : cur.rows) nd.n_positive += static_cast<std::size_t>(occurrence[r] != 0);
    nd.impurity = impurity(params.split_impurity, nd.positive_fraction());
    const int index = static_cast<int>(nodes.size());
    if (cur.parent >= 0) (cur.is_left ? nodes[static_cast<std::size_t>(cur.parent)].left
                                      : nodes[static_cast<std::size_t>(cur.parent)].right) = index;

    std::optional<SplitCandidate> cand;
    if (cur.depth < params.maxdepth && nd.n >= static_cast<std::size_t>(params.minsplit))
      cand = best_split(x, occurrence, cur.rows, params.split_impurity);
    if (cand) nd.split = cand->rule;
    nodes.push_back(nd);
    if (!cand) continue;

    std::vector<std::size_t> left, right;
    for (auto r : cur.rows)
      (cand->rule.goes_left(x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(cand->rule.feature))) ? left
                                                                                                           : right)
          .push_back(r);
    // right pushed first so the left subtree is laid out first (preorder)
    stack.push_back({std::move(right), 2 * cur.id + 1, cur.depth + 1, index, false});
    stack.push_back({std::move(left), 2 * cur.id, cur.depth + 1, index, true});
  }
  return Tree(std::move(nodes), params, static_cast<std::size_t>(x.cols()));
}

inline Tree grow(const Dataset& ds, const TreeParams& params) {
  if (ds.n() == 0) throw ValidationError("grow: empty dataset");
  const auto occ = ds.occurrence();
  return grow(ds.x, occ, params);
}

// Smallest subtree of `tree` minimizing C_alpha(T) = sum_m L_m(T) + alpha |T|
// with L_m = (n_m / N) Mis(p_m). A branch is collapsed only when doing so
// strictly lowers the cost, so alpha = 0 keeps the tree intact.
inline Tree prune(const Tree& tree, double alpha) {
  if (!(alpha >= 0.0)) throw DomainError("prune: alpha must be >= 0");
  const auto& src = tree.nodes();
  // Work in units of misclassified rows: cost = M + a * k with a = alpha * N.
  const double a = alpha * static_cast<double>(tree.root().n);

  struct Best {
    std::size_t misclassified = 0;
    std::size_t leaves = 0;
    bool collapse = false;
  };
  std::vector<Best> best(src.size());
  // children always follow their parent in `nodes`, so a reverse sweep is bottom-up
  for (std::size_t i = src.size(); i-- > 0;) {
    const auto& nd = src[i];
    if (nd.is_terminal()) {
      best[i] = {nd.misclassified(), 1, false};
      continue;
    }
    const auto& l = best[static_cast<std::size_t>(nd.left)];
    const auto& r = best[static_cast<std::size_t>(nd.right)];
    const std::size_t m_sub = l.misclassified + r.misclassified;
    const std::size_t k_sub = l.leaves + r.leaves;
    const double gain = static_cast<double>(nd.misclassified()) - static_cast<double>(m_sub);
    if (gain < a * static_cast<double>(k_sub - 1))
      best[i] = {nd.misclassified(), 1, true};
    else
      best[i] = {m_sub, k_sub, false};
  }

  std::vector<TreeNode> out;
  std::vector<std::pair<std::size_t, int>> stack{{0, -1}};
  std::vector<bool> is_left_child{false};
  while (!stack.empty()) {
    auto [i, parent] = stack.back();
    stack.pop_back();
    const bool left_child = is_left_child.back();
    is_left_child.pop_back();
    TreeNode nd = src[i];
    const int index = static_cast<int>(out.size());
    if (parent >= 0) (left_child ? out[static_cast<std::size_t>(parent)].left : out[static_cast<std::size_t>(parent)].right) = index;
    const bool keep_split = !nd.is_terminal() && !best[i].collapse;
    const int l = nd.left, r = nd.right;
    nd.left = nd.right = -1;
    if (!keep_split) nd.split.reset();
    out.push_back(nd);
    if (keep_split) {
      stack.emplace_back(static_cast<std::size_t>(r), index);
      is_left_child.push_back(false);
      stack.emplace_back(static_cast<std::size_t>(l), index);
      is_left_child.push_back(true);
    }
  }
  return Tree(std::move(out), tree.params(), tree.n_features());
}

// cp is alpha expressed as a fraction of the root's misclassification loss.
inline double cp_to_alpha(const Tree& tree, double cp) {
  const auto& root = tree.root();
  return cp * static_cast<double>(root.misclassified()) / static_cast<double>(root.n);
}

inline Tree prune_cp(const Tree& tree, double cp) { return prune(tree, cp_to_alpha(tree, cp)); }

// Impurity decrease attributable to each feature, rescaled so the largest is 100.
inline std::vector<double> variable_importance(const Tree& tree) {
  std::vector<double> imp(tree.n_features(), 0.0);
  const auto& nodes = tree.nodes();
  const double total = static_cast<double>(tree.root().n);
  for (const auto& nd : nodes) {
    if (nd.is_terminal()) continue;
    const auto& l = nodes[static_cast<std::size_t>(nd.left)];
    const auto& r = nodes[static_cast<std::size_t>(nd.right)];
    const double children = (static_cast<double>(l.n) * l.impurity + static_cast<double>(r.n) * r.impurity) /
                            static_cast<double>(nd.n);
    imp[nd.split->feature] += static_cast<double>(nd.n) / total * std::max(0.0, nd.impurity - children);
  }
  const double top = imp.empty() ? 0.0 : *std::max_element(imp.begin(), imp.end());
  if (top > 0.0)
    for (auto& v : imp) v = 100.0 * v / top;
  return imp;
}

inline std::map<std::string, double> variable_importance(const Tree& tree, std::span<const std::string> names) {
  if (names.size() != tree.n_features()) throw ValidationError("variable_importance: name count mismatch");
  const auto imp = variable_importance(tree);
  std::map<std::string, double> out;
  for (std::size_t j = 0; j < imp.size(); ++j) out[std::string(names[j])] = imp[j];
  return out;
}

namespace detail {
inline std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}
}  // namespace detail

// Graphviz text. Node labels carry id, size, positive fraction and the split rule;
// `highlight` lists node ids to fill.
inline std::string to_dot(const Tree& tree, std::span<const std::string> feature_names,
                          std::span<const std::uint64_t> highlight = {}) {
  std::ostringstream os;
  os << "digraph hybridtree {\n";
  os << "  node [shape=box, style=\"rounded\", fontname=\"Helvetica\"];\n";
  os << "  edge [fontname=\"Helvetica\"];\n";
  const auto& nodes = tree.nodes();
  for (const auto& nd : nodes) {
    char frac[32];
    std::snprintf(frac, sizeof(frac), "%.3f", nd.positive_fraction());
    std::string label = "node " + std::to_string(nd.id) + "\\nn = " + std::to_string(nd.n) +
                        "\\npositive = " + frac;
    if (nd.split) {
      const auto f = nd.split->feature;
      const std::string name = f < feature_names.size() ? feature_names[f] : "x" + std::to_string(f);
      label += "\\n" + detail::dot_escape(name) + " < " + hybridtree::detail::format_double(nd.split->threshold);
    } else {
      label += std::string("\\nclass = ") + (nd.beta_f() ? "1" : "0");
    }
    os << "  n" << nd.id << " [label=\"" << label << "\"";
    if (std::find(highlight.begin(), highlight.end(), nd.id) != highlight.end())
      os << ", style=\"rounded,filled\", fillcolor=\"lightblue\"";
    os << "];\n";
  }
  for (const auto& nd : nodes) {
    if (nd.is_terminal()) continue;
    os << "  n" << nd.id << " -> n" << nodes[static_cast<std::size_t>(nd.left)].id << " [label=\"yes\"];\n";
    os << "  n" << nd.id << " -> n" << nodes[static_cast<std::size_t>(nd.right)].id << " [label=\"no\"];\n";
  }
  os << "}\n";
  return os.str();
}

inline nlohmann::json tree_to_json(const Tree& tree) {
  const auto& nodes = tree.nodes();
  auto node_json = [&](auto&& self, std::size_t i) -> nlohmann::json {
    const auto& nd = nodes[i];
    nlohmann::json j{{"id", nd.id},
                     {"depth", nd.depth},
                     {"n", nd.n},
                     {"n_positive", nd.n_positive},
                     {"impurity", nd.impurity},
                     {"beta_f", nd.beta_f()}};
    if (nd.split) {
      j["split"] = {{"feature", nd.split->feature}, {"threshold", nd.split->threshold}};
      j["left"] = self(self, static_cast<std::size_t>(nd.left));
      j["right"] = self(self, static_cast<std::size_t>(nd.right));
    }
    return j;
  };
  const auto& p = tree.params();
  return {{"params",
           {{"cp", p.cp}, {"maxdepth", p.maxdepth}, {"minsplit", p.minsplit},
            {"split_impurity", to_string(p.split_impurity)}}},
          {"n_features", tree.n_features()},
          {"root", node_json(node_json, 0)}};
}

inline Tree tree_from_json(const nlohmann::json& j) {
  try {
    TreeParams p;
    const auto& pj = j.at("params");
    p.cp = pj.at("cp").get<double>();
    p.maxdepth = pj.at("maxdepth").get<int>();
    p.minsplit = pj.at("minsplit").get<int>();
    p.split_impurity = impurity_from_string(pj.at("split_impurity").get<std::string>());
    const auto n_features = j.at("n_features").get<std::size_t>();
    std::vector<TreeNode> nodes;
    auto read = [&](auto&& self, const nlohmann::json& nj) -> int {
      TreeNode nd;
      nd.id = nj.at("id").get<std::uint64_t>();
      nd.depth = nj.at("depth").get<int>();
      nd.n = nj.at("n").get<std::size_t>();
      nd.n_positive = nj.at("n_positive").get<std::size_t>();
      nd.impurity = nj.at("impurity").get<double>();
      if (nd.n_positive > nd.n) throw IngestionError("tree node " + std::to_string(nd.id) + ": n_positive > n");
      const int index = static_cast<int>(nodes.size());
      if (nj.contains("split")) {
        nd.split = SplitRule{nj.at("split").at("feature").get<std::size_t>(),
                             nj.at("split").at("threshold").get<double>()};
        if (nd.split->feature >= n_features)
          throw IngestionError("tree node " + std::to_string(nd.id) + ": split feature out of range");
      }
      nodes.push_back(nd);
      if (nd.split) {
        const int l = self(self, nj.at("left"));
        const int r = self(self, nj.at("right"));
        nodes[static_cast<std::size_t>(index)].left = l;
        nodes[static_cast<std::size_t>(index)].right = r;
      }
      return index;
    };
    read(read, j.at("root"));
    return Tree(std::move(nodes), p, n_features);
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError(std::string("malformed tree: ") + e.what());
  }
}

}  // namespace hybridtree::cart
