#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. Deliberately naive: exhaustive scans, dense grids, closed forms.

#include <Eigen/Dense>
#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "hybridtree/cart.hpp"

namespace oracle {

struct ClassificationData {
  Eigen::MatrixXd x;
  std::vector<int> occ;
};

// Mix of coarse integer features (many ties) and continuous ones, with an
// occurrence label loosely driven by the first two columns.
inline ClassificationData random_classification(std::mt19937_64& rng, int n, int p) {
  ClassificationData d;
  d.x.resize(n, p);
  d.occ.resize(static_cast<std::size_t>(n));
  std::normal_distribution<double> nd;
  std::uniform_int_distribution<int> level(-3, 4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int j = 0; j < p; ++j) {
    const bool coarse = (j % 2 == 1);
    for (int i = 0; i < n; ++i) d.x(i, j) = coarse ? static_cast<double>(level(rng)) : nd(rng);
  }
  for (int i = 0; i < n; ++i) {
    double eta = d.x(i, 0) + (p > 1 ? 0.5 * d.x(i, 1) : 0.0) + nd(rng);
    d.occ[static_cast<std::size_t>(i)] = (eta > 0.3 || u(rng) < 0.1) ? 1 : 0;
  }
  return d;
}

struct Split {
  std::size_t feature;
  double threshold;
};

// Exhaustive Gini split search in exact rational arithmetic. Every row is
// re-scanned for every candidate threshold.
inline std::optional<Split> brute_force_split(const Eigen::MatrixXd& x, const std::vector<int>& occ) {
  const auto n = static_cast<long long>(occ.size());
  long long pos = 0;
  for (int v : occ) pos += v;
  std::optional<Split> best;
  __int128 best_num = 0, best_den = 1;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    std::set<double> values(x.col(j).data(), x.col(j).data() + x.rows());
    for (auto it = values.begin(); std::next(it) != values.end(); ++it) {
      const double lo = *it, hi = *std::next(it);
      double s = lo + (hi - lo) / 2.0;
      if (!(s > lo)) s = hi;
      long long nl = 0, pl = 0;
      for (Eigen::Index i = 0; i < x.rows(); ++i)
        if (x(i, j) < s) {
          ++nl;
          pl += occ[static_cast<std::size_t>(i)];
        }
      const long long nr = n - nl, pr = pos - pl;
      // n/2 * weighted Gini = pl(nl-pl)/nl + pr(nr-pr)/nr
      const __int128 num = static_cast<__int128>(pl * (nl - pl)) * nr + static_cast<__int128>(pr * (nr - pr)) * nl;
      const __int128 den = static_cast<__int128>(nl) * nr;
      if (!best || num * best_den < best_num * den) {
        best = Split{static_cast<std::size_t>(j), s};
        best_num = num;
        best_den = den;
      }
    }
  }
  if (!best) return std::nullopt;
  // parent: pos(n-pos)/n; require a strict decrease
  if (!(best_num * n < static_cast<__int128>(pos * (n - pos)) * best_den)) return std::nullopt;
  return best;
}

inline std::size_t misclassified(const hybridtree::cart::TreeNode& nd) { return std::min(nd.n_positive, nd.n - nd.n_positive); }

// C_alpha(T) = sum over terminals of (n_m / N) Mis(p_m) + alpha |T|.
inline double subtree_cost(const hybridtree::cart::Tree& t, double alpha) {
  std::size_t m = 0, k = 0;
  for (const auto& nd : t.nodes())
    if (nd.is_terminal()) {
      m += misclassified(nd);
      ++k;
    }
  return static_cast<double>(m) / static_cast<double>(t.root().n) + alpha * static_cast<double>(k);
}

// Every (misclassified, leaves) pair reachable by pruning the subtree at `i`.
inline std::set<std::pair<std::size_t, std::size_t>> subtree_options(const hybridtree::cart::Tree& t, std::size_t i) {
  const auto& nd = t.nodes()[i];
  std::set<std::pair<std::size_t, std::size_t>> out{{misclassified(nd), 1}};
  if (nd.is_terminal()) return out;
  const auto l = subtree_options(t, static_cast<std::size_t>(nd.left));
  const auto r = subtree_options(t, static_cast<std::size_t>(nd.right));
  for (const auto& a : l)
    for (const auto& b : r) out.insert({a.first + b.first, a.second + b.second});
  return out;
}

inline double min_cost_over_subtrees(const hybridtree::cart::Tree& t, double alpha) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [m, k] : subtree_options(t, 0))
    best = std::min(best, static_cast<double>(m) / static_cast<double>(t.root().n) + alpha * static_cast<double>(k));
  return best;
}

// Ten alphas: the weakest-link breakpoints of the full tree first (where
// ties are exact), then random values up to the root loss.
inline std::vector<double> alpha_probes(const hybridtree::cart::Tree& t, std::mt19937_64& rng) {
  std::vector<double> out;
  const double n = static_cast<double>(t.root().n);
  for (std::size_t i = 0; i < t.nodes().size() && out.size() < 5; ++i) {
    const auto& nd = t.nodes()[i];
    if (nd.is_terminal()) continue;
    std::size_t m = 0, k = 0;
    // leaves below nd
    std::vector<std::size_t> stack{i};
    while (!stack.empty()) {
      const auto& c = t.nodes()[stack.back()];
      stack.pop_back();
      if (c.is_terminal()) {
        m += misclassified(c);
        ++k;
      } else {
        stack.push_back(static_cast<std::size_t>(c.left));
        stack.push_back(static_cast<std::size_t>(c.right));
      }
    }
    out.push_back((static_cast<double>(misclassified(nd)) - static_cast<double>(m)) / (n * static_cast<double>(k - 1)));
  }
  std::uniform_real_distribution<double> u(0.0, static_cast<double>(misclassified(t.root())) / n);
  while (out.size() < 10) out.push_back(u(rng));
  return out;
}

// Minimal DOT grammar check for the subset we emit:
//   graph  := 'digraph' ID '{' stmt* '}'
//   stmt   := (ID ('->' ID)? | 'node' | 'edge') attrs? ';'
//   attrs  := '[' (ID '=' (ID | STRING)) (',' ...)* ']'
inline bool dot_is_well_formed(const std::string& text) {
  std::vector<std::string> tok;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == '"') {
      std::string s = "\"";
      ++i;
      bool closed = false;
      while (i < text.size()) {
        if (text[i] == '\\' && i + 1 < text.size()) {
          s += text.substr(i, 2);
          i += 2;
        } else if (text[i] == '"') {
          closed = true;
          ++i;
          break;
        } else {
          s += text[i++];
        }
      }
      if (!closed) return false;
      tok.push_back(s + "\"");
    } else if (c == '-' && i + 1 < text.size() && text[i + 1] == '>') {
      tok.emplace_back("->");
      i += 2;
    } else if (std::string("{}[];=,").find(c) != std::string::npos) {
      tok.emplace_back(1, c);
      ++i;
    } else if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.') {
      std::string s;
      while (i < text.size() && (std::isalnum(static_cast<unsigned char>(text[i])) || text[i] == '_' || text[i] == '.'))
        s += text[i++];
      tok.push_back(s);
    } else {
      return false;
    }
  }
  auto is_id = [](const std::string& s) {
    return !s.empty() && (std::isalnum(static_cast<unsigned char>(s[0])) || s[0] == '_' || s[0] == '"');
  };
  std::size_t p = 0;
  auto take = [&](const std::string& want) {
    if (p < tok.size() && tok[p] == want) {
      ++p;
      return true;
    }
    return false;
  };
  if (!take("digraph") || p >= tok.size() || !is_id(tok[p++]) || !take("{")) return false;
  while (p < tok.size() && tok[p] != "}") {
    if (!is_id(tok[p++])) return false;
    if (take("->") && (p >= tok.size() || !is_id(tok[p++]))) return false;
    if (take("[")) {
      do {
        if (p + 2 >= tok.size() || !is_id(tok[p]) || tok[p + 1] != "=" || !is_id(tok[p + 2])) return false;
        p += 3;
      } while (take(","));
      if (!take("]")) return false;
    }
    if (!take(";")) return false;
  }
  return take("}") && p == tok.size();
}

// Ridge closed form on centered data: (Xc'Xc + lambda I)^{-1} Xc'yc.
inline Eigen::VectorXd ridge_closed_form(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda) {
  const Eigen::RowVectorXd mx = x.colwise().mean();
  const Eigen::MatrixXd xc = x.rowwise() - mx;
  const Eigen::VectorXd yc = y.array() - y.mean();
  const Eigen::MatrixXd a =
      xc.transpose() * xc + lambda * Eigen::MatrixXd::Identity(x.cols(), x.cols());
  return a.fullPivLu().solve(xc.transpose() * yc);
}

// argmin over a dense grid of (beta - t)^2 + lambda |beta|.
inline double grid_argmin_1d(double t, double lambda, double lo, double hi, double step) {
  double best = lo, best_val = std::numeric_limits<double>::infinity();
  const auto steps = static_cast<long long>(std::llround((hi - lo) / step));
  for (long long i = 0; i <= steps; ++i) {
    const double b = lo + static_cast<double>(i) * step;
    const double v = (b - t) * (b - t) + lambda * std::abs(b);
    if (v < best_val) {
      best_val = v;
      best = b;
    }
  }
  return best;
}

// Minimum of the LASSO objective (1/2n)||yc - Xc b||^2 + lambda ||b||_1 over a
// dense grid around `center`, refined twice around the incumbent. The
// intercept is profiled out by centering.
inline double lasso_grid_min(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda,
                             const Eigen::VectorXd& center, double radius) {
  const Eigen::RowVectorXd mx = x.colwise().mean();
  const Eigen::MatrixXd xc = x.rowwise() - mx;
  const Eigen::VectorXd yc = y.array() - y.mean();
  const double n = static_cast<double>(x.rows());
  const auto p = x.cols();
  auto objective = [&](const Eigen::VectorXd& b) {
    return (yc - xc * b).squaredNorm() / (2.0 * n) + lambda * b.lpNorm<1>();
  };
  Eigen::VectorXd incumbent = center;
  double best = objective(center);
  double r = radius;
  const int per_axis = p == 1 ? 4001 : (p == 2 ? 201 : 41);
  for (int round = 0; round < 3; ++round) {
    const Eigen::VectorXd c = incumbent;
    std::vector<int> idx(static_cast<std::size_t>(p), 0);
    while (true) {
      Eigen::VectorXd b(p);
      for (Eigen::Index j = 0; j < p; ++j)
        b[j] = c[j] - r + 2.0 * r * idx[static_cast<std::size_t>(j)] / (per_axis - 1);
      // include exact zeros on each axis, where the L1 kink sits
      for (Eigen::Index j = 0; j < p; ++j)
        if (std::abs(b[j]) < r / (per_axis - 1)) b[j] = 0.0;
      const double v = objective(b);
      if (v < best) {
        best = v;
        incumbent = b;
      }
      std::size_t d = 0;
      while (d < idx.size() && ++idx[d] == per_axis) idx[d++] = 0;
      if (d == idx.size()) break;
    }
    r *= 4.0 / (per_axis - 1);
  }
  return best;
}

}  // namespace oracle
