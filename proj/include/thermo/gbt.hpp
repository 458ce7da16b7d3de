#pragma once

// Gradient-boosted regression trees with the regularized second-order
// objective: squared-error loss, exact greedy split search, L2-penalized
// leaf weights, split penalty gamma, row subsampling and shrinkage.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "thermo/common.hpp"
#include "thermo/model_io.hpp"
#include "thermo/regress.hpp"
#include "thermo/telemetry.hpp"

namespace thermo::gbt {

// Defaults are the grid-searched optimum; lambda is the conventional 1.
struct Hyper {
  double eta = 0.1;               // learning rate (shrinkage)
  double gamma = 0.5;             // minimum loss reduction to split
  double lambda = 1.0;            // L2 penalty on leaf weights
  int max_depth = 4;
  double min_child_weight = 4.0;  // minimum hessian sum per child
  double subsample = 1.0;         // row fraction per round, in (0, 1]
  int rounds = 100;
  bool early_stopping = false;    // stop on a held-out split of the training rows
  int patience = 10;
  double holdout = 0.1;

  void validate() const {
    if (!(eta > 0.0)) throw InvalidArgument("gbt: eta must be > 0");
    if (!(gamma >= 0.0)) throw InvalidArgument("gbt: gamma must be >= 0");
    if (!(lambda >= 0.0)) throw InvalidArgument("gbt: lambda must be >= 0");
    if (max_depth < 1) throw InvalidArgument("gbt: max_depth must be >= 1");
    if (!(min_child_weight >= 0.0)) throw InvalidArgument("gbt: min_child_weight must be >= 0");
    if (!(subsample > 0.0 && subsample <= 1.0)) throw InvalidArgument("gbt: subsample must be in (0, 1]");
    if (rounds < 0) throw InvalidArgument("gbt: rounds must be >= 0");
    if (early_stopping && (patience < 1 || !(holdout > 0.0 && holdout < 1.0))) {
      throw InvalidArgument("gbt: early stopping needs patience >= 1 and holdout in (0, 1)");
    }
  }

  // Named access used by grid search and config files.
  void set(const std::string& name, double v) {
    if (name == "eta") eta = v;
    else if (name == "gamma") gamma = v;
    else if (name == "lambda") lambda = v;
    else if (name == "max_depth") max_depth = static_cast<int>(v);
    else if (name == "min_child_weight") min_child_weight = v;
    else if (name == "subsample") subsample = v;
    else if (name == "rounds") rounds = static_cast<int>(v);
    else throw InvalidArgument("unknown gbt hyperparameter: " + name);
  }

  bool operator==(const Hyper&) const = default;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  bool default_left = false;  // side taken by a missing value
  double weight = 0.0;        // leaf weight (unscaled by eta)

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  std::size_t leaf_index(std::span<const double> x) const {
    std::size_t i = 0;
    while (!nodes[i].is_leaf()) {
      const auto& n = nodes[i];
      const double v = x[static_cast<std::size_t>(n.feature)];
      const bool go_left = std::isnan(v) ? n.default_left : v < n.threshold;
      i = static_cast<std::size_t>(go_left ? n.left : n.right);
    }
    return i;
  }

  double eval(std::span<const double> x) const { return nodes[leaf_index(x)].weight; }

  std::size_t depth(std::size_t i = 0) const {
    const auto& n = nodes[i];
    if (n.is_leaf()) return 0;
    return 1 + std::max(depth(static_cast<std::size_t>(n.left)), depth(static_cast<std::size_t>(n.right)));
  }

  std::size_t internal_count() const {
    return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return !n.is_leaf(); }));
  }

  bool operator==(const Tree&) const = default;
};

struct TreeEnsemble {
  std::vector<Tree> trees;
  double base_score = 0.0;
  Hyper hyper;
  std::vector<std::string> feature_names;
  Bounds target_bounds;

  // base_score + eta * sum of the first `count` trees.
  double predict_prefix(std::span<const double> x, std::size_t count) const {
    if (x.size() != feature_names.size()) {
      throw InvalidArgument(concat("gbt expects ", feature_names.size(), " features, got ", x.size()));
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < std::min(count, trees.size()); ++k) sum += trees[k].eval(x);
    return base_score + hyper.eta * sum;
  }

  double predict(std::span<const double> x) const { return predict_prefix(x, trees.size()); }

  bool operator==(const TreeEnsemble&) const = default;
};

inline double predict(const TreeEnsemble& m, std::span<const double> x) { return m.predict(x); }

// Handed to a training observer after each round is grown.
struct RoundInfo {
  std::size_t round = 0;
  std::span<const double> gradients;  // per training row, at the start of the round
  std::span<const double> hessians;
  std::span<const std::size_t> sampled_rows;
  const Tree* tree = nullptr;
  std::map<std::size_t, std::vector<std::size_t>> leaf_members;  // leaf node -> sampled rows
};

using RoundObserver = std::function<void(const RoundInfo&)>;

namespace detail {

struct NodeStats {
  double g = 0.0;
  double h = 0.0;
};

struct Split {
  bool found = false;
  std::size_t feature = 0;
  double threshold = 0.0;
  double gain = 0.0;
  NodeStats left, right;
};

inline double leaf_weight(const NodeStats& s, double lambda) {
  const double denom = s.h + lambda;
  return denom > 0.0 ? -s.g / denom : 0.0;
}

inline double score(double g, double h, double lambda) {
  const double denom = h + lambda;
  return denom > 0.0 ? g * g / denom : 0.0;
}

// Grows one tree level by level. For every level each feature's presorted
// row order is scanned once; each frontier node keeps its own running
// left-hand sums, so a candidate is evaluated exactly at the boundaries
// between distinct values inside that node.
class TreeGrower {
 public:
  TreeGrower(const Dataset& d, const std::vector<std::vector<std::size_t>>& sorted, const Hyper& hp)
      : d_(d), sorted_(sorted), hp_(hp) {}

  Tree grow(std::span<const double> g, std::span<const double> h, std::span<const std::size_t> rows,
            std::map<std::size_t, std::vector<std::size_t>>* members) {
    Tree tree;
    tree.nodes.emplace_back();
    node_of_.assign(d_.rows(), -1);
    NodeStats root;
    for (auto i : rows) {
      node_of_[i] = 0;
      root.g += g[i];
      root.h += h[i];
    }
    std::vector<int> frontier = {0};
    std::vector<NodeStats> stats = {root};

    for (int depth = 0; depth < hp_.max_depth && !frontier.empty(); ++depth) {
      auto splits = find_splits(frontier, stats, g, h);
      std::vector<int> next;
      std::vector<NodeStats> next_stats(stats.size());
      for (std::size_t k = 0; k < frontier.size(); ++k) {
        if (!splits[k].found) continue;
        const int id = frontier[k];
        const int l = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes.emplace_back();
        auto& n = tree.nodes[static_cast<std::size_t>(id)];
        n.feature = static_cast<int>(splits[k].feature);
        n.threshold = splits[k].threshold;
        n.left = l;
        n.right = l + 1;
        next.push_back(l);
        next.push_back(l + 1);
        if (next_stats.size() < tree.nodes.size()) next_stats.resize(tree.nodes.size());
        next_stats[static_cast<std::size_t>(l)] = splits[k].left;
        next_stats[static_cast<std::size_t>(l) + 1] = splits[k].right;
      }
      if (next.empty()) break;
      for (auto i : rows) {
        const auto& n = tree.nodes[static_cast<std::size_t>(node_of_[i])];
        if (n.is_leaf()) continue;
        node_of_[i] = d_.at(i, static_cast<std::size_t>(n.feature)) < n.threshold ? n.left : n.right;
      }
      // stats indexed by frontier slot for the next level
      std::vector<NodeStats> slot_stats;
      for (int id : next) slot_stats.push_back(next_stats[static_cast<std::size_t>(id)]);
      frontier = std::move(next);
      stats = std::move(slot_stats);
    }

    // Leaf weights from the final membership.
    std::vector<NodeStats> acc(tree.nodes.size());
    for (auto i : rows) {
      auto& s = acc[static_cast<std::size_t>(node_of_[i])];
      s.g += g[i];
      s.h += h[i];
      if (members) (*members)[static_cast<std::size_t>(node_of_[i])].push_back(i);
    }
    for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
      if (tree.nodes[k].is_leaf()) tree.nodes[k].weight = leaf_weight(acc[k], hp_.lambda);
    }
    return tree;
  }

 private:
  std::vector<Split> find_splits(const std::vector<int>& frontier, const std::vector<NodeStats>& totals,
                                 std::span<const double> g, std::span<const double> h) {
    const std::size_t m = frontier.size();
    std::vector<Split> best(m);
    slot_of_.assign(static_cast<std::size_t>(*std::max_element(frontier.begin(), frontier.end())) + 1, -1);
    for (std::size_t k = 0; k < m; ++k) slot_of_[static_cast<std::size_t>(frontier[k])] = static_cast<int>(k);

    std::vector<NodeStats> left(m);
    std::vector<double> last(m);
    std::vector<char> seen(m);
    for (std::size_t f = 0; f < d_.cols(); ++f) {
      std::fill(left.begin(), left.end(), NodeStats{});
      std::fill(seen.begin(), seen.end(), 0);
      for (auto i : sorted_[f]) {
        const int node = node_of_[i];
        if (node < 0 || static_cast<std::size_t>(node) >= slot_of_.size()) continue;
        const int slot = slot_of_[static_cast<std::size_t>(node)];
        if (slot < 0) continue;
        const auto s = static_cast<std::size_t>(slot);
        const double v = d_.at(i, f);
        if (seen[s] && v > last[s]) consider(best[s], f, last[s], v, left[s], totals[s]);
        left[s].g += g[i];
        left[s].h += h[i];
        last[s] = v;
        seen[s] = 1;
      }
    }
    return best;
  }

  void consider(Split& best, std::size_t f, double lo, double hi, const NodeStats& l, const NodeStats& total) const {
    const NodeStats r{total.g - l.g, total.h - l.h};
    if (l.h < hp_.min_child_weight || r.h < hp_.min_child_weight) return;
    const double gain = 0.5 * (score(l.g, l.h, hp_.lambda) + score(r.g, r.h, hp_.lambda) -
                               score(total.g, total.h, hp_.lambda)) -
                        hp_.gamma;
    if (!(gain > 0.0) || (best.found && !(gain > best.gain))) return;
    double thr = lo + (hi - lo) * 0.5;
    if (!(thr > lo)) thr = hi;  // adjacent doubles
    best = {true, f, thr, gain, l, r};
  }

  const Dataset& d_;
  const std::vector<std::vector<std::size_t>>& sorted_;
  const Hyper& hp_;
  std::vector<int> node_of_;
  std::vector<int> slot_of_;
};

inline std::vector<std::vector<std::size_t>> presort(const Dataset& d) {
  std::vector<std::vector<std::size_t>> sorted(d.cols());
  for (std::size_t f = 0; f < d.cols(); ++f) {
    auto& idx = sorted[f];
    idx.resize(d.rows());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return d.at(a, f) < d.at(b, f); });
  }
  return sorted;
}

inline TreeEnsemble fit(const Dataset& d, const Hyper& hp, std::uint64_t seed, const RoundObserver& observer,
                        const Dataset* holdout) {
  TreeEnsemble m;
  m.hyper = hp;
  m.feature_names = d.feature_names;
  m.target_bounds = d.target_bounds;
  const std::size_t n = d.rows();
  m.base_score = std::accumulate(d.target.begin(), d.target.end(), 0.0) / static_cast<double>(n);

  const auto sorted = presort(d);
  TreeGrower grower(d, sorted, hp);
  std::vector<double> pred(n, m.base_score);
  std::vector<double> grad(n), hess(n, 1.0);
  std::vector<double> hold_pred;
  if (holdout) hold_pred.assign(holdout->rows(), m.base_score);
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t best_count = 0;
  int since_best = 0;

  Rng rng(seed);
  std::vector<std::size_t> rows;
  for (int round = 0; round < hp.rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) grad[i] = pred[i] - d.target[i];
    rows.clear();
    if (hp.subsample >= 1.0) {
      rows.resize(n);
      std::iota(rows.begin(), rows.end(), 0);
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        if (uniform01(rng) < hp.subsample) rows.push_back(i);
      }
    }
    std::map<std::size_t, std::vector<std::size_t>> members;
    m.trees.push_back(grower.grow(grad, hess, rows, observer ? &members : nullptr));
    const Tree& tree = m.trees.back();
    if (observer) {
      RoundInfo info;
      info.round = static_cast<std::size_t>(round);
      info.gradients = grad;
      info.hessians = hess;
      info.sampled_rows = rows;
      info.tree = &tree;
      info.leaf_members = std::move(members);
      observer(info);
    }
    for (std::size_t i = 0; i < n; ++i) pred[i] += hp.eta * tree.eval(d.row(i));

    if (holdout) {
      double ss = 0.0;
      for (std::size_t i = 0; i < holdout->rows(); ++i) {
        hold_pred[i] += hp.eta * tree.eval(holdout->row(i));
        const double r = hold_pred[i] - holdout->target[i];
        ss += r * r;
      }
      if (ss < best_loss) {
        best_loss = ss;
        best_count = m.trees.size();
        since_best = 0;
      } else if (++since_best >= hp.patience) {
        break;
      }
    }
  }
  if (holdout) m.trees.resize(best_count);
  return m;
}

}  // namespace detail

// Trains an ensemble on the dataset. The observer, when given, sees every
// round's gradients and leaf membership.
inline TreeEnsemble train(const Dataset& d, const Hyper& hp, std::uint64_t seed, const RoundObserver& observer = {}) {
  hp.validate();
  d.validate();
  if (d.rows() < 2) throw InvalidArgument("gbt: need at least 2 rows");
  if (!hp.early_stopping) return detail::fit(d, hp, seed, observer, nullptr);

  std::vector<std::size_t> order(d.rows());
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(seed ^ 0x9e3779b97f4a7c15ULL);
  shuffle(order, split_rng);
  const auto n_hold = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(hp.holdout * static_cast<double>(d.rows()))));
  if (n_hold >= d.rows() - 1) throw InvalidArgument("gbt: too few rows for an early-stopping holdout");
  std::vector<std::size_t> hold(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_hold));
  std::vector<std::size_t> fit_rows(order.begin() + static_cast<std::ptrdiff_t>(n_hold), order.end());
  std::sort(hold.begin(), hold.end());
  std::sort(fit_rows.begin(), fit_rows.end());
  const auto holdout = d.subset_rows(hold);
  auto m = detail::fit(d.subset_rows(fit_rows), hp, seed, observer, &holdout);
  m.target_bounds = d.target_bounds;
  return m;
}

inline Trainer trainer(const Hyper& hp) {
  return [hp](const Dataset& d, std::uint64_t seed) -> Regressor {
    return [m = train(d, hp, seed)](std::span<const double> x) { return m.predict(x); };
  };
}

// Number of internal nodes splitting on each feature; unused features are
// present with 0.
inline std::map<std::string, std::size_t> feature_importance(const TreeEnsemble& m) {
  std::map<std::string, std::size_t> out;
  for (const auto& name : m.feature_names) out[name] = 0;
  for (const auto& t : m.trees) {
    for (const auto& n : t.nodes) {
      if (!n.is_leaf()) ++out[m.feature_names.at(static_cast<std::size_t>(n.feature))];
    }
  }
  return out;
}

// Feature names by descending importance, ties in column order.
inline std::vector<std::string> rank_features(const TreeEnsemble& m) {
  const auto imp = feature_importance(m);
  std::vector<std::string> names = m.feature_names;
  std::stable_sort(names.begin(), names.end(),
                   [&](const std::string& a, const std::string& b) { return imp.at(a) > imp.at(b); });
  return names;
}

using Grid = std::map<std::string, std::vector<double>>;

struct GridResult {
  Hyper best;
  CvReport report;
  std::vector<std::pair<Hyper, CvReport>> cells;  // enumeration order
};

// Exhaustive search over the Cartesian product, parameters enumerated in
// name order (last name varies fastest). The first cell with the lowest
// mean CV RMSE wins.
inline GridResult grid_search(const Dataset& d, const Grid& grid, std::size_t k, std::uint64_t seed,
                              const Hyper& base = {}) {
  if (grid.empty()) throw InvalidArgument("grid_search: empty grid");
  for (const auto& [name, values] : grid) {
    if (values.empty()) throw InvalidArgument("grid_search: no values for " + name);
  }
  std::vector<std::pair<std::string, std::vector<double>>> axes(grid.begin(), grid.end());
  std::vector<std::size_t> pos(axes.size(), 0);
  GridResult res;
  bool have = false;
  while (true) {
    Hyper hp = base;
    for (std::size_t a = 0; a < axes.size(); ++a) hp.set(axes[a].first, axes[a].second[pos[a]]);
    hp.validate();
    auto rep = kfold_cv(d, k, trainer(hp), seed, "gbt");
    if (!have || rep.mean_rmse < res.report.mean_rmse) {
      res.best = hp;
      res.report = rep;
      have = true;
    }
    res.cells.emplace_back(hp, std::move(rep));
    std::size_t a = axes.size();
    while (a > 0) {
      --a;
      if (++pos[a] < axes[a].second.size()) break;
      pos[a] = 0;
      if (a == 0) return res;
    }
    if (axes.empty()) return res;
  }
}

struct CurvePoint {
  std::size_t n_features = 0;
  double mean_rmse = 0.0;
};

// CV RMSE using the top-n ranked features, n = 1..N.
inline std::vector<CurvePoint> threshold_curve(const Dataset& d, const std::vector<std::string>& ranked,
                                               std::size_t k, std::uint64_t seed, const Hyper& hp = {}) {
  std::vector<CurvePoint> out;
  std::vector<std::size_t> cols;
  for (const auto& name : ranked) {
    cols.push_back(d.column_index(name));
    const auto sub = d.select_columns(cols);
    out.push_back({cols.size(), kfold_cv(sub, k, trainer(hp), seed).mean_rmse});
  }
  return out;
}

// ---------------------------------------------------------------------------
// model file
// ---------------------------------------------------------------------------

namespace detail {

inline void dump_node(io::Writer& w, const Tree& t, std::size_t i) {
  const auto& n = t.nodes[i];
  if (n.is_leaf()) {
    w.field("leaf", n.weight);
    return;
  }
  w.field("split", n.feature, n.threshold, n.default_left ? "left" : "right");
  dump_node(w, t, static_cast<std::size_t>(n.left));
  dump_node(w, t, static_cast<std::size_t>(n.right));
}

inline int load_node(io::Reader& r, Tree& t, std::size_t n_features, int depth) {
  if (depth > 64) r.fail("tree too deep");
  const int id = static_cast<int>(t.nodes.size());
  t.nodes.emplace_back();
  if (r.peek_key() == "leaf") {
    t.nodes.back().weight = r.number("leaf");
    return id;
  }
  auto tok = r.expect("split");
  if (tok.size() != 3) r.fail("split takes feature threshold default");
  const double f = r.to_number(tok[0], "split");
  if (f < 0 || f != std::floor(f) || f >= static_cast<double>(n_features)) r.fail("split feature out of range");
  if (tok[2] != "left" && tok[2] != "right") r.fail("split default must be left or right");
  {
    auto& n = t.nodes.back();
    n.feature = static_cast<int>(f);
    n.threshold = r.to_number(tok[1], "split");
    n.default_left = tok[2] == "left";
  }
  const int l = load_node(r, t, n_features, depth + 1);
  const int rr = load_node(r, t, n_features, depth + 1);
  t.nodes[static_cast<std::size_t>(id)].left = l;
  t.nodes[static_cast<std::size_t>(id)].right = rr;
  return id;
}

// Rebuilds the node array in pre-order so a loaded tree compares equal to
// a re-saved one regardless of the training layout.
inline Tree canonical(const Tree& t) {
  Tree out;
  std::function<int(std::size_t)> copy = [&](std::size_t i) -> int {
    const int id = static_cast<int>(out.nodes.size());
    out.nodes.push_back(t.nodes[i]);
    if (!t.nodes[i].is_leaf()) {
      const int l = copy(static_cast<std::size_t>(t.nodes[i].left));
      const int r = copy(static_cast<std::size_t>(t.nodes[i].right));
      out.nodes[static_cast<std::size_t>(id)].left = l;
      out.nodes[static_cast<std::size_t>(id)].right = r;
    } else {
      out.nodes[static_cast<std::size_t>(id)].threshold = 0.0;
    }
    return id;
  };
  copy(0);
  return out;
}

}  // namespace detail

// Self-describing text dump: header, hyperparameters, then each tree in
// pre-order ("split <feature> <threshold> <default>" / "leaf <weight>").
inline std::string serialize(const TreeEnsemble& m) {
  io::Writer w;
  thermo::detail::write_header(w, "gbt", m.feature_names, m.target_bounds);
  w.field("base_score", m.base_score);
  const auto& h = m.hyper;
  w.field("eta", h.eta);
  w.field("gamma", h.gamma);
  w.field("lambda", h.lambda);
  w.field("max_depth", h.max_depth);
  w.field("min_child_weight", h.min_child_weight);
  w.field("subsample", h.subsample);
  w.field("rounds", h.rounds);
  w.field("trees", m.trees.size());
  for (std::size_t k = 0; k < m.trees.size(); ++k) {
    w.field("tree", k);
    detail::dump_node(w, m.trees[k], 0);
  }
  return w.str();
}

inline TreeEnsemble read_gbt_body(io::Reader& r, std::vector<std::string> names, Bounds tb) {
  TreeEnsemble m;
  m.feature_names = std::move(names);
  m.target_bounds = tb;
  m.base_score = r.number("base_score");
  m.hyper.eta = r.number("eta");
  m.hyper.gamma = r.number("gamma");
  m.hyper.lambda = r.number("lambda");
  m.hyper.max_depth = static_cast<int>(r.integer("max_depth"));
  m.hyper.min_child_weight = r.number("min_child_weight");
  m.hyper.subsample = r.number("subsample");
  m.hyper.rounds = static_cast<int>(r.integer("rounds"));
  const auto n_trees = r.integer("trees");
  if (n_trees < 0) r.fail("negative tree count");
  for (std::int64_t k = 0; k < n_trees; ++k) {
    if (r.integer("tree") != k) r.fail("tree index out of sequence");
    Tree t;
    detail::load_node(r, t, m.feature_names.size(), 0);
    m.trees.push_back(std::move(t));
  }
  return m;
}

inline TreeEnsemble parse_gbt_model(std::string_view text) {
  io::Reader r(text, "gbt model");
  std::vector<std::string> names;
  Bounds tb;
  if (read_model_header(r, names, tb) != "gbt") r.fail("not a gbt model");
  auto m = read_gbt_body(r, std::move(names), tb);
  if (!r.done()) r.fail("trailing content after last tree");
  return m;
}

// Same ensemble with every tree in pre-order layout (what parse returns).
inline TreeEnsemble canonical(const TreeEnsemble& m) {
  TreeEnsemble out = m;
  for (auto& t : out.trees) t = detail::canonical(t);
  return out;
}

}  // namespace thermo::gbt
