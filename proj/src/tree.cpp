#include "mmil/tree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace mmil {

int DecisionTree::predict(const Vec& features) const {
  if (nodes.empty()) throw std::logic_error("empty tree");
  std::size_t idx = 0;
  while (!nodes[idx].is_leaf) {
    const auto& n = nodes[idx];
    if (n.feature >= features.size())
      throw std::invalid_argument("tree: feature index out of range");
    idx = features[n.feature] <= n.threshold ? n.left : n.right;
  }
  return nodes[idx].label;
}

std::size_t DecisionTree::leaf_count() const {
  std::size_t count = 0;
  for (const auto& n : nodes)
    if (n.is_leaf) ++count;
  return count;
}

namespace {

double gini(const std::vector<std::size_t>& counts, std::size_t total) {
  if (total == 0) return 0.0;
  double acc = 1.0;
  for (std::size_t c : counts) {
    const double p = static_cast<double>(c) / static_cast<double>(total);
    acc -= p * p;
  }
  return acc;
}

int majority(const std::vector<std::size_t>& counts) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < counts.size(); ++c)
    if (counts[c] > counts[best]) best = c;  // strict: ties keep smaller class
  return static_cast<int>(best);
}

struct Split {
  bool found = false;
  std::size_t feature = 0;
  double threshold = 0.0;
  double impurity = std::numeric_limits<double>::infinity();
};

struct Builder {
  const std::vector<Vec>& features;
  const std::vector<int>& labels;
  const TreeConfig& config;
  std::size_t num_classes;
  DecisionTree tree;

  std::vector<std::size_t> class_counts(
      const std::vector<std::size_t>& idx) const {
    std::vector<std::size_t> counts(num_classes, 0);
    for (std::size_t i : idx)
      ++counts[static_cast<std::size_t>(labels[i])];
    return counts;
  }

  Split best_split(const std::vector<std::size_t>& idx) const {
    Split best;
    const std::size_t n = idx.size();
    const std::size_t dim = features[idx[0]].size();
    std::vector<std::pair<double, int>> column(n);
    for (std::size_t f = 0; f < dim; ++f) {
      for (std::size_t i = 0; i < n; ++i)
        column[i] = {features[idx[i]][f], labels[idx[i]]};
      std::sort(column.begin(), column.end());
      std::vector<std::size_t> left_counts(num_classes, 0);
      std::vector<std::size_t> right_counts(num_classes, 0);
      for (const auto& [v, y] : column)
        ++right_counts[static_cast<std::size_t>(y)];
      for (std::size_t i = 0; i + 1 < n; ++i) {
        const auto y = static_cast<std::size_t>(column[i].second);
        ++left_counts[y];
        --right_counts[y];
        if (column[i].first == column[i + 1].first) continue;
        const std::size_t nl = i + 1, nr = n - nl;
        if (nl < config.min_leaf || nr < config.min_leaf) continue;
        const double impurity =
            (static_cast<double>(nl) * gini(left_counts, nl) +
             static_cast<double>(nr) * gini(right_counts, nr)) /
            static_cast<double>(n);
        // Tie rule: lowest feature index, then lowest threshold; both are
        // covered by the strict < with in-order scanning.
        if (impurity < best.impurity) {
          best.found = true;
          best.feature = f;
          best.threshold = (column[i].first + column[i + 1].first) / 2.0;
          best.impurity = impurity;
        }
      }
    }
    return best;
  }

  std::size_t build(const std::vector<std::size_t>& idx, std::size_t depth) {
    const auto counts = class_counts(idx);
    const std::size_t node_idx = tree.nodes.size();
    tree.nodes.emplace_back();
    tree.nodes[node_idx].label = majority(counts);

    const bool pure = gini(counts, idx.size()) == 0.0;
    const bool depth_ok = config.max_depth == 0 || depth < config.max_depth;
    if (pure || !depth_ok || idx.size() < 2 * config.min_leaf)
      return node_idx;

    const Split split = best_split(idx);
    if (!split.found) return node_idx;

    std::vector<std::size_t> left_idx, right_idx;
    for (std::size_t i : idx) {
      if (features[i][split.feature] <= split.threshold)
        left_idx.push_back(i);
      else
        right_idx.push_back(i);
    }
    const std::size_t left = build(left_idx, depth + 1);
    const std::size_t right = build(right_idx, depth + 1);
    auto& node = tree.nodes[node_idx];
    node.is_leaf = false;
    node.feature = split.feature;
    node.threshold = split.threshold;
    node.left = left;
    node.right = right;
    return node_idx;
  }
};

}  // namespace

DecisionTree tree_fit(const std::vector<Vec>& features,
                      const std::vector<int>& labels,
                      const TreeConfig& config) {
  if (features.empty()) throw std::invalid_argument("tree_fit: empty input");
  if (features.size() != labels.size())
    throw std::invalid_argument("tree_fit: feature/label count mismatch");
  const std::size_t dim = features.front().size();
  int max_label = 0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].size() != dim)
      throw std::invalid_argument("tree_fit: inconsistent widths");
    if (labels[i] < 0) throw std::invalid_argument("tree_fit: negative label");
    max_label = std::max(max_label, labels[i]);
  }

  TreeConfig cfg = config;
  if (cfg.min_leaf == 0) cfg.min_leaf = 1;
  Builder builder{features, labels, cfg,
                  static_cast<std::size_t>(max_label) + 1, {}};
  std::vector<std::size_t> idx(features.size());
  std::iota(idx.begin(), idx.end(), 0);
  builder.build(idx, 0);
  return std::move(builder.tree);
}

}  // namespace mmil
