#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "mmil/rng.hpp"
#include "mmil/tree.hpp"

using namespace mmil;

namespace {

double accuracy_on(const DecisionTree& tree, const std::vector<Vec>& xs,
                   const std::vector<int>& ys) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < xs.size(); ++i)
    hits += tree.predict(xs[i]) == ys[i];
  return static_cast<double>(hits) / static_cast<double>(xs.size());
}

double gini(const std::vector<int>& labels) {
  if (labels.empty()) return 0.0;
  std::vector<std::size_t> counts;
  for (int y : labels) {
    if (counts.size() <= static_cast<std::size_t>(y))
      counts.resize(static_cast<std::size_t>(y) + 1, 0);
    ++counts[static_cast<std::size_t>(y)];
  }
  double g = 1.0;
  for (std::size_t c : counts) {
    const double p = static_cast<double>(c) / static_cast<double>(labels.size());
    g -= p * p;
  }
  return g;
}

// Exhaustive oracle: best achievable accuracy of any depth-<=2 tree with a
// single root split and majority leaves, scanning every feature/threshold.
double best_stump_accuracy(const std::vector<Vec>& xs,
                           const std::vector<int>& ys) {
  double best = 0.0;
  // no split at all
  {
    std::size_t ones = 0;
    for (int y : ys) ones += y;
    best = static_cast<double>(std::max(ones, ys.size() - ones)) /
           static_cast<double>(ys.size());
  }
  const std::size_t dims = xs.front().size();
  for (std::size_t f = 0; f < dims; ++f) {
    std::vector<double> vals;
    for (const auto& x : xs) vals.push_back(x[f]);
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
      const double thr = (vals[i] + vals[i + 1]) / 2.0;
      std::size_t l1 = 0, l0 = 0, r1 = 0, r0 = 0;
      for (std::size_t j = 0; j < xs.size(); ++j) {
        if (xs[j][f] <= thr)
          ys[j] ? ++l1 : ++l0;
        else
          ys[j] ? ++r1 : ++r0;
      }
      const double acc = static_cast<double>(std::max(l0, l1) +
                                             std::max(r0, r1)) /
                         static_cast<double>(xs.size());
      best = std::max(best, acc);
    }
  }
  return best;
}

}  // namespace

TEST_CASE("three points split at the midpoint 1.5") {
  const std::vector<Vec> xs{{0.0}, {1.0}, {2.0}};
  const std::vector<int> ys{0, 0, 1};
  const auto tree = tree_fit(xs, ys, {0, 1});
  REQUIRE(!tree.nodes.empty());
  const auto& root = tree.nodes[0];
  REQUIRE(!root.is_leaf);
  CHECK(root.feature == 0);
  CHECK(root.threshold == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(tree.predict({1.2}) == 0);
  CHECK(tree.predict({1.8}) == 1);
}

TEST_CASE("pure input collapses to a single leaf") {
  const std::vector<Vec> xs{{0.0}, {5.0}, {-2.0}};
  const std::vector<int> ys{1, 1, 1};
  const auto tree = tree_fit(xs, ys);
  CHECK(tree.leaf_count() == 1);
  CHECK(tree.nodes[0].is_leaf);
  CHECK(tree.nodes[0].label == 1);
}

TEST_CASE("majority tie at a leaf picks the smallest class") {
  const std::vector<Vec> xs{{0.0}, {0.0}};
  const std::vector<int> ys{1, 2};
  const auto tree = tree_fit(xs, ys);
  CHECK(tree.nodes[0].is_leaf);
  CHECK(tree.nodes[0].label == 1);
}

TEST_CASE("unlimited depth with min_leaf 1 memorizes consistent data") {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Vec> xs;
    std::vector<int> ys;
    std::set<std::vector<double>> seen;
    while (xs.size() < 30) {
      Vec x{rng.uniform_real(), rng.uniform_real(), rng.uniform_real()};
      if (!seen.insert(x).second) continue;
      ys.push_back(static_cast<int>(rng.uniform_int(0, 2)));
      xs.push_back(std::move(x));
    }
    const auto tree = tree_fit(xs, ys, {0, 1});
    CHECK(accuracy_on(tree, xs, ys) == 1.0);
  }
}

TEST_CASE("depth-1 trees match an exhaustive stump search") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Vec> xs;
    std::vector<int> ys;
    for (int i = 0; i < 40; ++i) {
      xs.push_back({rng.uniform_real(), rng.uniform_real(),
                    rng.uniform_real()});
      ys.push_back(static_cast<int>(rng.uniform_int(0, 1)));
    }
    const auto tree = tree_fit(xs, ys, {1, 1});
    // Gini-optimal and accuracy-optimal stumps can differ, but the root
    // split must at least weakly improve Gini; check the split the tree
    // chose is the Gini-minimal one by scanning all candidates.
    if (tree.nodes[0].is_leaf) continue;
    double best_gini = std::numeric_limits<double>::infinity();
    std::size_t best_f = 0;
    double best_thr = 0.0;
    for (std::size_t f = 0; f < 3; ++f) {
      std::vector<double> vals;
      for (const auto& x : xs) vals.push_back(x[f]);
      std::sort(vals.begin(), vals.end());
      vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
      for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
        const double thr = (vals[i] + vals[i + 1]) / 2.0;
        std::vector<int> left, right;
        for (std::size_t j = 0; j < xs.size(); ++j)
          (xs[j][f] <= thr ? left : right).push_back(ys[j]);
        const double g =
            (gini(left) * static_cast<double>(left.size()) +
             gini(right) * static_cast<double>(right.size())) /
            static_cast<double>(xs.size());
        if (g < best_gini) {
          best_gini = g;
          best_f = f;
          best_thr = thr;
        }
      }
    }
    CHECK(tree.nodes[0].feature == best_f);
    CHECK(tree.nodes[0].threshold == doctest::Approx(best_thr).epsilon(1e-12));
    // And the tree's train accuracy must be within reach of the best stump.
    CHECK(accuracy_on(tree, xs, ys) >= 0.0);
    CHECK(best_stump_accuracy(xs, ys) >= accuracy_on(tree, xs, ys) - 1e-12);
  }
}

TEST_CASE("min_leaf blocks splits that would isolate fewer points") {
  const std::vector<Vec> xs{{0.0}, {1.0}, {2.0}, {3.0}};
  const std::vector<int> ys{0, 0, 0, 1};
  TreeConfig cfg;
  cfg.max_depth = 0;
  cfg.min_leaf = 2;
  const auto tree = tree_fit(xs, ys, cfg);
  // Only the 2|2 split is allowed; both leaves then read majority 0.
  for (const auto& n : tree.nodes)
    if (!n.is_leaf) {
      CHECK(n.threshold == doctest::Approx(1.5).epsilon(1e-12));
    }
}

TEST_CASE("max_depth 0 means unlimited and fitting is deterministic") {
  Rng rng(8);
  std::vector<Vec> xs;
  std::vector<int> ys;
  for (int i = 0; i < 60; ++i) {
    xs.push_back({rng.uniform_real(), rng.uniform_real()});
    ys.push_back(static_cast<int>(rng.uniform_int(0, 2)));
  }
  const auto a = tree_fit(xs, ys, {0, 1});
  const auto b = tree_fit(xs, ys, {0, 1});
  REQUIRE(a.nodes.size() == b.nodes.size());
  for (std::size_t i = 0; i < a.nodes.size(); ++i) {
    CHECK(a.nodes[i].is_leaf == b.nodes[i].is_leaf);
    CHECK(a.nodes[i].feature == b.nodes[i].feature);
    CHECK(a.nodes[i].threshold == b.nodes[i].threshold);
    CHECK(a.nodes[i].label == b.nodes[i].label);
  }
}

TEST_CASE("empty input is rejected") {
  CHECK_THROWS_AS(tree_fit({}, {}), std::invalid_argument);
}
