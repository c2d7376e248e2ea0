#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mmil/linalg.hpp"

namespace mmil {

// Binary CART classifier. Internal nodes test feature <= threshold (left on
// true); leaves carry a class.
struct DecisionTree {
  struct Node {
    bool is_leaf = true;
    int label = 0;               // leaf
    std::size_t feature = 0;     // split
    double threshold = 0.0;
    std::size_t left = 0;
    std::size_t right = 0;
  };
  std::vector<Node> nodes;  // nodes[0] is the root

  int predict(const Vec& features) const;
  std::size_t leaf_count() const;
};

struct TreeConfig {
  std::size_t max_depth = 6;   // 0 means unlimited
  std::size_t min_leaf = 5;
};

// Greedy CART with Gini impurity. Candidate thresholds are midpoints of
// consecutive distinct sorted feature values; split ties go to the lowest
// feature index, then the lowest threshold; leaf labels are the majority
// class (ties to the smallest class).
DecisionTree tree_fit(const std::vector<Vec>& features,
                      const std::vector<int>& labels,
                      const TreeConfig& config = {});

}  // namespace mmil
