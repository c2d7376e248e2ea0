#pragma once

#include <cstdint>
#include <vector>

#include "mmil/linalg.hpp"

namespace mmil {

struct KMeansResult {
  std::vector<Vec> centroids;
  double objective = 0.0;  // sum of squared distances to assigned centroids
  std::vector<double> objective_history;  // one value per Lloyd iteration
};

// Lloyd's algorithm with k-means++ seeding. Iterates until assignments
// stabilize or max_iters is hit; empty clusters are re-seeded to the point
// farthest from its centroid. Throws if |points| < k or k < 1.
KMeansResult kmeans_fit(const std::vector<Vec>& points, std::size_t k,
                        std::uint64_t seed, std::size_t max_iters = 300);

// Best objective over `restarts` runs with derived seeds.
KMeansResult kmeans_fit_restarts(const std::vector<Vec>& points, std::size_t k,
                                 std::uint64_t seed, std::size_t restarts,
                                 std::size_t max_iters = 300);

// Euclidean nearest centroid; ties go to the smallest index. Identifiers
// are 0-based.
std::size_t assign_label(const Vec& point, const std::vector<Vec>& centroids);
std::vector<std::size_t> assign_labels(const std::vector<Vec>& points,
                                       const std::vector<Vec>& centroids);

}  // namespace mmil
