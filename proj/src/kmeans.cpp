#include "mmil/kmeans.hpp"

#include <limits>
#include <stdexcept>

#include "mmil/rng.hpp"

namespace mmil {

std::size_t assign_label(const Vec& point, const std::vector<Vec>& centroids) {
  if (centroids.empty()) throw std::invalid_argument("no centroids");
  if (point.size() != centroids.front().size())
    throw std::invalid_argument("assign_label: width mismatch");
  std::size_t best = 0;
  double best_d = squared_distance(point, centroids[0]);
  for (std::size_t c = 1; c < centroids.size(); ++c) {
    const double d = squared_distance(point, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

std::vector<std::size_t> assign_labels(const std::vector<Vec>& points,
                                       const std::vector<Vec>& centroids) {
  std::vector<std::size_t> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(assign_label(p, centroids));
  return out;
}

namespace {

std::vector<Vec> seed_plus_plus(const std::vector<Vec>& points, std::size_t k,
                                Rng& rng) {
  std::vector<Vec> centroids;
  centroids.reserve(k);
  centroids.push_back(points[static_cast<std::size_t>(rng.uniform_int(
      0, static_cast<std::int64_t>(points.size()) - 1))]);
  std::vector<double> dist2(points.size());
  for (std::size_t i = 0; i < points.size(); ++i)
    dist2[i] = squared_distance(points[i], centroids[0]);
  while (centroids.size() < k) {
    double total = 0.0;
    for (double d : dist2) total += d;
    std::size_t chosen;
    if (total <= 0.0) {
      chosen = static_cast<std::size_t>(rng.uniform_int(
          0, static_cast<std::int64_t>(points.size()) - 1));
    } else {
      const double target = rng.uniform_real() * total;
      double acc = 0.0;
      chosen = points.size() - 1;
      for (std::size_t i = 0; i < points.size(); ++i) {
        acc += dist2[i];
        if (acc > target) {
          chosen = i;
          break;
        }
      }
    }
    centroids.push_back(points[chosen]);
    for (std::size_t i = 0; i < points.size(); ++i) {
      const double d = squared_distance(points[i], centroids.back());
      if (d < dist2[i]) dist2[i] = d;
    }
  }
  return centroids;
}

}  // namespace

KMeansResult kmeans_fit(const std::vector<Vec>& points, std::size_t k,
                        std::uint64_t seed, std::size_t max_iters) {
  if (k < 1) throw std::invalid_argument("kmeans_fit: k must be >= 1");
  if (points.size() < k)
    throw std::invalid_argument("kmeans_fit: fewer points than clusters");
  const std::size_t dim = points.front().size();
  for (const auto& p : points)
    if (p.size() != dim)
      throw std::invalid_argument("kmeans_fit: inconsistent widths");

  Rng rng(Rng::derive(seed, 0x6b6d));
  std::vector<Vec> centroids = seed_plus_plus(points, k, rng);
  std::vector<std::size_t> assignment(points.size(),
                                      std::numeric_limits<std::size_t>::max());
  double prev_objective = std::numeric_limits<double>::infinity();
  std::vector<double> history;

  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    double objective = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const std::size_t c = assign_label(points[i], centroids);
      objective += squared_distance(points[i], centroids[c]);
      if (c != assignment[i]) {
        assignment[i] = c;
        changed = true;
      }
    }
    // Lloyd iterations never increase the objective.
    if (objective > prev_objective * (1.0 + 1e-9) + 1e-12)
      throw std::logic_error("kmeans_fit: objective increased");
    prev_objective = objective;
    history.push_back(objective);
    if (!changed) break;

    std::vector<Vec> sums(k, Vec(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      ++counts[assignment[i]];
      for (std::size_t d = 0; d < dim; ++d)
        sums[assignment[i]][d] += points[i][d];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // Re-seed an empty cluster to the point farthest from its centroid.
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
          const double d =
              squared_distance(points[i], centroids[assignment[i]]);
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        centroids[c] = points[far];
      } else {
        for (std::size_t d = 0; d < dim; ++d)
          centroids[c][d] = sums[c][d] / static_cast<double>(counts[c]);
      }
    }
  }

  KMeansResult result;
  result.centroids = std::move(centroids);
  result.objective_history = std::move(history);
  result.objective = 0.0;
  for (const auto& p : points)
    result.objective +=
        squared_distance(p, result.centroids[assign_label(p, result.centroids)]);
  return result;
}

KMeansResult kmeans_fit_restarts(const std::vector<Vec>& points, std::size_t k,
                                 std::uint64_t seed, std::size_t restarts,
                                 std::size_t max_iters) {
  if (restarts == 0) restarts = 1;
  KMeansResult best;
  best.objective = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < restarts; ++r) {
    auto run = kmeans_fit(points, k, Rng::derive(seed, 0x9000 + r), max_iters);
    if (run.objective < best.objective) best = std::move(run);
  }
  return best;
}

}  // namespace mmil
