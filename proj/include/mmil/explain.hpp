#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mmil/bagdata.hpp"
#include "mmil/kmeans.hpp"
#include "mmil/netcore.hpp"
#include "mmil/tree.hpp"

namespace mmil {

// Internal representations extracted from the instance- and sub-bag-level
// bag-layers, grouped by their position in the dataset.
struct Representations {
  std::vector<std::vector<std::vector<Vec>>> instances;  // [ex][subbag][inst]
  std::vector<std::vector<Vec>> subbags;                 // [ex][subbag]
};

Representations intermediate_representations(const NetworkSpec& network,
                                             const MMILDataset& dataset);

enum class FeatureMode { kFrequency, kOccurrence };

std::string to_string(FeatureMode mode);
FeatureMode feature_mode_from_string(const std::string& s);

// Cluster-identifier statistics of a bag. Identifiers are 0-based and must
// be < k; the bag must be non-empty.
Vec frequencies(const std::vector<std::size_t>& identifiers, std::size_t k);
Vec occurrences(const std::vector<std::size_t>& identifiers, std::size_t k);
Vec bag_features(const std::vector<std::size_t>& identifiers, std::size_t k,
                 FeatureMode mode);

// Centroids plus a decision tree over cluster-identifier statistics, for
// one level of the network.
struct Explainer {
  std::vector<Vec> centroids;
  DecisionTree tree;
  FeatureMode feature_mode = FeatureMode::kFrequency;

  std::size_t k() const { return centroids.size(); }
};

struct ExplainOptions {
  FeatureMode feature_mode = FeatureMode::kFrequency;
  TreeConfig tree_config;
  std::size_t kmeans_restarts = 10;
  std::uint64_t seed = 0;
};

// Pick occurrence statistics when the instance-level aggregation is max,
// frequency otherwise.
FeatureMode default_feature_mode(const NetworkSpec& network);

// Clusters the flattened representations, assigns identifiers, and fits a
// tree predicting Y from per-bag identifier statistics. S holds one bag of
// representation vectors per label in Y.
Explainer build_explainer(const std::vector<std::vector<Vec>>& bags,
                          const std::vector<int>& labels, std::size_t k,
                          const ExplainOptions& options);

struct SurrogateModel {
  Explainer inst;
  Explainer sub;
};

// Rule-level prediction t(s(r(x))) for one example's instance
// representations (grouped by sub-bag).
int surrogate_predict(const SurrogateModel& surrogate,
                      const std::vector<std::vector<Vec>>& instance_reps);

// Agreement rate between the surrogate and the network over a dataset.
double fidelity(const SurrogateModel& surrogate, const NetworkSpec& network,
                const MMILDataset& dataset);

struct GridCell {
  std::size_t k_sub = 0;
  std::size_t k_inst = 0;
  double fidelity = 0.0;
  bool ok = false;
  std::string message;
};

struct BestExplainerResult {
  SurrogateModel surrogate;
  std::vector<GridCell> grid;
  std::size_t k_sub = 0;
  std::size_t k_inst = 0;
  double valid_fidelity = 0.0;
};

// Grid search over k_sub, k_inst in [2, k_max], maximizing validation
// fidelity; ties go to the lexicographically smaller (k_sub, k_inst).
// Cells that cannot be built (too few points) are skipped and reported.
BestExplainerResult find_best_explainer(const NetworkSpec& network,
                                        const MMILDataset& train_set,
                                        const MMILDataset& valid_set,
                                        std::size_t k_max,
                                        const ExplainOptions& options);

// --- rules ---------------------------------------------------------------

struct Literal {
  std::size_t feature = 0;
  enum class Op { kLe, kGt, kEq } op = Op::kLe;
  double value = 0.0;

  bool holds(const Vec& features) const;
};

struct Clause {
  int head = 0;
  std::vector<Literal> body;  // conjunction
};

// One clause per leaf; clauses are mutually exclusive and jointly
// exhaustive, so ordered evaluation finds the unique firing clause.
struct RuleSet {
  std::vector<Clause> clauses;
  std::size_t num_features = 0;
  FeatureMode feature_mode = FeatureMode::kFrequency;

  // Index of the firing clause.
  std::size_t fire(const Vec& features) const;
  int evaluate(const Vec& features) const;
};

RuleSet extract_rules(const DecisionTree& tree, std::size_t num_features,
                      FeatureMode mode);

// Clause text in the form "head <- lit, lit."; feature_prefix names the
// identifier family ("u" for instances, "v" for sub-bags).
std::string format_rules(const RuleSet& rules,
                         const std::string& feature_prefix,
                         const std::vector<std::string>& head_names);

// --- prediction tracing --------------------------------------------------

struct PredictionTrace {
  int predicted = 0;
  std::size_t top_clause = 0;
  std::vector<std::size_t> subbag_clusters;
  std::vector<std::size_t> subbag_clauses;
  std::vector<std::vector<std::size_t>> instance_clusters;
  std::vector<std::size_t> relevant_instance_clusters;
  std::vector<std::size_t> relevant_subbag_clusters;
};

PredictionTrace trace_prediction(const TopBag& x, const NetworkSpec& network,
                                 const SurrogateModel& surrogate);

// --- persistence ---------------------------------------------------------

void save_explainer(const SurrogateModel& surrogate, const std::string& path);
SurrogateModel load_explainer(const std::string& path);

void save_grid_csv(const std::vector<GridCell>& grid, const std::string& path);

}  // namespace mmil
