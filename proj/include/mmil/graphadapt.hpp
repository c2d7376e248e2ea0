#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mmil/bagdata.hpp"

namespace mmil {

// One undirected graph. Nodes are dense indices; edges are normalized to
// u < v with duplicates and self-loops removed.
struct Graph {
  std::size_t num_nodes = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;

  void normalize();
  std::vector<std::vector<std::size_t>> adjacency() const;
  std::vector<std::size_t> degrees() const;
};

// Node-level dataset: one graph whose nodes carry features (a dense vector
// or a bag of token indices), class labels, and optionally years.
struct NodeGraphDataset {
  Graph graph;
  std::vector<std::string> node_names;
  std::vector<std::optional<Vec>> node_features;
  std::vector<std::vector<std::string>> node_token_strings;
  std::vector<std::vector<std::size_t>> node_tokens;  // used if no features
  std::size_t vocab_size = 0;                         // token one-hot width
  std::vector<std::optional<int>> node_labels;
  std::vector<std::optional<int>> node_years;
  int num_classes = 2;

  bool uses_tokens() const { return vocab_size > 0; }
};

// Graph-level dataset: a collection of labeled graphs without node features.
struct GraphCollection {
  std::vector<Graph> graphs;
  std::vector<int> labels;
  int num_classes = 2;
};

// Node classification: one top-bag per labeled node; sub-bags are the node
// and each neighbor; a sub-bag holds the corresponding node's feature
// vector or its tokens as one-hot instances.
MMILDataset node_to_mmil(const NodeGraphDataset& g);
MILDataset node_to_mil(const NodeGraphDataset& g);

// Ego-network decomposition: one top-bag per graph, one sub-bag per node
// holding the closed neighborhood, instances from degree_features.
MMILDataset graph_to_mmil(const GraphCollection& graphs);

enum class DegreeVariant { kStrict, kInclusive };

// Feature vector of length max_degree: entry i is 1/sqrt(deg) while
// i < deg (strict) or i <= deg (inclusive), 0 otherwise.
Vec degree_feature_vector(std::size_t degree, std::size_t max_degree,
                          DegreeVariant variant = DegreeVariant::kStrict);
std::vector<std::vector<Vec>> degree_features(
    const GraphCollection& graphs,
    DegreeVariant variant = DegreeVariant::kStrict);

MMILDataset graph_to_mmil(const GraphCollection& graphs,
                          DegreeVariant variant);

struct SplitIndices {
  std::vector<std::size_t> train, valid, test;
  int year_train_max = 0;  // yr1
  int year_valid_max = 0;  // yr2
};

// Temporal split: yr1 and yr2 are the smallest years whose cumulative node
// fraction reaches fractions[0] and fractions[0]+fractions[1]. Throws if a
// split comes out empty.
SplitIndices temporal_split(const std::vector<int>& years,
                            const std::vector<double>& fractions);

// --- file IO --------------------------------------------------------------

// Edge list CSV: "u,v" per line, node names as strings.
// Labels CSV: "node,label"; years CSV: "node,year";
// features CSV: "node,f1,...,fd"; tokens JSON: {node: [token, ...]}.
NodeGraphDataset load_node_graph(const std::string& edges_csv,
                                 const std::string& labels_csv,
                                 const std::string& features_csv,
                                 const std::string& tokens_json,
                                 const std::string& years_csv);

// Builds the token vocabulary from the listed nodes only; index 0 is
// reserved for out-of-vocabulary tokens seen elsewhere.
void build_vocabulary(NodeGraphDataset& g,
                      const std::vector<std::size_t>& vocab_nodes);

}  // namespace mmil
