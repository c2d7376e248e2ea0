#include "mmil/graphadapt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace mmil {

using nlohmann::json;

void Graph::normalize() {
  std::vector<std::pair<std::size_t, std::size_t>> cleaned;
  cleaned.reserve(edges.size());
  for (auto [u, v] : edges) {
    if (u == v) continue;
    if (u >= num_nodes || v >= num_nodes)
      throw std::invalid_argument("Graph: edge references missing node");
    if (u > v) std::swap(u, v);
    cleaned.emplace_back(u, v);
  }
  std::sort(cleaned.begin(), cleaned.end());
  cleaned.erase(std::unique(cleaned.begin(), cleaned.end()), cleaned.end());
  edges = std::move(cleaned);
}

std::vector<std::vector<std::size_t>> Graph::adjacency() const {
  std::vector<std::vector<std::size_t>> adj(num_nodes);
  for (const auto& [u, v] : edges) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  for (auto& nbrs : adj) std::sort(nbrs.begin(), nbrs.end());
  return adj;
}

std::vector<std::size_t> Graph::degrees() const {
  std::vector<std::size_t> deg(num_nodes, 0);
  for (const auto& [u, v] : edges) {
    ++deg[u];
    ++deg[v];
  }
  return deg;
}

namespace {

// Instances describing one node: its feature vector, or one one-hot vector
// per token.
std::vector<Instance> node_instances(const NodeGraphDataset& g,
                                     std::size_t node,
                                     std::size_t feature_dim) {
  std::vector<Instance> out;
  if (g.uses_tokens()) {
    const auto& tokens = g.node_tokens[node];
    if (tokens.empty())
      throw std::invalid_argument("node " + g.node_names[node] +
                                  " has no tokens");
    for (std::size_t t : tokens) {
      Instance inst(feature_dim, 0.0);
      inst[t] = 1.0;
      out.push_back(std::move(inst));
    }
  } else {
    if (!g.node_features[node])
      throw std::invalid_argument("node " + g.node_names[node] +
                                  " has no features");
    out.push_back(*g.node_features[node]);
  }
  return out;
}

std::size_t node_feature_dim(const NodeGraphDataset& g) {
  if (g.uses_tokens()) return g.vocab_size;
  for (const auto& f : g.node_features)
    if (f) return f->size();
  throw std::invalid_argument("graph has neither features nor tokens");
}

}  // namespace

MMILDataset node_to_mmil(const NodeGraphDataset& g) {
  MMILDataset out;
  out.feature_dim = node_feature_dim(g);
  out.num_classes = g.num_classes;
  const auto adj = g.graph.adjacency();
  for (std::size_t v = 0; v < g.graph.num_nodes; ++v) {
    if (!g.node_labels[v]) continue;
    TopBag top;
    top.id = g.node_names[v];
    top.label = *g.node_labels[v];
    top.subbags.push_back({node_instances(g, v, out.feature_dim)});
    for (std::size_t u : adj[v])
      top.subbags.push_back({node_instances(g, u, out.feature_dim)});
    out.examples.push_back(std::move(top));
  }
  if (out.examples.empty())
    throw std::invalid_argument("node_to_mmil: no labeled nodes");
  return out;
}

MILDataset node_to_mil(const NodeGraphDataset& g) {
  return flatten(node_to_mmil(g));
}

Vec degree_feature_vector(std::size_t degree, std::size_t max_degree,
                          DegreeVariant variant) {
  if (max_degree < 1)
    throw std::invalid_argument("degree_feature_vector: max_degree must be >= 1");
  Vec out(max_degree, 0.0);
  if (degree == 0) return out;
  const double value = 1.0 / std::sqrt(static_cast<double>(degree));
  for (std::size_t i = 1; i <= max_degree; ++i) {
    const bool on = variant == DegreeVariant::kStrict ? i < degree
                                                      : i <= degree;
    if (on) out[i - 1] = value;
  }
  return out;
}

std::vector<std::vector<Vec>> degree_features(const GraphCollection& graphs,
                                              DegreeVariant variant) {
  std::size_t max_degree = 1;
  for (const auto& g : graphs.graphs)
    for (std::size_t d : g.degrees()) max_degree = std::max(max_degree, d);
  std::vector<std::vector<Vec>> out;
  for (const auto& g : graphs.graphs) {
    const auto deg = g.degrees();
    std::vector<Vec> feats;
    feats.reserve(g.num_nodes);
    for (std::size_t v = 0; v < g.num_nodes; ++v)
      feats.push_back(degree_feature_vector(deg[v], max_degree, variant));
    out.push_back(std::move(feats));
  }
  return out;
}

MMILDataset graph_to_mmil(const GraphCollection& graphs,
                          DegreeVariant variant) {
  if (graphs.graphs.size() != graphs.labels.size())
    throw std::invalid_argument("graph_to_mmil: graph/label count mismatch");
  const auto features = degree_features(graphs, variant);
  MMILDataset out;
  out.num_classes = graphs.num_classes;
  for (std::size_t gi = 0; gi < graphs.graphs.size(); ++gi) {
    const auto& g = graphs.graphs[gi];
    if (g.num_nodes == 0)
      throw std::invalid_argument("graph_to_mmil: empty graph");
    if (out.feature_dim == 0) out.feature_dim = features[gi].front().size();
    const auto adj = g.adjacency();
    TopBag top;
    top.id = "g" + std::to_string(gi);
    top.label = graphs.labels[gi];
    for (std::size_t v = 0; v < g.num_nodes; ++v) {
      SubBag sb;
      sb.instances.push_back(features[gi][v]);
      for (std::size_t u : adj[v]) sb.instances.push_back(features[gi][u]);
      top.subbags.push_back(std::move(sb));
    }
    out.examples.push_back(std::move(top));
  }
  return out;
}

MMILDataset graph_to_mmil(const GraphCollection& graphs) {
  return graph_to_mmil(graphs, DegreeVariant::kStrict);
}

SplitIndices temporal_split(const std::vector<int>& years,
                            const std::vector<double>& fractions) {
  if (fractions.size() != 3 ||
      std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9)
    throw std::invalid_argument(
        "temporal_split: need three fractions summing to 1");
  if (years.empty()) throw std::invalid_argument("temporal_split: no years");

  std::map<int, std::size_t> counts;
  for (int y : years) ++counts[y];
  const auto total = static_cast<double>(years.size());

  // Smallest years reaching the cumulative fractions.
  int yr1 = counts.rbegin()->first;
  int yr2 = counts.rbegin()->first;
  // Compare integer counts against the fraction targets to avoid a float
  // accumulation error deciding a threshold year.
  const double target1 = fractions[0] * total - 1e-9;
  const double target2 = (fractions[0] + fractions[1]) * total - 1e-9;
  std::size_t cum = 0;
  bool got1 = false, got2 = false;
  for (const auto& [year, count] : counts) {
    cum += count;
    if (!got1 && static_cast<double>(cum) >= target1) {
      yr1 = year;
      got1 = true;
    }
    if (!got2 && static_cast<double>(cum) >= target2) {
      yr2 = year;
      got2 = true;
    }
  }

  SplitIndices split;
  split.year_train_max = yr1;
  split.year_valid_max = yr2;
  for (std::size_t i = 0; i < years.size(); ++i) {
    if (years[i] <= yr1)
      split.train.push_back(i);
    else if (years[i] <= yr2)
      split.valid.push_back(i);
    else
      split.test.push_back(i);
  }
  if (split.train.empty())
    throw std::runtime_error("temporal_split: empty train split");
  if (split.valid.empty())
    throw std::runtime_error("temporal_split: empty validation split");
  if (split.test.empty())
    throw std::runtime_error("temporal_split: empty test split");
  return split;
}

// --- file IO --------------------------------------------------------------

namespace {

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    rows.push_back(std::move(fields));
  }
  return rows;
}

}  // namespace

NodeGraphDataset load_node_graph(const std::string& edges_csv,
                                 const std::string& labels_csv,
                                 const std::string& features_csv,
                                 const std::string& tokens_json,
                                 const std::string& years_csv) {
  NodeGraphDataset g;
  std::map<std::string, std::size_t> name_to_idx;
  auto node_index = [&](const std::string& name) {
    auto [it, inserted] = name_to_idx.emplace(name, g.node_names.size());
    if (inserted) g.node_names.push_back(name);
    return it->second;
  };

  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (const auto& row : read_csv(edges_csv)) {
    if (row.size() != 2)
      throw std::runtime_error(edges_csv + ": expected \"u,v\" rows");
    // Sequence the index lookups: evaluation order inside emplace_back is
    // unspecified and would make node numbering compiler-dependent.
    const std::size_t u = node_index(row[0]);
    const std::size_t v = node_index(row[1]);
    edges.emplace_back(u, v);
  }

  std::map<std::size_t, int> labels;
  int max_label = 1;
  for (const auto& row : read_csv(labels_csv)) {
    if (row.size() != 2)
      throw std::runtime_error(labels_csv + ": expected \"node,label\" rows");
    const int label = std::stoi(row[1]);
    labels[node_index(row[0])] = label;
    max_label = std::max(max_label, label);
  }
  g.num_classes = max_label + 1;

  std::map<std::size_t, Vec> features;
  if (!features_csv.empty()) {
    for (const auto& row : read_csv(features_csv)) {
      if (row.size() < 2)
        throw std::runtime_error(features_csv +
                                 ": expected \"node,f1,...\" rows");
      Vec f;
      for (std::size_t i = 1; i < row.size(); ++i)
        f.push_back(std::stod(row[i]));
      features[node_index(row[0])] = std::move(f);
    }
  }

  std::map<std::size_t, std::vector<std::string>> tokens;
  if (!tokens_json.empty()) {
    std::ifstream in(tokens_json);
    if (!in) throw std::runtime_error("cannot open " + tokens_json);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw std::runtime_error("parse error in " + tokens_json + ": " +
                               e.what());
    }
    for (const auto& [name, toks] : j.items())
      tokens[node_index(name)] = toks.get<std::vector<std::string>>();
  }

  std::map<std::size_t, int> years;
  if (!years_csv.empty()) {
    for (const auto& row : read_csv(years_csv)) {
      if (row.size() != 2)
        throw std::runtime_error(years_csv + ": expected \"node,year\" rows");
      years[node_index(row[0])] = std::stoi(row[1]);
    }
  }

  const std::size_t n = g.node_names.size();
  g.graph.num_nodes = n;
  g.graph.edges = std::move(edges);
  g.graph.normalize();
  g.node_features.assign(n, std::nullopt);
  g.node_token_strings.assign(n, {});
  g.node_labels.assign(n, std::nullopt);
  g.node_years.assign(n, std::nullopt);
  for (const auto& [idx, f] : features) g.node_features[idx] = f;
  for (const auto& [idx, t] : tokens) g.node_token_strings[idx] = t;
  for (const auto& [idx, l] : labels) g.node_labels[idx] = l;
  for (const auto& [idx, y] : years) g.node_years[idx] = y;
  return g;
}

void build_vocabulary(NodeGraphDataset& g,
                      const std::vector<std::size_t>& vocab_nodes) {
  std::map<std::string, std::size_t> vocab;  // 0 reserved for OOV
  for (std::size_t v : vocab_nodes)
    for (const auto& tok : g.node_token_strings[v])
      vocab.emplace(tok, vocab.size() + 1);
  g.vocab_size = vocab.size() + 1;
  g.node_tokens.assign(g.graph.num_nodes, {});
  for (std::size_t v = 0; v < g.graph.num_nodes; ++v) {
    for (const auto& tok : g.node_token_strings[v]) {
      const auto it = vocab.find(tok);
      g.node_tokens[v].push_back(it == vocab.end() ? 0 : it->second);
    }
  }
}

}  // namespace mmil
