#include "mmil/explain.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "mmil/rng.hpp"

namespace mmil {

using nlohmann::json;

std::string to_string(FeatureMode mode) {
  return mode == FeatureMode::kFrequency ? "frequency" : "occurrence";
}

FeatureMode feature_mode_from_string(const std::string& s) {
  if (s == "frequency") return FeatureMode::kFrequency;
  if (s == "occurrence") return FeatureMode::kOccurrence;
  throw std::invalid_argument("unknown feature mode: " + s);
}

Representations intermediate_representations(const NetworkSpec& network,
                                             const MMILDataset& dataset) {
  if (!network.is_mmil())
    throw std::invalid_argument(
        "intermediate_representations: MMIL network required");
  Representations reps;
  for (const auto& ex : dataset.examples) {
    const ForwardTrace trace = forward(ex, network);
    std::vector<std::vector<Vec>> inst_groups;
    for (const auto& sb : trace.subbags) {
      std::vector<Vec> group(sb.bag.parallel.front().post.size());
      for (const auto& p : sb.bag.parallel)
        for (std::size_t l = 0; l < p.post.size(); ++l)
          group[l].insert(group[l].end(), p.post[l].begin(), p.post[l].end());
      inst_groups.push_back(std::move(group));
    }
    std::vector<Vec> sub_group(trace.subbags.size());
    for (const auto& p : trace.top_bag.parallel)
      for (std::size_t j = 0; j < p.post.size(); ++j)
        sub_group[j].insert(sub_group[j].end(), p.post[j].begin(),
                            p.post[j].end());
    reps.instances.push_back(std::move(inst_groups));
    reps.subbags.push_back(std::move(sub_group));
  }
  return reps;
}

Vec frequencies(const std::vector<std::size_t>& identifiers, std::size_t k) {
  if (identifiers.empty())
    throw std::invalid_argument("frequencies: empty bag");
  Vec out(k, 0.0);
  for (std::size_t id : identifiers) {
    if (id >= k)
      throw std::invalid_argument("frequencies: identifier out of range");
    out[id] += 1.0;
  }
  for (double& v : out) v /= static_cast<double>(identifiers.size());
  return out;
}

Vec occurrences(const std::vector<std::size_t>& identifiers, std::size_t k) {
  if (identifiers.empty())
    throw std::invalid_argument("occurrences: empty bag");
  Vec out(k, 0.0);
  for (std::size_t id : identifiers) {
    if (id >= k)
      throw std::invalid_argument("occurrences: identifier out of range");
    out[id] = 1.0;
  }
  return out;
}

Vec bag_features(const std::vector<std::size_t>& identifiers, std::size_t k,
                 FeatureMode mode) {
  return mode == FeatureMode::kFrequency ? frequencies(identifiers, k)
                                         : occurrences(identifiers, k);
}

FeatureMode default_feature_mode(const NetworkSpec& network) {
  for (const auto& layer : network.instance_bag)
    if (layer.aggregator == Aggregator::kMax) return FeatureMode::kOccurrence;
  return FeatureMode::kFrequency;
}

namespace {

std::vector<Vec> flatten_bags(const std::vector<std::vector<Vec>>& bags) {
  std::vector<Vec> out;
  for (const auto& bag : bags)
    out.insert(out.end(), bag.begin(), bag.end());
  return out;
}

DecisionTree fit_level_tree(const std::vector<std::vector<Vec>>& bags,
                            const std::vector<int>& labels,
                            const std::vector<Vec>& centroids,
                            FeatureMode mode, const TreeConfig& tree_config) {
  std::vector<Vec> features;
  features.reserve(bags.size());
  for (const auto& bag : bags)
    features.push_back(
        bag_features(assign_labels(bag, centroids), centroids.size(), mode));
  return tree_fit(features, labels, tree_config);
}

}  // namespace

Explainer build_explainer(const std::vector<std::vector<Vec>>& bags,
                          const std::vector<int>& labels, std::size_t k,
                          const ExplainOptions& options) {
  if (bags.size() != labels.size())
    throw std::invalid_argument("build_explainer: bag/label count mismatch");
  if (k < 2) throw std::invalid_argument("build_explainer: k must be >= 2");
  const auto points = flatten_bags(bags);
  Explainer e;
  e.feature_mode = options.feature_mode;
  e.centroids =
      kmeans_fit_restarts(points, k, options.seed, options.kmeans_restarts)
          .centroids;
  e.tree = fit_level_tree(bags, labels, e.centroids, e.feature_mode,
                          options.tree_config);
  return e;
}

int surrogate_predict(const SurrogateModel& surrogate,
                      const std::vector<std::vector<Vec>>& instance_reps) {
  std::vector<std::size_t> subbag_clusters;
  subbag_clusters.reserve(instance_reps.size());
  for (const auto& group : instance_reps) {
    const auto ids = assign_labels(group, surrogate.inst.centroids);
    const Vec feats =
        bag_features(ids, surrogate.inst.k(), surrogate.inst.feature_mode);
    subbag_clusters.push_back(
        static_cast<std::size_t>(surrogate.inst.tree.predict(feats)));
  }
  const Vec top_feats = bag_features(subbag_clusters, surrogate.sub.k(),
                                     surrogate.sub.feature_mode);
  return surrogate.sub.tree.predict(top_feats);
}

double fidelity(const SurrogateModel& surrogate, const NetworkSpec& network,
                const MMILDataset& dataset) {
  const auto reps = intermediate_representations(network, dataset);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
    const int net = predicted_class(forward(dataset.examples[i], network).output);
    if (net == surrogate_predict(surrogate, reps.instances[i])) ++agree;
  }
  return static_cast<double>(agree) /
         static_cast<double>(dataset.examples.size());
}

BestExplainerResult find_best_explainer(const NetworkSpec& network,
                                        const MMILDataset& train_set,
                                        const MMILDataset& valid_set,
                                        std::size_t k_max,
                                        const ExplainOptions& options) {
  if (k_max < 2)
    throw std::invalid_argument("find_best_explainer: k_max must be >= 2");

  const auto train_reps = intermediate_representations(network, train_set);
  const auto valid_reps = intermediate_representations(network, valid_set);

  // Network predictions are the targets at the top level.
  std::vector<int> net_train;
  net_train.reserve(train_set.examples.size());
  for (const auto& ex : train_set.examples)
    net_train.push_back(predicted_class(forward(ex, network).output));
  std::vector<int> net_valid;
  net_valid.reserve(valid_set.examples.size());
  for (const auto& ex : valid_set.examples)
    net_valid.push_back(predicted_class(forward(ex, network).output));

  // Instance bags per sub-bag, and sub-bag bags per example.
  std::vector<std::vector<Vec>> inst_bags;  // one per sub-bag
  for (const auto& ex : train_reps.instances)
    for (const auto& group : ex) inst_bags.push_back(group);
  const std::vector<Vec> inst_points = flatten_bags(inst_bags);
  const std::vector<Vec> sub_points = flatten_bags(train_reps.subbags);

  // Centroids depend only on k, so they are shared across grid cells.
  std::vector<std::vector<Vec>> inst_centroids(k_max + 1);
  std::vector<std::vector<Vec>> sub_centroids(k_max + 1);
  std::vector<std::string> inst_error(k_max + 1), sub_error(k_max + 1);
  for (std::size_t k = 2; k <= k_max; ++k) {
    try {
      inst_centroids[k] =
          kmeans_fit_restarts(inst_points, k, Rng::derive(options.seed, k),
                              options.kmeans_restarts)
              .centroids;
    } catch (const std::exception& e) {
      inst_error[k] = e.what();
    }
    try {
      sub_centroids[k] =
          kmeans_fit_restarts(sub_points, k,
                              Rng::derive(options.seed, 0x100 + k),
                              options.kmeans_restarts)
              .centroids;
    } catch (const std::exception& e) {
      sub_error[k] = e.what();
    }
  }

  BestExplainerResult best;
  best.valid_fidelity = -1.0;

  for (std::size_t k_sub = 2; k_sub <= k_max; ++k_sub) {
    GridCell cell_base;
    cell_base.k_sub = k_sub;
    if (!sub_error[k_sub].empty()) {
      for (std::size_t k_inst = 2; k_inst <= k_max; ++k_inst) {
        GridCell cell = cell_base;
        cell.k_inst = k_inst;
        cell.message = sub_error[k_sub];
        best.grid.push_back(cell);
      }
      continue;
    }
    Explainer e_sub;
    e_sub.centroids = sub_centroids[k_sub];
    e_sub.feature_mode = options.feature_mode;
    e_sub.tree = fit_level_tree(train_reps.subbags, net_train,
                                e_sub.centroids, options.feature_mode,
                                options.tree_config);

    // Instance-level targets: sub-bag cluster identifiers.
    std::vector<int> inst_targets;
    inst_targets.reserve(inst_bags.size());
    for (const auto& ex : train_reps.subbags)
      for (const auto& rep : ex)
        inst_targets.push_back(
            static_cast<int>(assign_label(rep, e_sub.centroids)));

    for (std::size_t k_inst = 2; k_inst <= k_max; ++k_inst) {
      GridCell cell = cell_base;
      cell.k_inst = k_inst;
      if (!inst_error[k_inst].empty()) {
        cell.message = inst_error[k_inst];
        best.grid.push_back(cell);
        continue;
      }
      SurrogateModel candidate;
      candidate.sub = e_sub;
      candidate.inst.centroids = inst_centroids[k_inst];
      candidate.inst.feature_mode = options.feature_mode;
      candidate.inst.tree =
          fit_level_tree(inst_bags, inst_targets, candidate.inst.centroids,
                         options.feature_mode, options.tree_config);

      std::size_t agree = 0;
      for (std::size_t i = 0; i < valid_set.examples.size(); ++i)
        if (surrogate_predict(candidate, valid_reps.instances[i]) ==
            net_valid[i])
          ++agree;
      cell.fidelity = static_cast<double>(agree) /
                      static_cast<double>(valid_set.examples.size());
      cell.ok = true;
      best.grid.push_back(cell);

      if (cell.fidelity > best.valid_fidelity) {
        best.valid_fidelity = cell.fidelity;
        best.surrogate = std::move(candidate);
        best.k_sub = k_sub;
        best.k_inst = k_inst;
      }
    }
  }

  if (best.valid_fidelity < 0.0)
    throw std::runtime_error("find_best_explainer: no grid cell succeeded");
  return best;
}

// --- rules ----------------------------------------------------------------

bool Literal::holds(const Vec& features) const {
  const double v = features[feature];
  switch (op) {
    case Op::kLe: return v <= value;
    case Op::kGt: return v > value;
    case Op::kEq: return v == value;
  }
  return false;
}

std::size_t RuleSet::fire(const Vec& features) const {
  for (std::size_t i = 0; i < clauses.size(); ++i) {
    bool all = true;
    for (const auto& lit : clauses[i].body)
      if (!lit.holds(features)) {
        all = false;
        break;
      }
    if (all) return i;
  }
  throw std::logic_error("RuleSet: no clause fired");
}

int RuleSet::evaluate(const Vec& features) const {
  return clauses[fire(features)].head;
}

namespace {

void collect_clauses(const DecisionTree& tree, std::size_t node,
                     std::vector<Literal>& path, FeatureMode mode,
                     RuleSet& out) {
  const auto& n = tree.nodes[node];
  if (n.is_leaf) {
    out.clauses.push_back({n.label, path});
    return;
  }
  // In occurrence mode a midpoint split on a 0/1 feature is a crisp
  // presence test.
  const bool crisp = mode == FeatureMode::kOccurrence && n.threshold > 0.0 &&
                     n.threshold < 1.0;
  Literal left{n.feature,
               crisp ? Literal::Op::kEq : Literal::Op::kLe,
               crisp ? 0.0 : n.threshold};
  Literal right{n.feature,
                crisp ? Literal::Op::kEq : Literal::Op::kGt,
                crisp ? 1.0 : n.threshold};
  path.push_back(left);
  collect_clauses(tree, n.left, path, mode, out);
  path.back() = right;
  collect_clauses(tree, n.right, path, mode, out);
  path.pop_back();
}

}  // namespace

RuleSet extract_rules(const DecisionTree& tree, std::size_t num_features,
                      FeatureMode mode) {
  RuleSet rules;
  rules.num_features = num_features;
  rules.feature_mode = mode;
  std::vector<Literal> path;
  collect_clauses(tree, 0, path, mode, rules);
  return rules;
}

std::string format_rules(const RuleSet& rules,
                         const std::string& feature_prefix,
                         const std::vector<std::string>& head_names) {
  std::ostringstream out;
  const std::string stat_prefix =
      rules.feature_mode == FeatureMode::kOccurrence ? "o_" : "f_";
  for (const auto& clause : rules.clauses) {
    const auto head = static_cast<std::size_t>(clause.head);
    out << (head < head_names.size() ? head_names[head]
                                     : "c" + std::to_string(clause.head));
    out << " <- ";
    if (clause.body.empty()) out << "true";
    for (std::size_t i = 0; i < clause.body.size(); ++i) {
      const auto& lit = clause.body[i];
      if (i > 0) out << ", ";
      out << "(" << stat_prefix << feature_prefix << lit.feature + 1;
      switch (lit.op) {
        case Literal::Op::kLe: out << " <= "; break;
        case Literal::Op::kGt: out << " > "; break;
        case Literal::Op::kEq: out << " = "; break;
      }
      out << lit.value << ")";
    }
    out << ".\n";
  }
  return out.str();
}

// --- prediction tracing ---------------------------------------------------

PredictionTrace trace_prediction(const TopBag& x, const NetworkSpec& network,
                                 const SurrogateModel& surrogate) {
  MMILDataset tmp;
  tmp.feature_dim = network.input_dim();
  tmp.num_classes = 2;
  tmp.examples.push_back(x);
  tmp.examples.back().label = 0;  // unused
  const auto reps = intermediate_representations(network, tmp);
  const auto& inst_reps = reps.instances.front();

  const RuleSet inst_rules = extract_rules(
      surrogate.inst.tree, surrogate.inst.k(), surrogate.inst.feature_mode);
  const RuleSet sub_rules = extract_rules(
      surrogate.sub.tree, surrogate.sub.k(), surrogate.sub.feature_mode);

  PredictionTrace result;
  std::set<std::size_t> relevant_inst, relevant_sub;
  for (const auto& group : inst_reps) {
    const auto ids = assign_labels(group, surrogate.inst.centroids);
    result.instance_clusters.push_back(ids);
    const Vec feats =
        bag_features(ids, surrogate.inst.k(), surrogate.inst.feature_mode);
    const std::size_t clause = inst_rules.fire(feats);
    result.subbag_clauses.push_back(clause);
    result.subbag_clusters.push_back(
        static_cast<std::size_t>(inst_rules.clauses[clause].head));
    for (const auto& lit : inst_rules.clauses[clause].body)
      relevant_inst.insert(lit.feature);
  }
  const Vec top_feats = bag_features(result.subbag_clusters, surrogate.sub.k(),
                                     surrogate.sub.feature_mode);
  result.top_clause = sub_rules.fire(top_feats);
  result.predicted = sub_rules.clauses[result.top_clause].head;
  for (const auto& lit : sub_rules.clauses[result.top_clause].body)
    relevant_sub.insert(lit.feature);

  result.relevant_instance_clusters.assign(relevant_inst.begin(),
                                           relevant_inst.end());
  result.relevant_subbag_clusters.assign(relevant_sub.begin(),
                                         relevant_sub.end());
  return result;
}

// --- persistence ----------------------------------------------------------

namespace {

json tree_to_json(const DecisionTree& tree) {
  json nodes = json::array();
  for (const auto& n : tree.nodes) {
    if (n.is_leaf) {
      nodes.push_back({{"leaf", true}, {"label", n.label}});
    } else {
      nodes.push_back({{"leaf", false},
                       {"feature", n.feature},
                       {"threshold", n.threshold},
                       {"left", n.left},
                       {"right", n.right}});
    }
  }
  return nodes;
}

DecisionTree tree_from_json(const json& j) {
  DecisionTree tree;
  for (const auto& nj : j) {
    DecisionTree::Node n;
    n.is_leaf = nj.at("leaf").get<bool>();
    if (n.is_leaf) {
      n.label = nj.at("label").get<int>();
    } else {
      n.feature = nj.at("feature").get<std::size_t>();
      n.threshold = nj.at("threshold").get<double>();
      n.left = nj.at("left").get<std::size_t>();
      n.right = nj.at("right").get<std::size_t>();
    }
    tree.nodes.push_back(n);
  }
  return tree;
}

json centroids_to_json(const std::vector<Vec>& centroids) {
  json out = json::array();
  for (const auto& c : centroids) out.push_back(c);
  return out;
}

std::vector<Vec> centroids_from_json(const json& j) {
  std::vector<Vec> out;
  for (const auto& c : j) out.push_back(c.get<Vec>());
  return out;
}

}  // namespace

void save_explainer(const SurrogateModel& surrogate, const std::string& path) {
  json j = {{"k_inst", surrogate.inst.k()},
            {"k_sub", surrogate.sub.k()},
            {"centroids_inst", centroids_to_json(surrogate.inst.centroids)},
            {"centroids_sub", centroids_to_json(surrogate.sub.centroids)},
            {"tree_inst", tree_to_json(surrogate.inst.tree)},
            {"tree_sub", tree_to_json(surrogate.sub.tree)},
            {"feature_mode", to_string(surrogate.inst.feature_mode)}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << j.dump(2) << "\n";
}

SurrogateModel load_explainer(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("parse error in " + path + ": " + e.what());
  }
  SurrogateModel s;
  const auto mode =
      feature_mode_from_string(j.at("feature_mode").get<std::string>());
  s.inst.centroids = centroids_from_json(j.at("centroids_inst"));
  s.inst.tree = tree_from_json(j.at("tree_inst"));
  s.inst.feature_mode = mode;
  s.sub.centroids = centroids_from_json(j.at("centroids_sub"));
  s.sub.tree = tree_from_json(j.at("tree_sub"));
  s.sub.feature_mode = mode;
  return s;
}

void save_grid_csv(const std::vector<GridCell>& grid,
                   const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "k_sub,k_inst,fidelity\n";
  out.precision(17);
  for (const auto& cell : grid) {
    out << cell.k_sub << "," << cell.k_inst << ",";
    if (cell.ok)
      out << cell.fidelity;
    else
      out << "nan";
    out << "\n";
  }
}

}  // namespace mmil
