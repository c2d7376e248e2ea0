// mmil command line: reproducible runs over the library operations. Every
// command takes explicit seeds, writes its artifacts under --out, and drops
// a manifest.json recording the configuration and content hashes of all
// inputs and outputs.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "mmil/bagdata.hpp"
#include "mmil/explain.hpp"
#include "mmil/graphadapt.hpp"
#include "mmil/metrics.hpp"
#include "mmil/netcore.hpp"
#include "mmil/rng.hpp"
#include "mmil/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace mmil;

namespace {

// FNV-1a over file bytes; cheap, stable, and good enough to pin artifacts.
std::string content_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::uint64_t h = 1469598103934665603ull;
  char buf[4096];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

struct Manifest {
  std::string command;
  json config = json::object();
  json inputs = json::object();
  json outputs = json::object();

  void add_input(const std::string& path) {
    inputs[fs::path(path).filename().string()] = {{"path", path},
                                                  {"hash", content_hash(path)}};
  }
  void add_output(const std::string& path) {
    outputs[fs::path(path).filename().string()] = {
        {"path", path}, {"hash", content_hash(path)}};
  }
  void write(const std::string& out_dir) const {
    json j{{"command", command},
           {"config", config},
           {"inputs", inputs},
           {"outputs", outputs}};
    std::ofstream out(out_dir + "/manifest.json");
    out << j.dump(2) << "\n";
  }
};

std::string out_path(const std::string& out_dir, const std::string& name) {
  fs::create_directories(out_dir);
  return out_dir + "/" + name;
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  out << j.dump(2) << "\n";
}

void check_dims(const std::string& what, std::size_t data_dim,
                std::size_t model_dim) {
  if (data_dim != model_dim)
    throw std::runtime_error("feature_dim mismatch: " + what + " has " +
                             std::to_string(data_dim) + " but the model takes " +
                             std::to_string(model_dim));
}

// --- synth -----------------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::uint64_t seed = 0;
  std::size_t train_count = 5000, valid_count = 500, test_count = 5000;
  int class_count = 10;
  double noise_std = 0.1;
};

int cmd_synth(const SynthArgs& a) {
  Manifest m;
  m.command = "synth";
  m.config = {{"seed", a.seed},         {"train_count", a.train_count},
              {"valid_count", a.valid_count}, {"test_count", a.test_count},
              {"class_count", a.class_count}, {"noise_std", a.noise_std}};

  const struct {
    const char* name;
    std::size_t count;
    std::uint64_t tag;
  } parts[] = {{"train", a.train_count, 1},
               {"valid", a.valid_count, 2},
               {"test", a.test_count, 3}};
  for (const auto& part : parts) {
    const auto gen = generate_seven_not_three(
        part.count, a.class_count, a.noise_std, Rng::derive(a.seed, part.tag));
    const auto data_path =
        out_path(a.out, std::string(part.name) + ".json");
    const auto latent_path =
        out_path(a.out, std::string(part.name) + "_latent.json");
    save_mmil_dataset(gen.dataset, data_path);
    save_latent_labels(gen.latent, latent_path);
    m.add_output(data_path);
    m.add_output(latent_path);
  }
  m.write(a.out);
  return 0;
}

// --- train -----------------------------------------------------------------

struct TrainArgs {
  std::string data, valid, arch, out;
  std::uint64_t seed = 0;
  TrainConfig cfg;
};

int cmd_train(const TrainArgs& a) {
  const auto train_set = load_mmil_dataset(a.data);
  const auto valid_set = load_mmil_dataset(a.valid);
  check_dims("the validation set", valid_set.feature_dim,
             train_set.feature_dim);

  auto spec = init_network_from_arch(a.arch, train_set.feature_dim,
                                     train_set.num_classes,
                                     Rng::derive(a.seed, 0x11));
  TrainConfig cfg = a.cfg;
  cfg.seed = Rng::derive(a.seed, 0x12);
  cfg.check();
  const auto result = train(spec, train_set, valid_set, cfg);

  const auto model_path = out_path(a.out, "model.json");
  const auto history_path = out_path(a.out, "history.csv");
  save_model(result.model, model_path);
  save_history_csv(result.history, history_path);

  const double valid_acc =
      accuracy(predict(result.model, valid_set), valid_set);

  Manifest m;
  m.command = "train";
  m.config = {{"seed", a.seed},
              {"learning_rate", cfg.learning_rate},
              {"batch_size", cfg.batch_size},
              {"max_epochs", cfg.max_epochs},
              {"early_stop_patience", cfg.early_stop_patience},
              {"best_epoch", result.best_epoch},
              {"valid_accuracy", valid_acc}};
  m.add_input(a.data);
  m.add_input(a.valid);
  m.add_input(a.arch);
  m.add_output(model_path);
  m.add_output(history_path);
  m.write(a.out);
  return 0;
}

// --- predict / eval --------------------------------------------------------

struct PredictArgs {
  std::string data, model, out;
};

int cmd_predict(const PredictArgs& a) {
  const auto dataset = load_mmil_dataset(a.data);
  const auto spec = load_model(a.model);
  check_dims("the dataset", dataset.feature_dim, spec.input_dim());
  const auto preds = predict(spec, dataset);

  const auto pred_path = out_path(a.out, "predictions.csv");
  {
    std::ofstream out(pred_path);
    out << "id,predicted,probabilities\n";
    for (std::size_t i = 0; i < preds.size(); ++i) {
      out << dataset.examples[i].id << "," << preds[i].label << ",";
      for (std::size_t j = 0; j < preds[i].probabilities.size(); ++j)
        out << (j ? ";" : "") << preds[i].probabilities[j];
      out << "\n";
    }
  }

  Manifest m;
  m.command = "predict";
  m.config = {{"accuracy", accuracy(preds, dataset)}};
  m.add_input(a.data);
  m.add_input(a.model);
  m.add_output(pred_path);
  m.write(a.out);
  return 0;
}

int cmd_eval(const PredictArgs& a) {
  const auto dataset = load_mmil_dataset(a.data);
  const auto spec = load_model(a.model);
  check_dims("the dataset", dataset.feature_dim, spec.input_dim());
  const auto preds = predict(spec, dataset);
  const double acc = accuracy(preds, dataset);

  const auto metrics_path = out_path(a.out, "metrics.json");
  write_json(metrics_path,
             {{"accuracy", acc}, {"num_examples", dataset.examples.size()}});

  Manifest m;
  m.command = "eval";
  m.config = {{"accuracy", acc}};
  m.add_input(a.data);
  m.add_input(a.model);
  m.add_output(metrics_path);
  m.write(a.out);
  return 0;
}

// --- explain ---------------------------------------------------------------

struct ExplainArgs {
  std::string data, valid, model, out;
  std::uint64_t seed = 0;
  std::size_t k_max = 8;
  std::string feature_mode;  // empty = auto
};

std::vector<std::string> class_names(int num_classes) {
  std::vector<std::string> names;
  if (num_classes == 2) return {"neg", "pos"};
  for (int c = 0; c < num_classes; ++c)
    names.push_back("c" + std::to_string(c));
  return names;
}

int cmd_explain(const ExplainArgs& a) {
  const auto train_set = load_mmil_dataset(a.data);
  const auto valid_set = load_mmil_dataset(a.valid);
  const auto network = load_model(a.model);
  check_dims("the dataset", train_set.feature_dim, network.input_dim());

  ExplainOptions options;
  options.seed = Rng::derive(a.seed, 0x21);
  options.feature_mode = a.feature_mode.empty()
                             ? default_feature_mode(network)
                             : feature_mode_from_string(a.feature_mode);
  const auto best =
      find_best_explainer(network, train_set, valid_set, a.k_max, options);

  const auto explainer_path = out_path(a.out, "explainer.json");
  const auto rules_path = out_path(a.out, "rules.txt");
  const auto grid_path = out_path(a.out, "grid.csv");
  save_explainer(best.surrogate, explainer_path);
  save_grid_csv(best.grid, grid_path);

  {
    // Sub-bag-level rules (instance clusters u -> sub-bag clusters v),
    // then top-level rules (sub-bag clusters v -> class).
    const auto& s = best.surrogate;
    std::vector<std::string> v_names;
    for (std::size_t c = 1; c <= s.sub.k(); ++c)
      v_names.push_back("v" + std::to_string(c));
    const auto inst_rules =
        extract_rules(s.inst.tree, s.inst.k(), s.inst.feature_mode);
    const auto sub_rules =
        extract_rules(s.sub.tree, s.sub.k(), s.sub.feature_mode);
    std::ofstream out(rules_path);
    out << format_rules(sub_rules, "v", class_names(train_set.num_classes));
    out << format_rules(inst_rules, "u", v_names);
  }

  Manifest m;
  m.command = "explain";
  m.config = {{"seed", a.seed},
              {"k_max", a.k_max},
              {"feature_mode", to_string(options.feature_mode)},
              {"k_sub", best.k_sub},
              {"k_inst", best.k_inst},
              {"valid_fidelity", best.valid_fidelity}};
  m.add_input(a.data);
  m.add_input(a.valid);
  m.add_input(a.model);
  m.add_output(explainer_path);
  m.add_output(rules_path);
  m.add_output(grid_path);
  m.write(a.out);
  return 0;
}

// --- trace -----------------------------------------------------------------

struct TraceArgs {
  std::string data, model, explainer, out, id;  // empty id = all examples
};

int cmd_trace(const TraceArgs& a) {
  const auto dataset = load_mmil_dataset(a.data);
  const auto network = load_model(a.model);
  const auto surrogate = load_explainer(a.explainer);
  check_dims("the dataset", dataset.feature_dim, network.input_dim());

  json traces = json::array();
  bool found = a.id.empty();
  for (const auto& ex : dataset.examples) {
    if (!a.id.empty() && ex.id != a.id) continue;
    found = true;
    const auto t = trace_prediction(ex, network, surrogate);
    traces.push_back({{"id", ex.id},
                      {"predicted", t.predicted},
                      {"top_clause", t.top_clause},
                      {"subbag_clusters", t.subbag_clusters},
                      {"subbag_clauses", t.subbag_clauses},
                      {"instance_clusters", t.instance_clusters},
                      {"relevant_instance_clusters",
                       t.relevant_instance_clusters},
                      {"relevant_subbag_clusters",
                       t.relevant_subbag_clusters}});
  }
  if (!found) throw std::runtime_error("no example with id " + a.id);

  const auto trace_path = out_path(a.out, "traces.json");
  write_json(trace_path, traces);

  Manifest m;
  m.command = "trace";
  m.config = {{"id", a.id}};
  m.add_input(a.data);
  m.add_input(a.model);
  m.add_input(a.explainer);
  m.add_output(trace_path);
  m.write(a.out);
  return 0;
}

// --- graph-decompose -------------------------------------------------------

struct GraphArgs {
  std::string edges, labels, features, tokens, years, graphs, out;
  std::string degree_variant = "strict";
  bool flat = false;
};

int cmd_graph_decompose(const GraphArgs& a) {
  Manifest m;
  m.command = "graph-decompose";
  m.config = {{"degree_variant", a.degree_variant}, {"flat", a.flat}};
  const auto dataset_path = out_path(a.out, "dataset.json");

  if (!a.graphs.empty()) {
    // Graph classification: a JSON collection of labeled graphs.
    std::ifstream in(a.graphs);
    if (!in) throw std::runtime_error("cannot read " + a.graphs);
    const json j = json::parse(in);
    GraphCollection coll;
    coll.num_classes = j.at("num_classes").get<int>();
    for (const auto& gj : j.at("graphs")) {
      Graph g;
      g.num_nodes = gj.at("num_nodes").get<std::size_t>();
      for (const auto& e : gj.at("edges"))
        g.edges.emplace_back(e.at(0).get<std::size_t>(),
                             e.at(1).get<std::size_t>());
      g.normalize();
      coll.graphs.push_back(std::move(g));
      coll.labels.push_back(gj.at("label").get<int>());
    }
    const auto variant = a.degree_variant == "inclusive"
                             ? DegreeVariant::kInclusive
                             : DegreeVariant::kStrict;
    save_mmil_dataset(graph_to_mmil(coll, variant), dataset_path);
    m.add_input(a.graphs);
    m.add_output(dataset_path);
    m.write(a.out);
    return 0;
  }

  // Node classification from edge/label (+ optional feature/token/year)
  // files.
  auto g = load_node_graph(a.edges, a.labels, a.features, a.tokens, a.years);
  const bool has_years = !a.years.empty();
  SplitIndices split;
  if (has_years) {
    std::vector<int> years;
    std::vector<std::size_t> labeled;
    for (std::size_t v = 0; v < g.node_names.size(); ++v)
      if (g.node_years[v].has_value()) {
        years.push_back(*g.node_years[v]);
        labeled.push_back(v);
      }
    const auto s = temporal_split(years, {0.4, 0.2, 0.4});
    for (std::size_t i : s.train) split.train.push_back(labeled[i]);
    for (std::size_t i : s.valid) split.valid.push_back(labeled[i]);
    for (std::size_t i : s.test) split.test.push_back(labeled[i]);
    split.year_train_max = s.year_train_max;
    split.year_valid_max = s.year_valid_max;
  }
  if (!a.tokens.empty()) {
    // Vocabulary from the training nodes only when a split exists, to keep
    // later splits honest; otherwise from every node.
    std::vector<std::size_t> vocab_nodes = split.train;
    if (vocab_nodes.empty())
      for (std::size_t v = 0; v < g.node_names.size(); ++v)
        vocab_nodes.push_back(v);
    build_vocabulary(g, vocab_nodes);
  }

  if (a.flat)
    save_mil_dataset(node_to_mil(g), dataset_path);
  else
    save_mmil_dataset(node_to_mmil(g), dataset_path);
  m.add_input(a.edges);
  m.add_input(a.labels);
  if (!a.features.empty()) m.add_input(a.features);
  if (!a.tokens.empty()) m.add_input(a.tokens);
  m.add_output(dataset_path);
  if (has_years) {
    const auto split_path = out_path(a.out, "split.json");
    write_json(split_path, {{"train", split.train},
                            {"valid", split.valid},
                            {"test", split.test},
                            {"year_train_max", split.year_train_max},
                            {"year_valid_max", split.year_valid_max}});
    m.add_input(a.years);
    m.add_output(split_path);
  }
  m.write(a.out);
  return 0;
}

// --- rank-eval -------------------------------------------------------------

struct RankArgs {
  std::string scores, truth, out;
  double mask_percent = 10.0;
  std::uint64_t seed = 0;
  std::string map_variant = "literal";
};

int cmd_rank_eval(const RankArgs& a) {
  const auto truth = load_binary_csv(a.truth);
  std::vector<Vec> scores;
  {
    std::ifstream in(a.scores);
    if (!in) throw std::runtime_error("cannot read " + a.scores);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      Vec row;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
      scores.push_back(std::move(row));
    }
  }
  if (scores.size() != truth.rows)
    throw std::runtime_error("score/truth row count mismatch: " +
                             std::to_string(scores.size()) + " vs " +
                             std::to_string(truth.rows));

  const auto masked =
      mask_matrix(truth, a.mask_percent, Rng::derive(a.seed, 0x31));
  const auto variant = a.map_variant == "standard" ? MapVariant::kStandard
                                                   : MapVariant::kLiteral;
  const auto report = map_matrix(scores, truth, masked.masked, variant);

  const auto masked_path = out_path(a.out, "masked.csv");
  const auto report_path = out_path(a.out, "report.csv");
  const auto metrics_path = out_path(a.out, "metrics.json");
  save_binary_csv(masked.masked, masked_path);
  save_region_report_csv(report, report_path);
  std::vector<double> vals;
  for (const auto& r : report)
    if (r.included) vals.push_back(r.map);
  write_json(metrics_path,
             {{"mean_map", mean_map(vals)},
              {"included_regions", vals.size()},
              {"skipped_columns", masked.skipped_columns.size()}});

  Manifest m;
  m.command = "rank-eval";
  m.config = {{"mask_percent", a.mask_percent},
              {"seed", a.seed},
              {"map_variant", a.map_variant}};
  m.add_input(a.scores);
  m.add_input(a.truth);
  m.add_output(masked_path);
  m.add_output(report_path);
  m.add_output(metrics_path);
  m.write(a.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-multi-instance learning toolkit"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* sc_synth = app.add_subcommand("synth", "generate a synthetic dataset");
  sc_synth->add_option("--out", synth.out)->required();
  sc_synth->add_option("--seed", synth.seed)->required();
  sc_synth->add_option("--train-count", synth.train_count);
  sc_synth->add_option("--valid-count", synth.valid_count);
  sc_synth->add_option("--test-count", synth.test_count);
  sc_synth->add_option("--class-count", synth.class_count);
  sc_synth->add_option("--noise-std", synth.noise_std);

  TrainArgs tr;
  auto* sc_train = app.add_subcommand("train", "train a network");
  sc_train->add_option("--data", tr.data)->required();
  sc_train->add_option("--valid", tr.valid)->required();
  sc_train->add_option("--arch", tr.arch)->required();
  sc_train->add_option("--out", tr.out)->required();
  sc_train->add_option("--seed", tr.seed)->required();
  sc_train->add_option("--learning-rate", tr.cfg.learning_rate);
  sc_train->add_option("--batch-size", tr.cfg.batch_size);
  sc_train->add_option("--max-epochs", tr.cfg.max_epochs);
  sc_train->add_option("--patience", tr.cfg.early_stop_patience);

  PredictArgs pr;
  auto* sc_predict = app.add_subcommand("predict", "predict with a model");
  sc_predict->add_option("--data", pr.data)->required();
  sc_predict->add_option("--model", pr.model)->required();
  sc_predict->add_option("--out", pr.out)->required();

  PredictArgs ev;
  auto* sc_eval = app.add_subcommand("eval", "evaluate a model");
  sc_eval->add_option("--data", ev.data)->required();
  sc_eval->add_option("--model", ev.model)->required();
  sc_eval->add_option("--out", ev.out)->required();

  ExplainArgs ex;
  auto* sc_explain = app.add_subcommand("explain", "fit a rule surrogate");
  sc_explain->add_option("--data", ex.data)->required();
  sc_explain->add_option("--valid", ex.valid)->required();
  sc_explain->add_option("--model", ex.model)->required();
  sc_explain->add_option("--out", ex.out)->required();
  sc_explain->add_option("--seed", ex.seed)->required();
  sc_explain->add_option("--kmax", ex.k_max);
  sc_explain->add_option("--feature-mode", ex.feature_mode)
      ->check(CLI::IsMember({"frequency", "occurrence"}));

  TraceArgs tc;
  auto* sc_trace = app.add_subcommand("trace", "explain single predictions");
  sc_trace->add_option("--data", tc.data)->required();
  sc_trace->add_option("--model", tc.model)->required();
  sc_trace->add_option("--explainer", tc.explainer)->required();
  sc_trace->add_option("--out", tc.out)->required();
  sc_trace->add_option("--id", tc.id);

  GraphArgs gr;
  auto* sc_graph =
      app.add_subcommand("graph-decompose", "turn graphs into bag datasets");
  sc_graph->add_option("--edges", gr.edges);
  sc_graph->add_option("--labels", gr.labels);
  sc_graph->add_option("--features", gr.features);
  sc_graph->add_option("--tokens", gr.tokens);
  sc_graph->add_option("--years", gr.years);
  sc_graph->add_option("--graphs", gr.graphs);
  sc_graph->add_option("--out", gr.out)->required();
  sc_graph->add_option("--degree-variant", gr.degree_variant)
      ->check(CLI::IsMember({"strict", "inclusive"}));
  sc_graph->add_flag("--flat", gr.flat);

  RankArgs rk;
  auto* sc_rank = app.add_subcommand("rank-eval", "masked ranking evaluation");
  sc_rank->add_option("--scores", rk.scores)->required();
  sc_rank->add_option("--truth", rk.truth)->required();
  sc_rank->add_option("--out", rk.out)->required();
  sc_rank->add_option("--seed", rk.seed)->required();
  sc_rank->add_option("--mask-percent", rk.mask_percent);
  sc_rank->add_option("--map-variant", rk.map_variant)
      ->check(CLI::IsMember({"literal", "standard"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (sc_synth->parsed()) return cmd_synth(synth);
    if (sc_train->parsed()) return cmd_train(tr);
    if (sc_predict->parsed()) return cmd_predict(pr);
    if (sc_eval->parsed()) return cmd_eval(ev);
    if (sc_explain->parsed()) return cmd_explain(ex);
    if (sc_trace->parsed()) return cmd_trace(tc);
    if (sc_graph->parsed()) {
      if (gr.graphs.empty() && (gr.edges.empty() || gr.labels.empty()))
        throw std::runtime_error(
            "graph-decompose needs --graphs or --edges and --labels");
      return cmd_graph_decompose(gr);
    }
    if (sc_rank->parsed()) return cmd_rank_eval(rk);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (char& c : msg)
      if (c == '\n') c = ' ';
    std::cerr << "error: " << msg << "\n";
    return 1;
  }
  return 0;
}
