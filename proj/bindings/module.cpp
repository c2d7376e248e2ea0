// Python bindings over the main library operations. Datasets cross the
// boundary as nested lists; models, surrogates, and datasets are also
// exchangeable through their JSON file formats.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mmil/bagdata.hpp"
#include "mmil/explain.hpp"
#include "mmil/graphadapt.hpp"
#include "mmil/kmeans.hpp"
#include "mmil/metrics.hpp"
#include "mmil/netcore.hpp"
#include "mmil/train.hpp"

namespace py = pybind11;
using namespace mmil;

namespace {

using PyExample = std::pair<int, std::vector<std::vector<std::vector<double>>>>;

MMILDataset dataset_from_lists(std::size_t feature_dim, int num_classes,
                               const std::vector<PyExample>& examples) {
  MMILDataset ds;
  ds.feature_dim = feature_dim;
  ds.num_classes = num_classes;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    TopBag top;
    top.id = "e" + std::to_string(i);
    top.label = examples[i].first;
    for (const auto& sb : examples[i].second) {
      SubBag bag;
      for (const auto& inst : sb) bag.instances.push_back(inst);
      top.subbags.push_back(std::move(bag));
    }
    ds.examples.push_back(std::move(top));
  }
  const auto violations = validate(ds);
  if (!violations.empty())
    throw std::invalid_argument(violations.front().example_id + ", " +
                                violations.front().path + ": " +
                                violations.front().message);
  return ds;
}

std::vector<PyExample> dataset_to_lists(const MMILDataset& ds) {
  std::vector<PyExample> out;
  for (const auto& ex : ds.examples) {
    PyExample e;
    e.first = ex.label;
    for (const auto& sb : ex.subbags) e.second.push_back(sb.instances);
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_mmil, m) {
  m.doc() = "multi-multi-instance learning core";

  py::class_<MMILDataset>(m, "Dataset")
      .def_property_readonly("feature_dim",
                             [](const MMILDataset& d) { return d.feature_dim; })
      .def_property_readonly("num_classes",
                             [](const MMILDataset& d) { return d.num_classes; })
      .def("__len__", [](const MMILDataset& d) { return d.examples.size(); })
      .def("labels",
           [](const MMILDataset& d) {
             std::vector<int> out;
             for (const auto& ex : d.examples) out.push_back(ex.label);
             return out;
           })
      .def("to_lists", &dataset_to_lists)
      .def("save", &save_mmil_dataset);

  m.def("make_dataset", &dataset_from_lists, py::arg("feature_dim"),
        py::arg("num_classes"), py::arg("examples"));
  m.def("load_dataset", &load_mmil_dataset);
  m.def(
      "synth",
      [](std::size_t n, int class_count, double noise_std,
         std::uint64_t seed) {
        return generate_seven_not_three(n, class_count, noise_std, seed)
            .dataset;
      },
      py::arg("n"), py::arg("class_count") = 10, py::arg("noise_std") = 0.1,
      py::arg("seed") = 0);

  py::class_<NetworkSpec>(m, "Model")
      .def_property_readonly("input_dim", &NetworkSpec::input_dim)
      .def("save", &save_model)
      .def("forward", [](const NetworkSpec& spec, const MMILDataset& ds,
                         std::size_t index) {
        return forward(ds.examples.at(index), spec).output;
      });

  m.def("load_model", &load_model);
  m.def("init_network", &init_network_from_arch, py::arg("arch_path"),
        py::arg("input_dim"), py::arg("num_classes"), py::arg("seed"));

  py::class_<TrainResult>(m, "TrainResult")
      .def_readonly("model", &TrainResult::model)
      .def_readonly("best_epoch", &TrainResult::best_epoch)
      .def("history", [](const TrainResult& r) {
        std::vector<std::tuple<std::size_t, double, double, double>> out;
        for (const auto& e : r.history)
          out.emplace_back(e.epoch, e.train_loss, e.valid_loss,
                           e.valid_accuracy);
        return out;
      });

  m.def(
      "train",
      [](const NetworkSpec& spec, const MMILDataset& train_set,
         const MMILDataset& valid_set, double learning_rate,
         std::size_t batch_size, std::size_t max_epochs, std::size_t patience,
         std::uint64_t seed) {
        TrainConfig cfg;
        cfg.learning_rate = learning_rate;
        cfg.batch_size = batch_size;
        cfg.max_epochs = max_epochs;
        cfg.early_stop_patience = patience;
        cfg.seed = seed;
        return train(spec, train_set, valid_set, cfg);
      },
      py::arg("model"), py::arg("train_set"), py::arg("valid_set"),
      py::arg("learning_rate") = 0.001, py::arg("batch_size") = 20,
      py::arg("max_epochs") = 100, py::arg("patience") = 10,
      py::arg("seed") = 0);

  m.def("predict", [](const NetworkSpec& spec, const MMILDataset& ds) {
    std::vector<int> out;
    for (const auto& p : predict(spec, ds)) out.push_back(p.label);
    return out;
  });
  m.def("accuracy", [](const NetworkSpec& spec, const MMILDataset& ds) {
    return accuracy(predict(spec, ds), ds);
  });

  py::class_<SurrogateModel>(m, "Surrogate")
      .def("save", &save_explainer)
      .def_property_readonly(
          "k_inst", [](const SurrogateModel& s) { return s.inst.k(); })
      .def_property_readonly(
          "k_sub", [](const SurrogateModel& s) { return s.sub.k(); });

  m.def("load_explainer", &load_explainer);
  m.def(
      "explain",
      [](const NetworkSpec& network, const MMILDataset& train_set,
         const MMILDataset& valid_set, std::size_t k_max,
         const std::string& feature_mode, std::uint64_t seed) {
        ExplainOptions options;
        options.seed = seed;
        options.feature_mode = feature_mode.empty()
                                   ? default_feature_mode(network)
                                   : feature_mode_from_string(feature_mode);
        auto best =
            find_best_explainer(network, train_set, valid_set, k_max, options);
        return py::make_tuple(best.surrogate, best.k_sub, best.k_inst,
                              best.valid_fidelity);
      },
      py::arg("model"), py::arg("train_set"), py::arg("valid_set"),
      py::arg("k_max") = 8, py::arg("feature_mode") = "", py::arg("seed") = 0);

  m.def("fidelity", [](const SurrogateModel& s, const NetworkSpec& network,
                       const MMILDataset& ds) {
    return fidelity(s, network, ds);
  });
  m.def("rules_text", [](const SurrogateModel& s, int num_classes) {
    std::vector<std::string> heads;
    if (num_classes == 2) {
      heads = {"neg", "pos"};
    } else {
      for (int c = 0; c < num_classes; ++c)
        heads.push_back("c" + std::to_string(c));
    }
    std::vector<std::string> v_names;
    for (std::size_t c = 1; c <= s.sub.k(); ++c)
      v_names.push_back("v" + std::to_string(c));
    return format_rules(
               extract_rules(s.sub.tree, s.sub.k(), s.sub.feature_mode), "v",
               heads) +
           format_rules(
               extract_rules(s.inst.tree, s.inst.k(), s.inst.feature_mode),
               "u", v_names);
  });
  m.def("trace", [](const NetworkSpec& network, const SurrogateModel& s,
                    const MMILDataset& ds, std::size_t index) {
    const auto t = trace_prediction(ds.examples.at(index), network, s);
    py::dict out;
    out["predicted"] = t.predicted;
    out["top_clause"] = t.top_clause;
    out["subbag_clusters"] = t.subbag_clusters;
    out["subbag_clauses"] = t.subbag_clauses;
    out["instance_clusters"] = t.instance_clusters;
    out["relevant_instance_clusters"] = t.relevant_instance_clusters;
    out["relevant_subbag_clusters"] = t.relevant_subbag_clusters;
    return out;
  });

  m.def(
      "graphs_to_dataset",
      [](const std::vector<
             std::pair<std::size_t,
                       std::vector<std::pair<std::size_t, std::size_t>>>>&
             graphs,
         const std::vector<int>& labels, int num_classes,
         const std::string& degree_variant) {
        GraphCollection coll;
        coll.num_classes = num_classes;
        for (const auto& [n, edges] : graphs) {
          Graph g;
          g.num_nodes = n;
          g.edges = edges;
          g.normalize();
          coll.graphs.push_back(std::move(g));
        }
        coll.labels = labels;
        return graph_to_mmil(coll, degree_variant == "inclusive"
                                       ? DegreeVariant::kInclusive
                                       : DegreeVariant::kStrict);
      },
      py::arg("graphs"), py::arg("labels"), py::arg("num_classes") = 2,
      py::arg("degree_variant") = "strict");

  m.def(
      "map_region",
      [](const std::vector<double>& scores, const std::vector<int>& truth,
         const std::vector<int>& mask, const std::string& variant) {
        std::vector<std::uint8_t> t(truth.begin(), truth.end());
        std::vector<std::uint8_t> k(mask.begin(), mask.end());
        return map_region(scores, t, k,
                          variant == "standard" ? MapVariant::kStandard
                                                : MapVariant::kLiteral);
      },
      py::arg("scores"), py::arg("truth"), py::arg("mask"),
      py::arg("variant") = "literal");
}
