#include "mmil/bagdata.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "mmil/rng.hpp"

namespace mmil {

using nlohmann::json;

namespace {

void check_instances(const std::string& id, const std::string& prefix,
                     const std::vector<Instance>& instances,
                     std::size_t feature_dim, std::vector<Violation>& out) {
  if (instances.empty()) {
    out.push_back({id, prefix, "empty bag"});
    return;
  }
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& inst = instances[i];
    std::ostringstream path;
    path << prefix << ", instance " << i;
    if (inst.size() != feature_dim) {
      std::ostringstream msg;
      msg << "instance length " << inst.size() << " != feature_dim "
          << feature_dim;
      out.push_back({id, path.str(), msg.str()});
    }
    for (double v : inst) {
      if (!std::isfinite(v)) {
        out.push_back({id, path.str(), "non-finite feature value"});
        break;
      }
    }
  }
}

}  // namespace

std::vector<Violation> validate(const MMILDataset& dataset) {
  std::vector<Violation> out;
  if (dataset.feature_dim == 0)
    out.push_back({"", "dataset", "feature_dim must be positive"});
  if (dataset.num_classes < 2)
    out.push_back({"", "dataset", "num_classes must be >= 2"});
  if (dataset.examples.empty())
    out.push_back({"", "dataset", "no examples"});
  for (const auto& ex : dataset.examples) {
    if (ex.label < 0 || ex.label >= dataset.num_classes) {
      std::ostringstream msg;
      msg << "label " << ex.label << " outside [0, " << dataset.num_classes
          << ")";
      out.push_back({ex.id, "label", msg.str()});
    }
    if (ex.subbags.empty()) {
      out.push_back({ex.id, "subbags", "empty top-bag"});
      continue;
    }
    for (std::size_t j = 0; j < ex.subbags.size(); ++j) {
      std::ostringstream prefix;
      prefix << "subbag " << j;
      if (ex.subbags[j].instances.empty()) {
        out.push_back({ex.id, prefix.str(), "empty sub-bag"});
        continue;
      }
      check_instances(ex.id, prefix.str(), ex.subbags[j].instances,
                      dataset.feature_dim, out);
    }
  }
  return out;
}

std::vector<Violation> validate(const MILDataset& dataset) {
  std::vector<Violation> out;
  if (dataset.feature_dim == 0)
    out.push_back({"", "dataset", "feature_dim must be positive"});
  if (dataset.num_classes < 2)
    out.push_back({"", "dataset", "num_classes must be >= 2"});
  if (dataset.examples.empty())
    out.push_back({"", "dataset", "no examples"});
  for (const auto& ex : dataset.examples) {
    if (ex.label < 0 || ex.label >= dataset.num_classes) {
      std::ostringstream msg;
      msg << "label " << ex.label << " outside [0, " << dataset.num_classes
          << ")";
      out.push_back({ex.id, "label", msg.str()});
    }
    check_instances(ex.id, "bag", ex.instances, dataset.feature_dim, out);
  }
  return out;
}

MILDataset flatten(const MMILDataset& dataset) {
  auto violations = validate(dataset);
  if (!violations.empty())
    throw std::invalid_argument("flatten: invalid dataset: " +
                                violations.front().message);
  MILDataset out;
  out.feature_dim = dataset.feature_dim;
  out.num_classes = dataset.num_classes;
  out.examples.reserve(dataset.examples.size());
  for (const auto& ex : dataset.examples) {
    FlatBag flat;
    flat.label = ex.label;
    flat.id = ex.id;
    for (const auto& sb : ex.subbags)
      flat.instances.insert(flat.instances.end(), sb.instances.begin(),
                            sb.instances.end());
    out.examples.push_back(std::move(flat));
  }
  return out;
}

GeneratedData generate_seven_not_three(std::size_t num_topbags,
                                       int class_count, double noise_std,
                                       std::uint64_t seed) {
  if (class_count < 8)
    throw std::invalid_argument(
        "generate_seven_not_three: class_count must be >= 8");
  if (noise_std < 0.0)
    throw std::invalid_argument(
        "generate_seven_not_three: noise_std must be >= 0");
  if (num_topbags == 0)
    throw std::invalid_argument(
        "generate_seven_not_three: num_topbags must be >= 1");

  Rng rng(Rng::derive(seed, 0x5e7e));
  GeneratedData out;
  out.dataset.feature_dim = static_cast<std::size_t>(class_count);
  out.dataset.num_classes = 2;

  // Exact half/half split keeps labels within the balance tolerance.
  const std::size_t quota_pos = num_topbags / 2;
  const std::size_t quota_neg = num_topbags - quota_pos;
  std::size_t count_pos = 0, count_neg = 0;

  while (out.dataset.examples.size() < num_topbags) {
    TopBag top;
    LatentLabels::Example latent;
    const auto n_sub = static_cast<std::size_t>(rng.uniform_int(2, 6));
    int top_label = 0;
    for (std::size_t j = 0; j < n_sub; ++j) {
      SubBag sb;
      std::vector<int> classes;
      const auto n_inst = static_cast<std::size_t>(rng.uniform_int(2, 6));
      bool has7 = false, has3 = false;
      for (std::size_t l = 0; l < n_inst; ++l) {
        const int cls = static_cast<int>(rng.uniform_int(0, class_count - 1));
        classes.push_back(cls);
        has7 = has7 || cls == 7;
        has3 = has3 || cls == 3;
        Instance inst(static_cast<std::size_t>(class_count), 0.0);
        inst[static_cast<std::size_t>(cls)] = 1.0;
        if (noise_std > 0.0)
          for (double& v : inst) v += rng.normal(0.0, noise_std);
        sb.instances.push_back(std::move(inst));
      }
      const int sub_label = (has7 && !has3) ? 1 : 0;
      top_label |= sub_label;
      top.subbags.push_back(std::move(sb));
      latent.instance_classes.push_back(std::move(classes));
      latent.subbag_labels.push_back(sub_label);
    }
    // Rejection step for balance.
    if (top_label == 1) {
      if (count_pos >= quota_pos) continue;
      ++count_pos;
    } else {
      if (count_neg >= quota_neg) continue;
      ++count_neg;
    }
    std::ostringstream id;
    id << "e" << out.dataset.examples.size();
    top.label = top_label;
    top.id = id.str();
    latent.label = top_label;
    latent.id = top.id;
    out.dataset.examples.push_back(std::move(top));
    out.latent.examples.push_back(std::move(latent));
  }
  return out;
}

namespace {

json require_field(const json& j, const char* field, const char* where) {
  if (!j.contains(field)) {
    std::ostringstream msg;
    msg << where << ": missing field \"" << field << "\"";
    throw std::runtime_error(msg.str());
  }
  return j.at(field);
}

json parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("parse error in " + path + ": " + e.what());
  }
}

void write_file(const json& j, const std::string& path) {
  std::ofstream outf(path);
  if (!outf) throw std::runtime_error("cannot open " + path + " for writing");
  outf << j.dump(2) << "\n";
}

Instance parse_instance(const json& j) {
  Instance inst;
  inst.reserve(j.size());
  for (const auto& v : j) inst.push_back(v.get<double>());
  return inst;
}

void throw_if_invalid(const std::vector<Violation>& violations,
                      const std::string& path) {
  if (violations.empty()) return;
  const auto& v = violations.front();
  std::ostringstream msg;
  msg << path << ": validation failed";
  if (!v.example_id.empty()) msg << " at example " << v.example_id;
  msg << ", " << v.path << ": " << v.message;
  msg << " (" << violations.size() << " violation(s) total)";
  throw std::runtime_error(msg.str());
}

}  // namespace

MMILDataset load_mmil_dataset(const std::string& path) {
  const json j = parse_file(path);
  MMILDataset ds;
  ds.feature_dim =
      require_field(j, "feature_dim", path.c_str()).get<std::size_t>();
  ds.num_classes = require_field(j, "num_classes", path.c_str()).get<int>();
  for (const auto& ex : require_field(j, "examples", path.c_str())) {
    TopBag top;
    top.id = require_field(ex, "id", path.c_str()).get<std::string>();
    top.label = require_field(ex, "label", path.c_str()).get<int>();
    for (const auto& sb : require_field(ex, "subbags", path.c_str())) {
      SubBag sub;
      for (const auto& inst : sb) sub.instances.push_back(parse_instance(inst));
      top.subbags.push_back(std::move(sub));
    }
    ds.examples.push_back(std::move(top));
  }
  throw_if_invalid(validate(ds), path);
  return ds;
}

void save_mmil_dataset(const MMILDataset& dataset, const std::string& path) {
  json examples = json::array();
  for (const auto& ex : dataset.examples) {
    json subbags = json::array();
    for (const auto& sb : ex.subbags) {
      json insts = json::array();
      for (const auto& inst : sb.instances) insts.push_back(inst);
      subbags.push_back(std::move(insts));
    }
    examples.push_back(
        {{"id", ex.id}, {"label", ex.label}, {"subbags", std::move(subbags)}});
  }
  write_file(json{{"feature_dim", dataset.feature_dim},
                  {"num_classes", dataset.num_classes},
                  {"examples", std::move(examples)}},
             path);
}

MILDataset load_mil_dataset(const std::string& path) {
  const json j = parse_file(path);
  MILDataset ds;
  ds.feature_dim =
      require_field(j, "feature_dim", path.c_str()).get<std::size_t>();
  ds.num_classes = require_field(j, "num_classes", path.c_str()).get<int>();
  for (const auto& ex : require_field(j, "examples", path.c_str())) {
    FlatBag bag;
    bag.id = require_field(ex, "id", path.c_str()).get<std::string>();
    bag.label = require_field(ex, "label", path.c_str()).get<int>();
    for (const auto& inst : require_field(ex, "bag", path.c_str()))
      bag.instances.push_back(parse_instance(inst));
    ds.examples.push_back(std::move(bag));
  }
  throw_if_invalid(validate(ds), path);
  return ds;
}

void save_mil_dataset(const MILDataset& dataset, const std::string& path) {
  json examples = json::array();
  for (const auto& ex : dataset.examples) {
    json insts = json::array();
    for (const auto& inst : ex.instances) insts.push_back(inst);
    examples.push_back(
        {{"id", ex.id}, {"label", ex.label}, {"bag", std::move(insts)}});
  }
  write_file(json{{"feature_dim", dataset.feature_dim},
                  {"num_classes", dataset.num_classes},
                  {"examples", std::move(examples)}},
             path);
}

LatentLabels load_latent_labels(const std::string& path) {
  const json j = parse_file(path);
  LatentLabels latent;
  for (const auto& ex : require_field(j, "examples", path.c_str())) {
    LatentLabels::Example e;
    e.id = require_field(ex, "id", path.c_str()).get<std::string>();
    e.label = require_field(ex, "label", path.c_str()).get<int>();
    e.subbag_labels = require_field(ex, "subbag_labels", path.c_str())
                          .get<std::vector<int>>();
    e.instance_classes = require_field(ex, "instance_classes", path.c_str())
                             .get<std::vector<std::vector<int>>>();
    latent.examples.push_back(std::move(e));
  }
  return latent;
}

void save_latent_labels(const LatentLabels& latent, const std::string& path) {
  json examples = json::array();
  for (const auto& ex : latent.examples) {
    examples.push_back({{"id", ex.id},
                        {"label", ex.label},
                        {"subbag_labels", ex.subbag_labels},
                        {"instance_classes", ex.instance_classes}});
  }
  write_file(json{{"examples", std::move(examples)}}, path);
}

}  // namespace mmil
