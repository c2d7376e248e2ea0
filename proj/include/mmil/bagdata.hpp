#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mmil/linalg.hpp"

namespace mmil {

using Instance = Vec;

struct SubBag {
  std::vector<Instance> instances;
};

struct TopBag {
  std::vector<SubBag> subbags;
  int label = 0;
  std::string id;
};

struct MMILDataset {
  std::vector<TopBag> examples;
  std::size_t feature_dim = 0;
  int num_classes = 2;
};

struct FlatBag {
  std::vector<Instance> instances;
  int label = 0;
  std::string id;
};

struct MILDataset {
  std::vector<FlatBag> examples;
  std::size_t feature_dim = 0;
  int num_classes = 2;
};

// Latent labels from the synthetic generator, kept out of the training data
// and used only by oracle checks.
struct LatentLabels {
  struct Example {
    std::string id;
    std::vector<std::vector<int>> instance_classes;  // [subbag][instance]
    std::vector<int> subbag_labels;                  // 0/1
    int label = 0;
  };
  std::vector<Example> examples;
};

// One invariant violation, located by example id and a human-readable path.
struct Violation {
  std::string example_id;
  std::string path;
  std::string message;
};

std::vector<Violation> validate(const MMILDataset& dataset);
std::vector<Violation> validate(const MILDataset& dataset);

MILDataset flatten(const MMILDataset& dataset);

// Semi-synthetic generator: noisy one-hot instances with latent classes;
// a sub-bag is positive iff it contains class 7 and no class 3, a top-bag
// is positive iff it has a positive sub-bag. Labels are balanced exactly
// by rejection. Throws std::invalid_argument if class_count < 8.
struct GeneratedData {
  MMILDataset dataset;
  LatentLabels latent;
};
GeneratedData generate_seven_not_three(std::size_t num_topbags,
                                       int class_count, double noise_std,
                                       std::uint64_t seed);

MMILDataset load_mmil_dataset(const std::string& path);
void save_mmil_dataset(const MMILDataset& dataset, const std::string& path);
MILDataset load_mil_dataset(const std::string& path);
void save_mil_dataset(const MILDataset& dataset, const std::string& path);

LatentLabels load_latent_labels(const std::string& path);
void save_latent_labels(const LatentLabels& latent, const std::string& path);

}  // namespace mmil
