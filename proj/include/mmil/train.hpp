#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "mmil/bagdata.hpp"
#include "mmil/netcore.hpp"

namespace mmil {

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 20;
  std::size_t max_epochs = 100;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t early_stop_patience = 10;
  std::uint64_t seed = 0;

  void check() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
  double valid_accuracy = 0.0;
};

struct TrainResult {
  NetworkSpec model;  // parameters from the best validation epoch
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
};

// Works for both MMIL and MIL datasets (the dataset kind must match the
// spec). Throws on dimension mismatch or non-finite loss.
TrainResult train(const NetworkSpec& spec, const MMILDataset& train_set,
                  const MMILDataset& valid_set, const TrainConfig& config);
TrainResult train(const NetworkSpec& spec, const MILDataset& train_set,
                  const MILDataset& valid_set, const TrainConfig& config);

struct Prediction {
  int label = 0;
  Vec probabilities;
};

std::vector<Prediction> predict(const NetworkSpec& spec,
                                const MMILDataset& dataset);
std::vector<Prediction> predict(const NetworkSpec& spec,
                                const MILDataset& dataset);

double accuracy(const std::vector<Prediction>& predictions,
                const MMILDataset& dataset);
double accuracy(const std::vector<Prediction>& predictions,
                const MILDataset& dataset);

void save_history_csv(const std::vector<EpochRecord>& history,
                      const std::string& path);

}  // namespace mmil
