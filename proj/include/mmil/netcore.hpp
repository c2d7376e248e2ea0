#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mmil/bagdata.hpp"
#include "mmil/linalg.hpp"

namespace mmil {

enum class Activation { kLinear, kRelu, kTanh, kSigmoid, kSoftmax };
enum class Aggregator { kMax, kMean, kSum };

std::string to_string(Activation a);
std::string to_string(Aggregator a);
Activation activation_from_string(const std::string& s);
Aggregator aggregator_from_string(const std::string& s);

struct DenseLayerParams {
  Mat w;
  Vec b;
  Activation activation = Activation::kLinear;
};

struct BagLayerParams {
  Mat w;
  Vec b;
  Activation activation = Activation::kRelu;
  Aggregator aggregator = Aggregator::kMax;
};

// One aggregation point. Parallel bag-layers (e.g. a max half and a mean
// half) see the same input bag and their outputs are concatenated.
using BagStage = std::vector<BagLayerParams>;

struct NetworkSpec {
  std::vector<DenseLayerParams> instance_stack;
  BagStage instance_bag;
  std::vector<DenseLayerParams> subbag_stack;   // MMIL only
  std::optional<BagStage> subbag_bag;           // absent for MIL
  std::vector<DenseLayerParams> head;

  bool is_mmil() const { return subbag_bag.has_value(); }
  std::size_t input_dim() const;
  std::size_t output_dim() const;
  // Throws std::invalid_argument if layer dimensions do not chain or the
  // output layer is malformed.
  void check() const;
};

std::size_t stage_output_dim(const BagStage& stage);

// --- forward -------------------------------------------------------------

struct DenseTrace {
  std::vector<Vec> pre;   // per layer, w x + b
  std::vector<Vec> post;  // per layer, activation applied
};

struct BagStageTrace {
  struct Parallel {
    std::vector<Vec> pre;           // per bag element
    std::vector<Vec> post;          // rho values, per bag element
    Vec out;                        // aggregated
    std::vector<std::size_t> argmax;  // per coordinate, max aggregation only
  };
  std::vector<Parallel> parallel;
  Vec concat_out;
};

struct SubBagTrace {
  std::vector<DenseTrace> instance_dense;  // per instance
  BagStageTrace bag;
  DenseTrace stack;  // subbag_stack applied to bag.concat_out
  Vec out;
};

struct ForwardTrace {
  std::vector<SubBagTrace> subbags;  // one entry for the whole bag in MIL
  BagStageTrace top_bag;             // MMIL only
  DenseTrace head;
  Vec output;  // probabilities (softmax vector, or single sigmoid value)
};

// Single bag-layer, exposed for direct testing.
BagStageTrace::Parallel bag_layer_forward(const std::vector<Vec>& bag,
                                          const BagLayerParams& params);

ForwardTrace forward(const TopBag& x, const NetworkSpec& spec);
ForwardTrace forward(const FlatBag& x, const NetworkSpec& spec);

// --- loss ----------------------------------------------------------------

enum class LossKind { kBce, kSoftmaxCe };

double loss(const Vec& probabilities, int label, LossKind kind);

// Loss implied by the output layer: sigmoid -> bce, softmax -> softmax_ce.
LossKind loss_kind_for(const NetworkSpec& spec);

int predicted_class(const Vec& probabilities);

// --- backward ------------------------------------------------------------

struct LayerGrad {
  Mat w;
  Vec b;
};

struct NetworkGrad {
  std::vector<LayerGrad> instance_stack;
  std::vector<LayerGrad> instance_bag;
  std::vector<LayerGrad> subbag_stack;
  std::vector<LayerGrad> subbag_bag;
  std::vector<LayerGrad> head;
};

NetworkGrad zero_grad(const NetworkSpec& spec);

// Accumulates d loss / d params into grad. The trace must come from forward
// on the same spec and example.
void backward(const ForwardTrace& trace, const TopBag& x, int label,
              const NetworkSpec& spec, NetworkGrad& grad);
void backward(const ForwardTrace& trace, const FlatBag& x, int label,
              const NetworkSpec& spec, NetworkGrad& grad);

// Flat views over all parameters / gradients, in one canonical order.
std::vector<double*> parameter_view(NetworkSpec& spec);
std::vector<double*> gradient_view(NetworkGrad& grad);

// --- construction and IO -------------------------------------------------

// Builds a network from an architecture description (shapes only, no
// weights) with Glorot-uniform initialization.
NetworkSpec init_network_from_arch(const std::string& arch_json_path,
                                   std::size_t input_dim, int num_classes,
                                   std::uint64_t seed);

void save_model(const NetworkSpec& spec, const std::string& path);
NetworkSpec load_model(const std::string& path);

}  // namespace mmil
