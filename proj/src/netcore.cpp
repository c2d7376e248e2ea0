#include "mmil/netcore.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "mmil/rng.hpp"

namespace mmil {

using nlohmann::json;

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kLinear: return "linear";
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kSigmoid: return "sigmoid";
    case Activation::kSoftmax: return "softmax";
  }
  return "?";
}

std::string to_string(Aggregator a) {
  switch (a) {
    case Aggregator::kMax: return "max";
    case Aggregator::kMean: return "mean";
    case Aggregator::kSum: return "sum";
  }
  return "?";
}

Activation activation_from_string(const std::string& s) {
  if (s == "linear") return Activation::kLinear;
  if (s == "relu") return Activation::kRelu;
  if (s == "tanh") return Activation::kTanh;
  if (s == "sigmoid") return Activation::kSigmoid;
  if (s == "softmax") return Activation::kSoftmax;
  throw std::invalid_argument("unknown activation: " + s);
}

Aggregator aggregator_from_string(const std::string& s) {
  if (s == "max") return Aggregator::kMax;
  if (s == "mean") return Aggregator::kMean;
  if (s == "sum") return Aggregator::kSum;
  throw std::invalid_argument("unknown aggregator: " + s);
}

namespace {

void apply_activation(Activation act, const Vec& pre, Vec& post) {
  post.resize(pre.size());
  switch (act) {
    case Activation::kLinear:
      post = pre;
      break;
    case Activation::kRelu:
      for (std::size_t i = 0; i < pre.size(); ++i)
        post[i] = pre[i] > 0.0 ? pre[i] : 0.0;
      break;
    case Activation::kTanh:
      for (std::size_t i = 0; i < pre.size(); ++i) post[i] = std::tanh(pre[i]);
      break;
    case Activation::kSigmoid:
      for (std::size_t i = 0; i < pre.size(); ++i)
        post[i] = 1.0 / (1.0 + std::exp(-pre[i]));
      break;
    case Activation::kSoftmax: {
      const double mx = *std::max_element(pre.begin(), pre.end());
      double z = 0.0;
      for (std::size_t i = 0; i < pre.size(); ++i) {
        post[i] = std::exp(pre[i] - mx);
        z += post[i];
      }
      for (double& v : post) v /= z;
      break;
    }
  }
}

// d post / d pre as a factor, given pre and post. Not valid for softmax
// (handled fused with the loss).
double activation_grad(Activation act, double pre, double post) {
  switch (act) {
    case Activation::kLinear: return 1.0;
    case Activation::kRelu: return pre > 0.0 ? 1.0 : 0.0;
    case Activation::kTanh: return 1.0 - post * post;
    case Activation::kSigmoid: return post * (1.0 - post);
    case Activation::kSoftmax:
      throw std::logic_error("softmax only allowed on the output layer");
  }
  return 0.0;
}

DenseTrace dense_forward(const Vec& input,
                         const std::vector<DenseLayerParams>& stack) {
  DenseTrace trace;
  const Vec* cur = &input;
  for (const auto& layer : stack) {
    if (cur->size() != layer.w.cols())
      throw std::invalid_argument("dense layer input width mismatch");
    trace.pre.push_back(layer.w.affine(*cur, layer.b));
    Vec post;
    apply_activation(layer.activation, trace.pre.back(), post);
    trace.post.push_back(std::move(post));
    cur = &trace.post.back();
  }
  return trace;
}

const Vec& dense_output(const DenseTrace& trace, const Vec& input) {
  return trace.post.empty() ? input : trace.post.back();
}

}  // namespace

BagStageTrace::Parallel bag_layer_forward(const std::vector<Vec>& bag,
                                          const BagLayerParams& params) {
  if (bag.empty()) throw std::invalid_argument("bag_layer_forward: empty bag");
  BagStageTrace::Parallel p;
  const std::size_t k = params.w.rows();
  for (const auto& phi : bag) {
    if (phi.size() != params.w.cols())
      throw std::invalid_argument("bag_layer_forward: width mismatch");
    p.pre.push_back(params.w.affine(phi, params.b));
    Vec post;
    apply_activation(params.activation, p.pre.back(), post);
    p.post.push_back(std::move(post));
  }
  p.out.assign(k, 0.0);
  switch (params.aggregator) {
    case Aggregator::kMax:
      p.argmax.assign(k, 0);
      for (std::size_t u = 0; u < k; ++u) {
        double best = p.post[0][u];
        std::size_t best_i = 0;
        for (std::size_t i = 1; i < p.post.size(); ++i) {
          if (p.post[i][u] > best) {
            best = p.post[i][u];
            best_i = i;
          }
        }
        p.out[u] = best;
        p.argmax[u] = best_i;
      }
      break;
    case Aggregator::kMean:
      // Fixed left-to-right order, then scale.
      for (const auto& rho : p.post)
        for (std::size_t u = 0; u < k; ++u) p.out[u] += rho[u];
      for (double& v : p.out) v /= static_cast<double>(p.post.size());
      break;
    case Aggregator::kSum: {
      // Per-coordinate sorted summation so the result is exactly
      // permutation invariant.
      Vec column(p.post.size());
      for (std::size_t u = 0; u < k; ++u) {
        for (std::size_t i = 0; i < p.post.size(); ++i)
          column[i] = p.post[i][u];
        std::sort(column.begin(), column.end());
        double acc = 0.0;
        for (double v : column) acc += v;
        p.out[u] = acc;
      }
      break;
    }
  }
  return p;
}

namespace {

BagStageTrace bag_stage_forward(const std::vector<Vec>& bag,
                                const BagStage& stage) {
  BagStageTrace trace;
  for (const auto& layer : stage)
    trace.parallel.push_back(bag_layer_forward(bag, layer));
  for (const auto& p : trace.parallel)
    trace.concat_out.insert(trace.concat_out.end(), p.out.begin(),
                            p.out.end());
  return trace;
}

SubBagTrace subbag_forward(const std::vector<Instance>& instances,
                           const NetworkSpec& spec) {
  SubBagTrace trace;
  std::vector<Vec> phis;
  phis.reserve(instances.size());
  for (const auto& inst : instances) {
    trace.instance_dense.push_back(dense_forward(inst, spec.instance_stack));
    phis.push_back(dense_output(trace.instance_dense.back(), inst));
  }
  trace.bag = bag_stage_forward(phis, spec.instance_bag);
  trace.stack = dense_forward(trace.bag.concat_out, spec.subbag_stack);
  trace.out = dense_output(trace.stack, trace.bag.concat_out);
  return trace;
}

}  // namespace

ForwardTrace forward(const TopBag& x, const NetworkSpec& spec) {
  if (!spec.is_mmil())
    throw std::invalid_argument("forward: MIL spec cannot consume a top-bag");
  if (x.subbags.empty()) throw std::invalid_argument("forward: empty top-bag");
  ForwardTrace trace;
  std::vector<Vec> psis;
  for (const auto& sb : x.subbags) {
    if (sb.instances.empty())
      throw std::invalid_argument("forward: empty sub-bag");
    trace.subbags.push_back(subbag_forward(sb.instances, spec));
    psis.push_back(trace.subbags.back().out);
  }
  trace.top_bag = bag_stage_forward(psis, *spec.subbag_bag);
  trace.head = dense_forward(trace.top_bag.concat_out, spec.head);
  trace.output = dense_output(trace.head, trace.top_bag.concat_out);
  return trace;
}

ForwardTrace forward(const FlatBag& x, const NetworkSpec& spec) {
  if (spec.is_mmil())
    throw std::invalid_argument("forward: MMIL spec cannot consume a flat bag");
  if (x.instances.empty())
    throw std::invalid_argument("forward: empty bag");
  ForwardTrace trace;
  trace.subbags.push_back(subbag_forward(x.instances, spec));
  const Vec& bag_out = trace.subbags.back().out;
  trace.head = dense_forward(bag_out, spec.head);
  trace.output = dense_output(trace.head, bag_out);
  return trace;
}

// --- spec checks ----------------------------------------------------------

std::size_t stage_output_dim(const BagStage& stage) {
  std::size_t dim = 0;
  for (const auto& layer : stage) dim += layer.w.rows();
  return dim;
}

namespace {

std::size_t chain_dense(const std::vector<DenseLayerParams>& stack,
                        std::size_t in, const char* what) {
  for (const auto& layer : stack) {
    if (layer.w.cols() != in) {
      std::ostringstream msg;
      msg << what << ": layer expects width " << layer.w.cols() << ", got "
          << in;
      throw std::invalid_argument(msg.str());
    }
    if (layer.b.size() != layer.w.rows())
      throw std::invalid_argument(std::string(what) + ": bias size mismatch");
    in = layer.w.rows();
  }
  return in;
}

std::size_t chain_stage(const BagStage& stage, std::size_t in,
                        const char* what) {
  if (stage.empty())
    throw std::invalid_argument(std::string(what) + ": empty bag stage");
  for (const auto& layer : stage) {
    if (layer.w.cols() != in) {
      std::ostringstream msg;
      msg << what << ": bag-layer expects width " << layer.w.cols()
          << ", got " << in;
      throw std::invalid_argument(msg.str());
    }
    if (layer.b.size() != layer.w.rows())
      throw std::invalid_argument(std::string(what) + ": bias size mismatch");
    if (layer.activation == Activation::kSoftmax ||
        layer.activation == Activation::kSigmoid)
      throw std::invalid_argument(std::string(what) +
                                  ": output activations not allowed here");
  }
  return stage_output_dim(stage);
}

}  // namespace

std::size_t NetworkSpec::input_dim() const {
  if (!instance_stack.empty()) return instance_stack.front().w.cols();
  if (instance_bag.empty())
    throw std::invalid_argument("NetworkSpec: missing instance bag stage");
  return instance_bag.front().w.cols();
}

std::size_t NetworkSpec::output_dim() const {
  if (head.empty()) throw std::invalid_argument("NetworkSpec: empty head");
  return head.back().w.rows();
}

void NetworkSpec::check() const {
  std::size_t dim = input_dim();
  dim = chain_dense(instance_stack, dim, "instance_stack");
  dim = chain_stage(instance_bag, dim, "instance_bag");
  if (is_mmil()) {
    dim = chain_dense(subbag_stack, dim, "subbag_stack");
    dim = chain_stage(*subbag_bag, dim, "subbag_bag");
  } else if (!subbag_stack.empty()) {
    throw std::invalid_argument("MIL spec must not have a subbag_stack");
  }
  if (head.empty()) throw std::invalid_argument("NetworkSpec: empty head");
  chain_dense(head, dim, "head");
  for (std::size_t i = 0; i < head.size(); ++i) {
    const bool last = i + 1 == head.size();
    const Activation a = head[i].activation;
    if (!last && (a == Activation::kSoftmax || a == Activation::kSigmoid))
      throw std::invalid_argument("output activation before the final layer");
    if (last && a != Activation::kSoftmax && a != Activation::kSigmoid)
      throw std::invalid_argument(
          "final head layer must be softmax or sigmoid");
  }
  if (head.back().activation == Activation::kSigmoid && output_dim() != 1)
    throw std::invalid_argument("sigmoid output layer must have width 1");
  if (head.back().activation == Activation::kSoftmax && output_dim() < 2)
    throw std::invalid_argument("softmax output layer must have width >= 2");
}

// --- loss -----------------------------------------------------------------

namespace {
constexpr double kLogClamp = 1e-12;
double clamped_log(double p) { return std::log(std::max(p, kLogClamp)); }
}  // namespace

double loss(const Vec& probabilities, int label, LossKind kind) {
  switch (kind) {
    case LossKind::kBce: {
      if (probabilities.size() != 1)
        throw std::invalid_argument("bce loss expects a single probability");
      if (label != 0 && label != 1)
        throw std::invalid_argument("bce loss expects a binary label");
      const double p = probabilities[0];
      return label == 1 ? -clamped_log(p) : -clamped_log(1.0 - p);
    }
    case LossKind::kSoftmaxCe: {
      if (label < 0 || static_cast<std::size_t>(label) >= probabilities.size())
        throw std::invalid_argument("softmax_ce: label out of range");
      return -clamped_log(probabilities[static_cast<std::size_t>(label)]);
    }
  }
  return 0.0;
}

LossKind loss_kind_for(const NetworkSpec& spec) {
  return spec.head.back().activation == Activation::kSigmoid
             ? LossKind::kBce
             : LossKind::kSoftmaxCe;
}

int predicted_class(const Vec& probabilities) {
  if (probabilities.size() == 1)
    return probabilities[0] > 0.5 ? 1 : 0;
  int best = 0;
  for (std::size_t i = 1; i < probabilities.size(); ++i)
    if (probabilities[i] > probabilities[static_cast<std::size_t>(best)])
      best = static_cast<int>(i);
  return best;
}

// --- backward -------------------------------------------------------------

namespace {

LayerGrad zero_like_dense(const DenseLayerParams& layer) {
  return {Mat(layer.w.rows(), layer.w.cols()), Vec(layer.b.size(), 0.0)};
}
LayerGrad zero_like_bag(const BagLayerParams& layer) {
  return {Mat(layer.w.rows(), layer.w.cols()), Vec(layer.b.size(), 0.0)};
}

// Backprop through a dense stack. dout is d loss / d stack output; returns
// d loss / d stack input and accumulates parameter grads.
Vec dense_backward(const std::vector<DenseLayerParams>& stack,
                   const DenseTrace& trace, const Vec& input, Vec dout,
                   std::vector<LayerGrad>& grads) {
  for (std::size_t li = stack.size(); li-- > 0;) {
    const auto& layer = stack[li];
    const Vec& pre = trace.pre[li];
    const Vec& post = trace.post[li];
    const Vec& in = li == 0 ? input : trace.post[li - 1];
    Vec dpre(pre.size());
    for (std::size_t u = 0; u < pre.size(); ++u)
      dpre[u] = dout[u] * activation_grad(layer.activation, pre[u], post[u]);
    auto& g = grads[li];
    for (std::size_t u = 0; u < pre.size(); ++u) {
      g.b[u] += dpre[u];
      for (std::size_t c = 0; c < in.size(); ++c)
        g.w(u, c) += dpre[u] * in[c];
    }
    dout = layer.w.transpose_times(dpre);
  }
  return dout;
}

// Backprop through one aggregation stage. dout is d loss / d concatenated
// output; returns per-element input gradients and accumulates param grads.
std::vector<Vec> bag_stage_backward(const BagStage& stage,
                                    const BagStageTrace& trace,
                                    const std::vector<Vec>& inputs,
                                    const Vec& dout,
                                    std::vector<LayerGrad>& grads) {
  const std::size_t n = inputs.size();
  std::vector<Vec> dinputs(n, Vec(inputs[0].size(), 0.0));
  std::size_t offset = 0;
  for (std::size_t pi = 0; pi < stage.size(); ++pi) {
    const auto& layer = stage[pi];
    const auto& p = trace.parallel[pi];
    const std::size_t k = layer.w.rows();
    for (std::size_t i = 0; i < n; ++i) {
      Vec drho(k, 0.0);
      bool any = false;
      for (std::size_t u = 0; u < k; ++u) {
        double share = 0.0;
        switch (layer.aggregator) {
          case Aggregator::kMax:
            share = p.argmax[u] == i ? dout[offset + u] : 0.0;
            break;
          case Aggregator::kMean:
            share = dout[offset + u] / static_cast<double>(n);
            break;
          case Aggregator::kSum:
            share = dout[offset + u];
            break;
        }
        if (share != 0.0) {
          drho[u] = share * activation_grad(layer.activation, p.pre[i][u],
                                            p.post[i][u]);
          any = any || drho[u] != 0.0;
        }
      }
      if (!any) continue;
      auto& g = grads[pi];
      const Vec& in = inputs[i];
      for (std::size_t u = 0; u < k; ++u) {
        if (drho[u] == 0.0) continue;
        g.b[u] += drho[u];
        for (std::size_t c = 0; c < in.size(); ++c)
          g.w(u, c) += drho[u] * in[c];
      }
      const Vec dx = layer.w.transpose_times(drho);
      for (std::size_t c = 0; c < dx.size(); ++c) dinputs[i][c] += dx[c];
    }
    offset += k;
  }
  return dinputs;
}

// Fused output-activation + cross-entropy gradient w.r.t. the final
// pre-activation: p - y for both softmax/CE and sigmoid/BCE.
Vec output_delta(const Vec& probs, int label, const NetworkSpec& spec) {
  Vec delta(probs.size());
  if (spec.head.back().activation == Activation::kSigmoid) {
    delta[0] = probs[0] - static_cast<double>(label);
  } else {
    for (std::size_t i = 0; i < probs.size(); ++i)
      delta[i] = probs[i] - (static_cast<int>(i) == label ? 1.0 : 0.0);
  }
  return delta;
}

// Head backward with the last layer fused with the loss.
Vec head_backward(const NetworkSpec& spec, const DenseTrace& trace,
                  const Vec& input, int label, std::vector<LayerGrad>& grads) {
  const auto& stack = spec.head;
  Vec dpre = output_delta(trace.post.back(), label, spec);
  Vec dout;
  for (std::size_t li = stack.size(); li-- > 0;) {
    const auto& layer = stack[li];
    const Vec& in = li == 0 ? input : trace.post[li - 1];
    if (li + 1 != stack.size()) {
      const Vec& pre = trace.pre[li];
      const Vec& post = trace.post[li];
      dpre.resize(pre.size());
      for (std::size_t u = 0; u < pre.size(); ++u)
        dpre[u] = dout[u] * activation_grad(layer.activation, pre[u], post[u]);
    }
    auto& g = grads[li];
    for (std::size_t u = 0; u < dpre.size(); ++u) {
      g.b[u] += dpre[u];
      for (std::size_t c = 0; c < in.size(); ++c)
        g.w(u, c) += dpre[u] * in[c];
    }
    dout = layer.w.transpose_times(dpre);
  }
  return dout;
}

void subbag_backward(const NetworkSpec& spec, const SubBagTrace& trace,
                     const std::vector<Instance>& instances, const Vec& dout,
                     NetworkGrad& grad) {
  const Vec dbag_out = dense_backward(spec.subbag_stack, trace.stack,
                                      trace.bag.concat_out, dout,
                                      grad.subbag_stack);
  std::vector<Vec> phis;
  phis.reserve(instances.size());
  for (std::size_t l = 0; l < instances.size(); ++l)
    phis.push_back(dense_output(trace.instance_dense[l], instances[l]));
  const auto dphis = bag_stage_backward(spec.instance_bag, trace.bag, phis,
                                        dbag_out, grad.instance_bag);
  for (std::size_t l = 0; l < instances.size(); ++l)
    dense_backward(spec.instance_stack, trace.instance_dense[l], instances[l],
                   dphis[l], grad.instance_stack);
}

}  // namespace

NetworkGrad zero_grad(const NetworkSpec& spec) {
  NetworkGrad g;
  for (const auto& l : spec.instance_stack)
    g.instance_stack.push_back(zero_like_dense(l));
  for (const auto& l : spec.instance_bag)
    g.instance_bag.push_back(zero_like_bag(l));
  for (const auto& l : spec.subbag_stack)
    g.subbag_stack.push_back(zero_like_dense(l));
  if (spec.subbag_bag)
    for (const auto& l : *spec.subbag_bag)
      g.subbag_bag.push_back(zero_like_bag(l));
  for (const auto& l : spec.head) g.head.push_back(zero_like_dense(l));
  return g;
}

void backward(const ForwardTrace& trace, const TopBag& x, int label,
              const NetworkSpec& spec, NetworkGrad& grad) {
  if (!spec.is_mmil())
    throw std::invalid_argument("backward: MIL spec with top-bag input");
  if (trace.subbags.size() != x.subbags.size())
    throw std::invalid_argument("backward: trace/example mismatch");
  const Vec dtop = head_backward(spec, trace.head, trace.top_bag.concat_out,
                                 label, grad.head);
  std::vector<Vec> psis;
  psis.reserve(trace.subbags.size());
  for (const auto& sb : trace.subbags) psis.push_back(sb.out);
  const auto dpsis = bag_stage_backward(*spec.subbag_bag, trace.top_bag, psis,
                                        dtop, grad.subbag_bag);
  for (std::size_t j = 0; j < x.subbags.size(); ++j)
    subbag_backward(spec, trace.subbags[j], x.subbags[j].instances, dpsis[j],
                    grad);
}

void backward(const ForwardTrace& trace, const FlatBag& x, int label,
              const NetworkSpec& spec, NetworkGrad& grad) {
  if (spec.is_mmil())
    throw std::invalid_argument("backward: MMIL spec with flat-bag input");
  const auto& sb = trace.subbags.front();
  const Vec dbag = head_backward(spec, trace.head, sb.out, label, grad.head);
  subbag_backward(spec, sb, x.instances, dbag, grad);
}

// --- parameter views ------------------------------------------------------

namespace {

template <typename LayerSeq>
void collect(LayerSeq& layers, std::vector<double*>& out) {
  for (auto& layer : layers) {
    for (double& v : layer.w.data()) out.push_back(&v);
    for (double& v : layer.b) out.push_back(&v);
  }
}

}  // namespace

std::vector<double*> parameter_view(NetworkSpec& spec) {
  std::vector<double*> out;
  collect(spec.instance_stack, out);
  collect(spec.instance_bag, out);
  collect(spec.subbag_stack, out);
  if (spec.subbag_bag) collect(*spec.subbag_bag, out);
  collect(spec.head, out);
  return out;
}

std::vector<double*> gradient_view(NetworkGrad& grad) {
  std::vector<double*> out;
  collect(grad.instance_stack, out);
  collect(grad.instance_bag, out);
  collect(grad.subbag_stack, out);
  collect(grad.subbag_bag, out);
  collect(grad.head, out);
  return out;
}

// --- construction and IO --------------------------------------------------

namespace {

void glorot_init(Mat& w, Rng& rng) {
  const double bound =
      std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  for (double& v : w.data()) v = rng.uniform_real(-bound, bound);
}

json dense_to_json(const DenseLayerParams& l) {
  return {{"type", "dense"},
          {"in", l.w.cols()},
          {"out", l.w.rows()},
          {"activation", to_string(l.activation)}};
}

json bag_to_json(const BagLayerParams& l) {
  return {{"type", "bag"},
          {"in", l.w.cols()},
          {"out", l.w.rows()},
          {"activation", to_string(l.activation)},
          {"aggregator", to_string(l.aggregator)}};
}

DenseLayerParams dense_from_json(const json& j) {
  DenseLayerParams l;
  l.w = Mat(j.at("out").get<std::size_t>(), j.at("in").get<std::size_t>());
  l.b.assign(l.w.rows(), 0.0);
  l.activation = activation_from_string(j.at("activation").get<std::string>());
  return l;
}

BagLayerParams bag_from_json(const json& j) {
  BagLayerParams l;
  l.w = Mat(j.at("out").get<std::size_t>(), j.at("in").get<std::size_t>());
  l.b.assign(l.w.rows(), 0.0);
  l.activation = activation_from_string(j.at("activation").get<std::string>());
  l.aggregator = aggregator_from_string(j.at("aggregator").get<std::string>());
  return l;
}

template <typename Layer>
void append_weights(json& out, const std::vector<Layer>& layers) {
  for (const auto& l : layers)
    out.push_back({{"w", l.w.data()}, {"b", l.b}});
}

template <typename Layer>
void read_weights(const json& in, std::size_t& idx,
                  std::vector<Layer>& layers) {
  for (auto& l : layers) {
    const auto& entry = in.at(idx++);
    const auto w = entry.at("w").get<std::vector<double>>();
    const auto b = entry.at("b").get<std::vector<double>>();
    if (w.size() != l.w.rows() * l.w.cols() || b.size() != l.b.size())
      throw std::runtime_error("model file: weight shape mismatch");
    l.w.data() = w;
    l.b = b;
  }
}

}  // namespace

NetworkSpec init_network_from_arch(const std::string& arch_json_path,
                                   std::size_t input_dim, int num_classes,
                                   std::uint64_t seed) {
  std::ifstream in(arch_json_path);
  if (!in) throw std::runtime_error("cannot open " + arch_json_path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("parse error in " + arch_json_path + ": " +
                             e.what());
  }

  NetworkSpec spec;
  Rng rng(Rng::derive(seed, 0xa2c4));
  std::size_t dim = input_dim;

  auto make_dense = [&](const json& lj) {
    DenseLayerParams l;
    l.w = Mat(lj.at("units").get<std::size_t>(), dim);
    l.b.assign(l.w.rows(), 0.0);
    l.activation =
        activation_from_string(lj.value("activation", std::string("relu")));
    glorot_init(l.w, rng);
    dim = l.w.rows();
    return l;
  };
  auto make_stage = [&](const json& sj) {
    BagStage stage;
    const std::size_t in_dim = dim;
    std::size_t out_dim = 0;
    for (const auto& lj : sj) {
      BagLayerParams l;
      l.w = Mat(lj.at("units").get<std::size_t>(), in_dim);
      l.b.assign(l.w.rows(), 0.0);
      l.activation =
          activation_from_string(lj.value("activation", std::string("relu")));
      l.aggregator =
          aggregator_from_string(lj.value("aggregator", std::string("max")));
      glorot_init(l.w, rng);
      out_dim += l.w.rows();
      stage.push_back(std::move(l));
    }
    dim = out_dim;
    return stage;
  };

  for (const auto& lj : j.value("instance_stack", json::array()))
    spec.instance_stack.push_back(make_dense(lj));
  spec.instance_bag = make_stage(j.at("instance_bag"));
  if (j.contains("subbag_bag")) {
    for (const auto& lj : j.value("subbag_stack", json::array()))
      spec.subbag_stack.push_back(make_dense(lj));
    spec.subbag_bag = make_stage(j.at("subbag_bag"));
  }
  // Head hidden layers from the file; the output layer is appended with the
  // dataset's class count.
  for (const auto& lj : j.value("head", json::array()))
    spec.head.push_back(make_dense(lj));
  const std::string out_act =
      j.value("output_activation",
              std::string(num_classes == 2 ? "sigmoid" : "softmax"));
  DenseLayerParams out_layer;
  out_layer.activation = activation_from_string(out_act);
  const std::size_t out_units =
      out_layer.activation == Activation::kSigmoid
          ? 1
          : static_cast<std::size_t>(num_classes);
  out_layer.w = Mat(out_units, dim);
  out_layer.b.assign(out_units, 0.0);
  glorot_init(out_layer.w, rng);
  spec.head.push_back(std::move(out_layer));

  spec.check();
  return spec;
}

void save_model(const NetworkSpec& spec, const std::string& path) {
  json layers = {{"instance_stack", json::array()},
                 {"instance_bag", json::array()},
                 {"subbag_stack", json::array()},
                 {"head", json::array()}};
  for (const auto& l : spec.instance_stack)
    layers["instance_stack"].push_back(dense_to_json(l));
  for (const auto& l : spec.instance_bag)
    layers["instance_bag"].push_back(bag_to_json(l));
  for (const auto& l : spec.subbag_stack)
    layers["subbag_stack"].push_back(dense_to_json(l));
  if (spec.subbag_bag) {
    layers["subbag_bag"] = json::array();
    for (const auto& l : *spec.subbag_bag)
      layers["subbag_bag"].push_back(bag_to_json(l));
  }
  for (const auto& l : spec.head) layers["head"].push_back(dense_to_json(l));

  json weights = json::array();
  append_weights(weights, spec.instance_stack);
  append_weights(weights, spec.instance_bag);
  append_weights(weights, spec.subbag_stack);
  if (spec.subbag_bag) append_weights(weights, *spec.subbag_bag);
  append_weights(weights, spec.head);

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << json{{"version", 1},
              {"spec", std::move(layers)},
              {"weights", std::move(weights)}}
             .dump(2)
      << "\n";
}

NetworkSpec load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("parse error in " + path + ": " + e.what());
  }
  if (j.value("version", 0) != 1)
    throw std::runtime_error(path + ": unsupported model version");

  NetworkSpec spec;
  const auto& layers = j.at("spec");
  for (const auto& lj : layers.at("instance_stack"))
    spec.instance_stack.push_back(dense_from_json(lj));
  for (const auto& lj : layers.at("instance_bag"))
    spec.instance_bag.push_back(bag_from_json(lj));
  for (const auto& lj : layers.at("subbag_stack"))
    spec.subbag_stack.push_back(dense_from_json(lj));
  if (layers.contains("subbag_bag")) {
    BagStage stage;
    for (const auto& lj : layers.at("subbag_bag"))
      stage.push_back(bag_from_json(lj));
    spec.subbag_bag = std::move(stage);
  }
  for (const auto& lj : layers.at("head"))
    spec.head.push_back(dense_from_json(lj));

  const auto& weights = j.at("weights");
  std::size_t idx = 0;
  read_weights(weights, idx, spec.instance_stack);
  read_weights(weights, idx, spec.instance_bag);
  read_weights(weights, idx, spec.subbag_stack);
  if (spec.subbag_bag) read_weights(weights, idx, *spec.subbag_bag);
  read_weights(weights, idx, spec.head);
  if (idx != weights.size())
    throw std::runtime_error(path + ": trailing weight entries");

  spec.check();
  return spec;
}

}  // namespace mmil
