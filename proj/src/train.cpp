#include "mmil/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "mmil/rng.hpp"

namespace mmil {

void TrainConfig::check() const {
  if (learning_rate < 0.0)
    throw std::invalid_argument("learning_rate must be >= 0");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  if (max_epochs == 0) throw std::invalid_argument("max_epochs must be >= 1");
}

namespace {

struct Adam {
  std::vector<double> m, v;
  std::size_t t = 0;

  explicit Adam(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

  void step(const std::vector<double*>& params,
            const std::vector<double*>& grads, const TrainConfig& cfg) {
    ++t;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = *grads[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      *params[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
  }
};

template <typename Dataset>
const auto& example_at(const Dataset& ds, std::size_t i) {
  return ds.examples[i];
}

template <typename Dataset>
double mean_loss(const NetworkSpec& spec, const Dataset& ds, LossKind kind) {
  double acc = 0.0;
  for (const auto& ex : ds.examples)
    acc += loss(forward(ex, spec).output, ex.label, kind);
  return acc / static_cast<double>(ds.examples.size());
}

template <typename Dataset>
TrainResult train_impl(const NetworkSpec& spec_in, const Dataset& train_set,
                       const Dataset& valid_set, const TrainConfig& config) {
  config.check();
  spec_in.check();
  if (train_set.examples.empty() || valid_set.examples.empty())
    throw std::invalid_argument("train: empty dataset");
  if (train_set.feature_dim != spec_in.input_dim())
    throw std::invalid_argument("train: dataset feature_dim does not match "
                                "the network input width");

  NetworkSpec model = spec_in;
  const LossKind kind = loss_kind_for(model);
  auto params = parameter_view(model);
  NetworkGrad grad = zero_grad(model);
  auto grads = gradient_view(grad);
  Adam adam(params.size());
  Rng rng(Rng::derive(config.seed, 0x7a11));

  TrainResult result;
  NetworkSpec best = model;
  double best_valid = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  std::size_t since_improved = 0;

  std::vector<std::size_t> order(train_set.examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += config.batch_size) {
      const std::size_t end =
          std::min(start + config.batch_size, order.size());
      for (double* g : grads) *g = 0.0;
      for (std::size_t oi = start; oi < end; ++oi) {
        const auto& ex = example_at(train_set, order[oi]);
        const auto trace = forward(ex, model);
        const double l = loss(trace.output, ex.label, kind);
        if (!std::isfinite(l)) {
          std::ostringstream msg;
          msg << "train: non-finite loss at epoch " << epoch << ", batch "
              << start / config.batch_size;
          throw std::runtime_error(msg.str());
        }
        epoch_loss += l;
        backward(trace, ex, ex.label, model, grad);
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      for (double* g : grads) *g *= scale;
      adam.step(params, grads, config);
    }
    epoch_loss /= static_cast<double>(order.size());

    const auto preds = predict(model, valid_set);
    const double valid_loss = mean_loss(model, valid_set, kind);
    EpochRecord rec{epoch, epoch_loss, valid_loss,
                    accuracy(preds, valid_set)};
    result.history.push_back(rec);

    if (valid_loss < best_valid) {
      best_valid = valid_loss;
      best = model;
      best_epoch = epoch;
      since_improved = 0;
    } else {
      ++since_improved;
      if (since_improved > config.early_stop_patience) break;
    }
  }

  result.model = std::move(best);
  result.best_epoch = best_epoch;
  return result;
}

template <typename Dataset>
std::vector<Prediction> predict_impl(const NetworkSpec& spec,
                                     const Dataset& dataset) {
  std::vector<Prediction> out;
  out.reserve(dataset.examples.size());
  for (const auto& ex : dataset.examples) {
    Prediction p;
    p.probabilities = forward(ex, spec).output;
    p.label = predicted_class(p.probabilities);
    out.push_back(std::move(p));
  }
  return out;
}

template <typename Dataset>
double accuracy_impl(const std::vector<Prediction>& predictions,
                     const Dataset& dataset) {
  if (predictions.size() != dataset.examples.size())
    throw std::invalid_argument("accuracy: prediction count mismatch");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    if (predictions[i].label == dataset.examples[i].label) ++correct;
  return static_cast<double>(correct) /
         static_cast<double>(predictions.size());
}

}  // namespace

TrainResult train(const NetworkSpec& spec, const MMILDataset& train_set,
                  const MMILDataset& valid_set, const TrainConfig& config) {
  return train_impl(spec, train_set, valid_set, config);
}

TrainResult train(const NetworkSpec& spec, const MILDataset& train_set,
                  const MILDataset& valid_set, const TrainConfig& config) {
  return train_impl(spec, train_set, valid_set, config);
}

std::vector<Prediction> predict(const NetworkSpec& spec,
                                const MMILDataset& dataset) {
  return predict_impl(spec, dataset);
}

std::vector<Prediction> predict(const NetworkSpec& spec,
                                const MILDataset& dataset) {
  return predict_impl(spec, dataset);
}

double accuracy(const std::vector<Prediction>& predictions,
                const MMILDataset& dataset) {
  return accuracy_impl(predictions, dataset);
}

double accuracy(const std::vector<Prediction>& predictions,
                const MILDataset& dataset) {
  return accuracy_impl(predictions, dataset);
}

void save_history_csv(const std::vector<EpochRecord>& history,
                      const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "epoch,train_loss,valid_loss,valid_accuracy\n";
  out.precision(17);
  for (const auto& r : history)
    out << r.epoch << "," << r.train_loss << "," << r.valid_loss << ","
        << r.valid_accuracy << "\n";
}

}  // namespace mmil
