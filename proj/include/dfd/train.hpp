#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dfd/config.hpp"
#include "dfd/dataset.hpp"
#include "dfd/models.hpp"

namespace dfd {
inline namespace DFD_PRECISION_NS {

// Mean of -log softmax(logits)[label] over the batch, via max-shifted
// log-sum-exp. logits: [N, classes]. Label out of range throws ContractError.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(std::vector<Parameter> params, AdamOptions options = {});

  // One bias-corrected update from the gradients currently held by the
  // parameters. Moments are kept in double.
  void step();

  std::size_t steps() const { return t_; }
  const std::vector<double>& first_moment(std::size_t i) const { return m_.at(i); }
  const std::vector<double>& second_moment(std::size_t i) const { return v_.at(i); }

 private:
  std::vector<Parameter> params_;
  AdamOptions options_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t t_ = 0;
};

// Validation-loss plateau rule: an epoch improves when best - loss >= min_delta;
// training stops once `patience` consecutive epochs fail to improve.
class PlateauStopper {
 public:
  PlateauStopper(std::size_t patience, double min_delta);

  // Returns true when this loss is a new best.
  bool update(double val_loss);
  bool should_stop() const { return stale_ >= patience_; }
  double best() const { return best_; }

 private:
  std::size_t patience_;
  double min_delta_;
  double best_;
  std::size_t stale_ = 0;
};

// Number of epochs a run would last for the given validation-loss sequence.
std::size_t simulate_plateau_stop(std::span<const double> val_losses, std::size_t patience,
                                  double min_delta, std::size_t epochs_max);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;
  double train_acc = 0;
  double val_loss = 0;
  double val_acc = 0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_loss = 0;
  bool stopped_early = false;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Adam training with the plateau rule. Batches are shuffled with
// data_seed ^ epoch. On return the model holds the best-validation-loss
// weights, which are also written to train_cfg.checkpoint_path when set.
TrainResult train(Model& model, const TrainConfig& train_cfg, std::span<const Sample> train_set,
                  std::span<const Sample> val_set, const EpochCallback& on_epoch = {});

struct Metrics {
  double accuracy = 0;
  std::vector<double> f1_per_class;
  double mean_loss = 0;
  double time_per_file = 0;  // seconds
};

// Accuracy and per-class F1 (0 when precision + recall = 0).
Metrics metrics_from_predictions(std::span<const int> predicted, std::span<const int> labels,
                                 std::size_t num_classes);

struct EvalOptions {
  std::size_t batch_size = 64;
  // Runs every sample as its own batch and records mean wall-clock latency.
  bool timed = true;
};

Metrics evaluate(Model& model, std::span<const Sample> samples, const EvalOptions& options = {});

// Index of the largest entry in each row of [N, C].
std::vector<int> argmax_rows(const Tensor& scores);

std::string history_csv(std::span<const EpochRecord> history);

// Published reference values for the three architectures. Report-only.
struct PaperBaseline {
  std::string model;
  std::string trainable_parameters;
  std::string non_trainable_parameters;
  std::string optimizer;
  std::string loss_function;
  std::string epochs;
  std::string batch_size;
  std::string training_loss;
  std::string stopping_criteria;
  std::string training_accuracy;
  std::string validation_accuracy;
  std::string f1_class0;
  std::string f1_class1;
  std::string time_per_file;
};

const std::array<PaperBaseline, 3>& paper_baselines();

struct ModelReport {
  std::string model;
  std::size_t trainable_parameters = 0;
  std::size_t non_trainable_parameters = 0;
  std::size_t epochs = 0;
  std::size_t batch_size = 0;
  double training_loss = 0;
  double training_accuracy = 0;
  Metrics validation;
};

// One column per measured model followed by one column per baseline headed
// "<model> paper (not a target)". Rows follow the published table order.
std::string report_csv(std::span<const ModelReport> models,
                       std::span<const PaperBaseline> baselines);

}  // namespace DFD_PRECISION_NS
}  // namespace dfd
