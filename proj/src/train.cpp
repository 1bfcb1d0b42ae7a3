#include "dfd/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>

#include "dfd/batching.hpp"
#include "dfd/ops.hpp"

namespace dfd {
inline namespace DFD_PRECISION_NS {

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.extent(0) != labels.size() || labels.empty()) {
    throw ShapeError("cross_entropy expects logits [N,C] with N labels, got " +
                     shape_str(logits.shape()) + " and " + std::to_string(labels.size()));
  }
  const std::size_t n = logits.extent(0), c = logits.extent(1);
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= c) {
      throw ContractError("label " + std::to_string(label) + " outside [0, " + std::to_string(c) +
                          ")");
    }
  }
  auto z = logits.data();
  // Per-row softmax kept for the backward rule.
  auto probs = std::make_shared<std::vector<Real>>(n * c);
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Real* row = z.data() + i * c;
    const Real peak = *std::max_element(row, row + c);
    double denom = 0;
    for (std::size_t j = 0; j < c; ++j) denom += std::exp(static_cast<double>(row[j] - peak));
    const double log_denom = std::log(denom);
    for (std::size_t j = 0; j < c; ++j) {
      (*probs)[i * c + j] = static_cast<Real>(std::exp(static_cast<double>(row[j] - peak)) / denom);
    }
    total += log_denom - static_cast<double>(row[static_cast<std::size_t>(labels[i])] - peak);
  }
  std::vector<int> targets(labels.begin(), labels.end());
  Tensor input = logits;
  return make_result({}, {static_cast<Real>(total / static_cast<double>(n))}, {&logits},
                     [input, probs, targets, n, c](const Tensor& out) mutable {
                       if (!input.requires_grad()) return;
                       const Real g = out.grad()[0] / static_cast<Real>(n);
                       auto dz = input.mutable_grad();
                       for (std::size_t i = 0; i < n; ++i) {
                         for (std::size_t j = 0; j < c; ++j) {
                           const Real onehot =
                               static_cast<std::size_t>(targets[i]) == j ? Real(1) : Real(0);
                           dz[i * c + j] += g * ((*probs)[i * c + j] - onehot);
                         }
                       }
                     });
}

Adam::Adam(std::vector<Parameter> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  for (const auto& p : params_) {
    m_.emplace_back(p.value.size(), 0.0);
    v_.emplace_back(p.value.size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor value = params_[k].value;
    auto g = value.grad();
    auto p = value.mutable_data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      m[i] = b1 * m[i] + (1.0 - b1) * gi;
      v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
      const double update = options_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + options_.eps);
      p[i] = static_cast<Real>(static_cast<double>(p[i]) - update);
    }
  }
}

PlateauStopper::PlateauStopper(std::size_t patience, double min_delta)
    : patience_(patience), min_delta_(min_delta), best_(std::numeric_limits<double>::infinity()) {
  if (patience_ == 0) throw ContractError("patience must be at least 1");
  if (!(min_delta_ >= 0)) throw ContractError("min_delta must be non-negative");
}

bool PlateauStopper::update(double val_loss) {
  // The first finite loss always improves on the infinite initial best.
  const bool improved = std::isfinite(val_loss) &&
                        (std::isinf(best_) || best_ - val_loss >= min_delta_);
  if (improved) {
    best_ = val_loss;
    stale_ = 0;
  } else {
    ++stale_;
  }
  return improved;
}

std::size_t simulate_plateau_stop(std::span<const double> val_losses, std::size_t patience,
                                  double min_delta, std::size_t epochs_max) {
  PlateauStopper stopper(patience, min_delta);
  const std::size_t limit = std::min(epochs_max, val_losses.size());
  for (std::size_t epoch = 1; epoch <= limit; ++epoch) {
    stopper.update(val_losses[epoch - 1]);
    if (stopper.should_stop()) return epoch;
  }
  return limit;
}

std::vector<int> argmax_rows(const Tensor& scores) {
  if (scores.rank() != 2) throw ShapeError("argmax_rows expects [N,C]");
  const std::size_t n = scores.extent(0), c = scores.extent(1);
  auto v = scores.data();
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Real* row = v.data() + i * c;
    out[i] = static_cast<int>(std::max_element(row, row + c) - row);
  }
  return out;
}

namespace {

std::vector<int> labels_of(std::span<const Sample> samples) {
  std::vector<int> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) labels.push_back(s.label);
  return labels;
}

double accuracy_of(std::span<const int> predicted, std::span<const int> labels) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predicted[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

}  // namespace

Metrics metrics_from_predictions(std::span<const int> predicted, std::span<const int> labels,
                                 std::size_t num_classes) {
  if (labels.empty() || predicted.size() != labels.size()) {
    throw ContractError("metrics need equally many predictions and labels, at least one");
  }
  Metrics m;
  m.accuracy = accuracy_of(predicted, labels);
  for (std::size_t c = 0; c < num_classes; ++c) {
    const int cls = static_cast<int>(c);
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      tp += predicted[i] == cls && labels[i] == cls;
      fp += predicted[i] == cls && labels[i] != cls;
      fn += predicted[i] != cls && labels[i] == cls;
    }
    const double precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0;
    const double recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0;
    m.f1_per_class.push_back(precision + recall > 0
                                 ? 2 * precision * recall / (precision + recall)
                                 : 0.0);
  }
  return m;
}

Metrics evaluate(Model& model, std::span<const Sample> samples, const EvalOptions& options) {
  if (samples.empty()) throw ContractError("evaluate needs at least one sample");
  NoGradScope no_grad;
  const std::size_t size = model.config().image_size;
  const std::size_t batch = options.timed ? 1 : options.batch_size;
  BatchIterator batches(samples, batch, size);
  std::vector<int> predicted;
  double loss_sum = 0;
  double seconds = 0;
  while (auto b = batches.next()) {
    const auto start = std::chrono::steady_clock::now();
    const Tensor logits = model.logits(b->images, Mode::kEval);
    if (options.timed) {
      // The published latency covers the probability output.
      softmax(logits, 1);
      seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    loss_sum += static_cast<double>(cross_entropy(logits, b->labels).item()) *
                static_cast<double>(b->labels.size());
    for (int p : argmax_rows(logits)) predicted.push_back(p);
  }
  const auto labels = labels_of(samples);
  Metrics m = metrics_from_predictions(predicted, labels, model.config().num_classes);
  m.mean_loss = loss_sum / static_cast<double>(samples.size());
  m.time_per_file = options.timed ? seconds / static_cast<double>(samples.size()) : 0.0;
  return m;
}

TrainResult train(Model& model, const TrainConfig& train_cfg, std::span<const Sample> train_set,
                  std::span<const Sample> val_set, const EpochCallback& on_epoch) {
  train_cfg.validate();
  if (train_set.empty() || val_set.empty()) {
    throw ContractError("training needs non-empty train and validation sets");
  }
  const std::size_t size = model.config().image_size;
  Adam optimizer(model.parameters(), AdamOptions{.lr = train_cfg.lr});
  PlateauStopper stopper(train_cfg.patience, train_cfg.min_delta);
  auto best = make_model(model.config(), 0);
  copy_state(model, *best);

  TrainResult result;
  Tape tape;
  for (std::size_t epoch = 1; epoch <= train_cfg.epochs_max; ++epoch) {
    BatchIterator batches(train_set, train_cfg.batch_size, size, train_cfg.data_seed, epoch);
    double loss_sum = 0;
    std::size_t correct = 0;
    while (auto b = batches.next()) {
      model.zero_grad();
      Tensor loss;
      Tensor logits;
      {
        TapeScope scope(tape);
        logits = model.logits(b->images, Mode::kTrain);
        loss = cross_entropy(logits, b->labels);
      }
      backward(loss, tape);
      optimizer.step();
      loss_sum += static_cast<double>(loss.item()) * static_cast<double>(b->labels.size());
      const auto predicted = argmax_rows(logits);
      for (std::size_t i = 0; i < predicted.size(); ++i) correct += predicted[i] == b->labels[i];
    }
    const Metrics val =
        evaluate(model, val_set, EvalOptions{.batch_size = train_cfg.batch_size, .timed = false});
    EpochRecord record{epoch, loss_sum / static_cast<double>(train_set.size()),
                       static_cast<double>(correct) / static_cast<double>(train_set.size()),
                       val.mean_loss, val.accuracy};
    result.history.push_back(record);
    if (on_epoch) on_epoch(record);
    if (stopper.update(val.mean_loss)) {
      copy_state(model, *best);
      result.best_epoch = epoch;
      result.best_val_loss = val.mean_loss;
    }
    if (stopper.should_stop()) {
      result.stopped_early = epoch < train_cfg.epochs_max;
      break;
    }
  }
  if (result.best_epoch > 0) copy_state(*best, model);
  if (!train_cfg.checkpoint_path.empty()) save_checkpoint(model, train_cfg.checkpoint_path);
  return result;
}

namespace {

std::string fixed(double value, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, value);
  return buf;
}

std::string percent(double fraction) { return fixed(100.0 * fraction, 2) + "%"; }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string quoted = "\"";
  for (char ch : s) {
    if (ch == '"') quoted += '"';
    quoted += ch;
  }
  return quoted + "\"";
}

}  // namespace

std::string history_csv(std::span<const EpochRecord> history) {
  std::string out = "epoch,train_loss,train_acc,val_loss,val_acc\n";
  for (const auto& r : history) {
    out += std::to_string(r.epoch) + "," + fixed(r.train_loss, 6) + "," + fixed(r.train_acc, 6) +
           "," + fixed(r.val_loss, 6) + "," + fixed(r.val_acc, 6) + "\n";
  }
  return out;
}

const std::array<PaperBaseline, 3>& paper_baselines() {
  static const std::array<PaperBaseline, 3> kBaselines = {{
      {"cmvit", "71,605,646", "0", "Adam", "Cross Entropy Loss", "70", "64", "0.0984",
       "Validation loss plateau", "95.65%", "91.99%", "0.93", "0.91", "0.0692 sec"},
      {"cmvit_lbp", "125,631,088", "0", "Adam", "Cross Entropy Loss", "23", "64", "0.0165",
       "Validation loss plateau", "98.35%", "87.15%", "0.86", "0.88", "0.0564 sec"},
      {"xception", "20,811,050", "0", "Adam", "Cross Entropy Loss", "100", "64", "0.0012",
       "Validation loss plateau", "99.98%", "89%", "0.88", "0.90", "0.0082 sec"},
  }};
  return kBaselines;
}

std::string report_csv(std::span<const ModelReport> models,
                       std::span<const PaperBaseline> baselines) {
  if (models.empty()) throw ContractError("report needs at least one evaluated model");
  struct Row {
    const char* name;
    std::function<std::string(const ModelReport&)> measured;
    std::string PaperBaseline::*paper;
  };
  auto f1 = [](const ModelReport& r, std::size_t c) {
    return c < r.validation.f1_per_class.size() ? fixed(r.validation.f1_per_class[c], 4)
                                                : std::string("n/a");
  };
  const std::vector<Row> rows = {
      {"Trainable Parameters", [](auto& r) { return std::to_string(r.trainable_parameters); },
       &PaperBaseline::trainable_parameters},
      {"Non Trainable Parameters",
       [](auto& r) { return std::to_string(r.non_trainable_parameters); },
       &PaperBaseline::non_trainable_parameters},
      {"Optimizer", [](auto&) { return std::string("Adam"); }, &PaperBaseline::optimizer},
      {"Loss Function", [](auto&) { return std::string("Cross Entropy Loss"); },
       &PaperBaseline::loss_function},
      {"No. of Epochs", [](auto& r) { return std::to_string(r.epochs); }, &PaperBaseline::epochs},
      {"Batch Size", [](auto& r) { return std::to_string(r.batch_size); },
       &PaperBaseline::batch_size},
      {"Training Loss", [](auto& r) { return fixed(r.training_loss, 4); },
       &PaperBaseline::training_loss},
      {"Stopping Criteria", [](auto&) { return std::string("Validation loss plateau"); },
       &PaperBaseline::stopping_criteria},
      {"Training Accuracy", [](auto& r) { return percent(r.training_accuracy); },
       &PaperBaseline::training_accuracy},
      {"Validation Accuracy", [](auto& r) { return percent(r.validation.accuracy); },
       &PaperBaseline::validation_accuracy},
      {"Validation F1 Score (Class 0)", [&](auto& r) { return f1(r, 0); },
       &PaperBaseline::f1_class0},
      {"Validation F1 Score (Class 1)", [&](auto& r) { return f1(r, 1); },
       &PaperBaseline::f1_class1},
      {"Time per test file", [](auto& r) { return fixed(r.validation.time_per_file, 4) + " sec"; },
       &PaperBaseline::time_per_file},
  };
  std::string out = "Type of result";
  for (const auto& m : models) out += "," + csv_field(m.model);
  for (const auto& b : baselines) out += "," + csv_field(b.model + " paper (not a target)");
  out += "\n";
  for (const auto& row : rows) {
    out += csv_field(row.name);
    for (const auto& m : models) out += "," + csv_field(row.measured(m));
    for (const auto& b : baselines) out += "," + csv_field(b.*row.paper);
    out += "\n";
  }
  return out;
}

}  // namespace DFD_PRECISION_NS
}  // namespace dfd
