#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <sstream>
#include <vector>

#include "dfd/functional.hpp"
#include "dfd/ops.hpp"
#include "dfd/rng.hpp"
#include "dfd/train.hpp"
#include "dfd/verification.hpp"

using namespace dfd;

namespace {

std::vector<double> as_vec(std::span<const Real> s) { return {s.begin(), s.end()}; }

Tensor leaf(Shape shape, std::vector<Real> v) {
  Tensor t = Tensor::from_values(std::move(shape), std::move(v));
  t.set_requires_grad(true);
  return t;
}

std::vector<double> ce_grad(const Tensor& logits, const std::vector<int>& labels) {
  logits.zero_grad();
  Tape tape;
  {
    TapeScope scope(tape);
    backward(cross_entropy(logits, labels), tape);
  }
  return {logits.grad().begin(), logits.grad().end()};
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("cross entropy examples") {
  const Tensor even = leaf({1, 2}, {0, 0});
  CHECK(cross_entropy(even, std::vector<int>{0}).item() == doctest::Approx(std::log(2.0)));
  CHECK(cross_entropy(even, std::vector<int>{1}).item() == doctest::Approx(std::log(2.0)));
  const double big = cross_entropy(Tensor::from_values({1, 2}, {1000, 0}), std::vector<int>{0}).item();
  CHECK(std::isfinite(big));
  CHECK(big == doctest::Approx(0).epsilon(1e-12));
  const auto g = ce_grad(even, {0});
  CHECK(g[0] == doctest::Approx(-0.5));
  CHECK(g[1] == doctest::Approx(0.5));
  CHECK_THROWS_AS(cross_entropy(even, std::vector<int>{2}), ContractError);
  CHECK_THROWS_AS(cross_entropy(even, std::vector<int>{-1}), ContractError);
  CHECK_THROWS_AS(cross_entropy(even, std::vector<int>{0, 1}), ShapeError);
}

TEST_CASE("property: cross entropy is non-negative with softmax-minus-onehot gradient") {
  Rng rng(1);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 1 + rng.below(5), c = 2 + rng.below(4);
    std::vector<Real> v(n * c);
    for (auto& x : v) x = rng.uniform(-5, 5);
    std::vector<int> labels(n);
    for (auto& l : labels) l = static_cast<int>(rng.below(c));
    const Tensor logits = leaf({n, c}, v);
    CHECK(cross_entropy(logits, labels).item() >= 0);
    const auto g = ce_grad(logits, labels);
    const Tensor p = softmax(Tensor::from_values({n, c}, v), 1);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        const double expect = (p.data()[i * c + j] - (labels[i] == static_cast<int>(j))) / n;
        CHECK(std::abs(g[i * c + j] - expect) < 1e-6);
      }
    const Tensor flat = Tensor::filled({n, c}, rng.uniform(-3, 3));
    CHECK(std::abs(cross_entropy(flat, labels).item() - std::log(static_cast<double>(c))) < 1e-6);
  }
}

TEST_CASE("adam examples") {
  SUBCASE("one step moves by about lr against the gradient") {
    Tensor p = leaf({1}, {0});
    Adam adam({{"p", p}});
    p.mutable_grad()[0] = 1;
    adam.step();
    CHECK(p.data()[0] == doctest::Approx(-0.001).epsilon(1e-6));
    CHECK(adam.steps() == 1);
    CHECK(adam.first_moment(0)[0] == doctest::Approx(0.1));
    CHECK(adam.second_moment(0)[0] == doctest::Approx(0.001));
  }
  SUBCASE("zero gradients leave parameters unchanged") {
    Rng rng(2);
    std::vector<Real> v(6);
    for (auto& x : v) x = rng.uniform(-1, 1);
    Tensor p = leaf({2, 3}, v);
    Adam adam({{"p", p}});
    for (int i = 0; i < 25; ++i) {
      p.zero_grad();
      adam.step();
    }
    CHECK(as_vec(p.data()) == std::vector<double>(v.begin(), v.end()));
  }
  SUBCASE("minimises a quadratic") {
    Tensor p = leaf({1}, {1});
    Adam adam({{"p", p}}, AdamOptions{.lr = 1e-2});
    for (int i = 0; i < 2000; ++i) {
      p.zero_grad();
      Tape tape;
      {
        TapeScope scope(tape);
        backward(sum(mul(p, p)), tape);
      }
      adam.step();
    }
    CHECK(std::abs(p.data()[0]) < 0.01);
  }
}

TEST_CASE("plateau rule examples") {
  const std::vector<double> flat = {1.0, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9};
  CHECK(simulate_plateau_stop(flat, 5, 1e-4, 100) == 7);
  std::vector<double> improving;
  for (int i = 0; i < 40; ++i) improving.push_back(1.0 - 0.01 * i);
  CHECK(simulate_plateau_stop(improving, 5, 1e-4, 30) == 30);
  // Improvements smaller than min_delta count as stale.
  const std::vector<double> creeping = {1.0, 0.99995, 0.99996, 0.99997, 0.99998, 0.99999};
  CHECK(simulate_plateau_stop(creeping, 5, 1e-4, 100) == 6);
  // An improvement of exactly min_delta resets the count.
  const std::vector<double> exact = {1.0, 0.5, 0.5, 0.25, 0.25, 0.25};
  CHECK(simulate_plateau_stop(exact, 2, 0.25, 100) == 6);
  const std::vector<double> with_nan = {1.0, NAN, NAN};
  CHECK(simulate_plateau_stop(with_nan, 2, 0.0, 100) == 3);
  CHECK_THROWS_AS(PlateauStopper(0, 1e-4), ContractError);
  CHECK_THROWS_AS(PlateauStopper(1, -1), ContractError);
}

TEST_CASE("property: plateau rule agrees with a direct simulation") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> losses(1 + rng.below(40));
    for (auto& l : losses) l = std::round(rng.uniform(0, 2) * 100) / 100;
    const std::size_t patience = 1 + rng.below(6);
    const double delta = rng.below(2) ? 0.0 : 0.05;
    const std::size_t cap = 1 + rng.below(45);
    double best = losses[0];
    std::size_t stale = 0, stop = std::min(cap, losses.size());
    for (std::size_t e = 2; e <= std::min(cap, losses.size()); ++e) {
      if (best - losses[e - 1] >= delta) {
        best = losses[e - 1];
        stale = 0;
      } else if (++stale == patience) {
        stop = e;
        break;
      }
    }
    CHECK(simulate_plateau_stop(losses, patience, delta, cap) == stop);
  }
}

TEST_CASE("metrics examples") {
  const std::vector<int> labels = {0, 1, 0, 1};
  const auto perfect = metrics_from_predictions(labels, labels, 2);
  CHECK(perfect.accuracy == 1);
  CHECK(perfect.f1_per_class == std::vector<double>{1, 1});

  const std::vector<int> truth = {0, 0, 0, 0}, pred = {0, 0, 1, 1};
  const auto m = metrics_from_predictions(pred, truth, 2);
  CHECK(m.accuracy == 0.5);
  CHECK(m.f1_per_class[0] == doctest::Approx(2.0 / 3));
  CHECK(m.f1_per_class[1] == 0);
  CHECK_THROWS_AS(metrics_from_predictions(std::vector<int>{}, std::vector<int>{}, 2),
                  ContractError);
}

TEST_CASE("argmax is invariant to a constant logit shift") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Real> v(12), shifted(12);
    const double c = rng.uniform(-100, 100);
    for (std::size_t i = 0; i < 12; ++i) {
      v[i] = rng.uniform(-3, 3);
      shifted[i] = v[i] + c;
    }
    CHECK(argmax_rows(Tensor::from_values({4, 3}, v)) ==
          argmax_rows(Tensor::from_values({4, 3}, shifted)));
  }
}

TEST_CASE("training: plateau stop, best restore, deterministic history") {
  ModelConfig cfg = micro_config(Arch::kCmvit);
  const auto all = synthetic_samples(12, cfg.image_size, 3);
  std::vector<Sample> train_set(all.begin(), all.begin() + 8);
  train_set.insert(train_set.end(), all.begin() + 12, all.begin() + 20);
  std::vector<Sample> val_set(all.begin() + 8, all.begin() + 12);
  val_set.insert(val_set.end(), all.begin() + 20, all.end());

  TrainConfig tc;
  tc.epochs_max = 4;
  tc.batch_size = 5;
  tc.patience = 1;
  tc.min_delta = 10;  // nothing after epoch 1 counts as an improvement
  const auto ckpt = std::filesystem::temp_directory_path() / "dfd_test_train.ckpt";
  tc.checkpoint_path = ckpt.string();

  auto run = [&] {
    auto model = make_model(cfg, tc.init_seed);
    std::vector<EpochRecord> seen;
    const auto result = train(*model, tc, train_set, val_set,
                              [&](const EpochRecord& r) { seen.push_back(r); });
    CHECK(seen.size() == result.history.size());
    return std::make_pair(std::move(model), result);
  };
  auto [model, result] = run();
  CHECK(result.history.size() == 2);
  CHECK(result.stopped_early);
  CHECK(result.best_epoch == 1);
  const auto restored = evaluate(*model, val_set, EvalOptions{.batch_size = 5, .timed = false});
  CHECK(restored.mean_loss == result.history[0].val_loss);
  const auto loaded = load_checkpoint(ckpt);
  CHECK(encode_checkpoint(*loaded) == encode_checkpoint(*model));

  auto [model2, result2] = run();
  CHECK(history_csv(result.history) == history_csv(result2.history));
  CHECK(result.history[0].train_loss == result2.history[0].train_loss);
  std::filesystem::remove(ckpt);

  const auto header = lines_of(history_csv(result.history));
  CHECK(header[0] == "epoch,train_loss,train_acc,val_loss,val_acc");
  CHECK(header.size() == 3);

  CHECK_THROWS_AS(train(*model, tc, train_set, std::span<const Sample>{}), ContractError);
  CHECK_THROWS_AS(evaluate(*model, std::span<const Sample>{}), ContractError);
}

TEST_CASE("evaluate: timed and batched paths agree") {
  ModelConfig cfg = micro_config(Arch::kXception);
  const auto samples = synthetic_samples(5, cfg.image_size, 4);
  auto model = make_model(cfg, 2);
  const auto timed = evaluate(*model, samples);
  const auto batched = evaluate(*model, samples, EvalOptions{.batch_size = 3, .timed = false});
  CHECK(timed.accuracy == batched.accuracy);
  CHECK(timed.mean_loss == doctest::Approx(batched.mean_loss).epsilon(1e-9));
  CHECK(timed.time_per_file >= 0);
  CHECK(batched.time_per_file == 0);
  CHECK(timed.accuracy >= 0);
  CHECK(timed.accuracy <= 1);
}

TEST_CASE("report CSV: table order, baseline columns, determinism") {
  ModelReport r;
  r.model = "cmvit";
  r.trainable_parameters = 42050;
  r.epochs = 12;
  r.batch_size = 64;
  r.training_loss = 0.01234;
  r.training_accuracy = 0.995;
  r.validation.accuracy = 0.9875;
  r.validation.f1_per_class = {0.98765, 0.5};
  r.validation.time_per_file = 0.00123;
  const auto csv = report_csv(std::span(&r, 1), paper_baselines());
  CHECK(csv == report_csv(std::span(&r, 1), paper_baselines()));
  const auto rows = lines_of(csv);
  REQUIRE(rows.size() == 14);
  CHECK(rows[0] ==
        "Type of result,cmvit,cmvit paper (not a target),cmvit_lbp paper (not a target),"
        "xception paper (not a target)");
  CHECK(rows[1] == "Trainable Parameters,42050,\"71,605,646\",\"125,631,088\",\"20,811,050\"");
  CHECK(rows[2] == "Non Trainable Parameters,0,0,0,0");
  CHECK(rows[3] == "Optimizer,Adam,Adam,Adam,Adam");
  CHECK(rows[4] == "Loss Function,Cross Entropy Loss,Cross Entropy Loss,Cross Entropy Loss,"
                   "Cross Entropy Loss");
  CHECK(rows[5] == "No. of Epochs,12,70,23,100");
  CHECK(rows[6] == "Batch Size,64,64,64,64");
  CHECK(rows[7] == "Training Loss,0.0123,0.0984,0.0165,0.0012");
  CHECK(rows[8].rfind("Stopping Criteria,Validation loss plateau", 0) == 0);
  CHECK(rows[9] == "Training Accuracy,99.50%,95.65%,98.35%,99.98%");
  CHECK(rows[10] == "Validation Accuracy,98.75%,91.99%,87.15%,89%");
  CHECK(rows[11] == "Validation F1 Score (Class 0),0.9877,0.93,0.86,0.88");
  CHECK(rows[12] == "Validation F1 Score (Class 1),0.5000,0.91,0.88,0.90");
  CHECK(rows[13] == "Time per test file,0.0012 sec,0.0692 sec,0.0564 sec,0.0082 sec");
  CHECK_THROWS_AS(report_csv({}, paper_baselines()), ContractError);
}
