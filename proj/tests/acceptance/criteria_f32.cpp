// Criteria exercised through the 32-bit build used for training and inference.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <set>
#include <sstream>

#include "criteria.hpp"
#include "dfd/batching.hpp"
#include "dfd/lbp.hpp"
#include "dfd/train.hpp"
#include "dfd/verification.hpp"
#include "support/oracles.hpp"

namespace dfd::acceptance {
namespace {

static_assert(sizeof(Real) == 4);

namespace fs = std::filesystem;

std::string fmt(const char* pattern, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), pattern, a, b, c, d);
  return buf;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dfd_acceptance_f32_" + name);
  fs::remove_all(p);
  return p;
}

RunConfig shipped(const char* name) { return load_run_config(fs::path(DFD_CONFIG_DIR) / name); }

struct Splits {
  std::vector<Sample> train;
  std::vector<Sample> val;
};

Splits prepare(const fs::path& root, const DataConfig& data) {
  auto manifest = discover_dataset(root);
  if (data.balance) manifest = balance_undersample(manifest, data.seed);
  const auto [tr, va] = split(manifest, data.val_fraction, data.seed);
  return {load_samples(tr), load_samples(va)};
}

Outcome lbp() {
  Rng rng(31);
  std::size_t images = 0, mismatches = 0, variant_mismatches = 0;
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t h = trial < 20 ? 32 : 3 + rng.below(20), w = trial < 20 ? 32 : 3 + rng.below(20);
    GrayImage img{h, w, std::vector<std::uint8_t>(h * w)};
    // Values stay below 128 so the maps below remain strictly increasing in range.
    for (auto& v : img.values) v = static_cast<std::uint8_t>(rng.below(trial % 3 == 0 ? 4 : 128));
    ++images;
    for (int radius : {1, 2}) {
      const LbpConfig cfg{radius, 8};
      const CodePlane plane = lbp_map(img, cfg);
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
          mismatches += plane.at(y, x) != oracle::lbp_code(img.values, static_cast<long>(h), static_cast<long>(w),
                                                           static_cast<long>(y), static_cast<long>(x), radius);
      // Strictly increasing intensity maps: affine and a random lookup table.
      std::vector<std::uint8_t> table(128);
      std::set<int> picks;
      while (picks.size() < 128) picks.insert(static_cast<int>(rng.below(256)));
      std::copy(picks.begin(), picks.end(), table.begin());
      for (int variant = 0; variant < 3; ++variant) {
        GrayImage mapped = img;
        for (auto& v : mapped.values) {
          v = variant == 0 ? static_cast<std::uint8_t>(2 * v + 1)
              : variant == 1 ? static_cast<std::uint8_t>(v + 100)
                             : table[v];
        }
        variant_mismatches += lbp_map(mapped, cfg).codes != plane.codes;
      }
    }
  }
  return {mismatches == 0 && variant_mismatches == 0,
          std::to_string(images) + " images (20 at 32x32), radii 1 and 2: " + std::to_string(mismatches) +
              " pixel mismatches, " + std::to_string(variant_mismatches) + " monotone-map differences"};
}

struct Learned {
  double accuracy = 0;
  double seconds = 0;
  std::size_t epochs = 0;
};

Learned learn(const char* config_name, const Splits& data) {
  const RunConfig cfg = shipped(config_name);
  auto model = make_model(cfg.model, cfg.train.init_seed);
  const auto start = std::chrono::steady_clock::now();
  const auto result = train(*model, cfg.train, data.train, data.val);
  const Metrics m = evaluate(*model, data.val, {.batch_size = 64, .timed = false});
  Learned l;
  l.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  l.accuracy = m.accuracy;
  l.epochs = result.history.size();
  return l;
}

Outcome learnability() {
  const fs::path root = scratch("synthetic");
  gen_synthetic(root, 256, 32, 7);
  const RunConfig base = shipped("tiny.ini");
  const Splits data = prepare(root, base.data);
  const ModelConfig& m = base.model;
  const bool micro = m.patch_size == 8 && m.embed_dim == 32 && m.num_heads == 2 && m.num_blocks == 2 &&
                     m.image_size == 32 && base.train.epochs_max == 30;
  const Learned cmvit = learn("tiny.ini", data);
  const Learned xception = learn("tiny_xception.ini", data);
  const bool ok = micro && shipped("tiny_xception.ini").train.epochs_max == 30 &&
                  cmvit.accuracy >= 0.95 && cmvit.seconds < 600 && xception.accuracy >= 0.90 &&
                  xception.seconds < 600;
  return {ok, std::to_string(data.train.size()) + " train / " + std::to_string(data.val.size()) + " val; " +
                  fmt("cmvit %.4f in %.0f epochs, %.0f s; ", cmvit.accuracy, static_cast<double>(cmvit.epochs),
                      cmvit.seconds) +
                  fmt("xception %.4f in %.0f epochs, %.0f s (need 0.95 / 0.90, 30 epochs, 600 s)",
                      xception.accuracy, static_cast<double>(xception.epochs), xception.seconds)};
}

Outcome overfit() {
  const char* configs[] = {"tiny.ini", "tiny_lbp.ini", "tiny_xception.ini"};
  const auto samples = synthetic_samples(32, 32, 17);
  std::vector<const Sample*> ptrs;
  std::vector<int> labels;
  for (const auto& s : samples) {
    ptrs.push_back(&s);
    labels.push_back(s.label);
  }
  const Tensor images = stack_images(ptrs, 32);
  bool ok = true;
  std::string detail = "batch of " + std::to_string(samples.size());
  for (const char* name : configs) {
    const RunConfig cfg = shipped(name);
    auto model = make_model(cfg.model, cfg.train.init_seed);
    Adam adam(model->parameters(), AdamOptions{.lr = cfg.train.lr});
    double loss = INFINITY;
    std::size_t steps = 0;
    while (steps < 200) {
      model->zero_grad();
      Tape tape;
      Tensor l;
      {
        TapeScope scope(tape);
        l = cross_entropy(model->logits(images, Mode::kTrain), labels);
      }
      loss = l.item();
      if (loss < 0.05) break;
      backward(l, tape);
      adam.step();
      ++steps;
    }
    ok = ok && loss < 0.05;
    detail += "; " + arch_name(cfg.model.arch) + fmt(" %.4f after %.0f steps", loss, static_cast<double>(steps));
  }
  return {ok && samples.size() == 64, detail};
}

std::size_t enumerate(const Module& model) {
  std::size_t total = 0;
  for (const auto& p : model.parameters()) total += p.value.size();
  return total;
}

oracle::ArchDims dims_of(const ModelConfig& m) {
  oracle::ArchDims d;
  d.image = m.image_size;
  d.patch = m.patch_size;
  d.embed = m.embed_dim;
  d.blocks = m.num_blocks;
  d.mlp_ratio = m.mlp_ratio;
  d.cmf_channels = m.cmf_channels;
  d.cmf_layers = m.cmf_conv_layers;
  d.head_hidden = m.head_hidden;
  d.lbp_embed = m.lbp_embed_dim;
  d.classes = m.num_classes;
  d.width = m.xception_width;
  d.middle = m.xception_middle_blocks;
  return d;
}

Outcome parameters() {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(DFD_CONFIG_DIR)) {
    if (e.path().extension() == ".ini") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  bool ok = !files.empty();
  std::string detail;
  for (const auto& f : files) {
    const ModelConfig cfg = load_run_config(f).model;
    std::size_t counted = 0, listed = 0;
    {
      // One model at a time: the published-scale configs are large.
      auto model = make_model(cfg, 1);
      counted = count_parameters(*model);
      listed = enumerate(*model);
    }
    const auto d = dims_of(cfg);
    const std::size_t closed = cfg.arch == Arch::kXception ? oracle::xception_count(d)
                                                          : oracle::cmvit_count(d, cfg.arch == Arch::kCmvitLbp);
    ok = ok && counted == listed && counted == closed;
    detail += f.stem().string() + " " + std::to_string(counted) + (counted == listed && counted == closed ? "" : " MISMATCH") + ", ";
  }
  // The baselines ride along with a measured column, as in a training report.
  ModelReport measured;
  {
    const ModelConfig tiny = shipped("tiny.ini").model;
    measured.model = arch_name(tiny.arch);
    measured.trainable_parameters = count_parameters(*make_model(tiny, 1));
    measured.batch_size = 64;
    measured.validation.f1_per_class = {0, 0};
  }
  const std::string report = report_csv(std::span(&measured, 1), paper_baselines());
  for (const char* published : {"71,605,646", "125,631,088", "20,811,050"}) {
    const bool present = report.find(published) != std::string::npos;
    ok = ok && present;
    detail += std::string("baseline ") + published + (present ? " in report" : " MISSING") + ", ";
  }
  detail.resize(detail.size() - 2);
  return {ok, detail};
}

Outcome persistence() {
  std::string detail;
  bool ok = true;
  Rng rng(5);
  for (Arch arch : {Arch::kCmvit, Arch::kCmvitLbp, Arch::kXception}) {
    const ModelConfig cfg = micro_config(arch);
    auto model = make_model(cfg, 21);
    // Nudge batch-norm statistics away from their initial values.
    std::vector<Real> pixels(8 * 3 * cfg.image_size * cfg.image_size);
    for (auto& p : pixels) p = static_cast<Real>(rng.uniform());
    const Tensor images = Tensor::from_values({8, 3, cfg.image_size, cfg.image_size}, pixels);
    model->forward(images, Mode::kTrain);
    const fs::path path = scratch(arch_name(arch) + ".ckpt");
    save_checkpoint(*model, path);
    auto loaded = load_checkpoint(path);
    const Tensor a = model->forward(images, Mode::kEval), b = loaded->forward(images, Mode::kEval);
    const bool same_output = std::equal(a.data().begin(), a.data().end(), b.data().begin(), b.data().end(),
                                        [](Real x, Real y) { return std::memcmp(&x, &y, sizeof(Real)) == 0; });
    const bool same_bytes = encode_checkpoint(*loaded) == read_file(path);
    ok = ok && same_output && same_bytes;
    detail += arch_name(arch) + (same_output && same_bytes ? " bitwise" : " DIFFERS") + ", ";
  }

  // Two identical runs produce identical history and report bytes. The
  // report's latency row is a wall-clock measurement, so evaluation is untimed.
  const RunConfig base = shipped("tiny.ini");
  const auto samples = synthetic_samples(24, 32, 8);
  std::vector<Sample> tr, va;
  for (std::size_t i = 0; i < samples.size(); ++i) (i % 5 == 0 ? va : tr).push_back(samples[i]);
  std::string history[2], report[2];
  for (int run = 0; run < 2; ++run) {
    TrainConfig t = base.train;
    t.epochs_max = 3;
    t.batch_size = 16;
    auto model = make_model(base.model, t.init_seed);
    const auto result = train(*model, t, tr, va);
    history[run] = history_csv(result.history);
    ModelReport r;
    r.model = arch_name(base.model.arch);
    r.trainable_parameters = count_parameters(*model);
    r.epochs = result.history.size();
    r.batch_size = t.batch_size;
    r.training_loss = result.history.at(result.best_epoch - 1).train_loss;
    r.training_accuracy = result.history.at(result.best_epoch - 1).train_acc;
    r.validation = evaluate(*model, va, {.batch_size = 64, .timed = false});
    report[run] = report_csv(std::span(&r, 1), paper_baselines());
  }
  const bool csv_ok = history[0] == history[1] && report[0] == report[1] && !history[0].empty();
  ok = ok && csv_ok;
  detail += std::string("history and report CSVs ") + (csv_ok ? "byte-identical" : "DIFFER");
  return {ok, detail};
}

Outcome probabilities() {
  Rng rng(77);
  bool ok = true;
  std::string detail;
  for (Arch arch : {Arch::kCmvit, Arch::kCmvitLbp, Arch::kXception}) {
    const ModelConfig cfg = micro_config(arch);
    auto model = make_model(cfg, 3);
    double worst = 0;
    std::size_t rows = 0;
    const std::size_t s = cfg.image_size;
    for (int chunk = 0; chunk < 10; ++chunk) {
      // Mix of uniform noise, saturated images and constant images.
      std::vector<Real> pixels(100 * 3 * s * s);
      for (std::size_t n = 0; n < 100; ++n) {
        const int kind = static_cast<int>(rng.below(3));
        const Real level = static_cast<Real>(rng.uniform());
        for (std::size_t i = 0; i < 3 * s * s; ++i) {
          pixels[n * 3 * s * s + i] = kind == 0   ? static_cast<Real>(rng.uniform())
                                      : kind == 1 ? static_cast<Real>(rng.below(2))
                                                  : level;
        }
      }
      const Tensor probs = model->forward(Tensor::from_values({100, 3, s, s}, pixels), Mode::kEval);
      for (std::size_t r = 0; r < 100; ++r) {
        double sum = 0;
        for (std::size_t c = 0; c < cfg.num_classes; ++c) {
          const double p = probs.data()[r * cfg.num_classes + c];
          ok = ok && p >= 0 && p <= 1;
          sum += p;
        }
        worst = std::max(worst, std::abs(sum - 1));
        ++rows;
      }
    }
    ok = ok && worst < 1e-6 && rows == 1000;
    detail += arch_name(arch) + " " + std::to_string(rows) + fmt(" rows, max |sum - 1| %.2e; ", worst);
  }
  detail += "tolerance 1e-6";
  return {ok, detail};
}

}  // namespace

std::vector<Criterion> criteria_f32() {
  return {
      {3, "LBP codes against brute force", lbp},
      {4, "desk-scale learnability on synthetic data", learnability},
      {5, "overfitting one fixed batch", overfit},
      {7, "parameter accounting", parameters},
      {9, "checkpoint and CSV persistence", persistence},
      {10, "probability rows sum to one", probabilities},
  };
}

}  // namespace dfd::acceptance
