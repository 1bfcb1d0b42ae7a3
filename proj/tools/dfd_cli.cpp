// Command-line entry point: dataset generation, training, evaluation,
// inference, feature dumps, parameter counts and gradient verification.
#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "dfd/batching.hpp"
#include "dfd/config.hpp"
#include "dfd/dataset.hpp"
#include "dfd/image.hpp"
#include "dfd/lbp.hpp"
#include "dfd/models.hpp"
#include "dfd/ops.hpp"
#include "dfd/spectral.hpp"
#include "dfd/train.hpp"
#include "gradcheck.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

// Bad configuration (unknown keys, malformed values) is reported as a usage error.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string arch;
  std::string data_root;
  std::string manifest;
  std::string checkpoint;
  std::size_t epochs = 0;
  std::size_t batch_size = 0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "INI file with [model], [train], [data] sections");
    cmd->add_option("--set", overrides, "Override one key, e.g. --set model.embed_dim=64")
        ->type_name("SECTION.KEY=VALUE");
    cmd->add_option("--arch", arch, "cmvit | cmvit_lbp | xception");
    cmd->add_option("--data", data_root, "Dataset root with real/ and fake/");
    cmd->add_option("--manifest", manifest, "Manifest CSV (path,label)");
    cmd->add_option("--checkpoint", checkpoint, "Checkpoint path");
    cmd->add_option("--epochs", epochs, "Maximum epochs");
    cmd->add_option("--batch-size", batch_size, "Batch size");
  }

  // File first, then --set, then dedicated flags.
  dfd::RunConfig resolve() const {
    try {
      return resolve_unchecked();
    } catch (const dfd::ParseError& e) {
      throw UsageError(e.what());
    } catch (const dfd::ContractError& e) {
      throw UsageError(e.what());
    }
  }

  dfd::RunConfig resolve_unchecked() const {
    dfd::RunConfig cfg = config_path.empty() ? dfd::RunConfig{} : dfd::load_run_config(config_path);
    for (const auto& o : overrides) dfd::apply_override(cfg, o);
    if (!arch.empty()) cfg.model.arch = dfd::parse_arch(arch);
    if (!data_root.empty()) cfg.data.root = data_root;
    if (!manifest.empty()) cfg.data.manifest = manifest;
    if (!checkpoint.empty()) cfg.train.checkpoint_path = checkpoint;
    if (epochs) cfg.train.epochs_max = epochs;
    if (batch_size) cfg.train.batch_size = batch_size;
    cfg.model.validate();
    cfg.train.validate();
    cfg.data.validate();
    return cfg;
  }
};

void write_text(const std::string& path, const std::string& text) {
  dfd::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

struct PreparedData {
  std::vector<dfd::Sample> train;
  std::vector<dfd::Sample> val;
};

PreparedData prepare_data(const dfd::RunConfig& cfg) {
  if (cfg.data.manifest.empty() && cfg.data.root.empty()) {
    throw dfd::ContractError("no dataset: set data.root or data.manifest");
  }
  dfd::DatasetManifest manifest = cfg.data.manifest.empty()
                                      ? dfd::discover_dataset(cfg.data.root)
                                      : dfd::read_manifest(cfg.data.manifest);
  const auto counts = dfd::class_counts(manifest, cfg.model.num_classes);
  if (cfg.data.balance) {
    manifest = dfd::balance_undersample(manifest, cfg.data.seed, cfg.model.num_classes);
  } else if (std::adjacent_find(counts.begin(), counts.end(), std::not_equal_to<>()) !=
             counts.end()) {
    std::cerr << "warning: class counts are unbalanced and balancing is disabled\n";
  }
  auto [train, val] = dfd::split(manifest, cfg.data.val_fraction, cfg.data.seed,
                                 cfg.model.num_classes);
  return {dfd::load_samples(train), dfd::load_samples(val)};
}

void print_metrics(const dfd::Metrics& m) {
  std::printf("accuracy=%.6f\n", m.accuracy);
  for (std::size_t c = 0; c < m.f1_per_class.size(); ++c) {
    std::printf("f1_class%zu=%.6f\n", c, m.f1_per_class[c]);
  }
  std::printf("mean_loss=%.6f\ntime_per_file=%.6f\n", m.mean_loss, m.time_per_file);
}

dfd::ModelReport make_report(const dfd::Model& model, const dfd::TrainConfig& train_cfg,
                             std::size_t epochs, double train_loss, double train_acc,
                             const dfd::Metrics& val) {
  dfd::ModelReport r;
  r.model = dfd::arch_name(model.config().arch);
  r.trainable_parameters = dfd::count_parameters(model);
  r.non_trainable_parameters = 0;
  r.epochs = epochs;
  r.batch_size = train_cfg.batch_size;
  r.training_loss = train_loss;
  r.training_accuracy = train_acc;
  r.validation = val;
  return r;
}

int cmd_gen_synth(std::size_t n, std::size_t size, std::uint64_t seed, const std::string& out) {
  const auto manifest = dfd::gen_synthetic(out, n, size, seed);
  std::printf("wrote %zu images and %s\n", manifest.entries.size(),
              (std::filesystem::path(out) / "manifest.csv").string().c_str());
  return kExitOk;
}

int cmd_train(const ConfigFlags& flags, const std::string& history_path,
              const std::string& report_path) {
  const dfd::RunConfig cfg = flags.resolve();
  const PreparedData data = prepare_data(cfg);
  auto model = dfd::make_model(cfg.model, cfg.train.init_seed);
  std::cerr << dfd::arch_name(cfg.model.arch) << ": " << dfd::count_parameters(*model)
            << " parameters, " << data.train.size() << " train / " << data.val.size()
            << " val samples\n";
  const auto result = dfd::train(*model, cfg.train, data.train, data.val,
                                 [](const dfd::EpochRecord& r) {
                                   std::fprintf(stderr,
                                                "epoch %zu train_loss=%.4f train_acc=%.4f "
                                                "val_loss=%.4f val_acc=%.4f\n",
                                                r.epoch, r.train_loss, r.train_acc, r.val_loss,
                                                r.val_acc);
                                 });
  if (!history_path.empty()) write_text(history_path, dfd::history_csv(result.history));
  const dfd::Metrics val = dfd::evaluate(*model, data.val);
  const auto& best = result.history.at(result.best_epoch > 0 ? result.best_epoch - 1 : 0);
  if (!report_path.empty()) {
    const dfd::ModelReport report = make_report(*model, cfg.train, result.history.size(),
                                                best.train_loss, best.train_acc, val);
    write_text(report_path, dfd::report_csv(std::span(&report, 1), dfd::paper_baselines()));
  }
  std::printf("epochs=%zu best_epoch=%zu\n", result.history.size(), result.best_epoch);
  print_metrics(val);
  return kExitOk;
}

int cmd_eval(const ConfigFlags& flags, bool all_samples, const std::string& report_path) {
  dfd::RunConfig cfg = flags.resolve();
  if (cfg.train.checkpoint_path.empty()) throw dfd::ContractError("eval needs --checkpoint");
  auto model = dfd::load_checkpoint(cfg.train.checkpoint_path);
  cfg.model = model->config();
  PreparedData data = prepare_data(cfg);
  if (all_samples) {
    data.val.insert(data.val.end(), std::make_move_iterator(data.train.begin()),
                    std::make_move_iterator(data.train.end()));
  }
  const dfd::Metrics m = dfd::evaluate(*model, data.val);
  if (!report_path.empty()) {
    const dfd::ModelReport report = make_report(*model, cfg.train, 0, 0, 0, m);
    write_text(report_path, dfd::report_csv(std::span(&report, 1), dfd::paper_baselines()));
  }
  print_metrics(m);
  return kExitOk;
}

int cmd_infer(const std::string& checkpoint, const std::string& image_path) {
  auto model = dfd::load_checkpoint(checkpoint);
  const dfd::Sample sample{dfd::load_ppm(image_path), 0, image_path};
  const dfd::Sample* one[] = {&sample};
  dfd::NoGradScope no_grad;
  const dfd::Tensor probs =
      model->forward(dfd::stack_images(one, model->config().image_size), dfd::Mode::kEval);
  const auto p = probs.data();
  const int label = dfd::argmax_rows(probs).front();
  std::printf("%d,%.9g,%.9g\n", label, static_cast<double>(p[0]), static_cast<double>(p[1]));
  return kExitOk;
}

int cmd_lbp(const std::string& image_path, std::size_t radius, const std::string& map_path,
            const std::string& hist_path) {
  const dfd::LbpConfig config{static_cast<int>(radius), 8};
  const auto plane = dfd::lbp_map(dfd::to_gray(dfd::load_any_netpbm(image_path)), config);
  if (!map_path.empty()) dfd::save_pgm(dfd::code_plane_image(plane), map_path);
  const auto counts = dfd::lbp_histogram(plane, false);
  const auto freq = dfd::lbp_histogram(plane, true);
  std::string csv = "code,count,frequency\n";
  for (std::size_t i = 0; i < counts.size(); ++i) {
    char row[64];
    std::snprintf(row, sizeof(row), "%zu,%.0f,%.9g\n", i, counts[i], freq[i]);
    csv += row;
  }
  if (hist_path.empty()) {
    std::fputs(csv.c_str(), stdout);
  } else {
    write_text(hist_path, csv);
  }
  return kExitOk;
}

int cmd_spectrum(const std::string& image_path, const std::string& out_path, bool log_scale,
                 bool centre) {
  const dfd::GrayImage gray = dfd::to_gray(dfd::load_any_netpbm(image_path));
  // Zero-pad to powers of two for the radix-2 transform.
  const std::size_t h = dfd::next_power_of_two(gray.height);
  const std::size_t w = dfd::next_power_of_two(gray.width);
  std::vector<float> plane(h * w, 0.0f);
  for (std::size_t y = 0; y < gray.height; ++y) {
    for (std::size_t x = 0; x < gray.width; ++x) plane[y * w + x] = gray.at(y, x);
  }
  const dfd::Tensor mag =
      dfd::magnitude_spectrum(dfd::fft_2d(dfd::Tensor::from_values({h, w}, std::move(plane))));
  std::vector<double> scaled(h * w);
  for (std::size_t i = 0; i < scaled.size(); ++i) {
    const double v = static_cast<double>(mag.data()[i]);
    scaled[i] = log_scale ? std::log1p(v) : v;
  }
  const double peak = *std::max_element(scaled.begin(), scaled.end());
  dfd::GrayImage out{h, w, std::vector<std::uint8_t>(h * w)};
  // Uncentred by default: the zero-frequency bin is pixel (0, 0).
  const std::size_t dy = centre ? h / 2 : 0, dx = centre ? w / 2 : 0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double v = peak > 0 ? scaled[y * w + x] / peak * 255.0 : 0.0;
      out.values[((y + dy) % h) * w + (x + dx) % w] =
          static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
    }
  }
  dfd::save_pgm(out, out_path);
  std::printf("wrote %zux%zu spectrum to %s\n", h, w, out_path.c_str());
  return kExitOk;
}

int cmd_params(const ConfigFlags& flags) {
  const dfd::RunConfig cfg = flags.resolve();
  const auto model = dfd::make_model(cfg.model, cfg.train.init_seed);
  std::printf("%zu\n", dfd::count_parameters(*model));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deepfake image detection: CMViT, CMViT+LBP and Xception-style classifiers"};
  app.require_subcommand(1);

  std::size_t synth_n = 256, synth_size = 32;
  std::uint64_t synth_seed = 7;
  std::string synth_out;
  auto* gen = app.add_subcommand("gen-synth", "Write a synthetic two-class PPM corpus");
  gen->add_option("--n", synth_n, "Images per class");
  gen->add_option("--size", synth_size, "Image side (power of two)");
  gen->add_option("--seed", synth_seed, "Generator seed");
  gen->add_option("--out", synth_out, "Output directory")->required();

  ConfigFlags train_flags, eval_flags, params_flags;
  std::string history_path, train_report, eval_report;
  auto* train = app.add_subcommand("train", "Train a model and keep the best checkpoint");
  train_flags.attach(train);
  train->add_option("--history", history_path, "Per-epoch history CSV");
  train->add_option("--report", train_report, "Results table CSV");

  bool eval_all = false;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the validation split");
  eval_flags.attach(eval);
  eval->add_flag("--all", eval_all, "Evaluate every sample instead of the validation split");
  eval->add_option("--report", eval_report, "Results table CSV");

  std::string infer_ckpt, infer_image;
  auto* infer = app.add_subcommand("infer", "Classify one PPM image");
  infer->add_option("image", infer_image, "P6 image")->required();
  infer->add_option("--checkpoint", infer_ckpt, "Checkpoint path")->required();

  std::string lbp_image, lbp_map_path, lbp_hist_path;
  std::size_t lbp_radius = 1;
  auto* lbp = app.add_subcommand("lbp", "Write the LBP code map and histogram of an image");
  lbp->add_option("image", lbp_image, "P6 or P5 image")->required();
  lbp->add_option("--radius", lbp_radius, "Neighbour radius");
  lbp->add_option("--map", lbp_map_path, "Output PGM of per-pixel codes");
  lbp->add_option("--hist", lbp_hist_path, "Output histogram CSV (default: stdout)");

  std::string spec_image, spec_out;
  bool spec_log = false, spec_centre = false;
  auto* spectrum = app.add_subcommand("spectrum", "Write the magnitude spectrum as PGM");
  spectrum->add_option("image", spec_image, "P6 or P5 image")->required();
  spectrum->add_option("--out", spec_out, "Output PGM")->required();
  spectrum->add_flag("--log", spec_log, "Scale log(1 + magnitude) instead of magnitude");
  spectrum->add_flag("--center", spec_centre, "Move the zero-frequency bin to the image centre");

  auto* params = app.add_subcommand("params", "Print the trainable parameter count");
  params_flags.attach(params);

  bool skip_models = false;
  auto* gradcheck = app.add_subcommand("gradcheck", "Run the 64-bit gradient verification suite");
  gradcheck->add_flag("--skip-models", skip_models, "Only check ops and layers");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, std::cout, std::cerr);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return cmd_gen_synth(synth_n, synth_size, synth_seed, synth_out);
    if (*train) return cmd_train(train_flags, history_path, train_report);
    if (*eval) return cmd_eval(eval_flags, eval_all, eval_report);
    if (*infer) return cmd_infer(infer_ckpt, infer_image);
    if (*lbp) return cmd_lbp(lbp_image, lbp_radius, lbp_map_path, lbp_hist_path);
    if (*spectrum) return cmd_spectrum(spec_image, spec_out, spec_log, spec_centre);
    if (*params) return cmd_params(params_flags);
    if (*gradcheck) return dfd::tools::run_gradcheck(std::cout, !skip_models) ? kExitOk : kExitRuntime;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
