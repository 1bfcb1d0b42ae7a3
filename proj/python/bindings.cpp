#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <complex>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "dfd/batching.hpp"
#include "dfd/lbp.hpp"
#include "dfd/spectral.hpp"
#include "dfd/train.hpp"

namespace py = pybind11;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

dfd::GrayImage gray_from(const U8Array& a) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-D uint8 array");
  dfd::GrayImage g{static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)), {}};
  g.values.assign(a.data(), a.data() + a.size());
  return g;
}

U8Array image_to_array(const dfd::RgbImage& img) {
  U8Array out({img.height, img.width, std::size_t{3}});
  std::memcpy(out.mutable_data(), img.pixels.data(), img.pixels.size());
  return out;
}

dfd::RunConfig resolve(const std::string& config_path, const std::vector<std::string>& overrides) {
  dfd::RunConfig cfg = config_path.empty() ? dfd::RunConfig{} : dfd::load_run_config(config_path);
  for (const auto& o : overrides) dfd::apply_override(cfg, o);
  cfg.model.validate();
  cfg.train.validate();
  cfg.data.validate();
  return cfg;
}

// Owns a model; Python sees only handles to this wrapper.
class PyModel {
 public:
  explicit PyModel(std::unique_ptr<dfd::Model> model) : model_(std::move(model)) {}

  static PyModel from_config(const std::string& path, const std::vector<std::string>& overrides) {
    const dfd::RunConfig cfg = resolve(path, overrides);
    return PyModel(dfd::make_model(cfg.model, cfg.train.init_seed));
  }
  static PyModel load(const std::string& path) { return PyModel(dfd::load_checkpoint(path)); }

  void save(const std::string& path) const { dfd::save_checkpoint(*model_, path); }
  std::string arch() const { return dfd::arch_name(model_->config().arch); }
  std::size_t image_size() const { return model_->config().image_size; }
  std::size_t parameter_count() const { return dfd::count_parameters(*model_); }
  std::string config_ini() const { return dfd::model_config_to_ini(model_->config()); }

  // images: float [N,3,S,S] in [0,1] or uint8 [N,S,S,3].
  F32Array predict_proba(const py::array& images) {
    dfd::Tensor input;
    if (images.dtype().is(py::dtype::of<std::uint8_t>())) {
      const U8Array a = U8Array::ensure(images);
      if (a.ndim() != 4 || a.shape(3) != 3) throw py::value_error("uint8 input must be [N,S,S,3]");
      const std::size_t n = a.shape(0), h = a.shape(1), w = a.shape(2);
      std::vector<float> v(n * 3 * h * w);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c)
              v[((i * 3 + c) * h + y) * w + x] = a.data()[((i * h + y) * w + x) * 3 + c] / 255.0f;
      input = dfd::Tensor::from_values({n, 3, h, w}, std::move(v));
    } else {
      const F32Array a = F32Array::ensure(images);
      if (!a || a.ndim() != 4) throw py::value_error("float input must be [N,3,S,S]");
      dfd::Shape shape(a.shape(), a.shape() + 4);
      input = dfd::Tensor::from_values(shape, std::vector<float>(a.data(), a.data() + a.size()));
    }
    dfd::Tensor probs;
    {
      py::gil_scoped_release release;
      probs = model_->forward(input, dfd::Mode::kEval);
    }
    F32Array out({probs.extent(0), probs.extent(1)});
    std::memcpy(out.mutable_data(), probs.data().data(), probs.size() * sizeof(float));
    return out;
  }

  dfd::Model& model() { return *model_; }

 private:
  std::unique_ptr<dfd::Model> model_;
};

py::dict metrics_dict(const dfd::Metrics& m) {
  py::dict d;
  d["accuracy"] = m.accuracy;
  d["f1_per_class"] = m.f1_per_class;
  d["mean_loss"] = m.mean_loss;
  d["time_per_file"] = m.time_per_file;
  return d;
}

struct Prepared {
  std::vector<dfd::Sample> train;
  std::vector<dfd::Sample> val;
};

Prepared prepare(const dfd::RunConfig& cfg) {
  dfd::DatasetManifest manifest = cfg.data.manifest.empty() ? dfd::discover_dataset(cfg.data.root)
                                                            : dfd::read_manifest(cfg.data.manifest);
  if (cfg.data.balance) manifest = dfd::balance_undersample(manifest, cfg.data.seed, cfg.model.num_classes);
  auto [train, val] = dfd::split(manifest, cfg.data.val_fraction, cfg.data.seed, cfg.model.num_classes);
  return {dfd::load_samples(train), dfd::load_samples(val)};
}

py::dict train(const std::string& config_path, const std::string& data_root,
               const std::vector<std::string>& overrides) {
  dfd::RunConfig cfg = resolve(config_path, overrides);
  if (!data_root.empty()) cfg.data.root = data_root;
  if (cfg.data.root.empty() && cfg.data.manifest.empty()) throw py::value_error("no dataset given");
  const Prepared data = prepare(cfg);
  PyModel model(dfd::make_model(cfg.model, cfg.train.init_seed));
  dfd::TrainResult result;
  dfd::Metrics val;
  {
    py::gil_scoped_release release;
    result = dfd::train(model.model(), cfg.train, data.train, data.val);
    val = dfd::evaluate(model.model(), data.val, {.batch_size = cfg.train.batch_size, .timed = false});
  }
  py::list history;
  for (const auto& r : result.history) {
    py::dict e;
    e["epoch"] = r.epoch;
    e["train_loss"] = r.train_loss;
    e["train_acc"] = r.train_acc;
    e["val_loss"] = r.val_loss;
    e["val_acc"] = r.val_acc;
    history.append(e);
  }
  py::dict out;
  out["model"] = std::move(model);
  out["history"] = history;
  out["best_epoch"] = result.best_epoch;
  out["stopped_early"] = result.stopped_early;
  out["validation"] = metrics_dict(val);
  return out;
}

}  // namespace

PYBIND11_MODULE(_dfd, m) {
  m.doc() = "Deepfake image detectors: CMViT, CMViT+LBP and an Xception-style CNN";
  m.attr("precision") = dfd::kPrecisionName;

  py::register_exception<dfd::ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<dfd::ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<dfd::ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<dfd::LoadError>(m, "LoadError", PyExc_ValueError);
  py::register_exception<dfd::IoError>(m, "IoError", PyExc_OSError);

  py::class_<PyModel>(m, "Model")
      .def_static("from_config", &PyModel::from_config, py::arg("config_path") = "",
                  py::arg("overrides") = std::vector<std::string>{},
                  "Build a freshly initialised model from an INI file and section.key=value overrides.")
      .def_static("load", &PyModel::load, py::arg("path"))
      .def("save", &PyModel::save, py::arg("path"))
      .def_property_readonly("arch", &PyModel::arch)
      .def_property_readonly("image_size", &PyModel::image_size)
      .def_property_readonly("parameter_count", &PyModel::parameter_count)
      .def_property_readonly("config_ini", &PyModel::config_ini)
      .def("predict_proba", &PyModel::predict_proba, py::arg("images"),
           "Class probabilities [N, 2] (real, fake) for float [N,3,S,S] or uint8 [N,S,S,3] input.");

  m.def("train", &train, py::arg("config_path"), py::arg("data_root") = "",
        py::arg("overrides") = std::vector<std::string>{},
        "Train with plateau stopping; returns the best model, history and validation metrics.");

  m.def(
      "gen_synthetic",
      [](const std::string& out, std::size_t n, std::size_t size, std::uint64_t seed) {
        return dfd::gen_synthetic(out, n, size, seed).entries.size();
      },
      py::arg("out"), py::arg("n_per_class") = 256, py::arg("size") = 32, py::arg("seed") = 7);

  m.def(
      "load_image", [](const std::string& path) { return image_to_array(dfd::load_any_netpbm(path)); },
      py::arg("path"), "Reads a P6 or P5 file as uint8 [H,W,3].");

  m.def(
      "lbp_map",
      [](const U8Array& gray, int radius) {
        const dfd::CodePlane plane = dfd::lbp_map(gray_from(gray), dfd::LbpConfig{radius, 8});
        U8Array out({plane.height, plane.width});
        std::memcpy(out.mutable_data(), plane.codes.data(), plane.codes.size());
        return out;
      },
      py::arg("gray"), py::arg("radius") = 1);

  m.def(
      "lbp_histogram",
      [](const U8Array& gray, int radius, bool normalize) {
        return dfd::lbp_histogram(dfd::lbp_map(gray_from(gray), dfd::LbpConfig{radius, 8}), normalize);
      },
      py::arg("gray"), py::arg("radius") = 1, py::arg("normalize") = true);

  m.def(
      "fft",
      [](py::array_t<std::complex<double>, py::array::c_style | py::array::forcecast> x) {
        if (x.ndim() != 1) throw py::value_error("expected a 1-D array");
        std::vector<std::complex<double>> data(x.data(), x.data() + x.size());
        dfd::fft_radix2(data);
        py::array_t<std::complex<double>> out(static_cast<py::ssize_t>(data.size()));
        std::memcpy(out.mutable_data(), data.data(), data.size() * sizeof(data[0]));
        return out;
      },
      py::arg("x"), "Unnormalised forward radix-2 FFT; the length must be a power of two.");

  m.def(
      "magnitude_spectrum",
      [](const F32Array& plane) {
        if (plane.ndim() != 2) throw py::value_error("expected a 2-D array");
        const std::size_t h = plane.shape(0), w = plane.shape(1);
        const dfd::Tensor mag = dfd::fft_magnitude(dfd::Tensor::from_values(
            {h, w}, std::vector<float>(plane.data(), plane.data() + plane.size())));
        F32Array out({h, w});
        std::memcpy(out.mutable_data(), mag.data().data(), mag.size() * sizeof(float));
        return out;
      },
      py::arg("plane"), "|FFT2| of a 2-D plane, zero-padded to powers of two and cropped back.");
}
