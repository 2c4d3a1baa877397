#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <torch/torch.h>

#include "mitia/errors.hpp"
#include "mitia/eval/metrics.hpp"
#include "mitia/mdet/detector.hpp"
#include "mitia/mreg/losses.hpp"
#include "mitia/mreg/warp.hpp"
#include "mitia/pipeline/run.hpp"
#include "mitia/synth/misalignment.hpp"
#include "mitia/synth/phantom.hpp"
#include "mitia/synth/shuffle_remap.hpp"

namespace py = pybind11;
using namespace mitia;

namespace {

using Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

torch::Tensor to_tensor(const Array& a) {
  std::vector<int64_t> shape(a.shape(), a.shape() + a.ndim());
  return torch::from_blob(const_cast<float*>(a.data()), shape, torch::kFloat32).clone();
}

Array to_array(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kFloat32).contiguous();
  std::vector<py::ssize_t> shape(c.sizes().begin(), c.sizes().end());
  Array out(shape);
  std::memcpy(out.mutable_data(), c.data_ptr<float>(), sizeof(float) * static_cast<size_t>(c.numel()));
  return out;
}

ImageSlice to_slice(const Array& a) {
  if (a.ndim() != 2) throw ValidationError("expected a 2-D image");
  return ImageSlice(to_tensor(a));
}

}  // namespace

PYBIND11_MODULE(_mitia, m) {
  m.doc() = "Core operations of the mitia framework";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_RuntimeError);
  py::register_exception<LoadError>(m, "LoadError", PyExc_OSError);

  m.def("set_num_threads", [](int n) { torch::set_num_threads(n); });

  m.def(
      "make_phantom_pair",
      [](uint64_t seed, int size) {
        const auto p = synth::make_phantom_pair(seed, size);
        return py::make_tuple(to_array(p.a.pixels), to_array(p.b.pixels));
      },
      py::arg("seed"), py::arg("size") = 64, "Two pixel-aligned modalities of one phantom slice.");

  m.def(
      "random_shuffle_spec",
      [](uint64_t seed) {
        Rng rng(seed);
        const auto s = synth::random_shuffle_spec(rng);
        return py::dict(py::arg("k") = s.k, py::arg("boundaries") = s.boundaries,
                        py::arg("permutation") = s.permutation);
      },
      py::arg("seed"));

  m.def(
      "shuffle_remap",
      [](const Array& image, const std::vector<double>& boundaries, const std::vector<int>& permutation) {
        synth::ShuffleRemapSpec spec;
        spec.k = static_cast<int>(permutation.size());
        spec.boundaries = boundaries;
        spec.permutation = permutation;
        spec.validate();
        return to_array(synth::shuffle_remap(to_slice(image), spec).pixels);
      },
      py::arg("image"), py::arg("boundaries"), py::arg("permutation"));

  m.def(
      "random_affine",
      [](const Array& image, double rotation_deg, double scale, double translate_x, double translate_y) {
        synth::AffineParams p{rotation_deg, scale, translate_x, translate_y};
        return to_array(synth::random_affine(to_slice(image), p).pixels);
      },
      py::arg("image"), py::arg("rotation_deg") = 0.0, py::arg("scale") = 1.0, py::arg("translate_x") = 0.0,
      py::arg("translate_y") = 0.0);

  m.def(
      "resample",
      [](const Array& image, const Array& field, double fill) {
        return to_array(mreg::resample(to_slice(image), mreg::DeformationField(to_tensor(field)), fill).pixels);
      },
      py::arg("image"), py::arg("field"), py::arg("fill") = static_cast<double>(kBackground),
      "Bilinear resampling at p + field(p); field is (2, H, W) holding (dy, dx).");

  m.def(
      "mutual_information",
      [](const Array& a, const Array& b, int bins) {
        return mreg::mutual_information(mreg::hard_histogram(to_tensor(a), to_tensor(b), bins));
      },
      py::arg("a"), py::arg("b"), py::arg("bins") = mreg::kDefaultBins);

  m.def(
      "activate", [](const Array& error, double threshold) { return to_array(mdet::activate(to_tensor(error), threshold)); },
      py::arg("error"), py::arg("threshold") = mdet::kDefaultThreshold);

  m.def(
      "psnr", [](const Array& pred, const Array& ref) { return eval::psnr(to_tensor(pred), to_tensor(ref)); },
      py::arg("pred"), py::arg("ref"));
  m.def(
      "ssim", [](const Array& pred, const Array& ref) { return eval::ssim(to_tensor(pred), to_tensor(ref)); },
      py::arg("pred"), py::arg("ref"));
  m.def("ks_statistic", &eval::ks_statistic, py::arg("a"), py::arg("b"));
  m.def(
      "roc_auc",
      [](const std::vector<double>& scores, const std::vector<double>& labels) {
        return eval::roc_auc(torch::tensor(scores, torch::kFloat64), torch::tensor(labels, torch::kFloat64));
      },
      py::arg("scores"), py::arg("labels"));

  m.def(
      "preset_config", [](const std::string& name) { return pipeline::RunConfig::preset(name).to_json(); },
      py::arg("name") = "desk", "Materialized run configuration of a named profile, as JSON.");

  m.def(
      "run_pipeline",
      [](const std::string& config_json, const std::filesystem::path& run_dir, bool verbose) {
        const auto config = pipeline::RunConfig::from_json(config_json);
        pipeline::PipelineResult result;
        {
          py::gil_scoped_release release;
          result = pipeline::run_pipeline(config, run_dir, verbose);
        }
        return py::dict(py::arg("run_dir") = result.run_dir, py::arg("stages_run") = result.stages_run,
                        py::arg("stages_skipped") = result.stages_skipped);
      },
      py::arg("config_json"), py::arg("run_dir"), py::arg("verbose") = false);

  m.def("select_device", &pipeline::select_device, py::arg("name") = "");
}
