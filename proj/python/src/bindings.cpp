#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include "crossdose/error.hpp"
#include "crossdose/loss.hpp"
#include "crossdose/metrics.hpp"
#include "crossdose/noisestats.hpp"
#include "crossdose/phantom.hpp"
#include "crossdose/raster.hpp"
#include "crossdose/toy.hpp"
#include "crossdose/trainer.hpp"

namespace py = pybind11;
using namespace crossdose;

namespace {

using Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

RasterF32 to_raster(const Array& a) {
  if (a.ndim() != 2) throw ValidationError("expected a 2-D array, got " + std::to_string(a.ndim()) + " dimensions");
  RasterF32 r(static_cast<std::uint32_t>(a.shape(0)), static_cast<std::uint32_t>(a.shape(1)));
  std::memcpy(r.data.data(), a.data(), r.size() * sizeof(float));
  return r;
}

Array to_array(const RasterF32& r) {
  Array a({static_cast<py::ssize_t>(r.height), static_cast<py::ssize_t>(r.width)});
  std::memcpy(a.mutable_data(), r.data.data(), r.size() * sizeof(float));
  return a;
}

py::dict report_dict(const noisestats::NoiseReport& r) {
  py::dict d;
  d["dose_fraction"] = r.dose_fraction;
  d["q05"] = r.q05;
  d["q95"] = r.q95;
  d["skewness"] = r.skewness;
  d["frac_negative"] = r.frac_negative;
  d["max_ld"] = r.max_ld;
  d["max_fd"] = r.max_fd;
  d["n_pixels"] = r.n_pixels;
  d["zero_variance"] = r.zero_variance;
  return d;
}

}  // namespace

PYBIND11_MODULE(_crossdose, m) {
  m.doc() = "crossdose core library";

  // Translators run newest first, so subclasses are registered after their bases.
  auto& error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  auto& validation = py::register_exception<ValidationError>(m, "ValidationError", error);
  py::register_exception<FormatError>(m, "FormatError", error);
  py::register_exception<IoError>(m, "IoError", error);
  py::register_exception<UsageError>(m, "UsageError", validation);
  py::register_exception<NumericError>(m, "NumericError", error);
  py::register_exception<MissingPrerequisite>(m, "MissingPrerequisite", error);

  std::vector<double> standard;
  for (Dose d : kStandardDoses) standard.push_back(d.fraction());
  m.attr("STANDARD_DOSES") = py::tuple(py::cast(standard));

  m.def("read_raster", [](const std::filesystem::path& p) { return to_array(rasterio::read_raster(p)); },
        py::arg("path"));
  m.def("write_raster", [](const std::filesystem::path& p, const Array& a) { rasterio::write_raster(p, to_raster(a)); },
        py::arg("path"), py::arg("image"));

  m.def("random_phantom",
        [](std::uint32_t size, std::uint64_t seed) {
          return to_array(phantom::synthesize_reference(phantom::random_phantom_spec(size, seed)));
        },
        py::arg("size") = 128, py::arg("seed") = 0, "Clean full-dose reference of a random torso-like slice.");
  m.def("hot_lesion_phantom",
        [](std::uint32_t size, std::uint64_t seed) {
          return to_array(phantom::synthesize_reference(phantom::hot_lesion_phantom_spec(size, seed)));
        },
        py::arg("size") = 128, py::arg("seed") = 0);
  m.def("lesion_mask",
        [](std::uint32_t size, std::uint64_t seed) {
          return to_array(phantom::lesion_mask(phantom::hot_lesion_phantom_spec(size, seed)));
        },
        py::arg("size") = 128, py::arg("seed") = 0, "Lesion mask of hot_lesion_phantom(size, seed).");
  m.def("simulate_low_dose",
        [](const Array& y, double dose, double counts_per_suv, std::uint64_t seed) {
          phantom::DoseSimConfig c;
          c.dose = Dose::from_fraction(dose);
          c.counts_per_suv = counts_per_suv;
          c.seed = seed;
          return to_array(phantom::simulate_low_dose(to_raster(y), c).image);
        },
        py::arg("reference"), py::arg("dose"), py::arg("counts_per_suv") = 50.0, py::arg("seed") = 0);

  m.def("analyze_noise",
        [](const Array& y, const Array& x, double dose, std::optional<Array> mask) {
          const LowDoseImage ld{to_raster(x), Dose::from_fraction(dose)};
          std::vector<std::uint8_t> mk;
          if (mask) {
            const RasterF32 mr = to_raster(*mask);
            for (float v : mr.data) mk.push_back(v != 0.0f);
          }
          return report_dict(noisestats::analyze_noise(to_raster(y), ld, mk));
        },
        py::arg("reference"), py::arg("low_dose"), py::arg("dose"), py::arg("mask") = py::none());

  m.def("rmse", [](const Array& a, const Array& b) { return metrics::rmse(to_raster(a), to_raster(b)); });
  m.def("psnr",
        [](const Array& ref, const Array& est, double range) {
          return metrics::psnr(to_raster(ref), to_raster(est), range);
        },
        py::arg("reference"), py::arg("estimate"), py::arg("dynamic_range") = 16.0);
  m.def("ssim",
        [](const Array& a, const Array& b, int window, double range) {
          metrics::SsimParams p;
          p.window_size = window;
          p.dynamic_range = range;
          return metrics::ssim(to_raster(a), to_raster(b), p);
        },
        py::arg("a"), py::arg("b"), py::arg("window") = 11, py::arg("dynamic_range") = 16.0);
  m.def("total_loss",
        [](const Array& pred, const Array& target, double lambda) {
          loss::LossConfig c;
          c.lambda = lambda;
          const auto v = loss::total_loss(to_raster(pred), to_raster(target), c);
          py::dict d;
          d["total"] = v.total;
          d["mae"] = v.mae;
          d["ssim_loss"] = v.ssim_loss;
          return d;
        },
        py::arg("pred"), py::arg("target"), py::arg("lam") = 0.5);
  m.def("lr_at", &train::lr_at, py::arg("n_iter"), py::arg("total"), py::arg("lr_base") = 0.01,
        py::arg("gamma") = 0.85);

  m.def("denoise",
        [](const std::filesystem::path& checkpoint, const Array& x, std::optional<double> dose) {
          const auto ck = train::load_checkpoint(checkpoint);
          std::optional<Dose> d;
          if (dose) d = Dose::from_fraction(*dose);
          return to_array(train::denoise(ck, to_raster(x), d));
        },
        py::arg("checkpoint"), py::arg("low_dose"), py::arg("dose") = py::none(),
        "Denoises one slice with a checkpoint directory written by `crossdose train`.");

  m.def("averaging_gap",
        [](std::vector<double> clean, std::vector<double> scales, std::size_t n, std::uint64_t seed,
           const std::string& loss) {
          toy::ToyProblem tp;
          tp.clean_values = std::move(clean);
          tp.noise_scales = std::move(scales);
          tp.n_samples = n;
          tp.seed = seed;
          if (loss == "mse") tp.loss_kind = toy::LossKind::kMse;
          else if (loss == "mae") tp.loss_kind = toy::LossKind::kMae;
          else throw ValidationError("loss must be 'mse' or 'mae', got '" + loss + "'");
          const auto g = toy::averaging_gap(tp);
          return py::make_tuple(g.gap, g.standard_error);
        },
        py::arg("clean_values"), py::arg("noise_scales"), py::arg("n_samples") = 100000, py::arg("seed") = 0,
        py::arg("loss") = "mse", "Returns (gap, standard_error).");
}
