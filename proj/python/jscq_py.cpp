#include <pybind11/complex.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "jscq/baseline/codec.hpp"
#include "jscq/baseline/ldpc.hpp"
#include "jscq/baseline/pipeline.hpp"
#include "jscq/baseline/qam_bits.hpp"
#include "jscq/channel.hpp"
#include "jscq/constellation.hpp"
#include "jscq/harness/config.hpp"
#include "jscq/harness/dataset.hpp"
#include "jscq/harness/experiments.hpp"
#include "jscq/harness/gradcheck_suite.hpp"
#include "jscq/metrics.hpp"
#include "jscq/model.hpp"
#include "jscq/training.hpp"

namespace py = pybind11;
using namespace jscq;

namespace {

using Doubles = py::array_t<double, py::array::c_style | py::array::forcecast>;
using Complexes = py::array_t<Complex, py::array::c_style | py::array::forcecast>;

std::vector<Complex> to_complex(const Complexes& a) { return {a.data(), a.data() + a.size()}; }

py::array_t<Complex> from_complex(const std::vector<Complex>& v) {
  py::array_t<Complex> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

// [B, H, W, C] (or [H, W, C]) array in [0, peak] -> ImageBatch.
ImageBatch to_images(const Doubles& a, double peak) {
  if (a.ndim() != 3 && a.ndim() != 4) throw std::invalid_argument("images must be [B,H,W,C] or [H,W,C]");
  const bool single = a.ndim() == 3;
  const auto d = [&](int i) { return static_cast<std::size_t>(a.shape(single ? i - 1 : i)); };
  ImageBatch x(single ? 1 : d(0), d(1), d(2), d(3), peak);
  std::copy(a.data(), a.data() + a.size(), x.data.begin());
  return x;
}

py::array_t<double> from_images(const ImageBatch& x) {
  py::array_t<double> out({x.batch, x.height, x.width, x.channels});
  std::copy(x.data.begin(), x.data.end(), out.mutable_data());
  return out;
}

Config with_defaults(const std::map<std::string, std::string>& overrides) {
  for (const auto& [k, v] : overrides)
    if (!is_config_key(k)) throw std::invalid_argument("unknown config key '" + k + "'");
  return merge_configs(default_config(), Config(overrides.begin(), overrides.end()));
}

}  // namespace

PYBIND11_MODULE(_jscq, m) {
  m.doc() = "Quantized deep joint source-channel coding: constellations, channel, metrics, models and baseline.";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<DecodeFailure>(m, "DecodeFailure", PyExc_RuntimeError);
  py::register_exception<TrainingDiverged>(m, "TrainingDiverged", PyExc_RuntimeError);

  // ---- constellation and quantizer ----
  m.def("qam_points",
        [](std::size_t M, double P) {
          const auto c = make_qam(M, P);
          return from_complex({c.points().begin(), c.points().end()});
        },
        py::arg("M"), py::arg("power") = 1.0, "Square M-QAM points, index = imag_level * L + real_level.");
  m.def("hard_indices", [](const Complexes& z, std::size_t M, double P) {
          return hard_indices(to_complex(z), make_qam(M, P));
        },
        py::arg("z"), py::arg("M"), py::arg("power") = 1.0);
  m.def("hard_quantize", [](const Complexes& z, std::size_t M, double P) {
          return from_complex(hard_quantize(to_complex(z), make_qam(M, P)));
        },
        py::arg("z"), py::arg("M"), py::arg("power") = 1.0);
  m.def("soft_quantize",
        [](const Complexes& z, std::size_t M, double P, double sigma_q) {
          const auto r = soft_quantize(to_complex(z), make_qam(M, P), QuantizerConfig{sigma_q});
          py::array_t<double> w({r.hard.size(), r.M});
          std::copy(r.weights.begin(), r.weights.end(), w.mutable_data());
          return py::make_tuple(from_complex(r.hard), from_complex(r.soft), w);
        },
        py::arg("z"), py::arg("M"), py::arg("power") = 1.0, py::arg("sigma_q") = 100.0,
        "Returns (hard, soft, weights[k, M]).");
  m.def("soft_jacobian",
        [](Complex z, std::size_t M, double P, double sigma_q) {
          return soft_jacobian(z, make_qam(M, P), QuantizerConfig{sigma_q});
        },
        py::arg("z"), py::arg("M"), py::arg("power") = 1.0, py::arg("sigma_q") = 100.0);
  m.def("kl_to_uniform", [](std::vector<double> p) { return kl_to_uniform(p); }, py::arg("p"));
  m.def("default_lambda", &default_lambda, py::arg("M"));

  // ---- channel ----
  m.def("snr_to_sigma2", &snr_to_sigma2, py::arg("snr_db"), py::arg("power") = 1.0);
  m.def("sigma2_to_snr", &sigma2_to_snr, py::arg("sigma2"), py::arg("power") = 1.0);
  m.def("awgn",
        [](const Complexes& x, double snr_db, std::uint64_t seed, std::uint64_t stream, double power) {
          return from_complex(transmit(to_complex(x), ChannelModel::from_snr(snr_db, snr_db, power, seed), stream));
        },
        py::arg("x"), py::arg("snr_db"), py::arg("seed") = 0, py::arg("stream") = 0, py::arg("power") = 1.0,
        "x + CN(0, sigma2) with sigma2 set by the SNR; deterministic in (seed, stream).");
  m.def("normalize_power", [](const Complexes& z, double P) { return from_complex(normalize_power(to_complex(z), P)); },
        py::arg("z"), py::arg("power") = 1.0);

  // ---- metrics ----
  m.def("psnr", [](const Doubles& x, const Doubles& y, double peak) {
          return psnr(to_images(x, peak), to_images(y, peak), peak);
        },
        py::arg("x"), py::arg("y"), py::arg("peak") = 255.0, "Per-image PSNR in dB.");
  m.def("ssim", [](const Doubles& x, const Doubles& y, double peak) {
          return ssim(to_images(x, peak), to_images(y, peak), peak);
        },
        py::arg("x"), py::arg("y"), py::arg("peak") = 255.0, "Per-image global SSIM.");
  m.def("psnr_from_mse", &psnr_from_mse, py::arg("mse"), py::arg("peak") = 255.0);

  // ---- data ----
  m.def("synthetic_images",
        [](std::size_t n, std::size_t h, std::size_t w, std::uint64_t seed) {
          return from_images(synthetic_images(n, h, w, seed));
        },
        py::arg("count"), py::arg("height") = 32, py::arg("width") = 32, py::arg("seed") = 0);
  m.def("load_cifar10", [](const std::string& path) { return from_images(load_cifar10_all(path)); }, py::arg("path"));

  // ---- baseline ----
  m.def("codec_encode",
        [](const Doubles& image, int quality) {
          const auto s = codec_encode(to_images(image, 255.0), 0, quality);
          return py::bytes(reinterpret_cast<const char*>(s.bytes.data()), s.bytes.size());
        },
        py::arg("image"), py::arg("quality"), "Encodes one [H,W,C] image; quality 1 (finest) to 31.");
  m.def("codec_decode",
        [](const py::bytes& data) {
          const std::string s = data;
          return from_images(codec_decode(std::vector<std::uint8_t>(s.begin(), s.end())));
        },
        py::arg("data"));

  py::class_<LdpcCode>(m, "LdpcCode")
      .def_static("standard", [](const std::string& rate) { return load_standard_code(parse_code_rate(rate)); },
                  py::arg("rate"), "Shipped n=1024 code of rate '1/3', '1/2' or '2/3'.")
      .def_static("random", &make_ldpc, py::arg("n"), py::arg("m"), py::arg("seed"))
      .def_property_readonly("n", &LdpcCode::length)
      .def_property_readonly("k", &LdpcCode::dimension)
      .def_property_readonly("rate", &LdpcCode::rate)
      .def("encode", [](const LdpcCode& c, std::vector<std::uint8_t> info) { return c.encode(info); })
      .def("is_codeword", [](const LdpcCode& c, std::vector<std::uint8_t> cw) { return c.is_codeword(cw); })
      .def("decode",
           [](const LdpcCode& c, std::vector<double> llr, std::size_t max_iters) {
             const auto r = ldpc_decode(llr, c, max_iters);
             return py::make_tuple(r.bits, r.converged, r.iterations);
           },
           py::arg("llr"), py::arg("max_iters") = 50, "Returns (bits, converged, iterations).")
      .def("four_cycles", &LdpcCode::four_cycles);

  m.def("qam_map", [](std::vector<std::uint8_t> bits, std::size_t M) { return from_complex(qam_map(bits, make_qam(M, 1.0))); },
        py::arg("bits"), py::arg("M"));
  m.def("qam_demap_llr",
        [](const Complexes& y, std::size_t M, double sigma2) {
          return qam_demap_llr(to_complex(y), make_qam(M, 1.0), sigma2);
        },
        py::arg("y"), py::arg("M"), py::arg("sigma2"));
  m.def("baseline_psnr",
        [](const Doubles& images, double snr_db, const std::string& rate, std::size_t M, std::size_t symbols,
           std::uint64_t seed) {
          const auto x = to_images(images, 255.0);
          SeparationPipeline pipe(load_standard_code(parse_code_rate(rate)), make_qam(M, 1.0), symbols);
          EvalOptions e;
          e.trials = 1;
          e.seed = seed;
          return select_metric(baseline_sweep(pipe, x, {snr_db}, e, "baseline"), "psnr")[0].mean;
        },
        py::arg("images"), py::arg("snr_db"), py::arg("rate") = "1/2", py::arg("M") = 4, py::arg("symbols") = 1280,
        py::arg("seed") = 0, "Mean PSNR of the separation baseline at one SNR.");

  // ---- models ----
  py::class_<ModelUnderTest>(m, "Model")
      .def_static("load", &ModelUnderTest::from_checkpoint, py::arg("path"), py::arg("id") = "")
      .def("save",
           [](const ModelUnderTest& mt, const std::string& path) {
             save_checkpoint(path, mt.config, mt.params, {{"lambda", std::to_string(mt.lambda)}});
           })
      .def_readonly("id", &ModelUnderTest::id)
      .def_readonly("lambda_", &ModelUnderTest::lambda)
      .def_property_readonly("M", &ModelUnderTest::M)
      .def_property_readonly("latent_symbols", [](const ModelUnderTest& mt) { return mt.config.latent_symbols(); })
      .def_property_readonly("bandwidth_ratio", [](const ModelUnderTest& mt) { return mt.config.bandwidth_ratio(); })
      .def_property_readonly("config", [](const ModelUnderTest& mt) { return mt.config.to_map(); })
      .def("encode",
           [](const ModelUnderTest& mt, const Doubles& images, double snr_est_db) {
             NoGradGuard ng;
             const auto z = channel_input(encode(to_images(images, 255.0), snr_est_db, mt.params, mt.config), mt.config);
             py::array_t<double> out({z.dim(0), z.dim(1), std::size_t{2}});
             std::copy(z.data().begin(), z.data().end(), out.mutable_data());
             return out;
           },
           py::arg("images"), py::arg("snr_est_db"), "Channel input [B, k, 2] for images in [0, 255].")
      .def("sweep",
           [](const ModelUnderTest& mt, const Doubles& images, std::vector<double> snrs, std::optional<double> snr_est,
              std::size_t trials, std::uint64_t seed) {
             EvalOptions e;
             e.trials = trials;
             e.seed = seed;
             const auto x = to_images(images, 255.0);
             return records_to_csv(snr_est ? sweep_mismatched(mt, x, *snr_est, snrs, e) : sweep_matched(mt, x, snrs, e));
           },
           py::arg("images"), py::arg("snrs"), py::arg("snr_est") = py::none(), py::arg("trials") = 10,
           py::arg("seed") = 0, "CSV of PSNR/SSIM; matched unless snr_est is given.");

  m.def("init_model",
        [](const std::map<std::string, std::string>& config, std::uint64_t seed) {
          const auto c = with_defaults(config);
          ModelUnderTest mt;
          mt.id = "model";
          mt.config = model_config(c);
          mt.params = init_parameters(mt.config, seed);
          return mt;
        },
        py::arg("config") = std::map<std::string, std::string>{}, py::arg("seed") = 0,
        "Untrained model; config uses the same keys as the CLI.");
  m.def("train",
        [](const std::map<std::string, std::string>& config, const Doubles& train_images, const Doubles& val_images,
           std::uint64_t seed, std::function<void(std::size_t, double, double)> on_epoch) {
          const auto c = with_defaults(config);
          ModelUnderTest mt;
          mt.id = "model";
          mt.config = model_config(c);
          const auto tc = train_config(c);
          mt.lambda = mt.config.mode == ChannelMode::quantized ? tc.effective_lambda(mt.config.constellation_size) : 0.0;
          const auto tr = to_images(train_images, 255.0), va = to_images(val_images, 255.0);
          TrainResult r;
          {
            py::gil_scoped_release release;
            r = train(mt.config, tc, tr, va, seed, [&](const EpochRecord& e) {
              if (!on_epoch) return;
              py::gil_scoped_acquire acquire;
              on_epoch(e.epoch, e.loss, e.val_metric);
            });
          }
          mt.params = std::move(r.params);
          std::ostringstream csv;
          r.report.write_csv(csv);
          return py::make_tuple(mt, csv.str());
        },
        py::arg("config"), py::arg("train_images"), py::arg("val_images"), py::arg("seed") = 0,
        py::arg("on_epoch") = nullptr, "Returns (model, per-epoch CSV report).");

  m.def("gradcheck_suite",
        [](double tol, std::uint64_t seed) {
          py::list out;
          for (const auto& c : run_gradcheck_suite(tol, seed))
            out.append(py::make_tuple(c.name, c.result.max_rel_error, c.passed));
          return out;
        },
        py::arg("tolerance") = 1e-4, py::arg("seed") = 0);
  m.def("config_keys", [] {
    std::map<std::string, std::string> out;
    for (const auto& k : config_keys()) out[k.name] = k.default_value;
    return out;
  });
}
