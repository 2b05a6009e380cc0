// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
//
// The learned-model criteria share five desk-scale models trained on synthetic
// images. Pass --cache-dir to reuse checkpoints between runs.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "jscq/baseline/ldpc.hpp"
#include "jscq/baseline/pipeline.hpp"
#include "jscq/channel.hpp"
#include "jscq/constellation.hpp"
#include "jscq/harness/dataset.hpp"
#include "jscq/harness/experiments.hpp"
#include "jscq/harness/gradcheck_suite.hpp"
#include "jscq/metrics.hpp"
#include "jscq/model.hpp"
#include "jscq/rng.hpp"
#include "jscq/training.hpp"

using namespace jscq;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Options {
  std::uint64_t seed = 1;
  std::size_t epochs = 100;
  std::size_t train_images = 1000;
  std::size_t val_images = 100;
  std::size_t test_images = 200;
  std::size_t mid_channels = 16;
  double lr = 1e-3;
  std::size_t trials = 10;
  std::string cache_dir;
  std::string report;
  std::vector<int> only;
};

struct Data {
  ImageBatch train, val, test;
};

struct Trained {
  ModelUnderTest model;
  double train_seconds = 0.0;
};

class Models {
 public:
  Models(const Options& o, const Data& d) : opt_(o), data_(d) {}

  const Trained& get(std::size_t M, ChannelMode mode) {
    const std::string id = mode == ChannelMode::continuous ? "continuous" : "qam" + std::to_string(M);
    auto it = cache_.find(id);
    if (it != cache_.end()) return it->second;

    ModelConfig cfg;
    cfg.mid_channels = opt_.mid_channels;
    cfg.constellation_size = M;
    cfg.mode = mode;
    TrainConfig tc;
    tc.lr = opt_.lr;
    tc.max_epochs = opt_.epochs;
    const double lambda = mode == ChannelMode::continuous ? 0.0 : default_lambda(M);
    tc.lambda = lambda;

    Trained t;
    t.model.id = id;
    t.model.config = cfg;
    t.model.lambda = lambda;
    const std::string path = opt_.cache_dir.empty() ? "" : (fs::path(opt_.cache_dir) / (id + ".ckpt")).string();
    const auto t0 = Clock::now();
    if (!path.empty() && fs::exists(path)) {
      auto ck = load_checkpoint(path);
      t.model.params = std::move(ck.params);
      t.train_seconds = ck.metadata.count("train_seconds") ? std::stod(ck.metadata.at("train_seconds")) : 0.0;
      std::cerr << "  loaded " << path << "\n";
    } else {
      std::cerr << "  training " << id << " (" << opt_.epochs << " epochs, " << data_.train.batch << " images)\n";
      auto r = train(cfg, tc, data_.train, data_.val, opt_.seed + M);
      t.model.params = std::move(r.params);
      t.train_seconds = seconds_since(t0);
      std::cerr << "  " << r.report.summary() << " in " << fmt(t.train_seconds) << " s\n";
      if (!path.empty()) {
        fs::create_directories(opt_.cache_dir);
        save_checkpoint(path, cfg, t.model.params,
                        {{"lambda", fmt(lambda, 17)}, {"train_seconds", fmt(t.train_seconds)}});
      }
    }
    return cache_.emplace(id, std::move(t)).first->second;
  }

  EvalOptions eval() const {
    EvalOptions e;
    e.trials = opt_.trials;
    e.seed = opt_.seed;
    return e;
  }

 private:
  const Options& opt_;
  const Data& data_;
  std::map<std::string, Trained> cache_;
};

std::vector<double> psnr_curve(const std::vector<ExperimentRecord>& rec) {
  std::vector<double> out;
  for (const auto& r : select_metric(rec, "psnr")) out.push_back(r.mean);
  return out;
}

// Largest fall in value when moving from any grid point down to a lower SNR.
double largest_drop(const std::vector<double>& curve) {
  double worst = 0.0;
  for (std::size_t lo = 0; lo < curve.size(); ++lo)
    for (std::size_t hi = lo + 1; hi < curve.size(); ++hi) worst = std::max(worst, curve[hi] - curve[lo]);
  return worst;
}

// ---- criteria ----

Outcome quantizer_math() {
  const auto qpsk = make_qam(4, 1.0);
  const QuantizerConfig q5{5.0};
  const auto at0 = soft_quantize(std::vector<Complex>{Complex{0, 0}}, qpsk, q5);
  bool exact = at0.soft[0] == Complex{0, 0};
  for (double w : at0.row(0)) exact = exact && w == 0.25;

  // Straight-through Jacobian against central differences of the soft map.
  Rng rng(1);
  const std::size_t n = 1000;
  std::vector<double> zv(2 * n);
  for (auto& v : zv) v = rng.uniform(-1.5, 1.5);
  double worst = 0.0;
  for (std::size_t out = 0; out < 2; ++out) {
    auto z = Tensor::from({n, 2}, zv, true);
    std::vector<double> pick(2 * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) pick[2 * i + out] = 1.0;
    backward(sum(mul(quantize_straight_through(z, qpsk, q5), Tensor::from({n, 2}, pick))));
    const double h = 1e-6;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t in = 0; in < 2; ++in) {
        const Complex dz = in == 0 ? Complex{h, 0} : Complex{0, h};
        const Complex zp = Complex{zv[2 * i], zv[2 * i + 1]} + dz, zm = zp - 2.0 * dz;
        const auto sp = soft_quantize(std::vector<Complex>{zp}, qpsk, q5).soft[0];
        const auto sm = soft_quantize(std::vector<Complex>{zm}, qpsk, q5).soft[0];
        const double fd = ((out == 0 ? sp.real() : sp.imag()) - (out == 0 ? sm.real() : sm.imag())) / (2 * h);
        const double an = z.grad()[2 * i + in];
        worst = std::max(worst, std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-3}));
      }
  }
  return {exact && worst < 1e-4, "z=0 uniform/zero exact=" + std::string(exact ? "yes" : "no") +
                                     ", max rel err " + fmt(worst) + " over 1000 points"};
}

Outcome constellation_power() {
  double worst = 0.0;
  for (std::size_t M : {4u, 16u, 64u, 256u, 1024u, 4096u})
    for (double P : {0.5, 1.0, 2.0}) {
      const auto c = make_qam(M, P);
      double e = 0.0;
      for (const auto& p : c.points()) e += std::norm(p);
      worst = std::max(worst, std::abs(e / double(M) - P) / P);
    }
  return {worst <= 1e-12, "max rel power error " + fmt(worst)};
}

Outcome channel_statistics() {
  const std::size_t n = 100000;
  std::vector<Complex> zeros(n);
  const auto noise = transmit(zeros, ChannelModel::from_snr(0.0, 0.0, 1.0, 17), 0);
  double var = 0.0;
  for (const auto& v : noise) var += std::norm(v);
  var /= double(n);
  bool ok = var >= 0.98 && var <= 1.02;
  std::string detail = "var " + fmt(var, 5);

  Rng rng(18);
  std::vector<Complex> x(n);
  for (auto& v : x) v = Complex{rng.below(2) ? 1.0 : -1.0, rng.below(2) ? 1.0 : -1.0} / std::sqrt(2.0);
  for (double snr : {0.0, 10.0}) {
    const auto y = transmit(x, ChannelModel::from_snr(snr, snr, 1.0, 19), 1);
    double ps = 0.0, pn = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      ps += std::norm(x[i]);
      pn += std::norm(y[i] - x[i]);
    }
    const double measured = 10.0 * std::log10(ps / pn);
    ok = ok && std::abs(measured - snr) <= 0.1;
    detail += ", snr " + fmt(snr) + " -> " + fmt(measured, 5) + " dB";
  }
  return {ok, detail};
}

Outcome metric_oracles() {
  const double a = psnr_from_mse(255.0 * 255.0, 255.0);
  const double b = psnr_from_mse(1.0, 255.0);
  ImageBatch x(100, 16, 16, 3), y(100, 16, 16, 3);
  Rng rng(20);
  for (auto& v : x.data) v = double(rng.below(256));
  for (auto& v : y.data) v = double(rng.below(256));
  const auto self = ssim(x, x, 255.0);
  const auto xy = ssim(x, y, 255.0), yx = ssim(y, x, 255.0);
  bool ok = std::abs(a) < 1e-12 && std::abs(b - 48.1308) <= 1e-4;
  double self_err = 0.0, asym = 0.0;
  for (std::size_t i = 0; i < 100; ++i) {
    self_err = std::max(self_err, std::abs(self[i] - 1.0));
    asym = std::max(asym, std::abs(xy[i] - yx[i]));
  }
  ok = ok && self_err < 1e-12 && asym < 1e-12;
  return {ok, "psnr(A^2)=" + fmt(a) + ", psnr(1)=" + fmt(b, 8) + ", |ssim(x,x)-1|=" + fmt(self_err) +
                  ", max asym " + fmt(asym)};
}

// Hard-assignment entropy of the encoder output over the test images.
double hard_entropy(const ModelUnderTest& m, const ImageBatch& images, double snr_est_db) {
  NoGradGuard ng;
  const auto c = m.config.constellation();
  std::vector<double> counts(c.size(), 0.0);
  for (std::size_t first = 0; first < images.batch; first += 64) {
    const std::size_t count = std::min<std::size_t>(64, images.batch - first);
    const auto z = encode(images.slice(first, count), snr_est_db, m.params, m.config);
    const auto d = z.data();
    std::vector<Complex> pts(d.size() / 2);
    for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = {d[2 * i], d[2 * i + 1]};
    for (auto j : hard_indices(pts, c)) counts[j] += 1.0;
  }
  double total = 0.0;
  for (double v : counts) total += v;
  for (auto& v : counts) v /= total;
  return entropy_nats(counts);
}

Outcome kl_regularizer(Models& models, const Data& data) {
  const double u = kl_to_uniform(std::vector<double>{0.25, 0.25, 0.25, 0.25});
  const double one = kl_to_uniform(std::vector<double>{1, 0, 0, 0});
  const auto& t = models.get(4, ChannelMode::quantized);
  double worst = 0.0;
  std::string per;
  for (double s : {0.0, 5.0, 10.0}) {
    const double h = hard_entropy(t.model, data.test, s);
    worst = std::max(worst, std::abs(h - std::log(4.0)));
    per += " " + fmt(h, 5) + "@" + fmt(s) + "dB";
  }
  const bool ok = std::abs(u) < 1e-12 && std::abs(one - std::log(4.0)) <= 1e-9 && worst < 0.1 &&
                  t.train_seconds < 600.0;
  return {ok, "KL(uniform)=" + fmt(u) + ", KL(one-hot)-ln4=" + fmt(one - std::log(4.0)) + ", QPSK entropy" + per +
                  " (ln4=1.3863), train " + fmt(t.train_seconds) + " s"};
}

Outcome gradient_integrity() {
  const auto cases = run_gradcheck_suite(1e-4, 3);
  double worst = 0.0;
  std::string failed;
  for (const auto& c : cases) {
    worst = std::max(worst, c.result.max_rel_error);
    if (!c.passed) failed += " " + c.name;
  }
  return {failed.empty(), std::to_string(cases.size()) + " cases, max rel err " + fmt(worst) +
                              (failed.empty() ? "" : ", failing:" + failed)};
}

Outcome graceful_degradation(Models& models, const Data& data) {
  const auto& t = models.get(4, ChannelMode::quantized);
  const auto t0 = Clock::now();
  const std::vector<double> snrs{0, 2, 4, 6, 8, 10};
  const auto curve = psnr_curve(sweep_mismatched(t.model, data.test, 6.0, snrs, models.eval()));
  bool ok = true;
  std::string detail = "psnr";
  for (std::size_t i = 0; i < curve.size(); ++i) {
    detail += " " + fmt(curve[i]);
    if (i > 0) ok = ok && curve[i] >= curve[i - 1] - 0.2 && curve[i - 1] - curve[i] <= 3.0;
  }
  const double secs = t.train_seconds + seconds_since(t0);
  ok = ok && secs < 900.0;
  return {ok, detail + " at SNR 0..10 (SNR_Est 6), " + fmt(secs) + " s"};
}

struct WaterfallRecord {
  std::vector<double> per_seed;
};

Outcome cliff_effect(Models& models, const Data& data, double waterfall_db) {
  const auto t0 = Clock::now();
  SeparationPipeline pipe(load_standard_code(CodeRate::r1_2), make_qam(4, 1.0),
                          ModelConfig{}.latent_symbols());
  std::vector<double> grid;
  for (double s = 0.0; s <= 4.0 + 1e-9; s += 0.25) grid.push_back(s);
  EvalOptions once = models.eval();
  once.trials = 1;
  const auto base = psnr_curve(baseline_sweep(pipe, data.test, grid, once, "baseline"));

  // The 2 dB window containing the waterfall with the largest baseline fall.
  std::size_t best = 0;
  double base_drop = -1e300;
  for (std::size_t lo = 0; lo + 8 < grid.size(); ++lo) {
    if (waterfall_db < grid[lo] || waterfall_db > grid[lo + 8]) continue;
    const double d = base[lo + 8] - base[lo];
    if (d > base_drop) {
      base_drop = d;
      best = lo;
    }
  }
  const std::vector<double> window(grid.begin() + long(best), grid.begin() + long(best) + 9);
  const auto& t = models.get(4, ChannelMode::quantized);
  const auto learned = psnr_curve(sweep_matched(t.model, data.test, window, models.eval()));
  const double learned_drop = largest_drop(learned);
  const double secs = seconds_since(t0) + t.train_seconds;
  const bool ok = base_drop > 10.0 && learned_drop < 3.0 && secs < 1200.0;
  return {ok, "window [" + fmt(window.front()) + ", " + fmt(window.back()) + "] dB: baseline " +
                  fmt(base[best]) + " -> " + fmt(base[best + 8]) + " dB (drop " + fmt(base_drop) +
                  "), learned QPSK largest drop " + fmt(learned_drop) + " dB, " + fmt(secs) + " s"};
}

double psnr_at(const ModelUnderTest& m, const Data& data, const EvalOptions& e, double snr) {
  return psnr_curve(sweep_matched(m, data.test, {snr}, e))[0];
}

Outcome modulation_order(Models& models, const Data& data) {
  const auto& q4 = models.get(4, ChannelMode::quantized);
  const auto& q16 = models.get(16, ChannelMode::quantized);
  const auto& q64 = models.get(64, ChannelMode::quantized);
  const double p4 = psnr_at(q4.model, data, models.eval(), 10.0);
  const double p16 = psnr_at(q16.model, data, models.eval(), 10.0);
  const double p64 = psnr_at(q64.model, data, models.eval(), 10.0);
  const double secs = q4.train_seconds + q16.train_seconds + q64.train_seconds;
  const bool ok = p64 >= p16 - 0.3 && p16 >= p4 - 0.3 && secs < 2700.0;
  return {ok, "PSNR@10dB QPSK " + fmt(p4) + ", 16-QAM " + fmt(p16) + ", 64-QAM " + fmt(p64) + ", train " +
                  fmt(secs) + " s"};
}

Outcome continuous_convergence(Models& models, const Data& data) {
  const auto& cont = models.get(4, ChannelMode::continuous);
  const double pc = psnr_at(cont.model, data, models.eval(), 10.0);
  std::vector<double> gaps;
  std::string detail = "continuous " + fmt(pc) + " dB; gaps";
  for (std::size_t M : {4u, 16u, 64u, 1024u}) {
    const double p = psnr_at(models.get(M, ChannelMode::quantized).model, data, models.eval(), 10.0);
    gaps.push_back(pc - p);
    detail += " M" + std::to_string(M) + "=" + fmt(pc - p);
  }
  bool ok = gaps.back() < gaps.front();
  for (std::size_t i = 1; i < gaps.size(); ++i) ok = ok && gaps[i] <= gaps[i - 1] + 0.3;
  return {ok, detail};
}

Outcome bandwidth_ratio() {
  ModelConfig c;
  c.height = c.width = 32;
  c.channels = 3;
  c.out_channels = 40;
  const double rho = c.bandwidth_ratio();
  return {std::abs(rho - 0.41667) <= 1e-5, "rho " + fmt(rho, 7)};
}

Outcome ldpc_soundness(double& waterfall_out) {
  const auto code = load_standard_code(CodeRate::r1_2);
  Rng rng(30);
  std::size_t bad_parity = 0, bad_decode = 0;
  for (int b = 0; b < 1000; ++b) {
    std::vector<std::uint8_t> info(code.dimension());
    for (auto& v : info) v = std::uint8_t(rng.below(2));
    const auto cw = code.encode(info);
    if (!code.is_codeword(cw)) ++bad_parity;
    std::vector<double> llr(cw.size());
    for (std::size_t i = 0; i < cw.size(); ++i) llr[i] = cw[i] ? -1e3 : 1e3;
    if (ldpc_decode(llr, code).bits != cw) ++bad_decode;
  }
  std::vector<double> grid;
  for (double s = 0.5; s <= 2.5 + 1e-9; s += 0.25) grid.push_back(s);
  std::vector<double> wf;
  std::string detail;
  for (std::uint64_t seed : {101u, 202u, 303u}) {
    wf.push_back(waterfall_snr(measure_bler(code, make_qam(4, 1.0), grid, 400, seed)));
    detail += " " + fmt(wf.back(), 4);
  }
  const auto [lo, hi] = std::minmax_element(wf.begin(), wf.end());
  double mean = 0.0;
  for (double v : wf) mean += v / double(wf.size());
  waterfall_out = mean;
  const bool stable = std::isfinite(*lo) && std::isfinite(*hi) && *hi - mean <= 0.25 && mean - *lo <= 0.25;
  return {bad_parity == 0 && bad_decode == 0 && stable,
          "parity failures " + std::to_string(bad_parity) + ", noiseless decode errors " +
              std::to_string(bad_decode) + "/1000, rate-1/2 QPSK waterfall (BLER 0.1) per seed" + detail +
              " dB, mean " + fmt(mean, 4) + " dB"};
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"acceptance criteria"};
  app.add_option("--seed", o.seed);
  app.add_option("--epochs", o.epochs);
  app.add_option("--train-images", o.train_images);
  app.add_option("--mid-channels", o.mid_channels);
  app.add_option("--lr", o.lr);
  app.add_option("--trials", o.trials);
  app.add_option("--cache-dir", o.cache_dir, "reuse trained checkpoints from here");
  app.add_option("--report", o.report, "also write the result lines to this file");
  app.add_option("--only", o.only, "run only these criteria");
  CLI11_PARSE(app, argc, argv);

  Data data{synthetic_images(o.train_images, 32, 32, o.seed * 3 + 1),
            synthetic_images(o.val_images, 32, 32, o.seed * 3 + 2),
            synthetic_images(o.test_images, 32, 32, o.seed * 3 + 3)};
  Models models(o, data);
  double waterfall = std::nan("");

  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, quantizer_math},
      {2, constellation_power},
      {3, channel_statistics},
      {4, metric_oracles},
      {5, [&] { return kl_regularizer(models, data); }},
      {6, gradient_integrity},
      {7, [&] { return graceful_degradation(models, data); }},
      {12, [&] { return ldpc_soundness(waterfall); }},
      {8, [&] {
         if (std::isnan(waterfall)) ldpc_soundness(waterfall);
         return cliff_effect(models, data, waterfall);
       }},
      {9, [&] { return modulation_order(models, data); }},
      {10, [&] { return continuous_convergence(models, data); }},
      {11, bandwidth_ratio},
  };

  std::map<int, std::string> lines;
  int failures = 0;
  for (const auto& [id, fn] : criteria) {
    if (!o.only.empty() && std::find(o.only.begin(), o.only.end(), id) == o.only.end()) continue;
    const auto t0 = Clock::now();
    Outcome r;
    try {
      r = fn();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    const std::string line = "criterion " + std::to_string(id) + ": " + (r.pass ? "PASS" : "FAIL") + " - " +
                             r.detail + " [" + fmt(seconds_since(t0), 3) + " s]";
    std::cout << line << std::endl;
    lines[id] = line;
    failures += r.pass ? 0 : 1;
  }
  if (!o.report.empty()) {
    std::ofstream out(o.report);
    for (const auto& [id, line] : lines) out << line << "\n";
  }
  std::cout << (failures ? std::to_string(failures) + " criteria failed" : "all criteria passed") << std::endl;
  return failures ? 1 : 0;
}
