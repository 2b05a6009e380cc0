#include "jscq/harness/experiments.hpp"

#include <atomic>
#include <bit>
#include <cmath>
#include <exception>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "jscq/baseline/qam_bits.hpp"
#include "jscq/channel.hpp"
#include "jscq/kv.hpp"
#include "jscq/rng.hpp"

namespace jscq {

namespace {

std::uint64_t cell_stream(double snr_db, std::uint64_t trial, std::uint64_t item) {
  std::uint64_t h = splitmix64(std::bit_cast<std::uint64_t>(snr_db));
  h = splitmix64(h ^ trial);
  return splitmix64(h ^ (item + 0x9e37));
}

void push_pair(std::vector<ExperimentRecord>& out, const ExperimentRecord& proto, const CellSamples& s) {
  auto r = proto;
  r.metric = "psnr";
  r.mean = mean_of(s.psnr);
  r.std = std_of(s.psnr);
  out.push_back(r);
  r.metric = "ssim";
  r.mean = mean_of(s.ssim);
  r.std = std_of(s.ssim);
  out.push_back(r);
}

std::vector<ExperimentRecord> sweep(const ModelUnderTest& model, const ImageBatch& test,
                                    const std::vector<double>& snrs, const std::vector<double>& snr_ests,
                                    const EvalOptions& opts) {
  std::vector<CellSamples> cells(snrs.size());
  parallel_for(snrs.size(), opts.threads,
               [&](std::size_t i) { cells[i] = evaluate_cell(model, test, snrs[i], snr_ests[i], opts); });
  std::vector<ExperimentRecord> out;
  for (std::size_t i = 0; i < snrs.size(); ++i) {
    ExperimentRecord proto{snrs[i], snr_ests[i], "", 0, 0, model.id, model.M(), model.lambda, opts.seed};
    push_pair(out, proto, cells[i]);
  }
  return out;
}

}  // namespace

void write_records_csv(std::ostream& out, const std::vector<ExperimentRecord>& records) {
  out << kRecordHeader << '\n';
  out << std::setprecision(10);
  for (const auto& r : records) {
    out << r.snr_db << ',' << r.snr_est_db << ',' << r.metric << ',' << r.mean << ',' << r.std << ',' << r.model_id
        << ',' << r.M << ',' << r.lambda << ',' << r.seed << '\n';
  }
}

std::string records_to_csv(const std::vector<ExperimentRecord>& records) {
  std::ostringstream os;
  write_records_csv(os, records);
  return os.str();
}

ModelUnderTest ModelUnderTest::from_checkpoint(const std::string& path, const std::string& id) {
  auto ck = load_checkpoint(path);
  ModelUnderTest m;
  m.id = id.empty() ? std::filesystem::path(path).stem().string() : id;
  m.config = ck.config;
  m.params = std::move(ck.params);
  m.lambda = kv_double(ck.metadata, "lambda", 0.0);
  return m;
}

std::size_t ModelUnderTest::M() const {
  return config.mode == ChannelMode::continuous ? 0 : config.constellation_size;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

CellSamples evaluate_cell(const ModelUnderTest& model, const ImageBatch& test, double snr_db, double snr_est_db,
                          const EvalOptions& opts) {
  if (opts.trials == 0) throw std::invalid_argument("evaluate: trials must be positive");
  if (test.height != model.config.height || test.width != model.config.width ||
      test.channels != model.config.channels) {
    throw std::invalid_argument("evaluate: test images do not match the model geometry");
  }
  NoGradGuard ng;
  const double sigma2 = snr_to_sigma2(snr_db, model.config.power);
  CellSamples out;
  std::size_t batch_index = 0;
  for (std::size_t first = 0; first < test.batch; first += opts.batch_size, ++batch_index) {
    const std::size_t count = std::min(opts.batch_size, test.batch - first);
    const auto x = test.slice(first, count);
    const auto z = channel_input(encode(x, snr_est_db, model.params, model.config), model.config);
    for (std::size_t t = 0; t < opts.trials; ++t) {
      Rng rng(opts.seed, cell_stream(snr_db, t, batch_index));
      const auto y = awgn(z, sigma2, rng);
      const auto x_hat = decode_images(y, snr_est_db, model.params, model.config, test.peak);
      const auto p = psnr(x, x_hat, test.peak);
      const auto s = ssim(x, x_hat, test.peak);
      out.psnr.insert(out.psnr.end(), p.begin(), p.end());
      out.ssim.insert(out.ssim.end(), s.begin(), s.end());
    }
  }
  return out;
}

std::vector<ExperimentRecord> sweep_matched(const ModelUnderTest& model, const ImageBatch& test,
                                            const std::vector<double>& snrs, const EvalOptions& opts) {
  return sweep(model, test, snrs, snrs, opts);
}

std::vector<ExperimentRecord> sweep_mismatched(const ModelUnderTest& model, const ImageBatch& test,
                                               double snr_est_db, const std::vector<double>& snrs,
                                               const EvalOptions& opts) {
  return sweep(model, test, snrs, std::vector<double>(snrs.size(), snr_est_db), opts);
}

std::vector<ExperimentRecord> compare_continuous(const std::vector<const ModelUnderTest*>& models,
                                                 const ImageBatch& test, const std::vector<double>& snrs,
                                                 const EvalOptions& opts) {
  std::vector<ExperimentRecord> out;
  for (const auto* m : models) {
    auto part = sweep_matched(*m, test, snrs, opts);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

std::vector<ExperimentRecord> baseline_sweep(const SeparationPipeline& pipeline, const ImageBatch& test,
                                             const std::vector<double>& snrs, const EvalOptions& opts,
                                             const std::string& model_id, double power) {
  if (opts.trials == 0) throw std::invalid_argument("baseline sweep: trials must be positive");
  std::vector<SeparationPipeline::Prepared> prepared(test.batch);
  parallel_for(test.batch, opts.threads, [&](std::size_t i) { prepared[i] = pipeline.prepare(test, i); });

  struct Cell {
    CellSamples s;
    std::vector<double> failed;
  };
  std::vector<Cell> cells(snrs.size());
  parallel_for(snrs.size(), opts.threads, [&](std::size_t c) {
    const auto ch = ChannelModel::from_snr(snrs[c], snrs[c], power, opts.seed);
    for (std::size_t i = 0; i < test.batch; ++i) {
      const auto x = test.slice(i, 1);
      for (std::size_t t = 0; t < opts.trials; ++t) {
        const auto r = pipeline.transmit(prepared[i], ch, cell_stream(snrs[c], t, i));
        cells[c].s.psnr.push_back(psnr(x, r.image, test.peak)[0]);
        cells[c].s.ssim.push_back(ssim(x, r.image, test.peak)[0]);
        cells[c].failed.push_back(r.success ? 0.0 : 1.0);
      }
    }
  });

  std::vector<ExperimentRecord> out;
  for (std::size_t c = 0; c < snrs.size(); ++c) {
    ExperimentRecord proto{snrs[c], snrs[c], "", 0, 0, model_id, pipeline.constellation().size(), 0.0, opts.seed};
    push_pair(out, proto, cells[c].s);
    auto r = proto;
    r.metric = "failure_rate";
    r.mean = mean_of(cells[c].failed);
    r.std = std_of(cells[c].failed);
    out.push_back(r);
  }
  return out;
}

std::vector<BlerPoint> measure_bler(const LdpcCode& code, const Constellation& c, const std::vector<double>& snrs,
                                    std::size_t blocks, std::uint64_t seed, std::size_t max_iters) {
  const std::size_t b = bits_per_symbol(c);
  std::vector<BlerPoint> out;
  for (double snr : snrs) {
    const auto ch = ChannelModel::from_snr(snr, snr, c.power(), seed);
    std::size_t errors = 0;
    for (std::size_t blk = 0; blk < blocks; ++blk) {
      Rng rng(seed, cell_stream(snr, 0, blk) ^ 0xb175);
      std::vector<std::uint8_t> info(code.dimension());
      for (auto& v : info) v = static_cast<std::uint8_t>(rng.below(2));
      auto cw = code.encode(info);
      auto padded = cw;
      padded.resize((cw.size() + b - 1) / b * b, 0);
      const auto y = transmit(qam_map(padded, c), ch, cell_stream(snr, 1, blk));
      auto llr = qam_demap_llr(y, c, ch.sigma2_est);
      llr.resize(code.length());
      const auto dec = ldpc_decode(llr, code, max_iters);
      if (!dec.converged || dec.bits != cw) ++errors;
    }
    out.push_back({snr, static_cast<double>(errors) / static_cast<double>(blocks), blocks});
  }
  return out;
}

double waterfall_snr(const std::vector<BlerPoint>& points, double target) {
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].bler >= target) continue;
    if (i == 0) return points[0].snr_db;
    const auto& a = points[i - 1];
    const auto& b = points[i];
    const double f = (a.bler - target) / (a.bler - b.bler);
    return a.snr_db + f * (b.snr_db - a.snr_db);
  }
  return std::numeric_limits<double>::quiet_NaN();
}

std::vector<ExperimentRecord> select_metric(const std::vector<ExperimentRecord>& records, const std::string& metric) {
  std::vector<ExperimentRecord> out;
  for (const auto& r : records)
    if (r.metric == metric) out.push_back(r);
  return out;
}

void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < count;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace jscq
