#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "jscq/baseline/pipeline.hpp"
#include "jscq/metrics.hpp"
#include "jscq/model.hpp"

namespace jscq {

/// One CSV row: a metric's mean and standard deviation in one
/// (model, snr, snr_est) cell.
struct ExperimentRecord {
  double snr_db = 0.0;
  double snr_est_db = 0.0;
  std::string metric;
  double mean = 0.0;
  double std = 0.0;
  std::string model_id;
  std::size_t M = 0;  // 0 marks a continuous-input model
  double lambda = 0.0;
  std::uint64_t seed = 0;
};

inline constexpr const char* kRecordHeader = "snr_db,snr_est_db,metric,mean,std,model_id,M,lambda,seed";

void write_records_csv(std::ostream& out, const std::vector<ExperimentRecord>& records);
std::string records_to_csv(const std::vector<ExperimentRecord>& records);

struct EvalOptions {
  std::size_t trials = 10;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::size_t batch_size = 64;
};

struct ModelUnderTest {
  std::string id;
  ModelConfig config;
  ParameterSet params;
  double lambda = 0.0;

  // Id defaults to the file stem; lambda comes from the checkpoint metadata.
  static ModelUnderTest from_checkpoint(const std::string& path, const std::string& id = {});
  std::size_t M() const;
};

/// Per-image-per-trial metric samples of one evaluation cell.
struct CellSamples {
  std::vector<double> psnr;
  std::vector<double> ssim;
};

/// Every test image goes through the channel once per trial at true SNR
/// `snr_db` while encoder and decoder are told `snr_est_db`. The noise stream
/// depends only on (seed, snr_db, trial, batch).
CellSamples evaluate_cell(const ModelUnderTest& model, const ImageBatch& test, double snr_db, double snr_est_db,
                          const EvalOptions& opts);

double mean_of(const std::vector<double>& v);
// Population standard deviation.
double std_of(const std::vector<double>& v);

/// SNR_Est = SNR at every point. Rows: psnr then ssim per SNR, in input order.
std::vector<ExperimentRecord> sweep_matched(const ModelUnderTest& model, const ImageBatch& test,
                                            const std::vector<double>& snrs, const EvalOptions& opts);

/// SNR_Est pinned to `snr_est_db` while the true SNR varies.
std::vector<ExperimentRecord> sweep_mismatched(const ModelUnderTest& model, const ImageBatch& test,
                                               double snr_est_db, const std::vector<double>& snrs,
                                               const EvalOptions& opts);

/// Matched sweeps of several models concatenated in the given order.
std::vector<ExperimentRecord> compare_continuous(const std::vector<const ModelUnderTest*>& models,
                                                 const ImageBatch& test, const std::vector<double>& snrs,
                                                 const EvalOptions& opts);

/// Separation baseline at matched SNR. Rows per SNR: psnr, ssim and
/// failure_rate (fraction of transmissions scored as mid-gray).
std::vector<ExperimentRecord> baseline_sweep(const SeparationPipeline& pipeline, const ImageBatch& test,
                                             const std::vector<double>& snrs, const EvalOptions& opts,
                                             const std::string& model_id, double power = 1.0);

struct BlerPoint {
  double snr_db;
  double bler;
  std::size_t blocks;
};

/// Block error rate of random codewords over the constellation at each SNR.
std::vector<BlerPoint> measure_bler(const LdpcCode& code, const Constellation& c, const std::vector<double>& snrs,
                                    std::size_t blocks, std::uint64_t seed, std::size_t max_iters = 50);

/// SNR at which the BLER curve first falls below `target`, linearly
/// interpolated between grid points. NaN if it never does.
double waterfall_snr(const std::vector<BlerPoint>& points, double target = 0.1);

/// Records of one metric, in row order.
std::vector<ExperimentRecord> select_metric(const std::vector<ExperimentRecord>& records, const std::string& metric);

// Runs fn(i) for i in [0, count) on up to `threads` threads.
void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace jscq
