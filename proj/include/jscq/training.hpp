#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "jscq/metrics.hpp"
#include "jscq/model.hpp"
#include "jscq/param_io.hpp"
#include "jscq/tensor.hpp"

namespace jscq {

enum class Distortion { mse, one_minus_ssim };

const char* to_string(Distortion d);
Distortion parse_distortion(const std::string& text);

/// lambda = 0.05 below 64 points, 0 otherwise.
double default_lambda(std::size_t constellation_size);

struct TrainConfig {
  Distortion distortion = Distortion::mse;
  std::optional<double> lambda;  // unset: default_lambda(M)
  double snr_min_db = 0.0;
  double snr_max_db = 10.0;
  // > 0 pins the channel noise power instead of drawing an SNR per batch.
  double fixed_sigma2 = 0.0;
  std::size_t batch_size = 32;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double lr_decay = 0.8;
  std::size_t lr_patience = 4;
  std::size_t early_stop_patience = 8;
  std::size_t max_epochs = 100;
  // Minimum decrease of the validation distortion that counts as improvement.
  double min_improvement = 1e-6;

  void validate() const;
  double effective_lambda(std::size_t constellation_size) const;

  std::map<std::string, std::string> to_map() const;
  static TrainConfig from_map(const std::map<std::string, std::string>& kv);
};

/// sum_j p_j ln(p_j M) with 0 ln 0 = 0. Throws on negative entries or a
/// distribution that does not sum to 1 within 1e-9.
double kl_to_uniform(std::span<const double> p_hat);
Tensor kl_to_uniform(const Tensor& p_hat);

double entropy_nats(std::span<const double> p);

/// d(x, x_hat) + lambda * KL(usage || uniform). `usage` may be undefined when
/// lambda == 0. Images are [B, H, W, C] in [0, 1].
Tensor total_loss(const Tensor& x, const Tensor& x_hat, const Tensor& usage, Distortion distortion,
                  double lambda);

class Adam {
 public:
  Adam(ParameterSet& params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  // Parameters without a gradient buffer are treated as having zero gradient.
  void step();
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  std::size_t steps() const { return t_; }

 private:
  ParameterSet& params_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// Reduce-on-plateau learning rate plus early stopping, both keyed on the
/// validation distortion.
class PlateauSchedule {
 public:
  PlateauSchedule(double decay, std::size_t lr_patience, std::size_t stop_patience, double min_improvement);
  struct Step {
    bool improved;
    bool decay_lr;
    bool stop;
  };
  Step observe(double distortion);
  double best() const { return best_; }

 private:
  double decay_;
  std::size_t lr_patience_, stop_patience_;
  double min_improvement_;
  double best_;
  std::size_t since_best_ = 0;
  std::size_t since_decay_ = 0;
};

struct EpochRecord {
  std::size_t epoch;
  double loss;
  double val_metric;  // MSE (unit scale) or SSIM, matching the distortion
  double kl;          // mean KL term over the epoch; NaN when not computed
  double lr;
};

struct TrainReport {
  Distortion distortion = Distortion::mse;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_metric = 0.0;
  bool early_stopped = false;

  void write_csv(std::ostream& out) const;
  std::string summary() const;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainResult {
  ParameterSet params;  // best-validation parameters
  TrainReport report;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train(const ModelConfig& model_cfg, const TrainConfig& train_cfg, const ImageBatch& train_set,
                  const ImageBatch& val_set, std::uint64_t seed, const EpochCallback& on_epoch = {});

/// Soft-assignment usage of each constellation point over `images` at one SNR.
std::vector<double> measure_usage(const ParameterSet& params, const ModelConfig& cfg, const ImageBatch& images,
                                  double snr_est_db, std::size_t batch_size = 64);

}  // namespace jscq
