#include "jscq/training.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "jscq/channel.hpp"
#include "jscq/kv.hpp"
#include "jscq/rng.hpp"

namespace jscq {

namespace {

constexpr std::uint64_t kValidationStream = 0x5a11da7e;
constexpr std::uint64_t kNoiseStream = 0x0015e000;

std::string num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

// Images listed in `order[first, first+count)` as a [count,H,W,C] unit tensor.
Tensor gather_unit(const ImageBatch& images, std::span<const std::size_t> order) {
  const std::size_t n = images.image_size();
  std::vector<double> v(order.size() * n);
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto src = images.image(order[i]);
    for (std::size_t j = 0; j < n; ++j) v[i * n + j] = src[j] / images.peak;
  }
  return Tensor::from({order.size(), images.height, images.width, images.channels}, std::move(v));
}

bool usage_is_cheap(const ModelConfig& cfg) {
  return cfg.mode == ChannelMode::quantized && cfg.constellation_size <= 64;
}

}  // namespace

const char* to_string(Distortion d) { return d == Distortion::mse ? "mse" : "ssim"; }

Distortion parse_distortion(const std::string& text) {
  if (text == "mse") return Distortion::mse;
  if (text == "ssim" || text == "one-minus-ssim") return Distortion::one_minus_ssim;
  throw std::invalid_argument("unknown distortion '" + text + "' (expected mse or ssim)");
}

double default_lambda(std::size_t constellation_size) { return constellation_size < 64 ? 0.05 : 0.0; }

void TrainConfig::validate() const {
  if (lambda && *lambda < 0.0) throw std::invalid_argument("train: lambda must be >= 0");
  if (!(lr_decay > 0.0 && lr_decay < 1.0)) throw std::invalid_argument("train: lr_decay must lie in (0, 1)");
  if (lr_patience == 0 || early_stop_patience == 0) throw std::invalid_argument("train: patience must be positive");
  if (batch_size == 0) throw std::invalid_argument("train: batch size must be positive");
  if (!(lr > 0.0)) throw std::invalid_argument("train: learning rate must be positive");
  if (snr_max_db < snr_min_db) throw std::invalid_argument("train: empty SNR range");
}

double TrainConfig::effective_lambda(std::size_t constellation_size) const {
  return lambda.value_or(default_lambda(constellation_size));
}

std::map<std::string, std::string> TrainConfig::to_map() const {
  std::map<std::string, std::string> kv{
      {"distortion", to_string(distortion)},
      {"snr_min", num(snr_min_db)},
      {"snr_max", num(snr_max_db)},
      {"fixed_sigma2", num(fixed_sigma2)},
      {"batch", std::to_string(batch_size)},
      {"lr", num(lr)},
      {"beta1", num(beta1)},
      {"beta2", num(beta2)},
      {"lr_decay", num(lr_decay)},
      {"lr_patience", std::to_string(lr_patience)},
      {"early_stop_patience", std::to_string(early_stop_patience)},
      {"max_epochs", std::to_string(max_epochs)}};
  if (lambda) kv["lambda"] = num(*lambda);
  return kv;
}

TrainConfig TrainConfig::from_map(const std::map<std::string, std::string>& kv) {
  TrainConfig c;
  if (auto it = kv.find("distortion"); it != kv.end()) c.distortion = parse_distortion(it->second);
  if (auto it = kv.find("lambda"); it != kv.end() && it->second != "auto") c.lambda = kv_double(kv, "lambda", 0.0);
  c.snr_min_db = kv_double(kv, "snr_min", c.snr_min_db);
  c.snr_max_db = kv_double(kv, "snr_max", c.snr_max_db);
  c.fixed_sigma2 = kv_double(kv, "fixed_sigma2", c.fixed_sigma2);
  c.batch_size = kv_size(kv, "batch", c.batch_size);
  c.lr = kv_double(kv, "lr", c.lr);
  c.beta1 = kv_double(kv, "beta1", c.beta1);
  c.beta2 = kv_double(kv, "beta2", c.beta2);
  c.lr_decay = kv_double(kv, "lr_decay", c.lr_decay);
  c.lr_patience = kv_size(kv, "lr_patience", c.lr_patience);
  c.early_stop_patience = kv_size(kv, "early_stop_patience", c.early_stop_patience);
  c.max_epochs = kv_size(kv, "max_epochs", c.max_epochs);
  return c;
}

double kl_to_uniform(std::span<const double> p_hat) {
  if (p_hat.empty()) throw std::invalid_argument("kl_to_uniform: empty distribution");
  double total = 0.0;
  for (double p : p_hat) {
    if (p < 0.0) throw std::invalid_argument("kl_to_uniform: negative probability " + num(p));
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("kl_to_uniform: probabilities sum to " + num(total));
  const double M = static_cast<double>(p_hat.size());
  double kl = 0.0;
  for (double p : p_hat)
    if (p > 0.0) kl += p * std::log(p * M);
  return kl;
}

Tensor kl_to_uniform(const Tensor& p_hat) {
  const double value = kl_to_uniform(p_hat.data());
  const double M = static_cast<double>(p_hat.numel());
  return detail::make_result({1}, {value}, {p_hat}, "kl_to_uniform", [M](detail::Node& self) {
    auto& pp = *self.parents[0];
    auto g = pp.grad_buffer();
    for (std::size_t j = 0; j < g.size(); ++j) {
      const double p = pp.data[j];
      if (p > 0.0) g[j] += self.grad[0] * (std::log(p * M) + 1.0);
    }
  });
}

double entropy_nats(std::span<const double> p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

Tensor total_loss(const Tensor& x, const Tensor& x_hat, const Tensor& usage, Distortion distortion,
                  double lambda) {
  auto d = distortion == Distortion::mse ? mse_loss(x, x_hat) : ssim_loss(x, x_hat, 1.0);
  if (lambda == 0.0) return d;
  if (!usage.defined()) throw std::invalid_argument("total_loss: lambda > 0 needs the constellation usage");
  return add(d, scale(kl_to_uniform(usage), lambda));
}

Adam::Adam(ParameterSet& params, double lr, double beta1, double beta2, double eps)
    : params_(params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& e : params_.entries()) {
    m_.emplace_back(e.second.numel(), 0.0);
    v_.emplace_back(e.second.numel(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto& entries = params_.entries();
  for (std::size_t k = 0; k < entries.size(); ++k) {
    auto& t = entries[k].second;
    auto values = t.mutable_data();
    auto grad = t.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad.empty() ? 0.0 : grad[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      values[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

PlateauSchedule::PlateauSchedule(double decay, std::size_t lr_patience, std::size_t stop_patience,
                                 double min_improvement)
    : decay_(decay),
      lr_patience_(lr_patience),
      stop_patience_(stop_patience),
      min_improvement_(min_improvement),
      best_(std::numeric_limits<double>::infinity()) {}

PlateauSchedule::Step PlateauSchedule::observe(double distortion) {
  Step s{false, false, false};
  if (distortion <= best_ - min_improvement_) {
    best_ = distortion;
    since_best_ = 0;
    since_decay_ = 0;
    s.improved = true;
    return s;
  }
  ++since_best_;
  if (++since_decay_ >= lr_patience_) {
    s.decay_lr = true;
    since_decay_ = 0;
  }
  s.stop = since_best_ >= stop_patience_;
  return s;
}

void TrainReport::write_csv(std::ostream& out) const {
  out << "epoch,loss,val_metric,kl,lr\n";
  out << std::setprecision(10);
  for (const auto& e : epochs) {
    out << e.epoch << ',' << e.loss << ',' << e.val_metric << ',' << e.kl << ',' << e.lr << '\n';
  }
}

std::string TrainReport::summary() const {
  std::ostringstream os;
  os << std::setprecision(6) << "epochs=" << epochs.size() << " best_epoch=" << best_epoch << " best_val_"
     << (distortion == Distortion::mse ? "mse" : "ssim") << '=' << best_val_metric;
  if (distortion == Distortion::mse) os << " best_val_psnr=" << psnr_from_mse(best_val_metric, 1.0);
  os << " early_stopped=" << (early_stopped ? "yes" : "no");
  return os.str();
}

TrainResult train(const ModelConfig& model_cfg, const TrainConfig& cfg, const ImageBatch& train_set,
                  const ImageBatch& val_set, std::uint64_t seed, const EpochCallback& on_epoch) {
  model_cfg.validate();
  cfg.validate();
  if (train_set.batch == 0) throw std::invalid_argument("train: empty training set");
  if (val_set.batch == 0) throw std::invalid_argument("train: empty validation set");

  const double lambda = model_cfg.mode == ChannelMode::quantized ? cfg.effective_lambda(model_cfg.constellation_size) : 0.0;
  const bool track_usage = lambda > 0.0 || usage_is_cheap(model_cfg);
  const auto constellation = model_cfg.mode == ChannelMode::quantized ? model_cfg.constellation() : make_qam(4, 1.0);
  const auto qcfg = model_cfg.quantizer();

  auto params = init_parameters(model_cfg, seed);
  Adam adam(params, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
  PlateauSchedule schedule(cfg.lr_decay, cfg.lr_patience, cfg.early_stop_patience, cfg.min_improvement);

  TrainResult result{params.clone(), {}};
  result.report.distortion = cfg.distortion;

  std::vector<std::size_t> order(train_set.batch);
  std::vector<std::size_t> val_order(val_set.batch);
  std::iota(val_order.begin(), val_order.end(), 0);

  auto draw_sigma2 = [&](Rng& rng) {
    if (cfg.fixed_sigma2 > 0.0) return cfg.fixed_sigma2;
    return snr_to_sigma2(rng.uniform(cfg.snr_min_db, cfg.snr_max_db), model_cfg.power);
  };

  // A blown-up encoder makes power normalization fail before any loss exists.
  auto require_finite = [](const Tensor& z, std::size_t epoch, std::size_t batch) {
    const auto d = z.data();
    const std::size_t per = d.size() / z.dim(0);
    bool ok = std::all_of(d.begin(), d.end(), [](double v) { return std::isfinite(v); });
    for (std::size_t b = 0; ok && b < z.dim(0); ++b) {
      const auto s = d.subspan(b * per, per);
      ok = std::any_of(s.begin(), s.end(), [](double v) { return v != 0.0; });
    }
    if (!ok) {
      throw TrainingDiverged("train: degenerate encoder output at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch));
    }
  };

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng epoch_rng(seed, epoch);
    epoch_rng.shuffle(std::span<std::size_t>(order));

    double loss_sum = 0.0, kl_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t first = 0; first < order.size(); first += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - first);
      auto x = gather_unit(train_set, std::span<const std::size_t>(order).subspan(first, count));
      const double sigma2 = draw_sigma2(epoch_rng);
      const double snr_db = sigma2_to_snr(sigma2, model_cfg.power);

      auto z = encode_unit(x, snr_db, params, model_cfg);
      require_finite(z, epoch, batches);
      Tensor usage;
      if (track_usage) {
        if (lambda > 0.0) {
          usage = constellation_usage(z, constellation, qcfg);
        } else {
          NoGradGuard ng;
          usage = constellation_usage(z, constellation, qcfg);
        }
      }
      auto y = awgn(channel_input(z, model_cfg), sigma2, epoch_rng);
      auto x_hat = decode(y, snr_db, params, model_cfg);
      auto loss = total_loss(x, x_hat, usage, cfg.distortion, lambda);
      if (!std::isfinite(loss.item())) {
        throw TrainingDiverged("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                               std::to_string(batches) + " (snr " + num(snr_db) + " dB, lr " + num(adam.lr()) + ")");
      }
      backward(loss);
      adam.step();
      params.zero_grad();
      loss_sum += loss.item();
      if (usage.defined()) kl_sum += kl_to_uniform(usage.data());
      ++batches;
    }

    // Validation: fixed SNR and noise draws so epochs are comparable.
    double val_sum = 0.0;
    {
      NoGradGuard ng;
      Rng val_rng(seed ^ kValidationStream, 0);
      for (std::size_t first = 0; first < val_order.size(); first += cfg.batch_size) {
        const std::size_t count = std::min(cfg.batch_size, val_order.size() - first);
        auto x = gather_unit(val_set, std::span<const std::size_t>(val_order).subspan(first, count));
        const double sigma2 = draw_sigma2(val_rng);
        const double snr_db = sigma2_to_snr(sigma2, model_cfg.power);
        auto z = encode_unit(x, snr_db, params, model_cfg);
        require_finite(z, epoch, 0);
        auto y = awgn(channel_input(z, model_cfg), sigma2, val_rng);
        auto x_hat = decode(y, snr_db, params, model_cfg);
        auto xi = from_unit_tensor(x, 1.0);
        auto yi = from_unit_tensor(x_hat, 1.0);
        const auto per = cfg.distortion == Distortion::mse ? mse(xi, yi) : ssim(xi, yi, 1.0);
        for (double v : per) val_sum += v;
      }
    }
    const double val_metric = val_sum / static_cast<double>(val_set.batch);
    const double val_distortion = cfg.distortion == Distortion::mse ? val_metric : 1.0 - val_metric;

    EpochRecord rec{epoch, loss_sum / static_cast<double>(batches), val_metric,
                    track_usage ? kl_sum / static_cast<double>(batches) : std::numeric_limits<double>::quiet_NaN(),
                    adam.lr()};
    result.report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    const auto step = schedule.observe(val_distortion);
    if (step.improved) {
      result.params = params.clone();
      result.report.best_epoch = epoch;
      result.report.best_val_metric = val_metric;
    }
    if (step.decay_lr) adam.set_lr(adam.lr() * cfg.lr_decay);
    if (step.stop) {
      result.report.early_stopped = true;
      break;
    }
  }
  return result;
}

std::vector<double> measure_usage(const ParameterSet& params, const ModelConfig& cfg, const ImageBatch& images,
                                  double snr_est_db, std::size_t batch_size) {
  NoGradGuard ng;
  const auto c = cfg.constellation();
  const auto q = cfg.quantizer();
  std::vector<double> p(c.size(), 0.0);
  for (std::size_t first = 0; first < images.batch; first += batch_size) {
    const std::size_t count = std::min(batch_size, images.batch - first);
    auto z = encode(images.slice(first, count), snr_est_db, params, cfg);
    auto u = constellation_usage(z, c, q);
    for (std::size_t j = 0; j < p.size(); ++j) p[j] += u[j] * static_cast<double>(count);
  }
  for (auto& v : p) v /= static_cast<double>(images.batch);
  return p;
}

}  // namespace jscq
