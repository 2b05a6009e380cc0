#include "jscq/harness/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "jscq/kv.hpp"

namespace jscq {

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      // model
      {"height", "32", "image height"},
      {"width", "32", "image width"},
      {"channels", "3", "colour channels"},
      {"mid_channels", "32", "feature maps inside encoder and decoder"},
      {"out_channels", "40", "encoder output maps (2k / (H/4 * W/4))"},
      {"res_blocks", "1", "residual blocks per stage"},
      {"sigma_q", "100", "soft quantizer sharpness"},
      {"M", "4", "constellation size (4, 16, 64, 256, 1024, 4096)"},
      {"power", "1", "average symbol power P"},
      {"mode", "quantized", "channel input: quantized or continuous"},
      // training
      {"distortion", "mse", "training distortion: mse or ssim"},
      {"lambda", "auto", "KL weight; auto = 0.05 below 64 points, else 0"},
      {"snr_min", "0", "lower end of the training SNR range (dB)"},
      {"snr_max", "10", "upper end of the training SNR range (dB)"},
      {"fixed_sigma2", "0", "pin the training noise power instead (0 = off)"},
      {"batch", "32", "training batch size"},
      {"lr", "1e-4", "Adam learning rate"},
      {"beta1", "0.9", "Adam beta1"},
      {"beta2", "0.999", "Adam beta2"},
      {"lr_decay", "0.8", "learning-rate factor on a plateau"},
      {"lr_patience", "4", "epochs without improvement before decaying"},
      {"early_stop_patience", "8", "epochs without improvement before stopping"},
      {"max_epochs", "100", "epoch limit"},
      // data
      {"dataset", "synthetic", "synthetic or cifar10"},
      {"data_path", "", "CIFAR-10 .bin file or directory"},
      {"subset", "6000", "keep only the first N images (0 = all); 6000 gives a 5000/1000 split"},
      {"ratio", "5", "train:test split ratio"},
      {"synthetic_count", "1200", "images generated for the synthetic dataset"},
      // evaluation and I/O
      {"seed", "0", "seed for every random stream"},
      {"threads", "1", "worker threads for evaluation cells"},
      {"trials", "10", "channel realisations per test image"},
      {"eval_batch", "64", "evaluation batch size"},
      {"snrs", "0:10:2", "SNR grid in dB (list or start:stop:step)"},
      {"snr_est", "6", "pinned SNR estimate for eval-mismatched (dB)"},
      {"checkpoint", "", "model checkpoint path"},
      {"checkpoints", "", "comma-separated checkpoints for eval-continuous-compare"},
      {"out", "", "output file (stdout when empty)"},
      {"report", "", "training report CSV path"},
      {"rate", "1/2", "LDPC code rate for baseline-sweep"},
      {"symbols", "0", "baseline symbol budget (0 = match the model geometry)"},
      {"ldpc_dir", "", "directory holding ldpc/*.alist (default: shipped data)"},
      {"max_iters", "50", "belief-propagation iteration limit"},
  };
  return keys;
}

bool is_config_key(const std::string& name) {
  for (const auto& k : config_keys())
    if (k.name == name) return true;
  return false;
}

Config default_config() {
  Config c;
  for (const auto& k : config_keys())
    if (!k.default_value.empty()) c[k.name] = k.default_value;
  return c;
}

Config parse_config_text(const std::string& text, const std::string& origin) {
  Config c;
  try {
    c = parse_key_values(text);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(origin + ": " + e.what());
  }
  for (const auto& [k, v] : c)
    if (!is_config_key(k)) throw std::invalid_argument(origin + ": unknown key '" + k + "'");
  return c;
}

Config load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

Config merge_configs(Config base, const Config& overrides) {
  for (const auto& [k, v] : overrides) base[k] = v;
  return base;
}

std::vector<double> parse_double_list(const std::string& text) {
  auto number = [&](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size()) throw std::invalid_argument("bad number '" + s + "' in list '" + text + "'");
    return v;
  };
  std::vector<double> out;
  if (text.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    if (parts.size() != 3) throw std::invalid_argument("range '" + text + "' must be start:stop:step");
    const double a = number(parts[0]), b = number(parts[1]), step = number(parts[2]);
    if (!(step > 0.0) || b < a) throw std::invalid_argument("range '" + text + "' is empty");
    const auto n = static_cast<std::size_t>(std::floor((b - a) / step + 1e-9));
    for (std::size_t i = 0; i <= n; ++i) out.push_back(a + static_cast<double>(i) * step);
    return out;
  }
  std::stringstream ss(text);
  for (std::string p; std::getline(ss, p, ',');)
    if (!p.empty()) out.push_back(number(p));
  if (out.empty()) throw std::invalid_argument("empty list");
  return out;
}

ModelConfig model_config(const Config& c) {
  auto m = ModelConfig::from_map(c);
  m.validate();
  return m;
}

TrainConfig train_config(const Config& c) {
  auto t = TrainConfig::from_map(c);
  t.validate();
  return t;
}

DatasetSpec dataset_spec(const Config& c) {
  DatasetSpec d;
  const auto src = c.count("dataset") ? c.at("dataset") : "synthetic";
  if (src == "cifar10") {
    d.source = DatasetSpec::Source::cifar10;
  } else if (src != "synthetic") {
    throw std::invalid_argument("dataset must be synthetic or cifar10, got '" + src + "'");
  }
  if (auto it = c.find("data_path"); it != c.end()) d.path = it->second;
  d.ratio = kv_size(c, "ratio", d.ratio);
  d.subset = kv_size(c, "subset", d.subset);
  d.synthetic_count = kv_size(c, "synthetic_count", d.synthetic_count);
  d.height = kv_size(c, "height", d.height);
  d.width = kv_size(c, "width", d.width);
  return d;
}

EvalOptions eval_options(const Config& c) {
  EvalOptions o;
  o.trials = kv_size(c, "trials", o.trials);
  o.seed = config_seed(c);
  o.threads = kv_size(c, "threads", o.threads);
  o.batch_size = kv_size(c, "eval_batch", o.batch_size);
  if (o.trials == 0 || o.batch_size == 0) throw std::invalid_argument("trials and eval_batch must be positive");
  return o;
}

std::uint64_t config_seed(const Config& c) { return kv_size(c, "seed", 0); }

}  // namespace jscq
