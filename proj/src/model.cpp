#include "jscq/model.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "jscq/channel.hpp"
#include "jscq/kv.hpp"
#include "jscq/rng.hpp"

namespace jscq {

namespace {

constexpr double kSnrScale = 10.0;

Tensor glorot(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(numel_of(shape));
  for (auto& x : v) x = rng.uniform(-limit, limit);
  return Tensor::from(std::move(shape), std::move(v), true);
}

void add_conv(ParameterSet& p, const std::string& name, std::size_t cin, std::size_t cout,
              std::size_t k, Rng& rng) {
  p.add(name + ".w", glorot({cout, cin, k, k}, cin * k * k, cout * k * k, rng));
  p.add(name + ".b", Tensor::zeros({cout}, true));
}

void add_dense(ParameterSet& p, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  p.add(name + ".w", glorot({out, in}, in, out, rng));
  p.add(name + ".b", Tensor::zeros({out}, true));
}

void add_prelu(ParameterSet& p, const std::string& name, std::size_t ch) {
  p.add(name + ".slope", Tensor::full({ch}, 0.25, true));
}

void add_resblock(ParameterSet& p, const std::string& name, std::size_t ch, Rng& rng) {
  add_conv(p, name + ".conv_a", ch, ch, 3, rng);
  add_prelu(p, name + ".act", ch);
  add_conv(p, name + ".conv_b", ch, ch, 3, rng);
}

Tensor conv(const Tensor& x, const ParameterSet& p, const std::string& name, std::size_t stride) {
  return conv2d(x, p.at(name + ".w"), p.at(name + ".b"), stride, 1);
}

Tensor act(const Tensor& x, const ParameterSet& p, const std::string& name) {
  return prelu(x, p.at(name + ".slope"));
}

Tensor resblock(const Tensor& x, const ParameterSet& p, const std::string& name) {
  auto h = conv(x, p, name + ".conv_a", 1);
  h = act(h, p, name + ".act");
  h = conv(h, p, name + ".conv_b", 1);
  return add(x, h);
}

std::string stage(const char* side, std::size_t s) { return std::string(side) + std::to_string(s); }

}  // namespace

const char* to_string(ChannelMode mode) {
  return mode == ChannelMode::quantized ? "quantized" : "continuous";
}

ChannelMode parse_channel_mode(const std::string& text) {
  if (text == "quantized") return ChannelMode::quantized;
  if (text == "continuous") return ChannelMode::continuous;
  throw std::invalid_argument("unknown channel mode '" + text + "' (expected quantized or continuous)");
}

void ModelConfig::validate() const {
  if (height == 0 || width == 0 || channels == 0) throw std::invalid_argument("model: empty image dimensions");
  if (height % 4 != 0 || width % 4 != 0) {
    throw std::invalid_argument("model: height and width must be multiples of 4");
  }
  if (out_channels == 0 || out_channels % 2 != 0) {
    throw std::invalid_argument("model: out_channels must be a positive even number");
  }
  if (mid_channels == 0) throw std::invalid_argument("model: mid_channels must be positive");
  if (!(power > 0.0)) throw std::invalid_argument("model: power must be positive");
  QuantizerConfig{sigma_q}.validate();
  if (mode == ChannelMode::quantized) make_qam(constellation_size, power);
}

double ModelConfig::bandwidth_ratio() const {
  return static_cast<double>(latent_symbols()) / static_cast<double>(height * width * channels);
}

std::map<std::string, std::string> ModelConfig::to_map() const {
  auto num = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  return {{"height", std::to_string(height)},
          {"width", std::to_string(width)},
          {"channels", std::to_string(channels)},
          {"mid_channels", std::to_string(mid_channels)},
          {"out_channels", std::to_string(out_channels)},
          {"res_blocks", std::to_string(res_blocks)},
          {"sigma_q", num(sigma_q)},
          {"M", std::to_string(constellation_size)},
          {"power", num(power)},
          {"mode", to_string(mode)}};
}

std::string ModelConfig::to_text() const { return format_key_values(to_map()); }

ModelConfig ModelConfig::from_map(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  c.height = kv_size(kv, "height", c.height);
  c.width = kv_size(kv, "width", c.width);
  c.channels = kv_size(kv, "channels", c.channels);
  c.mid_channels = kv_size(kv, "mid_channels", c.mid_channels);
  c.out_channels = kv_size(kv, "out_channels", c.out_channels);
  c.res_blocks = kv_size(kv, "res_blocks", c.res_blocks);
  c.sigma_q = kv_double(kv, "sigma_q", c.sigma_q);
  c.constellation_size = kv_size(kv, "M", c.constellation_size);
  c.power = kv_double(kv, "power", c.power);
  if (auto it = kv.find("mode"); it != kv.end()) c.mode = parse_channel_mode(it->second);
  return c;
}

ModelConfig ModelConfig::from_text(const std::string& text) { return from_map(parse_key_values(text)); }

void add_af_parameters(ParameterSet& params, const std::string& prefix, std::size_t ch, std::uint64_t seed) {
  Rng rng(seed, 0xaf);
  add_dense(params, prefix + ".fc1", ch + 1, ch, rng);
  add_dense(params, prefix + ".fc2", ch, ch, rng);
}

ParameterSet init_parameters(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed, 1);
  ParameterSet p;
  const auto cm = cfg.mid_channels;
  for (std::size_t s = 1; s <= 2; ++s) {
    const auto name = "enc." + stage("stage", s);
    add_conv(p, name + ".down", s == 1 ? cfg.channels : cm, cm, 3, rng);
    add_prelu(p, name + ".act", cm);
    for (std::size_t r = 0; r < cfg.res_blocks; ++r) add_resblock(p, name + ".res" + std::to_string(r), cm, rng);
    add_af_parameters(p, name + ".af", cm, rng.next_u64());
  }
  add_conv(p, "enc.out", cm, cfg.out_channels, 3, rng);

  add_conv(p, "dec.in", cfg.out_channels, cm, 3, rng);
  add_prelu(p, "dec.in.act", cm);
  for (std::size_t r = 0; r < cfg.res_blocks; ++r) add_resblock(p, "dec.in.res" + std::to_string(r), cm, rng);
  add_af_parameters(p, "dec.in.af", cm, rng.next_u64());
  add_conv(p, "dec.up1", cm, 4 * cm, 3, rng);
  add_prelu(p, "dec.up1.act", cm);
  for (std::size_t r = 0; r < cfg.res_blocks; ++r) add_resblock(p, "dec.up1.res" + std::to_string(r), cm, rng);
  add_af_parameters(p, "dec.up1.af", cm, rng.next_u64());
  add_conv(p, "dec.up2", cm, 4 * cfg.channels, 3, rng);
  return p;
}

Tensor af_gate(const Tensor& features, double snr_est_db, const ParameterSet& params,
               const std::string& prefix) {
  if (features.rank() != 4) throw ShapeError("af_gate: expected [B,C,H,W], got " + shape_str(features.shape()));
  const auto batch = features.dim(0);
  auto pooled = global_avg_pool(features);
  auto snr = Tensor::full({batch, 1}, snr_est_db / kSnrScale);
  auto h = linear(concat_columns(pooled, snr), params.at(prefix + ".fc1.w"), params.at(prefix + ".fc1.b"));
  h = relu(h);
  auto gate = sigmoid(linear(h, params.at(prefix + ".fc2.w"), params.at(prefix + ".fc2.b")));
  return mul_channels(features, gate);
}

Tensor encode_unit(const Tensor& x_unit, double snr_est_db, const ParameterSet& params,
                   const ModelConfig& cfg) {
  if (x_unit.rank() != 4 || x_unit.dim(1) != cfg.height || x_unit.dim(2) != cfg.width ||
      x_unit.dim(3) != cfg.channels) {
    throw ShapeError("encode: input " + shape_str(x_unit.shape()) + " does not match configured " +
                     std::to_string(cfg.height) + "x" + std::to_string(cfg.width) + "x" +
                     std::to_string(cfg.channels) + " images");
  }
  const auto batch = x_unit.dim(0);
  auto h = permute(x_unit, {0, 3, 1, 2});
  for (std::size_t s = 1; s <= 2; ++s) {
    const auto name = "enc." + stage("stage", s);
    h = act(conv(h, params, name + ".down", 2), params, name + ".act");
    for (std::size_t r = 0; r < cfg.res_blocks; ++r) h = resblock(h, params, name + ".res" + std::to_string(r));
    h = af_gate(h, snr_est_db, params, name + ".af");
  }
  h = conv(h, params, "enc.out", 1);
  const auto k = cfg.latent_symbols();
  return permute(reshape(h, {batch, 2, k}), {0, 2, 1});
}

Tensor encode(const ImageBatch& x, double snr_est_db, const ParameterSet& params, const ModelConfig& cfg) {
  return encode_unit(x.to_unit_tensor(), snr_est_db, params, cfg);
}

Tensor decode(const Tensor& y, double snr_est_db, const ParameterSet& params, const ModelConfig& cfg) {
  const auto k = cfg.latent_symbols();
  if (y.rank() != 3 || y.dim(1) != k || y.dim(2) != 2) {
    throw ShapeError("decode: expected [B," + std::to_string(k) + ",2], got " + shape_str(y.shape()));
  }
  const auto batch = y.dim(0);
  auto h = reshape(permute(y, {0, 2, 1}), {batch, cfg.out_channels, cfg.latent_height(), cfg.latent_width()});
  h = act(conv(h, params, "dec.in", 1), params, "dec.in.act");
  for (std::size_t r = 0; r < cfg.res_blocks; ++r) h = resblock(h, params, "dec.in.res" + std::to_string(r));
  h = af_gate(h, snr_est_db, params, "dec.in.af");
  h = act(pixel_shuffle(conv(h, params, "dec.up1", 1), 2), params, "dec.up1.act");
  for (std::size_t r = 0; r < cfg.res_blocks; ++r) h = resblock(h, params, "dec.up1.res" + std::to_string(r));
  h = af_gate(h, snr_est_db, params, "dec.up1.af");
  h = sigmoid(pixel_shuffle(conv(h, params, "dec.up2", 1), 2));
  return permute(h, {0, 2, 3, 1});
}

ImageBatch decode_images(const Tensor& y, double snr_est_db, const ParameterSet& params,
                         const ModelConfig& cfg, double peak) {
  return from_unit_tensor(decode(y, snr_est_db, params, cfg), peak);
}

Tensor channel_input(const Tensor& z, const ModelConfig& cfg) {
  if (cfg.mode == ChannelMode::continuous) return normalize_power(z, cfg.power);
  return quantize_straight_through(z, cfg.constellation(), cfg.quantizer());
}

void save_checkpoint(const std::string& path, const ModelConfig& cfg, const ParameterSet& params,
                     const std::map<std::string, std::string>& extra) {
  auto kv = cfg.to_map();
  for (const auto& [k, v] : extra) kv.emplace(k, v);
  save_parameters(path, params, format_key_values(kv));
}

Checkpoint load_checkpoint(const std::string& path) {
  auto loaded = load_parameters(path);
  Checkpoint ck{ModelConfig::from_text(loaded.metadata), std::move(loaded.params),
                parse_key_values(loaded.metadata)};
  ck.config.validate();
  const auto expected = init_parameters(ck.config, 0);
  for (const auto& [name, t] : expected.entries()) {
    if (!ck.params.contains(name) || ck.params.at(name).shape() != t.shape()) {
      throw FormatError("checkpoint " + path + ": parameter " + name + " missing or misshaped");
    }
  }
  return ck;
}

}  // namespace jscq
