#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "jscq/constellation.hpp"
#include "jscq/metrics.hpp"
#include "jscq/param_io.hpp"
#include "jscq/tensor.hpp"

namespace jscq {

enum class ChannelMode { quantized, continuous };

const char* to_string(ChannelMode mode);
ChannelMode parse_channel_mode(const std::string& text);

/// Encoder/decoder geometry. Two stride-2 stages take H x W down to
/// H/4 x W/4; the encoder ends with `out_channels` maps whose first half are
/// real parts and second half imaginary parts of the k channel symbols.
struct ModelConfig {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 3;
  std::size_t mid_channels = 32;
  std::size_t out_channels = 40;
  std::size_t res_blocks = 1;  // per stage
  double sigma_q = 100.0;
  std::size_t constellation_size = 4;
  double power = 1.0;
  ChannelMode mode = ChannelMode::quantized;

  void validate() const;
  std::size_t latent_height() const { return height / 4; }
  std::size_t latent_width() const { return width / 4; }
  // Complex channel uses per image.
  std::size_t latent_symbols() const { return latent_height() * latent_width() * out_channels / 2; }
  // Channel symbols per source value: k / (H W C).
  double bandwidth_ratio() const;

  std::map<std::string, std::string> to_map() const;
  std::string to_text() const;
  // Unknown keys are ignored; missing keys keep their defaults.
  static ModelConfig from_map(const std::map<std::string, std::string>& kv);
  static ModelConfig from_text(const std::string& text);

  Constellation constellation() const { return make_qam(constellation_size, power); }
  QuantizerConfig quantizer() const { return QuantizerConfig{sigma_q}; }
};

/// Glorot-uniform weights, zero biases, PReLU slopes at 0.25.
ParameterSet init_parameters(const ModelConfig& cfg, std::uint64_t seed);

/// x in [0, peak] -> latent [B, k, 2]. `snr_est_db` conditions every AF gate.
Tensor encode(const ImageBatch& x, double snr_est_db, const ParameterSet& params, const ModelConfig& cfg);
// Same, from a [B, H, W, C] tensor already scaled to [0, 1].
Tensor encode_unit(const Tensor& x_unit, double snr_est_db, const ParameterSet& params,
                   const ModelConfig& cfg);

/// Channel output [B, k, 2] -> reconstruction [B, H, W, C] in [0, 1].
Tensor decode(const Tensor& y, double snr_est_db, const ParameterSet& params, const ModelConfig& cfg);
ImageBatch decode_images(const Tensor& y, double snr_est_db, const ParameterSet& params,
                         const ModelConfig& cfg, double peak);

/// Per-channel gate from pooled features and the SNR estimate:
/// pool -> concat(snr_db / 10) -> dense(Ch) -> ReLU -> dense(Ch) -> sigmoid.
/// Parameters live under `<prefix>.fc1.{w,b}` and `<prefix>.fc2.{w,b}`.
Tensor af_gate(const Tensor& features, double snr_est_db, const ParameterSet& params,
               const std::string& prefix);
void add_af_parameters(ParameterSet& params, const std::string& prefix, std::size_t ch, std::uint64_t seed);

/// Maps the channel input: hard quantization with the soft gradient, or power
/// normalization in continuous mode.
Tensor channel_input(const Tensor& z, const ModelConfig& cfg);

struct Checkpoint {
  ModelConfig config;
  ParameterSet params;
  std::map<std::string, std::string> metadata;  // config keys plus any extras saved with it
};

// `extra` keys (training settings, say) are stored next to the config.
void save_checkpoint(const std::string& path, const ModelConfig& cfg, const ParameterSet& params,
                     const std::map<std::string, std::string>& extra = {});
Checkpoint load_checkpoint(const std::string& path);

}  // namespace jscq
