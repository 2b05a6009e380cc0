#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "jscq/gradcheck.hpp"
#include "jscq/harness/dataset.hpp"
#include "jscq/kv.hpp"
#include "jscq/model.hpp"
#include "jscq/param_io.hpp"
#include "test_util.hpp"

using namespace jscq;

namespace {

ModelConfig tiny(std::size_t M = 4, ChannelMode mode = ChannelMode::quantized) {
  ModelConfig c;
  c.height = c.width = 8;
  c.mid_channels = 4;
  c.out_channels = 4;
  c.constellation_size = M;
  c.mode = mode;
  return c;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("jscq_test_" + name)).string();
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("bandwidth ratio of the default geometry") {
  ModelConfig c;  // 32x32x3, C_out = 40
  CHECK(c.latent_symbols() == 1280);
  CHECK(std::abs(c.bandwidth_ratio() - 0.41667) < 1e-5);
}

TEST_CASE("config validation") {
  auto c = tiny();
  c.height = 10;
  CHECK_THROWS(c.validate());
  c = tiny();
  c.out_channels = 3;
  CHECK_THROWS(c.validate());
  c = tiny(8);
  CHECK_THROWS(c.validate());
  c = tiny(8, ChannelMode::continuous);  // M unused
  CHECK_NOTHROW(c.validate());
  CHECK_THROWS(parse_channel_mode("analog"));
}

TEST_CASE("config text round trip") {
  auto c = tiny(64);
  c.sigma_q = 12.5;
  c.power = 2.0;
  const auto back = ModelConfig::from_text(c.to_text());
  CHECK(back.to_map() == c.to_map());
}

TEST_CASE("encoder emits constellation points, decoder images in range") {
  for (std::size_t M : {4u, 16u}) {
    const auto cfg = tiny(M);
    const auto params = init_parameters(cfg, 3);
    const auto x = synthetic_images(3, 8, 8, 1);
    NoGradGuard ng;
    const auto z = encode(x, 5.0, params, cfg);
    REQUIRE(z.shape() == Shape{3, cfg.latent_symbols(), 2});
    const auto s = channel_input(z, cfg);
    const auto con = cfg.constellation();
    for (std::size_t i = 0; i < s.numel() / 2; ++i) {
      const Complex v{s[2 * i], s[2 * i + 1]};
      CHECK(std::abs(v - con.point(con.nearest_index(v))) < 1e-15);
    }
    const auto img = decode_images(s, 5.0, params, cfg, 255.0);
    CHECK(img.same_shape(x));
    CHECK_NOTHROW(img.validate());
  }
}

TEST_CASE("continuous mode meets the power constraint") {
  const auto cfg = tiny(4, ChannelMode::continuous);
  const auto params = init_parameters(cfg, 4);
  NoGradGuard ng;
  const auto s = channel_input(encode(synthetic_images(2, 8, 8, 2), 3.0, params, cfg), cfg);
  const std::size_t k = cfg.latent_symbols();
  for (std::size_t b = 0; b < 2; ++b) {
    double e = 0.0;
    for (std::size_t i = 0; i < 2 * k; ++i) e += s[b * 2 * k + i] * s[b * 2 * k + i];
    CHECK(e == doctest::Approx(double(k) * cfg.power).epsilon(1e-12));
  }
}

TEST_CASE("initialisation is deterministic in the seed") {
  const auto cfg = tiny();
  const auto a = init_parameters(cfg, 9), b = init_parameters(cfg, 9), c = init_parameters(cfg, 10);
  REQUIRE(a.size() == b.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.entries()[i].first == b.entries()[i].first);
    CHECK(testutil::max_abs_diff(a.entries()[i].second.data(), b.entries()[i].second.data()) == 0.0);
    differs = differs || testutil::max_abs_diff(a.entries()[i].second.data(), c.entries()[i].second.data()) > 0.0;
  }
  CHECK(differs);
}

TEST_CASE("SNR conditioning changes the code") {
  const auto cfg = tiny(4, ChannelMode::continuous);
  const auto params = init_parameters(cfg, 5);
  const auto x = synthetic_images(1, 8, 8, 3);
  NoGradGuard ng;
  const auto a = encode(x, 0.0, params, cfg), b = encode(x, 10.0, params, cfg);
  CHECK(testutil::max_abs_diff(a.data(), b.data()) > 0.0);
}

TEST_CASE("end-to-end gradient of a tiny model matches finite differences") {
  auto cfg = tiny(4, ChannelMode::continuous);
  cfg.height = cfg.width = 4;
  cfg.mid_channels = 2;
  auto params = init_parameters(cfg, 6);
  const auto x = synthetic_images(1, 4, 4, 4).to_unit_tensor();
  std::vector<Tensor> leaves;
  std::vector<std::string> names;
  for (auto& [n, t] : params.entries()) {
    names.push_back(n);
    leaves.push_back(t);
  }
  const auto r = gradcheck(
      [&](const std::vector<Tensor>& in) {
        ParameterSet p;
        for (std::size_t i = 0; i < in.size(); ++i) p.add(names[i], in[i]);
        auto z = channel_input(encode_unit(x, 4.0, p, cfg), cfg);
        return mse_loss(x, decode(z, 4.0, p, cfg));
      },
      leaves, GradCheckOptions{1e-6});  // one decoder pre-activation sits within 1e-5 of a ReLU kink
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("checkpoint round trip") {
  const auto cfg = tiny(16);
  const auto params = init_parameters(cfg, 7);
  const auto path = temp_path("ckpt.bin");
  save_checkpoint(path, cfg, params, {{"lambda", "0.05"}});
  const auto ck = load_checkpoint(path);
  CHECK(ck.config.to_map() == cfg.to_map());
  CHECK(ck.metadata.at("lambda") == "0.05");
  for (std::size_t i = 0; i < params.size(); ++i)
    CHECK(testutil::max_abs_diff(params.entries()[i].second.data(), ck.params.at(params.entries()[i].first).data()) ==
          0.0);
  std::remove(path.c_str());
}

TEST_CASE("parameter container rejects damage") {
  ParameterSet p;
  p.add("w", Tensor::from({2, 2}, {1, 2, 3, 4}));
  std::ostringstream os;
  write_parameters(os, p, "meta");
  const std::string good = os.str();
  {
    std::istringstream in(good);
    const auto back = read_parameters(in);
    CHECK(back.metadata == "meta");
    CHECK(back.params.at("w")[3] == 4.0);
  }
  // magic, version, truncation
  auto bad = good;
  bad[0] = 'X';
  std::istringstream in1(bad);
  CHECK_THROWS_AS(read_parameters(in1), FormatError);
  bad = good;
  bad[4] = 9;
  std::istringstream in2(bad);
  CHECK_THROWS_AS(read_parameters(in2), FormatError);
  for (std::size_t cut : {std::size_t{3}, std::size_t{10}, std::size_t{20}, good.size() - 1}) {
    std::istringstream in3(good.substr(0, cut));
    CHECK_THROWS_AS(read_parameters(in3), FormatError);
  }
  // little-endian layout of the leading fields
  CHECK(good.substr(0, 4) == "JSCQ");
  CHECK(static_cast<unsigned char>(good[4]) == 1);
  CHECK(good[5] == 0);
}

TEST_CASE("checkpoint with mismatched parameters is rejected") {
  const auto cfg = tiny();
  auto params = init_parameters(cfg, 1);
  auto other = tiny();
  other.mid_channels = 6;
  const auto path = temp_path("ckpt_bad.bin");
  save_checkpoint(path, other, params);
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  std::remove(path.c_str());
}

TEST_CASE("key=value parsing") {
  const auto kv = parse_key_values("# comment\n a = 1 \nb=two # trailing\n\n");
  CHECK(kv.size() == 2);
  CHECK(kv.at("a") == "1");
  CHECK(kv.at("b") == "two");
  CHECK_THROWS(parse_key_values("novalue\n"));
  CHECK(kv_double(kv, "a", 0) == 1.0);
  CHECK(kv_size(kv, "zz", 5) == 5);
  CHECK_THROWS(kv_size(kv, "b", 0));
}

}  // TEST_SUITE
