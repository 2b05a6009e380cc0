#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "jscq/harness/config.hpp"
#include "jscq/harness/dataset.hpp"
#include "jscq/harness/experiments.hpp"
#include "jscq/harness/gradcheck_suite.hpp"

using namespace jscq;
namespace fs = std::filesystem;

namespace {

// Two records whose pixel value encodes (record, plane, offset).
std::vector<unsigned char> cifar_fixture() {
  std::vector<unsigned char> bytes;
  for (int r = 0; r < 2; ++r) {
    bytes.push_back(static_cast<unsigned char>(r + 3));  // label
    for (int p = 0; p < 3; ++p)
      for (int i = 0; i < 1024; ++i) bytes.push_back(static_cast<unsigned char>((r * 100 + p * 40 + i) % 256));
  }
  return bytes;
}

ModelUnderTest tiny_model(ChannelMode mode, std::size_t M, std::uint64_t seed) {
  ModelUnderTest m;
  m.id = mode == ChannelMode::continuous ? "cont" : "q" + std::to_string(M);
  m.config.height = m.config.width = 16;
  m.config.mid_channels = 6;
  m.config.out_channels = 8;
  m.config.constellation_size = M;
  m.config.mode = mode;
  m.params = init_parameters(m.config, seed);
  return m;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("CIFAR-10 records are read channel-planar into HWC") {
  const auto bytes = cifar_fixture();
  const auto x = parse_cifar10(bytes, "fixture");
  REQUIRE(x.batch == 2);
  CHECK(x.height == 32);
  CHECK(x.width == 32);
  CHECK(x.channels == 3);
  for (int r = 0; r < 2; ++r)
    for (int p = 0; p < 3; ++p)
      for (int i : {0, 31, 32, 500, 1023})
        CHECK(x.at(r, i / 32, i % 32, p) == double((r * 100 + p * 40 + i) % 256));
}

TEST_CASE("truncated CIFAR-10 data names the offset") {
  auto bytes = cifar_fixture();
  bytes.resize(bytes.size() - 10);
  try {
    parse_cifar10(bytes, "short.bin");
    FAIL("expected DatasetError");
  } catch (const DatasetError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("short.bin") != std::string::npos);
    CHECK(msg.find(std::to_string(kCifarRecordBytes)) != std::string::npos);
  }
  CHECK_THROWS_AS(load_cifar10("/nonexistent/data_batch_1.bin"), DatasetError);
}

TEST_CASE("CIFAR-10 directory loading") {
  const auto dir = fs::temp_directory_path() / "jscq_cifar_fixture";
  fs::create_directories(dir);
  const auto bytes = cifar_fixture();
  for (const char* name : {"data_batch_1.bin", "data_batch_2.bin"}) {
    std::ofstream f(dir / name, std::ios::binary);
    f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  }
  CHECK(load_cifar10_all(dir.string()).batch == 4);
  CHECK(load_cifar10_all((dir / "data_batch_1.bin").string()).batch == 2);
  fs::remove_all(dir);
}

TEST_CASE("5:1 split of 60000 images") {
  const auto s = split_indices(60000, 5, 7);
  CHECK(s.train.size() == 50000);
  CHECK(s.test.size() == 10000);
  std::set<std::size_t> all(s.train.begin(), s.train.end());
  for (auto i : s.test) CHECK_FALSE(all.count(i));
  all.insert(s.test.begin(), s.test.end());
  CHECK(all.size() == 60000);
  CHECK(std::is_sorted(s.train.begin(), s.train.end()));
  const auto again = split_indices(60000, 5, 7);
  CHECK(again.test == s.test);
  CHECK(split_indices(60000, 5, 8).test != s.test);
  CHECK(split_indices(1200, 5, 0).test.size() == 200);
}

TEST_CASE("synthetic images are deterministic and in range") {
  const auto a = synthetic_images(10, 32, 32, 4);
  const auto b = synthetic_images(10, 32, 32, 4);
  CHECK(a.data == b.data);
  CHECK(synthetic_images(10, 32, 32, 5).data != a.data);
  CHECK_NOTHROW(a.validate());
  for (double v : a.data) CHECK(v == std::round(v));
  DatasetSpec spec;
  spec.synthetic_count = 60;
  const auto split = load_dataset(spec, 1);
  CHECK(split.train.batch == 50);
  CHECK(split.test.batch == 10);
}

TEST_CASE("config text, layering and lists") {
  const auto c = parse_config_text("# comment\nM = 16\n\nsnrs=0:4:2\nlambda=0.05\n");
  CHECK(c.at("M") == "16");
  CHECK_THROWS(parse_config_text("bogus=1\n"));
  CHECK_THROWS(parse_config_text("no equals sign\n"));
  const auto merged = merge_configs(merge_configs(default_config(), c), Config{{"M", "64"}});
  CHECK(model_config(merged).constellation_size == 64);
  CHECK(train_config(merged).lambda.value() == doctest::Approx(0.05));
  CHECK_FALSE(train_config(default_config()).lambda.has_value());
  CHECK(parse_double_list("0:4:2") == std::vector<double>{0, 2, 4});
  CHECK(parse_double_list("1,2.5,-3") == std::vector<double>{1, 2.5, -3});
  CHECK(parse_double_list("0:1:0.1").size() == 11);
  CHECK_THROWS(parse_double_list("0:1:0"));
  CHECK_THROWS(parse_double_list("a,b"));
  for (const auto& k : config_keys()) CHECK(is_config_key(k.name));
  CHECK(config_seed(merge_configs(default_config(), Config{{"seed", "42"}})) == 42);
}

TEST_CASE("sweeps emit one psnr and one ssim row per SNR") {
  const auto test = synthetic_images(6, 16, 16, 2);
  const auto m = tiny_model(ChannelMode::quantized, 16, 3);
  EvalOptions opts;
  opts.trials = 2;
  opts.seed = 11;
  const std::vector<double> snrs{0, 5, 10};
  const auto rec = sweep_matched(m, test, snrs, opts);
  REQUIRE(rec.size() == 6);
  for (std::size_t i = 0; i < snrs.size(); ++i) {
    CHECK(rec[2 * i].metric == "psnr");
    CHECK(rec[2 * i + 1].metric == "ssim");
    CHECK(rec[2 * i].snr_db == snrs[i]);
    CHECK(rec[2 * i].snr_est_db == snrs[i]);
    CHECK(rec[2 * i].M == 16);
    CHECK(std::isfinite(rec[2 * i].mean));
    CHECK(rec[2 * i].std >= 0.0);
  }
  // matched and mismatched agree wherever the estimate is correct
  const auto mis = sweep_mismatched(m, test, 5.0, snrs, opts);
  CHECK(mis[2].mean == rec[2].mean);
  CHECK(mis[3].mean == rec[3].mean);
  CHECK(mis[0].snr_est_db == 5.0);
}

TEST_CASE("CSV output is byte-identical across runs and thread counts") {
  const auto test = synthetic_images(5, 16, 16, 2);
  const auto m = tiny_model(ChannelMode::quantized, 4, 3);
  EvalOptions opts;
  opts.trials = 3;
  opts.seed = 5;
  opts.batch_size = 2;
  const auto a = records_to_csv(sweep_matched(m, test, {1, 7}, opts));
  opts.threads = 3;
  const auto b = records_to_csv(sweep_matched(m, test, {1, 7}, opts));
  CHECK(a == b);
  CHECK(a.rfind(std::string(kRecordHeader) + "\n", 0) == 0);
  opts.seed = 6;
  CHECK(records_to_csv(sweep_matched(m, test, {1, 7}, opts)) != a);
}

TEST_CASE("continuous models report M=0 and a finite high-SNR ceiling") {
  const auto test = synthetic_images(4, 16, 16, 2);
  const auto cont = tiny_model(ChannelMode::continuous, 4, 3);
  const auto quant = tiny_model(ChannelMode::quantized, 4, 3);
  CHECK(cont.M() == 0);
  CHECK(quant.M() == 4);
  EvalOptions opts;
  opts.trials = 1;
  const auto rec = compare_continuous({&cont, &quant}, test, {40.0}, opts);
  REQUIRE(rec.size() == 4);
  CHECK(rec[0].model_id == "cont");
  CHECK(rec[2].model_id == "q4");
  CHECK(std::isfinite(rec[0].mean));
}

TEST_CASE("mean and population std") {
  CHECK(mean_of({1, 2, 3, 4}) == doctest::Approx(2.5));
  CHECK(std_of({1, 2, 3, 4}) == doctest::Approx(std::sqrt(1.25)));
  CHECK(std_of({7}) == 0.0);
}

TEST_CASE("waterfall interpolation") {
  std::vector<BlerPoint> pts{{0, 1.0, 10}, {1, 0.5, 10}, {2, 0.0, 10}};
  CHECK(waterfall_snr(pts, 0.1) == doctest::Approx(1.8));
  CHECK(std::isnan(waterfall_snr({{0, 1.0, 10}}, 0.1)));
}

TEST_CASE("parallel_for visits every index once") {
  std::vector<int> hits(100, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { ++hits[i]; });
  CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
}

TEST_CASE("gradient check suite passes") {
  for (const auto& c : run_gradcheck_suite(1e-4, 1)) {
    INFO(c.name);
    CHECK(c.passed);
  }
}

TEST_CASE("checkpoint lambda travels into the harness") {
  auto m = tiny_model(ChannelMode::quantized, 16, 3);
  const auto path = (fs::temp_directory_path() / "jscq_harness_q16.ckpt").string();
  save_checkpoint(path, m.config, m.params, {{"lambda", "0.05"}});
  const auto back = ModelUnderTest::from_checkpoint(path);
  CHECK(back.id == "jscq_harness_q16");
  CHECK(back.lambda == doctest::Approx(0.05));
  CHECK(back.M() == 16);
  fs::remove(path);
}

}  // TEST_SUITE
