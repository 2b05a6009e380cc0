// jscq: train, evaluate and compare constellation-constrained JSCC models.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>

#include "jscq/baseline/ldpc.hpp"
#include "jscq/baseline/pipeline.hpp"
#include "jscq/constellation.hpp"
#include "jscq/harness/config.hpp"
#include "jscq/harness/dataset.hpp"
#include "jscq/harness/experiments.hpp"
#include "jscq/harness/gradcheck_suite.hpp"
#include "jscq/kv.hpp"
#include "jscq/training.hpp"

namespace {

using namespace jscq;

struct Command {
  CLI::App* app = nullptr;
  std::string config_path;
  std::map<std::string, std::string> flags;

  Config resolve() const {
    Config c = default_config();
    if (!config_path.empty()) c = merge_configs(c, load_config_file(config_path));
    for (const auto& [k, v] : flags)
      if (app->count("--" + k)) c[k] = v;
    return c;
  }
};

Command& add_command(CLI::App& root, std::vector<std::unique_ptr<Command>>& cmds, const std::string& name,
                     const std::string& help) {
  auto cmd = std::make_unique<Command>();
  cmd->app = root.add_subcommand(name, help);
  cmd->app->add_option("--config", cmd->config_path, "key=value config file; flags override it")
      ->check(CLI::ExistingFile);
  for (const auto& k : config_keys()) {
    auto help_text = k.help + (k.default_value.empty() ? "" : " [" + k.default_value + "]");
    cmd->app->add_option("--" + k.name, cmd->flags[k.name], help_text);
  }
  cmds.push_back(std::move(cmd));
  return *cmds.back();
}

// Writes to the `out` key's file, or stdout.
void emit(const Config& c, const std::string& text) {
  const auto it = c.find("out");
  if (it == c.end() || it->second.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(it->second, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + it->second + "'");
  f << text;
  std::cerr << "wrote " << it->second << '\n';
}

const std::string& required(const Config& c, const std::string& key) {
  const auto it = c.find(key);
  if (it == c.end() || it->second.empty()) throw std::invalid_argument("--" + key + " is required");
  return it->second;
}

DatasetSplit dataset_for(const Config& c) {
  auto split = load_dataset(dataset_spec(c), config_seed(c));
  std::cerr << "dataset: " << split.train.batch << " train / " << split.test.batch << " test images\n";
  return split;
}

int cmd_train(const Config& c) {
  const auto ckpt = required(c, "checkpoint");
  const auto mcfg = model_config(c);
  const auto tcfg = train_config(c);
  const auto split = dataset_for(c);
  std::cerr << "model: k=" << mcfg.latent_symbols() << " rho=" << mcfg.bandwidth_ratio()
            << " params=" << init_parameters(mcfg, 0).scalar_count() << '\n';
  auto result = train(mcfg, tcfg, split.train, split.test, config_seed(c), [](const EpochRecord& e) {
    std::cerr << "epoch " << e.epoch << " loss=" << e.loss << " val=" << e.val_metric << " kl=" << e.kl
              << " lr=" << e.lr << '\n';
  });
  std::map<std::string, std::string> extra = tcfg.to_map();
  const double lambda = mcfg.mode == ChannelMode::quantized ? tcfg.effective_lambda(mcfg.constellation_size) : 0.0;
  std::ostringstream ls;
  ls << std::setprecision(17) << lambda;
  extra["lambda"] = ls.str();
  extra["seed"] = std::to_string(config_seed(c));
  save_checkpoint(ckpt, mcfg, result.params, extra);
  if (const auto it = c.find("report"); it != c.end() && !it->second.empty()) {
    std::ofstream f(it->second);
    result.report.write_csv(f);
  }
  std::cout << result.report.summary() << '\n';
  return 0;
}

int cmd_eval(const Config& c, bool mismatched) {
  const auto model = ModelUnderTest::from_checkpoint(required(c, "checkpoint"));
  const auto split = dataset_for(c);
  const auto snrs = parse_double_list(required(c, "snrs"));
  const auto opts = eval_options(c);
  const auto records = mismatched ? sweep_mismatched(model, split.test, kv_double(c, "snr_est", 6.0), snrs, opts)
                                  : sweep_matched(model, split.test, snrs, opts);
  emit(c, records_to_csv(records));
  return 0;
}

int cmd_compare(const Config& c) {
  std::vector<ModelUnderTest> models;
  std::stringstream ss(required(c, "checkpoints"));
  for (std::string p; std::getline(ss, p, ',');)
    if (!p.empty()) models.push_back(ModelUnderTest::from_checkpoint(p));
  std::vector<const ModelUnderTest*> ptrs;
  for (const auto& m : models) ptrs.push_back(&m);
  const auto split = dataset_for(c);
  emit(c, records_to_csv(compare_continuous(ptrs, split.test, parse_double_list(required(c, "snrs")), eval_options(c))));
  return 0;
}

int cmd_baseline(const Config& c) {
  const auto rate = parse_code_rate(required(c, "rate"));
  const auto mcfg = model_config(c);
  std::size_t symbols = kv_size(c, "symbols", 0);
  if (symbols == 0) symbols = mcfg.latent_symbols();
  const auto ldpc_dir = c.count("ldpc_dir") ? c.at("ldpc_dir") : std::string{};
  SeparationPipeline pipe(load_standard_code(rate, ldpc_dir), make_qam(mcfg.constellation_size, mcfg.power), symbols,
                          kv_size(c, "max_iters", 50));
  std::cerr << "baseline: " << pipe.plan().blocks << " codewords, " << pipe.plan().info_bits << " payload bits, "
            << pipe.plan().symbols << " of " << symbols << " symbols\n";
  const auto split = dataset_for(c);
  const std::string id = std::string("ldpc") + to_string(rate) + "-qam" + std::to_string(mcfg.constellation_size);
  emit(c, records_to_csv(baseline_sweep(pipe, split.test, parse_double_list(required(c, "snrs")), eval_options(c), id,
                                        mcfg.power)));
  return 0;
}

int cmd_gradcheck(const Config& c) {
  const auto cases = run_gradcheck_suite(1e-4, config_seed(c));
  bool ok = true;
  std::ostringstream os;
  os << "op,max_rel_error,max_abs_error,entries,passed\n" << std::setprecision(4);
  for (const auto& g : cases) {
    os << g.name << ',' << g.result.max_rel_error << ',' << g.result.max_abs_error << ',' << g.result.entries_checked
       << ',' << (g.passed ? "yes" : "no") << '\n';
    ok = ok && g.passed;
  }
  emit(c, os.str());
  return ok ? 0 : 1;
}

int cmd_dump_constellation(const Config& c) {
  const auto mcfg = model_config(c);
  std::ostringstream os;
  write_constellation_csv(os, make_qam(mcfg.constellation_size, mcfg.power));
  emit(c, os.str());
  return 0;
}

int cmd_generate_ldpc(const std::string& dir) {
  for (auto rate : {CodeRate::r1_3, CodeRate::r1_2, CodeRate::r2_3}) {
    const auto path = std::filesystem::path(dir) / standard_code(rate).file;
    std::filesystem::create_directories(path.parent_path());
    const auto code = make_standard_code(rate);
    save_alist(path.string(), code);
    std::cerr << "wrote " << path.string() << " (n=" << code.length() << ", k=" << code.dimension() << ")\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constellation-constrained deep JSCC laboratory"};
  app.require_subcommand(1);
  std::vector<std::unique_ptr<Command>> cmds;
  auto& train_cmd = add_command(app, cmds, "train", "train a model and save a checkpoint");
  auto& matched = add_command(app, cmds, "eval-matched", "evaluate with SNR estimate equal to the true SNR");
  auto& mismatched = add_command(app, cmds, "eval-mismatched", "evaluate with a pinned SNR estimate");
  auto& compare = add_command(app, cmds, "eval-continuous-compare", "matched sweeps of several checkpoints");
  auto& baseline = add_command(app, cmds, "baseline-sweep", "codec + LDPC + QAM separation baseline sweep");
  auto& grad = add_command(app, cmds, "gradcheck", "finite-difference checks of every differentiable op");
  auto& dump = add_command(app, cmds, "dump-constellation", "print the M-QAM points as CSV");
  std::string ldpc_out;
  auto* gen = app.add_subcommand("generate-ldpc", "regenerate the shipped alist parity-check files");
  gen->add_option("--out-dir", ldpc_out, "data directory")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) return cmd_generate_ldpc(ldpc_out);
    if (*train_cmd.app) return cmd_train(train_cmd.resolve());
    if (*matched.app) return cmd_eval(matched.resolve(), false);
    if (*mismatched.app) return cmd_eval(mismatched.resolve(), true);
    if (*compare.app) return cmd_compare(compare.resolve());
    if (*baseline.app) return cmd_baseline(baseline.resolve());
    if (*grad.app) return cmd_gradcheck(grad.resolve());
    if (*dump.app) return cmd_dump_constellation(dump.resolve());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
