#pragma once

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "locadv/attack.hpp"
#include "locadv/dataset.hpp"
#include "locadv/experiment.hpp"
#include "locadv/io.hpp"
#include "locadv/model.hpp"
#include "locadv/netpbm.hpp"
#include "locadv/train.hpp"

namespace locadv {

namespace cli_detail {

namespace fs = std::filesystem;

struct GlobalArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
};

inline Config load_config(const GlobalArgs& g) {
  Config cfg;
  if (!g.config_path.empty()) cfg = Config::from_file(g.config_path);
  if (g.seed) cfg.set("seed", std::to_string(*g.seed));
  if (!g.out.empty()) cfg.set("out", g.out);
  return cfg;
}

inline std::uint64_t seed_of(const Config& cfg) {
  return static_cast<std::uint64_t>(cfg.get_long("seed", 1));
}

inline std::string out_of(const Config& cfg) {
  const std::string out = cfg.get("out", "");
  require(!out.empty(), "no output directory (pass --out or set out= in the config)");
  fs::create_directories(out);
  return out;
}

/// Train/test data per config: explicit CIFAR-layout binaries when paths are
/// given, the synthetic generator otherwise.
inline std::pair<LabelledDataset, LabelledDataset> load_data(const Config& cfg) {
  const std::string train_bin = cfg.get("data.train_bin", "");
  const std::string test_bin = cfg.get("data.test_bin", "");
  const std::uint64_t seed = seed_of(cfg);
  LabelledDataset train, test;
  if (!train_bin.empty()) {
    train = load_cifar_binary(train_bin, "train");
  } else {
    train = generate_synthetic(
        static_cast<int>(cfg.get_long("data.synthetic_train", 2000)),
        mix_seed(seed, 101), "train");
  }
  if (!test_bin.empty()) {
    test = load_cifar_binary(test_bin, "test");
  } else {
    test = generate_synthetic(
        static_cast<int>(cfg.get_long("data.synthetic_test", 400)),
        mix_seed(seed, 202), "test");
  }
  return {std::move(train), std::move(test)};
}

inline TrainConfig train_config(const Config& cfg) {
  TrainConfig tc;
  tc.epochs = static_cast<int>(cfg.get_long("train.epochs", 10));
  tc.batch_size = static_cast<int>(cfg.get_long("train.batch", 16));
  tc.learning_rate = cfg.get_double("train.lr", 0.01);
  tc.momentum = cfg.get_double("train.momentum", 0.9);
  tc.threads = resolve_threads(static_cast<int>(cfg.get_long("threads", 0)));
  return tc;
}

inline ProtocolConfig protocol_config(const Config& cfg) {
  ProtocolConfig pc;
  pc.seed = seed_of(cfg);
  pc.n_per_pair = static_cast<int>(cfg.get_long("protocol.n_per_pair", 200));
  pc.wave = static_cast<int>(cfg.get_long("protocol.wave", 16));
  pc.alpha = cfg.get_double("attack.alpha", 0.004);
  pc.max_iterations = static_cast<int>(cfg.get_long("attack.iterations", 250));
  pc.stop_on_success = cfg.get_bool("attack.stop_on_success", true);
  pc.targeted_transfer = cfg.get_bool("targeted_transfer", false);
  pc.threads = resolve_threads(static_cast<int>(cfg.get_long("threads", 0)));
  return pc;
}

inline Model<float> train_one(ArchitectureId arch,
                              const LabelledDataset& train_data,
                              const LabelledDataset& test_data,
                              const Config& cfg, const std::string& out_dir) {
  TrainConfig tc = train_config(cfg);
  tc.seed = mix_seed(seed_of(cfg), 0x7261696Eull + static_cast<int>(arch));
  Model<float> model = build<float>(arch, mix_seed(seed_of(cfg), static_cast<int>(arch)));
  const TrainLog log = train(model, train_data, test_data, tc);
  if (!out_dir.empty()) {
    fs::create_directories(fs::path(out_dir) / "models");
    const std::string stem = to_string(arch);
    save(model, (fs::path(out_dir) / "models" / (stem + ".lpwt")).string());
    log.write_csv((fs::path(out_dir) / "models" / (stem + "_train_log.csv")).string());
  }
  std::cout << to_string(arch) << ": final test accuracy "
            << log.epochs.back().test_accuracy << "\n";
  return model;
}

inline int cmd_data_prepare(const Config& cfg) {
  const std::string out = out_of(cfg);
  auto [train_data, test_data] = load_data(cfg);
  save_cifar_binary(train_data, (fs::path(out) / "train.bin").string());
  save_cifar_binary(test_data, (fs::path(out) / "test.bin").string());
  std::cout << "wrote " << train_data.size() << " train and "
            << test_data.size() << " test records to " << out << "\n";
  return 0;
}

inline int cmd_train(const Config& cfg, const std::string& arch_name) {
  const std::string out = out_of(cfg);
  auto [train_data, test_data] = load_data(cfg);
  train_one(arch_from_string(arch_name), train_data, test_data, cfg, out);
  return 0;
}

inline int cmd_attack(const Config& cfg, const std::string& weights,
                      const std::string& data_bin, int index,
                      const std::string& family_name, double fraction) {
  const std::string out = out_of(cfg);
  const Model<float> model = load_model(weights);
  LabelledDataset data;
  if (!data_bin.empty()) {
    data = load_cifar_binary(data_bin, "test");
  } else {
    data = generate_synthetic(
        static_cast<int>(cfg.get_long("data.synthetic_test", 400)),
        mix_seed(seed_of(cfg), 202), "test");
  }
  require(index >= 0 && index < static_cast<int>(data.size()),
          "attack: image index " + std::to_string(index) + " out of range (" +
              std::to_string(data.size()) + " images)");
  const Tensor<float>& x = data.images[static_cast<std::size_t>(index)];

  AttackConfig acfg;
  acfg.alpha = cfg.get_double("attack.alpha", 0.004);
  acfg.max_iterations = static_cast<int>(cfg.get_long("attack.iterations", 250));
  acfg.stop_on_source_success = cfg.get_bool("attack.stop_on_success", true);
  acfg.strategy = RandomOtherClass{mix_seed(seed_of(cfg), static_cast<std::uint64_t>(index))};
  std::optional<LocalizationMask> mask;
  if (!family_name.empty()) {
    MaskSpec spec;
    spec.family = mask_family_from_string(family_name);
    spec.target_fraction = fraction;
    spec.seed = mix_seed(seed_of(cfg), 9000);
    spec.grid = x.dim(1);
    mask = make_mask(spec);
    acfg.mask = mask;
  }

  const AttackOutcome outcome = run_attack(model, x, acfg);
  std::cout << "target_class=" << outcome.target_class
            << " source_success=" << (outcome.source_success ? 1 : 0)
            << " iterations=" << outcome.iterations_used
            << " l0=" << fmt_double(outcome.norms.l0)
            << " l2=" << fmt_double(outcome.norms.l2)
            << " linf=" << fmt_double(outcome.norms.linf) << "\n";

  write_ppm(x, (fs::path(out) / "original.ppm").string());
  write_ppm(outcome.adversarial, (fs::path(out) / "adversarial.ppm").string());
  if (mask) write_pgm(*mask, (fs::path(out) / "mask.pgm").string());
  return 0;
}

inline int cmd_transfer(const Config& cfg) {
  const std::string out = out_of(cfg);
  auto [train_data, test_data] = load_data(cfg);

  std::vector<Model<float>> models;
  const std::string weights_dir = cfg.get("weights_dir", "");
  for (ArchitectureId arch :
       {ArchitectureId::PlainLargeKernel, ArchitectureId::StackedSmallKernel,
        ArchitectureId::ResidualNet}) {
    if (!weights_dir.empty()) {
      models.push_back(load_model(
          (fs::path(weights_dir) / (std::string(to_string(arch)) + ".lpwt")).string()));
    } else {
      models.push_back(train_one(arch, train_data, test_data, cfg, out));
    }
  }
  std::vector<NamedModel> named;
  for (const auto& m : models) named.push_back({to_string(m.arch), &m});
  std::vector<const Model<float>*> model_ptrs;
  for (const auto& m : models) model_ptrs.push_back(&m);

  const int eval_count = static_cast<int>(cfg.get_long("protocol.eval_count", 200));
  const std::vector<int> eval_ids =
      select_eval_indices(test_data, model_ptrs, eval_count, mix_seed(seed_of(cfg), 303));
  const EvalPool pool = EvalPool::from_dataset(test_data, eval_ids);

  const ProtocolConfig pcfg = protocol_config(cfg);
  const ProtocolResult result = run_protocol(named, pool, pcfg, out);
  for (const auto& s : result.source_summaries) std::cout << s << "\n";
  for (const auto& s : result.shortfalls) std::cout << "shortfall: " << s << "\n";
  std::cout << "wrote reports to " << out << "\n";
  return 0;
}

inline int cmd_report(const Config& cfg, const std::string& records_path) {
  const std::string out = out_of(cfg);
  const std::vector<TransferRecord> records = read_records_csv(records_path);
  emit_reports(aggregate(records), records, out);
  std::cout << "re-aggregated " << records.size() << " records into " << out << "\n";
  return 0;
}

}  // namespace cli_detail

/// Entry point behind the `locadv` binary; also callable from tests.
inline int run_cli(const std::vector<std::string>& args) {
  using namespace cli_detail;

  CLI::App app{"Localized adversarial perturbation toolkit"};
  app.require_subcommand(1);
  app.fallthrough(true);

  GlobalArgs g;
  app.add_option("--config", g.config_path, "key = value configuration file");
  std::uint64_t seed_arg = 0;
  auto* seed_opt = app.add_option("--seed", seed_arg, "master seed");
  app.add_option("--out", g.out, "output directory");

  auto* data_cmd = app.add_subcommand("data", "dataset utilities");
  data_cmd->require_subcommand(1);
  auto* prepare_cmd =
      data_cmd->add_subcommand("prepare", "write train/test binaries");

  auto* train_cmd = app.add_subcommand("train", "train one architecture");
  std::string arch_name = "plain";
  train_cmd->add_option("--arch", arch_name, "plain|stacked|residual")->required();

  auto* attack_cmd =
      app.add_subcommand("attack", "attack a single image and dump results");
  std::string weights, data_bin, family_name;
  int image_index = 0;
  double fraction = 0.17;
  attack_cmd->add_option("--weights", weights, "model weight file")->required();
  attack_cmd->add_option("--data", data_bin, "CIFAR-layout binary (default: synthetic test set)");
  attack_cmd->add_option("--index", image_index, "image index");
  attack_cmd->add_option("--family", family_name, "center|frame|random|full (default: no mask)");
  attack_cmd->add_option("--fraction", fraction, "mask pixel fraction");

  auto* transfer_cmd =
      app.add_subcommand("transfer", "run the full transfer protocol");

  auto* report_cmd =
      app.add_subcommand("report", "re-aggregate reports from records.csv");
  std::string records_path;
  report_cmd->add_option("--records", records_path, "records.csv path")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n" << app.help() << std::flush;
    return 2;
  }

  try {
    if (seed_opt->count() > 0) g.seed = seed_arg;
    const Config cfg = load_config(g);
    if (prepare_cmd->parsed()) return cmd_data_prepare(cfg);
    if (train_cmd->parsed()) return cmd_train(cfg, arch_name);
    if (attack_cmd->parsed())
      return cmd_attack(cfg, weights, data_bin, image_index, family_name, fraction);
    if (transfer_cmd->parsed()) return cmd_transfer(cfg);
    if (report_cmd->parsed()) return cmd_report(cfg, records_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace locadv
