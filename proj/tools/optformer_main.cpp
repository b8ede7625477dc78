// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>
#include <string>
#include <vector>

#include "optformer/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"optformer: optimizer-inspired transformer blocks, training harness, "
               "diagnostics, and the local-filter lab"};
  app.require_subcommand(1);

  optformer::CliOptions opt;
  std::string variants_csv;
  std::uint64_t seed_value = 0;
  bool seed_set = false;

  auto add_common = [&](CLI::App* cmd, bool config_required) {
    cmd->add_option("--config", opt.config_path, "run config file (JSON, comments allowed)")
        ->required(config_required);
    cmd->add_option("--out", opt.out_dir, "output directory (overrides config)");
    cmd->add_option_function<std::uint64_t>(
           "--seed", [&](std::uint64_t v) { seed_value = v; seed_set = true; },
           "global seed (overrides config)");
  };

  CLI::App* train = app.add_subcommand("train", "train one variant");
  add_common(train, true);

  CLI::App* compare = app.add_subcommand("compare", "matched-compute sweep over variants");
  add_common(compare, true);
  compare->add_option("--variants", variants_csv, "comma-separated variant list")->required();

  CLI::App* diagnose = app.add_subcommand("diagnose", "probe a trained checkpoint");
  diagnose->add_option("--checkpoint", opt.checkpoint, "checkpoint path prefix")->required();
  diagnose->add_option("--which", opt.which, "jacobian|sharpness|curve|ppl|forgetting")
      ->required();
  diagnose->add_option("--out", opt.out_dir, "output directory");
  diagnose->add_option("--target-corpus", opt.target_corpus, "target corpus (name or name:seed)");

  CLI::App* filterlab = app.add_subcommand("filterlab", "local quadratic filter theory sweep");
  add_common(filterlab, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : optformer::kExitUsage;
  }

  if (seed_set) opt.seed = seed_value;
  if (!variants_csv.empty()) {
    std::size_t pos = 0;
    while (pos != std::string::npos) {
      const std::size_t comma = variants_csv.find(',', pos);
      const std::string item = variants_csv.substr(
          pos, comma == std::string::npos ? std::string::npos : comma - pos);
      if (!item.empty()) opt.variants.push_back(item);
      pos = comma == std::string::npos ? std::string::npos : comma + 1;
    }
  }

  if (train->parsed()) return optformer::cmd_train(opt);
  if (compare->parsed()) return optformer::cmd_compare(opt);
  if (diagnose->parsed()) return optformer::cmd_diagnose(opt);
  if (filterlab->parsed()) return optformer::cmd_filterlab(opt);
  return optformer::kExitUsage;
}
