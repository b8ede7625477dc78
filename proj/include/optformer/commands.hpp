// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

namespace optformer {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;      // usage / config / contract errors
inline constexpr int kExitNumeric = 2;    // numeric failures
inline constexpr int kExitSizeGuard = 3;  // dense-diagnostic size guard

struct CliOptions {
  std::string config_path;
  std::string out_dir;                      // overrides config "out"
  std::optional<std::uint64_t> seed;        // overrides config "seed"
  std::vector<std::string> variants;        // cmd_compare
  std::string checkpoint;                   // cmd_diagnose: path prefix
  std::string target_corpus;                // cmd_diagnose: name or name:seed
  std::string which;                        // cmd_diagnose: jacobian|sharpness|curve|ppl|forgetting
};

// Each command returns an exit code and writes its artifacts (plus the
// resolved config that produced them) into the output directory.
int cmd_train(const CliOptions& opt);
int cmd_compare(const CliOptions& opt);
int cmd_diagnose(const CliOptions& opt);
int cmd_filterlab(const CliOptions& opt);

// Default output root: $OPTFORMER_OUT or "runs".
std::string default_out_root();

}  // namespace optformer
