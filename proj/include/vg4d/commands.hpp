// SPDX-License-Identifier: Apache-2.0
//
// Subcommand implementations behind the CLI front end. Each takes a resolved
// RunConfig, performs one pipeline stage, writes its artifacts plus the
// resolved config into output_dir, and returns a process exit code.
#pragma once

#include <string>
#include <vector>

#include "vg4d/run_config.hpp"

namespace vg4d::cmd {

int synth_data(const RunConfig& cfg);
int synth_embed(const RunConfig& cfg);
int pretrain(const RunConfig& cfg);
int finetune(const RunConfig& cfg);
int evaluate(const RunConfig& cfg);
int ablate(const RunConfig& cfg, const std::vector<std::string>& toggles);
int gradcheck(const RunConfig& cfg, int num_seeds);
int oracle_check(const RunConfig& cfg, int instances);

}  // namespace vg4d::cmd
