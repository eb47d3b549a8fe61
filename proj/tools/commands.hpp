#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "mocap/config.hpp"

namespace mocap::cli {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDivergence = 3;
inline constexpr int kExitEvalMismatch = 4;

struct Context {
  RunConfig config;
  std::string out_dir = "out";
  int threads = 1;
  bool deterministic = false;
  std::optional<uint64_t> seed_override;

  void apply_overrides();
};

int cmd_simulate(Context& ctx, int dump_maps);
int cmd_train_decoder(Context& ctx);
int cmd_run(Context& ctx, const std::string& model_path);
int cmd_eval(Context& ctx, const std::string& pred_path, const std::string& gt_path);
int cmd_net_report(Context& ctx);
int cmd_bench(Context& ctx, const std::string& model_path);

}  // namespace mocap::cli
