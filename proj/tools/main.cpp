#include <CLI11.hpp>

#include <iostream>

#include "commands.hpp"
#include "mocap/config.hpp"

using mocap::cli::Context;

int main(int argc, char** argv) {
  CLI::App app{"mocap3d: multi-person 3D motion capture pipeline on synthetic scenes"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  std::string config_path;
  Context ctx;
  uint64_t seed_flag = 0;
  bool seed_set = false;
  app.add_option("--config", config_path, "run configuration JSON");
  app.add_option("--seed", seed_flag, "override the scene/noise/training seeds")
      ->each([&](const std::string&) { seed_set = true; });
  app.add_option("--out", ctx.out_dir, "output directory");
  app.add_option("--threads", ctx.threads, "worker threads for data generation and training");
  app.add_flag("--deterministic", ctx.deterministic,
               "assert bit-stable mode (outputs are deterministic by construction; this flag "
               "documents the contract)");

  int dump_maps = 0;
  auto* sim = app.add_subcommand("simulate", "generate a scene and export ground truth");
  sim->add_option("--dump-maps", dump_maps, "export rendered maps for the first N frames");

  app.add_subcommand("train-decoder", "build a synthetic dataset and train the pose decoder");

  std::string model_path;
  auto* run = app.add_subcommand("run", "run the full pipeline on a configured scene");
  run->add_option("--model", model_path, "trained decoder weights")->required();

  std::string pred_path, gt_path;
  auto* eval = app.add_subcommand("eval", "score predictions against scene ground truth");
  eval->add_option("--pred", pred_path, "pred.jsonl from `run`")->required();
  eval->add_option("--gt", gt_path, "scene.jsonl from `simulate`")->required();

  app.add_subcommand("net-report", "analytic network accounting tables");

  std::string bench_model;
  auto* bench = app.add_subcommand("bench", "per-stage timings over a persons sweep");
  bench->add_option("--model", bench_model, "decoder weights (random weights if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : mocap::cli::kExitConfig;
  }

  try {
    if (!config_path.empty()) {
      ctx.config = mocap::load_config(config_path);
    }
    if (seed_set) ctx.seed_override = seed_flag;
    ctx.apply_overrides();

    if (sim->parsed()) return cmd_simulate(ctx, dump_maps);
    if (app.got_subcommand("train-decoder")) return cmd_train_decoder(ctx);
    if (run->parsed()) return cmd_run(ctx, model_path);
    if (eval->parsed()) return cmd_eval(ctx, pred_path, gt_path);
    if (app.got_subcommand("net-report")) return cmd_net_report(ctx);
    if (bench->parsed()) return cmd_bench(ctx, bench_model);
  } catch (const mocap::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return mocap::cli::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
