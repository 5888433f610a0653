// Command-line front end: config-driven pretraining, deletion fine-tuning,
// method sweeps, checkpoint evaluation, and the numerical verification suite.

#include <CLI11.hpp>

#include "siss/cli.hpp"

namespace {

void add_common_flags(CLI::App* sub, siss::CliOptions& opt, bool with_checkpoint) {
  sub->add_option("--config", opt.config_path, "Run configuration file");
  if (with_checkpoint)
    sub->add_option("--checkpoint", opt.checkpoint_path, "Checkpoint to start from");
  sub->add_option("--out", opt.out_dir, "Output root (default $SISS_OUT_DIR or ./out)");
  sub->add_option("--seed", opt.seed_override, "Seed override");
  sub->add_option("--threads", opt.threads, "Worker threads for independent runs");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"siss: data unlearning for denoising diffusion models"};
  app.require_subcommand(1);

  siss::CliOptions opt;
  auto* pretrain = app.add_subcommand("pretrain", "Train a model from scratch");
  add_common_flags(pretrain, opt, false);
  auto* unlearn = app.add_subcommand("unlearn", "Deletion fine-tuning from a checkpoint");
  add_common_flags(unlearn, opt, true);
  auto* sweep = app.add_subcommand("sweep", "Run a method grid and collect Pareto data");
  add_common_flags(sweep, opt, true);
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_common_flags(eval, opt, true);
  auto* verify = app.add_subcommand("verify", "Run the numerical verification suite");
  add_common_flags(verify, opt, false);
  verify->add_option("--report", opt.report_path, "Report JSON path");
  verify->add_option("--trials", opt.verify_trials, "Trial count for the Monte Carlo checks");
  verify->add_flag("--inject-bad-coefficient", opt.inject_bad_coefficient,
                   "Self-test: corrupt the rewrite coefficient so the check must fail");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  if (pretrain->parsed()) return siss::cmd_pretrain(opt);
  if (unlearn->parsed()) return siss::cmd_unlearn(opt);
  if (sweep->parsed()) return siss::cmd_sweep(opt);
  if (eval->parsed()) return siss::cmd_eval(opt);
  if (verify->parsed()) return siss::cmd_verify(opt);
  return 2;
}
