// Command-line front end; links only the C API.

#include <cstdint>
#include <cstdio>
#include <string>

#include "hkd/hkd.h"

#include "CLI11.hpp"

namespace {

struct CommonOpts {
  std::string config;
  std::string output;
  uint64_t seed = 0;
  bool seed_set = false;
  int jobs = 0;
  bool resume = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config, "experiment config file (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--output", opts.output, "output directory (overrides config)");
  cmd->add_option("--seed", opts.seed, "master seed (overrides config)")
      ->each([&](const std::string&) { opts.seed_set = true; });
  cmd->add_option("--jobs", opts.jobs, "worker thread cap")->check(CLI::PositiveNumber);
  cmd->add_flag("--resume", opts.resume, "reuse finished artifacts instead of retraining");
}

int run_stage(const CommonOpts& opts, const char* stage) {
  hkd_experiment* exp = nullptr;
  if (hkd_experiment_open(opts.config.c_str(), &exp) != HKD_OK) {
    std::fprintf(stderr, "%s\n", hkd_last_error());
    return 1;
  }
  auto fail = [&](hkd_status st) {
    std::fprintf(stderr, "%s\n", hkd_experiment_error(exp));
    hkd_experiment_close(exp);
    return st == HKD_ERROR_VALIDATION ? 1 : 2;
  };
  hkd_status st;
  if (!opts.output.empty() && (st = hkd_experiment_set_output_dir(exp, opts.output.c_str())) != HKD_OK)
    return fail(st);
  if (opts.seed_set && (st = hkd_experiment_set_seed(exp, opts.seed)) != HKD_OK) return fail(st);
  if (opts.jobs > 0 && (st = hkd_experiment_set_jobs(exp, opts.jobs)) != HKD_OK) return fail(st);
  if ((st = hkd_experiment_set_resume(exp, opts.resume ? 1 : 0)) != HKD_OK) return fail(st);
  if ((st = hkd_experiment_run_stage(exp, stage)) != HKD_OK) return fail(st);
  hkd_experiment_close(exp);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical knowledge distillation lab for multilingual translation"};
  app.set_version_flag("--version", std::string(hkd_version()));
  app.require_subcommand(1);

  static const struct {
    const char* name;
    const char* help;
  } stages[] = {
      {"gen-data", "generate the synthetic multilingual corpus"},
      {"cluster", "build language representations and cluster them"},
      {"train-teachers", "train one bilingual teacher per language"},
      {"train-tas", "distill cluster-wise teacher-assistants (selective KD)"},
      {"train-student", "distill the multilingual student (adaptive KD)"},
      {"pipeline", "run every stage in order"},
      {"evaluate", "score all systems on the test split"},
      {"report", "render report.md from the evaluation results"},
  };

  CommonOpts opts[std::size(stages)];
  CLI::App* cmds[std::size(stages)];
  for (size_t i = 0; i < std::size(stages); ++i) {
    cmds[i] = app.add_subcommand(stages[i].name, stages[i].help);
    add_common(cmds[i], opts[i]);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help / --version
      app.exit(e);
      return 0;
    }
    std::fprintf(stderr, "%s\n", e.what());
    std::fprintf(stderr, "%s", app.help().c_str());
    return 1;
  }

  for (size_t i = 0; i < std::size(stages); ++i)
    if (cmds[i]->parsed()) return run_stage(opts[i], stages[i].name);
  return 1;
}
