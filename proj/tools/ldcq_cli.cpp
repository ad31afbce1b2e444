// Command-line front end. Links only the C API.

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ldcq/ldcq_c.h"

namespace {

struct ConfigGuard {
  ldcq_config* cfg = nullptr;
  ~ConfigGuard() { ldcq_config_free(cfg); }
};

int die(int code) {
  std::fprintf(stderr, "error: %s\n", ldcq_last_error());
  return code == LDCQ_OK ? 1 : -code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latent-skill diffusion offline RL toolkit"};
  app.require_subcommand(1);
  app.fallthrough(true);

  std::string config_file, out_dir, env_name, data_file, mode, q_prior;
  std::string vae_dir, prior_dir, artifacts;
  unsigned long long seed = 0, eval_seed = 0;
  int episodes = -1, horizon = -1, eval_episodes = -1;
  bool paper_scale = false;
  app.add_option("--config", config_file, "key = value config file")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "top-level seed");
  app.add_option("--out", out_dir, "run/artifact directory");
  app.add_option("--env", env_name, "environment name (rw1d|trimodal|gridmaze)");
  app.add_option("--horizon", horizon, "snippet horizon H");
  app.add_option("--episodes", episodes, "dataset episode count");
  app.add_option("--data", data_file, "dataset file (default <out>/dataset.jsonl)");
  app.add_option("--vae", vae_dir, "run dir holding vae/checkpoint.json");
  app.add_option("--prior", prior_dir, "run dir holding prior/checkpoint.json");
  app.add_option("--artifacts", artifacts, "run dir holding the trained stages");
  app.add_option("--mode", mode, "eval mode: ldcq|bcq|ldgc|ldcp|behavior");
  app.add_flag("--paper-scale", paper_scale, "use full paper-scale hyperparameters");

  auto* gen = app.add_subcommand("gen-data", "collect a behavior-policy dataset");
  auto* tvae = app.add_subcommand("train-vae", "stage 1: trajectory beta-VAE");

  auto* tprior = app.add_subcommand("train-prior", "stage 2: latent diffusion prior");
  bool goal_cond = false;
  tprior->add_flag("--goal", goal_cond, "condition on [state; goal]");

  auto* tq = app.add_subcommand("train-q", "stage 3: batch-constrained Q-learning");
  tq->add_option("--candidate-prior", q_prior, "diffusion|gaussian");

  auto* twm = app.add_subcommand("train-wm", "temporally abstract world model");

  auto* ev = app.add_subcommand("eval", "run the deployment loop");
  std::string report_file;
  ev->add_option("--eval-episodes", eval_episodes, "evaluation episodes");
  ev->add_option("--eval-seed", eval_seed, "evaluation seed");
  ev->add_option("--report", report_file, "copy the JSON report here");

  auto* an = app.add_subcommand("analyze", "latent-space analysis exports");

  auto* sw = app.add_subcommand("sweep", "full pipeline across horizons");
  std::string horizons = "1,5,20", sweep_csv;
  sw->add_option("--horizons", horizons, "comma-separated H list");
  sw->add_option("--out-csv", sweep_csv, "score table destination");

  auto* pl = app.add_subcommand("plot", "render a CSV as an SVG");
  std::string plot_csv, plot_kind = "line", plot_out;
  pl->add_option("--csv", plot_csv, "input data")->required();
  pl->add_option("--kind", plot_kind, "scatter|line");
  pl->add_option("--out-svg", plot_out, "output file")->required();

  auto* pipe = app.add_subcommand("pipeline", "run every stage for the config");

  CLI11_PARSE(app, argc, argv);

  if (app.got_subcommand(pl)) {
    const int rc = ldcq_plot(plot_csv.c_str(), plot_kind.c_str(), plot_out.c_str());
    return rc == LDCQ_OK ? 0 : die(rc);
  }

  ConfigGuard guard;
  if (!config_file.empty())
    guard.cfg = ldcq_config_load(config_file.c_str());
  else
    guard.cfg = ldcq_config_create(env_name.empty() ? "rw1d" : env_name.c_str());
  if (!guard.cfg) return die(LDCQ_ERR_CONFIG);
  ldcq_config* cfg = guard.cfg;

  int rc = LDCQ_OK;
  auto apply = [&](const std::string& key, const std::string& value) {
    if (rc == LDCQ_OK) rc = ldcq_config_set(cfg, key.c_str(), value.c_str());
  };
  if (!env_name.empty()) apply("env", env_name);
  if (seed != 0) apply("seed", std::to_string(seed));
  if (!out_dir.empty()) apply("out", out_dir);
  if (paper_scale) apply("paper_scale", "true");
  if (episodes > 0) apply("episodes", std::to_string(episodes));
  if (horizon > 0) apply("horizon", std::to_string(horizon));
  if (!data_file.empty()) apply("data.file", data_file);
  if (!q_prior.empty()) apply("q.prior", q_prior);
  if (!mode.empty()) apply("eval.mode", mode);
  if (eval_episodes > 0) apply("eval.episodes", std::to_string(eval_episodes));
  if (eval_seed != 0) apply("eval.seed", std::to_string(eval_seed));
  // --vae/--prior/--artifacts name the same run directory in this layout
  for (const std::string& dir : {vae_dir, prior_dir, artifacts})
    if (!dir.empty()) apply("out", dir);
  if (rc != LDCQ_OK) return die(rc);

  if (app.got_subcommand(gen)) rc = ldcq_gen_data(cfg);
  else if (app.got_subcommand(tvae)) rc = ldcq_train_vae(cfg);
  else if (app.got_subcommand(tprior)) rc = ldcq_train_prior(cfg, goal_cond ? 1 : 0);
  else if (app.got_subcommand(tq)) rc = ldcq_train_q(cfg);
  else if (app.got_subcommand(twm)) rc = ldcq_train_wm(cfg);
  else if (app.got_subcommand(an)) rc = ldcq_analyze(cfg);
  else if (app.got_subcommand(sw)) {
    if (sweep_csv.empty()) {
      char buf[512];
      if ((rc = ldcq_config_get(cfg, "out", buf, sizeof buf)) != LDCQ_OK) return die(rc);
      sweep_csv = std::string(buf) + "/sweep.csv";
    }
    rc = ldcq_sweep(cfg, horizons.c_str(), sweep_csv.c_str());
  } else if (app.got_subcommand(ev)) {
    double mean_return = 0.0;
    rc = ldcq_eval(cfg, &mean_return);
    if (rc == LDCQ_OK) {
      std::printf("mean_return %.6f\n", mean_return);
      if (!report_file.empty()) {
        char out_buf[512], mode_buf[64];
        if (ldcq_config_get(cfg, "out", out_buf, sizeof out_buf) == LDCQ_OK &&
            ldcq_config_get(cfg, "eval.mode", mode_buf, sizeof mode_buf) == LDCQ_OK) {
          const std::filesystem::path src = std::filesystem::path(out_buf) / "eval" /
                                            ("report-" + std::string(mode_buf) + ".json");
          const auto dst = std::filesystem::absolute(report_file);
          std::filesystem::create_directories(dst.parent_path());
          std::filesystem::copy_file(src, dst,
                                     std::filesystem::copy_options::overwrite_existing);
        }
      }
    }
  } else if (app.got_subcommand(pipe)) {
    rc = ldcq_run_pipeline(cfg);
  }

  if (rc != LDCQ_OK) return die(rc);
  return 0;
}
