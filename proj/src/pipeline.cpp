#include "ldcq/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "ldcq/errors.hpp"

namespace ldcq::harness {

namespace {

std::string now_iso8601() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::ostringstream os;
  os << std::put_time(std::gmtime(&t), "%FT%TZ");
  return os.str();
}

void write_text(const fs::path& file, const std::string& text) {
  fs::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << text;
}

void require_artifact(const fs::path& p, const std::string& stage,
                      const std::string& upstream) {
  if (!fs::exists(p)) throw MissingArtifact(stage, upstream, p.string());
}

fs::path dataset_path(const ExperimentConfig& cfg) {
  return cfg.data_file.empty() ? RunPaths(cfg.out).dataset() : fs::path(cfg.data_file);
}

}  // namespace

MetricsSink::MetricsSink(const fs::path& csv, std::string run_id)
    : csv_(csv), run_id_(std::move(run_id)) {
  if (!fs::exists(csv_)) {
    fs::create_directories(csv_.parent_path());
    std::ofstream out(csv_);
    out << "run_id,stage,metric,step,value,timestamp\n";
  }
}

void MetricsSink::log(const std::string& stage, const std::string& metric, long step,
                      double value) {
  std::ofstream out(csv_, std::ios::app);
  out.precision(17);
  out << run_id_ << "," << stage << "," << metric << "," << step << "," << value << ","
      << now_iso8601() << "\n";
}

std::string run_id_of(const ExperimentConfig& cfg) {
  return cfg.env + "-h" + std::to_string(cfg.horizon) + "-s" + std::to_string(cfg.seed);
}

void run_gen_data(const ExperimentConfig& cfg) {
  RunPaths paths(cfg.out);
  cfg.save(paths.resolved_config());
  auto env = envs::make_env(cfg.env);
  const auto ds = data::collect_dataset(*env, cfg.data_episodes,
                                        Rng::derive(cfg.seed, "data"));
  data::save_dataset(dataset_path(cfg), ds);
  MetricsSink metrics(paths.metrics(), run_id_of(cfg));
  metrics.log("gen-data", "episodes", 0, static_cast<double>(ds.episodes.size()));
  metrics.log("gen-data", "transitions", 0,
              static_cast<double>(ds.transition_count()));
}

void run_train_vae(const ExperimentConfig& cfg) {
  RunPaths paths(cfg.out);
  require_artifact(dataset_path(cfg), "train-vae", "gen-data");
  const auto ds = data::load_dataset(dataset_path(cfg));
  MetricsSink metrics(paths.metrics(), run_id_of(cfg));
  auto res = vae::train_vae(ds, cfg.horizon, cfg.vae, Rng::derive(cfg.seed, "vae"),
                            [&](int epoch, double loss) {
                              metrics.log("train-vae", "loss", epoch, loss);
                            });
  if (res.diverged)
    throw nn::TrainingDivergence("train-vae diverged; last finite checkpoint kept");
  nn::save_checkpoint(paths.vae_ckpt(), res.model.to_checkpoint());
}

void run_train_prior(const ExperimentConfig& cfg, bool goal_conditioned) {
  RunPaths paths(cfg.out);
  require_artifact(dataset_path(cfg), "train-prior", "gen-data");
  require_artifact(paths.vae_ckpt(), "train-prior", "train-vae");
  const auto ds = data::load_dataset(dataset_path(cfg));
  const auto model = vae::VaeModel::from_checkpoint(nn::load_checkpoint(paths.vae_ckpt()));
  const auto snippets = data::slice_snippets(ds, cfg.horizon, 1);
  Rng rng(Rng::derive(cfg.seed, goal_conditioned ? "latents-goal" : "latents"));
  const auto latents = vae::make_latent_dataset(ds, snippets, model, goal_conditioned, rng);
  MetricsSink metrics(paths.metrics(), run_id_of(cfg));
  const std::string stage = goal_conditioned ? "train-prior-goal" : "train-prior";
  auto res = diffusion::train_prior(latents, cfg.denoiser_spec(), cfg.prior,
                                    goal_conditioned, Rng::derive(cfg.seed, "prior"),
                                    [&](int epoch, double loss) {
                                      metrics.log(stage, "loss", epoch, loss);
                                    });
  if (res.diverged)
    throw nn::TrainingDivergence("train-prior diverged; last finite checkpoint kept");
  nn::save_checkpoint(paths.prior_ckpt(goal_conditioned), res.model.to_checkpoint());
}

void run_train_q(const ExperimentConfig& cfg) {
  RunPaths paths(cfg.out);
  const bool gaussian = cfg.q_candidate_prior == "gaussian";
  require_artifact(dataset_path(cfg), "train-q", "gen-data");
  require_artifact(paths.vae_ckpt(), "train-q", "train-vae");
  if (!gaussian) require_artifact(paths.prior_ckpt(false), "train-q", "train-prior");

  const auto ds = data::load_dataset(dataset_path(cfg));
  const auto model = vae::VaeModel::from_checkpoint(nn::load_checkpoint(paths.vae_ckpt()));
  const auto q_cfg = cfg.q_config();
  Rng buffer_rng(Rng::derive(cfg.seed, "buffer"));
  auto buffer = qlearn::build_skill_buffer(ds, model, cfg.horizon, q_cfg.gamma,
                                           q_cfg.stride, buffer_rng);

  std::unique_ptr<qlearn::CandidateSampler> sampler;
  diffusion::PriorModel prior;
  if (gaussian) {
    sampler = std::make_unique<qlearn::GaussianPriorCandidateSampler>(model);
  } else {
    prior = diffusion::PriorModel::from_checkpoint(
        nn::load_checkpoint(paths.prior_ckpt(false)));
    sampler = std::make_unique<qlearn::DiffusionCandidateSampler>(prior, cfg.guidance);
  }

  MetricsSink metrics(paths.metrics(), run_id_of(cfg));
  const std::string stage = gaussian ? "train-q-bcq" : "train-q";
  auto res = qlearn::ldcq_train(buffer, *sampler, q_cfg, ds.env.state_dim,
                                model.cfg.latent_dim, Rng::derive(cfg.seed, "q"),
                                [&](long iter, double loss) {
                                  metrics.log(stage, "td_loss", iter, loss);
                                });
  if (res.diverged)
    throw nn::TrainingDivergence("train-q diverged; last finite checkpoint kept");
  auto ckpt = res.to_checkpoint();
  ckpt.meta["candidate_prior"] = cfg.q_candidate_prior;
  nn::save_checkpoint(paths.qnets_ckpt(gaussian), ckpt);
}

void run_train_wm(const ExperimentConfig& cfg) {
  RunPaths paths(cfg.out);
  require_artifact(dataset_path(cfg), "train-wm", "gen-data");
  require_artifact(paths.vae_ckpt(), "train-wm", "train-vae");
  const auto ds = data::load_dataset(dataset_path(cfg));
  const auto model = vae::VaeModel::from_checkpoint(nn::load_checkpoint(paths.vae_ckpt()));
  Rng buffer_rng(Rng::derive(cfg.seed, "buffer"));
  auto buffer = qlearn::build_skill_buffer(ds, model, cfg.horizon, cfg.q.gamma,
                                           cfg.q.stride, buffer_rng);
  MetricsSink metrics(paths.metrics(), run_id_of(cfg));
  auto res = plan::train_world_model(buffer, cfg.wm, Rng::derive(cfg.seed, "wm"),
                                     [&](int epoch, double loss) {
                                       metrics.log("train-wm", "loss", epoch, loss);
                                     });
  if (res.diverged)
    throw nn::TrainingDivergence("train-wm diverged; last finite checkpoint kept");
  metrics.log("train-wm", "validation_mse", cfg.wm.epochs, res.validation_mse);
  nn::save_checkpoint(paths.wm_ckpt(), res.model.to_checkpoint());
}

exec::EvalReport run_eval(const ExperimentConfig& cfg) {
  RunPaths paths(cfg.out);
  const std::string& mode = cfg.eval.mode;
  auto env = envs::make_env(cfg.env);
  exec::EvalReport report;

  if (mode == "behavior") {
    report = exec::rollout_behavior(*env, cfg.eval.episodes, cfg.eval_seed());
  } else {
    require_artifact(paths.vae_ckpt(), "eval", "train-vae");
    const auto model =
        vae::VaeModel::from_checkpoint(nn::load_checkpoint(paths.vae_ckpt()));
    exec::RolloutOptions opt;
    opt.horizon = cfg.horizon;
    opt.episodes = cfg.eval.episodes;
    opt.sample_actions = cfg.eval.sample_actions;
    opt.mode = mode;

    if (mode == "ldcq" || mode == "bcq") {
      const bool gaussian = mode == "bcq";
      require_artifact(paths.qnets_ckpt(gaussian), "eval", "train-q");
      const auto qnets = qlearn::QLearnResult::from_checkpoint(
          nn::load_checkpoint(paths.qnets_ckpt(gaussian)));
      std::unique_ptr<qlearn::CandidateSampler> sampler;
      diffusion::PriorModel prior;
      if (gaussian) {
        sampler = std::make_unique<qlearn::GaussianPriorCandidateSampler>(model);
      } else {
        require_artifact(paths.prior_ckpt(false), "eval", "train-prior");
        prior = diffusion::PriorModel::from_checkpoint(
            nn::load_checkpoint(paths.prior_ckpt(false)));
        sampler =
            std::make_unique<qlearn::DiffusionCandidateSampler>(prior, cfg.guidance);
      }
      exec::QSkillSelector selector(*sampler,
                                    qlearn::make_q_eval(qnets.spec, qnets.q1),
                                    qlearn::make_q_eval(qnets.spec, qnets.q2),
                                    cfg.eval.candidates, cfg.eval.use_min);
      report = exec::rollout(*env, model, selector, opt, cfg.eval_seed());
    } else if (mode == "ldgc") {
      require_artifact(paths.prior_ckpt(true), "eval", "train-prior");
      const auto prior = diffusion::PriorModel::from_checkpoint(
          nn::load_checkpoint(paths.prior_ckpt(true)));
      exec::GoalCondSelector selector(prior, cfg.guidance, 1);
      report = exec::rollout(*env, model, selector, opt, cfg.eval_seed());
    } else if (mode == "ldcp") {
      require_artifact(paths.prior_ckpt(false), "eval", "train-prior");
      require_artifact(paths.wm_ckpt(), "eval", "train-wm");
      const auto prior = diffusion::PriorModel::from_checkpoint(
          nn::load_checkpoint(paths.prior_ckpt(false)));
      const auto wm =
          plan::WorldModel::from_checkpoint(nn::load_checkpoint(paths.wm_ckpt()));
      qlearn::DiffusionCandidateSampler sampler(prior, cfg.guidance);
      plan::PlanSpec spec;
      spec.candidates = cfg.plan_candidates;
      spec.depth = cfg.plan_depth;
      spec.goal = env->goal();  // replaced per episode by the selector
      plan::PlannerSelector selector(wm, sampler, spec);
      report = exec::rollout(*env, model, selector, opt, cfg.eval_seed());
    } else {
      throw ConfigError("eval: unknown mode '" + mode + "'");
    }
  }

  fs::create_directories(paths.eval_report(mode).parent_path());
  write_text(paths.eval_report(mode), report.to_json().dump(2) + "\n");
  write_text(paths.eval_csv(mode), report.to_csv());
  MetricsSink metrics(paths.metrics(), run_id_of(cfg));
  metrics.log("eval-" + mode, "mean_return", 0, report.mean_return);
  metrics.log("eval-" + mode, "stderr_return", 0, report.stderr_return);
  metrics.log("eval-" + mode, "success_rate", 0, report.success_rate);
  return report;
}

void run_analyze(const ExperimentConfig& cfg) {
  RunPaths paths(cfg.out);
  require_artifact(dataset_path(cfg), "analyze", "gen-data");
  require_artifact(paths.vae_ckpt(), "analyze", "train-vae");
  const auto ds = data::load_dataset(dataset_path(cfg));
  const auto model = vae::VaeModel::from_checkpoint(nn::load_checkpoint(paths.vae_ckpt()));
  const auto snippets = data::slice_snippets(ds, cfg.horizon, 1);
  std::vector<const data::SkillSnippet*> full;
  for (const auto& sn : snippets)
    if (sn.full(cfg.horizon)) full.push_back(&sn);

  const auto heads = vae::encode_posterior_batch(model, full);
  MetricsSink metrics(paths.metrics(), run_id_of(cfg));
  fs::create_directories(paths.analysis_dir());

  // PCA of posterior means + k=3 clustering
  const int k_proj = std::min(2, model.cfg.latent_dim);
  const auto pca = analysis::pca_project(heads.mean, k_proj);
  {
    std::ostringstream os;
    os.precision(17);
    os << "x,y\n";
    for (int i = 0; i < pca.projections.cols(); ++i)
      os << pca.projections(0, i) << ","
         << (k_proj > 1 ? pca.projections(1, i) : 0.0) << "\n";
    write_text(paths.analysis_dir() / "pca.csv", os.str());
  }
  Rng cluster_rng(Rng::derive(cfg.seed, "analyze"));
  const auto km = analysis::kmeans(heads.mean, 3, cluster_rng);
  const double sil = analysis::silhouette(heads.mean, km.labels);
  metrics.log("analyze", "silhouette_k3", 0, sil);
  metrics.log("analyze", "pca_explained_0", 0, pca.explained(0));

  // coverage of the diffusion prior vs the Gaussian prior, when trained
  if (fs::exists(paths.prior_ckpt(false))) {
    const auto prior = diffusion::PriorModel::from_checkpoint(
        nn::load_checkpoint(paths.prior_ckpt(false)));
    const int N = static_cast<int>(full.size());
    nn::Mat conds(ds.env.state_dim, N);
    for (int i = 0; i < N; ++i) conds.col(i) = full[i]->states[0];
    Rng sample_rng(Rng::derive(cfg.seed, "analyze-samples"));
    const nn::Mat diff_samples =
        diffusion::ddpm_sample_batch(prior, conds, 1, cfg.guidance, sample_rng);
    const auto gauss_heads = vae::gaussian_prior_batch(model, conds);
    nn::Mat gauss_samples(model.cfg.latent_dim, N);
    for (int i = 0; i < N; ++i)
      gauss_samples.col(i) =
          gauss_heads.mean.col(i) +
          gauss_heads.std.col(i).cwiseProduct(sample_rng.normal_vector(model.cfg.latent_dim));

    Rng cov_rng(Rng::derive(cfg.seed, "analyze-coverage"));
    const auto diff_cov = analysis::mode_coverage(heads.mean, diff_samples, 3, cov_rng);
    Rng cov_rng2(Rng::derive(cfg.seed, "analyze-coverage"));
    const auto gauss_cov = analysis::mode_coverage(heads.mean, gauss_samples, 3, cov_rng2);
    std::ostringstream os;
    os.precision(17);
    os << "prior,in_support_fraction,d_star,mass_0,mass_1,mass_2\n";
    os << "diffusion," << diff_cov.in_support_fraction << "," << diff_cov.d_star;
    for (double m : diff_cov.cluster_mass) os << "," << m;
    os << "\ngaussian," << gauss_cov.in_support_fraction << "," << gauss_cov.d_star;
    for (double m : gauss_cov.cluster_mass) os << "," << m;
    os << "\n";
    write_text(paths.analysis_dir() / "coverage.csv", os.str());
    metrics.log("analyze", "in_support_diffusion", 0, diff_cov.in_support_fraction);
    metrics.log("analyze", "in_support_gaussian", 0, gauss_cov.in_support_fraction);
  }

  // outcome dump at the maze junction (world-model interpretability export)
  if (fs::exists(paths.wm_ckpt()) && cfg.env.rfind("gridmaze", 0) == 0 &&
      fs::exists(paths.prior_ckpt(false))) {
    const auto wm =
        plan::WorldModel::from_checkpoint(nn::load_checkpoint(paths.wm_ckpt()));
    const auto prior = diffusion::PriorModel::from_checkpoint(
        nn::load_checkpoint(paths.prior_ckpt(false)));
    qlearn::DiffusionCandidateSampler sampler(prior, cfg.guidance);
    envs::GridMaze maze("tmaze");
    Rng outcome_rng(Rng::derive(cfg.seed, "analyze-outcomes"));
    const auto outcomes =
        plan::predict_outcomes(wm, sampler, maze.junction(), 60, outcome_rng);
    std::ostringstream os;
    os.precision(17);
    os << "x,y\n";
    for (const auto& [z, s] : outcomes) os << s(0) << "," << s(1) << "\n";
    write_text(paths.analysis_dir() / "outcomes.csv", os.str());
  }
}

std::vector<StageOutcome> run_pipeline(const ExperimentConfig& cfg) {
  RunPaths paths(cfg.out);
  cfg.save(paths.resolved_config());
  std::vector<StageOutcome> outcomes;
  const std::string& mode = cfg.eval.mode;

  auto stage = [&](const std::string& name, const fs::path& artifact, auto&& fn) {
    StageOutcome o{name, false};
    if (!fs::exists(artifact)) {
      fn();
      o.ran = true;
    }
    outcomes.push_back(o);
  };

  if (mode == "behavior") {
    stage("eval", paths.eval_report(mode), [&] { run_eval(cfg); });
    return outcomes;
  }

  stage("gen-data", dataset_path(cfg), [&] { run_gen_data(cfg); });
  stage("train-vae", paths.vae_ckpt(), [&] { run_train_vae(cfg); });
  if (mode == "ldcq" || mode == "ldcp")
    stage("train-prior", paths.prior_ckpt(false), [&] { run_train_prior(cfg, false); });
  if (mode == "ldgc")
    stage("train-prior-goal", paths.prior_ckpt(true),
          [&] { run_train_prior(cfg, true); });
  if (mode == "ldcq" || mode == "bcq") {
    ExperimentConfig qcfg = cfg;
    qcfg.q_candidate_prior = mode == "bcq" ? "gaussian" : "diffusion";
    stage("train-q", paths.qnets_ckpt(mode == "bcq"), [&] { run_train_q(qcfg); });
  }
  if (mode == "ldcp")
    stage("train-wm", paths.wm_ckpt(), [&] { run_train_wm(cfg); });
  stage("eval", paths.eval_report(mode), [&] { run_eval(cfg); });
  return outcomes;
}

void horizon_sweep(const ExperimentConfig& base, const std::vector<int>& horizons,
                   const fs::path& out_csv) {
  if (horizons.empty()) throw ConfigError("horizon_sweep: empty horizon list");
  std::ostringstream os;
  os.precision(17);
  os << "method,H,mean_return,stderr_return,success_rate\n";
  for (int H : horizons) {
    for (const std::string method : {"ldcq", "bcq"}) {
      ExperimentConfig cfg = base;
      cfg.horizon = H;
      cfg.q.horizon = H;
      cfg.eval.mode = method;
      cfg.out = (fs::path(base.out) / ("sweep-h" + std::to_string(H))).string();
      try {
        run_pipeline(cfg);
      } catch (const std::exception& e) {
        throw std::runtime_error("horizon_sweep at H=" + std::to_string(H) + ": " +
                                 e.what());
      }
      std::ifstream in(RunPaths(cfg.out).eval_report(method));
      const auto j = nlohmann::json::parse(in);
      os << method << "," << H << "," << j.at("mean_return").get<double>() << ","
         << j.at("stderr_return").get<double>() << ","
         << j.at("success_rate").get<double>() << "\n";
    }
  }
  write_text(out_csv, os.str());
}

namespace {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

Table read_csv(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  Table t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (first) {
      t.header = cells;
      first = false;
    } else {
      t.rows.push_back(cells);
    }
  }
  return t;
}

}  // namespace

void export_plot(const fs::path& csv, const std::string& kind, const fs::path& out_svg) {
  if (kind != "scatter" && kind != "line")
    throw ConfigError("export_plot: unknown kind '" + kind + "'");
  const Table t = read_csv(csv);
  if (t.header.size() < 2) throw std::runtime_error("export_plot: need >= 2 columns");
  // numeric columns are the last two; an optional leading column labels series
  const std::size_t xi = t.header.size() >= 3 && kind == "line" ? 1 : 0;
  const std::size_t yi = xi + 1;
  const bool labeled = xi == 1;

  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  std::map<std::string, std::vector<std::pair<double, double>>> series;
  for (const auto& row : t.rows) {
    const double x = std::stod(row.at(xi));
    const double y = std::stod(row.at(yi));
    series[labeled ? row[0] : "data"].push_back({x, y});
    xmin = std::min(xmin, x); xmax = std::max(xmax, x);
    ymin = std::min(ymin, y); ymax = std::max(ymax, y);
  }
  if (xmax <= xmin) { xmax = xmin + 1; xmin -= 1; }
  if (ymax <= ymin) { ymax = ymin + 1; ymin -= 1; }
  const double W = 640, Hh = 480, pad = 50;
  auto sx = [&](double x) { return pad + (x - xmin) / (xmax - xmin) * (W - 2 * pad); };
  auto sy = [&](double y) { return Hh - pad - (y - ymin) / (ymax - ymin) * (Hh - 2 * pad); };

  std::ostringstream os;
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << Hh
     << "'>\n";
  os << "<rect width='100%' height='100%' fill='white'/>\n";
  os << "<line x1='" << pad << "' y1='" << Hh - pad << "' x2='" << W - pad << "' y2='"
     << Hh - pad << "' stroke='black'/>\n";
  os << "<line x1='" << pad << "' y1='" << pad << "' x2='" << pad << "' y2='"
     << Hh - pad << "' stroke='black'/>\n";
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  int ci = 0;
  for (auto& [label, pts] : series) {
    const char* color = colors[ci++ % 4];
    if (kind == "line") {
      std::sort(pts.begin(), pts.end());
      os << "<polyline fill='none' stroke='" << color << "' points='";
      for (const auto& [x, y] : pts) os << sx(x) << "," << sy(y) << " ";
      os << "'/>\n";
    }
    for (const auto& [x, y] : pts)
      os << "<circle cx='" << sx(x) << "' cy='" << sy(y) << "' r='3' fill='" << color
         << "'/>\n";
    os << "<text x='" << W - pad - 120 << "' y='" << pad + 16 * ci << "' fill='" << color
       << "'>" << label << "</text>\n";
  }
  os << "</svg>\n";
  write_text(out_svg, os.str());
}

}  // namespace ldcq::harness
