#pragma once

#include "ldcq/analysis.hpp"
#include "ldcq/config.hpp"

namespace ldcq::harness {

namespace fs = std::filesystem;

// Artifact layout inside a run directory.
struct RunPaths {
  fs::path root;
  explicit RunPaths(const fs::path& r) : root(r) {}
  fs::path dataset() const { return root / "dataset.jsonl"; }
  fs::path vae_ckpt() const { return root / "vae" / "checkpoint.json"; }
  fs::path prior_ckpt(bool goal) const {
    return root / (goal ? "prior-goal" : "prior") / "checkpoint.json";
  }
  fs::path qnets_ckpt(bool gaussian) const {
    return root / (gaussian ? "qnets-bcq" : "qnets") / "checkpoint.json";
  }
  fs::path wm_ckpt() const { return root / "wm" / "checkpoint.json"; }
  fs::path eval_report(const std::string& mode) const {
    return root / "eval" / ("report-" + mode + ".json");
  }
  fs::path eval_csv(const std::string& mode) const {
    return root / "eval" / ("report-" + mode + ".csv");
  }
  fs::path metrics() const { return root / "metrics.csv"; }
  fs::path resolved_config() const { return root / "config.resolved.txt"; }
  fs::path analysis_dir() const { return root / "analysis"; }
};

// Append-only CSV metrics: run_id,stage,metric,step,value,timestamp. Only
// the timestamp column is non-deterministic.
class MetricsSink {
 public:
  MetricsSink(const fs::path& csv, std::string run_id);
  void log(const std::string& stage, const std::string& metric, long step,
           double value);

 private:
  fs::path csv_;
  std::string run_id_;
};

std::string run_id_of(const ExperimentConfig& cfg);

// Individual stages; each checks its upstream artifacts and throws
// MissingArtifact naming the stage that must run first.
void run_gen_data(const ExperimentConfig& cfg);
void run_train_vae(const ExperimentConfig& cfg);
void run_train_prior(const ExperimentConfig& cfg, bool goal_conditioned);
void run_train_q(const ExperimentConfig& cfg);
void run_train_wm(const ExperimentConfig& cfg);
exec::EvalReport run_eval(const ExperimentConfig& cfg);
void run_analyze(const ExperimentConfig& cfg);

struct StageOutcome {
  std::string stage;
  bool ran = false;  // false: artifact already present, stage skipped
};

// gen-data -> train-vae -> train-prior -> [train-q | train-wm] -> eval, with
// existing artifacts skipped (stages are resumable by deleting their
// checkpoint). The stage list depends on the eval mode.
std::vector<StageOutcome> run_pipeline(const ExperimentConfig& cfg);

// Full pipeline per horizon for both the diffusion-prior method and the
// Gaussian-prior baseline; emits one CSV row per (method, H).
void horizon_sweep(const ExperimentConfig& base, const std::vector<int>& horizons,
                   const fs::path& out_csv);

// kind: "scatter" (x,y columns) or "line" (optional leading label column,
// then x,y). Writes a minimal standalone SVG next to the data.
void export_plot(const fs::path& csv, const std::string& kind, const fs::path& out_svg);

}  // namespace ldcq::harness
