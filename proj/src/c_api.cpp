#include "ldcq/ldcq_c.h"

#include <cstring>
#include <string>

#include "ldcq/errors.hpp"
#include "ldcq/pipeline.hpp"

using ldcq::harness::ExperimentConfig;

struct ldcq_config {
  ExperimentConfig cfg;
};

namespace {

thread_local std::string g_last_error;

int fail(int code, const std::string& msg) {
  g_last_error = msg;
  return code;
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    fn();
    return LDCQ_OK;
  } catch (const ldcq::MissingArtifact& e) {
    return fail(LDCQ_ERR_MISSING_ARTIFACT, e.what());
  } catch (const ldcq::ConfigError& e) {
    return fail(LDCQ_ERR_CONFIG, e.what());
  } catch (const ldcq::nn::TrainingDivergence& e) {
    return fail(LDCQ_ERR_DIVERGED, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(LDCQ_ERR_INVALID_ARG, e.what());
  } catch (const std::runtime_error& e) {
    return fail(LDCQ_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(LDCQ_ERR_INTERNAL, e.what());
  }
}

}  // namespace

extern "C" {

const char* ldcq_version(void) { return "0.1.0"; }

const char* ldcq_last_error(void) { return g_last_error.c_str(); }

ldcq_config* ldcq_config_create(const char* env_name) {
  if (!env_name) {
    g_last_error = "ldcq_config_create: env_name is NULL";
    return nullptr;
  }
  try {
    auto* handle = new ldcq_config{ExperimentConfig::desk_default(env_name)};
    return handle;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return nullptr;
  }
}

ldcq_config* ldcq_config_load(const char* path) {
  if (!path) {
    g_last_error = "ldcq_config_load: path is NULL";
    return nullptr;
  }
  try {
    return new ldcq_config{ExperimentConfig::load(path)};
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return nullptr;
  }
}

int ldcq_config_set(ldcq_config* cfg, const char* key, const char* value) {
  if (!cfg || !key || !value)
    return fail(LDCQ_ERR_INVALID_ARG, "ldcq_config_set: NULL argument");
  return guarded([&] { cfg->cfg.set(key, value); });
}

int ldcq_config_get(const ldcq_config* cfg, const char* key, char* buf, size_t buflen) {
  if (!cfg || !key || !buf || buflen == 0)
    return fail(LDCQ_ERR_INVALID_ARG, "ldcq_config_get: NULL argument");
  return guarded([&] {
    const std::string v = cfg->cfg.get(key);
    if (v.size() + 1 > buflen)
      throw std::invalid_argument("ldcq_config_get: buffer too small");
    std::memcpy(buf, v.c_str(), v.size() + 1);
  });
}

int ldcq_config_save(const ldcq_config* cfg, const char* path) {
  if (!cfg || !path) return fail(LDCQ_ERR_INVALID_ARG, "ldcq_config_save: NULL argument");
  return guarded([&] { cfg->cfg.save(path); });
}

void ldcq_config_free(ldcq_config* cfg) { delete cfg; }

int ldcq_gen_data(const ldcq_config* cfg) {
  if (!cfg) return fail(LDCQ_ERR_INVALID_ARG, "ldcq_gen_data: NULL config");
  return guarded([&] { ldcq::harness::run_gen_data(cfg->cfg); });
}

int ldcq_train_vae(const ldcq_config* cfg) {
  if (!cfg) return fail(LDCQ_ERR_INVALID_ARG, "ldcq_train_vae: NULL config");
  return guarded([&] { ldcq::harness::run_train_vae(cfg->cfg); });
}

int ldcq_train_prior(const ldcq_config* cfg, int goal_conditioned) {
  if (!cfg) return fail(LDCQ_ERR_INVALID_ARG, "ldcq_train_prior: NULL config");
  return guarded([&] { ldcq::harness::run_train_prior(cfg->cfg, goal_conditioned != 0); });
}

int ldcq_train_q(const ldcq_config* cfg) {
  if (!cfg) return fail(LDCQ_ERR_INVALID_ARG, "ldcq_train_q: NULL config");
  return guarded([&] { ldcq::harness::run_train_q(cfg->cfg); });
}

int ldcq_train_wm(const ldcq_config* cfg) {
  if (!cfg) return fail(LDCQ_ERR_INVALID_ARG, "ldcq_train_wm: NULL config");
  return guarded([&] { ldcq::harness::run_train_wm(cfg->cfg); });
}

int ldcq_eval(const ldcq_config* cfg, double* mean_return_out) {
  if (!cfg) return fail(LDCQ_ERR_INVALID_ARG, "ldcq_eval: NULL config");
  return guarded([&] {
    const auto report = ldcq::harness::run_eval(cfg->cfg);
    if (mean_return_out) *mean_return_out = report.mean_return;
  });
}

int ldcq_analyze(const ldcq_config* cfg) {
  if (!cfg) return fail(LDCQ_ERR_INVALID_ARG, "ldcq_analyze: NULL config");
  return guarded([&] { ldcq::harness::run_analyze(cfg->cfg); });
}

int ldcq_run_pipeline(const ldcq_config* cfg) {
  if (!cfg) return fail(LDCQ_ERR_INVALID_ARG, "ldcq_run_pipeline: NULL config");
  return guarded([&] { ldcq::harness::run_pipeline(cfg->cfg); });
}

int ldcq_sweep(const ldcq_config* cfg, const char* horizons_csv, const char* out_csv) {
  if (!cfg || !horizons_csv || !out_csv)
    return fail(LDCQ_ERR_INVALID_ARG, "ldcq_sweep: NULL argument");
  return guarded([&] {
    std::vector<int> hs;
    std::string tok;
    for (const char* c = horizons_csv;; ++c) {
      if (*c == ',' || *c == '\0') {
        if (!tok.empty()) hs.push_back(std::stoi(tok));
        tok.clear();
        if (*c == '\0') break;
      } else {
        tok.push_back(*c);
      }
    }
    ldcq::harness::horizon_sweep(cfg->cfg, hs, out_csv);
  });
}

int ldcq_plot(const char* csv_path, const char* kind, const char* out_svg) {
  if (!csv_path || !kind || !out_svg)
    return fail(LDCQ_ERR_INVALID_ARG, "ldcq_plot: NULL argument");
  return guarded([&] { ldcq::harness::export_plot(csv_path, kind, out_svg); });
}

}  // extern "C"
