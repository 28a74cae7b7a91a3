#include "hkd/hkd.h"

#include <string>

#include "experiment.hpp"

using hkd::Error;
using hkd::ErrorKind;

struct hkd_experiment {
  hkd::Experiment impl;
  std::string last_error;
  std::string resolved;
};

namespace {

thread_local std::string g_last_error;

hkd_status status_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::validation:
    case ErrorKind::config:
      return HKD_ERROR_VALIDATION;
    case ErrorKind::io:
    case ErrorKind::runtime:
      return HKD_ERROR_RUNTIME;
  }
  return HKD_ERROR_RUNTIME;
}

template <typename Fn>
hkd_status guarded(hkd_experiment* exp, Fn&& fn) {
  if (!exp) {
    g_last_error = "null experiment handle";
    return HKD_ERROR_VALIDATION;
  }
  try {
    fn();
    exp->last_error.clear();
    return HKD_OK;
  } catch (const Error& e) {
    exp->last_error = e.what();
    return status_of(e.kind());
  } catch (const std::exception& e) {
    exp->last_error = e.what();
    return HKD_ERROR_RUNTIME;
  }
}

}  // namespace

extern "C" {

const char* hkd_version(void) { return "0.1.0"; }

hkd_status hkd_experiment_open(const char* config_path, hkd_experiment** out) {
  if (!config_path || !out) {
    g_last_error = "config path and output handle must be non-null";
    return HKD_ERROR_VALIDATION;
  }
  try {
    hkd::ValidatedConfig validated = hkd::validate_config(config_path);
    if (!validated.ok()) {
      std::string msg = "config validation failed:";
      for (const auto& e : validated.errors) msg += "\n  " + e;
      g_last_error = msg;
      return HKD_ERROR_VALIDATION;
    }
    for (const auto& d : validated.applied_defaults) fprintf(stderr, "[config] default %s\n", d.c_str());
    *out = new hkd_experiment{hkd::Experiment(std::move(validated.config)), "", ""};
    return HKD_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return HKD_ERROR_RUNTIME;
  }
}

void hkd_experiment_close(hkd_experiment* exp) { delete exp; }

const char* hkd_experiment_error(const hkd_experiment* exp) {
  return exp ? exp->last_error.c_str() : g_last_error.c_str();
}

const char* hkd_last_error(void) { return g_last_error.c_str(); }

hkd_status hkd_experiment_set_output_dir(hkd_experiment* exp, const char* dir) {
  return guarded(exp, [&] {
    if (!dir || !*dir) throw hkd::validation_error("output dir must be nonempty");
    exp->impl.set_output_dir(dir);
  });
}

hkd_status hkd_experiment_set_seed(hkd_experiment* exp, uint64_t seed) {
  return guarded(exp, [&] { exp->impl.set_seed(seed); });
}

hkd_status hkd_experiment_set_jobs(hkd_experiment* exp, int32_t jobs) {
  return guarded(exp, [&] { exp->impl.set_jobs(jobs); });
}

hkd_status hkd_experiment_set_resume(hkd_experiment* exp, int32_t resume) {
  return guarded(exp, [&] { exp->impl.set_resume(resume != 0); });
}

hkd_status hkd_experiment_run_stage(hkd_experiment* exp, const char* stage) {
  return guarded(exp, [&] {
    if (!stage) throw hkd::validation_error("stage must be non-null");
    exp->impl.run_stage(stage);
  });
}

const char* hkd_experiment_resolved_config(hkd_experiment* exp) {
  if (!exp) return "";
  exp->resolved = hkd::config_to_json(exp->impl.config()).dump(2);
  return exp->resolved.c_str();
}

}  // extern "C"
