#include "dynmask.h"

#include <string>
#include <vector>

#include "dynmask/errors.hpp"
#include "dynmask/scenario.hpp"

using dynmask::ConfigError;
using dynmask::scenario::ScenarioConfig;

struct dm_scenario {
  ScenarioConfig config;
  std::string echo;  // buffer backing dm_scenario_echo_json
};

struct dm_report {
  std::string json;
};

namespace {

thread_local std::string g_last_error;

dm_status fail(dm_status code, const char* what) {
  g_last_error = what ? what : "";
  return code;
}

template <typename Fn>
dm_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return DM_OK;
  } catch (const ConfigError& e) {
    return fail(DM_ERR_CONFIG, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(DM_ERR_CONFIG, e.what());
  } catch (const std::exception& e) {
    return fail(DM_ERR_NUMERIC, e.what());
  }
}

}  // namespace

extern "C" {

const char* dm_version_string(void) { return "0.1.0"; }

const char* dm_last_error(void) { return g_last_error.c_str(); }

dm_status dm_scenario_load(const char* path, dm_scenario** out) {
  if (!path || !out) return fail(DM_ERR_INVALID, "null argument");
  *out = nullptr;
  return guarded([&] { *out = new dm_scenario{dynmask::scenario::load_config(path), {}}; });
}

dm_status dm_scenario_load_string(const char* json_text, dm_scenario** out) {
  if (!json_text || !out) return fail(DM_ERR_INVALID, "null argument");
  *out = nullptr;
  return guarded(
      [&] { *out = new dm_scenario{dynmask::scenario::load_config_text(json_text), {}}; });
}

void dm_scenario_free(dm_scenario* scenario) { delete scenario; }

dm_status dm_scenario_set_seed(dm_scenario* scenario, uint64_t seed) {
  if (!scenario) return fail(DM_ERR_INVALID, "null scenario");
  scenario->config.seed = seed;
  return DM_OK;
}

dm_status dm_scenario_set_out_dir(dm_scenario* scenario, const char* dir) {
  if (!scenario || !dir) return fail(DM_ERR_INVALID, "null argument");
  scenario->config.out_dir = dir;
  return DM_OK;
}

dm_status dm_scenario_set_placement(dm_scenario* scenario, const char* placement) {
  if (!scenario || !placement) return fail(DM_ERR_INVALID, "null argument");
  const std::string p = placement;
  if (p == "d1")
    scenario->config.placement = dynmask::loop::Placement::D1;
  else if (p == "d2")
    scenario->config.placement = dynmask::loop::Placement::D2;
  else
    return fail(DM_ERR_CONFIG, "placement must be \"d1\" or \"d2\"");
  return DM_OK;
}

const char* dm_scenario_echo_json(dm_scenario* scenario) {
  if (!scenario) return "";
  scenario->echo = dynmask::scenario::echo_config(scenario->config);
  return scenario->echo.c_str();
}

dm_status dm_run(dm_scenario* scenario, dm_report** out) {
  if (!scenario || !out) return fail(DM_ERR_INVALID, "null argument");
  *out = nullptr;
  return guarded([&] {
    const auto report = dynmask::scenario::run_scenario(scenario->config);
    *out = new dm_report{report.json};
  });
}

dm_status dm_sweep(dm_scenario* scenario, const char* parameter, const double* values,
                   size_t value_count, dm_report** out) {
  if (!scenario || !parameter || !values || !out) return fail(DM_ERR_INVALID, "null argument");
  *out = nullptr;
  return guarded([&] {
    const std::vector<double> vals(values, values + value_count);
    const auto report = dynmask::scenario::sweep(scenario->config, parameter, vals);
    *out = new dm_report{report.json};
  });
}

dm_status dm_zeros(dm_scenario* scenario, dm_report** out) {
  if (!scenario || !out) return fail(DM_ERR_INVALID, "null argument");
  *out = nullptr;
  return guarded(
      [&] { *out = new dm_report{dynmask::scenario::zeros_report(scenario->config)}; });
}

dm_status dm_identify(dm_scenario* scenario, dm_report** out) {
  if (!scenario || !out) return fail(DM_ERR_INVALID, "null argument");
  *out = nullptr;
  return guarded(
      [&] { *out = new dm_report{dynmask::scenario::identify_report(scenario->config)}; });
}

const char* dm_report_json(const dm_report* report) { return report ? report->json.c_str() : ""; }

void dm_report_free(dm_report* report) { delete report; }

}  // extern "C"
