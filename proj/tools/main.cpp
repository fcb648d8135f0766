// Command-line front end. Talks to the library exclusively through the C API
// in dynmask.h; the JSON report is the only data format crossing the boundary.
#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dynmask.h"
#include "json.hpp"

namespace {

using nlohmann::json;

struct ScenarioDeleter {
  void operator()(dm_scenario* s) const { dm_scenario_free(s); }
};
struct ReportDeleter {
  void operator()(dm_report* r) const { dm_report_free(r); }
};
using ScenarioPtr = std::unique_ptr<dm_scenario, ScenarioDeleter>;
using ReportPtr = std::unique_ptr<dm_report, ReportDeleter>;

int status_to_exit(dm_status st) {
  if (st == DM_OK) return 0;
  std::fprintf(stderr, "error: %s\n", dm_last_error());
  return st == DM_ERR_CONFIG ? 2 : 3;
}

ScenarioPtr load_scenario(const std::string& path, const std::uint64_t* seed,
                          const std::string& out_dir, const std::string& placement,
                          dm_status* st) {
  dm_scenario* raw = nullptr;
  *st = dm_scenario_load(path.c_str(), &raw);
  ScenarioPtr scenario(raw);
  if (*st != DM_OK) return scenario;
  if (seed) *st = dm_scenario_set_seed(scenario.get(), *seed);
  if (*st == DM_OK && !out_dir.empty())
    *st = dm_scenario_set_out_dir(scenario.get(), out_dir.c_str());
  if (*st == DM_OK && !placement.empty())
    *st = dm_scenario_set_placement(scenario.get(), placement.c_str());
  return scenario;
}

void print_run_summary(const json& r) {
  if (r.contains("identification")) {
    const auto& ident = r["identification"];
    if (ident.contains("identified_zero")) {
      std::printf("identified zero:     %.6g %+.6gi\n",
                  ident["identified_zero"]["re"].get<double>(),
                  ident["identified_zero"]["im"].get<double>());
      std::printf("  |zero - cipher|:   %.3g\n", ident["dist_to_cipher_zero"].get<double>());
      std::printf("  |zero - plant|:    %.3g\n", ident["dist_to_plant_zero"].get<double>());
    }
  }
  const auto& det = r["detector"];
  std::printf("detector (%s):       alarm=%s", det["placement"].get<std::string>().c_str(),
              det["alarm"].get<bool>() ? "yes" : "no");
  if (!det["first_alarm_step"].is_null())
    std::printf(" at step %d", det["first_alarm_step"].get<int>());
  std::printf(", energy %.6g against threshold %.6g\n", det["final_energy"].get<double>(),
              det["threshold"].get<double>());
  const auto& en = r["energies"];
  std::printf("performance energy:  benign %.6g, attacked %.6g%s\n",
              en["benign"].get<double>(), en["attacked"].get<double>(),
              en["divergent"].get<bool>() ? " (divergent)" : "");
  if (r.contains("privacy")) {
    const auto& p = r["privacy"];
    std::printf("privacy:             mse %.6g vs delta %.6g -> %s\n", p["mse"].get<double>(),
                p["delta"].get<double>(),
                p["is_private"].get<bool>() ? "private" : "not private");
  }
  if (r.contains("files"))
    for (const auto& f : r["files"]) std::printf("wrote %s\n", f.get<std::string>().c_str());
}

void print_zero_table(const json& r, const char* which) {
  std::printf("%s zeros:\n", which);
  if (r[which].empty()) std::printf("  (none)\n");
  for (const auto& z : r[which])
    std::printf("  %+.9g %+.9gi  |z|=%.9g  %s\n", z["re"].get<double>(), z["im"].get<double>(),
                z["modulus"].get<double>(), z["classification"].get<std::string>().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dynamic-masking closed-loop simulation and analysis"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags remain valid after the subcommand

  std::string config_path, out_dir, placement, sweep_param;
  std::uint64_t seed = 0;
  bool seed_set = false, emit_json = false;
  std::vector<double> sweep_values;

  app.add_flag("--json", emit_json, "print the full JSON report instead of a summary");

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("config", config_path, "scenario config file (JSON)")->required();
    cmd->add_option("--seed", seed, "override the config seed")
        ->each([&](const std::string&) { seed_set = true; });
    cmd->add_option("--out-dir", out_dir, "override the output directory");
    cmd->add_option("--placement", placement, "detector placement")
        ->check(CLI::IsMember({"d1", "d2"}));
  };

  CLI::App* cmd_run = app.add_subcommand("run", "run the full scenario pipeline");
  add_common(cmd_run);
  CLI::App* cmd_sweep = app.add_subcommand("sweep", "run the pipeline across parameter values");
  add_common(cmd_sweep);
  cmd_sweep->add_option("--param", sweep_param, "parameter to sweep")->required();
  cmd_sweep->add_option("--values", sweep_values, "comma-separated values")
      ->required()
      ->delimiter(',');
  CLI::App* cmd_zeros = app.add_subcommand("zeros", "print invariant zeros of plant and cipher");
  add_common(cmd_zeros);
  CLI::App* cmd_identify = app.add_subcommand("identify", "run the identification phase only");
  add_common(cmd_identify);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints the message / help text
    return code == 0 ? 0 : 2;     // bad arguments are configuration errors
  }

  dm_status st = DM_OK;
  ScenarioPtr scenario =
      load_scenario(config_path, seed_set ? &seed : nullptr, out_dir, placement, &st);
  if (st != DM_OK) return status_to_exit(st);

  dm_report* raw = nullptr;
  if (app.got_subcommand(cmd_run)) {
    st = dm_run(scenario.get(), &raw);
  } else if (app.got_subcommand(cmd_sweep)) {
    st = dm_sweep(scenario.get(), sweep_param.c_str(), sweep_values.data(), sweep_values.size(),
                  &raw);
  } else if (app.got_subcommand(cmd_zeros)) {
    st = dm_zeros(scenario.get(), &raw);
  } else {
    st = dm_identify(scenario.get(), &raw);
  }
  ReportPtr report(raw);
  if (st != DM_OK) return status_to_exit(st);

  const json r = json::parse(dm_report_json(report.get()));
  if (emit_json) {
    std::printf("%s\n", r.dump(2).c_str());
    return 0;
  }

  if (app.got_subcommand(cmd_run)) {
    print_run_summary(r);
  } else if (app.got_subcommand(cmd_sweep)) {
    std::printf("%-12s %-10s %-18s %-18s %-10s %-12s\n", "value", "failed", "|zero-cipher| med",
                "|zero-plant| med", "alarms", "divergent");
    for (const auto& e : r["entries"]) {
      if (e["failed"].get<bool>()) {
        std::printf("%-12.6g failed: %s\n", e["value"].get<double>(),
                    e["error"].get<std::string>().c_str());
        continue;
      }
      std::printf("%-12.6g %-10s %-18.6g %-18.6g %-10.3g %-12.3g\n", e["value"].get<double>(),
                  "no", e["zero_bias_cipher_median"].get<double>(),
                  e["zero_bias_plant_median"].get<double>(), e["alarm_rate"].get<double>(),
                  e["divergent_rate"].get<double>());
    }
    if (r.contains("summary_csv"))
      std::printf("wrote %s\n", r["summary_csv"].get<std::string>().c_str());
  } else if (app.got_subcommand(cmd_zeros)) {
    print_zero_table(r, "plant");
    print_zero_table(r, "cipher");
  } else {
    std::printf("%s\n", r.dump(2).c_str());
  }
  return 0;
}
