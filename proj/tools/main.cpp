// Command-line runner for the identification benchmark: estimation sweeps,
// trajectory envelopes, bound reports, BMSB checks, and a small end-to-end
// demo. All outputs are deterministic given --seed, except timings.csv.

#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sysid/harness.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitPolicyFailure = 2;

struct CommonOpts {
  std::string config_path;
  std::string out_dir = "out";
  std::string mode;
  std::vector<double> sigma_eta;
  std::vector<long> T;
  int repeats = -1;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "JSON config file; omitted fields keep defaults");
  cmd->add_option("--out", o.out_dir, "output directory");
  cmd->add_option("--mode", o.mode,
                  "lqr-regulation | lq-tracking | linear-baseline | both (sweep only)");
  cmd->add_option("--sigma-eta", o.sigma_eta, "override the excitation-level grid");
  cmd->add_option("--T", o.T, "override the trajectory-length grid");
  cmd->add_option("--repeats", o.repeats, "override the repeat count");
  auto* s = cmd->add_option("--seed", o.seed, "master seed");
  s->each([&o](const std::string&) { o.seed_set = true; });
}

sysid::ExperimentConfig load_config(const CommonOpts& o) {
  sysid::ExperimentConfig cfg;
  if (!o.config_path.empty()) {
    std::ifstream f(o.config_path);
    if (!f) throw std::invalid_argument("cannot open config file '" + o.config_path + "'");
    nlohmann::json j;
    f >> j;
    cfg = j.get<sysid::ExperimentConfig>();
  }
  if (!o.mode.empty() && o.mode != "both") cfg.mode = sysid::mode_from_string(o.mode);
  if (!o.sigma_eta.empty()) cfg.sigma_eta_grid = o.sigma_eta;
  if (!o.T.empty()) cfg.T_grid = o.T;
  if (o.repeats > 0) cfg.repeats = o.repeats;
  if (o.seed_set) cfg.master_seed = o.seed;
  return cfg;
}

fs::path ensure_out(const CommonOpts& o) {
  fs::path dir(o.out_dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << content;
}

int run_sweep(const CommonOpts& o) {
  sysid::ExperimentConfig cfg = load_config(o);
  const fs::path out = ensure_out(o);
  std::vector<sysid::ExperimentMode> modes;
  if (o.mode.empty() || o.mode == "both")
    modes = {sysid::ExperimentMode::lqr_regulation, sysid::ExperimentMode::lq_tracking};
  else
    modes = {cfg.mode};

  for (sysid::ExperimentMode mode : modes) {
    cfg.mode = mode;
    cfg.validate();
    const sysid::SweepResult result = sysid::run_estimation_sweep(cfg);
    const std::string tag = sysid::to_string(mode);

    std::ostringstream csv, timings;
    sysid::write_sweep_csv(result, csv);
    sysid::write_timings_csv(result, timings);
    write_file(out / ("sweep_" + tag + ".csv"), csv.str());
    write_file(out / ("timings_" + tag + ".csv"), timings.str());
    write_file(out / ("summary_" + tag + ".json"),
               sysid::sweep_summary_json(result).dump(2) + "\n");
    sysid::write_fig1_svg(result, (out / ("fig1_" + tag + ".svg")).string());

    std::cout << tag << ": " << result.rows.size() << " rows, total violations "
              << result.total_violations << "\n";
  }
  sysid::write_manifest(cfg, "sweep", out);
  return kExitOk;
}

int run_envelope(const CommonOpts& o) {
  sysid::ExperimentConfig cfg = load_config(o);
  if (o.mode.empty()) cfg.mode = sysid::ExperimentMode::lq_tracking;
  cfg.validate();
  const fs::path out = ensure_out(o);
  const sysid::EnvelopeResult result = sysid::run_trajectory_envelope(cfg);
  std::ostringstream csv;
  sysid::write_envelope_csv(result, csv);
  write_file(out / "envelope.csv", csv.str());
  sysid::write_fig2_svg(result, cfg, true, (out / "fig2_x.svg").string());
  sysid::write_fig2_svg(result, cfg, false, (out / "fig2_u.svg").string());
  sysid::write_manifest(cfg, "envelope", out);
  std::cout << "envelope: T=" << result.T << ", violations " << result.violations << "\n";
  return result.violations == 0 ? kExitOk : kExitPolicyFailure;
}

int run_bounds(const CommonOpts& o) {
  sysid::ExperimentConfig cfg = load_config(o);
  cfg.validate();
  const fs::path out = ensure_out(o);
  const sysid::SweepResult sweep = sysid::run_estimation_sweep(cfg);
  const nlohmann::json report = sysid::run_bound_report(cfg, &sweep);
  write_file(out / "bounds.json", report.dump(2) + "\n");
  sysid::write_manifest(cfg, "bounds", out);
  for (const auto& entry : report.at("per_sigma_eta"))
    std::cout << "sigma_eta=" << entry.at("sigma_eta").get<double>()
              << "  T0=" << entry.at("T0").get<double>() << "\n";
  return kExitOk;
}

int run_bmsb(const CommonOpts& o) {
  sysid::ExperimentConfig cfg = load_config(o);
  cfg.validate();
  const fs::path out = ensure_out(o);
  const sysid::BmsbReport report =
      sysid::verify_bmsb(cfg, sysid::RngStream(cfg.master_seed, 0xb5bULL));
  write_file(out / "bmsb.json", nlohmann::json(report).dump(2) + "\n");
  std::ostringstream csv;
  sysid::write_csv(report, csv);
  write_file(out / "bmsb.csv", csv.str());
  sysid::write_manifest(cfg, "bmsb", out);
  std::cout << "bmsb " << sysid::to_string(cfg.mode) << ": min probability "
            << sysid::fmt_double(report.min_probability) << " vs threshold "
            << sysid::fmt_double(report.threshold) << " -> " << (report.pass ? "pass" : "FAIL")
            << "\n";
  return kExitOk;
}

int run_demo(const CommonOpts& o) {
  sysid::ExperimentConfig cfg = load_config(o);
  // Miniature grids so the whole tour stays under half a minute.
  cfg.sigma_eta_grid = {0.2, 0.8};
  cfg.T_grid = {250, 1000};
  cfg.repeats = 3;
  cfg.envelope_T = 300;
  cfg.bmsb_times = {10, 50};
  cfg.bmsb_directions = 6;
  cfg.bmsb_histories = 2;
  cfg.bmsb_samples = 500;
  const fs::path out = ensure_out(o);

  std::cout << "demo seed " << cfg.master_seed << "\n";
  std::cout << "max feasible sigma_eta: " << sysid::fmt_double(cfg.max_feasible_sigma_eta())
            << "\n";
  char line[128];
  std::snprintf(line, sizeof(line), "%-16s %-9s %-6s %-12s %-12s", "mode", "sigma_eta", "T",
                "mean_err", "std_err");
  std::cout << line << "\n";
  for (sysid::ExperimentMode mode :
       {sysid::ExperimentMode::lqr_regulation, sysid::ExperimentMode::lq_tracking}) {
    cfg.mode = mode;
    cfg.validate();
    const sysid::SweepResult result = sysid::run_estimation_sweep(cfg);
    std::ostringstream csv;
    sysid::write_sweep_csv(result, csv);
    write_file(out / ("demo_sweep_" + sysid::to_string(mode) + ".csv"), csv.str());
    for (const auto& c : result.cells) {
      std::snprintf(line, sizeof(line), "%-16s %-9.2f %-6ld %-12.5f %-12.5f",
                    sysid::to_string(mode).c_str(), c.sigma_eta, c.T, c.mean_proj, c.std_proj);
      std::cout << line << "\n";
    }
    if (result.total_violations != 0) {
      std::cout << "constraint violations detected\n";
      return kExitPolicyFailure;
    }
  }

  cfg.mode = sysid::ExperimentMode::lq_tracking;
  const sysid::EnvelopeResult env = sysid::run_trajectory_envelope(cfg);
  std::cout << "envelope violations: " << env.violations << "\n";

  const nlohmann::json bounds = sysid::run_bound_report(cfg);
  std::cout << "T0 at sigma_eta=" << cfg.sigma_eta_grid.front() << ": "
            << sysid::fmt_double(
                   bounds.at("per_sigma_eta").at(0).at("T0").get<double>())
            << "\n";

  cfg.mode = sysid::ExperimentMode::lqr_regulation;
  const sysid::BmsbReport bmsb =
      sysid::verify_bmsb(cfg, sysid::RngStream(cfg.master_seed, 0xb5bULL));
  std::cout << "bmsb min probability " << sysid::fmt_double(bmsb.min_probability)
            << " (threshold " << sysid::fmt_double(bmsb.threshold) << ") -> "
            << (bmsb.pass ? "pass" : "FAIL") << "\n";

  write_file(out / "demo_bmsb.json", nlohmann::json(bmsb).dump(2) + "\n");
  sysid::write_manifest(cfg, "demo", out);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"single-trajectory identification under safe policies"};
  app.require_subcommand(1);

  CommonOpts opts;
  auto* sweep = app.add_subcommand("sweep", "estimation-error sweep over (sigma_eta, T, seed)");
  auto* envelope = app.add_subcommand("envelope", "trajectory min/mean/max envelopes");
  auto* bounds = app.add_subcommand("bounds", "certified constants and finite-sample bounds");
  auto* bmsb = app.add_subcommand("bmsb", "Monte-Carlo small-ball check of the closed loop");
  auto* demo = app.add_subcommand("demo", "fast end-to-end tour with miniature grids");
  for (CLI::App* cmd : {sweep, envelope, bounds, bmsb, demo}) add_common(cmd, opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (sweep->parsed()) return run_sweep(opts);
    if (envelope->parsed()) return run_envelope(opts);
    if (bounds->parsed()) return run_bounds(opts);
    if (bmsb->parsed()) return run_bmsb(opts);
    if (demo->parsed()) return run_demo(opts);
  } catch (const sysid::PolicyError& e) {
    std::cerr << "policy failure: " << e.what() << "\n";
    return kExitPolicyFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
