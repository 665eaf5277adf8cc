#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "sysid/bmsb.hpp"
#include "sysid/bounds.hpp"
#include "sysid/estimator.hpp"
#include "sysid/rmpc.hpp"
#include "sysid/simulate.hpp"
#include "sysid/svg.hpp"

namespace sysid {

inline constexpr const char* kVersion = "0.1.0";

enum class ExperimentMode { lqr_regulation, lq_tracking, linear_baseline };

inline std::string to_string(ExperimentMode m) {
  switch (m) {
    case ExperimentMode::lqr_regulation: return "lqr-regulation";
    case ExperimentMode::lq_tracking: return "lq-tracking";
    case ExperimentMode::linear_baseline: return "linear-baseline";
  }
  throw std::logic_error("unknown mode");
}

inline ExperimentMode mode_from_string(const std::string& s) {
  if (s == "lqr-regulation") return ExperimentMode::lqr_regulation;
  if (s == "lq-tracking") return ExperimentMode::lq_tracking;
  if (s == "linear-baseline") return ExperimentMode::linear_baseline;
  throw std::invalid_argument("unknown mode '" + s + "'");
}

/// Benchmark configuration; the defaults reproduce the scalar safe-learning
/// setup: true system (1.2, 0.9), nominal (1.1, 1.0), parameter box
/// [1,1.2]x[0.9,1.1], uniform process noise on [-1,1], sign excitation, state
/// and input constraints [-10,10], horizon 5, 15 repeats.
struct ExperimentConfig {
  ExperimentMode mode = ExperimentMode::lqr_regulation;
  SystemParams true_system = SystemParams::scalar(1.2, 0.9);
  SystemParams nominal = SystemParams::scalar(1.1, 1.0);
  UncertaintySet theta0 = UncertaintySet::scalar(1.0, 1.2, 0.9, 1.1);
  NoiseSpec w_dist = NoiseSpec::uniform_box(1, 1.0);
  std::string eta_family = "scaled_sign";
  std::vector<double> sigma_eta_grid = {0.2, 0.4, 0.6, 0.8};
  std::vector<long> T_grid = {250, 500, 1000, 2000, 4000};
  int repeats = 15;
  int horizon = 5;
  Box X = Box::interval(-10.0, 10.0);
  Box U = Box::interval(-10.0, 10.0);
  Eigen::MatrixXd Q = Eigen::MatrixXd::Identity(1, 1);
  Eigen::MatrixXd R = Eigen::MatrixXd::Identity(1, 1);
  double tracking_amplitude = 8.0;
  double tracking_scale = 100.0;
  double delta = 0.05;
  std::uint64_t master_seed = 2;
  long envelope_T = 1000;
  // BMSB check parameters.
  double bmsb_sigma_eta = 0.5;
  std::vector<long> bmsb_times = {10, 50, 200};
  int bmsb_directions = 16;
  int bmsb_histories = 5;
  long bmsb_samples = 10000;

  int n() const { return true_system.n(); }
  int m() const { return true_system.m(); }

  /// Excitation spec at a given level: sigma_eta is the square root of the
  /// minimum covariance eigenvalue for every supported family. Level zero
  /// means no excitation.
  NoiseSpec eta_spec(double sigma_eta) const {
    if (!(sigma_eta >= 0.0)) throw std::invalid_argument("sigma_eta must be nonnegative");
    if (sigma_eta == 0.0) return NoiseSpec::zero(m());
    if (eta_family == "scaled_sign") return NoiseSpec::scaled_sign(m(), sigma_eta);
    if (eta_family == "uniform_box")
      return NoiseSpec::uniform_box(m(), sigma_eta * std::sqrt(3.0));
    if (eta_family == "uniform_sphere")
      return NoiseSpec::uniform_sphere(m(), sigma_eta * std::sqrt(static_cast<double>(m())));
    throw std::invalid_argument("unsupported eta family '" + eta_family + "'");
  }

  RmpcConfig rmpc_config(double sigma_eta) const {
    RmpcConfig rc;
    rc.nominal = nominal;
    rc.theta0 = theta0;
    rc.Q = Q;
    rc.R = R;
    rc.horizon = horizon;
    rc.X = X;
    rc.U = U;
    rc.W = w_dist.support_box();
    rc.H = eta_spec(sigma_eta).support_box();
    return rc;
  }

  /// A priori covariate bound from the constraint geometry,
  /// max over X x U of ||(x, u)||_2.
  double geometric_b_z() const { return stack(X, U).max_point_norm(); }

  void validate() const {
    if (sigma_eta_grid.empty() || T_grid.empty()) throw std::invalid_argument("empty grid");
    if (repeats < 1) throw std::invalid_argument("repeats must be >= 1");
    for (long T : T_grid)
      if (T < 1) throw std::invalid_argument("T grid entries must be >= 1");
    for (double s : sigma_eta_grid) {
      if (!(s >= 0.0)) throw std::invalid_argument("sigma_eta grid entries must be nonnegative");
      try {
        RmpcIngredients probe(rmpc_config(s));
      } catch (const std::exception& e) {
        throw std::invalid_argument("sigma_eta=" + fmt_double(s) +
                                    " leaves no feasible tightened sets: " + e.what());
      }
    }
  }

  /// Largest excitation level with nonempty tightened sets, by bisection.
  double max_feasible_sigma_eta() const {
    auto feasible = [this](double s) {
      try {
        RmpcIngredients probe(rmpc_config(s));
        return true;
      } catch (const std::exception&) {
        return false;
      }
    };
    double lo = 1e-6;
    if (!feasible(lo)) return 0.0;
    double hi = 1.0;
    while (feasible(hi) && hi < 1e6) hi *= 2.0;
    for (int i = 0; i < 60; ++i) {
      const double mid = 0.5 * (lo + hi);
      (feasible(mid) ? lo : hi) = mid;
    }
    return lo;
  }
};

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json{{"mode", to_string(c.mode)},
                     {"true_system", c.true_system},
                     {"nominal", c.nominal},
                     {"theta0_center", std::vector<double>(c.theta0.center.data(),
                                                           c.theta0.center.data() + c.theta0.center.size())},
                     {"theta0_halfwidth",
                      std::vector<double>(c.theta0.halfwidth.data(),
                                          c.theta0.halfwidth.data() + c.theta0.halfwidth.size())},
                     {"w_dist", c.w_dist},
                     {"eta_family", c.eta_family},
                     {"sigma_eta_grid", c.sigma_eta_grid},
                     {"T_grid", c.T_grid},
                     {"repeats", c.repeats},
                     {"horizon", c.horizon},
                     {"X", c.X},
                     {"U", c.U},
                     {"Q", std::vector<double>(c.Q.data(), c.Q.data() + c.Q.size())},
                     {"R", std::vector<double>(c.R.data(), c.R.data() + c.R.size())},
                     {"tracking_amplitude", c.tracking_amplitude},
                     {"tracking_scale", c.tracking_scale},
                     {"delta", c.delta},
                     {"master_seed", c.master_seed},
                     {"envelope_T", c.envelope_T},
                     {"bmsb_sigma_eta", c.bmsb_sigma_eta},
                     {"bmsb_times", c.bmsb_times},
                     {"bmsb_directions", c.bmsb_directions},
                     {"bmsb_histories", c.bmsb_histories},
                     {"bmsb_samples", c.bmsb_samples}};
}

/// Every field is optional in the file; omitted fields keep their defaults.
inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  if (j.contains("mode")) c.mode = mode_from_string(j.at("mode").get<std::string>());
  if (j.contains("true_system")) c.true_system = j.at("true_system").get<SystemParams>();
  if (j.contains("nominal")) c.nominal = j.at("nominal").get<SystemParams>();
  const int n = c.true_system.n();
  const int m = c.true_system.m();
  auto vec_to_mat = [](const std::vector<double>& v, int rows, int cols) {
    if (static_cast<int>(v.size()) != rows * cols)
      throw std::invalid_argument("ExperimentConfig: matrix payload size mismatch");
    return Eigen::Map<const Eigen::MatrixXd>(v.data(), rows, cols).eval();
  };
  if (j.contains("theta0_center") || j.contains("theta0_halfwidth"))
    c.theta0 = UncertaintySet(
        vec_to_mat(j.at("theta0_center").get<std::vector<double>>(), n, n + m),
        vec_to_mat(j.at("theta0_halfwidth").get<std::vector<double>>(), n, n + m));
  if (j.contains("w_dist")) c.w_dist = j.at("w_dist").get<NoiseSpec>();
  if (j.contains("eta_family")) c.eta_family = j.at("eta_family").get<std::string>();
  if (j.contains("sigma_eta_grid")) c.sigma_eta_grid = j.at("sigma_eta_grid").get<std::vector<double>>();
  if (j.contains("T_grid")) c.T_grid = j.at("T_grid").get<std::vector<long>>();
  if (j.contains("repeats")) c.repeats = j.at("repeats").get<int>();
  if (j.contains("horizon")) c.horizon = j.at("horizon").get<int>();
  if (j.contains("X")) c.X = j.at("X").get<Box>();
  if (j.contains("U")) c.U = j.at("U").get<Box>();
  if (j.contains("Q")) c.Q = vec_to_mat(j.at("Q").get<std::vector<double>>(), n, n);
  if (j.contains("R")) c.R = vec_to_mat(j.at("R").get<std::vector<double>>(), m, m);
  if (j.contains("tracking_amplitude")) c.tracking_amplitude = j.at("tracking_amplitude").get<double>();
  if (j.contains("tracking_scale")) c.tracking_scale = j.at("tracking_scale").get<double>();
  if (j.contains("delta")) c.delta = j.at("delta").get<double>();
  if (j.contains("master_seed")) c.master_seed = j.at("master_seed").get<std::uint64_t>();
  if (j.contains("envelope_T")) c.envelope_T = j.at("envelope_T").get<long>();
  if (j.contains("bmsb_sigma_eta")) c.bmsb_sigma_eta = j.at("bmsb_sigma_eta").get<double>();
  if (j.contains("bmsb_times")) c.bmsb_times = j.at("bmsb_times").get<std::vector<long>>();
  if (j.contains("bmsb_directions")) c.bmsb_directions = j.at("bmsb_directions").get<int>();
  if (j.contains("bmsb_histories")) c.bmsb_histories = j.at("bmsb_histories").get<int>();
  if (j.contains("bmsb_samples")) c.bmsb_samples = j.at("bmsb_samples").get<long>();
}

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string config_hash(const ExperimentConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(nlohmann::json(c).dump())));
  return buf;
}

/// Shared per-sigma machinery for one experiment cell.
struct CellSetup {
  std::shared_ptr<const RmpcIngredients> ingredients;  // null for linear baseline off-RMPC? kept for gain
  NoiseSpec eta;
  PolicyFactory factory;
};

inline CellSetup make_cell_setup(const ExperimentConfig& cfg, double sigma_eta) {
  CellSetup cell;
  cell.eta = cfg.eta_spec(sigma_eta);
  cell.ingredients = make_rmpc_ingredients(cfg.rmpc_config(sigma_eta));
  switch (cfg.mode) {
    case ExperimentMode::lqr_regulation:
      cell.factory = [ing = cell.ingredients]() -> std::unique_ptr<Policy> {
        return rmpc_policy(ing);
      };
      break;
    case ExperimentMode::lq_tracking:
      cell.factory = [ing = cell.ingredients,
                      target = tracking_target(cfg.n(), cfg.tracking_amplitude,
                                               cfg.tracking_scale)]() -> std::unique_ptr<Policy> {
        return rmpc_policy(ing, target);
      };
      break;
    case ExperimentMode::linear_baseline:
      cell.factory = [K = cell.ingredients->K()]() -> std::unique_ptr<Policy> {
        return std::make_unique<LinearPolicy>(K);
      };
      break;
  }
  return cell;
}

struct ResultRow {
  ExperimentMode mode = ExperimentMode::lqr_regulation;
  double sigma_eta = 0.0;
  long T = 0;
  int seed = 0;
  double error_raw = 0.0;
  double error_proj = 0.0;
  double b_z_realized = 0.0;
  int violations = 0;
  bool infeasible = false;
  double wall_ms = 0.0;  // excluded from deterministic outputs
};

struct CellStat {
  double sigma_eta = 0.0;
  long T = 0;
  double mean_raw = 0.0, std_raw = 0.0;
  double mean_proj = 0.0, std_proj = 0.0;
  int infeasible_count = 0;
};

struct SweepResult {
  ExperimentMode mode = ExperimentMode::lqr_regulation;
  std::vector<ResultRow> rows;
  std::vector<CellStat> cells;
  int total_violations = 0;
};

inline int count_violations(const Trajectory& traj, const Box& X, const Box& U,
                            double tol = 1e-9) {
  int v = 0;
  for (long t = 0; t < traj.length(); ++t) {
    if (!X.contains(traj.x[static_cast<std::size_t>(t)], tol)) ++v;
    if (!U.contains(traj.u[static_cast<std::size_t>(t)], tol)) ++v;
  }
  if (!X.contains(traj.x.back(), tol)) ++v;
  return v;
}

/// Estimation sweep over the (sigma_eta, T, seed) grid for one mode.
///
/// Deterministic given the master seed: each (sigma_eta, seed) pair draws
/// from its own substream. One rollout at the largest grid length serves all
/// grid lengths for that pair, since a shorter rollout of the same stream is
/// exactly the prefix of a longer one; the streaming estimator is snapshot
/// at each grid value. Rows come out in sorted (sigma_eta, T, seed) order.
inline SweepResult run_estimation_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  SweepResult result;
  result.mode = cfg.mode;
  const Eigen::VectorXd x0 = Eigen::VectorXd::Zero(cfg.n());
  const RngStream master(cfg.master_seed, static_cast<std::uint64_t>(cfg.mode));

  std::vector<long> sorted_T = cfg.T_grid;
  std::sort(sorted_T.begin(), sorted_T.end());
  const long T_max = sorted_T.back();

  for (std::size_t si = 0; si < cfg.sigma_eta_grid.size(); ++si) {
    const double sigma_eta = cfg.sigma_eta_grid[si];
    const CellSetup cell = make_cell_setup(cfg, sigma_eta);
    std::map<long, std::vector<ResultRow>> rows_by_T;
    for (int seed = 0; seed < cfg.repeats; ++seed) {
      const auto t_start = std::chrono::steady_clock::now();
      RngStream rng = master.substream(si).substream(static_cast<std::uint64_t>(seed));
      std::unique_ptr<Policy> policy = cell.factory();
      const SimulationOutcome outcome =
          simulate_partial(cfg.true_system, *policy, cfg.w_dist, cell.eta, x0, T_max, rng);
      const Trajectory& traj = outcome.traj;

      LseAccumulator acc(cfg.n(), cfg.m());
      double running_bound = 0.0;
      int running_violations = 0;
      std::size_t next_T = 0;
      for (long t = 0; t <= traj.length() && next_T < sorted_T.size(); ++t) {
        while (next_T < sorted_T.size() && sorted_T[next_T] == t) {
          ResultRow row;
          row.mode = cfg.mode;
          row.sigma_eta = sigma_eta;
          row.T = t;
          row.seed = seed;
          row.b_z_realized =
              std::max(running_bound, traj.x[static_cast<std::size_t>(t)].norm());
          row.violations = running_violations +
                           (cfg.X.contains(traj.x[static_cast<std::size_t>(t)], 1e-9) ? 0 : 1);
          Estimate est = acc.solve();
          est.theta_proj = project(est.theta_hat, cfg.theta0);
          row.error_raw = spectral_error(est.theta_hat, cfg.true_system);
          row.error_proj = spectral_error(*est.theta_proj, cfg.true_system);
          row.wall_ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - t_start)
                            .count();
          result.total_violations += row.violations;
          rows_by_T[row.T].push_back(std::move(row));
          ++next_T;
        }
        if (t == traj.length()) break;
        const auto ti = static_cast<std::size_t>(t);
        acc.add(traj.z(t), traj.x[ti + 1]);
        running_bound = std::max(
            running_bound, std::sqrt(traj.x[ti].squaredNorm() + traj.u[ti].squaredNorm()));
        if (!cfg.X.contains(traj.x[ti], 1e-9)) ++running_violations;
        if (!cfg.U.contains(traj.u[ti], 1e-9)) ++running_violations;
      }
      // Grid lengths beyond a policy failure stay flagged.
      for (; next_T < sorted_T.size(); ++next_T) {
        ResultRow row;
        row.mode = cfg.mode;
        row.sigma_eta = sigma_eta;
        row.T = sorted_T[next_T];
        row.seed = seed;
        row.infeasible = true;
        row.error_raw = std::nan("");
        row.error_proj = std::nan("");
        row.b_z_realized = running_bound;
        row.violations = running_violations;
        row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                                t_start)
                          .count();
        result.total_violations += row.violations;
        rows_by_T[row.T].push_back(std::move(row));
      }
    }

    for (long T : sorted_T) {
      CellStat stat;
      stat.sigma_eta = sigma_eta;
      stat.T = T;
      std::vector<double> raws, projs;
      for (ResultRow& row : rows_by_T[T]) {
        if (row.infeasible) {
          ++stat.infeasible_count;
        } else {
          raws.push_back(row.error_raw);
          projs.push_back(row.error_proj);
        }
        result.rows.push_back(std::move(row));
      }
      auto mean_std = [](const std::vector<double>& v, double& mean, double& sd) {
        if (v.empty()) {
          mean = std::nan("");
          sd = std::nan("");
          return;
        }
        mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        sd = 0.0;
        for (double x : v) sd += (x - mean) * (x - mean);
        sd = v.size() > 1 ? std::sqrt(sd / static_cast<double>(v.size() - 1)) : 0.0;
      };
      mean_std(raws, stat.mean_raw, stat.std_raw);
      mean_std(projs, stat.mean_proj, stat.std_proj);
      result.cells.push_back(stat);
    }
  }
  return result;
}

inline void write_sweep_csv(const SweepResult& r, std::ostream& os) {
  os << "mode,sigma_eta,T,seed,error_raw,error_proj,b_z_realized,violations,infeasible\n";
  for (const auto& row : r.rows)
    os << to_string(row.mode) << ',' << fmt_double(row.sigma_eta) << ',' << row.T << ','
       << row.seed << ',' << fmt_double(row.error_raw) << ',' << fmt_double(row.error_proj) << ','
       << fmt_double(row.b_z_realized) << ',' << row.violations << ','
       << (row.infeasible ? 1 : 0) << "\n";
}

inline void write_timings_csv(const SweepResult& r, std::ostream& os) {
  os << "mode,sigma_eta,T,seed,wall_ms\n";
  for (const auto& row : r.rows)
    os << to_string(row.mode) << ',' << fmt_double(row.sigma_eta) << ',' << row.T << ','
       << row.seed << ',' << fmt_double(row.wall_ms) << "\n";
}

inline nlohmann::json sweep_summary_json(const SweepResult& r) {
  auto cells = nlohmann::json::array();
  for (const auto& c : r.cells)
    cells.push_back({{"sigma_eta", c.sigma_eta},
                     {"T", c.T},
                     {"mean_error_raw", c.mean_raw},
                     {"std_error_raw", c.std_raw},
                     {"mean_error_proj", c.mean_proj},
                     {"std_error_proj", c.std_proj},
                     {"infeasible", c.infeasible_count}});
  return nlohmann::json{{"mode", to_string(r.mode)},
                        {"cells", cells},
                        {"total_violations", r.total_violations}};
}

inline const std::vector<std::string>& palette() {
  static const std::vector<std::string> colors = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                                  "#9467bd", "#8c564b"};
  return colors;
}

/// Estimation-error figure: mean projected error vs T per excitation level,
/// one-standard-deviation band, log-log axes.
inline void write_fig1_svg(const SweepResult& r, const std::string& path) {
  SvgPlot plot("estimation error (" + to_string(r.mode) + ")", "T", "mean ||proj - true||",
               true, true);
  std::map<double, std::vector<const CellStat*>> by_sigma;
  for (const auto& c : r.cells) by_sigma[c.sigma_eta].push_back(&c);
  int ci = 0;
  for (const auto& [sigma, cells] : by_sigma) {
    std::vector<double> xs, ys, lo, hi;
    for (const CellStat* c : cells) {
      if (!std::isfinite(c->mean_proj) || c->mean_proj <= 0.0) continue;
      xs.push_back(static_cast<double>(c->T));
      ys.push_back(c->mean_proj);
      lo.push_back(std::max(c->mean_proj - c->std_proj, 1e-6));
      hi.push_back(c->mean_proj + c->std_proj);
    }
    const std::string color = palette()[ci++ % palette().size()];
    if (!xs.empty()) {
      plot.add_band(xs, lo, hi, color);
      plot.add_line(xs, ys, color, "sigma_eta=" + fmt_double(sigma));
    }
  }
  plot.write(path);
}

struct EnvelopeSeries {
  double sigma_eta = 0.0;
  std::vector<double> x_min, x_mean, x_max;
  std::vector<double> u_min, u_mean, u_max;
};

struct EnvelopeResult {
  std::vector<EnvelopeSeries> series;
  long T = 0;
  int violations = 0;
};

/// Per-time min/mean/max of states and inputs over the repeat seeds, for each
/// excitation level (tracking mode).
inline EnvelopeResult run_trajectory_envelope(const ExperimentConfig& cfg) {
  cfg.validate();
  EnvelopeResult result;
  result.T = cfg.envelope_T;
  const Eigen::VectorXd x0 = Eigen::VectorXd::Zero(cfg.n());
  const RngStream master(cfg.master_seed, 0x0e0eULL + static_cast<std::uint64_t>(cfg.mode));

  for (std::size_t si = 0; si < cfg.sigma_eta_grid.size(); ++si) {
    const double sigma_eta = cfg.sigma_eta_grid[si];
    const CellSetup cell = make_cell_setup(cfg, sigma_eta);
    EnvelopeSeries series;
    series.sigma_eta = sigma_eta;
    const auto T = static_cast<std::size_t>(cfg.envelope_T);
    series.x_min.assign(T + 1, kInf);
    series.x_mean.assign(T + 1, 0.0);
    series.x_max.assign(T + 1, -kInf);
    series.u_min.assign(T, kInf);
    series.u_mean.assign(T, 0.0);
    series.u_max.assign(T, -kInf);
    for (int seed = 0; seed < cfg.repeats; ++seed) {
      std::unique_ptr<Policy> policy = cell.factory();
      const Trajectory traj =
          simulate(cfg.true_system, *policy, cfg.w_dist, cell.eta, x0, cfg.envelope_T,
                   master.substream(si).substream(static_cast<std::uint64_t>(seed)));
      result.violations += count_violations(traj, cfg.X, cfg.U);
      for (std::size_t t = 0; t <= T; ++t) {
        const double x = traj.x[t](0);
        series.x_min[t] = std::min(series.x_min[t], x);
        series.x_max[t] = std::max(series.x_max[t], x);
        series.x_mean[t] += x / cfg.repeats;
      }
      for (std::size_t t = 0; t < T; ++t) {
        const double u = traj.u[t](0);
        series.u_min[t] = std::min(series.u_min[t], u);
        series.u_max[t] = std::max(series.u_max[t], u);
        series.u_mean[t] += u / cfg.repeats;
      }
    }
    result.series.push_back(std::move(series));
  }
  return result;
}

inline void write_envelope_csv(const EnvelopeResult& r, std::ostream& os) {
  os << "sigma_eta,t,x_min,x_mean,x_max,u_min,u_mean,u_max\n";
  for (const auto& s : r.series)
    for (std::size_t t = 0; t < s.x_mean.size(); ++t) {
      os << fmt_double(s.sigma_eta) << ',' << t << ',' << fmt_double(s.x_min[t]) << ','
         << fmt_double(s.x_mean[t]) << ',' << fmt_double(s.x_max[t]);
      if (t < s.u_mean.size())
        os << ',' << fmt_double(s.u_min[t]) << ',' << fmt_double(s.u_mean[t]) << ','
           << fmt_double(s.u_max[t]);
      else
        os << ",,,";
      os << "\n";
    }
}

inline void write_fig2_svg(const EnvelopeResult& r, const ExperimentConfig& cfg, bool states,
                           const std::string& path) {
  SvgPlot plot(states ? "state trajectories" : "input trajectories", "t",
               states ? "x_t" : "u_t");
  const Box& box = states ? cfg.X : cfg.U;
  plot.add_hline(box.upper()(0), "#444444", "constraint");
  plot.add_hline(box.lower()(0), "#444444");
  int ci = 0;
  for (const auto& s : r.series) {
    std::vector<double> ts;
    const auto& mean = states ? s.x_mean : s.u_mean;
    const auto& lo = states ? s.x_min : s.u_min;
    const auto& hi = states ? s.x_max : s.u_max;
    ts.reserve(mean.size());
    for (std::size_t t = 0; t < mean.size(); ++t) ts.push_back(static_cast<double>(t));
    const std::string color = palette()[ci++ % palette().size()];
    plot.add_band(ts, lo, hi, color);
    plot.add_line(ts, mean, color, "sigma_eta=" + fmt_double(s.sigma_eta));
  }
  plot.write(path);
}

/// Chain of certified constants to the explicit finite-sample bound, per
/// excitation level, over the T grid; optionally annotated with the largest
/// realized error from a sweep for side-by-side plotting.
inline nlohmann::json run_bound_report(const ExperimentConfig& cfg,
                                       const SweepResult* sweep = nullptr) {
  const NoiseCertificate w_cert = cfg.w_dist.certify();
  const SmallBall w_ball = small_ball(w_cert);
  const double b_z = cfg.geometric_b_z();
  const int d = cfg.n() + cfg.m();

  auto reports = nlohmann::json::array();
  for (double sigma_eta : cfg.sigma_eta_grid) {
    const NoiseCertificate eta_cert = cfg.eta_spec(sigma_eta).certify();
    const SmallBall eta_ball = small_ball(eta_cert);
    const BmsbParams params = bmsb_params(w_ball, eta_ball, b_z);
    const auto [poly1, poly2] =
        theorem1_scaling(w_cert.ratio, eta_cert.ratio, w_cert.sigma, eta_cert.sigma);

    nlohmann::json entry;
    entry["sigma_eta"] = sigma_eta;
    entry["w_certificate"] = {{"sigma", w_cert.sigma}, {"max_norm", w_cert.max_norm}, {"ratio", w_cert.ratio}};
    entry["eta_certificate"] = {{"sigma", eta_cert.sigma}, {"max_norm", eta_cert.max_norm}, {"ratio", eta_cert.ratio}};
    entry["small_ball_w"] = {{"s", w_ball.s}, {"p", w_ball.p}};
    entry["small_ball_eta"] = {{"s", eta_ball.s}, {"p", eta_ball.p}};
    entry["s_z"] = params.s_z;
    entry["p_z"] = params.p_z;
    auto curve = nlohmann::json::array();
    for (long T : cfg.T_grid) {
      BoundReport r = theorem2_bound(params, d, cfg.n(), w_cert.max_norm, cfg.delta, T);
      r.poly1 = poly1;
      r.poly2 = poly2;
      nlohmann::json point = r;
      if (sweep) {
        double worst = -1.0;
        for (const auto& row : sweep->rows)
          if (row.sigma_eta == sigma_eta && row.T == T && !row.infeasible)
            worst = std::max(worst, row.error_raw);
        if (worst >= 0.0) point["empirical_max_error"] = worst;
      }
      curve.push_back(std::move(point));
    }
    entry["T0"] = curve.empty() ? 0.0 : curve.front().at("T0").get<double>();
    entry["curve"] = std::move(curve);
    reports.push_back(std::move(entry));
  }
  return nlohmann::json{{"b_z", b_z}, {"delta", cfg.delta}, {"per_sigma_eta", reports}};
}

/// BMSB verification on the configured closed loop at the configured
/// excitation level.
inline BmsbReport verify_bmsb(const ExperimentConfig& cfg, const std::vector<long>& times, int L,
                              int H, long M, RngStream rng) {
  const double sigma_eta = cfg.bmsb_sigma_eta;
  const CellSetup cell = make_cell_setup(cfg, sigma_eta);
  const NoiseCertificate w_cert = cfg.w_dist.certify();
  const SmallBall w_ball = small_ball(w_cert);
  const SmallBall eta_ball = small_ball(cell.eta.certify());
  const BmsbParams params = bmsb_params(w_ball, eta_ball, cfg.geometric_b_z());
  return verify_bmsb_process(cfg.true_system, cell.factory, cfg.w_dist, cell.eta,
                             Eigen::VectorXd::Zero(cfg.n()), params, w_ball.s, times, L, H, M,
                             rng);
}

inline BmsbReport verify_bmsb(const ExperimentConfig& cfg, RngStream rng) {
  return verify_bmsb(cfg, cfg.bmsb_times, cfg.bmsb_directions, cfg.bmsb_histories,
                     cfg.bmsb_samples, rng);
}

inline void write_manifest(const ExperimentConfig& cfg, const std::string& command,
                           const std::filesystem::path& out_dir) {
  nlohmann::json manifest{{"version", kVersion},
                          {"command", command},
                          {"seed", cfg.master_seed},
                          {"config_hash", config_hash(cfg)},
                          {"config", cfg}};
  std::ofstream f(out_dir / "manifest.json", std::ios::binary);
  f << manifest.dump(2) << "\n";
}

}  // namespace sysid
