#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "json.hpp"
#include "sysid/bounds.hpp"
#include "sysid/noise.hpp"
#include "sysid/policy.hpp"
#include "sysid/rng.hpp"
#include "sysid/simulate.hpp"
#include "sysid/system.hpp"

namespace sysid {

/// Rebuild a policy from its factory and drive it across records 0..t of the
/// prefix, so that any internal state (warm starts, memory) matches what the
/// simulator had. The replayed nominal inputs are checked against the
/// recorded ones; a mismatch means the factory does not reconstruct the
/// policy that generated the prefix.
inline std::unique_ptr<Policy> replay_policy(const PolicyFactory& factory,
                                             const Trajectory& prefix, long t,
                                             double check_tol = 1e-6) {
  if (t < 0 || t >= prefix.length()) throw std::out_of_range("replay_policy: t outside prefix");
  std::unique_ptr<Policy> policy = factory();
  for (long s = 0; s <= t; ++s) {
    const Eigen::VectorXd u_nom = policy->decide(HistoryView(prefix, s));
    const Eigen::VectorXd& recorded = prefix.u_nominal[static_cast<std::size_t>(s)];
    if ((u_nom - recorded).cwiseAbs().maxCoeff() > check_tol)
      throw std::runtime_error("replay_policy: replayed input diverges from prefix at s=" +
                               std::to_string(s));
  }
  return policy;
}

/// One-step extension of a held prefix under fresh draws (w_t, eta_{t+1}):
/// overwrite record t's process noise, recompute x_{t+1}, query the policy at
/// t+1, and return z_{t+1} = (x_{t+1}, u_{t+1}). The same arithmetic path as
/// simulate(), so equal draws give bit-equal covariates.
inline Eigen::VectorXd roll_z_next(const SystemParams& system, Policy& policy, Trajectory& ext,
                                   const Eigen::VectorXd& w_t, const Eigen::VectorXd& eta_next) {
  const long t = ext.length() - 1;
  const auto ti = static_cast<std::size_t>(t);
  ext.w[ti] = w_t;
  ext.x[ti + 1] = step(system, ext.x[ti], ext.u[ti], w_t);
  const Eigen::VectorXd u_nom = policy.decide(HistoryView(ext, t + 1));
  Eigen::VectorXd z(system.n() + system.m());
  z << ext.x[ti + 1], u_nom + eta_next;
  return z;
}

/// Empirical conditional small-ball probability
///   P(|lambda' z_{t+1}| >= s_z | F_t)
/// with F_t = {w_0..w_{t-1}, eta_0..eta_t} held fixed by the prefix (so u_t
/// and the mean of x_{t+1} are fixed) and M fresh (w_t, eta_{t+1}) pairs.
inline double conditional_smallball(const SystemParams& system, const PolicyFactory& factory,
                                    const NoiseSpec& w_dist, const NoiseSpec& eta_dist,
                                    const Trajectory& prefix, long t,
                                    const Eigen::VectorXd& lambda, double s_z, long M,
                                    RngStream rng) {
  if (t < 0 || t >= prefix.length())
    throw std::out_of_range("conditional_smallball: t outside prefix");
  if (lambda.size() != system.n() + system.m())
    throw std::invalid_argument("conditional_smallball: direction dimension mismatch");
  if (std::abs(lambda.norm() - 1.0) > 1e-10)
    throw std::invalid_argument("conditional_smallball: direction must be unit length");
  if (M < 1) throw std::invalid_argument("conditional_smallball: M must be >= 1");

  std::unique_ptr<Policy> policy = replay_policy(factory, prefix, t);
  Trajectory ext = prefix.prefix(t + 1);
  RngStream w_rng = rng.substream(kProcessNoiseStream);
  RngStream eta_rng = rng.substream(kExcitationStream);

  long hits = 0;
  for (long i = 0; i < M; ++i) {
    const Eigen::VectorXd w_new = w_dist.sample(w_rng);
    const Eigen::VectorXd eta_new = eta_dist.sample(eta_rng);
    const Eigen::VectorXd z = roll_z_next(system, *policy, ext, w_new, eta_new);
    if (std::abs(lambda.dot(z)) >= s_z) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(M);
}

struct BmsbEntry {
  int history = 0;
  long t = 0;
  int direction = 0;
  double probability = 0.0;
};

struct BmsbReport {
  std::vector<long> times;
  std::vector<Eigen::VectorXd> directions;
  std::vector<BmsbEntry> entries;
  double min_probability = 1.0;
  double p_z = 0.0;
  double s_z = 0.0;
  double threshold = 0.0;  // p_z - 3 sqrt(p_z / M)
  bool pass = false;
  long M = 0;
  int H = 0;
  int L = 0;
};

/// Direction set for the check: the 2d signed axes first, then two
/// deterministic near-state-axis directions straddling the 1/k_0 split of
/// the case analysis (k_0 = max(2/sqrt(3), 4 b_z / s_w)), then uniformly
/// random unit vectors. The weakest constant governs directions with a large
/// input component, so random directions alone would under-test the split.
inline std::vector<Eigen::VectorXd> bmsb_directions(int n, int m, int L, double b_z, double s_w,
                                                    RngStream rng) {
  const int d = n + m;
  std::vector<Eigen::VectorXd> dirs;
  for (int i = 0; i < d && static_cast<int>(dirs.size()) < L; ++i) {
    for (double sign : {1.0, -1.0}) {
      if (static_cast<int>(dirs.size()) >= L) break;
      Eigen::VectorXd e = Eigen::VectorXd::Zero(d);
      e(i) = sign;
      dirs.push_back(e);
    }
  }
  const double k0 = std::max(2.0 / std::sqrt(3.0), 4.0 * b_z / s_w);
  for (double eps : {0.5 / k0, std::min(2.0 / k0, 1.0 / std::sqrt(2.0))}) {
    if (static_cast<int>(dirs.size()) >= L) break;
    Eigen::VectorXd v = Eigen::VectorXd::Zero(d);
    v(0) = std::sqrt(1.0 - eps * eps);
    v(n) = eps;
    dirs.push_back(v);
  }
  while (static_cast<int>(dirs.size()) < L) {
    Eigen::VectorXd v(d);
    for (int i = 0; i < d; ++i) v(i) = rng.normal();
    const double norm = v.norm();
    if (norm == 0.0) continue;
    dirs.push_back(v / norm);
  }
  return dirs;
}

/// Monte-Carlo check of the (1, s_z^2 I, p_z) small-ball condition on the
/// actual closed-loop process: H independent history seeds, the given probe
/// times, and L unit directions. Sampled histories and directions give
/// evidence for the almost-sure condition, not a proof.
inline BmsbReport verify_bmsb_process(const SystemParams& system, const PolicyFactory& factory,
                                      const NoiseSpec& w_dist, const NoiseSpec& eta_dist,
                                      const Eigen::VectorXd& x0, const BmsbParams& params,
                                      double s_w, const std::vector<long>& times, int L, int H,
                                      long M, RngStream rng) {
  if (times.empty() || L < 1 || H < 1 || M < 1)
    throw std::invalid_argument("verify_bmsb: all counts must be >= 1");

  BmsbReport report;
  report.times = times;
  report.p_z = params.p_z;
  report.s_z = params.s_z;
  report.M = M;
  report.H = H;
  report.L = L;
  report.threshold = params.p_z - 3.0 * std::sqrt(params.p_z / static_cast<double>(M));
  report.directions =
      bmsb_directions(system.n(), system.m(), L, params.b_z, s_w, rng.substream(7));

  const long horizon = *std::max_element(times.begin(), times.end()) + 1;
  for (int h = 0; h < H; ++h) {
    std::unique_ptr<Policy> gen = factory();
    const Trajectory prefix = simulate(system, *gen, w_dist, eta_dist, x0, horizon,
                                       rng.substream(100 + static_cast<std::uint64_t>(h)));
    for (long t : times) {
      for (int li = 0; li < static_cast<int>(report.directions.size()); ++li) {
        RngStream inner = rng.substream(mix64((static_cast<std::uint64_t>(h) << 40) ^
                                              (static_cast<std::uint64_t>(t) << 16) ^
                                              static_cast<std::uint64_t>(li)));
        const double p = conditional_smallball(system, factory, w_dist, eta_dist, prefix, t,
                                               report.directions[static_cast<std::size_t>(li)],
                                               params.s_z, M, inner);
        report.entries.push_back({h, t, li, p});
        report.min_probability = std::min(report.min_probability, p);
      }
    }
  }
  report.pass = report.min_probability >= report.threshold;
  return report;
}

inline void to_json(nlohmann::json& j, const BmsbReport& r) {
  auto dirs = nlohmann::json::array();
  for (const auto& d : r.directions) dirs.push_back(std::vector<double>(d.begin(), d.end()));
  auto entries = nlohmann::json::array();
  for (const auto& e : r.entries)
    entries.push_back({{"history", e.history},
                       {"t", e.t},
                       {"direction", e.direction},
                       {"probability", e.probability}});
  j = nlohmann::json{{"times", r.times},
                     {"directions", dirs},
                     {"entries", entries},
                     {"min_probability", r.min_probability},
                     {"p_z", r.p_z},
                     {"s_z", r.s_z},
                     {"threshold", r.threshold},
                     {"pass", r.pass},
                     {"M", r.M},
                     {"H", r.H},
                     {"L", r.L}};
}

inline void write_csv(const BmsbReport& r, std::ostream& os) {
  os << "history,t,direction,probability\n";
  for (const auto& e : r.entries)
    os << e.history << ',' << e.t << ',' << e.direction << ',' << fmt_double(e.probability)
       << "\n";
}

}  // namespace sysid
