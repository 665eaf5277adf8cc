#pragma once

#include <Eigen/Dense>
#include <stdexcept>

#include "sysid/noise.hpp"
#include "sysid/policy.hpp"
#include "sysid/rng.hpp"
#include "sysid/system.hpp"

namespace sysid {

// Substream ids used by simulate(); the BMSB checker relies on these to
// re-derive the exact draw sequence of a recorded trajectory.
inline constexpr std::uint64_t kProcessNoiseStream = 1;
inline constexpr std::uint64_t kExcitationStream = 2;

/// Rollout result that survives a mid-trajectory policy failure: the
/// completed prefix plus the failing time index.
struct SimulationOutcome {
  Trajectory traj;
  std::optional<long> failed_at;
  std::string error;
};

/// Closed-loop rollout of length T: u_t = policy(history) + eta_t,
/// x_{t+1} = A x_t + B u_t + w_t. Per step, the excitation draw precedes the
/// process-noise draw; each comes from its own substream of `rng`, so
/// replaying the same (seed, stream) reproduces the trajectory exactly, and
/// a shorter rollout equals the prefix of a longer one.
inline SimulationOutcome simulate_partial(const SystemParams& params, Policy& policy,
                                          const NoiseSpec& w_dist, const NoiseSpec& eta_dist,
                                          const Eigen::VectorXd& x0, long T, RngStream rng) {
  if (T < 1) throw std::invalid_argument("simulate: T must be >= 1");
  if (x0.size() != params.n()) throw std::invalid_argument("simulate: x0 has wrong dimension");
  if (w_dist.dim() != params.n())
    throw std::invalid_argument("simulate: w distribution has wrong dimension");
  if (eta_dist.dim() != params.m())
    throw std::invalid_argument("simulate: eta distribution has wrong dimension");

  RngStream w_rng = rng.substream(kProcessNoiseStream);
  RngStream eta_rng = rng.substream(kExcitationStream);

  SimulationOutcome out;
  Trajectory& traj = out.traj;
  traj.n = params.n();
  traj.m = params.m();
  traj.x.reserve(static_cast<std::size_t>(T) + 1);
  traj.u.reserve(static_cast<std::size_t>(T));
  traj.u_nominal.reserve(static_cast<std::size_t>(T));
  traj.eta.reserve(static_cast<std::size_t>(T));
  traj.w.reserve(static_cast<std::size_t>(T));
  traj.x.push_back(x0);

  for (long t = 0; t < T; ++t) {
    Eigen::VectorXd u_nom;
    try {
      u_nom = policy.decide(HistoryView(traj, t));
      if (u_nom.size() != params.m() || !u_nom.allFinite())
        throw PolicyError(t, "policy returned invalid input");
    } catch (const PolicyError& e) {
      out.failed_at = e.t;
      out.error = e.reason;
      return out;
    } catch (const std::exception& e) {
      out.failed_at = t;
      out.error = e.what();
      return out;
    }

    const Eigen::VectorXd eta = eta_dist.sample(eta_rng);
    const Eigen::VectorXd w = w_dist.sample(w_rng);
    const Eigen::VectorXd u = u_nom + eta;

    traj.x.push_back(step(params, traj.x.back(), u, w));
    traj.u.push_back(u);
    traj.u_nominal.push_back(u_nom);
    traj.eta.push_back(eta);
    traj.w.push_back(w);
  }
  return out;
}

inline Trajectory simulate(const SystemParams& params, Policy& policy, const NoiseSpec& w_dist,
                           const NoiseSpec& eta_dist, const Eigen::VectorXd& x0, long T,
                           RngStream rng) {
  SimulationOutcome out = simulate_partial(params, policy, w_dist, eta_dist, x0, T, rng);
  if (out.failed_at) throw PolicyError(*out.failed_at, out.error);
  return std::move(out.traj);
}

inline Trajectory simulate(const SystemParams& params, const ExcitedPolicy& excited,
                           const NoiseSpec& w_dist, const Eigen::VectorXd& x0, long T,
                           RngStream rng) {
  return simulate(params, *excited.base, w_dist, excited.eta, x0, T, rng);
}

}  // namespace sysid
