#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>

#include "sysid/noise.hpp"
#include "sysid/system.hpp"

namespace sysid {

/// Policy failure with the time index attached.
class PolicyError : public std::runtime_error {
 public:
  PolicyError(long t, const std::string& reason)
      : std::runtime_error(reason + " at t=" + std::to_string(t)), t(t), reason(reason) {}
  long t;
  std::string reason;
};

/// Read-only view of the closed-loop history available to a policy at time t:
/// complete records for s < t plus the current state x_t.
class HistoryView {
 public:
  HistoryView(const Trajectory& traj, long t) : traj_(&traj), t_(t) {
    if (t < 0 || t > traj.length()) throw std::out_of_range("HistoryView: t outside trajectory");
  }

  long t() const { return t_; }
  int n() const { return traj_->n; }
  int m() const { return traj_->m; }

  const Eigen::VectorXd& x() const { return traj_->x[static_cast<std::size_t>(t_)]; }

  const Eigen::VectorXd& x(long s) const { return at(traj_->x, s, t_); }
  const Eigen::VectorXd& u(long s) const { return at(traj_->u, s, t_ - 1); }
  const Eigen::VectorXd& u_nominal(long s) const { return at(traj_->u_nominal, s, t_ - 1); }
  const Eigen::VectorXd& eta(long s) const { return at(traj_->eta, s, t_ - 1); }
  const Eigen::VectorXd& w(long s) const { return at(traj_->w, s, t_ - 1); }

 private:
  static const Eigen::VectorXd& at(const std::vector<Eigen::VectorXd>& v, long s, long last) {
    if (s < 0 || s > last) throw std::out_of_range("HistoryView: index outside visible history");
    return v[static_cast<std::size_t>(s)];
  }

  const Trajectory* traj_;
  long t_;
};

/// Nominal policy interface. Implementations may be nonlinear, time-varying,
/// and history-dependent; they must produce finite outputs of dimension m.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual Eigen::VectorXd decide(const HistoryView& h) = 0;
  virtual void reset() {}
};

using PolicyFactory = std::function<std::unique_ptr<Policy>()>;

/// Memoryless time-invariant u = K x.
class LinearPolicy final : public Policy {
 public:
  explicit LinearPolicy(Eigen::MatrixXd K) : K_(std::move(K)) {
    if (!K_.allFinite()) throw std::invalid_argument("LinearPolicy: non-finite gain");
  }

  static LinearPolicy zero(int m, int n) { return LinearPolicy(Eigen::MatrixXd::Zero(m, n)); }

  Eigen::VectorXd decide(const HistoryView& h) override { return K_ * h.x(); }

  const Eigen::MatrixXd& gain() const { return K_; }

 private:
  Eigen::MatrixXd K_;
};

/// Runs `inner` until the guard fires, then hands control to `safe`.
/// Time-varying and possibly discontinuous by construction.
class SwitchingPolicy final : public Policy {
 public:
  using Guard = std::function<bool(const HistoryView&)>;

  SwitchingPolicy(std::shared_ptr<Policy> inner, std::shared_ptr<Policy> safe, Guard guard)
      : inner_(std::move(inner)), safe_(std::move(safe)), guard_(std::move(guard)) {
    if (!inner_ || !safe_ || !guard_) throw std::invalid_argument("SwitchingPolicy: null argument");
  }

  Eigen::VectorXd decide(const HistoryView& h) override {
    return guard_(h) ? safe_->decide(h) : inner_->decide(h);
  }

  void reset() override {
    inner_->reset();
    safe_->reset();
  }

 private:
  std::shared_ptr<Policy> inner_;
  std::shared_ptr<Policy> safe_;
  Guard guard_;
};

/// A nominal policy bundled with its excitation distribution. The simulator
/// applies u_t = base(history) + eta_t, drawing eta_t from its own excitation
/// stream, and records the nominal input and excitation separately.
struct ExcitedPolicy {
  std::shared_ptr<Policy> base;
  NoiseSpec eta;
};

inline ExcitedPolicy excite(std::shared_ptr<Policy> base, NoiseSpec eta_dist) {
  if (!base) throw std::invalid_argument("excite: null base policy");
  return ExcitedPolicy{std::move(base), std::move(eta_dist)};
}

}  // namespace sysid
