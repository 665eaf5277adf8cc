#pragma once

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>

#include "json.hpp"
#include "sysid/sets.hpp"
#include "sysid/system.hpp"

namespace sysid {

/// Least-squares identification result. theta_hat is the raw estimate,
/// theta_proj the clamp into the prior uncertainty set when one was applied.
struct Estimate {
  SystemParams theta_hat;
  std::optional<SystemParams> theta_proj;
  Eigen::MatrixXd gram;  // sum of z z', (n+m) x (n+m)
  bool rank_deficient = false;
  long samples = 0;
  double gram_condition = 0.0;
};

/// Streaming Gram/moment accumulation: memory stays O((n+m)^2) regardless of
/// the trajectory length. Accumulators over shards of the same trajectory
/// may be merged.
class LseAccumulator {
 public:
  LseAccumulator(int n, int m)
      : n_(n),
        m_(m),
        gram_(Eigen::MatrixXd::Zero(n + m, n + m)),
        moment_(Eigen::MatrixXd::Zero(n, n + m)) {}

  void add(const Eigen::VectorXd& z, const Eigen::VectorXd& x_next) {
    if (z.size() != n_ + m_ || x_next.size() != n_)
      throw std::invalid_argument("LseAccumulator::add: dimension mismatch");
    gram_.noalias() += z * z.transpose();
    moment_.noalias() += x_next * z.transpose();
    ++count_;
  }

  void merge(const LseAccumulator& other) {
    if (other.n_ != n_ || other.m_ != m_)
      throw std::invalid_argument("LseAccumulator::merge: dimension mismatch");
    gram_ += other.gram_;
    moment_ += other.moment_;
    count_ += other.count_;
  }

  long count() const { return count_; }
  const Eigen::MatrixXd& gram() const { return gram_; }

  /// theta_hat = moment * pinv(gram), pseudoinverse by SVD with singular
  /// values below 1e-10 of the largest treated as zero.
  Estimate solve() const {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(gram_, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& sv = svd.singularValues();
    const double cutoff = 1e-10 * (sv.size() > 0 ? sv(0) : 0.0);
    Eigen::VectorXd inv_sv = Eigen::VectorXd::Zero(sv.size());
    bool truncated = false;
    for (int i = 0; i < sv.size(); ++i) {
      if (sv(i) > cutoff && sv(i) > 0.0)
        inv_sv(i) = 1.0 / sv(i);
      else
        truncated = true;
    }
    const Eigen::MatrixXd pinv =
        svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose();

    Estimate est;
    est.theta_hat = SystemParams::from_stacked(moment_ * pinv, n_, m_);
    est.gram = gram_;
    est.rank_deficient = truncated;
    est.samples = count_;
    const double smin = sv.size() > 0 ? sv(sv.size() - 1) : 0.0;
    est.gram_condition = smin > 0.0 ? sv(0) / smin : kInfCond;
    return est;
  }

 private:
  static constexpr double kInfCond = std::numeric_limits<double>::infinity();
  int n_, m_;
  Eigen::MatrixXd gram_;
  Eigen::MatrixXd moment_;
  long count_ = 0;
};

/// Least-squares fit of (A, B) to one recorded trajectory.
inline Estimate lse(const Trajectory& traj) {
  if (traj.length() < 1) throw std::invalid_argument("lse: trajectory has no transitions");
  LseAccumulator acc(traj.n, traj.m);
  for (long t = 0; t < traj.length(); ++t)
    acc.add(traj.z(t), traj.x[static_cast<std::size_t>(t) + 1]);
  return acc.solve();
}

/// Entrywise clamp of theta into the uncertainty box: the exact
/// Frobenius-norm projection. (The exact spectral-norm projection differs in
/// dimension > 1 by up to a sqrt(n) factor and is not implemented.)
inline SystemParams project(const SystemParams& theta, const UncertaintySet& theta0) {
  if (theta.n() != theta0.n() || theta.m() != theta0.m())
    throw std::invalid_argument("project: shape mismatch");
  const Eigen::MatrixXd lo = theta0.center - theta0.halfwidth;
  const Eigen::MatrixXd hi = theta0.center + theta0.halfwidth;
  const Eigen::MatrixXd clamped = theta.stacked().cwiseMax(lo).cwiseMin(hi);
  return SystemParams::from_stacked(clamped, theta.n(), theta.m());
}

/// Largest singular value of the stacked difference [A B] - [A' B'].
inline double spectral_error(const SystemParams& a, const SystemParams& b) {
  if (a.n() != b.n() || a.m() != b.m()) throw std::invalid_argument("spectral_error: shape mismatch");
  const Eigen::MatrixXd diff = a.stacked() - b.stacked();
  return Eigen::JacobiSVD<Eigen::MatrixXd>(diff).singularValues()(0);
}

inline double frobenius_error(const SystemParams& a, const SystemParams& b) {
  return (a.stacked() - b.stacked()).norm();
}

inline void to_json(nlohmann::json& j, const Estimate& e) {
  j = nlohmann::json{{"theta_hat", e.theta_hat},
                     {"rank_deficient", e.rank_deficient},
                     {"samples", e.samples},
                     {"gram_condition", e.gram_condition}};
  if (e.theta_proj) j["theta_proj"] = *e.theta_proj;
}

}  // namespace sysid
