#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <tuple>

#include "json.hpp"

namespace sysid {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Dense convex QP: minimize 1/2 v'Pv + q'v subject to l <= Av <= u.
/// Bounds may be -inf/+inf.
struct QuadProgram {
  Eigen::MatrixXd P;
  Eigen::VectorXd q;
  Eigen::MatrixXd A;
  Eigen::VectorXd l;
  Eigen::VectorXd u;

  int num_vars() const { return static_cast<int>(P.rows()); }
  int num_cons() const { return static_cast<int>(A.rows()); }

  void validate() const {
    if (P.rows() != P.cols()) throw std::invalid_argument("QuadProgram: P must be square");
    if (q.size() != P.rows()) throw std::invalid_argument("QuadProgram: q dimension mismatch");
    if (A.cols() != P.rows()) throw std::invalid_argument("QuadProgram: A column mismatch");
    if (l.size() != A.rows() || u.size() != A.rows())
      throw std::invalid_argument("QuadProgram: bound dimension mismatch");
    const double pscale = P.cwiseAbs().maxCoeff();
    if ((P - P.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, pscale))
      throw std::invalid_argument("QuadProgram: P not symmetric");
    for (int i = 0; i < l.size(); ++i)
      if (!(l(i) <= u(i))) throw std::invalid_argument("QuadProgram: l > u at row " + std::to_string(i));
  }

  double objective(const Eigen::VectorXd& v) const {
    return 0.5 * v.dot(P * v) + q.dot(v);
  }
};

enum class QpStatus { solved, max_iterations, primal_infeasible };

inline std::string to_string(QpStatus s) {
  switch (s) {
    case QpStatus::solved: return "solved";
    case QpStatus::max_iterations: return "max_iterations";
    case QpStatus::primal_infeasible: return "primal_infeasible";
  }
  return "unknown";
}

struct QpSolution {
  Eigen::VectorXd v;
  Eigen::VectorXd y;  // constraint multipliers
  QpStatus status = QpStatus::max_iterations;
  double primal_residual = kInf;
  double dual_residual = kInf;
  int iterations = 0;
  double objective = kInf;
};

struct QpSettings {
  double eps_abs = 1e-8;
  double eps_rel = 1e-8;
  int max_iter = 20000;
  double rho = 0.1;        // splitting penalty, fixed (no adaptive rho)
  double sigma = 1e-6;     // primal regularization
  double alpha = 1.6;      // over-relaxation
  int ruiz_sweeps = 10;
  int check_every = 25;
  double eps_pinf = 1e-7;  // infeasibility certificate tolerance
};

/// Independent optimality check: constraint violation, stationarity, and
/// complementarity gap, all in the infinity norm.
inline std::tuple<double, double, double> kkt_residuals(const QuadProgram& qp,
                                                        const Eigen::VectorXd& v,
                                                        const Eigen::VectorXd& y) {
  if (v.size() != qp.num_vars() || y.size() != qp.num_cons())
    throw std::invalid_argument("kkt_residuals: dimension mismatch");
  const Eigen::VectorXd av = qp.A * v;
  double primal = 0.0;
  double comp = 0.0;
  for (int i = 0; i < av.size(); ++i) {
    primal = std::max(primal, std::max(qp.l(i) - av(i), av(i) - qp.u(i)));
    if (y(i) > 0.0) {
      const double slack = qp.u(i) - av(i);
      comp = std::max(comp, std::isfinite(slack) ? std::abs(y(i) * slack) : kInf);
    } else if (y(i) < 0.0) {
      const double slack = av(i) - qp.l(i);
      comp = std::max(comp, std::isfinite(slack) ? std::abs(y(i) * slack) : kInf);
    }
  }
  primal = std::max(primal, 0.0);
  const double dual = (qp.P * v + qp.q + qp.A.transpose() * y).cwiseAbs().maxCoeff();
  return {primal, dual, comp};
}

/// Operator-splitting solver for dense convex QPs.
///
/// Alternates a regularized linear solve with projection of the auxiliary
/// constraint variables onto [l, u] and a dual ascent step. The problem data
/// are Ruiz-equilibrated once at construction; the KKT matrix factorization
/// is cached, so changing q or the bounds between solves is cheap. A solver
/// instance carries warm-start state and is single-owner.
class QpSolver {
 public:
  explicit QpSolver(QuadProgram qp, QpSettings settings = {})
      : qp_(std::move(qp)), s_(settings) {
    qp_.validate();
    const int nv = qp_.num_vars();
    const int nc = qp_.num_cons();

    // Ruiz equilibration on the stacked [P A'; A 0] data.
    d_ = Eigen::VectorXd::Ones(nv);
    e_ = Eigen::VectorXd::Ones(nc);
    Ps_ = qp_.P;
    As_ = qp_.A;
    for (int sweep = 0; sweep < s_.ruiz_sweeps; ++sweep) {
      for (int j = 0; j < nv; ++j) {
        double norm = std::max(Ps_.col(j).cwiseAbs().maxCoeff(),
                               nc > 0 ? As_.col(j).cwiseAbs().maxCoeff() : 0.0);
        const double f = norm > 0.0 ? 1.0 / std::sqrt(norm) : 1.0;
        Ps_.col(j) *= f;
        Ps_.row(j) *= f;
        if (nc > 0) As_.col(j) *= f;
        d_(j) *= f;
      }
      for (int i = 0; i < nc; ++i) {
        const double norm = As_.row(i).cwiseAbs().maxCoeff();
        const double f = norm > 0.0 ? 1.0 / std::sqrt(norm) : 1.0;
        As_.row(i) *= f;
        e_(i) *= f;
      }
    }
    // Cost normalization so the fixed rho stays adequate across scales.
    double pnorm = 0.0;
    for (int j = 0; j < nv; ++j) pnorm += Ps_.col(j).cwiseAbs().maxCoeff();
    pnorm = nv > 0 ? pnorm / nv : 0.0;
    const double qnorm = (d_.asDiagonal() * qp_.q).cwiseAbs().maxCoeff();
    cost_scale_ = 1.0 / std::max(1.0, std::max(pnorm, qnorm));
    Ps_ *= cost_scale_;

    kkt_.compute(Ps_ + s_.sigma * Eigen::MatrixXd::Identity(nv, nv) +
                 s_.rho * As_.transpose() * As_);
    if (kkt_.info() != Eigen::Success)
      throw std::runtime_error("QpSolver: KKT factorization failed");

    refresh_scaled_vectors();
    v_ = Eigen::VectorXd::Zero(nv);
    z_ = Eigen::VectorXd::Zero(nc);
    y_ = Eigen::VectorXd::Zero(nc);
  }

  const QuadProgram& problem() const { return qp_; }

  void update_linear_cost(const Eigen::VectorXd& q) {
    if (q.size() != qp_.q.size()) throw std::invalid_argument("update_linear_cost: size mismatch");
    qp_.q = q;
    qs_ = cost_scale_ * d_.asDiagonal() * q;
  }

  void update_bounds(const Eigen::VectorXd& l, const Eigen::VectorXd& u) {
    if (l.size() != qp_.l.size() || u.size() != qp_.u.size())
      throw std::invalid_argument("update_bounds: size mismatch");
    qp_.l = l;
    qp_.u = u;
    ls_ = scale_bound(l);
    us_ = scale_bound(u);
  }

  /// Seed the next solve from an unscaled primal/dual pair.
  void warm_start(const Eigen::VectorXd& v, const Eigen::VectorXd& y) {
    if (v.size() != v_.size() || y.size() != y_.size())
      throw std::invalid_argument("warm_start: size mismatch");
    v_ = d_.cwiseInverse().asDiagonal() * v;
    y_ = cost_scale_ * e_.cwiseInverse().asDiagonal() * y;
    z_ = As_ * v_;
  }

  void cold_start() {
    v_.setZero();
    z_.setZero();
    y_.setZero();
  }

  QpSolution solve() {
    const int nc = qp_.num_cons();
    QpSolution sol;
    for (int it = 1; it <= s_.max_iter; ++it) {
      const Eigen::VectorXd rhs =
          s_.sigma * v_ - qs_ + As_.transpose() * (s_.rho * z_ - y_);
      const Eigen::VectorXd v_tilde = kkt_.solve(rhs);
      const Eigen::VectorXd z_tilde = As_ * v_tilde;

      v_ = s_.alpha * v_tilde + (1.0 - s_.alpha) * v_;
      const Eigen::VectorXd z_relaxed = s_.alpha * z_tilde + (1.0 - s_.alpha) * z_;
      Eigen::VectorXd z_next = z_relaxed + y_ / s_.rho;
      for (int i = 0; i < nc; ++i) z_next(i) = std::clamp(z_next(i), ls_(i), us_(i));
      const Eigen::VectorXd dy = s_.rho * (z_relaxed - z_next);
      y_ += dy;
      z_ = z_next;

      if (it % s_.check_every == 0 || it == s_.max_iter) {
        const Eigen::VectorXd v = d_.asDiagonal() * v_;
        const Eigen::VectorXd y = e_.asDiagonal() * y_ / cost_scale_;
        const Eigen::VectorXd av = qp_.A * v;
        const Eigen::VectorXd z = e_.cwiseInverse().asDiagonal() * z_;
        const Eigen::VectorXd pv = qp_.P * v;
        const Eigen::VectorXd aty = qp_.A.transpose() * y;

        const double r_prim = nc > 0 ? (av - z).cwiseAbs().maxCoeff() : 0.0;
        const double r_dual = (pv + qp_.q + aty).cwiseAbs().maxCoeff();
        const double scale_p =
            nc > 0 ? std::max(av.cwiseAbs().maxCoeff(), z.cwiseAbs().maxCoeff()) : 0.0;
        const double scale_d = std::max({pv.cwiseAbs().maxCoeff(), aty.cwiseAbs().maxCoeff(),
                                         qp_.q.cwiseAbs().maxCoeff()});

        if (r_prim <= s_.eps_abs + s_.eps_rel * scale_p &&
            r_dual <= s_.eps_abs + s_.eps_rel * scale_d && r_dual <= 10.0 * s_.eps_abs) {
          sol.status = QpStatus::solved;
          sol.v = v;
          sol.y = y;
          sol.primal_residual = r_prim;
          sol.dual_residual = r_dual;
          sol.iterations = it;
          sol.objective = qp_.objective(v);
          return sol;
        }
        if (nc > 0 && primal_infeasible(dy)) {
          sol.status = QpStatus::primal_infeasible;
          sol.v = v;
          sol.y = y;
          sol.primal_residual = r_prim;
          sol.dual_residual = r_dual;
          sol.iterations = it;
          sol.objective = kInf;
          return sol;
        }
      }
    }
    sol.status = QpStatus::max_iterations;
    sol.v = d_.asDiagonal() * v_;
    sol.y = e_.asDiagonal() * y_ / cost_scale_;
    sol.iterations = s_.max_iter;
    const Eigen::VectorXd av = qp_.A * sol.v;
    sol.primal_residual =
        nc > 0 ? (av - e_.cwiseInverse().asDiagonal() * z_).cwiseAbs().maxCoeff() : 0.0;
    sol.dual_residual =
        (qp_.P * sol.v + qp_.q + qp_.A.transpose() * sol.y).cwiseAbs().maxCoeff();
    sol.objective = qp_.objective(sol.v);
    return sol;
  }

  nlohmann::json dump() const {
    auto mat = [](const Eigen::MatrixXd& M) {
      std::vector<std::vector<double>> rows(static_cast<std::size_t>(M.rows()));
      for (Eigen::Index i = 0; i < M.rows(); ++i)
        rows[static_cast<std::size_t>(i)].assign(M.row(i).begin(), M.row(i).end());
      return rows;
    };
    return nlohmann::json{{"P", mat(qp_.P)},
                          {"q", std::vector<double>(qp_.q.begin(), qp_.q.end())},
                          {"A", mat(qp_.A)},
                          {"l", std::vector<double>(qp_.l.begin(), qp_.l.end())},
                          {"u", std::vector<double>(qp_.u.begin(), qp_.u.end())}};
  }

 private:
  void refresh_scaled_vectors() {
    qs_ = cost_scale_ * d_.asDiagonal() * qp_.q;
    ls_ = scale_bound(qp_.l);
    us_ = scale_bound(qp_.u);
  }

  Eigen::VectorXd scale_bound(const Eigen::VectorXd& b) const {
    Eigen::VectorXd out(b.size());
    for (int i = 0; i < b.size(); ++i) out(i) = std::isfinite(b(i)) ? e_(i) * b(i) : b(i);
    return out;
  }

  /// Certificate test on the (unscaled) dual increment: a direction with
  /// A'dy ~ 0 and negative constraint support function witnesses that no
  /// point satisfies l <= Av <= u.
  bool primal_infeasible(const Eigen::VectorXd& dy_scaled) const {
    Eigen::VectorXd dy = e_.asDiagonal() * dy_scaled / cost_scale_;
    const double norm = dy.cwiseAbs().maxCoeff();
    if (norm <= s_.eps_pinf) return false;
    dy /= norm;
    if ((qp_.A.transpose() * dy).cwiseAbs().maxCoeff() > s_.eps_pinf) return false;
    double support = 0.0;
    for (int i = 0; i < dy.size(); ++i) {
      if (dy(i) > s_.eps_pinf) {
        if (!std::isfinite(qp_.u(i))) return false;
        support += qp_.u(i) * dy(i);
      } else if (dy(i) < -s_.eps_pinf) {
        if (!std::isfinite(qp_.l(i))) return false;
        support += qp_.l(i) * dy(i);
      }
    }
    return support < -s_.eps_pinf;
  }

  QuadProgram qp_;
  QpSettings s_;
  Eigen::VectorXd d_, e_;  // equilibration diagonals
  double cost_scale_ = 1.0;
  Eigen::MatrixXd Ps_, As_;
  Eigen::VectorXd qs_, ls_, us_;
  Eigen::LDLT<Eigen::MatrixXd> kkt_;
  Eigen::VectorXd v_, z_, y_;  // scaled iterates
};

/// One-shot convenience entry point.
inline QpSolution solve(const QuadProgram& qp, double eps_abs = 1e-8, double eps_rel = 1e-8,
                        int max_iter = 20000) {
  QpSettings s;
  s.eps_abs = eps_abs;
  s.eps_rel = eps_rel;
  s.max_iter = max_iter;
  QpSolver solver(qp, s);
  return solver.solve();
}

}  // namespace sysid
