#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include "json.hpp"
#include "sysid/policy.hpp"
#include "sysid/qp.hpp"
#include "sysid/sets.hpp"
#include "sysid/system.hpp"

namespace sysid {

class DareError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class TerminalSetError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class RmpcInfeasibleError : public PolicyError {
 public:
  explicit RmpcInfeasibleError(long t) : PolicyError(t, "RMPC infeasible") {}
};

/// Discrete algebraic Riccati fixed point
///   P = Q + A'PA - A'PB (R + B'PB)^{-1} B'PA,
/// iterated from P = Q until the update falls below tol.
inline Eigen::MatrixXd solve_dare(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                  const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                                  double tol = 1e-12, long max_iter = 1'000'000) {
  Eigen::MatrixXd P = Q;
  for (long it = 0; it < max_iter; ++it) {
    const Eigen::MatrixXd BtP = B.transpose() * P;
    const Eigen::MatrixXd gain = (R + BtP * B).ldlt().solve(BtP * A);
    const Eigen::MatrixXd next = Q + A.transpose() * P * A - A.transpose() * P * B * gain;
    const double delta = (next - P).cwiseAbs().maxCoeff();
    P = next;
    if (!P.allFinite() || P.cwiseAbs().maxCoeff() > 1e12)
      throw DareError("DARE divergence: iterate blew up");
    if (delta <= tol * std::max(1.0, P.cwiseAbs().maxCoeff())) return P;
  }
  throw DareError("DARE divergence: no fixed point within iteration budget");
}

/// LQR feedback for the DARE solution: K = -(R + B'PB)^{-1} B'PA.
inline Eigen::MatrixXd lqr_gain(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                const Eigen::MatrixXd& R, const Eigen::MatrixXd& P) {
  const Eigen::MatrixXd BtP = B.transpose() * P;
  return -(R + BtP * B).ldlt().solve(BtP * A);
}

inline double spectral_radius(const Eigen::MatrixXd& M) {
  return M.eigenvalues().cwiseAbs().maxCoeff();
}

/// Tube-based RMPC configuration. K, P_f, and the terminal set may be given
/// explicitly; otherwise they are derived from the nominal model.
struct RmpcConfig {
  SystemParams nominal;       // (A_0, B_0)
  UncertaintySet theta0;      // entrywise box around the nominal model
  Eigen::MatrixXd Q;          // state weight, PSD
  Eigen::MatrixXd R;          // input weight, PD
  int horizon = 5;
  Box X;                      // state constraint
  Box U;                      // input constraint
  Box W;                      // process noise support
  Box H;                      // excitation support
  std::optional<Eigen::MatrixXd> K;
  std::optional<Eigen::MatrixXd> P_f;
  std::optional<Box> X_f;
  double tube_tol = 1e-9;

  void validate() const {
    const int n = nominal.n();
    const int m = nominal.m();
    if (horizon < 1) throw std::invalid_argument("RmpcConfig: horizon must be >= 1");
    if (Q.rows() != n || Q.cols() != n) throw std::invalid_argument("RmpcConfig: Q shape mismatch");
    if (R.rows() != m || R.cols() != m) throw std::invalid_argument("RmpcConfig: R shape mismatch");
    if (X.dim() != n || W.dim() != n) throw std::invalid_argument("RmpcConfig: state box mismatch");
    if (U.dim() != m || H.dim() != m) throw std::invalid_argument("RmpcConfig: input box mismatch");
    if (theta0.n() != n || theta0.m() != m)
      throw std::invalid_argument("RmpcConfig: uncertainty set shape mismatch");
  }
};

struct TubeFamily {
  Box S;        // one-step mismatch set
  Box S_eta;    // mismatch inflated by the excitation image
  Box S_K;      // tube of S under A_0 + B_0 K
  Box S_K_eta;  // tube of S_eta; used for constraint tightening
};

/// Mismatch and tube sets for a given feedback gain. The excitation enters
/// through the input channel, so the one-step disturbance seen by the nominal
/// error dynamics is B_0 eta; S_eta is S + image of H under B_0.
inline TubeFamily build_tubes(const RmpcConfig& cfg, const Eigen::MatrixXd& K) {
  const Eigen::MatrixXd A_K = cfg.nominal.A + cfg.nominal.B * K;
  TubeFamily f;
  f.S = mismatch_set(cfg.theta0, cfg.X, cfg.U, cfg.W);
  f.S_eta = minkowski_sum(f.S, linmap_overapprox(cfg.nominal.B, cfg.H));
  f.S_K = tube(A_K, f.S, cfg.tube_tol);
  f.S_K_eta = tube(A_K, f.S_eta, cfg.tube_tol);
  return f;
}

struct GainAndTerminal {
  Eigen::MatrixXd K;
  Eigen::MatrixXd P_f;
  Box X_f;
};

/// DARE-based feedback gain, terminal cost, and terminal set.
///
/// The terminal set is alpha * (X minus S_{K,eta}) with the largest alpha on
/// a 100-point grid that is invariant under the nominal closed loop and keeps
/// K X_f inside the tightened input set. The gain is additionally required to
/// stabilize every vertex of the uncertainty set (necessary but not
/// sufficient beyond scalar systems).
inline GainAndTerminal derive_gain_and_terminal(const RmpcConfig& cfg) {
  cfg.validate();
  GainAndTerminal out;
  if (cfg.K && cfg.P_f) {
    out.K = *cfg.K;
    out.P_f = *cfg.P_f;
  } else {
    out.P_f = cfg.P_f ? *cfg.P_f : solve_dare(cfg.nominal.A, cfg.nominal.B, cfg.Q, cfg.R);
    out.K = cfg.K ? *cfg.K : lqr_gain(cfg.nominal.A, cfg.nominal.B, cfg.R, out.P_f);
  }

  for (const Eigen::MatrixXd& vertex : cfg.theta0.vertices()) {
    const int n = cfg.nominal.n();
    const Eigen::MatrixXd Av = vertex.leftCols(n);
    const Eigen::MatrixXd Bv = vertex.rightCols(vertex.cols() - n);
    const double rho = spectral_radius(Av + Bv * out.K);
    if (rho >= 1.0)
      throw TerminalSetError("feedback gain does not stabilize an uncertainty vertex (spectral radius " +
                             std::to_string(rho) + ")");
  }

  if (cfg.X_f) {
    out.X_f = *cfg.X_f;
    return out;
  }

  const TubeFamily tubes = build_tubes(cfg, out.K);
  const Eigen::MatrixXd A_K = cfg.nominal.A + cfg.nominal.B * out.K;
  const Box X_tight = pontryagin_diff(cfg.X, tubes.S_K_eta);
  const Box U_for_terminal = pontryagin_diff(cfg.U, linmap_overapprox(out.K, tubes.S_K_eta));
  for (int i = 100; i >= 1; --i) {
    const double alpha = static_cast<double>(i) / 100.0;
    const Box candidate = X_tight.scaled(alpha);
    const bool invariant = candidate.contains_box(linmap_overapprox(A_K, candidate), 1e-12);
    const bool input_ok = U_for_terminal.contains_box(linmap_overapprox(out.K, candidate), 1e-12);
    if (invariant && input_ok) {
      out.X_f = candidate;
      return out;
    }
  }
  throw TerminalSetError("no invariant terminal set on the alpha grid");
}

/// Time-indexed reference g_t = amplitude * sin(t / period_scale), equal in
/// every state coordinate.
inline std::function<Eigen::VectorXd(long)> tracking_target(int n, double amplitude,
                                                            double period_scale) {
  return [n, amplitude, period_scale](long t) {
    return Eigen::VectorXd::Constant(n, amplitude * std::sin(static_cast<double>(t) / period_scale))
        .eval();
  };
}

/// One solved open-loop plan.
struct RmpcPlan {
  std::vector<Eigen::VectorXd> x_nom;  // length W+1, x_nom[0] = x_t
  std::vector<Eigen::VectorXd> u_nom;  // length W
  Eigen::VectorXd v;                   // decision variables
  QpStatus status = QpStatus::max_iterations;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double objective = 0.0;
};

/// Precomputed condensed form shared by all policy clones for one
/// configuration. With u = K x + v the nominal prediction is affine in the
/// stacked corrections v, so the QP cost matrix and constraint rows are
/// constant; only the linear cost and the bounds move with (x_t, targets).
class RmpcIngredients {
 public:
  explicit RmpcIngredients(RmpcConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    auto gt = derive_gain_and_terminal(cfg_);
    K_ = gt.K;
    P_f_ = gt.P_f;
    X_f_ = gt.X_f;
    tubes_ = build_tubes(cfg_, K_);
    X_tight_ = pontryagin_diff(cfg_.X, tubes_.S_K_eta);
    // The realized input is u_t = u_nom + eta_t, so the excitation support is
    // subtracted on top of the tube tightening.
    U_tight_ =
        pontryagin_diff(pontryagin_diff(cfg_.U, linmap_overapprox(K_, tubes_.S_K_eta)), cfg_.H);

    const int n = cfg_.nominal.n();
    const int m = cfg_.nominal.m();
    const int W = cfg_.horizon;
    A_K_ = cfg_.nominal.A + cfg_.nominal.B * K_;

    // Powers of the closed-loop map and the prediction blocks:
    // x_k = F[k] x_0 + G[k] v, k = 0..W.
    F_.resize(static_cast<std::size_t>(W) + 1);
    G_.resize(static_cast<std::size_t>(W) + 1);
    F_[0] = Eigen::MatrixXd::Identity(n, n);
    G_[0] = Eigen::MatrixXd::Zero(n, W * m);
    for (int k = 1; k <= W; ++k) {
      F_[static_cast<std::size_t>(k)] = A_K_ * F_[static_cast<std::size_t>(k - 1)];
      Eigen::MatrixXd Gk = A_K_ * G_[static_cast<std::size_t>(k - 1)];
      Gk.middleCols((k - 1) * m, m) += cfg_.nominal.B;
      G_[static_cast<std::size_t>(k)] = std::move(Gk);
    }
    // u_k = Hu[k] x_0 + Ju[k] v, k = 0..W-1.
    Hu_.resize(static_cast<std::size_t>(W));
    Ju_.resize(static_cast<std::size_t>(W));
    for (int k = 0; k < W; ++k) {
      Hu_[static_cast<std::size_t>(k)] = K_ * F_[static_cast<std::size_t>(k)];
      Eigen::MatrixXd Jk = K_ * G_[static_cast<std::size_t>(k)];
      Jk.middleCols(k * m, m) += Eigen::MatrixXd::Identity(m, m);
      Ju_[static_cast<std::size_t>(k)] = std::move(Jk);
    }

    // Constant quadratic cost: stage costs for k = 0..W-1 plus terminal.
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(W * m, W * m);
    for (int k = 0; k < W; ++k) {
      P += 2.0 * G_[static_cast<std::size_t>(k)].transpose() * cfg_.Q * G_[static_cast<std::size_t>(k)];
      P += 2.0 * Ju_[static_cast<std::size_t>(k)].transpose() * cfg_.R * Ju_[static_cast<std::size_t>(k)];
    }
    P += 2.0 * G_[static_cast<std::size_t>(W)].transpose() * P_f_ * G_[static_cast<std::size_t>(W)];
    P = 0.5 * (P + P.transpose());

    // Constant constraint rows: planned states k = 1..W-1 in the tightened
    // state set, the endpoint in the terminal set, inputs k = 0..W-1 in the
    // tightened input set. x_0 is data, not a decision; its containment in X
    // follows from the previous step's tube.
    const int rows = (W - 1) * n + n + W * m;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(rows, W * m);
    int r = 0;
    for (int k = 1; k < W; ++k, r += n) A.middleRows(r, n) = G_[static_cast<std::size_t>(k)];
    A.middleRows(r, n) = G_[static_cast<std::size_t>(W)];
    r += n;
    for (int k = 0; k < W; ++k, r += m) A.middleRows(r, m) = Ju_[static_cast<std::size_t>(k)];

    QuadProgram qp;
    qp.P = std::move(P);
    qp.q = Eigen::VectorXd::Zero(W * m);
    qp.A = std::move(A);
    qp.l = Eigen::VectorXd::Constant(rows, -kInf);
    qp.u = Eigen::VectorXd::Constant(rows, kInf);
    template_qp_ = std::move(qp);
  }

  const RmpcConfig& config() const { return cfg_; }
  const Eigen::MatrixXd& K() const { return K_; }
  const Eigen::MatrixXd& P_f() const { return P_f_; }
  const Eigen::MatrixXd& A_K() const { return A_K_; }
  const Box& terminal_set() const { return X_f_; }
  const TubeFamily& tubes() const { return tubes_; }
  const Box& tightened_state_set() const { return X_tight_; }
  const Box& tightened_input_set() const { return U_tight_; }
  const QuadProgram& template_qp() const { return template_qp_; }

  /// Linear cost for state x0 and references g[0..W] (g may be empty for
  /// regulation).
  Eigen::VectorXd linear_cost(const Eigen::VectorXd& x0,
                              const std::vector<Eigen::VectorXd>& g) const {
    const int W = cfg_.horizon;
    Eigen::VectorXd q = Eigen::VectorXd::Zero(W * cfg_.nominal.m());
    for (int k = 0; k < W; ++k) {
      Eigen::VectorXd xi = F_[static_cast<std::size_t>(k)] * x0;
      if (!g.empty()) xi -= g[static_cast<std::size_t>(k)];
      q += 2.0 * G_[static_cast<std::size_t>(k)].transpose() * (cfg_.Q * xi);
      q += 2.0 * Ju_[static_cast<std::size_t>(k)].transpose() *
           (cfg_.R * (Hu_[static_cast<std::size_t>(k)] * x0));
    }
    Eigen::VectorXd xi = F_[static_cast<std::size_t>(W)] * x0;
    if (!g.empty()) xi -= g[static_cast<std::size_t>(W)];
    q += 2.0 * G_[static_cast<std::size_t>(W)].transpose() * (P_f_ * xi);
    return q;
  }

  /// Constraint bounds for state x0.
  std::pair<Eigen::VectorXd, Eigen::VectorXd> bounds(const Eigen::VectorXd& x0) const {
    const int n = cfg_.nominal.n();
    const int m = cfg_.nominal.m();
    const int W = cfg_.horizon;
    const int rows = (W - 1) * n + n + W * m;
    Eigen::VectorXd l(rows), u(rows);
    int r = 0;
    for (int k = 1; k < W; ++k, r += n) {
      const Eigen::VectorXd shift = F_[static_cast<std::size_t>(k)] * x0;
      l.segment(r, n) = X_tight_.lower() - shift;
      u.segment(r, n) = X_tight_.upper() - shift;
    }
    {
      const Eigen::VectorXd shift = F_[static_cast<std::size_t>(W)] * x0;
      l.segment(r, n) = X_f_.lower() - shift;
      u.segment(r, n) = X_f_.upper() - shift;
      r += n;
    }
    for (int k = 0; k < W; ++k, r += m) {
      const Eigen::VectorXd shift = Hu_[static_cast<std::size_t>(k)] * x0;
      l.segment(r, m) = U_tight_.lower() - shift;
      u.segment(r, m) = U_tight_.upper() - shift;
    }
    return {std::move(l), std::move(u)};
  }

  /// Nominal rollout of a decision vector (exactly the recursion the QP was
  /// condensed from).
  RmpcPlan expand_plan(const Eigen::VectorXd& x0, const Eigen::VectorXd& v) const {
    const int m = cfg_.nominal.m();
    const int W = cfg_.horizon;
    RmpcPlan plan;
    plan.v = v;
    plan.x_nom.resize(static_cast<std::size_t>(W) + 1);
    plan.u_nom.resize(static_cast<std::size_t>(W));
    plan.x_nom[0] = x0;
    for (int k = 0; k < W; ++k) {
      plan.u_nom[static_cast<std::size_t>(k)] =
          K_ * plan.x_nom[static_cast<std::size_t>(k)] + v.segment(k * m, m);
      plan.x_nom[static_cast<std::size_t>(k) + 1] =
          cfg_.nominal.A * plan.x_nom[static_cast<std::size_t>(k)] +
          cfg_.nominal.B * plan.u_nom[static_cast<std::size_t>(k)];
    }
    return plan;
  }

 private:
  RmpcConfig cfg_;
  Eigen::MatrixXd K_, P_f_, A_K_;
  Box X_f_, X_tight_, U_tight_;
  TubeFamily tubes_;
  std::vector<Eigen::MatrixXd> F_, G_, Hu_, Ju_;
  QuadProgram template_qp_;
};

/// Tube-based robust MPC policy: at each call, solves the condensed W-step
/// nominal problem and applies u = K x_t + v*_0. Holds QP warm-start state,
/// so one instance serves one trajectory at a time.
class RmpcPolicy final : public Policy {
 public:
  using Target = std::function<Eigen::VectorXd(long)>;

  explicit RmpcPolicy(std::shared_ptr<const RmpcIngredients> ing, Target target = {},
                      QpSettings qp_settings = {})
      : ing_(std::move(ing)), target_(std::move(target)), solver_(ing_->template_qp(), qp_settings) {}

  Eigen::VectorXd decide(const HistoryView& h) override {
    const auto& cfg = ing_->config();
    const int W = cfg.horizon;
    const Eigen::VectorXd& x0 = h.x();

    std::vector<Eigen::VectorXd> g;
    if (target_) {
      g.resize(static_cast<std::size_t>(W) + 1);
      for (int k = 0; k <= W; ++k) g[static_cast<std::size_t>(k)] = target_(h.t() + k);
    }

    solver_.update_linear_cost(ing_->linear_cost(x0, g));
    const auto [l, u] = ing_->bounds(x0);
    solver_.update_bounds(l, u);
    if (have_warm_start_) solver_.warm_start(shifted_v_, last_y_);

    QpSolution sol = solver_.solve();
    if (sol.status == QpStatus::primal_infeasible) throw RmpcInfeasibleError(h.t());
    if (sol.status != QpStatus::solved)
      throw PolicyError(h.t(), "RMPC QP did not converge (" + to_string(sol.status) + ")");

    last_plan_ = ing_->expand_plan(x0, sol.v);
    last_plan_.status = sol.status;
    last_plan_.primal_residual = sol.primal_residual;
    last_plan_.dual_residual = sol.dual_residual;
    last_plan_.objective = sol.objective;

    // Shift for the next warm start: drop v_0, repeat the last correction.
    const int m = cfg.nominal.m();
    shifted_v_ = sol.v;
    if (W > 1) {
      shifted_v_.head((W - 1) * m) = sol.v.tail((W - 1) * m);
      shifted_v_.tail(m) = sol.v.tail(m);
    }
    last_y_ = sol.y;
    have_warm_start_ = true;

    return ing_->K() * x0 + sol.v.head(m);
  }

  void reset() override {
    have_warm_start_ = false;
    solver_.cold_start();
  }

  const RmpcPlan& last_plan() const { return last_plan_; }
  const RmpcIngredients& ingredients() const { return *ing_; }

 private:
  std::shared_ptr<const RmpcIngredients> ing_;
  Target target_;
  QpSolver solver_;
  RmpcPlan last_plan_;
  Eigen::VectorXd shifted_v_, last_y_;
  bool have_warm_start_ = false;
};

/// Policy factory entry point: derives gains, tubes, and terminal
/// ingredients once, then hands out cheap policy clones.
inline std::shared_ptr<const RmpcIngredients> make_rmpc_ingredients(RmpcConfig cfg) {
  return std::make_shared<const RmpcIngredients>(std::move(cfg));
}

inline std::unique_ptr<RmpcPolicy> rmpc_policy(std::shared_ptr<const RmpcIngredients> ing,
                                               RmpcPolicy::Target target = {}) {
  return std::make_unique<RmpcPolicy>(std::move(ing), std::move(target));
}

inline void to_json(nlohmann::json& j, const RmpcConfig& c) {
  j = nlohmann::json{{"nominal", c.nominal},
                     {"theta0_center", std::vector<double>(c.theta0.center.data(),
                                                           c.theta0.center.data() + c.theta0.center.size())},
                     {"theta0_halfwidth",
                      std::vector<double>(c.theta0.halfwidth.data(),
                                          c.theta0.halfwidth.data() + c.theta0.halfwidth.size())},
                     {"Q", std::vector<double>(c.Q.data(), c.Q.data() + c.Q.size())},
                     {"R", std::vector<double>(c.R.data(), c.R.data() + c.R.size())},
                     {"horizon", c.horizon},
                     {"X", c.X},
                     {"U", c.U},
                     {"W", c.W},
                     {"H", c.H},
                     {"tube_tol", c.tube_tol}};
}

inline void from_json(const nlohmann::json& j, RmpcConfig& c) {
  c.nominal = j.at("nominal").get<SystemParams>();
  const int n = c.nominal.n();
  const int m = c.nominal.m();
  auto vec_to_mat = [](const std::vector<double>& v, int rows, int cols) {
    if (static_cast<int>(v.size()) != rows * cols)
      throw std::invalid_argument("RmpcConfig: matrix payload size mismatch");
    return Eigen::Map<const Eigen::MatrixXd>(v.data(), rows, cols).eval();
  };
  c.theta0 = UncertaintySet(
      vec_to_mat(j.at("theta0_center").get<std::vector<double>>(), n, n + m),
      vec_to_mat(j.at("theta0_halfwidth").get<std::vector<double>>(), n, n + m));
  c.Q = vec_to_mat(j.at("Q").get<std::vector<double>>(), n, n);
  c.R = vec_to_mat(j.at("R").get<std::vector<double>>(), m, m);
  c.horizon = j.at("horizon").get<int>();
  c.X = j.at("X").get<Box>();
  c.U = j.at("U").get<Box>();
  c.W = j.at("W").get<Box>();
  c.H = j.at("H").get<Box>();
  c.tube_tol = j.value("tube_tol", 1e-9);
}

}  // namespace sysid
