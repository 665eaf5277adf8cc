#include "sysid/qp.hpp"

#include <gtest/gtest.h>

#include <Eigen/Dense>

#include "sysid/rng.hpp"

using namespace sysid;

namespace {

QuadProgram scalar_qp(double p, double q, double lo, double hi) {
  QuadProgram qp;
  qp.P = Eigen::MatrixXd::Constant(1, 1, p);
  qp.q = Eigen::VectorXd::Constant(1, q);
  qp.A = Eigen::MatrixXd::Identity(1, 1);
  qp.l = Eigen::VectorXd::Constant(1, lo);
  qp.u = Eigen::VectorXd::Constant(1, hi);
  return qp;
}

/// Projected-gradient oracle for box-constrained strictly convex QPs
/// (A = I). Independent of the operator-splitting path.
Eigen::VectorXd projected_gradient_box(const Eigen::MatrixXd& P, const Eigen::VectorXd& q,
                                       const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                                       double tol = 1e-8) {
  const double L = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(P).eigenvalues().maxCoeff();
  const double step_size = 1.0 / L;
  Eigen::VectorXd v = Eigen::VectorXd::Zero(q.size());
  for (long it = 0; it < 2'000'000; ++it) {
    Eigen::VectorXd next = v - step_size * (P * v + q);
    next = next.cwiseMax(lo).cwiseMin(hi);
    const double delta = (next - v).cwiseAbs().maxCoeff();
    v = next;
    if (delta < tol) break;
  }
  return v;
}

QuadProgram random_box_qp(RngStream& rng, int max_dim = 10) {
  const int nv = 1 + static_cast<int>(rng.next_u64() % static_cast<unsigned>(max_dim));
  Eigen::MatrixXd M(nv, nv);
  for (int i = 0; i < nv; ++i)
    for (int j = 0; j < nv; ++j) M(i, j) = rng.uniform(-1, 1);
  QuadProgram qp;
  qp.P = M * M.transpose() + rng.uniform(0.1, 1.0) * Eigen::MatrixXd::Identity(nv, nv);
  qp.q = Eigen::VectorXd::Zero(nv);
  for (int i = 0; i < nv; ++i) qp.q(i) = rng.uniform(-2, 2);
  qp.A = Eigen::MatrixXd::Identity(nv, nv);
  qp.l.resize(nv);
  qp.u.resize(nv);
  for (int i = 0; i < nv; ++i) {
    const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
    qp.l(i) = std::min(a, b);
    qp.u(i) = std::max(a, b);
  }
  return qp;
}

}  // namespace

TEST(QpSolve, InteriorOptimum) {
  const QpSolution s = solve(scalar_qp(1.0, -1.0, 0.0, 10.0));
  ASSERT_EQ(s.status, QpStatus::solved);
  EXPECT_NEAR(s.v(0), 1.0, 1e-7);
}

TEST(QpSolve, ActiveUpperBound) {
  const QpSolution s = solve(scalar_qp(1.0, -1.0, 0.0, 0.5));
  ASSERT_EQ(s.status, QpStatus::solved);
  EXPECT_NEAR(s.v(0), 0.5, 1e-7);
}

TEST(QpSolve, SymmetricHalfspace) {
  // min 1/2 (v1^2 + v2^2) s.t. v1 + v2 >= 2 has optimum (1, 1).
  QuadProgram qp;
  qp.P = Eigen::MatrixXd::Identity(2, 2);
  qp.q = Eigen::VectorXd::Zero(2);
  qp.A = Eigen::MatrixXd::Ones(1, 2);
  qp.l = Eigen::VectorXd::Constant(1, 2.0);
  qp.u = Eigen::VectorXd::Constant(1, kInf);
  const QpSolution s = solve(qp);
  ASSERT_EQ(s.status, QpStatus::solved);
  EXPECT_NEAR(s.v(0), 1.0, 1e-7);
  EXPECT_NEAR(s.v(1), 1.0, 1e-7);
}

TEST(QpSolve, KktStationarityAtSolution) {
  RngStream rng(41);
  for (int i = 0; i < 25; ++i) {
    const QuadProgram qp = random_box_qp(rng);
    QpSolver solver(qp);
    const QpSolution s = solver.solve();
    ASSERT_EQ(s.status, QpStatus::solved);
    const auto [primal, dual, comp] = kkt_residuals(qp, s.v, s.y);
    EXPECT_LE(primal, 1e-7);
    EXPECT_LE(dual, 1e-7);  // 10 * eps_abs
    EXPECT_LE(comp, 1e-5);
  }
}

TEST(KktResiduals, ExamplesFromScalarProblem) {
  const QuadProgram qp = scalar_qp(1.0, -1.0, 0.0, 10.0);
  // Exact optimum v = 1, inactive constraint, y = 0.
  auto [p0, d0, c0] = kkt_residuals(qp, Eigen::VectorXd::Constant(1, 1.0),
                                    Eigen::VectorXd::Zero(1));
  EXPECT_LE(p0, 1e-10);
  EXPECT_LE(d0, 1e-10);
  EXPECT_LE(c0, 1e-10);
  // Perturbed point: gradient v - 1 leaves a 0.1 stationarity residual.
  auto [p1, d1, c1] = kkt_residuals(qp, Eigen::VectorXd::Constant(1, 1.1),
                                    Eigen::VectorXd::Zero(1));
  EXPECT_NEAR(d1, 0.1, 1e-12);
  EXPECT_LE(p1, 1e-12);
  (void)c1;
  // Infeasible point below the lower bound.
  auto [p2, d2, c2] = kkt_residuals(qp, Eigen::VectorXd::Constant(1, -1.0),
                                    Eigen::VectorXd::Zero(1));
  EXPECT_DOUBLE_EQ(p2, 1.0);
  (void)d2;
  (void)c2;
}

TEST(QpOracle, MatchesProjectedGradientOnRandomBoxQps) {
  RngStream rng(99);
  for (int i = 0; i < 200; ++i) {
    const QuadProgram qp = random_box_qp(rng);
    QpSolver solver(qp);
    const QpSolution s = solver.solve();
    ASSERT_EQ(s.status, QpStatus::solved);
    const Eigen::VectorXd ref = projected_gradient_box(qp.P, qp.q, qp.l, qp.u);
    EXPECT_NEAR(qp.objective(s.v), qp.objective(ref), 1e-6);
  }
}

TEST(QpInvariance, RowScalingLeavesObjective) {
  // Solved tight enough that the remaining ADMM error sits below the
  // identity tolerance.
  RngStream rng(7);
  for (int i = 0; i < 25; ++i) {
    QuadProgram qp = random_box_qp(rng);
    const double obj1 = solve(qp, 1e-11, 1e-11).objective;
    for (int r = 0; r < qp.num_cons(); ++r) {
      const double c = rng.uniform(0.1, 10.0);
      qp.A.row(r) *= c;
      qp.l(r) *= c;
      qp.u(r) *= c;
    }
    const double obj2 = solve(qp, 1e-11, 1e-11).objective;
    EXPECT_NEAR(obj1, obj2, 1e-8 * std::max(1.0, std::abs(obj1)));
  }
}

TEST(QpInfeasibility, ContradictoryRowsDetected) {
  QuadProgram qp;
  qp.P = Eigen::MatrixXd::Identity(1, 1);
  qp.q = Eigen::VectorXd::Zero(1);
  qp.A = Eigen::MatrixXd::Ones(2, 1);
  qp.l.resize(2);
  qp.u.resize(2);
  qp.l << 1.0, -kInf;
  qp.u << kInf, 0.0;  // v >= 1 and v <= 0
  const QpSolution s = solve(qp);
  EXPECT_EQ(s.status, QpStatus::primal_infeasible);
}

TEST(QpWarmStart, AgreesWithColdStart) {
  RngStream rng(17);
  const QuadProgram qp = random_box_qp(rng);
  QpSolver solver(qp);
  const QpSolution cold = solver.solve();
  ASSERT_EQ(cold.status, QpStatus::solved);

  QpSolver warm(qp);
  warm.warm_start(cold.v, cold.y);
  const QpSolution rewarmed = warm.solve();
  ASSERT_EQ(rewarmed.status, QpStatus::solved);
  EXPECT_NEAR(rewarmed.objective, cold.objective, 1e-6);
  EXPECT_LE(rewarmed.iterations, cold.iterations);
}

TEST(QpUpdates, LinearCostAndBoundsWithoutRefactorization) {
  QuadProgram qp = scalar_qp(1.0, -1.0, 0.0, 10.0);
  QpSolver solver(qp);
  EXPECT_NEAR(solver.solve().v(0), 1.0, 1e-7);
  solver.update_linear_cost(Eigen::VectorXd::Constant(1, -3.0));
  EXPECT_NEAR(solver.solve().v(0), 3.0, 1e-7);
  solver.update_bounds(Eigen::VectorXd::Constant(1, 0.0), Eigen::VectorXd::Constant(1, 2.0));
  EXPECT_NEAR(solver.solve().v(0), 2.0, 1e-7);
}

TEST(QpValidation, AsymmetricPAndCrossedBoundsRejected) {
  QuadProgram qp = scalar_qp(1.0, 0.0, 0.0, 1.0);
  qp.P = Eigen::MatrixXd::Zero(2, 2);
  qp.P << 1.0, 0.5, -0.5, 1.0;
  qp.q = Eigen::VectorXd::Zero(2);
  qp.A = Eigen::MatrixXd::Identity(2, 2);
  qp.l = Eigen::VectorXd::Zero(2);
  qp.u = Eigen::VectorXd::Ones(2);
  EXPECT_THROW(qp.validate(), std::invalid_argument);

  QuadProgram crossed = scalar_qp(1.0, 0.0, 1.0, 0.0);
  EXPECT_THROW(crossed.validate(), std::invalid_argument);
}

TEST(QpDump, ContainsProblemData) {
  const QuadProgram qp = scalar_qp(2.0, -1.0, 0.0, 1.0);
  QpSolver solver(qp);
  const nlohmann::json j = solver.dump();
  EXPECT_DOUBLE_EQ(j.at("P")[0][0].get<double>(), 2.0);
  EXPECT_DOUBLE_EQ(j.at("q")[0].get<double>(), -1.0);
}
