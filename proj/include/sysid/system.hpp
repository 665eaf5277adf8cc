#pragma once

#include <Eigen/Dense>
#include <charconv>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace sysid {

/// Shortest round-trip decimal rendering; keeps CSV and log output
/// byte-stable across runs.
inline std::string fmt_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

/// Linear time-invariant model x+ = A x + B u.
struct SystemParams {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;

  SystemParams() = default;
  SystemParams(Eigen::MatrixXd A_in, Eigen::MatrixXd B_in)
      : A(std::move(A_in)), B(std::move(B_in)) {
    if (A.rows() != A.cols()) throw std::invalid_argument("SystemParams: A must be square");
    if (B.rows() != A.rows()) throw std::invalid_argument("SystemParams: B row count must match A");
    if (!A.allFinite() || !B.allFinite())
      throw std::invalid_argument("SystemParams: non-finite entry");
  }

  static SystemParams scalar(double a, double b) {
    Eigen::MatrixXd A(1, 1), B(1, 1);
    A << a;
    B << b;
    return SystemParams(A, B);
  }

  int n() const { return static_cast<int>(A.rows()); }
  int m() const { return static_cast<int>(B.cols()); }

  /// Stacked parameter matrix theta = [A B], n x (n+m).
  Eigen::MatrixXd stacked() const {
    Eigen::MatrixXd th(n(), n() + m());
    th << A, B;
    return th;
  }

  static SystemParams from_stacked(const Eigen::MatrixXd& theta, int n, int m) {
    if (theta.rows() != n || theta.cols() != n + m)
      throw std::invalid_argument("SystemParams::from_stacked: shape mismatch");
    return SystemParams(theta.leftCols(n), theta.rightCols(m));
  }
};

inline void to_json(nlohmann::json& j, const SystemParams& p) {
  std::vector<std::vector<double>> a(p.n()), b(p.n());
  for (int i = 0; i < p.n(); ++i) {
    a[i].assign(p.A.row(i).begin(), p.A.row(i).end());
    b[i].assign(p.B.row(i).begin(), p.B.row(i).end());
  }
  j = nlohmann::json{{"A", a}, {"B", b}};
}

inline void from_json(const nlohmann::json& j, SystemParams& p) {
  const auto a = j.at("A").get<std::vector<std::vector<double>>>();
  const auto b = j.at("B").get<std::vector<std::vector<double>>>();
  const int n = static_cast<int>(a.size());
  Eigen::MatrixXd A(n, n), B(n, b.empty() ? 0 : static_cast<int>(b[0].size()));
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(a[i].size()) != n)
      throw std::invalid_argument("SystemParams: ragged A rows");
    for (int k = 0; k < n; ++k) A(i, k) = a[i][k];
    for (int k = 0; k < B.cols(); ++k) B(i, k) = b[i][k];
  }
  p = SystemParams(A, B);
}

/// One dynamics step x+ = A x + B u + w. Errors name the offending argument.
inline Eigen::VectorXd step(const SystemParams& params, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& u, const Eigen::VectorXd& w) {
  if (x.size() != params.n()) throw std::invalid_argument("step: state x has wrong dimension");
  if (u.size() != params.m()) throw std::invalid_argument("step: input u has wrong dimension");
  if (w.size() != params.n()) throw std::invalid_argument("step: noise w has wrong dimension");
  return params.A * x + params.B * u + w;
}

/// Closed-loop trajectory record. Stores nominal inputs, excitation, and
/// process noise explicitly so that history-dependent policies can be
/// replayed and conditional resampling gets exact prefixes.
struct Trajectory {
  int n = 0;
  int m = 0;
  std::vector<Eigen::VectorXd> x;          // length T+1
  std::vector<Eigen::VectorXd> u;          // length T
  std::vector<Eigen::VectorXd> u_nominal;  // length T
  std::vector<Eigen::VectorXd> eta;        // length T
  std::vector<Eigen::VectorXd> w;          // length T

  long length() const { return static_cast<long>(u.size()); }

  /// Stacked covariate z_t = (x_t, u_t).
  Eigen::VectorXd z(long t) const {
    Eigen::VectorXd v(n + m);
    v << x.at(static_cast<std::size_t>(t)), u.at(static_cast<std::size_t>(t));
    return v;
  }

  /// Copy of the first `t` records plus state x_t.
  Trajectory prefix(long t) const {
    if (t < 0 || t > length()) throw std::out_of_range("Trajectory::prefix");
    Trajectory out;
    out.n = n;
    out.m = m;
    out.x.assign(x.begin(), x.begin() + t + 1);
    out.u.assign(u.begin(), u.begin() + t);
    out.u_nominal.assign(u_nominal.begin(), u_nominal.begin() + t);
    out.eta.assign(eta.begin(), eta.begin() + t);
    out.w.assign(w.begin(), w.begin() + t);
    return out;
  }
};

/// max_t ||z_t||_2 over all recorded times including the terminal state
/// (terminal input treated as absent).
inline double trajectory_bound(const Trajectory& traj) {
  if (traj.x.empty()) throw std::invalid_argument("trajectory_bound: empty trajectory");
  double best = 0.0;
  for (long t = 0; t < traj.length(); ++t)
    best = std::max(best, std::sqrt(traj.x[static_cast<std::size_t>(t)].squaredNorm() +
                                    traj.u[static_cast<std::size_t>(t)].squaredNorm()));
  best = std::max(best, traj.x.back().norm());
  return best;
}

inline void write_csv(const Trajectory& traj, std::ostream& os) {
  os << "t";
  for (int i = 0; i < traj.n; ++i) os << ",x_" << i;
  for (int i = 0; i < traj.m; ++i) os << ",u_" << i;
  for (int i = 0; i < traj.m; ++i) os << ",eta_" << i;
  for (int i = 0; i < traj.n; ++i) os << ",w_" << i;
  os << "\n";
  for (long t = 0; t < traj.length(); ++t) {
    const auto ti = static_cast<std::size_t>(t);
    os << t;
    for (int i = 0; i < traj.n; ++i) os << ',' << fmt_double(traj.x[ti](i));
    for (int i = 0; i < traj.m; ++i) os << ',' << fmt_double(traj.u[ti](i));
    for (int i = 0; i < traj.m; ++i) os << ',' << fmt_double(traj.eta[ti](i));
    for (int i = 0; i < traj.n; ++i) os << ',' << fmt_double(traj.w[ti](i));
    os << "\n";
  }
  // Terminal state row; input, excitation, and noise cells stay blank.
  os << traj.length();
  for (int i = 0; i < traj.n; ++i) os << ',' << fmt_double(traj.x.back()(i));
  for (int i = 0; i < 2 * traj.m + traj.n; ++i) os << ',';
  os << "\n";
}

/// JSON envelope with enough metadata to reproduce the run.
inline nlohmann::json trajectory_envelope(const Trajectory& traj, const SystemParams& params,
                                          std::uint64_t seed, const std::string& config_hash) {
  nlohmann::json j;
  j["params"] = params;
  j["seed"] = seed;
  j["config_hash"] = config_hash;
  j["T"] = traj.length();
  auto rows = nlohmann::json::array();
  for (long t = 0; t < traj.length(); ++t) {
    const auto ti = static_cast<std::size_t>(t);
    rows.push_back({{"t", t},
                    {"x", std::vector<double>(traj.x[ti].begin(), traj.x[ti].end())},
                    {"u", std::vector<double>(traj.u[ti].begin(), traj.u[ti].end())},
                    {"eta", std::vector<double>(traj.eta[ti].begin(), traj.eta[ti].end())},
                    {"w", std::vector<double>(traj.w[ti].begin(), traj.w[ti].end())}});
  }
  j["records"] = std::move(rows);
  j["x_final"] = std::vector<double>(traj.x.back().begin(), traj.x.back().end());
  return j;
}

}  // namespace sysid
