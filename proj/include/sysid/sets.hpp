#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "sysid/rng.hpp"

namespace sysid {

/// Thrown by pontryagin_diff when a tightened set collapses, i.e. the
/// subtracted halfwidth exceeds the available one in some coordinate.
class EmptyTightenedSetError : public std::runtime_error {
 public:
  EmptyTightenedSetError(int coordinate, double deficit)
      : std::runtime_error("empty tightened set at coordinate " + std::to_string(coordinate) +
                           " (halfwidth deficit " + std::to_string(deficit) + ")"),
        coordinate(coordinate),
        deficit(deficit) {}
  int coordinate;
  double deficit;
};

class NonContractiveMapError : public std::runtime_error {
 public:
  explicit NonContractiveMapError(double gamma)
      : std::runtime_error("non-contractive tube map: induced inf-norm = " + std::to_string(gamma)),
        gamma(gamma) {}
  double gamma;
};

/// Axis-aligned box {v : |v_i - center_i| <= halfwidth_i for all i}.
struct Box {
  Eigen::VectorXd center;
  Eigen::VectorXd halfwidth;

  Box() = default;
  Box(Eigen::VectorXd c, Eigen::VectorXd hw) : center(std::move(c)), halfwidth(std::move(hw)) {
    if (center.size() != halfwidth.size())
      throw std::invalid_argument("Box: center/halfwidth dimension mismatch");
    if ((halfwidth.array() < 0.0).any())
      throw std::invalid_argument("Box: negative halfwidth");
  }

  static Box symmetric(Eigen::VectorXd hw) {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(hw.size());
    return Box(std::move(c), std::move(hw));
  }
  static Box symmetric(int dim, double hw) {
    return Box(Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Constant(dim, hw));
  }
  static Box interval(double lo, double hi) {
    Eigen::VectorXd c(1), hw(1);
    c << 0.5 * (lo + hi);
    hw << 0.5 * (hi - lo);
    return Box(c, hw);
  }
  static Box point(Eigen::VectorXd c) {
    Eigen::VectorXd hw = Eigen::VectorXd::Zero(c.size());
    return Box(std::move(c), std::move(hw));
  }
  static Box zero(int dim) { return point(Eigen::VectorXd::Zero(dim)); }

  int dim() const { return static_cast<int>(center.size()); }
  Eigen::VectorXd lower() const { return center - halfwidth; }
  Eigen::VectorXd upper() const { return center + halfwidth; }

  bool contains(const Eigen::VectorXd& v, double tol = 0.0) const {
    return ((v - center).cwiseAbs().array() <= halfwidth.array() + tol).all();
  }
  bool contains_box(const Box& other, double tol = 0.0) const {
    return ((other.center - center).cwiseAbs().array() + other.halfwidth.array() <=
            halfwidth.array() + tol)
        .all();
  }

  /// Scale halfwidths about the center.
  Box scaled(double alpha) const { return Box(center, alpha * halfwidth); }

  /// Largest Euclidean norm over the box, attained at a corner.
  double max_point_norm() const { return (center.cwiseAbs() + halfwidth).norm(); }

  Eigen::VectorXd sample(RngStream& rng) const {
    Eigen::VectorXd v(dim());
    for (int i = 0; i < dim(); ++i)
      v(i) = center(i) + halfwidth(i) * (2.0 * rng.uniform01() - 1.0);
    return v;
  }
};

inline Box stack(const Box& a, const Box& b) {
  Eigen::VectorXd c(a.dim() + b.dim()), hw(a.dim() + b.dim());
  c << a.center, b.center;
  hw << a.halfwidth, b.halfwidth;
  return Box(std::move(c), std::move(hw));
}

inline Box minkowski_sum(const Box& a, const Box& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("minkowski_sum: dimension mismatch");
  return Box(a.center + b.center, a.halfwidth + b.halfwidth);
}

/// Exact for boxes. Throws when the result would be empty in some coordinate,
/// which signals that the uncertainty or excitation is too large for the
/// constraint it tightens.
inline Box pontryagin_diff(const Box& a, const Box& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("pontryagin_diff: dimension mismatch");
  Eigen::VectorXd hw = a.halfwidth - b.halfwidth;
  for (int i = 0; i < hw.size(); ++i)
    if (hw(i) < 0.0) throw EmptyTightenedSetError(i, -hw(i));
  return Box(a.center - b.center, std::move(hw));
}

/// Interval-arithmetic image of a box under a linear map: tight for
/// diagonal/scalar maps, a sound over-approximation otherwise.
inline Box linmap_overapprox(const Eigen::MatrixXd& M, const Box& b) {
  if (M.cols() != b.dim()) throw std::invalid_argument("linmap_overapprox: dimension mismatch");
  return Box(M * b.center, M.cwiseAbs() * b.halfwidth);
}

/// Entrywise interval bounds on the stacked parameter matrix theta = [A B],
/// n x (n+m). The center is the nominal model theta_0.
struct UncertaintySet {
  Eigen::MatrixXd center;     // theta_0, n x (n+m)
  Eigen::MatrixXd halfwidth;  // entrywise, >= 0

  UncertaintySet() = default;
  UncertaintySet(Eigen::MatrixXd c, Eigen::MatrixXd hw)
      : center(std::move(c)), halfwidth(std::move(hw)) {
    if (center.rows() != halfwidth.rows() || center.cols() != halfwidth.cols())
      throw std::invalid_argument("UncertaintySet: center/halfwidth shape mismatch");
    if ((halfwidth.array() < 0.0).any())
      throw std::invalid_argument("UncertaintySet: negative halfwidth");
    if (!center.allFinite() || !halfwidth.allFinite())
      throw std::invalid_argument("UncertaintySet: non-finite entry");
  }

  /// Scalar helper: A-interval [a_lo, a_hi] x B-interval [b_lo, b_hi].
  static UncertaintySet scalar(double a_lo, double a_hi, double b_lo, double b_hi) {
    Eigen::MatrixXd c(1, 2), hw(1, 2);
    c << 0.5 * (a_lo + a_hi), 0.5 * (b_lo + b_hi);
    hw << 0.5 * (a_hi - a_lo), 0.5 * (b_hi - b_lo);
    return UncertaintySet(c, hw);
  }

  int n() const { return static_cast<int>(center.rows()); }
  int m() const { return static_cast<int>(center.cols() - center.rows()); }

  bool contains(const Eigen::MatrixXd& theta, double tol = 0.0) const {
    return ((theta - center).cwiseAbs().array() <= halfwidth.array() + tol).all();
  }

  /// All corner matrices. Intended for small problems; the count is
  /// 2^(number of entries).
  std::vector<Eigen::MatrixXd> vertices() const {
    const int entries = static_cast<int>(center.size());
    if (entries > 20) throw std::invalid_argument("UncertaintySet::vertices: too many entries");
    std::vector<Eigen::MatrixXd> out;
    out.reserve(std::size_t{1} << entries);
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << entries); ++mask) {
      Eigen::MatrixXd v = center;
      for (int k = 0; k < entries; ++k) {
        const int r = k % static_cast<int>(center.rows());
        const int c = k / static_cast<int>(center.rows());
        v(r, c) += (mask >> k & 1) ? halfwidth(r, c) : -halfwidth(r, c);
      }
      out.push_back(std::move(v));
    }
    return out;
  }
};

/// Box over-approximation of {w + (theta - theta_0) z : w in W, z in X x U,
/// theta in Theta_0}. Exact when the system is scalar and X, U symmetric.
inline Box mismatch_set(const UncertaintySet& theta0, const Box& X, const Box& U, const Box& W) {
  if (X.dim() != theta0.n() || U.dim() != theta0.m() || W.dim() != theta0.n())
    throw std::invalid_argument("mismatch_set: dimension mismatch");
  const Box Z = stack(X, U);
  const Eigen::VectorXd zmax = Z.center.cwiseAbs() + Z.halfwidth;
  return Box(W.center, W.halfwidth + theta0.halfwidth * zmax);
}

/// Truncated Minkowski series sum_i A_K^i S with a uniform tail inflation, a
/// guaranteed over-approximation of the infinite tube. Requires the induced
/// inf-norm of A_K to be below one; a stable A_K that fails this test is
/// rejected rather than transformed.
inline Box tube(const Eigen::MatrixXd& A_K, const Box& S, double tol = 1e-9) {
  if (A_K.rows() != A_K.cols() || A_K.cols() != S.dim())
    throw std::invalid_argument("tube: dimension mismatch");
  const double gamma = A_K.cwiseAbs().rowwise().sum().maxCoeff();
  if (gamma >= 1.0) throw NonContractiveMapError(gamma);

  const double r_s = S.dim() == 0 ? 0.0 : S.halfwidth.maxCoeff();
  const double c_s = S.dim() == 0 ? 0.0 : S.center.cwiseAbs().maxCoeff();
  const double scale = std::max(r_s, c_s);
  int terms = 1;
  double tail = gamma * scale / (1.0 - gamma);
  while (tail > tol) {
    tail *= gamma;
    ++terms;
  }

  Box acc = S;
  Box img = S;
  for (int i = 1; i < terms; ++i) {
    img = linmap_overapprox(A_K, img);
    acc = minkowski_sum(acc, img);
  }
  acc.halfwidth.array() += tail;
  return acc;
}

inline void to_json(nlohmann::json& j, const Box& b) {
  j = nlohmann::json{{"center", std::vector<double>(b.center.begin(), b.center.end())},
                     {"halfwidth", std::vector<double>(b.halfwidth.begin(), b.halfwidth.end())}};
}

inline void from_json(const nlohmann::json& j, Box& b) {
  const auto c = j.at("center").get<std::vector<double>>();
  const auto h = j.at("halfwidth").get<std::vector<double>>();
  b = Box(Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size())),
          Eigen::Map<const Eigen::VectorXd>(h.data(), static_cast<Eigen::Index>(h.size())));
}

}  // namespace sysid
