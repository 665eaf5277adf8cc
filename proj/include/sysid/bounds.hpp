#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "json.hpp"
#include "sysid/noise.hpp"
#include "sysid/rng.hpp"

namespace sysid {

/// One-sided anti-concentration certificate: P(lambda' xi >= s) >= p for
/// every unit direction lambda.
struct SmallBall {
  double s = 0.0;
  double p = 0.0;
};

/// Small-ball constants of a bounded zero-mean distribution from its
/// certified (sigma, ratio) pair: s = sigma / (4 ratio), p = 1 / (4 ratio^2).
inline SmallBall small_ball(double sigma, double ratio) {
  if (!(sigma > 0.0)) throw std::invalid_argument("small_ball: sigma must be positive");
  if (!(ratio >= 1.0)) throw std::invalid_argument("small_ball: ratio must be >= 1");
  return {sigma / (4.0 * ratio), 1.0 / (4.0 * ratio * ratio)};
}

inline SmallBall small_ball(const NoiseCertificate& cert) {
  return small_ball(cert.sigma, cert.ratio);
}

/// Monte-Carlo frequency of lambda' xi >= s over N i.i.d. draws.
inline double small_ball_empirical(const NoiseSpec& spec, const Eigen::VectorXd& lambda, double s,
                                   long N, RngStream rng) {
  if (lambda.size() != spec.dim())
    throw std::invalid_argument("small_ball_empirical: direction dimension mismatch");
  if (std::abs(lambda.norm() - 1.0) > 1e-10)
    throw std::invalid_argument("small_ball_empirical: direction must be unit length");
  if (N < 10'000) throw std::invalid_argument("small_ball_empirical: N must be >= 10^4");
  long hits = 0;
  for (long i = 0; i < N; ++i)
    if (lambda.dot(spec.sample(rng)) >= s) ++hits;
  return static_cast<double>(hits) / static_cast<double>(N);
}

/// Covariate small-ball parameters for the closed-loop process z = (x, u):
/// the (1, s_z^2 I, p_z) block-martingale condition with
///   p_z = min(p_w, p_eta),
///   s_z = min(s_w/4, sqrt(3)/2 s_eta, s_w s_eta / (4 b_z)).
struct BmsbParams {
  double s_z = 0.0;
  double p_z = 0.0;
  double b_z = 0.0;
  int k = 1;
};

inline BmsbParams bmsb_params(const SmallBall& w, const SmallBall& eta, double b_z) {
  if (!(b_z > 0.0)) throw std::invalid_argument("bmsb_params: b_z must be positive");
  BmsbParams out;
  out.s_z = std::min({w.s / 4.0, std::sqrt(3.0) / 2.0 * eta.s, w.s * eta.s / (4.0 * b_z)});
  out.p_z = std::min(w.p, eta.p);
  out.b_z = b_z;
  out.k = 1;
  return out;
}

/// Explicit finite-sample bound for least squares on a bounded process
/// satisfying the small-ball condition, with Gamma_sb = s_z^2 I and the
/// trivial covariate envelope b_z^2 I:
///   T_0  = (10 k / p^2) (log(1/delta) + 2 d log(10/p) + d log(b_z^2/s_z^2)),
///   err <= (90 sigma_sub / p) sqrt((n + d log(10/p) + d log(b_z^2/s_z^2)
///                                   + log(1/delta)) / (T s_z^2)),
/// holding with probability at least 1 - 3 delta once T >= T_0. The bound
/// value is reported even when T < T_0, flagged inapplicable, so the curve
/// can still be plotted.
struct BoundReport {
  double T0 = 0.0;
  long T = 0;
  double bound = 0.0;
  bool applicable = false;
  // Inputs.
  int n = 0;
  int m = 0;
  int d = 0;
  double sigma_sub = 0.0;
  double b_z = 0.0;
  double delta = 0.0;
  int k = 1;
  double p = 0.0;
  double s_z = 0.0;
  double log_det_term = 0.0;
  // Scale factors of the non-explicit bound, for reporting only.
  double poly1 = 0.0;
  double poly2 = 0.0;
};

inline BoundReport theorem2_bound(const BmsbParams& params, int d, int n, double sigma_sub,
                                  double delta, long T) {
  if (params.s_z > params.b_z)
    throw std::invalid_argument("theorem2_bound: s_z must not exceed b_z");
  // The 1 - 3 delta guarantee is vacuous for delta >= 1/3, but the formulas
  // stay well defined; only the unit interval is enforced.
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("theorem2_bound: delta must lie in (0, 1)");
  if (T < 1) throw std::invalid_argument("theorem2_bound: T must be >= 1");

  const double p = params.p_z;
  const double s2 = params.s_z * params.s_z;
  const double log_det = d * std::log(params.b_z * params.b_z / s2);
  const double log10p = std::log(10.0 / p);
  const double log1d = std::log(1.0 / delta);

  BoundReport r;
  r.T0 = 10.0 * params.k / (p * p) * (log1d + 2.0 * d * log10p + log_det);
  r.T = T;
  r.bound = 90.0 * sigma_sub / p *
            std::sqrt((n + d * log10p + log_det + log1d) / (static_cast<double>(T) * s2));
  r.applicable = static_cast<double>(T) >= r.T0;
  r.n = n;
  r.m = d - n;
  r.d = d;
  r.sigma_sub = sigma_sub;
  r.b_z = params.b_z;
  r.delta = delta;
  r.k = params.k;
  r.p = p;
  r.s_z = params.s_z;
  r.log_det_term = log_det;
  return r;
}

/// The two polynomial scale factors of the non-explicit error bound,
/// reported for documentation and plots; the hidden absolute constants mean
/// no numeric bound is claimed from them.
inline std::pair<double, double> theorem1_scaling(double w_bar, double eta_bar, double sigma_w,
                                                  double sigma_eta) {
  if (!(w_bar > 0.0 && eta_bar > 0.0 && sigma_w > 0.0 && sigma_eta > 0.0))
    throw std::invalid_argument("theorem1_scaling: all inputs must be positive");
  const double poly1 =
      std::max({w_bar / sigma_w, eta_bar / sigma_eta, w_bar * eta_bar / (sigma_w * sigma_eta)}) *
      std::max(w_bar, eta_bar);
  const double poly2 = w_bar * std::max(w_bar * w_bar, eta_bar * eta_bar) *
                       std::max({w_bar * sigma_eta, eta_bar * sigma_w, w_bar * eta_bar});
  return {poly1, poly2};
}

inline void to_json(nlohmann::json& j, const BoundReport& r) {
  j = nlohmann::json{{"T0", r.T0},
                     {"T", r.T},
                     {"bound", r.bound},
                     {"applicable", r.applicable},
                     {"n", r.n},
                     {"m", r.m},
                     {"d", r.d},
                     {"sigma_sub", r.sigma_sub},
                     {"b_z", r.b_z},
                     {"delta", r.delta},
                     {"k", r.k},
                     {"p", r.p},
                     {"s_z", r.s_z},
                     {"log_det_term", r.log_det_term},
                     {"poly1", r.poly1},
                     {"poly2", r.poly2}};
}

}  // namespace sysid
