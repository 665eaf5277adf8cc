#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "sysid/rng.hpp"
#include "sysid/sets.hpp"

namespace sysid {

enum class NoiseFamily { uniform_box, scaled_sign, uniform_sphere, truncated_gaussian, degenerate_zero };

inline std::string to_string(NoiseFamily f) {
  switch (f) {
    case NoiseFamily::uniform_box: return "uniform_box";
    case NoiseFamily::scaled_sign: return "scaled_sign";
    case NoiseFamily::uniform_sphere: return "uniform_sphere";
    case NoiseFamily::truncated_gaussian: return "truncated_gaussian";
    case NoiseFamily::degenerate_zero: return "degenerate_zero";
  }
  throw std::logic_error("unknown noise family");
}

/// Certified distribution constants: sigma is the square root of the minimum
/// covariance eigenvalue, max_norm the almost-sure l2 bound, and
/// ratio = max_norm / sigma the scale-invariant shape parameter.
struct NoiseCertificate {
  double sigma = 0.0;
  double max_norm = 0.0;
  double ratio = 0.0;
};

class CertificationError : public std::runtime_error {
 public:
  CertificationError(const std::string& what, long samples)
      : std::runtime_error(what + " (samples: " + std::to_string(samples) + ")"),
        samples(samples) {}
  long samples;
};

/// Bounded zero-mean i.i.d. distribution. All families are isotropic or
/// product-form, so the minimum covariance eigenvalue equals the
/// per-coordinate variance.
class NoiseSpec {
 public:
  NoiseSpec() : NoiseSpec(NoiseFamily::degenerate_zero, 1) {}

  static NoiseSpec uniform_box(int dim, double a) {
    require_dim(dim);
    if (!(a > 0.0)) throw std::invalid_argument("uniform_box: halfwidth a must be positive");
    NoiseSpec s(NoiseFamily::uniform_box, dim);
    s.a_ = a;
    return s;
  }

  static NoiseSpec scaled_sign(int dim, double sigma) {
    require_dim(dim);
    if (!(sigma > 0.0)) throw std::invalid_argument("scaled_sign: sigma must be positive");
    NoiseSpec s(NoiseFamily::scaled_sign, dim);
    s.sigma_param_ = sigma;
    return s;
  }

  static NoiseSpec uniform_sphere(int dim, double r) {
    require_dim(dim);
    if (!(r > 0.0)) throw std::invalid_argument("uniform_sphere: radius r must be positive");
    NoiseSpec s(NoiseFamily::uniform_sphere, dim);
    s.radius_ = r;
    return s;
  }

  /// Isotropic Gaussian with pre-truncation std `std`, radially rejected at
  /// `radius`.
  static NoiseSpec truncated_gaussian(int dim, double std, double radius) {
    require_dim(dim);
    if (!(std > 0.0)) throw std::invalid_argument("truncated_gaussian: std must be positive");
    if (!(radius > 0.0)) throw std::invalid_argument("truncated_gaussian: radius must be positive");
    NoiseSpec s(NoiseFamily::truncated_gaussian, dim);
    s.std_ = std;
    s.radius_ = radius;
    return s;
  }

  static NoiseSpec zero(int dim) {
    require_dim(dim);
    return NoiseSpec(NoiseFamily::degenerate_zero, dim);
  }

  NoiseFamily family() const { return family_; }
  int dim() const { return dim_; }
  bool is_zero() const { return family_ == NoiseFamily::degenerate_zero; }

  Eigen::VectorXd sample(RngStream& rng) const {
    Eigen::VectorXd v(dim_);
    switch (family_) {
      case NoiseFamily::uniform_box:
        for (int i = 0; i < dim_; ++i) v(i) = rng.uniform(-a_, a_);
        return v;
      case NoiseFamily::scaled_sign:
        for (int i = 0; i < dim_; ++i) v(i) = sigma_param_ * rng.sign();
        return v;
      case NoiseFamily::uniform_sphere: {
        double norm = 0.0;
        do {
          for (int i = 0; i < dim_; ++i) v(i) = rng.normal();
          norm = v.norm();
        } while (norm == 0.0);
        return radius_ / norm * v;
      }
      case NoiseFamily::truncated_gaussian: {
        for (long attempt = 0; attempt < kMaxRejectionAttempts; ++attempt) {
          for (int i = 0; i < dim_; ++i) v(i) = std_ * rng.normal();
          if (v.norm() <= radius_) return v;
        }
        throw CertificationError("truncated_gaussian: rejection acceptance too low",
                                 kMaxRejectionAttempts);
      }
      case NoiseFamily::degenerate_zero:
        v.setZero();
        return v;
    }
    throw std::logic_error("unknown noise family");
  }

  /// Closed-form constants where available; Monte Carlo with a fixed
  /// dedicated seed for the truncated Gaussian, whose covariance has no
  /// convenient closed form. The Monte Carlo sigma is shrunk by 2% so that
  /// only the safe (lower-bound) direction can err.
  NoiseCertificate certify() const {
    const double d = static_cast<double>(dim_);
    switch (family_) {
      case NoiseFamily::uniform_box:
        return {a_ / std::sqrt(3.0), a_ * std::sqrt(d), std::sqrt(3.0 * d)};
      case NoiseFamily::scaled_sign:
        return {sigma_param_, sigma_param_ * std::sqrt(d), std::sqrt(d)};
      case NoiseFamily::uniform_sphere:
        return {radius_ / std::sqrt(d), radius_, std::sqrt(d)};
      case NoiseFamily::truncated_gaussian:
        return certify_monte_carlo();
      case NoiseFamily::degenerate_zero:
        throw std::domain_error("degenerate_zero spec has no positive small-ball certificate");
    }
    throw std::logic_error("unknown noise family");
  }

  /// Tightest axis-aligned box containing the support; used for tube
  /// inflation. Exact for product families, the bounding cube otherwise.
  Box support_box() const {
    switch (family_) {
      case NoiseFamily::uniform_box: return Box::symmetric(dim_, a_);
      case NoiseFamily::scaled_sign: return Box::symmetric(dim_, sigma_param_);
      case NoiseFamily::uniform_sphere: return Box::symmetric(dim_, radius_);
      case NoiseFamily::truncated_gaussian: return Box::symmetric(dim_, radius_);
      case NoiseFamily::degenerate_zero: return Box::zero(dim_);
    }
    throw std::logic_error("unknown noise family");
  }

  // Parameter accessors (meaningful per family).
  double box_halfwidth() const { return a_; }
  double sign_scale() const { return sigma_param_; }
  double radius() const { return radius_; }
  double gaussian_std() const { return std_; }

  friend void to_json(nlohmann::json& j, const NoiseSpec& s) {
    j = nlohmann::json{{"family", to_string(s.family_)}, {"dim", s.dim_}};
    switch (s.family_) {
      case NoiseFamily::uniform_box: j["a"] = s.a_; break;
      case NoiseFamily::scaled_sign: j["sigma"] = s.sigma_param_; break;
      case NoiseFamily::uniform_sphere: j["r"] = s.radius_; break;
      case NoiseFamily::truncated_gaussian:
        j["std"] = s.std_;
        j["radius"] = s.radius_;
        break;
      case NoiseFamily::degenerate_zero: break;
    }
  }

  friend void from_json(const nlohmann::json& j, NoiseSpec& s) {
    const std::string fam = j.at("family").get<std::string>();
    const int dim = j.at("dim").get<int>();
    if (fam == "uniform_box")
      s = uniform_box(dim, j.at("a").get<double>());
    else if (fam == "scaled_sign")
      s = scaled_sign(dim, j.at("sigma").get<double>());
    else if (fam == "uniform_sphere")
      s = uniform_sphere(dim, j.at("r").get<double>());
    else if (fam == "truncated_gaussian")
      s = truncated_gaussian(dim, j.at("std").get<double>(), j.at("radius").get<double>());
    else if (fam == "degenerate_zero")
      s = zero(dim);
    else
      throw std::invalid_argument("NoiseSpec: unknown family '" + fam + "'");
  }

 private:
  NoiseSpec(NoiseFamily f, int dim) : family_(f), dim_(dim) {}

  static void require_dim(int dim) {
    if (dim < 1) throw std::invalid_argument("NoiseSpec: dimension must be positive");
  }

  NoiseCertificate certify_monte_carlo() const {
    constexpr long kSamples = 1'000'000;
    RngStream rng(kCertificationSeed, 0);
    Eigen::MatrixXd second = Eigen::MatrixXd::Zero(dim_, dim_);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim_);
    for (long i = 0; i < kSamples; ++i) {
      const Eigen::VectorXd v = sample(rng);
      second.noalias() += v * v.transpose();
      mean += v;
    }
    mean /= static_cast<double>(kSamples);
    Eigen::MatrixXd cov = second / static_cast<double>(kSamples) - mean * mean.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    const double lambda_min = es.eigenvalues().minCoeff();
    // Relative standard error of a variance estimate is ~sqrt(2/N); reject
    // when three standard errors eat into the 2% safety margin.
    const double rel_se = std::sqrt(2.0 / static_cast<double>(kSamples - 1));
    if (lambda_min <= 0.0 || 3.0 * rel_se > 0.02)
      throw CertificationError("truncated_gaussian: certification variance too high", kSamples);
    const double sigma = 0.98 * std::sqrt(lambda_min);
    return {sigma, radius_, radius_ / sigma};
  }

  static constexpr std::uint64_t kCertificationSeed = 0x5eedcafe0c0ffeeULL;
  static constexpr long kMaxRejectionAttempts = 1'000'000;

  NoiseFamily family_;
  int dim_;
  double a_ = 0.0;
  double sigma_param_ = 0.0;
  double radius_ = 0.0;
  double std_ = 0.0;
};

}  // namespace sysid
