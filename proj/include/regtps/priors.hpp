#ifndef REGTPS_PRIORS_HPP
#define REGTPS_PRIORS_HPP

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "regtps/error.hpp"

namespace regtps {

/// Calibration targets for the penalized-complexity priors:
/// Pr(rho < rho0) = p_rho and Pr(sigma_u > sigma0) = p_sigma.
struct PcTargets {
  double rho0 = 0.1;
  double p_rho = 0.05;
  double sigma0 = 1.0;
  double p_sigma = 0.05;

  void validate() const {
    if (!(rho0 > 0.0) || !(sigma0 > 0.0)) throw InputError("PC targets rho0 and sigma0 must be positive");
    if (!(p_rho > 0.0 && p_rho < 1.0) || !(p_sigma > 0.0 && p_sigma < 1.0)) {
      throw InputError("PC tail probabilities must lie in (0, 1)");
    }
  }
  double lambda_rho() const { return -std::log(p_rho) * rho0; }
  double lambda_sigma() const { return -std::log(p_sigma) / sigma0; }
};

struct PriorConfig {
  double log_alpha_mean = 0.0;
  double log_alpha_sd = 2.0;
  double sigma_rate = 1.0;     // regTPS noise, exponential
  double sigma_e_scale = 1.0;  // SPDE noise, half-Cauchy
  PcTargets pc;

  void validate() const {
    if (!std::isfinite(log_alpha_mean)) throw InputError("log_alpha_mean must be finite");
    if (!(log_alpha_sd > 0.0)) throw InputError("log_alpha_sd must be positive");
    if (!(sigma_rate > 0.0)) throw InputError("sigma_rate must be positive");
    if (!(sigma_e_scale > 0.0)) throw InputError("sigma_e_scale must be positive");
    pc.validate();
  }

  /// Defaults scaled to the data: noise scales from SD(y), rho0 from the
  /// domain diameter. A degenerate SD(y) falls back to 1.
  static PriorConfig from_data(const Eigen::VectorXd& y, double domain_diameter) {
    if (!(domain_diameter > 0.0)) throw InputError("domain diameter must be positive");
    double sd = 1.0;
    if (y.size() >= 2) {
      const double mean = y.mean();
      const double v = (y.array() - mean).square().sum() / static_cast<double>(y.size() - 1);
      if (v > 0.0 && std::isfinite(v)) sd = std::sqrt(v);
    }
    PriorConfig p;
    p.sigma_rate = -std::log(0.05) / sd;
    p.sigma_e_scale = sd;
    p.pc = {0.1 * domain_diameter, 0.05, sd, 0.05};
    return p;
  }
};

/// log pi(rho) + log pi(sigma_u) on the natural scale.
inline double pc_prior_logdensity(double rho, double sigma_u, const PcTargets& t) {
  if (!(rho > 0.0) || !(sigma_u > 0.0)) throw InputError("PC prior arguments must be positive");
  const double lr = t.lambda_rho();
  const double ls = t.lambda_sigma();
  return std::log(lr) - 2.0 * std::log(rho) - lr / rho + std::log(ls) - ls * sigma_u;
}

/// Same density for (log rho, log sigma_u), Jacobians included.
inline double pc_prior_logdensity_log(double log_rho, double log_sigma_u, const PcTargets& t) {
  return pc_prior_logdensity(std::exp(log_rho), std::exp(log_sigma_u), t) + log_rho + log_sigma_u;
}

/// log of the half-Cauchy(0, scale) density at x > 0.
inline double half_cauchy_logdensity(double x, double scale) {
  const double r = x / scale;
  return std::log(2.0 / (std::numbers::pi * scale)) - std::log1p(r * r);
}

inline double exponential_logdensity(double x, double rate) { return std::log(rate) - rate * x; }

inline double normal_logdensity(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

}  // namespace regtps

#endif
