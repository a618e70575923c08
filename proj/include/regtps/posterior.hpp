#ifndef REGTPS_POSTERIOR_HPP
#define REGTPS_POSTERIOR_HPP

#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "regtps/error.hpp"
#include "regtps/kle.hpp"
#include "regtps/priors.hpp"
#include "regtps/spde.hpp"
#include "regtps/target.hpp"

namespace regtps {

namespace detail {

inline double sample_sd(const Eigen::VectorXd& y) {
  if (y.size() < 2) return 1.0;
  const double v = (y.array() - y.mean()).square().sum() / static_cast<double>(y.size() - 1);
  return (v > 0.0 && std::isfinite(v)) ? std::sqrt(v) : 1.0;
}

inline double gaussian_loglik(const Eigen::VectorXd& r, double sigma) {
  const double n = static_cast<double>(r.size());
  return -n * (std::log(sigma) + 0.5 * std::log(2.0 * std::numbers::pi)) -
         0.5 * r.squaredNorm() / (sigma * sigma);
}

inline Eigen::VectorXd gaussian_pointwise(const Eigen::VectorXd& r, double sigma) {
  const double c = std::log(sigma) + 0.5 * std::log(2.0 * std::numbers::pi);
  return (-0.5 * r.array().square() / (sigma * sigma) - c).matrix();
}

constexpr double neg_inf = -std::numeric_limits<double>::infinity();

}  // namespace detail

/// regTPS-KLE posterior over x = (z_raw, log sigma, log alpha).
///
/// z_k = z_raw_k on the polynomial modes and sqrt(1/(1+alpha lambda_k)) z_raw_k
/// elsewhere; y ~ N(B z, sigma^2 I) with B the retained mode design at the
/// observations. With a fixed alpha the last coordinate is dropped.
class RegTpsPosterior {
 public:
  RegTpsPosterior(Eigen::MatrixXd mode_design, Eigen::VectorXd penalty_eigvals, Eigen::VectorXd y,
                  PriorConfig prior, int null_dim = 3,
                  std::optional<double> fixed_log_alpha = std::nullopt)
      : b_(std::move(mode_design)),
        lambda_(std::move(penalty_eigvals)),
        y_(std::move(y)),
        prior_(prior),
        null_dim_(null_dim),
        fixed_log_alpha_(fixed_log_alpha),
        y_sd_(detail::sample_sd(y_)) {
    prior_.validate();
    if (b_.cols() != lambda_.size()) throw InputError("design columns and eigenvalue count differ");
    if (b_.rows() != y_.size()) throw InputError("design rows and observation count differ");
    if (null_dim_ < 0 || null_dim_ > lambda_.size()) throw InputError("bad null-space dimension");
    if (fixed_log_alpha_ && !std::isfinite(*fixed_log_alpha_)) throw InputError("fixed log alpha must be finite");
  }

  static RegTpsPosterior from_model(const KleModel& model, const PointSet& obs, Eigen::VectorXd y,
                                    PriorConfig prior,
                                    std::optional<double> fixed_log_alpha = std::nullopt) {
    return RegTpsPosterior(model.mode_design(obs), model.penalty_eigenvalues(), std::move(y), prior,
                           model.null_dimension(), fixed_log_alpha);
  }

  Eigen::Index modes() const { return lambda_.size(); }
  Eigen::Index n_obs() const { return y_.size(); }
  Eigen::Index dimension() const { return modes() + (fixed_log_alpha_ ? 1 : 2); }
  bool alpha_fixed() const { return fixed_log_alpha_.has_value(); }
  const PriorConfig& prior() const { return prior_; }
  const Eigen::MatrixXd& design() const { return b_; }

  double sigma(const Eigen::VectorXd& x) const { return std::exp(x[modes()]); }
  double log_alpha(const Eigen::VectorXd& x) const {
    return fixed_log_alpha_ ? *fixed_log_alpha_ : x[modes() + 1];
  }
  double alpha(const Eigen::VectorXd& x) const { return std::exp(log_alpha(x)); }

  /// Prior standard deviations sqrt(lambda_{k,alpha}) of the mode coordinates.
  Eigen::VectorXd scales(double alpha) const {
    Eigen::VectorXd s(modes());
    for (Eigen::Index k = 0; k < modes(); ++k) {
      s[k] = k < null_dim_ ? 1.0 : 1.0 / std::sqrt(1.0 + alpha * lambda_[k]);
    }
    return s;
  }

  /// Mode coordinates z for a parameter vector.
  Eigen::VectorXd coefficients(const Eigen::VectorXd& x) const {
    return scales(alpha(x)).cwiseProduct(x.head(modes()));
  }

  double log_density(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const {
    check(x);
    grad.setZero(dimension());
    const Eigen::Index m = modes();
    const double log_sigma = x[m];
    const double sigma = std::exp(log_sigma);
    const double la = log_alpha(x);
    const double alpha = std::exp(la);
    const Eigen::VectorXd s = scales(alpha);
    const auto z_raw = x.head(m);
    const Eigen::VectorXd r = y_ - b_ * s.cwiseProduct(z_raw);
    const double rss = r.squaredNorm();
    double lp = detail::gaussian_loglik(r, sigma) - 0.5 * z_raw.squaredNorm() +
                exponential_logdensity(sigma, prior_.sigma_rate) + log_sigma;
    if (!std::isfinite(lp)) return detail::neg_inf;

    const Eigen::VectorXd g_z = b_.transpose() * r / (sigma * sigma);  // d loglik / dz
    grad.head(m) = s.cwiseProduct(g_z) - z_raw;
    grad[m] = -static_cast<double>(n_obs()) + rss / (sigma * sigma) - prior_.sigma_rate * sigma + 1.0;
    if (!fixed_log_alpha_) {
      lp += normal_logdensity(la, prior_.log_alpha_mean, prior_.log_alpha_sd);
      double d = 0.0;
      for (Eigen::Index k = null_dim_; k < m; ++k) {
        const double al = alpha * lambda_[k];
        d += g_z[k] * z_raw[k] * (-0.5 * s[k] * al / (1.0 + al));
      }
      grad[m + 1] = d - (la - prior_.log_alpha_mean) / (prior_.log_alpha_sd * prior_.log_alpha_sd);
    }
    return lp;
  }

  Eigen::VectorXd pointwise_loglik(const Eigen::VectorXd& x) const {
    check(x);
    const Eigen::VectorXd r = y_ - b_ * coefficients(x);
    return detail::gaussian_pointwise(r, sigma(x));
  }

  Eigen::VectorXd initial_point(std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::VectorXd x(dimension());
    for (Eigen::Index k = 0; k < modes(); ++k) x[k] = 0.5 * u(rng);
    x[modes()] = std::log(0.5 * y_sd_) + 0.5 * u(rng);
    if (!fixed_log_alpha_) x[modes() + 1] = prior_.log_alpha_mean + u(rng);
    return x;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (Eigen::Index k = 0; k < modes(); ++k) out.push_back("z_raw[" + std::to_string(k) + "]");
    out.push_back("log_sigma");
    if (!fixed_log_alpha_) out.push_back("log_alpha");
    return out;
  }

  Target target() const {
    auto self = std::make_shared<const RegTpsPosterior>(*this);
    Target t;
    t.dimension = dimension();
    t.log_density = [self](const Eigen::VectorXd& x, Eigen::VectorXd& g) { return self->log_density(x, g); };
    t.pointwise_loglik = [self](const Eigen::VectorXd& x) { return self->pointwise_loglik(x); };
    t.initial_point = [self](std::mt19937_64& rng) { return self->initial_point(rng); };
    t.names = names();
    return t;
  }

 private:
  void check(const Eigen::VectorXd& x) const {
    if (x.size() != dimension()) {
      throw InputError("parameter vector has length " + std::to_string(x.size()) + ", expected " +
                       std::to_string(dimension()));
    }
  }

  Eigen::MatrixXd b_;
  Eigen::VectorXd lambda_;
  Eigen::VectorXd y_;
  PriorConfig prior_;
  int null_dim_;
  std::optional<double> fixed_log_alpha_;
  double y_sd_;
};

/// How log|Q| and its kappa derivative are evaluated.
///
/// `spectral` uses Q(kappa, 1) = (kappa^2 C + G) C^{-1} (kappa^2 C + G) with the
/// lumped (diagonal) C: log|Q| = log|C| + 2 sum log(kappa^2 + mu_i) where mu_i
/// are the eigenvalues of C^{-1/2} G C^{-1/2}, computed once per mesh.
/// `sparse_factor` factorizes Q at every evaluation and takes the trace term
/// from the selected inverse.
enum class SpdeLogDet { spectral, sparse_factor };

/// SPDE posterior over x = (u_raw, log sigma_e, log rho, log sigma_u).
///
/// u_raw ~ N(0, Q(kappa, 1)^{-1}), u = u_raw / tau, y ~ N(A u, sigma_e^2 I).
class SpdePosterior {
 public:
  SpdePosterior(FemMatrices fem, SparseRowMatrix a_obs, Eigen::VectorXd y, PriorConfig prior,
                SpdeLogDet method = SpdeLogDet::spectral)
      : fem_(std::move(fem)), a_(std::move(a_obs)), y_(std::move(y)), prior_(prior),
        y_sd_(detail::sample_sd(y_)), method_(method) {
    prior_.validate();
    if (a_.cols() != fem_.size()) throw InputError("projection columns and mesh size differ");
    if (a_.rows() != y_.size()) throw InputError("projection rows and observation count differ");
    at_ = SparseMatrix(a_.transpose());
    if (!(fem_.c_diag.array() > 0.0).all()) throw InputError("lumped mass must be positive");
    c_inv_ = fem_.c_diag.cwiseInverse();
    log_det_c_ = fem_.c_diag.array().log().sum();
    if (method_ == SpdeLogDet::spectral) {
      const Eigen::VectorXd s = c_inv_.cwiseSqrt();
      const Eigen::MatrixXd k = s.asDiagonal() * Eigen::MatrixXd(fem_.G) * s.asDiagonal();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (k + k.transpose()), Eigen::EigenvaluesOnly);
      if (eig.info() != Eigen::Success) throw NumericalError("stiffness eigendecomposition failed");
      mu_ = eig.eigenvalues().cwiseMax(0.0);
    }
  }

  SpdeLogDet log_det_method() const { return method_; }

  /// log|Q(kappa, 1)| and its derivative in kappa, by the spectral identity.
  std::pair<double, double> log_det_q(double kappa) const {
    if (method_ != SpdeLogDet::spectral) throw InputError("log_det_q needs the spectral method");
    const double k2 = kappa * kappa;
    double value = log_det_c_, deriv = 0.0;
    for (Eigen::Index i = 0; i < mu_.size(); ++i) {
      value += 2.0 * std::log(k2 + mu_[i]);
      deriv += 4.0 * kappa / (k2 + mu_[i]);
    }
    return {value, deriv};
  }

  Eigen::Index nodes() const { return fem_.size(); }
  Eigen::Index n_obs() const { return y_.size(); }
  Eigen::Index dimension() const { return nodes() + 3; }
  const PriorConfig& prior() const { return prior_; }
  const FemMatrices& fem() const { return fem_; }

  double sigma_e(const Eigen::VectorXd& x) const { return std::exp(x[nodes()]); }
  double rho(const Eigen::VectorXd& x) const { return std::exp(x[nodes() + 1]); }
  double sigma_u(const Eigen::VectorXd& x) const { return std::exp(x[nodes() + 2]); }
  SpdeHyper hyper(const Eigen::VectorXd& x) const { return hyperparam_transform(rho(x), sigma_u(x)); }

  /// Latent field u = u_raw / tau at the mesh nodes.
  Eigen::VectorXd field(const Eigen::VectorXd& x) const {
    check(x);
    return x.head(nodes()) / hyper(x).tau;
  }

  double log_density(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const {
    check(x);
    grad.setZero(dimension());
    const Eigen::Index m = nodes();
    const double log_se = x[m], log_rho = x[m + 1], log_su = x[m + 2];
    const double se = std::exp(log_se);
    const double rho = std::exp(log_rho), su = std::exp(log_su);
    if (!std::isfinite(se) || !std::isfinite(rho) || !std::isfinite(su) || se == 0.0 || rho == 0.0 ||
        su == 0.0) {
      return detail::neg_inf;
    }
    const SpdeHyper h = hyperparam_transform(rho, su);
    const double kappa = h.kappa;
    const double k2 = kappa * kappa;
    const auto u_raw = x.head(m);

    // Q u_raw = (k2 C + G) C^{-1} (k2 C + G) u_raw.
    const Eigen::VectorXd gu = fem_.G * u_raw;
    const Eigen::VectorXd v = k2 * fem_.c_diag.cwiseProduct(u_raw) + gu;
    const Eigen::VectorXd cv = c_inv_.cwiseProduct(v);
    const Eigen::VectorXd qu = k2 * v + fem_.G * cv;
    const double quad = v.dot(cv);
    // u_raw' (dQ/dkappa) u_raw with dQ/dkappa = 4 kappa^3 C + 4 kappa G.
    const double dquad = 4.0 * k2 * kappa * u_raw.dot(fem_.c_diag.cwiseProduct(u_raw)) +
                         4.0 * kappa * u_raw.dot(gu);

    double log_det = 0.0, d_log_det = 0.0;
    if (method_ == SpdeLogDet::spectral) {
      std::tie(log_det, d_log_det) = log_det_q(kappa);
    } else {
      const SparseMatrix q = precision_matrix(fem_, kappa, 1.0);
      Eigen::SimplicialLLT<SparseMatrix> llt(q);
      if (llt.info() != Eigen::Success) return detail::neg_inf;
      log_det = log_det_from_factor(llt);
      const SparseMatrix dq = (4.0 * k2 * kappa) * fem_.C + (4.0 * kappa) * fem_.G;
      d_log_det = SelectedInverse(llt).trace_product(dq);
    }

    const Eigen::VectorXd u = u_raw / h.tau;
    const Eigen::VectorXd r = y_ - a_ * u;
    const double rss = r.squaredNorm();
    double lp = detail::gaussian_loglik(r, se) + 0.5 * log_det - 0.5 * quad -
                0.5 * static_cast<double>(m) * std::log(2.0 * std::numbers::pi) +
                half_cauchy_logdensity(se, prior_.sigma_e_scale) + log_se +
                pc_prior_logdensity_log(log_rho, log_su, prior_.pc);
    if (!std::isfinite(lp)) return detail::neg_inf;

    const Eigen::VectorXd g_u = at_ * r / (se * se);  // d loglik / du
    grad.head(m) = g_u / h.tau - qu;
    const double se_ratio = se / prior_.sigma_e_scale;
    grad[m] = -static_cast<double>(n_obs()) + rss / (se * se) -
              2.0 * se_ratio * se_ratio / (1.0 + se_ratio * se_ratio) + 1.0;

    // u scales as sigma_u / rho, so d loglik / d log sigma_u = g_u . u and
    // d loglik / d log rho = -g_u . u; kappa = sqrt(8) / rho.
    const double gu_u = g_u.dot(u);
    const double d_kappa = 0.5 * d_log_det - 0.5 * dquad;
    const double lr = prior_.pc.lambda_rho(), ls = prior_.pc.lambda_sigma();
    grad[m + 1] = -gu_u - kappa * d_kappa + (-1.0 + lr / rho);
    grad[m + 2] = gu_u + (1.0 - ls * su);
    return lp;
  }

  Eigen::VectorXd pointwise_loglik(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd r = y_ - a_ * field(x);
    return detail::gaussian_pointwise(r, sigma_e(x));
  }

  /// Starts near the prior scales with a small latent field.
  Eigen::VectorXd initial_point(std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::VectorXd x(dimension());
    const double log_rho0 = std::log(3.0 * prior_.pc.rho0) + 0.5 * u(rng);
    const double log_su0 = std::log(y_sd_) + 0.5 * u(rng);
    const double tau = hyperparam_transform(std::exp(log_rho0), std::exp(log_su0)).tau;
    for (Eigen::Index k = 0; k < nodes(); ++k) x[k] = 0.1 * tau * u(rng);
    x[nodes()] = std::log(0.5 * y_sd_) + 0.5 * u(rng);
    x[nodes() + 1] = log_rho0;
    x[nodes() + 2] = log_su0;
    return x;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (Eigen::Index k = 0; k < nodes(); ++k) out.push_back("u_raw[" + std::to_string(k) + "]");
    out.insert(out.end(), {"log_sigma_e", "log_rho", "log_sigma_u"});
    return out;
  }

  Target target() const {
    auto self = std::make_shared<const SpdePosterior>(*this);
    Target t;
    t.dimension = dimension();
    t.log_density = [self](const Eigen::VectorXd& x, Eigen::VectorXd& g) { return self->log_density(x, g); };
    t.pointwise_loglik = [self](const Eigen::VectorXd& x) { return self->pointwise_loglik(x); };
    t.initial_point = [self](std::mt19937_64& rng) { return self->initial_point(rng); };
    t.names = names();
    return t;
  }

 private:
  void check(const Eigen::VectorXd& x) const {
    if (x.size() != dimension()) {
      throw InputError("parameter vector has length " + std::to_string(x.size()) + ", expected " +
                       std::to_string(dimension()));
    }
  }

  FemMatrices fem_;
  SparseRowMatrix a_;
  SparseMatrix at_;
  Eigen::VectorXd y_;
  PriorConfig prior_;
  double y_sd_;
  SpdeLogDet method_;
  Eigen::VectorXd c_inv_;
  double log_det_c_ = 0.0;
  Eigen::VectorXd mu_;
};

}  // namespace regtps

#endif
