#ifndef REGTPS_KLE_HPP
#define REGTPS_KLE_HPP

#include <cmath>
#include <memory>
#include <string>

#include <Eigen/Dense>

#include "regtps/error.hpp"
#include "regtps/tps_basis.hpp"

namespace regtps {

/// Per-mode prior variances 1 / (1 + alpha * lambda_S) of the regularized
/// TPS covariance (I + alpha S)^{-1}.
struct KleEigenSpectrum {
  double alpha = 1.0;
  Eigen::VectorXd lambdas;
};

inline void require_positive_alpha(double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw InputError("alpha must be a positive finite number");
  }
}

inline Eigen::VectorXd spectral_map(const Eigen::VectorXd& penalty_eigvals, double alpha) {
  require_positive_alpha(alpha);
  return (1.0 + alpha * penalty_eigvals.array()).inverse().matrix();
}

/// Truncated Karhunen-Loeve model on a shared, immutable TPS system. The
/// retained modes are the leading columns of the penalty eigenvectors
/// (ascending penalty), so the polynomial modes always come first.
class KleModel {
 public:
  KleModel(std::shared_ptr<const TpsBasisSystem> basis, Eigen::Index retained)
      : basis_(std::move(basis)), retained_(retained) {
    if (!basis_) throw InputError("KleModel requires a basis");
    if (retained_ < basis_->null_dimension() || retained_ > basis_->size()) {
      throw InputError("retained mode count " + std::to_string(retained_) + " outside [" +
                       std::to_string(basis_->null_dimension()) + ", " +
                       std::to_string(basis_->size()) + "]");
    }
  }

  const TpsBasisSystem& basis() const { return *basis_; }
  std::shared_ptr<const TpsBasisSystem> basis_ptr() const { return basis_; }
  Eigen::Index retained() const { return retained_; }
  int null_dimension() const { return basis_->null_dimension(); }

  auto modes() const { return basis_->eigenvectors().leftCols(retained_); }
  auto penalty_eigenvalues() const { return basis_->eigenvalues().head(retained_); }

  /// Phi(points) * Psi restricted to the retained modes.
  Eigen::MatrixXd mode_design(const PointSet& points) const {
    return basis_->mode_design(points).leftCols(retained_);
  }

 private:
  std::shared_ptr<const TpsBasisSystem> basis_;
  Eigen::Index retained_;
};

inline KleEigenSpectrum kle_eigenvalues(const KleModel& model, double alpha) {
  return {alpha, spectral_map(model.penalty_eigenvalues(), alpha)};
}

/// (I + alpha S)^{-1} from a precomputed decomposition S = Psi diag(lambda) Psi'.
inline Eigen::MatrixXd spectral_covariance(const Eigen::MatrixXd& psi,
                                           const Eigen::VectorXd& penalty_eigvals, double alpha) {
  if (psi.cols() != penalty_eigvals.size()) {
    throw InputError("eigenvector and eigenvalue counts differ");
  }
  const Eigen::VectorXd lam = spectral_map(penalty_eigvals, alpha);
  Eigen::MatrixXd cov = psi * lam.asDiagonal() * psi.transpose();
  return 0.5 * (cov + cov.transpose());
}

/// Full (untruncated) K x K covariance Psi diag(1/(1+alpha lambda)) Psi'.
inline Eigen::MatrixXd covariance_matrix(const TpsBasisSystem& basis, double alpha) {
  return spectral_covariance(basis.eigenvectors(), basis.eigenvalues(), alpha);
}

inline Eigen::MatrixXd covariance_matrix(const KleModel& model, double alpha) {
  return covariance_matrix(model.basis(), alpha);
}

/// Smallest prefix of modes whose variance at alpha_ref reaches the requested
/// fraction of the total; never fewer than the polynomial modes.
inline Eigen::Index truncation_index(const Eigen::VectorXd& variances, double variance_fraction,
                                     Eigen::Index minimum) {
  if (!(variance_fraction > 0.0 && variance_fraction <= 1.0)) {
    throw InputError("variance fraction must lie in (0, 1]");
  }
  const Eigen::Index k = variances.size();
  if (variance_fraction == 1.0) return k;
  const double target = variance_fraction * variances.sum();
  double acc = 0.0;
  for (Eigen::Index m = 0; m < k; ++m) {
    acc += variances[m];
    if (acc >= target) return std::max(m + 1, minimum);
  }
  return k;
}

inline KleModel truncate(std::shared_ptr<const TpsBasisSystem> basis, double variance_fraction,
                         double alpha_ref = 1.0) {
  if (!basis) throw InputError("truncate requires a basis");
  const Eigen::VectorXd lam = spectral_map(basis->eigenvalues(), alpha_ref);
  const Eigen::Index m = truncation_index(lam, variance_fraction, basis->null_dimension());
  return KleModel(std::move(basis), m);
}

/// Field values Phi_eval * Psi * z.
inline Eigen::VectorXd reconstruct_field(const KleModel& model, const Eigen::VectorXd& z,
                                         const Eigen::MatrixXd& eval_design) {
  if (z.size() != model.retained()) {
    throw InputError("z has length " + std::to_string(z.size()) + ", expected " +
                     std::to_string(model.retained()));
  }
  if (eval_design.cols() != model.basis().size()) {
    throw InputError("evaluation design has " + std::to_string(eval_design.cols()) +
                     " columns, expected " + std::to_string(model.basis().size()));
  }
  const Eigen::VectorXd c = model.modes() * z;
  return eval_design * c;
}

/// Mode coordinates z = Psi' c over the retained modes.
inline Eigen::VectorXd decorrelate(const KleModel& model, const Eigen::VectorXd& c) {
  if (c.size() != model.basis().size()) {
    throw InputError("coefficient vector has length " + std::to_string(c.size()) +
                     ", expected " + std::to_string(model.basis().size()));
  }
  return model.modes().transpose() * c;
}

}  // namespace regtps

#endif
