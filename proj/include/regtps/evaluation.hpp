#ifndef REGTPS_EVALUATION_HPP
#define REGTPS_EVALUATION_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "regtps/error.hpp"
#include "regtps/io/csv.hpp"
#include "regtps/kle.hpp"
#include "regtps/spde.hpp"

namespace regtps {

struct FitMetrics {
  double rmse = 0.0;
  double r_squared = std::numeric_limits<double>::quiet_NaN();  // NaN when the truth is constant
  double mae = 0.0;
  std::string method;
  std::string scenario;

  bool has_r_squared() const { return !std::isnan(r_squared); }
};

/// Prediction accuracy against the noise-free truth.
inline FitMetrics compute_metrics(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth,
                                  std::string method = {}, std::string scenario = {}) {
  if (pred.size() != truth.size()) throw InputError("prediction and truth lengths differ");
  if (pred.size() < 2) throw InputError("metrics need at least two points");
  const Eigen::ArrayXd e = (pred - truth).array();
  const double n = static_cast<double>(pred.size());
  FitMetrics m;
  m.method = std::move(method);
  m.scenario = std::move(scenario);
  m.rmse = std::sqrt(e.square().sum() / n);
  m.mae = e.abs().sum() / n;
  const double ss_tot = (truth.array() - truth.mean()).square().sum();
  if (ss_tot > 0.0) m.r_squared = 1.0 - e.square().sum() / ss_tot;
  return m;
}

inline void write_metrics_table(std::ostream& out, const std::vector<FitMetrics>& rows) {
  io::CsvWriter w(out);
  w.header({"scenario", "method", "rmse", "r2", "mae"});
  for (const auto& r : rows) w.field(r.scenario).field(r.method).field(r.rmse).field(r.r_squared).field(r.mae).end_row();
}

struct MatrixDifference {
  Eigen::MatrixXd diff;  // truth - estimate
  double max_abs = 0.0;
  double frobenius = 0.0;
};

inline MatrixDifference matrix_difference(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& estimate) {
  if (truth.rows() != estimate.rows() || truth.cols() != estimate.cols()) {
    throw InputError("covariance matrices have different shapes");
  }
  MatrixDifference d;
  d.diff = truth - estimate;
  d.diff = 0.5 * (d.diff + d.diff.transpose());
  d.max_abs = d.diff.cwiseAbs().maxCoeff();
  d.frobenius = d.diff.norm();
  return d;
}

/// KLE covariance at the mesh nodes: B diag(lambda_{k,alpha}) B', averaged
/// over the given alpha draws. `mode_design_mesh` is Phi(mesh) Psi over the
/// retained modes.
inline Eigen::MatrixXd kle_mesh_covariance(const KleModel& model, const Eigen::MatrixXd& mode_design_mesh,
                                           const std::vector<double>& alphas) {
  if (alphas.empty()) throw InputError("no alpha draws");
  if (mode_design_mesh.cols() != model.retained()) throw InputError("mesh design has the wrong column count");
  Eigen::VectorXd lam = Eigen::VectorXd::Zero(model.retained());
  for (double a : alphas) lam += spectral_map(model.penalty_eigenvalues(), a);
  lam /= static_cast<double>(alphas.size());
  Eigen::MatrixXd cov = mode_design_mesh * lam.asDiagonal() * mode_design_mesh.transpose();
  return 0.5 * (cov + cov.transpose());
}

/// Posterior mean of Q(kappa, tau)^{-1} over the given hyperparameter draws.
inline Eigen::MatrixXd spde_mesh_covariance(const FemMatrices& fem, const std::vector<SpdeHyper>& hypers) {
  if (hypers.empty()) throw InputError("no SPDE hyperparameter draws");
  const Eigen::Index n = fem.size();
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n, n);
  for (const auto& h : hypers) {
    const Eigen::MatrixXd q(precision_matrix(fem, h.kappa, h.tau));
    Eigen::LLT<Eigen::MatrixXd> llt(q);
    if (llt.info() != Eigen::Success) throw NumericalError("SPDE precision is not positive definite");
    acc += llt.solve(Eigen::MatrixXd::Identity(n, n));
  }
  acc /= static_cast<double>(hypers.size());
  return 0.5 * (acc + acc.transpose());
}

struct CovarianceComparison {
  MatrixDifference kle;
  MatrixDifference spde;
};

inline CovarianceComparison covariance_comparison(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& kle_cov,
                                                  const Eigen::MatrixXd& spde_cov) {
  return {matrix_difference(truth, kle_cov), matrix_difference(truth, spde_cov)};
}

/// Long format: i, j, truth, kle_diff, spde_diff (upper triangle with diagonal).
inline void write_covariance_difference_csv(std::ostream& out, const Eigen::MatrixXd& truth,
                                            const CovarianceComparison& c) {
  io::CsvWriter w(out);
  w.header({"i", "j", "truth", "diff_regtps_kle", "diff_spde"});
  for (Eigen::Index i = 0; i < truth.rows(); ++i) {
    for (Eigen::Index j = i; j < truth.cols(); ++j) {
      w.field(static_cast<long long>(i)).field(static_cast<long long>(j)).field(truth(i, j));
      w.field(c.kle.diff(i, j)).field(c.spde.diff(i, j)).end_row();
    }
  }
}

struct LooResult {
  double elpd = 0.0;
  double se = 0.0;
  Eigen::VectorXd pointwise;
  std::vector<char> truncated;  // 1 where importance weights were capped
};

namespace detail {

inline double log_sum_exp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace detail

inline constexpr Eigen::Index loo_min_draws = 100;

/// Truncated importance-sampling leave-one-out from a draws x observations
/// matrix of pointwise log likelihoods. Raw weights 1/p(y_i | theta_s) are
/// capped at mean * sqrt(S).
inline LooResult loo_elpd(const Eigen::MatrixXd& loglik) {
  const Eigen::Index s = loglik.rows(), n = loglik.cols();
  if (s < loo_min_draws) {
    throw InputError("loo needs at least " + std::to_string(loo_min_draws) + " draws, got " + std::to_string(s));
  }
  if (n < 1) throw InputError("loo needs at least one observation");
  LooResult r;
  r.pointwise.resize(n);
  r.truncated.assign(static_cast<std::size_t>(n), 0);
  const double log_s = std::log(static_cast<double>(s));
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd ll = loglik.col(i);
    Eigen::VectorXd log_w = -ll;
    const double cap = detail::log_sum_exp(log_w) - log_s + 0.5 * log_s;
    for (Eigen::Index k = 0; k < s; ++k) {
      if (log_w[k] > cap) {
        log_w[k] = cap;
        r.truncated[static_cast<std::size_t>(i)] = 1;
      }
    }
    r.pointwise[i] = detail::log_sum_exp(log_w + ll) - detail::log_sum_exp(log_w);
  }
  r.elpd = r.pointwise.sum();
  const double mean = r.pointwise.mean();
  const double var = n > 1 ? (r.pointwise.array() - mean).square().sum() / static_cast<double>(n - 1) : 0.0;
  r.se = std::sqrt(static_cast<double>(n) * var);
  return r;
}

struct LooComparisonRow {
  std::string model;
  double elpd = 0.0;
  double elpd_diff = 0.0;
  double se_diff = 0.0;
};

/// Rows ordered best first; the best model is the reference with (0, 0).
inline std::vector<LooComparisonRow> loo_compare(const std::vector<std::pair<std::string, LooResult>>& models) {
  if (models.empty()) throw InputError("no models to compare");
  const Eigen::Index n = models.front().second.pointwise.size();
  for (const auto& m : models) {
    if (m.second.pointwise.size() != n) throw InputError("models were fitted to different observations");
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < models.size(); ++k) {
    if (models[k].second.elpd > models[best].second.elpd) best = k;
  }
  std::vector<LooComparisonRow> rows;
  for (const auto& [name, res] : models) {
    const Eigen::VectorXd d = res.pointwise - models[best].second.pointwise;
    const double mean = d.mean();
    const double var = n > 1 ? (d.array() - mean).square().sum() / static_cast<double>(n - 1) : 0.0;
    rows.push_back({name, res.elpd, d.sum(), std::sqrt(static_cast<double>(n) * var)});
  }
  rows[best].elpd_diff = 0.0;
  rows[best].se_diff = 0.0;
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.elpd_diff > b.elpd_diff; });
  return rows;
}

inline void write_loo_table(std::ostream& out, const std::vector<LooComparisonRow>& rows) {
  io::CsvWriter w(out);
  w.header({"model", "elpd_diff", "se_diff", "elpd"});
  for (const auto& r : rows) w.field(r.model).field(r.elpd_diff).field(r.se_diff).field(r.elpd).end_row();
}

struct SpectrumRow {
  Eigen::Index k = 0;  // 1-based mode index
  double lambda_s = 0.0;
  double lambda_alpha = 0.0;
  double cumulative_fraction = 0.0;
};

struct SpectrumReport {
  double alpha = 1.0;
  std::vector<SpectrumRow> rows;
  Eigen::Index crossing_index = 0;  // smallest k with cumulative fraction >= level
  double level = 0.95;
};

/// Eigen-decay and cumulative variance over the full basis spectrum at alpha.
inline SpectrumReport spectrum_report(const Eigen::VectorXd& penalty_eigvals, double alpha, double level = 0.95) {
  if (!(level > 0.0 && level <= 1.0)) throw InputError("variance level must lie in (0, 1]");
  const Eigen::VectorXd lam = spectral_map(penalty_eigvals, alpha);
  const double total = lam.sum();
  SpectrumReport rep;
  rep.alpha = alpha;
  rep.level = level;
  double acc = 0.0;
  for (Eigen::Index k = 0; k < lam.size(); ++k) {
    acc += lam[k];
    const double frac = acc / total;
    rep.rows.push_back({k + 1, penalty_eigvals[k], lam[k], frac});
    if (rep.crossing_index == 0 && acc >= level * total) rep.crossing_index = k + 1;
  }
  if (rep.crossing_index == 0) rep.crossing_index = lam.size();
  return rep;
}

inline void write_spectrum_csv(std::ostream& out, const SpectrumReport& rep) {
  io::CsvWriter w(out);
  w.header({"k", "lambda_S", "lambda_alpha", "cumulative_fraction", "alpha"});
  for (const auto& r : rep.rows) {
    w.field(static_cast<long long>(r.k)).field(r.lambda_s).field(r.lambda_alpha).field(r.cumulative_fraction);
    w.field(rep.alpha).end_row();
  }
}

/// Fraction of mode coordinates whose posterior median lies outside
/// +-`width` prior standard deviations.
inline double band_exceedance_fraction(const Eigen::VectorXd& medians, const Eigen::VectorXd& prior_sd,
                                       double width = 2.0) {
  if (medians.size() != prior_sd.size() || medians.size() == 0) throw InputError("band inputs differ in length");
  Eigen::Index outside = 0;
  for (Eigen::Index k = 0; k < medians.size(); ++k) {
    if (std::abs(medians[k]) > width * prior_sd[k]) ++outside;
  }
  return static_cast<double>(outside) / static_cast<double>(medians.size());
}

}  // namespace regtps

#endif
