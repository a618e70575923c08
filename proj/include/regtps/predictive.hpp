#ifndef REGTPS_PREDICTIVE_HPP
#define REGTPS_PREDICTIVE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "regtps/error.hpp"
#include "regtps/hmc.hpp"
#include "regtps/posterior.hpp"

namespace regtps {

/// Field draws at evaluation points (draw x point) plus the matching noise SDs.
struct FieldDraws {
  Eigen::MatrixXd field;
  Eigen::VectorXd sigma;
};

inline FieldDraws regtps_field_draws(const RegTpsPosterior& post, const PosteriorDraws& draws,
                                     const Eigen::MatrixXd& eval_mode_design) {
  if (eval_mode_design.cols() != post.modes()) throw InputError("evaluation design has the wrong column count");
  const Eigen::MatrixXd x = draws.pooled();
  FieldDraws out{Eigen::MatrixXd(x.rows(), eval_mode_design.rows()), Eigen::VectorXd(x.rows())};
  for (Eigen::Index s = 0; s < x.rows(); ++s) {
    const Eigen::VectorXd xs = x.row(s).transpose();
    out.field.row(s) = (eval_mode_design * post.coefficients(xs)).transpose();
    out.sigma[s] = post.sigma(xs);
  }
  return out;
}

inline FieldDraws spde_field_draws(const SpdePosterior& post, const PosteriorDraws& draws,
                                   const SparseRowMatrix& eval_projection) {
  if (eval_projection.cols() != post.nodes()) throw InputError("projection has the wrong column count");
  const Eigen::MatrixXd x = draws.pooled();
  FieldDraws out{Eigen::MatrixXd(x.rows(), eval_projection.rows()), Eigen::VectorXd(x.rows())};
  for (Eigen::Index s = 0; s < x.rows(); ++s) {
    const Eigen::VectorXd xs = x.row(s).transpose();
    out.field.row(s) = (eval_projection * post.field(xs)).transpose();
    out.sigma[s] = post.sigma_e(xs);
  }
  return out;
}

/// Replicate datasets y_rep = field(draw) + N(0, sigma(draw)^2) for
/// `replicates` draws spread evenly over the pooled sample.
inline Eigen::MatrixXd posterior_predictive(const FieldDraws& draws, int replicates, std::uint64_t seed) {
  const Eigen::Index s = draws.field.rows();
  if (s == 0) throw InputError("no posterior draws");
  if (draws.sigma.size() != s) throw InputError("sigma draws do not match field draws");
  if (replicates < 1) throw InputError("replicates must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  Eigen::MatrixXd out(replicates, draws.field.cols());
  for (int r = 0; r < replicates; ++r) {
    const auto idx = static_cast<Eigen::Index>((static_cast<double>(r) + 0.5) * static_cast<double>(s) / replicates);
    const Eigen::Index k = std::min(idx, s - 1);
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
      out(r, j) = draws.field(k, j) + draws.sigma[k] * n01(rng);
    }
  }
  return out;
}

inline constexpr int default_predictive_replicates = 100;

/// Per-column empirical quantile (linear interpolation between order statistics).
inline Eigen::VectorXd column_quantile(const Eigen::MatrixXd& m, double p) {
  if (m.rows() == 0) throw InputError("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw InputError("quantile level must lie in [0, 1]");
  Eigen::VectorXd out(m.cols());
  std::vector<double> col(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) col[static_cast<std::size_t>(i)] = m(i, j);
    std::sort(col.begin(), col.end());
    const double h = p * static_cast<double>(col.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, col.size() - 1);
    out[j] = col[lo] + (h - static_cast<double>(lo)) * (col[hi] - col[lo]);
  }
  return out;
}

inline Eigen::VectorXd column_median(const Eigen::MatrixXd& m) { return column_quantile(m, 0.5); }

}  // namespace regtps

#endif
