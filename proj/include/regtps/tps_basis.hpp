#ifndef REGTPS_TPS_BASIS_HPP
#define REGTPS_TPS_BASIS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "regtps/error.hpp"
#include "regtps/geometry.hpp"

namespace regtps {

/// Thin plate radial kernel d^2 log d, extended continuously by 0 at d = 0.
inline double tps_eta(double d) {
  if (!(d >= 0.0)) {
    throw InputError("tps_eta requires a nonnegative distance");
  }
  if (d == 0.0) return 0.0;
  return d * d * std::log(d);
}

namespace detail {

inline std::uint64_t fnv1a(const void* data, std::size_t bytes,
                           std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Flip each column so its largest-magnitude entry is positive (first wins ties).
inline void canonicalize_signs(Eigen::MatrixXd& vectors) {
  for (Eigen::Index k = 0; k < vectors.cols(); ++k) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
      const double a = std::abs(vectors(i, k));
      if (a > best * (1.0 + 1e-12)) {
        best = a;
        arg = i;
      }
    }
    if (vectors(arg, k) < 0.0) vectors.col(k) *= -1.0;
  }
}

}  // namespace detail

inline std::uint64_t knot_hash(const PointSet& knots) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : knots) {
    h = detail::fnv1a(&p.s1, sizeof(double), h);
    h = detail::fnv1a(&p.s2, sizeof(double), h);
  }
  return h;
}

/// Low-rank thin plate spline system built on a knot set.
///
/// Columns of the design are [1, x1, x2 | radial block]. Coordinates are
/// centred on the knot bounding box and divided by its longest side before
/// any kernel evaluation, so the system does not depend on the units of the
/// input. The radial block spans the constrained representers
/// sum_j delta_j eta(|s - t_j|) with T' delta = 0, detrended against the
/// polynomial columns at the knots and expressed in knot-value coordinates:
/// at the knots it evaluates to an orthonormal basis of the complement of
/// the polynomials. In those coordinates the bending energy is
/// beta' (Q2' E Q2)^{-1} beta, which is the penalty S stored here.
class TpsBasisSystem {
 public:
  static constexpr int null_dim = 3;
  static constexpr double zero_tolerance = 1e-8;

  explicit TpsBasisSystem(const PointSet& knots) : knots_(knots.with_role(PointRole::knot)) {
    const auto n = static_cast<Eigen::Index>(knots_.size());
    if (n < null_dim + 1) {
      throw InputError("TPS basis needs at least 4 distinct knots, got " + std::to_string(n));
    }
    Point2 lo = knots_[0], hi = knots_[0];
    for (const auto& p : knots_) {
      lo = {std::min(lo.s1, p.s1), std::min(lo.s2, p.s2)};
      hi = {std::max(hi.s1, p.s1), std::max(hi.s2, p.s2)};
    }
    center1_ = 0.5 * (lo.s1 + hi.s1);
    center2_ = 0.5 * (lo.s2 + hi.s2);
    scale_ = std::max(hi.s1 - lo.s1, hi.s2 - lo.s2);
    if (!(scale_ > 0.0)) {
      throw RankDeficiencyError("knots are collinear (degenerate extent)");
    }

    Eigen::MatrixXd t = polynomial_rows(knots_);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(t);
    const Eigen::MatrixXd r = qr.matrixQR().topRows(null_dim).triangularView<Eigen::Upper>();
    const double rmax = r.diagonal().cwiseAbs().maxCoeff();
    if (r.diagonal().cwiseAbs().minCoeff() <= 1e-10 * std::max(1.0, rmax)) {
      throw RankDeficiencyError("knots are collinear: polynomial block is rank deficient");
    }
    const Eigen::MatrixXd q_full = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
    q2_ = q_full.rightCols(n - null_dim);

    const Eigen::MatrixXd e = kernel_rows(knots_);
    Eigen::MatrixXd radial_kernel = q2_.transpose() * e * q2_;
    radial_kernel = 0.5 * (radial_kernel + radial_kernel.transpose()).eval();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(radial_kernel);
    if (eig.info() != Eigen::Success) {
      throw NumericalError("eigendecomposition of the constrained kernel failed");
    }
    // Ascending kernel eigenvalues -> descending penalty eigenvalues. Reverse
    // so penalty eigenvalues ascend.
    const Eigen::VectorXd kernel_vals = eig.eigenvalues().reverse();
    Eigen::MatrixXd kernel_vecs = eig.eigenvectors().rowwise().reverse();
    const double kmax = kernel_vals.cwiseAbs().maxCoeff();
    if (kernel_vals.minCoeff() <= 1e-13 * kmax) {
      throw RankDeficiencyError(
          "constrained TPS kernel is singular (knots nearly coincident or collinear)");
    }
    detail::canonicalize_signs(kernel_vecs);

    detrend_ = (t.transpose() * t).ldlt().solve(t.transpose() * e * q2_);
    // radial mode k at point x: (eta(x)' Q2 - p(x)' detrend) v_k / kernel_val_k
    mode_map_ = kernel_vecs * kernel_vals.cwiseInverse().asDiagonal();

    const Eigen::Index k = n;
    eigvals_.setZero(k);
    eigvals_.tail(n - null_dim) = kernel_vals.cwiseInverse();
    eigvecs_.setZero(k, k);
    eigvecs_.topLeftCorner(null_dim, null_dim).setIdentity();
    eigvecs_.bottomRightCorner(n - null_dim, n - null_dim) = kernel_vecs;
    penalty_ = eigvecs_ * eigvals_.asDiagonal() * eigvecs_.transpose();
    penalty_ = 0.5 * (penalty_ + penalty_.transpose()).eval();
    // radial coefficient map: beta -> radial field is (row) * radial_coef_
    radial_coef_ = kernel_vecs * kernel_vals.cwiseInverse().asDiagonal() * kernel_vecs.transpose();
  }

  const PointSet& knots() const { return knots_; }
  Eigen::Index size() const { return eigvals_.size(); }
  int null_dimension() const { return null_dim; }

  /// K x K penalty with S = Psi diag(lambda) Psi'.
  const Eigen::MatrixXd& penalty() const { return penalty_; }
  const Eigen::MatrixXd& eigenvectors() const { return eigvecs_; }
  /// Ascending; the first three are exactly zero.
  const Eigen::VectorXd& eigenvalues() const { return eigvals_; }

  /// |points| x K design matrix Phi.
  Eigen::MatrixXd design(const PointSet& points) const {
    Eigen::MatrixXd phi(points.size(), size());
    phi.leftCols(null_dim) = polynomial_rows(points);
    phi.rightCols(size() - null_dim) = detrended_radial(points) * radial_coef_;
    return phi;
  }

  /// Phi * Psi evaluated directly, without forming Phi.
  Eigen::MatrixXd mode_design(const PointSet& points) const {
    Eigen::MatrixXd out(points.size(), size());
    out.leftCols(null_dim) = polynomial_rows(points);
    out.rightCols(size() - null_dim) = detrended_radial(points) * mode_map_;
    return out;
  }

  /// Rows [1, x1, x2] in the normalized coordinates.
  Eigen::MatrixXd polynomial_rows(const PointSet& points) const {
    Eigen::MatrixXd t(points.size(), null_dim);
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto [u, v] = normalized(points[i]);
      t(i, 0) = 1.0;
      t(i, 1) = u;
      t(i, 2) = v;
    }
    return t;
  }

  std::pair<double, double> normalized(const Point2& p) const {
    return {(p.s1 - center1_) / scale_, (p.s2 - center2_) / scale_};
  }
  double coordinate_scale() const { return scale_; }

  std::uint64_t hash() const { return knot_hash(knots_); }

  void save_cache(const std::string& path) const;
  static TpsBasisSystem load_cache(const std::string& path, const PointSet& knots);

 private:
  TpsBasisSystem(PointSet knots, int) : knots_(std::move(knots)) {}

  Eigen::MatrixXd kernel_rows(const PointSet& points) const {
    Eigen::MatrixXd e(points.size(), knots_.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto [u, v] = normalized(points[i]);
      for (std::size_t j = 0; j < knots_.size(); ++j) {
        const auto [a, b] = normalized(knots_[j]);
        e(i, j) = tps_eta(std::hypot(u - a, v - b));
      }
    }
    return e;
  }

  Eigen::MatrixXd detrended_radial(const PointSet& points) const {
    return kernel_rows(points) * q2_ - polynomial_rows(points) * detrend_;
  }

  PointSet knots_;
  double center1_ = 0.0;
  double center2_ = 0.0;
  double scale_ = 1.0;
  Eigen::MatrixXd q2_;
  Eigen::MatrixXd detrend_;
  Eigen::MatrixXd mode_map_;
  Eigen::MatrixXd radial_coef_;
  Eigen::MatrixXd penalty_;
  Eigen::MatrixXd eigvecs_;
  Eigen::VectorXd eigvals_;
};

inline double bending_energy(const TpsBasisSystem& system, const Eigen::VectorXd& c) {
  if (c.size() != system.size()) {
    throw InputError("coefficient vector has length " + std::to_string(c.size()) +
                     ", expected " + std::to_string(system.size()));
  }
  const double j = c.dot(system.penalty() * c);
  if (j < 0.0 && j >= -1e-12) return 0.0;
  return j;
}

/// Knots from observation locations: all distinct locations when there are at
/// most `max_knots`, otherwise a farthest-point subsample started at a seeded
/// random location.
inline PointSet select_knots(const PointSet& obs, std::size_t max_knots, std::uint64_t seed) {
  std::vector<Point2> distinct;
  for (const auto& p : obs) {
    if (std::find(distinct.begin(), distinct.end(), p) == distinct.end()) distinct.push_back(p);
  }
  if (distinct.size() <= max_knots) return PointSet(std::move(distinct), PointRole::knot);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, distinct.size() - 1);
  std::vector<Point2> chosen{distinct[pick(rng)]};
  std::vector<double> nearest(distinct.size(), std::numeric_limits<double>::infinity());
  while (chosen.size() < max_knots) {
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < distinct.size(); ++i) {
      nearest[i] = std::min(nearest[i], distance(distinct[i], chosen.back()));
      if (nearest[i] > best) {
        best = nearest[i];
        arg = i;
      }
    }
    chosen.push_back(distinct[arg]);
  }
  return PointSet(std::move(chosen), PointRole::knot);
}

// --- binary cache -----------------------------------------------------------

namespace detail {

constexpr char cache_magic[8] = {'R', 'T', 'P', 'S', 'B', 'A', 'S', 'E'};
constexpr std::uint32_t cache_version = 1;

inline void write_matrix(std::ofstream& out, const Eigen::MatrixXd& m) {
  const std::int64_t rows = m.rows(), cols = m.cols();
  out.write(reinterpret_cast<const char*>(&rows), sizeof rows);
  out.write(reinterpret_cast<const char*>(&cols), sizeof cols);
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * m.size()));
}

inline Eigen::MatrixXd read_matrix(std::ifstream& in) {
  std::int64_t rows = 0, cols = 0;
  in.read(reinterpret_cast<char*>(&rows), sizeof rows);
  in.read(reinterpret_cast<char*>(&cols), sizeof cols);
  if (!in || rows < 0 || cols < 0 || rows > (1 << 20) || cols > (1 << 20)) {
    throw DataError("corrupt TPS cache matrix header");
  }
  Eigen::MatrixXd m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(double) * m.size()));
  if (!in) throw DataError("truncated TPS cache");
  return m;
}

}  // namespace detail

inline void TpsBasisSystem::save_cache(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write TPS cache to " + path);
  out.write(detail::cache_magic, sizeof detail::cache_magic);
  out.write(reinterpret_cast<const char*>(&detail::cache_version), sizeof detail::cache_version);
  const std::uint64_t h = hash();
  out.write(reinterpret_cast<const char*>(&h), sizeof h);
  const double frame[3] = {center1_, center2_, scale_};
  out.write(reinterpret_cast<const char*>(frame), sizeof frame);
  for (const auto* m : {&q2_, &detrend_, &mode_map_, &radial_coef_, &penalty_, &eigvecs_}) {
    detail::write_matrix(out, *m);
  }
  detail::write_matrix(out, eigvals_);
}

inline TpsBasisSystem TpsBasisSystem::load_cache(const std::string& path, const PointSet& knots) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open TPS cache " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (!in || std::memcmp(magic, detail::cache_magic, sizeof magic) != 0) {
    throw DataError("not a TPS cache file: " + path);
  }
  if (version != detail::cache_version) {
    throw DataError("unsupported TPS cache version " + std::to_string(version));
  }
  std::uint64_t h = 0;
  in.read(reinterpret_cast<char*>(&h), sizeof h);
  TpsBasisSystem sys(knots.with_role(PointRole::knot), 0);
  if (h != sys.hash()) throw DataError("TPS cache was built for a different knot set");
  double frame[3];
  in.read(reinterpret_cast<char*>(frame), sizeof frame);
  sys.center1_ = frame[0];
  sys.center2_ = frame[1];
  sys.scale_ = frame[2];
  for (auto* m : {&sys.q2_, &sys.detrend_, &sys.mode_map_, &sys.radial_coef_, &sys.penalty_,
                  &sys.eigvecs_}) {
    *m = detail::read_matrix(in);
  }
  sys.eigvals_ = detail::read_matrix(in).col(0);
  if (sys.eigvals_.size() != static_cast<Eigen::Index>(knots.size())) {
    throw DataError("TPS cache dimension does not match knot count");
  }
  return sys;
}

}  // namespace regtps

#endif
