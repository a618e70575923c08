#ifndef REGTPS_SPDE_HPP
#define REGTPS_SPDE_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "regtps/error.hpp"
#include "regtps/geometry.hpp"
#include "regtps/io/csv.hpp"

namespace regtps {

using SparseMatrix = Eigen::SparseMatrix<double>;
using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Triangulation with counter-clockwise triangles over its node set.
class TriMesh {
 public:
  TriMesh(PointSet nodes, std::vector<std::array<int, 3>> triangles)
      : nodes_(nodes.with_role(PointRole::mesh_node)), triangles_(std::move(triangles)) {
    if (triangles_.empty()) throw InputError("mesh has no triangles");
    std::vector<char> used(nodes_.size(), 0);
    for (std::size_t t = 0; t < triangles_.size(); ++t) {
      for (int v : triangles_[t]) {
        if (v < 0 || static_cast<std::size_t>(v) >= nodes_.size()) {
          throw InputError("triangle " + std::to_string(t) + " references a missing node");
        }
        used[v] = 1;
      }
    }
    for (std::size_t i = 0; i < used.size(); ++i) {
      if (!used[i]) throw InputError("mesh node " + std::to_string(i) + " is in no triangle");
    }
  }

  const PointSet& nodes() const { return nodes_; }
  const std::vector<std::array<int, 3>>& triangles() const { return triangles_; }
  Eigen::Index size() const { return static_cast<Eigen::Index>(nodes_.size()); }

  double signed_area(std::size_t t) const {
    const auto& a = nodes_[triangles_[t][0]];
    const auto& b = nodes_[triangles_[t][1]];
    const auto& c = nodes_[triangles_[t][2]];
    return 0.5 * ((b.s1 - a.s1) * (c.s2 - a.s2) - (c.s1 - a.s1) * (b.s2 - a.s2));
  }

 private:
  PointSet nodes_;
  std::vector<std::array<int, 3>> triangles_;
};

/// Lattice shape (columns, rows) for a target node count on a w x h rectangle:
/// the most nearly square cells among shapes within 10% of the target.
inline std::pair<int, int> lattice_shape(double width, double height, int target_nodes) {
  int best_x = 0, best_y = 0;
  double best_score = 1e300;
  for (int mx = 2; mx <= target_nodes; ++mx) {
    for (int my : {static_cast<int>(std::floor(static_cast<double>(target_nodes) / mx)),
                   static_cast<int>(std::ceil(static_cast<double>(target_nodes) / mx))}) {
      if (my < 2) continue;
      const double off = std::abs(mx * my - target_nodes) / static_cast<double>(target_nodes);
      if (off > 0.1) continue;
      const double aspect = std::abs(std::log((width / (mx - 1)) / (height / (my - 1))));
      const double score = aspect + 1e-3 * off;
      if (score < best_score) {
        best_score = score;
        best_x = mx;
        best_y = my;
      }
    }
  }
  if (best_x == 0) throw InputError("no lattice within 10% of the target node count");
  return {best_x, best_y};
}

/// Structured right-triangle lattice over the margin-extended domain.
inline TriMesh build_mesh(const BoundingDomain& domain, int target_nodes) {
  if (target_nodes < 9) throw InputError("mesh needs a target of at least 9 nodes");
  domain.validate();
  const BoundingDomain ext = domain.extended();
  const auto [mx, my] = lattice_shape(ext.width(), ext.height(), target_nodes);
  std::vector<Point2> nodes;
  nodes.reserve(static_cast<std::size_t>(mx) * my);
  for (int j = 0; j < my; ++j) {
    const double y = (j == my - 1) ? ext.max2 : ext.min2 + ext.height() * j / (my - 1);
    for (int i = 0; i < mx; ++i) {
      const double x = (i == mx - 1) ? ext.max1 : ext.min1 + ext.width() * i / (mx - 1);
      nodes.push_back({x, y});
    }
  }
  std::vector<std::array<int, 3>> tris;
  tris.reserve(2 * static_cast<std::size_t>(mx - 1) * (my - 1));
  for (int j = 0; j + 1 < my; ++j) {
    for (int i = 0; i + 1 < mx; ++i) {
      const int a = j * mx + i, b = a + 1, c = a + mx, d = c + 1;
      tris.push_back({a, b, d});
      tris.push_back({a, d, c});
    }
  }
  return TriMesh(PointSet(std::move(nodes), PointRole::mesh_node), std::move(tris));
}

struct FemMatrices {
  SparseMatrix C;   // lumped mass, diagonal
  SparseMatrix G;   // stiffness
  SparseMatrix G2;  // G C^{-1} G
  Eigen::VectorXd c_diag;

  Eigen::Index size() const { return c_diag.size(); }
};

/// P1 stiffness of one triangle given its vertices (counter-clockwise).
inline Eigen::Matrix3d element_stiffness(const Point2& p0, const Point2& p1, const Point2& p2) {
  const double area = 0.5 * ((p1.s1 - p0.s1) * (p2.s2 - p0.s2) - (p2.s1 - p0.s1) * (p1.s2 - p0.s2));
  if (!(area > 0.0)) throw InputError("degenerate or clockwise triangle");
  const std::array<const Point2*, 3> p{&p0, &p1, &p2};
  Eigen::Vector3d b, c;
  for (int i = 0; i < 3; ++i) {
    const Point2& pj = *p[(i + 1) % 3];
    const Point2& pk = *p[(i + 2) % 3];
    b[i] = pj.s2 - pk.s2;
    c[i] = pk.s1 - pj.s1;
  }
  return (b * b.transpose() + c * c.transpose()) / (4.0 * area);
}

inline FemMatrices assemble_fem(const TriMesh& mesh) {
  const Eigen::Index n = mesh.size();
  std::vector<Eigen::Triplet<double>> g_trip;
  g_trip.reserve(mesh.triangles().size() * 9);
  Eigen::VectorXd cdiag = Eigen::VectorXd::Zero(n);
  const auto& nodes = mesh.nodes();
  for (std::size_t t = 0; t < mesh.triangles().size(); ++t) {
    const auto& tri = mesh.triangles()[t];
    const double area = mesh.signed_area(t);
    if (!(area > 0.0)) {
      throw InputError("triangle " + std::to_string(t) + " is degenerate or clockwise");
    }
    const Eigen::Matrix3d ke = element_stiffness(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
    for (int a = 0; a < 3; ++a) {
      cdiag[tri[a]] += area / 3.0;
      for (int b = 0; b < 3; ++b) g_trip.emplace_back(tri[a], tri[b], ke(a, b));
    }
  }
  FemMatrices fem;
  fem.c_diag = cdiag;
  fem.G.resize(n, n);
  fem.G.setFromTriplets(g_trip.begin(), g_trip.end());
  fem.G.makeCompressed();
  fem.C.resize(n, n);
  std::vector<Eigen::Triplet<double>> c_trip;
  for (Eigen::Index i = 0; i < n; ++i) c_trip.emplace_back(i, i, cdiag[i]);
  fem.C.setFromTriplets(c_trip.begin(), c_trip.end());
  const SparseMatrix cinv_g = cdiag.cwiseInverse().asDiagonal() * fem.G;
  fem.G2 = (fem.G * cinv_g).pruned();
  fem.G2 = 0.5 * (fem.G2 + SparseMatrix(fem.G2.transpose()));
  return fem;
}

/// Q = tau^2 (kappa^4 C + 2 kappa^2 G + G C^{-1} G), without a factorization check.
inline SparseMatrix precision_matrix(const FemMatrices& fem, double kappa, double tau) {
  const double k2 = kappa * kappa;
  SparseMatrix q = (k2 * k2) * fem.C + (2.0 * k2) * fem.G + fem.G2;
  q *= tau * tau;
  return q;
}

struct PrecisionQ {
  SparseMatrix Q;
  double kappa = 1.0;
  double tau = 1.0;
};

inline PrecisionQ build_precision(const FemMatrices& fem, double kappa, double tau) {
  if (!(kappa > 0.0) || !(tau > 0.0) || !std::isfinite(kappa) || !std::isfinite(tau)) {
    throw InputError("kappa and tau must be positive");
  }
  PrecisionQ out{precision_matrix(fem, kappa, tau), kappa, tau};
  Eigen::SimplicialLLT<SparseMatrix> llt(out.Q);
  if (llt.info() != Eigen::Success) throw NumericalError("precision matrix is not positive definite");
  return out;
}

/// Matern parameters for the alpha = 2, d = 2 SPDE.
struct SpdeHyper {
  double kappa;
  double tau;
};

inline SpdeHyper hyperparam_transform(double rho, double sigma_u) {
  if (!(rho > 0.0) || !(sigma_u > 0.0)) throw InputError("rho and sigma_u must be positive");
  const double kappa = std::sqrt(8.0) / rho;
  const double tau = 1.0 / (sigma_u * kappa * std::sqrt(4.0 * std::numbers::pi));
  return {kappa, tau};
}

/// Inverse of hyperparam_transform: (rho, sigma_u).
inline std::pair<double, double> hyperparam_inverse(double kappa, double tau) {
  if (!(kappa > 0.0) || !(tau > 0.0)) throw InputError("kappa and tau must be positive");
  return {std::sqrt(8.0) / kappa, 1.0 / (tau * kappa * std::sqrt(4.0 * std::numbers::pi))};
}

/// Barycentric interpolation rows, one per point.
inline SparseRowMatrix projection_matrix(const TriMesh& mesh, const PointSet& pts) {
  constexpr double tol = 1e-12;
  const auto& nodes = mesh.nodes();
  const auto& tris = mesh.triangles();
  struct Box {
    double x0, x1, y0, y1;
  };
  std::vector<Box> boxes;
  boxes.reserve(tris.size());
  for (const auto& t : tris) {
    const auto& a = nodes[t[0]];
    const auto& b = nodes[t[1]];
    const auto& c = nodes[t[2]];
    boxes.push_back({std::min({a.s1, b.s1, c.s1}), std::max({a.s1, b.s1, c.s1}),
                     std::min({a.s2, b.s2, c.s2}), std::max({a.s2, b.s2, c.s2})});
  }
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(pts.size() * 3);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Point2& p = pts[i];
    bool found = false;
    for (std::size_t t = 0; t < tris.size() && !found; ++t) {
      const Box& bx = boxes[t];
      const double slack = tol * (1.0 + std::max(bx.x1 - bx.x0, bx.y1 - bx.y0));
      if (p.s1 < bx.x0 - slack || p.s1 > bx.x1 + slack || p.s2 < bx.y0 - slack ||
          p.s2 > bx.y1 + slack) {
        continue;
      }
      const auto& a = nodes[tris[t][0]];
      const auto& b = nodes[tris[t][1]];
      const auto& c = nodes[tris[t][2]];
      const double det = (b.s1 - a.s1) * (c.s2 - a.s2) - (c.s1 - a.s1) * (b.s2 - a.s2);
      const double l1 = ((p.s1 - a.s1) * (c.s2 - a.s2) - (c.s1 - a.s1) * (p.s2 - a.s2)) / det;
      const double l2 = ((b.s1 - a.s1) * (p.s2 - a.s2) - (p.s1 - a.s1) * (b.s2 - a.s2)) / det;
      double bary[3] = {1.0 - l1 - l2, l1, l2};
      if (bary[0] < -tol || bary[1] < -tol || bary[2] < -tol) continue;
      double sum = 0.0;
      for (double& v : bary) {
        v = std::clamp(v, 0.0, 1.0);
        sum += v;
      }
      for (int k = 0; k < 3; ++k) {
        if (bary[k] != 0.0) trip.emplace_back(static_cast<int>(i), tris[t][k], bary[k] / sum);
      }
      found = true;
    }
    if (!found) throw InputError("point " + std::to_string(i) + " lies outside the mesh");
  }
  SparseRowMatrix a(static_cast<Eigen::Index>(pts.size()), mesh.size());
  a.setFromTriplets(trip.begin(), trip.end());
  a.makeCompressed();
  return a;
}

/// Entries of A^{-1} on the filled pattern of its sparse Cholesky factor
/// (Takahashi recursion). Entry lookup is in the original ordering.
class SelectedInverse {
 public:
  explicit SelectedInverse(const Eigen::SimplicialLLT<SparseMatrix>& llt) {
    z_ = SparseMatrix(llt.matrixL());  // lower factor in the permuted ordering
    z_.makeCompressed();
    const Eigen::Index n = z_.cols();
    perm_ = llt.permutationP().indices();
    const int* outer = z_.outerIndexPtr();
    const int* inner = z_.innerIndexPtr();
    double* zval = z_.valuePtr();
    const std::vector<double> lcopy(zval, zval + z_.nonZeros());
    for (Eigen::Index j = n - 1; j >= 0; --j) {
      const int begin = outer[j], end = outer[j + 1];
      const double ljj = lcopy[begin];  // diagonal is stored first in each column
      for (int p = end - 1; p >= begin; --p) {
        const int i = inner[p];
        double acc = 0.0;
        for (int q = begin + 1; q < end; ++q) {
          acc += lcopy[q] * lookup(inner[q], i);
        }
        const double delta = (i == j) ? 1.0 / ljj : 0.0;
        zval[p] = (delta - acc) / ljj;
      }
    }
  }

  /// (A^{-1})_{ab} for a, b in the original ordering, where (a, b) lies in the
  /// factor pattern (always true for the pattern of A itself).
  double operator()(Eigen::Index a, Eigen::Index b) const {
    return lookup(perm_[a], perm_[b]);
  }

  /// tr(A^{-1} M) for symmetric M whose pattern is within that of A.
  double trace_product(const SparseMatrix& m) const {
    double acc = 0.0;
    for (Eigen::Index k = 0; k < m.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(m, k); it; ++it) {
        acc += (*this)(it.row(), it.col()) * it.value();
      }
    }
    return acc;
  }

  Eigen::VectorXd diagonal() const {
    Eigen::VectorXd d(perm_.size());
    for (Eigen::Index a = 0; a < d.size(); ++a) d[a] = (*this)(a, a);
    return d;
  }

 private:
  double lookup(Eigen::Index r, Eigen::Index c) const {
    if (r < c) std::swap(r, c);
    const int* outer = z_.outerIndexPtr();
    const int* inner = z_.innerIndexPtr();
    const int* first = inner + outer[c];
    const int* last = inner + outer[c + 1];
    const int* it = std::lower_bound(first, last, static_cast<int>(r));
    if (it == last || *it != r) {
      throw NumericalError("selected inverse queried outside the factor pattern");
    }
    return z_.valuePtr()[it - inner];
  }

  SparseMatrix z_;
  Eigen::VectorXi perm_;
};

inline double log_det_from_factor(const Eigen::SimplicialLLT<SparseMatrix>& llt) {
  const SparseMatrix l(llt.matrixL());
  double acc = 0.0;
  for (Eigen::Index j = 0; j < l.outerSize(); ++j) {
    acc += std::log(l.valuePtr()[l.outerIndexPtr()[j]]);
  }
  return 2.0 * acc;
}

inline void write_mesh_csv(std::ostream& nodes_out, std::ostream& tris_out, const TriMesh& mesh) {
  io::CsvWriter n(nodes_out);
  n.header({"node", "s1", "s2"});
  for (std::size_t i = 0; i < mesh.nodes().size(); ++i) {
    n.field(static_cast<long long>(i)).field(mesh.nodes()[i].s1).field(mesh.nodes()[i].s2).end_row();
  }
  io::CsvWriter t(tris_out);
  t.header({"triangle", "v0", "v1", "v2"});
  for (std::size_t k = 0; k < mesh.triangles().size(); ++k) {
    const auto& tri = mesh.triangles()[k];
    t.field(static_cast<long long>(k)).field(tri[0]).field(tri[1]).field(tri[2]).end_row();
  }
}

}  // namespace regtps

#endif
