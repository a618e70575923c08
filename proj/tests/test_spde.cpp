#include <gtest/gtest.h>

#include <sstream>

#include "regtps/spde.hpp"
#include "test_support.hpp"

using namespace regtps;

namespace {

TriMesh two_triangle_square() {
  return TriMesh(PointSet({{0, 0}, {1, 0}, {0, 1}, {1, 1}}, PointRole::mesh_node),
                 {{0, 1, 3}, {0, 3, 2}});
}

// Dense assembly straight from the element formulas, independent of the
// sparse code path.
void dense_fem(const TriMesh& mesh, Eigen::MatrixXd& c, Eigen::MatrixXd& g) {
  const auto n = mesh.size();
  c = Eigen::MatrixXd::Zero(n, n);
  g = Eigen::MatrixXd::Zero(n, n);
  for (const auto& t : mesh.triangles()) {
    Eigen::Matrix3d m;
    for (int i = 0; i < 3; ++i) {
      m(i, 0) = 1.0;
      m(i, 1) = mesh.nodes()[t[i]].s1;
      m(i, 2) = mesh.nodes()[t[i]].s2;
    }
    const double area = 0.5 * std::abs(m.determinant());
    // Columns of inv(m) hold the coefficients (a, b, c) of each hat function.
    const Eigen::Matrix3d coef = m.inverse();
    for (int i = 0; i < 3; ++i) {
      c(t[i], t[i]) += area / 3.0;
      for (int j = 0; j < 3; ++j) {
        g(t[i], t[j]) += area * (coef(1, i) * coef(1, j) + coef(2, i) * coef(2, j));
      }
    }
  }
}

}  // namespace

TEST(BuildMesh, MinimalLattice) {
  const auto mesh = build_mesh(BoundingDomain(0, 0, 1, 1), 9);
  EXPECT_EQ(mesh.size(), 9);
  EXPECT_EQ(mesh.triangles().size(), 8u);
  EXPECT_THROW(build_mesh(BoundingDomain(0, 0, 1, 1), 8), InputError);
}

TEST(BuildMesh, NodeCountNearTargetAndAreasEqual) {
  const BoundingDomain dom(0, 0, 1, 1, 0.2);
  const auto mesh = build_mesh(dom, 114);
  EXPECT_GE(mesh.size(), 103);
  EXPECT_LE(mesh.size(), 125);
  double total = 0.0;
  const double a0 = mesh.signed_area(0);
  for (std::size_t t = 0; t < mesh.triangles().size(); ++t) {
    EXPECT_GT(mesh.signed_area(t), 0.0);
    EXPECT_NEAR(mesh.signed_area(t), a0, 1e-12);
    total += mesh.signed_area(t);
  }
  EXPECT_NEAR(total, dom.extended().area(), 1e-12);
  for (int target : {9, 20, 57, 114, 308, 1000}) {
    const auto m = build_mesh(BoundingDomain(0, 0, 3, 1, 0.2), target);
    EXPECT_LE(std::abs(m.size() - target), 0.1 * target) << target;
  }
}

TEST(BuildMesh, Deterministic) {
  const BoundingDomain dom(-2, 1, 5, 4, 0.2);
  const auto a = build_mesh(dom, 200), b = build_mesh(dom, 200);
  EXPECT_EQ(a.nodes().points(), b.nodes().points());
  EXPECT_EQ(a.triangles(), b.triangles());
}

TEST(Fem, SingleElementStiffness) {
  const Eigen::Matrix3d k = element_stiffness({0, 0}, {1, 0}, {0, 1});
  Eigen::Matrix3d expect;
  expect << 1, -0.5, -0.5, -0.5, 0.5, 0, -0.5, 0, 0.5;
  EXPECT_LE((k - expect).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_THROW(element_stiffness({0, 0}, {0, 1}, {1, 0}), InputError);
  EXPECT_THROW(element_stiffness({0, 0}, {1, 1}, {2, 2}), InputError);
}

TEST(Fem, MatchesDenseAssemblyAndAnnihilatesConstants) {
  const BoundingDomain dom(0, 0, 1, 1, 0.2);
  const auto mesh = build_mesh(dom, 25);
  const auto fem = assemble_fem(mesh);
  Eigen::MatrixXd c, g;
  dense_fem(mesh, c, g);
  EXPECT_LE(fixtures::max_abs(Eigen::MatrixXd(fem.G) - g), 1e-10);
  EXPECT_LE(fixtures::max_abs(Eigen::MatrixXd(fem.C) - c), 1e-12);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(mesh.size());
  EXPECT_LE((fem.G * ones).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_NEAR(fem.c_diag.sum(), dom.extended().area(), 1e-8);
  EXPECT_GT(fem.c_diag.minCoeff(), 0.0);
  EXPECT_LE(fixtures::max_abs(Eigen::MatrixXd(fem.G) - Eigen::MatrixXd(fem.G).transpose()), 1e-14);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g);
  EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-10);
}

TEST(Fem, DegenerateTriangleRejected) {
  const TriMesh bad(PointSet({{0, 0}, {1, 0}, {2, 0}}, PointRole::mesh_node), {{0, 1, 2}});
  EXPECT_THROW(assemble_fem(bad), InputError);
}

TEST(Precision, DenseHandComputation) {
  const auto mesh = two_triangle_square();
  const auto fem = assemble_fem(mesh);
  Eigen::MatrixXd c, g;
  dense_fem(mesh, c, g);
  const Eigen::MatrixXd expect = c + 2.0 * g + g * c.inverse() * g;
  const auto q = build_precision(fem, 1.0, 1.0);
  EXPECT_LE(fixtures::max_abs(Eigen::MatrixXd(q.Q) - expect), 1e-10);
}

TEST(Precision, TauScalingSymmetryAndRecursion) {
  const auto mesh = build_mesh(BoundingDomain(0, 0, 1, 1, 0.2), 25);
  const auto fem = assemble_fem(mesh);
  const double kappa = 3.7, tau = 0.4;
  const Eigen::MatrixXd q1 = Eigen::MatrixXd(build_precision(fem, kappa, tau).Q);
  const Eigen::MatrixXd q2 = Eigen::MatrixXd(build_precision(fem, kappa, 2 * tau).Q);
  EXPECT_LE(fixtures::max_abs(q2 - 4.0 * q1), 1e-12 * fixtures::max_abs(q2));
  EXPECT_LE(fixtures::max_abs(q1 - q1.transpose()), 1e-12 * fixtures::max_abs(q1));
  const Eigen::MatrixXd k = kappa * kappa * Eigen::MatrixXd(fem.C) + Eigen::MatrixXd(fem.G);
  const Eigen::MatrixXd recursion =
      tau * tau * k * fem.c_diag.cwiseInverse().asDiagonal() * k;
  EXPECT_LE(fixtures::max_abs(recursion - q1), 1e-10);
  // Pattern of Q is within the pattern of G2 (plus the diagonal).
  const Eigen::MatrixXd g2 = Eigen::MatrixXd(fem.G2);
  for (Eigen::Index i = 0; i < q1.rows(); ++i)
    for (Eigen::Index j = 0; j < q1.cols(); ++j)
      if (i != j && q1(i, j) != 0.0) {
        EXPECT_NE(g2(i, j), 0.0);
      }
  EXPECT_THROW(build_precision(fem, 0.0, 1.0), InputError);
}

TEST(Hyperparams, TransformAndInverse) {
  const auto h = hyperparam_transform(std::sqrt(8.0), 1.0);
  EXPECT_NEAR(h.kappa, 1.0, 1e-15);
  for (double rho : {0.05, 0.3, 2.0, 40.0}) {
    for (double sigma : {0.1, 1.0, 7.0}) {
      const auto t = hyperparam_transform(rho, sigma);
      const auto [r, s] = hyperparam_inverse(t.kappa, t.tau);
      EXPECT_NEAR(r, rho, 1e-12 * rho);
      EXPECT_NEAR(s, sigma, 1e-12 * sigma);
      // General marginal-variance formula at nu = 1, d = 2.
      const double nu = 1.0, d = 2.0;
      const double var = std::tgamma(nu) / (t.tau * t.tau * std::pow(t.kappa, 2 * nu) *
                                            std::pow(4 * std::numbers::pi, d / 2) *
                                            std::tgamma(nu + d / 2));
      EXPECT_NEAR(std::sqrt(var), sigma, 1e-10 * sigma);
    }
  }
}

TEST(Projection, NodesCentroidsAndLinearExactness) {
  const auto mesh = build_mesh(BoundingDomain(0, 0, 1, 1, 0.2), 49);
  const auto& nodes = mesh.nodes();
  const auto a_nodes = projection_matrix(mesh, nodes);
  EXPECT_LE(fixtures::max_abs(Eigen::MatrixXd(a_nodes) -
                              Eigen::MatrixXd::Identity(mesh.size(), mesh.size())),
            1e-12);
  const auto& t = mesh.triangles()[5];
  const Point2 centroid{(nodes[t[0]].s1 + nodes[t[1]].s1 + nodes[t[2]].s1) / 3,
                        (nodes[t[0]].s2 + nodes[t[1]].s2 + nodes[t[2]].s2) / 3};
  const Eigen::MatrixXd ac = projection_matrix(mesh, PointSet({centroid}, PointRole::observation));
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(ac(0, t[k]), 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(ac.sum(), 1.0, 1e-12);

  const auto pts = fixtures::random_points(200, 3, PointRole::observation, -0.19, 1.19);
  const auto a = projection_matrix(mesh, pts);
  Eigen::VectorXd v(mesh.size());
  for (Eigen::Index i = 0; i < mesh.size(); ++i) v[i] = 0.3 - 1.7 * nodes[i].s1 + 2.2 * nodes[i].s2;
  const Eigen::VectorXd av = a * v;
  const Eigen::MatrixXd ad(a);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    EXPECT_NEAR(av[i], 0.3 - 1.7 * pts[i].s1 + 2.2 * pts[i].s2, 1e-12);
    EXPECT_NEAR(ad.row(i).sum(), 1.0, 1e-12);
    EXPECT_GE(ad.row(i).minCoeff(), 0.0);
    EXPECT_LE(ad.row(i).maxCoeff(), 1.0);
  }
}

TEST(Projection, OutsidePointNamesIndex) {
  const auto mesh = build_mesh(BoundingDomain(0, 0, 1, 1, 0.2), 25);
  try {
    projection_matrix(mesh, PointSet({{0.5, 0.5}, {0.5, 0.5}, {3.0, 0.5}}, PointRole::grid));
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("point 2"), std::string::npos);
  }
}

TEST(SelectedInverse, MatchesDenseInverseOnFactorPattern) {
  const auto mesh = build_mesh(BoundingDomain(0, 0, 1, 1, 0.2), 64);
  const auto fem = assemble_fem(mesh);
  const SparseMatrix q = precision_matrix(fem, 4.0, 0.7);
  Eigen::SimplicialLLT<SparseMatrix> llt(q);
  ASSERT_EQ(llt.info(), Eigen::Success);
  const SelectedInverse sinv(llt);
  const Eigen::MatrixXd dense_inv = Eigen::MatrixXd(q).inverse();
  for (Eigen::Index k = 0; k < q.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(q, k); it; ++it) {
      EXPECT_NEAR(sinv(it.row(), it.col()), dense_inv(it.row(), it.col()),
                  1e-10 * dense_inv.diagonal().maxCoeff());
    }
  }
  const SparseMatrix m = fem.C + 0.3 * fem.G;
  EXPECT_NEAR(sinv.trace_product(m), (dense_inv * Eigen::MatrixXd(m)).trace(), 1e-9);
  const double logdet = std::log(Eigen::MatrixXd(q).determinant());
  EXPECT_NEAR(log_det_from_factor(llt), logdet, 1e-8 * std::abs(logdet));
}

TEST(Precision, InteriorMarginalSdNearTarget) {
  const BoundingDomain dom(0, 0, 1, 1, 0.2);
  const auto mesh = build_mesh(dom, 1600);
  const auto fem = assemble_fem(mesh);
  const double sigma_u = 1.3;
  const double rho = 0.2;
  const auto h = hyperparam_transform(rho, sigma_u);
  const SparseMatrix q = precision_matrix(fem, h.kappa, h.tau);
  Eigen::SimplicialLLT<SparseMatrix> llt(q);
  const Eigen::VectorXd var = SelectedInverse(llt).diagonal();
  // Interior: at least one range away from the mesh boundary, where the
  // Neumann condition inflates the variance.
  const auto ext = dom.extended();
  int checked = 0;
  for (Eigen::Index i = 0; i < mesh.size(); ++i) {
    const auto& p = mesh.nodes()[i];
    const double edge = std::min({p.s1 - ext.min1, ext.max1 - p.s1, p.s2 - ext.min2, ext.max2 - p.s2});
    if (edge < rho) continue;
    ++checked;
    EXPECT_NEAR(std::sqrt(var[i]), sigma_u, 0.1 * sigma_u) << "node " << i;
  }
  EXPECT_GT(checked, 500);
}

TEST(Precision, NonCenteredSamplingCovariance) {
  const auto mesh = build_mesh(BoundingDomain(0, 0, 1, 1, 0.2), 36);
  const auto fem = assemble_fem(mesh);
  const double kappa = 5.0, tau = 0.3;
  const SparseMatrix q1 = precision_matrix(fem, kappa, 1.0);
  Eigen::SimplicialLLT<SparseMatrix> llt(q1);
  const Eigen::MatrixXd target = Eigen::MatrixXd(precision_matrix(fem, kappa, tau)).inverse();
  const int draws = 20000;
  std::mt19937_64 rng(5);
  const Eigen::Index n = mesh.size();
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n, n);
  const SparseMatrix l(llt.matrixL());
  for (int s = 0; s < draws; ++s) {
    // P Q P' = L L'  =>  u_raw = P' L^{-T} xi has covariance Q^{-1}.
    const Eigen::VectorXd xi = fixtures::random_vector(n, rng);
    const Eigen::VectorXd w = l.transpose().triangularView<Eigen::Upper>().solve(xi);
    const Eigen::VectorXd u_raw = llt.permutationPinv() * w;
    const Eigen::VectorXd u = u_raw / tau;
    acc += u * u.transpose();
  }
  acc /= draws;
  for (Eigen::Index i = 0; i < n; i += 5) {
    for (Eigen::Index j = 0; j < n; j += 7) {
      const double se = std::sqrt((target(i, i) * target(j, j) + target(i, j) * target(i, j)) / draws);
      EXPECT_NEAR(acc(i, j), target(i, j), 4.0 * se);
    }
  }
}

TEST(MeshCsv, WritesNodesAndTriangles) {
  std::ostringstream n, t;
  write_mesh_csv(n, t, two_triangle_square());
  EXPECT_EQ(n.str(), "node,s1,s2\n0,0,0\n1,1,0\n2,0,1\n3,1,1\n");
  EXPECT_EQ(t.str(), "triangle,v0,v1,v2\n0,0,1,3\n1,0,3,2\n");
}
