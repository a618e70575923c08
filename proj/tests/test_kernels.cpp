#include <gtest/gtest.h>

#include <sstream>

#include "regtps/kernels.hpp"
#include "test_support.hpp"

using namespace regtps;

TEST(KernelSpec, Validation) {
  EXPECT_NO_THROW(KernelSpec::matern(1, 1, 0.5).validate());
  EXPECT_THROW(KernelSpec::matern(1, 1, 0.0).validate(), InputError);
  EXPECT_THROW(KernelSpec::matern(0, 1, 1.5).validate(), InputError);
  EXPECT_THROW(KernelSpec::exponential(1, -1).validate(), InputError);
  KernelSpec bad = KernelSpec::exponential(1, 1);
  bad.nu = 1.5;
  EXPECT_THROW(bad.validate(), InputError);
  bad = KernelSpec::matern(1, 1, 1.5);
  bad.nu.reset();
  EXPECT_THROW(bad.validate(), InputError);
  EXPECT_EQ(kernel_family_from_string("squared_exponential"), KernelFamily::squared_exponential);
  EXPECT_THROW(kernel_family_from_string("gaussian"), InputError);
}

TEST(KernelValue, ClosedForms) {
  for (const auto& spec : {KernelSpec::matern(1.7, 0.3, 2.5), KernelSpec::exponential(1.7, 0.3),
                           KernelSpec::squared_exponential(1.7, 0.3)}) {
    EXPECT_DOUBLE_EQ(kernel_value(spec, 0.0), 1.7 * 1.7);
    EXPECT_THROW(kernel_value(spec, -0.1), InputError);
  }
  EXPECT_NEAR(kernel_value(KernelSpec::matern(1, 1, 0.5), 1.0), std::exp(-1.0), 1e-12);
  const double x = std::sqrt(3.0) * 0.7;
  EXPECT_NEAR(kernel_value(KernelSpec::matern(1, 1, 1.5), 0.7), (1 + x) * std::exp(-x), 1e-12);
  EXPECT_NEAR(kernel_value(KernelSpec::matern(1, 1, 1.5), 0.7), 0.658137, 1e-6);
  const double y = std::sqrt(5.0) * 0.4 / 0.8;
  EXPECT_NEAR(kernel_value(KernelSpec::matern(2, 0.8, 2.5), 0.4),
              4 * (1 + y + y * y / 3) * std::exp(-y), 1e-12);
  EXPECT_NEAR(kernel_value(KernelSpec::squared_exponential(1, 2), 2.0), std::exp(-0.5), 1e-15);
}

TEST(KernelValue, HalfMaternIsExponential) {
  const auto m = KernelSpec::matern(1.3, 0.4, 0.5);
  const auto e = KernelSpec::exponential(1.3, 0.4);
  for (double d = 0.0; d <= 4.0; d += 0.01) {
    EXPECT_NEAR(kernel_value(m, d), kernel_value(e, d), 1e-10);
  }
}

TEST(KernelValue, NonincreasingInDistance) {
  for (const auto& spec : {KernelSpec::matern(1, 0.3, 1.5), KernelSpec::matern(1, 0.3, 0.3),
                           KernelSpec::exponential(1, 0.3), KernelSpec::squared_exponential(1, 0.3)}) {
    double last = kernel_value(spec, 0.0);
    for (double d = 1e-4; d <= 5.0; d *= 1.05) {
      const double v = kernel_value(spec, d);
      EXPECT_LE(v, last + 1e-15);
      EXPECT_GE(v, 0.0);
      last = v;
    }
  }
}

TEST(CovarianceFromKernel, SinglePointSymmetryAndLoopOracle) {
  const auto spec = KernelSpec::exponential(1.5, 0.5);
  const PointSet one({{0.2, 0.2}}, PointRole::mesh_node);
  const Eigen::MatrixXd s1 = covariance_from_kernel(spec, one, 1e-6);
  ASSERT_EQ(s1.rows(), 1);
  EXPECT_DOUBLE_EQ(s1(0, 0), 2.25 + 1e-6);

  const auto pts = fixtures::random_points(5, 2, PointRole::mesh_node);
  const Eigen::MatrixXd s = covariance_from_kernel(spec, pts, 0.0);
  EXPECT_TRUE(s == s.transpose());
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      const double d = std::hypot(pts[i].s1 - pts[j].s1, pts[i].s2 - pts[j].s2);
      EXPECT_NEAR(s(i, j), 2.25 * std::exp(-d / 0.5), 1e-12);
    }
  }
}

TEST(CovarianceFromKernel, NuggetEscalationRescuesNearSingularMatrix) {
  // Two nearly coincident points under a very smooth kernel.
  const PointSet pts({{0, 0}, {1e-9, 0}, {0.5, 0.5}}, PointRole::mesh_node);
  const auto spec = KernelSpec::squared_exponential(1.0, 1.0);
  const Eigen::MatrixXd s = covariance_from_kernel(spec, pts, 0.0);
  EXPECT_EQ(Eigen::LLT<Eigen::MatrixXd>(s).info(), Eigen::Success);
  EXPECT_GT(s(0, 0), 1.0);
}

TEST(SimulateScenario, ZeroNoiseAndDeterminism) {
  const BoundingDomain dom(0, 0, 1, 1, 0.2);
  const auto mesh = build_mesh(dom, 49);
  const auto obs = scenario_locations(dom, 30, 1);
  const auto grid = make_grid(dom, 5);
  const auto spec = KernelSpec::matern(1.0, 0.3, 1.5);
  const auto sc = simulate_scenario(spec, mesh, obs, grid, 0.0, 42);
  EXPECT_LE((sc.y - sc.A_obs * sc.u).cwiseAbs().maxCoeff(), 0.0);
  const auto a = simulate_scenario(spec, mesh, obs, grid, 0.2, 42);
  const auto b = simulate_scenario(spec, mesh, obs, grid, 0.2, 42);
  EXPECT_TRUE(a.y == b.y);
  EXPECT_TRUE(a.u == b.u);
  EXPECT_TRUE(a.grid_truth == b.grid_truth);
  EXPECT_EQ(a.y.size(), 30);
  EXPECT_EQ(a.grid_truth.size(), 25);
  EXPECT_FALSE(simulate_scenario(spec, mesh, obs, grid, 0.2, 43).y == a.y);
  EXPECT_THROW(simulate_scenario(spec, mesh, obs, grid, -0.1, 1), InputError);
}

TEST(SimulateScenario, MonteCarloCovarianceAtSixNodes) {
  const auto mesh = TriMesh(PointSet({{0, 0}, {0.3, 0}, {0.6, 0}, {0, 0.3}, {0.3, 0.3}, {0.6, 0.3}},
                                     PointRole::mesh_node),
                            {{0, 1, 4}, {0, 4, 3}, {1, 2, 5}, {1, 5, 4}});
  const auto spec = KernelSpec::matern(1.0, 0.3, 1.5);
  const Eigen::MatrixXd sigma = covariance_from_kernel(spec, mesh.nodes());
  const PointSet obs({{0.1, 0.1}}, PointRole::observation);
  const int reps = 5000;
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(6, 6);
  for (int r = 0; r < reps; ++r) {
    const auto sc = simulate_scenario(spec, mesh, obs, obs, 0.1, 1000 + r);
    acc += sc.u * sc.u.transpose();
  }
  acc /= reps;
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 6; ++j) {
      const double se = std::sqrt((sigma(i, i) * sigma(j, j) + sigma(i, j) * sigma(i, j)) / reps);
      EXPECT_NEAR(acc(i, j), sigma(i, j), 4 * se);
    }
  }
}

TEST(ScenarioCsv, HeadersAndRowCounts) {
  const BoundingDomain dom(0, 0, 1, 1, 0.2);
  const auto mesh = build_mesh(dom, 25);
  const auto sc = simulate_scenario(KernelSpec::exponential(1, 0.3), mesh,
                                    scenario_locations(dom, 4, 3), make_grid(dom, 3), 0.1, 9);
  std::ostringstream o, g;
  write_scenario_csv(o, g, sc);
  const std::string os = o.str(), gs = g.str();
  EXPECT_EQ(os.substr(0, os.find('\n')), "s1,s2,y,truth,noise");
  EXPECT_EQ(std::count(os.begin(), os.end(), '\n'), 5);
  EXPECT_EQ(std::count(gs.begin(), gs.end(), '\n'), 10);
}
