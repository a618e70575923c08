#ifndef REGTPS_KERNELS_HPP
#define REGTPS_KERNELS_HPP

#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "regtps/error.hpp"
#include "regtps/geometry.hpp"
#include "regtps/io/csv.hpp"
#include "regtps/spde.hpp"

namespace regtps {

enum class KernelFamily { matern, exponential, squared_exponential };

inline const char* to_string(KernelFamily f) {
  switch (f) {
    case KernelFamily::matern: return "matern";
    case KernelFamily::exponential: return "exponential";
    case KernelFamily::squared_exponential: return "squared_exponential";
  }
  return "unknown";
}

inline KernelFamily kernel_family_from_string(const std::string& s) {
  if (s == "matern") return KernelFamily::matern;
  if (s == "exponential") return KernelFamily::exponential;
  if (s == "squared_exponential") return KernelFamily::squared_exponential;
  throw InputError("unknown kernel family '" + s + "'");
}

struct KernelSpec {
  KernelFamily family = KernelFamily::matern;
  double sigma_u = 1.0;
  double rho = 0.3;
  std::optional<double> nu = 1.5;

  void validate() const {
    if (!(sigma_u > 0.0) || !std::isfinite(sigma_u)) throw InputError("sigma_u must be positive");
    if (!(rho > 0.0) || !std::isfinite(rho)) throw InputError("rho must be positive");
    if (family == KernelFamily::matern) {
      if (!nu || !(*nu > 0.0) || !std::isfinite(*nu)) {
        throw InputError("matern kernel needs a positive nu");
      }
    } else if (nu) {
      throw InputError(std::string("nu is only meaningful for the matern family, not ") +
                       to_string(family));
    }
  }

  friend bool operator==(const KernelSpec&, const KernelSpec&) = default;

  static KernelSpec matern(double sigma_u, double rho, double nu) {
    return {KernelFamily::matern, sigma_u, rho, nu};
  }
  static KernelSpec exponential(double sigma_u, double rho) {
    return {KernelFamily::exponential, sigma_u, rho, std::nullopt};
  }
  static KernelSpec squared_exponential(double sigma_u, double rho) {
    return {KernelFamily::squared_exponential, sigma_u, rho, std::nullopt};
  }
};

inline double kernel_value(const KernelSpec& spec, double d) {
  if (!(d >= 0.0)) throw InputError("kernel distance must be nonnegative");
  const double var = spec.sigma_u * spec.sigma_u;
  if (d == 0.0) return var;
  switch (spec.family) {
    case KernelFamily::exponential: return var * std::exp(-d / spec.rho);
    case KernelFamily::squared_exponential:
      return var * std::exp(-d * d / (2.0 * spec.rho * spec.rho));
    case KernelFamily::matern: {
      const double nu = *spec.nu;
      const double x = std::sqrt(2.0 * nu) * d / spec.rho;
      if (x > 700.0) return 0.0;
      const double v = var * std::pow(2.0, 1.0 - nu) / std::tgamma(nu) * std::pow(x, nu) *
                       std::cyl_bessel_k(nu, x);
      return std::min(v, var);
    }
  }
  return 0.0;
}

/// Kernel matrix plus `nugget` on the diagonal. When the Cholesky factor
/// fails, the nugget is multiplied by 10 up to three times.
inline Eigen::MatrixXd covariance_from_kernel(const KernelSpec& spec, const PointSet& pts,
                                              double nugget) {
  spec.validate();
  if (!(nugget >= 0.0)) throw InputError("nugget must be nonnegative");
  const auto n = static_cast<Eigen::Index>(pts.size());
  Eigen::MatrixXd sigma(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    sigma(i, i) = kernel_value(spec, 0.0);
    for (Eigen::Index j = 0; j < i; ++j) {
      sigma(i, j) = sigma(j, i) = kernel_value(spec, distance(pts[i], pts[j]));
    }
  }
  double added = 0.0;
  double current = nugget;
  for (int attempt = 0; attempt <= 3; ++attempt) {
    sigma.diagonal().array() += current - added;
    added = current;
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() == Eigen::Success) return sigma;
    current = (current > 0.0 ? current : 1e-12 * spec.sigma_u * spec.sigma_u) * 10.0;
  }
  throw NumericalError("kernel covariance is not positive definite after nugget escalation");
}

inline Eigen::MatrixXd covariance_from_kernel(const KernelSpec& spec, const PointSet& pts) {
  return covariance_from_kernel(spec, pts, 1e-10 * spec.sigma_u * spec.sigma_u);
}

struct SimulatedScenario {
  std::uint64_t seed = 0;
  KernelSpec kernel;
  PointSet mesh_nodes;
  Eigen::VectorXd u;  // truth at mesh nodes
  PointSet obs;
  SparseRowMatrix A_obs;
  Eigen::VectorXd noise;
  Eigen::VectorXd y;
  double sigma_e = 0.0;
  PointSet grid;
  Eigen::VectorXd grid_truth;

  std::size_t n_obs() const { return obs.size(); }
};

/// Uniform observation locations inside the domain.
inline PointSet scenario_locations(const BoundingDomain& domain, std::size_t n, std::uint64_t seed) {
  domain.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u1(domain.min1, domain.max1), u2(domain.min2, domain.max2);
  std::vector<Point2> pts;
  pts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = u1(rng);
    pts.push_back({a, u2(rng)});
  }
  return PointSet(std::move(pts), PointRole::observation);
}

/// Draw u ~ N(0, Sigma) at the mesh nodes, project it to observation and grid
/// locations, and add N(0, sigma_e^2) noise at the observations only.
inline SimulatedScenario simulate_scenario(const KernelSpec& spec, const TriMesh& mesh,
                                           const PointSet& obs, const PointSet& grid,
                                           double sigma_e, std::uint64_t seed) {
  if (!(sigma_e >= 0.0) || !std::isfinite(sigma_e)) throw InputError("sigma_e must be >= 0");
  const Eigen::MatrixXd sigma = covariance_from_kernel(spec, mesh.nodes());
  const Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  Eigen::VectorXd xi(mesh.size());
  for (Eigen::Index i = 0; i < xi.size(); ++i) xi[i] = n01(rng);
  SimulatedScenario sc{seed, spec, mesh.nodes(), llt.matrixL() * xi, obs,
                       projection_matrix(mesh, obs), {}, {}, sigma_e, grid, {}};
  sc.noise.resize(static_cast<Eigen::Index>(obs.size()));
  for (Eigen::Index i = 0; i < sc.noise.size(); ++i) sc.noise[i] = sigma_e * n01(rng);
  sc.y = sc.A_obs * sc.u + sc.noise;
  sc.grid_truth = projection_matrix(mesh, grid) * sc.u;
  return sc;
}

/// Observations (s1, s2, y, truth, noise) and grid truth (s1, s2, truth).
inline void write_scenario_csv(std::ostream& obs_out, std::ostream& grid_out,
                               const SimulatedScenario& sc) {
  io::CsvWriter w(obs_out);
  w.header({"s1", "s2", "y", "truth", "noise"});
  const Eigen::VectorXd truth = sc.A_obs * sc.u;
  for (std::size_t i = 0; i < sc.obs.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    w.field(sc.obs[i].s1).field(sc.obs[i].s2).field(sc.y[k]).field(truth[k]).field(sc.noise[k]).end_row();
  }
  io::CsvWriter g(grid_out);
  g.header({"s1", "s2", "truth"});
  for (std::size_t i = 0; i < sc.grid.size(); ++i) {
    g.field(sc.grid[i].s1).field(sc.grid[i].s2).field(sc.grid_truth[static_cast<Eigen::Index>(i)]).end_row();
  }
}

}  // namespace regtps

#endif
