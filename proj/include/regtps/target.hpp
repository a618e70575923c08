#ifndef REGTPS_TARGET_HPP
#define REGTPS_TARGET_HPP

#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace regtps {

/// A differentiable log density on R^d as seen by the sampler.
///
/// `log_density` writes the gradient and returns the value; it returns
/// -infinity (or NaN) where the model cannot be evaluated, which the sampler
/// treats as a divergence. It must be safe to call concurrently.
struct Target {
  Eigen::Index dimension = 0;
  std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)> log_density;
  // Optional: per-observation log likelihood, recorded with each draw.
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> pointwise_loglik;
  // Optional: chain initialisation. Defaults to uniform(-2, 2) per coordinate.
  std::function<Eigen::VectorXd(std::mt19937_64&)> initial_point;
  std::vector<std::string> names;

  std::string name(Eigen::Index i) const {
    if (static_cast<std::size_t>(i) < names.size()) return names[static_cast<std::size_t>(i)];
    return "x[" + std::to_string(i) + "]";
  }
};

}  // namespace regtps

#endif
