#ifndef REGTPS_HMC_HPP
#define REGTPS_HMC_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "regtps/error.hpp"
#include "regtps/target.hpp"

namespace regtps {

struct HmcConfig {
  int chains = 4;
  int warmup = 1000;
  int draws = 1000;
  std::uint64_t seed = 1;
  double target_accept = 0.8;
  double path_length = 6.0;  // integration time in metric units, before jitter
  double jitter = 0.5;       // path length drawn uniformly from (1 -+ jitter) * path_length
  int max_steps = 512;
  double divergence_threshold = 1000.0;
  bool parallel = true;
  bool record_loglik = true;

  void validate() const {
    if (chains < 2) throw InputError("at least two chains are required");
    if (warmup < 0 || draws < 1) throw InputError("warmup must be >= 0 and draws >= 1");
    if (!(target_accept > 0.0 && target_accept < 1.0)) throw InputError("target_accept must lie in (0, 1)");
    if (!(path_length > 0.0)) throw InputError("path_length must be positive");
    if (!(jitter >= 0.0 && jitter < 1.0)) throw InputError("jitter must lie in [0, 1)");
    if (max_steps < 1) throw InputError("max_steps must be positive");
    if (!(divergence_threshold > 0.0)) throw InputError("divergence_threshold must be positive");
  }
};

struct ChainDraws {
  Eigen::MatrixXd draws;        // iteration x parameter
  Eigen::VectorXd lp;
  Eigen::VectorXd accept_stat;
  std::vector<char> divergent;
  std::vector<int> steps;
  Eigen::MatrixXd loglik;       // iteration x observation, empty if not recorded
  double step_size = 0.0;
  Eigen::VectorXd inv_metric;
  int warmup_divergences = 0;
};

struct PosteriorDraws {
  std::vector<ChainDraws> chains;
  std::vector<std::string> names;

  Eigen::Index dimension() const { return chains.empty() ? 0 : chains.front().draws.cols(); }
  Eigen::Index draws_per_chain() const { return chains.empty() ? 0 : chains.front().draws.rows(); }
  Eigen::Index total_draws() const {
    return static_cast<Eigen::Index>(chains.size()) * draws_per_chain();
  }

  /// All draws stacked chain after chain.
  Eigen::MatrixXd pooled() const {
    Eigen::MatrixXd out(total_draws(), dimension());
    Eigen::Index row = 0;
    for (const auto& c : chains) {
      out.middleRows(row, c.draws.rows()) = c.draws;
      row += c.draws.rows();
    }
    return out;
  }

  Eigen::MatrixXd pooled_loglik() const {
    if (chains.empty() || chains.front().loglik.size() == 0) return {};
    Eigen::MatrixXd out(total_draws(), chains.front().loglik.cols());
    Eigen::Index row = 0;
    for (const auto& c : chains) {
      out.middleRows(row, c.loglik.rows()) = c.loglik;
      row += c.loglik.rows();
    }
    return out;
  }

  /// One vector per chain for parameter i.
  std::vector<Eigen::VectorXd> parameter(Eigen::Index i) const {
    std::vector<Eigen::VectorXd> out;
    for (const auto& c : chains) out.emplace_back(c.draws.col(i));
    return out;
  }

  int divergences() const {
    int n = 0;
    for (const auto& c : chains) n += static_cast<int>(std::count(c.divergent.begin(), c.divergent.end(), 1));
    return n;
  }
};

namespace detail {

struct PhasePoint {
  Eigen::VectorXd x, p, grad;
  double lp = 0.0;
};

class DualAveraging {
 public:
  void restart(double step) {
    mu_ = std::log(10.0 * step);
    h_bar_ = 0.0;
    log_bar_ = 0.0;
    t_ = 0;
  }
  double update(double accept, double delta) {
    ++t_;
    const double t = static_cast<double>(t_);
    const double w = 1.0 / (t + t0);
    h_bar_ = (1.0 - w) * h_bar_ + w * (delta - accept);
    const double log_step = mu_ - std::sqrt(t) / gamma * h_bar_;
    const double eta = std::pow(t, -kappa);
    log_bar_ = eta * log_step + (1.0 - eta) * log_bar_;
    return std::exp(log_step);
  }
  double final_step() const { return std::exp(log_bar_); }

 private:
  static constexpr double gamma = 0.05;
  static constexpr double t0 = 10.0;
  static constexpr double kappa = 0.75;
  double mu_ = 0.0, h_bar_ = 0.0, log_bar_ = 0.0;
  int t_ = 0;
};

inline double log_sum_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

class ChainRunner {
 public:
  ChainRunner(const Target& target, const HmcConfig& cfg, int chain)
      : t_(target), cfg_(cfg), rng_(seed_for(cfg.seed, chain)) {}

  ChainDraws run() {
    const Eigen::Index d = t_.dimension;
    inv_metric_ = Eigen::VectorXd::Ones(d);
    PhasePoint cur;
    initialise(cur);
    step_ = initial_step(cur);

    ChainDraws out;
    out.draws.resize(cfg_.draws, d);
    out.lp.resize(cfg_.draws);
    out.accept_stat.resize(cfg_.draws);
    out.divergent.assign(static_cast<std::size_t>(cfg_.draws), 0);
    out.steps.assign(static_cast<std::size_t>(cfg_.draws), 0);

    DualAveraging da;
    da.restart(step_);
    // Step size adapts throughout warmup. A provisional metric comes from
    // [w/4, w/2); the final metric from [w/2, 0.9 w), after which the step
    // size is re-tuned over the last tenth.
    const int w = cfg_.warmup;
    const bool adapt_metric = w >= 20;
    const std::array<std::pair<int, int>, 2> windows{{{w / 4, w / 2}, {w / 2, w - std::max(1, w / 10)}}};
    std::vector<Eigen::VectorXd> window;
    for (int it = 0; it < w; ++it) {
      const Transition tr = transition(cur);
      if (tr.divergent) ++out.warmup_divergences;
      step_ = da.update(tr.accept, cfg_.target_accept);
      if (!adapt_metric) continue;
      for (const auto& [begin, end] : windows) {
        if (it >= begin && it < end) window.push_back(cur.x);
        if (it + 1 == end) {
          update_metric(window);
          window.clear();
          step_ = initial_step(cur);
          da.restart(step_);
        }
      }
    }
    if (w > 0) {
      if (out.warmup_divergences == w) {
        throw SamplingError("every warmup transition diverged; final step size " + std::to_string(step_));
      }
      step_ = da.final_step();
    }
    if (cfg_.record_loglik && t_.pointwise_loglik) {
      out.loglik.resize(cfg_.draws, t_.pointwise_loglik(cur.x).size());
    }
    for (int it = 0; it < cfg_.draws; ++it) {
      const Transition tr = transition(cur);
      out.draws.row(it) = cur.x.transpose();
      out.lp[it] = cur.lp;
      out.accept_stat[it] = tr.accept;
      out.divergent[static_cast<std::size_t>(it)] = tr.divergent ? 1 : 0;
      out.steps[static_cast<std::size_t>(it)] = tr.steps;
      if (out.loglik.size() > 0) out.loglik.row(it) = t_.pointwise_loglik(cur.x).transpose();
    }
    out.step_size = step_;
    out.inv_metric = inv_metric_;
    return out;
  }

 private:
  struct Transition {
    double accept = 0.0;
    bool divergent = false;
    int steps = 0;
  };

  static std::mt19937_64 seed_for(std::uint64_t seed, int chain) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(chain), 0x5eedu};
    return std::mt19937_64(seq);
  }

  void initialise(PhasePoint& pt) {
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int attempt = 0; attempt < 100; ++attempt) {
      if (t_.initial_point) {
        pt.x = t_.initial_point(rng_);
      } else {
        pt.x.resize(t_.dimension);
        for (Eigen::Index i = 0; i < t_.dimension; ++i) pt.x[i] = u(rng_);
      }
      update_gradient(pt);
      if (std::isfinite(pt.lp) && pt.grad.allFinite()) return;
    }
    throw SamplingError("could not find a finite initial point in 100 attempts");
  }

  void update_gradient(PhasePoint& pt) const {
    pt.grad.resize(t_.dimension);
    pt.lp = t_.log_density(pt.x, pt.grad);
    if (std::isnan(pt.lp)) pt.lp = -std::numeric_limits<double>::infinity();
  }

  double hamiltonian(const PhasePoint& pt) const {
    return -pt.lp + 0.5 * pt.p.cwiseProduct(inv_metric_).dot(pt.p);
  }

  void draw_momentum(PhasePoint& pt) {
    std::normal_distribution<double> n01;
    pt.p.resize(t_.dimension);
    for (Eigen::Index i = 0; i < t_.dimension; ++i) pt.p[i] = n01(rng_) / std::sqrt(inv_metric_[i]);
  }

  void leapfrog(PhasePoint& pt, double eps) const {
    pt.p += 0.5 * eps * pt.grad;
    pt.x += eps * inv_metric_.cwiseProduct(pt.p);
    update_gradient(pt);
    if (std::isfinite(pt.lp)) pt.p += 0.5 * eps * pt.grad;
  }

  // Doubling/halving search for a step with one-step acceptance near 0.5.
  double initial_step(const PhasePoint& start) {
    double eps = step_ > 0.0 ? step_ : 0.1;
    PhasePoint pt = start;
    draw_momentum(pt);
    const double h0 = hamiltonian(pt);
    auto log_ratio = [&](double e) {
      PhasePoint q = pt;
      leapfrog(q, e);
      const double h = hamiltonian(q);
      return std::isfinite(h) ? h0 - h : -std::numeric_limits<double>::infinity();
    };
    const double dir = log_ratio(eps) > std::log(0.5) ? 1.0 : -1.0;
    for (int i = 0; i < 60; ++i) {
      const double lr = log_ratio(eps);
      if (dir > 0 && !(lr > std::log(0.5))) break;
      if (dir < 0 && lr > std::log(0.5)) break;
      eps = dir > 0 ? eps * 2.0 : eps * 0.5;
      if (eps > 1e7 || eps < 1e-12) break;
    }
    return eps;
  }

  // Multinomial HMC: a trajectory of n leapfrog steps is placed uniformly
  // around the current point and one state is drawn with weight exp(-H).
  Transition transition(PhasePoint& cur) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double length = cfg_.path_length * (1.0 + cfg_.jitter * (2.0 * unif(rng_) - 1.0));
    const int n = std::clamp(static_cast<int>(std::ceil(length / step_)), 1, cfg_.max_steps);
    const int backward = std::uniform_int_distribution<int>(0, n)(rng_);

    PhasePoint start = cur;
    draw_momentum(start);
    const double h0 = hamiltonian(start);
    double log_w = 0.0;  // log total weight, relative to the start state
    PhasePoint chosen = start;
    double accept_sum = 0.0;
    int taken = 0;
    bool divergent = false;

    for (int dir = 0; dir < 2 && !divergent; ++dir) {
      const int count = dir == 0 ? backward : n - backward;
      const double eps = dir == 0 ? -step_ : step_;
      PhasePoint pt = start;
      for (int s = 0; s < count; ++s) {
        leapfrog(pt, eps);
        ++taken;
        const double h = hamiltonian(pt);
        if (!std::isfinite(h) || h - h0 > cfg_.divergence_threshold) {
          divergent = true;
          break;
        }
        accept_sum += std::min(1.0, std::exp(h0 - h));
        const double lw = h0 - h;
        log_w = log_sum_exp(log_w, lw);
        if (std::log(unif(rng_)) < lw - log_w) chosen = pt;
      }
    }
    Transition tr;
    tr.steps = taken;
    tr.divergent = divergent;
    if (divergent) {
      tr.accept = 0.0;
      return tr;  // rejected: the chain stays where it was
    }
    tr.accept = taken > 0 ? accept_sum / taken : 1.0;
    cur.x = chosen.x;
    cur.grad = chosen.grad;
    cur.lp = chosen.lp;
    return tr;
  }

  void update_metric(const std::vector<Eigen::VectorXd>& window) {
    const auto n = static_cast<double>(window.size());
    if (window.size() < 3) return;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(t_.dimension);
    for (const auto& x : window) mean += x;
    mean /= n;
    Eigen::VectorXd var = Eigen::VectorXd::Zero(t_.dimension);
    for (const auto& x : window) var += (x - mean).cwiseAbs2();
    var /= (n - 1.0);
    inv_metric_ = (n / (n + 5.0)) * var.array() + 1e-3 * (5.0 / (n + 5.0));
  }

  const Target& t_;
  const HmcConfig& cfg_;
  std::mt19937_64 rng_;
  Eigen::VectorXd inv_metric_;
  double step_ = 0.0;
};

}  // namespace detail

/// Runs `cfg.chains` independent chains. Each chain owns its generator, seeded
/// from (cfg.seed, chain index), so results do not depend on scheduling.
inline PosteriorDraws run_hmc(const Target& target, const HmcConfig& cfg) {
  cfg.validate();
  if (target.dimension < 1 || !target.log_density) throw InputError("target has no density");
  PosteriorDraws out;
  out.chains.resize(static_cast<std::size_t>(cfg.chains));
  for (Eigen::Index i = 0; i < target.dimension; ++i) out.names.push_back(target.name(i));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(cfg.chains));
  auto work = [&](int c) {
    try {
      detail::ChainRunner runner(target, cfg, c);
      out.chains[static_cast<std::size_t>(c)] = runner.run();
    } catch (...) {
      errors[static_cast<std::size_t>(c)] = std::current_exception();
    }
  };
  if (cfg.parallel && std::thread::hardware_concurrency() > 1) {
    std::vector<std::thread> threads;
    for (int c = 0; c < cfg.chains; ++c) threads.emplace_back(work, c);
    for (auto& t : threads) t.join();
  } else {
    for (int c = 0; c < cfg.chains; ++c) work(c);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace regtps

#endif
