#ifndef REGTPS_DIAGNOSTICS_HPP
#define REGTPS_DIAGNOSTICS_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <Eigen/Dense>

#include "regtps/error.hpp"
#include "regtps/hmc.hpp"

namespace regtps {

namespace detail {

inline void require_chains(const std::vector<Eigen::VectorXd>& chains) {
  if (chains.size() < 2) throw InputError("diagnostics need at least two chains");
  const Eigen::Index n = chains.front().size();
  if (n < 4) throw InputError("diagnostics need at least four draws per chain");
  for (const auto& c : chains) {
    if (c.size() != n) throw InputError("chains have different lengths");
  }
}

/// Splits each chain into halves (dropping the middle draw of odd lengths).
inline std::vector<Eigen::VectorXd> split_chains(const std::vector<Eigen::VectorXd>& chains) {
  std::vector<Eigen::VectorXd> out;
  for (const auto& c : chains) {
    const Eigen::Index half = c.size() / 2;
    out.emplace_back(c.head(half));
    out.emplace_back(c.tail(half));
  }
  return out;
}

/// Normal scores of the pooled ranks (average ranks for ties).
inline std::vector<Eigen::VectorXd> rank_normalize(const std::vector<Eigen::VectorXd>& chains) {
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t c = 0; c < chains.size(); ++c) {
    for (Eigen::Index i = 0; i < chains[c].size(); ++i) {
      all.emplace_back(chains[c][i], c * static_cast<std::size_t>(chains[c].size()) + static_cast<std::size_t>(i));
    }
  }
  std::sort(all.begin(), all.end());
  const double s = static_cast<double>(all.size());
  std::vector<double> rank(all.size());
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j + 1 < all.size() && all[j + 1].first == all[i].first) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[all[k].second] = r;
    i = j + 1;
  }
  const boost::math::normal_distribution<double> std_normal;
  std::vector<Eigen::VectorXd> out;
  std::size_t pos = 0;
  for (const auto& c : chains) {
    Eigen::VectorXd z(c.size());
    for (Eigen::Index i = 0; i < c.size(); ++i) {
      z[i] = boost::math::quantile(std_normal, (rank[pos++] - 0.375) / (s + 0.25));
    }
    out.push_back(std::move(z));
  }
  return out;
}

inline double plain_rhat(const std::vector<Eigen::VectorXd>& chains) {
  const double m = static_cast<double>(chains.size());
  const double n = static_cast<double>(chains.front().size());
  Eigen::VectorXd means(chains.size()), vars(chains.size());
  for (std::size_t c = 0; c < chains.size(); ++c) {
    means[static_cast<Eigen::Index>(c)] = chains[c].mean();
    vars[static_cast<Eigen::Index>(c)] =
        (chains[c].array() - chains[c].mean()).square().sum() / (n - 1.0);
  }
  const double w = vars.mean();
  const double b = n * (means.array() - means.mean()).square().sum() / (m - 1.0);
  if (w == 0.0) return b == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  const double var_plus = (n - 1.0) / n * w + b / n;
  return std::sqrt(var_plus / w);
}

inline double autocovariance(const Eigen::VectorXd& x, double mean, Eigen::Index lag) {
  const Eigen::Index n = x.size();
  double acc = 0.0;
  for (Eigen::Index i = 0; i + lag < n; ++i) acc += (x[i] - mean) * (x[i + lag] - mean);
  return acc / static_cast<double>(n);
}

/// Multi-chain effective sample size with Geyer's initial monotone sequence.
inline double ess_multichain(const std::vector<Eigen::VectorXd>& chains) {
  const std::size_t m = chains.size();
  const Eigen::Index n = chains.front().size();
  const double dn = static_cast<double>(n);
  std::vector<double> means(m), vars(m);
  for (std::size_t c = 0; c < m; ++c) {
    means[c] = chains[c].mean();
    vars[c] = autocovariance(chains[c], means[c], 0) * dn / (dn - 1.0);
  }
  const double w = std::accumulate(vars.begin(), vars.end(), 0.0) / static_cast<double>(m);
  const double grand = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(m);
  double b = 0.0;
  for (double mu : means) b += (mu - grand) * (mu - grand);
  b = m > 1 ? b * dn / static_cast<double>(m - 1) : 0.0;
  const double var_plus = (dn - 1.0) / dn * w + b / dn;
  const double total = static_cast<double>(m) * dn;
  if (!(var_plus > 0.0)) return total;

  auto rho = [&](Eigen::Index lag) {
    double acov = 0.0;
    for (std::size_t c = 0; c < m; ++c) acov += autocovariance(chains[c], means[c], lag);
    acov /= static_cast<double>(m);
    return 1.0 - (w - acov) / var_plus;
  };
  double sum = 0.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (Eigen::Index t = 0; t + 1 < n; t += 2) {
    double pair = (t == 0 ? 1.0 : rho(t)) + rho(t + 1);
    if (!(pair > 0.0)) break;
    pair = std::min(pair, prev_pair);
    prev_pair = pair;
    sum += pair;
  }
  const double tau = std::max(-1.0 + 2.0 * sum, 1.0 / std::log10(total));
  return total / tau;
}

}  // namespace detail

/// Rank-normalized split-Rhat: the larger of the bulk and folded versions.
inline double split_rhat(const std::vector<Eigen::VectorXd>& chains) {
  detail::require_chains(chains);
  const auto split = detail::split_chains(chains);
  const double bulk = detail::plain_rhat(detail::rank_normalize(split));
  double med_all;
  {
    std::vector<double> all;
    for (const auto& c : split) all.insert(all.end(), c.data(), c.data() + c.size());
    std::nth_element(all.begin(), all.begin() + static_cast<long>(all.size() / 2), all.end());
    med_all = all[all.size() / 2];
  }
  std::vector<Eigen::VectorXd> folded;
  for (const auto& c : split) folded.emplace_back((c.array() - med_all).abs().matrix());
  const double tail = detail::plain_rhat(detail::rank_normalize(folded));
  return std::max(bulk, tail);
}

/// Bulk effective sample size from rank-normalized split chains.
inline double ess_bulk(const std::vector<Eigen::VectorXd>& chains) {
  detail::require_chains(chains);
  return detail::ess_multichain(detail::rank_normalize(detail::split_chains(chains)));
}

struct ParameterSummary {
  std::string name;
  double mean = 0.0, sd = 0.0, q025 = 0.0, median = 0.0, q975 = 0.0;
  double rhat = 1.0, ess = 0.0;
};

inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw InputError("quantile of an empty sample");
  const double h = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline ParameterSummary summarize_parameter(const PosteriorDraws& draws, Eigen::Index i) {
  const auto chains = draws.parameter(i);
  ParameterSummary s;
  s.name = static_cast<std::size_t>(i) < draws.names.size() ? draws.names[static_cast<std::size_t>(i)] : "x";
  std::vector<double> all;
  for (const auto& c : chains) all.insert(all.end(), c.data(), c.data() + c.size());
  const double n = static_cast<double>(all.size());
  s.mean = std::accumulate(all.begin(), all.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : all) ss += (v - s.mean) * (v - s.mean);
  s.sd = all.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  std::sort(all.begin(), all.end());
  s.q025 = quantile_sorted(all, 0.025);
  s.median = quantile_sorted(all, 0.5);
  s.q975 = quantile_sorted(all, 0.975);
  if (chains.size() >= 2 && chains.front().size() >= 4) {
    s.rhat = split_rhat(chains);
    s.ess = ess_bulk(chains);
  }
  return s;
}

struct ConvergenceGate {
  double max_rhat = 1.05;
  double min_ess = 100.0;
};

struct GateReport {
  bool passed = true;
  std::vector<ParameterSummary> checked;
  std::vector<std::string> failures;
};

/// Checks the named parameters (usually the hyperparameters) against the gate.
inline GateReport check_convergence(const PosteriorDraws& draws, const std::vector<Eigen::Index>& params,
                                    const ConvergenceGate& gate = {}) {
  GateReport r;
  for (const Eigen::Index i : params) {
    auto s = summarize_parameter(draws, i);
    if (!(s.rhat <= gate.max_rhat)) {
      r.failures.push_back(s.name + ": split-Rhat " + std::to_string(s.rhat));
    }
    if (!(s.ess >= gate.min_ess)) {
      r.failures.push_back(s.name + ": bulk ESS " + std::to_string(s.ess));
    }
    r.checked.push_back(std::move(s));
  }
  r.passed = r.failures.empty();
  return r;
}

}  // namespace regtps

#endif
