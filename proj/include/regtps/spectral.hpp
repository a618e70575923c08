#ifndef REGTPS_SPECTRAL_HPP
#define REGTPS_SPECTRAL_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "regtps/error.hpp"
#include "regtps/io/csv.hpp"

namespace regtps {

/// Bessel J0. Power series for |x| <= 12, Hankel asymptotic expansion beyond.
/// Absolute error stays below 1e-10 for |x| <= 1e4.
inline double bessel_j0(double x) {
  x = std::abs(x);
  if (x <= 12.0) {
    const double q = 0.25 * x * x;
    double term = 1.0;
    double sum = 1.0;
    for (int k = 1; k < 80; ++k) {
      term *= -q / (static_cast<double>(k) * k);
      sum += term;
      if (std::abs(term) < 1e-18 * std::max(1.0, std::abs(sum))) break;
    }
    return sum;
  }
  // t_k = prod_{j<=k} (2j-1)^2 / (k! (8x)^k); P = 1 - t2 + t4 ..., Q = -t1 + t3 ...
  double p = 1.0;
  double q = 0.0;
  double t = 1.0;
  double last = 1.0;
  for (int k = 1; k < 60; ++k) {
    const double f = (2.0 * k - 1.0);
    const double next = t * f * f / (k * 8.0 * x);
    if (next > last && k > 2) break;
    t = next;
    last = t;
    switch (k % 4) {
      case 1: q -= t; break;
      case 2: p -= t; break;
      case 3: q += t; break;
      case 0: p += t; break;
    }
    if (t < 1e-17) break;
  }
  const double chi = x - 0.25 * std::numbers::pi;
  return std::sqrt(2.0 / (std::numbers::pi * x)) * (p * std::cos(chi) - q * std::sin(chi));
}

/// Frequency nodes, spectral values and quadrature weights for a radial
/// Hankel integral.
struct RadialSpectrum {
  std::vector<double> frequencies;
  std::vector<double> values;
  std::vector<double> weights;

  std::size_t size() const { return frequencies.size(); }
};

struct CovarianceCurve {
  std::vector<double> distances;
  std::vector<double> values;
  // Set when some C(d) exceeds C(0); coarse quadrature rings in the Bessel tail.
  bool peak_warning = false;
};

struct ForwardHankelResult {
  std::vector<double> values;
  // Set when the curve has not decayed to 1% of C(0) at its last distance.
  bool truncation_warning = false;
};

inline double regtps_spectral_density(double k, double alpha) {
  return 1.0 / (1.0 + alpha * k * k * k * k);
}

namespace detail {

// Midpoint differences on ascending nodes, one-sided (half) at the ends.
inline std::vector<double> midpoint_weights(const std::vector<double>& w) {
  const std::size_t n = w.size();
  std::vector<double> dw(n, 0.0);
  if (n == 1) {
    dw[0] = 1.0;
    return dw;
  }
  dw[0] = 0.5 * (w[1] - w[0]);
  dw[n - 1] = 0.5 * (w[n - 1] - w[n - 2]);
  for (std::size_t k = 1; k + 1 < n; ++k) dw[k] = 0.5 * (w[k + 1] - w[k - 1]);
  return dw;
}

}  // namespace detail

/// Frequencies w = lambda_S^{1/4} with values 1/(1 + alpha lambda_S). Weights
/// are midpoint differences over the full sorted node list; nodes that agree
/// to 1e-9 relative (including all the zero-penalty modes) are then merged by
/// summing their weights.
inline RadialSpectrum spectrum_from_penalty(const Eigen::VectorXd& penalty_eigvals, double alpha,
                                            double zero_tolerance = 1e-8) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InputError("alpha must be positive");
  if (penalty_eigvals.size() == 0) throw InputError("empty penalty spectrum");
  const double lmax = penalty_eigvals.maxCoeff();
  std::vector<double> lam(penalty_eigvals.data(), penalty_eigvals.data() + penalty_eigvals.size());
  for (auto& l : lam) {
    if (!std::isfinite(l)) throw InputError("non-finite penalty eigenvalue");
    if (l <= zero_tolerance * std::max(lmax, 0.0)) l = 0.0;
  }
  std::sort(lam.begin(), lam.end());
  std::vector<double> w(lam.size());
  for (std::size_t k = 0; k < lam.size(); ++k) w[k] = std::pow(lam[k], 0.25);
  const std::vector<double> dw = detail::midpoint_weights(w);

  RadialSpectrum out;
  for (std::size_t k = 0; k < w.size(); ++k) {
    const bool same = !out.frequencies.empty() &&
                      std::abs(w[k] - out.frequencies.back()) <= 1e-9 * std::max(1.0, w[k]);
    if (same) {
      out.weights.back() += dw[k];
    } else {
      out.frequencies.push_back(w[k]);
      out.values.push_back(1.0 / (1.0 + alpha * lam[k]));
      out.weights.push_back(dw[k]);
    }
  }
  return out;
}

/// S(k) = 1/(1 + alpha k^4) on `nodes` uniform frequencies over [0, k_max],
/// trapezoid weights.
inline RadialSpectrum continuum_spectrum(double alpha, double k_max, int nodes = 2048) {
  if (!(alpha > 0.0)) throw InputError("alpha must be positive");
  if (!(k_max > 0.0) || nodes < 2) throw InputError("continuum grid needs k_max > 0 and 2 nodes");
  RadialSpectrum out;
  const double h = k_max / (nodes - 1);
  for (int i = 0; i < nodes; ++i) {
    const double k = (i == nodes - 1) ? k_max : i * h;
    out.frequencies.push_back(k);
    out.values.push_back(regtps_spectral_density(k, alpha));
    out.weights.push_back((i == 0 || i == nodes - 1) ? 0.5 * h : h);
  }
  return out;
}

/// Continuum mode over the frequency range of a discrete spectrum: 2048 nodes
/// up to 1.5 times its largest frequency.
inline RadialSpectrum continuum_spectrum(double alpha, const RadialSpectrum& discrete) {
  const double wmax = *std::max_element(discrete.frequencies.begin(), discrete.frequencies.end());
  return continuum_spectrum(alpha, 1.5 * wmax, 2048);
}

namespace detail {

inline void check_distances(const std::vector<double>& d) {
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!std::isfinite(d[i]) || d[i] < 0.0) {
      throw InputError("distances must be finite and nonnegative");
    }
    if (i > 0 && d[i] < d[i - 1]) throw InputError("distances must be ascending");
  }
}

}  // namespace detail

/// C(d) = (1/2 pi) sum_k S_k J0(w_k d) w_k dw_k.
inline CovarianceCurve inverse_hankel(const RadialSpectrum& spec,
                                      const std::vector<double>& distances) {
  if (spec.size() == 0) throw InputError("empty spectrum");
  if (spec.values.size() != spec.size() || spec.weights.size() != spec.size()) {
    throw InputError("spectrum arrays differ in length");
  }
  detail::check_distances(distances);
  CovarianceCurve curve;
  curve.distances = distances;
  curve.values.resize(distances.size());
  for (std::size_t i = 0; i < distances.size(); ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < spec.size(); ++k) {
      const double w = spec.frequencies[k];
      if (w == 0.0) continue;
      acc += spec.values[k] * bessel_j0(w * distances[i]) * w * spec.weights[k];
    }
    curve.values[i] = acc / (2.0 * std::numbers::pi);
  }
  if (!curve.values.empty() && curve.distances.front() == 0.0) {
    const double c0 = curve.values.front();
    for (double v : curve.values) {
      if (v > c0 * (1.0 + 1e-12) + 1e-300) curve.peak_warning = true;
    }
  }
  return curve;
}

/// S(k) = 2 pi int_0^dmax C(d) J0(k d) d dd by the trapezoid rule on the curve.
inline ForwardHankelResult forward_hankel(const CovarianceCurve& curve,
                                          const std::vector<double>& frequencies) {
  if (curve.distances.size() != curve.values.size()) {
    throw InputError("covariance curve arrays differ in length");
  }
  detail::check_distances(curve.distances);
  ForwardHankelResult out;
  out.values.assign(frequencies.size(), 0.0);
  const std::size_t n = curve.distances.size();
  if (n < 2) {
    out.truncation_warning = true;
    return out;
  }
  const double c0 = std::abs(curve.values.front());
  out.truncation_warning = std::abs(curve.values.back()) > 0.01 * c0 || curve.distances[0] != 0.0;
  for (std::size_t j = 0; j < frequencies.size(); ++j) {
    const double k = frequencies[j];
    double acc = 0.0;
    double prev = curve.values[0] * bessel_j0(k * curve.distances[0]) * curve.distances[0];
    for (std::size_t i = 1; i < n; ++i) {
      const double d = curve.distances[i];
      const double cur = curve.values[i] * bessel_j0(k * d) * d;
      acc += 0.5 * (prev + cur) * (d - curve.distances[i - 1]);
      prev = cur;
    }
    out.values[j] = 2.0 * std::numbers::pi * acc;
  }
  return out;
}

/// Grid defaults for an analytic round trip at a given alpha. Frequencies are
/// measured in units of alpha^{-1/4}, the natural scale of 1/(1 + alpha k^4).
struct HankelGrid {
  double k_max_scaled = 50.0;
  int k_nodes = 4096;
  double d_max_scaled = 30.0;
  int d_nodes = 6000;

  double k_max(double alpha) const { return k_max_scaled * std::pow(alpha, -0.25); }
  double d_max(double alpha) const { return d_max_scaled * std::pow(alpha, 0.25); }

  std::vector<double> distances(double alpha) const {
    std::vector<double> d(d_nodes);
    for (int i = 0; i < d_nodes; ++i) d[i] = d_max(alpha) * i / (d_nodes - 1);
    return d;
  }
};

inline std::vector<double> uniform_distances(double d_max, int count) {
  if (count < 2 || !(d_max > 0.0)) throw InputError("distance grid needs d_max > 0 and 2 points");
  std::vector<double> d(count);
  for (int i = 0; i < count; ++i) d[i] = d_max * i / (count - 1);
  return d;
}

/// Distance at which the curve first falls to half of C(0), by linear
/// interpolation; NaN if it never does.
inline double half_height_distance(const CovarianceCurve& curve) {
  if (curve.values.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double half = 0.5 * curve.values.front();
  for (std::size_t i = 1; i < curve.values.size(); ++i) {
    if (curve.values[i] <= half) {
      const double a = curve.values[i - 1], b = curve.values[i];
      const double t = (a - half) / (a - b);
      return curve.distances[i - 1] + t * (curve.distances[i] - curve.distances[i - 1]);
    }
  }
  return std::numeric_limits<double>::quiet_NaN();
}

/// Long-format CSV (d, C_d, alpha) for one or more curves.
inline void write_covariance_csv(std::ostream& out, const std::vector<CovarianceCurve>& curves,
                                 const std::vector<double>& alphas) {
  if (curves.size() != alphas.size()) throw InputError("one alpha per curve required");
  io::CsvWriter w(out);
  w.header({"d", "C_d", "alpha"});
  for (std::size_t c = 0; c < curves.size(); ++c) {
    for (std::size_t i = 0; i < curves[c].distances.size(); ++i) {
      w.field(curves[c].distances[i]).field(curves[c].values[i]).field(alphas[c]).end_row();
    }
  }
}

}  // namespace regtps

#endif
