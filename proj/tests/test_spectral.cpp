#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numbers>
#include <sstream>

#include "regtps/spectral.hpp"
#include "regtps/tps_basis.hpp"
#include "test_support.hpp"

using namespace regtps;

namespace {

// 60-term power series in long double; good to ~1e-15 for |x| <= 8.
double j0_series_oracle(double x) {
  long double q = 0.25L * x * x, term = 1.0L, sum = 1.0L;
  for (int k = 1; k < 60; ++k) {
    term *= -q / (static_cast<long double>(k) * k);
    sum += term;
  }
  return static_cast<double>(sum);
}

// Composite Simpson on [0, k_max] with n (even) panels.
double simpson(const std::function<double(double)>& f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

}  // namespace

TEST(BesselJ0, KnownValues) {
  EXPECT_EQ(bessel_j0(0.0), 1.0);
  EXPECT_NEAR(bessel_j0(1.0), 0.7651976865579666, 1e-15);
  EXPECT_NEAR(bessel_j0(1.0), j0_series_oracle(1.0), 1e-15);
  EXPECT_NEAR(bessel_j0(2.404825557695773), 0.0, 1e-9);
  EXPECT_EQ(bessel_j0(-3.7), bessel_j0(3.7));
}

TEST(BesselJ0, FirstRootByBisectionOnSeries) {
  double lo = 2.0, hi = 3.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (j0_series_oracle(mid) > 0 ? lo : hi) = mid;
  }
  EXPECT_NEAR(bessel_j0(lo), 0.0, 1e-12);
  EXPECT_NEAR(lo, 2.404825557695773, 1e-12);
}

TEST(BesselJ0, AgreesWithStandardLibraryOverRange) {
  double worst = 0.0;
  for (double x = 0.0; x <= 60.0; x += 0.0137) {
    worst = std::max(worst, std::abs(bessel_j0(x) - std::cyl_bessel_j(0.0, x)));
  }
  for (double x = 60.0; x <= 1e4; x *= 1.0173) {
    worst = std::max(worst, std::abs(bessel_j0(x) - std::cyl_bessel_j(0.0, x)));
  }
  EXPECT_LE(worst, 1e-10);
}

TEST(SpectrumFromPenalty, Substitution) {
  const auto s = spectrum_from_penalty((Eigen::VectorXd(1) << 16.0).finished(), 1.0);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_DOUBLE_EQ(s.frequencies[0], 2.0);
  EXPECT_DOUBLE_EQ(s.values[0], 1.0 / 17.0);
}

TEST(SpectrumFromPenalty, DcMergeAndWeights) {
  const Eigen::VectorXd lam = (Eigen::VectorXd(5) << 0, 0, 0, 1, 16).finished();
  const auto s = spectrum_from_penalty(lam, 1.0);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s.frequencies[0], 0.0);
  EXPECT_DOUBLE_EQ(s.frequencies[1], 1.0);
  EXPECT_DOUBLE_EQ(s.frequencies[2], 2.0);
  EXPECT_EQ(s.values[0], 1.0);
  // Full-list midpoints: (0, 0, 0.5, 1, 0.5); merged DC keeps 0.5.
  EXPECT_DOUBLE_EQ(s.weights[0], 0.5);
  EXPECT_DOUBLE_EQ(s.weights[1], 1.0);
  EXPECT_DOUBLE_EQ(s.weights[2], 0.5);
  double mass = 0.0;
  for (double w : s.weights) mass += w;
  EXPECT_DOUBLE_EQ(mass, 2.0);
  EXPECT_THROW(spectrum_from_penalty(lam, 0.0), InputError);
}

TEST(SpectrumFromPenalty, ValuesInUnitIntervalOnTpsSpectrum) {
  const TpsBasisSystem sys(fixtures::random_points(50, 1, PointRole::knot));
  for (double a : {0.01, 1.0, 100.0}) {
    const auto s = spectrum_from_penalty(sys.eigenvalues(), a);
    for (std::size_t k = 0; k < s.size(); ++k) {
      EXPECT_GT(s.values[k], 0.0);
      EXPECT_LE(s.values[k], 1.0);
      EXPECT_GT(s.weights[k], 0.0);
      if (k) {
        EXPECT_GT(s.frequencies[k], s.frequencies[k - 1]);
      }
    }
  }
}

TEST(InverseHankel, SingleNodeAndZeroDistance) {
  RadialSpectrum s{{1.0}, {1.0}, {1.0}};
  const auto c = inverse_hankel(s, {0.0, 0.5, 3.0});
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(c.values[i], std::cyl_bessel_j(0.0, c.distances[i]) / (2 * std::numbers::pi),
                1e-12);
  }
  RadialSpectrum t{{0.0, 0.5, 1.5}, {1.0, 0.4, 0.2}, {0.25, 0.7, 0.5}};
  const double c0 = (0.4 * 0.5 * 0.7 + 0.2 * 1.5 * 0.5) / (2 * std::numbers::pi);
  EXPECT_NEAR(inverse_hankel(t, {0.0}).values[0], c0, 1e-15);
  EXPECT_THROW(inverse_hankel(RadialSpectrum{}, {0.0}), InputError);
  EXPECT_THROW(inverse_hankel(s, {1.0, 0.5}), InputError);
}

TEST(InverseHankel, MatchesFineQuadratureOfAnalyticSpectrum) {
  const auto spec = continuum_spectrum(1.0, 50.0, 4096);
  const std::vector<double> d{0.1, 0.5, 1.0, 2.0};
  const auto curve = inverse_hankel(spec, d);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double oracle =
        simpson([&](double k) { return std::cyl_bessel_j(0.0, k * d[i]) * k / (1 + k * k * k * k); },
                0.0, 50.0, 200000) /
        (2 * std::numbers::pi);
    EXPECT_NEAR(curve.values[i], oracle, 0.01 * std::abs(oracle)) << "d=" << d[i];
  }
}

TEST(ForwardHankel, ZeroCurveAndDeltaSpectrum) {
  const auto d = uniform_distances(40.0, 4000);
  CovarianceCurve zero{d, std::vector<double>(d.size(), 0.0)};
  const auto z = forward_hankel(zero, {0.5, 1.0, 2.0});
  for (double v : z.values) EXPECT_EQ(v, 0.0);

  // J0(d)/(2 pi) is the transform of a unit ring at k = 1; its forward transform
  // over a finite window peaks at k = 1.
  const auto ring = inverse_hankel(RadialSpectrum{{1.0}, {1.0}, {1.0}}, d);
  std::vector<double> ks;
  for (double k = 0.2; k <= 2.0; k += 0.05) ks.push_back(k);
  const auto f = forward_hankel(ring, ks);
  std::size_t arg = 0;
  for (std::size_t i = 0; i < ks.size(); ++i)
    if (f.values[i] > f.values[arg]) arg = i;
  EXPECT_NEAR(ks[arg], 1.0, 0.051);
  EXPECT_FALSE(f.truncation_warning);
  // |J0(10)| is far above 1% of J0(0): the window is too short.
  const auto short_ring = inverse_hankel(RadialSpectrum{{1.0}, {1.0}, {1.0}},
                                         uniform_distances(10.0, 1000));
  EXPECT_TRUE(forward_hankel(short_ring, ks).truncation_warning);
}

TEST(ForwardHankel, RoundTripUnderGridDefaults) {
  const HankelGrid grid;
  for (double alpha : {10.0, 1.0, 0.1}) {
    const auto spec = continuum_spectrum(alpha, grid.k_max(alpha), grid.k_nodes);
    const auto curve = inverse_hankel(spec, grid.distances(alpha));
    std::vector<double> ks;
    for (double k : {0.2, 0.5, 1.0, 1.5, 2.0, 3.0}) ks.push_back(k * std::pow(alpha, -0.25));
    const auto back = forward_hankel(curve, ks);
    EXPECT_FALSE(back.truncation_warning);
    for (std::size_t i = 0; i < ks.size(); ++i) {
      const double truth = regtps_spectral_density(ks[i], alpha);
      EXPECT_NEAR(back.values[i], truth, 0.05 * truth) << "alpha=" << alpha << " k=" << ks[i];
    }
  }
}

// C(d; alpha) = alpha^{-1/2} g(d / alpha^{1/4}): the peak grows as alpha
// shrinks while the half-height distance scales like alpha^{1/4}.
TEST(InverseHankel, PeakGrowsAndRangeScalesWithAlpha) {
  const HankelGrid grid;
  double last_c0 = 0.0;
  double ref_half = 0.0;
  for (double alpha : {10.0, 1.0, 0.1}) {
    const auto spec = continuum_spectrum(alpha, grid.k_max(alpha), grid.k_nodes);
    const auto curve = inverse_hankel(spec, uniform_distances(10.0, 4001));
    EXPECT_GT(curve.values[0], last_c0);
    EXPECT_NEAR(curve.values[0], 0.125 / std::sqrt(alpha), 1e-3 / std::sqrt(alpha));
    last_c0 = curve.values[0];
    const double half = half_height_distance(curve) / std::pow(alpha, 0.25);
    if (ref_half == 0.0) ref_half = half;
    EXPECT_NEAR(half, ref_half, 0.01 * ref_half);
  }
}

TEST(InverseHankel, DiscreteTpsSpectrumAlphaOrdering) {
  const TpsBasisSystem sys(fixtures::random_points(100, 5, PointRole::knot));
  double last = 0.0;
  for (double alpha : {10.0, 1.0, 0.1}) {
    const auto curve = inverse_hankel(spectrum_from_penalty(sys.eigenvalues(), alpha), {0.0});
    EXPECT_GT(curve.values[0], last);
    last = curve.values[0];
  }
}

TEST(CovarianceCsv, HeaderAndPrecision) {
  std::ostringstream os;
  CovarianceCurve c{{0.0, 0.1}, {1.0 / 3.0, 0.25}};
  write_covariance_csv(os, {c}, {2.0});
  EXPECT_EQ(os.str(), "d,C_d,alpha\n0,0.33333333333333331,2\n0.10000000000000001,0.25,2\n");
}
