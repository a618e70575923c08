#ifndef REGTPS_GEOMETRY_HPP
#define REGTPS_GEOMETRY_HPP

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "regtps/error.hpp"

namespace regtps {

struct Point2 {
  double s1 = 0.0;
  double s2 = 0.0;

  bool finite() const { return std::isfinite(s1) && std::isfinite(s2); }
  friend bool operator==(const Point2&, const Point2&) = default;
};

inline double distance(const Point2& a, const Point2& b) {
  return std::hypot(a.s1 - b.s1, a.s2 - b.s2);
}

enum class PointRole { observation, knot, mesh_node, grid };

inline const char* to_string(PointRole role) {
  switch (role) {
    case PointRole::observation: return "observation";
    case PointRole::knot: return "knot";
    case PointRole::mesh_node: return "mesh_node";
    case PointRole::grid: return "grid";
  }
  return "unknown";
}

/// Ordered, non-empty set of finite locations. Knot sets must also be
/// pairwise distinct; the TPS kernel matrix is singular otherwise.
class PointSet {
 public:
  PointSet(std::vector<Point2> points, PointRole role)
      : points_(std::move(points)), role_(role) {
    if (points_.empty()) {
      throw InputError(std::string("empty ") + to_string(role_) + " point set");
    }
    for (std::size_t i = 0; i < points_.size(); ++i) {
      if (!points_[i].finite()) {
        throw InputError("non-finite coordinate at point " + std::to_string(i));
      }
    }
    if (role_ == PointRole::knot) {
      for (std::size_t i = 0; i < points_.size(); ++i) {
        for (std::size_t j = i + 1; j < points_.size(); ++j) {
          if (points_[i] == points_[j]) {
            throw InputError("duplicate knots at indices " + std::to_string(i) +
                             " and " + std::to_string(j));
          }
        }
      }
    }
  }

  std::size_t size() const { return points_.size(); }
  const Point2& operator[](std::size_t i) const { return points_[i]; }
  const std::vector<Point2>& points() const { return points_; }
  PointRole role() const { return role_; }

  auto begin() const { return points_.begin(); }
  auto end() const { return points_.end(); }

  PointSet with_role(PointRole role) const { return PointSet(points_, role); }

 private:
  std::vector<Point2> points_;
  PointRole role_;
};

/// Axis-aligned rectangle, optionally grown by a margin fraction of each side.
struct BoundingDomain {
  double min1 = 0.0;
  double min2 = 0.0;
  double max1 = 1.0;
  double max2 = 1.0;
  double margin = 0.0;

  BoundingDomain() = default;
  BoundingDomain(double lo1, double lo2, double hi1, double hi2, double margin_fraction = 0.0)
      : min1(lo1), min2(lo2), max1(hi1), max2(hi2), margin(margin_fraction) {
    validate();
  }

  void validate() const {
    if (!(std::isfinite(min1) && std::isfinite(min2) && std::isfinite(max1) &&
          std::isfinite(max2))) {
      throw InputError("non-finite domain bounds");
    }
    if (!(max1 > min1) || !(max2 > min2)) {
      throw InputError("domain requires max > min in each coordinate");
    }
    if (!(margin >= 0.0) || !std::isfinite(margin)) {
      throw InputError("domain margin must be a nonnegative fraction");
    }
  }

  double width() const { return max1 - min1; }
  double height() const { return max2 - min2; }
  double area() const { return width() * height(); }
  double diameter() const { return std::hypot(width(), height()); }

  bool contains(const Point2& p, double tol = 0.0) const {
    return p.s1 >= min1 - tol && p.s1 <= max1 + tol && p.s2 >= min2 - tol && p.s2 <= max2 + tol;
  }

  /// The domain grown by `margin` times the side length on every side.
  BoundingDomain extended() const {
    BoundingDomain out;
    out.min1 = min1 - margin * width();
    out.max1 = max1 + margin * width();
    out.min2 = min2 - margin * height();
    out.max2 = max2 + margin * height();
    out.margin = 0.0;
    return out;
  }

  static BoundingDomain enclosing(const PointSet& pts, double margin_fraction = 0.0) {
    BoundingDomain d;
    d.min1 = d.max1 = pts[0].s1;
    d.min2 = d.max2 = pts[0].s2;
    for (const auto& p : pts) {
      d.min1 = std::min(d.min1, p.s1);
      d.max1 = std::max(d.max1, p.s1);
      d.min2 = std::min(d.min2, p.s2);
      d.max2 = std::max(d.max2, p.s2);
    }
    d.margin = margin_fraction;
    d.validate();
    return d;
  }
};

inline Eigen::MatrixXd pairwise_distances(const PointSet& a, const PointSet& b) {
  Eigen::MatrixXd d(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      d(i, j) = distance(a[i], b[j]);
    }
  }
  return d;
}

/// Row-major lattice (s1 varies fastest) of resolution^2 points, edges included.
inline PointSet make_grid(const BoundingDomain& domain, int resolution) {
  if (resolution < 2) {
    throw InputError("grid resolution must be at least 2");
  }
  domain.validate();
  std::vector<Point2> pts;
  pts.reserve(static_cast<std::size_t>(resolution) * resolution);
  const double step1 = domain.width() / (resolution - 1);
  const double step2 = domain.height() / (resolution - 1);
  for (int r = 0; r < resolution; ++r) {
    const double s2 = (r == resolution - 1) ? domain.max2 : domain.min2 + r * step2;
    for (int c = 0; c < resolution; ++c) {
      const double s1 = (c == resolution - 1) ? domain.max1 : domain.min1 + c * step1;
      pts.push_back({s1, s2});
    }
  }
  return PointSet(std::move(pts), PointRole::grid);
}

}  // namespace regtps

#endif
