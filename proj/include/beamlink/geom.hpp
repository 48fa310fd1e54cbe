#pragma once

// Geometry primitives and least-squares fitting used by the calibration stages.

#include <array>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Geometry>

namespace beamlink::geom {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Rigid = Eigen::Isometry3d;

/// Tolerances shared by every geometry routine. Defaults live here and are
/// surfaced through the top-level config.
struct GeomTolerances {
  double parallel_ray_angle = 1e-6;      // rad
  double bundle_singular = 1e-12;        // min eigenvalue of the line-bundle normal matrix
  double degenerate_axis_dot = 1e-9;     // |n.z| > 1 - this => degenerate
  int intersection_grid = 64;            // samples per side of the marching grid
  double ill_conditioned_rms = 1e-3;     // m, intersection-curve line fit
  int min_surface_points = 6;
};

/// Vector of unit length. Constructed only through normalization.
class UnitVec3 {
 public:
  UnitVec3() : v_(0.0, 0.0, 1.0) {}
  static UnitVec3 normalize(const Vec3& v);

  const Vec3& vec() const { return v_; }
  operator const Vec3&() const { return v_; }
  double x() const { return v_.x(); }
  double y() const { return v_.y(); }
  double z() const { return v_.z(); }
  double dot(const Vec3& o) const { return v_.dot(o); }
  UnitVec3 operator-() const {
    UnitVec3 u;
    u.v_ = -v_;
    return u;
  }

 private:
  Vec3 v_;
};

struct Ray3 {
  Vec3 origin;
  UnitVec3 direction;

  Vec3 at(double s) const { return origin + s * direction.vec(); }
  double distance_to(const Vec3& p) const;
};

/// Plane in the form normal . p = offset.
struct Plane3 {
  UnitVec3 normal;
  double offset = 0.0;

  static Plane3 through(const Vec3& point, const UnitVec3& normal) {
    return {normal, normal.dot(point)};
  }
  double signed_distance(const Vec3& p) const { return normal.dot(p) - offset; }
  /// Ray parameter of the intersection, if the ray is not parallel to the plane.
  std::optional<double> intersect(const Ray3& ray) const;
};

/// Axis-aligned box in a surface's local (u, v) coordinates.
struct SearchRegion {
  double u_min = 0.0, u_max = 0.0;
  double v_min = 0.0, v_max = 0.0;
};

/// Degree-2 height field h(u,v) over a base-plane frame.
///
/// `frame` maps local (u, v, h) coordinates to the world frame, so the point
/// on the surface at (u, v) is frame * (u, v, h(u, v)).
struct QuadraticSurface {
  // c00, c10, c01, c20, c11, c02
  std::array<double, 6> c{};
  Rigid frame = Rigid::Identity();
  SearchRegion domain;  // bounding box of the fitted points, local coords
  double residual_rms = 0.0;

  double height(double u, double v) const {
    return c[0] + c[1] * u + c[2] * v + c[3] * u * u + c[4] * u * v + c[5] * v * v;
  }
  /// (dh/du, dh/dv)
  Vec2 slope(double u, double v) const {
    return {c[1] + 2.0 * c[3] * u + c[4] * v, c[2] + c[4] * u + 2.0 * c[5] * v};
  }
  Vec3 to_local(const Vec3& world) const { return frame.inverse() * world; }
  Vec3 point_at(double u, double v) const { return frame * Vec3(u, v, height(u, v)); }
  /// Vertical (local h) gap of a world point above the surface.
  double vertical_gap(const Vec3& world) const {
    const Vec3 l = to_local(world);
    return l.z() - height(l.x(), l.y());
  }
};

struct CameraIntrinsics {
  double fx = 900.0, fy = 900.0;
  double cx = 639.5, cy = 511.5;
  int width = 1280, height = 1024;
};

/// Pinhole camera; `pose` maps camera coordinates (z forward) to the stereo frame.
struct Camera {
  CameraIntrinsics intrinsics;
  Rigid pose = Rigid::Identity();

  Vec3 center() const { return pose.translation(); }
  /// Pixel of a world point; std::nullopt when behind the camera.
  std::optional<Vec2> project(const Vec3& world) const;
  Ray3 back_project(const Vec2& pixel) const;
  bool in_bounds(const Vec2& pixel) const;
};

struct StereoRig {
  Camera left;
  Camera right;

  double baseline() const { return (right.center() - left.center()).norm(); }
  /// Throws PreconditionViolated on zero baseline or non-positive focal lengths.
  void validate() const;
};

/// Rigid pose of the steering device in the stereo frame.
struct SteeringPose {
  Mat3 R = Mat3::Identity();  // columns are the device axes x_l, y_l, z_l
  Vec3 T = Vec3::Zero();      // device origin

  Vec3 x_axis() const { return R.col(0); }
  Vec3 y_axis() const { return R.col(1); }
  Vec3 z_axis() const { return R.col(2); }
  Vec3 to_device(const Vec3& world) const { return R.transpose() * (world - T); }
  Vec3 to_world(const Vec3& device) const { return R * device + T; }
  /// Throws PreconditionViolated when R is not a proper rotation within 1e-6.
  void validate() const;
};

Vec3 triangulate(const StereoRig& rig, const Vec2& pixel_left, const Vec2& pixel_right,
                 const GeomTolerances& tol = {});

/// Least-squares quadratic over the points' best-fit (PCA) base plane.
QuadraticSurface fit_quadratic_surface(std::span<const Vec3> points,
                                       const GeomTolerances& tol = {});
/// Least-squares quadratic over a caller-chosen base frame.
QuadraticSurface fit_quadratic_surface(std::span<const Vec3> points, const Rigid& base_frame,
                                       const GeomTolerances& tol = {});

/// RMS distance of the points to their total-least-squares plane.
double plane_fit_rms(std::span<const Vec3> points);

/// First-order Taylor plane of the surface at the vertical projection of `at`.
Plane3 tangent_plane(const QuadraticSurface& surface, const Vec3& at);

struct AxisLine {
  Vec3 point;           // centroid of the sampled intersection curve
  UnitVec3 direction;
  double rms = 0.0;     // line-fit residual of the curve samples
  std::size_t samples = 0;
};

/// Samples the curve where two surfaces meet and fits a line through it.
/// The direction is flipped to have a non-negative component along
/// `orientation`, when given.
AxisLine intersect_surfaces_axis(const QuadraticSurface& first, const QuadraticSurface& second,
                                 const SearchRegion& region,
                                 const std::optional<Vec3>& orientation = std::nullopt,
                                 const GeomTolerances& tol = {});
AxisLine intersect_surfaces_axis(const QuadraticSurface& first, const QuadraticSurface& second,
                                 const std::optional<Vec3>& orientation = std::nullopt,
                                 const GeomTolerances& tol = {});

/// Unit vector orthogonal to both a plane normal and an axis: normalize(n x z).
UnitVec3 solve_axis_from_planes(const UnitVec3& plane_normal, const UnitVec3& axis,
                                const GeomTolerances& tol = {});

/// Point minimizing the summed squared distance to every line.
Vec3 intersect_lines(std::span<const Ray3> lines, const GeomTolerances& tol = {});

struct LineFit {
  Ray3 line;
  double rms = 0.0;
};
/// Total-least-squares line through >= 2 points.
LineFit fit_line(std::span<const Vec3> points);

/// Closest proper rotation in the Frobenius sense (SVD projection).
Mat3 nearest_rotation(const Mat3& m);

/// Geodesic angle between two rotations, radians.
double geodesic_angle(const Mat3& a, const Mat3& b);

/// Angle between two directions, radians.
double angle_between(const Vec3& a, const Vec3& b);

}  // namespace beamlink::geom
