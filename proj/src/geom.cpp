#include "beamlink/geom.hpp"

#include <algorithm>
#include <cmath>

#include "beamlink/error.hpp"

namespace beamlink::geom {

UnitVec3 UnitVec3::normalize(const Vec3& v) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw Error(ErrorCode::DegenerateInput, "cannot normalize a zero or non-finite vector");
  }
  UnitVec3 u;
  u.v_ = v / n;
  return u;
}

double Ray3::distance_to(const Vec3& p) const {
  const Vec3 w = p - origin;
  return (w - w.dot(direction.vec()) * direction.vec()).norm();
}

std::optional<double> Plane3::intersect(const Ray3& ray) const {
  const double denom = normal.dot(ray.direction.vec());
  if (std::abs(denom) < 1e-15) return std::nullopt;
  return (offset - normal.dot(ray.origin)) / denom;
}

std::optional<Vec2> Camera::project(const Vec3& world) const {
  const Vec3 c = pose.inverse() * world;
  if (c.z() <= 0.0) return std::nullopt;
  return Vec2(intrinsics.fx * c.x() / c.z() + intrinsics.cx,
              intrinsics.fy * c.y() / c.z() + intrinsics.cy);
}

Ray3 Camera::back_project(const Vec2& pixel) const {
  const Vec3 dir_cam((pixel.x() - intrinsics.cx) / intrinsics.fx,
                     (pixel.y() - intrinsics.cy) / intrinsics.fy, 1.0);
  return {pose.translation(), UnitVec3::normalize(pose.linear() * dir_cam)};
}

bool Camera::in_bounds(const Vec2& pixel) const {
  return pixel.x() >= -0.5 && pixel.y() >= -0.5 && pixel.x() <= intrinsics.width - 0.5 &&
         pixel.y() <= intrinsics.height - 0.5;
}

void StereoRig::validate() const {
  if (!(baseline() > 0.0)) throw Error(ErrorCode::PreconditionViolated, "stereo baseline must be > 0");
  for (const Camera* cam : {&left, &right}) {
    if (!(cam->intrinsics.fx > 0.0) || !(cam->intrinsics.fy > 0.0)) {
      throw Error(ErrorCode::PreconditionViolated, "focal lengths must be > 0");
    }
  }
}

void SteeringPose::validate() const {
  const double ortho = (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (ortho > 1e-6 || std::abs(R.determinant() - 1.0) > 1e-6) {
    throw Error(ErrorCode::PreconditionViolated, "steering pose rotation is not orthonormal");
  }
}

Vec3 triangulate(const StereoRig& rig, const Vec2& pixel_left, const Vec2& pixel_right,
                 const GeomTolerances& tol) {
  if (!rig.left.in_bounds(pixel_left) || !rig.right.in_bounds(pixel_right)) {
    throw Error(ErrorCode::OutOfBounds, "pixel outside image");
  }
  const Ray3 r1 = rig.left.back_project(pixel_left);
  const Ray3 r2 = rig.right.back_project(pixel_right);
  const Vec3& d1 = r1.direction.vec();
  const Vec3& d2 = r2.direction.vec();
  if (angle_between(d1, d2) < tol.parallel_ray_angle) {
    throw Error(ErrorCode::ParallelRays, "back-projected rays are parallel");
  }
  // Midpoint of the common perpendicular.
  const Vec3 w0 = r1.origin - r2.origin;
  const double b = d1.dot(d2);
  const double d = d1.dot(w0);
  const double e = d2.dot(w0);
  const double denom = 1.0 - b * b;
  const double s = (b * e - d) / denom;
  const double t = (e - b * d) / denom;
  return ((r1.origin + s * d1) + (r2.origin + t * d2)) / 2.0;
}

namespace {

Rigid pca_frame(std::span<const Vec3> points) {
  Vec3 centroid = Vec3::Zero();
  for (const auto& p : points) centroid += p;
  centroid /= static_cast<double>(points.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : points) cov += (p - centroid) * (p - centroid).transpose();
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  // Eigenvalues ascending: normal is the smallest, u the largest.
  Vec3 n = eig.eigenvectors().col(0).normalized();
  Vec3 u = eig.eigenvectors().col(2).normalized();
  Vec3 v = n.cross(u);
  Rigid frame = Rigid::Identity();
  frame.linear().col(0) = u;
  frame.linear().col(1) = v;
  frame.linear().col(2) = n;
  frame.translation() = centroid;
  return frame;
}

}  // namespace

QuadraticSurface fit_quadratic_surface(std::span<const Vec3> points, const GeomTolerances& tol) {
  if (static_cast<int>(points.size()) < tol.min_surface_points) {
    throw Error(ErrorCode::Underdetermined, "quadratic surface needs at least 6 points");
  }
  return fit_quadratic_surface(points, pca_frame(points), tol);
}

QuadraticSurface fit_quadratic_surface(std::span<const Vec3> points, const Rigid& base_frame,
                                       const GeomTolerances& tol) {
  const auto n = static_cast<Eigen::Index>(points.size());
  if (n < tol.min_surface_points) {
    throw Error(ErrorCode::Underdetermined, "quadratic surface needs at least 6 points");
  }
  QuadraticSurface s;
  s.frame = base_frame;
  const Rigid inv = base_frame.inverse();
  Eigen::MatrixXd A(n, 6);
  Eigen::VectorXd h(n);
  s.domain = {1e300, -1e300, 1e300, -1e300};
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 l = inv * points[static_cast<std::size_t>(i)];
    const double u = l.x(), v = l.y();
    A.row(i) << 1.0, u, v, u * u, u * v, v * v;
    h(i) = l.z();
    s.domain.u_min = std::min(s.domain.u_min, u);
    s.domain.u_max = std::max(s.domain.u_max, u);
    s.domain.v_min = std::min(s.domain.v_min, v);
    s.domain.v_max = std::max(s.domain.v_max, v);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  qr.setThreshold(1e-10);
  if (qr.rank() < 6) {
    throw Error(ErrorCode::Underdetermined, "quadratic surface normal equations are rank deficient");
  }
  const Eigen::VectorXd coef = qr.solve(h);
  for (int k = 0; k < 6; ++k) s.c[static_cast<std::size_t>(k)] = coef(k);
  s.residual_rms = std::sqrt((A * coef - h).squaredNorm() / static_cast<double>(n));
  return s;
}

double plane_fit_rms(std::span<const Vec3> points) {
  const Rigid frame = pca_frame(points);
  const Rigid inv = frame.inverse();
  double sum = 0.0;
  for (const auto& p : points) sum += std::pow((inv * p).z(), 2);
  return std::sqrt(sum / static_cast<double>(points.size()));
}

Plane3 tangent_plane(const QuadraticSurface& surface, const Vec3& at) {
  const Vec3 l = surface.to_local(at);
  const double u0 = l.x(), v0 = l.y();
  const Vec2 g = surface.slope(u0, v0);
  const Vec3 n_local(-g.x(), -g.y(), 1.0);
  const UnitVec3 n = UnitVec3::normalize(surface.frame.linear() * n_local);
  return Plane3::through(surface.point_at(u0, v0), n);
}

namespace {

// Bisection on f over [a, b] where f(a), f(b) have opposite signs.
template <class F>
double bisect(F&& f, double a, double b, double fa) {
  for (int it = 0; it < 100; ++it) {
    const double m = 0.5 * (a + b);
    if (m == a || m == b) break;
    const double fm = f(m);
    if (fm == 0.0) return m;
    if ((fm < 0.0) == (fa < 0.0)) {
      a = m;
      fa = fm;
    } else {
      b = m;
    }
  }
  return 0.5 * (a + b);
}

}  // namespace

AxisLine intersect_surfaces_axis(const QuadraticSurface& first, const QuadraticSurface& second,
                                 const SearchRegion& region, const std::optional<Vec3>& orientation,
                                 const GeomTolerances& tol) {
  const int g = std::max(2, tol.intersection_grid);
  std::vector<Vec3> curve;
  auto gap = [&](double u, double v) { return second.vertical_gap(first.point_at(u, v)); };
  auto lerp = [](double lo, double hi, int i, int n) {
    return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  };
  // March rows of constant u (scan v) and columns of constant v (scan u).
  for (int pass = 0; pass < 2; ++pass) {
    for (int i = 0; i < g; ++i) {
      const double fixed = pass == 0 ? lerp(region.u_min, region.u_max, i, g)
                                     : lerp(region.v_min, region.v_max, i, g);
      auto f = [&](double t) { return pass == 0 ? gap(fixed, t) : gap(t, fixed); };
      const double lo = pass == 0 ? region.v_min : region.u_min;
      const double hi = pass == 0 ? region.v_max : region.u_max;
      double t_prev = lo;
      double f_prev = f(lo);
      for (int j = 1; j < g; ++j) {
        const double t = lerp(lo, hi, j, g);
        const double ft = f(t);
        if (f_prev == 0.0 || (f_prev < 0.0) != (ft < 0.0)) {
          const double root = f_prev == 0.0 ? t_prev : bisect(f, t_prev, t, f_prev);
          curve.push_back(pass == 0 ? first.point_at(fixed, root) : first.point_at(root, fixed));
        }
        t_prev = t;
        f_prev = ft;
      }
    }
  }
  if (curve.size() < 2) {
    throw Error(ErrorCode::NoIntersection, "surfaces do not meet inside the search region");
  }
  LineFit fit = fit_line(curve);
  if (fit.rms > tol.ill_conditioned_rms) {
    throw Error(ErrorCode::IllConditioned, "intersection curve is not line-like");
  }
  AxisLine out;
  out.point = fit.line.origin;
  out.direction = fit.line.direction;
  if (orientation && out.direction.dot(*orientation) < 0.0) out.direction = -out.direction;
  out.rms = fit.rms;
  out.samples = curve.size();
  return out;
}

AxisLine intersect_surfaces_axis(const QuadraticSurface& first, const QuadraticSurface& second,
                                 const std::optional<Vec3>& orientation,
                                 const GeomTolerances& tol) {
  return intersect_surfaces_axis(first, second, first.domain, orientation, tol);
}

UnitVec3 solve_axis_from_planes(const UnitVec3& plane_normal, const UnitVec3& axis,
                                const GeomTolerances& tol) {
  if (std::abs(plane_normal.dot(axis)) > 1.0 - tol.degenerate_axis_dot) {
    throw Error(ErrorCode::DegenerateInput, "plane normal is parallel to the axis");
  }
  return UnitVec3::normalize(plane_normal.vec().cross(axis.vec()));
}

Vec3 intersect_lines(std::span<const Ray3> lines, const GeomTolerances& tol) {
  if (lines.size() < 2) throw Error(ErrorCode::ParallelBundle, "need at least two lines");
  Mat3 A = Mat3::Zero();
  Vec3 b = Vec3::Zero();
  for (const auto& l : lines) {
    const Vec3& d = l.direction.vec();
    const Mat3 P = Mat3::Identity() - d * d.transpose();
    A += P;
    b += P * l.origin;
  }
  Eigen::SelfAdjointEigenSolver<Mat3> eig(A);
  if (eig.eigenvalues().minCoeff() / static_cast<double>(lines.size()) < tol.bundle_singular) {
    throw Error(ErrorCode::ParallelBundle, "line directions do not span two dimensions");
  }
  return A.ldlt().solve(b);
}

LineFit fit_line(std::span<const Vec3> points) {
  if (points.size() < 2) throw Error(ErrorCode::Underdetermined, "line fit needs two points");
  Vec3 centroid = Vec3::Zero();
  for (const auto& p : points) centroid += p;
  centroid /= static_cast<double>(points.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : points) cov += (p - centroid) * (p - centroid).transpose();
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  LineFit fit;
  fit.line = {centroid, UnitVec3::normalize(eig.eigenvectors().col(2))};
  double sum = 0.0;
  for (const auto& p : points) sum += std::pow(fit.line.distance_to(p), 2);
  fit.rms = std::sqrt(sum / static_cast<double>(points.size()));
  return fit;
}

Mat3 nearest_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 D = Mat3::Identity();
  D(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  return svd.matrixU() * D * svd.matrixV().transpose();
}

double geodesic_angle(const Mat3& a, const Mat3& b) {
  return Eigen::AngleAxisd(a.transpose() * b).angle();
}

double angle_between(const Vec3& a, const Vec3& b) {
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

}  // namespace beamlink::geom
