#include "beamlink/calib.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace beamlink::calib {

namespace {

std::vector<Vec3> localize(const geom::StereoRig& rig, const std::vector<Observation>& obs,
                           const geom::GeomTolerances& tol) {
  std::vector<Vec3> pts;
  pts.reserve(obs.size());
  for (const auto& o : obs) pts.push_back(geom::triangulate(rig, o.pixel_left, o.pixel_right, tol));
  return pts;
}

std::array<double, 9> monomials(double alpha, double beta) {
  std::array<double, 9> m{};
  const double ap[3] = {1.0, alpha, alpha * alpha};
  const double bp[3] = {1.0, beta, beta * beta};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m[static_cast<std::size_t>(3 * i + j)] = ap[i] * bp[j];
  return m;
}

}  // namespace

Drive MappingModel::evaluate(const Angles& angles) const {
  const auto m = monomials(angles.alpha, angles.beta);
  Drive d;
  for (std::size_t k = 0; k < 9; ++k) {
    d.a += m_a[k] * m[k];
    d.b += m_b[k] * m[k];
  }
  return d;
}

void validate_session(const CalibrationSession& session, const CalibTolerances& tol) {
  session.rig.validate();
  if (session.boards.size() < tol.min_boards) {
    throw Error(ErrorCode::PreconditionViolated, "axis scans need at least two board positions");
  }
  if (session.spiral.size() < tol.min_spiral) {
    throw Error(ErrorCode::PreconditionViolated, "spiral scan needs at least nine samples");
  }
}

RotationResult recover_rotation(const CalibrationSession& session, const CalibTolerances& tol) {
  session.rig.validate();
  if (session.boards.size() < tol.min_boards) {
    throw Error(ErrorCode::PreconditionViolated, "axis scans need at least two board positions");
  }
  std::vector<Vec3> xs, ys;
  std::vector<double> x_drive, y_drive;
  std::vector<Vec3> board_centroids;
  for (const auto& board : session.boards) {
    const auto px = localize(session.rig, board.x_scan, tol.geom);
    const auto py = localize(session.rig, board.y_scan, tol.geom);
    Vec3 c = Vec3::Zero();
    for (std::size_t i = 0; i < px.size(); ++i) {
      xs.push_back(px[i]);
      x_drive.push_back(board.x_scan[i].drive.a);
      c += px[i];
    }
    for (std::size_t i = 0; i < py.size(); ++i) {
      ys.push_back(py[i]);
      y_drive.push_back(board.y_scan[i].drive.b);
      c += py[i];
    }
    if (!px.empty() || !py.empty()) board_centroids.push_back(c / static_cast<double>(px.size() + py.size()));
  }

  const geom::QuadraticSurface sxz = geom::fit_quadratic_surface(xs, tol.geom);
  const geom::QuadraticSurface syz = geom::fit_quadratic_surface(ys, tol.geom);

  // The beam travels away from the stereo head: orient z along the spread
  // from the nearest to the farthest board.
  auto by_range = [](const Vec3& p, const Vec3& q) { return p.norm() < q.norm(); };
  const auto [near_it, far_it] = std::minmax_element(board_centroids.begin(), board_centroids.end(), by_range);
  const Vec3 hint = *far_it - *near_it;

  const geom::AxisLine axis = geom::intersect_surfaces_axis(sxz, syz, hint, tol.geom);
  const geom::UnitVec3 z_l = axis.direction;
  const geom::Plane3 plane_xz = geom::tangent_plane(sxz, axis.point);
  const geom::Plane3 plane_yz = geom::tangent_plane(syz, axis.point);

  // Sign of each lateral axis follows the sign of its drive signal.
  auto orient = [&](geom::UnitVec3 v, const std::vector<Vec3>& pts, const std::vector<double>& drive) {
    double s = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      s += (drive[i] > 0.0 ? 1.0 : drive[i] < 0.0 ? -1.0 : 0.0) * v.dot(pts[i] - axis.point);
    }
    return s < 0.0 ? -v : v;
  };
  const geom::UnitVec3 x_l = orient(geom::solve_axis_from_planes(plane_xz.normal, z_l, tol.geom), xs, x_drive);
  const geom::UnitVec3 y_l = orient(geom::solve_axis_from_planes(plane_yz.normal, z_l, tol.geom), ys, y_drive);

  RotationResult out;
  out.diagnostics.surface_xz_rms = sxz.residual_rms;
  out.diagnostics.surface_yz_rms = syz.residual_rms;
  out.diagnostics.axis_line_rms = axis.rms;
  out.diagnostics.axis_samples = axis.samples;
  out.diagnostics.max_axis_dot =
      std::max({std::abs(x_l.dot(y_l)), std::abs(x_l.dot(z_l)), std::abs(y_l.dot(z_l))});
  if (out.diagnostics.max_axis_dot > tol.max_axis_dot) {
    throw Error(ErrorCode::NonOrthogonalAxes, "recovered axes are far from orthogonal");
  }
  Mat3 M;
  M.col(0) = x_l.vec();
  M.col(1) = y_l.vec();
  M.col(2) = z_l.vec();
  out.R = geom::nearest_rotation(M);
  out.axis_point = axis.point;
  return out;
}

TranslationResult recover_translation(const CalibrationSession& session, const Mat3& R,
                                      const CalibTolerances& tol) {
  // Equal drives across board positions share one outgoing angle.
  std::map<std::pair<double, double>, std::vector<Vec3>> groups;
  for (const auto& board : session.boards) {
    for (const auto* scan : {&board.x_scan, &board.y_scan}) {
      for (const auto& o : *scan) {
        groups[{o.drive.a, o.drive.b}].push_back(
            geom::triangulate(session.rig, o.pixel_left, o.pixel_right, tol.geom));
      }
    }
  }
  std::vector<geom::Ray3> beams;
  double line_rms = 0.0;
  for (auto& [drive, pts] : groups) {
    if (pts.size() < 2) continue;
    geom::LineFit fit = geom::fit_line(pts);
    if (fit.line.direction.dot(R.col(2)) < 0.0) fit.line.direction = -fit.line.direction;
    beams.push_back(fit.line);
    line_rms += fit.rms;
  }
  if (beams.size() < 2) {
    throw Error(ErrorCode::TooFewGroups, "need at least two distinct drives seen on two boards");
  }
  TranslationResult out;
  out.T = geom::intersect_lines(beams, tol.geom);
  out.groups = beams.size();
  out.line_fit_rms = line_rms / static_cast<double>(beams.size());
  double sq = 0.0;
  for (const auto& b : beams) sq += std::pow(b.distance_to(out.T), 2);
  out.bundle_rms = std::sqrt(sq / static_cast<double>(beams.size()));
  return out;
}

Angles target_angles(const geom::SteeringPose& pose, const Vec3& target) {
  const Vec3 d = pose.to_device(target);
  if (!(d.z() > 0.0)) throw Error(ErrorCode::BehindDevice, "target is behind the steering device");
  return optosim::device_angles(d);
}

MappingModel fit_mapping(const CalibrationSession& session, const geom::SteeringPose& pose,
                         const CalibTolerances& tol) {
  const auto n = static_cast<Eigen::Index>(session.spiral.size());
  if (session.spiral.size() < tol.min_spiral) {
    throw Error(ErrorCode::RankDeficient, "spiral scan needs at least nine samples");
  }
  Eigen::MatrixXd A(n, 9);
  Eigen::VectorXd ya(n), yb(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& o = session.spiral[static_cast<std::size_t>(i)];
    const Vec3 p = geom::triangulate(session.rig, o.pixel_left, o.pixel_right, tol.geom);
    const Angles ang = target_angles(pose, p);
    const auto m = monomials(ang.alpha, ang.beta);
    for (int k = 0; k < 9; ++k) A(i, k) = m[static_cast<std::size_t>(k)];
    ya(i) = o.drive.a;
    yb(i) = o.drive.b;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  qr.setThreshold(1e-9);
  if (qr.rank() < 9) {
    throw Error(ErrorCode::RankDeficient, "spiral samples do not span both angular axes");
  }
  const Eigen::VectorXd ca = qr.solve(ya);
  const Eigen::VectorXd cb = qr.solve(yb);
  MappingModel model;
  for (int k = 0; k < 9; ++k) {
    model.m_a[static_cast<std::size_t>(k)] = ca(k);
    model.m_b[static_cast<std::size_t>(k)] = cb(k);
  }
  const double ss = (A * ca - ya).squaredNorm() + (A * cb - yb).squaredNorm();
  model.fit_residual_rms = std::sqrt(ss / (2.0 * static_cast<double>(n)));
  return model;
}

SteeringCalibration calibrate(const CalibrationSession& session, const CalibTolerances& tol) {
  SteeringCalibration out;
  try {
    session.rig.validate();
    for (const auto& board : session.boards) {
      localize(session.rig, board.x_scan, tol.geom);
      localize(session.rig, board.y_scan, tol.geom);
    }
    localize(session.rig, session.spiral, tol.geom);
  } catch (const Error& e) {
    throw StageFailure(1, e);
  }
  try {
    if (session.boards.size() < tol.min_boards) {
      throw Error(ErrorCode::PreconditionViolated, "axis scans need at least two board positions");
    }
    const RotationResult rot = recover_rotation(session, tol);
    const TranslationResult tr = recover_translation(session, rot.R, tol);
    out.pose.R = rot.R;
    out.pose.T = tr.T;
    out.diagnostics.rotation = rot.diagnostics;
    out.diagnostics.beam_groups = tr.groups;
    out.diagnostics.beam_line_rms = tr.line_fit_rms;
    out.diagnostics.beam_bundle_rms = tr.bundle_rms;
  } catch (const StageFailure&) {
    throw;
  } catch (const Error& e) {
    throw StageFailure(2, e);
  }
  try {
    out.mapping = fit_mapping(session, out.pose, tol);
    out.diagnostics.mapping_rms = out.mapping.fit_residual_rms;
  } catch (const Error& e) {
    throw StageFailure(3, e);
  }
  return out;
}

Drive steer_to_point(const SteeringCalibration& calibration, const Vec3& target) {
  const Angles ang = target_angles(calibration.pose, target);
  const Drive d = calibration.mapping.evaluate(ang);
  if (!(std::abs(d.a) <= 1.0) || !(std::abs(d.b) <= 1.0)) {
    throw Error(ErrorCode::DriveOutOfRange, "target needs a drive outside [-1, 1]");
  }
  return d;
}

}  // namespace beamlink::calib
