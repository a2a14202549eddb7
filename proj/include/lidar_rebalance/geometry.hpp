/*
 * Copyright 2026 The lidar-rebalance Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Metric geometry over LiDAR frames: oriented-box membership, bird's-eye-view
// IoU, pinhole projection, semantic lookups, BEV occupancy grids and pillar
// point decoration.

#ifndef LIDAR_REBALANCE_GEOMETRY_HPP_
#define LIDAR_REBALANCE_GEOMETRY_HPP_

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <tuple>
#include <vector>

#include "lidar_rebalance/core.hpp"
#include "lidar_rebalance/errors.hpp"

namespace lidar_rebalance {

// ---------------------------------------------------------------------------
// Oriented boxes
// ---------------------------------------------------------------------------

// Expresses p in the frame of b: translate by -center, rotate by -yaw.
inline Eigen::Vector3d ToBoxFrame(const Point& p, const Box3D& b) {
  const double dx = p.x - b.cx;
  const double dy = p.y - b.cy;
  const double c = std::cos(b.yaw);
  const double s = std::sin(b.yaw);
  return {c * dx + s * dy, -s * dx + c * dy, p.z - b.cz};
}

// Inverse of ToBoxFrame.
inline Eigen::Vector3d FromBoxFrame(const Eigen::Vector3d& local,
                                    const Box3D& b) {
  const double c = std::cos(b.yaw);
  const double s = std::sin(b.yaw);
  return {c * local.x() - s * local.y() + b.cx,
          s * local.x() + c * local.y() + b.cy, local.z() + b.cz};
}

inline bool LocalInBox(const Eigen::Vector3d& local, double l, double w,
                       double h) {
  return std::abs(local.x()) <= 0.5 * l && std::abs(local.y()) <= 0.5 * w &&
         std::abs(local.z()) <= 0.5 * h;
}

// Closed-interval test; points on a face count as inside.
inline bool PointInObb(const Point& p, const Box3D& b) {
  return LocalInBox(ToBoxFrame(p, b), b.l, b.w, b.h);
}

inline PointCloud ExtractPointsInBox(const PointCloud& cloud, const Box3D& b) {
  PointCloud out;
  out.frame_id = cloud.frame_id;
  for (const auto& p : cloud.points) {
    if (PointInObb(p, b)) out.points.push_back(p);
  }
  return out;
}

// The box center dropped to z = 0. Only used to look up the semantic region
// under an object, never as a paste height.
inline Point GroundAnchor(const Box3D& b) { return {b.cx, b.cy, 0.0, 0.0}; }

// ---------------------------------------------------------------------------
// BEV IoU
// ---------------------------------------------------------------------------

using Vec2 = Eigen::Vector2d;
using Polygon = std::vector<Vec2>;

// Footprint corners, counter-clockwise.
inline std::array<Vec2, 4> BevCorners(const Box3D& b) {
  const Vec2 along(std::cos(b.yaw), std::sin(b.yaw));
  const Vec2 across(-along.y(), along.x());
  const Vec2 center(b.cx, b.cy);
  const Vec2 hl = 0.5 * b.l * along;
  const Vec2 hw = 0.5 * b.w * across;
  return {center - hl - hw, center + hl - hw, center + hl + hw,
          center - hl + hw};
}

namespace detail {

inline double Cross(const Vec2& a, const Vec2& b) {
  return a.x() * b.y() - a.y() * b.x();
}

inline double PolygonArea(const Polygon& poly) {
  if (poly.size() < 3) return 0.0;
  double twice = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    twice += Cross(poly[i], poly[(i + 1) % poly.size()]);
  }
  return 0.5 * twice;
}

// Sutherland-Hodgman clipping of `subject` against a convex CCW `clip`.
inline Polygon ClipConvex(Polygon subject, const std::array<Vec2, 4>& clip) {
  for (std::size_t e = 0; e < clip.size() && !subject.empty(); ++e) {
    const Vec2& a = clip[e];
    const Vec2& b = clip[(e + 1) % clip.size()];
    const Vec2 edge = b - a;
    auto side = [&](const Vec2& p) { return Cross(edge, p - a); };

    Polygon output;
    output.reserve(subject.size() + 2);
    for (std::size_t i = 0; i < subject.size(); ++i) {
      const Vec2& cur = subject[i];
      const Vec2& prev = subject[(i + subject.size() - 1) % subject.size()];
      const double s_cur = side(cur);
      const double s_prev = side(prev);
      if (s_cur >= 0.0) {
        if (s_prev < 0.0) {
          output.push_back(prev + (cur - prev) * (s_prev / (s_prev - s_cur)));
        }
        output.push_back(cur);
      } else if (s_prev >= 0.0) {
        output.push_back(prev + (cur - prev) * (s_prev / (s_prev - s_cur)));
      }
    }
    subject = std::move(output);
  }
  return subject;
}

}  // namespace detail

inline double BevArea(const Box3D& b) { return b.l * b.w; }

// Area of the intersection of the two footprints. Collinear or empty
// clipping results yield exactly 0.
inline double BevIntersectionArea(const Box3D& a, const Box3D& b) {
  const auto ca = BevCorners(a);
  const auto cb = BevCorners(b);
  const double reach = 0.5 * (std::hypot(a.l, a.w) + std::hypot(b.l, b.w));
  if (std::hypot(a.cx - b.cx, a.cy - b.cy) > reach) return 0.0;
  const Polygon clipped =
      detail::ClipConvex(Polygon(ca.begin(), ca.end()), cb);
  const double area = detail::PolygonArea(clipped);
  return area > 0.0 ? area : 0.0;
}

// Intersection over union of the yaw-rotated footprints. Arguments are put in
// a canonical order first so that the result is exactly symmetric.
inline double BevIou(const Box3D& a, const Box3D& b) {
  auto key = [](const Box3D& x) {
    return std::tie(x.cx, x.cy, x.l, x.w, x.yaw);
  };
  const Box3D& first = key(a) <= key(b) ? a : b;
  const Box3D& second = key(a) <= key(b) ? b : a;
  const double inter = BevIntersectionArea(first, second);
  if (inter <= 0.0) return 0.0;
  const double uni = BevArea(first) + BevArea(second) - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Camera projection
// ---------------------------------------------------------------------------

struct Pixel {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;  // camera-frame z, meters
};

enum class ProjectionStatus { kVisible, kBehindCamera, kOutOfImage };

struct Projection {
  ProjectionStatus status = ProjectionStatus::kBehindCamera;
  Pixel pixel;  // populated unless kBehindCamera

  bool visible() const noexcept { return status == ProjectionStatus::kVisible; }
};

inline constexpr double kMinCameraDepth = 1e-6;

inline Eigen::Vector3d LidarToCamera(const Eigen::Vector3d& p,
                                     const Calibration& c) {
  return c.lidar_to_camera().topLeftCorner<3, 3>() * p +
         c.lidar_to_camera().topRightCorner<3, 1>();
}

inline Eigen::Vector3d CameraToLidar(const Eigen::Vector3d& p,
                                     const Calibration& c) {
  return c.camera_to_lidar().topLeftCorner<3, 3>() * p +
         c.camera_to_lidar().topRightCorner<3, 1>();
}

inline Projection ProjectToImage(const Point& p, const Calibration& c) {
  const Eigen::Vector3d cam = LidarToCamera({p.x, p.y, p.z}, c);
  Projection out;
  if (cam.z() <= kMinCameraDepth) {
    out.status = ProjectionStatus::kBehindCamera;
    return out;
  }
  const Eigen::Vector3d uvw = c.intrinsic() * cam;
  out.pixel = {uvw.x() / cam.z(), uvw.y() / cam.z(), cam.z()};
  const bool inside = out.pixel.u >= 0.0 && out.pixel.u < c.image_width() &&
                      out.pixel.v >= 0.0 && out.pixel.v < c.image_height();
  out.status =
      inside ? ProjectionStatus::kVisible : ProjectionStatus::kOutOfImage;
  return out;
}

// Point on the pixel ray at the given camera depth, in the LiDAR frame.
inline Point BackProject(const Pixel& px, const Calibration& c) {
  const Eigen::Vector3d ray =
      c.intrinsic().inverse() * Eigen::Vector3d(px.u, px.v, 1.0);
  const Eigen::Vector3d lidar = CameraToLidar(ray * px.depth, c);
  return {lidar.x(), lidar.y(), lidar.z(), 0.0};
}

// ---------------------------------------------------------------------------
// KITTI camera-frame boxes
// ---------------------------------------------------------------------------

// Box as written in KITTI labels: bottom-center location in the rectified
// camera frame, dimensions, and rotation about the camera y axis.
struct CameraBox {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double h = 1.0;
  double w = 1.0;
  double l = 1.0;
  double rotation_y = 0.0;
};

// Heading directions are mapped through the rotation, so the yaw convention
// holds for any extrinsic that keeps the LiDAR ground plane horizontal in the
// camera frame (for KITTI this reduces to yaw = -ry - pi/2).
inline Box3D BoxCameraToLidar(const CameraBox& cb, ClassId class_id,
                              const Calibration& c) {
  const Eigen::Matrix3d cam_to_lidar_rot =
      c.camera_to_lidar().topLeftCorner<3, 3>();
  if (std::abs(cam_to_lidar_rot.determinant()) < 1e-12) {
    throw CalibrationError("camera-to-lidar transform is singular");
  }
  const Eigen::Vector3d bottom = CameraToLidar({cb.x, cb.y, cb.z}, c);
  const Eigen::Vector3d heading_cam(std::cos(cb.rotation_y), 0.0,
                                    -std::sin(cb.rotation_y));
  const Eigen::Vector3d heading = cam_to_lidar_rot * heading_cam;
  Box3D out;
  out.cx = bottom.x();
  out.cy = bottom.y();
  out.cz = bottom.z() + 0.5 * cb.h;
  out.l = cb.l;
  out.w = cb.w;
  out.h = cb.h;
  out.yaw = WrapAngle(std::atan2(heading.y(), heading.x()));
  out.class_id = class_id;
  return out;
}

inline CameraBox BoxLidarToCamera(const Box3D& b, const Calibration& c) {
  const Eigen::Vector3d bottom =
      LidarToCamera({b.cx, b.cy, b.cz - 0.5 * b.h}, c);
  const Eigen::Vector3d heading =
      c.lidar_to_camera().topLeftCorner<3, 3>() *
      Eigen::Vector3d(std::cos(b.yaw), std::sin(b.yaw), 0.0);
  CameraBox out;
  out.x = bottom.x();
  out.y = bottom.y();
  out.z = bottom.z();
  out.h = b.h;
  out.w = b.w;
  out.l = b.l;
  out.rotation_y = WrapAngle(std::atan2(-heading.z(), heading.x()));
  return out;
}

// ---------------------------------------------------------------------------
// Semantic lookup
// ---------------------------------------------------------------------------

enum class LookupStatus { kFound, kBehindCamera, kOutOfImage, kNoPoints };

struct SemanticLookup {
  LookupStatus status = LookupStatus::kNoPoints;
  std::string label;  // normalized semantic name when kFound

  bool found() const noexcept { return status == LookupStatus::kFound; }
};

inline SemanticLookup LookupImageLabel(const Point& anchor,
                                       const SemanticImageMap& map,
                                       const Calibration& calib) {
  if (map.width() != calib.image_width() ||
      map.height() != calib.image_height()) {
    throw ConfigError("semantic map size " + std::to_string(map.width()) +
                      "x" + std::to_string(map.height()) +
                      " differs from calibrated image size " +
                      std::to_string(calib.image_width()) + "x" +
                      std::to_string(calib.image_height()));
  }
  const Projection proj = ProjectToImage(anchor, calib);
  switch (proj.status) {
    case ProjectionStatus::kBehindCamera:
      return {LookupStatus::kBehindCamera, {}};
    case ProjectionStatus::kOutOfImage:
      return {LookupStatus::kOutOfImage, {}};
    case ProjectionStatus::kVisible:
      break;
  }
  const int u = std::min(static_cast<int>(std::floor(proj.pixel.u)),
                         map.width() - 1);
  const int v = std::min(static_cast<int>(std::floor(proj.pixel.v)),
                         map.height() - 1);
  return {LookupStatus::kFound, NormalizeLabel(map.name_at(u, v))};
}

// k-NN majority vote over the semantic points nearest to `anchor` (3D
// Euclidean). Ties go to the tied label owning the nearest point.
inline SemanticLookup LookupPointLabel(const Point& anchor,
                                       const SemanticPointMap& map, int k) {
  if (k < 1) throw ValidationError("k must be >= 1");
  const auto pts = map.points();
  if (pts.empty()) return {LookupStatus::kNoPoints, {}};

  std::vector<std::pair<double, std::size_t>> order(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double dx = pts[i].x - anchor.x;
    const double dy = pts[i].y - anchor.y;
    const double dz = pts[i].z - anchor.z;
    order[i] = {dx * dx + dy * dy + dz * dz, i};
  }
  const std::size_t kk = std::min<std::size_t>(k, pts.size());
  std::partial_sort(order.begin(), order.begin() + kk, order.end());

  // Rank of first appearance breaks ties.
  std::map<std::string, std::pair<int, std::size_t>> votes;
  for (std::size_t r = 0; r < kk; ++r) {
    std::string name =
        NormalizeLabel(map.legend().at(pts[order[r].second].label));
    auto [it, inserted] = votes.try_emplace(std::move(name), 0, r);
    ++it->second.first;
  }
  auto best = votes.begin();
  for (auto it = votes.begin(); it != votes.end(); ++it) {
    const auto& [count, rank] = it->second;
    if (count > best->second.first ||
        (count == best->second.first && rank < best->second.second)) {
      best = it;
    }
  }
  return {LookupStatus::kFound, best->first};
}

// ---------------------------------------------------------------------------
// BEV grids
// ---------------------------------------------------------------------------

// Regular BEV grid. Cell (ix, iy) covers [x_min + ix*s, x_min + (ix+1)*s) and
// likewise in y; storage is row-major with iy as the row.
struct GridSpec {
  double x_min = 0.0;
  double y_min = 0.0;
  double cell_size = 1.0;
  int nx = 1;
  int ny = 1;

  void Validate() const {
    if (!(cell_size > 0.0) || !std::isfinite(cell_size)) {
      throw ValidationError("grid cell size must be positive");
    }
    if (nx <= 0 || ny <= 0) {
      throw ValidationError("grid extents must be positive");
    }
  }

  std::size_t cells() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny);
  }
  std::size_t index(int ix, int iy) const {
    return static_cast<std::size_t>(iy) * nx + ix;
  }
  double center_x(int ix) const { return x_min + (ix + 0.5) * cell_size; }
  double center_y(int iy) const { return y_min + (iy + 0.5) * cell_size; }

  bool Locate(double x, double y, int& ix, int& iy) const {
    const double fx = std::floor((x - x_min) / cell_size);
    const double fy = std::floor((y - y_min) / cell_size);
    if (!(fx >= 0.0 && fx < nx && fy >= 0.0 && fy < ny)) return false;
    ix = static_cast<int>(fx);
    iy = static_cast<int>(fy);
    return true;
  }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

struct OccupancyGrid {
  GridSpec grid;
  std::vector<double> prob;  // row-major, uniform over admissible cells
  std::size_t admissible = 0;

  double at(int ix, int iy) const { return prob[grid.index(ix, iy)]; }
};

namespace detail {

template <typename LabelAt>
OccupancyGrid BuildOccupancy(const GridSpec& grid, ClassId class_id,
                             const ClassCatalog& catalog, LabelAt&& label_at) {
  grid.Validate();
  const auto& associated = catalog.associated_labels(class_id);
  OccupancyGrid out{grid, std::vector<double>(grid.cells(), 0.0), 0};
  std::vector<char> ok(grid.cells(), 0);
  for (int iy = 0; iy < grid.ny; ++iy) {
    for (int ix = 0; ix < grid.nx; ++ix) {
      const Point anchor{grid.center_x(ix), grid.center_y(iy), 0.0, 0.0};
      const SemanticLookup lookup = label_at(anchor);
      if (lookup.found() && associated.contains(lookup.label)) {
        ok[grid.index(ix, iy)] = 1;
        ++out.admissible;
      }
    }
  }
  if (out.admissible > 0) {
    const double p = 1.0 / static_cast<double>(out.admissible);
    for (std::size_t i = 0; i < ok.size(); ++i) {
      if (ok[i]) out.prob[i] = p;
    }
  }
  return out;
}

}  // namespace detail

// A cell is admissible when the semantic label under its center (ground
// anchor at z = 0) is associated with the class.
inline OccupancyGrid BuildOccupancyGrid(const SemanticImageMap& map,
                                        const Calibration& calib,
                                        ClassId class_id,
                                        const ClassCatalog& catalog,
                                        const GridSpec& grid) {
  return detail::BuildOccupancy(grid, class_id, catalog, [&](const Point& a) {
    return LookupImageLabel(a, map, calib);
  });
}

inline OccupancyGrid BuildOccupancyGrid(const SemanticPointMap& map, int k,
                                        ClassId class_id,
                                        const ClassCatalog& catalog,
                                        const GridSpec& grid) {
  return detail::BuildOccupancy(grid, class_id, catalog, [&](const Point& a) {
    return LookupPointLabel(a, map, k);
  });
}

// ---------------------------------------------------------------------------
// Pillars
// ---------------------------------------------------------------------------

// A point decorated with its offsets to the pillar's point mean (xc, yc, zc)
// and to the pillar's BEV center (xp, yp). Offsets are signed.
struct PillarPoint {
  double x, y, z, intensity;
  double xc, yc, zc;
  double xp, yp;
};

struct Pillar {
  int ix = 0;
  int iy = 0;
  std::vector<PillarPoint> points;
};

struct PillarGrid {
  GridSpec grid;
  std::vector<Pillar> pillars;  // non-empty pillars, ordered by grid index
  std::size_t dropped = 0;      // points outside the grid extents

  std::size_t point_count() const {
    std::size_t n = 0;
    for (const auto& p : pillars) n += p.points.size();
    return n;
  }
};

inline PillarGrid Pillarize(const PointCloud& cloud, const GridSpec& grid) {
  grid.Validate();
  PillarGrid out{grid, {}, 0};
  std::map<std::size_t, std::vector<const Point*>> members;
  for (const auto& p : cloud.points) {
    int ix = 0;
    int iy = 0;
    if (!grid.Locate(p.x, p.y, ix, iy)) {
      ++out.dropped;
      continue;
    }
    members[grid.index(ix, iy)].push_back(&p);
  }
  out.pillars.reserve(members.size());
  for (const auto& [index, pts] : members) {
    Pillar pillar;
    pillar.ix = static_cast<int>(index % grid.nx);
    pillar.iy = static_cast<int>(index / grid.nx);
    double mx = 0.0, my = 0.0, mz = 0.0;
    for (const Point* p : pts) {
      mx += p->x;
      my += p->y;
      mz += p->z;
    }
    const double n = static_cast<double>(pts.size());
    mx /= n;
    my /= n;
    mz /= n;
    const double px = grid.center_x(pillar.ix);
    const double py = grid.center_y(pillar.iy);
    pillar.points.reserve(pts.size());
    for (const Point* p : pts) {
      pillar.points.push_back({p->x, p->y, p->z, p->intensity, p->x - mx,
                               p->y - my, p->z - mz, p->x - px, p->y - py});
    }
    out.pillars.push_back(std::move(pillar));
  }
  return out;
}

}  // namespace lidar_rebalance

#endif  // LIDAR_REBALANCE_GEOMETRY_HPP_
