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

// Domain types shared across the toolkit: points, oriented boxes, camera
// calibration, semantic maps and the class catalog that associates object
// classes with the semantic regions they may be placed on.

#ifndef LIDAR_REBALANCE_CORE_HPP_
#define LIDAR_REBALANCE_CORE_HPP_

#include <Eigen/Core>
#include <Eigen/Dense>
#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lidar_rebalance/errors.hpp"
#include "toml.hpp"

namespace lidar_rebalance {

using ClassId = int;
using LabelId = std::uint8_t;

namespace detail {

// 64-bit FNV-1a; used for stable fingerprints and seed derivation.
inline std::uint64_t Fnv1a64(std::string_view bytes,
                             std::uint64_t hash = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

}  // namespace detail

// Lowercases ASCII and strips surrounding whitespace. Semantic names are
// compared in this form everywhere.
inline std::string NormalizeLabel(std::string_view name) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!name.empty() && is_space(name.front())) name.remove_prefix(1);
  while (!name.empty() && is_space(name.back())) name.remove_suffix(1);
  std::string out(name);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  return out;
}

// Wraps an angle into (-pi, pi].
inline double WrapAngle(double radians) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double wrapped = std::fmod(radians, kTwoPi);
  if (wrapped <= -std::numbers::pi) wrapped += kTwoPi;
  if (wrapped > std::numbers::pi) wrapped -= kTwoPi;
  return wrapped;
}

struct Point {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double intensity = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

struct PointCloud {
  std::vector<Point> points;
  std::string frame_id;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }

  friend bool operator==(const PointCloud&, const PointCloud&) = default;
};

// 7-DOF box in the LiDAR frame. (cx, cy, cz) is the geometric center; l runs
// along the heading, w across it, h vertical.
struct Box3D {
  double cx = 0.0;
  double cy = 0.0;
  double cz = 0.0;
  double l = 1.0;
  double w = 1.0;
  double h = 1.0;
  double yaw = 0.0;
  ClassId class_id = 0;

  friend bool operator==(const Box3D&, const Box3D&) = default;
};

inline void ValidateBox(const Box3D& b) {
  if (!(b.l > 0.0 && b.w > 0.0 && b.h > 0.0)) {
    throw ValidationError("box dimensions must be positive");
  }
  if (!std::isfinite(b.cx) || !std::isfinite(b.cy) || !std::isfinite(b.cz) ||
      !std::isfinite(b.yaw)) {
    throw ValidationError("box pose must be finite");
  }
}

// Pinhole camera plus the rigid LiDAR-to-camera transform.
class Calibration {
 public:
  static constexpr double kRotationTolerance = 1e-6;

  Calibration(const Eigen::Matrix3d& intrinsic,
              const Eigen::Matrix4d& lidar_to_camera, int image_width,
              int image_height)
      : intrinsic_(intrinsic),
        lidar_to_camera_(lidar_to_camera),
        image_width_(image_width),
        image_height_(image_height) {
    if (!(intrinsic(0, 0) > 0.0 && intrinsic(1, 1) > 0.0)) {
      throw CalibrationError("intrinsic focal entries must be positive");
    }
    if (intrinsic.row(2) != Eigen::RowVector3d(0, 0, 1)) {
      throw CalibrationError("intrinsic bottom row must be (0, 0, 1)");
    }
    if (image_width <= 0 || image_height <= 0) {
      throw CalibrationError("image dimensions must be positive");
    }
    if (!lidar_to_camera.allFinite() || !intrinsic.allFinite()) {
      throw CalibrationError("calibration contains non-finite values");
    }
    const Eigen::Matrix3d rotation = lidar_to_camera.topLeftCorner<3, 3>();
    const double deviation =
        (rotation.transpose() * rotation - Eigen::Matrix3d::Identity())
            .cwiseAbs()
            .maxCoeff();
    if (deviation > kRotationTolerance) {
      throw CalibrationError("lidar_to_camera rotation is not orthonormal");
    }
    if (rotation.determinant() <= 0.0) {
      throw CalibrationError("lidar_to_camera rotation has determinant <= 0");
    }
    const Eigen::RowVector4d last_row = lidar_to_camera.row(3);
    if (last_row != Eigen::RowVector4d(0, 0, 0, 1)) {
      throw CalibrationError("lidar_to_camera last row must be (0, 0, 0, 1)");
    }
    // Composed real-world rotations are orthonormal only to ~1e-7; the
    // transpose is not an exact inverse at long range.
    const Eigen::Matrix3d inverse = rotation.inverse();
    camera_to_lidar_.setIdentity();
    camera_to_lidar_.topLeftCorner<3, 3>() = inverse;
    camera_to_lidar_.topRightCorner<3, 1>() =
        -inverse * lidar_to_camera.topRightCorner<3, 1>();
  }

  static Calibration Identity(int image_width, int image_height) {
    return Calibration(Eigen::Matrix3d::Identity(), Eigen::Matrix4d::Identity(),
                       image_width, image_height);
  }

  const Eigen::Matrix3d& intrinsic() const noexcept { return intrinsic_; }
  const Eigen::Matrix4d& lidar_to_camera() const noexcept {
    return lidar_to_camera_;
  }
  const Eigen::Matrix4d& camera_to_lidar() const noexcept {
    return camera_to_lidar_;
  }
  int image_width() const noexcept { return image_width_; }
  int image_height() const noexcept { return image_height_; }

 private:
  Eigen::Matrix3d intrinsic_;
  Eigen::Matrix4d lidar_to_camera_;
  Eigen::Matrix4d camera_to_lidar_;
  int image_width_;
  int image_height_;
};

using Legend = std::map<LabelId, std::string>;

// Row-major 2D segmentation map aligned with the camera image.
class SemanticImageMap {
 public:
  SemanticImageMap(int width, int height, std::vector<LabelId> labels,
                   Legend legend)
      : width_(width),
        height_(height),
        labels_(std::move(labels)),
        legend_(std::move(legend)) {
    if (width <= 0 || height <= 0) {
      throw ValidationError("semantic map dimensions must be positive");
    }
    if (labels_.size() !=
        static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
      throw ValidationError("semantic map payload does not match width*height");
    }
    for (LabelId id : labels_) {
      if (!legend_.contains(id)) {
        throw ValidationError("semantic label id " + std::to_string(id) +
                              " has no legend entry");
      }
    }
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::span<const LabelId> labels() const noexcept { return labels_; }
  const Legend& legend() const noexcept { return legend_; }

  LabelId label_at(int u, int v) const {
    return labels_[static_cast<std::size_t>(v) * width_ + u];
  }
  const std::string& name_at(int u, int v) const {
    return legend_.at(label_at(u, v));
  }

  friend bool operator==(const SemanticImageMap&,
                         const SemanticImageMap&) = default;

 private:
  int width_;
  int height_;
  std::vector<LabelId> labels_;
  Legend legend_;
};

struct SemanticPoint {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  LabelId label = 0;

  friend bool operator==(const SemanticPoint&, const SemanticPoint&) = default;
};

// LiDAR segmentation output: labeled points in the sensor frame.
class SemanticPointMap {
 public:
  SemanticPointMap(std::vector<SemanticPoint> points, Legend legend)
      : points_(std::move(points)), legend_(std::move(legend)) {
    for (const auto& p : points_) {
      if (!legend_.contains(p.label)) {
        throw ValidationError("semantic label id " + std::to_string(p.label) +
                              " has no legend entry");
      }
    }
  }

  std::span<const SemanticPoint> points() const noexcept { return points_; }
  const Legend& legend() const noexcept { return legend_; }
  bool empty() const noexcept { return points_.empty(); }

  friend bool operator==(const SemanticPointMap&,
                         const SemanticPointMap&) = default;

 private:
  std::vector<SemanticPoint> points_;
  Legend legend_;
};

struct ClassSpec {
  std::string name;
  int target = 0;
  std::set<std::string> associations;
  int min_points = 5;
};

// Ordered object classes with per-frame sampling targets and the semantic
// regions each class may be placed on. Class ids are positions in the list.
class ClassCatalog {
 public:
  static constexpr int kDefaultMinPoints = 5;

  explicit ClassCatalog(std::vector<ClassSpec> classes)
      : classes_(std::move(classes)) {
    for (std::size_t i = 0; i < classes_.size(); ++i) {
      ClassSpec& spec = classes_[i];
      if (spec.name.empty()) throw ValidationError("class name is empty");
      if (!by_name_.emplace(spec.name, static_cast<ClassId>(i)).second) {
        throw ValidationError("duplicate class name '" + spec.name + "'");
      }
      if (spec.target < 0) {
        throw ValidationError("class '" + spec.name +
                              "' has a negative sampling target");
      }
      if (spec.min_points < 0) {
        throw ValidationError("class '" + spec.name +
                              "' has a negative min_points");
      }
      std::set<std::string> normalized;
      for (const auto& label : spec.associations) {
        std::string n = NormalizeLabel(label);
        if (!n.empty()) normalized.insert(std::move(n));
      }
      spec.associations = std::move(normalized);
      if (spec.target > 0 && spec.associations.empty()) {
        throw ValidationError("class '" + spec.name +
                              "' has a sampling target but no associated "
                              "semantic labels");
      }
    }
  }

  std::size_t size() const noexcept { return classes_.size(); }
  std::span<const ClassSpec> classes() const noexcept { return classes_; }

  bool contains(ClassId id) const noexcept {
    return id >= 0 && static_cast<std::size_t>(id) < classes_.size();
  }

  const ClassSpec& spec(ClassId id) const {
    if (!contains(id)) {
      throw LookupError("unknown class id " + std::to_string(id));
    }
    return classes_[static_cast<std::size_t>(id)];
  }

  const std::string& name(ClassId id) const { return spec(id).name; }
  int target(ClassId id) const { return spec(id).target; }
  int min_points(ClassId id) const { return spec(id).min_points; }

  std::optional<ClassId> find(std::string_view name) const {
    auto it = by_name_.find(std::string(name));
    if (it == by_name_.end()) return std::nullopt;
    return it->second;
  }

  ClassId id_of(std::string_view name) const {
    auto id = find(name);
    if (!id) throw LookupError("unknown class '" + std::string(name) + "'");
    return *id;
  }

  // Normalized semantic names the class may be placed on.
  const std::set<std::string>& associated_labels(ClassId id) const {
    return spec(id).associations;
  }

  bool is_associated(ClassId id, std::string_view semantic_name) const {
    return associated_labels(id).contains(NormalizeLabel(semantic_name));
  }

  toml::array to_toml_array() const {
    toml::array out;
    for (const auto& c : classes_) {
      toml::array assoc;
      for (const auto& a : c.associations) assoc.push_back(a);
      out.push_back(toml::table{{"name", c.name},
                                {"target", c.target},
                                {"min_points", c.min_points},
                                {"associations", std::move(assoc)}});
    }
    return out;
  }

  // Canonical `[[catalog.classes]]` serialization.
  std::string serialize() const {
    toml::table root{
        {"catalog", toml::table{{"classes", to_toml_array()}}}};
    std::ostringstream os;
    os << toml::toml_formatter(root);
    os << '\n';
    return os.str();
  }

  // Parses the array found at `catalog.classes` (or `classes`) of a table.
  static ClassCatalog FromToml(const toml::array& classes) {
    std::vector<ClassSpec> specs;
    std::size_t index = 0;
    for (const auto& node : classes) {
      const auto* t = node.as_table();
      const std::string where = "catalog.classes[" + std::to_string(index++) +
                                "]";
      if (t == nullptr) throw ConfigError(where + " is not a table");
      ClassSpec spec;
      auto name = (*t)["name"].value<std::string>();
      if (!name) throw ConfigError(where + ".name is missing");
      spec.name = *name;
      spec.target = static_cast<int>((*t)["target"].value_or<int64_t>(0));
      spec.min_points = static_cast<int>(
          (*t)["min_points"].value_or<int64_t>(kDefaultMinPoints));
      if (const auto* assoc = (*t)["associations"].as_array()) {
        for (const auto& a : *assoc) {
          auto s = a.value<std::string>();
          if (!s) throw ConfigError(where + ".associations must be strings");
          spec.associations.insert(*s);
        }
      }
      specs.push_back(std::move(spec));
    }
    return ClassCatalog(std::move(specs));
  }

  static ClassCatalog Parse(std::string_view text) {
    toml::table root;
    try {
      root = toml::parse(text);
    } catch (const toml::parse_error& e) {
      throw FormatError(std::string("catalog: ") +
                            std::string(e.description()),
                        FormatError::Unit::kLine, e.source().begin.line);
    }
    const auto* classes = root["catalog"]["classes"].as_array();
    if (classes == nullptr) throw ConfigError("catalog.classes is missing");
    return FromToml(*classes);
  }

  std::uint64_t fingerprint() const { return detail::Fnv1a64(serialize()); }

  friend bool operator==(const ClassCatalog& a, const ClassCatalog& b) {
    return a.serialize() == b.serialize();
  }

 private:
  std::vector<ClassSpec> classes_;
  std::map<std::string, ClassId> by_name_;
};

// KITTI classes with their associated regions and per-frame sampling targets
// of the SECOND lineage (car 15, pedestrian 10, cyclist 10).
inline ClassCatalog KittiCatalog() {
  return ClassCatalog({
      {"Car", 15, {"road"}, ClassCatalog::kDefaultMinPoints},
      {"Pedestrian", 10, {"sidewalk"}, ClassCatalog::kDefaultMinPoints},
      {"Cyclist", 10, {"sidewalk", "road"}, ClassCatalog::kDefaultMinPoints},
  });
}

// nuScenes detection classes. Targets follow the class-balanced grouping
// sampler defaults.
inline ClassCatalog NuScenesCatalog() {
  const std::set<std::string> drivable{"drivable surface"};
  const std::set<std::string> both{"sidewalk", "drivable surface"};
  constexpr int kMin = ClassCatalog::kDefaultMinPoints;
  return ClassCatalog({
      {"Car", 2, drivable, kMin},
      {"Truck", 3, drivable, kMin},
      {"Bus", 4, drivable, kMin},
      {"Trailer", 6, drivable, kMin},
      {"Construction Vehicle", 7, drivable, kMin},
      {"Pedestrian", 2, {"sidewalk"}, kMin},
      {"Motorcycle", 6, both, kMin},
      {"Bicycle", 6, both, kMin},
      {"Barrier", 2, both, kMin},
      {"Traffic Cone", 2, both, kMin},
  });
}

}  // namespace lidar_rebalance

#endif  // LIDAR_REBALANCE_CORE_HPP_
