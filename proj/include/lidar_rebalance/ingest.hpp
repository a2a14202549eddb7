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

// Readers and writers for KITTI-format artifacts (velodyne scans, label_2,
// calib), the semantic map containers, and per-class dataset statistics.
//
// Velodyne scans are little-endian float32 quadruples (x, y, z, reflectance).
// Semantic image maps use an 8-byte magic "LRBSEM01", u32 width, u32 height
// (little-endian) and a row-major u8 label grid; semantic point maps use
// "LRBSPT01", a u32 point count and 13-byte records (f32 x, y, z, u8 label).
// Both carry a sidecar text legend of "<id> <name>" lines.

#ifndef LIDAR_REBALANCE_INGEST_HPP_
#define LIDAR_REBALANCE_INGEST_HPP_

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "lidar_rebalance/core.hpp"
#include "lidar_rebalance/errors.hpp"
#include "lidar_rebalance/geometry.hpp"

namespace lidar_rebalance {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Byte helpers
// ---------------------------------------------------------------------------

namespace detail {

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian platforms are not supported");

inline std::uint32_t ToLittle(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return ((v & 0xffU) << 24) | ((v & 0xff00U) << 8) | ((v >> 8) & 0xff00U) |
           (v >> 24);
  }
}

inline void PutU32(std::string& out, std::uint32_t v) {
  v = ToLittle(v);
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.append(buf, 4);
}

inline void PutF32(std::string& out, float f) {
  PutU32(out, std::bit_cast<std::uint32_t>(f));
}

inline std::uint32_t GetU32(std::string_view bytes, std::size_t offset) {
  std::uint32_t v;
  std::memcpy(&v, bytes.data() + offset, 4);
  return ToLittle(v);
}

inline float GetF32(std::string_view bytes, std::size_t offset) {
  return std::bit_cast<float>(GetU32(bytes, offset));
}

inline std::vector<std::string_view> SplitWhitespace(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i])))
      ++i;
    const std::size_t start = i;
    while (i < line.size() &&
           !std::isspace(static_cast<unsigned char>(line[i])))
      ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

inline std::vector<std::string_view> SplitLines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

inline std::optional<double> ParseDouble(std::string_view token) {
  // std::from_chars for double is unavailable on some toolchains; strtod on a
  // bounded copy is locale-independent enough for the "C" locale we run in.
  std::string copy(token);
  char* end = nullptr;
  const double v = std::strtod(copy.c_str(), &end);
  if (copy.empty() || end != copy.c_str() + copy.size() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

inline std::optional<long> ParseInt(std::string_view token) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    return std::nullopt;
  }
  return v;
}

// Shortest representation that parses back to the same double.
inline std::string FormatExact(double v) { return fmt::format("{}", v); }

}  // namespace detail

inline std::string ReadFileBytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("failed reading '" + path.string() + "'");
  return data;
}

inline void WriteFileBytes(const fs::path& path, std::string_view data) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) {
      throw IoError("cannot create directory '" +
                    path.parent_path().string() + "': " + ec.message());
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Velodyne scans
// ---------------------------------------------------------------------------

inline constexpr std::size_t kPointRecordBytes = 16;

inline PointCloud ReadPointCloud(std::string_view bytes,
                                 std::string frame_id = {}) {
  if (bytes.size() % kPointRecordBytes != 0) {
    throw FormatError("truncated point record", FormatError::Unit::kByte,
                      bytes.size() - bytes.size() % kPointRecordBytes);
  }
  PointCloud cloud;
  cloud.frame_id = std::move(frame_id);
  cloud.points.reserve(bytes.size() / kPointRecordBytes);
  for (std::size_t off = 0; off < bytes.size(); off += kPointRecordBytes) {
    Point p{detail::GetF32(bytes, off), detail::GetF32(bytes, off + 4),
            detail::GetF32(bytes, off + 8), detail::GetF32(bytes, off + 12)};
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
      throw FormatError("non-finite point coordinate",
                        FormatError::Unit::kByte, off);
    }
    cloud.points.push_back(p);
  }
  return cloud;
}

// Coordinates are narrowed to float32.
inline std::string WritePointCloud(const PointCloud& cloud) {
  std::string out;
  out.reserve(cloud.size() * kPointRecordBytes);
  for (const auto& p : cloud.points) {
    detail::PutF32(out, static_cast<float>(p.x));
    detail::PutF32(out, static_cast<float>(p.y));
    detail::PutF32(out, static_cast<float>(p.z));
    detail::PutF32(out, static_cast<float>(p.intensity));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Calibration
// ---------------------------------------------------------------------------

inline constexpr int kDefaultImageWidth = 1242;
inline constexpr int kDefaultImageHeight = 375;

namespace detail {

inline std::map<std::string, std::vector<double>> ParseCalibKeys(
    std::string_view text) {
  std::map<std::string, std::vector<double>> keys;
  const auto lines = SplitLines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string_view line = lines[i];
    if (SplitWhitespace(line).empty()) continue;
    const std::size_t colon = line.find(':');
    if (colon == std::string_view::npos) {
      throw FormatError("calibration line has no key",
                        FormatError::Unit::kLine, i + 1);
    }
    std::string key(line.substr(0, colon));
    key.erase(0, key.find_first_not_of(" \t"));
    key.erase(key.find_last_not_of(" \t") + 1);
    std::vector<double> values;
    for (auto tok : SplitWhitespace(line.substr(colon + 1))) {
      auto v = ParseDouble(tok);
      if (!v) {
        throw FormatError("calibration value '" + std::string(tok) +
                              "' is not a number",
                          FormatError::Unit::kLine, i + 1);
      }
      values.push_back(*v);
    }
    keys[key] = std::move(values);
  }
  return keys;
}

inline const std::vector<double>& RequireKey(
    const std::map<std::string, std::vector<double>>& keys,
    std::initializer_list<const char*> names, std::size_t count) {
  for (const char* name : names) {
    auto it = keys.find(name);
    if (it == keys.end()) continue;
    if (it->second.size() != count) {
      throw FormatError(fmt::format("calibration key '{}' has {} values, "
                                    "expected {}",
                                    name, it->second.size(), count));
    }
    return it->second;
  }
  throw FormatError(fmt::format("calibration key '{}' is missing",
                                *names.begin()));
}

inline void RequireOrthonormal(const Eigen::Matrix3d& r, const char* name) {
  const double deviation =
      (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (deviation > Calibration::kRotationTolerance || r.determinant() <= 0.0) {
    throw CalibrationError(fmt::format(
        "calibration '{}' rotation is not orthonormal (deviation {:.3g})",
        name, deviation));
  }
}

}  // namespace detail

// Builds the calibration from the KITTI keys P2, R0_rect and Tr_velo_to_cam.
// The intrinsic is the left 3x3 block of P2; P2's fourth column (the
// baseline to camera 2 in the rectified frame) is folded into the extrinsic
// so that projection matches P2 * R0_rect * Tr_velo_to_cam exactly.
inline Calibration ReadCalibration(std::string_view text,
                                   int image_width = kDefaultImageWidth,
                                   int image_height = kDefaultImageHeight) {
  const auto keys = detail::ParseCalibKeys(text);
  const auto& p2 = detail::RequireKey(keys, {"P2"}, 12);
  const auto& r0 = detail::RequireKey(keys, {"R0_rect", "R_rect"}, 9);
  const auto& tr =
      detail::RequireKey(keys, {"Tr_velo_to_cam", "Tr_velo_cam"}, 12);

  Eigen::Matrix3d intrinsic;
  Eigen::Vector3d p2_offset;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) intrinsic(r, c) = p2[r * 4 + c];
    p2_offset(r) = p2[r * 4 + 3];
  }
  Eigen::Matrix3d rect;
  for (int i = 0; i < 9; ++i) rect(i / 3, i % 3) = r0[i];
  Eigen::Matrix4d velo_to_cam = Eigen::Matrix4d::Identity();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) velo_to_cam(r, c) = tr[r * 4 + c];
  }
  detail::RequireOrthonormal(rect, "R0_rect");
  detail::RequireOrthonormal(velo_to_cam.topLeftCorner<3, 3>(),
                             "Tr_velo_to_cam");
  if (!(intrinsic(0, 0) > 0.0 && intrinsic(1, 1) > 0.0)) {
    throw FormatError("calibration 'P2' has non-positive focal entries");
  }

  Eigen::Matrix4d rect4 = Eigen::Matrix4d::Identity();
  rect4.topLeftCorner<3, 3>() = rect;
  Eigen::Matrix4d baseline = Eigen::Matrix4d::Identity();
  baseline.topRightCorner<3, 1>() = intrinsic.inverse() * p2_offset;
  const Eigen::Matrix4d lidar_to_camera = baseline * rect4 * velo_to_cam;
  try {
    return Calibration(intrinsic, lidar_to_camera, image_width, image_height);
  } catch (const CalibrationError& e) {
    throw FormatError(std::string("invalid calibration: ") + e.what());
  }
}

// Writes P2 = [K | 0], R0_rect = I and Tr_velo_to_cam = lidar_to_camera; the
// result reads back to the same Calibration.
inline std::string WriteCalibration(const Calibration& c) {
  std::string out = "P2:";
  for (int r = 0; r < 3; ++r) {
    for (int col = 0; col < 4; ++col) {
      out += ' ';
      out += detail::FormatExact(col < 3 ? c.intrinsic()(r, col) : 0.0);
    }
  }
  out += "\nR0_rect: 1 0 0 0 1 0 0 0 1\nTr_velo_to_cam:";
  for (int r = 0; r < 3; ++r) {
    for (int col = 0; col < 4; ++col) {
      out += ' ';
      out += detail::FormatExact(c.lidar_to_camera()(r, col));
    }
  }
  out += '\n';
  return out;
}

// ---------------------------------------------------------------------------
// Labels
// ---------------------------------------------------------------------------

// One line of a KITTI label_2 file.
struct KittiLabel {
  std::string type;
  double truncation = 0.0;
  int occlusion = 0;
  double alpha = 0.0;
  std::array<double, 4> bbox{};  // left, top, right, bottom (pixels)
  CameraBox box;
  std::size_t line = 0;  // 1-based
};

inline std::vector<KittiLabel> ParseKittiLabels(std::string_view text) {
  std::vector<KittiLabel> out;
  const auto lines = detail::SplitLines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto tokens = detail::SplitWhitespace(lines[i]);
    if (tokens.empty()) continue;
    const std::size_t line_no = i + 1;
    if (tokens.size() != 15 && tokens.size() != 16) {
      throw FormatError(fmt::format("label line has {} fields, expected 15",
                                    tokens.size()),
                        FormatError::Unit::kLine, line_no);
    }
    std::array<double, 14> v{};
    for (std::size_t k = 1; k < 15; ++k) {
      auto d = detail::ParseDouble(tokens[k]);
      if (!d) {
        throw FormatError("label field '" + std::string(tokens[k]) +
                              "' is not a number",
                          FormatError::Unit::kLine, line_no);
      }
      v[k - 1] = *d;
    }
    KittiLabel label;
    label.type = std::string(tokens[0]);
    label.truncation = v[0];
    label.occlusion = static_cast<int>(v[1]);
    label.alpha = v[2];
    label.bbox = {v[3], v[4], v[5], v[6]};
    label.box = {v[10], v[11], v[12], v[7], v[8], v[9], v[13]};
    label.line = line_no;
    out.push_back(std::move(label));
  }
  return out;
}

enum class UnknownClassPolicy { kSkip, kFail };

struct LabelReadResult {
  std::vector<Box3D> boxes;
  std::vector<std::string> skipped_types;  // unknown classes, in file order
};

inline constexpr std::string_view kDontCare = "DontCare";

// One LiDAR-frame box per non-DontCare line whose type is in the catalog.
inline LabelReadResult ReadLabels(
    std::string_view text, const Calibration& calib,
    const ClassCatalog& catalog,
    UnknownClassPolicy policy = UnknownClassPolicy::kSkip) {
  LabelReadResult out;
  for (const auto& label : ParseKittiLabels(text)) {
    if (label.type == kDontCare) continue;
    const auto id = catalog.find(label.type);
    if (!id) {
      if (policy == UnknownClassPolicy::kFail) {
        throw FormatError("unknown class '" + label.type + "'",
                          FormatError::Unit::kLine, label.line);
      }
      out.skipped_types.push_back(label.type);
      continue;
    }
    if (!(label.box.h > 0.0 && label.box.w > 0.0 && label.box.l > 0.0)) {
      throw FormatError("label has non-positive dimensions",
                        FormatError::Unit::kLine, label.line);
    }
    out.boxes.push_back(BoxCameraToLidar(label.box, *id, calib));
  }
  return out;
}

// KITTI label line for a LiDAR-frame box. The 2D box is the image-clipped
// extent of the projected corners, or all zeros when any corner is behind the
// camera.
inline std::string FormatLabelLine(const Box3D& b, const Calibration& calib,
                                   const ClassCatalog& catalog) {
  const CameraBox cb = BoxLidarToCamera(b, calib);
  const double alpha = WrapAngle(cb.rotation_y - std::atan2(cb.x, cb.z));
  std::array<double, 4> bbox{0.0, 0.0, 0.0, 0.0};
  {
    double umin = std::numeric_limits<double>::infinity();
    double vmin = umin;
    double umax = -umin;
    double vmax = -umin;
    bool all_front = true;
    for (int dx : {-1, 1}) {
      for (int dy : {-1, 1}) {
        for (int dz : {-1, 1}) {
          const Eigen::Vector3d corner =
              FromBoxFrame({0.5 * dx * b.l, 0.5 * dy * b.w, 0.5 * dz * b.h}, b);
          const Projection proj =
              ProjectToImage({corner.x(), corner.y(), corner.z(), 0.0}, calib);
          if (proj.status == ProjectionStatus::kBehindCamera) {
            all_front = false;
            continue;
          }
          umin = std::min(umin, proj.pixel.u);
          umax = std::max(umax, proj.pixel.u);
          vmin = std::min(vmin, proj.pixel.v);
          vmax = std::max(vmax, proj.pixel.v);
        }
      }
    }
    if (all_front) {
      const double w = calib.image_width() - 1.0;
      const double h = calib.image_height() - 1.0;
      bbox = {std::clamp(umin, 0.0, w), std::clamp(vmin, 0.0, h),
              std::clamp(umax, 0.0, w), std::clamp(vmax, 0.0, h)};
    }
  }
  return fmt::format(
      "{} 0.00 0 {:.2f} {:.2f} {:.2f} {:.2f} {:.2f} {:.2f} {:.2f} {:.2f} "
      "{:.2f} {:.2f} {:.2f} {:.2f}",
      catalog.name(b.class_id), alpha, bbox[0], bbox[1], bbox[2], bbox[3],
      cb.h, cb.w, cb.l, cb.x, cb.y, cb.z, cb.rotation_y);
}

// ---------------------------------------------------------------------------
// Semantic maps
// ---------------------------------------------------------------------------

inline constexpr std::string_view kSemanticImageMagic = "LRBSEM01";
inline constexpr std::string_view kSemanticPointMagic = "LRBSPT01";
inline constexpr std::size_t kSemanticPointRecordBytes = 13;

inline Legend ParseLegend(std::string_view text) {
  Legend legend;
  const auto lines = detail::SplitLines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string_view line = lines[i];
    const auto tokens = detail::SplitWhitespace(line);
    if (tokens.empty()) continue;
    const auto id = detail::ParseInt(tokens[0]);
    if (!id || *id < 0 || *id > 255 || tokens.size() < 2) {
      throw FormatError("legend line must be '<id 0-255> <name>'",
                        FormatError::Unit::kLine, i + 1);
    }
    std::string name(line.substr(
        static_cast<std::size_t>(tokens[1].data() - line.data())));
    name.erase(name.find_last_not_of(" \t") + 1);
    if (!legend.emplace(static_cast<LabelId>(*id), name).second) {
      throw FormatError("duplicate legend id " + std::to_string(*id),
                        FormatError::Unit::kLine, i + 1);
    }
  }
  return legend;
}

inline std::string WriteLegend(const Legend& legend) {
  std::string out;
  for (const auto& [id, name] : legend) {
    out += std::to_string(id);
    out += ' ';
    out += name;
    out += '\n';
  }
  return out;
}

inline SemanticImageMap ReadSemanticImageMap(std::string_view bytes,
                                             std::string_view legend_text) {
  constexpr std::size_t kHeader = 16;
  if (bytes.size() < kHeader) {
    throw FormatError("semantic map header truncated", FormatError::Unit::kByte,
                      bytes.size());
  }
  if (bytes.substr(0, 8) != kSemanticImageMagic) {
    throw FormatError("bad semantic map magic", FormatError::Unit::kByte, 0);
  }
  const std::uint32_t width = detail::GetU32(bytes, 8);
  const std::uint32_t height = detail::GetU32(bytes, 12);
  const std::uint64_t expected =
      static_cast<std::uint64_t>(width) * static_cast<std::uint64_t>(height);
  if (bytes.size() - kHeader != expected) {
    throw FormatError(fmt::format("semantic map payload is {} bytes, header "
                                  "declares {}x{}",
                                  bytes.size() - kHeader, width, height),
                      FormatError::Unit::kByte, kHeader);
  }
  Legend legend = ParseLegend(legend_text);
  std::vector<LabelId> labels(bytes.begin() + kHeader, bytes.end());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!legend.contains(labels[i])) {
      throw FormatError(
          fmt::format("label id {} has no legend entry", labels[i]),
          FormatError::Unit::kByte, kHeader + i);
    }
  }
  if (width == 0 || height == 0) {
    throw FormatError("semantic map has zero extent");
  }
  return SemanticImageMap(static_cast<int>(width), static_cast<int>(height),
                          std::move(labels), std::move(legend));
}

inline std::string WriteSemanticImageMap(const SemanticImageMap& map) {
  std::string out(kSemanticImageMagic);
  detail::PutU32(out, static_cast<std::uint32_t>(map.width()));
  detail::PutU32(out, static_cast<std::uint32_t>(map.height()));
  out.append(map.labels().begin(), map.labels().end());
  return out;
}

inline SemanticPointMap ReadSemanticPointMap(std::string_view bytes,
                                             std::string_view legend_text) {
  constexpr std::size_t kHeader = 12;
  if (bytes.size() < kHeader) {
    throw FormatError("semantic point map header truncated",
                      FormatError::Unit::kByte, bytes.size());
  }
  if (bytes.substr(0, 8) != kSemanticPointMagic) {
    throw FormatError("bad semantic point map magic", FormatError::Unit::kByte,
                      0);
  }
  const std::uint32_t count = detail::GetU32(bytes, 8);
  if (bytes.size() - kHeader !=
      static_cast<std::uint64_t>(count) * kSemanticPointRecordBytes) {
    throw FormatError("semantic point map payload does not match count",
                      FormatError::Unit::kByte, kHeader);
  }
  Legend legend = ParseLegend(legend_text);
  std::vector<SemanticPoint> points;
  points.reserve(count);
  for (std::size_t off = kHeader; off < bytes.size();
       off += kSemanticPointRecordBytes) {
    SemanticPoint p{detail::GetF32(bytes, off), detail::GetF32(bytes, off + 4),
                    detail::GetF32(bytes, off + 8),
                    static_cast<LabelId>(bytes[off + 12])};
    if (!legend.contains(p.label)) {
      throw FormatError(
          fmt::format("label id {} has no legend entry", p.label),
          FormatError::Unit::kByte, off + 12);
    }
    points.push_back(p);
  }
  return SemanticPointMap(std::move(points), std::move(legend));
}

inline std::string WriteSemanticPointMap(const SemanticPointMap& map) {
  std::string out(kSemanticPointMagic);
  detail::PutU32(out, static_cast<std::uint32_t>(map.points().size()));
  for (const auto& p : map.points()) {
    detail::PutF32(out, static_cast<float>(p.x));
    detail::PutF32(out, static_cast<float>(p.y));
    detail::PutF32(out, static_cast<float>(p.z));
    out.push_back(static_cast<char>(p.label));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Frames
// ---------------------------------------------------------------------------

using SemanticSource = std::variant<SemanticImageMap, SemanticPointMap>;

struct FrameBundle {
  std::string frame_id;
  PointCloud cloud;
  std::vector<Box3D> boxes;  // LiDAR frame
  Calibration calib;
  std::optional<SemanticSource> semantic;
  // Label file exactly as read, so unmodified frames write back byte-equal.
  std::string label_text;

  bool has_semantics() const noexcept { return semantic.has_value(); }
};

// Directory layout under a KITTI-style split root.
struct KittiLayout {
  fs::path root;

  fs::path velodyne(const std::string& id) const {
    return root / "velodyne" / (id + ".bin");
  }
  fs::path label(const std::string& id) const {
    return root / "label_2" / (id + ".txt");
  }
  fs::path calib(const std::string& id) const {
    return root / "calib" / (id + ".txt");
  }
  fs::path semantic_image(const std::string& id) const {
    return root / "semantic" / (id + ".sem");
  }
  fs::path semantic_points(const std::string& id) const {
    return root / "semantic_points" / (id + ".spt");
  }
  static fs::path legend_for(fs::path map_path) {
    return map_path.replace_extension(".legend");
  }
};

// Frame ids are the stems of label_2/*.txt, sorted.
inline std::vector<std::string> ListFrameIds(const KittiLayout& layout) {
  const fs::path dir = layout.root / "label_2";
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) {
    throw IoError("label directory '" + dir.string() + "' is not readable");
  }
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") {
      ids.push_back(entry.path().stem().string());
    }
  }
  if (ec) throw IoError("cannot list '" + dir.string() + "': " + ec.message());
  std::sort(ids.begin(), ids.end());
  return ids;
}

struct FrameLoadOptions {
  UnknownClassPolicy unknown_classes = UnknownClassPolicy::kSkip;
  int image_width = kDefaultImageWidth;
  int image_height = kDefaultImageHeight;
  bool load_cloud = true;
  bool load_semantics = true;
};

struct LoadedFrame {
  FrameBundle frame;
  std::vector<std::string> skipped_types;
};

inline std::optional<SemanticSource> LoadSemantics(const KittiLayout& layout,
                                                   const std::string& id) {
  const fs::path image = layout.semantic_image(id);
  if (fs::exists(image)) {
    return SemanticImageMap(
        ReadSemanticImageMap(ReadFileBytes(image),
                             ReadFileBytes(KittiLayout::legend_for(image))));
  }
  const fs::path points = layout.semantic_points(id);
  if (fs::exists(points)) {
    return SemanticPointMap(
        ReadSemanticPointMap(ReadFileBytes(points),
                             ReadFileBytes(KittiLayout::legend_for(points))));
  }
  return std::nullopt;
}

inline LoadedFrame LoadFrame(const KittiLayout& layout, const std::string& id,
                             const ClassCatalog& catalog,
                             const FrameLoadOptions& options = {}) {
  std::optional<SemanticSource> semantic;
  if (options.load_semantics) semantic = LoadSemantics(layout, id);
  int width = options.image_width;
  int height = options.image_height;
  if (semantic) {
    if (const auto* img = std::get_if<SemanticImageMap>(&*semantic)) {
      width = img->width();
      height = img->height();
    }
  }
  // Parse errors name the offending file.
  auto parse = [](const fs::path& path, auto&& fn) {
    try {
      return fn(ReadFileBytes(path));
    } catch (const FormatError& e) {
      throw e.WithContext(path.string());
    }
  };
  Calibration calib = parse(layout.calib(id), [&](const std::string& text) {
    return ReadCalibration(text, width, height);
  });
  std::string label_text = ReadFileBytes(layout.label(id));
  LabelReadResult labels;
  try {
    labels = ReadLabels(label_text, calib, catalog, options.unknown_classes);
  } catch (const FormatError& e) {
    throw e.WithContext(layout.label(id).string());
  }
  PointCloud cloud;
  if (options.load_cloud) {
    cloud = parse(layout.velodyne(id), [&](const std::string& bytes) {
      return ReadPointCloud(bytes, id);
    });
  }
  cloud.frame_id = id;
  return {FrameBundle{id, std::move(cloud), std::move(labels.boxes),
                      std::move(calib), std::move(semantic),
                      std::move(label_text)},
          std::move(labels.skipped_types)};
}

// ---------------------------------------------------------------------------
// Class statistics
// ---------------------------------------------------------------------------

struct ClassStats {
  std::vector<std::string> names;       // catalog order
  std::vector<std::uint64_t> counts;    // labeled boxes per class
  std::vector<double> percentages;      // of all counted boxes
  std::uint64_t total = 0;

  friend bool operator==(const ClassStats&, const ClassStats&) = default;
};

inline ClassStats CountClasses(const ClassCatalog& catalog,
                               std::span<const ClassId> class_ids) {
  ClassStats stats;
  stats.counts.assign(catalog.size(), 0);
  for (ClassId id : class_ids) {
    if (!catalog.contains(id)) {
      throw LookupError("unknown class id " + std::to_string(id));
    }
    ++stats.counts[static_cast<std::size_t>(id)];
  }
  for (const auto& c : catalog.classes()) stats.names.push_back(c.name);
  for (auto n : stats.counts) stats.total += n;
  for (auto n : stats.counts) {
    stats.percentages.push_back(
        stats.total == 0 ? 0.0
                         : 100.0 * static_cast<double>(n) /
                               static_cast<double>(stats.total));
  }
  return stats;
}

// Object-level distribution over all boxes of all frames.
inline ClassStats DatasetStats(std::span<const FrameBundle> frames,
                               const ClassCatalog& catalog) {
  std::vector<ClassId> ids;
  for (const auto& f : frames) {
    for (const auto& b : f.boxes) ids.push_back(b.class_id);
  }
  return CountClasses(catalog, ids);
}

inline std::string StatsCsv(const ClassStats& stats) {
  std::string out = "class,count,percent\n";
  for (std::size_t i = 0; i < stats.names.size(); ++i) {
    out += fmt::format("{},{},{:.6f}\n", stats.names[i], stats.counts[i],
                       stats.percentages[i]);
  }
  return out;
}

inline std::string StatsTable(const ClassStats& stats) {
  std::string out = fmt::format("{:<24}{:>10}{:>10}\n", "class", "count", "%");
  for (std::size_t i = 0; i < stats.names.size(); ++i) {
    out += fmt::format("{:<24}{:>10}{:>10.2f}\n", stats.names[i],
                       stats.counts[i], stats.percentages[i]);
  }
  out += fmt::format("{:<24}{:>10}{:>10.2f}\n", "total", stats.total,
                     stats.total == 0 ? 0.0 : 100.0);
  return out;
}

}  // namespace lidar_rebalance

#endif  // LIDAR_REBALANCE_INGEST_HPP_
