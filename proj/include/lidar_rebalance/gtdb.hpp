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

// Offline ground-truth object database: every labeled box's interior points,
// stored in the box's own frame so a record can be pasted at any pose with a
// single rigid transform.
//
// On disk a database is a directory holding
//   index.jsonl  one JSON object per record (class, dims, source frame and
//                pose, blob offset/length, num_points)
//   points.blob  concatenated little-endian float32 (x, y, z, intensity)
//   meta.json    format version, catalog fingerprint, per-class counts and
//                FNV-1a checksums of the other two files

#ifndef LIDAR_REBALANCE_GTDB_HPP_
#define LIDAR_REBALANCE_GTDB_HPP_

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "json.hpp"
#include "lidar_rebalance/core.hpp"
#include "lidar_rebalance/errors.hpp"
#include "lidar_rebalance/geometry.hpp"
#include "lidar_rebalance/ingest.hpp"

namespace lidar_rebalance {

// Placement of a box center and heading in the LiDAR frame.
struct Pose {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double yaw = 0.0;

  friend bool operator==(const Pose&, const Pose&) = default;
};

struct GtRecord {
  std::size_t id = 0;
  ClassId class_id = 0;
  double l = 1.0;
  double w = 1.0;
  double h = 1.0;
  std::string source_frame;
  std::size_t source_index = 0;  // box position within the source frame
  Pose source_pose;
  PointCloud points;  // box-local coordinates

  std::size_t num_points() const noexcept { return points.size(); }

  // The record's box at the origin with zero yaw.
  Box3D canonical_box() const { return {0, 0, 0, l, w, h, 0, class_id}; }

  Box3D box_at(const Pose& pose) const {
    return {pose.x, pose.y, pose.z, l, w, h, WrapAngle(pose.yaw), class_id};
  }

  // Record points transformed to `pose`, in storage order.
  std::vector<Point> points_at(const Pose& pose) const {
    const Box3D target = box_at(pose);
    std::vector<Point> out;
    out.reserve(points.size());
    for (const auto& p : points.points) {
      const Eigen::Vector3d g = FromBoxFrame({p.x, p.y, p.z}, target);
      out.push_back({g.x(), g.y(), g.z(), p.intensity});
    }
    return out;
  }

  friend bool operator==(const GtRecord&, const GtRecord&) = default;
};

class GtDatabase {
 public:
  static constexpr int kFormatVersion = 1;

  GtDatabase() = default;

  // Records are re-numbered in (class, source frame, source index) order.
  GtDatabase(std::vector<GtRecord> records,
             std::vector<std::string> class_names,
             std::uint64_t catalog_fingerprint)
      : records_(std::move(records)),
        class_names_(std::move(class_names)),
        catalog_fingerprint_(catalog_fingerprint) {
    std::stable_sort(records_.begin(), records_.end(),
              [](const GtRecord& a, const GtRecord& b) {
                return std::tie(a.class_id, a.source_frame, a.source_index) <
                       std::tie(b.class_id, b.source_frame, b.source_index);
              });
    by_class_.assign(class_names_.size(), {});
    for (std::size_t i = 0; i < records_.size(); ++i) {
      GtRecord& r = records_[i];
      r.id = i;
      if (r.class_id < 0 ||
          static_cast<std::size_t>(r.class_id) >= class_names_.size()) {
        throw ValidationError("record class id " + std::to_string(r.class_id) +
                              " outside the database class list");
      }
      by_class_[static_cast<std::size_t>(r.class_id)].push_back(i);
    }
  }

  std::span<const GtRecord> records() const noexcept { return records_; }
  const std::vector<std::string>& class_names() const noexcept {
    return class_names_;
  }
  std::uint64_t catalog_fingerprint() const noexcept {
    return catalog_fingerprint_;
  }
  std::size_t size() const noexcept { return records_.size(); }

  bool has_class(ClassId id) const noexcept {
    return id >= 0 && static_cast<std::size_t>(id) < class_names_.size();
  }

  std::span<const std::size_t> class_records(ClassId id) const {
    if (!has_class(id)) {
      throw LookupError("class id " + std::to_string(id) +
                        " is not in the database");
    }
    return by_class_[static_cast<std::size_t>(id)];
  }

  std::size_t count(ClassId id) const { return class_records(id).size(); }

  const GtRecord& record(std::size_t id) const {
    if (id >= records_.size()) {
      throw LookupError("record id " + std::to_string(id) + " out of range");
    }
    return records_[id];
  }

  // Database classes must agree with the catalog's leading class ids.
  void RequireCompatible(const ClassCatalog& catalog) const {
    for (std::size_t i = 0; i < class_names_.size(); ++i) {
      if (!catalog.contains(static_cast<ClassId>(i)) ||
          catalog.name(static_cast<ClassId>(i)) != class_names_[i]) {
        throw ConfigError("database class '" + class_names_[i] +
                          "' does not match the catalog class at id " +
                          std::to_string(i));
      }
    }
  }

  friend bool operator==(const GtDatabase&, const GtDatabase&) = default;

 private:
  std::vector<GtRecord> records_;
  std::vector<std::string> class_names_;
  std::uint64_t catalog_fingerprint_ = 0;
  std::vector<std::vector<std::size_t>> by_class_;
};

// ---------------------------------------------------------------------------
// Build
// ---------------------------------------------------------------------------

struct BuildSummary {
  std::vector<std::uint64_t> records;  // per class
  std::vector<std::uint64_t> skipped;  // boxes under min_points, per class
};

struct BuildResult {
  GtDatabase db;
  BuildSummary summary;
};

namespace detail {

// Rounds to float32 and keeps the value on the box side of `half_extent`.
inline double StoreCoordinate(double local, double half_extent) {
  float f = static_cast<float>(local);
  while (std::abs(static_cast<double>(f)) > half_extent) {
    f = std::nextafter(f, 0.0f);
  }
  return f;
}

}  // namespace detail

// Extracts one record per box of a single frame.
inline std::vector<GtRecord> ExtractRecords(const FrameBundle& frame,
                                            const ClassCatalog& catalog,
                                            BuildSummary* summary = nullptr) {
  std::vector<GtRecord> out;
  for (std::size_t bi = 0; bi < frame.boxes.size(); ++bi) {
    const Box3D& box = frame.boxes[bi];
    ValidateBox(box);
    const auto cls = static_cast<std::size_t>(box.class_id);
    GtRecord record;
    record.class_id = box.class_id;
    record.l = box.l;
    record.w = box.w;
    record.h = box.h;
    record.source_frame = frame.frame_id;
    record.source_index = bi;
    record.source_pose = {box.cx, box.cy, box.cz, box.yaw};
    record.points.frame_id = frame.frame_id;
    for (const auto& p : frame.cloud.points) {
      const Eigen::Vector3d local = ToBoxFrame(p, box);
      if (!LocalInBox(local, box.l, box.w, box.h)) continue;
      record.points.points.push_back(
          {detail::StoreCoordinate(local.x(), 0.5 * box.l),
           detail::StoreCoordinate(local.y(), 0.5 * box.w),
           detail::StoreCoordinate(local.z(), 0.5 * box.h),
           static_cast<double>(static_cast<float>(p.intensity))});
    }
    if (record.num_points() <
        static_cast<std::size_t>(catalog.min_points(box.class_id))) {
      if (summary) ++summary->skipped[cls];
      continue;
    }
    if (summary) ++summary->records[cls];
    out.push_back(std::move(record));
  }
  return out;
}

// One record per labeled box holding at least min_points(class) points.
inline BuildResult BuildDatabase(std::span<const FrameBundle> frames,
                                 const ClassCatalog& catalog) {
  BuildSummary summary{std::vector<std::uint64_t>(catalog.size(), 0),
                       std::vector<std::uint64_t>(catalog.size(), 0)};
  std::vector<GtRecord> records;
  for (const auto& frame : frames) {
    auto extracted = ExtractRecords(frame, catalog, &summary);
    std::move(extracted.begin(), extracted.end(), std::back_inserter(records));
  }
  std::vector<std::string> names;
  for (const auto& c : catalog.classes()) names.push_back(c.name);
  return {GtDatabase(std::move(records), std::move(names),
                     catalog.fingerprint()),
          std::move(summary)};
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

struct SerializedDatabase {
  std::string index;  // index.jsonl
  std::string blob;   // points.blob
  std::string meta;   // meta.json

  friend bool operator==(const SerializedDatabase&,
                         const SerializedDatabase&) = default;
};

inline constexpr const char* kIndexFile = "index.jsonl";
inline constexpr const char* kBlobFile = "points.blob";
inline constexpr const char* kMetaFile = "meta.json";
inline constexpr const char* kDatabaseFormat = "lidar-rebalance-gtdb";

inline std::string Hex64(std::uint64_t v) { return fmt::format("{:016x}", v); }

inline SerializedDatabase SerializeDatabase(const GtDatabase& db) {
  using nlohmann::json;
  SerializedDatabase out;
  std::map<std::string, std::uint64_t> counts;
  for (std::size_t c = 0; c < db.class_names().size(); ++c) {
    counts[db.class_names()[c]] = db.count(static_cast<ClassId>(c));
  }
  for (const auto& r : db.records()) {
    const std::size_t offset = out.blob.size();
    for (const auto& p : r.points.points) {
      detail::PutF32(out.blob, static_cast<float>(p.x));
      detail::PutF32(out.blob, static_cast<float>(p.y));
      detail::PutF32(out.blob, static_cast<float>(p.z));
      detail::PutF32(out.blob, static_cast<float>(p.intensity));
    }
    json line = {
        {"id", r.id},
        {"class", db.class_names()[static_cast<std::size_t>(r.class_id)]},
        {"class_id", r.class_id},
        {"dims", {r.l, r.w, r.h}},
        {"source_frame", r.source_frame},
        {"source_index", r.source_index},
        {"source_pose",
         {r.source_pose.x, r.source_pose.y, r.source_pose.z,
          r.source_pose.yaw}},
        {"offset", offset},
        {"length", out.blob.size() - offset},
        {"num_points", r.num_points()},
    };
    out.index += line.dump();
    out.index += '\n';
  }
  json meta = {
      {"format", kDatabaseFormat},
      {"version", GtDatabase::kFormatVersion},
      {"catalog_fingerprint", Hex64(db.catalog_fingerprint())},
      {"classes", db.class_names()},
      {"counts", counts},
      {"num_records", db.size()},
      {"blob_bytes", out.blob.size()},
      {"blob_fnv1a64", Hex64(detail::Fnv1a64(out.blob))},
      {"index_fnv1a64", Hex64(detail::Fnv1a64(out.index))},
  };
  out.meta = meta.dump(2) + "\n";
  return out;
}

inline GtDatabase DeserializeDatabase(const SerializedDatabase& in) {
  using nlohmann::json;
  json meta;
  try {
    meta = json::parse(in.meta);
  } catch (const json::exception& e) {
    throw FormatError(std::string("meta.json: ") + e.what());
  }
  std::vector<std::string> class_names;
  std::uint64_t fingerprint = 0;
  std::size_t num_records = 0;
  std::map<std::string, std::uint64_t> counts;
  try {
    if (meta.at("format").get<std::string>() != kDatabaseFormat) {
      throw FormatError("meta.json: not a ground-truth database");
    }
    if (meta.at("version").get<int>() != GtDatabase::kFormatVersion) {
      throw FormatError(fmt::format(
          "database version {} is not supported (expected {})",
          meta.at("version").get<int>(), GtDatabase::kFormatVersion));
    }
    if (meta.at("blob_fnv1a64").get<std::string>() !=
            Hex64(detail::Fnv1a64(in.blob)) ||
        meta.at("blob_bytes").get<std::uint64_t>() != in.blob.size()) {
      throw FormatError("points.blob checksum mismatch");
    }
    if (meta.at("index_fnv1a64").get<std::string>() !=
        Hex64(detail::Fnv1a64(in.index))) {
      throw FormatError("index.jsonl checksum mismatch");
    }
    class_names = meta.at("classes").get<std::vector<std::string>>();
    const auto hex = meta.at("catalog_fingerprint").get<std::string>();
    const auto [ptr, ec] =
        std::from_chars(hex.data(), hex.data() + hex.size(), fingerprint, 16);
    if (ec != std::errc() || ptr != hex.data() + hex.size()) {
      throw FormatError("meta.json: malformed catalog_fingerprint");
    }
    num_records = meta.at("num_records").get<std::size_t>();
    counts = meta.at("counts").get<std::map<std::string, std::uint64_t>>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("meta.json: ") + e.what());
  }

  std::vector<GtRecord> records;
  const auto lines = detail::SplitLines(in.index);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::size_t line_no = i + 1;
    GtRecord r;
    std::size_t offset = 0;
    std::size_t length = 0;
    std::size_t num_points = 0;
    try {
      const json line = json::parse(lines[i]);
      r.id = line.at("id").get<std::size_t>();
      r.class_id = line.at("class_id").get<ClassId>();
      const auto dims = line.at("dims").get<std::vector<double>>();
      const auto pose = line.at("source_pose").get<std::vector<double>>();
      if (dims.size() != 3 || pose.size() != 4) {
        throw FormatError("dims/source_pose have the wrong arity",
                          FormatError::Unit::kLine, line_no);
      }
      r.l = dims[0];
      r.w = dims[1];
      r.h = dims[2];
      r.source_pose = {pose[0], pose[1], pose[2], pose[3]};
      r.source_frame = line.at("source_frame").get<std::string>();
      r.source_index = line.at("source_index").get<std::size_t>();
      offset = line.at("offset").get<std::size_t>();
      length = line.at("length").get<std::size_t>();
      num_points = line.at("num_points").get<std::size_t>();
      if (r.class_id < 0 ||
          static_cast<std::size_t>(r.class_id) >= class_names.size() ||
          line.at("class").get<std::string>() !=
              class_names[static_cast<std::size_t>(r.class_id)]) {
        throw FormatError("record class does not match meta.json classes",
                          FormatError::Unit::kLine, line_no);
      }
    } catch (const json::exception& e) {
      throw FormatError(std::string("index.jsonl: ") + e.what(),
                        FormatError::Unit::kLine, line_no);
    }
    if (r.id != records.size()) {
      throw FormatError("record ids are not dense", FormatError::Unit::kLine,
                        line_no);
    }
    if (length != num_points * kPointRecordBytes ||
        offset + length > in.blob.size()) {
      throw FormatError("record blob span is inconsistent",
                        FormatError::Unit::kLine, line_no);
    }
    if (!(r.l > 0.0 && r.w > 0.0 && r.h > 0.0)) {
      throw FormatError("record has non-positive dims",
                        FormatError::Unit::kLine, line_no);
    }
    r.points = ReadPointCloud(std::string_view(in.blob).substr(offset, length),
                              r.source_frame);
    for (const auto& p : r.points.points) {
      if (!PointInObb(p, r.canonical_box())) {
        throw FormatError("stored point lies outside its record box",
                          FormatError::Unit::kLine, line_no);
      }
    }
    records.push_back(std::move(r));
  }
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& a = records[i - 1];
    const auto& b = records[i];
    if (!(std::tie(a.class_id, a.source_frame, a.source_index) <
          std::tie(b.class_id, b.source_frame, b.source_index))) {
      throw FormatError("index records are not in canonical order",
                        FormatError::Unit::kLine, i + 1);
    }
  }
  if (records.size() != num_records) {
    throw FormatError("index record count differs from meta.json");
  }
  GtDatabase db(std::move(records), class_names, fingerprint);
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    auto it = counts.find(class_names[c]);
    if (it == counts.end() || it->second != db.count(static_cast<ClassId>(c))) {
      throw FormatError("per-class count for '" + class_names[c] +
                        "' differs from stored records");
    }
  }
  return db;
}

inline void SaveDatabase(const GtDatabase& db, const fs::path& dir) {
  const SerializedDatabase s = SerializeDatabase(db);
  WriteFileBytes(dir / kBlobFile, s.blob);
  WriteFileBytes(dir / kIndexFile, s.index);
  WriteFileBytes(dir / kMetaFile, s.meta);
}

inline GtDatabase LoadDatabase(const fs::path& dir) {
  return DeserializeDatabase({ReadFileBytes(dir / kIndexFile),
                              ReadFileBytes(dir / kBlobFile),
                              ReadFileBytes(dir / kMetaFile)});
}

// ---------------------------------------------------------------------------
// Query
// ---------------------------------------------------------------------------

// n records of one class drawn uniformly without replacement (every record
// when n exceeds the supply), in draw order.
template <typename Rng>
std::vector<GtRecord> Query(const GtDatabase& db, ClassId class_id,
                            std::size_t n, Rng& rng) {
  const auto pool = db.class_records(class_id);
  std::vector<std::size_t> ids(pool.begin(), pool.end());
  const std::size_t take = std::min(n, ids.size());
  std::vector<GtRecord> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, ids.size() - 1);
    std::swap(ids[i], ids[pick(rng)]);
    out.push_back(db.record(ids[i]));
  }
  return out;
}

}  // namespace lidar_rebalance

#endif  // LIDAR_REBALANCE_GTDB_HPP_
