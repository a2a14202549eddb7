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

// Contextual ground-truth sampling. Records drawn from the database are
// proposed at candidate poses, filtered by the semantic region under their
// ground anchor and by BEV collision with every box already in the frame,
// then pasted into the point cloud.

#ifndef LIDAR_REBALANCE_SAMPLER_HPP_
#define LIDAR_REBALANCE_SAMPLER_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include "json.hpp"
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "lidar_rebalance/core.hpp"
#include "lidar_rebalance/errors.hpp"
#include "lidar_rebalance/geometry.hpp"
#include "lidar_rebalance/gtdb.hpp"
#include "lidar_rebalance/ingest.hpp"

namespace lidar_rebalance {

using Rng = std::mt19937_64;

// Seed for one frame's random stream; independent of processing order.
inline std::uint64_t DeriveFrameSeed(std::uint64_t global_seed,
                                     std::string_view frame_id) {
  std::string key = fmt::format("{:016x}/", global_seed);
  key.append(frame_id);
  return detail::Fnv1a64(key);
}

enum class ProposalMode { kKeepDonorPose, kOccupancySample };

enum class RejectReason {
  kNonAssociatedRegion,
  kCollision,
  kOffMap,
  kBehindCamera,
};

inline constexpr std::array<RejectReason, 4> kAllRejectReasons = {
    RejectReason::kNonAssociatedRegion, RejectReason::kCollision,
    RejectReason::kOffMap, RejectReason::kBehindCamera};

inline std::string_view ToString(RejectReason r) {
  switch (r) {
    case RejectReason::kNonAssociatedRegion:
      return "non-associated-region";
    case RejectReason::kCollision:
      return "collision";
    case RejectReason::kOffMap:
      return "off-map";
    case RejectReason::kBehindCamera:
      return "behind-camera";
  }
  return "unknown";
}

inline std::string_view ToString(ProposalMode m) {
  return m == ProposalMode::kKeepDonorPose ? "keep_donor_pose"
                                           : "occupancy_sample";
}

inline ProposalMode ParseProposalMode(std::string_view text) {
  const std::string n = NormalizeLabel(text);
  if (n == "keep_donor_pose" || n == "keep-donor-pose" || n == "donor") {
    return ProposalMode::kKeepDonorPose;
  }
  if (n == "occupancy_sample" || n == "occupancy-sample" || n == "occupancy") {
    return ProposalMode::kOccupancySample;
  }
  throw ValidationError("unknown proposal mode '" + std::string(text) + "'");
}

// nullopt means accepted.
using Verdict = std::optional<RejectReason>;

struct SamplerConfig {
  ProposalMode mode = ProposalMode::kKeepDonorPose;
  bool contextual = true;         // semantic filter enabled
  double collision_iou = 0.0;     // tau; any overlap above it rejects
  int knn_k = 5;                  // point-map classifier
  int retry_budget = 10;          // candidates per record, occupancy mode
  bool permissive_off_map = false;
  // KITTI front-camera region.
  GridSpec grid{0.0, -40.0, 0.5, 140, 160};

  void Validate() const {
    if (!(collision_iou >= 0.0 && collision_iou <= 1.0)) {
      throw ValidationError("collision_iou must be in [0, 1]");
    }
    if (knn_k < 1) throw ValidationError("knn_k must be >= 1");
    if (retry_budget < 1) throw ValidationError("retry_budget must be >= 1");
    grid.Validate();
  }
};

struct Placement {
  std::size_t record_id = 0;
  ClassId class_id = 0;
  Pose pose;
  ProposalMode provenance = ProposalMode::kKeepDonorPose;
  Verdict verdict;
  std::size_t num_points = 0;
};

struct ClassAudit {
  std::uint64_t target = 0;
  std::uint64_t drawn = 0;      // records returned by the database query
  std::uint64_t proposals = 0;  // candidate poses evaluated
  std::uint64_t accepted = 0;
  std::map<RejectReason, std::uint64_t> rejections;

  std::uint64_t rejected(RejectReason r) const {
    auto it = rejections.find(r);
    return it == rejections.end() ? 0 : it->second;
  }
  std::uint64_t total_rejected() const {
    std::uint64_t n = 0;
    for (const auto& [r, c] : rejections) n += c;
    return n;
  }

  ClassAudit& operator+=(const ClassAudit& o) {
    target += o.target;
    drawn += o.drawn;
    proposals += o.proposals;
    accepted += o.accepted;
    for (const auto& [r, c] : o.rejections) rejections[r] += c;
    return *this;
  }
};

struct FrameAudit {
  std::string frame_id;
  std::vector<ClassAudit> classes;  // catalog order
  std::uint64_t removed_points = 0;
};

struct AugmentedFrame {
  PointCloud cloud;
  std::vector<Box3D> boxes;  // originals first, then inserted
  std::vector<Placement> inserted;
  FrameAudit audit;
};

// ---------------------------------------------------------------------------
// Proposals
// ---------------------------------------------------------------------------

// Draws a cell index with probability proportional to grid.prob; nullopt for
// an all-zero grid.
template <typename Rng>
std::optional<std::size_t> SampleCell(const OccupancyGrid& grid, Rng& rng) {
  if (grid.admissible == 0) return std::nullopt;
  std::vector<double> cumulative(grid.prob.size());
  std::partial_sum(grid.prob.begin(), grid.prob.end(), cumulative.begin());
  const double total = cumulative.back();
  if (!(total > 0.0)) return std::nullopt;
  std::uniform_real_distribution<double> unit(0.0, total);
  const double r = unit(rng);
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), r);
  std::size_t index = static_cast<std::size_t>(it - cumulative.begin());
  if (index >= cumulative.size()) index = cumulative.size() - 1;
  // Skip zero-probability cells that share a cumulative value.
  while (grid.prob[index] <= 0.0 && index > 0) --index;
  return index;
}

// Uniform yaw in (-pi, pi].
template <typename Rng>
double SampleYaw(Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  return std::numbers::pi - 2.0 * std::numbers::pi * unit(rng);
}

// KeepDonorPose yields the record's source pose. OccupancySample yields up to
// `budget` poses centered on cells drawn from `grid`, at the donor's height
// with uniform yaw; none when the grid has no admissible cell.
template <typename Rng>
std::vector<Pose> ProposePlacements(const GtRecord& record, ProposalMode mode,
                                    const OccupancyGrid* grid, int budget,
                                    Rng& rng) {
  if (mode == ProposalMode::kKeepDonorPose) return {record.source_pose};
  if (grid == nullptr) {
    throw UsageError("occupancy sampling needs an occupancy grid");
  }
  std::vector<Pose> out;
  for (int i = 0; i < budget; ++i) {
    const auto cell = SampleCell(*grid, rng);
    if (!cell) break;
    const int ix = static_cast<int>(*cell % grid->grid.nx);
    const int iy = static_cast<int>(*cell / grid->grid.nx);
    out.push_back({grid->grid.center_x(ix), grid->grid.center_y(iy),
                   record.source_pose.z, SampleYaw(rng)});
  }
  return out;
}

// Grid of admissible cells for a class in a frame. Without semantics (or with
// the semantic filter off) every cell is admissible.
inline OccupancyGrid FrameOccupancy(const FrameBundle& frame, ClassId class_id,
                                    const ClassCatalog& catalog,
                                    const SamplerConfig& config) {
  if (!config.contextual || !frame.semantic) {
    config.grid.Validate();
    OccupancyGrid g{config.grid,
                    std::vector<double>(config.grid.cells(),
                                        1.0 / static_cast<double>(
                                                  config.grid.cells())),
                    config.grid.cells()};
    return g;
  }
  if (const auto* img = std::get_if<SemanticImageMap>(&*frame.semantic)) {
    return BuildOccupancyGrid(*img, frame.calib, class_id, catalog,
                              config.grid);
  }
  return BuildOccupancyGrid(std::get<SemanticPointMap>(*frame.semantic),
                            config.knn_k, class_id, catalog, config.grid);
}

template <typename Rng>
std::vector<Pose> ProposePlacements(const GtRecord& record,
                                    const FrameBundle& frame,
                                    const ClassCatalog& catalog,
                                    const SamplerConfig& config, Rng& rng) {
  if (config.mode == ProposalMode::kKeepDonorPose) {
    return ProposePlacements(record, config.mode, nullptr, 0, rng);
  }
  const OccupancyGrid grid =
      FrameOccupancy(frame, record.class_id, catalog, config);
  return ProposePlacements(record, config.mode, &grid, config.retry_budget,
                           rng);
}

// ---------------------------------------------------------------------------
// Filters
// ---------------------------------------------------------------------------

// Semantic label under the ground anchor of `box` (normalized), or the
// reason it could not be determined.
inline std::variant<std::string, RejectReason> SemanticRegion(
    const Box3D& box, const FrameBundle& frame, int k) {
  if (!frame.semantic) {
    throw ConfigError("frame '" + frame.frame_id +
                      "' has no semantic source for contextual sampling");
  }
  const Point anchor = GroundAnchor(box);
  SemanticLookup lookup;
  if (const auto* img = std::get_if<SemanticImageMap>(&*frame.semantic)) {
    lookup = LookupImageLabel(anchor, *img, frame.calib);
  } else {
    lookup = LookupPointLabel(anchor, std::get<SemanticPointMap>(*frame.semantic),
                              k);
  }
  switch (lookup.status) {
    case LookupStatus::kFound:
      return lookup.label;
    case LookupStatus::kBehindCamera:
      return RejectReason::kBehindCamera;
    case LookupStatus::kOutOfImage:
    case LookupStatus::kNoPoints:
      break;
  }
  return RejectReason::kOffMap;
}

inline Verdict SemanticFilter(const Box3D& box, const FrameBundle& frame,
                              const ClassCatalog& catalog,
                              const SamplerConfig& config) {
  const auto region = SemanticRegion(box, frame, config.knn_k);
  if (const auto* reason = std::get_if<RejectReason>(&region)) {
    if (config.permissive_off_map) return std::nullopt;
    return *reason;
  }
  if (!catalog.associated_labels(box.class_id)
           .contains(std::get<std::string>(region))) {
    return RejectReason::kNonAssociatedRegion;
  }
  return std::nullopt;
}

// Rejects when the BEV IoU with any box in `occupied` exceeds tau.
inline Verdict CollisionFilter(const Box3D& candidate,
                               std::span<const Box3D> occupied, double tau) {
  for (const auto& other : occupied) {
    if (BevIou(candidate, other) > tau) return RejectReason::kCollision;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

// Draws target(class) records per class, keeps the first candidate pose of
// each that passes the semantic filter (when enabled) and the collision
// filter, deletes original points inside the inserted boxes and appends the
// records' points at their new poses.
template <typename Rng>
AugmentedFrame AugmentFrame(const FrameBundle& frame, const GtDatabase& db,
                            const ClassCatalog& catalog,
                            const SamplerConfig& config, Rng& rng) {
  config.Validate();
  db.RequireCompatible(catalog);
  if (config.contextual && !frame.semantic) {
    throw ConfigError("frame '" + frame.frame_id +
                      "' has no semantic source for contextual sampling");
  }

  AugmentedFrame out;
  out.boxes = frame.boxes;
  out.audit.frame_id = frame.frame_id;
  out.audit.classes.assign(catalog.size(), {});

  for (std::size_t ci = 0; ci < catalog.size(); ++ci) {
    const ClassId cls = static_cast<ClassId>(ci);
    ClassAudit& audit = out.audit.classes[ci];
    audit.target = static_cast<std::uint64_t>(catalog.target(cls));
    if (catalog.target(cls) == 0 || !db.has_class(cls)) continue;

    const auto records =
        Query(db, cls, static_cast<std::size_t>(catalog.target(cls)), rng);
    audit.drawn = records.size();
    if (records.empty()) continue;

    std::optional<OccupancyGrid> grid;
    if (config.mode == ProposalMode::kOccupancySample) {
      grid = FrameOccupancy(frame, cls, catalog, config);
    }

    for (const auto& record : records) {
      const auto candidates =
          ProposePlacements(record, config.mode, grid ? &*grid : nullptr,
                            config.retry_budget, rng);
      if (candidates.empty()) {
        ++audit.rejections[RejectReason::kOffMap];
        continue;
      }
      for (const Pose& pose : candidates) {
        ++audit.proposals;
        const Box3D box = record.box_at(pose);
        Verdict verdict;
        if (config.contextual) {
          verdict = SemanticFilter(box, frame, catalog, config);
        }
        if (!verdict) {
          verdict = CollisionFilter(box, out.boxes, config.collision_iou);
        }
        if (verdict) {
          ++audit.rejections[*verdict];
          continue;
        }
        ++audit.accepted;
        out.boxes.push_back(box);
        out.inserted.push_back({record.id, cls,
                                Pose{box.cx, box.cy, box.cz, box.yaw},
                                config.mode, std::nullopt,
                                record.num_points()});
        break;
      }
    }
  }

  const std::span<const Box3D> inserted_boxes(
      out.boxes.data() + frame.boxes.size(),
      out.boxes.size() - frame.boxes.size());
  out.cloud.frame_id = frame.cloud.frame_id;
  out.cloud.points.reserve(frame.cloud.size());
  for (const auto& p : frame.cloud.points) {
    const bool covered =
        std::any_of(inserted_boxes.begin(), inserted_boxes.end(),
                    [&](const Box3D& b) { return PointInObb(p, b); });
    if (covered) {
      ++out.audit.removed_points;
    } else {
      out.cloud.points.push_back(p);
    }
  }
  for (const auto& placement : out.inserted) {
    const auto pts = db.record(placement.record_id).points_at(placement.pose);
    out.cloud.points.insert(out.cloud.points.end(), pts.begin(), pts.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline nlohmann::json ClassAuditJson(const ClassAudit& a) {
  nlohmann::json rejections = nlohmann::json::object();
  for (RejectReason r : kAllRejectReasons) {
    rejections[std::string(ToString(r))] = a.rejected(r);
  }
  return {{"target", a.target},       {"drawn", a.drawn},
          {"proposals", a.proposals}, {"accepted", a.accepted},
          {"rejections", rejections}};
}

inline nlohmann::json AuditJson(const AugmentedFrame& frame,
                                const GtDatabase& db,
                                const ClassCatalog& catalog) {
  nlohmann::json classes = nlohmann::json::object();
  for (std::size_t i = 0; i < frame.audit.classes.size(); ++i) {
    classes[catalog.name(static_cast<ClassId>(i))] =
        ClassAuditJson(frame.audit.classes[i]);
  }
  nlohmann::json inserted = nlohmann::json::array();
  for (const auto& p : frame.inserted) {
    const GtRecord& r = db.record(p.record_id);
    inserted.push_back({{"record_id", p.record_id},
                        {"class", catalog.name(p.class_id)},
                        {"source_frame", r.source_frame},
                        {"source_index", r.source_index},
                        {"pose", {p.pose.x, p.pose.y, p.pose.z, p.pose.yaw}},
                        {"mode", ToString(p.provenance)},
                        {"num_points", p.num_points}});
  }
  return {{"frame", frame.audit.frame_id},
          {"classes", classes},
          {"removed_points", frame.audit.removed_points},
          {"inserted", inserted}};
}

// Label file for an augmented frame: the original text untouched, followed by
// one KITTI line per inserted box.
inline std::string AugmentedLabelText(const FrameBundle& source,
                                      const AugmentedFrame& frame,
                                      const ClassCatalog& catalog) {
  std::string out = source.label_text;
  if (frame.inserted.empty()) return out;
  if (!out.empty() && out.back() != '\n') out += '\n';
  for (std::size_t i = source.boxes.size(); i < frame.boxes.size(); ++i) {
    out += FormatLabelLine(frame.boxes[i], source.calib, catalog);
    out += '\n';
  }
  return out;
}

}  // namespace lidar_rebalance

#endif  // LIDAR_REBALANCE_SAMPLER_HPP_
