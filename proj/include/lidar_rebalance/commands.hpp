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

// The four toolkit commands (stats, build-db, augment, dwa-sim). Each takes a
// validated ProjectConfig, writes its outputs under the configured locations
// and returns a summary; failures surface as lidar_rebalance::Error.

#ifndef LIDAR_REBALANCE_COMMANDS_HPP_
#define LIDAR_REBALANCE_COMMANDS_HPP_

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <functional>
#include <mutex>
#include "json.hpp"
#include <string>
#include <thread>
#include <vector>

#include "lidar_rebalance/balance.hpp"
#include "lidar_rebalance/config.hpp"
#include "lidar_rebalance/core.hpp"
#include "lidar_rebalance/errors.hpp"
#include "lidar_rebalance/gtdb.hpp"
#include "lidar_rebalance/ingest.hpp"
#include "lidar_rebalance/sampler.hpp"

namespace lidar_rebalance {

// Runs fn(i) for i in [0, n) on up to `workers` threads. The first exception
// (lowest index) is rethrown after all workers finish.
inline void ParallelFor(std::size_t n, int workers,
                        const std::function<void(std::size_t)>& fn) {
  const std::size_t threads =
      std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::size_t failed_index = n;
  std::exception_ptr failure;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (i < failed_index) {
            failed_index = i;
            failure = std::current_exception();
          }
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

// ---------------------------------------------------------------------------
// stats
// ---------------------------------------------------------------------------

struct StatsReport {
  ClassStats stats;
  std::size_t frames = 0;
  std::uint64_t skipped_labels = 0;  // labels outside the catalog
};

inline StatsReport RunStats(const ProjectConfig& config) {
  const KittiLayout layout{config.dataset.root};
  StatsReport report;
  const auto ids = ListFrameIds(layout);
  report.frames = ids.size();
  std::vector<ClassId> classes;
  for (const auto& id : ids) {
    for (const auto& label : ParseKittiLabels(ReadFileBytes(layout.label(id)))) {
      if (label.type == kDontCare) continue;
      if (auto cls = config.catalog.find(label.type)) {
        classes.push_back(*cls);
      } else if (config.dataset.unknown_classes == UnknownClassPolicy::kFail) {
        throw FormatError(id + ": unknown class '" + label.type + "'",
                          FormatError::Unit::kLine, label.line);
      } else {
        ++report.skipped_labels;
      }
    }
  }
  report.stats = CountClasses(config.catalog, classes);
  WriteFileBytes(config.output.dir / "stats.csv", StatsCsv(report.stats));
  return report;
}

// ---------------------------------------------------------------------------
// build-db
// ---------------------------------------------------------------------------

struct BuildReport {
  BuildSummary summary;
  std::size_t frames = 0;
  std::size_t records = 0;
};

// Writes into a sibling staging directory and swaps it in on success; the
// staging directory is removed on failure.
inline BuildReport RunBuildDb(const ProjectConfig& config) {
  const KittiLayout layout{config.dataset.root};
  const auto ids = ListFrameIds(layout);
  const std::size_t classes = config.catalog.size();

  std::vector<std::vector<GtRecord>> per_frame(ids.size());
  std::vector<BuildSummary> summaries(
      ids.size(), BuildSummary{std::vector<std::uint64_t>(classes, 0),
                               std::vector<std::uint64_t>(classes, 0)});
  FrameLoadOptions options;
  options.unknown_classes = config.dataset.unknown_classes;
  options.image_width = config.dataset.image_width;
  options.image_height = config.dataset.image_height;
  options.load_semantics = false;
  ParallelFor(ids.size(), config.workers, [&](std::size_t i) {
    const LoadedFrame loaded =
        LoadFrame(layout, ids[i], config.catalog, options);
    per_frame[i] = ExtractRecords(loaded.frame, config.catalog, &summaries[i]);
  });

  BuildReport report;
  report.frames = ids.size();
  report.summary = {std::vector<std::uint64_t>(classes, 0),
                    std::vector<std::uint64_t>(classes, 0)};
  std::vector<GtRecord> records;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t c = 0; c < classes; ++c) {
      report.summary.records[c] += summaries[i].records[c];
      report.summary.skipped[c] += summaries[i].skipped[c];
    }
    std::move(per_frame[i].begin(), per_frame[i].end(),
              std::back_inserter(records));
  }
  std::vector<std::string> names;
  for (const auto& c : config.catalog.classes()) names.push_back(c.name);
  const GtDatabase db(std::move(records), std::move(names),
                      config.catalog.fingerprint());
  report.records = db.size();

  const fs::path target = config.output.database;
  fs::path staging = target;
  staging += ".partial";
  std::error_code ec;
  fs::remove_all(staging, ec);
  try {
    fs::create_directories(staging);
    SaveDatabase(db, staging);
    fs::remove_all(target);
    fs::rename(staging, target);
  } catch (const fs::filesystem_error& e) {
    fs::remove_all(staging, ec);
    throw IoError(std::string("writing database: ") + e.what());
  } catch (...) {
    fs::remove_all(staging, ec);
    throw;
  }
  return report;
}

// ---------------------------------------------------------------------------
// augment
// ---------------------------------------------------------------------------

struct AugmentReport {
  std::size_t frames = 0;
  std::size_t skipped_frames = 0;  // contextual mode, no semantic source
  std::vector<ClassAudit> classes;
  ClassStats before;
  ClassStats after;
  std::uint64_t removed_points = 0;
};

inline nlohmann::json AugmentReportJson(const AugmentReport& r,
                                        const ClassCatalog& catalog) {
  nlohmann::json classes = nlohmann::json::object();
  for (std::size_t i = 0; i < r.classes.size(); ++i) {
    classes[catalog.name(static_cast<ClassId>(i))] = ClassAuditJson(r.classes[i]);
  }
  auto stats_json = [](const ClassStats& s) {
    nlohmann::json out = nlohmann::json::object();
    for (std::size_t i = 0; i < s.names.size(); ++i) {
      out[s.names[i]] = {{"count", s.counts[i]}, {"percent", s.percentages[i]}};
    }
    return out;
  };
  return {{"frames", r.frames},
          {"skipped_frames", r.skipped_frames},
          {"removed_points", r.removed_points},
          {"classes", classes},
          {"class_stats_before", stats_json(r.before)},
          {"class_stats_after", stats_json(r.after)}};
}

// Result of augmenting one frame as written to disk.
struct FrameOutcome {
  bool skipped = false;  // contextual mode without a semantic source
  PointCloud cloud;
  std::vector<Box3D> boxes;
  std::string label_text;
  FrameAudit audit;
  nlohmann::json audit_json;
};

// Augments one frame with the per-frame seed derived from config.seed. In
// contextual mode a frame without semantics is passed through unchanged.
inline FrameOutcome AugmentFrameOutcome(const FrameBundle& frame,
                                        const GtDatabase& db,
                                        const ProjectConfig& config) {
  FrameOutcome out;
  if (config.sampler.contextual && !frame.has_semantics()) {
    out.skipped = true;
    out.cloud = frame.cloud;
    out.boxes = frame.boxes;
    out.label_text = frame.label_text;
    out.audit.frame_id = frame.frame_id;
    out.audit_json = {{"frame", frame.frame_id},
                      {"skipped", true},
                      {"skip_reason", "no semantic source"}};
    return out;
  }
  Rng rng(DeriveFrameSeed(config.seed, frame.frame_id));
  AugmentedFrame augmented =
      AugmentFrame(frame, db, config.catalog, config.sampler, rng);
  out.label_text = AugmentedLabelText(frame, augmented, config.catalog);
  out.audit_json = AuditJson(augmented, db, config.catalog);
  out.audit_json["skipped"] = false;
  out.cloud = std::move(augmented.cloud);
  out.boxes = std::move(augmented.boxes);
  out.audit = std::move(augmented.audit);
  return out;
}

// Output tree: velodyne/, label_2/, calib/, audit/<id>.json and
// audit_summary.json under output.dir.
inline AugmentReport RunAugment(const ProjectConfig& config) {
  const KittiLayout layout{config.dataset.root};
  const KittiLayout out_layout{config.output.dir};
  const auto ids = ListFrameIds(layout);
  const GtDatabase db = LoadDatabase(config.output.database);
  db.RequireCompatible(config.catalog);

  FrameLoadOptions options;
  options.unknown_classes = config.dataset.unknown_classes;
  options.image_width = config.dataset.image_width;
  options.image_height = config.dataset.image_height;

  struct FrameResult {
    bool skipped = false;
    FrameAudit audit;
    std::vector<ClassId> before;
    std::vector<ClassId> after;
  };
  std::vector<FrameResult> results(ids.size());

  ParallelFor(ids.size(), config.workers, [&](std::size_t i) {
    const std::string& id = ids[i];
    const LoadedFrame loaded = LoadFrame(layout, id, config.catalog, options);
    const FrameOutcome outcome = AugmentFrameOutcome(loaded.frame, db, config);
    FrameResult& result = results[i];
    result.skipped = outcome.skipped;
    result.audit = outcome.audit;
    for (const auto& b : loaded.frame.boxes) result.before.push_back(b.class_id);
    for (const auto& b : outcome.boxes) result.after.push_back(b.class_id);
    WriteFileBytes(out_layout.velodyne(id), WritePointCloud(outcome.cloud));
    WriteFileBytes(out_layout.label(id), outcome.label_text);
    WriteFileBytes(out_layout.calib(id), ReadFileBytes(layout.calib(id)));
    WriteFileBytes(config.output.dir / "audit" / (id + ".json"),
                   outcome.audit_json.dump(2) + "\n");
  });

  AugmentReport report;
  report.frames = ids.size();
  report.classes.assign(config.catalog.size(), {});
  std::vector<ClassId> before;
  std::vector<ClassId> after;
  for (const auto& r : results) {
    if (r.skipped) ++report.skipped_frames;
    for (std::size_t c = 0; c < r.audit.classes.size(); ++c) {
      report.classes[c] += r.audit.classes[c];
    }
    report.removed_points += r.audit.removed_points;
    before.insert(before.end(), r.before.begin(), r.before.end());
    after.insert(after.end(), r.after.begin(), r.after.end());
  }
  report.before = CountClasses(config.catalog, before);
  report.after = CountClasses(config.catalog, after);
  WriteFileBytes(config.output.dir / "audit_summary.json",
                 AugmentReportJson(report, config.catalog).dump(2) + "\n");
  return report;
}

// ---------------------------------------------------------------------------
// dwa-sim
// ---------------------------------------------------------------------------

struct DwaReport {
  WeightTrajectory trajectory;
  fs::path csv_path;
};

// Replays a recorded loss CSV when configured, otherwise the synthetic
// generator seeded with the project seed.
inline DwaReport RunDwaSim(const ProjectConfig& config) {
  LossStream stream;
  if (config.dwa.loss_csv) {
    stream = ReadLossCsv(ReadFileBytes(*config.dwa.loss_csv));
  } else if (config.dwa.synthetic) {
    Rng rng(config.seed);
    stream = GenerateLossStream(*config.dwa.synthetic, rng);
  } else {
    throw ConfigError("dwa-sim needs dwa.loss_csv or a [dwa.synthetic] table");
  }
  if (stream.head_names.empty()) {
    throw ValidationError("loss stream has no heads");
  }
  for (const auto& name : stream.head_names) config.catalog.id_of(name);

  DwaReport report;
  report.trajectory =
      RunTrajectory(stream.snapshots, stream.head_names, config.dwa.scheduler);
  report.csv_path = config.output.dir / "dwa_trajectory.csv";
  WriteFileBytes(report.csv_path, TrajectoryCsv(report.trajectory));
  return report;
}

}  // namespace lidar_rebalance

#endif  // LIDAR_REBALANCE_COMMANDS_HPP_
