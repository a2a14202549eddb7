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

// In-process entry points for host-language bindings: borrowed point buffers,
// frame augmentation on arrays, and a stateful DWA handle. Results match the
// CLI path bit for bit for the same inputs, config and seed.

#ifndef LIDAR_REBALANCE_INTEROP_HPP_
#define LIDAR_REBALANCE_INTEROP_HPP_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "lidar_rebalance/balance.hpp"
#include "lidar_rebalance/commands.hpp"
#include "lidar_rebalance/config.hpp"
#include "lidar_rebalance/core.hpp"
#include "lidar_rebalance/errors.hpp"
#include "lidar_rebalance/gtdb.hpp"
#include "lidar_rebalance/ingest.hpp"

namespace lidar_rebalance {

// Borrowed row-major N x 4 float buffer (x, y, z, intensity). `row_stride`
// counts floats between row starts.
struct ArrayView {
  const float* data = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 4;
  std::size_t row_stride = 4;

  void Validate() const {
    if (cols != 4) {
      throw ValidationError(fmt::format(
          "point buffer must have 4 columns (x, y, z, intensity), got {}",
          cols));
    }
    if (row_stride < cols) {
      throw ValidationError(fmt::format(
          "point buffer row stride {} is shorter than a row", row_stride));
    }
    if (rows > 0 && data == nullptr) {
      throw ValidationError("point buffer has rows but no data");
    }
  }
};

inline PointCloud CloudFromArray(const ArrayView& view, std::string frame_id) {
  view.Validate();
  PointCloud cloud;
  cloud.frame_id = std::move(frame_id);
  cloud.points.reserve(view.rows);
  for (std::size_t r = 0; r < view.rows; ++r) {
    const float* row = view.data + r * view.row_stride;
    if (!std::isfinite(row[0]) || !std::isfinite(row[1]) ||
        !std::isfinite(row[2])) {
      throw ValidationError(
          fmt::format("point buffer row {} has a non-finite coordinate", r));
    }
    cloud.points.push_back({row[0], row[1], row[2], row[3]});
  }
  return cloud;
}

// Dense N x 4 float32 copy.
inline std::vector<float> CloudToArray(const PointCloud& cloud) {
  std::vector<float> out;
  out.reserve(cloud.size() * 4);
  for (const auto& p : cloud.points) {
    out.push_back(static_cast<float>(p.x));
    out.push_back(static_cast<float>(p.y));
    out.push_back(static_cast<float>(p.z));
    out.push_back(static_cast<float>(p.intensity));
  }
  return out;
}

// Everything about a frame except its points and boxes.
struct FrameContext {
  std::string frame_id;
  Calibration calib;
  std::optional<SemanticSource> semantic;
  std::string label_text;  // original label file, kept verbatim in the output
};

struct ArrayAugmentResult {
  std::vector<float> points;  // N x 4
  std::vector<Box3D> boxes;
  std::string label_text;
  nlohmann::json audit;
  bool skipped = false;
};

inline ArrayAugmentResult AugmentArrays(const ArrayView& points,
                                        std::span<const Box3D> boxes,
                                        const FrameContext& context,
                                        const ProjectConfig& config,
                                        const GtDatabase& db) {
  config.Validate();
  for (const auto& b : boxes) {
    ValidateBox(b);
    if (!config.catalog.contains(b.class_id)) {
      throw LookupError("box class id " + std::to_string(b.class_id) +
                        " is not in the catalog");
    }
  }
  const FrameBundle frame{context.frame_id,
                          CloudFromArray(points, context.frame_id),
                          {boxes.begin(), boxes.end()},
                          context.calib,
                          context.semantic,
                          context.label_text};
  FrameOutcome outcome = AugmentFrameOutcome(frame, db, config);
  return {CloudToArray(outcome.cloud), std::move(outcome.boxes),
          std::move(outcome.label_text), std::move(outcome.audit_json),
          outcome.skipped};
}

// Stateful DWA scheduler fed one iteration at a time.
class DwaHandle {
 public:
  DwaHandle(std::size_t heads, double temperature, int window,
            LossBetas beta = {})
      : scheduler_(heads, DwaConfig{temperature, window}, beta) {}

  // Consumes the losses of `iteration` (strictly increasing across calls)
  // and returns the weights to apply from the next iteration on.
  std::vector<double> Step(std::int64_t iteration,
                           const LossSnapshot& snapshot) {
    if (last_iteration_ && iteration <= *last_iteration_) {
      throw ValidationError(fmt::format(
          "iteration {} arrived after iteration {}", iteration,
          *last_iteration_));
    }
    scheduler_.Observe(snapshot);
    last_iteration_ = iteration;
    return scheduler_.current().alpha;
  }

  const WeightVector& current() const noexcept { return scheduler_.current(); }

 private:
  DwaScheduler scheduler_;
  std::optional<std::int64_t> last_iteration_;
};

}  // namespace lidar_rebalance

#endif  // LIDAR_REBALANCE_INTEROP_HPP_
