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

// Project configuration file (TOML). Relative paths resolve against the
// directory holding the config file.
//
//   seed = 7
//   workers = 4
//   [dataset]  root, image_width, image_height, unknown_classes = "skip"|"fail"
//   [output]   dir, database
//   [catalog]  preset = "kitti"|"nuscenes", or [[catalog.classes]] entries
//              with name, target, min_points, associations
//   [sampler]  mode, contextual, collision_iou, knn_k, retry_budget,
//              permissive_off_map, [sampler.grid] x_min y_min cell_size nx ny
//   [dwa]      temperature, window, loss_csv, [dwa.synthetic] iterations,
//              n_pos, [[dwa.synthetic.heads]] name initial_loss decay_rate noise

#ifndef LIDAR_REBALANCE_CONFIG_HPP_
#define LIDAR_REBALANCE_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <thread>

#include "lidar_rebalance/balance.hpp"
#include "lidar_rebalance/core.hpp"
#include "lidar_rebalance/errors.hpp"
#include "lidar_rebalance/ingest.hpp"
#include "lidar_rebalance/sampler.hpp"
#include "toml.hpp"

namespace lidar_rebalance {

struct DatasetConfig {
  fs::path root;
  int image_width = kDefaultImageWidth;
  int image_height = kDefaultImageHeight;
  UnknownClassPolicy unknown_classes = UnknownClassPolicy::kSkip;
};

struct OutputConfig {
  fs::path dir = "out";
  fs::path database = "out/gtdb";
};

struct DwaSettings {
  DwaConfig scheduler;
  std::optional<fs::path> loss_csv;
  std::optional<SyntheticLossSpec> synthetic;
};

struct ProjectConfig {
  std::uint64_t seed = 0;
  int workers = 1;
  DatasetConfig dataset;
  OutputConfig output;
  ClassCatalog catalog = KittiCatalog();
  SamplerConfig sampler;
  DwaSettings dwa;

  void Validate() const {
    if (workers < 1) throw ValidationError("workers must be >= 1");
    if (dataset.image_width <= 0 || dataset.image_height <= 0) {
      throw ValidationError("image dimensions must be positive");
    }
    sampler.Validate();
    dwa.scheduler.Validate();
    if (dwa.synthetic) {
      dwa.synthetic->Validate();
      for (const auto& h : dwa.synthetic->heads) catalog.id_of(h.name);
    }
  }
};

namespace detail {

template <typename T>
T Get(const toml::node_view<const toml::node>& node, std::string_view key,
      T fallback) {
  const auto value = node[key];
  if (!value) return fallback;
  if (auto v = value.template value<T>()) return *v;
  throw ConfigError("config key '" + std::string(key) + "' has the wrong type");
}

inline fs::path ResolvePath(const fs::path& base, std::string_view raw) {
  fs::path p(raw);
  return p.is_absolute() ? p : base / p;
}

}  // namespace detail

inline ProjectConfig ParseProjectConfig(std::string_view text,
                                        const fs::path& base_dir = ".") {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    throw FormatError("config: " + std::string(e.description()),
                      FormatError::Unit::kLine, e.source().begin.line);
  }
  const toml::node_view<const toml::node> top{root};
  ProjectConfig cfg;
  cfg.seed = static_cast<std::uint64_t>(
      detail::Get<std::int64_t>(top, "seed", 0));
  cfg.workers = static_cast<int>(detail::Get<std::int64_t>(
      top, "workers",
      std::max<unsigned>(1, std::thread::hardware_concurrency())));

  const auto dataset = top["dataset"];
  if (auto r = dataset["root"].value<std::string>()) {
    cfg.dataset.root = detail::ResolvePath(base_dir, *r);
  }
  cfg.dataset.image_width = static_cast<int>(
      detail::Get<std::int64_t>(dataset, "image_width", kDefaultImageWidth));
  cfg.dataset.image_height = static_cast<int>(
      detail::Get<std::int64_t>(dataset, "image_height", kDefaultImageHeight));
  const std::string unknown =
      detail::Get<std::string>(dataset, "unknown_classes", "skip");
  if (unknown == "skip") {
    cfg.dataset.unknown_classes = UnknownClassPolicy::kSkip;
  } else if (unknown == "fail") {
    cfg.dataset.unknown_classes = UnknownClassPolicy::kFail;
  } else {
    throw ValidationError("dataset.unknown_classes must be 'skip' or 'fail'");
  }

  const auto output = top["output"];
  cfg.output.dir = detail::ResolvePath(
      base_dir, detail::Get<std::string>(output, "dir", "out"));
  if (auto db = output["database"].value<std::string>()) {
    cfg.output.database = detail::ResolvePath(base_dir, *db);
  } else {
    cfg.output.database = cfg.output.dir / "gtdb";
  }

  const auto catalog = top["catalog"];
  if (const auto* classes = catalog["classes"].as_array()) {
    cfg.catalog = ClassCatalog::FromToml(*classes);
  } else {
    const std::string preset =
        NormalizeLabel(detail::Get<std::string>(catalog, "preset", "kitti"));
    if (preset == "kitti") {
      cfg.catalog = KittiCatalog();
    } else if (preset == "nuscenes") {
      cfg.catalog = NuScenesCatalog();
    } else {
      throw ValidationError("unknown catalog preset '" + preset + "'");
    }
  }

  const auto sampler = top["sampler"];
  cfg.sampler.mode = ParseProposalMode(
      detail::Get<std::string>(sampler, "mode", "keep_donor_pose"));
  cfg.sampler.contextual = detail::Get<bool>(sampler, "contextual", true);
  cfg.sampler.collision_iou =
      detail::Get<double>(sampler, "collision_iou", 0.0);
  cfg.sampler.knn_k =
      static_cast<int>(detail::Get<std::int64_t>(sampler, "knn_k", 5));
  cfg.sampler.retry_budget =
      static_cast<int>(detail::Get<std::int64_t>(sampler, "retry_budget", 10));
  cfg.sampler.permissive_off_map =
      detail::Get<bool>(sampler, "permissive_off_map", false);
  const auto grid = sampler["grid"];
  cfg.sampler.grid.x_min = detail::Get<double>(grid, "x_min", 0.0);
  cfg.sampler.grid.y_min = detail::Get<double>(grid, "y_min", -40.0);
  cfg.sampler.grid.cell_size = detail::Get<double>(grid, "cell_size", 0.5);
  cfg.sampler.grid.nx =
      static_cast<int>(detail::Get<std::int64_t>(grid, "nx", 140));
  cfg.sampler.grid.ny =
      static_cast<int>(detail::Get<std::int64_t>(grid, "ny", 160));

  const auto dwa = top["dwa"];
  cfg.dwa.scheduler.temperature = detail::Get<double>(dwa, "temperature", 2.0);
  cfg.dwa.scheduler.window = static_cast<int>(detail::Get<std::int64_t>(
      dwa, "window", DwaConfig::kDefaultWindow));
  if (auto csv = dwa["loss_csv"].value<std::string>()) {
    cfg.dwa.loss_csv = detail::ResolvePath(base_dir, *csv);
  }
  if (dwa["synthetic"]) {
    const auto syn = dwa["synthetic"];
    SyntheticLossSpec spec;
    spec.iterations =
        static_cast<int>(detail::Get<std::int64_t>(syn, "iterations", 0));
    spec.n_pos = detail::Get<double>(syn, "n_pos", 1.0);
    if (const auto* heads = syn["heads"].as_array()) {
      for (const auto& node : *heads) {
        const toml::node_view<const toml::node> h{node};
        SyntheticHead head;
        head.name = detail::Get<std::string>(h, "name", "");
        head.initial_loss = detail::Get<double>(h, "initial_loss", 1.0);
        head.decay_rate = detail::Get<double>(h, "decay_rate", 0.0);
        head.noise = detail::Get<double>(h, "noise", 0.0);
        spec.heads.push_back(std::move(head));
      }
    }
    cfg.dwa.synthetic = std::move(spec);
  }

  cfg.Validate();
  return cfg;
}

inline ProjectConfig LoadProjectConfig(const fs::path& path) {
  return ParseProjectConfig(ReadFileBytes(path),
                            path.has_parent_path() ? path.parent_path()
                                                   : fs::path("."));
}

}  // namespace lidar_rebalance

#endif  // LIDAR_REBALANCE_CONFIG_HPP_
