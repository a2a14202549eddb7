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

// lidar-rebalance <stats|build-db|augment|dwa-sim> --config <path> [overrides]
//
// Exit codes: 0 success, 1 validation failure, 2 I/O or format failure.
// Log verbosity comes from LIDAR_REBALANCE_LOG (trace, debug, info, warn,
// error, off).

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "lidar_rebalance/commands.hpp"

namespace lr = lidar_rebalance;

namespace {

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<std::string> out;
};

void ConfigureLogging() {
  auto logger = spdlog::stderr_color_mt("lidar-rebalance");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("LIDAR_REBALANCE_LOG")) {
    spdlog::set_level(spdlog::level::from_str(env));
  }
}

lr::ProjectConfig LoadWithOverrides(const Overrides& o) {
  lr::ProjectConfig config = lr::LoadProjectConfig(o.config_path);
  if (o.seed) config.seed = *o.seed;
  if (o.mode) config.sampler.mode = lr::ParseProposalMode(*o.mode);
  if (o.out) {
    const bool db_under_out =
        config.output.database == config.output.dir / "gtdb";
    config.output.dir = *o.out;
    if (db_under_out) config.output.database = config.output.dir / "gtdb";
  }
  config.Validate();
  return config;
}

int Stats(const lr::ProjectConfig& config) {
  const auto report = lr::RunStats(config);
  std::cout << lr::StatsTable(report.stats);
  spdlog::info("{} frames, {} labels outside the catalog skipped",
               report.frames, report.skipped_labels);
  spdlog::info("wrote {}", (config.output.dir / "stats.csv").string());
  return 0;
}

int BuildDb(const lr::ProjectConfig& config) {
  const auto report = lr::RunBuildDb(config);
  std::cout << fmt::format("{:<24}{:>10}{:>10}\n", "class", "records",
                           "skipped");
  for (std::size_t c = 0; c < config.catalog.size(); ++c) {
    std::cout << fmt::format("{:<24}{:>10}{:>10}\n",
                             config.catalog.name(static_cast<int>(c)),
                             report.summary.records[c],
                             report.summary.skipped[c]);
  }
  spdlog::info("{} records from {} frames written to {}", report.records,
               report.frames, config.output.database.string());
  return 0;
}

int Augment(const lr::ProjectConfig& config) {
  const auto report = lr::RunAugment(config);
  std::cout << fmt::format("{:<24}{:>8}{:>10}{:>10}{:>10}{:>10}{:>10}\n",
                           "class", "drawn", "accepted", "region", "collide",
                           "off-map", "behind");
  for (std::size_t c = 0; c < report.classes.size(); ++c) {
    const auto& a = report.classes[c];
    std::cout << fmt::format(
        "{:<24}{:>8}{:>10}{:>10}{:>10}{:>10}{:>10}\n",
        config.catalog.name(static_cast<int>(c)), a.drawn, a.accepted,
        a.rejected(lr::RejectReason::kNonAssociatedRegion),
        a.rejected(lr::RejectReason::kCollision),
        a.rejected(lr::RejectReason::kOffMap),
        a.rejected(lr::RejectReason::kBehindCamera));
  }
  if (report.skipped_frames > 0) {
    spdlog::warn("{} of {} frames had no semantic source and were copied "
                 "unchanged",
                 report.skipped_frames, report.frames);
  }
  spdlog::info("augmented {} frames into {}", report.frames,
               config.output.dir.string());
  return 0;
}

int DwaSim(const lr::ProjectConfig& config) {
  const auto report = lr::RunDwaSim(config);
  const auto& traj = report.trajectory;
  std::size_t clamped = 0;
  for (const auto& step : traj.steps) {
    for (bool c : step.clamped) clamped += c ? 1 : 0;
  }
  if (clamped > 0) {
    spdlog::warn("{} head ratios clamped to 1 (prior loss below 1e-12)",
                 clamped);
  }
  const auto& last = traj.steps.back();
  std::cout << "final weights (timestep " << last.timestep << "):\n";
  for (std::size_t c = 0; c < last.alpha.size(); ++c) {
    std::cout << fmt::format("  {:<22}{:.6f}\n", traj.head_names[c],
                             last.alpha[c]);
  }
  spdlog::info("wrote {}", report.csv_path.string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  ConfigureLogging();
  CLI::App app{"Class-imbalance toolkit for LiDAR 3D detection datasets"};
  app.require_subcommand(1);

  Overrides overrides;
  auto add_common = [&](CLI::App* sub, bool with_mode) {
    sub->add_option("--config", overrides.config_path, "Project config file")
        ->required();
    sub->add_option("--seed", overrides.seed, "Override the global seed");
    sub->add_option("--out", overrides.out, "Override the output directory");
    if (with_mode) {
      sub->add_option("--mode", overrides.mode,
                      "Proposal mode: keep_donor_pose | occupancy_sample");
    }
  };
  auto* stats = app.add_subcommand("stats", "Per-class object statistics");
  auto* build = app.add_subcommand("build-db", "Build the GT database");
  auto* augment = app.add_subcommand("augment", "Contextual GT sampling");
  auto* dwa = app.add_subcommand("dwa-sim", "Simulate DWA weight trajectories");
  add_common(stats, false);
  add_common(build, false);
  add_common(augment, true);
  add_common(dwa, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const lr::ProjectConfig config = LoadWithOverrides(overrides);
    if (stats->parsed()) return Stats(config);
    if (build->parsed()) return BuildDb(config);
    if (augment->parsed()) return Augment(config);
    if (dwa->parsed()) return DwaSim(config);
  } catch (const lr::Error& e) {
    spdlog::error("{}", e.what());
    return e.exit_code();
  } catch (const std::filesystem::filesystem_error& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 1;
}
