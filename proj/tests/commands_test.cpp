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

#include <gtest/gtest.h>

#include <algorithm>
#include <map>

#include "lidar_rebalance/commands.hpp"
#include "lidar_rebalance/config.hpp"
#include "lidar_rebalance/interop.hpp"
#include "test_util.hpp"

namespace lidar_rebalance {
namespace {

namespace fs = std::filesystem;

// Every regular file under `root`, keyed by relative path.
std::map<std::string, std::string> Snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) {
      out[fs::relative(e.path(), root).generic_string()] =
          ReadFileBytes(e.path());
    }
  }
  return out;
}

std::string CatalogToml(int car, int ped, int cyc) {
  return fmt::format(R"(
[[catalog.classes]]
name = "Car"
target = {}
associations = ["road"]

[[catalog.classes]]
name = "Pedestrian"
target = {}
associations = ["sidewalk"]

[[catalog.classes]]
name = "Cyclist"
target = {}
associations = ["sidewalk", "road"]
)",
                     car, ped, cyc);
}

ProjectConfig CorpusConfig(const fs::path& dataset, const fs::path& out,
                           int car, int ped, int cyc,
                           const std::string& extra = "") {
  return ParseProjectConfig(fmt::format(R"(
seed = 7
workers = 4

[dataset]
root = "{}"
image_width = 320
image_height = 120

[output]
dir = "{}"

[sampler]
mode = "occupancy_sample"
{}
[sampler.grid]
x_min = 0.0
y_min = -20.0
cell_size = 0.5
nx = 120
ny = 80
{})",
                                        dataset.string(), out.string(), extra,
                                        CatalogToml(car, ped, cyc)));
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

TEST(ConfigTest, Defaults) {
  const ProjectConfig c = ParseProjectConfig("", "/base");
  EXPECT_EQ(c.seed, 0u);
  EXPECT_GE(c.workers, 1);
  EXPECT_EQ(c.catalog, KittiCatalog());
  EXPECT_EQ(c.output.dir, fs::path("/base/out"));
  EXPECT_EQ(c.output.database, fs::path("/base/out/gtdb"));
  EXPECT_EQ(c.sampler.mode, ProposalMode::kKeepDonorPose);
  EXPECT_TRUE(c.sampler.contextual);
  EXPECT_EQ(c.sampler.collision_iou, 0.0);
  EXPECT_EQ(c.sampler.knn_k, 5);
  EXPECT_EQ(c.sampler.retry_budget, 10);
  EXPECT_FALSE(c.sampler.permissive_off_map);
  EXPECT_EQ(c.dwa.scheduler.temperature, 2.0);
  EXPECT_EQ(c.dwa.scheduler.window, 50);
  EXPECT_EQ(c.dataset.unknown_classes, UnknownClassPolicy::kSkip);
}

TEST(ConfigTest, FullFile) {
  const ProjectConfig c = ParseProjectConfig(R"(
seed = 42
workers = 3
[dataset]
root = "data/kitti"
unknown_classes = "fail"
[output]
dir = "/abs/out"
database = "db"
[catalog]
preset = "nuScenes"
[sampler]
mode = "occupancy_sample"
contextual = false
collision_iou = 0.1
knn_k = 7
retry_budget = 3
permissive_off_map = true
[dwa]
temperature = 4.0
window = 10
[dwa.synthetic]
iterations = 200
n_pos = 8
heads = [
  { name = "Car", initial_loss = 1.0, decay_rate = 0.01, noise = 0.1 },
  { name = "Bicycle", initial_loss = 2.0 },
]
)",
                                             "/cfg");
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.workers, 3);
  EXPECT_EQ(c.dataset.root, fs::path("/cfg/data/kitti"));
  EXPECT_EQ(c.dataset.unknown_classes, UnknownClassPolicy::kFail);
  EXPECT_EQ(c.output.dir, fs::path("/abs/out"));
  EXPECT_EQ(c.output.database, fs::path("/cfg/db"));
  EXPECT_EQ(c.catalog, NuScenesCatalog());
  EXPECT_EQ(c.sampler.mode, ProposalMode::kOccupancySample);
  EXPECT_FALSE(c.sampler.contextual);
  EXPECT_EQ(c.sampler.collision_iou, 0.1);
  EXPECT_EQ(c.sampler.knn_k, 7);
  EXPECT_EQ(c.sampler.retry_budget, 3);
  EXPECT_TRUE(c.sampler.permissive_off_map);
  EXPECT_EQ(c.dwa.scheduler.temperature, 4.0);
  EXPECT_EQ(c.dwa.scheduler.window, 10);
  ASSERT_TRUE(c.dwa.synthetic);
  EXPECT_EQ(c.dwa.synthetic->iterations, 200);
  ASSERT_EQ(c.dwa.synthetic->heads.size(), 2u);
  EXPECT_EQ(c.dwa.synthetic->heads[1].name, "Bicycle");
  EXPECT_EQ(c.dwa.synthetic->heads[1].initial_loss, 2.0);
}

TEST(ConfigTest, ShippedExampleParses) {
  const ProjectConfig c = LoadProjectConfig(LIDAR_REBALANCE_EXAMPLE_CONFIG);
  EXPECT_EQ(c.catalog, KittiCatalog());
  EXPECT_EQ(c.dataset.image_width, 1242);
  ASSERT_TRUE(c.dwa.synthetic);
  EXPECT_EQ(c.dwa.synthetic->heads.size(), 3u);
}

TEST(ConfigTest, CustomCatalog) {
  const ProjectConfig c = ParseProjectConfig(CatalogToml(1, 2, 3));
  EXPECT_EQ(c.catalog.target(1), 2);
  EXPECT_EQ(c.catalog.associated_labels(2),
            (std::set<std::string>{"road", "sidewalk"}));
  // The catalog's own serialization is itself a valid config.
  EXPECT_EQ(ParseProjectConfig(c.catalog.serialize()).catalog, c.catalog);
}

TEST(ConfigTest, RangeChecks) {
  EXPECT_THROW(ParseProjectConfig("[dwa]\ntemperature = 0.0\n"),
               ValidationError);
  EXPECT_THROW(ParseProjectConfig("[dwa]\nwindow = 0\n"), ValidationError);
  EXPECT_THROW(ParseProjectConfig("[sampler]\ncollision_iou = 1.5\n"),
               ValidationError);
  EXPECT_THROW(ParseProjectConfig("[sampler]\nknn_k = 0\n"), ValidationError);
  EXPECT_THROW(ParseProjectConfig("[sampler]\nmode = \"teleport\"\n"),
               ValidationError);
  EXPECT_THROW(ParseProjectConfig("[sampler.grid]\ncell_size = -1.0\n"),
               ValidationError);
  EXPECT_THROW(ParseProjectConfig("workers = 0\n"), ValidationError);
  EXPECT_THROW(ParseProjectConfig("[catalog]\npreset = \"waymo\"\n"),
               ValidationError);
}

TEST(ConfigTest, UnresolvedClassIsLookupError) {
  EXPECT_THROW(ParseProjectConfig("[dwa.synthetic]\niterations = 10\n"
                                  "heads = [{ name = \"Tram\" }]\n"),
               LookupError);
}

TEST(ConfigTest, TypeAndSyntaxErrors) {
  EXPECT_THROW(ParseProjectConfig("seed = \"seven\"\n"), ConfigError);
  try {
    ParseProjectConfig("seed = 1\n[sampler\n");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.unit(), FormatError::Unit::kLine);
    EXPECT_EQ(e.position(), 2u);
  }
}

TEST(ConfigTest, LoadResolvesAgainstConfigDirectory) {
  testing::ScratchDir dir;
  WriteFileBytes(dir / "conf/project.toml", "[dataset]\nroot = \"data\"\n");
  const ProjectConfig c = LoadProjectConfig(dir / "conf/project.toml");
  EXPECT_EQ(c.dataset.root, dir / "conf/data");
  EXPECT_THROW(LoadProjectConfig(dir / "missing.toml"), IoError);
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

class CommandTest : public ::testing::Test {
 protected:
  void SetUp() override {
    frames_ = testing::StreetCorpus(13, 12);
    testing::WriteDataset(dir_ / "data", frames_, KittiCatalog());
  }

  ProjectConfig Config(int car, int ped, int cyc, const std::string& out = "out",
                       const std::string& extra = "") {
    return CorpusConfig(dir_ / "data", dir_ / out, car, ped, cyc, extra);
  }

  testing::ScratchDir dir_;
  std::vector<FrameBundle> frames_;
};

TEST_F(CommandTest, StatsReproducesCorpusMix) {
  const auto report = RunStats(Config(0, 0, 0));
  const ClassStats direct = DatasetStats(frames_, KittiCatalog());
  EXPECT_EQ(report.frames, frames_.size());
  EXPECT_EQ(report.stats.counts, direct.counts);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_NEAR(report.stats.percentages[c], direct.percentages[c], 0.01);
  }
  EXPECT_EQ(ReadFileBytes(dir_ / "out/stats.csv"), StatsCsv(report.stats));
}

TEST_F(CommandTest, StatsIgnoresFrameNaming) {
  // The same frames written under shuffled ids give the same report.
  auto shuffled = frames_;
  std::mt19937_64 rng(3);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  for (std::size_t i = 0; i < shuffled.size(); ++i) {
    shuffled[i].frame_id = fmt::format("{:06d}", 100 + i);
  }
  testing::WriteDataset(dir_ / "perm", shuffled, KittiCatalog());
  const auto a = RunStats(Config(0, 0, 0));
  const auto b = RunStats(CorpusConfig(dir_ / "perm", dir_ / "out2", 0, 0, 0));
  EXPECT_EQ(a.stats, b.stats);
}

TEST_F(CommandTest, StatsOnEmptyDataset) {
  fs::create_directories(dir_ / "empty/label_2");
  const auto report = RunStats(CorpusConfig(dir_ / "empty", dir_ / "o", 0, 0, 0));
  EXPECT_EQ(report.frames, 0u);
  EXPECT_EQ(report.stats.total, 0u);
}

TEST_F(CommandTest, StatsOnMissingDatasetIsIoError) {
  EXPECT_THROW(RunStats(CorpusConfig(dir_ / "nowhere", dir_ / "o", 0, 0, 0)),
               IoError);
}

TEST_F(CommandTest, BuildDbMatchesInMemoryBuildAndIsDeterministic) {
  ProjectConfig config = Config(0, 0, 0);
  const auto report = RunBuildDb(config);
  const std::string index = ReadFileBytes(config.output.database / kIndexFile);
  // Labels on disk are rounded, so the reference build starts from the
  // frames as loaded back.
  std::vector<FrameBundle> loaded;
  FrameLoadOptions options;
  options.image_width = 320;
  options.image_height = 120;
  options.load_semantics = false;
  const KittiLayout layout{dir_ / "data"};
  for (const auto& id : ListFrameIds(layout)) {
    loaded.push_back(LoadFrame(layout, id, config.catalog, options).frame);
  }
  const auto in_memory = BuildDatabase(loaded, config.catalog);
  EXPECT_EQ(report.records, in_memory.db.size());
  EXPECT_EQ(report.summary.records, in_memory.summary.records);
  EXPECT_TRUE(SerializeDatabase(LoadDatabase(config.output.database)) ==
              SerializeDatabase(in_memory.db));
  config.workers = 1;
  RunBuildDb(config);
  EXPECT_EQ(ReadFileBytes(config.output.database / kIndexFile), index);
  EXPECT_FALSE(fs::exists(config.output.database.string() + ".partial"));
}

TEST_F(CommandTest, BuildDbOnZeroFrames) {
  fs::create_directories(dir_ / "empty/label_2");
  const ProjectConfig config =
      CorpusConfig(dir_ / "empty", dir_ / "o", 0, 0, 0);
  EXPECT_EQ(RunBuildDb(config).records, 0u);
  EXPECT_EQ(LoadDatabase(config.output.database).size(), 0u);
}

TEST_F(CommandTest, BuildDbOneBoxFrame) {
  std::mt19937_64 rng(1);
  std::vector<FrameBundle> one{
      testing::MakeFrame("000000", {testing::CarAt(12, 2)}, rng, 30, 10)};
  testing::WriteDataset(dir_ / "one", one, KittiCatalog());
  const ProjectConfig config = CorpusConfig(dir_ / "one", dir_ / "o", 0, 0, 0);
  EXPECT_EQ(RunBuildDb(config).records, 1u);
  const GtDatabase db = LoadDatabase(config.output.database);
  ASSERT_EQ(db.size(), 1u);
  EXPECT_EQ(db.record(0).num_points(), 30u);
}

TEST_F(CommandTest, BuildDbFailureLeavesNoPartialDirectory) {
  ProjectConfig config = Config(0, 0, 0);
  WriteFileBytes(dir_ / "blocker", "not a directory");
  config.output.database = dir_ / "blocker" / "gtdb";
  EXPECT_THROW(RunBuildDb(config), IoError);
  EXPECT_FALSE(fs::exists(dir_ / "blocker" / "gtdb.partial"));
  EXPECT_EQ(ReadFileBytes(dir_ / "blocker"), "not a directory");
}

TEST_F(CommandTest, AugmentWithZeroTargetsCopiesInputs) {
  const ProjectConfig config = Config(0, 0, 0);
  RunBuildDb(config);
  const auto report = RunAugment(config);
  EXPECT_EQ(report.frames, frames_.size());
  const auto in = Snapshot(dir_ / "data");
  const auto out = Snapshot(dir_ / "out");
  for (const auto& [path, bytes] : in) {
    if (path.starts_with("semantic/")) continue;
    ASSERT_TRUE(out.contains(path)) << path;
    EXPECT_EQ(out.at(path), bytes) << path;
  }
  EXPECT_EQ(report.before, report.after);
}

TEST_F(CommandTest, AugmentIsDeterministicAcrossRunsAndWorkerCounts) {
  ProjectConfig a = Config(4, 6, 6, "run_a");
  a.output.database = dir_ / "db";
  RunBuildDb(a);
  ProjectConfig b = Config(4, 6, 6, "run_b");
  b.output.database = dir_ / "db";
  b.workers = 1;
  RunAugment(a);
  RunAugment(b);
  const auto sa = Snapshot(dir_ / "run_a");
  const auto sb = Snapshot(dir_ / "run_b");
  EXPECT_EQ(sa, sb);
  EXPECT_TRUE(sa.contains("audit_summary.json"));
  EXPECT_TRUE(sa.contains("audit/000003.json"));
  // A different seed changes the output.
  ProjectConfig c = Config(4, 6, 6, "run_c");
  c.output.database = dir_ / "db";
  c.seed = 8;
  RunAugment(c);
  EXPECT_NE(Snapshot(dir_ / "run_c").at("velodyne/000000.bin"),
            sa.at("velodyne/000000.bin"));
}

TEST_F(CommandTest, AugmentRaisesMinorityShares) {
  ProjectConfig config = Config(0, 3, 3);
  RunBuildDb(config);
  const auto report = RunAugment(config);
  EXPECT_GT(report.classes[1].accepted, 0u);
  EXPECT_GT(report.classes[2].accepted, 0u);
  EXPECT_GT(report.after.percentages[1], report.before.percentages[1]);
  EXPECT_GT(report.after.percentages[2], report.before.percentages[2]);
  // Written labels agree with the reported class counts.
  const auto stats = RunStats(CorpusConfig(dir_ / "out", dir_ / "o2", 0, 0, 0));
  EXPECT_EQ(stats.stats.counts, report.after.counts);
}

TEST_F(CommandTest, FramesWithoutSemanticsAreSkippedInContextualMode) {
  fs::remove(KittiLayout{dir_ / "data"}.semantic_image("000002"));
  ProjectConfig config = Config(3, 3, 3);
  RunBuildDb(config);
  const auto report = RunAugment(config);
  EXPECT_EQ(report.skipped_frames, 1u);
  EXPECT_EQ(ReadFileBytes(dir_ / "out/velodyne/000002.bin"),
            ReadFileBytes(dir_ / "data/velodyne/000002.bin"));
  const auto audit = nlohmann::json::parse(
      ReadFileBytes(dir_ / "out/audit/000002.json"));
  EXPECT_TRUE(audit["skipped"].get<bool>());

  ProjectConfig conventional = Config(3, 3, 3, "conv", "contextual = false\n");
  conventional.output.database = config.output.database;
  EXPECT_EQ(RunAugment(conventional).skipped_frames, 0u);
}

TEST_F(CommandTest, AugmentNeedsADatabase) {
  EXPECT_THROW(RunAugment(Config(1, 1, 1)), IoError);
}

TEST_F(CommandTest, DwaSimFromSyntheticSpec) {
  testing::ScratchDir dir;
  const ProjectConfig config = ParseProjectConfig(fmt::format(R"(
seed = 3
[output]
dir = "{}"
[dwa]
temperature = 2.0
window = 20
[dwa.synthetic]
iterations = 400
heads = [
  {{ name = "Car", initial_loss = 1.0, decay_rate = 0.01 }},
  {{ name = "Cyclist", initial_loss = 1.0, decay_rate = 0.002 }},
]
)",
                                                              dir.path().string()));
  const DwaReport report = RunDwaSim(config);
  const auto& steps = report.trajectory.steps;
  ASSERT_EQ(steps.size(), 21u);
  for (std::size_t t = 2; t < steps.size(); ++t) {
    EXPECT_GT(steps[t].alpha[1], 1.0);
    EXPECT_LT(steps[t].alpha[0], 1.0);
  }
  EXPECT_EQ(ReadFileBytes(report.csv_path), TrajectoryCsv(report.trajectory));
}

TEST_F(CommandTest, DwaSimFromLossCsv) {
  testing::ScratchDir dir;
  std::string csv = "iteration,head,loc,cls,dir,n_pos\n";
  for (int i = 0; i < 30; ++i) {
    csv += fmt::format("{},Car,0.5,0.5,0.5,4\n{},Pedestrian,0.5,0.5,0.5,4\n",
                       i, i);
  }
  WriteFileBytes(dir / "loss.csv", csv);
  const std::string base = fmt::format(
      "[output]\ndir = \"{}\"\n[dwa]\nwindow = 10\nloss_csv = \"{}\"\n",
      dir.path().string(), (dir / "loss.csv").string());
  const DwaReport report = RunDwaSim(ParseProjectConfig(base));
  EXPECT_EQ(report.trajectory.steps.size(), 4u);
  for (const auto& s : report.trajectory.steps) {
    EXPECT_EQ(s.alpha, (std::vector<double>{1.0, 1.0}));
  }
  WriteFileBytes(dir / "loss.csv", csv + "30,Car,0.5,bad,0.5,4\n");
  try {
    RunDwaSim(ParseProjectConfig(base));
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.position(), 62u);
  }
  EXPECT_THROW(RunDwaSim(ParseProjectConfig("")), ConfigError);
}

TEST(ParallelForTest, RethrowsLowestIndexFailure) {
  std::vector<int> hits(100, 0);
  try {
    ParallelFor(100, 8, [&](std::size_t i) {
      hits[i] = 1;
      if (i == 40 || i == 70) throw ValidationError(std::to_string(i));
    });
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_STREQ(e.what(), "40");
  }
  EXPECT_EQ(std::count(hits.begin(), hits.end(), 1), 100);
}

// ---------------------------------------------------------------------------
// Interop
// ---------------------------------------------------------------------------

TEST(InteropTest, ArrayViewValidation) {
  const std::vector<float> data{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  EXPECT_THROW(CloudFromArray({data.data(), 2, 3, 3}, "f"), ValidationError);
  EXPECT_THROW(CloudFromArray({data.data(), 2, 4, 3}, "f"), ValidationError);
  EXPECT_THROW(CloudFromArray({nullptr, 2, 4, 4}, "f"), ValidationError);
  const PointCloud strided = CloudFromArray({data.data(), 2, 4, 5}, "f");
  EXPECT_EQ(strided.points[1], (Point{6, 7, 8, 9}));
  EXPECT_TRUE(CloudFromArray({nullptr, 0, 4, 4}, "f").empty());
  const std::vector<float> bad{0, std::nanf(""), 0, 0};
  EXPECT_THROW(CloudFromArray({bad.data(), 1, 4, 4}, "f"), ValidationError);
  const PointCloud dense = CloudFromArray({data.data(), 2, 4, 4}, "f");
  EXPECT_EQ(CloudToArray(dense),
            std::vector<float>(data.begin(), data.begin() + 8));
}

TEST_F(CommandTest, ArrayAugmentMatchesCliOutput) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    ProjectConfig config = Config(3, 4, 4, fmt::format("cli{}", seed));
    config.seed = seed;
    config.output.database = dir_ / "db";
    if (seed == 1) RunBuildDb(config);
    RunAugment(config);
    const GtDatabase db = LoadDatabase(config.output.database);
    const KittiLayout in{dir_ / "data"};
    const KittiLayout out{config.output.dir};
    for (const auto& id : ListFrameIds(in)) {
      FrameLoadOptions options;
      options.image_width = 320;
      options.image_height = 120;
      const FrameBundle f = LoadFrame(in, id, config.catalog, options).frame;
      const std::vector<float> buffer = CloudToArray(f.cloud);
      const ArrayAugmentResult r = AugmentArrays(
          {buffer.data(), f.cloud.size(), 4, 4}, f.boxes,
          {id, f.calib, f.semantic, f.label_text}, config, db);
      const std::string cli_bin = ReadFileBytes(out.velodyne(id));
      ASSERT_EQ(r.points.size() * sizeof(float), cli_bin.size());
      EXPECT_EQ(std::memcmp(r.points.data(), cli_bin.data(), cli_bin.size()),
                0);
      EXPECT_EQ(r.label_text, ReadFileBytes(out.label(id)));
      EXPECT_EQ(r.audit.dump(2) + "\n",
                ReadFileBytes(config.output.dir / "audit" / (id + ".json")));
    }
  }
}

TEST_F(CommandTest, ArrayAugmentWithZeroTargetsReturnsInput) {
  const ProjectConfig config = Config(0, 0, 0);
  RunBuildDb(config);
  const GtDatabase db = LoadDatabase(config.output.database);
  const FrameBundle& f = frames_[0];
  const std::vector<float> buffer = CloudToArray(f.cloud);
  const ArrayAugmentResult r =
      AugmentArrays({buffer.data(), f.cloud.size(), 4, 4}, f.boxes,
                    {f.frame_id, f.calib, f.semantic, f.label_text}, config, db);
  EXPECT_EQ(r.points, buffer);
  EXPECT_EQ(r.boxes, f.boxes);
}

TEST(InteropTest, DwaHandleMatchesScheduler) {
  SyntheticLossSpec spec{{{"a", 1.0, 0.003, 0.2}, {"b", 2.0, 0.001, 0.2},
                          {"c", 0.5, 0.002, 0.2}},
                         600,
                         4.0};
  std::mt19937_64 rng(4);
  const auto stream = GenerateLossStream(spec, rng);
  DwaScheduler reference(3, {2.0, 30});
  DwaHandle handle(3, 2.0, 30);
  for (std::size_t i = 0; i < stream.snapshots.size(); ++i) {
    reference.Observe(stream.snapshots[i]);
    const auto alpha =
        handle.Step(static_cast<std::int64_t>(i), stream.snapshots[i]);
    EXPECT_EQ(alpha, reference.current().alpha);
    double sum = 0.0;
    for (double a : alpha) sum += a;
    EXPECT_NEAR(sum, 3.0, 1e-9);
  }
}

TEST(InteropTest, DwaHandleRejectsBadInput) {
  DwaHandle handle(2, 2.0, 5);
  const LossSnapshot ok{{{1, 1, 1}, {1, 1, 1}}, 1.0};
  handle.Step(3, ok);
  EXPECT_THROW(handle.Step(3, ok), ValidationError);
  EXPECT_THROW(handle.Step(1, ok), ValidationError);
  LossSnapshot nan = ok;
  nan.heads[1].loc = std::nan("");
  EXPECT_THROW(handle.Step(4, nan), ValidationError);
  EXPECT_THROW(DwaHandle(2, 0.0, 5), ValidationError);
  EXPECT_THROW(DwaHandle(2, 2.0, 0), ValidationError);
  // Two handles never share state.
  DwaHandle a(1, 2.0, 1), b(1, 2.0, 1);
  a.Step(0, {{{1, 1, 1}}, 1.0});
  a.Step(1, {{{1, 1, 1}}, 1.0});
  EXPECT_EQ(b.current().timestep, 0);
  EXPECT_EQ(a.current().timestep, 2);
}

}  // namespace
}  // namespace lidar_rebalance
