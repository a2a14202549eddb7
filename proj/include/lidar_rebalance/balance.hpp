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

// Per-head loss balancing with Dynamic Weight Average (DWA).
//
// Each detection head c gets a weight
//
//   alpha_c(t) = |C| * exp(w_c(t-1) / T) / sum_k exp(w_k(t-1) / T),
//   w_c(t-1)   = L_c(t-1) / L_c(t-2),
//
// where L_c(t) is the head's beta-weighted loss averaged over window t. Heads
// whose loss falls more slowly get larger weights; the weights always sum to
// the number of heads.

#ifndef LIDAR_REBALANCE_BALANCE_HPP_
#define LIDAR_REBALANCE_BALANCE_HPP_

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lidar_rebalance/errors.hpp"
#include "lidar_rebalance/ingest.hpp"

namespace lidar_rebalance {

struct HeadLoss {
  double loc = 0.0;
  double cls = 0.0;
  double dir = 0.0;
};

// Component losses of every head at one iteration.
struct LossSnapshot {
  std::vector<HeadLoss> heads;
  double n_pos = 1.0;  // positive anchors; normalizes the total loss
};

// Relative weights of the localization, classification and heading terms.
struct LossBetas {
  double loc = 2.0;
  double cls = 1.0;
  double dir = 0.2;
};

struct DwaConfig {
  static constexpr int kDefaultWindow = 50;

  double temperature = 2.0;
  int window = kDefaultWindow;  // iterations averaged into one timestep

  void Validate() const {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
      throw ValidationError("DWA temperature must be positive");
    }
    if (window < 1) throw ValidationError("DWA window must be >= 1");
  }
};

struct WeightVector {
  std::int64_t timestep = 0;
  std::vector<double> alpha;    // indexed by head
  std::vector<bool> clamped;    // heads whose ratio was clamped to 1

  double sum() const {
    double s = 0.0;
    for (double a : alpha) s += a;
    return s;
  }
};

struct WeightTrajectory {
  std::vector<std::string> head_names;
  std::vector<WeightVector> steps;  // strictly increasing timesteps
};

inline constexpr double kMinPriorLoss = 1e-12;

inline void ValidateSnapshot(const LossSnapshot& s, std::size_t heads) {
  if (s.heads.size() != heads) {
    throw ValidationError(fmt::format("snapshot has {} heads, expected {}",
                                      s.heads.size(), heads));
  }
  for (const auto& h : s.heads) {
    for (double v : {h.loc, h.cls, h.dir}) {
      if (!std::isfinite(v) || v < 0.0) {
        throw ValidationError("head losses must be finite and non-negative");
      }
    }
  }
  if (!(s.n_pos >= 1.0) || !std::isfinite(s.n_pos)) {
    throw ValidationError("N_pos must be >= 1");
  }
}

inline double HeadTotal(const HeadLoss& h, const LossBetas& beta = {}) {
  return beta.loc * h.loc + beta.cls * h.cls + beta.dir * h.dir;
}

// Mean beta-weighted loss of one head over a window of iterations.
inline double WindowAverage(std::span<const LossSnapshot> window,
                            std::size_t head, const LossBetas& beta = {}) {
  if (window.empty()) throw UsageError("window average of an empty window");
  double sum = 0.0;
  for (const auto& s : window) {
    if (head >= s.heads.size()) {
      throw UsageError("head index " + std::to_string(head) +
                       " missing from snapshot");
    }
    sum += HeadTotal(s.heads[head], beta);
  }
  return sum / static_cast<double>(window.size());
}

// Temperature softmax scaled to sum to the number of heads.
inline std::vector<double> DwaWeights(std::span<const double> ratios,
                                      double temperature) {
  if (!(temperature > 0.0)) {
    throw ValidationError("DWA temperature must be positive");
  }
  std::vector<double> alpha(ratios.size());
  if (ratios.empty()) return alpha;
  const double peak = *std::max_element(ratios.begin(), ratios.end());
  double denom = 0.0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    alpha[i] = std::exp((ratios[i] - peak) / temperature);
    denom += alpha[i];
  }
  const double scale = static_cast<double>(ratios.size()) / denom;
  for (double& a : alpha) a *= scale;
  return alpha;
}

// alpha(t) from the two preceding window averages. A prior loss below 1e-12
// makes the head's ratio 1 and flags it in `clamped`.
inline WeightVector DwaStep(std::span<const double> previous,
                            std::span<const double> before_previous,
                            const DwaConfig& config,
                            std::int64_t timestep = 2) {
  config.Validate();
  if (previous.size() != before_previous.size()) {
    throw UsageError("loss histories cover different head counts");
  }
  WeightVector out;
  out.timestep = timestep;
  out.clamped.assign(previous.size(), false);
  if (timestep < 2) {
    out.alpha.assign(previous.size(), 1.0);
    return out;
  }
  std::vector<double> ratios(previous.size());
  for (std::size_t c = 0; c < previous.size(); ++c) {
    if (before_previous[c] < kMinPriorLoss) {
      ratios[c] = 1.0;
      out.clamped[c] = true;
    } else {
      ratios[c] = previous[c] / before_previous[c];
    }
  }
  out.alpha = DwaWeights(ratios, config.temperature);
  return out;
}

// Loss actually minimized: (1/N_pos) * sum_c alpha_c * (beta-weighted head
// loss).
inline double TotalLoss(const LossSnapshot& snapshot,
                        std::span<const double> alpha,
                        const LossBetas& beta = {}) {
  if (alpha.size() < snapshot.heads.size()) {
    throw UsageError(fmt::format("{} head weights for {} heads", alpha.size(),
                                 snapshot.heads.size()));
  }
  double sum = 0.0;
  for (std::size_t c = 0; c < snapshot.heads.size(); ++c) {
    sum += alpha[c] * HeadTotal(snapshot.heads[c], beta);
  }
  return sum / snapshot.n_pos;
}

// Sequential scheduler. Timestep t is the t-th loss window; alpha(0) and
// alpha(1) are all ones, alpha(t) for t >= 2 uses windows t-1 and t-2.
class DwaScheduler {
 public:
  DwaScheduler(std::size_t heads, DwaConfig config, LossBetas beta = {})
      : heads_(heads), config_(config), beta_(beta) {
    config_.Validate();
    if (heads == 0) throw ValidationError("scheduler needs at least one head");
    current_.timestep = 0;
    current_.alpha.assign(heads_, 1.0);
    current_.clamped.assign(heads_, false);
  }

  // Weights to apply during the current window.
  const WeightVector& current() const noexcept { return current_; }
  const std::vector<std::vector<double>>& window_losses() const noexcept {
    return history_;
  }
  std::size_t heads() const noexcept { return heads_; }
  const DwaConfig& config() const noexcept { return config_; }

  // Consumes one iteration. When it closes a window, advances to the next
  // timestep and returns the new weights.
  std::optional<WeightVector> Observe(const LossSnapshot& snapshot) {
    ValidateSnapshot(snapshot, heads_);
    pending_.push_back(snapshot);
    if (pending_.size() < static_cast<std::size_t>(config_.window)) {
      return std::nullopt;
    }
    std::vector<double> averaged(heads_);
    for (std::size_t c = 0; c < heads_; ++c) {
      averaged[c] = WindowAverage(pending_, c, beta_);
    }
    pending_.clear();
    history_.push_back(std::move(averaged));

    const auto t = static_cast<std::int64_t>(history_.size());
    if (history_.size() < 2) {
      current_ = DwaStep(history_.back(), history_.back(), config_, t);
    } else {
      current_ = DwaStep(history_[history_.size() - 1],
                         history_[history_.size() - 2], config_, t);
    }
    return current_;
  }

 private:
  std::size_t heads_;
  DwaConfig config_;
  LossBetas beta_;
  std::vector<LossSnapshot> pending_;
  std::vector<std::vector<double>> history_;
  WeightVector current_;
};

// One weight vector per window boundary, starting with alpha(0). Iterations
// after the last full window do not produce a vector.
inline WeightTrajectory RunTrajectory(std::span<const LossSnapshot> stream,
                                      std::vector<std::string> head_names,
                                      const DwaConfig& config,
                                      const LossBetas& beta = {}) {
  DwaScheduler scheduler(head_names.size(), config, beta);
  WeightTrajectory out;
  out.head_names = std::move(head_names);
  out.steps.push_back(scheduler.current());
  for (const auto& snapshot : stream) {
    if (auto step = scheduler.Observe(snapshot)) {
      out.steps.push_back(std::move(*step));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Loss streams
// ---------------------------------------------------------------------------

struct LossStream {
  std::vector<std::string> head_names;
  std::vector<LossSnapshot> snapshots;
};

// Head loss L(i) = initial * exp(-decay * i) * exp(noise * N(0, 1)), split
// over the three components so that the beta-weighted sum equals L(i).
struct SyntheticHead {
  std::string name;
  double initial_loss = 1.0;
  double decay_rate = 0.0;
  double noise = 0.0;
};

struct SyntheticLossSpec {
  std::vector<SyntheticHead> heads;
  int iterations = 0;
  double n_pos = 1.0;

  void Validate() const {
    if (heads.empty()) throw ValidationError("synthetic spec has no heads");
    if (iterations < 0) throw ValidationError("iterations must be >= 0");
    for (const auto& h : heads) {
      if (!(h.initial_loss > 0.0) || !std::isfinite(h.decay_rate) ||
          !(h.noise >= 0.0)) {
        throw ValidationError("synthetic head '" + h.name +
                              "' needs initial_loss > 0, finite decay and "
                              "noise >= 0");
      }
    }
    if (!(n_pos >= 1.0)) throw ValidationError("N_pos must be >= 1");
  }
};

template <typename Rng>
LossStream GenerateLossStream(const SyntheticLossSpec& spec, Rng& rng,
                              const LossBetas& beta = {}) {
  spec.Validate();
  LossStream out;
  for (const auto& h : spec.heads) out.head_names.push_back(h.name);
  const double beta_sum = beta.loc + beta.cls + beta.dir;
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < spec.iterations; ++i) {
    LossSnapshot s;
    s.n_pos = spec.n_pos;
    for (const auto& h : spec.heads) {
      double loss = h.initial_loss * std::exp(-h.decay_rate * i);
      if (h.noise > 0.0) loss *= std::exp(h.noise * gauss(rng));
      const double part = loss / beta_sum;
      s.heads.push_back({part, part, part});
    }
    out.snapshots.push_back(std::move(s));
  }
  return out;
}

inline constexpr std::string_view kLossCsvHeader =
    "iteration,head,loc,cls,dir,n_pos";

// Rows grouped by strictly increasing iteration; each iteration lists every
// head exactly once. Head order is taken from the first iteration.
inline LossStream ReadLossCsv(std::string_view text) {
  const auto lines = detail::SplitLines(text);
  std::size_t first = 0;
  while (first < lines.size() && lines[first].empty()) ++first;
  if (first == lines.size() || lines[first] != kLossCsvHeader) {
    throw FormatError(
        "loss CSV must start with '" + std::string(kLossCsvHeader) + "'",
        FormatError::Unit::kLine, first + 1);
  }

  LossStream out;
  std::map<std::string, std::size_t> head_index;
  std::optional<long> current_iteration;
  LossSnapshot current;
  std::vector<bool> seen;
  bool head_set_closed = false;

  auto close = [&](std::size_t line_no) {
    if (!current_iteration) return;
    if (!head_set_closed) {
      head_set_closed = true;
      seen.resize(out.head_names.size(), true);
      current.heads.resize(out.head_names.size());
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
      throw FormatError("iteration " + std::to_string(*current_iteration) +
                            " does not list every head",
                        FormatError::Unit::kLine, line_no);
    }
    out.snapshots.push_back(std::move(current));
    current = {};
    current.heads.resize(out.head_names.size());
    seen.assign(out.head_names.size(), false);
  };

  for (std::size_t i = first + 1; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    if (lines[i].empty()) continue;
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = lines[i].find(',', start);
      fields.push_back(lines[i].substr(start, comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (fields.size() != 6) {
      throw FormatError("loss CSV row needs 6 fields", FormatError::Unit::kLine,
                        line_no);
    }
    const auto iteration = detail::ParseInt(fields[0]);
    const auto loc = detail::ParseDouble(fields[2]);
    const auto cls = detail::ParseDouble(fields[3]);
    const auto dir = detail::ParseDouble(fields[4]);
    const auto n_pos = detail::ParseDouble(fields[5]);
    if (!iteration || !loc || !cls || !dir || !n_pos || *loc < 0.0 ||
        *cls < 0.0 || *dir < 0.0 || *n_pos < 1.0) {
      throw FormatError("loss CSV row has an invalid number",
                        FormatError::Unit::kLine, line_no);
    }
    if (!current_iteration || *iteration != *current_iteration) {
      if (current_iteration && *iteration < *current_iteration) {
        throw FormatError("iterations must be strictly increasing",
                          FormatError::Unit::kLine, line_no);
      }
      close(line_no);
      current_iteration = *iteration;
      current.n_pos = *n_pos;
    } else if (*n_pos != current.n_pos) {
      throw FormatError("n_pos differs within one iteration",
                        FormatError::Unit::kLine, line_no);
    }
    const std::string head(fields[1]);
    auto it = head_index.find(head);
    if (it == head_index.end()) {
      if (head_set_closed) {
        throw FormatError("head '" + head + "' not present in the first "
                          "iteration",
                          FormatError::Unit::kLine, line_no);
      }
      it = head_index.emplace(head, out.head_names.size()).first;
      out.head_names.push_back(head);
      current.heads.push_back({});
      seen.push_back(false);
    }
    if (seen[it->second]) {
      throw FormatError("head '" + head + "' repeated within an iteration",
                        FormatError::Unit::kLine, line_no);
    }
    seen[it->second] = true;
    current.heads[it->second] = {*loc, *cls, *dir};
  }
  close(lines.size());
  return out;
}

inline std::string WriteLossCsv(const LossStream& stream) {
  std::string out(kLossCsvHeader);
  out += '\n';
  for (std::size_t i = 0; i < stream.snapshots.size(); ++i) {
    const auto& s = stream.snapshots[i];
    for (std::size_t c = 0; c < s.heads.size(); ++c) {
      out += fmt::format("{},{},{},{},{},{}\n", i, stream.head_names[c],
                         s.heads[c].loc, s.heads[c].cls, s.heads[c].dir,
                         s.n_pos);
    }
  }
  return out;
}

// `timestep,class_name,alpha` rows.
inline std::string TrajectoryCsv(const WeightTrajectory& trajectory) {
  std::string out = "timestep,class_name,alpha\n";
  for (const auto& step : trajectory.steps) {
    for (std::size_t c = 0; c < step.alpha.size(); ++c) {
      out += fmt::format("{},{},{}\n", step.timestep,
                         trajectory.head_names[c], step.alpha[c]);
    }
  }
  return out;
}

}  // namespace lidar_rebalance

#endif  // LIDAR_REBALANCE_BALANCE_HPP_
