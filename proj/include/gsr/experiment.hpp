#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gsr/config.hpp"
#include "gsr/train.hpp"

namespace gsr {

/// One configuration of the regularizer switches.
struct ArmSpec {
  std::string name;
  bool lecam = false;
  RegVariant variant = RegVariant::none;
};

/// {LeCam, gSR} x {off, on}: baseline, lecam, gsr, both.
std::vector<ArmSpec> ablation_arms();
/// No-regularizer baseline and the three spectral variants without LeCam.
std::vector<ArmSpec> variant_arms();

ExperimentConfig apply_arm(ExperimentConfig cfg, const ArmSpec& arm);

/// Draws the dataset for `seed` and trains; metadata carries the config hash.
RunLog run_one(const ExperimentConfig& cfg, std::uint64_t seed, const RunOptions& options = {});

struct RunSummary {
  std::string arm;
  std::uint64_t seed = 0;
  double tail_frechet = 0.0;  // mean over the 3 rarest classes, final snapshot
  double mean_frechet = 0.0;
  bool rarest_collapsed = false;
  bool aborted = false;
};

/// Classes ordered from rarest to most frequent (ties by label).
std::vector<std::size_t> rarest_classes(std::span<const std::size_t> counts, std::size_t n);

RunSummary summarize(const std::string& arm, std::uint64_t seed, const RunLog& log,
                     std::span<const std::size_t> counts);

struct GridJob {
  std::string label;
  ExperimentConfig cfg;
  std::uint64_t seed = 0;
};

/// Runs every job on `jobs` worker threads. Results come back in job order
/// regardless of completion order. `on_done` runs under a lock.
std::vector<RunLog> run_grid(std::span<const GridJob> grid, std::size_t jobs,
                             const std::function<void(const GridJob&, const RunLog&)>& on_done = {});

/// runlog_<seed>.csv, metrics_<seed>.csv, samples_<seed>.csv, covariance_<seed>.csv.
void write_run_outputs(const std::filesystem::path& dir, std::uint64_t seed, const RunLog& log);

struct ArmAggregate {
  std::string arm;
  std::size_t runs = 0;
  double tail_mean = 0.0;
  double tail_std = 0.0;
  double frechet_mean = 0.0;
  double frechet_std = 0.0;
  std::size_t rarest_collapsed = 0;
  std::size_t aborted = 0;
};

/// Mean and sample standard deviation per arm, arms in first-seen order.
std::vector<ArmAggregate> aggregate(std::span<const RunSummary> runs);

}  // namespace gsr
