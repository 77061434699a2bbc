#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gsr/autodiff.hpp"
#include "gsr/condgen.hpp"
#include "gsr/data.hpp"
#include "gsr/metrics.hpp"
#include "gsr/regularizers.hpp"
#include "gsr/spectral.hpp"

namespace gsr {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double eps = 1e-8;
};

/// First/second moment accumulators, one pair per parameter.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::size_t t = 0;

  static AdamState for_params(std::span<Parameter* const> params);
};

/// Bias-corrected adaptive-moment update using each parameter's `grad`.
void optimizer_step(std::span<Parameter* const> params, AdamState& state, const AdamConfig& cfg);

struct TrainConfig {
  std::size_t steps = 20000;
  std::size_t n_dis = 5;
  std::size_t batch_size = 64;
  AdamConfig adam_g;
  AdamConfig adam_d;
  double ema_decay = 0.999;
  std::size_t ema_start = 1000;
  RegConfig reg;
  bool lecam = true;
  double lecam_lambda = 0.1;
  double lecam_decay = 0.99;
  std::uint64_t seed = 0;

  GeneratorShape gen;
  DiscriminatorShape dis;

  std::size_t log_interval = 10;
  std::size_t eval_interval = 500;
  std::size_t eval_samples = 1000;
  double coverage_multiplier = 3.0;
  CollapseThresholds collapse;
  /// cBN layer (0-based) whose sigma_max(Gamma) series feeds the collapse detector.
  std::size_t collapse_layer = 0;
  std::size_t checkpoint_interval = 0;

  void validate() const;
};

/// Everything a training run mutates.
struct TrainState {
  GeneratorNet gen;
  DiscriminatorNet dis;
  std::vector<Tensor> ema;  // shadow copies of gen.parameters()
  AdamState adam_g;
  AdamState adam_d;
  LeCamState lecam;
  PowerIterTable reg_states;
  PowerIterTable monitor_states;
  ClassWeights weights;
  std::vector<std::size_t> class_counts;
  std::mt19937_64 rng;
  std::size_t step = 0;

  static TrainState init(const TrainConfig& cfg, const Dataset& data);

  /// Generator with the EMA weights (and the live running statistics).
  GeneratorNet ema_generator() const;
};

struct StepRecord {
  std::size_t step = 0;
  std::size_t gen_class = 0;
  double loss_d = 0.0;  // mean over the n_dis discriminator batches
  double loss_g = 0.0;
  double loss_gsr = 0.0;
  double lecam = 0.0;   // mean R_LC over the discriminator batches
  double loss_g_total = 0.0;
  double anchor_real = 0.0;
  double anchor_fake = 0.0;
  std::vector<double> sigma_gamma;  // [layer * K + class]
  std::vector<double> sigma_beta;
};

struct MetricSnapshot {
  std::size_t step = 0;
  std::vector<ClassMetrics> classes;
  std::vector<double> diagonality;  // [layer * K + class]
  std::vector<double> sigma_gamma;  // converged, EMA weights
  std::vector<double> sigma_beta;
  std::vector<bool> collapsed;
  double mean_frechet = 0.0;
};

/// Raised by train_step when a loss or parameter becomes non-finite.
class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunLog {
  std::size_t classes = 0;
  std::size_t layers = 0;
  std::vector<StepRecord> records;
  std::vector<MetricSnapshot> snapshots;
  /// Final-snapshot generated samples per class and covariance reports
  /// [layer * K + class], for plotting.
  std::vector<std::vector<Point2>> final_samples;
  std::vector<CovarianceReport> final_covariance;
  bool aborted = false;
  std::string abort_reason;
  std::map<std::string, std::string> metadata;

  void write_steps_csv(const std::filesystem::path& path) const;
  void write_metrics_csv(const std::filesystem::path& path) const;
  void write_samples_csv(const std::filesystem::path& path) const;
  void write_covariance_csv(const std::filesystem::path& path) const;
};

/// Uniform class draw for generator batches.
std::size_t sample_generator_class(std::mt19937_64& rng, std::size_t classes);
/// Class draw proportional to `counts` for discriminator batches.
std::size_t sample_data_class(std::mt19937_64& rng, std::span<const std::size_t> counts);

/// Builds the generator loss graph on `tape` (L_G + lambda_gSR L_gSR, or L_G
/// alone for variant none / gsn) and returns its parts.
struct GeneratorObjective {
  Var adversarial;
  Var regularizer;  // invalid when no additive regularizer is active
  Var total;
  std::vector<double> sigma_gamma;
  std::vector<double> sigma_beta;
};
GeneratorObjective generator_objective(Tape& tape, TrainState& state, const TrainConfig& cfg,
                                       const Tensor& z, std::size_t y);

/// n_dis discriminator updates then one generator update.
StepRecord train_step(TrainState& state, const TrainConfig& cfg, const Dataset& data);

/// Metrics of the EMA generator against the ground-truth class distributions.
MetricSnapshot snapshot_metrics(const TrainState& state, const TrainConfig& cfg,
                                std::span<const ClassDistribution> refs,
                                std::vector<std::vector<Point2>>* samples = nullptr);

struct RunOptions {
  std::optional<std::filesystem::path> checkpoint_dir;
  std::string checkpoint_prefix = "checkpoint";
};

/// Runs cfg.steps generator updates with snapshots every eval_interval steps.
/// Aborts are recorded in the returned log rather than thrown.
RunLog run_training(const TrainConfig& cfg, const Dataset& data,
                    std::span<const ClassDistribution> refs, const RunOptions& options = {});

/// Versioned text checkpoint with named parameter paths, one per cBN class row.
void save_checkpoint(const std::filesystem::path& path, const TrainState& state);
/// Loads values into an already-shaped state; unknown or missing names throw.
void load_checkpoint(const std::filesystem::path& path, TrainState& state);

}  // namespace gsr
