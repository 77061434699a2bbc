#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "gsr/data.hpp"
#include "gsr/train.hpp"

namespace gsr {

struct DataConfig {
  std::size_t classes = 8;
  double rho = 100.0;
  std::size_t n_max = 2000;
  double radius = 2.0;
  double sigma = 0.15;
  /// When set, every run seed trains on the dataset drawn from seed 0.
  bool share_dataset = false;

  LongTailSpec spec() const { return LongTailSpec::make(classes, rho, n_max); }
  std::vector<ClassDistribution> distributions() const {
    return make_ring_mixture(classes, radius, sigma);
  }
};

struct ExperimentConfig {
  DataConfig data;
  TrainConfig train;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::filesystem::path out_dir = "out";
  std::size_t jobs = 1;
  std::vector<std::size_t> sweep_groups{2, 4, 8, 16};
  std::vector<double> sweep_lambda{0.25, 0.5, 1.0};
  std::vector<double> sweep_rho{10.0, 100.0, 1000.0};

  void validate() const;
};

/// Raised for malformed or out-of-schema configuration. `line` is 0 when the
/// problem is not tied to a single line (cross-field validation).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& source, std::size_t line, const std::string& message);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Parses the sectioned key = value format. Starts from the defaults, so an
/// empty document is valid. Unknown sections or keys are rejected.
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical text of every schema key in schema order; parse_config of the
/// result reproduces the config.
std::string format_config(const ExperimentConfig& cfg);

/// Fingerprint of everything that affects a run's numbers. The seed list,
/// output directory and job count are excluded.
std::string config_hash(const ExperimentConfig& cfg);

/// The documented schema: "section.key" names in order.
std::vector<std::string> config_keys();

/// Dataset seed for a run seed; fixed when data.share_dataset is set.
std::uint64_t dataset_seed(const DataConfig& data, std::uint64_t run_seed);

}  // namespace gsr
