#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace gsr {

using Point2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

/// Exponential profile n_y = round(n_max * rho^(-y/(K-1))), y = 0..K-1, clamped to >= 1.
std::vector<std::size_t> class_counts(std::size_t classes, double rho, std::size_t n_max);

struct LongTailSpec {
  std::size_t classes = 8;
  double rho = 100.0;
  std::size_t n_max = 2000;
  std::vector<std::size_t> counts;

  static LongTailSpec make(std::size_t classes, double rho, std::size_t n_max);
};

struct ClassDistribution {
  std::size_t label = 0;
  Point2 mean = Point2::Zero();
  Mat2 cov = Mat2::Identity();
};

/// Class y centred at radius * (cos 2 pi y/K, sin 2 pi y/K) with covariance sigma^2 I.
std::vector<ClassDistribution> make_ring_mixture(std::size_t classes, double radius, double sigma);

/// Draws `n` points from N(mean, cov) using the Cholesky factor of cov.
std::vector<Point2> sample_gaussian(const ClassDistribution& dist, std::size_t n,
                                    std::uint64_t seed);

struct Dataset {
  std::vector<Point2> points;
  std::vector<std::size_t> labels;
  std::vector<std::vector<std::size_t>> by_class;  // indices into points

  std::size_t size() const { return points.size(); }
  std::size_t classes() const { return by_class.size(); }
  std::vector<std::size_t> class_sizes() const;
  void rebuild_index(std::size_t classes);
};

/// Exactly counts[y] draws from class y; a pure function of (spec, dists, seed).
Dataset sample_dataset(const LongTailSpec& spec, const std::vector<ClassDistribution>& dists,
                       std::uint64_t seed);

/// `per_class` fresh draws from every class, on a stream disjoint from training draws.
Dataset balanced_eval_set(const std::vector<ClassDistribution>& dists, std::size_t per_class,
                          std::uint64_t seed);

/// CSV with header x1,x2,y; values written in shortest round-trip form.
void write_dataset_csv(const Dataset& data, const std::filesystem::path& path);
Dataset read_dataset_csv(const std::filesystem::path& path, std::size_t classes = 0);

/// key=value sidecar describing how a dataset was produced.
void write_metadata(const std::filesystem::path& path,
                    const std::map<std::string, std::string>& entries);
std::map<std::string, std::string> read_metadata(const std::filesystem::path& path);

}  // namespace gsr
