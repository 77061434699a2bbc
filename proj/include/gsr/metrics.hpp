#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gsr/data.hpp"

namespace gsr {

/// Covariance of the rows of a grouped parameter vector, (1/n_c) C C^T with
/// C the row-centred n_g x n_c matrix.
struct CovarianceReport {
  std::size_t class_id = 0;
  std::size_t layer = 0;
  std::size_t groups = 0;
  std::vector<double> covariance;  // n_g x n_g, row-major
  /// 1 - |offdiag|_F / |C|_F; 1 for a diagonal (or zero) matrix.
  double diagonality = 1.0;
};

CovarianceReport grouped_covariance(std::span<const double> gamma, std::size_t groups);

/// Squared 2-Wasserstein distance between two Gaussians, using the closed form
/// tr (S1 S2)^{1/2} = sqrt(tr(S1 S2) + 2 sqrt(det(S1 S2))) for 2x2 matrices.
double gaussian_frechet(const Point2& mu1, const Mat2& sigma1, const Point2& mu2,
                        const Mat2& sigma2);

struct SampleMoments {
  Point2 mean = Point2::Zero();
  Mat2 cov = Mat2::Zero();  // unbiased (n - 1)
};

SampleMoments sample_moments(std::span<const Point2> samples);

double per_class_frechet(std::span<const Point2> samples, const ClassDistribution& ref);

struct Coverage {
  double fraction = 0.0;
  Point2 sample_std = Point2::Zero();
};

/// Fraction of samples within multiplier * sqrt(lambda_max(cov_ref)) of the
/// reference mean, reported alongside the per-axis sample std.
Coverage mode_coverage(std::span<const Point2> samples, const ClassDistribution& ref,
                       double radius_multiplier = 3.0);

struct ClassMetrics {
  std::size_t class_id = 0;
  double frechet = 0.0;
  double coverage = 0.0;
  Point2 sample_std = Point2::Zero();
};

ClassMetrics class_metrics(std::span<const Point2> samples, const ClassDistribution& ref,
                           double radius_multiplier = 3.0);

struct CollapseThresholds {
  /// Sample spread below this fraction of the reference spread.
  double std_fraction = 0.1;
  /// sigma_max growth over the earliest snapshot.
  double sigma_growth = 3.0;
};

/// Spread ratio sqrt(|sample_std|^2 / tr(cov_ref)).
double spread_ratio(const ClassMetrics& m, const ClassDistribution& ref);

/// Flags class y when its spread ratio is below `std_fraction` and the
/// maximum of sigma_series[y] has exceeded `sigma_growth` times
/// sigma_series[y][0]. Needs at least 2 snapshots per class.
std::vector<bool> collapse_detector(std::span<const ClassMetrics> latest,
                                    std::span<const ClassDistribution> refs,
                                    const std::vector<std::vector<double>>& sigma_series,
                                    const CollapseThresholds& thresholds = {});

}  // namespace gsr
