#include "gsr/metrics.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "gsr/spectral.hpp"

namespace gsr {
namespace {

void require_psd(const Mat2& s, const char* which) {
  const double scale = std::max({1.0, std::abs(s(0, 0)), std::abs(s(1, 1))});
  const double tol = 1e-12 * scale;
  if (std::abs(s(0, 1) - s(1, 0)) > tol || s(0, 0) < -tol || s(1, 1) < -tol ||
      s.determinant() < -tol * scale) {
    throw std::invalid_argument(std::string("gaussian_frechet: ") + which +
                                " is not positive semidefinite");
  }
}

}  // namespace

CovarianceReport grouped_covariance(std::span<const double> gamma, std::size_t groups) {
  const GroupedMatrix m = group(gamma, groups);
  const std::size_t nc = m.columns();
  if (nc < 2) throw std::invalid_argument("grouped_covariance: need at least 2 columns");

  std::vector<double> centred(m.size());
  for (std::size_t r = 0; r < groups; ++r) {
    double mu = 0.0;
    for (std::size_t c = 0; c < nc; ++c) mu += m(r, c);
    mu /= static_cast<double>(nc);
    for (std::size_t c = 0; c < nc; ++c) centred[r * nc + c] = m(r, c) - mu;
  }

  CovarianceReport rep;
  rep.groups = groups;
  rep.covariance.assign(groups * groups, 0.0);
  double total = 0.0;
  double off = 0.0;
  for (std::size_t i = 0; i < groups; ++i) {
    for (std::size_t j = i; j < groups; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < nc; ++c) s += centred[i * nc + c] * centred[j * nc + c];
      s /= static_cast<double>(nc);
      rep.covariance[i * groups + j] = s;
      rep.covariance[j * groups + i] = s;
      const double sq = s * s * (i == j ? 1.0 : 2.0);
      total += sq;
      if (i != j) off += sq;
    }
  }
  rep.diagonality = total > 0.0 ? 1.0 - std::sqrt(off / total) : 1.0;
  return rep;
}

double gaussian_frechet(const Point2& mu1, const Mat2& sigma1, const Point2& mu2,
                        const Mat2& sigma2) {
  require_psd(sigma1, "sigma1");
  require_psd(sigma2, "sigma2");
  const Mat2 prod = sigma1 * sigma2;
  // Eigenvalues of S1 S2 are real and non-negative; clamp round-off.
  const double det = std::max(0.0, sigma1.determinant()) * std::max(0.0, sigma2.determinant());
  const double tr = std::max(0.0, prod.trace());
  const double tr_sqrt = std::sqrt(tr + 2.0 * std::sqrt(det));
  const double d = (mu1 - mu2).squaredNorm() + sigma1.trace() + sigma2.trace() - 2.0 * tr_sqrt;
  return std::max(0.0, d);
}

SampleMoments sample_moments(std::span<const Point2> samples) {
  if (samples.size() < 2) throw std::invalid_argument("sample_moments: need at least 2 samples");
  SampleMoments m;
  for (const auto& p : samples) m.mean += p;
  m.mean /= static_cast<double>(samples.size());
  for (const auto& p : samples) {
    const Point2 d = p - m.mean;
    m.cov += d * d.transpose();
  }
  m.cov /= static_cast<double>(samples.size() - 1);
  return m;
}

double per_class_frechet(std::span<const Point2> samples, const ClassDistribution& ref) {
  if (samples.size() < 2) throw std::invalid_argument("per_class_frechet: need at least 2 samples");
  const SampleMoments m = sample_moments(samples);
  return gaussian_frechet(m.mean, m.cov, ref.mean, ref.cov);
}

Coverage mode_coverage(std::span<const Point2> samples, const ClassDistribution& ref,
                       double radius_multiplier) {
  if (samples.empty()) throw std::invalid_argument("mode_coverage: no samples");
  const Eigen::SelfAdjointEigenSolver<Mat2> eig(ref.cov);
  const double radius = radius_multiplier * std::sqrt(eig.eigenvalues().maxCoeff());
  std::size_t inside = 0;
  Point2 mean = Point2::Zero();
  for (const auto& p : samples) {
    if ((p - ref.mean).norm() <= radius) ++inside;
    mean += p;
  }
  const double n = static_cast<double>(samples.size());
  mean /= n;
  Point2 var = Point2::Zero();
  for (const auto& p : samples) var += (p - mean).cwiseAbs2();
  Coverage c;
  c.fraction = static_cast<double>(inside) / n;
  c.sample_std = samples.size() > 1 ? Point2((var / (n - 1.0)).cwiseSqrt()) : Point2::Zero();
  return c;
}

ClassMetrics class_metrics(std::span<const Point2> samples, const ClassDistribution& ref,
                           double radius_multiplier) {
  ClassMetrics m;
  m.class_id = ref.label;
  m.frechet = per_class_frechet(samples, ref);
  const Coverage c = mode_coverage(samples, ref, radius_multiplier);
  m.coverage = c.fraction;
  m.sample_std = c.sample_std;
  return m;
}

double spread_ratio(const ClassMetrics& m, const ClassDistribution& ref) {
  const double ref_var = ref.cov.trace();
  return ref_var > 0.0 ? std::sqrt(m.sample_std.squaredNorm() / ref_var) : 0.0;
}

std::vector<bool> collapse_detector(std::span<const ClassMetrics> latest,
                                    std::span<const ClassDistribution> refs,
                                    const std::vector<std::vector<double>>& sigma_series,
                                    const CollapseThresholds& thresholds) {
  if (latest.size() != refs.size() || sigma_series.size() != refs.size()) {
    throw std::invalid_argument("collapse_detector: inputs disagree on class count");
  }
  std::vector<bool> flags(refs.size(), false);
  for (std::size_t y = 0; y < refs.size(); ++y) {
    const auto& series = sigma_series[y];
    if (series.size() < 2) throw std::invalid_argument("collapse_detector: need >= 2 snapshots");
    const double peak = *std::max_element(series.begin(), series.end());
    const bool exploded = peak > thresholds.sigma_growth * series.front();
    const bool narrow = spread_ratio(latest[y], refs[y]) < thresholds.std_fraction;
    flags[y] = exploded && narrow;
  }
  return flags;
}

}  // namespace gsr
