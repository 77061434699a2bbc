#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <random>

#include "gsr/data.hpp"
#include "gsr/metrics.hpp"

using namespace gsr;

namespace {

Mat2 random_psd(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Eigen::Matrix2d a;
  a << n(rng), n(rng), n(rng), n(rng);
  return a * a.transpose() + 0.01 * Mat2::Identity();
}

ClassDistribution isotropic(double sigma, Point2 mean = Point2::Zero()) {
  ClassDistribution d;
  d.mean = mean;
  d.cov = sigma * sigma * Mat2::Identity();
  return d;
}

}  // namespace

TEST_CASE("Frechet closed-form examples") {
  const Mat2 eye = Mat2::Identity();
  CHECK(gaussian_frechet(Point2(1, 2), eye, Point2(1, 2), eye) == doctest::Approx(0.0));
  CHECK(gaussian_frechet(Point2(0, 0), eye, Point2(3, 4), eye) == doctest::Approx(25.0));
  CHECK(gaussian_frechet(Point2(0, 0), 4.0 * eye, Point2(0, 0), eye) == doctest::Approx(2.0));
  Mat2 bad;
  bad << 1, 0, 0, -1;
  CHECK_THROWS_AS(gaussian_frechet(Point2(0, 0), bad, Point2(0, 0), eye), std::invalid_argument);
}

TEST_CASE("Frechet against an eigendecomposition square root") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  for (int k = 0; k < 50; ++k) {
    const Mat2 s1 = random_psd(rng);
    const Mat2 s2 = random_psd(rng);
    const Point2 m1(n(rng), n(rng)), m2(n(rng), n(rng));
    // tr (S1 S2)^{1/2} = tr (S2^{1/2} S1 S2^{1/2})^{1/2}
    Eigen::SelfAdjointEigenSolver<Mat2> e2(s2);
    const Mat2 r2 = e2.operatorSqrt();
    Eigen::SelfAdjointEigenSolver<Mat2> inner(r2 * s1 * r2);
    const double cross = inner.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    const double expected = (m1 - m2).squaredNorm() + s1.trace() + s2.trace() - 2.0 * cross;
    const double got = gaussian_frechet(m1, s1, m2, s2);
    CHECK(got == doctest::Approx(expected).epsilon(1e-9));
    CHECK(got == doctest::Approx(gaussian_frechet(m2, s2, m1, s1)).epsilon(1e-12));
    CHECK(got >= 0.0);
  }
}

TEST_CASE("per-class Frechet on samples") {
  const ClassDistribution ref = isotropic(0.5, Point2(1.0, -1.0));
  const auto pts = sample_gaussian(ref, 100000, 3);
  CHECK(per_class_frechet(pts, ref) < 0.01);

  std::vector<Point2> point_mass(50, ref.mean);
  CHECK(per_class_frechet(point_mass, ref) >= ref.cov.trace() - 1e-12);

  auto shifted = pts;
  for (Point2& p : shifted) p += Point2(0.3, 0.4);
  CHECK(per_class_frechet(shifted, ref) - per_class_frechet(pts, ref) ==
        doctest::Approx(0.25).epsilon(1e-3));
  CHECK_THROWS_AS(per_class_frechet(std::vector<Point2>{ref.mean}, ref), std::invalid_argument);
}

TEST_CASE("per-class Frechet shrinks with sample count") {
  const ClassDistribution ref = isotropic(0.15, Point2(2.0, 0.0));
  // average over repetitions so the expectation, not one draw, is compared
  double prev = 1e9;
  for (std::size_t n : {100u, 1000u, 10000u}) {
    double avg = 0.0;
    for (std::uint64_t s = 0; s < 20; ++s) avg += per_class_frechet(sample_gaussian(ref, n, 100 + s), ref);
    avg /= 20;
    CHECK(avg < prev);
    prev = avg;
  }
}

TEST_CASE("coverage") {
  const ClassDistribution ref = isotropic(1.0);
  const auto pts = sample_gaussian(ref, 200000, 4);
  const double expected = 1.0 - std::exp(-4.5);  // chi-squared(2) mass inside radius 3
  CHECK(mode_coverage(pts, ref, 3.0).fraction == doctest::Approx(expected).epsilon(2e-3));

  std::vector<Point2> point_mass(10, ref.mean);
  const Coverage c = mode_coverage(point_mass, ref);
  CHECK(c.fraction == 1.0);
  CHECK(c.sample_std.norm() == 0.0);

  const auto far = sample_gaussian(isotropic(1.0, Point2(20.0, 0.0)), 1000, 5);
  CHECK(mode_coverage(far, ref).fraction == 0.0);
}

TEST_CASE("grouped covariance matches the brute-force definition") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n;
  for (auto [d, g] : {std::pair<std::size_t, std::size_t>{64, 8}, {64, 4}, {12, 3}, {256, 16}}) {
    std::vector<double> gamma(d);
    for (double& v : gamma) v = n(rng);
    const CovarianceReport r = grouped_covariance(gamma, g);
    const std::size_t c = d / g;
    for (std::size_t i = 0; i < g; ++i) {
      for (std::size_t j = 0; j < g; ++j) {
        double mi = 0.0, mj = 0.0;
        for (std::size_t k = 0; k < c; ++k) {
          mi += gamma[i * c + k];
          mj += gamma[j * c + k];
        }
        mi /= static_cast<double>(c);
        mj /= static_cast<double>(c);
        double s = 0.0;
        for (std::size_t k = 0; k < c; ++k) s += (gamma[i * c + k] - mi) * (gamma[j * c + k] - mj);
        s /= static_cast<double>(c);
        CHECK(r.covariance[i * g + j] == doctest::Approx(s).epsilon(1e-12));
        CHECK(r.covariance[i * g + j] == r.covariance[j * g + i]);
      }
    }
    Eigen::MatrixXd m = Eigen::Map<const Eigen::MatrixXd>(r.covariance.data(), g, g);
    CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m).eigenvalues().minCoeff() > -1e-10);
    CHECK(r.diagonality >= 0.0);
    CHECK(r.diagonality <= 1.0);
  }
  CHECK_THROWS_AS(grouped_covariance(std::vector<double>(12, 1.0), 5), std::invalid_argument);
  CHECK_THROWS_AS(grouped_covariance(std::vector<double>(4, 1.0), 4), std::invalid_argument);
}

TEST_CASE("diagonality on constructed tables") {
  // centred rows (1,-1,0,0) and (0,0,1,-1) are orthogonal
  CHECK(grouped_covariance(std::vector<double>{1, -1, 0, 0, 0, 0, 1, -1}, 2).diagonality ==
        doctest::Approx(1.0));
  // identical rows: covariance proportional to all-ones, off-diagonal share sqrt(2)/2
  const CovarianceReport same = grouped_covariance(std::vector<double>{1, 2, 3, 1, 2, 3}, 2);
  CHECK(same.diagonality == doctest::Approx(1.0 - std::sqrt(0.5)));
}

TEST_CASE("diagonality is invariant to row order and scale") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n;
  std::vector<double> gamma(64);
  for (double& v : gamma) v = n(rng);
  const double base = grouped_covariance(gamma, 8).diagonality;
  auto scaled = gamma;
  for (double& v : scaled) v *= -7.5;
  CHECK(grouped_covariance(scaled, 8).diagonality == doctest::Approx(base).epsilon(1e-12));
  std::vector<double> permuted;
  for (std::size_t row : {3u, 0u, 7u, 1u, 6u, 2u, 5u, 4u}) {
    permuted.insert(permuted.end(), gamma.begin() + row * 8, gamma.begin() + (row + 1) * 8);
  }
  CHECK(grouped_covariance(permuted, 8).diagonality == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("collapse detector") {
  const std::vector<ClassDistribution> refs{isotropic(0.15), isotropic(0.15, Point2(2, 0))};
  ClassMetrics healthy{0, 0.0, 1.0, Point2(0.15, 0.15)};
  ClassMetrics collapsed{1, 0.5, 1.0, Point2(0.001, 0.002)};
  const std::vector<ClassMetrics> latest{healthy, collapsed};

  const std::vector<std::vector<double>> flat{{8.0, 8.1, 7.9}, {8.0, 8.0, 8.0}};
  auto fired = collapse_detector(latest, refs, flat);
  CHECK_FALSE(fired[0]);
  CHECK_FALSE(fired[1]);  // spread alone is not enough

  const std::vector<std::vector<double>> ramp{{8.0, 40.0}, {8.0, 20.0, 40.0, 30.0}};
  fired = collapse_detector(latest, refs, ramp);
  CHECK_FALSE(fired[0]);  // sigma alone is not enough
  CHECK(fired[1]);

  CollapseThresholds strict;
  strict.sigma_growth = 6.0;
  CHECK_FALSE(collapse_detector(latest, refs, ramp, strict)[1]);
  CHECK(spread_ratio(healthy, refs[0]) == doctest::Approx(1.0));

  const std::vector<std::vector<double>> short_series{{8.0}, {8.0}};
  CHECK_THROWS_AS(collapse_detector(latest, refs, short_series), std::invalid_argument);
}
