#include "gsr/data.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>

#include "gsr/csv.hpp"
#include "gsr/seeding.hpp"

namespace gsr {
namespace {

constexpr std::uint64_t kTrainStream = 0x7a41;
constexpr std::uint64_t kEvalStream = 0xe7a1;

}  // namespace

std::vector<std::size_t> class_counts(std::size_t classes, double rho, std::size_t n_max) {
  if (classes < 2) throw std::invalid_argument("class_counts: need at least 2 classes");
  if (!(rho >= 1.0)) throw std::invalid_argument("class_counts: imbalance ratio must be >= 1");
  if (static_cast<double>(n_max) < rho) {
    throw std::invalid_argument("class_counts: n_max must be at least the imbalance ratio");
  }
  std::vector<std::size_t> counts(classes);
  const double denom = static_cast<double>(classes - 1);
  for (std::size_t y = 0; y < classes; ++y) {
    const double n = std::round(static_cast<double>(n_max) *
                                std::pow(rho, -static_cast<double>(y) / denom));
    counts[y] = std::max<std::size_t>(1, static_cast<std::size_t>(n));
  }
  return counts;
}

LongTailSpec LongTailSpec::make(std::size_t classes, double rho, std::size_t n_max) {
  LongTailSpec s;
  s.classes = classes;
  s.rho = rho;
  s.n_max = n_max;
  s.counts = class_counts(classes, rho, n_max);
  return s;
}

std::vector<ClassDistribution> make_ring_mixture(std::size_t classes, double radius, double sigma) {
  if (classes < 2) throw std::invalid_argument("make_ring_mixture: need at least 2 classes");
  if (!(sigma > 0.0)) throw std::invalid_argument("make_ring_mixture: sigma must be positive");
  std::vector<ClassDistribution> out(classes);
  for (std::size_t y = 0; y < classes; ++y) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(y) /
                         static_cast<double>(classes);
    out[y].label = y;
    out[y].mean = Point2(radius * std::cos(angle), radius * std::sin(angle));
    out[y].cov = Mat2::Identity() * (sigma * sigma);
  }
  return out;
}

std::vector<Point2> sample_gaussian(const ClassDistribution& dist, std::size_t n,
                                    std::uint64_t seed) {
  const Eigen::LLT<Mat2> llt(dist.cov);
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument("sample_gaussian: covariance is not positive definite");
  }
  const Mat2 chol = llt.matrixL();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<Point2> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = normal(rng);
    const double b = normal(rng);
    out.push_back(dist.mean + chol * Point2(a, b));
  }
  return out;
}

std::vector<std::size_t> Dataset::class_sizes() const {
  std::vector<std::size_t> out;
  out.reserve(by_class.size());
  for (const auto& idx : by_class) out.push_back(idx.size());
  return out;
}

void Dataset::rebuild_index(std::size_t classes) {
  by_class.assign(classes, {});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) throw std::out_of_range("Dataset: label outside class range");
    by_class[labels[i]].push_back(i);
  }
}

namespace {

Dataset draw(const std::vector<ClassDistribution>& dists, const std::vector<std::size_t>& counts,
             std::uint64_t seed, std::uint64_t stream) {
  Dataset d;
  for (std::size_t y = 0; y < dists.size(); ++y) {
    const auto pts = sample_gaussian(dists[y], counts[y], derive_seed({seed, stream, y}));
    for (const auto& p : pts) {
      d.points.push_back(p);
      d.labels.push_back(y);
    }
  }
  d.rebuild_index(dists.size());
  return d;
}

}  // namespace

Dataset sample_dataset(const LongTailSpec& spec, const std::vector<ClassDistribution>& dists,
                       std::uint64_t seed) {
  if (spec.counts.size() != dists.size() || spec.classes != dists.size()) {
    throw std::invalid_argument("sample_dataset: spec and class distributions disagree on K");
  }
  return draw(dists, spec.counts, seed, kTrainStream);
}

Dataset balanced_eval_set(const std::vector<ClassDistribution>& dists, std::size_t per_class,
                          std::uint64_t seed) {
  if (per_class < 2) throw std::invalid_argument("balanced_eval_set: need >= 2 points per class");
  return draw(dists, std::vector<std::size_t>(dists.size(), per_class), seed, kEvalStream);
}

void write_dataset_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << "x1,x2,y\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    os << format_double(data.points[i].x()) << ',' << format_double(data.points[i].y()) << ','
       << data.labels[i] << '\n';
  }
  if (!os) throw IoError("write failed: " + path.string());
}

Dataset read_dataset_csv(const std::filesystem::path& path, std::size_t classes) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(is, line) || trim(line) != "x1,x2,y") {
    throw IoError(path.string() + ": expected header x1,x2,y");
  }
  Dataset d;
  std::size_t max_label = 0;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto f = split(line);
    if (f.size() != 3) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected 3 fields");
    }
    d.points.emplace_back(parse_double(f[0]), parse_double(f[1]));
    const auto y = parse_int(f[2]);
    if (y < 0) throw IoError(path.string() + ": negative label");
    d.labels.push_back(static_cast<std::size_t>(y));
    max_label = std::max(max_label, d.labels.back());
  }
  d.rebuild_index(classes ? classes : max_label + 1);
  return d;
}

void write_metadata(const std::filesystem::path& path,
                    const std::map<std::string, std::string>& entries) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  for (const auto& [k, v] : entries) os << k << '=' << v << '\n';
  if (!os) throw IoError("write failed: " + path.string());
}

std::map<std::string, std::string> read_metadata(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    out.emplace(std::string(trim(std::string_view(line).substr(0, eq))),
                std::string(trim(std::string_view(line).substr(eq + 1))));
  }
  return out;
}

}  // namespace gsr
