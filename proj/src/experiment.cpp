#include "gsr/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>

#include "gsr/csv.hpp"

namespace gsr {

std::vector<ArmSpec> ablation_arms() {
  return {{"baseline", false, RegVariant::none},
          {"lecam", true, RegVariant::none},
          {"gsr", false, RegVariant::gsr},
          {"both", true, RegVariant::gsr}};
}

std::vector<ArmSpec> variant_arms() {
  return {{"baseline", false, RegVariant::none},
          {"gsn", false, RegVariant::gsn},
          {"gsrip", false, RegVariant::gsrip},
          {"gsr", false, RegVariant::gsr}};
}

ExperimentConfig apply_arm(ExperimentConfig cfg, const ArmSpec& arm) {
  cfg.train.lecam = arm.lecam;
  cfg.train.reg.variant = arm.variant;
  return cfg;
}

RunLog run_one(const ExperimentConfig& cfg, std::uint64_t seed, const RunOptions& options) {
  const LongTailSpec spec = cfg.data.spec();
  const auto dists = cfg.data.distributions();
  const Dataset data = sample_dataset(spec, dists, dataset_seed(cfg.data, seed));
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  RunLog log = run_training(tc, data, dists, options);
  log.metadata["config_hash"] = config_hash(cfg);
  log.metadata["rho"] = format_double(cfg.data.rho);
  log.metadata["collapse_std_fraction"] = format_double(cfg.train.collapse.std_fraction);
  log.metadata["collapse_sigma_growth"] = format_double(cfg.train.collapse.sigma_growth);
  if (log.aborted) log.metadata["aborted"] = log.abort_reason;
  return log;
}

std::vector<std::size_t> rarest_classes(std::span<const std::size_t> counts, std::size_t n) {
  std::vector<std::size_t> order(counts.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return counts[a] < counts[b]; });
  order.resize(std::min(n, order.size()));
  return order;
}

RunSummary summarize(const std::string& arm, std::uint64_t seed, const RunLog& log,
                     std::span<const std::size_t> counts) {
  RunSummary s;
  s.arm = arm;
  s.seed = seed;
  s.aborted = log.aborted;
  if (log.snapshots.empty()) return s;
  const MetricSnapshot& last = log.snapshots.back();
  const auto tail = rarest_classes(counts, 3);
  for (std::size_t y : tail) s.tail_frechet += last.classes[y].frechet;
  s.tail_frechet /= static_cast<double>(tail.size());
  s.mean_frechet = last.mean_frechet;
  s.rarest_collapsed = last.collapsed[tail.front()];
  return s;
}

std::vector<RunLog> run_grid(std::span<const GridJob> grid, std::size_t jobs,
                             const std::function<void(const GridJob&, const RunLog&)>& on_done) {
  std::vector<RunLog> out(grid.size());
  std::atomic<std::size_t> next{0};
  std::mutex lock;
  std::exception_ptr failure;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= grid.size()) return;
      try {
        out[i] = run_one(grid[i].cfg, grid[i].seed);
        if (on_done) {
          std::lock_guard<std::mutex> g(lock);
          on_done(grid[i], out[i]);
        }
      } catch (...) {
        std::lock_guard<std::mutex> g(lock);
        if (!failure) failure = std::current_exception();
        next = grid.size();
      }
    }
  };
  const std::size_t n = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(1, grid.size()));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

void write_run_outputs(const std::filesystem::path& dir, std::uint64_t seed, const RunLog& log) {
  std::filesystem::create_directories(dir);
  const std::string s = std::to_string(seed);
  log.write_steps_csv(dir / ("runlog_" + s + ".csv"));
  log.write_metrics_csv(dir / ("metrics_" + s + ".csv"));
  log.write_samples_csv(dir / ("samples_" + s + ".csv"));
  log.write_covariance_csv(dir / ("covariance_" + s + ".csv"));
}

std::vector<ArmAggregate> aggregate(std::span<const RunSummary> runs) {
  std::vector<ArmAggregate> out;
  std::map<std::string, std::vector<const RunSummary*>> by_arm;
  for (const RunSummary& r : runs) {
    if (!by_arm.count(r.arm)) out.push_back(ArmAggregate{r.arm});
    by_arm[r.arm].push_back(&r);
  }
  auto stats = [](const std::vector<double>& v, double& mean, double& sd) {
    mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  };
  for (ArmAggregate& a : out) {
    const auto& rs = by_arm[a.arm];
    std::vector<double> tail, all;
    for (const RunSummary* r : rs) {
      tail.push_back(r->tail_frechet);
      all.push_back(r->mean_frechet);
      a.rarest_collapsed += r->rarest_collapsed ? 1 : 0;
      a.aborted += r->aborted ? 1 : 0;
    }
    a.runs = rs.size();
    stats(tail, a.tail_mean, a.tail_std);
    stats(all, a.frechet_mean, a.frechet_std);
  }
  return out;
}

}  // namespace gsr
