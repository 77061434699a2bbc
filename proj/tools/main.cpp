// gsrlab: training, ablation and sweep driver for the long-tailed 2-D mixture.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gsr/config.hpp"
#include "gsr/csv.hpp"
#include "gsr/experiment.hpp"
#include "gsr/metrics.hpp"
#include "gsr/svg.hpp"

namespace fs = std::filesystem;
using namespace gsr;

namespace {

enum Exit { kOk = 0, kConfigError = 1, kAborted = 2, kIoError = 3 };

struct CommonArgs {
  std::string config;
  std::string seeds;
  std::string out;
  std::size_t jobs = 0;
};

ExperimentConfig resolve(const CommonArgs& args) {
  ExperimentConfig cfg = args.config.empty() ? parse_config("", "<defaults>") : load_config(args.config);
  if (!args.seeds.empty()) {
    std::vector<std::uint64_t> seeds;
    for (auto f : split(args.seeds, ',')) {
      if (trim(f).empty()) continue;
      const auto v = parse_int(f);
      if (v < 0) throw ConfigError("--seeds", 0, "seeds must be non-negative");
      seeds.push_back(static_cast<std::uint64_t>(v));
    }
    if (seeds.empty()) throw ConfigError("--seeds", 0, "empty seed list");
    cfg.seeds = seeds;
  }
  if (!args.out.empty()) cfg.out_dir = args.out;
  if (args.jobs > 0) cfg.jobs = args.jobs;
  return cfg;
}

std::ofstream open_summary(const fs::path& path, const ExperimentConfig& cfg, const char* kind) {
  fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << "# gsrlab " << kind << " v1\n";
  os << "# config_hash=" << config_hash(cfg) << '\n';
  std::string seeds;
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) seeds += (i ? " " : "") + std::to_string(cfg.seeds[i]);
  os << "# seeds=" << seeds << '\n';
  return os;
}

void close_summary(std::ofstream& os, const fs::path& path) {
  os.flush();
  if (!os) throw IoError("write failed: " + path.string());
}

void progress(const GridJob& job, const RunLog& log) {
  const MetricSnapshot& s = log.snapshots.back();
  std::printf("  %-14s seed %-3llu step %-6zu mean frechet %.4f%s\n", job.label.c_str(),
              static_cast<unsigned long long>(job.seed), s.step, s.mean_frechet,
              log.aborted ? "  [aborted]" : "");
  std::fflush(stdout);
}

/// Runs `labels x seeds`, writes each run under out/<label>/, returns summaries.
std::vector<RunSummary> run_arms(const std::vector<std::pair<std::string, ExperimentConfig>>& arms,
                                 const ExperimentConfig& base, bool& aborted) {
  std::vector<GridJob> grid;
  for (const auto& [label, cfg] : arms) {
    for (std::uint64_t seed : base.seeds) grid.push_back({label, cfg, seed});
  }
  const auto logs = run_grid(grid, base.jobs, progress);
  std::vector<RunSummary> out;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const fs::path dir = arms.size() == 1 && arms.front().first.empty()
                             ? base.out_dir
                             : base.out_dir / grid[i].label;
    write_run_outputs(dir, grid[i].seed, logs[i]);
    out.push_back(summarize(grid[i].label, grid[i].seed, logs[i], grid[i].cfg.data.spec().counts));
    aborted |= logs[i].aborted;
  }
  return out;
}

void write_runs_csv(const fs::path& path, const ExperimentConfig& cfg,
                    const std::vector<RunSummary>& runs) {
  std::ofstream os = open_summary(path, cfg, "runs");
  os << "arm,seed,tail_frechet,mean_frechet,rarest_collapsed,aborted\n";
  for (const RunSummary& r : runs) {
    os << r.arm << ',' << r.seed << ',' << format_double(r.tail_frechet) << ','
       << format_double(r.mean_frechet) << ',' << (r.rarest_collapsed ? 1 : 0) << ','
       << (r.aborted ? 1 : 0) << '\n';
  }
  close_summary(os, path);
}

void print_aggregates(const std::vector<ArmAggregate>& aggs) {
  std::printf("%-14s %5s %22s %22s %9s\n", "arm", "runs", "tail frechet", "mean frechet", "collapsed");
  for (const ArmAggregate& a : aggs) {
    std::printf("%-14s %5zu %12.4f +- %-7.4f %12.4f +- %-7.4f %9zu\n", a.arm.c_str(), a.runs,
                a.tail_mean, a.tail_std, a.frechet_mean, a.frechet_std, a.rarest_collapsed);
  }
}

int cmd_train(const CommonArgs& args) {
  const ExperimentConfig cfg = resolve(args);
  fs::create_directories(cfg.out_dir);
  bool aborted = false;
  std::vector<GridJob> grid;
  for (std::uint64_t seed : cfg.seeds) grid.push_back({"train", cfg, seed});
  std::vector<RunLog> logs;
  if (cfg.train.checkpoint_interval > 0) {
    // Checkpoints are written from inside the run, so go through run_one directly.
    const fs::path ckpt = cfg.out_dir / "checkpoints";
    fs::create_directories(ckpt);
    for (const GridJob& job : grid) {
      RunOptions opt;
      opt.checkpoint_dir = ckpt;
      opt.checkpoint_prefix = "seed" + std::to_string(job.seed);
      logs.push_back(run_one(job.cfg, job.seed, opt));
      progress(job, logs.back());
    }
  } else {
    logs = run_grid(grid, cfg.jobs, progress);
  }
  for (std::size_t i = 0; i < grid.size(); ++i) {
    write_run_outputs(cfg.out_dir, grid[i].seed, logs[i]);
    if (logs[i].aborted) {
      aborted = true;
      std::fprintf(stderr, "seed %llu aborted: %s\n", static_cast<unsigned long long>(grid[i].seed),
                   logs[i].abort_reason.c_str());
    }
  }
  return aborted ? kAborted : kOk;
}

int cmd_arms(const CommonArgs& args, const std::vector<ArmSpec>& specs, const char* summary_name) {
  const ExperimentConfig cfg = resolve(args);
  std::vector<std::pair<std::string, ExperimentConfig>> arms;
  for (const ArmSpec& a : specs) arms.emplace_back(a.name, apply_arm(cfg, a));
  bool aborted = false;
  const auto runs = run_arms(arms, cfg, aborted);
  write_runs_csv(cfg.out_dir / "runs.csv", cfg, runs);
  const auto aggs = aggregate(runs);
  const fs::path path = cfg.out_dir / summary_name;
  std::ofstream os = open_summary(path, cfg, "summary");
  os << "arm,lecam,variant,lambda_gsr,lambda_lc,runs,tail_frechet_mean,tail_frechet_std,"
        "mean_frechet_mean,mean_frechet_std,rarest_collapsed,aborted\n";
  for (std::size_t i = 0; i < aggs.size(); ++i) {
    const ArmAggregate& a = aggs[i];
    const TrainConfig& tc = arms[i].second.train;
    const bool reg_on = tc.reg.variant == RegVariant::gsr || tc.reg.variant == RegVariant::gsrip;
    os << a.arm << ',' << (tc.lecam ? 1 : 0) << ',' << to_string(tc.reg.variant) << ','
       << format_double(reg_on ? tc.reg.lambda_gsr : 0.0) << ','
       << format_double(tc.lecam ? tc.lecam_lambda : 0.0) << ',' << a.runs << ','
       << format_double(a.tail_mean) << ',' << format_double(a.tail_std) << ','
       << format_double(a.frechet_mean) << ',' << format_double(a.frechet_std) << ','
       << a.rarest_collapsed << ',' << a.aborted << '\n';
  }
  close_summary(os, path);
  print_aggregates(aggs);
  return aborted ? kAborted : kOk;
}

int cmd_sweep_groups(const CommonArgs& args) {
  const ExperimentConfig cfg = resolve(args);
  std::vector<std::pair<std::string, ExperimentConfig>> arms;
  for (std::size_t g : cfg.sweep_groups) {
    ExperimentConfig c = cfg;
    c.train.reg.groups = g;
    if (c.train.reg.variant == RegVariant::none) c.train.reg.variant = RegVariant::gsr;
    try {
      c.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError("sweep_groups", 0, std::to_string(g) + ": " + e.what());
    }
    arms.emplace_back("groups_" + std::to_string(g), c);
  }
  bool aborted = false;
  const auto runs = run_arms(arms, cfg, aborted);
  write_runs_csv(cfg.out_dir / "runs.csv", cfg, runs);
  const auto aggs = aggregate(runs);
  const std::size_t d = cfg.train.gen.hidden;
  std::uint64_t best = ~std::uint64_t{0};
  for (std::size_t g : cfg.sweep_groups) {
    best = std::min(best, iteration_complexity(g, d / g, cfg.train.reg.power_iters));
  }
  const fs::path path = cfg.out_dir / "sweep_groups.csv";
  std::ofstream os = open_summary(path, cfg, "sweep_groups");
  os << "n_g,n_c,iteration_complexity,min_complexity,runs,tail_frechet_mean,tail_frechet_std,"
        "mean_frechet_mean,mean_frechet_std\n";
  std::printf("%5s %5s %10s %12s %12s\n", "n_g", "n_c", "complexity", "tail frechet", "mean frechet");
  for (std::size_t i = 0; i < aggs.size(); ++i) {
    const std::size_t g = cfg.sweep_groups[i];
    const std::uint64_t cx = iteration_complexity(g, d / g, cfg.train.reg.power_iters);
    os << g << ',' << d / g << ',' << cx << ',' << (cx == best ? 1 : 0) << ',' << aggs[i].runs << ','
       << format_double(aggs[i].tail_mean) << ',' << format_double(aggs[i].tail_std) << ','
       << format_double(aggs[i].frechet_mean) << ',' << format_double(aggs[i].frechet_std) << '\n';
    std::printf("%5zu %5zu %10llu %12.4f %12.4f%s\n", g, d / g, static_cast<unsigned long long>(cx),
                aggs[i].tail_mean, aggs[i].frechet_mean, cx == best ? "  (min cost)" : "");
  }
  close_summary(os, path);
  return aborted ? kAborted : kOk;
}

int cmd_sweep_values(const CommonArgs& args, bool lambda) {
  const ExperimentConfig cfg = resolve(args);
  const auto& values = lambda ? cfg.sweep_lambda : cfg.sweep_rho;
  std::vector<std::pair<std::string, ExperimentConfig>> arms;
  for (double v : values) {
    ExperimentConfig c = cfg;
    if (lambda) {
      c.train.reg.lambda_gsr = v;
      if (c.train.reg.variant == RegVariant::none) c.train.reg.variant = RegVariant::gsr;
    } else {
      c.data.rho = v;
    }
    try {
      c.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(lambda ? "sweep_lambda" : "sweep_rho", 0, e.what());
    }
    arms.emplace_back((lambda ? "lambda_" : "rho_") + format_double(v), c);
  }
  bool aborted = false;
  const auto runs = run_arms(arms, cfg, aborted);
  write_runs_csv(cfg.out_dir / "runs.csv", cfg, runs);
  const auto aggs = aggregate(runs);
  const char* key = lambda ? "lambda_gsr" : "rho";
  const fs::path path = cfg.out_dir / (lambda ? "sweep_lambda.csv" : "sweep_rho.csv");
  std::ofstream os = open_summary(path, cfg, lambda ? "sweep_lambda" : "sweep_rho");
  os << key << ",runs,tail_frechet_mean,tail_frechet_std,mean_frechet_mean,mean_frechet_std,rarest_collapsed\n";
  for (std::size_t i = 0; i < aggs.size(); ++i) {
    os << format_double(values[i]) << ',' << aggs[i].runs << ',' << format_double(aggs[i].tail_mean)
       << ',' << format_double(aggs[i].tail_std) << ',' << format_double(aggs[i].frechet_mean) << ','
       << format_double(aggs[i].frechet_std) << ',' << aggs[i].rarest_collapsed << '\n';
  }
  close_summary(os, path);
  print_aggregates(aggs);
  return aborted ? kAborted : kOk;
}

int cmd_plot(const std::string& run_dir, const std::string& seeds_arg, const std::string& out_arg) {
  const fs::path dir(run_dir);
  const fs::path out = out_arg.empty() ? dir / "plots" : fs::path(out_arg);
  fs::create_directories(out);
  std::vector<std::string> seeds;
  for (auto f : split(seeds_arg.empty() ? std::string("0") : seeds_arg, ',')) {
    if (!trim(f).empty()) seeds.emplace_back(trim(f));
  }
  for (const std::string& seed : seeds) {
    const Table runlog = read_table(dir / ("runlog_" + seed + ".csv"));
    const Table metrics = read_table(dir / ("metrics_" + seed + ".csv"));
    const std::size_t classes = static_cast<std::size_t>(
        std::count_if(runlog.columns.begin(), runlog.columns.end(),
                      [](const std::string& c) { return c.starts_with("sigma_gamma_l1_c"); }));
    if (classes == 0) throw IoError("missing column 'sigma_gamma_l1_c0'");

    LinePlot sigma{"sigma_max of grouped gamma, layer 1 (seed " + seed + ")", "generator step",
                   "sigma_max", {}, false};
    const auto steps = runlog.column("step");
    for (std::size_t y = 0; y < classes; ++y) {
      sigma.series.push_back({"class " + std::to_string(y), steps,
                              runlog.column("sigma_gamma_l1_c" + std::to_string(y))});
    }
    write_text(out / ("sigma_" + seed + ".svg"), render_line_plot(sigma));

    LinePlot fr{"per-class Frechet distance (seed " + seed + ")", "generator step",
                "Frechet (log scale)", {}, true};
    const auto m_step = metrics.column("step");
    const auto m_class = metrics.column("class");
    const auto m_fr = metrics.column("frechet");
    for (std::size_t y = 0; y < classes; ++y) {
      Series s{"class " + std::to_string(y), {}, {}};
      for (std::size_t i = 0; i < m_step.size(); ++i) {
        if (static_cast<std::size_t>(m_class[i]) == y) {
          s.x.push_back(m_step[i]);
          s.y.push_back(m_fr[i]);
        }
      }
      fr.series.push_back(std::move(s));
    }
    write_text(out / ("frechet_" + seed + ".svg"), render_line_plot(fr));

    const fs::path cov_path = dir / ("covariance_" + seed + ".csv");
    if (fs::exists(cov_path)) {
      const Table cov = read_table(cov_path);
      std::map<std::size_t, HeatmapPanel> panels;
      const auto layer = cov.column("layer");
      const auto cls = cov.column("class");
      const auto row = cov.column("row");
      const auto col = cov.column("col");
      const auto val = cov.column("value");
      std::size_t n = 0;
      for (double r : row) n = std::max(n, static_cast<std::size_t>(r) + 1);
      for (std::size_t i = 0; i < val.size(); ++i) {
        if (layer[i] != 1.0) continue;
        auto& p = panels[static_cast<std::size_t>(cls[i])];
        if (p.n == 0) {
          p.n = n;
          p.values.assign(n * n, 0.0);
          p.title = "class " + std::to_string(static_cast<std::size_t>(cls[i]));
        }
        p.values[static_cast<std::size_t>(row[i]) * n + static_cast<std::size_t>(col[i])] = val[i];
      }
      std::vector<HeatmapPanel> list;
      for (auto& [k, p] : panels) list.push_back(std::move(p));
      write_text(out / ("covariance_" + seed + ".svg"),
                 render_heatmaps("grouped gamma covariance, layer 1 (seed " + seed + ")", list));
    }

    const fs::path samples_path = dir / ("samples_" + seed + ".csv");
    if (fs::exists(samples_path)) {
      const Table samples = read_table(samples_path);
      std::vector<ScatterPanel> panels(classes);
      const auto x1 = samples.column("x1");
      const auto x2 = samples.column("x2");
      const auto ys = samples.column("y");
      for (std::size_t i = 0; i < ys.size(); ++i) {
        const auto y = static_cast<std::size_t>(ys[i]);
        if (y < classes) panels[y].points.emplace_back(x1[i], x2[i]);
      }
      for (std::size_t y = 0; y < classes; ++y) {
        panels[y].title = "class " + std::to_string(y);
        if (panels[y].points.size() >= 2) panels[y].centre = sample_moments(panels[y].points).mean;
      }
      write_text(out / ("scatter_" + seed + ".svg"),
                 render_scatter("generated samples, final snapshot (seed " + seed + ")", panels));
    }
    std::printf("wrote plots for seed %s to %s\n", seed.c_str(), out.string().c_str());
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gsrlab: group spectral regularization experiments on a long-tailed 2-D mixture"};
  app.require_subcommand(1);

  CommonArgs common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "Config file (defaults apply when omitted)");
    sub->add_option("--seeds", common.seeds, "Comma-separated seed list, overrides experiment.seeds");
    sub->add_option("--out", common.out, "Output directory, overrides experiment.out_dir");
    sub->add_option("--jobs", common.jobs, "Parallel runs, overrides experiment.jobs");
  };
  auto* train = app.add_subcommand("train", "Train one run per seed");
  auto* ablate = app.add_subcommand("ablate", "LeCam x gSR ablation (4 arms)");
  auto* variants = app.add_subcommand("variants", "Baseline, gSN, gSRIP and gSR arms");
  auto* sweep_groups = app.add_subcommand("sweep-groups", "Sweep the group count n_g");
  auto* sweep_lambda = app.add_subcommand("sweep-lambda", "Sweep lambda_gsr");
  auto* sweep_rho = app.add_subcommand("sweep-rho", "Sweep the imbalance ratio");
  for (auto* s : {train, ablate, variants, sweep_groups, sweep_lambda, sweep_rho}) add_common(s);

  std::string plot_dir, plot_seeds, plot_out;
  auto* plot = app.add_subcommand("plot", "Render SVG figures from a run directory");
  plot->add_option("run_dir", plot_dir, "Directory holding runlog_<seed>.csv files")->required();
  plot->add_option("--seeds", plot_seeds, "Seeds to plot (default 0)");
  plot->add_option("--out", plot_out, "Output directory (default <run_dir>/plots)");
  auto* dump = app.add_subcommand("print-config", "Print the resolved config");
  add_common(dump);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*train) return cmd_train(common);
    if (*ablate) return cmd_arms(common, ablation_arms(), "summary.csv");
    if (*variants) return cmd_arms(common, variant_arms(), "summary.csv");
    if (*sweep_groups) return cmd_sweep_groups(common);
    if (*sweep_lambda) return cmd_sweep_values(common, true);
    if (*sweep_rho) return cmd_sweep_values(common, false);
    if (*plot) return cmd_plot(plot_dir, plot_seeds, plot_out);
    if (*dump) {
      const ExperimentConfig cfg = resolve(common);
      std::cout << format_config(cfg) << "# config_hash=" << config_hash(cfg) << '\n';
      return kOk;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  } catch (const IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kIoError;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kIoError;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kIoError;
  }
  return kOk;
}
