#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

#include "gsr/config.hpp"
#include "gsr/experiment.hpp"

namespace fs = std::filesystem;
using namespace gsr;

namespace {

const char* kTiny =
    "[model]\nhidden = 16\ndis_hidden = 16\n"
    "[train]\nsteps = 6\nn_dis = 2\nbatch_size = 16\nema_start = 3\n"
    "[reg]\ngroups = 4\n"
    "[eval]\ninterval = 3\nsamples = 40\nlog_interval = 2\n"
    "[experiment]\nseeds = 0\n";

struct Scratch {
  fs::path dir;
  Scratch() {
    dir = fs::temp_directory_path() / ("gsr_cli_" + std::to_string(::getpid()) + "_" +
                                       std::to_string(counter()++));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  static int& counter() {
    static int n = 0;
    return n;
  }
  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(dir / name, std::ios::binary) << text;
    return dir / name;
  }
};

struct Result {
  int code = -1;
  std::string err;
  std::string out;
};

Result run(const std::string& args, const fs::path& scratch) {
  const fs::path out = scratch / "stdout.txt";
  const fs::path err = scratch / "stderr.txt";
  const std::string cmd = std::string("\"") + GSR_CLI_PATH + "\" " + args + " >\"" + out.string() +
                          "\" 2>\"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  auto slurp = [](const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
  };
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("train writes the per-seed files and exits 0") {
  Scratch s;
  const fs::path cfg = s.write("tiny.cfg", kTiny);
  const Result r = run("train --config \"" + cfg.string() + "\" --out \"" + (s.dir / "a").string() + "\"", s.dir);
  REQUIRE(r.code == 0);
  for (const char* f : {"runlog_0.csv", "metrics_0.csv", "samples_0.csv", "covariance_0.csv"}) {
    CHECK(fs::exists(s.dir / "a" / f));
  }
  const std::string log = slurp(s.dir / "a" / "runlog_0.csv");
  CHECK(log.starts_with("# gsrlab "));
  CHECK(log.find("# config_hash=" + config_hash(parse_config(kTiny))) != std::string::npos);
  CHECK(log.find("# seed=0") != std::string::npos);
  CHECK(log.find("step,") != std::string::npos);
}

TEST_CASE("repeated train runs are byte-identical") {
  Scratch s;
  const fs::path cfg = s.write("tiny.cfg", kTiny);
  for (const char* d : {"a", "b"}) {
    REQUIRE(run("train --config \"" + cfg.string() + "\" --seeds 3 --out \"" + (s.dir / d).string() + "\"",
                s.dir).code == 0);
  }
  for (const char* f : {"runlog_3.csv", "metrics_3.csv", "samples_3.csv", "covariance_3.csv"}) {
    CHECK(slurp(s.dir / "a" / f) == slurp(s.dir / "b" / f));
  }
}

TEST_CASE("a misspelt key exits 1 and names the key") {
  Scratch s;
  const fs::path cfg = s.write("bad.cfg", "[train]\nstpes = 10\n");
  const Result r = run("train --config \"" + cfg.string() + "\" --out \"" + (s.dir / "o").string() + "\"", s.dir);
  CHECK(r.code == 1);
  CHECK(r.err.find("stpes") != std::string::npos);
  CHECK(r.err.find(":2:") != std::string::npos);
}

TEST_CASE("an out-of-range value exits 1") {
  Scratch s;
  const fs::path cfg = s.write("bad.cfg", "[reg]\nalpha = 1.5\n");
  CHECK(run("print-config --config \"" + cfg.string() + "\"", s.dir).code == 1);
}

TEST_CASE("unknown subcommands and flags exit 1") {
  Scratch s;
  CHECK(run("frobnicate", s.dir).code == 1);
  CHECK(run("train --no-such-flag", s.dir).code == 1);
}

TEST_CASE("a diverging run exits 2") {
  Scratch s;
  const fs::path cfg = s.write("lr.cfg", std::string(kTiny) + "[train]\nlr_g = 1e300\nlr_d = 1e300\n");
  const Result r = run("train --config \"" + cfg.string() + "\" --out \"" + (s.dir / "o").string() + "\"", s.dir);
  CHECK(r.code == 2);
  CHECK(r.err.find("aborted") != std::string::npos);
  // The partial log is still written.
  CHECK(fs::exists(s.dir / "o" / "runlog_0.csv"));
}

TEST_CASE("a missing config file exits 3") {
  Scratch s;
  const Result r = run("train --config \"" + (s.dir / "nope.cfg").string() + "\"", s.dir);
  CHECK(r.code == 3);
  CHECK(r.err.find("nope.cfg") != std::string::npos);
}

TEST_CASE("an unwritable output path exits 3") {
  Scratch s;
  const fs::path cfg = s.write("tiny.cfg", kTiny);
  s.write("blocker", "x");
  const Result r = run("train --config \"" + cfg.string() + "\" --out \"" + (s.dir / "blocker" / "sub").string() + "\"",
                       s.dir);
  CHECK(r.code == 3);
}

TEST_CASE("print-config round-trips through the parser") {
  Scratch s;
  const fs::path cfg = s.write("tiny.cfg", kTiny);
  const Result r = run("print-config --config \"" + cfg.string() + "\"", s.dir);
  REQUIRE(r.code == 0);
  const ExperimentConfig back = parse_config(r.out);
  CHECK(config_hash(back) == config_hash(parse_config(kTiny)));
  CHECK(r.out.find("# config_hash=" + config_hash(back)) != std::string::npos);
}

TEST_CASE("ablate writes four arms") {
  Scratch s;
  const fs::path cfg = s.write("tiny.cfg", kTiny);
  const fs::path out = s.dir / "abl";
  REQUIRE(run("ablate --config \"" + cfg.string() + "\" --seeds 0,1 --jobs 2 --out \"" + out.string() + "\"",
              s.dir).code == 0);
  std::ifstream is(out / "summary.csv");
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(is, line)) {
    if (!line.starts_with("#")) rows.push_back(line);
  }
  REQUIRE(rows.size() == 5);
  CHECK(rows[0].starts_with("arm,lecam,variant,"));
  CHECK(rows[1].starts_with("baseline,0,none,"));
  CHECK(rows[2].starts_with("lecam,1,none,"));
  CHECK(rows[3].starts_with("gsr,0,gsr,"));
  CHECK(rows[4].starts_with("both,1,gsr,"));
  for (const char* arm : {"baseline", "lecam", "gsr", "both"}) {
    CHECK(fs::exists(out / arm / "runlog_0.csv"));
    CHECK(fs::exists(out / arm / "runlog_1.csv"));
  }
  CHECK(fs::exists(out / "runs.csv"));
}

TEST_CASE("sweep-groups reports complexity and flags the cheapest") {
  Scratch s;
  const fs::path cfg = s.write("tiny.cfg", std::string(kTiny) + "[experiment]\nsweep_groups = 1, 4, 8\n");
  const fs::path out = s.dir / "sw";
  REQUIRE(run("sweep-groups --config \"" + cfg.string() + "\" --out \"" + out.string() + "\"", s.dir).code == 0);
  const std::string text = slurp(out / "sweep_groups.csv");
  // hidden 16, 4 iterations: (n_g^2 + n_c^2) * 4
  CHECK(text.find("\n1,16,1028,0,") != std::string::npos);
  CHECK(text.find("\n4,4,128,1,") != std::string::npos);
  CHECK(text.find("\n8,2,272,0,") != std::string::npos);
}

TEST_CASE("sweep-groups rejects a width that leaves one column before training") {
  Scratch s;
  const fs::path cfg = s.write("tiny.cfg", std::string(kTiny) + "[experiment]\nsweep_groups = 4, 16\n");
  const Result r = run("sweep-groups --config \"" + cfg.string() + "\" --out \"" + (s.dir / "o").string() + "\"", s.dir);
  CHECK(r.code == 1);
  CHECK(r.out.find("groups_4") == std::string::npos);
}

TEST_CASE("plot renders the figures from a run directory") {
  Scratch s;
  const fs::path cfg = s.write("tiny.cfg", kTiny);
  const fs::path out = s.dir / "p";
  REQUIRE(run("train --config \"" + cfg.string() + "\" --out \"" + out.string() + "\"", s.dir).code == 0);
  REQUIRE(run("plot \"" + out.string() + "\"", s.dir).code == 0);
  for (const char* f : {"sigma_0.svg", "frechet_0.svg", "covariance_0.svg", "scatter_0.svg"}) {
    const fs::path p = out / "plots" / f;
    REQUIRE(fs::exists(p));
    CHECK(slurp(p).starts_with("<svg"));
  }
  CHECK(run("plot \"" + (s.dir / "missing").string() + "\"", s.dir).code == 3);
}

TEST_CASE("rarest_classes orders by count with label ties") {
  const std::vector<std::size_t> counts{50, 10, 30, 10, 5};
  CHECK(rarest_classes(counts, 3) == std::vector<std::size_t>{4, 1, 3});
  CHECK(rarest_classes(counts, 10).size() == 5);
}

TEST_CASE("aggregate keeps arm order and uses the sample deviation") {
  std::vector<RunSummary> runs;
  runs.push_back({"b", 0, 1.0, 2.0, true, false});
  runs.push_back({"a", 0, 5.0, 1.0, false, false});
  runs.push_back({"b", 1, 3.0, 4.0, false, true});
  const auto aggs = aggregate(runs);
  REQUIRE(aggs.size() == 2);
  CHECK(aggs[0].arm == "b");
  CHECK(aggs[0].runs == 2);
  CHECK(aggs[0].tail_mean == doctest::Approx(2.0));
  CHECK(aggs[0].tail_std == doctest::Approx(std::sqrt(2.0)));
  CHECK(aggs[0].frechet_mean == doctest::Approx(3.0));
  CHECK(aggs[0].rarest_collapsed == 1);
  CHECK(aggs[0].aborted == 1);
  CHECK(aggs[1].arm == "a");
  CHECK(aggs[1].tail_std == 0.0);
}

TEST_CASE("run_grid returns results in job order") {
  ExperimentConfig cfg = parse_config(kTiny);
  std::vector<GridJob> grid;
  for (std::uint64_t seed : {4, 1, 7}) grid.push_back({"j", cfg, seed});
  std::vector<std::uint64_t> done;
  const auto logs = run_grid(grid, 2, [&](const GridJob& j, const RunLog&) { done.push_back(j.seed); });
  REQUIRE(logs.size() == 3);
  CHECK(done.size() == 3);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CHECK(logs[i].metadata.at("seed") == std::to_string(grid[i].seed));
    const RunLog solo = run_one(cfg, grid[i].seed);
    CHECK(solo.snapshots.back().mean_frechet == logs[i].snapshots.back().mean_frechet);
  }
}
