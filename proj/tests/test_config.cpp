#include <doctest.h>

#include <algorithm>
#include <string>

#include "gsr/config.hpp"

using namespace gsr;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text, "test.cfg");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("empty document yields the defaults") {
  const ExperimentConfig cfg = parse_config("");
  CHECK(cfg.data.classes == 8);
  CHECK(cfg.data.rho == 100.0);
  CHECK(cfg.train.steps == 20000);
  CHECK(cfg.train.n_dis == 5);
  CHECK(cfg.train.adam_g.lr == 2e-4);
  CHECK(cfg.train.adam_g.beta1 == 0.5);
  CHECK(cfg.train.adam_g.beta2 == 0.9);
  CHECK(cfg.train.ema_decay == 0.999);
  CHECK(cfg.train.ema_start == 1000);
  CHECK(cfg.train.reg.lambda_gsr == 0.5);
  CHECK(cfg.train.reg.alpha == 0.99);
  CHECK(cfg.train.reg.power_iters == 4);
  CHECK(cfg.train.lecam);
  CHECK(cfg.train.lecam_lambda == 0.1);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{0, 1, 2, 3, 4});
}

TEST_CASE("sections, comments and lists") {
  const ExperimentConfig cfg = parse_config(R"(
# leading comment
[data]
rho = 1000   ; trailing comment
[reg]
variant = gsrip
groups = 4
[lecam]
enabled = false
[experiment]
seeds = 3, 7,11
sweep_lambda = 0.25,1
)");
  CHECK(cfg.data.rho == 1000.0);
  CHECK(cfg.train.reg.variant == RegVariant::gsrip);
  CHECK(cfg.train.reg.groups == 4);
  CHECK_FALSE(cfg.train.lecam);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{3, 7, 11});
  CHECK(cfg.sweep_lambda == std::vector<double>{0.25, 1.0});
}

TEST_CASE("errors name the offending key and line") {
  CHECK(error_of("[train]\nsteps = 10\nstpes = 5\n") == "test.cfg:3: unknown key 'train.stpes'");
  CHECK(error_of("[traning]\n").find("test.cfg:1:") == 0);
  CHECK(error_of("[traning]\n").find("traning") != std::string::npos);
  CHECK(error_of("steps = 5\n").find("test.cfg:1:") == 0);
  CHECK(error_of("[train]\nsteps = 5\nsteps = 6\n").find("test.cfg:3:") == 0);
  CHECK(error_of("[train]\nsteps =\n").find("test.cfg:2:") == 0);
  CHECK(error_of("[train]\nsteps = ten\n").find("train.steps") != std::string::npos);
  CHECK(error_of("[train]\nsteps = -3\n").find("train.steps") != std::string::npos);
  CHECK(error_of("[reg]\nvariant = svd\n").find("test.cfg:2:") == 0);
  CHECK(error_of("[train]\nsteps 5\n").find("test.cfg:2:") == 0);
}

TEST_CASE("cross-field validation reports line 0") {
  try {
    parse_config("[reg]\ngroups = 5\n", "x.cfg");
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.line() == 0);
    CHECK(std::string(e.what()).find("groups") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config("[experiment]\nsweep_groups = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[data]\nrho = 0.5\n"), ConfigError);
}

TEST_CASE("canonical formatting round-trips") {
  const ExperimentConfig a = parse_config("[data]\nrho = 10\n[train]\nlr_g = 1e-3\n[experiment]\nseeds = 1, 2\n");
  const std::string text = format_config(a);
  const ExperimentConfig b = parse_config(text);
  CHECK(format_config(b) == text);
  CHECK(config_hash(a) == config_hash(b));
  CHECK(b.train.adam_g.lr == 1e-3);
  CHECK(b.seeds == std::vector<std::uint64_t>{1, 2});
  for (const std::string& key : config_keys()) {
    const auto dot = key.find('.');
    CHECK(text.find("[" + key.substr(0, dot) + "]") != std::string::npos);
    CHECK(text.find("\n" + key.substr(dot + 1) + " = ") != std::string::npos);
  }
}

TEST_CASE("config hash covers run-affecting keys only") {
  const std::string base = config_hash(parse_config(""));
  CHECK(base.size() == 16);
  CHECK(config_hash(parse_config("[experiment]\nseeds = 9\nout_dir = elsewhere\njobs = 4\n")) == base);
  CHECK(config_hash(parse_config("[train]\nsteps = 19999\n")) != base);
  CHECK(config_hash(parse_config("[reg]\nlambda_gsr = 0.25\n")) != base);
  CHECK(config_hash(parse_config("[eval]\ncollapse_sigma_growth = 4\n")) != base);
}

TEST_CASE("dataset seed") {
  DataConfig d;
  CHECK(dataset_seed(d, 3) != dataset_seed(d, 4));
  d.share_dataset = true;
  CHECK(dataset_seed(d, 3) == dataset_seed(d, 4));
}
