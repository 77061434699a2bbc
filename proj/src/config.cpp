#include "gsr/config.hpp"

#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "gsr/csv.hpp"

namespace gsr {
namespace {

struct Key {
  std::string name;  // section.key
  std::function<void(ExperimentConfig&, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;
  bool hashed = true;
};

std::size_t parse_size(std::string_view s) {
  const auto v = parse_int(s);
  if (v < 0) throw std::invalid_argument("expected a non-negative integer, got '" + std::string(s) + "'");
  return static_cast<std::size_t>(v);
}

bool parse_bool(std::string_view s) {
  s = trim(s);
  if (s == "true" || s == "on" || s == "yes" || s == "1") return true;
  if (s == "false" || s == "off" || s == "no" || s == "0") return false;
  throw std::invalid_argument("expected true/false, got '" + std::string(s) + "'");
}

template <typename T, typename Parse>
std::vector<T> parse_list(std::string_view s, Parse parse) {
  std::vector<T> out;
  for (auto field : split(s, ',')) {
    if (trim(field).empty()) continue;
    out.push_back(static_cast<T>(parse(field)));
  }
  if (out.empty()) throw std::invalid_argument("expected a non-empty comma-separated list");
  return out;
}

template <typename T, typename Fmt>
std::string format_list(const std::vector<T>& v, Fmt fmt) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += fmt(v[i]);
  }
  return out;
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

#define GSR_SIZE(section, key, field)                                                          \
  Key {                                                                                        \
    section "." key, [](ExperimentConfig& c, std::string_view v) { c.field = parse_size(v); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.field); }                      \
  }
#define GSR_REAL(section, key, field)                                                            \
  Key {                                                                                          \
    section "." key, [](ExperimentConfig& c, std::string_view v) { c.field = parse_double(v); }, \
        [](const ExperimentConfig& c) { return format_double(c.field); }                         \
  }
#define GSR_BOOL(section, key, field)                                                          \
  Key {                                                                                        \
    section "." key, [](ExperimentConfig& c, std::string_view v) { c.field = parse_bool(v); }, \
        [](const ExperimentConfig& c) { return fmt_bool(c.field); }                            \
  }

const std::vector<Key>& schema() {
  static const std::vector<Key> keys = [] {
    std::vector<Key> k{
        GSR_SIZE("data", "classes", data.classes),
        GSR_REAL("data", "rho", data.rho),
        GSR_SIZE("data", "n_max", data.n_max),
        GSR_REAL("data", "radius", data.radius),
        GSR_REAL("data", "sigma", data.sigma),
        GSR_BOOL("data", "share_dataset", data.share_dataset),

        GSR_SIZE("model", "latent_dim", train.gen.latent_dim),
        GSR_SIZE("model", "hidden", train.gen.hidden),
        GSR_REAL("model", "cbn_epsilon", train.gen.epsilon),
        GSR_BOOL("model", "dis_spectral_norm", train.dis.spectral_norm),
        GSR_SIZE("model", "dis_hidden", train.dis.hidden),

        GSR_SIZE("train", "steps", train.steps),
        GSR_SIZE("train", "n_dis", train.n_dis),
        GSR_SIZE("train", "batch_size", train.batch_size),
        GSR_REAL("train", "lr_g", train.adam_g.lr),
        GSR_REAL("train", "lr_d", train.adam_d.lr),
        GSR_REAL("train", "beta1", train.adam_g.beta1),
        GSR_REAL("train", "beta2", train.adam_g.beta2),
        GSR_REAL("train", "adam_eps", train.adam_g.eps),
        GSR_REAL("train", "ema_decay", train.ema_decay),
        GSR_SIZE("train", "ema_start", train.ema_start),

        Key{"reg.variant",
            [](ExperimentConfig& c, std::string_view v) {
              c.train.reg.variant = parse_reg_variant(std::string(trim(v)));
            },
            [](const ExperimentConfig& c) { return to_string(c.train.reg.variant); }},
        GSR_REAL("reg", "lambda_gsr", train.reg.lambda_gsr),
        GSR_REAL("reg", "alpha", train.reg.alpha),
        GSR_SIZE("reg", "groups", train.reg.groups),
        GSR_SIZE("reg", "power_iters", train.reg.power_iters),

        GSR_BOOL("lecam", "enabled", train.lecam),
        GSR_REAL("lecam", "lambda", train.lecam_lambda),
        GSR_REAL("lecam", "decay", train.lecam_decay),

        GSR_SIZE("eval", "interval", train.eval_interval),
        GSR_SIZE("eval", "samples", train.eval_samples),
        GSR_SIZE("eval", "log_interval", train.log_interval),
        GSR_REAL("eval", "coverage_multiplier", train.coverage_multiplier),
        GSR_REAL("eval", "collapse_std_fraction", train.collapse.std_fraction),
        GSR_REAL("eval", "collapse_sigma_growth", train.collapse.sigma_growth),
        Key{"eval.collapse_layer",
            [](ExperimentConfig& c, std::string_view v) {
              const std::size_t layer = parse_size(v);
              if (layer < 1) throw std::invalid_argument("layers are numbered from 1");
              c.train.collapse_layer = layer - 1;
            },
            [](const ExperimentConfig& c) { return std::to_string(c.train.collapse_layer + 1); }},
        GSR_SIZE("eval", "checkpoint_interval", train.checkpoint_interval),

        Key{"experiment.seeds",
            [](ExperimentConfig& c, std::string_view v) {
              c.seeds = parse_list<std::uint64_t>(v, parse_size);
            },
            [](const ExperimentConfig& c) {
              return format_list(c.seeds, [](std::uint64_t s) { return std::to_string(s); });
            },
            false},
        Key{"experiment.out_dir",
            [](ExperimentConfig& c, std::string_view v) { c.out_dir = std::string(trim(v)); },
            [](const ExperimentConfig& c) { return c.out_dir.string(); }, false},
        Key{"experiment.jobs",
            [](ExperimentConfig& c, std::string_view v) { c.jobs = parse_size(v); },
            [](const ExperimentConfig& c) { return std::to_string(c.jobs); }, false},
        Key{"experiment.sweep_groups",
            [](ExperimentConfig& c, std::string_view v) {
              c.sweep_groups = parse_list<std::size_t>(v, parse_size);
            },
            [](const ExperimentConfig& c) {
              return format_list(c.sweep_groups, [](std::size_t s) { return std::to_string(s); });
            }},
        Key{"experiment.sweep_lambda",
            [](ExperimentConfig& c, std::string_view v) {
              c.sweep_lambda = parse_list<double>(v, parse_double);
            },
            [](const ExperimentConfig& c) { return format_list(c.sweep_lambda, format_double); }},
        Key{"experiment.sweep_rho",
            [](ExperimentConfig& c, std::string_view v) {
              c.sweep_rho = parse_list<double>(v, parse_double);
            },
            [](const ExperimentConfig& c) { return format_list(c.sweep_rho, format_double); }},
    };
    return k;
  }();
  return keys;
}

#undef GSR_SIZE
#undef GSR_REAL
#undef GSR_BOOL

const Key* find_key(const std::string& name) {
  for (const Key& k : schema()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

std::string describe(const std::string& source, std::size_t line, const std::string& message) {
  return line ? source + ":" + std::to_string(line) + ": " + message : source + ": " + message;
}

}  // namespace

ConfigError::ConfigError(const std::string& source, std::size_t line, const std::string& message)
    : std::runtime_error(describe(source, line, message)), line_(line) {}

void ExperimentConfig::validate() const {
  if (data.classes < 2) throw std::invalid_argument("data.classes must be >= 2");
  if (!(data.sigma > 0.0)) throw std::invalid_argument("data.sigma must be positive");
  if (!(data.rho >= 1.0)) throw std::invalid_argument("data.rho must be >= 1");
  if (static_cast<double>(data.n_max) < data.rho) throw std::invalid_argument("data.n_max must be >= data.rho");
  if (train.gen.classes != data.classes || train.dis.classes != data.classes) {
    throw std::invalid_argument("model class count must follow data.classes");
  }
  if (train.steps < 1) throw std::invalid_argument("train.steps must be >= 1");
  if (seeds.empty()) throw std::invalid_argument("experiment.seeds is empty");
  if (jobs < 1) throw std::invalid_argument("experiment.jobs must be >= 1");
  train.validate();
  for (std::size_t g : sweep_groups) {
    if (g == 0 || train.gen.hidden % g != 0) {
      throw std::invalid_argument("experiment.sweep_groups: " + std::to_string(g) +
                                  " does not divide model.hidden " + std::to_string(train.gen.hidden));
    }
  }
}

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  ExperimentConfig cfg;
  std::istringstream is(text);
  std::string raw;
  std::string section;
  std::set<std::string> seen;
  std::size_t lineno = 0;
  while (std::getline(is, raw)) {
    ++lineno;
    std::string_view line = raw;
    if (const auto hash = line.find_first_of("#;"); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(source, lineno, "unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      bool known = false;
      for (const Key& k : schema()) known |= k.name.starts_with(section + ".");
      if (!known) throw ConfigError(source, lineno, "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(source, lineno, "expected key = value");
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    if (section.empty()) throw ConfigError(source, lineno, "key '" + key + "' outside a section");
    const std::string full = section + "." + key;
    const Key* k = find_key(full);
    if (!k) throw ConfigError(source, lineno, "unknown key '" + full + "'");
    if (!seen.insert(full).second) throw ConfigError(source, lineno, "duplicate key '" + full + "'");
    if (value.empty()) throw ConfigError(source, lineno, "key '" + full + "' has no value");
    try {
      k->set(cfg, value);
    } catch (const std::exception& e) {
      throw ConfigError(source, lineno, "key '" + full + "': " + e.what());
    }
  }
  cfg.train.gen.classes = cfg.data.classes;
  cfg.train.dis.classes = cfg.data.classes;
  // One pair of moment coefficients drives both optimizers.
  cfg.train.adam_d.beta1 = cfg.train.adam_g.beta1;
  cfg.train.adam_d.beta2 = cfg.train.adam_g.beta2;
  cfg.train.adam_d.eps = cfg.train.adam_g.eps;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(source, 0, e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string format_config(const ExperimentConfig& cfg) {
  std::string out;
  std::string section;
  for (const Key& k : schema()) {
    const auto dot = k.name.find('.');
    const std::string sec = k.name.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out += '\n';
      out += "[" + sec + "]\n";
      section = sec;
    }
    out += k.name.substr(dot + 1) + " = " + k.get(cfg) + "\n";
  }
  return out;
}

std::string config_hash(const ExperimentConfig& cfg) {
  std::string canonical;
  for (const Key& k : schema()) {
    if (k.hashed) canonical += k.name + "=" + k.get(cfg) + "\n";
  }
  return hex64(fnv1a(canonical));
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const Key& k : schema()) out.push_back(k.name);
  return out;
}

std::uint64_t dataset_seed(const DataConfig& data, std::uint64_t run_seed) {
  return data.share_dataset ? 0 : run_seed;
}

}  // namespace gsr
