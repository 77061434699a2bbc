#include "gsr/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "gsr/csv.hpp"
#include "gsr/ops.hpp"
#include "gsr/seeding.hpp"

namespace gsr {
namespace {

constexpr std::uint64_t kGenStream = 0x9e17;
constexpr std::uint64_t kDisStream = 0xd157;
constexpr std::uint64_t kLoopStream = 0x1007;
constexpr std::uint64_t kRegStream = 0x5e9a;
constexpr std::uint64_t kMonitorStream = 0x3047;
constexpr std::uint64_t kEvalStream = 0xe7a1;

constexpr const char* kCheckpointMagic = "gsrlab-checkpoint v1";

Tensor latent_batch(std::mt19937_64& rng, std::size_t batch, std::size_t dim) {
  std::normal_distribution<double> normal;
  Tensor z(Shape{batch, dim});
  for (double& v : z.values()) v = normal(rng);
  return z;
}

Tensor real_batch(std::mt19937_64& rng, const Dataset& data, std::size_t y, std::size_t batch) {
  const auto& idx = data.by_class.at(y);
  if (idx.empty()) throw std::invalid_argument("train_step: class " + std::to_string(y) + " has no data");
  std::uniform_int_distribution<std::size_t> pick(0, idx.size() - 1);
  Tensor x(Shape{batch, 2});
  for (std::size_t i = 0; i < batch; ++i) {
    const Point2& p = data.points[idx[pick(rng)]];
    x.at(i, 0) = p.x();
    x.at(i, 1) = p.y();
  }
  return x;
}

double mean_of(const Tensor& t) {
  double s = 0.0;
  for (double v : t.values()) s += v;
  return s / static_cast<double>(t.size());
}

std::optional<GainNormalization> gain_norm_for(const TrainConfig& cfg, PowerIterTable& states) {
  if (cfg.reg.variant != RegVariant::gsn) return std::nullopt;
  return GainNormalization{cfg.reg.groups, cfg.reg.power_iters, &states};
}

void check_finite(double v, const char* what, std::size_t step) {
  if (!std::isfinite(v)) {
    throw TrainingAborted(std::string(what) + " became non-finite at step " + std::to_string(step));
  }
}

void check_params(std::span<Parameter* const> params, std::size_t step) {
  for (const Parameter* p : params) {
    if (!p->value.all_finite()) {
      throw TrainingAborted("parameter " + p->name + " became non-finite at step " +
                            std::to_string(step));
    }
  }
}

/// sigma_max of every (layer, class) gamma and beta row, warm-started from `states`.
void monitor_sigmas(const GeneratorNet& gen, std::size_t groups, std::size_t iters,
                    PowerIterTable& states, std::vector<double>& sg, std::vector<double>& sb) {
  sg.clear();
  sb.clear();
  for (const CbnLayer& layer : gen.cbn_layers()) {
    const std::size_t d = layer.features();
    for (std::size_t y = 0; y < layer.classes(); ++y) {
      const std::span<const double> g(layer.gamma.value.data() + y * d, d);
      const std::span<const double> b(layer.beta.value.data() + y * d, d);
      sg.push_back(sigma_max_power(group(g, groups), iters,
                                   states.at(layer.layer_index, y, ParamKind::gamma)).sigma);
      sb.push_back(sigma_max_power(group(b, groups), iters,
                                   states.at(layer.layer_index, y, ParamKind::beta)).sigma);
    }
  }
}

std::string column_label(const char* kind, std::size_t layer, std::size_t y) {
  return std::string(kind) + "_l" + std::to_string(layer + 1) + "_c" + std::to_string(y);
}

std::ofstream open_csv(const std::filesystem::path& path, const RunLog& log, const char* kind) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << "# gsrlab " << kind << " v1\n";
  for (const auto& [k, v] : log.metadata) os << "# " << k << '=' << v << '\n';
  return os;
}

void finish(std::ofstream& os, const std::filesystem::path& path) {
  os.flush();
  if (!os) throw IoError("write failed: " + path.string());
}

}  // namespace

AdamState AdamState::for_params(std::span<Parameter* const> params) {
  AdamState s;
  for (const Parameter* p : params) {
    s.m.emplace_back(p->value.shape());
    s.v.emplace_back(p->value.shape());
  }
  return s;
}

void optimizer_step(std::span<Parameter* const> params, AdamState& state, const AdamConfig& cfg) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("optimizer_step: accumulators do not match parameters");
  }
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    if (p.grad.shape() != p.value.shape()) {
      throw ShapeError("optimizer_step: gradient of " + p.name + " has shape " +
                       shape_string(p.grad.shape()));
    }
    auto w = p.value.values();
    auto g = p.grad.values();
    auto m = state.m[i].values();
    auto v = state.v[i].values();
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double mhat = c1 > 0.0 ? m[j] / c1 : m[j];
      const double vhat = c2 > 0.0 ? v[j] / c2 : v[j];
      w[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

void TrainConfig::validate() const {
  reg.validate();
  if (n_dis < 1) throw std::invalid_argument("n_dis must be >= 1");
  if (batch_size < 2) throw std::invalid_argument("batch_size must be >= 2 for batch statistics");
  for (const AdamConfig* a : {&adam_g, &adam_d}) {
    if (!(a->lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (!(a->beta1 >= 0.0 && a->beta1 < 1.0) || !(a->beta2 >= 0.0 && a->beta2 < 1.0)) {
      throw std::invalid_argument("adam betas must lie in [0, 1)");
    }
    if (!(a->eps > 0.0)) throw std::invalid_argument("adam eps must be positive");
  }
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw std::invalid_argument("ema_decay must lie in [0, 1)");
  if (!(lecam_lambda >= 0.0)) throw std::invalid_argument("lecam lambda must be >= 0");
  if (!(lecam_decay >= 0.0 && lecam_decay < 1.0)) throw std::invalid_argument("lecam decay must lie in [0, 1)");
  if (gen.hidden % reg.groups != 0) {
    throw std::invalid_argument(std::to_string(reg.groups) + " groups do not divide hidden width " +
                                std::to_string(gen.hidden));
  }
  // The covariance report needs two columns per group.
  if (gen.hidden / reg.groups < 2) throw std::invalid_argument("groups must leave at least 2 columns each");
  if (gen.classes != dis.classes) throw std::invalid_argument("generator and discriminator class counts differ");
  if (gen.output_dim != 2 || dis.input_dim != 2) throw std::invalid_argument("only 2-D data is supported");
  if (log_interval < 1) throw std::invalid_argument("log_interval must be >= 1");
  if (eval_interval < 1) throw std::invalid_argument("eval_interval must be >= 1");
  if (eval_samples < 2) throw std::invalid_argument("eval_samples must be >= 2");
  if (collapse_layer >= 2) throw std::invalid_argument("collapse_layer must name one of the 2 cBN layers");
}

TrainState TrainState::init(const TrainConfig& cfg, const Dataset& data) {
  cfg.validate();
  if (data.by_class.size() != cfg.gen.classes) {
    throw std::invalid_argument("dataset has " + std::to_string(data.by_class.size()) +
                                " classes, config expects " + std::to_string(cfg.gen.classes));
  }
  TrainState s;
  s.gen = GeneratorNet(cfg.gen, derive_seed({cfg.seed, kGenStream}));
  s.dis = DiscriminatorNet(cfg.dis, derive_seed({cfg.seed, kDisStream}));
  for (const Parameter* p : s.gen.parameters()) s.ema.push_back(p->value);
  s.adam_g = AdamState::for_params(s.gen.parameters());
  s.adam_d = AdamState::for_params(s.dis.parameters());
  s.lecam.decay = cfg.lecam_decay;
  s.lecam.lambda_lc = cfg.lecam_lambda;
  const std::size_t layers = s.gen.cbn_layers().size();
  const std::size_t columns = cfg.gen.hidden / cfg.reg.groups;
  // The isometry penalty iterates on the n_c x n_c residual, so its vectors
  // have length n_c as well.
  s.reg_states = PowerIterTable(layers, cfg.gen.classes, columns, derive_seed({cfg.seed, kRegStream}));
  s.monitor_states =
      PowerIterTable(layers, cfg.gen.classes, columns, derive_seed({cfg.seed, kMonitorStream}));
  s.class_counts = data.class_sizes();
  for (std::size_t n : s.class_counts) {
    if (n == 0) throw std::invalid_argument("dataset has an empty class");
  }
  s.weights = effective_number_weights(s.class_counts, cfg.reg.alpha);
  s.rng.seed(derive_seed({cfg.seed, kLoopStream}));
  return s;
}

GeneratorNet TrainState::ema_generator() const {
  GeneratorNet g = gen;
  auto params = g.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = ema[i];
  return g;
}

std::size_t sample_generator_class(std::mt19937_64& rng, std::size_t classes) {
  if (classes == 0) throw std::invalid_argument("sample_generator_class: no classes");
  return std::uniform_int_distribution<std::size_t>(0, classes - 1)(rng);
}

std::size_t sample_data_class(std::mt19937_64& rng, std::span<const std::size_t> counts) {
  if (counts.empty()) throw std::invalid_argument("sample_data_class: no classes");
  std::discrete_distribution<std::size_t> dist(counts.begin(), counts.end());
  return dist(rng);
}

GeneratorObjective generator_objective(Tape& tape, TrainState& state, const TrainConfig& cfg,
                                       const Tensor& z, std::size_t y) {
  auto gain_norm = gain_norm_for(cfg, state.reg_states);
  Var fake = state.gen.forward(tape, z, y, ForwardMode::train, gain_norm ? &*gain_norm : nullptr);
  Var d_fake = state.dis.forward(tape, fake, y, /*trainable=*/false);
  GeneratorObjective out;
  out.adversarial = hinge_g_loss(d_fake);
  out.total = out.adversarial;
  if (cfg.reg.variant == RegVariant::gsr || cfg.reg.variant == RegVariant::gsrip) {
    GsrLossResult reg = gsr_loss(tape, state.gen.cbn_layers(), state.weights, cfg.reg, state.reg_states);
    out.regularizer = reg.loss;
    out.total = add(out.adversarial, scale(reg.loss, cfg.reg.lambda_gsr));
    out.sigma_gamma = std::move(reg.sigma_gamma);
    out.sigma_beta = std::move(reg.sigma_beta);
  }
  return out;
}

StepRecord train_step(TrainState& state, const TrainConfig& cfg, const Dataset& data) {
  StepRecord rec;
  const std::size_t batch = cfg.batch_size;
  const std::size_t latent = cfg.gen.latent_dim;
  auto gain_norm = gain_norm_for(cfg, state.reg_states);
  auto d_params = state.dis.parameters();
  auto g_params = state.gen.parameters();

  try {
    for (std::size_t k = 0; k < cfg.n_dis; ++k) {
      const std::size_t y = sample_data_class(state.rng, state.class_counts);
      const Tensor real = real_batch(state.rng, data, y, batch);
      const Tensor z = latent_batch(state.rng, batch, latent);
      Tensor fake;
      {
        Tape scratch;
        fake = state.gen
                   .forward(scratch, z, y, ForwardMode::train, gain_norm ? &*gain_norm : nullptr)
                   .value();
      }
      Tape tape;
      Var d_real = state.dis.forward(tape, tape.constant(real), y);
      Var d_fake = state.dis.forward(tape, tape.constant(fake), y);
      Var loss = hinge_d_loss(d_real, d_fake);
      rec.loss_d += loss.value().item();
      if (cfg.lecam) {
        Var reg = lecam_loss(d_real, d_fake, state.lecam);
        rec.lecam += reg.value().item();
        loss = add(loss, scale(reg, state.lecam.lambda_lc));
      }
      check_finite(loss.value().item(), "discriminator loss", state.step + 1);
      tape.backward(loss);
      optimizer_step(d_params, state.adam_d, cfg.adam_d);
      state.lecam = lecam_update(state.lecam, mean_of(d_real.value()), mean_of(d_fake.value()));
    }
    rec.loss_d /= static_cast<double>(cfg.n_dis);
    rec.lecam /= static_cast<double>(cfg.n_dis);
    check_params(d_params, state.step + 1);

    const std::size_t y = sample_generator_class(state.rng, cfg.gen.classes);
    const Tensor z = latent_batch(state.rng, batch, latent);
    Tape tape;
    GeneratorObjective obj = generator_objective(tape, state, cfg, z, y);
    rec.gen_class = y;
    rec.loss_g = obj.adversarial.value().item();
    rec.loss_gsr = obj.regularizer.valid() ? obj.regularizer.value().item() : 0.0;
    rec.loss_g_total = obj.total.value().item();
    check_finite(rec.loss_g_total, "generator loss", state.step + 1);
    tape.backward(obj.total);
    optimizer_step(g_params, state.adam_g, cfg.adam_g);
    check_params(g_params, state.step + 1);
  } catch (const NonFiniteError& e) {
    throw TrainingAborted(std::string("non-finite value at step ") + std::to_string(state.step + 1) +
                          ": " + e.what());
  }

  ++state.step;
  const bool blend = state.step >= cfg.ema_start;
  for (std::size_t i = 0; i < g_params.size(); ++i) {
    if (!blend) {
      state.ema[i] = g_params[i]->value;
      continue;
    }
    auto shadow = state.ema[i].values();
    auto live = g_params[i]->value.values();
    for (std::size_t j = 0; j < shadow.size(); ++j) {
      shadow[j] = cfg.ema_decay * shadow[j] + (1.0 - cfg.ema_decay) * live[j];
    }
  }

  rec.step = state.step;
  rec.anchor_real = state.lecam.anchor_real;
  rec.anchor_fake = state.lecam.anchor_fake;
  return rec;
}

MetricSnapshot snapshot_metrics(const TrainState& state, const TrainConfig& cfg,
                                std::span<const ClassDistribution> refs,
                                std::vector<std::vector<Point2>>* samples) {
  if (refs.size() != cfg.gen.classes) {
    throw std::invalid_argument("snapshot_metrics: reference count does not match classes");
  }
  GeneratorNet gen = state.ema_generator();
  PowerIterTable states = state.reg_states;
  auto gain_norm = gain_norm_for(cfg, states);
  std::mt19937_64 rng(derive_seed({cfg.seed, kEvalStream, state.step}));

  MetricSnapshot snap;
  snap.step = state.step;
  if (samples) samples->assign(refs.size(), {});
  double total = 0.0;
  for (std::size_t y = 0; y < refs.size(); ++y) {
    const Tensor z = latent_batch(rng, cfg.eval_samples, cfg.gen.latent_dim);
    Tape tape;
    const Tensor x =
        gen.forward(tape, z, y, ForwardMode::eval, gain_norm ? &*gain_norm : nullptr).value();
    std::vector<Point2> pts;
    pts.reserve(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) pts.emplace_back(x.at(i, 0), x.at(i, 1));
    snap.classes.push_back(class_metrics(pts, refs[y], cfg.coverage_multiplier));
    total += snap.classes.back().frechet;
    if (samples) (*samples)[y] = std::move(pts);
  }
  snap.mean_frechet = total / static_cast<double>(refs.size());

  for (const CbnLayer& layer : gen.cbn_layers()) {
    const std::size_t d = layer.features();
    for (std::size_t y = 0; y < layer.classes(); ++y) {
      const std::span<const double> g(layer.gamma.value.data() + y * d, d);
      const std::span<const double> b(layer.beta.value.data() + y * d, d);
      snap.diagonality.push_back(grouped_covariance(g, cfg.reg.groups).diagonality);
      snap.sigma_gamma.push_back(sigma_max_converged(group(g, cfg.reg.groups)).sigma);
      snap.sigma_beta.push_back(sigma_max_converged(group(b, cfg.reg.groups)).sigma);
    }
  }
  snap.collapsed.assign(refs.size(), false);
  return snap;
}

namespace {

void flag_collapse(RunLog& log, const TrainConfig& cfg, std::span<const ClassDistribution> refs) {
  MetricSnapshot& latest = log.snapshots.back();
  if (log.snapshots.size() < 2) return;
  const std::size_t k = refs.size();
  std::vector<std::vector<double>> series(k);
  for (const auto& s : log.snapshots) {
    for (std::size_t y = 0; y < k; ++y) series[y].push_back(s.sigma_gamma[cfg.collapse_layer * k + y]);
  }
  latest.collapsed = collapse_detector(latest.classes, refs, series, cfg.collapse);
}

void record_final_covariance(RunLog& log, const TrainState& state, const TrainConfig& cfg) {
  log.final_covariance.clear();
  const GeneratorNet gen = state.ema_generator();
  for (const CbnLayer& layer : gen.cbn_layers()) {
    const std::size_t d = layer.features();
    for (std::size_t y = 0; y < layer.classes(); ++y) {
      CovarianceReport rep =
          grouped_covariance(std::span<const double>(layer.gamma.value.data() + y * d, d), cfg.reg.groups);
      rep.class_id = y;
      rep.layer = layer.layer_index;
      log.final_covariance.push_back(std::move(rep));
    }
  }
}

}  // namespace

RunLog run_training(const TrainConfig& cfg, const Dataset& data,
                    std::span<const ClassDistribution> refs, const RunOptions& options) {
  TrainState state = TrainState::init(cfg, data);
  RunLog log;
  log.classes = cfg.gen.classes;
  log.layers = state.gen.cbn_layers().size();
  log.metadata["seed"] = std::to_string(cfg.seed);
  log.metadata["steps"] = std::to_string(cfg.steps);
  log.metadata["variant"] = to_string(cfg.reg.variant);
  log.metadata["lambda_gsr"] = format_double(cfg.reg.lambda_gsr);
  log.metadata["groups"] = std::to_string(cfg.reg.groups);
  log.metadata["lecam"] = cfg.lecam ? "on" : "off";

  auto snapshot = [&](bool keep_samples) {
    std::vector<std::vector<Point2>> pts;
    log.snapshots.push_back(snapshot_metrics(state, cfg, refs, keep_samples ? &pts : nullptr));
    flag_collapse(log, cfg, refs);
    if (keep_samples) log.final_samples = std::move(pts);
  };

  snapshot(cfg.steps == 0);
  try {
    while (state.step < cfg.steps) {
      StepRecord rec = train_step(state, cfg, data);
      const bool last = state.step == cfg.steps;
      if (state.step % cfg.log_interval == 0 || state.step == 1 || last) {
        monitor_sigmas(state.gen, cfg.reg.groups, cfg.reg.power_iters, state.monitor_states,
                       rec.sigma_gamma, rec.sigma_beta);
        log.records.push_back(std::move(rec));
      }
      if (state.step % cfg.eval_interval == 0 || last) snapshot(last);
      if (options.checkpoint_dir && cfg.checkpoint_interval > 0 &&
          (state.step % cfg.checkpoint_interval == 0 || last)) {
        save_checkpoint(*options.checkpoint_dir /
                            (options.checkpoint_prefix + "_" + std::to_string(state.step) + ".ckpt"),
                        state);
      }
    }
  } catch (const TrainingAborted& e) {
    log.aborted = true;
    log.abort_reason = e.what();
  }
  record_final_covariance(log, state, cfg);
  return log;
}

void RunLog::write_steps_csv(const std::filesystem::path& path) const {
  std::ofstream os = open_csv(path, *this, "runlog");
  os << "step,gen_class,loss_d,loss_g,loss_gsr,lecam,loss_g_total,anchor_real,anchor_fake";
  for (const char* kind : {"sigma_gamma", "sigma_beta"}) {
    for (std::size_t l = 0; l < layers; ++l) {
      for (std::size_t y = 0; y < classes; ++y) os << ',' << column_label(kind, l, y);
    }
  }
  os << '\n';
  for (const StepRecord& r : records) {
    os << r.step << ',' << r.gen_class << ',' << format_double(r.loss_d) << ','
       << format_double(r.loss_g) << ',' << format_double(r.loss_gsr) << ','
       << format_double(r.lecam) << ',' << format_double(r.loss_g_total) << ','
       << format_double(r.anchor_real) << ',' << format_double(r.anchor_fake);
    for (double v : r.sigma_gamma) os << ',' << format_double(v);
    for (double v : r.sigma_beta) os << ',' << format_double(v);
    os << '\n';
  }
  finish(os, path);
}

void RunLog::write_metrics_csv(const std::filesystem::path& path) const {
  std::ofstream os = open_csv(path, *this, "metrics");
  os << "step,class,frechet,coverage,std_x,std_y,collapsed";
  for (std::size_t l = 0; l < layers; ++l) os << ",diag_l" << l + 1;
  for (std::size_t l = 0; l < layers; ++l) os << ",sigma_gamma_l" << l + 1;
  for (std::size_t l = 0; l < layers; ++l) os << ",sigma_beta_l" << l + 1;
  os << '\n';
  for (const MetricSnapshot& s : snapshots) {
    for (std::size_t y = 0; y < s.classes.size(); ++y) {
      const ClassMetrics& m = s.classes[y];
      os << s.step << ',' << y << ',' << format_double(m.frechet) << ','
         << format_double(m.coverage) << ',' << format_double(m.sample_std.x()) << ','
         << format_double(m.sample_std.y()) << ',' << (s.collapsed[y] ? 1 : 0);
      for (std::size_t l = 0; l < layers; ++l) os << ',' << format_double(s.diagonality[l * classes + y]);
      for (std::size_t l = 0; l < layers; ++l) os << ',' << format_double(s.sigma_gamma[l * classes + y]);
      for (std::size_t l = 0; l < layers; ++l) os << ',' << format_double(s.sigma_beta[l * classes + y]);
      os << '\n';
    }
  }
  finish(os, path);
}

void RunLog::write_samples_csv(const std::filesystem::path& path) const {
  std::ofstream os = open_csv(path, *this, "samples");
  os << "x1,x2,y\n";
  for (std::size_t y = 0; y < final_samples.size(); ++y) {
    for (const Point2& p : final_samples[y]) {
      os << format_double(p.x()) << ',' << format_double(p.y()) << ',' << y << '\n';
    }
  }
  finish(os, path);
}

void RunLog::write_covariance_csv(const std::filesystem::path& path) const {
  std::ofstream os = open_csv(path, *this, "covariance");
  os << "layer,class,row,col,value\n";
  for (const CovarianceReport& rep : final_covariance) {
    for (std::size_t i = 0; i < rep.groups; ++i) {
      for (std::size_t j = 0; j < rep.groups; ++j) {
        os << rep.layer + 1 << ',' << rep.class_id << ',' << i << ',' << j << ','
           << format_double(rep.covariance[i * rep.groups + j]) << '\n';
      }
    }
  }
  finish(os, path);
}

namespace {

/// Flattens a state into (name, values) entries. cBN tables are split per class.
template <typename Visit>
void visit_checkpoint(TrainState& state, Visit&& visit) {
  auto visit_param = [&](const std::string& prefix, Tensor& value, const std::string& name,
                         bool per_class) {
    if (!per_class) {
      visit(prefix + name, std::span<double>(value.values()));
      return;
    }
    const std::size_t d = value.cols();
    for (std::size_t y = 0; y < value.rows(); ++y) {
      visit(prefix + name + ".class" + std::to_string(y),
            std::span<double>(value.data() + y * d, d));
    }
  };
  auto gen_params = state.gen.parameters();
  for (std::size_t i = 0; i < gen_params.size(); ++i) {
    const bool cbn = gen_params[i]->name.find(".cbn.") != std::string::npos;
    visit_param("", gen_params[i]->value, gen_params[i]->name, cbn);
    visit_param("ema.", state.ema[i], gen_params[i]->name, cbn);
  }
  for (CbnLayer& layer : state.gen.cbn_layers()) {
    const std::string prefix = "gen.layer" + std::to_string(layer.layer_index + 1) + ".cbn.";
    visit_param("", layer.running_mean, prefix + "running_mean", true);
    visit_param("", layer.running_var, prefix + "running_var", true);
  }
  for (Parameter* p : state.dis.parameters()) visit_param("", p->value, p->name, false);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TrainState& state) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << kCheckpointMagic << '\n';
  os << "step " << state.step << '\n';
  os << "lecam " << format_double(state.lecam.anchor_real) << ' '
     << format_double(state.lecam.anchor_fake) << '\n';
  visit_checkpoint(const_cast<TrainState&>(state),
                   [&](const std::string& name, std::span<double> values) {
                     os << "param " << name << ' ' << values.size();
                     for (double v : values) os << ' ' << format_double(v);
                     os << '\n';
                   });
  finish(os, path);
}

void load_checkpoint(const std::filesystem::path& path, TrainState& state) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(is, line) || trim(line) != kCheckpointMagic) {
    throw IoError(path.string() + ": not a version 1 checkpoint");
  }
  std::unordered_map<std::string, std::vector<double>> entries;
  std::size_t step = 0;
  double anchor_real = 0.0;
  double anchor_fake = 0.0;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    auto field = [&]() {
      std::string tok;
      if (!(ls >> tok)) {
        throw IoError(path.string() + ":" + std::to_string(lineno) + ": truncated line");
      }
      return tok;
    };
    if (tag == "step") {
      step = static_cast<std::size_t>(parse_int(field()));
    } else if (tag == "lecam") {
      anchor_real = parse_double(field());
      anchor_fake = parse_double(field());
    } else if (tag == "param") {
      const std::string name = field();
      const auto n = static_cast<std::size_t>(parse_int(field()));
      std::vector<double> values(n);
      for (double& v : values) v = parse_double(field());
      if (!entries.emplace(name, std::move(values)).second) {
        throw IoError(path.string() + ": duplicate entry " + name);
      }
    } else {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": unknown record '" +
                               tag + "'");
    }
  }
  std::size_t used = 0;
  visit_checkpoint(state, [&](const std::string& name, std::span<double> values) {
    auto it = entries.find(name);
    if (it == entries.end()) throw IoError(path.string() + ": missing entry " + name);
    if (it->second.size() != values.size()) {
      throw IoError(path.string() + ": entry " + name + " has " +
                               std::to_string(it->second.size()) + " values, expected " +
                               std::to_string(values.size()));
    }
    std::copy(it->second.begin(), it->second.end(), values.begin());
    ++used;
  });
  if (used != entries.size()) throw IoError(path.string() + ": unknown parameter entries");
  state.step = step;
  state.lecam.anchor_real = anchor_real;
  state.lecam.anchor_fake = anchor_fake;
}

}  // namespace gsr
