#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gsr/ops.hpp"
#include "gsr/train.hpp"

using namespace gsr;

namespace {

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.steps = 6;
  cfg.n_dis = 2;
  cfg.batch_size = 16;
  cfg.gen.hidden = 16;
  cfg.dis.hidden = 16;
  cfg.reg.groups = 4;
  cfg.ema_start = 3;
  cfg.log_interval = 2;
  cfg.eval_interval = 3;
  cfg.eval_samples = 50;
  cfg.seed = 11;
  return cfg;
}

const Dataset& small_data() {
  static const Dataset data =
      sample_dataset(LongTailSpec::make(8, 100.0, 400), make_ring_mixture(8, 2.0, 0.15), 5);
  return data;
}

std::vector<Tensor> values_of(const std::vector<Parameter*>& params) {
  std::vector<Tensor> out;
  for (const Parameter* p : params) out.push_back(p->value);
  return out;
}

std::vector<Tensor> generator_grads(TrainState state, const TrainConfig& cfg, const Tensor& z,
                                    std::size_t y) {
  Tape tape;
  const GeneratorObjective obj = generator_objective(tape, state, cfg, z, y);
  tape.backward(obj.total);
  std::vector<Tensor> out;
  for (const Parameter* p : state.gen.parameters()) out.push_back(p->grad);
  return out;
}

Tensor latent(std::size_t batch, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  Tensor z(Shape{batch, dim});
  for (double& v : z.values()) v = n(rng);
  return z;
}

}  // namespace

TEST_CASE("Adam without moment decay takes sign-like steps") {
  Parameter p("p", Tensor::vector({1.0, 1.0, 1.0}));
  p.grad = Tensor::vector({0.5, -2.0, 1e-3});
  std::vector<Parameter*> params{&p};
  AdamState st = AdamState::for_params(params);
  AdamConfig cfg{0.1, 0.0, 0.0, 1e-8};
  optimizer_step(params, st, cfg);
  for (std::size_t i = 0; i < 3; ++i) {
    const double g = p.grad[i];
    CHECK(p.value[i] == doctest::Approx(1.0 - 0.1 * g / (std::abs(g) + 1e-8)).epsilon(1e-14));
  }
}

TEST_CASE("Adam bias correction on the first step") {
  Parameter p("p", Tensor::vector({0.0, 0.0}));
  p.grad = Tensor::vector({3.0, -0.25});
  std::vector<Parameter*> params{&p};
  AdamState st = AdamState::for_params(params);
  AdamConfig cfg{0.01, 0.9, 0.999, 1e-8};
  optimizer_step(params, st, cfg);
  CHECK(p.value[0] == doctest::Approx(-0.01 * 3.0 / (3.0 + 1e-8)).epsilon(1e-12));
  CHECK(p.value[1] == doctest::Approx(0.01 * 0.25 / (0.25 + 1e-8)).epsilon(1e-12));
  CHECK(st.m[0][0] == doctest::Approx(0.3));
  CHECK(st.v[0][0] == doctest::Approx(0.009));
  CHECK(st.t == 1);

  // a zero gradient leaves parameters where momentum puts them, and decays the moments
  p.grad.fill(0.0);
  const double m_before = st.m[0][0];
  const double v_before = st.v[0][0];
  optimizer_step(params, st, cfg);
  CHECK(st.m[0][0] == doctest::Approx(0.9 * m_before));
  CHECK(st.v[0][0] == doctest::Approx(0.999 * v_before));
}

TEST_CASE("Adam with zero gradient from fresh state leaves parameters unchanged") {
  Parameter p("p", Tensor::vector({0.5, -1.5}));
  p.grad = Tensor::vector({0.0, 0.0});
  std::vector<Parameter*> params{&p};
  AdamState st = AdamState::for_params(params);
  optimizer_step(params, st, AdamConfig{});
  CHECK(p.value == Tensor::vector({0.5, -1.5}));
}

TEST_CASE("class sampling") {
  std::mt19937_64 rng(3);
  std::vector<int> hist(8, 0);
  const int n = 10000;
  for (int i = 0; i < n; ++i) ++hist[sample_generator_class(rng, 8)];
  const double expected = n / 8.0;
  const double sd = std::sqrt(n * (1.0 / 8.0) * (7.0 / 8.0));
  for (int h : hist) CHECK(std::abs(h - expected) < 3.0 * sd);

  const std::vector<std::size_t> counts{900, 90, 10};
  std::vector<int> dh(3, 0);
  for (int i = 0; i < n; ++i) ++dh[sample_data_class(rng, counts)];
  CHECK(std::abs(dh[0] - 9000) < 3.0 * std::sqrt(n * 0.9 * 0.1));
  CHECK(std::abs(dh[2] - 100) < 3.0 * std::sqrt(n * 0.01 * 0.99));
}

TEST_CASE("training steps are bit-reproducible") {
  const TrainConfig cfg = small_config();
  TrainState a = TrainState::init(cfg, small_data());
  TrainState b = TrainState::init(cfg, small_data());
  for (int i = 0; i < 3; ++i) {
    const StepRecord ra = train_step(a, cfg, small_data());
    const StepRecord rb = train_step(b, cfg, small_data());
    CHECK(ra.loss_d == rb.loss_d);
    CHECK(ra.loss_g_total == rb.loss_g_total);
    CHECK(ra.gen_class == rb.gen_class);
  }
  CHECK(values_of(a.gen.parameters()) == values_of(b.gen.parameters()));
  CHECK(values_of(a.dis.parameters()) == values_of(b.dis.parameters()));
  CHECK(a.ema == b.ema);
}

TEST_CASE("zero regularizer weight gives the pure adversarial gradient") {
  TrainConfig cfg = small_config();
  TrainState state = TrainState::init(cfg, small_data());
  for (int i = 0; i < 2; ++i) train_step(state, cfg, small_data());
  const Tensor z = latent(cfg.batch_size, cfg.gen.latent_dim, 4);

  TrainConfig none = cfg;
  none.reg.variant = RegVariant::none;
  TrainConfig zero = cfg;
  zero.reg.lambda_gsr = 0.0;
  CHECK(generator_grads(state, none, z, 6) == generator_grads(state, zero, z, 6));
}

TEST_CASE("gSR adds lambda_gsr lambda_y 2 sigma u v^T to the cBN gradients") {
  TrainConfig cfg = small_config();
  TrainState state = TrainState::init(cfg, small_data());
  for (int i = 0; i < 2; ++i) train_step(state, cfg, small_data());
  const Tensor z = latent(cfg.batch_size, cfg.gen.latent_dim, 5);
  TrainConfig off = cfg;
  off.reg.lambda_gsr = 0.0;
  const auto with = generator_grads(state, cfg, z, 2);
  const auto without = generator_grads(state, off, z, 2);

  const auto params = state.gen.parameters();
  const std::size_t d = cfg.gen.hidden;
  PowerIterTable states = state.reg_states;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const bool is_gamma = params[i]->name.ends_with("cbn.gamma");
    const bool is_beta = params[i]->name.ends_with("cbn.beta");
    if (!is_gamma && !is_beta) {
      CHECK(with[i] == without[i]);
      continue;
    }
    const std::size_t layer = params[i]->name.find("layer1") != std::string::npos ? 0 : 1;
    const ParamKind kind = is_gamma ? ParamKind::gamma : ParamKind::beta;
    double worst = 0.0;
    for (std::size_t y = 0; y < cfg.gen.classes; ++y) {
      const std::span<const double> row(params[i]->value.data() + y * d, d);
      const SpectralEstimate e =
          sigma_max_power(group(row, cfg.reg.groups), cfg.reg.power_iters, states.at(layer, y, kind));
      const std::size_t nc = d / cfg.reg.groups;
      for (std::size_t j = 0; j < d; ++j) {
        const double expected = cfg.reg.lambda_gsr * state.weights.lambda[y] * 2.0 * e.sigma *
                                e.u[j / nc] * e.v[j % nc];
        const double diff = with[i][y * d + j] - without[i][y * d + j];
        worst = std::max(worst, std::abs(diff - expected));
      }
    }
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("recorded generator total equals its parts") {
  TrainConfig cfg = small_config();
  TrainState state = TrainState::init(cfg, small_data());
  for (int i = 0; i < 4; ++i) {
    const StepRecord r = train_step(state, cfg, small_data());
    CHECK(r.loss_gsr > 0.0);
    CHECK(std::abs(r.loss_g_total - (r.loss_g + cfg.reg.lambda_gsr * r.loss_gsr)) < 1e-12);
  }
}

TEST_CASE("EMA shadow") {
  TrainConfig cfg = small_config();
  cfg.ema_decay = 0.0;
  TrainState state = TrainState::init(cfg, small_data());
  for (int i = 0; i < 5; ++i) train_step(state, cfg, small_data());
  CHECK(state.ema == values_of(state.gen.parameters()));

  cfg.ema_decay = 0.9;
  TrainState blended = TrainState::init(cfg, small_data());
  for (int i = 0; i < 2; ++i) train_step(blended, cfg, small_data());
  CHECK(blended.ema == values_of(blended.gen.parameters()));  // copies before ema_start
  for (int i = 0; i < 3; ++i) train_step(blended, cfg, small_data());
  CHECK_FALSE(blended.ema == values_of(blended.gen.parameters()));
  for (std::size_t i = 0; i < blended.ema.size(); ++i) {
    CHECK(blended.ema[i].shape() == blended.gen.parameters()[i]->value.shape());
  }
}

TEST_CASE("run log bookkeeping") {
  const auto refs = make_ring_mixture(8, 2.0, 0.15);
  TrainConfig cfg = small_config();
  cfg.steps = 0;
  const RunLog empty = run_training(cfg, small_data(), refs);
  CHECK(empty.records.empty());
  REQUIRE(empty.snapshots.size() == 1);
  CHECK(empty.snapshots[0].step == 0);

  cfg.steps = 7;
  const RunLog log = run_training(cfg, small_data(), refs);
  std::vector<std::size_t> steps;
  for (const StepRecord& r : log.records) steps.push_back(r.step);
  CHECK(steps == std::vector<std::size_t>{1, 2, 4, 6, 7});
  std::vector<std::size_t> snaps;
  for (const MetricSnapshot& s : log.snapshots) snaps.push_back(s.step);
  CHECK(snaps == std::vector<std::size_t>{0, 3, 6, 7});
  CHECK(log.records[0].sigma_gamma.size() == 16);
  CHECK(log.final_samples.size() == 8);
  CHECK(log.final_covariance.size() == 16);
  CHECK_FALSE(log.aborted);
}

TEST_CASE("non-finite values abort the step and are recorded in the log") {
  TrainConfig cfg = small_config();
  TrainState state = TrainState::init(cfg, small_data());
  state.gen.parameters()[0]->value[0] = std::nan("");
  CHECK_THROWS_AS(train_step(state, cfg, small_data()), TrainingAborted);

  cfg.adam_g.lr = 1e300;
  cfg.adam_d.lr = 1e300;
  const RunLog log = run_training(cfg, small_data(), make_ring_mixture(8, 2.0, 0.15));
  CHECK(log.aborted);
  CHECK(log.abort_reason.find("non-finite") != std::string::npos);
}

TEST_CASE("checkpoint round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "gsrlab_test_ckpt";
  std::filesystem::create_directories(dir);
  TrainConfig cfg = small_config();
  TrainState state = TrainState::init(cfg, small_data());
  for (int i = 0; i < 4; ++i) train_step(state, cfg, small_data());
  save_checkpoint(dir / "a.ckpt", state);

  TrainConfig other_seed = cfg;
  other_seed.seed = 99;
  TrainState restored = TrainState::init(other_seed, small_data());
  load_checkpoint(dir / "a.ckpt", restored);
  CHECK(values_of(restored.gen.parameters()) == values_of(state.gen.parameters()));
  CHECK(values_of(restored.dis.parameters()) == values_of(state.dis.parameters()));
  CHECK(restored.ema == state.ema);
  CHECK(restored.step == state.step);
  CHECK(restored.lecam.anchor_real == state.lecam.anchor_real);
  for (std::size_t l = 0; l < 2; ++l) {
    CHECK(restored.gen.cbn_layers()[l].running_var == state.gen.cbn_layers()[l].running_var);
  }

  std::ifstream in(dir / "a.ckpt");
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str().starts_with("gsrlab-checkpoint v1"));
  CHECK(ss.str().find("gen.layer1.cbn.gamma.class3") != std::string::npos);

  std::ofstream(dir / "bad.ckpt") << "not a checkpoint\n";
  CHECK_THROWS(load_checkpoint(dir / "bad.ckpt", restored));
  std::filesystem::remove_all(dir);
}
