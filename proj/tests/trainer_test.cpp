#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "gca/error.hpp"
#include "gca/trainer.hpp"

using namespace gca;
using ad::Tape;
using ad::Var;

namespace {

// A small two-domain forecasting problem with shared ground-truth
// structures: normalized, windowed, chronologically split.
struct SmallTask {
  Dataset source_train;
  Dataset target_train, target_val, target_test;
};

SmallTask make_task(unsigned long long seed, int M = 3, int k = 2, std::size_t length = 400,
                    int T = 12, int tau = 4, int stride = 4) {
  GenerateOptions opt;
  opt.M = M;
  opt.k = k;
  opt.density = 0.4;
  opt.length = length;
  DomainConfig d1;
  d1.domain_id = 1;
  d1.noise_phi = 0.4;
  d1.nonlinearity_c = 0.02;
  DomainConfig d2;
  d2.domain_id = 2;
  d2.noise_phi = 0.6;
  d2.sample_interval = 2;
  d2.nonlinearity_c = 0.04;
  Rng rng(seed);
  MultiDomainData data = generate_domains(opt, {d1, d2}, rng);

  SmallTask task;
  Rng split_rng(seed + 1);
  {
    auto [norm, stats] = zscore_normalize(data.domains[0].raw);
    Dataset all = window_dataset(norm, T, tau, stride, 1);
    all.stats = stats;
    all.ground_truth = data.structures;
    task.source_train = split_dataset(all, SplitRatios{}, split_rng)[0];
  }
  {
    auto [norm, stats] = zscore_normalize(data.domains[1].raw);
    Dataset all = window_dataset(norm, T, tau, stride, 2);
    all.stats = stats;
    all.ground_truth = data.structures;
    auto parts = split_dataset(all, SplitRatios{}, split_rng);
    task.target_train = parts[0];
    task.target_val = parts[1];
    task.target_test = parts[2];
  }
  return task;
}

TrainConfig small_config(unsigned long long seed, int epochs) {
  TrainConfig c;
  c.k = 2;
  c.window = 12;
  c.horizon = 4;
  c.n_predict_steps = 4;
  c.batch_size = 8;
  c.epochs = epochs;
  c.labeled_fraction = 0.1;
  c.seed = seed;
  c.checkpoint_every = 0;
  return c;
}

std::vector<Tensor> loss_grads(const GcaModel& model, const Batches& b, unsigned long long seed) {
  Tape tape;
  BoundModel bm = bind(model, tape, true);
  Rng noise(seed);
  LossTerms terms = total_loss(bm, b, Hyper{}, 0.9, noise, LossOptions{3, 0});
  tape.backward(terms.total);
  std::vector<Tensor> out;
  for (std::size_t p = 0; p < model.params.size(); ++p)
    out.push_back(bm.at(static_cast<int>(p)).grad());
  return out;
}

TimeSeriesWindow sine_window(int T, int M, int tau, int domain, double phase, double amp = 1.0) {
  TimeSeriesWindow w;
  w.x = Tensor(Shape{static_cast<std::size_t>(T), static_cast<std::size_t>(M)});
  w.y = Tensor(Shape{static_cast<std::size_t>(tau), static_cast<std::size_t>(M)});
  for (std::size_t t = 0; t < w.x.rows(); ++t)
    for (std::size_t c = 0; c < w.x.cols(); ++c)
      w.x.at(t, c) = amp * std::sin(0.6 * static_cast<double>(t) + phase + static_cast<double>(c));
  for (std::size_t t = 0; t < w.y.rows(); ++t)
    for (std::size_t c = 0; c < w.y.cols(); ++c)
      w.y.at(t, c) = amp * std::cos(0.4 * static_cast<double>(t) + phase);
  w.domain_id = domain;
  w.start = 0;
  return w;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("training modes parse and print") {
  CHECK(parse_train_mode("gca") == TrainMode::gca);
  CHECK(parse_train_mode("gca_r") == TrainMode::gca_r);
  CHECK(parse_train_mode("gca_e") == TrainMode::gca_e);
  CHECK(parse_train_mode("baseline") == TrainMode::baseline);
  CHECK(to_string(TrainMode::gca_r) == "gca_r");
  CHECK_THROWS_AS(parse_train_mode("lstm"), ConfigError);
}

TEST_CASE("config validation rejects broken settings") {
  TrainConfig ok;
  CHECK_NOTHROW(validate(ok));
  TrainConfig c = ok;
  c.lr = 0.0;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = ok;
  c.labeled_fraction = 1.5;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = ok;
  c.window = c.k + c.n_predict_steps - 1;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = ok;
  c.temperature.end = 0.0;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = ok;
  c.hyper.delta = -0.1;
  CHECK_THROWS_AS(validate(c), ConfigError);
}

TEST_CASE("temperature anneals from start to end at 80% of the epochs") {
  TrainConfig c;
  c.epochs = 100;
  CHECK(temperature_schedule(0, c) == 1.0);
  CHECK(temperature_schedule(80, c) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(temperature_schedule(99, c) == 0.5);
  double prev = temperature_schedule(0, c);
  for (int e = 1; e < 100; ++e) {
    const double cur = temperature_schedule(e, c);
    CHECK(cur <= prev + 1e-15);
    prev = cur;
  }
  // An explicit decay overrides the derived one.
  c.temperature.decay = 1.0;
  CHECK(temperature_schedule(50, c) == 1.0);
  CHECK_THROWS_AS(temperature_schedule(-1, c), ConfigError);
}

TEST_CASE("optimizer leaves parameters alone under zero gradients") {
  ParamSet params;
  params.add("w", Tensor({2, 2}, {1.0, -2.0, 3.0, 0.5}));
  OptimizerState st = OptimizerState::like(params);
  std::vector<Tensor> zero = {Tensor(Shape{2, 2})};
  adam_step(params, zero, st, 1e-3);
  CHECK(params.values[0].v == std::vector<double>{1.0, -2.0, 3.0, 0.5});
  CHECK(st.step == 1);
}

TEST_CASE("first optimizer step moves a unit-gradient scalar by the learning rate") {
  ParamSet params;
  params.add("w", Tensor::scalar(2.0));
  OptimizerState st = OptimizerState::like(params);
  adam_step(params, {Tensor::scalar(1.0)}, st, 1e-3);
  CHECK(std::abs(params.values[0].v[0] - (2.0 - 1e-3)) < 1e-9);
}

TEST_CASE("optimizer rejects non-finite gradients by parameter name") {
  ParamSet params;
  params.add("enc1_1_w", Tensor::scalar(0.0));
  OptimizerState st = OptimizerState::like(params);
  CHECK_THROWS_WITH_AS(adam_step(params, {Tensor::scalar(std::nan(""))}, st, 1e-3),
                       "adam_step: non-finite gradient for parameter enc1_1_w", NumericError);
  CHECK_THROWS_AS(adam_step(params, {Tensor(Shape{2})}, st, 1e-3), ConfigError);
}

TEST_CASE("identical gradient sequences give identical trajectories") {
  auto run = [] {
    ParamSet params;
    params.add("w", Tensor({1, 3}, {0.2, -0.4, 0.9}));
    OptimizerState st = OptimizerState::like(params);
    for (int s = 0; s < 25; ++s) {
      Tensor g(Shape{1, 3});
      for (int i = 0; i < 3; ++i) g.v[i] = std::sin(0.3 * s + i);
      adam_step(params, {g}, st, 5e-3);
    }
    return params.values[0].v;
  };
  CHECK(run() == run());
}

TEST_CASE("model selection takes the earliest minimum") {
  CHECK(select_best({0.5, 0.3, 0.3, 0.4}) == 1);
  CHECK(select_best({0.7}) == 0);
  CHECK(select_best({0.9, 0.6, 0.2}) == 2);
  CHECK_THROWS_AS(select_best({}), ConfigError);
}

TEST_CASE("train config survives the JSON round trip") {
  TrainConfig c;
  c.mode = TrainMode::gca_e;
  c.seed = 99;
  c.k = 4;
  c.window = 24;
  c.horizon = 6;
  c.target_variable = 2;
  c.hyper = Hyper{0.5, 0.02, 2.0};
  c.lr = 5e-4;
  c.batch_size = 16;
  c.epochs = 42;
  c.labeled_fraction = 0.07;
  c.temperature = TempSchedule{0.9, 0.4, 0.97};
  c.n_predict_steps = 5;
  c.include_unlabeled_recon = true;
  c.checkpoint_every = 3;
  TrainConfig back = train_config_from_json(train_config_to_json(c));
  CHECK(back.mode == c.mode);
  CHECK(back.seed == c.seed);
  CHECK(back.k == c.k);
  CHECK(back.window == c.window);
  CHECK(back.horizon == c.horizon);
  CHECK(back.target_variable == c.target_variable);
  CHECK(back.hyper.gamma == c.hyper.gamma);
  CHECK(back.hyper.delta == c.hyper.delta);
  CHECK(back.hyper.lambda == c.hyper.lambda);
  CHECK(back.lr == c.lr);
  CHECK(back.batch_size == c.batch_size);
  CHECK(back.epochs == c.epochs);
  CHECK(back.labeled_fraction == c.labeled_fraction);
  CHECK(back.temperature.start == c.temperature.start);
  CHECK(back.temperature.end == c.temperature.end);
  CHECK(back.temperature.decay == c.temperature.decay);
  CHECK(back.n_predict_steps == c.n_predict_steps);
  CHECK(back.include_unlabeled_recon == c.include_unlabeled_recon);
  CHECK(back.checkpoint_every == c.checkpoint_every);

  CHECK_THROWS_AS(train_config_from_json("{\"windowz\": 3}"), ConfigError);
  CHECK_THROWS_AS(train_config_from_json("not json"), DataError);
  CHECK_THROWS_AS(train_config_from_json("[1,2]"), DataError);
}

TEST_CASE("unlabeled window labels never reach the gradient") {
  ModelConfig mc;
  mc.M = 2;
  mc.k = 2;
  Rng init(71);
  GcaModel model(mc, init);

  TimeSeriesWindow s1 = sine_window(6, 2, 2, 0, 0.1);
  TimeSeriesWindow lab = sine_window(6, 2, 2, 1, 1.0);
  TimeSeriesWindow unlab = sine_window(6, 2, 2, 1, 2.0);
  Batches b;
  b.source = {&s1};
  b.labeled_target = {&lab};
  b.all_target = {&lab, &unlab};

  std::vector<Tensor> before = loss_grads(model, b, 5);
  for (auto& v : unlab.y.v) v = 0.0;
  std::vector<Tensor> after = loss_grads(model, b, 5);
  REQUIRE(before.size() == after.size());
  for (std::size_t p = 0; p < before.size(); ++p) CHECK(before[p].v == after[p].v);
}

TEST_CASE("with zero weights and source only, the loss is the source ELBO") {
  ModelConfig mc;
  mc.M = 2;
  mc.k = 2;
  Rng init(73);
  GcaModel model(mc, init);
  TimeSeriesWindow s1 = sine_window(6, 2, 2, 0, 0.4);
  TimeSeriesWindow s2 = sine_window(6, 2, 2, 0, 1.3);
  Batches b;
  b.source = {&s1, &s2};
  b.all_target = {&s1, &s2};

  Tape tape;
  BoundModel bm = bind(model, tape, false);
  Rng noise(9);
  LossTerms terms = total_loss(bm, b, Hyper{0.0, 0.0, 0.0}, 1.0, noise, LossOptions{3, 0});
  CHECK(terms.total.val().scalar() == terms.neg_elbo_source.val().scalar());
  CHECK(terms.neg_elbo_target.val().scalar() == 0.0);
}

TEST_CASE("the smoothed loss falls by at least a fifth over a short run") {
  SmallTask task = make_task(301);
  TrainConfig cfg = small_config(17, 25);
  TrainResult r = train(task.source_train, task.target_train, task.target_val, cfg);
  REQUIRE(r.history.size() >= 200);
  auto mean_total = [&](std::size_t lo, std::size_t hi) {
    double acc = 0.0;
    for (std::size_t i = lo; i < hi; ++i) acc += r.history[i].loss.total;
    return acc / static_cast<double>(hi - lo);
  };
  const double head = mean_total(0, 20);
  const double tail = mean_total(200 - 20, 200);
  CHECK(tail < 0.8 * head);
  // Every validation point was recorded and the pick is the argmin.
  CHECK(r.val_mse.size() == 25);
  CHECK(static_cast<std::size_t>(r.best_epoch - 1) == select_best(r.val_mse));
}

TEST_CASE("a fixed seed reproduces the whole trajectory") {
  SmallTask task = make_task(302, 3, 2, 240);
  TrainConfig cfg = small_config(23, 2);
  TrainResult a = train(task.source_train, task.target_train, task.target_val, cfg);
  TrainResult b = train(task.source_train, task.target_train, task.target_val, cfg);
  CHECK(a.val_mse == b.val_mse);
  CHECK(a.best_epoch == b.best_epoch);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i)
    CHECK(a.history[i].loss.total == b.history[i].loss.total);
  for (std::size_t p = 0; p < a.best.params.size(); ++p)
    CHECK(a.best.params.values[p].v == b.best.params.values[p].v);
}

TEST_CASE("checkpoints reproduce the recorded validation error") {
  SmallTask task = make_task(303, 3, 2, 240);
  TrainConfig cfg = small_config(29, 3);
  TrainResult r = train(task.source_train, task.target_train, task.target_val, cfg);

  const std::string path = "/tmp/gca_trainer_test_best.json";
  save_checkpoint(path, r.best);
  Checkpoint back = load_checkpoint(path);
  std::remove(path.c_str());
  GcaModel rebuilt = GcaModel::from_params(back.config, back.params);

  Dataset val = task.target_val;
  for (auto& w : val.windows) w.domain_id = 1;
  const double reproduced = validation_mse(rebuilt, val, cfg.target_variable);
  CHECK(std::abs(reproduced - r.val_mse[static_cast<std::size_t>(r.best_epoch - 1)]) <= 1e-9);
}

TEST_CASE("a run directory gets config, histories and checkpoints") {
  namespace fs = std::filesystem;
  SmallTask task = make_task(304, 3, 2, 240);
  TrainConfig cfg = small_config(31, 2);
  cfg.checkpoint_every = 1;
  const std::string dir = "/tmp/gca_trainer_test_run";
  fs::remove_all(dir);
  TrainResult r = train(task.source_train, task.target_train, task.target_val, cfg, dir);
  CHECK(fs::exists(fs::path(dir) / "config.json"));
  CHECK(fs::exists(fs::path(dir) / "validation.csv"));
  CHECK(fs::exists(fs::path(dir) / "best.json"));
  CHECK(fs::exists(fs::path(dir) / "checkpoints" / "epoch_1.json"));
  CHECK(fs::exists(fs::path(dir) / "checkpoints" / "epoch_2.json"));

  std::ifstream hist(fs::path(dir) / "history.csv");
  std::string line;
  std::getline(hist, line);
  CHECK(line == "step,neg_elbo_s,neg_elbo_t,l_r,l_d,l_e,total,temperature");
  std::size_t rows = 0;
  while (std::getline(hist, line))
    if (!line.empty()) ++rows;
  CHECK(rows == r.history.size());

  Checkpoint best = load_checkpoint((fs::path(dir) / "best.json").string());
  CHECK(best.params.names == r.best.params.names);
  CHECK(!best.source_stats.empty());
  CHECK(!best.target_stats.empty());
  fs::remove_all(dir);
}

TEST_CASE("ablation modes zero their coefficient but still log the term") {
  SmallTask task = make_task(305, 3, 2, 240);
  TrainConfig cfg = small_config(37, 1);
  cfg.mode = TrainMode::gca_r;
  TrainResult r = train(task.source_train, task.target_train, task.target_val, cfg);
  const LossBreakdown& bd = r.history[0].loss;
  CHECK(bd.alignment > 0.0);  // reported
  CHECK(bd.hyper.gamma == 0.0);
  CHECK(std::abs(bd.total - combined_total(bd)) <= 1e-9);

  cfg.mode = TrainMode::gca_e;
  TrainResult re = train(task.source_train, task.target_train, task.target_val, cfg);
  CHECK(re.history[0].loss.hyper.lambda == 0.0);
  CHECK(re.history[0].loss.strengthen > 0.0);
}

TEST_CASE("the plain autoregressive mode trains without structure terms") {
  SmallTask task = make_task(306, 3, 2, 240);
  TrainConfig cfg = small_config(41, 2);
  cfg.mode = TrainMode::baseline;
  TrainResult r = train(task.source_train, task.target_train, task.target_val, cfg);
  CHECK(r.best.config.baseline);
  for (const StepRecord& s : r.history) {
    CHECK(s.loss.alignment == 0.0);
    CHECK(s.loss.sparsity == 0.0);
  }
  CHECK(r.best.params.find("enc1_1_w") == -1);
}

TEST_CASE("unlabeled reconstruction is off by default and changes the target ELBO when on") {
  SmallTask task = make_task(307, 3, 2, 240);
  TrainConfig cfg = small_config(43, 1);
  cfg.labeled_fraction = 0.0;
  TrainResult off = train(task.source_train, task.target_train, task.target_val, cfg);
  CHECK(off.history[0].loss.neg_elbo_target == 0.0);

  cfg.include_unlabeled_recon = true;
  TrainResult on = train(task.source_train, task.target_train, task.target_val, cfg);
  CHECK(on.history[0].loss.neg_elbo_target != 0.0);
}

TEST_CASE("exploding data aborts with a diagnostic") {
  Dataset src, tgt, val;
  src.M = tgt.M = val.M = 2;
  for (int i = 0; i < 4; ++i) {
    src.windows.push_back(sine_window(8, 2, 2, 1, 0.3 * i, 1e7));
    tgt.windows.push_back(sine_window(8, 2, 2, 2, 0.2 * i, 1e7));
    val.windows.push_back(sine_window(8, 2, 2, 2, 0.1 * i, 1e7));
  }
  TrainConfig cfg;
  cfg.k = 2;
  cfg.window = 8;
  cfg.horizon = 2;
  cfg.n_predict_steps = 3;
  cfg.batch_size = 4;
  cfg.epochs = 1;
  CHECK_THROWS_AS(train(src, tgt, val, cfg), NumericError);
}

TEST_CASE("empty datasets are rejected up front") {
  SmallTask task = make_task(308, 3, 2, 240);
  TrainConfig cfg = small_config(47, 1);
  Dataset empty;
  empty.M = 3;
  CHECK_THROWS_AS(train(empty, task.target_train, task.target_val, cfg), ConfigError);
  CHECK_THROWS_AS(train(task.source_train, empty, task.target_val, cfg), ConfigError);
  CHECK_THROWS_AS(train(task.source_train, task.target_train, empty, cfg), ConfigError);
}

}  // TEST_SUITE
