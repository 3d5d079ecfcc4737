#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "gca/error.hpp"
#include "gca/model.hpp"

using namespace gca;
using ad::Tape;
using ad::Var;

namespace {

ModelConfig small_config(int M = 3, int k = 2, int n_domains = 2) {
  ModelConfig c;
  c.M = M;
  c.k = k;
  c.n_domains = n_domains;
  return c;
}

Tensor ramp_history(int T, int M, double step = 0.1) {
  Tensor h(Shape{static_cast<std::size_t>(T), static_cast<std::size_t>(M)});
  for (std::size_t i = 0; i < h.size(); ++i) h.v[i] = std::sin(0.3 * static_cast<double>(i)) + step;
  return h;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("gumbel relaxation saturates, centers and stays inside (0,1)") {
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    double s = gumbel_bernoulli_sample(10.0, 0.01, rng);
    CHECK(s > 0.999);
    CHECK(s < 1.0);
  }
  double mean = 0.0;
  for (int i = 0; i < 100000; ++i) mean += gumbel_bernoulli_sample(0.0, 1.0, rng);
  mean /= 100000.0;
  CHECK(std::abs(mean - 0.5) < 0.01);
  for (int i = 0; i < 50; ++i) {
    double s = gumbel_bernoulli_sample(-4.0, 0.3, rng);
    CHECK(s > 0.0);
    CHECK(s < 1.0);
  }
  CHECK_THROWS_AS(gumbel_bernoulli_sample(0.0, 0.0, rng), ConfigError);
}

TEST_CASE("encoding produces per-lag logits and samples of shape [1, M*M]") {
  Rng rng(2);
  GcaModel model(small_config(), rng);
  Tape tape;
  BoundModel bm = bind(model, tape, true);
  Rng noise(3);
  FullTimeGraph g = encode_structures(bm, ramp_history(6, 3), 0, 1.0, noise);
  REQUIRE(g.logits.size() == 2);
  REQUIRE(g.samples.size() == 2);
  for (int j = 0; j < 2; ++j) {
    CHECK(g.logits[j].shape() == Shape{1, 9});
    CHECK(g.samples[j].shape() == Shape{1, 9});
    for (double s : g.samples[j].val().v) {
      CHECK(s > 0.0);
      CHECK(s < 1.0);
    }
    for (std::size_t e = 0; e < 9; ++e) {
      double logit = g.logits[j].val().v[e];
      double p = 1.0 / (1.0 + std::exp(-logit));
      CHECK(g.probs[j].val().v[e] == doctest::Approx(p));
    }
  }
}

TEST_CASE("different domain codes give different logits on the same history") {
  Rng rng(4);
  GcaModel model(small_config(), rng);
  Tape tape;
  BoundModel bm = bind(model, tape, false);
  Rng n1(9), n2(9);
  FullTimeGraph a = encode_structures(bm, ramp_history(6, 3), 0, 1.0, n1);
  FullTimeGraph b = encode_structures(bm, ramp_history(6, 3), 1, 1.0, n2);
  CHECK(a.logits[0].val().v != b.logits[0].val().v);
}

TEST_CASE("noise flows forward through the lag recurrence, never backward") {
  Rng rng(5);
  GcaModel model(small_config(), rng);
  Tape tape;
  BoundModel bm = bind(model, tape, false);
  Tensor h = ramp_history(6, 3);
  Rng n1(100), n2(200);
  FullTimeGraph a = encode_structures(bm, h, 0, 1.0, n1);
  FullTimeGraph b = encode_structures(bm, h, 0, 1.0, n2);
  // Lag-1 logits depend only on history and the domain code.
  CHECK(a.logits[0].val().v == b.logits[0].val().v);
  // The noise differs, so lag-1 samples differ, so lag-2 logits differ.
  CHECK(a.samples[0].val().v != b.samples[0].val().v);
  CHECK(a.logits[1].val().v != b.logits[1].val().v);
}

TEST_CASE("lag-j logits are recorded after lag-(j-1) samples") {
  Rng rng(6);
  GcaModel model(small_config(3, 3), rng);
  Tape tape;
  BoundModel bm = bind(model, tape, false);
  Rng noise(7);
  FullTimeGraph g = encode_structures(bm, ramp_history(8, 3), 0, 0.7, noise);
  for (int j = 1; j < 3; ++j) {
    CHECK(g.logits[j].id > g.samples[j - 1].id);
    CHECK(g.samples[j].id > g.logits[j].id);
  }
}

TEST_CASE("hard encoding is binary and deterministic") {
  Rng rng(8);
  GcaModel model(small_config(), rng);
  Tape tape;
  BoundModel bm = bind(model, tape, false);
  Tensor h = ramp_history(6, 3);
  FullTimeGraph a = encode_structures_hard(bm, h, 0);
  FullTimeGraph b = encode_structures_hard(bm, h, 0);
  for (int j = 0; j < 2; ++j) {
    CHECK(a.samples[j].val().v == b.samples[j].val().v);
    for (std::size_t e = 0; e < 9; ++e) {
      const double s = a.samples[j].val().v[e];
      CHECK((s == 0.0 || s == 1.0));
      CHECK(s == (a.probs[j].val().v[e] >= 0.5 ? 1.0 : 0.0));
    }
  }
}

TEST_CASE("an all-zero structure makes the lag effect independent of the observation") {
  Rng rng(10);
  GcaModel model(small_config(), rng);
  Tape tape;
  BoundModel bm = bind(model, tape, false);
  Var zeros = tape.constant(Tensor(Shape{3, 3}));
  Var beta = bm.at(model.beta[0]);
  Var z1 = tape.constant(Tensor({1, 3}, {1.0, -2.0, 3.0}));
  Var z2 = tape.constant(Tensor({1, 3}, {-5.0, 0.5, 9.0}));
  auto e1 = intra_lag_effect(bm, z1, zeros, beta);
  auto e2 = intra_lag_effect(bm, z2, zeros, beta);
  for (std::size_t i = 0; i < 3; ++i) CHECK(e1[i].val().v == e2[i].val().v);
}

TEST_CASE("an identity structure lets each target see only itself") {
  Rng rng(11);
  GcaModel model(small_config(), rng);
  Tape tape;
  BoundModel bm = bind(model, tape, false);
  Tensor eye(Shape{3, 3});
  for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  Var identity = tape.constant(eye);
  Var beta = bm.at(model.beta[0]);
  // Perturbing variable 2 must not change target 0's effect.
  auto e1 = intra_lag_effect(bm, tape.constant(Tensor({1, 3}, {1.0, 2.0, 3.0})), identity, beta);
  auto e2 = intra_lag_effect(bm, tape.constant(Tensor({1, 3}, {1.0, 2.0, 99.0})), identity, beta);
  CHECK(e1[0].val().v == e2[0].val().v);
  CHECK(e1[2].val().v != e2[2].val().v);
}

TEST_CASE("the strength code changes the effect while structure is fixed") {
  Rng rng(12);
  GcaModel model(small_config(), rng);
  Tape tape;
  BoundModel bm = bind(model, tape, false);
  Tensor ones(Shape{3, 3}, 1.0);
  Var adj = tape.constant(ones);
  Var z = tape.constant(Tensor({1, 3}, {0.5, -0.5, 1.0}));
  Var beta1 = bm.at(model.beta[0]);
  Var beta2 = ad::scale(beta1, 2.0);
  auto e1 = intra_lag_effect(bm, z, adj, beta1);
  auto e2 = intra_lag_effect(bm, z, adj, beta2);
  CHECK(e1[0].val().v != e2[0].val().v);
}

TEST_CASE("aggregation is positional in the lag order") {
  Rng rng(13);
  GcaModel model(small_config(), rng);
  Tape tape;
  BoundModel bm = bind(model, tape, false);
  Var beta = bm.at(model.beta[0]);
  Var adj = tape.constant(Tensor(Shape{3, 3}, 1.0));
  auto ea = intra_lag_effect(bm, tape.constant(Tensor({1, 3}, {1.0, 0.0, 0.0})), adj, beta);
  auto eb = intra_lag_effect(bm, tape.constant(Tensor({1, 3}, {0.0, 1.0, 0.0})), adj, beta);
  Var fwd = inter_lag_aggregate(bm, {ea, eb});
  Var rev = inter_lag_aggregate(bm, {eb, ea});
  CHECK(fwd.shape() == Shape{1, 3});
  CHECK(fwd.val().v != rev.val().v);
  CHECK_THROWS_AS(inter_lag_aggregate(bm, {ea}), ConfigError);
}

TEST_CASE("all-zero effects reduce to the aggregator's bias response") {
  Rng rng(14);
  GcaModel model(small_config(), rng);
  Tape tape;
  BoundModel bm = bind(model, tape, false);
  std::vector<std::vector<Var>> zero_effects(2);
  for (int j = 0; j < 2; ++j)
    for (int i = 0; i < 3; ++i) zero_effects[j].push_back(tape.constant(Tensor(Shape{1, 3})));
  Var out = inter_lag_aggregate(bm, zero_effects);

  // Hand-computed G(0): tanh(b1) W2 + b2, identical for every variable.
  const Tensor& b1 = model.params.values[model.agg1.b];
  const Tensor& w2 = model.params.values[model.agg2.w];
  const Tensor& b2 = model.params.values[model.agg2.b];
  double expected = b2.v[0];
  for (std::size_t h = 0; h < w2.shape[0]; ++h) expected += std::tanh(b1.v[h]) * w2.v[h];
  for (int i = 0; i < 3; ++i) CHECK(out.val().v[i] == doctest::Approx(expected));
}

TEST_CASE("one-step prediction is deterministic given a fixed graph") {
  Rng rng(15);
  GcaModel model(small_config(), rng);
  Tape tape;
  BoundModel bm = bind(model, tape, false);
  Tensor h = ramp_history(6, 3);
  FullTimeGraph g = encode_structures_hard(bm, h, 0);
  Var p1 = one_step_predict(bm, h, g, 0);
  Var p2 = one_step_predict(bm, h, g, 0);
  CHECK(p1.shape() == Shape{1, 3});
  CHECK(p1.val().v == p2.val().v);
}

TEST_CASE("horizon-1 hard forecast equals one-step prediction") {
  Rng rng(16);
  GcaModel model(small_config(), rng);
  Tensor h = ramp_history(6, 3);
  Tensor f = forecast(model, h, 0, 1, ForecastMode::hard);
  CHECK(f.shape == Shape{1, 3});

  Tape tape;
  BoundModel bm = bind(model, tape, false);
  FullTimeGraph g = encode_structures_hard(bm, h, 0);
  Var p = one_step_predict(bm, h, g, 0);
  for (int m = 0; m < 3; ++m) CHECK(f.v[m] == doctest::Approx(p.val().v[m]));

  Tensor f5 = forecast(model, h, 0, 5, ForecastMode::hard);
  CHECK(f5.shape == Shape{5, 3});
}

TEST_CASE("a row that gates out a variable ignores it exactly") {
  Rng rng(17);
  GcaModel model(small_config(), rng);
  Tape tape;
  BoundModel bm = bind(model, tape, false);

  const int i = 0, m = 2;
  Tensor gate(Shape{3, 3}, 1.0);
  gate.at(i, m) = 0.0;
  FullTimeGraph g;
  g.M = 3;
  g.k = 2;
  for (int j = 0; j < 2; ++j) {
    Var s = tape.constant(Tensor(Shape{1, 9}, gate.v));
    g.samples.push_back(s);
    g.probs.push_back(s);
  }

  Tensor h1 = ramp_history(6, 3);
  Tensor h2 = h1;
  for (std::size_t r = 0; r < h2.rows(); ++r) h2.at(r, m) += 1234.5;

  Var p1 = one_step_predict(bm, h1, g, 0);
  Var p2 = one_step_predict(bm, h2, g, 0);
  CHECK(p1.val().v[i] == p2.val().v[i]);  // exact, not approximate
  CHECK(p1.val().v[m] != p2.val().v[m]);
}

TEST_CASE("summary graph averages edge probabilities over lags") {
  Tape tape;
  FullTimeGraph g;
  g.M = 2;
  g.k = 2;
  g.probs.push_back(tape.constant(Tensor({1, 4}, {1.0, 0.0, 0.0, 1.0})));
  g.probs.push_back(tape.constant(Tensor({1, 4}, {0.0, 1.0, 0.0, 0.0})));
  Var s = summary_graph(g);
  CHECK(s.shape() == Shape{2, 2});
  CHECK(s.val().v == std::vector<double>{0.5, 0.5, 0.0, 0.5});

  FullTimeGraph g1;
  g1.M = 2;
  g1.k = 1;
  g1.probs.push_back(tape.constant(Tensor({1, 4}, {0.25, 0.5, 0.75, 1.0})));
  CHECK(summary_graph(g1).val().v == std::vector<double>{0.25, 0.5, 0.75, 1.0});
}

TEST_CASE("gradients reach the encoder, decoder and domain codes") {
  Rng rng(18);
  GcaModel model(small_config(), rng);
  Tape tape;
  BoundModel bm = bind(model, tape, true);
  Tensor h = ramp_history(6, 3);
  Rng noise(19);
  FullTimeGraph g = encode_structures(bm, h, 0, 1.0, noise);
  Var pred = one_step_predict(bm, h, g, 0);
  Var loss = ad::sum(ad::square(pred)) + ad::sum(summary_graph(g));
  tape.backward(loss);

  auto grad_nonzero = [&](int idx) {
    Tensor grad = bm.at(idx).grad();
    for (double v : grad.v)
      if (v != 0.0) return true;
    return false;
  };
  CHECK(grad_nonzero(model.enc1[0].w));
  CHECK(grad_nonzero(model.enc2[1].w));
  CHECK(grad_nonzero(model.dec1[0].w));
  CHECK(grad_nonzero(model.dec2[2].w));
  CHECK(grad_nonzero(model.agg1.w));
  CHECK(grad_nonzero(model.agg2.b));
  CHECK(grad_nonzero(model.alpha[0]));
  CHECK(grad_nonzero(model.beta[0]));
}

TEST_CASE("baseline model has no structure machinery") {
  ModelConfig cfg = small_config();
  cfg.baseline = true;
  Rng rng(20);
  GcaModel model(cfg, rng);
  CHECK(model.enc1.empty());
  CHECK(model.alpha.empty());
  CHECK(model.beta.size() == 1);
  CHECK(model.params.find("enc1_1_w") == -1);

  Tape tape;
  BoundModel bm = bind(model, tape, false);
  Rng noise(1);
  FullTimeGraph g = encode_structures(bm, ramp_history(6, 3), 1, 1.0, noise);
  CHECK(g.logits.empty());
  for (const auto& s : g.samples)
    for (double v : s.val().v) CHECK(v == 1.0);
}

TEST_CASE("unknown domains and short histories are rejected") {
  Rng rng(21);
  GcaModel model(small_config(), rng);
  Tape tape;
  BoundModel bm = bind(model, tape, false);
  Rng noise(1);
  CHECK_THROWS_AS(encode_structures(bm, ramp_history(6, 3), 5, 1.0, noise), ConfigError);
  CHECK_THROWS_AS(encode_structures(bm, ramp_history(1, 3), 0, 1.0, noise), ConfigError);
  CHECK_THROWS_AS(encode_structures(bm, ramp_history(6, 3), 0, 0.0, noise), ConfigError);
}

TEST_CASE("checkpoints round-trip the model exactly") {
  Rng rng(22);
  GcaModel model(small_config(), rng);
  Checkpoint ckpt;
  ckpt.config = model.config;
  ckpt.params = model.params;
  ckpt.source_stats.mean = {1.0, 2.0, 3.0};
  ckpt.source_stats.std = {0.5, 0.25, 0.125};
  ckpt.train_config_json = "{\"epochs\":7}";

  const std::string path = "/tmp/gca_model_test_ckpt.json";
  save_checkpoint(path, ckpt);
  Checkpoint back = load_checkpoint(path);
  CHECK(back.config.M == 3);
  CHECK(back.config.k == 2);
  CHECK(back.params.names == model.params.names);
  for (std::size_t i = 0; i < back.params.size(); ++i)
    CHECK(back.params.values[i].v == model.params.values[i].v);
  CHECK(back.source_stats.mean == ckpt.source_stats.mean);
  CHECK(back.target_stats.empty());
  CHECK(!back.train_config_json.empty());

  GcaModel rebuilt = GcaModel::from_params(back.config, back.params);
  Tensor h = ramp_history(6, 3);
  CHECK(forecast(rebuilt, h, 0, 3, ForecastMode::hard).v ==
        forecast(model, h, 0, 3, ForecastMode::hard).v);

  // Saving what was loaded reproduces the file byte for byte.
  const std::string path2 = "/tmp/gca_model_test_ckpt2.json";
  save_checkpoint(path2, back);
  std::ifstream f1(path), f2(path2);
  std::stringstream s1, s2;
  s1 << f1.rdbuf();
  s2 << f2.rdbuf();
  CHECK(s1.str() == s2.str());
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("mismatched checkpoints are rejected") {
  Rng rng(23);
  GcaModel model(small_config(), rng);
  ParamSet wrong = model.params;
  wrong.values[0] = Tensor(Shape{2, 2});
  CHECK_THROWS_AS(GcaModel::from_params(model.config, wrong), ConfigError);
}

}  // TEST_SUITE
