#include <cmath>
#include <cstdlib>

#include "doctest.h"
#include "gca/error.hpp"
#include "gca/synthetic.hpp"

using namespace gca;

TEST_SUITE("synthetic") {

TEST_CASE("density 0 gives empty structures, density 1 fills them") {
  Rng rng(1);
  auto empty = sample_structures(4, 2, 0.0, 0.5, rng);
  for (const auto& s : empty) {
    for (double a : s.adjacency.v) CHECK(a == 0.0);
    for (double w : s.weights.v) CHECK(w == 0.0);
  }
  auto full = sample_structures(4, 2, 1.0, 0.5, rng);
  for (const auto& s : full)
    for (double a : s.adjacency.v) CHECK(a == 1.0);
}

TEST_CASE("edge count matches the binomial expectation over 200 seeds") {
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed);
    auto structures = sample_structures(5, 2, 0.3, 0.5, rng);
    for (const auto& s : structures)
      for (double a : s.adjacency.v) total += a;
  }
  const double mean_edges = total / 200.0;
  CHECK(mean_edges > 15.0 - 1.5);
  CHECK(mean_edges < 15.0 + 1.5);
}

TEST_CASE("weights vanish exactly off the adjacency support") {
  Rng rng(42);
  auto structures = sample_structures(6, 3, 0.4, 0.5, rng);
  for (const auto& s : structures) {
    for (std::size_t e = 0; e < s.adjacency.size(); ++e) {
      CHECK((s.adjacency.v[e] == 0.0 || s.adjacency.v[e] == 1.0));
      if (s.adjacency.v[e] == 0.0) CHECK(s.weights.v[e] == 0.0);
      else CHECK(s.weights.v[e] != 0.0);
    }
  }
}

TEST_CASE("stabilized systems simulate long horizons without blowing up") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    auto structures = sample_structures(5, 2, 0.6, 2.0, rng);
    DomainConfig config;
    config.noise_phi = 0.1;
    Tensor z = simulate_domain(structures, config, 5000, rng);
    double peak = 0.0;
    for (double v : z.v) peak = std::max(peak, std::abs(v));
    CHECK(peak < 100.0);
  }
}

TEST_CASE("deterministic linear recursion from a fixed initial state") {
  WeightedLagStructure s;
  s.lag = 1;
  s.adjacency = Tensor({1, 1}, {1.0});
  s.weights = Tensor({1, 1}, {0.5});
  DomainConfig config;
  config.noise_phi = 0.0;
  Rng rng(0);
  Tensor init({1, 1}, {1.0});
  Tensor z = simulate_domain({s}, config, 3, rng, 0, &init);
  REQUIRE(z.rows() == 3);
  CHECK(z.v[0] == doctest::Approx(1.0));
  CHECK(z.v[1] == doctest::Approx(0.5));
  CHECK(z.v[2] == doctest::Approx(0.25));
}

TEST_CASE("zero weights and unit noise produce standard normal samples") {
  WeightedLagStructure s;
  s.lag = 1;
  s.adjacency = Tensor({1, 1});
  s.weights = Tensor({1, 1});
  DomainConfig config;
  config.noise_phi = 1.0;
  Rng rng(9);
  Tensor z = simulate_domain({s}, config, 10000, rng, 0);
  double mean = 0.0;
  for (double v : z.v) mean += v;
  mean /= static_cast<double>(z.size());
  CHECK(std::abs(mean) < 3.0 / 100.0);
}

TEST_CASE("noiseless simulation is reproducible from the seed") {
  Rng rng_a(7);
  auto structures = sample_structures(3, 2, 0.5, 0.5, rng_a);
  DomainConfig config;
  config.noise_phi = 0.0;
  Rng r1(123), r2(123);
  Tensor z1 = simulate_domain(structures, config, 50, r1);
  Tensor z2 = simulate_domain(structures, config, 50, r2);
  CHECK(z1.v == z2.v);
}

TEST_CASE("explosive systems abort with an unstable-system error") {
  WeightedLagStructure s;
  s.lag = 1;
  s.adjacency = Tensor({1, 1}, {1.0});
  s.weights = Tensor({1, 1}, {2.0});
  DomainConfig config;
  config.noise_phi = 0.0;
  Rng rng(0);
  Tensor init({1, 1}, {1.0});
  CHECK_THROWS_AS(simulate_domain({s}, config, 200, rng, 0, &init), NumericError);
}

TEST_CASE("domain presets carry the published settings") {
  DomainConfig d1 = DomainConfig::preset(1);
  CHECK(d1.noise_phi == 1.0);
  CHECK(d1.sample_interval == 1);
  CHECK(d1.nonlinearity_c == 0.02);
  DomainConfig d2 = DomainConfig::preset(2);
  CHECK(d2.noise_phi == 5.0);
  CHECK(d2.sample_interval == 2);
  CHECK(d2.nonlinearity_c == 0.04);
  DomainConfig d3 = DomainConfig::preset(3);
  CHECK(d3.noise_phi == 10.0);
  CHECK(d3.sample_interval == 3);
  CHECK(d3.nonlinearity_c == 0.06);
  CHECK_THROWS_AS(DomainConfig::preset(4), ConfigError);
}

TEST_CASE("phi can be reinterpreted as a variance") {
  DomainConfig c;
  c.noise_phi = 4.0;
  CHECK(c.noise_std() == 4.0);
  c.phi_is_variance = true;
  CHECK(c.noise_std() == doctest::Approx(2.0));
}

TEST_CASE("interval subsampling keeps every interval-th row") {
  Tensor s(Shape{6, 1}, {0, 1, 2, 3, 4, 5});
  Tensor kept = subsample_interval(s, 2);
  CHECK(kept.v == std::vector<double>{0, 2, 4});

  CHECK(subsample_interval(s, 1).v == s.v);

  Tensor s7(Shape{7, 1}, {0, 1, 2, 3, 4, 5, 6});
  CHECK(subsample_interval(s7, 3).v == std::vector<double>{0, 3, 6});
}

TEST_CASE("subsampling composes multiplicatively") {
  Tensor s(Shape{30, 1});
  for (std::size_t i = 0; i < 30; ++i) s.v[i] = static_cast<double>(i);
  Tensor a = subsample_interval(subsample_interval(s, 2), 3);
  Tensor b = subsample_interval(s, 6);
  CHECK(a.v == b.v);
}

TEST_CASE("zscore matches the hand-computed three-point case") {
  Tensor s(Shape{3, 1}, {1.0, 2.0, 3.0});
  auto [z, stats] = zscore_normalize(s);
  CHECK(z.v[0] == doctest::Approx(-1.224744871).epsilon(1e-6));
  CHECK(z.v[1] == doctest::Approx(0.0));
  CHECK(z.v[2] == doctest::Approx(1.224744871).epsilon(1e-6));
  CHECK(stats.mean[0] == doctest::Approx(2.0));
  CHECK(stats.std[0] == doctest::Approx(std::sqrt(2.0 / 3.0)));
}

TEST_CASE("zscore output has mean 0 and population std 1") {
  Rng rng(5);
  Tensor s(Shape{500, 3});
  for (double& v : s.v) v = rng.uniform(-4.0, 9.0);
  auto [z, stats] = zscore_normalize(s);
  for (std::size_t m = 0; m < 3; ++m) {
    double mean = 0.0;
    for (std::size_t r = 0; r < 500; ++r) mean += z.at(r, m);
    mean /= 500.0;
    double var = 0.0;
    for (std::size_t r = 0; r < 500; ++r) var += (z.at(r, m) - mean) * (z.at(r, m) - mean);
    var /= 500.0;
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-9);
  }
}

TEST_CASE("zscore is idempotent on standardized data") {
  Rng rng(6);
  Tensor s(Shape{200, 2});
  for (double& v : s.v) v = rng.normal();
  auto [z1, st1] = zscore_normalize(s);
  auto [z2, st2] = zscore_normalize(z1);
  for (std::size_t i = 0; i < z1.size(); ++i) CHECK(std::abs(z1.v[i] - z2.v[i]) < 1e-9);
}

TEST_CASE("constant variables are rejected by name") {
  Tensor s(Shape{10, 2});
  for (std::size_t r = 0; r < 10; ++r) {
    s.at(r, 0) = static_cast<double>(r);
    s.at(r, 1) = 3.5;
  }
  CHECK_THROWS_WITH_AS(zscore_normalize(s),
                       "zscore: variable 1 is near-constant (population std < 1e-8)", DataError);
}

TEST_CASE("denormalization inverts normalization") {
  Rng rng(8);
  Tensor s(Shape{100, 4});
  for (double& v : s.v) v = rng.uniform(-10.0, 50.0);
  auto [z, stats] = zscore_normalize(s);
  Tensor back = denormalize(z, stats);
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(std::abs(back.v[i] - s.v[i]) < 1e-9);
  Tensor again = normalize_with(s, stats);
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(std::abs(again.v[i] - z.v[i]) < 1e-12);
}

TEST_CASE("window counts follow the sliding-window formula") {
  Tensor s(Shape{100, 2});
  for (std::size_t i = 0; i < s.size(); ++i) s.v[i] = static_cast<double>(i);
  Dataset d = window_dataset(s, 30, 10, 1);
  CHECK(d.windows.size() == 61);

  Tensor exact(Shape{40, 2});
  CHECK(window_dataset(exact, 30, 10, 1).windows.size() == 1);
  CHECK(window_dataset(s, 30, 10, 100).windows.size() == 1);
  CHECK_THROWS_AS(window_dataset(Tensor(Shape{39, 2}), 30, 10, 1), DataError);
}

TEST_CASE("windows slice history and target contiguously") {
  Tensor s(Shape{20, 1});
  for (std::size_t i = 0; i < 20; ++i) s.v[i] = static_cast<double>(i);
  Dataset d = window_dataset(s, 3, 2, 4);
  REQUIRE(d.windows.size() == 4);
  const TimeSeriesWindow& w = d.windows[1];
  CHECK(w.start == 4);
  CHECK(w.x.v == std::vector<double>{4, 5, 6});
  CHECK(w.y.v == std::vector<double>{7, 8});
}

TEST_CASE("chronological split keeps order and exact sizes") {
  Tensor s(Shape{139, 1});
  for (std::size_t i = 0; i < s.size(); ++i) s.v[i] = static_cast<double>(i) * 0.1;
  Dataset d = window_dataset(s, 30, 10, 1);
  REQUIRE(d.windows.size() == 100);
  Rng rng(1);
  auto parts = split_dataset(d, SplitRatios{0.6, 0.2, 0.2}, rng);
  CHECK(parts[0].windows.size() == 60);
  CHECK(parts[1].windows.size() == 20);
  CHECK(parts[2].windows.size() == 20);
  CHECK(parts[0].windows.back().start < parts[1].windows.front().start);
  CHECK(parts[1].windows.back().start < parts[2].windows.front().start);
}

TEST_CASE("splits that would leave a part empty are rejected") {
  Tensor s(Shape{139, 1}, 0.0);
  for (std::size_t i = 0; i < s.size(); ++i) s.v[i] = static_cast<double>(i);
  Dataset d = window_dataset(s, 30, 10, 1);
  Rng rng(1);
  CHECK_THROWS_AS(split_dataset(d, SplitRatios{0.998, 0.001, 0.001}, rng), ConfigError);
  CHECK_THROWS_AS(split_dataset(d, SplitRatios{0.5, 0.2, 0.2}, rng), ConfigError);
}

TEST_CASE("shuffled split is reproducible from the seed") {
  Tensor s(Shape{139, 1});
  for (std::size_t i = 0; i < s.size(); ++i) s.v[i] = static_cast<double>(i);
  Dataset d = window_dataset(s, 30, 10, 1);
  Rng r1(77), r2(77);
  auto a = split_dataset(d, SplitRatios{0.6, 0.2, 0.2}, r1, false);
  auto b = split_dataset(d, SplitRatios{0.6, 0.2, 0.2}, r2, false);
  for (int p = 0; p < 3; ++p) {
    REQUIRE(a[p].windows.size() == b[p].windows.size());
    for (std::size_t i = 0; i < a[p].windows.size(); ++i)
      CHECK(a[p].windows[i].start == b[p].windows[i].start);
  }
}

TEST_CASE("multi-domain generation shares one structure set") {
  GenerateOptions options;
  options.M = 4;
  options.k = 2;
  options.density = 0.4;
  options.length = 300;
  options.burn_in = 50;
  Rng rng(11);
  auto data = generate_domains(options, {DomainConfig::preset(1), DomainConfig::preset(2)}, rng);
  CHECK(data.structures.size() == 2);
  REQUIRE(data.domains.size() == 2);
  for (const auto& d : data.domains) {
    CHECK(d.raw.rows() == 300);
    CHECK(d.raw.cols() == 4);
  }
  CHECK(data.domains[0].raw.v != data.domains[1].raw.v);

  Rng rng2(11);
  auto again = generate_domains(options, {DomainConfig::preset(1), DomainConfig::preset(2)}, rng2);
  CHECK(again.domains[0].raw.v == data.domains[0].raw.v);
  CHECK(again.domains[1].raw.v == data.domains[1].raw.v);
}

}  // TEST_SUITE
