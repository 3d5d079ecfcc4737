#pragma once

#include <array>
#include <cstddef>
#include <utility>
#include <vector>

#include "gca/rng.hpp"
#include "gca/tensor.hpp"

namespace gca {

// One lag of the ground-truth system: which edges exist and how strong they
// are. Entry (i, m) refers to the influence of variable m on variable i.
struct WeightedLagStructure {
  int lag = 1;        // 1-based lag index
  Tensor adjacency;   // {M, M}, entries 0 or 1
  Tensor weights;     // {M, M}, zero wherever adjacency is zero
};

struct DomainConfig {
  int domain_id = 0;
  double noise_phi = 1.0;        // noise scale; std unless phi_is_variance
  bool phi_is_variance = false;  // source material is ambiguous; this picks
  int sample_interval = 1;
  double nonlinearity_c = 0.0;

  // Built-in presets for domain ids 1..3:
  //   1: phi=1,  interval=1, c=0.02
  //   2: phi=5,  interval=2, c=0.04
  //   3: phi=10, interval=3, c=0.06
  static DomainConfig preset(int id);

  double noise_std() const;
};

struct TimeSeriesWindow {
  Tensor x;  // {T, M} history
  Tensor y;  // {tau, M} future
  int domain_id = 0;
  std::size_t start = 0;  // offset of x's first row in the source series
};

struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;
  bool empty() const { return mean.empty(); }
};

struct Dataset {
  int M = 0;
  int T = 0;
  int tau = 0;
  int domain_id = 0;
  std::vector<TimeSeriesWindow> windows;
  NormStats stats;                                 // stats the windows were normalized with
  std::vector<WeightedLagStructure> ground_truth;  // empty when unknown
};

// Samples k lag structures: every entry is present independently with
// probability `density`; present weights are uniform in
// [-weight_scale, weight_scale] excluding (-0.05, 0.05); afterwards all
// weights are rescaled together until the linear part's companion-matrix
// spectral radius is at most 0.95.
std::vector<WeightedLagStructure> sample_structures(int M, int k, double density,
                                                    double weight_scale, Rng& rng);

// Simulates z_t = sum_j W_j (z_{t-j} + c*sin(z_{t-j})) + eps,
// eps ~ N(0, phi^2 I). The first k states are standard normal draws unless
// `initial` ({k, M}) overrides them. Simulates burn_in + length steps and
// returns the last `length` rows; with burn_in = 0 the returned series
// starts at the initial states. Throws NumericError when any |z| passes
// 1e6.
Tensor simulate_domain(const std::vector<WeightedLagStructure>& structures,
                       const DomainConfig& config, std::size_t length, Rng& rng,
                       std::size_t burn_in = 200, const Tensor* initial = nullptr);

// Keeps rows 0, interval, 2*interval, ...
Tensor subsample_interval(const Tensor& series, int interval);

// Per-variable z-score with population std. Near-constant variables
// (std < 1e-8) raise DataError naming the variable.
std::pair<Tensor, NormStats> zscore_normalize(const Tensor& series);
Tensor normalize_with(const Tensor& series, const NormStats& stats);
Tensor denormalize(const Tensor& series, const NormStats& stats);

// Sliding windows at offsets 0, stride, ...; count is
// floor((rows - T - tau) / stride) + 1.
Dataset window_dataset(const Tensor& series, int T, int tau, int stride, int domain_id = 0);

struct SplitRatios {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
};

// Disjoint cover of the dataset's windows. Chronological mode (default)
// cuts by window order so training windows strictly precede validation.
// Shuffled mode permutes with the given generator first.
std::array<Dataset, 3> split_dataset(const Dataset& dataset, SplitRatios ratios, Rng& rng,
                                     bool chronological = true);

struct GenerateOptions {
  int M = 5;
  int k = 2;
  double density = 0.3;
  double weight_scale = 0.5;
  std::size_t length = 10000;  // rows kept per domain after interval subsampling
  std::size_t burn_in = 200;
  bool perturb_weights = false;  // per-domain U[0.8, 1.2] factors on nonzero weights
  bool phi_is_variance = false;
};

struct DomainSeries {
  DomainConfig config;
  Tensor raw;  // post-subsample, pre-normalization
};

struct MultiDomainData {
  std::vector<WeightedLagStructure> structures;  // shared across all domains
  std::vector<DomainSeries> domains;
};

// Multi-domain entry point: one structure set is sampled once and reused
// for every domain, so all domains share the same ground-truth summary
// graph. Each domain simulates (length-1)*interval + 1 raw rows (plus
// burn-in) and is then subsampled to exactly `length` rows.
MultiDomainData generate_domains(const GenerateOptions& options,
                                 const std::vector<DomainConfig>& domains, Rng& rng);

}  // namespace gca
