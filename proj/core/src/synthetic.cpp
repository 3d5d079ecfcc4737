#include "gca/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "gca/error.hpp"

namespace gca {

namespace {

constexpr double kSpectralCap = 0.95;
constexpr double kWeightDeadZone = 0.05;
constexpr double kDivergenceBound = 1e6;

// Largest |eigenvalue| of the companion matrix of the linear part,
// estimated by normalized power iteration. Good to a few percent, which is
// all the stabilization loop needs.
double companion_spectral_radius(const std::vector<WeightedLagStructure>& structures, int M) {
  const int k = static_cast<int>(structures.size());
  const std::size_t n = static_cast<std::size_t>(M) * k;
  std::vector<double> v(n, 1.0 / std::sqrt(static_cast<double>(n)));
  std::vector<double> w(n, 0.0);
  double growth = 0.0;
  const int iters = 200;
  for (int it = 0; it < iters; ++it) {
    // w = C v with C the block companion matrix: top row of blocks is
    // W_1..W_k, subdiagonal blocks are identities.
    for (int i = 0; i < M; ++i) {
      double acc = 0.0;
      for (int j = 0; j < k; ++j) {
        const Tensor& W = structures[static_cast<std::size_t>(j)].weights;
        for (int m = 0; m < M; ++m) acc += W.at(i, m) * v[static_cast<std::size_t>(j) * M + m];
      }
      w[static_cast<std::size_t>(i)] = acc;
    }
    for (std::size_t i = static_cast<std::size_t>(M); i < n; ++i) w[i] = v[i - M];
    double norm = 0.0;
    for (double x : w) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-300) return 0.0;
    for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / norm;
    growth = norm;
  }
  return growth;
}

}  // namespace

DomainConfig DomainConfig::preset(int id) {
  DomainConfig c;
  c.domain_id = id;
  switch (id) {
    case 1: c.noise_phi = 1.0; c.sample_interval = 1; c.nonlinearity_c = 0.02; break;
    case 2: c.noise_phi = 5.0; c.sample_interval = 2; c.nonlinearity_c = 0.04; break;
    case 3: c.noise_phi = 10.0; c.sample_interval = 3; c.nonlinearity_c = 0.06; break;
    default:
      throw ConfigError("no preset for domain id " + std::to_string(id) + "; known ids are 1..3");
  }
  return c;
}

double DomainConfig::noise_std() const {
  if (noise_phi < 0.0) throw ConfigError("noise_phi must be >= 0");
  return phi_is_variance ? std::sqrt(noise_phi) : noise_phi;
}

std::vector<WeightedLagStructure> sample_structures(int M, int k, double density,
                                                    double weight_scale, Rng& rng) {
  if (M < 1 || k < 1) throw ConfigError("sample_structures: M and k must be >= 1");
  if (density < 0.0 || density > 1.0)
    throw ConfigError("sample_structures: density must lie in [0, 1]");
  if (weight_scale <= kWeightDeadZone && density > 0.0)
    throw ConfigError("sample_structures: weight_scale must exceed " +
                      std::to_string(kWeightDeadZone));

  std::vector<WeightedLagStructure> out;
  out.reserve(static_cast<std::size_t>(k));
  for (int j = 1; j <= k; ++j) {
    WeightedLagStructure s;
    s.lag = j;
    s.adjacency = Tensor(Shape{static_cast<std::size_t>(M), static_cast<std::size_t>(M)});
    s.weights = Tensor(s.adjacency.shape);
    for (std::size_t e = 0; e < s.adjacency.size(); ++e) {
      if (rng.uniform() < density) {
        s.adjacency.v[e] = 1.0;
        double w = 0.0;
        do {
          w = rng.uniform(-weight_scale, weight_scale);
        } while (std::abs(w) < kWeightDeadZone);
        s.weights.v[e] = w;
      }
    }
    out.push_back(std::move(s));
  }

  // Shrink all weights together until the linear recursion is comfortably
  // stable; keeps a fixed point of the sampled sparsity pattern.
  for (int round = 0; round < 64; ++round) {
    double rho = companion_spectral_radius(out, M);
    if (rho <= kSpectralCap) break;
    const double shrink = kSpectralCap / rho;
    for (WeightedLagStructure& s : out)
      for (double& w : s.weights.v) w *= shrink;
  }
  return out;
}

Tensor simulate_domain(const std::vector<WeightedLagStructure>& structures,
                       const DomainConfig& config, std::size_t length, Rng& rng,
                       std::size_t burn_in, const Tensor* initial) {
  if (structures.empty()) throw ConfigError("simulate_domain: no lag structures");
  const int k = static_cast<int>(structures.size());
  const std::size_t M = structures[0].adjacency.shape[0];
  if (length <= static_cast<std::size_t>(k))
    throw ConfigError("simulate_domain: length must exceed the max lag " + std::to_string(k));
  const double sd = config.noise_std();
  const double c = config.nonlinearity_c;

  const std::size_t total = burn_in + length;
  Tensor z(Shape{total, M});

  if (initial != nullptr) {
    if (initial->shape != Shape{static_cast<std::size_t>(k), M})
      throw ConfigError("simulate_domain: initial states must have shape [" + std::to_string(k) +
                        " " + std::to_string(M) + "], got " + shape_str(initial->shape));
    std::copy(initial->v.begin(), initial->v.end(), z.v.begin());
  } else {
    for (std::size_t i = 0; i < static_cast<std::size_t>(k) * M; ++i) z.v[i] = rng.normal();
  }

  for (std::size_t t = static_cast<std::size_t>(k); t < total; ++t) {
    for (std::size_t i = 0; i < M; ++i) {
      double acc = 0.0;
      for (int j = 1; j <= k; ++j) {
        const Tensor& W = structures[static_cast<std::size_t>(j - 1)].weights;
        const double* prev = z.v.data() + (t - static_cast<std::size_t>(j)) * M;
        for (std::size_t m = 0; m < M; ++m) {
          const double base = prev[m];
          if (W.at(i, m) != 0.0) acc += W.at(i, m) * (base + c * std::sin(base));
        }
      }
      if (sd > 0.0) acc += sd * rng.normal();
      if (std::abs(acc) > kDivergenceBound)
        throw NumericError("unstable system: |z| exceeded 1e6 at step " + std::to_string(t) +
                           "; re-sample structures or reduce weight_scale");
      z.at(t, i) = acc;
    }
  }

  if (burn_in == 0) return z;
  Tensor kept(Shape{length, M});
  std::copy(z.v.begin() + static_cast<std::ptrdiff_t>(burn_in * M), z.v.end(), kept.v.begin());
  return kept;
}

Tensor subsample_interval(const Tensor& series, int interval) {
  if (interval < 1) throw ConfigError("subsample_interval: interval must be >= 1");
  if (interval == 1) return series;
  const std::size_t rows = series.rows();
  const std::size_t M = series.cols();
  const std::size_t kept = rows == 0 ? 0 : (rows - 1) / static_cast<std::size_t>(interval) + 1;
  Tensor out(Shape{kept, M});
  for (std::size_t r = 0; r < kept; ++r) {
    const std::size_t src = r * static_cast<std::size_t>(interval);
    std::copy(series.v.begin() + static_cast<std::ptrdiff_t>(src * M),
              series.v.begin() + static_cast<std::ptrdiff_t>((src + 1) * M),
              out.v.begin() + static_cast<std::ptrdiff_t>(r * M));
  }
  return out;
}

std::pair<Tensor, NormStats> zscore_normalize(const Tensor& series) {
  const std::size_t rows = series.rows();
  const std::size_t M = series.cols();
  if (rows == 0) throw DataError("zscore: empty series");
  NormStats stats;
  stats.mean.resize(M);
  stats.std.resize(M);
  for (std::size_t m = 0; m < M; ++m) {
    double mean = 0.0;
    for (std::size_t r = 0; r < rows; ++r) mean += series.at(r, m);
    mean /= static_cast<double>(rows);
    double var = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      const double d = series.at(r, m) - mean;
      var += d * d;
    }
    const double sd = std::sqrt(var / static_cast<double>(rows));
    if (sd < 1e-8)
      throw DataError("zscore: variable " + std::to_string(m) +
                      " is near-constant (population std < 1e-8)");
    stats.mean[m] = mean;
    stats.std[m] = sd;
  }
  Tensor out(series.shape);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t m = 0; m < M; ++m)
      out.at(r, m) = (series.at(r, m) - stats.mean[m]) / stats.std[m];
  return {std::move(out), std::move(stats)};
}

Tensor normalize_with(const Tensor& series, const NormStats& stats) {
  if (series.cols() != stats.mean.size())
    throw ConfigError("normalize_with: series has " + std::to_string(series.cols()) +
                      " variables, stats have " + std::to_string(stats.mean.size()));
  Tensor out(series.shape);
  for (std::size_t r = 0; r < series.rows(); ++r)
    for (std::size_t m = 0; m < series.cols(); ++m)
      out.at(r, m) = (series.at(r, m) - stats.mean[m]) / stats.std[m];
  return out;
}

Tensor denormalize(const Tensor& series, const NormStats& stats) {
  if (series.cols() != stats.mean.size())
    throw ConfigError("denormalize: series has " + std::to_string(series.cols()) +
                      " variables, stats have " + std::to_string(stats.mean.size()));
  Tensor out(series.shape);
  for (std::size_t r = 0; r < series.rows(); ++r)
    for (std::size_t m = 0; m < series.cols(); ++m)
      out.at(r, m) = series.at(r, m) * stats.std[m] + stats.mean[m];
  return out;
}

Dataset window_dataset(const Tensor& series, int T, int tau, int stride, int domain_id) {
  if (T < 1 || tau < 1 || stride < 1)
    throw ConfigError("window_dataset: T, tau and stride must be >= 1");
  const std::size_t rows = series.rows();
  const std::size_t M = series.cols();
  const std::size_t need = static_cast<std::size_t>(T) + static_cast<std::size_t>(tau);
  if (rows < need)
    throw DataError("window_dataset: series has " + std::to_string(rows) +
                    " rows, need at least " + std::to_string(need));
  const std::size_t count = (rows - need) / static_cast<std::size_t>(stride) + 1;

  Dataset ds;
  ds.M = static_cast<int>(M);
  ds.T = T;
  ds.tau = tau;
  ds.domain_id = domain_id;
  ds.windows.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    const std::size_t o = w * static_cast<std::size_t>(stride);
    TimeSeriesWindow win;
    win.domain_id = domain_id;
    win.start = o;
    win.x = Tensor(Shape{static_cast<std::size_t>(T), M});
    win.y = Tensor(Shape{static_cast<std::size_t>(tau), M});
    std::copy(series.v.begin() + static_cast<std::ptrdiff_t>(o * M),
              series.v.begin() + static_cast<std::ptrdiff_t>((o + T) * M), win.x.v.begin());
    std::copy(series.v.begin() + static_cast<std::ptrdiff_t>((o + T) * M),
              series.v.begin() + static_cast<std::ptrdiff_t>((o + need) * M), win.y.v.begin());
    ds.windows.push_back(std::move(win));
  }
  return ds;
}

std::array<Dataset, 3> split_dataset(const Dataset& dataset, SplitRatios ratios, Rng& rng,
                                     bool chronological) {
  if (ratios.train <= 0.0 || ratios.val <= 0.0 || ratios.test <= 0.0)
    throw ConfigError("split_dataset: all ratios must be positive");
  if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9)
    throw ConfigError("split_dataset: ratios must sum to 1");

  const std::size_t n = dataset.windows.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (!chronological) {
    for (std::size_t i = n; i > 1; --i) {
      const std::size_t j = rng.index(i);
      std::swap(order[i - 1], order[j]);
    }
  }

  const std::size_t n_train = static_cast<std::size_t>(static_cast<double>(n) * ratios.train);
  const std::size_t n_val = static_cast<std::size_t>(static_cast<double>(n) * ratios.val);
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n)
    throw ConfigError("split_dataset: a split would be empty (" + std::to_string(n) + " windows)");

  std::array<Dataset, 3> parts;
  for (Dataset& p : parts) {
    p.M = dataset.M;
    p.T = dataset.T;
    p.tau = dataset.tau;
    p.domain_id = dataset.domain_id;
    p.stats = dataset.stats;
    p.ground_truth = dataset.ground_truth;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const TimeSeriesWindow& w = dataset.windows[order[i]];
    if (i < n_train) parts[0].windows.push_back(w);
    else if (i < n_train + n_val) parts[1].windows.push_back(w);
    else parts[2].windows.push_back(w);
  }
  return parts;
}

MultiDomainData generate_domains(const GenerateOptions& options,
                                 const std::vector<DomainConfig>& domains, Rng& rng) {
  if (domains.empty()) throw ConfigError("generate_domains: no domains requested");
  MultiDomainData data;
  data.structures =
      sample_structures(options.M, options.k, options.density, options.weight_scale, rng);

  for (const DomainConfig& base : domains) {
    DomainConfig config = base;
    config.phi_is_variance = options.phi_is_variance;
    Rng child = rng.fork(static_cast<std::uint64_t>(config.domain_id));

    std::vector<WeightedLagStructure> weights = data.structures;
    if (options.perturb_weights) {
      for (WeightedLagStructure& s : weights)
        for (double& w : s.weights.v)
          if (w != 0.0) w *= child.uniform(0.8, 1.2);
    }

    const std::size_t raw_length =
        (options.length - 1) * static_cast<std::size_t>(config.sample_interval) + 1;
    Tensor raw = simulate_domain(weights, config, raw_length, child, options.burn_in);
    Tensor kept = subsample_interval(raw, config.sample_interval);

    data.domains.push_back(DomainSeries{config, std::move(kept)});
  }
  return data;
}

}  // namespace gca
