#include "gca/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

#include "gca/error.hpp"

namespace gca {

using ad::Tape;
using ad::Var;

int ParamSet::add(const std::string& name, Tensor init) {
  if (find(name) >= 0) throw ConfigError("parameter '" + name + "' already exists");
  names.push_back(name);
  values.push_back(std::move(init));
  return static_cast<int>(values.size()) - 1;
}

int ParamSet::find(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  return -1;
}

namespace {

Tensor glorot(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  const double lim = std::sqrt(6.0 / static_cast<double>(t.shape[0] + t.shape[1]));
  for (double& x : t.v) x = rng.uniform(-lim, lim);
  return t;
}

LinearRef add_linear(ParamSet& params, const std::string& name, std::size_t in, std::size_t out,
                     Rng& rng) {
  LinearRef ref;
  ref.w = params.add(name + "_w", glorot({in, out}, rng));
  ref.b = params.add(name + "_b", Tensor(Shape{1, out}));
  return ref;
}

Var dense(const BoundModel& bm, LinearRef ref, Var x) {
  return ad::matmul(x, bm.at(ref.w)) + bm.at(ref.b);
}

Var const_row(Tape& tape, const Tensor& mat, std::size_t r) {
  const std::size_t M = mat.cols();
  Tensor row(Shape{1, M});
  std::copy(mat.v.begin() + static_cast<std::ptrdiff_t>(r * M),
            mat.v.begin() + static_cast<std::ptrdiff_t>((r + 1) * M), row.v.begin());
  return tape.constant(std::move(row));
}

Var onehot_row(Tape& tape, std::size_t i, std::size_t M) {
  Tensor t(Shape{1, M});
  t.v[i] = 1.0;
  return tape.constant(std::move(t));
}

void validate_history(const GcaModel& model, const Tensor& history) {
  const std::size_t M = static_cast<std::size_t>(model.config.M);
  if (history.shape.size() != 2 || history.cols() != M)
    throw ConfigError("history must be [T " + std::to_string(M) + "], got " +
                      shape_str(history.shape));
  if (history.rows() < static_cast<std::size_t>(model.config.k))
    throw ConfigError("history has " + std::to_string(history.rows()) +
                      " rows, need at least the max lag " + std::to_string(model.config.k));
}

void validate_domain(const GcaModel& model, int domain_id) {
  if (domain_id < 0 || domain_id >= model.config.n_domains)
    throw ConfigError("unknown domain id " + std::to_string(domain_id) + " (model has " +
                      std::to_string(model.config.n_domains) + " domains)");
}

// Last k observations flattened most recent first: z_{t-1}, ..., z_{t-k}.
Var recent_history(Tape& tape, const Tensor& history, int k) {
  const std::size_t M = history.cols();
  const std::size_t T = history.rows();
  Tensor flat(Shape{1, static_cast<std::size_t>(k) * M});
  for (int j = 1; j <= k; ++j) {
    const std::size_t r = T - static_cast<std::size_t>(j);
    std::copy(history.v.begin() + static_cast<std::ptrdiff_t>(r * M),
              history.v.begin() + static_cast<std::ptrdiff_t>((r + 1) * M),
              flat.v.begin() + static_cast<std::ptrdiff_t>((j - 1) * static_cast<int>(M)));
  }
  return tape.constant(std::move(flat));
}

FullTimeGraph all_ones_graph(Tape& tape, int M, int k) {
  FullTimeGraph g;
  g.M = M;
  g.k = k;
  const Shape s{1, static_cast<std::size_t>(M) * static_cast<std::size_t>(M)};
  for (int j = 0; j < k; ++j) {
    Var ones = tape.constant(Tensor(s, 1.0));
    g.samples.push_back(ones);
    g.probs.push_back(ones);
  }
  return g;
}

Var beta_of(const BoundModel& bm, int domain_id) {
  const GcaModel& m = *bm.model;
  const int idx = m.config.baseline ? m.beta[0] : m.beta[static_cast<std::size_t>(domain_id)];
  return bm.at(idx);
}

// Shared recurrence for both sampling modes. next_sample turns one lag's
// logits into the sample fed to later lags and the decoder.
template <typename NextSample>
FullTimeGraph encode_impl(const BoundModel& bm, const Tensor& history, int domain_id,
                          NextSample next_sample) {
  const GcaModel& model = *bm.model;
  validate_history(model, history);
  validate_domain(model, domain_id);
  Tape& tape = *bm.tape;
  const int M = model.config.M;
  const int k = model.config.k;

  if (model.config.baseline) return all_ones_graph(tape, M, k);

  FullTimeGraph g;
  g.M = M;
  g.k = k;
  Var hist = recent_history(tape, history, k);
  Var alpha = bm.at(model.alpha[static_cast<std::size_t>(domain_id)]);

  for (int j = 1; j <= k; ++j) {
    std::vector<Var> inputs;
    inputs.reserve(static_cast<std::size_t>(j) + 1);
    for (int p = 0; p < j - 1; ++p) inputs.push_back(g.samples[static_cast<std::size_t>(p)]);
    inputs.push_back(hist);
    inputs.push_back(alpha);
    Var in = ad::concat_lastdim(inputs);
    Var hidden = ad::tanh(dense(bm, model.enc1[static_cast<std::size_t>(j - 1)], in));
    Var logits = dense(bm, model.enc2[static_cast<std::size_t>(j - 1)], hidden);
    g.logits.push_back(logits);
    g.probs.push_back(ad::sigmoid(logits));
    g.samples.push_back(next_sample(tape, logits, g.probs.back()));
  }
  return g;
}

}  // namespace

GcaModel::GcaModel(ModelConfig cfg, Rng& rng) : config(cfg) {
  const std::size_t M = static_cast<std::size_t>(cfg.M);
  const std::size_t MM = M * M;
  if (cfg.M < 1 || cfg.k < 1 || cfg.n_domains < 1)
    throw ConfigError("model config: M, k and n_domains must be >= 1");
  if (cfg.p0 <= 0.0 || cfg.p0 >= 1.0) throw ConfigError("model config: p0 must lie in (0, 1)");
  if (cfg.sigma_dec <= 0.0) throw ConfigError("model config: sigma_dec must be positive");

  if (!cfg.baseline) {
    for (int j = 1; j <= cfg.k; ++j) {
      const std::size_t in = static_cast<std::size_t>(encoder_input_dim(j));
      enc1.push_back(add_linear(params, "enc" + std::to_string(j) + "_1", in,
                                static_cast<std::size_t>(cfg.enc_hidden), rng));
      enc2.push_back(add_linear(params, "enc" + std::to_string(j) + "_2",
                                static_cast<std::size_t>(cfg.enc_hidden), MM, rng));
    }
  }
  for (int i = 0; i < cfg.M; ++i) {
    const std::size_t in = M + static_cast<std::size_t>(cfg.d_beta);
    dec1.push_back(add_linear(params, "dec" + std::to_string(i) + "_1", in,
                              static_cast<std::size_t>(cfg.dec_hidden), rng));
    dec2.push_back(add_linear(params, "dec" + std::to_string(i) + "_2",
                              static_cast<std::size_t>(cfg.dec_hidden),
                              static_cast<std::size_t>(cfg.dec_hidden), rng));
  }
  agg1 = add_linear(params, "agg_1", static_cast<std::size_t>(cfg.k * cfg.dec_hidden),
                    static_cast<std::size_t>(cfg.agg_hidden), rng);
  agg2 = add_linear(params, "agg_2", static_cast<std::size_t>(cfg.agg_hidden), 1, rng);

  auto small_code = [&rng](std::size_t d) {
    Tensor t(Shape{1, d});
    for (double& x : t.v) x = rng.uniform(-0.1, 0.1);
    return t;
  };
  if (!cfg.baseline) {
    for (int d = 0; d < cfg.n_domains; ++d)
      alpha.push_back(params.add("alpha" + std::to_string(d),
                                 small_code(static_cast<std::size_t>(cfg.d_alpha))));
    for (int d = 0; d < cfg.n_domains; ++d)
      beta.push_back(params.add("beta" + std::to_string(d),
                                small_code(static_cast<std::size_t>(cfg.d_beta))));
  } else {
    beta.push_back(params.add("beta0", small_code(static_cast<std::size_t>(cfg.d_beta))));
  }
}

GcaModel GcaModel::from_params(ModelConfig cfg, ParamSet loaded) {
  Rng throwaway(0);
  GcaModel model(cfg, throwaway);
  if (loaded.names != model.params.names)
    throw ConfigError("checkpoint parameters do not match the declared configuration");
  for (std::size_t i = 0; i < loaded.values.size(); ++i) {
    if (loaded.values[i].shape != model.params.values[i].shape)
      throw ConfigError("checkpoint parameter '" + loaded.names[i] + "' has shape " +
                        shape_str(loaded.values[i].shape) + ", expected " +
                        shape_str(model.params.values[i].shape));
  }
  model.params = std::move(loaded);
  return model;
}

int GcaModel::encoder_input_dim(int lag_index_1based) const {
  if (config.baseline) return 0;
  return (lag_index_1based - 1) * config.M * config.M + config.k * config.M + config.d_alpha;
}

Var BoundModel::at(int param_index) const {
  if (param_index < 0 || static_cast<std::size_t>(param_index) >= vars.size())
    throw ConfigError("bound parameter index out of range");
  return vars[static_cast<std::size_t>(param_index)];
}

BoundModel bind(const GcaModel& model, Tape& tape, bool trainable) {
  BoundModel bm;
  bm.model = &model;
  bm.tape = &tape;
  bm.vars.reserve(model.params.size());
  for (const Tensor& t : model.params.values)
    bm.vars.push_back(trainable ? tape.leaf(t) : tape.constant(t));
  return bm;
}

double gumbel_bernoulli_sample(double logit, double temperature, Rng& rng) {
  if (temperature <= 0.0) throw ConfigError("gumbel_bernoulli_sample: temperature must be > 0");
  const double x = (logit + rng.gumbel() - rng.gumbel()) / temperature;
  const double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  return std::clamp(s, 1e-12, 1.0 - 1e-12);
}

FullTimeGraph encode_structures(const BoundModel& bm, const Tensor& history, int domain_id,
                                double temperature, Rng& rng) {
  if (temperature <= 0.0) throw ConfigError("encode_structures: temperature must be > 0");
  return encode_impl(bm, history, domain_id, [&](Tape& tape, Var logits, Var) {
    const std::size_t n = logits.val().size();
    Tensor noise(Shape{1, n});
    for (std::size_t e = 0; e < n; ++e) {
      const double g1 = rng.gumbel();
      const double g2 = rng.gumbel();
      noise.v[e] = g1 - g2;
    }
    return ad::sigmoid(ad::scale(logits + tape.constant(std::move(noise)), 1.0 / temperature));
  });
}

FullTimeGraph encode_structures_hard(const BoundModel& bm, const Tensor& history, int domain_id,
                                     double threshold) {
  return encode_impl(bm, history, domain_id, [threshold](Tape& tape, Var, Var probs) {
    Tensor hard(probs.val().shape);
    for (std::size_t e = 0; e < hard.size(); ++e)
      hard.v[e] = probs.val().v[e] >= threshold ? 1.0 : 0.0;
    return tape.constant(std::move(hard));
  });
}

std::vector<Var> intra_lag_effect(const BoundModel& bm, Var z_lag, Var A_j, Var beta) {
  const GcaModel& model = *bm.model;
  Tape& tape = *bm.tape;
  const std::size_t M = static_cast<std::size_t>(model.config.M);
  if (z_lag.val().size() != M)
    throw ConfigError("intra_lag_effect: lag observation must have " + std::to_string(M) +
                      " entries, got " + shape_str(z_lag.shape()));
  Var adj = A_j.shape() == Shape{M, M} ? A_j : ad::reshape(A_j, {M, M});

  std::vector<Var> effects;
  effects.reserve(M);
  for (std::size_t i = 0; i < M; ++i) {
    Var row = ad::matmul(onehot_row(tape, i, M), adj);  // gates of target i
    Var gated = ad::mask(z_lag, row);
    Var in = ad::concat_lastdim(gated, beta);
    Var hidden = ad::tanh(dense(bm, model.dec1[i], in));
    effects.push_back(dense(bm, model.dec2[i], hidden));
  }
  return effects;
}

Var inter_lag_aggregate(const BoundModel& bm,
                        const std::vector<std::vector<Var>>& effects_by_lag) {
  const GcaModel& model = *bm.model;
  const std::size_t k = static_cast<std::size_t>(model.config.k);
  const std::size_t M = static_cast<std::size_t>(model.config.M);
  if (effects_by_lag.size() != k)
    throw ConfigError("inter_lag_aggregate: expected " + std::to_string(k) + " lag effects, got " +
                      std::to_string(effects_by_lag.size()));

  std::vector<Var> per_variable;
  per_variable.reserve(M);
  for (std::size_t i = 0; i < M; ++i) {
    std::vector<Var> lag_effects;
    lag_effects.reserve(k);
    for (std::size_t j = 0; j < k; ++j) lag_effects.push_back(effects_by_lag[j][i]);
    Var cat = ad::concat_lastdim(lag_effects);
    Var hidden = ad::tanh(dense(bm, model.agg1, cat));
    per_variable.push_back(dense(bm, model.agg2, hidden));
  }
  return ad::concat_lastdim(per_variable);
}

Var predict_from_lags(const BoundModel& bm, const std::vector<Var>& lags,
                      const FullTimeGraph& graph, int domain_id) {
  const GcaModel& model = *bm.model;
  validate_domain(model, domain_id);
  if (lags.size() != static_cast<std::size_t>(model.config.k))
    throw ConfigError("predict_from_lags: expected " + std::to_string(model.config.k) +
                      " lag rows");
  Var beta = beta_of(bm, domain_id);
  std::vector<std::vector<Var>> effects;
  effects.reserve(lags.size());
  for (std::size_t j = 0; j < lags.size(); ++j)
    effects.push_back(intra_lag_effect(bm, lags[j], graph.samples[j], beta));
  return inter_lag_aggregate(bm, effects);
}

Var one_step_predict(const BoundModel& bm, const Tensor& history, const FullTimeGraph& graph,
                     int domain_id) {
  const GcaModel& model = *bm.model;
  validate_history(model, history);
  Tape& tape = *bm.tape;
  std::vector<Var> lags;
  lags.reserve(static_cast<std::size_t>(model.config.k));
  for (int j = 1; j <= model.config.k; ++j)
    lags.push_back(const_row(tape, history, history.rows() - static_cast<std::size_t>(j)));
  return predict_from_lags(bm, lags, graph, domain_id);
}

std::vector<Var> rollout(const BoundModel& bm, const Tensor& history, const FullTimeGraph& graph,
                         int domain_id, int horizon) {
  const GcaModel& model = *bm.model;
  validate_history(model, history);
  if (horizon < 1) throw ConfigError("rollout: horizon must be >= 1");
  Tape& tape = *bm.tape;

  std::vector<Var> lags;  // most recent first
  for (int j = 1; j <= model.config.k; ++j)
    lags.push_back(const_row(tape, history, history.rows() - static_cast<std::size_t>(j)));

  std::vector<Var> predictions;
  predictions.reserve(static_cast<std::size_t>(horizon));
  for (int step = 0; step < horizon; ++step) {
    Var next = predict_from_lags(bm, lags, graph, domain_id);
    predictions.push_back(next);
    lags.insert(lags.begin(), next);
    lags.pop_back();
  }
  return predictions;
}

Var summary_graph(const FullTimeGraph& graph) {
  if (graph.probs.empty()) throw ConfigError("summary_graph: graph has no lags");
  Var acc = graph.probs[0];
  for (std::size_t j = 1; j < graph.probs.size(); ++j) acc = acc + graph.probs[j];
  const std::size_t M = static_cast<std::size_t>(graph.M);
  return ad::reshape(ad::scale(acc, 1.0 / static_cast<double>(graph.k)), {M, M});
}

Tensor forecast(const GcaModel& model, const Tensor& history, int domain_id, int horizon,
                ForecastMode mode, double temperature, Rng* rng) {
  Tape tape;
  BoundModel bm = bind(model, tape, false);
  FullTimeGraph graph;
  if (mode == ForecastMode::hard) {
    graph = encode_structures_hard(bm, history, domain_id);
  } else {
    if (rng == nullptr) throw ConfigError("forecast: stochastic mode needs a generator");
    graph = encode_structures(bm, history, domain_id, temperature, *rng);
  }
  std::vector<Var> steps = rollout(bm, history, graph, domain_id, horizon);

  Tensor out(Shape{static_cast<std::size_t>(horizon), static_cast<std::size_t>(model.config.M)});
  for (std::size_t s = 0; s < steps.size(); ++s)
    for (std::size_t m = 0; m < static_cast<std::size_t>(model.config.M); ++m)
      out.at(s, m) = steps[s].val().v[m];
  return out;
}

GraphValues infer_structures(const GcaModel& model, const Tensor& history, int domain_id,
                             double threshold) {
  Tape tape;
  BoundModel bm = bind(model, tape, false);
  FullTimeGraph graph = encode_structures_hard(bm, history, domain_id, threshold);
  GraphValues out;
  out.M = graph.M;
  out.k = graph.k;
  const std::size_t M = static_cast<std::size_t>(graph.M);
  for (int j = 0; j < graph.k; ++j) {
    out.probs.push_back(Tensor(Shape{M, M}, graph.probs[static_cast<std::size_t>(j)].val().v));
    out.hard.push_back(Tensor(Shape{M, M}, graph.samples[static_cast<std::size_t>(j)].val().v));
  }
  return out;
}

namespace {

nlohmann::json stats_to_json(const NormStats& stats) {
  return nlohmann::json{{"mean", stats.mean}, {"std", stats.std}};
}

NormStats stats_from_json(const nlohmann::json& j) {
  NormStats s;
  if (j.is_null()) return s;
  s.mean = j.at("mean").get<std::vector<double>>();
  s.std = j.at("std").get<std::vector<double>>();
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  nlohmann::json j;
  j["format"] = "gca-checkpoint-1";
  j["config"] = {
      {"M", ckpt.config.M},
      {"k", ckpt.config.k},
      {"n_domains", ckpt.config.n_domains},
      {"d_alpha", ckpt.config.d_alpha},
      {"d_beta", ckpt.config.d_beta},
      {"enc_hidden", ckpt.config.enc_hidden},
      {"dec_hidden", ckpt.config.dec_hidden},
      {"agg_hidden", ckpt.config.agg_hidden},
      {"p0", ckpt.config.p0},
      {"sigma_dec", ckpt.config.sigma_dec},
      {"baseline", ckpt.config.baseline},
  };
  auto params = nlohmann::json::array();
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    params.push_back({{"name", ckpt.params.names[i]},
                      {"shape", ckpt.params.values[i].shape},
                      {"values", ckpt.params.values[i].v}});
  }
  j["params"] = std::move(params);
  j["source_stats"] = ckpt.source_stats.empty() ? nlohmann::json() : stats_to_json(ckpt.source_stats);
  j["target_stats"] = ckpt.target_stats.empty() ? nlohmann::json() : stats_to_json(ckpt.target_stats);
  if (ckpt.train_config_json.empty()) {
    j["train_config"] = nlohmann::json();
  } else {
    try {
      j["train_config"] = nlohmann::json::parse(ckpt.train_config_json);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("save_checkpoint: train_config_json is not valid JSON: ") +
                        e.what());
    }
  }

  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << j.dump(2) << "\n";
  if (!out) throw DataError("failed while writing " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "gca-checkpoint-1")
      throw DataError(path + ": unknown checkpoint format");
    Checkpoint ckpt;
    const auto& c = j.at("config");
    ckpt.config.M = c.at("M").get<int>();
    ckpt.config.k = c.at("k").get<int>();
    ckpt.config.n_domains = c.at("n_domains").get<int>();
    ckpt.config.d_alpha = c.at("d_alpha").get<int>();
    ckpt.config.d_beta = c.at("d_beta").get<int>();
    ckpt.config.enc_hidden = c.at("enc_hidden").get<int>();
    ckpt.config.dec_hidden = c.at("dec_hidden").get<int>();
    ckpt.config.agg_hidden = c.at("agg_hidden").get<int>();
    ckpt.config.p0 = c.at("p0").get<double>();
    ckpt.config.sigma_dec = c.at("sigma_dec").get<double>();
    ckpt.config.baseline = c.at("baseline").get<bool>();
    for (const auto& p : j.at("params")) {
      Shape shape = p.at("shape").get<Shape>();
      std::vector<double> values = p.at("values").get<std::vector<double>>();
      ckpt.params.add(p.at("name").get<std::string>(), Tensor(std::move(shape), std::move(values)));
    }
    ckpt.source_stats = stats_from_json(j.at("source_stats"));
    ckpt.target_stats = stats_from_json(j.at("target_stats"));
    if (!j.at("train_config").is_null()) ckpt.train_config_json = j.at("train_config").dump();
    return ckpt;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

}  // namespace gca
