#pragma once

#include <string>
#include <vector>

#include "gca/rng.hpp"
#include "gca/synthetic.hpp"
#include "gca/tape.hpp"

namespace gca {

// Named parameter storage. Tensors live here between optimizer steps and
// are bound onto a fresh tape for every forward pass.
struct ParamSet {
  std::vector<std::string> names;
  std::vector<Tensor> values;

  int add(const std::string& name, Tensor init);
  int find(const std::string& name) const;  // -1 when absent
  std::size_t size() const { return values.size(); }
};

struct ModelConfig {
  int M = 5;           // observed variables
  int k = 3;           // max lag
  int n_domains = 2;
  int d_alpha = 4;     // structure code width
  int d_beta = 4;      // strength code width
  int enc_hidden = 16;
  int dec_hidden = 3;  // per-variable effect width
  int agg_hidden = 16;
  double p0 = 0.1;        // prior edge probability
  double sigma_dec = 1.0; // decoder output std
  // Baseline ablation: no structure encoder, no per-domain codes; the
  // decoder runs with an all-ones graph and one shared strength code.
  bool baseline = false;
};

struct LinearRef {
  int w = -1;
  int b = -1;
};

// The model: per-lag structure encoders f_1..f_k (each produces M*M edge
// logits conditioned on earlier lags' sampled structures, the last k
// observations and the domain's structure code), per-variable effect
// networks g_i gated by sampled edges and the domain's strength code, and
// one shared aggregator G that turns the k per-variable effects into the
// next-step prediction.
struct GcaModel {
  ModelConfig config;
  ParamSet params;

  std::vector<LinearRef> enc1, enc2;  // per lag
  std::vector<LinearRef> dec1, dec2;  // per variable
  LinearRef agg1, agg2;
  std::vector<int> alpha;  // per domain, empty for baseline
  std::vector<int> beta;   // per domain, single shared entry for baseline

  GcaModel(ModelConfig cfg, Rng& rng);
  static GcaModel from_params(ModelConfig cfg, ParamSet loaded);

  int encoder_input_dim(int lag_index_1based) const;
};

// All parameters bound to one tape, as differentiable leaves (training) or
// constants (inference).
struct BoundModel {
  const GcaModel* model = nullptr;
  ad::Tape* tape = nullptr;
  std::vector<ad::Var> vars;  // by ParamSet index

  ad::Var at(int param_index) const;
};

BoundModel bind(const GcaModel& model, ad::Tape& tape, bool trainable);

// One forward pass's structures. Entry (i, m) of a lag's matrices refers to
// the edge m -> i. Lag j's logits are produced after lags 1..j-1's samples;
// in baseline mode logits are absent and samples/probs are all-ones.
struct FullTimeGraph {
  int M = 0;
  int k = 0;
  std::vector<ad::Var> logits;   // k x [1, M*M]
  std::vector<ad::Var> samples;  // k x [1, M*M], values in (0, 1) (or {0,1} hard)
  std::vector<ad::Var> probs;    // k x [1, M*M], sigmoid of logits
};

// Relaxed binary draw: the class-1 coordinate of a two-class concrete
// softmax over logits (logit, 0), i.e. sigmoid((logit + g1 - g2) / temp)
// with g1, g2 standard Gumbel draws. Strictly inside (0, 1).
double gumbel_bernoulli_sample(double logit, double temperature, Rng& rng);

// Runs the lag recurrence over the last k rows of `history` (most recent
// first), sampling each lag's structure with fresh Gumbel noise. Noise
// draw order: lag-major, then entry-major (row*M+col), two draws per entry,
// so the draw count is k*M*M*2 regardless of values.
FullTimeGraph encode_structures(const BoundModel& bm, const Tensor& history, int domain_id,
                                double temperature, Rng& rng);

// Deterministic variant used at inference: each lag's sample is its edge
// probability thresholded at >= 0.5, fed forward as a constant.
FullTimeGraph encode_structures_hard(const BoundModel& bm, const Tensor& history, int domain_id,
                                     double threshold = 0.5);

// Per-target-variable gated effect of one lag: row i of A_j gates the lag's
// observation vector, which then passes with the strength code through g_i.
// Returns M effect rows of shape [1, dec_hidden].
std::vector<ad::Var> intra_lag_effect(const BoundModel& bm, ad::Var z_lag, ad::Var A_j,
                                      ad::Var beta);

// Concatenates each variable's k lag effects and applies the shared
// aggregator; returns the predicted next step, shape [1, M].
ad::Var inter_lag_aggregate(const BoundModel& bm,
                            const std::vector<std::vector<ad::Var>>& effects_by_lag);

// One-step prediction from explicit lag rows (most recent first).
ad::Var predict_from_lags(const BoundModel& bm, const std::vector<ad::Var>& lags,
                          const FullTimeGraph& graph, int domain_id);

// One-step prediction from the last k rows of `history`.
ad::Var one_step_predict(const BoundModel& bm, const Tensor& history, const FullTimeGraph& graph,
                         int domain_id);

// Differentiable autoregressive rollout: each predicted row joins the lag
// buffer before the next step. The graph stays fixed over the horizon.
std::vector<ad::Var> rollout(const BoundModel& bm, const Tensor& history,
                             const FullTimeGraph& graph, int domain_id, int horizon);

// Lag-average of edge probabilities (not samples), shape [M, M].
ad::Var summary_graph(const FullTimeGraph& graph);

enum class ForecastMode { stochastic, hard };

// Inference-path forecast on a private tape. Hard mode encodes once from
// `history` with thresholded samples and is fully deterministic; stochastic
// mode samples the structures once with the given generator.
Tensor forecast(const GcaModel& model, const Tensor& history, int domain_id, int horizon,
                ForecastMode mode, double temperature = 0.5, Rng* rng = nullptr);

// Detached structure read-out (hard encode) for evaluation and export.
struct GraphValues {
  int M = 0;
  int k = 0;
  std::vector<Tensor> probs;  // k x {M, M}
  std::vector<Tensor> hard;   // k x {M, M}, thresholded
};
GraphValues infer_structures(const GcaModel& model, const Tensor& history, int domain_id,
                             double threshold = 0.5);

// Checkpoint: everything needed to rebuild the model and normalize data
// the same way. train_config_json is an opaque JSON object echoed through
// for the tooling; empty string means absent.
struct Checkpoint {
  ModelConfig config;
  ParamSet params;
  NormStats source_stats;
  NormStats target_stats;
  std::string train_config_json;
};

// JSON, decimal round-trip exact: loading and saving again changes nothing.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace gca
