#pragma once

#include <iosfwd>
#include <vector>

#include "gca/model.hpp"
#include "gca/rng.hpp"
#include "gca/synthetic.hpp"
#include "gca/tape.hpp"

namespace gca {

// Training objectives. Every quantity exists in two forms where it makes
// sense: a plain-value version that serves as an independent oracle in
// tests and reports, and a tape version that participates in the gradient.

struct Hyper {
  double gamma = 1.0;   // summary-graph alignment weight
  double delta = 0.01;  // sparsity weight
  double lambda = 1.0;  // designated-variable forecast weight
};

struct LossBreakdown {
  double neg_elbo_source = 0.0;
  double neg_elbo_target = 0.0;
  double alignment = 0.0;   // L_r
  double sparsity = 0.0;    // L_d
  double strengthen = 0.0;  // L_e
  double total = 0.0;
  Hyper hyper;
};

// total recomputed from the parts; the breakdown's own total must match
// this to 1e-9.
double combined_total(const LossBreakdown& b);

// Gaussian log-likelihood of one observation row under the decoder's
// fixed-width output distribution: sum_i [-(z_i - zhat_i)^2 / (2 sigma^2)
// - ln(sigma sqrt(2 pi))].
double reconstruction_loglik(const std::vector<double>& z_true, const std::vector<double>& z_hat,
                             double sigma_dec);

// KL(Bernoulli(q) || Bernoulli(p0)). Both arguments are clamped to
// [1e-6, 1 - 1e-6] first; the result is never negative.
double bernoulli_kl(double q, double p0);

// Mean absolute entrywise difference of two summary graphs.
double alignment_loss(const Tensor& summary_s, const Tensor& summary_t);
ad::Var alignment_loss(ad::Var summary_s, ad::Var summary_t);

// Sum of the two mean-absolute-entry values.
double sparsity_loss(const Tensor& summary_s, const Tensor& summary_t);
ad::Var sparsity_loss(ad::Var summary_s, ad::Var summary_t);

// Mean squared error over the designated variable's forecast horizon.
double strengthen_loss(const std::vector<double>& pred_m, const std::vector<double>& label_m);

// Sum over all k*M*M edges of KL(Bernoulli(edge prob) || Bernoulli(p0)),
// taken on the probabilities, not the samples. Zero for a graph without
// logits (the plain autoregressive ablation).
ad::Var structure_kl(ad::Tape& tape, const FullTimeGraph& graph, double p0);

// One window's negative evidence lower bound. Structures are encoded once
// with a single relaxed sample; the last n_predict_steps positions of the
// window history are then predicted teacher-forced (each from the true
// preceding rows) and scored under the decoder likelihood; the structure
// KL is added once.
struct ElboResult {
  ad::Var neg_elbo;  // scalar
  FullTimeGraph graph;
  std::vector<ad::Var> predictions;  // n_predict_steps rows, each [1, M]
};
ElboResult elbo(const BoundModel& bm, const TimeSeriesWindow& window, int domain_id,
                double temperature, Rng& rng, int n_predict_steps = 8);

// One optimization step's window pointers. labeled_target may be empty;
// all_target carries every target window (labeled or not) and feeds only
// the alignment and sparsity terms. extra_elbo_target windows join the
// target ELBO mean but never the strengthen term: reconstruction reads only
// a window's history, so unlabeled windows may sit there without their
// future rows influencing any gradient. Aliased pointers are encoded once
// and shared across terms, so a degenerate call with target == source gives
// an alignment of exactly zero.
struct Batches {
  std::vector<const TimeSeriesWindow*> source;
  std::vector<const TimeSeriesWindow*> labeled_target;
  std::vector<const TimeSeriesWindow*> extra_elbo_target;
  std::vector<const TimeSeriesWindow*> all_target;
};

struct LossOptions {
  int n_predict_steps = 8;
  int target_variable = 0;  // the variable the strengthen term forecasts
};

// The combined objective on the tape. Per-batch terms are means over their
// windows. The strengthen term rolls each source and labeled-target window
// out over its label horizon and scores the designated variable. In
// baseline mode the alignment and sparsity terms are constant zero.
struct LossTerms {
  ad::Var neg_elbo_source;
  ad::Var neg_elbo_target;
  ad::Var alignment;
  ad::Var sparsity;
  ad::Var strengthen;
  ad::Var total;

  LossBreakdown breakdown(const Hyper& hyper) const;
};
LossTerms total_loss(const BoundModel& bm, const Batches& batches, const Hyper& hyper,
                     double temperature, Rng& rng, const LossOptions& options = {});

// Loss-history CSV: step,neg_elbo_s,neg_elbo_t,l_r,l_d,l_e,total,temperature
void write_loss_history_header(std::ostream& out);
void append_loss_history_row(std::ostream& out, long step, const LossBreakdown& b,
                             double temperature);

}  // namespace gca
