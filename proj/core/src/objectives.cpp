#include "gca/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>
#include <unordered_map>

#include "gca/error.hpp"
#include "gca/io.hpp"

namespace gca {

using ad::Var;

double combined_total(const LossBreakdown& b) {
  return b.neg_elbo_source + b.neg_elbo_target + b.hyper.gamma * b.alignment +
         b.hyper.delta * b.sparsity + b.hyper.lambda * b.strengthen;
}

double reconstruction_loglik(const std::vector<double>& z_true, const std::vector<double>& z_hat,
                             double sigma_dec) {
  if (z_true.size() != z_hat.size())
    throw ConfigError("reconstruction_loglik: observation and prediction sizes differ");
  if (!(sigma_dec > 0.0)) throw ConfigError("reconstruction_loglik: sigma must be positive");
  const double log_norm = std::log(sigma_dec * std::sqrt(2.0 * M_PI));
  double total = 0.0;
  for (std::size_t i = 0; i < z_true.size(); ++i) {
    const double r = (z_true[i] - z_hat[i]) / sigma_dec;
    total += -0.5 * r * r - log_norm;
  }
  return total;
}

double bernoulli_kl(double q, double p0) {
  const double lo = 1e-6, hi = 1.0 - 1e-6;
  q = std::clamp(q, lo, hi);
  p0 = std::clamp(p0, lo, hi);
  const double kl = q * std::log(q / p0) + (1.0 - q) * std::log((1.0 - q) / (1.0 - p0));
  return std::max(kl, 0.0);  // Gibbs; guards rounding noise near q == p0
}

namespace {

void check_same_summary_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!same_shape(a, b))
    throw ConfigError(std::string(what) + ": summary graphs have shapes " + shape_str(a.shape) +
                      " and " + shape_str(b.shape));
}

}  // namespace

double alignment_loss(const Tensor& summary_s, const Tensor& summary_t) {
  check_same_summary_shape(summary_s, summary_t, "alignment_loss");
  double acc = 0.0;
  for (std::size_t i = 0; i < summary_s.size(); ++i)
    acc += std::abs(summary_s.v[i] - summary_t.v[i]);
  return acc / static_cast<double>(summary_s.size());
}

Var alignment_loss(Var summary_s, Var summary_t) {
  return ad::mean(ad::absval(summary_s - summary_t));
}

double sparsity_loss(const Tensor& summary_s, const Tensor& summary_t) {
  check_same_summary_shape(summary_s, summary_t, "sparsity_loss");
  double a = 0.0, b = 0.0;
  for (std::size_t i = 0; i < summary_s.size(); ++i) {
    a += std::abs(summary_s.v[i]);
    b += std::abs(summary_t.v[i]);
  }
  return a / static_cast<double>(summary_s.size()) + b / static_cast<double>(summary_t.size());
}

Var sparsity_loss(Var summary_s, Var summary_t) {
  return ad::mean(ad::absval(summary_s)) + ad::mean(ad::absval(summary_t));
}

double strengthen_loss(const std::vector<double>& pred_m, const std::vector<double>& label_m) {
  if (pred_m.size() != label_m.size())
    throw ConfigError("strengthen_loss: prediction and label horizons differ");
  if (pred_m.empty()) throw ConfigError("strengthen_loss: empty horizon");
  double acc = 0.0;
  for (std::size_t t = 0; t < pred_m.size(); ++t) {
    const double d = pred_m[t] - label_m[t];
    acc += d * d;
  }
  return acc / static_cast<double>(pred_m.size());
}

Var structure_kl(ad::Tape& tape, const FullTimeGraph& graph, double p0) {
  if (!(p0 > 0.0 && p0 < 1.0)) throw ConfigError("structure_kl: prior probability must be in (0,1)");
  if (graph.logits.empty()) return tape.constant_scalar(0.0);
  const double log_p0 = std::log(p0);
  const double log_1mp0 = std::log(1.0 - p0);
  Var total;
  for (std::size_t j = 0; j < graph.probs.size(); ++j) {
    Var q = graph.probs[j];
    Var one_minus_q = ad::add_scalar(ad::neg(q), 1.0);
    Var t1 = ad::mul(q, ad::add_scalar(ad::log(q), -log_p0));
    Var t2 = ad::mul(one_minus_q, ad::add_scalar(ad::log(one_minus_q), -log_1mp0));
    Var lag_kl = ad::sum(t1 + t2);
    total = (j == 0) ? lag_kl : total + lag_kl;
  }
  return total;
}

namespace {

// Negative log-likelihood of the last n_predict rows of `x`, each predicted
// teacher-forced from the true k rows before it, under the given graph.
Var window_nll(const BoundModel& bm, const Tensor& x, const FullTimeGraph& graph, int domain_id,
               int n_predict, std::vector<Var>* predictions_out) {
  const ModelConfig& cfg = bm.model->config;
  const std::size_t M = static_cast<std::size_t>(cfg.M);
  const std::size_t k = static_cast<std::size_t>(cfg.k);
  if (n_predict < 1) throw ConfigError("elbo: n_predict_steps must be at least 1");
  if (x.rows() < k + static_cast<std::size_t>(n_predict))
    throw ConfigError("elbo: window history of " + std::to_string(x.rows()) +
                      " rows is too short for lag " + std::to_string(k) + " plus " +
                      std::to_string(n_predict) + " predicted steps");
  const double sigma = cfg.sigma_dec;
  const double log_norm = std::log(sigma * std::sqrt(2.0 * M_PI));
  Var acc;
  for (int s = 0; s < n_predict; ++s) {
    const std::size_t t = x.rows() - static_cast<std::size_t>(n_predict - s);
    Tensor hist(Shape{k, M});
    for (std::size_t r = 0; r < k; ++r)
      for (std::size_t c = 0; c < M; ++c) hist.at(r, c) = x.at(t - k + r, c);
    Var pred = one_step_predict(bm, hist, graph, domain_id);
    Tensor row(Shape{1, M});
    for (std::size_t c = 0; c < M; ++c) row.at(0, c) = x.at(t, c);
    Var target = bm.tape->constant(row);
    Var nll = ad::add_scalar(
        ad::scale(ad::sum(ad::square(target - pred)), 1.0 / (2.0 * sigma * sigma)),
        static_cast<double>(M) * log_norm);
    acc = (s == 0) ? nll : acc + nll;
    if (predictions_out) predictions_out->push_back(pred);
  }
  return acc;
}

}  // namespace

ElboResult elbo(const BoundModel& bm, const TimeSeriesWindow& window, int domain_id,
                double temperature, Rng& rng, int n_predict_steps) {
  ElboResult result;
  result.graph = encode_structures(bm, window.x, domain_id, temperature, rng);
  Var nll = window_nll(bm, window.x, result.graph, domain_id, n_predict_steps,
                       &result.predictions);
  result.neg_elbo = nll + structure_kl(*bm.tape, result.graph, bm.model->config.p0);
  return result;
}

LossBreakdown LossTerms::breakdown(const Hyper& hyper) const {
  LossBreakdown b;
  b.neg_elbo_source = neg_elbo_source.val().scalar();
  b.neg_elbo_target = neg_elbo_target.val().scalar();
  b.alignment = alignment.val().scalar();
  b.sparsity = sparsity.val().scalar();
  b.strengthen = strengthen.val().scalar();
  b.total = total.val().scalar();
  b.hyper = hyper;
  return b;
}

namespace {

Var mean_over(ad::Tape& tape, const std::vector<Var>& terms) {
  if (terms.empty()) return tape.constant_scalar(0.0);
  Var acc = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) acc = acc + terms[i];
  return ad::scale(acc, 1.0 / static_cast<double>(terms.size()));
}

// Forecast MSE of the designated variable over the window's label horizon,
// rolled out under the window's already-encoded graph.
Var window_strengthen(const BoundModel& bm, const TimeSeriesWindow& w, const FullTimeGraph& graph,
                      Var onehot_m, int m) {
  const std::size_t tau = w.y.rows();
  if (tau == 0) throw ConfigError("total_loss: window has an empty label horizon");
  std::vector<Var> rows = rollout(bm, w.x, graph, w.domain_id, static_cast<int>(tau));
  Var acc;
  for (std::size_t t = 0; t < tau; ++t) {
    Var pred_m = ad::matmul(rows[t], onehot_m);  // [1, 1]
    Var diff = ad::add_scalar(pred_m, -w.y.at(t, static_cast<std::size_t>(m)));
    Var sq = ad::square(diff);
    acc = (t == 0) ? sq : acc + sq;
  }
  return ad::scale(ad::sum(acc), 1.0 / static_cast<double>(tau));
}

}  // namespace

LossTerms total_loss(const BoundModel& bm, const Batches& batches, const Hyper& hyper,
                     double temperature, Rng& rng, const LossOptions& options) {
  if (hyper.gamma < 0.0 || hyper.delta < 0.0 || hyper.lambda < 0.0)
    throw ConfigError("total_loss: loss weights must be nonnegative");
  if (batches.source.empty()) throw ConfigError("total_loss: source batch is empty");
  if (batches.all_target.empty()) throw ConfigError("total_loss: target batch is empty");
  const ModelConfig& cfg = bm.model->config;
  if (options.target_variable < 0 || options.target_variable >= cfg.M)
    throw ConfigError("total_loss: designated variable " +
                      std::to_string(options.target_variable) + " is out of range for " +
                      std::to_string(cfg.M) + " variables");
  ad::Tape& tape = *bm.tape;

  // Encode each distinct window once, in a fixed order, and share the graph
  // across every term that touches the window.
  std::unordered_map<const TimeSeriesWindow*, FullTimeGraph> graphs;
  auto ensure_graph = [&](const TimeSeriesWindow* w) {
    if (graphs.find(w) == graphs.end())
      graphs.emplace(w, encode_structures(bm, w->x, w->domain_id, temperature, rng));
  };
  for (const auto* w : batches.source) ensure_graph(w);
  for (const auto* w : batches.labeled_target) ensure_graph(w);
  for (const auto* w : batches.extra_elbo_target) ensure_graph(w);
  // The plain autoregressive ablation never reads the all-target graphs
  // (its alignment and sparsity are constant), so skip encoding them.
  if (!cfg.baseline)
    for (const auto* w : batches.all_target) ensure_graph(w);

  auto batch_neg_elbo = [&](const std::vector<const TimeSeriesWindow*>& ws) {
    std::vector<Var> terms;
    terms.reserve(ws.size());
    for (const auto* w : ws) {
      const FullTimeGraph& g = graphs.at(w);
      Var nll = window_nll(bm, w->x, g, w->domain_id, options.n_predict_steps, nullptr);
      terms.push_back(nll + structure_kl(tape, g, cfg.p0));
    }
    return mean_over(tape, terms);
  };

  LossTerms out;
  out.neg_elbo_source = batch_neg_elbo(batches.source);
  std::vector<const TimeSeriesWindow*> target_elbo = batches.labeled_target;
  target_elbo.insert(target_elbo.end(), batches.extra_elbo_target.begin(),
                     batches.extra_elbo_target.end());
  out.neg_elbo_target = batch_neg_elbo(target_elbo);

  if (cfg.baseline) {
    out.alignment = tape.constant_scalar(0.0);
    out.sparsity = tape.constant_scalar(0.0);
  } else {
    auto mean_summary = [&](const std::vector<const TimeSeriesWindow*>& ws) {
      std::vector<Var> summaries;
      summaries.reserve(ws.size());
      for (const auto* w : ws) summaries.push_back(summary_graph(graphs.at(w)));
      Var acc = summaries[0];
      for (std::size_t i = 1; i < summaries.size(); ++i) acc = acc + summaries[i];
      return ad::scale(acc, 1.0 / static_cast<double>(summaries.size()));
    };
    Var summary_s = mean_summary(batches.source);
    Var summary_t = mean_summary(batches.all_target);
    out.alignment = alignment_loss(summary_s, summary_t);
    out.sparsity = sparsity_loss(summary_s, summary_t);
  }

  Tensor onehot(Shape{static_cast<std::size_t>(cfg.M), 1});
  onehot.v[static_cast<std::size_t>(options.target_variable)] = 1.0;
  Var em = tape.constant(onehot);
  std::vector<Var> strengthen_terms;
  for (const auto* w : batches.source)
    strengthen_terms.push_back(window_strengthen(bm, *w, graphs.at(w), em,
                                                 options.target_variable));
  for (const auto* w : batches.labeled_target)
    strengthen_terms.push_back(window_strengthen(bm, *w, graphs.at(w), em,
                                                 options.target_variable));
  out.strengthen = mean_over(tape, strengthen_terms);

  out.total = out.neg_elbo_source + out.neg_elbo_target + ad::scale(out.alignment, hyper.gamma) +
              ad::scale(out.sparsity, hyper.delta) + ad::scale(out.strengthen, hyper.lambda);
  return out;
}

void write_loss_history_header(std::ostream& out) {
  out << "step,neg_elbo_s,neg_elbo_t,l_r,l_d,l_e,total,temperature\n";
}

void append_loss_history_row(std::ostream& out, long step, const LossBreakdown& b,
                             double temperature) {
  out << step << ',' << format_double(b.neg_elbo_source) << ',' << format_double(b.neg_elbo_target)
      << ',' << format_double(b.alignment) << ',' << format_double(b.sparsity) << ','
      << format_double(b.strengthen) << ',' << format_double(b.total) << ','
      << format_double(temperature) << '\n';
}

}  // namespace gca
