#include "gca/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <string>

#include "gca/error.hpp"
#include "gca/io.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace gca {

TrainMode parse_train_mode(const std::string& name) {
  if (name == "gca") return TrainMode::gca;
  if (name == "gca_r") return TrainMode::gca_r;
  if (name == "gca_e") return TrainMode::gca_e;
  if (name == "baseline") return TrainMode::baseline;
  throw ConfigError("unknown training mode '" + name +
                    "' (expected gca, gca_r, gca_e or baseline)");
}

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::gca: return "gca";
    case TrainMode::gca_r: return "gca_r";
    case TrainMode::gca_e: return "gca_e";
    case TrainMode::baseline: return "baseline";
  }
  throw ConfigError("unknown training mode value");
}

void validate(const TrainConfig& c) {
  if (c.k < 1) throw ConfigError("train config: max lag must be at least 1");
  if (c.horizon < 1) throw ConfigError("train config: horizon must be at least 1");
  if (c.n_predict_steps < 1) throw ConfigError("train config: n_predict_steps must be at least 1");
  if (c.window < c.k + c.n_predict_steps)
    throw ConfigError("train config: window of " + std::to_string(c.window) +
                      " rows cannot cover lag " + std::to_string(c.k) + " plus " +
                      std::to_string(c.n_predict_steps) + " predicted steps");
  if (c.target_variable < 0) throw ConfigError("train config: target variable must be nonnegative");
  if (!(c.lr > 0.0)) throw ConfigError("train config: learning rate must be positive");
  if (c.batch_size < 1) throw ConfigError("train config: batch size must be at least 1");
  if (c.epochs < 1) throw ConfigError("train config: epochs must be at least 1");
  if (c.labeled_fraction < 0.0 || c.labeled_fraction > 1.0)
    throw ConfigError("train config: labeled fraction must lie in [0, 1]");
  if (!(c.temperature.end > 0.0) || c.temperature.start < c.temperature.end)
    throw ConfigError("train config: temperature schedule needs start >= end > 0");
  if (c.hyper.gamma < 0.0 || c.hyper.delta < 0.0 || c.hyper.lambda < 0.0)
    throw ConfigError("train config: loss weights must be nonnegative");
  if (c.checkpoint_every < 0)
    throw ConfigError("train config: checkpoint interval must be nonnegative");
  if (c.d_alpha < 1 || c.d_beta < 1 || c.enc_hidden < 1 || c.dec_hidden < 1 || c.agg_hidden < 1)
    throw ConfigError("train config: layer widths must be at least 1");
  if (!(c.p0 > 0.0 && c.p0 < 1.0))
    throw ConfigError("train config: prior edge probability must be in (0, 1)");
  if (!(c.sigma_dec > 0.0)) throw ConfigError("train config: decoder std must be positive");
}

double temperature_schedule(int epoch, const TrainConfig& config) {
  if (epoch < 0) throw ConfigError("temperature_schedule: epoch must be nonnegative");
  const TempSchedule& t = config.temperature;
  double decay = t.decay;
  if (decay <= 0.0) {
    const double horizon = std::max(1.0, 0.8 * static_cast<double>(config.epochs));
    decay = std::pow(t.end / t.start, 1.0 / horizon);
  }
  return std::max(t.end, t.start * std::pow(decay, static_cast<double>(epoch)));
}

OptimizerState OptimizerState::like(const ParamSet& params) {
  OptimizerState st;
  st.m.reserve(params.size());
  st.v.reserve(params.size());
  for (const Tensor& t : params.values) {
    st.m.emplace_back(t.shape);
    st.v.emplace_back(t.shape);
  }
  return st;
}

void adam_step(ParamSet& params, const std::vector<Tensor>& grads, OptimizerState& state,
               double lr) {
  if (grads.size() != params.size())
    throw ConfigError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                      std::to_string(params.size()) + " parameters");
  if (state.m.size() != params.size())
    throw ConfigError("adam_step: optimizer state does not match the parameter set");
  ++state.step;
  const double corr1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double corr2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& w = params.values[p];
    const Tensor& g = grads[p];
    if (!same_shape(w, g))
      throw ConfigError("adam_step: gradient shape " + shape_str(g.shape) + " for parameter " +
                        params.names[p] + " of shape " + shape_str(w.shape));
    Tensor& m = state.m[p];
    Tensor& v = state.v[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g.v[i];
      if (!std::isfinite(gi))
        throw NumericError("adam_step: non-finite gradient for parameter " + params.names[p]);
      m.v[i] = state.beta1 * m.v[i] + (1.0 - state.beta1) * gi;
      v.v[i] = state.beta2 * v.v[i] + (1.0 - state.beta2) * gi * gi;
      w.v[i] -= lr * (m.v[i] / corr1) / (std::sqrt(v.v[i] / corr2) + state.eps);
    }
  }
}

double validation_mse(const GcaModel& model, const Dataset& val, int target_variable) {
  if (val.windows.empty()) throw ConfigError("validation_mse: dataset has no windows");
  if (target_variable < 0 || target_variable >= model.config.M)
    throw ConfigError("validation_mse: variable " + std::to_string(target_variable) +
                      " is out of range for " + std::to_string(model.config.M) + " variables");
  const std::size_t m = static_cast<std::size_t>(target_variable);
  double acc = 0.0;
  std::size_t n = 0;
  for (const TimeSeriesWindow& w : val.windows) {
    Tensor pred = forecast(model, w.x, w.domain_id, static_cast<int>(w.y.rows()),
                           ForecastMode::hard);
    for (std::size_t t = 0; t < w.y.rows(); ++t) {
      const double d = pred.at(t, m) - w.y.at(t, m);
      acc += d * d;
      ++n;
    }
  }
  return acc / static_cast<double>(n);
}

std::size_t select_best(const std::vector<double>& val_mse_by_epoch) {
  if (val_mse_by_epoch.empty()) throw ConfigError("select_best: no validation points recorded");
  std::size_t best = 0;
  for (std::size_t i = 1; i < val_mse_by_epoch.size(); ++i)
    if (val_mse_by_epoch[i] < val_mse_by_epoch[best]) best = i;
  return best;
}

std::string train_config_to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["mode"] = to_string(c.mode);
  j["seed"] = c.seed;
  j["k"] = c.k;
  j["window"] = c.window;
  j["horizon"] = c.horizon;
  j["target_variable"] = c.target_variable;
  j["gamma"] = c.hyper.gamma;
  j["delta"] = c.hyper.delta;
  j["lambda"] = c.hyper.lambda;
  j["lr"] = c.lr;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["labeled_fraction"] = c.labeled_fraction;
  j["temp_start"] = c.temperature.start;
  j["temp_end"] = c.temperature.end;
  j["temp_decay"] = c.temperature.decay;
  j["n_predict_steps"] = c.n_predict_steps;
  j["include_unlabeled_recon"] = c.include_unlabeled_recon;
  j["checkpoint_every"] = c.checkpoint_every;
  j["d_alpha"] = c.d_alpha;
  j["d_beta"] = c.d_beta;
  j["enc_hidden"] = c.enc_hidden;
  j["dec_hidden"] = c.dec_hidden;
  j["agg_hidden"] = c.agg_hidden;
  j["p0"] = c.p0;
  j["sigma_dec"] = c.sigma_dec;
  return j.dump(2);
}

TrainConfig train_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("train config: ") + e.what());
  }
  if (!j.is_object()) throw DataError("train config: expected a JSON object");
  TrainConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "mode") c.mode = parse_train_mode(value.get<std::string>());
      else if (key == "seed") c.seed = value.get<unsigned long long>();
      else if (key == "k") c.k = value.get<int>();
      else if (key == "window") c.window = value.get<int>();
      else if (key == "horizon") c.horizon = value.get<int>();
      else if (key == "target_variable") c.target_variable = value.get<int>();
      else if (key == "gamma") c.hyper.gamma = value.get<double>();
      else if (key == "delta") c.hyper.delta = value.get<double>();
      else if (key == "lambda") c.hyper.lambda = value.get<double>();
      else if (key == "lr") c.lr = value.get<double>();
      else if (key == "batch_size") c.batch_size = value.get<int>();
      else if (key == "epochs") c.epochs = value.get<int>();
      else if (key == "labeled_fraction") c.labeled_fraction = value.get<double>();
      else if (key == "temp_start") c.temperature.start = value.get<double>();
      else if (key == "temp_end") c.temperature.end = value.get<double>();
      else if (key == "temp_decay") c.temperature.decay = value.get<double>();
      else if (key == "n_predict_steps") c.n_predict_steps = value.get<int>();
      else if (key == "include_unlabeled_recon") c.include_unlabeled_recon = value.get<bool>();
      else if (key == "checkpoint_every") c.checkpoint_every = value.get<int>();
      else if (key == "d_alpha") c.d_alpha = value.get<int>();
      else if (key == "d_beta") c.d_beta = value.get<int>();
      else if (key == "enc_hidden") c.enc_hidden = value.get<int>();
      else if (key == "dec_hidden") c.dec_hidden = value.get<int>();
      else if (key == "agg_hidden") c.agg_hidden = value.get<int>();
      else if (key == "p0") c.p0 = value.get<double>();
      else if (key == "sigma_dec") c.sigma_dec = value.get<double>();
      else throw ConfigError("train config: unknown field '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("train config: ") + e.what());
  }
  return c;
}

namespace {

// Draws up to `batch` distinct entries from the pool; the whole pool when it
// is no larger than the batch.
std::vector<const TimeSeriesWindow*> pick_batch(
    const std::vector<const TimeSeriesWindow*>& pool, std::size_t batch, Rng& rng) {
  if (pool.size() <= batch) return pool;
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<const TimeSeriesWindow*> out;
  out.reserve(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    const std::size_t j = i + rng.index(idx.size() - i);
    std::swap(idx[i], idx[j]);
    out.push_back(pool[idx[i]]);
  }
  return out;
}

void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[rng.index(i)]);
}

Checkpoint make_checkpoint(const GcaModel& model, const ParamSet& params,
                           const NormStats& source_stats, const NormStats& target_stats,
                           const std::string& config_json) {
  Checkpoint c;
  c.config = model.config;
  c.params = params;
  c.source_stats = source_stats;
  c.target_stats = target_stats;
  c.train_config_json = config_json;
  return c;
}

std::ofstream open_for_write(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

}  // namespace

TrainResult train(const Dataset& source, const Dataset& target, const Dataset& target_val,
                  const TrainConfig& config, const std::string& run_dir,
                  const std::string& config_json_echo) {
  validate(config);
  if (source.windows.empty()) throw ConfigError("train: source dataset has no windows");
  if (target.windows.empty()) throw ConfigError("train: target dataset has no windows");
  if (target_val.windows.empty()) throw ConfigError("train: validation dataset has no windows");
  if (source.M != target.M || source.M != target_val.M)
    throw ConfigError("train: datasets disagree on the variable count");
  if (config.target_variable >= source.M)
    throw ConfigError("train: target variable " + std::to_string(config.target_variable) +
                      " is out of range for " + std::to_string(source.M) + " variables");

  // Local copies with window domains remapped to model indices.
  Dataset src = source;
  for (auto& w : src.windows) w.domain_id = 0;
  Dataset tgt = target;
  for (auto& w : tgt.windows) w.domain_id = 1;
  Dataset val = target_val;
  for (auto& w : val.windows) w.domain_id = 1;

  Hyper hyper = config.hyper;
  if (config.mode == TrainMode::gca_r) hyper.gamma = 0.0;
  if (config.mode == TrainMode::gca_e) hyper.lambda = 0.0;

  ModelConfig mc;
  mc.M = source.M;
  mc.k = config.k;
  mc.n_domains = 2;
  mc.d_alpha = config.d_alpha;
  mc.d_beta = config.d_beta;
  mc.enc_hidden = config.enc_hidden;
  mc.dec_hidden = config.dec_hidden;
  mc.agg_hidden = config.agg_hidden;
  mc.p0 = config.p0;
  mc.sigma_dec = config.sigma_dec;
  mc.baseline = (config.mode == TrainMode::baseline);

  Rng root(config.seed);
  Rng init_rng = root.fork(1);
  Rng noise_rng = root.fork(2);
  Rng shuffle_rng = root.fork(3);
  GcaModel model(mc, init_rng);
  OptimizerState opt = OptimizerState::like(model.params);

  // Chronologically earliest labeled-target windows.
  std::vector<std::size_t> by_start(tgt.windows.size());
  std::iota(by_start.begin(), by_start.end(), 0);
  std::stable_sort(by_start.begin(), by_start.end(), [&](std::size_t a, std::size_t b) {
    return tgt.windows[a].start < tgt.windows[b].start;
  });
  std::size_t n_labeled = static_cast<std::size_t>(
      std::llround(config.labeled_fraction * static_cast<double>(tgt.windows.size())));
  n_labeled = std::min(n_labeled, tgt.windows.size());
  std::vector<const TimeSeriesWindow*> labeled, unlabeled, all_target;
  for (std::size_t i = 0; i < by_start.size(); ++i) {
    const TimeSeriesWindow* w = &tgt.windows[by_start[i]];
    (i < n_labeled ? labeled : unlabeled).push_back(w);
  }
  all_target.reserve(tgt.windows.size());
  for (const auto& w : tgt.windows) all_target.push_back(&w);

  const std::string config_json =
      config_json_echo.empty() ? train_config_to_json(config) : config_json_echo;

  const bool writing = !run_dir.empty();
  std::ofstream history_file, validation_file;
  if (writing) {
    std::error_code ec;
    fs::create_directories(fs::path(run_dir) / "checkpoints", ec);
    if (ec) throw DataError("cannot create run directory " + run_dir + ": " + ec.message());
    open_for_write(fs::path(run_dir) / "config.json") << config_json << "\n";
    history_file = open_for_write(fs::path(run_dir) / "history.csv");
    write_loss_history_header(history_file);
    validation_file = open_for_write(fs::path(run_dir) / "validation.csv");
    validation_file << "epoch,val_mse\n";
  }

  TrainResult result;
  double best_mse = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  ParamSet best_params = model.params;

  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  std::vector<std::size_t> order(src.windows.size());
  long global_step = 0;
  LossOptions loss_options{config.n_predict_steps, config.target_variable};

  for (int e = 0; e < config.epochs; ++e) {
    const double temp = temperature_schedule(e, config);
    std::iota(order.begin(), order.end(), 0);
    shuffle_indices(order, shuffle_rng);
    const std::size_t steps = (order.size() + batch - 1) / batch;
    LossBreakdown epoch_mean;
    for (std::size_t s = 0; s < steps; ++s) {
      Batches batches;
      const std::size_t lo = s * batch;
      const std::size_t hi = std::min(lo + batch, order.size());
      for (std::size_t i = lo; i < hi; ++i) batches.source.push_back(&src.windows[order[i]]);
      batches.labeled_target = pick_batch(labeled, batch, shuffle_rng);
      if (config.include_unlabeled_recon)
        batches.extra_elbo_target = pick_batch(unlabeled, batch, shuffle_rng);
      batches.all_target = pick_batch(all_target, batch, shuffle_rng);

      ad::Tape tape;
      BoundModel bm = bind(model, tape, true);
      LossTerms terms = total_loss(bm, batches, hyper, temp, noise_rng, loss_options);
      LossBreakdown bd = terms.breakdown(hyper);
      if (!std::isfinite(bd.total) || std::abs(bd.total) > 1e8)
        throw NumericError("train: loss diverged at step " + std::to_string(global_step) +
                           " (total = " + format_double(bd.total) +
                           "); lower the learning rate or check the data scale");
      tape.backward(terms.total);
      std::vector<Tensor> grads;
      grads.reserve(model.params.size());
      for (std::size_t p = 0; p < model.params.size(); ++p)
        grads.push_back(bm.at(static_cast<int>(p)).grad());
      adam_step(model.params, grads, opt, config.lr);

      result.history.push_back({global_step, bd, temp});
      if (writing) append_loss_history_row(history_file, global_step, bd, temp);
      epoch_mean.neg_elbo_source += bd.neg_elbo_source;
      epoch_mean.neg_elbo_target += bd.neg_elbo_target;
      epoch_mean.alignment += bd.alignment;
      epoch_mean.sparsity += bd.sparsity;
      epoch_mean.strengthen += bd.strengthen;
      epoch_mean.total += bd.total;
      ++global_step;
    }
    const double inv_steps = 1.0 / static_cast<double>(steps);
    const double vmse = validation_mse(model, val, config.target_variable);
    result.val_mse.push_back(vmse);
    std::cout << "epoch=" << (e + 1) << " total=" << format_double(epoch_mean.total * inv_steps)
              << " elbo_s=" << format_double(epoch_mean.neg_elbo_source * inv_steps)
              << " elbo_t=" << format_double(epoch_mean.neg_elbo_target * inv_steps)
              << " l_r=" << format_double(epoch_mean.alignment * inv_steps)
              << " l_d=" << format_double(epoch_mean.sparsity * inv_steps)
              << " l_e=" << format_double(epoch_mean.strengthen * inv_steps)
              << " val_mse=" << format_double(vmse) << " temp=" << format_double(temp) << "\n";
    if (writing) validation_file << (e + 1) << ',' << format_double(vmse) << '\n';
    if (writing && config.checkpoint_every > 0 && (e + 1) % config.checkpoint_every == 0)
      save_checkpoint((fs::path(run_dir) / "checkpoints" /
                       ("epoch_" + std::to_string(e + 1) + ".json")).string(),
                      make_checkpoint(model, model.params, source.stats, target.stats,
                                      config_json));
    if (vmse < best_mse) {
      best_mse = vmse;
      best_epoch = e + 1;
      best_params = model.params;
    }
  }

  result.best_epoch = best_epoch;
  result.best = make_checkpoint(model, best_params, source.stats, target.stats, config_json);
  if (writing) save_checkpoint((fs::path(run_dir) / "best.json").string(), result.best);
  return result;
}

}  // namespace gca
