#pragma once

#include <string>
#include <vector>

#include "gca/model.hpp"
#include "gca/objectives.hpp"
#include "gca/synthetic.hpp"

namespace gca {

// Training modes: the full objective, the ablations that zero one loss
// weight each, and a plain autoregressive network trained on source plus
// labeled target windows only.
enum class TrainMode { gca, gca_r, gca_e, baseline };

TrainMode parse_train_mode(const std::string& name);  // unknown name -> ConfigError
std::string to_string(TrainMode mode);

struct TempSchedule {
  double start = 1.0;
  double end = 0.5;
  // Per-epoch multiplier. Nonpositive means "derive from the epoch count"
  // so that `end` is reached at 80% of the epochs.
  double decay = 0.0;
};

struct TrainConfig {
  int k = 3;            // max lag
  int window = 30;      // history rows per window (T)
  int horizon = 10;     // forecast rows per window (tau)
  int target_variable = 0;
  Hyper hyper;
  double lr = 1e-3;
  int batch_size = 64;
  int epochs = 100;
  double labeled_fraction = 0.05;  // of target training windows, earliest first
  TempSchedule temperature;
  unsigned long long seed = 0;
  TrainMode mode = TrainMode::gca;
  int n_predict_steps = 8;
  // Off by default: also feed unlabeled-target windows to the target ELBO.
  bool include_unlabeled_recon = false;
  int checkpoint_every = 1;  // epochs between checkpoint files (0 = none)

  // Model capacity.
  int d_alpha = 4;
  int d_beta = 4;
  int enc_hidden = 16;
  int dec_hidden = 3;
  int agg_hidden = 16;
  double p0 = 0.1;
  double sigma_dec = 1.0;
};

void validate(const TrainConfig& config);  // throws ConfigError

// tau_g = max(end, start * decay^epoch), epoch counted from 0.
double temperature_schedule(int epoch, const TrainConfig& config);

// Adaptive-moment optimizer state; moment shapes mirror the parameters.
struct OptimizerState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static OptimizerState like(const ParamSet& params);
};

// Bias-corrected update in place. Non-finite gradients raise NumericError
// naming the parameter.
void adam_step(ParamSet& params, const std::vector<Tensor>& grads, OptimizerState& state,
               double lr);

// Pooled squared error of deterministic hard-structure forecasts on the
// designated variable over every window's label horizon.
double validation_mse(const GcaModel& model, const Dataset& val, int target_variable);

// Index of the smallest validation MSE; ties go to the earliest epoch.
std::size_t select_best(const std::vector<double>& val_mse_by_epoch);

struct StepRecord {
  long step = 0;
  LossBreakdown loss;
  double temperature = 1.0;
};

struct TrainResult {
  Checkpoint best;                  // parameters at the best validation epoch
  int best_epoch = 0;               // 1-based
  std::vector<double> val_mse;      // one entry per epoch
  std::vector<StepRecord> history;  // one entry per optimization step
};

// TrainConfig <-> JSON (single flat object).
std::string train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const std::string& text);

// Runs the semi-supervised loop: per step, one source batch, one
// labeled-target batch (the chronologically earliest labeled_fraction of
// target windows; possibly empty) and one batch over all target windows;
// per epoch, deterministic validation on `target_val` and best-checkpoint
// tracking. Window domain ids are remapped to model indices 0 (source) and
// 1 (target) internally.
//
// With a nonempty run_dir, writes config.json, history.csv (one row per
// step), validation.csv (one row per epoch), checkpoints/epoch_<n>.json and
// best.json there. config_json_echo, when nonempty, is stored verbatim as
// the run's config.json and inside every checkpoint; otherwise the
// serialized TrainConfig is used.
TrainResult train(const Dataset& source, const Dataset& target, const Dataset& target_val,
                  const TrainConfig& config, const std::string& run_dir = "",
                  const std::string& config_json_echo = "");

}  // namespace gca
