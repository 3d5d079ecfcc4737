#pragma once

#include <string>
#include <vector>

#include "gca/model.hpp"
#include "gca/synthetic.hpp"

namespace gca {

struct ForecastMetrics {
  double mse = 0.0;
  double mae = 0.0;
};

// Mean squared / absolute error over the selected variables of every
// window and horizon step. preds and truths hold one {tau, M} tensor per
// window, pairwise shape-matched.
ForecastMetrics forecast_metrics(const std::vector<Tensor>& preds,
                                 const std::vector<Tensor>& truths,
                                 const std::vector<int>& variable_subset);

// Average precision of lag-resolved edge scores against a binary
// ground-truth structure of the same shape. All k*M*M entries are ranked
// by score descending, ties broken by (lag, row, col) order; AP is the
// mean of precision-at-rank over the positive entries.
double auprc(const std::vector<Tensor>& edge_scores,
             const std::vector<Tensor>& ground_truth);

struct EvalReport {
  double mse_target = 0.0;
  double mae_target = 0.0;
  double mse_all = 0.0;
  double mae_all = 0.0;
  bool has_structure_metrics = false;
  double auprc_lag = 0.0;      // k x M x M scores vs lag-resolved truth
  double auprc_summary = 0.0;  // lag-averaged scores vs OR-collapsed truth
  std::size_t n_windows = 0;
  int target_variable = 0;
  std::string domain_pair;
  unsigned long long seed = 0;
  // Mean posterior edge probability over the test windows, per lag; the
  // scores the AUPRC numbers above were computed from.
  std::vector<Tensor> edge_scores;
};

struct EvalOptions {
  int target_variable = 0;
  std::string domain_pair;
  unsigned long long seed = 0;
};

// Deterministic evaluation: hard-structure forecasts for every window,
// pooled forecast metrics (designated variable and all variables), and,
// when ground truth is given, structure-recovery AUPRC at both
// resolutions. Window domain ids must be model domain indices.
EvalReport evaluate(const GcaModel& model, const Dataset& test,
                    const std::vector<WeightedLagStructure>* ground_truth = nullptr,
                    const EvalOptions& options = {});

std::string eval_report_to_json(const EvalReport& report);

// Writes structures.json (per-lag probabilities plus thresholded
// adjacency and the lag-averaged summary), summary.csv and one
// lag_<j>.csv probability matrix per lag, all derived from the mean
// posterior probabilities over the dataset's windows.
void export_structures(const GcaModel& model, const Dataset& data, const std::string& out_dir,
                       double threshold = 0.5);

// Worker threads for window-parallel evaluation: the GCA_THREADS
// environment variable when set, hardware concurrency otherwise, at
// least 1.
int worker_thread_count();

}  // namespace gca
