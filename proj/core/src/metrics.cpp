#include "gca/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <thread>

#include "gca/error.hpp"
#include "gca/io.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace gca {

ForecastMetrics forecast_metrics(const std::vector<Tensor>& preds,
                                 const std::vector<Tensor>& truths,
                                 const std::vector<int>& variable_subset) {
  if (preds.size() != truths.size())
    throw ConfigError("forecast_metrics: " + std::to_string(preds.size()) +
                      " predictions for " + std::to_string(truths.size()) + " truths");
  if (preds.empty()) throw ConfigError("forecast_metrics: no windows");
  if (variable_subset.empty()) throw ConfigError("forecast_metrics: empty variable selection");

  double se = 0.0, ae = 0.0;
  std::size_t n = 0;
  for (std::size_t w = 0; w < preds.size(); ++w) {
    const Tensor& p = preds[w];
    const Tensor& t = truths[w];
    if (!same_shape(p, t))
      throw ConfigError("forecast_metrics: window " + std::to_string(w) + " has shapes " +
                        shape_str(p.shape) + " and " + shape_str(t.shape));
    for (int m : variable_subset) {
      if (m < 0 || static_cast<std::size_t>(m) >= p.cols())
        throw ConfigError("forecast_metrics: variable " + std::to_string(m) +
                          " is out of range for " + std::to_string(p.cols()) + " variables");
      for (std::size_t r = 0; r < p.rows(); ++r) {
        const double d = p.at(r, static_cast<std::size_t>(m)) - t.at(r, static_cast<std::size_t>(m));
        se += d * d;
        ae += std::abs(d);
        ++n;
      }
    }
  }
  if (n == 0) throw ConfigError("forecast_metrics: empty selection");
  return {se / static_cast<double>(n), ae / static_cast<double>(n)};
}

double auprc(const std::vector<Tensor>& edge_scores, const std::vector<Tensor>& ground_truth) {
  if (edge_scores.size() != ground_truth.size() || edge_scores.empty())
    throw ConfigError("auprc: " + std::to_string(edge_scores.size()) + " score lags for " +
                      std::to_string(ground_truth.size()) + " truth lags");
  struct Entry {
    double score;
    bool positive;
  };
  std::vector<Entry> entries;
  for (std::size_t j = 0; j < edge_scores.size(); ++j) {
    const Tensor& s = edge_scores[j];
    const Tensor& g = ground_truth[j];
    if (!same_shape(s, g))
      throw ConfigError("auprc: lag " + std::to_string(j + 1) + " has score shape " +
                        shape_str(s.shape) + " but truth shape " + shape_str(g.shape));
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (g.v[i] != 0.0 && g.v[i] != 1.0)
        throw DataError("auprc: ground truth entries must be 0 or 1");
      entries.push_back({s.v[i], g.v[i] == 1.0});
    }
  }
  // Stable sort keeps the (lag, row, col) insertion order among ties.
  std::stable_sort(entries.begin(), entries.end(),
                   [](const Entry& a, const Entry& b) { return a.score > b.score; });
  std::size_t positives = 0;
  double ap = 0.0;
  for (std::size_t rank = 0; rank < entries.size(); ++rank) {
    if (!entries[rank].positive) continue;
    ++positives;
    ap += static_cast<double>(positives) / static_cast<double>(rank + 1);
  }
  if (positives == 0) throw DataError("auprc: ground truth has no positive edges");
  return ap / static_cast<double>(positives);
}

int worker_thread_count() {
  if (const char* env = std::getenv("GCA_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<int>(std::min(v, 256L));
    throw ConfigError("GCA_THREADS must be a positive integer, got '" + std::string(env) + "'");
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

namespace {

struct WindowEval {
  Tensor forecast;            // {tau, M}
  std::vector<Tensor> probs;  // k x {M, M}
};

// Evaluates every window, fanning out ranges to workers; results land in
// an index-addressed vector so any later reduction is order-independent
// of the thread count.
std::vector<WindowEval> eval_windows(const GcaModel& model, const Dataset& data) {
  const std::size_t n = data.windows.size();
  std::vector<WindowEval> out(n);
  auto run_range = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const TimeSeriesWindow& w = data.windows[i];
      out[i].forecast = forecast(model, w.x, w.domain_id, static_cast<int>(w.y.rows()),
                                 ForecastMode::hard);
      out[i].probs = infer_structures(model, w.x, w.domain_id).probs;
    }
  };
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(worker_thread_count()), n);
  if (workers <= 1) {
    run_range(0, n);
    return out;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t t = 0; t < workers; ++t) {
    const std::size_t lo = t * chunk;
    if (lo >= n) break;
    pool.emplace_back(run_range, lo, std::min(lo + chunk, n));
  }
  for (auto& th : pool) th.join();
  return out;
}

std::vector<Tensor> mean_probs(const std::vector<WindowEval>& evals, int k, int M) {
  std::vector<Tensor> scores(static_cast<std::size_t>(k),
                             Tensor(Shape{static_cast<std::size_t>(M), static_cast<std::size_t>(M)}));
  for (const WindowEval& e : evals)  // index order: deterministic reduction
    for (int j = 0; j < k; ++j)
      for (std::size_t i = 0; i < scores[static_cast<std::size_t>(j)].size(); ++i)
        scores[static_cast<std::size_t>(j)].v[i] += e.probs[static_cast<std::size_t>(j)].v[i];
  const double inv = 1.0 / static_cast<double>(evals.size());
  for (Tensor& s : scores)
    for (double& v : s.v) v *= inv;
  return scores;
}

}  // namespace

EvalReport evaluate(const GcaModel& model, const Dataset& test,
                    const std::vector<WeightedLagStructure>* ground_truth,
                    const EvalOptions& options) {
  if (test.windows.empty()) throw ConfigError("evaluate: dataset has no windows");
  if (test.M != model.config.M)
    throw ConfigError("evaluate: dataset has " + std::to_string(test.M) +
                      " variables but the model was trained on " +
                      std::to_string(model.config.M));
  if (options.target_variable < 0 || options.target_variable >= model.config.M)
    throw ConfigError("evaluate: target variable " + std::to_string(options.target_variable) +
                      " is out of range");

  const std::vector<WindowEval> evals = eval_windows(model, test);

  std::vector<Tensor> preds, truths;
  preds.reserve(evals.size());
  truths.reserve(evals.size());
  for (std::size_t i = 0; i < evals.size(); ++i) {
    preds.push_back(evals[i].forecast);
    truths.push_back(test.windows[i].y);
  }
  std::vector<int> all_vars(static_cast<std::size_t>(model.config.M));
  std::iota(all_vars.begin(), all_vars.end(), 0);

  EvalReport report;
  const ForecastMetrics target = forecast_metrics(preds, truths, {options.target_variable});
  const ForecastMetrics all = forecast_metrics(preds, truths, all_vars);
  report.mse_target = target.mse;
  report.mae_target = target.mae;
  report.mse_all = all.mse;
  report.mae_all = all.mae;
  report.n_windows = evals.size();
  report.target_variable = options.target_variable;
  report.domain_pair = options.domain_pair;
  report.seed = options.seed;
  report.edge_scores = mean_probs(evals, model.config.k, model.config.M);

  if (ground_truth && !ground_truth->empty()) {
    if (ground_truth->size() != static_cast<std::size_t>(model.config.k))
      throw DataError("evaluate: ground truth has " + std::to_string(ground_truth->size()) +
                      " lags but the model encodes " + std::to_string(model.config.k));
    std::vector<Tensor> adjacency;
    for (const WeightedLagStructure& s : *ground_truth) adjacency.push_back(s.adjacency);
    report.auprc_lag = auprc(report.edge_scores, adjacency);

    // Summary level: lag-averaged scores against the OR of the lag truths.
    Tensor summary_scores(adjacency[0].shape);
    Tensor summary_truth(adjacency[0].shape);
    for (std::size_t j = 0; j < adjacency.size(); ++j)
      for (std::size_t i = 0; i < summary_scores.size(); ++i) {
        summary_scores.v[i] += report.edge_scores[j].v[i];
        if (adjacency[j].v[i] == 1.0) summary_truth.v[i] = 1.0;
      }
    for (double& v : summary_scores.v) v /= static_cast<double>(adjacency.size());
    report.auprc_summary = auprc({summary_scores}, {summary_truth});
    report.has_structure_metrics = true;
  }
  return report;
}

std::string eval_report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["mse_target"] = r.mse_target;
  j["mae_target"] = r.mae_target;
  j["mse_all"] = r.mse_all;
  j["mae_all"] = r.mae_all;
  if (r.has_structure_metrics) {
    j["auprc_lag"] = r.auprc_lag;
    j["auprc_summary"] = r.auprc_summary;
  }
  j["n_windows"] = r.n_windows;
  j["target_variable"] = r.target_variable;
  j["domain_pair"] = r.domain_pair;
  j["seed"] = r.seed;
  return j.dump(2);
}

namespace {

nlohmann::ordered_json matrix_json(const Tensor& t) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (std::size_t r = 0; r < t.rows(); ++r) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (std::size_t c = 0; c < t.cols(); ++c) row.push_back(t.at(r, c));
    rows.push_back(row);
  }
  return rows;
}

void write_matrix_csv(const fs::path& path, const Tensor& t) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.cols(); ++c) {
      if (c) out << ',';
      out << format_double(t.at(r, c));
    }
    out << '\n';
  }
}

}  // namespace

void export_structures(const GcaModel& model, const Dataset& data, const std::string& out_dir,
                       double threshold) {
  if (data.windows.empty()) throw ConfigError("export_structures: dataset has no windows");
  if (data.M != model.config.M)
    throw ConfigError("export_structures: dataset has " + std::to_string(data.M) +
                      " variables but the model was trained on " +
                      std::to_string(model.config.M));
  const std::vector<WindowEval> evals = eval_windows(model, data);
  const std::vector<Tensor> probs = mean_probs(evals, model.config.k, model.config.M);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create " + out_dir + ": " + ec.message());

  Tensor summary(probs[0].shape);
  nlohmann::ordered_json doc;
  doc["M"] = model.config.M;
  doc["k"] = model.config.k;
  doc["threshold"] = threshold;
  doc["lags"] = nlohmann::ordered_json::array();
  for (std::size_t j = 0; j < probs.size(); ++j) {
    Tensor adjacency(probs[j].shape);
    for (std::size_t i = 0; i < probs[j].size(); ++i) {
      adjacency.v[i] = probs[j].v[i] >= threshold ? 1.0 : 0.0;
      summary.v[i] += probs[j].v[i] / static_cast<double>(probs.size());
    }
    nlohmann::ordered_json lag;
    lag["lag"] = j + 1;
    lag["probs"] = matrix_json(probs[j]);
    lag["adjacency"] = matrix_json(adjacency);
    doc["lags"].push_back(lag);
    write_matrix_csv(fs::path(out_dir) / ("lag_" + std::to_string(j + 1) + ".csv"), probs[j]);
  }
  doc["summary"] = matrix_json(summary);

  std::ofstream out(fs::path(out_dir) / "structures.json");
  if (!out) throw DataError("cannot write " + (fs::path(out_dir) / "structures.json").string());
  out << doc.dump(2) << "\n";
  write_matrix_csv(fs::path(out_dir) / "summary.csv", summary);
}

}  // namespace gca
