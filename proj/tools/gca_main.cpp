// Command line front end: data generation, training, evaluation and
// structure export, composable through the manifest a generate run writes.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gca/error.hpp"
#include "gca/io.hpp"
#include "gca/metrics.hpp"
#include "gca/model.hpp"
#include "gca/synthetic.hpp"
#include "gca/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

json parse_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw gca::DataError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw gca::DataError(path.string() + ": " + e.what());
  }
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw gca::DataError("cannot write " + path.string());
  out << text;
  if (!out) throw gca::DataError("cannot write " + path.string());
}

// Where a training run's series come from: CSV files on disk or a
// synthetic task simulated in process. Exactly one kind is active.
struct DataSpec {
  std::string kind;  // "csv" or "synthetic", empty until resolved
  // csv
  std::string source_csv;
  std::string target_csv;
  std::string ground_truth;  // optional
  // synthetic
  int vars = 5;
  int lag = 2;
  double density = 0.3;
  double weight_scale = 0.5;
  std::size_t length = 10000;
  int source_domain = 1;
  int target_domain = 2;
  unsigned long long seed = 0;
};

struct Experiment {
  gca::TrainConfig train;
  DataSpec data;
  std::string out_dir;
  std::string domain_pair;
  int stride = 1;
  double val_fraction = 0.2;
  double test_fraction = 0.2;
};

DataSpec data_spec_from_json(const json& j) {
  if (!j.is_object()) throw gca::DataError("experiment config: 'data' must be an object");
  DataSpec d;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "kind") d.kind = value.get<std::string>();
      else if (key == "source") d.source_csv = value.get<std::string>();
      else if (key == "target") d.target_csv = value.get<std::string>();
      else if (key == "ground_truth") d.ground_truth = value.get<std::string>();
      else if (key == "vars") d.vars = value.get<int>();
      else if (key == "lag") d.lag = value.get<int>();
      else if (key == "density") d.density = value.get<double>();
      else if (key == "weight_scale") d.weight_scale = value.get<double>();
      else if (key == "length") d.length = value.get<std::size_t>();
      else if (key == "source_domain") d.source_domain = value.get<int>();
      else if (key == "target_domain") d.target_domain = value.get<int>();
      else if (key == "seed") d.seed = value.get<unsigned long long>();
      else throw gca::ConfigError("experiment config: unknown data field '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw gca::DataError(std::string("experiment config: ") + e.what());
  }
  if (d.kind != "csv" && d.kind != "synthetic")
    throw gca::ConfigError("experiment config: data kind must be 'csv' or 'synthetic', got '" +
                           d.kind + "'");
  return d;
}

ordered_json data_spec_to_json(const DataSpec& d) {
  ordered_json j;
  j["kind"] = d.kind;
  if (d.kind == "csv") {
    j["source"] = d.source_csv;
    j["target"] = d.target_csv;
    j["ground_truth"] = d.ground_truth;
  } else {
    j["vars"] = d.vars;
    j["lag"] = d.lag;
    j["density"] = d.density;
    j["weight_scale"] = d.weight_scale;
    j["length"] = d.length;
    j["source_domain"] = d.source_domain;
    j["target_domain"] = d.target_domain;
    j["seed"] = d.seed;
  }
  return j;
}

// The experiment file is the flat training config plus windowing stride,
// split fractions, the output directory and the data source block.
Experiment experiment_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw gca::DataError(std::string("experiment config: ") + e.what());
  }
  if (!j.is_object()) throw gca::DataError("experiment config: expected a JSON object");

  Experiment e;
  json rest = json::object();
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "data") e.data = data_spec_from_json(value);
      else if (key == "out_dir") e.out_dir = value.get<std::string>();
      else if (key == "domain_pair") e.domain_pair = value.get<std::string>();
      else if (key == "stride") e.stride = value.get<int>();
      else if (key == "val_fraction") e.val_fraction = value.get<double>();
      else if (key == "test_fraction") e.test_fraction = value.get<double>();
      else rest[key] = value;
    }
  } catch (const json::exception& ex) {
    throw gca::DataError(std::string("experiment config: ") + ex.what());
  }
  e.train = gca::train_config_from_json(rest.dump());
  return e;
}

std::string experiment_to_json(const Experiment& e) {
  ordered_json j = ordered_json::parse(gca::train_config_to_json(e.train));
  j["stride"] = e.stride;
  j["val_fraction"] = e.val_fraction;
  j["test_fraction"] = e.test_fraction;
  j["domain_pair"] = e.domain_pair;
  j["out_dir"] = e.out_dir;
  j["data"] = data_spec_to_json(e.data);
  return j.dump(2);
}

std::string csv_for_domain(const fs::path& dir, const json& manifest, int id) {
  if (!manifest.contains("domains") || !manifest.at("domains").is_array())
    throw gca::DataError("manifest: missing 'domains' array");
  std::string available;
  for (const json& d : manifest.at("domains")) {
    const int did = d.at("id").get<int>();
    if (did == id) return (dir / d.at("csv").get<std::string>()).string();
    if (!available.empty()) available += ", ";
    available += std::to_string(did);
  }
  throw gca::ConfigError("manifest lists no domain " + std::to_string(id) +
                         " (available: " + available + ")");
}

// ---------------------------------------------------------------- generate

struct GenerateArgs {
  int vars = 5;
  int lag = 2;
  double density = 0.3;
  double weight_scale = 0.5;
  std::size_t length = 10000;
  std::size_t burn_in = 200;
  std::vector<int> domains;
  unsigned long long seed = 0;
  std::string out;
  bool perturb_weights = false;
  bool phi_is_variance = false;
  double phi_override = 0.0;
  int interval_override = 0;
  double c_override = 0.0;
};

int cmd_generate(const GenerateArgs& a, const CLI::App& sub) {
  gca::GenerateOptions opts;
  opts.M = a.vars;
  opts.k = a.lag;
  opts.density = a.density;
  opts.weight_scale = a.weight_scale;
  opts.length = a.length;
  opts.burn_in = a.burn_in;
  opts.perturb_weights = a.perturb_weights;
  opts.phi_is_variance = a.phi_is_variance;

  std::vector<gca::DomainConfig> configs;
  for (int id : a.domains) {
    gca::DomainConfig c = gca::DomainConfig::preset(id);
    c.phi_is_variance = a.phi_is_variance;
    if (sub.count("--phi")) c.noise_phi = a.phi_override;
    if (sub.count("--interval")) c.sample_interval = a.interval_override;
    if (sub.count("--c")) c.nonlinearity_c = a.c_override;
    configs.push_back(c);
  }

  gca::Rng rng(a.seed);
  gca::MultiDomainData data;
  try {
    data = gca::generate_domains(opts, configs, rng);
  } catch (const gca::NumericError& e) {
    // A diverging simulation is a property of the requested data, not of
    // the numerics of a model, so it reports as a data failure.
    throw gca::DataError(e.what());
  }

  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) throw gca::DataError("cannot create " + a.out + ": " + ec.message());
  const fs::path dir(a.out);

  ordered_json manifest;
  manifest["vars"] = opts.M;
  manifest["lag"] = opts.k;
  manifest["density"] = opts.density;
  manifest["weight_scale"] = opts.weight_scale;
  manifest["length"] = opts.length;
  manifest["burn_in"] = opts.burn_in;
  manifest["seed"] = a.seed;
  manifest["perturb_weights"] = opts.perturb_weights;
  manifest["phi_is_variance"] = opts.phi_is_variance;
  manifest["ground_truth"] = "ground_truth.json";
  manifest["domains"] = ordered_json::array();
  for (const gca::DomainSeries& d : data.domains) {
    const std::string csv = "domain_" + std::to_string(d.config.domain_id) + ".csv";
    gca::write_series_csv((dir / csv).string(), d.raw);
    ordered_json entry;
    entry["id"] = d.config.domain_id;
    entry["phi"] = d.config.noise_phi;
    entry["interval"] = d.config.sample_interval;
    entry["c"] = d.config.nonlinearity_c;
    entry["csv"] = csv;
    manifest["domains"].push_back(entry);
  }
  gca::write_structures_json((dir / "ground_truth.json").string(), data.structures);
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
  std::cout << "wrote " << data.domains.size() << " domains to " << a.out << "\n";
  return 0;
}

// ------------------------------------------------------------------- train

struct TrainArgs {
  std::string config_path;
  std::string data_dir;
  std::string source_csv;
  std::string target_csv;
  std::string ground_truth;
  int source_domain = 1;
  int target_domain = 2;
  std::string out;
  std::string domain_pair;
  int stride = 1;
  double val_fraction = 0.2;
  double test_fraction = 0.2;
  bool synthetic = false;
  // staging for TrainConfig overrides
  std::string mode = "gca";
  unsigned long long seed = 0;
  int k = 3, window = 30, horizon = 10, target_variable = 0;
  double gamma = 1.0, delta = 0.01, lambda = 1.0, lr = 1e-3;
  int batch_size = 64, epochs = 100;
  double labeled_fraction = 0.05;
  double temp_start = 1.0, temp_end = 0.5, temp_decay = 0.0;
  int n_predict_steps = 8;
  bool include_unlabeled_recon = false;
  int checkpoint_every = 1;
  int d_alpha = 4, d_beta = 4, enc_hidden = 16, dec_hidden = 3, agg_hidden = 16;
  double p0 = 0.1, sigma_dec = 1.0;
  int vars = 5;
  double density = 0.3;
  std::size_t length = 10000;
  unsigned long long data_seed = 0;
};

void apply_train_flags(Experiment& e, const TrainArgs& a, const CLI::App& sub) {
  const auto on = [&sub](const char* name) { return sub.count(name) > 0; };
  if (on("--mode")) e.train.mode = gca::parse_train_mode(a.mode);
  if (on("--seed")) e.train.seed = a.seed;
  if (on("--k")) e.train.k = a.k;
  if (on("--window")) e.train.window = a.window;
  if (on("--horizon")) e.train.horizon = a.horizon;
  if (on("--target-variable")) e.train.target_variable = a.target_variable;
  if (on("--gamma")) e.train.hyper.gamma = a.gamma;
  if (on("--delta")) e.train.hyper.delta = a.delta;
  if (on("--lambda")) e.train.hyper.lambda = a.lambda;
  if (on("--lr")) e.train.lr = a.lr;
  if (on("--batch-size")) e.train.batch_size = a.batch_size;
  if (on("--epochs")) e.train.epochs = a.epochs;
  if (on("--labeled-fraction")) e.train.labeled_fraction = a.labeled_fraction;
  if (on("--temp-start")) e.train.temperature.start = a.temp_start;
  if (on("--temp-end")) e.train.temperature.end = a.temp_end;
  if (on("--temp-decay")) e.train.temperature.decay = a.temp_decay;
  if (on("--n-predict-steps")) e.train.n_predict_steps = a.n_predict_steps;
  if (on("--include-unlabeled-recon")) e.train.include_unlabeled_recon = true;
  if (on("--checkpoint-every")) e.train.checkpoint_every = a.checkpoint_every;
  if (on("--d-alpha")) e.train.d_alpha = a.d_alpha;
  if (on("--d-beta")) e.train.d_beta = a.d_beta;
  if (on("--enc-hidden")) e.train.enc_hidden = a.enc_hidden;
  if (on("--dec-hidden")) e.train.dec_hidden = a.dec_hidden;
  if (on("--agg-hidden")) e.train.agg_hidden = a.agg_hidden;
  if (on("--p0")) e.train.p0 = a.p0;
  if (on("--sigma-dec")) e.train.sigma_dec = a.sigma_dec;
  if (on("--out")) e.out_dir = a.out;
  if (on("--domain-pair")) e.domain_pair = a.domain_pair;
  if (on("--stride")) e.stride = a.stride;
  if (on("--val-fraction")) e.val_fraction = a.val_fraction;
  if (on("--test-fraction")) e.test_fraction = a.test_fraction;

  if (on("--source") || on("--target")) {
    e.data.kind = "csv";
    e.data.source_csv = a.source_csv;
    e.data.target_csv = a.target_csv;
    if (on("--ground-truth")) e.data.ground_truth = a.ground_truth;
  } else if (on("--data")) {
    const fs::path dir(a.data_dir);
    const json manifest = parse_json_file(dir / "manifest.json");
    e.data.kind = "csv";
    e.data.source_csv = csv_for_domain(dir, manifest, a.source_domain);
    e.data.target_csv = csv_for_domain(dir, manifest, a.target_domain);
    if (manifest.contains("ground_truth")) {
      const fs::path gt = dir / manifest.at("ground_truth").get<std::string>();
      if (fs::exists(gt)) e.data.ground_truth = gt.string();
    }
    if (e.domain_pair.empty())
      e.domain_pair =
          std::to_string(a.source_domain) + "->" + std::to_string(a.target_domain);
  } else if (on("--synthetic")) {
    e.data.kind = "synthetic";
    e.data.vars = a.vars;
    e.data.density = a.density;
    e.data.length = a.length;
    e.data.source_domain = a.source_domain;
    e.data.target_domain = a.target_domain;
    e.data.seed = on("--data-seed") ? a.data_seed : e.train.seed;
    if (e.domain_pair.empty())
      e.domain_pair =
          std::to_string(a.source_domain) + "->" + std::to_string(a.target_domain);
  }
}

// Source and target series, raw (unnormalized).
std::pair<gca::Tensor, gca::Tensor> load_series(const DataSpec& d) {
  if (d.kind == "csv") {
    if (d.source_csv.empty() || d.target_csv.empty())
      throw gca::ConfigError("train: csv data needs both source and target paths");
    return {gca::read_series_csv(d.source_csv), gca::read_series_csv(d.target_csv)};
  }
  if (d.kind == "synthetic") {
    gca::GenerateOptions opts;
    opts.M = d.vars;
    opts.k = d.lag;
    opts.density = d.density;
    opts.weight_scale = d.weight_scale;
    opts.length = d.length;
    gca::Rng rng(d.seed);
    gca::MultiDomainData data = gca::generate_domains(
        opts, {gca::DomainConfig::preset(d.source_domain), gca::DomainConfig::preset(d.target_domain)},
        rng);
    return {data.domains[0].raw, data.domains[1].raw};
  }
  throw gca::ConfigError("train: no data source; pass --data, --source/--target, "
                         "--synthetic or a config file with a data block");
}

int cmd_train(const TrainArgs& a, const CLI::App& sub) {
  Experiment exp;
  if (!a.config_path.empty()) {
    std::ifstream in(a.config_path);
    if (!in) throw gca::ConfigError("cannot read config " + a.config_path);
    std::stringstream ss;
    ss << in.rdbuf();
    exp = experiment_from_json(ss.str());
  }
  apply_train_flags(exp, a, sub);
  if (exp.out_dir.empty()) throw gca::ConfigError("train: no output directory (--out)");
  gca::validate(exp.train);

  auto [source_raw, target_raw] = load_series(exp.data);
  auto [source_norm, source_stats] = gca::zscore_normalize(source_raw);
  auto [target_norm, target_stats] = gca::zscore_normalize(target_raw);

  // Window domain ids are the model's domain indices: source 0, target 1.
  gca::Dataset source =
      gca::window_dataset(source_norm, exp.train.window, exp.train.horizon, exp.stride, 0);
  source.stats = source_stats;
  gca::Dataset target =
      gca::window_dataset(target_norm, exp.train.window, exp.train.horizon, exp.stride, 1);
  target.stats = target_stats;

  gca::SplitRatios ratios;
  ratios.val = exp.val_fraction;
  ratios.test = exp.test_fraction;
  ratios.train = 1.0 - exp.val_fraction - exp.test_fraction;
  gca::Rng split_rng(exp.train.seed);
  auto source_parts = gca::split_dataset(source, ratios, split_rng);
  auto target_parts = gca::split_dataset(target, ratios, split_rng);

  const std::string echo = experiment_to_json(exp);
  gca::TrainResult result = gca::train(source_parts[0], target_parts[0], target_parts[1],
                                       exp.train, exp.out_dir, echo);

  if (exp.train.mode != gca::TrainMode::baseline) {
    gca::GcaModel best = gca::GcaModel::from_params(result.best.config, result.best.params);
    gca::export_structures(best, target_parts[2], (fs::path(exp.out_dir) / "structures").string());
  }
  std::cout << "best_epoch=" << result.best_epoch << "\n";
  std::cout << "best_val_mse=" << gca::format_double(result.val_mse[result.best_epoch - 1])
            << "\n";
  return 0;
}

// -------------------------------------------------------------- eval/export

struct EvalArgs {
  std::string model_path;
  std::string data_path;
  std::string ground_truth;
  std::string out = "eval_report.json";
  std::string split = "test";
  int domain = 0;
  int domain_index = 1;
  int target_variable = -1;
  double threshold = 0.5;  // export only
};

// Loading the model and locating the series files is configuration work;
// anything wrong there (missing file, malformed JSON) is reported as such.
gca::Checkpoint load_model_file(const std::string& path) {
  try {
    return gca::load_checkpoint(path);
  } catch (const gca::DataError& e) {
    throw gca::ConfigError(e.what());
  }
}

gca::Tensor load_eval_series(const EvalArgs& a, const CLI::App& sub) {
  try {
    const fs::path p(a.data_path);
    if (fs::is_directory(p)) {
      if (!sub.count("--domain"))
        throw gca::ConfigError("--data names a directory; pick a series with --domain <id>");
      const json manifest = parse_json_file(p / "manifest.json");
      return gca::read_series_csv(csv_for_domain(p, manifest, a.domain));
    }
    return gca::read_series_csv(p.string());
  } catch (const gca::DataError& e) {
    throw gca::ConfigError(e.what());
  }
}

struct EchoedWindowing {
  int window = 0;
  int horizon = 0;
  int stride = 1;
  int target_variable = 0;
  double val_fraction = 0.2;
  double test_fraction = 0.2;
  unsigned long long seed = 0;
  std::string domain_pair;
};

EchoedWindowing windowing_from_checkpoint(const gca::Checkpoint& ckpt) {
  json j;
  try {
    j = json::parse(ckpt.train_config_json);
  } catch (const json::exception&) {
    throw gca::ConfigError("model file carries no readable training configuration");
  }
  if (!j.is_object() || !j.contains("window") || !j.contains("horizon"))
    throw gca::ConfigError("model file's training configuration lacks window/horizon");
  EchoedWindowing w;
  w.window = j.at("window").get<int>();
  w.horizon = j.at("horizon").get<int>();
  w.stride = j.value("stride", 1);
  w.target_variable = j.value("target_variable", 0);
  w.val_fraction = j.value("val_fraction", 0.2);
  w.test_fraction = j.value("test_fraction", 0.2);
  w.seed = j.value("seed", 0ULL);
  w.domain_pair = j.value("domain_pair", std::string());
  return w;
}

gca::Dataset eval_dataset(const gca::Checkpoint& ckpt, const EchoedWindowing& w,
                          const gca::Tensor& raw, const std::string& split, int domain_index,
                          unsigned long long seed) {
  const gca::Tensor norm =
      ckpt.target_stats.empty() ? raw : gca::normalize_with(raw, ckpt.target_stats);
  gca::Dataset all = gca::window_dataset(norm, w.window, w.horizon, w.stride, domain_index);
  all.stats = ckpt.target_stats;
  if (split == "all") return all;
  gca::SplitRatios ratios;
  ratios.val = w.val_fraction;
  ratios.test = w.test_fraction;
  ratios.train = 1.0 - ratios.val - ratios.test;
  gca::Rng rng(seed);
  auto parts = gca::split_dataset(all, ratios, rng);
  if (split == "train") return parts[0];
  if (split == "val") return parts[1];
  if (split == "test") return parts[2];
  throw gca::ConfigError("unknown split '" + split + "' (expected train, val, test or all)");
}

int cmd_eval(const EvalArgs& a, const CLI::App& sub) {
  const gca::Checkpoint ckpt = load_model_file(a.model_path);
  const EchoedWindowing w = windowing_from_checkpoint(ckpt);
  const gca::Tensor raw = load_eval_series(a, sub);
  const gca::Dataset data = eval_dataset(ckpt, w, raw, a.split, a.domain_index, w.seed);

  std::vector<gca::WeightedLagStructure> gt;
  if (!a.ground_truth.empty()) {
    try {
      gt = gca::read_structures_json(a.ground_truth);
    } catch (const gca::DataError& e) {
      throw gca::ConfigError(e.what());
    }
  }

  gca::GcaModel model = gca::GcaModel::from_params(ckpt.config, ckpt.params);
  gca::EvalOptions opts;
  opts.target_variable = a.target_variable >= 0 ? a.target_variable : w.target_variable;
  opts.domain_pair = w.domain_pair;
  opts.seed = w.seed;
  const gca::EvalReport report =
      gca::evaluate(model, data, gt.empty() ? nullptr : &gt, opts);

  std::cout << "mse=" << gca::format_double(report.mse_target) << "\n";
  std::cout << "mae=" << gca::format_double(report.mae_target) << "\n";
  std::cout << "mse_all=" << gca::format_double(report.mse_all) << "\n";
  std::cout << "mae_all=" << gca::format_double(report.mae_all) << "\n";
  if (report.has_structure_metrics) {
    std::cout << "auprc=" << gca::format_double(report.auprc_lag) << "\n";
    std::cout << "auprc_summary=" << gca::format_double(report.auprc_summary) << "\n";
  }
  if (!a.out.empty()) write_text_file(a.out, gca::eval_report_to_json(report) + "\n");
  return 0;
}

int cmd_export(const EvalArgs& a, const CLI::App& sub) {
  const gca::Checkpoint ckpt = load_model_file(a.model_path);
  const EchoedWindowing w = windowing_from_checkpoint(ckpt);
  const gca::Tensor raw = load_eval_series(a, sub);
  const gca::Dataset data = eval_dataset(ckpt, w, raw, "all", a.domain_index, w.seed);
  gca::GcaModel model = gca::GcaModel::from_params(ckpt.config, ckpt.params);
  gca::export_structures(model, data, a.out, a.threshold);
  std::cout << "wrote structures to " << a.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Granger-causal structure learning and domain adaptation for time series"};
  app.require_subcommand(1);

  GenerateArgs g;
  CLI::App* gen = app.add_subcommand("generate", "Simulate multi-domain series with a shared causal structure");
  gen->add_option("--vars", g.vars, "number of variables");
  gen->add_option("--lag", g.lag, "true maximum lag");
  gen->add_option("--density", g.density, "edge probability per lag");
  gen->add_option("--weight-scale", g.weight_scale, "coefficient magnitude bound");
  gen->add_option("--length", g.length, "rows per domain after subsampling");
  gen->add_option("--burn-in", g.burn_in, "discarded warmup rows");
  gen->add_option("--domains", g.domains, "domain preset ids, e.g. 1,2")->delimiter(',')->required();
  gen->add_option("--seed", g.seed, "generator seed");
  gen->add_option("--out", g.out, "output directory")->required();
  gen->add_flag("--perturb-weights", g.perturb_weights, "jitter weights per domain");
  gen->add_flag("--phi-is-variance", g.phi_is_variance, "treat phi as a variance");
  gen->add_option("--phi", g.phi_override, "override noise phi for every domain");
  gen->add_option("--interval", g.interval_override, "override sampling interval for every domain");
  gen->add_option("--c", g.c_override, "override nonlinearity strength for every domain");

  TrainArgs t;
  CLI::App* tr = app.add_subcommand("train", "Fit a model on a source/target domain pair");
  tr->add_option("--config", t.config_path, "experiment config JSON");
  tr->add_option("--data", t.data_dir, "directory holding a generate manifest");
  tr->add_option("--source", t.source_csv, "source series CSV");
  tr->add_option("--target", t.target_csv, "target series CSV");
  tr->add_option("--ground-truth", t.ground_truth, "structure JSON (recorded, not used in training)");
  tr->add_option("--source-domain", t.source_domain, "manifest domain id for the source");
  tr->add_option("--target-domain", t.target_domain, "manifest domain id for the target");
  tr->add_flag("--synthetic", t.synthetic, "simulate the domain pair in process");
  tr->add_option("--vars", t.vars, "synthetic: number of variables");
  tr->add_option("--density", t.density, "synthetic: edge density");
  tr->add_option("--length", t.length, "synthetic: rows per domain");
  tr->add_option("--data-seed", t.data_seed, "synthetic: generator seed (defaults to --seed)");
  tr->add_option("--out", t.out, "run directory");
  tr->add_option("--domain-pair", t.domain_pair, "label recorded in reports, e.g. 1->2");
  tr->add_option("--stride", t.stride, "window stride");
  tr->add_option("--val-fraction", t.val_fraction, "validation share of windows");
  tr->add_option("--test-fraction", t.test_fraction, "test share of windows");
  tr->add_option("--mode", t.mode, "gca, gca_r, gca_e or baseline");
  tr->add_option("--seed", t.seed, "training seed");
  tr->add_option("--k", t.k, "model lag depth");
  tr->add_option("--window", t.window, "history rows per window");
  tr->add_option("--horizon", t.horizon, "forecast rows per window");
  tr->add_option("--target-variable", t.target_variable, "designated forecast variable");
  tr->add_option("--gamma", t.gamma, "alignment weight");
  tr->add_option("--delta", t.delta, "sparsity weight");
  tr->add_option("--lambda", t.lambda, "strengthen weight");
  tr->add_option("--lr", t.lr, "learning rate");
  tr->add_option("--batch-size", t.batch_size, "windows per step");
  tr->add_option("--epochs", t.epochs, "training epochs");
  tr->add_option("--labeled-fraction", t.labeled_fraction, "labeled share of target windows");
  tr->add_option("--temp-start", t.temp_start, "initial relaxation temperature");
  tr->add_option("--temp-end", t.temp_end, "final relaxation temperature");
  tr->add_option("--temp-decay", t.temp_decay, "per-epoch temperature factor (<=0: derive)");
  tr->add_option("--n-predict-steps", t.n_predict_steps, "teacher-forced positions per window");
  tr->add_flag("--include-unlabeled-recon", t.include_unlabeled_recon,
               "feed unlabeled target windows to the reconstruction term");
  tr->add_option("--checkpoint-every", t.checkpoint_every, "epochs between checkpoints (0: none)");
  tr->add_option("--d-alpha", t.d_alpha, "structure code width");
  tr->add_option("--d-beta", t.d_beta, "strength code width");
  tr->add_option("--enc-hidden", t.enc_hidden, "encoder hidden width");
  tr->add_option("--dec-hidden", t.dec_hidden, "decoder effect width");
  tr->add_option("--agg-hidden", t.agg_hidden, "aggregator hidden width");
  tr->add_option("--p0", t.p0, "prior edge probability");
  tr->add_option("--sigma-dec", t.sigma_dec, "decoder output std");

  EvalArgs e;
  CLI::App* ev = app.add_subcommand("eval", "Score a trained model on a series");
  ev->add_option("--model", e.model_path, "checkpoint JSON")->required();
  ev->add_option("--data", e.data_path, "series CSV or generate directory")->required();
  ev->add_option("--ground-truth", e.ground_truth, "structure JSON for AUPRC");
  ev->add_option("--out", e.out, "report JSON path");
  ev->add_option("--split", e.split, "train, val, test or all");
  ev->add_option("--domain", e.domain, "manifest domain id when --data is a directory");
  ev->add_option("--domain-index", e.domain_index, "model domain index of the series");
  ev->add_option("--target-variable", e.target_variable, "override the designated variable");

  EvalArgs x;
  CLI::App* ex = app.add_subcommand("export-structure", "Write inferred structures for a series");
  ex->add_option("--model", x.model_path, "checkpoint JSON")->required();
  ex->add_option("--data", x.data_path, "series CSV or generate directory")->required();
  ex->add_option("--threshold", x.threshold, "adjacency threshold");
  ex->add_option("--out", x.out, "output directory")->required();
  ex->add_option("--domain", x.domain, "manifest domain id when --data is a directory");
  ex->add_option("--domain-index", x.domain_index, "model domain index of the series");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& h) {
    return app.exit(h);
  } catch (const CLI::CallForAllHelp& h) {
    return app.exit(h);
  } catch (const CLI::ParseError& p) {
    app.exit(p);
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_generate(g, *gen);
    if (tr->parsed()) return cmd_train(t, *tr);
    if (ev->parsed()) return cmd_eval(e, *ev);
    if (ex->parsed()) return cmd_export(x, *ex);
  } catch (const gca::ConfigError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  } catch (const gca::DataError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 3;
  } catch (const gca::NumericError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 4;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
