// Command-line workbench: simulate cognitive-model datasets, train the
// sequence estimator, run likelihood-based baselines, evaluate predictions,
// and drive the consolidated benchmark suites.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "lasenet/baselines.hpp"
#include "lasenet/cogmodels.hpp"
#include "lasenet/dataset.hpp"
#include "lasenet/metrics.hpp"
#include "lasenet/network.hpp"

namespace fs = std::filesystem;
using namespace lasenet;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Output paths

std::string output_root() {
  const char* env = std::getenv("LASENET_OUTPUT_ROOT");
  return env != nullptr && *env != '\0' ? env : ".";
}

std::string resolve_out(const std::string& path) {
  fs::path p(path);
  if (p.is_absolute()) return p.string();
  return (fs::path(output_root()) / p).string();
}

void require_fresh_dir(const std::string& dir, bool force) {
  if (fs::exists(dir)) {
    if (!force)
      throw UsageError(dir + " already exists (pass --force to overwrite)");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

// ---------------------------------------------------------------------------
// CSV plumbing. %.10g keeps files compact while staying deterministic.

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header)
      : f_(path) {
    if (!f_) throw DataError(DataErrorCode::MissingFile, path + ": cannot open");
    for (size_t i = 0; i < header.size(); ++i)
      f_ << (i > 0 ? "," : "") << header[i];
    f_ << "\n";
  }
  void row(const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i)
      f_ << (i > 0 ? "," : "") << cells[i];
    f_ << "\n";
  }

 private:
  std::ofstream f_;
};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// ---------------------------------------------------------------------------
// Bundle helpers

// Rebuild the raw trial record from the encoded inputs; the encoding is
// invertible per model (action code, reward, stimulus block).
TrialSequence decode_trials(ModelId id, const AgentData& a) {
  TrialSequence y;
  y.model_id = id;
  y.n_trials = a.length;
  y.actions.resize(a.length);
  y.rewards.resize(a.length);
  y.stimulus = Matrix(a.length, stim_dim(id));
  for (int t = 0; t < a.length; ++t) {
    const double* row = a.y_enc.row(t);
    if (id == ModelId::Weber)
      y.actions[t] = static_cast<int>(std::lround(row[0] * 1.5 + 1.5));
    else
      y.actions[t] = row[0] > 0.0 ? 1 : 0;
    y.rewards[t] = row[1];
    for (int s = 0; s < y.stimulus.cols; ++s) y.stimulus(t, s) = row[2 + s];
  }
  return y;
}

PriorSpec prior_by_name(ModelId id, const std::string& name, int glmhmm_skew) {
  PriorSpec p = PriorSpec::default_for(id);
  p.glmhmm_skew = glmhmm_skew;
  if (name == "uniform") return p;
  double a = 0.0, b = 0.0;
  if (name == "beta55") a = 5.0, b = 5.0;
  else if (name == "beta15") a = 1.0, b = 5.0;
  else if (name == "beta51") a = 5.0, b = 1.0;
  else
    throw UsageError("unknown prior '" + name +
                     "' (valid: uniform, beta55, beta15, beta51)");
  for (auto& e : p.entries) e = {PriorEntry::Kind::Beta, a, b};
  return p;
}

DatasetBundle load_bundle(const std::string& dir) { return load(resolve_out(dir)); }

// ---------------------------------------------------------------------------
// Checkpoint directory = network checkpoint + the model it was trained for.

void save_model_tag(const std::string& dir, ModelId id, bool evidential) {
  std::ofstream f(dir + "/model.txt");
  f << model_name(id) << "\n" << (evidential ? 1 : 0) << "\n";
}

std::pair<ModelId, bool> load_model_tag(const std::string& dir) {
  std::ifstream f(dir + "/model.txt");
  if (!f)
    throw DataError(DataErrorCode::MissingFile, dir + "/model.txt: cannot open");
  std::string name;
  int evid = 0;
  f >> name >> evid;
  return {model_from_name(name), evid != 0};
}

// ---------------------------------------------------------------------------
// Shared prediction schema

std::vector<std::string> prediction_header(ModelId id, const NetworkConfig& cfg) {
  std::vector<std::string> h = {"agent", "trial"};
  const auto names = cont_channel_names(id);
  if (cfg.head_continuous)
    for (const auto& n : names) h.push_back(n);
  if (cfg.head_evidential)
    for (const auto& n : names) {
      h.push_back(n);
      h.push_back(n + "_aleatoric");
      h.push_back(n + "_epistemic");
    }
  if (cfg.head_discrete) {
    for (int k = 0; k < cfg.n_classes; ++k) h.push_back("p_" + std::to_string(k));
    h.push_back("label");
  }
  return h;
}

void write_prediction_rows(CsvWriter& csv, int agent, const NetworkConfig& cfg,
                           const InferResult& res, int T) {
  for (int t = 0; t < T; ++t) {
    std::vector<std::string> cells = {std::to_string(agent), std::to_string(t)};
    if (cfg.head_continuous)
      for (int c = 0; c < cfg.cont_dim; ++c) cells.push_back(fmt(res.cont(t, c)));
    if (cfg.head_evidential)
      for (int e = 0; e < cfg.evid_dim; ++e) {
        cells.push_back(fmt(res.evid(t, 4 * e)));
        cells.push_back(fmt(res.aleatoric(t, e)));
        cells.push_back(fmt(res.epistemic(t, e)));
      }
    if (cfg.head_discrete) {
      for (int k = 0; k < cfg.n_classes; ++k)
        cells.push_back(fmt(res.disc_probs(t, k)));
      cells.push_back(std::to_string(res.labels[t]));
    }
    csv.row(cells);
  }
}

// ---------------------------------------------------------------------------
// simulate

int cmd_simulate(const std::string& model, int agents, int trials,
                 std::uint64_t seed, const std::string& out,
                 const std::string& prior_name, int glmhmm_skew, bool force) {
  if (agents < 1) throw UsageError("--agents must be >= 1");
  if (trials < 1) throw UsageError("--trials must be >= 1");
  const ModelId id = model_from_name(model);
  const PriorSpec prior = prior_by_name(id, prior_name, glmhmm_skew);
  const std::string dir = resolve_out(out);
  require_fresh_dir(dir, force);
  const DatasetBundle b = generate(id, prior, agents, trials, seed);
  save(b, dir);
  std::cout << "simulated " << model << ": " << agents << " agents x " << trials
            << " trials (seed " << seed << ", prior " << prior_name << ") -> "
            << dir << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train

void write_train_report(const std::string& dir, const TrainReport& rep) {
  {
    CsvWriter csv(dir + "/train_report.csv", {"epoch", "train_loss", "val_loss"});
    for (size_t e = 0; e < rep.train_losses.size(); ++e)
      csv.row({std::to_string(e), fmt(rep.train_losses[e]), fmt(rep.val_losses[e])});
  }
  CsvWriter csv(dir + "/train_summary.csv",
                {"best_epoch", "n_epochs", "stop_reason"});
  csv.row({std::to_string(rep.best_epoch),
           std::to_string(rep.train_losses.size()), rep.stop_reason});
}

NetworkConfig make_train_config(ModelId id, int gru, bool evidential,
                                std::optional<int> max_epochs,
                                std::optional<int> patience,
                                std::optional<double> lr,
                                std::optional<int> batch,
                                std::optional<double> dropout_scale) {
  NetworkConfig cfg = NetworkConfig::for_model(id, gru, evidential);
  if (max_epochs) cfg.max_epochs = *max_epochs;
  if (patience) cfg.patience = *patience;
  if (lr) cfg.learning_rate = *lr;
  if (batch) cfg.batch_size = *batch;
  if (dropout_scale) {
    if (*dropout_scale < 0.0) throw UsageError("--dropout-scale must be >= 0");
    cfg.dropout_rnn *= *dropout_scale;
    cfg.dropout_mlp1 *= *dropout_scale;
    cfg.dropout_mlp2 *= *dropout_scale;
  }
  return cfg;
}

int cmd_train(const std::string& data, const std::string& out, int gru,
              bool evidential, std::uint64_t seed, std::optional<int> max_epochs,
              std::optional<int> patience, std::optional<double> lr,
              std::optional<int> batch, std::optional<double> dropout_scale,
              double val_fraction, int threads, bool force) {
  const DatasetBundle bundle = load_bundle(data);
  const std::string dir = resolve_out(out);
  require_fresh_dir(dir, force);
  const NetworkConfig cfg =
      make_train_config(bundle.model_id, gru, evidential, max_epochs, patience,
                        lr, batch, dropout_scale);
  const SplitResult parts = split(bundle, val_fraction, seed);
  const TrainResult res = train(cfg, parts.train, parts.val, seed, threads);
  save_checkpoint(res.weights, dir + "/checkpoint");
  save_model_tag(dir + "/checkpoint", bundle.model_id, evidential);
  write_train_report(dir, res.report);
  std::cout << "trained " << model_name(bundle.model_id) << ": best epoch "
            << res.report.best_epoch << " (" << res.report.stop_reason << ", "
            << fmt(res.report.wall_seconds) << " s) -> " << dir << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// infer

std::string find_checkpoint_dir(const std::string& path) {
  const std::string dir = resolve_out(path);
  if (fs::exists(fs::path(dir) / "manifest.json")) return dir;
  if (fs::exists(fs::path(dir) / "checkpoint" / "manifest.json"))
    return (fs::path(dir) / "checkpoint").string();
  throw DataError(DataErrorCode::MissingFile, dir + ": no checkpoint found");
}

int cmd_infer(const std::string& checkpoint, const std::string& data, bool csv_in,
              const std::string& csv_model, const std::string& out) {
  const std::string ckpt = find_checkpoint_dir(checkpoint);
  const NetworkWeights w = load_checkpoint(ckpt);
  const auto [model, evidential] = load_model_tag(ckpt);
  (void)evidential;

  std::vector<Matrix> xs;
  if (csv_in) {
    if (csv_model.empty())
      throw UsageError("--model is required when inferring from a CSV");
    const ModelId csv_id = model_from_name(csv_model);
    if (csv_id != model)
      throw DataError(DataErrorCode::DimMismatch,
                      "checkpoint was trained for " + model_name(model) +
                          ", not " + csv_model);
    const IngestedData in = ingest_csv(resolve_out(data), csv_id, {});
    xs = in.y_enc;
  } else {
    const DatasetBundle b = load_bundle(data);
    if (b.model_id != model)
      throw DataError(DataErrorCode::DimMismatch,
                      "checkpoint was trained for " + model_name(model) +
                          ", bundle holds " + model_name(b.model_id));
    for (const auto& a : b.agents) {
      Matrix x(a.length, a.y_enc.cols);
      for (int t = 0; t < a.length; ++t)
        for (int c = 0; c < x.cols; ++c) x(t, c) = a.y_enc(t, c);
      xs.push_back(std::move(x));
    }
  }

  const std::string path = resolve_out(out);
  fs::create_directories(fs::path(path).parent_path().empty()
                             ? "."
                             : fs::path(path).parent_path().string());
  CsvWriter csv(path, prediction_header(model, w.config));
  for (size_t i = 0; i < xs.size(); ++i) {
    const InferResult res = infer(w, xs[i], xs[i].rows);
    write_prediction_rows(csv, static_cast<int>(i), w.config, res, xs[i].rows);
  }
  std::cout << "inferred " << xs.size() << " agents -> " << path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// baseline

void check_baseline_pair(ModelId id, const std::string& method) {
  static const char* kPairs =
      "supported pairs: 4prl/metarl with mle|map, hrl/weber with pf, "
      "glmhmm with em";
  const bool tract = id == ModelId::FourParamRL || id == ModelId::MetaRL;
  if (method == "mle" || method == "map") {
    if (!tract) throw UsageError("method '" + method + "' needs a tractable model; " + kPairs);
  } else if (method == "pf") {
    if (id != ModelId::Hrl && id != ModelId::Weber)
      throw UsageError("method 'pf' needs hrl or weber; " + std::string(kPairs));
  } else if (method == "em") {
    if (id != ModelId::GlmHmm)
      throw UsageError("method 'em' needs glmhmm; " + std::string(kPairs));
  } else {
    throw UsageError("unknown method '" + method + "'; " + kPairs);
  }
}

int cmd_baseline(const std::string& data, const std::string& method,
                 const std::string& out, std::uint64_t seed, int restarts,
                 int particles, int states, bool known_params, bool force) {
  const DatasetBundle b = load_bundle(data);
  check_baseline_pair(b.model_id, method);
  const std::string dir = resolve_out(out);
  require_fresh_dir(dir, force);
  const auto names = cont_channel_names(b.model_id);
  const int K = discrete_cardinality(b.model_id);

  std::vector<std::string> header = {"agent", "trial"};
  for (const auto& n : names) header.push_back(n);
  if (K > 0) {
    for (int k = 0; k < K; ++k) header.push_back("p_" + std::to_string(k));
    header.push_back("label");
  }
  CsvWriter pred(dir + "/predictions.csv", header);

  if (method == "mle" || method == "map") {
    NelderMeadOptions opt;
    opt.restarts = restarts;
    const PriorSpec prior = PriorSpec::default_for(b.model_id);
    std::vector<std::string> fit_header = {"agent"};
    for (const auto& p : param_spec(b.model_id)) fit_header.push_back(p.name);
    fit_header.push_back("objective");
    fit_header.push_back("n_evals");
    CsvWriter fit_csv(dir + "/fit.csv", fit_header);
    for (size_t i = 0; i < b.agents.size(); ++i) {
      const TrialSequence y = decode_trials(b.model_id, b.agents[i]);
      Rng rng(seed, i + 1);
      const FitResult fit = method == "mle" ? fit_mle(b.model_id, y, rng, opt)
                                            : fit_map(b.model_id, y, prior, rng, opt);
      std::vector<std::string> cells = {std::to_string(i)};
      for (double v : fit.params.theta) cells.push_back(fmt(v));
      cells.push_back(fmt(fit.objective));
      cells.push_back(std::to_string(fit.n_evals));
      fit_csv.row(cells);

      const LatentSequence z = derive_latents(fit.params, y);
      Matrix post;
      if (b.model_id == ModelId::MetaRL)
        post = metarl_state_posterior(fit.params, y);
      for (int t = 0; t < y.n_trials; ++t) {
        std::vector<std::string> row = {std::to_string(i), std::to_string(t)};
        for (int c = 0; c < z.cont.cols; ++c) row.push_back(fmt(z.cont(t, c)));
        if (post.rows > 0) {
          int best = 0;
          for (int k = 0; k < post.cols; ++k) {
            row.push_back(fmt(post(t, k)));
            if (post(t, k) > post(t, best)) best = k;
          }
          row.push_back(std::to_string(best));
        }
        pred.row(row);
      }
    }
  } else if (method == "pf") {
    CsvWriter fit_csv(dir + "/fit.csv", {"agent", "loglik", "min_ess"});
    for (size_t i = 0; i < b.agents.size(); ++i) {
      if (!known_params)
        throw UsageError(
            "particle-filter baselines need --known-params (the model "
            "likelihood is intractable, so parameters come from the bundle)");
      const TrialSequence y = decode_trials(b.model_id, b.agents[i]);
      const ModelParams params{b.model_id, b.agents[i].theta};
      Rng rng(seed, i + 1);
      const PFResult res = b.model_id == ModelId::Hrl
                               ? particle_filter_hrl(params, y, particles, rng)
                               : particle_filter_weber(params, y, particles, rng);
      fit_csv.row({std::to_string(i), fmt(res.loglik), fmt(res.min_ess)});
      for (int t = 0; t < y.n_trials; ++t) {
        std::vector<std::string> row = {std::to_string(i), std::to_string(t)};
        for (int c = 0; c < res.cont.cols; ++c) row.push_back(fmt(res.cont(t, c)));
        for (int k = 0; k < res.post.cols; ++k) row.push_back(fmt(res.post(t, k)));
        row.push_back(std::to_string(res.map_state[t]));
        pred.row(row);
      }
    }
  } else {  // em
    std::vector<TrialSequence> ys;
    for (const auto& a : b.agents) ys.push_back(decode_trials(b.model_id, a));
    Rng rng(seed, 1);
    EmOptions opt;
    opt.restarts = restarts;
    const EmResult em = fit_glmhmm_em(ys, states, rng, opt);
    {
      CsvWriter fit_csv(dir + "/fit.csv",
                        {"row", "kind", "c0", "c1", "c2", "c3"});
      for (int i = 0; i < em.transition.rows; ++i) {
        std::vector<std::string> cells = {std::to_string(i), "transition"};
        for (int j = 0; j < em.transition.cols; ++j)
          cells.push_back(fmt(em.transition(i, j)));
        while (cells.size() < 6) cells.emplace_back();
        fit_csv.row(cells);
      }
      for (int i = 0; i < em.weights.rows; ++i) {
        std::vector<std::string> cells = {std::to_string(i), "weights"};
        for (int j = 0; j < 4; ++j) cells.push_back(fmt(em.weights(i, j)));
        fit_csv.row(cells);
      }
    }
    for (size_t i = 0; i < ys.size(); ++i) {
      const Matrix post = glmhmm_state_posterior(em.transition, em.weights, ys[i]);
      for (int t = 0; t < ys[i].n_trials; ++t) {
        std::vector<std::string> row = {std::to_string(i), std::to_string(t)};
        int best = 0;
        for (int k = 0; k < post.cols; ++k) {
          row.push_back(fmt(post(t, k)));
          if (post(t, k) > post(t, best)) best = k;
        }
        row.push_back(std::to_string(best));
        pred.row(row);
      }
    }
  }
  std::cout << "baseline " << method << " on " << b.agents.size()
            << " agents -> " << dir << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate

struct AgentPred {
  std::map<std::string, std::vector<double>> cont;  // channel -> per-trial
  std::vector<std::vector<double>> probs;           // per-trial class probs
  std::vector<int> labels;
};

int cmd_evaluate(const std::string& pred_path, const std::string& truth_dir,
                 const std::string& out) {
  const DatasetBundle truth = load_bundle(truth_dir);
  std::ifstream f(resolve_out(pred_path));
  if (!f)
    throw DataError(DataErrorCode::MissingFile, pred_path + ": cannot open");
  std::string line;
  if (!std::getline(f, line))
    throw DataError(DataErrorCode::BadCsv, pred_path + ": empty file");
  const auto header = split_csv_line(line);
  const auto col = [&](const std::string& name) -> int {
    for (size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  };
  const int c_agent = col("agent"), c_trial = col("trial"), c_label = col("label");
  if (c_agent < 0 || c_trial < 0)
    throw DataError(DataErrorCode::BadCsv,
                    pred_path + ": needs 'agent' and 'trial' columns");
  const auto names = cont_channel_names(truth.model_id);
  std::vector<int> c_cont;
  for (const auto& n : names) c_cont.push_back(col(n));
  std::vector<int> c_probs;
  for (int k = 0; col("p_" + std::to_string(k)) >= 0; ++k)
    c_probs.push_back(col("p_" + std::to_string(k)));

  std::map<int, AgentPred> preds;
  int row_no = 1;
  while (std::getline(f, line)) {
    ++row_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    try {
      const int agent = std::stoi(cells.at(c_agent));
      const int trial = std::stoi(cells.at(c_trial));
      AgentPred& ap = preds[agent];
      for (size_t ci = 0; ci < names.size(); ++ci) {
        if (c_cont[ci] < 0) continue;
        auto& v = ap.cont[names[ci]];
        if (static_cast<int>(v.size()) <= trial) v.resize(trial + 1, 0.0);
        v[trial] = std::stod(cells.at(c_cont[ci]));
      }
      if (!c_probs.empty()) {
        if (static_cast<int>(ap.probs.size()) <= trial)
          ap.probs.resize(trial + 1);
        auto& p = ap.probs[trial];
        p.clear();
        for (int c : c_probs) p.push_back(std::stod(cells.at(c)));
        if (c_label >= 0) {
          if (static_cast<int>(ap.labels.size()) <= trial)
            ap.labels.resize(trial + 1, 0);
          ap.labels[trial] = std::stoi(cells.at(c_label));
        }
      }
    } catch (const std::exception&) {
      throw DataError(DataErrorCode::BadCsv,
                      pred_path + ": malformed row " + std::to_string(row_no));
    }
  }

  std::vector<int> missing;
  for (size_t i = 0; i < truth.agents.size(); ++i)
    if (preds.find(static_cast<int>(i)) == preds.end())
      missing.push_back(static_cast<int>(i));
  if (!missing.empty()) {
    std::string msg = "predictions missing agents:";
    for (int m : missing) msg += " " + std::to_string(m);
    throw DataError(DataErrorCode::DimMismatch, msg);
  }

  const std::string path = resolve_out(out);
  CsvWriter csv(path, {"agent", "metric", "value"});
  std::map<std::string, std::vector<double>> agg;
  for (size_t i = 0; i < truth.agents.size(); ++i) {
    const AgentData& a = truth.agents[i];
    const AgentPred& ap = preds.at(static_cast<int>(i));
    std::map<std::string, double> vals;
    for (size_t ci = 0; ci < names.size(); ++ci) {
      const auto it = ap.cont.find(names[ci]);
      if (it == ap.cont.end() || a.z_cont.cols == 0) continue;
      std::vector<double> t(a.length), p(a.length);
      for (int k = 0; k < a.length; ++k) {
        t[k] = a.z_cont(k, static_cast<int>(ci));
        p[k] = k < static_cast<int>(it->second.size()) ? it->second[k] : 0.0;
      }
      vals["rmse_" + names[ci]] = metrics::rmse(p, t);
    }
    if (!ap.probs.empty() && !a.z_disc.empty()) {
      const int K = static_cast<int>(ap.probs.front().size());
      Matrix pm(a.length, K);
      std::vector<int> labels(a.length), z(a.length);
      for (int t = 0; t < a.length; ++t) {
        for (int k = 0; k < K; ++k) pm(t, k) = ap.probs[t][k];
        labels[t] = t < static_cast<int>(ap.labels.size())
                        ? ap.labels[t]
                        : metrics::argmax_label(ap.probs[t]);
        z[t] = a.z_disc[t];
      }
      vals["log_loss"] = metrics::log_loss(z, pm);
      vals["accuracy"] = metrics::accuracy(z, labels);
      vals["balanced_accuracy"] = metrics::balanced_accuracy(z, labels, K);
    }
    for (const auto& [m, v] : vals) {
      csv.row({std::to_string(i), m, fmt(v)});
      agg[m].push_back(v);
    }
  }
  for (const auto& [m, v] : agg) {
    double mean = 0.0, sd2 = 0.0;
    metrics::mean_sd2(v, mean, sd2);
    csv.row({"mean", m, fmt(mean)});
    csv.row({"2sd", m, fmt(sd2)});
  }
  std::cout << "evaluated " << truth.agents.size() << " agents -> " << path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// bench

struct BenchCtx {
  std::string dir;       // suite output directory
  int n_train = 2000;
  int n_test = 200;
  int trials = 300;
  int gru = 64;
  int epochs = 45;
  double lr = 1e-3;
  // Desk scale trades the full-size regularization and batch size for
  // convergence speed; paper scale restores the defaults.
  double dropout_scale = 0.2;
  int batch = 32;
  int threads = 1;
  std::uint64_t seed = 1;
  CsvWriter* summary = nullptr;
  std::string suite;
};

void summarize(BenchCtx& ctx, const std::string& experiment,
               const std::string& metric, const std::string& estimator,
               double value) {
  ctx.summary->row({ctx.suite, experiment, metric, estimator, fmt(value)});
}

std::uint64_t sub_seed(const BenchCtx& ctx, int k) {
  return ctx.seed * 1000003ULL + static_cast<std::uint64_t>(k);
}

NetworkWeights bench_train(BenchCtx& ctx, const DatasetBundle& data,
                           bool evidential, int salt) {
  NetworkConfig cfg = NetworkConfig::for_model(data.model_id, ctx.gru, evidential);
  cfg.max_epochs = ctx.epochs;
  cfg.patience = std::max(ctx.epochs, cfg.patience);
  cfg.learning_rate = ctx.lr;
  cfg.dropout_rnn *= ctx.dropout_scale;
  cfg.dropout_mlp1 *= ctx.dropout_scale;
  cfg.dropout_mlp2 *= ctx.dropout_scale;
  cfg.batch_size = ctx.batch;
  const SplitResult parts = split(data, 0.10, sub_seed(ctx, salt));
  const TrainResult res =
      train(cfg, parts.train, parts.val, sub_seed(ctx, salt + 1), ctx.threads);
  std::cout << "  trained " << model_name(data.model_id) << " (best epoch "
            << res.report.best_epoch << ", " << fmt(res.report.wall_seconds)
            << " s)\n";
  return res.weights;
}

struct EvalAccum {
  std::vector<double> rmse, log_loss, accuracy, balacc;
  void add_cont(double v) { rmse.push_back(v); }
};

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Metrics of network predictions against a truth bundle.
EvalAccum eval_network(const NetworkWeights& w, const DatasetBundle& test) {
  EvalAccum acc;
  const int K = test.n_classes;
  for (const auto& a : test.agents) {
    const InferResult res = infer(w, a.y_enc, a.length);
    if (w.config.head_continuous && a.z_cont.cols > 0) {
      std::vector<double> t(a.length), p(a.length);
      for (int k = 0; k < a.length; ++k) {
        t[k] = a.z_cont(k, 0);
        p[k] = res.cont(k, 0);
      }
      acc.add_cont(metrics::rmse(p, t));
    }
    if (w.config.head_evidential && a.z_cont.cols > 0) {
      std::vector<double> t(a.length), p(a.length);
      for (int k = 0; k < a.length; ++k) {
        t[k] = a.z_cont(k, 0);
        p[k] = res.evid(k, 0);
      }
      acc.add_cont(metrics::rmse(p, t));
    }
    if (w.config.head_discrete && !a.z_disc.empty()) {
      Matrix pm(a.length, K);
      std::vector<int> z(a.length), lab(a.length);
      for (int t = 0; t < a.length; ++t) {
        for (int k = 0; k < K; ++k) pm(t, k) = res.disc_probs(t, k);
        z[t] = a.z_disc[t];
        lab[t] = res.labels[t];
      }
      acc.log_loss.push_back(metrics::log_loss(z, pm));
      acc.accuracy.push_back(metrics::accuracy(z, lab));
      acc.balacc.push_back(metrics::balanced_accuracy(z, lab, K));
    }
  }
  return acc;
}

void emit_discrete(BenchCtx& ctx, const std::string& exp,
                   const std::string& estimator, const EvalAccum& acc) {
  summarize(ctx, exp, "state_log_loss", estimator, mean_of(acc.log_loss));
  summarize(ctx, exp, "state_accuracy", estimator, mean_of(acc.accuracy));
  summarize(ctx, exp, "state_balanced_accuracy", estimator, mean_of(acc.balacc));
}

void per_agent_csv(const std::string& path, const std::string& estimator_a,
                   const EvalAccum& a, const std::string& estimator_b,
                   const EvalAccum& b) {
  CsvWriter csv(path, {"agent", "estimator", "metric", "value"});
  auto dump = [&](const std::string& est, const EvalAccum& acc) {
    for (size_t i = 0; i < acc.rmse.size(); ++i)
      csv.row({std::to_string(i), est, "rmse", fmt(acc.rmse[i])});
    for (size_t i = 0; i < acc.log_loss.size(); ++i)
      csv.row({std::to_string(i), est, "state_log_loss", fmt(acc.log_loss[i])});
    for (size_t i = 0; i < acc.accuracy.size(); ++i)
      csv.row({std::to_string(i), est, "state_accuracy", fmt(acc.accuracy[i])});
    for (size_t i = 0; i < acc.balacc.size(); ++i)
      csv.row({std::to_string(i), est, "state_balanced_accuracy",
               fmt(acc.balacc[i])});
  };
  dump(estimator_a, a);
  if (!estimator_b.empty()) dump(estimator_b, b);
}

// MLE baseline metrics for the two tractable models.
EvalAccum eval_mle(const DatasetBundle& test, std::uint64_t seed) {
  EvalAccum acc;
  const int K = test.n_classes;
  for (size_t i = 0; i < test.agents.size(); ++i) {
    const AgentData& a = test.agents[i];
    const TrialSequence y = decode_trials(test.model_id, a);
    Rng rng(seed, i + 1);
    const FitResult fit = fit_mle(test.model_id, y, rng);
    const LatentSequence z = derive_latents(fit.params, y);
    std::vector<double> t(a.length), p(a.length);
    for (int k = 0; k < a.length; ++k) {
      t[k] = a.z_cont(k, 0);
      p[k] = z.cont(k, 0);
    }
    acc.add_cont(metrics::rmse(p, t));
    if (test.model_id == ModelId::MetaRL && !a.z_disc.empty()) {
      const Matrix post = metarl_state_posterior(fit.params, y);
      std::vector<int> zt(a.length), lab(a.length);
      for (int tt = 0; tt < a.length; ++tt) {
        zt[tt] = a.z_disc[tt];
        lab[tt] = post(tt, 1) >= post(tt, 0) ? 1 : 0;
      }
      acc.log_loss.push_back(metrics::log_loss(zt, post));
      acc.accuracy.push_back(metrics::accuracy(zt, lab));
      acc.balacc.push_back(metrics::balanced_accuracy(zt, lab, K));
    }
  }
  return acc;
}

void bench_tractable(BenchCtx& ctx) {
  int salt = 0;
  for (ModelId id : {ModelId::FourParamRL, ModelId::MetaRL}) {
    const std::string name = model_name(id);
    std::cout << "tractable/" << name << "\n";
    const PriorSpec prior = PriorSpec::default_for(id);
    const DatasetBundle train_data =
        generate(id, prior, ctx.n_train, ctx.trials, sub_seed(ctx, salt + 10));
    const DatasetBundle test_data =
        generate(id, prior, ctx.n_test, ctx.trials, sub_seed(ctx, salt + 11));
    const NetworkWeights w = bench_train(ctx, train_data, false, salt + 12);
    const EvalAccum net = eval_network(w, test_data);
    const EvalAccum mle = eval_mle(test_data, sub_seed(ctx, salt + 14));
    summarize(ctx, name, "rmse_chosen_q", "lasenet", mean_of(net.rmse));
    summarize(ctx, name, "rmse_chosen_q", "mle", mean_of(mle.rmse));
    if (id == ModelId::MetaRL) {
      emit_discrete(ctx, name, "lasenet", net);
      emit_discrete(ctx, name, "mle", mle);
    }
    per_agent_csv(ctx.dir + "/" + name + "_per_agent.csv", "lasenet", net, "mle",
                  mle);
    salt += 20;
  }
}

EvalAccum eval_pf(const DatasetBundle& test, int particles, std::uint64_t seed) {
  EvalAccum acc;
  const int K = test.n_classes;
  for (size_t i = 0; i < test.agents.size(); ++i) {
    const AgentData& a = test.agents[i];
    const TrialSequence y = decode_trials(test.model_id, a);
    const ModelParams params{test.model_id, a.theta};
    Rng rng(seed, i + 1);
    const PFResult res = test.model_id == ModelId::Hrl
                             ? particle_filter_hrl(params, y, particles, rng)
                             : particle_filter_weber(params, y, particles, rng);
    std::vector<double> t(a.length), p(a.length);
    for (int k = 0; k < a.length; ++k) {
      t[k] = a.z_cont(k, 0);
      p[k] = res.cont(k, 0);
    }
    acc.add_cont(metrics::rmse(p, t));
    std::vector<int> z(a.length);
    for (int tt = 0; tt < a.length; ++tt) z[tt] = a.z_disc[tt];
    acc.log_loss.push_back(metrics::log_loss(z, res.post));
    acc.accuracy.push_back(metrics::accuracy(z, res.map_state));
    acc.balacc.push_back(metrics::balanced_accuracy(z, res.map_state, K));
  }
  return acc;
}

EvalAccum eval_em(const DatasetBundle& test, int states, std::uint64_t seed) {
  EvalAccum acc;
  std::vector<TrialSequence> ys;
  for (const auto& a : test.agents) ys.push_back(decode_trials(test.model_id, a));
  Rng rng(seed, 1);
  const EmResult em = fit_glmhmm_em(ys, states, rng);
  // EM state labels are only identified up to permutation; align to truth by
  // the best label permutation on pooled accuracy.
  std::vector<int> perm(states), best_perm(states);
  std::iota(perm.begin(), perm.end(), 0);
  best_perm = perm;
  long best_hits = -1;
  std::vector<Matrix> posts;
  for (const auto& y : ys)
    posts.push_back(glmhmm_state_posterior(em.transition, em.weights, y));
  do {
    long hits = 0;
    for (size_t i = 0; i < ys.size(); ++i) {
      const AgentData& a = test.agents[i];
      for (int t = 0; t < a.length; ++t) {
        int best = 0;
        for (int k = 0; k < states; ++k)
          if (posts[i](t, k) > posts[i](t, best)) best = k;
        if (perm[best] == a.z_disc[t]) ++hits;
      }
    }
    if (hits > best_hits) {
      best_hits = hits;
      best_perm = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  for (size_t i = 0; i < ys.size(); ++i) {
    const AgentData& a = test.agents[i];
    Matrix pm(a.length, states);
    std::vector<int> z(a.length), lab(a.length);
    for (int t = 0; t < a.length; ++t) {
      for (int k = 0; k < states; ++k) pm(t, best_perm[k]) = posts[i](t, k);
      int best = 0;
      for (int k = 0; k < states; ++k)
        if (posts[i](t, k) > posts[i](t, best)) best = k;
      lab[t] = best_perm[best];
      z[t] = a.z_disc[t];
    }
    acc.log_loss.push_back(metrics::log_loss(z, pm));
    acc.accuracy.push_back(metrics::accuracy(z, lab));
    acc.balacc.push_back(metrics::balanced_accuracy(z, lab, states));
  }
  return acc;
}

void bench_intractable(BenchCtx& ctx) {
  // HRL and Weber: network vs particle filter with true parameters.
  int salt = 100;
  for (ModelId id : {ModelId::Hrl, ModelId::Weber}) {
    const std::string name = model_name(id);
    std::cout << "intractable/" << name << "\n";
    const PriorSpec prior = PriorSpec::default_for(id);
    const DatasetBundle train_data =
        generate(id, prior, ctx.n_train, ctx.trials, sub_seed(ctx, salt));
    const DatasetBundle test_data =
        generate(id, prior, ctx.n_test, ctx.trials, sub_seed(ctx, salt + 1));
    const NetworkWeights w = bench_train(ctx, train_data, false, salt + 2);
    const EvalAccum net = eval_network(w, test_data);
    const int particles = id == ModelId::Hrl ? 1024 : 512;
    const EvalAccum pf = eval_pf(test_data, particles, sub_seed(ctx, salt + 4));
    const std::string rmse_name =
        id == ModelId::Hrl ? "rmse_chosen_q" : "rmse_belief_distance";
    const std::string acc_name =
        id == ModelId::Hrl ? "cue_accuracy" : "mapping_accuracy";
    summarize(ctx, name, rmse_name, "lasenet", mean_of(net.rmse));
    summarize(ctx, name, rmse_name, "pf", mean_of(pf.rmse));
    summarize(ctx, name, acc_name, "lasenet", mean_of(net.accuracy));
    summarize(ctx, name, acc_name, "pf", mean_of(pf.accuracy));
    summarize(ctx, name, "state_log_loss", "lasenet", mean_of(net.log_loss));
    summarize(ctx, name, "state_log_loss", "pf", mean_of(pf.log_loss));
    per_agent_csv(ctx.dir + "/" + name + "_per_agent.csv", "lasenet", net, "pf",
                  pf);
    salt += 20;
  }
  // GLM-HMM: network vs EM.
  {
    std::cout << "intractable/glmhmm\n";
    const PriorSpec prior = PriorSpec::default_for(ModelId::GlmHmm);
    const DatasetBundle train_data = generate(ModelId::GlmHmm, prior, ctx.n_train,
                                              ctx.trials, sub_seed(ctx, 150));
    const DatasetBundle test_data = generate(ModelId::GlmHmm, prior, ctx.n_test,
                                             ctx.trials, sub_seed(ctx, 151));
    const NetworkWeights w = bench_train(ctx, train_data, false, 152);
    const EvalAccum net = eval_network(w, test_data);
    const EvalAccum em = eval_em(test_data, 3, sub_seed(ctx, 154));
    emit_discrete(ctx, "glmhmm", "lasenet", net);
    emit_discrete(ctx, "glmhmm", "em", em);
    per_agent_csv(ctx.dir + "/glmhmm_per_agent.csv", "lasenet", net, "em", em);
  }
}

void bench_prior_misspec(BenchCtx& ctx) {
  // Two 4-P RL networks (uniform vs Beta(5,5) training prior), each evaluated
  // on the four test priors.
  const ModelId id = ModelId::FourParamRL;
  const std::vector<std::string> test_priors = {"uniform", "beta55", "beta15",
                                                "beta51"};
  std::vector<DatasetBundle> tests;
  for (size_t i = 0; i < test_priors.size(); ++i)
    tests.push_back(generate(id, prior_by_name(id, test_priors[i], 0), ctx.n_test,
                             ctx.trials, sub_seed(ctx, 200 + static_cast<int>(i))));
  int salt = 220;
  for (const std::string& train_prior : {std::string("uniform"), std::string("beta55")}) {
    std::cout << "prior-misspec/4prl train prior " << train_prior << "\n";
    const DatasetBundle train_data =
        generate(id, prior_by_name(id, train_prior, 0), ctx.n_train, ctx.trials,
                 sub_seed(ctx, salt));
    const NetworkWeights w = bench_train(ctx, train_data, false, salt + 1);
    std::vector<double> rmses;
    for (size_t i = 0; i < tests.size(); ++i) {
      const EvalAccum net = eval_network(w, tests[i]);
      const double r = mean_of(net.rmse);
      rmses.push_back(r);
      summarize(ctx, "train_" + train_prior + "_test_" + test_priors[i],
                "rmse_chosen_q", "lasenet", r);
    }
    summarize(ctx, "train_" + train_prior, "mean_rmse_chosen_q", "lasenet",
              mean_of(rmses));
    salt += 10;
  }
  // GLM-HMM transition skewness: train on the neutral family, test across
  // skew levels.
  {
    std::cout << "prior-misspec/glmhmm skew\n";
    PriorSpec p0 = PriorSpec::default_for(ModelId::GlmHmm);
    const DatasetBundle train_data = generate(ModelId::GlmHmm, p0, ctx.n_train,
                                              ctx.trials, sub_seed(ctx, 240));
    const NetworkWeights w = bench_train(ctx, train_data, false, 241);
    for (int skew : {-1, 0, 1}) {
      PriorSpec pt = PriorSpec::default_for(ModelId::GlmHmm);
      pt.glmhmm_skew = skew;
      const DatasetBundle test_data = generate(
          ModelId::GlmHmm, pt, ctx.n_test, ctx.trials, sub_seed(ctx, 243 + skew));
      const EvalAccum net = eval_network(w, test_data);
      summarize(ctx, "glmhmm_skew_" + std::to_string(skew), "state_accuracy",
                "lasenet", mean_of(net.accuracy));
      summarize(ctx, "glmhmm_skew_" + std::to_string(skew), "state_log_loss",
                "lasenet", mean_of(net.log_loss));
    }
  }
}

// 4-state GLM-HMM data: the canonical three states plus a win-stay state
// whose policy follows the previous outcome.
DatasetBundle generate_glmhmm4(int n_agents, int n_trials, std::uint64_t seed) {
  const int K = 4;
  Matrix A(K, K);
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j) A(i, j) = i == j ? 0.90 : 0.10 / (K - 1);
  const Matrix base = glmhmm_weight_means();
  Matrix W(K, 4);
  for (int j = 0; j < 4; ++j) {
    for (int i = 0; i < 3; ++i) W(i, j) = base(i, j);
    W(3, j) = 0.0;
  }
  W(3, 3) = 6.0;  // win-stay/lose-switch regressor dominates state 3

  DatasetBundle b;
  b.model_id = ModelId::GlmHmm;
  b.n_trials = n_trials;
  b.input_dim = input_dim(ModelId::GlmHmm);
  b.n_cont = 0;
  b.n_classes = K;
  b.seed = seed;
  b.prior_desc = "glmhmm4-win-stay";
  b.agents.resize(n_agents);
  for (int i = 0; i < n_agents; ++i) {
    Rng rng(seed, static_cast<std::uint64_t>(i) + 1);
    const SimResult sim = simulate_glmhmm_k(A, W, n_trials, rng);
    AgentData& a = b.agents[i];
    a.y_enc = encode_input(sim.y);
    a.z_disc = sim.z.discrete;
    a.length = n_trials;
  }
  return b;
}

void bench_model_misspec(BenchCtx& ctx) {
  std::cout << "model-misspec/glmhmm4\n";
  const PriorSpec prior = PriorSpec::default_for(ModelId::GlmHmm);
  const DatasetBundle train_data = generate(ModelId::GlmHmm, prior, ctx.n_train,
                                            ctx.trials, sub_seed(ctx, 300));
  const NetworkWeights w = bench_train(ctx, train_data, false, 301);
  const DatasetBundle test4 =
      generate_glmhmm4(ctx.n_test, ctx.trials, sub_seed(ctx, 303));

  // The 3-class network cannot name the win-stay state; score the shared
  // states separately and count state-3 trials as errors overall.
  long shared_hits = 0, shared_n = 0, overall_hits = 0, overall_n = 0;
  CsvWriter csv(ctx.dir + "/glmhmm4_per_agent.csv",
                {"agent", "metric", "value"});
  for (size_t i = 0; i < test4.agents.size(); ++i) {
    const AgentData& a = test4.agents[i];
    const InferResult res = infer(w, a.y_enc, a.length);
    long sh = 0, sn = 0, oh = 0;
    for (int t = 0; t < a.length; ++t) {
      const bool hit = a.z_disc[t] < 3 && res.labels[t] == a.z_disc[t];
      if (a.z_disc[t] < 3) {
        ++sn;
        if (hit) ++sh;
      }
      if (hit) ++oh;
    }
    csv.row({std::to_string(i), "shared_state_accuracy",
             fmt(sn > 0 ? static_cast<double>(sh) / sn : 0.0)});
    csv.row({std::to_string(i), "overall_accuracy",
             fmt(static_cast<double>(oh) / a.length)});
    shared_hits += sh;
    shared_n += sn;
    overall_hits += oh;
    overall_n += a.length;
  }
  summarize(ctx, "glmhmm4", "shared_state_accuracy", "lasenet",
            shared_n > 0 ? static_cast<double>(shared_hits) / shared_n : 0.0);
  summarize(ctx, "glmhmm4", "overall_accuracy", "lasenet",
            static_cast<double>(overall_hits) / overall_n);
  summarize(ctx, "glmhmm4", "novel_state_share", "truth",
            1.0 - static_cast<double>(shared_n) / overall_n);
}

void bench_trial_length(BenchCtx& ctx) {
  const ModelId id = ModelId::FourParamRL;
  const PriorSpec prior = PriorSpec::default_for(id);
  const std::vector<int> test_lengths = {100, 300, 500, 720};
  std::vector<DatasetBundle> tests;
  for (size_t i = 0; i < test_lengths.size(); ++i)
    tests.push_back(generate(id, prior, ctx.n_test, test_lengths[i],
                             sub_seed(ctx, 400 + static_cast<int>(i))));
  int salt = 420;
  for (int train_len : {300, 720}) {
    std::cout << "trial-length/train " << train_len << "\n";
    const DatasetBundle train_data =
        generate(id, prior, ctx.n_train, train_len, sub_seed(ctx, salt));
    const NetworkWeights w = bench_train(ctx, train_data, false, salt + 1);
    for (size_t i = 0; i < tests.size(); ++i) {
      const EvalAccum net = eval_network(w, tests[i]);
      summarize(ctx,
                "train_" + std::to_string(train_len) + "_test_" +
                    std::to_string(test_lengths[i]),
                "rmse_chosen_q", "lasenet", mean_of(net.rmse));
    }
    salt += 10;
  }
}

int cmd_bench(const std::string& suite, const std::string& scale,
              std::uint64_t seed, int threads, const std::string& out,
              std::optional<int> epochs, std::optional<int> train_agents,
              std::optional<int> test_agents, std::optional<int> trials,
              std::optional<int> gru, bool force) {
  static const std::vector<std::string> kSuites = {
      "tractable", "intractable", "prior-misspec", "model-misspec",
      "trial-length"};
  if (std::find(kSuites.begin(), kSuites.end(), suite) == kSuites.end()) {
    std::string msg = "unknown suite '" + suite + "'; valid suites:";
    for (const auto& s : kSuites) msg += " " + s;
    throw UsageError(msg);
  }
  if (scale != "desk" && scale != "paper")
    throw UsageError("--scale must be desk or paper");

  BenchCtx ctx;
  ctx.suite = suite;
  ctx.seed = seed;
  ctx.threads = threads;
  if (scale == "paper") {
    ctx.n_train = 9000;
    ctx.n_test = 1000;
    ctx.trials = 720;
    ctx.gru = 128;
    ctx.epochs = 600;
    ctx.lr = 3e-4;
    ctx.dropout_scale = 1.0;
    ctx.batch = 128;
  }
  if (epochs) ctx.epochs = *epochs;
  if (train_agents) ctx.n_train = *train_agents;
  if (test_agents) ctx.n_test = *test_agents;
  if (trials) ctx.trials = *trials;
  if (gru) ctx.gru = *gru;

  ctx.dir = resolve_out(out.empty() ? "bench_" + suite : out);
  require_fresh_dir(ctx.dir, force);
  CsvWriter summary(ctx.dir + "/summary.csv",
                    {"suite", "experiment", "metric", "estimator", "value"});
  ctx.summary = &summary;

  if (suite == "tractable") bench_tractable(ctx);
  else if (suite == "intractable") bench_intractable(ctx);
  else if (suite == "prior-misspec") bench_prior_misspec(ctx);
  else if (suite == "model-misspec") bench_model_misspec(ctx);
  else bench_trial_length(ctx);

  std::cout << "bench " << suite << " complete -> " << ctx.dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent-sequence estimation workbench"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Config file; command-line flags win");

  // simulate -----------------------------------------------------------------
  auto* sim = app.add_subcommand("simulate", "Generate a simulated dataset");
  std::string sim_model, sim_out, sim_prior = "uniform";
  int sim_agents = 0, sim_trials = 0, sim_skew = 0;
  std::uint64_t sim_seed = 1;
  bool sim_force = false;
  sim->add_option("--model", sim_model, "Model name")->required();
  sim->add_option("--agents", sim_agents, "Number of agents")->required();
  sim->add_option("--trials", sim_trials, "Trials per agent")->required();
  sim->add_option("--seed", sim_seed, "RNG seed");
  sim->add_option("--out", sim_out, "Output directory")->required();
  sim->add_option("--prior", sim_prior, "uniform|beta55|beta15|beta51");
  sim->add_option("--glmhmm-skew", sim_skew, "Transition skewness -1|0|1");
  sim->add_flag("--force", sim_force, "Overwrite existing output");

  // train --------------------------------------------------------------------
  auto* tr = app.add_subcommand("train", "Train the sequence estimator");
  std::string tr_data, tr_out;
  int tr_gru = 64, tr_threads = 1;
  std::uint64_t tr_seed = 1;
  bool tr_evid = false, tr_force = false;
  double tr_valfrac = 0.10;
  std::optional<int> tr_epochs, tr_patience, tr_batch;
  std::optional<double> tr_lr, tr_dropout;
  tr->add_option("--data", tr_data, "Dataset directory")->required();
  tr->add_option("--out", tr_out, "Output directory")->required();
  tr->add_option("--gru", tr_gru, "GRU units per direction");
  tr->add_flag("--evidential", tr_evid, "Evidential continuous head");
  tr->add_option("--seed", tr_seed, "RNG seed");
  tr->add_option("--max-epochs", tr_epochs, "Epoch cap");
  tr->add_option("--patience", tr_patience, "Early-stop patience");
  tr->add_option("--lr", tr_lr, "Learning rate");
  tr->add_option("--batch", tr_batch, "Batch size");
  tr->add_option("--dropout-scale", tr_dropout,
                 "Multiplier on the default dropout rates");
  tr->add_option("--val-fraction", tr_valfrac, "Validation fraction");
  tr->add_option("--threads", tr_threads, "Worker threads");
  tr->add_flag("--force", tr_force, "Overwrite existing output");

  // infer --------------------------------------------------------------------
  auto* in = app.add_subcommand("infer", "Predict latents for a dataset");
  std::string in_ckpt, in_data, in_out, in_model;
  bool in_csv = false;
  in->add_option("--checkpoint", in_ckpt, "Checkpoint (or train output) dir")
      ->required();
  in->add_option("--data", in_data, "Dataset directory or behavioral CSV")
      ->required();
  in->add_flag("--csv", in_csv, "Treat --data as a behavioral CSV");
  in->add_option("--model", in_model, "Model name for CSV ingestion");
  in->add_option("--out", in_out, "Predictions CSV path")->required();

  // baseline -----------------------------------------------------------------
  auto* ba = app.add_subcommand("baseline", "Likelihood-based estimators");
  std::string ba_data, ba_method, ba_out;
  std::uint64_t ba_seed = 1;
  int ba_restarts = 10, ba_particles = 1024, ba_states = 3;
  bool ba_known = false, ba_force = false;
  ba->add_option("--data", ba_data, "Dataset directory")->required();
  ba->add_option("--method", ba_method, "mle|map|pf|em")->required();
  ba->add_option("--out", ba_out, "Output directory")->required();
  ba->add_option("--seed", ba_seed, "RNG seed");
  ba->add_option("--restarts", ba_restarts, "Optimizer/EM restarts");
  ba->add_option("--particles", ba_particles, "Particle count");
  ba->add_option("--states", ba_states, "GLM-HMM state count");
  ba->add_flag("--known-params", ba_known, "Use true parameters from the bundle");
  ba->add_flag("--force", ba_force, "Overwrite existing output");

  // evaluate -----------------------------------------------------------------
  auto* ev = app.add_subcommand("evaluate", "Score predictions against truth");
  std::string ev_pred, ev_truth, ev_out;
  ev->add_option("--pred", ev_pred, "Predictions CSV")->required();
  ev->add_option("--truth", ev_truth, "Truth bundle directory")->required();
  ev->add_option("--out", ev_out, "Evaluation CSV path")->required();

  // bench --------------------------------------------------------------------
  auto* be = app.add_subcommand("bench", "Consolidated benchmark suites");
  std::string be_suite, be_scale = "desk", be_out;
  std::uint64_t be_seed = 1;
  int be_threads = 1;
  bool be_force = false;
  std::optional<int> be_epochs, be_train, be_test, be_trials, be_gru;
  be->add_option("suite", be_suite,
                 "tractable|intractable|prior-misspec|model-misspec|trial-length")
      ->required();
  be->add_option("--scale", be_scale, "desk|paper");
  be->add_option("--seed", be_seed, "RNG seed");
  be->add_option("--threads", be_threads, "Worker threads");
  be->add_option("--out", be_out, "Output directory (default bench_<suite>)");
  be->add_option("--epochs", be_epochs, "Override training epochs");
  be->add_option("--train-agents", be_train, "Override training agents");
  be->add_option("--test-agents", be_test, "Override test agents");
  be->add_option("--trials", be_trials, "Override trials per agent");
  be->add_option("--gru", be_gru, "Override GRU units");
  be->add_flag("--force", be_force, "Overwrite existing output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  try {
#ifdef _OPENMP
    int threads = 0;
    if (sim->parsed()) threads = 0;
    if (tr->parsed()) threads = tr_threads;
    if (be->parsed()) threads = be_threads;
    if (threads > 0) omp_set_num_threads(threads);
#endif
    if (sim->parsed())
      return cmd_simulate(sim_model, sim_agents, sim_trials, sim_seed, sim_out,
                          sim_prior, sim_skew, sim_force);
    if (tr->parsed())
      return cmd_train(tr_data, tr_out, tr_gru, tr_evid, tr_seed, tr_epochs,
                       tr_patience, tr_lr, tr_batch, tr_dropout, tr_valfrac,
                       tr_threads, tr_force);
    if (in->parsed())
      return cmd_infer(in_ckpt, in_data, in_csv, in_model, in_out);
    if (ba->parsed())
      return cmd_baseline(ba_data, ba_method, ba_out, ba_seed, ba_restarts,
                          ba_particles, ba_states, ba_known, ba_force);
    if (ev->parsed()) return cmd_evaluate(ev_pred, ev_truth, ev_out);
    if (be->parsed())
      return cmd_bench(be_suite, be_scale, be_seed, be_threads, be_out,
                       be_epochs, be_train, be_test, be_trials, be_gru,
                       be_force);
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const CLI::Error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumeric;
  }
}
