#include "lasenet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace lasenet {

// ---------------------------------------------------------------------------
// Priors

PriorSpec PriorSpec::default_for(ModelId id) {
  PriorSpec p;
  using K = PriorEntry::Kind;
  switch (id) {
    case ModelId::FourParamRL:
      p.entries = {{K::Uniform, 0.0, 1.0},
                   {K::Uniform, 0.0, 1.0},
                   {K::Uniform, 0.0, 10.0},
                   {K::Uniform, 0.0, 1.0}};
      break;
    case ModelId::MetaRL:
      p.entries.assign(9, {K::Uniform, 0.0, 1.0});
      p.entries[2] = {K::Uniform, 0.0, 20.0};  // beta
      break;
    case ModelId::Hrl:
      p.entries = {{K::Uniform, 0.4, 0.7}, {K::Uniform, 1.0, 10.0}};
      break;
    case ModelId::Weber:
      p.entries = {{K::Normal, 0.05, 0.003},
                   {K::Normal, 1.22, 0.06},
                   {K::Normal, 5.0, 0.023}};
      break;
    case ModelId::GlmHmm:
      p.glmhmm_skew = 0;
      p.glmhmm_sigma = 0.5;
      p.glmhmm_stay = 0.90;
      break;
  }
  return p;
}

Matrix glmhmm_transition_family(int skew, double stay) {
  // Preference vector tilts off-diagonal mass; skew 0 keeps the chain
  // symmetric, hence uniform occupancy.
  const double pref[3] = {1.0, 0.0, -1.0};
  Matrix a(3, 3);
  for (int j = 0; j < 3; ++j) {
    double wsum = 0.0;
    for (int k = 0; k < 3; ++k)
      if (k != j) wsum += std::exp(skew * pref[k]);
    for (int k = 0; k < 3; ++k)
      a(j, k) = (k == j) ? stay : (1.0 - stay) * std::exp(skew * pref[k]) / wsum;
    double row = 0.0;
    for (int k = 0; k < 3; ++k) row += a(j, k);
    for (int k = 0; k < 3; ++k) a(j, k) /= row;
  }
  return a;
}

Matrix glmhmm_weight_means() {
  Matrix w(3, 4);
  // engaged: strong stimulus weight; biased states: strong bias of either sign
  const double means[3][4] = {{6.0, 0.0, 0.0, 0.0},
                              {0.5, -3.0, 0.0, 0.0},
                              {0.5, 3.0, 0.0, 0.0}};
  for (int k = 0; k < 3; ++k)
    for (int f = 0; f < 4; ++f) w(k, f) = means[k][f];
  return w;
}

std::vector<double> PriorSpec::sample(ModelId id, Rng& rng) const {
  if (id == ModelId::GlmHmm) {
    std::vector<double> theta(21);
    const Matrix a = glmhmm_transition_family(glmhmm_skew, glmhmm_stay);
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) theta[j * 3 + k] = a(j, k);
    const Matrix means = glmhmm_weight_means();
    for (int k = 0; k < 3; ++k)
      for (int f = 0; f < 4; ++f)
        theta[9 + k * 4 + f] =
            std::clamp(rng.normal(means(k, f), glmhmm_sigma), -15.0, 15.0);
    return theta;
  }
  const auto& spec = param_spec(id);
  if (entries.size() != spec.size())
    throw DataError(DataErrorCode::DimMismatch, "prior/model parameter count mismatch");
  std::vector<double> theta(spec.size());
  for (size_t i = 0; i < spec.size(); ++i) {
    const auto& e = entries[i];
    double v;
    switch (e.kind) {
      case PriorEntry::Kind::Uniform: v = rng.uniform(e.a, e.b); break;
      case PriorEntry::Kind::Beta:
        v = spec[i].lo + rng.beta(e.a, e.b) * (spec[i].hi - spec[i].lo);
        break;
      case PriorEntry::Kind::Normal: v = rng.normal(e.a, e.b); break;
      case PriorEntry::Kind::Fixed: v = e.a; break;
    }
    theta[i] = std::clamp(v, spec[i].lo, spec[i].hi);
  }
  return theta;
}

double PriorSpec::log_pdf(ModelId id, const std::vector<double>& theta) const {
  if (id == ModelId::GlmHmm) return 0.0;
  const auto& spec = param_spec(id);
  double lp = 0.0;
  for (size_t i = 0; i < theta.size(); ++i) {
    const auto& e = entries[i];
    const double v = theta[i];
    switch (e.kind) {
      case PriorEntry::Kind::Uniform:
        if (v < e.a || v > e.b) return -std::numeric_limits<double>::infinity();
        lp -= std::log(e.b - e.a);
        break;
      case PriorEntry::Kind::Beta: {
        const double span = spec[i].hi - spec[i].lo;
        const double u = (v - spec[i].lo) / span;
        if (u <= 0.0 || u >= 1.0) return -std::numeric_limits<double>::infinity();
        lp += (e.a - 1.0) * std::log(u) + (e.b - 1.0) * std::log(1.0 - u);
        lp += std::lgamma(e.a + e.b) - std::lgamma(e.a) - std::lgamma(e.b);
        lp -= std::log(span);
        break;
      }
      case PriorEntry::Kind::Normal:
        lp += -0.5 * std::log(2.0 * M_PI) - std::log(e.b) -
              0.5 * (v - e.a) * (v - e.a) / (e.b * e.b);
        break;
      case PriorEntry::Kind::Fixed:
        if (std::abs(v - e.a) > 1e-12)
          return -std::numeric_limits<double>::infinity();
        break;
    }
  }
  return lp;
}

namespace {

json prior_to_json(const PriorSpec& p) {
  json j;
  j["glmhmm_skew"] = p.glmhmm_skew;
  j["glmhmm_sigma"] = p.glmhmm_sigma;
  j["glmhmm_stay"] = p.glmhmm_stay;
  j["entries"] = json::array();
  for (const auto& e : p.entries)
    j["entries"].push_back({{"kind", static_cast<int>(e.kind)}, {"a", e.a}, {"b", e.b}});
  return j;
}

}  // namespace

// ---------------------------------------------------------------------------
// Encoding

Matrix encode_input(const TrialSequence& y) {
  const int dim = input_dim(y.model_id);
  Matrix enc(y.n_trials, dim);
  for (int t = 0; t < y.n_trials; ++t) {
    double* row = enc.row(t);
    if (y.model_id == ModelId::Weber) {
      row[0] = (y.actions[t] - 1.5) / 1.5;  // 4-action scalar code
    } else {
      row[0] = y.actions[t] == 1 ? 1.0 : -1.0;
    }
    row[1] = y.rewards[t];
    for (int s = 0; s < y.stimulus.cols; ++s) row[2 + s] = y.stimulus(t, s);
  }
  return enc;
}

// ---------------------------------------------------------------------------
// Generation

DatasetBundle generate(ModelId model_id, const PriorSpec& prior, int n_agents,
                       int n_trials, std::uint64_t seed, const EnvConfig& env) {
  if (n_agents < 1) throw std::invalid_argument("generate: n_agents must be >= 1");
  if (n_trials < 1) throw std::invalid_argument("generate: n_trials must be >= 1");
  DatasetBundle b;
  b.model_id = model_id;
  b.n_trials = n_trials;
  b.input_dim = input_dim(model_id);
  b.n_cont = n_cont_channels(model_id);
  b.n_classes = discrete_cardinality(model_id);
  b.seed = seed;
  b.prior_desc = prior_to_json(prior).dump();
  b.agents.resize(n_agents);

  // One RNG sub-stream per agent: reproducible independent of scheduling.
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n_agents; ++i) {
    Rng rng(seed, static_cast<std::uint64_t>(i) + 1);
    ModelParams params{model_id, prior.sample(model_id, rng)};
    SimResult sim = simulate(params, n_trials, env, rng);
    AgentData& a = b.agents[i];
    a.y_enc = encode_input(sim.y);
    a.z_cont = std::move(sim.z.cont);
    a.z_disc = std::move(sim.z.discrete);
    a.theta = std::move(params.theta);
    a.length = n_trials;
  }
  return b;
}

// ---------------------------------------------------------------------------
// Binary payload format: magic "LASE", u32 version, u32 ndims, u32 dims[],
// then little-endian f32 or i32 data.

namespace {

constexpr char kMagic[4] = {'L', 'A', 'S', 'E'};
constexpr std::uint32_t kVersion = 1;

void write_header(std::ofstream& f, const std::vector<std::uint32_t>& dims) {
  f.write(kMagic, 4);
  const std::uint32_t version = kVersion;
  f.write(reinterpret_cast<const char*>(&version), 4);
  const std::uint32_t nd = static_cast<std::uint32_t>(dims.size());
  f.write(reinterpret_cast<const char*>(&nd), 4);
  for (std::uint32_t d : dims) f.write(reinterpret_cast<const char*>(&d), 4);
}

std::vector<std::uint32_t> read_header(std::ifstream& f, const std::string& path) {
  char magic[4];
  if (!f.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError(DataErrorCode::MagicMismatch, path + ": bad magic");
  std::uint32_t version = 0, nd = 0;
  if (!f.read(reinterpret_cast<char*>(&version), 4))
    throw DataError(DataErrorCode::Truncated, path + ": truncated header");
  if (version != kVersion)
    throw DataError(DataErrorCode::VersionMismatch,
                    path + ": unsupported version " + std::to_string(version));
  if (!f.read(reinterpret_cast<char*>(&nd), 4))
    throw DataError(DataErrorCode::Truncated, path + ": truncated header");
  std::vector<std::uint32_t> dims(nd);
  for (auto& d : dims)
    if (!f.read(reinterpret_cast<char*>(&d), 4))
      throw DataError(DataErrorCode::Truncated, path + ": truncated dims");
  return dims;
}

void write_f32(const std::string& path, const std::vector<std::uint32_t>& dims,
               const std::vector<float>& data) {
  std::ofstream f(path, std::ios::binary);
  write_header(f, dims);
  f.write(reinterpret_cast<const char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(float)));
}

void write_i32(const std::string& path, const std::vector<std::uint32_t>& dims,
               const std::vector<std::int32_t>& data) {
  std::ofstream f(path, std::ios::binary);
  write_header(f, dims);
  f.write(reinterpret_cast<const char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(std::int32_t)));
}

std::vector<float> read_f32(const std::string& path,
                            std::vector<std::uint32_t>& dims_out) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError(DataErrorCode::MissingFile, path + ": cannot open");
  dims_out = read_header(f, path);
  size_t n = 1;
  for (auto d : dims_out) n *= d;
  std::vector<float> data(n);
  if (!f.read(reinterpret_cast<char*>(data.data()),
              static_cast<std::streamsize>(n * sizeof(float))))
    throw DataError(DataErrorCode::Truncated, path + ": truncated payload");
  return data;
}

std::vector<std::int32_t> read_i32(const std::string& path,
                                   std::vector<std::uint32_t>& dims_out) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError(DataErrorCode::MissingFile, path + ": cannot open");
  dims_out = read_header(f, path);
  size_t n = 1;
  for (auto d : dims_out) n *= d;
  std::vector<std::int32_t> data(n);
  if (!f.read(reinterpret_cast<char*>(data.data()),
              static_cast<std::streamsize>(n * sizeof(std::int32_t))))
    throw DataError(DataErrorCode::Truncated, path + ": truncated payload");
  return data;
}

}  // namespace

void save(const DatasetBundle& b, const std::string& dir) {
  fs::create_directories(dir);
  const int n = static_cast<int>(b.agents.size());
  const auto T = static_cast<std::uint32_t>(b.n_trials);

  json manifest;
  manifest["format_version"] = kVersion;
  manifest["model"] = model_name(b.model_id);
  manifest["n_agents"] = n;
  manifest["n_trials"] = b.n_trials;
  manifest["input_dim"] = b.input_dim;
  manifest["n_cont"] = b.n_cont;
  manifest["n_classes"] = b.n_classes;
  manifest["seed"] = b.seed;
  manifest["prior"] = json::parse(b.prior_desc.empty() ? "{}" : b.prior_desc);
  manifest["theta_dim"] = b.agents.empty() ? 0 : b.agents[0].theta.size();

  {
    std::vector<float> y(static_cast<size_t>(n) * T * b.input_dim, 0.0f);
    for (int i = 0; i < n; ++i) {
      const auto& a = b.agents[i];
      for (int t = 0; t < a.length; ++t)
        for (int d = 0; d < b.input_dim; ++d)
          y[(static_cast<size_t>(i) * T + t) * b.input_dim + d] =
              static_cast<float>(a.y_enc(t, d));
    }
    write_f32(dir + "/y.bin", {static_cast<std::uint32_t>(n), T,
                               static_cast<std::uint32_t>(b.input_dim)}, y);
  }
  if (b.n_cont > 0) {
    std::vector<float> zc(static_cast<size_t>(n) * T * b.n_cont, 0.0f);
    for (int i = 0; i < n; ++i) {
      const auto& a = b.agents[i];
      for (int t = 0; t < a.length; ++t)
        for (int c = 0; c < b.n_cont; ++c)
          zc[(static_cast<size_t>(i) * T + t) * b.n_cont + c] =
              static_cast<float>(a.z_cont(t, c));
    }
    write_f32(dir + "/zc.bin", {static_cast<std::uint32_t>(n), T,
                                static_cast<std::uint32_t>(b.n_cont)}, zc);
  }
  if (b.n_classes > 0) {
    std::vector<std::int32_t> zd(static_cast<size_t>(n) * T, 0);
    for (int i = 0; i < n; ++i) {
      const auto& a = b.agents[i];
      for (int t = 0; t < a.length; ++t)
        zd[static_cast<size_t>(i) * T + t] = a.z_disc[t];
    }
    write_i32(dir + "/zd.bin", {static_cast<std::uint32_t>(n), T}, zd);
  }
  {
    const auto P = static_cast<std::uint32_t>(
        b.agents.empty() ? 0 : b.agents[0].theta.size());
    std::vector<float> th(static_cast<size_t>(n) * P);
    for (int i = 0; i < n; ++i)
      for (std::uint32_t p = 0; p < P; ++p)
        th[static_cast<size_t>(i) * P + p] = static_cast<float>(b.agents[i].theta[p]);
    write_f32(dir + "/theta.bin", {static_cast<std::uint32_t>(n), P}, th);
  }
  {
    std::vector<std::int32_t> lens(n);
    for (int i = 0; i < n; ++i) lens[i] = b.agents[i].length;
    write_i32(dir + "/lengths.bin", {static_cast<std::uint32_t>(n)}, lens);
  }
  std::ofstream mf(dir + "/manifest.json");
  mf << manifest.dump(2) << "\n";
}

DatasetBundle load(const std::string& dir) {
  std::ifstream mf(dir + "/manifest.json");
  if (!mf)
    throw DataError(DataErrorCode::MissingFile, dir + "/manifest.json: cannot open");
  json manifest = json::parse(mf, nullptr, false);
  if (manifest.is_discarded())
    throw DataError(DataErrorCode::BadCsv, dir + "/manifest.json: invalid JSON");

  DatasetBundle b;
  b.model_id = model_from_name(manifest.at("model").get<std::string>());
  b.n_trials = manifest.at("n_trials").get<int>();
  b.input_dim = manifest.at("input_dim").get<int>();
  b.n_cont = manifest.at("n_cont").get<int>();
  b.n_classes = manifest.at("n_classes").get<int>();
  b.seed = manifest.at("seed").get<std::uint64_t>();
  b.prior_desc = manifest.at("prior").dump();
  const int n = manifest.at("n_agents").get<int>();
  const auto T = static_cast<std::uint32_t>(b.n_trials);

  std::vector<std::uint32_t> dims;
  const auto y = read_f32(dir + "/y.bin", dims);
  if (dims.size() != 3 || dims[0] != static_cast<std::uint32_t>(n) || dims[1] != T ||
      dims[2] != static_cast<std::uint32_t>(b.input_dim))
    throw DataError(DataErrorCode::DimMismatch, dir + "/y.bin: dimension mismatch");

  std::vector<float> zc;
  if (b.n_cont > 0) {
    zc = read_f32(dir + "/zc.bin", dims);
    if (dims.size() != 3 || dims[0] != static_cast<std::uint32_t>(n) ||
        dims[1] != T || dims[2] != static_cast<std::uint32_t>(b.n_cont))
      throw DataError(DataErrorCode::DimMismatch, dir + "/zc.bin: dimension mismatch");
  }
  std::vector<std::int32_t> zd;
  if (b.n_classes > 0) {
    zd = read_i32(dir + "/zd.bin", dims);
    if (dims.size() != 2 || dims[0] != static_cast<std::uint32_t>(n) || dims[1] != T)
      throw DataError(DataErrorCode::DimMismatch, dir + "/zd.bin: dimension mismatch");
    for (auto v : zd)
      if (v < 0 || v >= b.n_classes)
        throw DataError(DataErrorCode::DimMismatch,
                        dir + "/zd.bin: label out of declared cardinality");
  }
  const auto th = read_f32(dir + "/theta.bin", dims);
  const std::uint32_t P = dims.size() == 2 ? dims[1] : 0;
  const auto lens = read_i32(dir + "/lengths.bin", dims);
  if (dims.size() != 1 || dims[0] != static_cast<std::uint32_t>(n))
    throw DataError(DataErrorCode::DimMismatch, dir + "/lengths.bin: dimension mismatch");

  b.agents.resize(n);
  for (int i = 0; i < n; ++i) {
    AgentData& a = b.agents[i];
    a.length = lens[i];
    if (a.length < 0 || a.length > b.n_trials)
      throw DataError(DataErrorCode::DimMismatch, "agent length out of range");
    a.y_enc = Matrix(a.length, b.input_dim);
    for (int t = 0; t < a.length; ++t)
      for (int d = 0; d < b.input_dim; ++d)
        a.y_enc(t, d) = y[(static_cast<size_t>(i) * T + t) * b.input_dim + d];
    if (b.n_cont > 0) {
      a.z_cont = Matrix(a.length, b.n_cont);
      for (int t = 0; t < a.length; ++t)
        for (int c = 0; c < b.n_cont; ++c)
          a.z_cont(t, c) = zc[(static_cast<size_t>(i) * T + t) * b.n_cont + c];
    } else {
      a.z_cont = Matrix(a.length, 0);
    }
    if (b.n_classes > 0) {
      a.z_disc.resize(a.length);
      for (int t = 0; t < a.length; ++t)
        a.z_disc[t] = zd[static_cast<size_t>(i) * T + t];
    }
    a.theta.resize(P);
    for (std::uint32_t p = 0; p < P; ++p)
      a.theta[p] = th[static_cast<size_t>(i) * P + p];
  }
  return b;
}

SplitResult split(const DatasetBundle& b, double val_fraction, std::uint64_t seed) {
  if (val_fraction <= 0.0 || val_fraction >= 1.0)
    throw std::invalid_argument("split: val_fraction must be in (0, 1)");
  const int n = static_cast<int>(b.agents.size());
  const int n_val = static_cast<int>(std::lround(val_fraction * n));
  if (n_val == 0 || n_val == n)
    throw std::invalid_argument("split: fraction rounds a split to zero agents");
  Rng rng(seed);
  const auto perm = rng.permutation(n);
  SplitResult out;
  out.train = b;
  out.val = b;
  out.train.agents.clear();
  out.val.agents.clear();
  for (int i = 0; i < n; ++i) {
    if (i < n_val)
      out.val.agents.push_back(b.agents[perm[i]]);
    else
      out.train.agents.push_back(b.agents[perm[i]]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

std::vector<std::string> stimulus_roles(ModelId id) {
  const int sd = stim_dim(id);
  std::vector<std::string> roles;
  for (int i = 0; i < sd; ++i)
    roles.push_back(i == 0 ? "stimulus" : "stimulus" + std::to_string(i + 1));
  return roles;
}

}  // namespace

IngestedData ingest_csv(const std::string& path, ModelId model_id,
                        const std::map<std::string, std::string>& column_map) {
  std::ifstream f(path);
  if (!f) throw DataError(DataErrorCode::MissingFile, path + ": cannot open");
  std::string header;
  if (!std::getline(f, header) || header.empty())
    throw DataError(DataErrorCode::BadCsv, path + ": empty file");
  const auto cols = split_csv_line(header);

  auto col_index = [&](const std::string& role) {
    const auto it = column_map.find(role);
    const std::string name = it != column_map.end() ? it->second : role;
    for (size_t i = 0; i < cols.size(); ++i)
      if (cols[i] == name) return static_cast<int>(i);
    throw DataError(DataErrorCode::BadCsv,
                    path + ": missing column '" + name + "' for role " + role);
  };

  const int ci_agent = col_index("agent");
  const int ci_action = col_index("action");
  const int ci_reward = col_index("reward");
  std::vector<int> ci_stim;
  // Weber CSV carries the stimulus as a single index column.
  const int n_stim_cols = model_id == ModelId::Weber ? 1 : stim_dim(model_id);
  const auto roles = stimulus_roles(model_id);
  for (int s = 0; s < n_stim_cols; ++s)
    ci_stim.push_back(col_index(model_id == ModelId::Weber ? "stimulus" : roles[s]));

  // Grouped by agent id in order of first appearance.
  std::vector<std::string> agent_order;
  std::map<std::string, TrialSequence> seqs;
  std::string line;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    const int needed = std::max({ci_agent, ci_action, ci_reward,
                                 ci_stim.empty() ? 0 : ci_stim.back()});
    if (static_cast<int>(cells.size()) <= needed)
      throw DataError(DataErrorCode::BadCsv,
                      path + ": row " + std::to_string(lineno) + ": too few columns");
    const std::string agent = cells[ci_agent];
    auto [it, inserted] = seqs.try_emplace(agent);
    if (inserted) {
      agent_order.push_back(agent);
      it->second.model_id = model_id;
      it->second.stimulus = Matrix(0, stim_dim(model_id));
    }
    TrialSequence& seq = it->second;

    int action;
    double reward;
    try {
      action = std::stoi(cells[ci_action]);
      reward = std::stod(cells[ci_reward]);
    } catch (const std::exception&) {
      throw DataError(DataErrorCode::BadCsv,
                      path + ": row " + std::to_string(lineno) + ": non-numeric cell");
    }
    if (action < 0 || action >= n_actions(model_id))
      throw DataError(DataErrorCode::BadCsv, path + ": row " + std::to_string(lineno) +
                                                 ": unknown action code");
    if (reward != 0.0 && reward != 1.0)
      throw DataError(DataErrorCode::BadCsv, path + ": row " + std::to_string(lineno) +
                                                 ": non-binary reward");
    seq.actions.push_back(action);
    seq.rewards.push_back(reward);
    std::vector<double> stim_row(stim_dim(model_id), 0.0);
    if (model_id == ModelId::Weber) {
      int s;
      try {
        s = std::stoi(cells[ci_stim[0]]);
      } catch (const std::exception&) {
        throw DataError(DataErrorCode::BadCsv, path + ": row " +
                                                   std::to_string(lineno) +
                                                   ": non-numeric stimulus");
      }
      if (s < 0 || s >= weber::kNumStimuli)
        throw DataError(DataErrorCode::BadCsv, path + ": row " +
                                                   std::to_string(lineno) +
                                                   ": stimulus index out of range");
      stim_row[s] = 1.0;
      stim_row[weber::kNumStimuli + action] = 1.0;
    } else {
      for (size_t s = 0; s < ci_stim.size(); ++s) {
        try {
          stim_row[s] = std::stod(cells[ci_stim[s]]);
        } catch (const std::exception&) {
          throw DataError(DataErrorCode::BadCsv, path + ": row " +
                                                     std::to_string(lineno) +
                                                     ": non-numeric stimulus");
        }
      }
    }
    const int t = static_cast<int>(seq.actions.size()) - 1;
    Matrix grown(t + 1, stim_dim(model_id));
    for (int tt = 0; tt < t; ++tt)
      for (int s = 0; s < grown.cols; ++s) grown(tt, s) = seq.stimulus(tt, s);
    for (int s = 0; s < grown.cols; ++s) grown(t, s) = stim_row[s];
    seq.stimulus = std::move(grown);
    seq.n_trials = t + 1;
  }
  if (seqs.empty())
    throw DataError(DataErrorCode::BadCsv, path + ": no data rows");

  IngestedData out;
  out.model_id = model_id;
  for (const auto& name : agent_order) out.y_enc.push_back(encode_input(seqs[name]));
  return out;
}

void export_csv(const DatasetBundle& b, const std::string& path) {
  std::ofstream f(path);
  f << "agent,trial,action,reward";
  const int n_stim_cols = b.model_id == ModelId::Weber ? 1 : stim_dim(b.model_id);
  const auto roles = stimulus_roles(b.model_id);
  for (int s = 0; s < n_stim_cols; ++s)
    f << "," << (b.model_id == ModelId::Weber ? "stimulus" : roles[s]);
  f << "\n";
  f.precision(17);
  for (size_t i = 0; i < b.agents.size(); ++i) {
    const auto& a = b.agents[i];
    for (int t = 0; t < a.length; ++t) {
      int action;
      if (b.model_id == ModelId::Weber)
        action = static_cast<int>(std::lround(a.y_enc(t, 0) * 1.5 + 1.5));
      else
        action = a.y_enc(t, 0) > 0.0 ? 1 : 0;
      f << i << "," << t << "," << action << "," << a.y_enc(t, 1);
      if (b.model_id == ModelId::Weber) {
        int stim = 0;
        for (int s = 0; s < weber::kNumStimuli; ++s)
          if (a.y_enc(t, 2 + s) > 0.5) stim = s;
        f << "," << stim;
      } else {
        for (int s = 0; s < stim_dim(b.model_id); ++s) f << "," << a.y_enc(t, 2 + s);
      }
      f << "\n";
    }
  }
}

}  // namespace lasenet
