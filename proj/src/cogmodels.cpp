#include "lasenet/cogmodels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lasenet {

namespace {

const std::vector<ParamInfo> k4prlSpec = {
    {"alpha_pos", 0.0, 1.0},
    {"alpha_neg", 0.0, 1.0},
    {"beta", 0.0, 10.0},
    {"kappa", 0.0, 1.0},
};

const std::vector<ParamInfo> kMetaRlSpec = {
    {"t_rand_to_eng", 0.0, 1.0},
    {"t_eng_to_rand", 0.0, 1.0},
    {"beta", 0.0, 20.0},
    {"bias", 0.0, 1.0},
    {"alpha_pos", 0.0, 1.0},
    {"alpha_neg0", 0.0, 1.0},
    {"alpha_v", 0.0, 1.0},
    {"psi", 0.0, 1.0},
    {"xi", 0.0, 1.0},
};

const std::vector<ParamInfo> kHrlSpec = {
    {"alpha", 0.4, 0.7},
    {"beta", 1.0, 10.0},
};

const std::vector<ParamInfo> kWeberSpec = {
    {"mu", 0.0, 0.5},
    {"lambda", 0.0, 3.0},
    {"beta", 0.0, 20.0},
};

std::vector<ParamInfo> make_glmhmm_spec() {
  std::vector<ParamInfo> spec;
  for (int j = 0; j < 3; ++j)
    for (int k = 0; k < 3; ++k)
      spec.push_back({"A_" + std::to_string(j) + std::to_string(k), 0.0, 1.0});
  const char* feats[] = {"stim", "bias", "prevc", "wsls"};
  for (int k = 0; k < 3; ++k)
    for (int f = 0; f < 4; ++f)
      spec.push_back({"w" + std::to_string(k) + "_" + feats[f], -15.0, 15.0});
  return spec;
}

const std::vector<ParamInfo> kGlmHmmSpec = make_glmhmm_spec();

// IBL-style signed contrast levels.
const std::array<double, 11> kContrasts = {0.0,    0.0625, -0.0625, 0.125, -0.125,
                                           0.25,   -0.25,  0.5,     -0.5,  1.0,
                                           -1.0};

int argmax_lowest(std::span<const double> v) {
  int best = 0;
  for (size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = static_cast<int>(i);
  return best;
}

}  // namespace

std::string model_name(ModelId id) {
  switch (id) {
    case ModelId::FourParamRL: return "4prl";
    case ModelId::MetaRL: return "metarl";
    case ModelId::Hrl: return "hrl";
    case ModelId::Weber: return "weber";
    case ModelId::GlmHmm: return "glmhmm";
  }
  throw std::invalid_argument("bad model id");
}

ModelId model_from_name(const std::string& name) {
  if (name == "4prl") return ModelId::FourParamRL;
  if (name == "metarl") return ModelId::MetaRL;
  if (name == "hrl") return ModelId::Hrl;
  if (name == "weber") return ModelId::Weber;
  if (name == "glmhmm") return ModelId::GlmHmm;
  throw std::invalid_argument("unknown model name: " + name);
}

const std::vector<ParamInfo>& param_spec(ModelId id) {
  switch (id) {
    case ModelId::FourParamRL: return k4prlSpec;
    case ModelId::MetaRL: return kMetaRlSpec;
    case ModelId::Hrl: return kHrlSpec;
    case ModelId::Weber: return kWeberSpec;
    case ModelId::GlmHmm: return kGlmHmmSpec;
  }
  throw std::invalid_argument("bad model id");
}

int n_actions(ModelId id) {
  switch (id) {
    case ModelId::FourParamRL:
    case ModelId::MetaRL:
    case ModelId::Hrl:
    case ModelId::GlmHmm: return 2;
    case ModelId::Weber: return 4;
  }
  throw std::invalid_argument("bad model id");
}

int stim_dim(ModelId id) {
  switch (id) {
    case ModelId::FourParamRL:
    case ModelId::MetaRL: return 0;
    case ModelId::Hrl: return 3;
    case ModelId::Weber: return 7;
    case ModelId::GlmHmm: return 1;
  }
  throw std::invalid_argument("bad model id");
}

int input_dim(ModelId id) {
  // [a, r] plus stimulus coding; Weber's 4-way action one-hot folds into
  // the first block, making the documented R^9.
  switch (id) {
    case ModelId::FourParamRL:
    case ModelId::MetaRL: return 2;
    case ModelId::Hrl: return 5;
    case ModelId::Weber: return 9;
    case ModelId::GlmHmm: return 3;
  }
  throw std::invalid_argument("bad model id");
}

int discrete_cardinality(ModelId id) {
  switch (id) {
    case ModelId::FourParamRL: return 0;
    case ModelId::MetaRL: return 2;
    case ModelId::Hrl: return 3;
    case ModelId::Weber: return 24;
    case ModelId::GlmHmm: return 3;
  }
  throw std::invalid_argument("bad model id");
}

int n_cont_channels(ModelId id) {
  switch (id) {
    case ModelId::FourParamRL:
    case ModelId::MetaRL:
    case ModelId::Hrl:
    case ModelId::Weber: return 1;
    case ModelId::GlmHmm: return 0;
  }
  throw std::invalid_argument("bad model id");
}

std::vector<std::string> cont_channel_names(ModelId id) {
  switch (id) {
    case ModelId::FourParamRL:
    case ModelId::MetaRL:
    case ModelId::Hrl: return {"chosen_q"};
    case ModelId::Weber: return {"belief_distance"};
    case ModelId::GlmHmm: return {};
  }
  throw std::invalid_argument("bad model id");
}

void validate_params(const ModelParams& params) {
  const auto& spec = param_spec(params.model_id);
  if (params.theta.size() != spec.size())
    throw std::invalid_argument("theta has " + std::to_string(params.theta.size()) +
                                " entries, expected " + std::to_string(spec.size()));
  for (size_t i = 0; i < spec.size(); ++i) {
    const double v = params.theta[i];
    if (!std::isfinite(v) || v < spec[i].lo || v > spec[i].hi)
      throw std::invalid_argument("parameter " + spec[i].name + " out of bounds");
  }
  if (params.model_id == ModelId::GlmHmm) {
    for (int j = 0; j < 3; ++j) {
      double row = 0.0;
      for (int k = 0; k < 3; ++k) row += params.theta[j * 3 + k];
      if (std::abs(row - 1.0) > 1e-9)
        throw std::invalid_argument("GLM-HMM transition row " + std::to_string(j) +
                                    " does not sum to 1");
    }
  }
}

// ---------------------------------------------------------------------------
// Bandit environment shared by 4-P RL and Meta RL.

namespace {

struct Bandit {
  int good_arm = 0;
  int since_reversal = 0;

  void step(const EnvConfig& env, Rng& rng) {
    ++since_reversal;
    if (since_reversal >= env.min_block && rng.bernoulli(env.reversal_prob)) {
      good_arm = 1 - good_arm;
      since_reversal = 0;
    }
  }

  double draw_reward(int action, const EnvConfig& env, Rng& rng) const {
    const double p = (action == good_arm) ? env.reward_prob_high : env.reward_prob_low;
    return rng.bernoulli(p) ? 1.0 : 0.0;
  }
};

}  // namespace

// ---------------------------------------------------------------------------
// 4-P RL

SimResult simulate_4prl(const ModelParams& params, int n_trials,
                        const EnvConfig& env, Rng& rng) {
  validate_params(params);
  if (params.model_id != ModelId::FourParamRL)
    throw std::invalid_argument("simulate_4prl: wrong model id");
  const double a_pos = params.theta[0], a_neg = params.theta[1];
  const double beta = params.theta[2], kappa = params.theta[3];

  SimResult out;
  out.y.model_id = ModelId::FourParamRL;
  out.y.n_trials = n_trials;
  out.y.actions.resize(n_trials);
  out.y.rewards.resize(n_trials);
  out.y.stimulus = Matrix(n_trials, 0);
  out.z.cont_names = cont_channel_names(ModelId::FourParamRL);
  out.z.cont = Matrix(n_trials, 1);

  Bandit bandit;
  std::array<double, 2> q = {0.5, 0.5};
  int prev_action = -1;
  for (int t = 0; t < n_trials; ++t) {
    bandit.step(env, rng);
    std::array<double, 2> logits;
    for (int a = 0; a < 2; ++a)
      logits[a] = beta * q[a] + (a == prev_action ? kappa : 0.0);
    const auto probs = softmax(logits, 1.0);
    const int action = rng.categorical(probs);
    const double r = bandit.draw_reward(action, env, rng);

    out.y.actions[t] = action;
    out.y.rewards[t] = r;
    out.z.cont(t, 0) = q[action];

    const double alpha = (r > 0.0) ? a_pos : a_neg;
    q[action] += alpha * (r - q[action]);
    q[1 - action] += alpha * ((1.0 - r) - q[1 - action]);  // counterfactual
    prev_action = action;
  }
  return out;
}

Matrix replay_q_4prl(const ModelParams& params, const TrialSequence& y) {
  validate_params(params);
  if (y.model_id != ModelId::FourParamRL)
    throw std::invalid_argument("replay_q_4prl: wrong model id");
  const double a_pos = params.theta[0], a_neg = params.theta[1];
  Matrix qs(y.n_trials, 2);
  std::array<double, 2> q = {0.5, 0.5};
  for (int t = 0; t < y.n_trials; ++t) {
    qs(t, 0) = q[0];
    qs(t, 1) = q[1];
    const int a = y.actions[t];
    const double r = y.rewards[t];
    const double alpha = (r > 0.0) ? a_pos : a_neg;
    q[a] += alpha * (r - q[a]);
    q[1 - a] += alpha * ((1.0 - r) - q[1 - a]);
  }
  return qs;
}

double loglik_4prl(const ModelParams& params, const TrialSequence& y) {
  if (y.model_id != ModelId::FourParamRL)
    throw std::invalid_argument("loglik_4prl: wrong model id");
  const Matrix qs = replay_q_4prl(params, y);
  const double beta = params.theta[2], kappa = params.theta[3];
  double ll = 0.0;
  int prev_action = -1;
  for (int t = 0; t < y.n_trials; ++t) {
    std::array<double, 2> logits;
    for (int a = 0; a < 2; ++a)
      logits[a] = beta * qs(t, a) + (a == prev_action ? kappa : 0.0);
    ll += logits[y.actions[t]] - log_sum_exp(logits);
    prev_action = y.actions[t];
  }
  return ll;
}

// ---------------------------------------------------------------------------
// Meta RL with dynamic noise

double metarl_engaged_prob(double q_left, double q_right, double beta,
                           double bias, int action) {
  const double p_left = sigmoid(-(beta * (q_right - q_left) + bias));
  return action == 0 ? p_left : 1.0 - p_left;
}

namespace {

// Shared Q/E/alpha- recursion; the latent state never touches it.
struct MetaRlLearner {
  std::array<double, 2> q = {0.5, 0.5};
  double expected_uncertainty = 0.0;
  double alpha_neg;

  explicit MetaRlLearner(double alpha_neg0) : alpha_neg(alpha_neg0) {}

  void update(const ModelParams& p, int action, double reward) {
    const double a_pos = p.theta[4], alpha_v = p.theta[6];
    const double psi = p.theta[7], xi = p.theta[8], alpha_neg0 = p.theta[5];
    const double delta = reward - q[action];
    const double v = std::abs(delta) - expected_uncertainty;
    double alpha;
    if (reward > 0.0) {
      alpha = a_pos;
    } else {
      alpha_neg = std::max(0.0, psi * (v + alpha_neg0) + (1.0 - psi) * alpha_neg);
      alpha = alpha_neg;
    }
    q[action] += alpha * delta * (1.0 - expected_uncertainty);
    q[action] = std::clamp(q[action], 0.0, 1.0);
    expected_uncertainty += alpha_v * v;
    expected_uncertainty = std::clamp(expected_uncertainty, 0.0, 1.0);
    q[1 - action] *= xi;  // forgetting
  }
};

}  // namespace

SimResult simulate_metarl(const ModelParams& params, int n_trials,
                          const EnvConfig& env, Rng& rng) {
  validate_params(params);
  if (params.model_id != ModelId::MetaRL)
    throw std::invalid_argument("simulate_metarl: wrong model id");
  const double t_r2e = params.theta[0], t_e2r = params.theta[1];
  const double beta = params.theta[2], bias = params.theta[3];

  SimResult out;
  out.y.model_id = ModelId::MetaRL;
  out.y.n_trials = n_trials;
  out.y.actions.resize(n_trials);
  out.y.rewards.resize(n_trials);
  out.y.stimulus = Matrix(n_trials, 0);
  out.z.cont_names = cont_channel_names(ModelId::MetaRL);
  out.z.cont = Matrix(n_trials, 1);
  out.z.discrete.resize(n_trials);
  out.z.discrete_cardinality = 2;

  Bandit bandit;
  MetaRlLearner learner(params.theta[5]);
  int state = 1;  // 0 = random, 1 = engaged; sessions start engaged
  for (int t = 0; t < n_trials; ++t) {
    if (t > 0) {
      if (state == 0)
        state = rng.bernoulli(t_r2e) ? 1 : 0;
      else
        state = rng.bernoulli(t_e2r) ? 0 : 1;
    }
    bandit.step(env, rng);
    int action;
    if (state == 1) {
      const double p_left = metarl_engaged_prob(learner.q[0], learner.q[1], beta, bias, 0);
      action = rng.bernoulli(p_left) ? 0 : 1;
    } else {
      action = rng.bernoulli(0.5) ? 0 : 1;
    }
    const double r = bandit.draw_reward(action, env, rng);
    out.y.actions[t] = action;
    out.y.rewards[t] = r;
    out.z.cont(t, 0) = learner.q[action];
    out.z.discrete[t] = state;
    learner.update(params, action, r);
  }
  return out;
}

Matrix replay_q_metarl(const ModelParams& params, const TrialSequence& y) {
  validate_params(params);
  if (y.model_id != ModelId::MetaRL)
    throw std::invalid_argument("replay_q_metarl: wrong model id");
  Matrix qs(y.n_trials, 2);
  MetaRlLearner learner(params.theta[5]);
  for (int t = 0; t < y.n_trials; ++t) {
    qs(t, 0) = learner.q[0];
    qs(t, 1) = learner.q[1];
    learner.update(params, y.actions[t], y.rewards[t]);
  }
  return qs;
}

double loglik_metarl(const ModelParams& params, const TrialSequence& y) {
  if (y.model_id != ModelId::MetaRL)
    throw std::invalid_argument("loglik_metarl: wrong model id");
  const Matrix qs = replay_q_metarl(params, y);
  const double t_r2e = params.theta[0], t_e2r = params.theta[1];
  const double beta = params.theta[2], bias = params.theta[3];
  // Scaled forward recursion over {random, engaged}; emissions are the
  // state-conditioned policy probabilities.
  std::array<double, 2> alpha = {0.0, 1.0};  // start engaged
  double ll = 0.0;
  for (int t = 0; t < y.n_trials; ++t) {
    if (t > 0) {
      const std::array<double, 2> prev = alpha;
      alpha[0] = prev[0] * (1.0 - t_r2e) + prev[1] * t_e2r;
      alpha[1] = prev[0] * t_r2e + prev[1] * (1.0 - t_e2r);
    }
    const double e_rand = 0.5;
    const double e_eng =
        metarl_engaged_prob(qs(t, 0), qs(t, 1), beta, bias, y.actions[t]);
    alpha[0] *= e_rand;
    alpha[1] *= e_eng;
    const double c = alpha[0] + alpha[1];
    if (c <= 0.0) return -std::numeric_limits<double>::infinity();
    alpha[0] /= c;
    alpha[1] /= c;
    ll += std::log(c);
  }
  return ll;
}

double loglik(const ModelParams& params, const TrialSequence& y) {
  switch (params.model_id) {
    case ModelId::FourParamRL: return loglik_4prl(params, y);
    case ModelId::MetaRL: return loglik_metarl(params, y);
    default:
      throw std::invalid_argument("loglik: model likelihood is intractable");
  }
}

LatentSequence derive_latents(const ModelParams& params, const TrialSequence& y) {
  LatentSequence z;
  if (params.model_id == ModelId::FourParamRL) {
    const Matrix qs = replay_q_4prl(params, y);
    z.cont_names = cont_channel_names(params.model_id);
    z.cont = Matrix(y.n_trials, 1);
    for (int t = 0; t < y.n_trials; ++t) z.cont(t, 0) = qs(t, y.actions[t]);
    return z;
  }
  if (params.model_id == ModelId::MetaRL) {
    const Matrix qs = replay_q_metarl(params, y);
    z.cont_names = cont_channel_names(params.model_id);
    z.cont = Matrix(y.n_trials, 1);
    for (int t = 0; t < y.n_trials; ++t) z.cont(t, 0) = qs(t, y.actions[t]);
    return z;
  }
  throw std::invalid_argument(
      "derive_latents: latents are not a deterministic function of Y for " +
      model_name(params.model_id));
}

// ---------------------------------------------------------------------------
// HRL

SimResult simulate_hrl(const ModelParams& params, int n_trials,
                       const EnvConfig& env, Rng& rng) {
  validate_params(params);
  if (params.model_id != ModelId::Hrl)
    throw std::invalid_argument("simulate_hrl: wrong model id");
  const double alpha = params.theta[0], beta = params.theta[1];

  SimResult out;
  out.y.model_id = ModelId::Hrl;
  out.y.n_trials = n_trials;
  out.y.actions.resize(n_trials);
  out.y.rewards.resize(n_trials);
  out.y.stimulus = Matrix(n_trials, 3);
  out.z.cont_names = cont_channel_names(ModelId::Hrl);
  out.z.cont = Matrix(n_trials, 1);
  out.z.discrete.resize(n_trials);
  out.z.discrete_cardinality = 3;

  std::array<double, 3> q = {0.5, 0.5, 0.5};
  int correct_arrow = static_cast<int>(rng.next_u64() % 3);
  for (int t = 0; t < n_trials; ++t) {
    if (t > 0 && rng.bernoulli(env.rule_switch_prob)) {
      const int offset = 1 + static_cast<int>(rng.next_u64() % 2);
      correct_arrow = (correct_arrow + offset) % 3;
    }
    std::array<int, 3> dirs;  // 0 = left, 1 = right
    for (int i = 0; i < 3; ++i) {
      dirs[i] = rng.bernoulli(0.5) ? 1 : 0;
      out.y.stimulus(t, i) = dirs[i] == 1 ? 1.0 : -1.0;
    }
    const auto probs = softmax(q, beta);
    const int arrow = rng.categorical(probs);
    const int action = dirs[arrow];  // greedy side choice
    const double r = (action == dirs[correct_arrow]) ? 1.0 : 0.0;

    out.y.actions[t] = action;
    out.y.rewards[t] = r;
    out.z.cont(t, 0) = q[arrow];
    out.z.discrete[t] = arrow;

    q[arrow] += alpha * (r - q[arrow]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Weber-imprecision

namespace weber {

namespace {
std::array<std::array<int, kNumStimuli>, kNumMappings> build_mappings() {
  std::array<std::array<int, kNumStimuli>, kNumMappings> maps{};
  int idx = 0;
  for (int a0 = 0; a0 < kNumActions; ++a0)
    for (int a1 = 0; a1 < kNumActions; ++a1) {
      if (a1 == a0) continue;
      for (int a2 = 0; a2 < kNumActions; ++a2) {
        if (a2 == a0 || a2 == a1) continue;
        maps[idx++] = {a0, a1, a2};
      }
    }
  return maps;
}
const auto kMappings = build_mappings();
}  // namespace

int mapping_action(int mapping, int stimulus) { return kMappings[mapping][stimulus]; }

void belief_predict(std::span<const double> b, double switch_prob,
                    std::span<double> out) {
  for (int m = 0; m < kNumMappings; ++m)
    out[m] = (1.0 - switch_prob) * b[m] +
             switch_prob * (1.0 - b[m]) / (kNumMappings - 1);
}

std::vector<double> action_policy(std::span<const double> belief, int stimulus,
                                  double beta) {
  std::array<double, kNumActions> marginal{};
  for (int m = 0; m < kNumMappings; ++m)
    marginal[mapping_action(m, stimulus)] += belief[m];
  std::array<double, kNumActions> logits;
  for (int a = 0; a < kNumActions; ++a)
    logits[a] = marginal[a] > 0.0 ? std::log(marginal[a])
                                  : -std::numeric_limits<double>::infinity();
  auto p = softmax(logits, beta);
  return {p.begin(), p.end()};
}

void belief_update(std::span<double> b, int stimulus, int action, double reward,
                   double lapse) {
  double total = 0.0;
  for (int m = 0; m < kNumMappings; ++m) {
    const bool predicts_reward = mapping_action(m, stimulus) == action;
    const bool consistent = predicts_reward == (reward > 0.5);
    b[m] *= consistent ? 1.0 : lapse;
    total += b[m];
  }
  for (int m = 0; m < kNumMappings; ++m) b[m] /= total;
}

double total_variation(std::span<const double> p, std::span<const double> q) {
  double d = 0.0;
  for (size_t i = 0; i < p.size(); ++i) d += std::abs(p[i] - q[i]);
  return 0.5 * d;
}

}  // namespace weber

SimResult simulate_weber(const ModelParams& params, int n_trials,
                         const EnvConfig& env, Rng& rng) {
  using namespace weber;
  validate_params(params);
  if (params.model_id != ModelId::Weber)
    throw std::invalid_argument("simulate_weber: wrong model id");
  const double mu = params.theta[0], lambda = params.theta[1], beta = params.theta[2];

  SimResult out;
  out.y.model_id = ModelId::Weber;
  out.y.n_trials = n_trials;
  out.y.actions.resize(n_trials);
  out.y.rewards.resize(n_trials);
  out.y.stimulus = Matrix(n_trials, 7);
  out.z.cont_names = cont_channel_names(ModelId::Weber);
  out.z.cont = Matrix(n_trials, 1);
  out.z.discrete.resize(n_trials);
  out.z.discrete_cardinality = kNumMappings;

  std::vector<double> belief(kNumMappings, 1.0 / kNumMappings);
  std::vector<double> pred(kNumMappings);
  int true_mapping = static_cast<int>(rng.next_u64() % kNumMappings);
  int tracked = 0;
  for (int t = 0; t < n_trials; ++t) {
    if (t > 0 && rng.bernoulli(env.mapping_switch_prob)) {
      const int offset = 1 + static_cast<int>(rng.next_u64() % (kNumMappings - 1));
      true_mapping = (true_mapping + offset) % kNumMappings;
    }
    const int stimulus = static_cast<int>(rng.next_u64() % kNumStimuli);
    belief_predict(belief, env.mapping_switch_prob, pred);
    const auto policy = action_policy(pred, stimulus, beta);
    const int action = rng.categorical(policy);
    const double r = (action == mapping_action(true_mapping, stimulus)) ? 1.0 : 0.0;

    std::vector<double> post = pred;
    belief_update(post, stimulus, action, r, env.lapse);
    const double d = total_variation(post, belief);

    // Behavioral noise: resampling the tracked mapping corrupts the
    // agent's posterior by swapping its mass onto the drawn mapping.
    const double eps_bound = std::max(0.0, mu + lambda * d);
    const double eps = rng.uniform(0.0, eps_bound);
    int z = argmax_lowest(post);
    if (rng.bernoulli(std::min(1.0, eps))) {
      int offset = 1 + static_cast<int>(rng.next_u64() % (kNumMappings - 1));
      const int z_new = (z + offset) % kNumMappings;
      std::swap(post[z], post[z_new]);
      z = z_new;
    }

    out.y.actions[t] = action;
    out.y.rewards[t] = r;
    for (int s = 0; s < kNumStimuli; ++s)
      out.y.stimulus(t, s) = (s == stimulus) ? 1.0 : 0.0;
    // remaining 4 stimulus columns carry the 4-way action one-hot; the
    // encoder in module dataset consumes them directly
    for (int a = 0; a < kNumActions; ++a)
      out.y.stimulus(t, kNumStimuli + a) = (a == action) ? 1.0 : 0.0;
    out.z.cont(t, 0) = d;
    out.z.discrete[t] = z;
    belief = post;
  }
  return out;
}

// ---------------------------------------------------------------------------
// GLM-HMM

SimResult simulate_glmhmm_k(const Matrix& transition, const Matrix& weights,
                            int n_trials, Rng& rng) {
  const int K = transition.rows;
  if (transition.cols != K || weights.rows != K || weights.cols != 4)
    throw std::invalid_argument("simulate_glmhmm_k: shape mismatch");
  for (int i = 0; i < K; ++i) {
    double row = 0.0;
    for (int j = 0; j < K; ++j) row += transition(i, j);
    if (std::abs(row - 1.0) > 1e-9)
      throw std::invalid_argument("simulate_glmhmm_k: rows must sum to 1");
  }

  SimResult out;
  out.y.model_id = ModelId::GlmHmm;
  out.y.n_trials = n_trials;
  out.y.actions.resize(n_trials);
  out.y.rewards.resize(n_trials);
  out.y.stimulus = Matrix(n_trials, 1);
  out.z.discrete.resize(n_trials);
  out.z.discrete_cardinality = K;

  // Raw contrasts determine reward; the z-scored version feeds the GLM.
  std::vector<double> raw(n_trials);
  double mean = 0.0;
  for (int t = 0; t < n_trials; ++t) {
    raw[t] = kContrasts[rng.next_u64() % kContrasts.size()];
    mean += raw[t];
  }
  mean /= n_trials;
  double var = 0.0;
  for (double c : raw) var += (c - mean) * (c - mean);
  const double sd = std::sqrt(var / n_trials);
  for (int t = 0; t < n_trials; ++t)
    out.y.stimulus(t, 0) = sd > 0.0 ? (raw[t] - mean) / sd : raw[t];

  // Initial state from the stationary distribution of A (power iteration).
  std::vector<double> pi(K, 1.0 / K), next(K);
  for (int it = 0; it < 200; ++it) {
    std::fill(next.begin(), next.end(), 0.0);
    for (int j = 0; j < K; ++j)
      for (int k = 0; k < K; ++k) next[k] += pi[j] * transition(j, k);
    pi = next;
  }
  int state = rng.categorical(pi);

  double prev_choice = 0.0, wsls = 0.0;  // zero regressors on the first trial
  for (int t = 0; t < n_trials; ++t) {
    if (t > 0)
      state = rng.categorical(
          std::span<const double>(transition.row(state), static_cast<size_t>(K)));
    const double x[4] = {out.y.stimulus(t, 0), 1.0, prev_choice, wsls};
    double lin = 0.0;
    for (int f = 0; f < 4; ++f) lin += weights(state, f) * x[f];
    const bool right = rng.bernoulli(sigmoid(lin));
    const int action = right ? 1 : 0;
    double r;
    if (raw[t] == 0.0)
      r = rng.bernoulli(0.5) ? 1.0 : 0.0;
    else
      r = ((raw[t] > 0.0) == right) ? 1.0 : 0.0;

    out.y.actions[t] = action;
    out.y.rewards[t] = r;
    out.z.discrete[t] = state;

    prev_choice = right ? 1.0 : -1.0;
    wsls = prev_choice * (2.0 * r - 1.0);
  }
  return out;
}

SimResult simulate_glmhmm(const ModelParams& params, int n_trials,
                          const EnvConfig& env, Rng& rng) {
  (void)env;
  validate_params(params);
  if (params.model_id != ModelId::GlmHmm)
    throw std::invalid_argument("simulate_glmhmm: wrong model id");
  Matrix A(3, 3), W(3, 4);
  std::copy(params.theta.begin(), params.theta.begin() + 9, A.data.begin());
  std::copy(params.theta.begin() + 9, params.theta.begin() + 21, W.data.begin());
  return simulate_glmhmm_k(A, W, n_trials, rng);
}

SimResult simulate(const ModelParams& params, int n_trials,
                   const EnvConfig& env, Rng& rng) {
  switch (params.model_id) {
    case ModelId::FourParamRL: return simulate_4prl(params, n_trials, env, rng);
    case ModelId::MetaRL: return simulate_metarl(params, n_trials, env, rng);
    case ModelId::Hrl: return simulate_hrl(params, n_trials, env, rng);
    case ModelId::Weber: return simulate_weber(params, n_trials, env, rng);
    case ModelId::GlmHmm: return simulate_glmhmm(params, n_trials, env, rng);
  }
  throw std::invalid_argument("bad model id");
}

}  // namespace lasenet
