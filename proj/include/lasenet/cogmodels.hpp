#pragma once

#include <array>
#include <string>
#include <vector>

#include "lasenet/numcore.hpp"

namespace lasenet {

enum class ModelId { FourParamRL, MetaRL, Hrl, Weber, GlmHmm };

std::string model_name(ModelId id);
ModelId model_from_name(const std::string& name);

// Observable per-trial record Y for one agent.
struct TrialSequence {
  ModelId model_id;
  int n_trials = 0;
  std::vector<int> actions;     // index into the model's action set
  std::vector<double> rewards;  // 0/1
  Matrix stimulus;              // n_trials x stim_dim (stim_dim may be 0)
};

// Ground-truth per-trial latents Z: continuous channels and/or a discrete
// state label.
struct LatentSequence {
  std::vector<std::string> cont_names;
  Matrix cont;                 // n_trials x n_cont (n_cont may be 0)
  std::vector<int> discrete;   // empty when the model has no discrete channel
  int discrete_cardinality = 0;
};

struct ParamInfo {
  std::string name;
  double lo;
  double hi;
};

struct ModelParams {
  ModelId model_id;
  std::vector<double> theta;
};

const std::vector<ParamInfo>& param_spec(ModelId id);
int n_actions(ModelId id);
int stim_dim(ModelId id);
int input_dim(ModelId id);  // encoded Y dimension per model
int discrete_cardinality(ModelId id);
int n_cont_channels(ModelId id);
std::vector<std::string> cont_channel_names(ModelId id);

// Throws std::invalid_argument when theta is out of bounds (or, for
// GLM-HMM, when the transition rows do not sum to 1).
void validate_params(const ModelParams& params);

struct EnvConfig {
  // two-armed bandit with probabilistic reversal (4-P RL, Meta RL)
  double reward_prob_high = 0.8;
  double reward_prob_low = 0.2;
  double reversal_prob = 0.02;
  int min_block = 10;
  // HRL: correct arrow resamples uniformly among the other two
  double rule_switch_prob = 0.04;
  // Weber: environment mapping switch rate and likelihood lapse floor
  double mapping_switch_prob = 0.03;
  double lapse = 0.05;
};

struct SimResult {
  TrialSequence y;
  LatentSequence z;
};

SimResult simulate_4prl(const ModelParams& params, int n_trials,
                        const EnvConfig& env, Rng& rng);
SimResult simulate_metarl(const ModelParams& params, int n_trials,
                          const EnvConfig& env, Rng& rng);
SimResult simulate_hrl(const ModelParams& params, int n_trials,
                       const EnvConfig& env, Rng& rng);
SimResult simulate_weber(const ModelParams& params, int n_trials,
                         const EnvConfig& env, Rng& rng);
SimResult simulate_glmhmm(const ModelParams& params, int n_trials,
                          const EnvConfig& env, Rng& rng);
// Generalized GLM-HMM generator for an arbitrary state count: transition is
// K x K row-stochastic, weights is K x 4 over [stim, bias, prevc, wsls].
SimResult simulate_glmhmm_k(const Matrix& transition, const Matrix& weights,
                            int n_trials, Rng& rng);

SimResult simulate(const ModelParams& params, int n_trials,
                   const EnvConfig& env, Rng& rng);

// Exact log P(Y | theta) for the two tractable models.
double loglik_4prl(const ModelParams& params, const TrialSequence& y);
double loglik_metarl(const ModelParams& params, const TrialSequence& y);
double loglik(const ModelParams& params, const TrialSequence& y);

// Off-policy replay over the observed (a, r) sequence: regenerates the
// deterministic continuous latents (Q-values). Only valid for the models
// whose latents are a deterministic function of Y.
LatentSequence derive_latents(const ModelParams& params, const TrialSequence& y);

// Pre-update Q-values per trial (n_trials x 2) replayed from observed (a, r).
Matrix replay_q_4prl(const ModelParams& params, const TrialSequence& y);
Matrix replay_q_metarl(const ModelParams& params, const TrialSequence& y);

// Weber helpers shared with the particle filter.
namespace weber {
constexpr int kNumMappings = 24;
constexpr int kNumStimuli = 3;
constexpr int kNumActions = 4;

// Action assigned to stimulus s under mapping m (injective 3->4 maps).
int mapping_action(int mapping, int stimulus);

// One-trial belief predict step under the 3% switch prior with uniform
// spread over the other 23 mappings.
void belief_predict(std::span<const double> b, double switch_prob,
                    std::span<double> out);

// Policy over the 4 actions: p(a) proportional to marginal belief^beta.
std::vector<double> action_policy(std::span<const double> belief, int stimulus,
                                  double beta);

// Bayes update for an observed (s, a, r) with the lapse-floor likelihood.
void belief_update(std::span<double> b, int stimulus, int action, double reward,
                   double lapse);

double total_variation(std::span<const double> p, std::span<const double> q);
}  // namespace weber

// Meta RL policy probability of the observed action in the engaged state,
// given current Q-values. Exposed for the forward-algorithm likelihood.
double metarl_engaged_prob(double q_left, double q_right, double beta,
                           double bias, int action);

}  // namespace lasenet
