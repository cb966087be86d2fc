#pragma once

#include <functional>
#include <span>

#include "lasenet/cogmodels.hpp"
#include "lasenet/dataset.hpp"

namespace lasenet {

struct NelderMeadOptions {
  int max_iters = 2000;
  double tol = 1e-8;
  int restarts = 10;
};

struct OptResult {
  std::vector<double> x;
  double fval = 0.0;
  int n_evals = 0;
};

// Multi-start bounded Nelder-Mead; maximizes f over the box [lo, hi].
// Restart 0 starts at the box midpoint, the rest at uniform draws.
OptResult maximize_nelder_mead(
    const std::function<double(const std::vector<double>&)>& f,
    std::span<const double> lo, std::span<const double> hi, Rng& rng,
    const NelderMeadOptions& opt = {});

struct FitResult {
  ModelParams params;
  double objective = 0.0;  // log-likelihood (MLE) or log-posterior (MAP)
  int n_evals = 0;
};

FitResult fit_mle(ModelId id, const TrialSequence& y, Rng& rng,
                  const NelderMeadOptions& opt = {});
FitResult fit_map(ModelId id, const TrialSequence& y, const PriorSpec& prior,
                  Rng& rng, const NelderMeadOptions& opt = {});

// Multinomial resampling with a single systematic sweep; preserves particle
// order. weights must be normalized.
std::vector<int> systematic_resample(std::span<const double> weights, int n,
                                     Rng& rng);

struct PFResult {
  Matrix post;                 // T x K filtering posterior over the latent
  std::vector<int> map_state;  // per-trial argmax (ties to lowest index)
  Matrix cont;                 // T x n_cont posterior-mean continuous latent
  double loglik = 0.0;
  double min_ess = 0.0;
};

// Bootstrap filters with adaptive systematic resampling at ESS < N/2.
PFResult particle_filter_hrl(const ModelParams& params, const TrialSequence& y,
                             int n_particles, Rng& rng);
PFResult particle_filter_weber(const ModelParams& params, const TrialSequence& y,
                               int n_particles, Rng& rng,
                               const EnvConfig& env = EnvConfig{});

// Exact filtering posterior over the chosen arrow by path enumeration
// (3^T paths); oracle for the particle filter on short sequences.
Matrix hrl_enumerate_posterior(const ModelParams& params, const TrialSequence& y);

struct FBResult {
  Matrix gamma;   // T x K smoothed posteriors
  Matrix xi_sum;  // K x K expected transition counts
  double loglik = 0.0;
};

// Scaled forward-backward for a discrete HMM; log_obs(t, k) = log p(y_t | k).
FBResult forward_backward(const Matrix& log_obs, const Matrix& transition,
                          std::span<const double> initial);

// Smoothed posterior over {random, engaged}; sessions start engaged.
Matrix metarl_state_posterior(const ModelParams& params, const TrialSequence& y);

// GLM regressors per trial: [z-scored stimulus, bias, prev choice, wsls].
Matrix glmhmm_design(const TrialSequence& y);

// Smoothed state posterior given explicit transition (K x K) and per-state
// GLM weights (K x 4); initial distribution = stationary of the transition.
Matrix glmhmm_state_posterior(const Matrix& transition, const Matrix& weights,
                              const TrialSequence& y);

struct EmOptions {
  int max_iters = 300;
  double tol = 1e-4;       // absolute log-likelihood gain
  int restarts = 5;
  double init_stay = 0.90; // sticky diagonal of the initial transition guess
};

struct EmResult {
  Matrix transition;                 // K x K
  Matrix weights;                    // K x 4
  std::vector<double> loglik_trace;  // observed-data log-likelihood per iter
  double loglik = 0.0;
  int n_iters = 0;
  bool converged = false;
};

// Baum-Welch for the GLM-HMM over a pool of sessions. The initial state
// distribution is held fixed at uniform, so every E/M cycle increases the
// reported likelihood. The M-step fits each state's weights by
// gamma-weighted Newton-Raphson logistic regression with step halving.
EmResult fit_glmhmm_em(std::span<const TrialSequence> data, int n_states,
                       Rng& rng, const EmOptions& opt = {});

// Packs a 3-state fit back into the canonical parameter vector.
ModelParams glmhmm_params_from(const Matrix& transition, const Matrix& weights);

}  // namespace lasenet
