#include "lasenet/baselines.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

namespace lasenet {

namespace {

int argmax_lowest(std::span<const double> xs) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(xs.size()); ++i)
    if (xs[i] > xs[best]) best = i;
  return best;
}

void clip_to_box(std::vector<double>& x, std::span<const double> lo,
                 std::span<const double> hi) {
  for (size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], lo[i], hi[i]);
}

// One Nelder-Mead descent of -f from x0, proposals clipped into the box.
OptResult nelder_mead_single(
    const std::function<double(const std::vector<double>&)>& f,
    std::span<const double> lo, std::span<const double> hi,
    const std::vector<double>& x0, int max_iters, double tol) {
  const size_t n = x0.size();
  OptResult out;
  auto eval = [&](const std::vector<double>& x) {
    ++out.n_evals;
    const double v = f(x);
    return std::isfinite(v) ? -v : std::numeric_limits<double>::max();
  };

  std::vector<std::vector<double>> simplex(n + 1, x0);
  for (size_t i = 0; i < n; ++i) {
    const double step = 0.1 * (hi[i] - lo[i]);
    simplex[i + 1][i] += (x0[i] + step <= hi[i]) ? step : -step;
  }
  std::vector<double> fv(n + 1);
  for (size_t i = 0; i <= n; ++i) fv[i] = eval(simplex[i]);

  std::vector<size_t> ord(n + 1);
  for (int iter = 0; iter < max_iters; ++iter) {
    std::iota(ord.begin(), ord.end(), size_t{0});
    std::sort(ord.begin(), ord.end(),
              [&](size_t a, size_t b) { return fv[a] < fv[b]; });
    if (fv[ord[n]] - fv[ord[0]] < tol) break;

    std::vector<double> centroid(n, 0.0);
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < n; ++j) centroid[j] += simplex[ord[i]][j] / n;
    const auto& worst = simplex[ord[n]];

    auto blend = [&](double coef) {
      std::vector<double> x(n);
      for (size_t j = 0; j < n; ++j)
        x[j] = centroid[j] + coef * (centroid[j] - worst[j]);
      clip_to_box(x, lo, hi);
      return x;
    };

    auto xr = blend(1.0);
    const double fr = eval(xr);
    if (fr < fv[ord[0]]) {
      auto xe = blend(2.0);
      const double fe = eval(xe);
      if (fe < fr) {
        simplex[ord[n]] = std::move(xe);
        fv[ord[n]] = fe;
      } else {
        simplex[ord[n]] = std::move(xr);
        fv[ord[n]] = fr;
      }
      continue;
    }
    if (fr < fv[ord[n - 1]]) {
      simplex[ord[n]] = std::move(xr);
      fv[ord[n]] = fr;
      continue;
    }
    auto xc = blend(fr < fv[ord[n]] ? 0.5 : -0.5);
    const double fc = eval(xc);
    if (fc < std::min(fr, fv[ord[n]])) {
      simplex[ord[n]] = std::move(xc);
      fv[ord[n]] = fc;
      continue;
    }
    // shrink toward the best vertex
    for (size_t i = 1; i <= n; ++i) {
      for (size_t j = 0; j < n; ++j)
        simplex[ord[i]][j] =
            simplex[ord[0]][j] + 0.5 * (simplex[ord[i]][j] - simplex[ord[0]][j]);
      fv[ord[i]] = eval(simplex[ord[i]]);
    }
  }
  const size_t best =
      std::min_element(fv.begin(), fv.end()) - fv.begin();
  out.x = simplex[best];
  out.fval = -fv[best];
  return out;
}

}  // namespace

OptResult maximize_nelder_mead(
    const std::function<double(const std::vector<double>&)>& f,
    std::span<const double> lo, std::span<const double> hi, Rng& rng,
    const NelderMeadOptions& opt) {
  if (lo.size() != hi.size() || lo.empty())
    throw std::invalid_argument("nelder_mead: bad bounds");
  for (size_t i = 0; i < lo.size(); ++i)
    if (!(lo[i] < hi[i])) throw std::invalid_argument("nelder_mead: lo >= hi");
  OptResult best;
  best.fval = -std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, opt.restarts); ++r) {
    std::vector<double> x0(lo.size());
    for (size_t i = 0; i < lo.size(); ++i)
      x0[i] = r == 0 ? 0.5 * (lo[i] + hi[i]) : rng.uniform(lo[i], hi[i]);
    OptResult run = nelder_mead_single(f, lo, hi, x0, opt.max_iters, opt.tol);
    best.n_evals += run.n_evals;
    if (run.fval > best.fval) {
      best.x = std::move(run.x);
      best.fval = run.fval;
    }
  }
  return best;
}

namespace {

FitResult fit_by_objective(
    ModelId id, const std::function<double(const ModelParams&)>& objective,
    Rng& rng, const NelderMeadOptions& opt) {
  const auto& spec = param_spec(id);
  std::vector<double> lo(spec.size()), hi(spec.size());
  for (size_t i = 0; i < spec.size(); ++i) {
    lo[i] = spec[i].lo;
    hi[i] = spec[i].hi;
  }
  auto f = [&](const std::vector<double>& theta) {
    return objective(ModelParams{id, theta});
  };
  OptResult r = maximize_nelder_mead(f, lo, hi, rng, opt);
  FitResult out;
  out.params = ModelParams{id, std::move(r.x)};
  out.objective = r.fval;
  out.n_evals = r.n_evals;
  return out;
}

}  // namespace

FitResult fit_mle(ModelId id, const TrialSequence& y, Rng& rng,
                  const NelderMeadOptions& opt) {
  return fit_by_objective(
      id, [&](const ModelParams& p) { return loglik(p, y); }, rng, opt);
}

FitResult fit_map(ModelId id, const TrialSequence& y, const PriorSpec& prior,
                  Rng& rng, const NelderMeadOptions& opt) {
  return fit_by_objective(
      id,
      [&](const ModelParams& p) {
        return loglik(p, y) + prior.log_pdf(id, p.theta);
      },
      rng, opt);
}

// ---------------------------------------------------------------------------
// Particle filtering

std::vector<int> systematic_resample(std::span<const double> weights, int n,
                                     Rng& rng) {
  std::vector<int> idx(n);
  const double u0 = rng.uniform(0.0, 1.0) / n;
  double cum = weights[0];
  int j = 0;
  for (int i = 0; i < n; ++i) {
    const double u = u0 + static_cast<double>(i) / n;
    while (u > cum && j + 1 < static_cast<int>(weights.size()))
      cum += weights[++j];
    idx[i] = j;
  }
  return idx;
}

namespace {

double normalize_weights(std::vector<double>& w) {
  double total = 0.0;
  for (double x : w) total += x;
  if (total <= 0.0)
    throw NumericError("particle filter: all weights collapsed to zero");
  for (double& x : w) x /= total;
  return total;
}

double ess(std::span<const double> w) {
  double s2 = 0.0;
  for (double x : w) s2 += x * x;
  return 1.0 / s2;
}

}  // namespace

PFResult particle_filter_hrl(const ModelParams& params, const TrialSequence& y,
                             int n_particles, Rng& rng) {
  validate_params(params);
  if (y.model_id != ModelId::Hrl)
    throw std::invalid_argument("particle_filter_hrl: wrong model id");
  const double alpha = params.theta[0], beta = params.theta[1];
  const int N = n_particles, T = y.n_trials;

  PFResult out;
  out.post = Matrix(T, 3);
  out.map_state.resize(T);
  out.cont = Matrix(T, 1);
  out.min_ess = static_cast<double>(N);

  std::vector<std::array<double, 3>> q(N, {0.5, 0.5, 0.5});
  std::vector<double> w(N, 1.0 / N);
  std::vector<int> arrow(N);
  std::vector<double> incr(N);

  for (int t = 0; t < T; ++t) {
    std::array<int, 3> dirs;
    for (int i = 0; i < 3; ++i) dirs[i] = y.stimulus(t, i) > 0.0 ? 1 : 0;
    const int a_obs = y.actions[t];

    for (int i = 0; i < N; ++i) {
      const auto probs = softmax(q[i], beta);
      double match = 0.0;
      for (int k = 0; k < 3; ++k)
        if (dirs[k] == a_obs) {
          match += probs[k];
          out.post(t, k) += w[i] * probs[k];
        }
      incr[i] = match;
      // sample the particle's arrow among those consistent with the action
      if (match > 0.0) {
        double u = rng.uniform(0.0, match);
        int pick = -1;
        for (int k = 0; k < 3; ++k) {
          if (dirs[k] != a_obs) continue;
          pick = k;
          u -= probs[k];
          if (u <= 0.0) break;
        }
        arrow[i] = pick;
      } else {
        arrow[i] = 0;
      }
    }
    double step_lik = 0.0;
    for (int i = 0; i < N; ++i) step_lik += w[i] * incr[i];
    if (step_lik <= 0.0)
      throw NumericError("particle_filter_hrl: zero-likelihood trial");
    out.loglik += std::log(step_lik);
    for (int i = 0; i < N; ++i) w[i] *= incr[i];
    normalize_weights(w);

    double row_total = 0.0;
    for (int k = 0; k < 3; ++k) row_total += out.post(t, k);
    for (int k = 0; k < 3; ++k) out.post(t, k) /= row_total;
    out.map_state[t] = argmax_lowest(std::span<const double>(out.post.row(t), 3));
    for (int i = 0; i < N; ++i) out.cont(t, 0) += w[i] * q[i][arrow[i]];

    for (int i = 0; i < N; ++i)
      q[i][arrow[i]] += alpha * (y.rewards[t] - q[i][arrow[i]]);

    const double e = ess(w);
    out.min_ess = std::min(out.min_ess, e);
    if (e < 0.5 * N) {
      const auto idx = systematic_resample(w, N, rng);
      std::vector<std::array<double, 3>> q2(N);
      for (int i = 0; i < N; ++i) q2[i] = q[idx[i]];
      q = std::move(q2);
      std::fill(w.begin(), w.end(), 1.0 / N);
    }
  }
  return out;
}

Matrix hrl_enumerate_posterior(const ModelParams& params,
                               const TrialSequence& y) {
  validate_params(params);
  if (y.model_id != ModelId::Hrl)
    throw std::invalid_argument("hrl_enumerate_posterior: wrong model id");
  const int T = y.n_trials;
  if (T > 12)
    throw std::invalid_argument("hrl_enumerate_posterior: sequence too long");
  const double alpha = params.theta[0], beta = params.theta[1];

  struct Path {
    std::array<double, 3> q;
    double weight;
    std::vector<int> arrows;
  };
  std::vector<Path> paths{{{0.5, 0.5, 0.5}, 1.0, {}}};
  Matrix post(T, 3);
  for (int t = 0; t < T; ++t) {
    std::array<int, 3> dirs;
    for (int i = 0; i < 3; ++i) dirs[i] = y.stimulus(t, i) > 0.0 ? 1 : 0;
    const int a_obs = y.actions[t];
    std::vector<Path> next;
    next.reserve(paths.size() * 3);
    for (const auto& p : paths) {
      const auto probs = softmax(p.q, beta);
      for (int k = 0; k < 3; ++k) {
        if (dirs[k] != a_obs) continue;
        Path np = p;
        np.weight *= probs[k];
        np.arrows.push_back(k);
        np.q[k] += alpha * (y.rewards[t] - np.q[k]);
        next.push_back(std::move(np));
      }
    }
    paths = std::move(next);
    // filtering posterior at t: marginal of the last arrow
    double total = 0.0;
    for (const auto& p : paths) {
      post(t, p.arrows.back()) += p.weight;
      total += p.weight;
    }
    if (total <= 0.0)
      throw NumericError("hrl_enumerate_posterior: zero-likelihood prefix");
    for (int k = 0; k < 3; ++k) post(t, k) /= total;
  }
  return post;
}

PFResult particle_filter_weber(const ModelParams& params,
                               const TrialSequence& y, int n_particles,
                               Rng& rng, const EnvConfig& env) {
  using namespace weber;
  validate_params(params);
  if (y.model_id != ModelId::Weber)
    throw std::invalid_argument("particle_filter_weber: wrong model id");
  const double mu = params.theta[0], lambda = params.theta[1],
               beta = params.theta[2];
  const int N = n_particles, T = y.n_trials;

  PFResult out;
  out.post = Matrix(T, kNumMappings);
  out.map_state.resize(T);
  out.cont = Matrix(T, 1);
  out.min_ess = static_cast<double>(N);

  std::vector<std::vector<double>> belief(
      N, std::vector<double>(kNumMappings, 1.0 / kNumMappings));
  std::vector<double> w(N, 1.0 / N);
  std::vector<int> tracked(N, 0);
  std::vector<double> pred(kNumMappings);

  for (int t = 0; t < T; ++t) {
    int stimulus = 0;
    for (int s = 0; s < kNumStimuli; ++s)
      if (y.stimulus(t, s) > 0.5) stimulus = s;
    const int a_obs = y.actions[t];
    const double r = y.rewards[t];

    double step_lik = 0.0;
    for (int i = 0; i < N; ++i) {
      belief_predict(belief[i], env.mapping_switch_prob, pred);
      const auto policy = action_policy(pred, stimulus, beta);
      const double lik = policy[a_obs];
      step_lik += w[i] * lik;
      w[i] *= lik;

      std::vector<double> post = pred;
      belief_update(post, stimulus, a_obs, r, env.lapse);
      const double d = total_variation(post, belief[i]);
      out.cont(t, 0) += d * w[i];  // weight already includes this trial

      const double eps_bound = std::max(0.0, mu + lambda * d);
      const double eps = rng.uniform(0.0, eps_bound);
      int z = argmax_lowest(post);
      if (rng.bernoulli(std::min(1.0, eps))) {
        const int offset = 1 + static_cast<int>(rng.next_u64() % (kNumMappings - 1));
        const int z_new = (z + offset) % kNumMappings;
        std::swap(post[z], post[z_new]);
        z = z_new;
      }
      tracked[i] = z;
      belief[i] = std::move(post);
    }
    if (step_lik <= 0.0)
      throw NumericError("particle_filter_weber: zero-likelihood trial");
    out.loglik += std::log(step_lik);
    normalize_weights(w);
    out.cont(t, 0) /= step_lik;  // renormalize the weighted mean of d
    for (int i = 0; i < N; ++i) out.post(t, tracked[i]) += w[i];
    out.map_state[t] =
        argmax_lowest(std::span<const double>(out.post.row(t), kNumMappings));

    const double e = ess(w);
    out.min_ess = std::min(out.min_ess, e);
    if (e < 0.5 * N) {
      const auto idx = systematic_resample(w, N, rng);
      std::vector<std::vector<double>> b2(N);
      std::vector<int> t2(N);
      for (int i = 0; i < N; ++i) {
        b2[i] = belief[idx[i]];
        t2[i] = tracked[idx[i]];
      }
      belief = std::move(b2);
      tracked = std::move(t2);
      std::fill(w.begin(), w.end(), 1.0 / N);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Forward-backward and the GLM-HMM EM

FBResult forward_backward(const Matrix& log_obs, const Matrix& transition,
                          std::span<const double> initial) {
  const int T = log_obs.rows, K = log_obs.cols;
  if (transition.rows != K || transition.cols != K ||
      static_cast<int>(initial.size()) != K)
    throw std::invalid_argument("forward_backward: shape mismatch");

  // max-shifted emissions keep the scaled recursions in range
  Matrix obs(T, K);
  std::vector<double> shift(T);
  for (int t = 0; t < T; ++t) {
    double m = log_obs(t, 0);
    for (int k = 1; k < K; ++k) m = std::max(m, log_obs(t, k));
    shift[t] = m;
    for (int k = 0; k < K; ++k) obs(t, k) = std::exp(log_obs(t, k) - m);
  }

  Matrix alpha(T, K), beta_m(T, K);
  std::vector<double> scale(T);
  for (int t = 0; t < T; ++t) {
    double c = 0.0;
    for (int k = 0; k < K; ++k) {
      double a = 0.0;
      if (t == 0) {
        a = initial[k];
      } else {
        for (int j = 0; j < K; ++j) a += alpha(t - 1, j) * transition(j, k);
      }
      alpha(t, k) = a * obs(t, k);
      c += alpha(t, k);
    }
    if (c <= 0.0)
      throw NumericError("forward_backward: zero-probability observation");
    scale[t] = c;
    for (int k = 0; k < K; ++k) alpha(t, k) /= c;
  }
  for (int k = 0; k < K; ++k) beta_m(T - 1, k) = 1.0;
  for (int t = T - 2; t >= 0; --t)
    for (int j = 0; j < K; ++j) {
      double b = 0.0;
      for (int k = 0; k < K; ++k)
        b += transition(j, k) * obs(t + 1, k) * beta_m(t + 1, k);
      beta_m(t, j) = b / scale[t + 1];
    }

  FBResult out;
  out.gamma = Matrix(T, K);
  out.xi_sum = Matrix(K, K);
  for (int t = 0; t < T; ++t) {
    double row = 0.0;
    for (int k = 0; k < K; ++k) {
      out.gamma(t, k) = alpha(t, k) * beta_m(t, k);
      row += out.gamma(t, k);
    }
    for (int k = 0; k < K; ++k) out.gamma(t, k) /= row;
  }
  for (int t = 0; t + 1 < T; ++t)
    for (int j = 0; j < K; ++j)
      for (int k = 0; k < K; ++k)
        out.xi_sum(j, k) += alpha(t, j) * transition(j, k) * obs(t + 1, k) *
                            beta_m(t + 1, k) / scale[t + 1];
  out.loglik = 0.0;
  for (int t = 0; t < T; ++t) out.loglik += std::log(scale[t]) + shift[t];
  return out;
}

Matrix metarl_state_posterior(const ModelParams& params,
                              const TrialSequence& y) {
  validate_params(params);
  if (y.model_id != ModelId::MetaRL)
    throw std::invalid_argument("metarl_state_posterior: wrong model id");
  const Matrix qs = replay_q_metarl(params, y);
  const double t_r2e = params.theta[0], t_e2r = params.theta[1];
  const double beta = params.theta[2], bias = params.theta[3];
  Matrix log_obs(y.n_trials, 2);
  for (int t = 0; t < y.n_trials; ++t) {
    log_obs(t, 0) = std::log(0.5);
    log_obs(t, 1) = std::log(std::max(
        metarl_engaged_prob(qs(t, 0), qs(t, 1), beta, bias, y.actions[t]),
        1e-300));
  }
  Matrix A(2, 2);
  A(0, 0) = 1.0 - t_r2e; A(0, 1) = t_r2e;
  A(1, 0) = t_e2r;       A(1, 1) = 1.0 - t_e2r;
  const std::array<double, 2> pi = {0.0, 1.0};  // sessions start engaged
  return forward_backward(log_obs, A, pi).gamma;
}

Matrix glmhmm_design(const TrialSequence& y) {
  if (y.model_id != ModelId::GlmHmm)
    throw std::invalid_argument("glmhmm_design: wrong model id");
  Matrix x(y.n_trials, 4);
  double prev_choice = 0.0, wsls = 0.0;
  for (int t = 0; t < y.n_trials; ++t) {
    x(t, 0) = y.stimulus(t, 0);
    x(t, 1) = 1.0;
    x(t, 2) = prev_choice;
    x(t, 3) = wsls;
    prev_choice = y.actions[t] == 1 ? 1.0 : -1.0;
    wsls = prev_choice * (2.0 * y.rewards[t] - 1.0);
  }
  return x;
}

namespace {

// log p(a_t | state k) for a Bernoulli GLM with logistic link
Matrix glm_log_obs(const Matrix& design, const Matrix& weights,
                   const std::vector<int>& actions) {
  const int T = design.rows, K = weights.rows;
  Matrix log_obs(T, K);
  for (int t = 0; t < T; ++t) {
    const double s = actions[t] == 1 ? 1.0 : -1.0;
    for (int k = 0; k < K; ++k) {
      double lin = 0.0;
      for (int f = 0; f < 4; ++f) lin += weights(k, f) * design(t, f);
      const double z = s * lin;
      // log sigmoid(z), stable on both tails
      log_obs(t, k) = z > 0.0 ? -std::log1p(std::exp(-z))
                              : z - std::log1p(std::exp(z));
    }
  }
  return log_obs;
}

// 4x4 solve via Gaussian elimination with partial pivoting.
std::array<double, 4> solve4(std::array<std::array<double, 4>, 4> m,
                             std::array<double, 4> b) {
  for (int col = 0; col < 4; ++col) {
    int piv = col;
    for (int r = col + 1; r < 4; ++r)
      if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
    std::swap(m[col], m[piv]);
    std::swap(b[col], b[piv]);
    if (std::abs(m[col][col]) < 1e-12)
      throw NumericError("glmhmm em: singular Newton system");
    for (int r = 0; r < 4; ++r) {
      if (r == col) continue;
      const double f = m[r][col] / m[col][col];
      for (int c = col; c < 4; ++c) m[r][c] -= f * m[col][c];
      b[r] -= f * b[col];
    }
  }
  std::array<double, 4> x;
  for (int i = 0; i < 4; ++i) x[i] = b[i] / m[i][i];
  return x;
}

struct WeightedGlmData {
  const Matrix* design;
  const std::vector<int>* actions;
  std::vector<double> gamma;  // per-trial weight for this state
};

double weighted_glm_loglik(std::span<const WeightedGlmData> data,
                           std::span<const double> w) {
  double ll = 0.0;
  for (const auto& d : data) {
    for (int t = 0; t < d.design->rows; ++t) {
      const double s = (*d.actions)[t] == 1 ? 1.0 : -1.0;
      double lin = 0.0;
      for (int f = 0; f < 4; ++f) lin += w[f] * (*d.design)(t, f);
      const double z = s * lin;
      ll += d.gamma[t] * (z > 0.0 ? -std::log1p(std::exp(-z))
                                  : z - std::log1p(std::exp(z)));
    }
  }
  return ll;
}

// Newton-Raphson with step halving for one state's weighted logistic fit.
void fit_state_weights(std::span<const WeightedGlmData> data, double bound,
                       std::array<double, 4>& w) {
  double ll = weighted_glm_loglik(data, w);
  for (int iter = 0; iter < 50; ++iter) {
    std::array<double, 4> grad{};
    std::array<std::array<double, 4>, 4> hess{};
    for (const auto& d : data) {
      for (int t = 0; t < d.design->rows; ++t) {
        const double g = d.gamma[t];
        if (g <= 0.0) continue;
        double lin = 0.0;
        for (int f = 0; f < 4; ++f) lin += w[f] * (*d.design)(t, f);
        const double p = sigmoid(lin);
        const double resid = ((*d.actions)[t] == 1 ? 1.0 : 0.0) - p;
        const double curv = g * p * (1.0 - p);
        for (int f = 0; f < 4; ++f) {
          grad[f] += g * resid * (*d.design)(t, f);
          for (int f2 = 0; f2 < 4; ++f2)
            hess[f][f2] += curv * (*d.design)(t, f) * (*d.design)(t, f2);
        }
      }
    }
    for (int f = 0; f < 4; ++f) hess[f][f] += 1e-8;  // ridge
    const auto step = solve4(hess, grad);
    double gnorm = 0.0;
    for (double gv : grad) gnorm += gv * gv;
    if (std::sqrt(gnorm) < 1e-9) break;

    double scale = 1.0;
    bool improved = false;
    for (int h = 0; h < 25; ++h) {
      std::array<double, 4> cand;
      for (int f = 0; f < 4; ++f)
        cand[f] = std::clamp(w[f] + scale * step[f], -bound, bound);
      const double cll = weighted_glm_loglik(data, cand);
      if (cll >= ll) {
        w = cand;
        improved = cll > ll + 1e-12;
        ll = cll;
        break;
      }
      scale *= 0.5;
    }
    if (!improved) break;
  }
}

}  // namespace

Matrix glmhmm_state_posterior(const Matrix& transition, const Matrix& weights,
                              const TrialSequence& y) {
  const int K = transition.rows;
  const Matrix design = glmhmm_design(y);
  const Matrix log_obs = glm_log_obs(design, weights, y.actions);
  // stationary distribution by power iteration
  std::vector<double> pi(K, 1.0 / K);
  for (int it = 0; it < 200; ++it) {
    std::vector<double> next(K, 0.0);
    for (int j = 0; j < K; ++j)
      for (int k = 0; k < K; ++k) next[k] += pi[j] * transition(j, k);
    pi = next;
  }
  return forward_backward(log_obs, transition, pi).gamma;
}

EmResult fit_glmhmm_em(std::span<const TrialSequence> data, int n_states,
                       Rng& rng, const EmOptions& opt) {
  if (data.empty()) throw std::invalid_argument("glmhmm em: no sessions");
  const int K = n_states;
  const double bound = param_spec(ModelId::GlmHmm)[9].hi;  // weight box

  std::vector<Matrix> designs(data.size());
  for (size_t s = 0; s < data.size(); ++s) designs[s] = glmhmm_design(data[s]);
  const std::vector<double> pi(K, 1.0 / K);  // fixed: keeps EM monotone

  EmResult best;
  best.loglik = -std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, opt.restarts); ++r) {
    Matrix A(K, K);
    for (int j = 0; j < K; ++j)
      for (int k = 0; k < K; ++k)
        A(j, k) = j == k ? opt.init_stay : (1.0 - opt.init_stay) / (K - 1);
    Matrix W(K, 4);
    for (auto& v : W.data) v = rng.normal(0.0, 2.0);

    EmResult run;
    run.loglik = -std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < opt.max_iters; ++iter) {
      // E-step
      Matrix xi_total(K, K);
      std::vector<std::vector<double>> gammas(data.size());
      double ll = 0.0;
      for (size_t s = 0; s < data.size(); ++s) {
        const Matrix log_obs = glm_log_obs(designs[s], W, data[s].actions);
        FBResult fb = forward_backward(log_obs, A, pi);
        ll += fb.loglik;
        for (int j = 0; j < K; ++j)
          for (int k = 0; k < K; ++k) xi_total(j, k) += fb.xi_sum(j, k);
        gammas[s].assign(fb.gamma.data.begin(), fb.gamma.data.end());
      }
      run.loglik_trace.push_back(ll);
      run.n_iters = iter + 1;
      const double gain = ll - run.loglik;
      run.loglik = ll;
      run.transition = A;
      run.weights = W;
      if (iter > 0 && gain < opt.tol) {
        run.converged = true;
        break;
      }

      // M-step: transitions
      for (int j = 0; j < K; ++j) {
        double row = 0.0;
        for (int k = 0; k < K; ++k) row += xi_total(j, k);
        if (row > 0.0)
          for (int k = 0; k < K; ++k) A(j, k) = xi_total(j, k) / row;
      }
      // M-step: per-state weighted logistic regressions
      for (int k = 0; k < K; ++k) {
        std::vector<WeightedGlmData> wd(data.size());
        for (size_t s = 0; s < data.size(); ++s) {
          wd[s].design = &designs[s];
          wd[s].actions = &data[s].actions;
          wd[s].gamma.resize(data[s].n_trials);
          for (int t = 0; t < data[s].n_trials; ++t)
            wd[s].gamma[t] = gammas[s][static_cast<size_t>(t) * K + k];
        }
        std::array<double, 4> wk;
        for (int f = 0; f < 4; ++f) wk[f] = W(k, f);
        fit_state_weights(wd, bound, wk);
        for (int f = 0; f < 4; ++f) W(k, f) = wk[f];
      }
    }
    if (run.loglik > best.loglik) best = std::move(run);
  }
  return best;
}

ModelParams glmhmm_params_from(const Matrix& transition, const Matrix& weights) {
  if (transition.rows != 3 || transition.cols != 3 || weights.rows != 3 ||
      weights.cols != 4)
    throw std::invalid_argument("glmhmm_params_from: expected 3 states");
  ModelParams p;
  p.model_id = ModelId::GlmHmm;
  p.theta.reserve(21);
  for (double v : transition.data) p.theta.push_back(v);
  for (double v : weights.data) p.theta.push_back(v);
  return p;
}

}  // namespace lasenet
