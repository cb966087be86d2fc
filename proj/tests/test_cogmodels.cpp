#include <doctest.h>

#include <array>
#include <cmath>
#include <numeric>

#include "lasenet/cogmodels.hpp"

using namespace lasenet;

namespace {

ModelParams p4(double ap, double an, double beta, double kappa) {
  return {ModelId::FourParamRL, {ap, an, beta, kappa}};
}

// (t_rand_to_eng, t_eng_to_rand, beta, bias, alpha_pos, alpha_neg0, alpha_v,
//  psi, xi)
ModelParams pmeta(std::array<double, 9> t) {
  return {ModelId::MetaRL, {t.begin(), t.end()}};
}

}  // namespace

TEST_CASE("model names round-trip") {
  for (ModelId id : {ModelId::FourParamRL, ModelId::MetaRL, ModelId::Hrl,
                     ModelId::Weber, ModelId::GlmHmm})
    CHECK(model_from_name(model_name(id)) == id);
  CHECK_THROWS(model_from_name("nope"));
}

TEST_CASE("parameter validation enforces bounds and cardinality") {
  CHECK_THROWS(validate_params(p4(1.2, 0.1, 5, 0.1)));  // alpha+ > 1
  CHECK_THROWS(validate_params({ModelId::FourParamRL, {0.1, 0.1, 5}}));
  CHECK_THROWS(validate_params({ModelId::Hrl, {0.2, 5.0}}));  // alpha < 0.4
  CHECK_NOTHROW(validate_params({ModelId::Hrl, {0.5, 5.0}}));
  // GLM-HMM transition rows must sum to 1
  std::vector<double> theta(21, 0.0);
  theta[0] = 0.9; theta[1] = 0.2; theta[2] = 0.0;  // row 0 sums to 1.1
  theta[4] = 1.0; theta[8] = 1.0;
  CHECK_THROWS(validate_params({ModelId::GlmHmm, theta}));
  theta[1] = 0.1;
  CHECK_NOTHROW(validate_params({ModelId::GlmHmm, theta}));
}

TEST_CASE("4-P RL counterfactual delta rule on one trial") {
  // Q0 = 0.5 both arms, alpha+ = 0.1, reward 1 on arm 0:
  // chosen: Q = 0.5 + 0.1*(1 - 0.5) = 0.55
  // unchosen updates toward (1 - r) = 0: Q = 0.5 + 0.1*(0 - 0.5) = 0.45
  TrialSequence y;
  y.model_id = ModelId::FourParamRL;
  y.n_trials = 2;
  y.actions = {0, 0};
  y.rewards = {1.0, 1.0};
  y.stimulus = Matrix(2, 0);
  const Matrix q = replay_q_4prl(p4(0.1, 0.3, 5, 0.0), y);
  CHECK(q(0, 0) == doctest::Approx(0.5));
  CHECK(q(0, 1) == doctest::Approx(0.5));
  CHECK(q(1, 0) == doctest::Approx(0.55));
  CHECK(q(1, 1) == doctest::Approx(0.45));
}

TEST_CASE("4-P RL log-likelihood is T ln(1/2) at beta=0, kappa=0") {
  Rng rng(11);
  const auto sim = simulate_4prl(p4(0.3, 0.2, 0.0, 0.0), 50, EnvConfig{}, rng);
  CHECK(loglik_4prl(p4(0.3, 0.2, 0.0, 0.0), sim.y) ==
        doctest::Approx(50.0 * std::log(0.5)).epsilon(1e-12));
}

TEST_CASE("4-P RL beta=0 policy is empirically uniform") {
  Rng rng(12);
  const auto sim = simulate_4prl(p4(0.3, 0.2, 0.0, 0.0), 10000, EnvConfig{}, rng);
  const double frac =
      std::accumulate(sim.y.actions.begin(), sim.y.actions.end(), 0.0) / 10000.0;
  CHECK(std::abs(frac - 0.5) < 3.0 * 0.5 / 100.0);  // 3 sigma binomial
}

TEST_CASE("4-P RL simulation is deterministic per seed") {
  Rng a(42), b(42);
  const auto s1 = simulate_4prl(p4(0.3, 0.2, 5, 0.1), 10, EnvConfig{}, a);
  const auto s2 = simulate_4prl(p4(0.3, 0.2, 5, 0.1), 10, EnvConfig{}, b);
  CHECK(s1.y.actions == s2.y.actions);
  CHECK(s1.y.rewards == s2.y.rewards);
  CHECK(s1.z.cont.data == s2.z.cont.data);
}

TEST_CASE("4-P RL latent replay reproduces the simulated Z exactly") {
  Rng rng(13);
  const auto p = p4(0.35, 0.15, 4.0, 0.2);
  const auto sim = simulate_4prl(p, 80, EnvConfig{}, rng);
  const auto z = derive_latents(p, sim.y);
  for (int t = 0; t < 80; ++t)
    CHECK(z.cont(t, 0) == doctest::Approx(sim.z.cont(t, 0)).epsilon(1e-15));
  // a perturbed learning rate diverges on the first rewarded trial
  const auto z2 = derive_latents(p4(0.55, 0.15, 4.0, 0.2), sim.y);
  bool diff = false;
  for (int t = 0; t < 80; ++t)
    if (std::abs(z2.cont(t, 0) - sim.z.cont(t, 0)) > 1e-12) diff = true;
  CHECK(diff);
}

TEST_CASE("4-P RL Q-values stay in [0,1] and loglik is non-positive") {
  Rng rng(14);
  const auto p = p4(0.9, 0.8, 8.0, 0.9);
  const auto sim = simulate_4prl(p, 300, EnvConfig{}, rng);
  for (double q : sim.z.cont.data) {
    CHECK(q >= 0.0);
    CHECK(q <= 1.0);
  }
  CHECK(loglik_4prl(p, sim.y) <= 0.0);
}

TEST_CASE("Meta RL absorbing engaged chain keeps Z_d constant") {
  Rng rng(15);
  const auto sim = pmeta({0.5, 0.0, 5, 0.0, 0.3, 0.2, 0.1, 0.5, 0.9});
  const auto out = simulate_metarl(sim, 200, EnvConfig{}, rng);
  for (int s : out.z.discrete) CHECK(s == 1);
}

TEST_CASE("Meta RL state occupancy matches the stationary distribution") {
  Rng rng(16);
  // transitions (rand->eng 0.1, eng->rand 0.05) => P(engaged) = 2/3
  const auto out = simulate_metarl(
      pmeta({0.1, 0.05, 3, 0.0, 0.3, 0.2, 0.1, 0.5, 0.9}), 100000, EnvConfig{},
      rng);
  const double frac =
      std::accumulate(out.z.discrete.begin(), out.z.discrete.end(), 0.0) /
      100000.0;
  CHECK(frac == doctest::Approx(2.0 / 3.0).epsilon(0.02));
}

TEST_CASE("Meta RL Q trajectory is independent of the latent state path") {
  Rng rng(17);
  const auto p = pmeta({0.2, 0.3, 4, 0.1, 0.4, 0.3, 0.2, 0.6, 0.95});
  const auto out = simulate_metarl(p, 150, EnvConfig{}, rng);
  const auto z = derive_latents(p, out.y);  // replay never sees the states
  for (int t = 0; t < 150; ++t)
    CHECK(z.cont(t, 0) == doctest::Approx(out.z.cont(t, 0)).epsilon(1e-15));
}

TEST_CASE("Meta RL forward likelihood matches 2^T path enumeration") {
  Rng rng(18);
  const auto p = pmeta({0.15, 0.25, 6, 0.3, 0.35, 0.25, 0.15, 0.5, 0.9});
  const int T = 8;
  const auto out = simulate_metarl(p, T, EnvConfig{}, rng);
  const Matrix qs = replay_q_metarl(p, out.y);
  const double t_r2e = p.theta[0], t_e2r = p.theta[1];
  double total = 0.0;
  for (int path = 0; path < (1 << T); ++path) {
    // bit t: 1 = engaged. Sessions start engaged.
    if (!(path & 1)) continue;
    double prob = 1.0;
    for (int t = 0; t < T; ++t) {
      const int s = (path >> t) & 1;
      if (t > 0) {
        const int sp = (path >> (t - 1)) & 1;
        prob *= sp == 0 ? (s == 1 ? t_r2e : 1.0 - t_r2e)
                        : (s == 0 ? t_e2r : 1.0 - t_e2r);
      }
      prob *= s == 1 ? metarl_engaged_prob(qs(t, 0), qs(t, 1), p.theta[2],
                                           p.theta[3], out.y.actions[t])
                     : 0.5;
    }
    total += prob;
  }
  CHECK(loglik_metarl(p, out.y) ==
        doctest::Approx(std::log(total)).epsilon(1e-10));
}

TEST_CASE("loglik dispatcher rejects intractable models") {
  TrialSequence y;
  y.model_id = ModelId::Hrl;
  CHECK_THROWS(loglik({ModelId::Hrl, {0.5, 5.0}}, y));
  CHECK_THROWS(derive_latents({ModelId::Hrl, {0.5, 5.0}}, y));
}

TEST_CASE("HRL action always follows the chosen arrow's direction") {
  Rng rng(19);
  const auto out = simulate_hrl({ModelId::Hrl, {0.55, 4.0}}, 300, EnvConfig{}, rng);
  for (int t = 0; t < 300; ++t) {
    const int arrow = out.z.discrete[t];
    CHECK(arrow >= 0);
    CHECK(arrow < 3);
    const int dir = out.y.stimulus(t, arrow) > 0.0 ? 1 : 0;
    CHECK(out.y.actions[t] == dir);
    CHECK(out.z.cont(t, 0) >= 0.0);
    CHECK(out.z.cont(t, 0) <= 1.0);
  }
}

TEST_CASE("Weber mappings are 24 distinct injective assignments") {
  for (int m = 0; m < weber::kNumMappings; ++m) {
    std::array<int, 3> a{};
    for (int s = 0; s < 3; ++s) {
      a[s] = weber::mapping_action(m, s);
      CHECK(a[s] >= 0);
      CHECK(a[s] < 4);
    }
    CHECK(a[0] != a[1]);
    CHECK(a[0] != a[2]);
    CHECK(a[1] != a[2]);
    for (int m2 = 0; m2 < m; ++m2) {
      bool same = true;
      for (int s = 0; s < 3; ++s)
        if (weber::mapping_action(m2, s) != a[s]) same = false;
      CHECK_FALSE(same);
    }
  }
}

TEST_CASE("Weber total variation of identical distributions is zero") {
  std::vector<double> u(24, 1.0 / 24);
  CHECK(weber::total_variation(u, u) == doctest::Approx(0.0));
  std::vector<double> v(24, 0.0);
  v[0] = 1.0;
  CHECK(weber::total_variation(u, v) == doctest::Approx(23.0 / 24.0));
}

TEST_CASE("Weber with mu=lambda=0 follows the deterministic Bayes filter") {
  Rng rng(20);
  const EnvConfig env;
  const auto out =
      simulate_weber({ModelId::Weber, {0.0, 0.0, 5.0}}, 120, env, rng);
  // replay the noise-free filter and compare the tracked argmax path
  std::vector<double> belief(24, 1.0 / 24), pred(24);
  for (int t = 0; t < 120; ++t) {
    int stimulus = 0;
    for (int s = 0; s < 3; ++s)
      if (out.y.stimulus(t, s) > 0.5) stimulus = s;
    weber::belief_predict(belief, env.mapping_switch_prob, pred);
    std::vector<double> post = pred;
    weber::belief_update(post, stimulus, out.y.actions[t], out.y.rewards[t],
                         env.lapse);
    const double d = weber::total_variation(post, belief);
    CHECK(out.z.cont(t, 0) == doctest::Approx(d).epsilon(1e-12));
    int z = 0;
    for (int m = 1; m < 24; ++m)
      if (post[m] > post[z]) z = m;
    CHECK(out.z.discrete[t] == z);
    belief = post;
  }
}

TEST_CASE("Weber belief distance stays in [0,1] and labels in range") {
  Rng rng(21);
  const auto out =
      simulate_weber({ModelId::Weber, {0.1, 1.5, 4.0}}, 300, EnvConfig{}, rng);
  for (int t = 0; t < 300; ++t) {
    CHECK(out.z.cont(t, 0) >= 0.0);
    CHECK(out.z.cont(t, 0) <= 1.0);
    CHECK(out.z.discrete[t] >= 0);
    CHECK(out.z.discrete[t] < 24);
  }
}

namespace {
ModelParams glmhmm_from(const Matrix& A, const Matrix& W) {
  ModelParams p;
  p.model_id = ModelId::GlmHmm;
  for (double v : A.data) p.theta.push_back(v);
  for (double v : W.data) p.theta.push_back(v);
  return p;
}
}  // namespace

TEST_CASE("GLM-HMM identity transitions freeze the state path") {
  Matrix A(3, 3);
  A(0, 0) = A(1, 1) = A(2, 2) = 1.0;
  Matrix W(3, 4);
  W(0, 0) = 6.0; W(1, 1) = -3.0; W(2, 1) = 3.0;
  Rng rng(22);
  const auto out = simulate_glmhmm(glmhmm_from(A, W), 100, EnvConfig{}, rng);
  for (int t = 1; t < 100; ++t) CHECK(out.z.discrete[t] == out.z.discrete[0]);
}

TEST_CASE("GLM-HMM state occupancy matches the stationary distribution") {
  Matrix A(3, 3);
  // stationary distribution of this chain is uniform by symmetry
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) A(i, j) = i == j ? 0.8 : 0.1;
  Matrix W(3, 4);
  W(0, 0) = 6.0; W(1, 1) = -3.0; W(2, 1) = 3.0;
  Rng rng(23);
  const auto out = simulate_glmhmm(glmhmm_from(A, W), 100000, EnvConfig{}, rng);
  std::array<int, 3> counts{};
  for (int s : out.z.discrete) ++counts[s];
  for (int k = 0; k < 3; ++k)
    CHECK(counts[k] / 100000.0 == doctest::Approx(1.0 / 3.0).epsilon(0.035));
}

TEST_CASE("GLM-HMM stimulus is z-scored and rewards are binary") {
  Matrix A(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) A(i, j) = i == j ? 0.9 : 0.05;
  Matrix W(3, 4);
  W(0, 0) = 6.0;
  Rng rng(24);
  const auto out = simulate_glmhmm(glmhmm_from(A, W), 5000, EnvConfig{}, rng);
  double mean = 0.0, var = 0.0;
  for (int t = 0; t < 5000; ++t) mean += out.y.stimulus(t, 0);
  mean /= 5000;
  for (int t = 0; t < 5000; ++t) {
    var += (out.y.stimulus(t, 0) - mean) * (out.y.stimulus(t, 0) - mean);
    CHECK((out.y.rewards[t] == 0.0 || out.y.rewards[t] == 1.0));
  }
  CHECK(mean == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(var / 5000 == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("simulate dispatcher covers all models with matching schemas") {
  Rng rng(25);
  for (ModelId id : {ModelId::FourParamRL, ModelId::MetaRL, ModelId::Hrl,
                     ModelId::Weber}) {
    ModelParams p{id, {}};
    const auto& spec = param_spec(id);
    for (const auto& info : spec)
      p.theta.push_back(0.5 * (info.lo + info.hi));
    if (id == ModelId::Hrl) p.theta = {0.55, 5.0};
    Rng sub = rng.split(static_cast<int>(id) + 1);
    const auto out = simulate(p, 40, EnvConfig{}, sub);
    CHECK(out.y.n_trials == 40);
    CHECK(static_cast<int>(out.y.actions.size()) == 40);
    CHECK(out.y.stimulus.cols == stim_dim(id));
    CHECK(out.z.cont.cols == n_cont_channels(id));
    if (discrete_cardinality(id) > 0)
      CHECK(static_cast<int>(out.z.discrete.size()) == 40);
  }
}
