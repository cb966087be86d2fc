#include "lasenet/network.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

using nlohmann::json;

namespace lasenet {

void NetworkConfig::validate() const {
  if (input_dim < 1) throw std::invalid_argument("config: input_dim must be >= 1");
  if (gru_units < 2) throw std::invalid_argument("config: gru_units must be >= 2");
  if (!head_continuous && !head_discrete && !head_evidential)
    throw std::invalid_argument("config: at least one head required");
  if (head_continuous && cont_dim < 1)
    throw std::invalid_argument("config: cont_dim must be >= 1");
  if (head_discrete && n_classes < 2)
    throw std::invalid_argument("config: n_classes must be >= 2");
  if (head_evidential && evid_dim < 1)
    throw std::invalid_argument("config: evid_dim must be >= 1");
  if (mlp1_units() < mlp2_units() || 2 * gru_units < mlp1_units())
    throw std::invalid_argument("config: widths must decrease after the bi-GRU");
}

NetworkConfig NetworkConfig::for_model(ModelId id, int gru_units, bool evidential) {
  NetworkConfig cfg;
  cfg.input_dim = lasenet::input_dim(id);
  cfg.gru_units = gru_units;
  const int n_cont = n_cont_channels(id);
  const int n_disc = discrete_cardinality(id);
  if (n_cont > 0) {
    if (evidential) {
      cfg.head_evidential = true;
      cfg.evid_dim = n_cont;
    } else {
      cfg.head_continuous = true;
      cfg.cont_dim = n_cont;
    }
  }
  if (n_disc > 0) {
    cfg.head_discrete = true;
    cfg.n_classes = n_disc;
  }
  return cfg;
}

WeightLayout WeightLayout::from_config(const NetworkConfig& cfg) {
  const int D = cfg.input_dim, H = cfg.gru_units;
  const int M1 = cfg.mlp1_units(), M2 = cfg.mlp2_units();
  WeightLayout layout;
  size_t off = 0;
  auto add = [&](const std::string& name, int rows, int cols) {
    layout.blocks.push_back({name, off, rows, cols});
    off += static_cast<size_t>(rows) * cols;
  };
  for (const char* dir : {"fwd", "bwd"}) {
    for (const char* g : {"z", "r", "h"})
      add(std::string(dir) + ".W" + g, H, D);
    for (const char* g : {"z", "r", "h"})
      add(std::string(dir) + ".U" + g, H, H);
    for (const char* g : {"z", "r", "h"})
      add(std::string(dir) + ".b" + g, H, 1);
  }
  add("mlp1.W", M1, 2 * H);
  add("mlp1.b", M1, 1);
  add("mlp2.W", M2, M1);
  add("mlp2.b", M2, 1);
  if (cfg.head_continuous) {
    add("cont.W", cfg.cont_dim, M2);
    add("cont.b", cfg.cont_dim, 1);
  }
  if (cfg.head_discrete) {
    add("disc.W", cfg.n_classes, M2);
    add("disc.b", cfg.n_classes, 1);
  }
  if (cfg.head_evidential) {
    add("evid.W", 4 * cfg.evid_dim, M2);
    add("evid.b", 4 * cfg.evid_dim, 1);
  }
  layout.total = off;
  return layout;
}

const WeightLayout::Block& WeightLayout::find(const std::string& name) const {
  for (const auto& b : blocks)
    if (b.name == name) return b;
  throw std::invalid_argument("no weight block named " + name);
}

namespace {

inline void matvec_acc(const double* w, int rows, int cols, const double* x,
                       double* out) {
  for (int i = 0; i < rows; ++i) {
    const double* row = w + static_cast<size_t>(i) * cols;
    double acc = 0.0;
    for (int j = 0; j < cols; ++j) acc += row[j] * x[j];
    out[i] += acc;
  }
}

inline void matvec_t_acc(const double* w, int rows, int cols, const double* d,
                         double* out) {
  // out += W^T d
  for (int i = 0; i < rows; ++i) {
    const double di = d[i];
    const double* row = w + static_cast<size_t>(i) * cols;
    for (int j = 0; j < cols; ++j) out[j] += row[j] * di;
  }
}

inline void outer_acc(double* gw, int rows, int cols, const double* d,
                      const double* x) {
  // gw += d x^T
  for (int i = 0; i < rows; ++i) {
    const double di = d[i];
    double* row = gw + static_cast<size_t>(i) * cols;
    for (int j = 0; j < cols; ++j) row[j] += di * x[j];
  }
}

inline double softplus(double x) {
  if (x > 30.0) return x;
  return std::log1p(std::exp(x));
}

constexpr double kEvidFloor = 1e-6;

// Pointers into one direction's parameter blocks.
struct GruParams {
  const double *Wz, *Wr, *Wh, *Uz, *Ur, *Uh, *bz, *br, *bh;
};

GruParams gru_params(const double* p, const WeightLayout& layout,
                     const std::string& dir) {
  auto at = [&](const std::string& n) { return p + layout.find(dir + n).offset; };
  return {at(".Wz"), at(".Wr"), at(".Wh"), at(".Uz"), at(".Ur"),
          at(".Uh"), at(".bz"), at(".br"), at(".bh")};
}

struct GruGrads {
  double *Wz, *Wr, *Wh, *Uz, *Ur, *Uh, *bz, *br, *bh;
};

GruGrads gru_grads(double* g, const WeightLayout& layout, const std::string& dir) {
  auto at = [&](const std::string& n) { return g + layout.find(dir + n).offset; };
  return {at(".Wz"), at(".Wr"), at(".Wh"), at(".Uz"), at(".Ur"),
          at(".Uh"), at(".bz"), at(".br"), at(".bh")};
}

struct SeqCache {
  int T = 0;
  Matrix h_f, z_f, r_f, c_f;
  Matrix h_b, z_b, r_b, c_b;
  Matrix s_drop;     // post-dropout bi-GRU summary
  Matrix mask_rnn;
  Matrix relu1, mask1;  // relu1 pre-dropout
  Matrix relu2, mask2;
  HeadOutputs heads;
  Matrix evid_raw;  // pre-link head outputs
};

void gru_direction(const GruParams& gp, const Matrix& x, int T, int D, int H,
                   bool forward_dir, Matrix& h, Matrix& z, Matrix& r, Matrix& c) {
  std::vector<double> h_prev(H, 0.0), az(H), ar(H), ac(H), rh(H);
  for (int step = 0; step < T; ++step) {
    const int t = forward_dir ? step : T - 1 - step;
    const double* xt = x.row(t);
    std::copy(gp.bz, gp.bz + H, az.begin());
    std::copy(gp.br, gp.br + H, ar.begin());
    matvec_acc(gp.Wz, H, D, xt, az.data());
    matvec_acc(gp.Wr, H, D, xt, ar.data());
    matvec_acc(gp.Uz, H, H, h_prev.data(), az.data());
    matvec_acc(gp.Ur, H, H, h_prev.data(), ar.data());
    for (int i = 0; i < H; ++i) {
      z(t, i) = sigmoid(az[i]);
      r(t, i) = sigmoid(ar[i]);
      rh[i] = r(t, i) * h_prev[i];
    }
    std::copy(gp.bh, gp.bh + H, ac.begin());
    matvec_acc(gp.Wh, H, D, xt, ac.data());
    matvec_acc(gp.Uh, H, H, rh.data(), ac.data());
    for (int i = 0; i < H; ++i) {
      c(t, i) = std::tanh(ac[i]);
      h(t, i) = (1.0 - z(t, i)) * h_prev[i] + z(t, i) * c(t, i);
      h_prev[i] = h(t, i);
    }
  }
}

void fill_dropout_mask(Matrix& mask, double rate, Rng* rng) {
  if (rng == nullptr || rate <= 0.0) {
    std::fill(mask.data.begin(), mask.data.end(), 1.0);
    return;
  }
  const double keep = 1.0 - rate;
  for (auto& m : mask.data) m = rng->bernoulli(keep) ? 1.0 / keep : 0.0;
}

void forward_sequence(const NetworkWeights& w, const WeightLayout& layout,
                      const Matrix& x, int T, Rng* dropout_rng, SeqCache& cache) {
  const auto& cfg = w.config;
  const int D = cfg.input_dim, H = cfg.gru_units;
  const int M1 = cfg.mlp1_units(), M2 = cfg.mlp2_units();
  if (x.cols != D) throw std::invalid_argument("forward: input dim mismatch");
  if (T > x.rows) throw std::invalid_argument("forward: length exceeds rows");
  const double* p = w.params.data();

  cache.T = T;
  cache.h_f = Matrix(T, H); cache.z_f = Matrix(T, H);
  cache.r_f = Matrix(T, H); cache.c_f = Matrix(T, H);
  cache.h_b = Matrix(T, H); cache.z_b = Matrix(T, H);
  cache.r_b = Matrix(T, H); cache.c_b = Matrix(T, H);
  gru_direction(gru_params(p, layout, "fwd"), x, T, D, H, true,
                cache.h_f, cache.z_f, cache.r_f, cache.c_f);
  gru_direction(gru_params(p, layout, "bwd"), x, T, D, H, false,
                cache.h_b, cache.z_b, cache.r_b, cache.c_b);

  cache.mask_rnn = Matrix(T, 2 * H);
  cache.mask1 = Matrix(T, M1);
  cache.mask2 = Matrix(T, M2);
  fill_dropout_mask(cache.mask_rnn, cfg.dropout_rnn, dropout_rng);
  fill_dropout_mask(cache.mask1, cfg.dropout_mlp1, dropout_rng);
  fill_dropout_mask(cache.mask2, cfg.dropout_mlp2, dropout_rng);

  cache.s_drop = Matrix(T, 2 * H);
  cache.relu1 = Matrix(T, M1);
  cache.relu2 = Matrix(T, M2);
  if (cfg.head_continuous) cache.heads.cont = Matrix(T, cfg.cont_dim);
  if (cfg.head_discrete) cache.heads.disc_probs = Matrix(T, cfg.n_classes);
  if (cfg.head_evidential) {
    cache.evid_raw = Matrix(T, 4 * cfg.evid_dim);
    cache.heads.evid = Matrix(T, 4 * cfg.evid_dim);
  }

  const double* W1 = p + layout.find("mlp1.W").offset;
  const double* b1 = p + layout.find("mlp1.b").offset;
  const double* W2 = p + layout.find("mlp2.W").offset;
  const double* b2 = p + layout.find("mlp2.b").offset;

  std::vector<double> a1(M1), a2(M2), a1d(M1), a2d(M2);
  for (int t = 0; t < T; ++t) {
    double* s = cache.s_drop.row(t);
    for (int i = 0; i < H; ++i) {
      s[i] = cache.h_f(t, i) * cache.mask_rnn(t, i);
      s[H + i] = cache.h_b(t, i) * cache.mask_rnn(t, H + i);
    }
    std::copy(b1, b1 + M1, a1.begin());
    matvec_acc(W1, M1, 2 * H, s, a1.data());
    for (int i = 0; i < M1; ++i) {
      cache.relu1(t, i) = std::max(0.0, a1[i]);
      a1d[i] = cache.relu1(t, i) * cache.mask1(t, i);
    }
    std::copy(b2, b2 + M2, a2.begin());
    matvec_acc(W2, M2, M1, a1d.data(), a2.data());
    for (int i = 0; i < M2; ++i) {
      cache.relu2(t, i) = std::max(0.0, a2[i]);
      a2d[i] = cache.relu2(t, i) * cache.mask2(t, i);
    }
    if (cfg.head_continuous) {
      const auto& blk = layout.find("cont.W");
      std::copy(p + layout.find("cont.b").offset,
                p + layout.find("cont.b").offset + cfg.cont_dim,
                cache.heads.cont.row(t));
      matvec_acc(p + blk.offset, cfg.cont_dim, M2, a2d.data(),
                 cache.heads.cont.row(t));
    }
    if (cfg.head_discrete) {
      std::vector<double> logits(cfg.n_classes);
      std::copy(p + layout.find("disc.b").offset,
                p + layout.find("disc.b").offset + cfg.n_classes, logits.begin());
      matvec_acc(p + layout.find("disc.W").offset, cfg.n_classes, M2, a2d.data(),
                 logits.data());
      const auto probs = softmax(logits, 1.0);
      std::copy(probs.begin(), probs.end(), cache.heads.disc_probs.row(t));
    }
    if (cfg.head_evidential) {
      double* raw = cache.evid_raw.row(t);
      std::copy(p + layout.find("evid.b").offset,
                p + layout.find("evid.b").offset + 4 * cfg.evid_dim, raw);
      matvec_acc(p + layout.find("evid.W").offset, 4 * cfg.evid_dim, M2,
                 a2d.data(), raw);
      double* out = cache.heads.evid.row(t);
      for (int e = 0; e < cfg.evid_dim; ++e) {
        out[4 * e + 0] = raw[4 * e + 0];                          // gamma
        out[4 * e + 1] = softplus(raw[4 * e + 1]) + kEvidFloor;   // nu
        out[4 * e + 2] = 1.0 + softplus(raw[4 * e + 2]) + kEvidFloor;  // alpha
        out[4 * e + 3] = softplus(raw[4 * e + 3]) + kEvidFloor;   // beta
      }
    }
  }
}

// NIG negative log-likelihood plus the evidence regularizer; derivatives wrt
// the transformed (gamma, nu, alpha, beta).
double evid_loss_terms(double y, double gam, double nu, double alpha, double beta,
                       double lambda_reg, double* d_gnab) {
  const double e = y - gam;
  const double omega = 2.0 * beta * (1.0 + nu);
  const double S = nu * e * e + omega;
  const double nll = 0.5 * std::log(M_PI / nu) - alpha * std::log(omega) +
                     (alpha + 0.5) * std::log(S) + std::lgamma(alpha) -
                     std::lgamma(alpha + 0.5);
  const double reg = std::abs(e) * (2.0 * nu + alpha);
  if (d_gnab != nullptr) {
    const double sgn = e > 0.0 ? 1.0 : (e < 0.0 ? -1.0 : 0.0);
    d_gnab[0] = (alpha + 0.5) * (-2.0 * nu * e) / S - lambda_reg * sgn * (2.0 * nu + alpha);
    d_gnab[1] = -0.5 / nu - alpha * 2.0 * beta / omega +
                (alpha + 0.5) * (e * e + 2.0 * beta) / S + lambda_reg * 2.0 * std::abs(e);
    d_gnab[2] = -std::log(omega) + std::log(S) + digamma(alpha) -
                digamma(alpha + 0.5) + lambda_reg * std::abs(e);
    d_gnab[3] = -alpha * 2.0 * (1.0 + nu) / omega +
                (alpha + 0.5) * 2.0 * (1.0 + nu) / S;
  }
  return nll + lambda_reg * reg;
}

struct SampleLoss {
  double mse = 0.0, ce = 0.0, evid = 0.0;
};

// Loss (and optionally gradient) for one sequence. The 1/N normalizers are
// applied by the caller through inv_n factors so padding leaves everything
// unchanged.
SampleLoss sequence_loss_grad(const NetworkWeights& w, const WeightLayout& layout,
                              const Sample& sample, double inv_n, Rng* dropout_rng,
                              double* grad) {
  const auto& cfg = w.config;
  const int D = cfg.input_dim, H = cfg.gru_units;
  const int M1 = cfg.mlp1_units(), M2 = cfg.mlp2_units();
  const int T = sample.length;
  SeqCache cache;
  forward_sequence(w, layout, *sample.x, T, dropout_rng, cache);

  SampleLoss loss;
  // Gradients wrt post-dropout MLP2 activations per step.
  Matrix da2(T, M2);
  const double* p = w.params.data();

  if (cfg.head_continuous) {
    if (sample.z_cont == nullptr || sample.z_cont->cols != cfg.cont_dim)
      throw std::invalid_argument("loss: continuous target missing or mis-shaped");
    Matrix dcont(T, cfg.cont_dim);
    const double inv = inv_n / cfg.cont_dim;
    for (int t = 0; t < T; ++t)
      for (int ch = 0; ch < cfg.cont_dim; ++ch) {
        const double diff = cache.heads.cont(t, ch) - (*sample.z_cont)(t, ch);
        loss.mse += diff * diff * inv;
        dcont(t, ch) = 2.0 * diff * inv;
      }
    if (grad != nullptr) {
      const double* Wc = p + layout.find("cont.W").offset;
      double* gW = grad + layout.find("cont.W").offset;
      double* gb = grad + layout.find("cont.b").offset;
      for (int t = 0; t < T; ++t) {
        std::vector<double> a2d(M2);
        for (int i = 0; i < M2; ++i) a2d[i] = cache.relu2(t, i) * cache.mask2(t, i);
        outer_acc(gW, cfg.cont_dim, M2, dcont.row(t), a2d.data());
        for (int ch = 0; ch < cfg.cont_dim; ++ch) gb[ch] += dcont(t, ch);
        matvec_t_acc(Wc, cfg.cont_dim, M2, dcont.row(t), da2.row(t));
      }
    }
  }
  if (cfg.head_discrete) {
    if (sample.z_disc == nullptr ||
        static_cast<int>(sample.z_disc->size()) < T)
      throw std::invalid_argument("loss: discrete target missing");
    Matrix dlogits(T, cfg.n_classes);
    for (int t = 0; t < T; ++t) {
      const int y = (*sample.z_disc)[t];
      if (y < 0 || y >= cfg.n_classes)
        throw std::invalid_argument("loss: class label out of range");
      loss.ce += -std::log(std::max(cache.heads.disc_probs(t, y), 1e-300)) * inv_n;
      for (int k = 0; k < cfg.n_classes; ++k)
        dlogits(t, k) =
            (cache.heads.disc_probs(t, k) - (k == y ? 1.0 : 0.0)) * inv_n;
    }
    if (grad != nullptr) {
      const double* Wd = p + layout.find("disc.W").offset;
      double* gW = grad + layout.find("disc.W").offset;
      double* gb = grad + layout.find("disc.b").offset;
      for (int t = 0; t < T; ++t) {
        std::vector<double> a2d(M2);
        for (int i = 0; i < M2; ++i) a2d[i] = cache.relu2(t, i) * cache.mask2(t, i);
        outer_acc(gW, cfg.n_classes, M2, dlogits.row(t), a2d.data());
        for (int k = 0; k < cfg.n_classes; ++k) gb[k] += dlogits(t, k);
        matvec_t_acc(Wd, cfg.n_classes, M2, dlogits.row(t), da2.row(t));
      }
    }
  }
  if (cfg.head_evidential) {
    if (sample.z_cont == nullptr || sample.z_cont->cols != cfg.evid_dim)
      throw std::invalid_argument("loss: evidential target missing or mis-shaped");
    Matrix draw(T, 4 * cfg.evid_dim);
    const double inv = inv_n / cfg.evid_dim;
    for (int t = 0; t < T; ++t) {
      const double* out = cache.heads.evid.row(t);
      const double* raw = cache.evid_raw.row(t);
      for (int e = 0; e < cfg.evid_dim; ++e) {
        double d_gnab[4];
        const double l =
            evid_loss_terms((*sample.z_cont)(t, e), out[4 * e], out[4 * e + 1],
                            out[4 * e + 2], out[4 * e + 3], cfg.evid_lambda, d_gnab);
        loss.evid += l * inv;
        // chain through the softplus links
        draw(t, 4 * e + 0) = d_gnab[0] * inv;
        draw(t, 4 * e + 1) = d_gnab[1] * sigmoid(raw[4 * e + 1]) * inv;
        draw(t, 4 * e + 2) = d_gnab[2] * sigmoid(raw[4 * e + 2]) * inv;
        draw(t, 4 * e + 3) = d_gnab[3] * sigmoid(raw[4 * e + 3]) * inv;
      }
    }
    if (grad != nullptr) {
      const double* We = p + layout.find("evid.W").offset;
      double* gW = grad + layout.find("evid.W").offset;
      double* gb = grad + layout.find("evid.b").offset;
      for (int t = 0; t < T; ++t) {
        std::vector<double> a2d(M2);
        for (int i = 0; i < M2; ++i) a2d[i] = cache.relu2(t, i) * cache.mask2(t, i);
        outer_acc(gW, 4 * cfg.evid_dim, M2, draw.row(t), a2d.data());
        for (int k = 0; k < 4 * cfg.evid_dim; ++k) gb[k] += draw(t, k);
        matvec_t_acc(We, 4 * cfg.evid_dim, M2, draw.row(t), da2.row(t));
      }
    }
  }
  if (grad == nullptr) return loss;

  // Backprop through the MLPs into per-step summary gradients.
  const double* W1 = p + layout.find("mlp1.W").offset;
  const double* W2 = p + layout.find("mlp2.W").offset;
  double* gW1 = grad + layout.find("mlp1.W").offset;
  double* gb1 = grad + layout.find("mlp1.b").offset;
  double* gW2 = grad + layout.find("mlp2.W").offset;
  double* gb2 = grad + layout.find("mlp2.b").offset;

  Matrix dh_f(T, H), dh_b(T, H);
  std::vector<double> da1(M1), ds(2 * H), a1d(M1);
  for (int t = 0; t < T; ++t) {
    double* d2 = da2.row(t);
    for (int i = 0; i < M2; ++i) {
      d2[i] *= cache.mask2(t, i);
      if (cache.relu2(t, i) <= 0.0) d2[i] = 0.0;
    }
    for (int i = 0; i < M1; ++i) a1d[i] = cache.relu1(t, i) * cache.mask1(t, i);
    outer_acc(gW2, M2, M1, d2, a1d.data());
    for (int i = 0; i < M2; ++i) gb2[i] += d2[i];
    std::fill(da1.begin(), da1.end(), 0.0);
    matvec_t_acc(W2, M2, M1, d2, da1.data());
    for (int i = 0; i < M1; ++i) {
      da1[i] *= cache.mask1(t, i);
      if (cache.relu1(t, i) <= 0.0) da1[i] = 0.0;
    }
    outer_acc(gW1, M1, 2 * H, da1.data(), cache.s_drop.row(t));
    for (int i = 0; i < M1; ++i) gb1[i] += da1[i];
    std::fill(ds.begin(), ds.end(), 0.0);
    matvec_t_acc(W1, M1, 2 * H, da1.data(), ds.data());
    for (int i = 0; i < H; ++i) {
      dh_f(t, i) = ds[i] * cache.mask_rnn(t, i);
      dh_b(t, i) = ds[H + i] * cache.mask_rnn(t, H + i);
    }
  }

  // BPTT through each GRU direction.
  auto bptt = [&](const std::string& dir, bool forward_dir, const Matrix& h,
                  const Matrix& z, const Matrix& r, const Matrix& c,
                  const Matrix& dh_out) {
    const GruParams gp = gru_params(p, layout, dir);
    const GruGrads gg = gru_grads(grad, layout, dir);
    std::vector<double> carry(H, 0.0), dh(H), dz(H), dr(H), dc(H), drh(H),
        h_prev(H), rh(H), dh_prev(H);
    for (int step = T - 1; step >= 0; --step) {
      const int t = forward_dir ? step : T - 1 - step;
      const int t_prev = forward_dir ? t - 1 : t + 1;
      const bool has_prev = forward_dir ? (t_prev >= 0) : (t_prev < T);
      for (int i = 0; i < H; ++i) {
        h_prev[i] = has_prev ? h(t_prev, i) : 0.0;
        dh[i] = dh_out(t, i) + carry[i];
        dc[i] = dh[i] * z(t, i) * (1.0 - c(t, i) * c(t, i));
        dz[i] = dh[i] * (c(t, i) - h_prev[i]) * z(t, i) * (1.0 - z(t, i));
        dh_prev[i] = dh[i] * (1.0 - z(t, i));
        rh[i] = r(t, i) * h_prev[i];
      }
      const double* xt = sample.x->row(t);
      outer_acc(gg.Wh, H, D, dc.data(), xt);
      outer_acc(gg.Uh, H, H, dc.data(), rh.data());
      for (int i = 0; i < H; ++i) gg.bh[i] += dc[i];
      std::fill(drh.begin(), drh.end(), 0.0);
      matvec_t_acc(gp.Uh, H, H, dc.data(), drh.data());
      for (int i = 0; i < H; ++i) {
        dr[i] = drh[i] * h_prev[i] * r(t, i) * (1.0 - r(t, i));
        dh_prev[i] += drh[i] * r(t, i);
      }
      outer_acc(gg.Wr, H, D, dr.data(), xt);
      outer_acc(gg.Ur, H, H, dr.data(), h_prev.data());
      for (int i = 0; i < H; ++i) gg.br[i] += dr[i];
      matvec_t_acc(gp.Ur, H, H, dr.data(), dh_prev.data());
      outer_acc(gg.Wz, H, D, dz.data(), xt);
      outer_acc(gg.Uz, H, H, dz.data(), h_prev.data());
      for (int i = 0; i < H; ++i) gg.bz[i] += dz[i];
      matvec_t_acc(gp.Uz, H, H, dz.data(), dh_prev.data());
      carry = dh_prev;
    }
  };
  bptt("fwd", true, cache.h_f, cache.z_f, cache.r_f, cache.c_f, dh_f);
  bptt("bwd", false, cache.h_b, cache.z_b, cache.r_b, cache.c_b, dh_b);
  return loss;
}

}  // namespace

double digamma(double x) {
  double result = 0.0;
  while (x < 16.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  result += std::log(x) - 0.5 * inv -
            inv2 * (1.0 / 12.0 -
                    inv2 * (1.0 / 120.0 -
                            inv2 * (1.0 / 252.0 - inv2 / 240.0)));
  return result;
}

NetworkWeights init_weights(const NetworkConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const WeightLayout layout = WeightLayout::from_config(cfg);
  NetworkWeights w;
  w.config = cfg;
  w.params.assign(layout.total, 0.0);
  Rng rng(seed, 77);
  for (const auto& blk : layout.blocks) {
    double* p = w.params.data() + blk.offset;
    if (blk.cols == 1) continue;  // biases stay zero
    if (blk.name.find(".U") != std::string::npos) {
      // orthogonal recurrent kernels via Gram-Schmidt on a random matrix
      const int n = blk.rows;
      Matrix m(n, n);
      for (auto& v : m.data) v = rng.normal();
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < i; ++j) {
          double dot = 0.0;
          for (int k = 0; k < n; ++k) dot += m(i, k) * m(j, k);
          for (int k = 0; k < n; ++k) m(i, k) -= dot * m(j, k);
        }
        double norm = 0.0;
        for (int k = 0; k < n; ++k) norm += m(i, k) * m(i, k);
        norm = std::sqrt(norm);
        if (norm < 1e-12) norm = 1.0;
        for (int k = 0; k < n; ++k) m(i, k) /= norm;
      }
      std::copy(m.data.begin(), m.data.end(), p);
    } else {
      const double limit = std::sqrt(6.0 / (blk.rows + blk.cols));
      for (size_t i = 0; i < static_cast<size_t>(blk.rows) * blk.cols; ++i)
        p[i] = rng.uniform(-limit, limit);
    }
  }
  return w;
}

HeadOutputs forward(const NetworkWeights& w, const Matrix& x, int length) {
  const WeightLayout layout = WeightLayout::from_config(w.config);
  SeqCache cache;
  forward_sequence(w, layout, x, length, nullptr, cache);
  return std::move(cache.heads);
}

LossBreakdown batch_loss(const NetworkWeights& w, std::span<const Sample> batch,
                         std::vector<double>* grad_out, Rng* dropout_rng,
                         int threads) {
  const WeightLayout layout = WeightLayout::from_config(w.config);
  size_t n_valid = 0;
  for (const auto& s : batch) n_valid += static_cast<size_t>(s.length);
  if (n_valid == 0) throw std::invalid_argument("batch_loss: empty batch");
  const double inv_n = 1.0 / static_cast<double>(n_valid);

  // Canonical order: sort by sample id so the reduction never depends on
  // presentation order.
  std::vector<size_t> order(batch.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return batch[a].id < batch[b].id; });

  // Per-sample dropout streams keyed by id: identical whatever the
  // scheduling.
  std::uint64_t mask_base = 0;
  if (dropout_rng != nullptr) mask_base = dropout_rng->next_u64();

  if (grad_out != nullptr) grad_out->assign(layout.total, 0.0);

  LossBreakdown out;
  out.n_valid = n_valid;

  const size_t chunk = 8;
  std::vector<std::vector<double>> buffers;
  std::vector<SampleLoss> losses(batch.size());

  for (size_t start = 0; start < order.size(); start += chunk) {
    const size_t end = std::min(order.size(), start + chunk);
    const bool parallel = threads != 1 && grad_out != nullptr && end - start > 1;
    if (grad_out != nullptr) {
      buffers.resize(end - start);
      for (auto& b : buffers) b.assign(layout.total, 0.0);
    }
    std::exception_ptr pending = nullptr;
#pragma omp parallel for schedule(static) if (parallel)
    for (size_t k = start; k < end; ++k) {
      try {
        const Sample& s = batch[order[k]];
        Rng sample_rng(mask_base, static_cast<std::uint64_t>(s.id));
        Rng* rng_ptr = dropout_rng != nullptr ? &sample_rng : nullptr;
        double* g = grad_out != nullptr ? buffers[k - start].data() : nullptr;
        losses[k] = sequence_loss_grad(w, layout, s, inv_n, rng_ptr, g);
      } catch (...) {
#pragma omp critical
        if (pending == nullptr) pending = std::current_exception();
      }
    }
    if (pending != nullptr) std::rethrow_exception(pending);
    if (grad_out != nullptr) {
      for (size_t k = start; k < end; ++k) {
        const auto& b = buffers[k - start];
        for (size_t i = 0; i < layout.total; ++i) (*grad_out)[i] += b[i];
      }
    }
  }
  for (size_t k = 0; k < batch.size(); ++k) {
    out.mse += losses[k].mse;
    out.cross_entropy += losses[k].ce;
    out.evidential += losses[k].evid;
  }
  out.total = out.mse + out.cross_entropy + out.evidential;
  if (!std::isfinite(out.total)) throw NumericError("batch_loss: non-finite loss");
  if (grad_out != nullptr) {
    for (double g : *grad_out)
      if (!std::isfinite(g)) throw NumericError("batch_loss: non-finite gradient");
  }
  return out;
}

namespace {

std::vector<Sample> bundle_samples(const DatasetBundle& b, bool need_targets) {
  std::vector<Sample> samples(b.agents.size());
  for (size_t i = 0; i < b.agents.size(); ++i) {
    const auto& a = b.agents[i];
    samples[i].x = &a.y_enc;
    samples[i].z_cont = need_targets && b.n_cont > 0 ? &a.z_cont : nullptr;
    samples[i].z_disc = need_targets && b.n_classes > 0 ? &a.z_disc : nullptr;
    samples[i].length = a.length;
    samples[i].id = static_cast<int>(i);
  }
  return samples;
}

}  // namespace

TrainResult train(const NetworkConfig& cfg, const DatasetBundle& train_bundle,
                  const DatasetBundle& val_bundle, std::uint64_t seed,
                  int threads) {
  cfg.validate();
  if (train_bundle.input_dim != cfg.input_dim)
    throw std::invalid_argument("train: dataset/model input_dim mismatch");
  const auto t0 = std::chrono::steady_clock::now();
  const WeightLayout layout = WeightLayout::from_config(cfg);
  NetworkWeights w = init_weights(cfg, seed);

  const auto train_samples = bundle_samples(train_bundle, true);
  const auto val_samples = bundle_samples(val_bundle, true);

  // Adam with the standard moment defaults.
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<double> m(layout.total, 0.0), v(layout.total, 0.0);
  std::vector<double> grad;
  long step_count = 0;

  TrainResult result;
  TrainReport& report = result.report;
  NetworkWeights best = w;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  report.stop_reason = "max_epochs";

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    Rng shuffle_rng(seed, 1000003ULL + static_cast<std::uint64_t>(epoch));
    const auto perm = shuffle_rng.permutation(static_cast<int>(train_samples.size()));
    Rng dropout_rng(seed, 2000003ULL + static_cast<std::uint64_t>(epoch));
    const bool use_dropout =
        cfg.dropout_rnn > 0.0 || cfg.dropout_mlp1 > 0.0 || cfg.dropout_mlp2 > 0.0;

    double epoch_loss = 0.0;
    int n_batches = 0;
    for (size_t start = 0; start < perm.size();
         start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end =
          std::min(perm.size(), start + static_cast<size_t>(cfg.batch_size));
      std::vector<Sample> batch;
      batch.reserve(end - start);
      for (size_t i = start; i < end; ++i) batch.push_back(train_samples[perm[i]]);
      LossBreakdown lb;
      try {
        lb = batch_loss(w, batch, &grad, use_dropout ? &dropout_rng : nullptr,
                        threads);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " (training diverged at epoch " +
                           std::to_string(epoch) + ")");
      }
      epoch_loss += lb.total;
      ++n_batches;

      // global-norm clip
      double norm2 = 0.0;
      for (double g : grad) norm2 += g * g;
      const double norm = std::sqrt(norm2);
      const double scale = norm > cfg.grad_clip ? cfg.grad_clip / norm : 1.0;

      ++step_count;
      const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
      const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
      for (size_t i = 0; i < layout.total; ++i) {
        const double g = grad[i] * scale;
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        w.params[i] -= cfg.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
      }
    }
    report.train_losses.push_back(epoch_loss / std::max(1, n_batches));

    const LossBreakdown vb = batch_loss(w, val_samples, nullptr, nullptr, threads);
    report.val_losses.push_back(vb.total);
    if (vb.total < best_val) {
      best_val = vb.total;
      best = w;
      best_epoch = epoch;
    }
    if (epoch - best_epoch >= cfg.patience) {
      report.stop_reason = "early_stop";
      break;
    }
  }
  report.best_epoch = best_epoch;
  result.weights = std::move(best);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

InferResult infer(const NetworkWeights& w, const Matrix& x, int length) {
  InferResult out;
  HeadOutputs h = forward(w, x, length);
  out.cont = std::move(h.cont);
  out.disc_probs = std::move(h.disc_probs);
  out.evid = std::move(h.evid);
  if (w.config.head_discrete) {
    out.labels.resize(length);
    for (int t = 0; t < length; ++t) {
      const double* row = out.disc_probs.row(t);
      int best = 0;
      for (int k = 1; k < w.config.n_classes; ++k)
        if (row[k] > row[best]) best = k;
      out.labels[t] = best;
    }
  }
  if (w.config.head_evidential) {
    const int E = w.config.evid_dim;
    out.aleatoric = Matrix(length, E);
    out.epistemic = Matrix(length, E);
    for (int t = 0; t < length; ++t)
      for (int e = 0; e < E; ++e) {
        const double nu = out.evid(t, 4 * e + 1);
        const double alpha = out.evid(t, 4 * e + 2);
        const double beta = out.evid(t, 4 * e + 3);
        out.aleatoric(t, e) = beta / (alpha - 1.0);
        out.epistemic(t, e) = beta / (nu * (alpha - 1.0));
      }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints: config manifest plus the parameters stored as an exact
// f32 hi/lo pair in the dataset payload container.

namespace {

void config_to_json(const NetworkConfig& c, json& j) {
  j["input_dim"] = c.input_dim;
  j["gru_units"] = c.gru_units;
  j["mlp1"] = c.mlp1;
  j["mlp2"] = c.mlp2;
  j["head_continuous"] = c.head_continuous;
  j["cont_dim"] = c.cont_dim;
  j["head_discrete"] = c.head_discrete;
  j["n_classes"] = c.n_classes;
  j["head_evidential"] = c.head_evidential;
  j["evid_dim"] = c.evid_dim;
  j["dropout_rnn"] = c.dropout_rnn;
  j["dropout_mlp1"] = c.dropout_mlp1;
  j["dropout_mlp2"] = c.dropout_mlp2;
  j["learning_rate"] = c.learning_rate;
  j["batch_size"] = c.batch_size;
  j["max_epochs"] = c.max_epochs;
  j["patience"] = c.patience;
  j["grad_clip"] = c.grad_clip;
  j["evid_lambda"] = c.evid_lambda;
}

NetworkConfig config_from_json(const json& j) {
  NetworkConfig c;
  c.input_dim = j.at("input_dim");
  c.gru_units = j.at("gru_units");
  c.mlp1 = j.at("mlp1");
  c.mlp2 = j.at("mlp2");
  c.head_continuous = j.at("head_continuous");
  c.cont_dim = j.at("cont_dim");
  c.head_discrete = j.at("head_discrete");
  c.n_classes = j.at("n_classes");
  c.head_evidential = j.at("head_evidential");
  c.evid_dim = j.at("evid_dim");
  c.dropout_rnn = j.at("dropout_rnn");
  c.dropout_mlp1 = j.at("dropout_mlp1");
  c.dropout_mlp2 = j.at("dropout_mlp2");
  c.learning_rate = j.at("learning_rate");
  c.batch_size = j.at("batch_size");
  c.max_epochs = j.at("max_epochs");
  c.patience = j.at("patience");
  c.grad_clip = j.at("grad_clip");
  c.evid_lambda = j.at("evid_lambda");
  return c;
}

constexpr char kCkptMagic[4] = {'L', 'A', 'S', 'E'};

void write_i32_file(const std::string& path, const std::vector<std::int32_t>& data) {
  std::ofstream f(path, std::ios::binary);
  f.write(kCkptMagic, 4);
  const std::uint32_t version = 1, nd = 1;
  const auto n = static_cast<std::uint32_t>(data.size());
  f.write(reinterpret_cast<const char*>(&version), 4);
  f.write(reinterpret_cast<const char*>(&nd), 4);
  f.write(reinterpret_cast<const char*>(&n), 4);
  f.write(reinterpret_cast<const char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(std::int32_t)));
}

std::vector<std::int32_t> read_i32_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError(DataErrorCode::MissingFile, path + ": cannot open");
  char magic[4];
  std::uint32_t version = 0, nd = 0, n = 0;
  if (!f.read(magic, 4) || std::memcmp(magic, kCkptMagic, 4) != 0)
    throw DataError(DataErrorCode::MagicMismatch, path + ": bad magic");
  f.read(reinterpret_cast<char*>(&version), 4);
  if (version != 1)
    throw DataError(DataErrorCode::VersionMismatch, path + ": unsupported version");
  f.read(reinterpret_cast<char*>(&nd), 4);
  f.read(reinterpret_cast<char*>(&n), 4);
  std::vector<std::int32_t> data(n);
  if (!f.read(reinterpret_cast<char*>(data.data()),
              static_cast<std::streamsize>(n * sizeof(std::int32_t))))
    throw DataError(DataErrorCode::Truncated, path + ": truncated payload");
  return data;
}

}  // namespace

void save_checkpoint(const NetworkWeights& w, const std::string& dir) {
  std::filesystem::create_directories(dir);
  json manifest;
  config_to_json(w.config, manifest["config"]);
  manifest["n_params"] = w.params.size();
  std::ofstream mf(dir + "/manifest.json");
  mf << manifest.dump(2) << "\n";
  // Each f64 weight is stored as two little-endian i32 words so the
  // round-trip is bit-exact while staying in the shared payload container.
  std::vector<std::int32_t> words(2 * w.params.size());
  std::memcpy(words.data(), w.params.data(), w.params.size() * sizeof(double));
  write_i32_file(dir + "/weights.bin", words);
}

NetworkWeights load_checkpoint(const std::string& dir) {
  std::ifstream mf(dir + "/manifest.json");
  if (!mf)
    throw DataError(DataErrorCode::MissingFile, dir + "/manifest.json: cannot open");
  json manifest = json::parse(mf);
  NetworkWeights w;
  w.config = config_from_json(manifest.at("config"));
  const WeightLayout layout = WeightLayout::from_config(w.config);
  const auto words = read_i32_file(dir + "/weights.bin");
  if (words.size() != 2 * layout.total)
    throw DataError(DataErrorCode::DimMismatch,
                    dir + ": weight count does not match config");
  w.params.resize(layout.total);
  std::memcpy(w.params.data(), words.data(), layout.total * sizeof(double));
  return w;
}

}  // namespace lasenet
