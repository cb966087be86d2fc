#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lasenet/dataset.hpp"
#include "lasenet/numcore.hpp"

namespace lasenet {

struct NetworkConfig {
  int input_dim = 2;
  int gru_units = 128;  // H per direction
  int mlp1 = 0;         // defaults to H
  int mlp2 = 0;         // defaults to H/2 (pyramidal)
  bool head_continuous = false;
  int cont_dim = 0;
  bool head_discrete = false;
  int n_classes = 0;
  bool head_evidential = false;
  int evid_dim = 0;  // 4*evid_dim raw outputs
  double dropout_rnn = 0.15;
  double dropout_mlp1 = 0.05;
  double dropout_mlp2 = 0.03;
  double learning_rate = 3e-4;
  int batch_size = 128;
  int max_epochs = 600;
  int patience = 35;
  double grad_clip = 5.0;
  double evid_lambda = 0.01;

  int mlp1_units() const { return mlp1 > 0 ? mlp1 : gru_units; }
  int mlp2_units() const { return mlp2 > 0 ? mlp2 : gru_units / 2; }
  void validate() const;

  // Head layout matching a model's latent schema.
  static NetworkConfig for_model(ModelId id, int gru_units,
                                 bool evidential = false);
};

// Offsets of the named parameter blocks inside the flat parameter vector.
struct WeightLayout {
  struct Block {
    std::string name;
    size_t offset;
    int rows;
    int cols;  // cols == 1 for bias vectors
  };
  std::vector<Block> blocks;
  size_t total = 0;

  static WeightLayout from_config(const NetworkConfig& cfg);
  const Block& find(const std::string& name) const;
};

struct NetworkWeights {
  NetworkConfig config;
  std::vector<double> params;  // flat, WeightLayout order
};

NetworkWeights init_weights(const NetworkConfig& cfg, std::uint64_t seed);

struct HeadOutputs {
  Matrix cont;        // T x cont_dim
  Matrix disc_probs;  // T x n_classes
  // T x 4*evid_dim, transformed NIG parameters per target channel,
  // interleaved (gamma, nu, alpha, beta).
  Matrix evid;
};

// One training/evaluation sample. Targets may be null for pure inference.
struct Sample {
  const Matrix* x = nullptr;            // T x input_dim
  const Matrix* z_cont = nullptr;       // T x cont_dim
  const std::vector<int>* z_disc = nullptr;
  int length = 0;  // valid (unpadded) steps
  int id = 0;      // canonical agent index; fixes the reduction order
};

struct LossBreakdown {
  double total = 0.0;
  double mse = 0.0;
  double cross_entropy = 0.0;
  double evidential = 0.0;
  size_t n_valid = 0;
};

HeadOutputs forward(const NetworkWeights& w, const Matrix& x, int length);

// Pooled loss over the valid steps of a batch; when grad_out is non-null the
// analytic gradient (flat, same layout as params) is written into it.
// Samples are reduced in canonical id order regardless of presentation
// order. dropout_rng enables inverted dropout (training mode).
LossBreakdown batch_loss(const NetworkWeights& w, std::span<const Sample> batch,
                         std::vector<double>* grad_out = nullptr,
                         Rng* dropout_rng = nullptr, int threads = 1);

struct TrainReport {
  std::vector<double> train_losses;
  std::vector<double> val_losses;
  int best_epoch = -1;
  std::string stop_reason;
  double wall_seconds = 0.0;
};

struct TrainResult {
  NetworkWeights weights;
  TrainReport report;
};

TrainResult train(const NetworkConfig& cfg, const DatasetBundle& train_bundle,
                  const DatasetBundle& val_bundle, std::uint64_t seed,
                  int threads = 1);

struct InferResult {
  Matrix cont;
  Matrix disc_probs;
  std::vector<int> labels;  // argmax, ties to lowest index
  Matrix evid;              // transformed NIG parameters
  Matrix aleatoric;         // beta/(alpha-1) per channel
  Matrix epistemic;         // beta/(nu*(alpha-1)) per channel
};

InferResult infer(const NetworkWeights& w, const Matrix& x, int length);

void save_checkpoint(const NetworkWeights& w, const std::string& dir);
NetworkWeights load_checkpoint(const std::string& dir);

double digamma(double x);

}  // namespace lasenet
