#pragma once

#include <optional>
#include <span>
#include <vector>

#include "lasenet/numcore.hpp"

namespace lasenet::metrics {

// Masked root-mean-squared error over one continuous channel.
double rmse(std::span<const double> z_true, std::span<const double> z_pred,
            std::span<const bool> mask = {});

// Mean negative log-likelihood of the true labels under predicted
// probability vectors (row-major T x n_classes). Probabilities are clipped
// to [1e-12, 1] before the log.
double log_loss(std::span<const int> labels, const Matrix& probs,
                std::span<const bool> mask = {});

// Macro-average of per-class recall; classes absent from the labels are
// excluded from the mean.
double balanced_accuracy(std::span<const int> labels, std::span<const int> preds,
                         int n_classes, std::span<const bool> mask = {});

double accuracy(std::span<const int> labels, std::span<const int> preds,
                std::span<const bool> mask = {});

// Argmax over a probability row; ties resolve to the lowest index.
int argmax_label(std::span<const double> probs);

struct RecoveryStats {
  double pearson_r = 0.0;
  double r_squared = 0.0;   // from the fitted least-squares line
  double slope = 0.0;
  double intercept = 0.0;
  bool degenerate = false;  // zero variance in the truth; r undefined
};

RecoveryStats recovery_stats(std::span<const double> theta_true,
                             std::span<const double> theta_hat);

struct EvalReport {
  std::vector<double> per_agent_rmse;      // empty when no continuous channel
  std::vector<double> per_agent_log_loss;  // empty when no discrete channel
  std::vector<double> per_agent_balacc;
  std::vector<double> per_agent_accuracy;
  double mean_rmse = 0.0, sd2_rmse = 0.0;
  double mean_log_loss = 0.0, sd2_log_loss = 0.0;
  double mean_balacc = 0.0, sd2_balacc = 0.0;
  double mean_accuracy = 0.0, sd2_accuracy = 0.0;
};

// mean and 2*SD of a sample
void mean_sd2(std::span<const double> xs, double& mean, double& sd2);

}  // namespace lasenet::metrics
