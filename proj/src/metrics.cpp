#include "lasenet/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace lasenet::metrics {

namespace {
inline bool masked_in(std::span<const bool> mask, size_t i) {
  return mask.empty() || mask[i];
}
}  // namespace

double rmse(std::span<const double> z_true, std::span<const double> z_pred,
            std::span<const bool> mask) {
  if (z_true.size() != z_pred.size()) throw NumericError("rmse: length mismatch");
  double acc = 0.0;
  size_t n = 0;
  for (size_t i = 0; i < z_true.size(); ++i) {
    if (!masked_in(mask, i)) continue;
    const double d = z_true[i] - z_pred[i];
    acc += d * d;
    ++n;
  }
  if (n == 0) throw NumericError("rmse: empty mask");
  return std::sqrt(acc / static_cast<double>(n));
}

double log_loss(std::span<const int> labels, const Matrix& probs,
                std::span<const bool> mask) {
  if (static_cast<int>(labels.size()) != probs.rows)
    throw NumericError("log_loss: length mismatch");
  double acc = 0.0;
  size_t n = 0;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (!masked_in(mask, i)) continue;
    const int y = labels[i];
    if (y < 0 || y >= probs.cols) throw NumericError("log_loss: label out of range");
    const double p = std::clamp(probs(static_cast<int>(i), y), 1e-12, 1.0);
    acc -= std::log(p);
    ++n;
  }
  if (n == 0) throw NumericError("log_loss: empty mask");
  return acc / static_cast<double>(n);
}

double balanced_accuracy(std::span<const int> labels, std::span<const int> preds,
                         int n_classes, std::span<const bool> mask) {
  if (labels.size() != preds.size()) throw NumericError("balanced_accuracy: length mismatch");
  std::vector<size_t> support(n_classes, 0), hits(n_classes, 0);
  size_t n = 0;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (!masked_in(mask, i)) continue;
    const int y = labels[i];
    if (y < 0 || y >= n_classes || preds[i] < 0 || preds[i] >= n_classes)
      throw NumericError("balanced_accuracy: label out of range");
    ++support[y];
    if (preds[i] == y) ++hits[y];
    ++n;
  }
  if (n == 0) throw NumericError("balanced_accuracy: no labels");
  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < n_classes; ++c) {
    if (support[c] == 0) continue;
    sum += static_cast<double>(hits[c]) / static_cast<double>(support[c]);
    ++present;
  }
  return sum / present;
}

double accuracy(std::span<const int> labels, std::span<const int> preds,
                std::span<const bool> mask) {
  if (labels.size() != preds.size()) throw NumericError("accuracy: length mismatch");
  size_t hits = 0, n = 0;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (!masked_in(mask, i)) continue;
    if (labels[i] == preds[i]) ++hits;
    ++n;
  }
  if (n == 0) throw NumericError("accuracy: no labels");
  return static_cast<double>(hits) / static_cast<double>(n);
}

int argmax_label(std::span<const double> probs) {
  int best = 0;
  for (size_t i = 1; i < probs.size(); ++i)
    if (probs[i] > probs[best]) best = static_cast<int>(i);
  return best;
}

RecoveryStats recovery_stats(std::span<const double> theta_true,
                             std::span<const double> theta_hat) {
  if (theta_true.size() != theta_hat.size() || theta_true.size() < 3)
    throw NumericError("recovery_stats: need >= 3 paired values");
  const auto n = static_cast<double>(theta_true.size());
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < theta_true.size(); ++i) {
    mx += theta_true[i];
    my += theta_hat[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (size_t i = 0; i < theta_true.size(); ++i) {
    const double dx = theta_true[i] - mx;
    const double dy = theta_hat[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  RecoveryStats out;
  if (sxx == 0.0) {
    out.degenerate = true;
    return out;
  }
  // Least-squares line hat = slope*true + intercept; R^2 of that regression.
  out.slope = sxy / sxx;
  out.intercept = my - out.slope * mx;
  if (syy == 0.0) {
    out.pearson_r = 0.0;
    out.r_squared = 0.0;
    out.degenerate = true;
    return out;
  }
  out.pearson_r = sxy / std::sqrt(sxx * syy);
  out.r_squared = out.pearson_r * out.pearson_r;
  return out;
}

void mean_sd2(std::span<const double> xs, double& mean, double& sd2) {
  mean = 0.0;
  sd2 = 0.0;
  if (xs.empty()) return;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= static_cast<double>(xs.size());
  sd2 = 2.0 * std::sqrt(var);
}

}  // namespace lasenet::metrics
