#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lasenet {

// Deterministic splittable RNG (xoshiro256++ seeded through splitmix64).
// One sub-stream per simulated agent keeps runs reproducible regardless
// of iteration order.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  // Independent sub-stream derived from this generator's seed.
  Rng split(std::uint64_t stream) const { return Rng(seed_, stream); }

  std::uint64_t next_u64();
  double uniform(double lo = 0.0, double hi = 1.0);
  double normal(double mu = 0.0, double sigma = 1.0);
  double gamma(double shape);
  double beta(double a, double b);
  bool bernoulli(double p);
  int categorical(std::span<const double> weights);
  std::vector<int> permutation(int n);

 private:
  std::uint64_t seed_;
  std::uint64_t state_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Row-major dense matrix of doubles.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

  double& operator()(int i, int j) { return data[static_cast<size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return data[static_cast<size_t>(i) * cols + j]; }
  double* row(int i) { return data.data() + static_cast<size_t>(i) * cols; }
  const double* row(int i) const { return data.data() + static_cast<size_t>(i) * cols; }
};

Matrix matmul(const Matrix& a, const Matrix& b);

double log_sum_exp(std::span<const double> xs);
std::vector<double> softmax(std::span<const double> xs, double inverse_temperature = 1.0);
double sigmoid(double x);

// Central-difference gradient, the test oracle for every analytic gradient
// in this repository.
std::vector<double> finite_difference_gradient(
    const std::function<double(const std::vector<double>&)>& f,
    const std::vector<double>& x, double h);

class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace lasenet
