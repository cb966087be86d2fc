// Compares the serial reference path against the OpenMP path for the two
// hot kernels (dataset generation and batched loss/gradient), checking that
// the parallel results are bit-identical to the serial ones.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#include "lasenet/dataset.hpp"
#include "lasenet/network.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace lasenet;

namespace {

double now_ms() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch())
      .count();
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace

int main(int argc, char** argv) {
  int n_agents = 128, n_trials = 200, gru = 32;
  if (argc > 1) n_agents = std::atoi(argv[1]);
  if (argc > 2) n_trials = std::atoi(argv[2]);
  if (argc > 3) gru = std::atoi(argv[3]);

  std::printf("kernel benchmark: %d agents x %d trials, %d GRU units, "
              "%d thread(s) available\n",
              n_agents, n_trials, gru, max_threads());

  // dataset generation (parallel agent loop inside generate)
  const PriorSpec prior = PriorSpec::default_for(ModelId::FourParamRL);
  double t0 = now_ms();
  DatasetBundle bundle =
      generate(ModelId::FourParamRL, prior, n_agents, n_trials, 42);
  const double gen_ms = now_ms() - t0;
  std::printf("generate: %.1f ms (%.2f agents/ms)\n", gen_ms,
              n_agents / gen_ms);

  NetworkConfig cfg = NetworkConfig::for_model(ModelId::FourParamRL, gru);
  NetworkWeights w = init_weights(cfg, 7);
  std::vector<Sample> samples(bundle.agents.size());
  for (size_t i = 0; i < bundle.agents.size(); ++i) {
    samples[i].x = &bundle.agents[i].y_enc;
    samples[i].z_cont = &bundle.agents[i].z_cont;
    samples[i].length = bundle.agents[i].length;
    samples[i].id = static_cast<int>(i);
  }

  std::vector<double> grad_serial, grad_parallel;
  t0 = now_ms();
  const LossBreakdown serial = batch_loss(w, samples, &grad_serial, nullptr, 1);
  const double serial_ms = now_ms() - t0;
  t0 = now_ms();
  const LossBreakdown parallel =
      batch_loss(w, samples, &grad_parallel, nullptr, max_threads());
  const double parallel_ms = now_ms() - t0;

  const bool loss_match = std::memcmp(&serial.total, &parallel.total,
                                      sizeof(double)) == 0;
  bool grad_match = grad_serial.size() == grad_parallel.size();
  if (grad_match)
    grad_match = std::memcmp(grad_serial.data(), grad_parallel.data(),
                             grad_serial.size() * sizeof(double)) == 0;

  std::printf("batch_loss serial:   %.1f ms (loss %.6f)\n", serial_ms,
              serial.total);
  std::printf("batch_loss parallel: %.1f ms (loss %.6f, speedup %.2fx)\n",
              parallel_ms, parallel.total, serial_ms / parallel_ms);
  std::printf("bitwise match: loss %s, gradient %s\n",
              loss_match ? "yes" : "NO", grad_match ? "yes" : "NO");
  return (loss_match && grad_match) ? 0 : 1;
}
