#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lasenet/cogmodels.hpp"
#include "lasenet/numcore.hpp"

namespace lasenet {

enum class DataErrorCode {
  MagicMismatch,
  VersionMismatch,
  Truncated,
  DimMismatch,
  MissingFile,
  BadCsv,
};

class DataError : public std::runtime_error {
 public:
  DataError(DataErrorCode code, const std::string& what)
      : std::runtime_error(what), code(code) {}
  DataErrorCode code;
};

struct PriorEntry {
  enum class Kind { Uniform, Beta, Normal, Fixed };
  Kind kind = Kind::Uniform;
  // Uniform: a=lo, b=hi. Beta: shape a, b (sample scaled to the parameter's
  // box bounds). Normal: mean a, sd b (clipped to bounds). Fixed: value a.
  double a = 0.0;
  double b = 1.0;
};

struct PriorSpec {
  std::vector<PriorEntry> entries;  // one per scalar parameter (non GLM-HMM)
  // GLM-HMM generative family: transition skewness and weight noise.
  int glmhmm_skew = 0;        // -1, 0, +1
  double glmhmm_sigma = 0.5;  // sd around the canonical state weights
  double glmhmm_stay = 0.90;

  static PriorSpec default_for(ModelId id);
  std::vector<double> sample(ModelId id, Rng& rng) const;
  double log_pdf(ModelId id, const std::vector<double>& theta) const;
};

// Canonical 3-state transition matrix for a skewness level: diagonal `stay`,
// off-diagonal mass tilted by exp(skew * preference). skew = 0 gives uniform
// state occupancy.
Matrix glmhmm_transition_family(int skew, double stay);
// Canonical per-state GLM weight means (engaged, biased-left, biased-right).
Matrix glmhmm_weight_means();

struct AgentData {
  Matrix y_enc;                // T x input_dim (Table 1 encoding)
  Matrix z_cont;               // T x n_cont
  std::vector<int> z_disc;     // empty when no discrete channel
  std::vector<double> theta;
  int length = 0;
};

struct DatasetBundle {
  ModelId model_id = ModelId::FourParamRL;
  int n_trials = 0;  // maximum length; agents may be shorter (right-padded)
  int input_dim = 0;
  int n_cont = 0;
  int n_classes = 0;
  std::uint64_t seed = 0;
  std::string prior_desc;
  std::vector<AgentData> agents;
};

// Table 1 input encoding of a raw trial sequence.
Matrix encode_input(const TrialSequence& y);

DatasetBundle generate(ModelId model_id, const PriorSpec& prior, int n_agents,
                       int n_trials, std::uint64_t seed,
                       const EnvConfig& env = EnvConfig{});

void save(const DatasetBundle& bundle, const std::string& dir);
DatasetBundle load(const std::string& dir);

struct SplitResult {
  DatasetBundle train;
  DatasetBundle val;
};
SplitResult split(const DatasetBundle& bundle, double val_fraction,
                  std::uint64_t seed);

// Behavioral CSV ingestion: header row required; column_map maps the roles
// "agent", "action", "reward", "stimulus" (and "stimulus2", ... for
// multi-column stimuli) to CSV column names. Returns encoded sequences, no
// ground-truth channels.
struct IngestedData {
  ModelId model_id;
  std::vector<Matrix> y_enc;  // per agent, T_i x input_dim
};
IngestedData ingest_csv(const std::string& path, ModelId model_id,
                        const std::map<std::string, std::string>& column_map);

// Exports observables of a bundle in the same CSV schema ingest_csv reads.
void export_csv(const DatasetBundle& bundle, const std::string& path);

}  // namespace lasenet
