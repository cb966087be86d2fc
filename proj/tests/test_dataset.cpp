#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <algorithm>
#include <filesystem>
#include <fstream>

#include "lasenet/dataset.hpp"

using namespace lasenet;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("lasenet_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("input encoding dimensions match the model table") {
  CHECK(input_dim(ModelId::FourParamRL) == 2);
  CHECK(input_dim(ModelId::MetaRL) == 2);
  CHECK(input_dim(ModelId::Hrl) == 5);
  CHECK(input_dim(ModelId::Weber) == 9);
  CHECK(input_dim(ModelId::GlmHmm) == 3);
}

TEST_CASE("encoding values: signed actions, copied rewards, stimulus block") {
  TrialSequence y;
  y.model_id = ModelId::FourParamRL;
  y.n_trials = 2;
  y.actions = {0, 1};
  y.rewards = {1.0, 0.0};
  y.stimulus = Matrix(2, 0);
  const Matrix x = encode_input(y);
  REQUIRE(x.cols == 2);
  CHECK(x(0, 0) == doctest::Approx(-1.0));
  CHECK(x(0, 1) == doctest::Approx(1.0));
  CHECK(x(1, 0) == doctest::Approx(1.0));
  CHECK(x(1, 1) == doctest::Approx(0.0));

  TrialSequence w;
  w.model_id = ModelId::Weber;
  w.n_trials = 1;
  w.actions = {3};
  w.rewards = {1.0};
  w.stimulus = Matrix(1, 7);
  w.stimulus(0, 1) = 1.0;  // stimulus index 1
  w.stimulus(0, 3 + 3) = 1.0;  // action one-hot
  const Matrix xw = encode_input(w);
  REQUIRE(xw.cols == 9);
  CHECK(xw(0, 0) == doctest::Approx((3 - 1.5) / 1.5));  // scaled 4-way action
  CHECK(xw(0, 1) == doctest::Approx(1.0));              // reward
  CHECK(xw(0, 3) == doctest::Approx(1.0));              // stimulus one-hot
  CHECK(xw(0, 8) == doctest::Approx(1.0));              // action one-hot
}

TEST_CASE("generate is deterministic and schema-clean for every model") {
  for (ModelId id : {ModelId::FourParamRL, ModelId::MetaRL, ModelId::Hrl,
                     ModelId::Weber, ModelId::GlmHmm}) {
    const PriorSpec prior = PriorSpec::default_for(id);
    const DatasetBundle a = generate(id, prior, 6, 30, 99);
    const DatasetBundle b = generate(id, prior, 6, 30, 99);
    REQUIRE(a.agents.size() == 6);
    CHECK(a.input_dim == input_dim(id));
    for (size_t i = 0; i < 6; ++i) {
      CHECK(a.agents[i].y_enc.data == b.agents[i].y_enc.data);
      CHECK(a.agents[i].theta == b.agents[i].theta);
      for (double v : a.agents[i].y_enc.data) CHECK(std::isfinite(v));
      for (int z : a.agents[i].z_disc) {
        CHECK(z >= 0);
        CHECK(z < std::max(1, a.n_classes));
      }
    }
  }
}

TEST_CASE("save/load round-trips within f32 quantization, exactly thereafter") {
  const auto dir = temp_dir("roundtrip");
  const PriorSpec prior = PriorSpec::default_for(ModelId::Hrl);
  const DatasetBundle b = generate(ModelId::Hrl, prior, 4, 25, 7);
  save(b, dir.string());
  const DatasetBundle r1 = load(dir.string());
  REQUIRE(r1.agents.size() == b.agents.size());
  CHECK(r1.model_id == b.model_id);
  CHECK(r1.seed == b.seed);
  for (size_t i = 0; i < b.agents.size(); ++i) {
    CHECK(r1.agents[i].length == b.agents[i].length);
    CHECK(r1.agents[i].z_disc == b.agents[i].z_disc);
    for (size_t k = 0; k < b.agents[i].y_enc.data.size(); ++k)
      CHECK(r1.agents[i].y_enc.data[k] ==
            doctest::Approx(b.agents[i].y_enc.data[k]).epsilon(1e-6));
  }
  // second round-trip is exact: values already representable in f32
  const auto dir2 = temp_dir("roundtrip2");
  save(r1, dir2.string());
  const DatasetBundle r2 = load(dir2.string());
  for (size_t i = 0; i < r1.agents.size(); ++i) {
    CHECK(r2.agents[i].y_enc.data == r1.agents[i].y_enc.data);
    CHECK(r2.agents[i].z_cont.data == r1.agents[i].z_cont.data);
    CHECK(r2.agents[i].theta == r1.agents[i].theta);
  }
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_CASE("corrupted files produce typed errors") {
  const auto dir = temp_dir("corrupt");
  const PriorSpec prior = PriorSpec::default_for(ModelId::FourParamRL);
  save(generate(ModelId::FourParamRL, prior, 2, 10, 3), dir.string());

  {
    // clobber the magic of one payload
    std::fstream f(dir / "y.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXX", 4);
  }
  try {
    load(dir.string());
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(e.code == DataErrorCode::MagicMismatch);
  }
  {
    // restore magic, corrupt the version field instead
    std::fstream f(dir / "y.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.write("LASE", 4);
    const std::uint32_t bad = 42;
    f.write(reinterpret_cast<const char*>(&bad), 4);
  }
  try {
    load(dir.string());
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(e.code == DataErrorCode::VersionMismatch);
  }
  CHECK_THROWS_AS(load((dir / "missing").string()), DataError);
  fs::remove_all(dir);
}

TEST_CASE("split partitions agents per the seeded permutation") {
  const PriorSpec prior = PriorSpec::default_for(ModelId::FourParamRL);
  const DatasetBundle b = generate(ModelId::FourParamRL, prior, 10, 10, 5);
  const SplitResult s = split(b, 0.10, 1);
  CHECK(s.train.agents.size() == 9);
  CHECK(s.val.agents.size() == 1);

  const DatasetBundle b100 = generate(ModelId::FourParamRL, prior, 100, 10, 5);
  const SplitResult s100 = split(b100, 0.10, 1);
  CHECK(s100.train.agents.size() == 90);
  CHECK(s100.val.agents.size() == 10);
  // disjoint partition: recover every theta exactly once
  std::vector<std::vector<double>> all;
  for (const auto& a : s100.train.agents) all.push_back(a.theta);
  for (const auto& a : s100.val.agents) all.push_back(a.theta);
  CHECK(all.size() == 100);
  for (const auto& a : b100.agents)
    CHECK(std::count(all.begin(), all.end(), a.theta) == 1);

  CHECK_THROWS(split(b, 0.0, 1));
  const DatasetBundle one = generate(ModelId::FourParamRL, prior, 1, 10, 5);
  CHECK_THROWS(split(one, 0.10, 1));  // would round a side to zero
}

TEST_CASE("Beta(5,5) prior pushes the softmax temperature toward mid-box") {
  PriorSpec prior = PriorSpec::default_for(ModelId::FourParamRL);
  for (auto& e : prior.entries) e = {PriorEntry::Kind::Beta, 5.0, 5.0};
  Rng rng(1234);
  double mean_unit = 0.0;
  const int n = 10000;
  const auto& spec = param_spec(ModelId::FourParamRL);
  for (int i = 0; i < n; ++i) {
    const auto theta = prior.sample(ModelId::FourParamRL, rng);
    mean_unit += (theta[2] - spec[2].lo) / (spec[2].hi - spec[2].lo);
  }
  mean_unit /= n;
  CHECK(mean_unit >= 0.47);
  CHECK(mean_unit <= 0.53);
}

TEST_CASE("csv export and re-ingestion reproduce the encoding") {
  for (ModelId id : {ModelId::FourParamRL, ModelId::Hrl, ModelId::Weber,
                     ModelId::GlmHmm}) {
    const PriorSpec prior = PriorSpec::default_for(id);
    const DatasetBundle b = generate(id, prior, 3, 20, 17);
    const auto csv = temp_dir("csv").string() + ".csv";
    export_csv(b, csv);
    const IngestedData in = ingest_csv(csv, id, {});
    REQUIRE(in.y_enc.size() == 3);
    for (size_t i = 0; i < 3; ++i) {
      REQUIRE(in.y_enc[i].rows == b.agents[i].length);
      for (size_t k = 0; k < b.agents[i].y_enc.data.size(); ++k)
        CHECK(in.y_enc[i].data[k] ==
              doctest::Approx(b.agents[i].y_enc.data[k]).epsilon(1e-12));
    }
    std::remove(csv.c_str());
  }
}

TEST_CASE("csv ingestion rejects malformed inputs with row addresses") {
  const auto path = (fs::temp_directory_path() / "lasenet_bad.csv").string();
  {
    std::ofstream f(path);
    f << "agent,action,reward\n";
    f << "a1,0,1\n";
    f << "a1,1,0.37\n";  // non-binary reward on row 3
  }
  try {
    ingest_csv(path, ModelId::FourParamRL, {});
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(e.code == DataErrorCode::BadCsv);
    CHECK(std::string(e.what()).find("3") != std::string::npos);
  }
  {
    std::ofstream f(path);  // empty file
  }
  CHECK_THROWS_AS(ingest_csv(path, ModelId::FourParamRL, {}), DataError);
  {
    std::ofstream f(path);
    f << "agent,action,reward\n";
    f << "a1,7,1\n";  // unknown action code
  }
  CHECK_THROWS_AS(ingest_csv(path, ModelId::FourParamRL, {}), DataError);
  {
    std::ofstream f(path);
    f << "agent,choice,reward\n";  // missing mapped column
    f << "a1,0,1\n";
  }
  CHECK_THROWS_AS(ingest_csv(path, ModelId::FourParamRL, {{"action", "resp"}}),
                  DataError);
  // custom column mapping works
  {
    std::ofstream f(path);
    f << "id,resp,rew\n";
    f << "a1,0,1\n";
    f << "a1,1,0\n";
  }
  const IngestedData in = ingest_csv(
      path, ModelId::MetaRL,
      {{"agent", "id"}, {"action", "resp"}, {"reward", "rew"}});
  REQUIRE(in.y_enc.size() == 1);
  CHECK(in.y_enc[0].rows == 2);
  CHECK(in.y_enc[0](0, 0) == doctest::Approx(-1.0));
  std::remove(path.c_str());
}

TEST_CASE("glmhmm generative family: skew 0 gives uniform occupancy") {
  const Matrix a0 = glmhmm_transition_family(0, 0.90);
  for (int i = 0; i < 3; ++i) {
    double row = 0.0;
    for (int j = 0; j < 3; ++j) row += a0(i, j);
    CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(a0(i, i) == doctest::Approx(0.90));
  }
  // symmetric off-diagonals => uniform stationary distribution
  std::array<double, 3> pi = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  for (int it = 0; it < 100; ++it) {
    std::array<double, 3> next{};
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) next[k] += pi[j] * a0(j, k);
    pi = next;
  }
  for (double p : pi) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
  // skewed families remain row-stochastic and differ from the neutral one
  const Matrix ap = glmhmm_transition_family(1, 0.90);
  const Matrix am = glmhmm_transition_family(-1, 0.90);
  CHECK(ap(0, 1) != doctest::Approx(am(0, 1)));
}
