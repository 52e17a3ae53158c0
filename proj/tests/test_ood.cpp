#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "cflow/data/images.hpp"
#include "cflow/ood/ood.hpp"
#include "test_support.hpp"

using namespace cflow;

namespace {

double brute_auroc(const std::vector<double>& in, const std::vector<double>& ood) {
  double pairs = 0.0;
  for (double a : in)
    for (double b : ood) pairs += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
  return pairs / (static_cast<double>(in.size()) * static_cast<double>(ood.size()));
}

std::vector<double> random_scores(Pcg32& rng, std::size_t n, bool ties) {
  std::vector<double> v(n);
  for (auto& x : v) x = ties ? static_cast<double>(rng.below(6)) : rng.normal();
  return v;
}

FlowConfig small_flow() {
  FlowConfig c;
  c.input = {1, 4, 4};
  c.scales = 1;
  c.coupling_layers = 2;
  c.stnet = StNetConfig{8, 1, 0};
  return c;
}

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "cflow_test_ood";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("auroc hand examples") {
  CHECK(auroc(std::vector<double>{2, 3}, std::vector<double>{0, 1}) == 1.0);
  CHECK(auroc(std::vector<double>{5, 5, 5}, std::vector<double>{5, 5, 5}) == 0.5);
  CHECK(auroc(std::vector<double>{2, 0}, std::vector<double>{1, -1}) == 0.75);
  CHECK_THROWS_AS(auroc(std::vector<double>{}, std::vector<double>{1}), ContractViolation);
}

TEST_CASE("rank auroc equals exhaustive pair counting exactly") {
  Pcg32 rng(12, 0);
  for (int trial = 0; trial < 1000; ++trial) {
    const bool ties = trial % 2 == 0;
    auto in = random_scores(rng, 1 + rng.below(50), ties);
    auto ood = random_scores(rng, 1 + rng.below(50), ties);
    CHECK(auroc(in, ood) == brute_auroc(in, ood));
  }
}

TEST_CASE("auroc is invariant to increasing transforms and antisymmetric without ties") {
  Pcg32 rng(13, 0);
  for (int trial = 0; trial < 100; ++trial) {
    auto in = random_scores(rng, 30, false);
    auto ood = random_scores(rng, 20, false);
    const double a = auroc(in, ood);
    std::vector<double> tin, tood;
    for (double v : in) tin.push_back(std::exp(v) * 3.0 + 1.0);
    for (double v : ood) tood.push_back(std::exp(v) * 3.0 + 1.0);
    CHECK(auroc(tin, tood) == a);
    CHECK(auroc(ood, in) == doctest::Approx(1.0 - a).epsilon(1e-15));
  }
}

TEST_CASE("auroc equals the area under the swept ROC curve") {
  Pcg32 rng(14, 0);
  for (int trial = 0; trial < 200; ++trial) {
    auto in = random_scores(rng, 1 + rng.below(40), trial % 3 == 0);
    auto ood = random_scores(rng, 1 + rng.below(40), trial % 3 == 0);
    CHECK(std::abs(auroc(in, ood) - roc_area(roc_curve(in, ood))) < 1e-12);
  }
}

TEST_CASE("threshold metrics") {
  const std::vector<double> in{2, 3}, ood{0, 1};
  auto low = threshold_metrics(in, ood, -100);
  CHECK(low.tpr == 1.0);
  CHECK(low.fpr == 1.0);
  auto high = threshold_metrics(in, ood, 100);
  CHECK(high.tpr == 0.0);
  CHECK(high.fpr == 0.0);
  auto mid = threshold_metrics(in, ood, 1.5);
  CHECK(mid.tpr == 1.0);
  CHECK(mid.fpr == 0.0);
  CHECK(mid.accuracy == 1.0);
  CHECK(threshold_metrics(in, ood, 2.0).tpr == 1.0);  // score >= tau is positive
}

TEST_CASE("histogram bins are left-closed and count overflow separately") {
  auto one = histogram(std::vector<double>{0.5}, 1, 0.0, 1.0);
  CHECK(one.counts == std::vector<std::size_t>{1});
  auto edges = histogram(std::vector<double>{0.0, 0.25, 0.5, 1.0, -0.1, 2.0}, 4, 0.0, 1.0);
  CHECK(edges.counts == std::vector<std::size_t>{1, 1, 1, 0});
  CHECK(edges.underflow == 1);
  CHECK(edges.overflow == 2);
  auto empty = histogram(std::vector<double>{}, 3, -1.0, 1.0);
  CHECK(empty.counts == std::vector<std::size_t>{0, 0, 0});
  CHECK(empty.underflow + empty.overflow == 0);
  Pcg32 rng(1, 1);
  auto scores = random_scores(rng, 500, false);
  auto h = histogram(scores, 7, -1.0, 1.5);
  std::size_t total = h.underflow + h.overflow;
  for (auto c : h.counts) total += c;
  CHECK(total == 500);
  CHECK_THROWS_AS(histogram(scores, 0, 0.0, 1.0), ConfigError);
  CHECK_THROWS_AS(histogram(scores, 2, 0.0, INFINITY), ConfigError);
}

TEST_CASE("identity-flow scores equal base log-density of the dequantized input plus offsets") {
  FlowModel m(small_flow());
  auto ds = gen_synthetic(SyntheticFamily::kPatches, 9, 4, 3);
  TrainingSet set{ds.all(), true};
  ScoringPolicy policy;
  policy.seed = 21;
  policy.batch_size = 4;
  auto scores = score_dataset(m, set, "patches", policy);
  for (std::size_t i = 0; i < 9; ++i) {
    Pcg32 stream(21, i);
    Tensor pixels = set.data.reshaped({9, 16});
    Tensor row = Tensor::matrix(1, 16), noise = Tensor::matrix(1, 16);
    for (std::size_t k = 0; k < 16; ++k) row[k] = pixels.at(i, k);
    stream.fill_uniform(noise.data());
    auto dq = dequantize(row, noise);
    // Batch norm with eps shifts the identity slightly; compare to the model's own latent.
    const double expected = standard_normal_logprob(m.latent(dq.values, BnMode::kEval))[0] +
                            m.log_det(dq.values, BnMode::kEval)[0] + dq.offset[0];
    CHECK(scores.logp[i] == doctest::Approx(expected).epsilon(1e-13));
  }
  FlowConfig plain = small_flow();
  plain.batchnorm = false;
  FlowModel id(plain);
  auto s2 = score_dataset(id, set, "patches", policy);
  Pcg32 stream(21, 0);
  Tensor row = Tensor::matrix(1, 16), noise = Tensor::matrix(1, 16);
  for (std::size_t k = 0; k < 16; ++k) row[k] = set.data.at(0, k);
  stream.fill_uniform(noise.data());
  auto dq = dequantize(row, noise);
  CHECK(s2.logp[0] == standard_normal_logprob(dq.values)[0] + dq.offset[0]);
}

TEST_CASE("scoring is deterministic, worker-count independent, and averages k draws") {
  FlowModel m(small_flow());
  Pcg32 rng(5, 5);
  m.randomize(rng, 0.2);
  TrainingSet set{gen_synthetic(SyntheticFamily::kBlobs, 37, 4, 2).all(), true};
  ScoringPolicy p;
  p.batch_size = 8;
  auto a = score_dataset(m, set, "blobs", p);
  CHECK(a.logp == score_dataset(m, set, "blobs", p).logp);
  p.workers = 3;
  CHECK(a.logp == score_dataset(m, set, "blobs", p).logp);
  p.workers = 1;
  p.noise_samples = 40;
  auto k40 = score_dataset(m, set, "blobs", p);
  CHECK(k40.logp != a.logp);
  for (double v : k40.logp) CHECK(std::isfinite(v));
  // Train-mode scoring uses batch statistics.
  p.noise_samples = 1;
  p.bn_mode = BnMode::kTrain;
  auto train_mode = score_dataset(m, set, "blobs", p);
  CHECK(train_mode.logp != a.logp);
}

TEST_CASE("shape mismatch is an input error") {
  FlowModel m(small_flow());
  TrainingSet wrong{gen_synthetic(SyntheticFamily::kBlobs, 3, 8, 2).all(), true};
  CHECK_THROWS_AS(score_dataset(m, wrong, "x"), InputError);
}

TEST_CASE("score CSV round-trips with its policy") {
  ScoreSet s{"blobs", {-1.5, 2.25, -1e-9}, {}};
  s.policy.noise_samples = 40;
  s.policy.bn_mode = BnMode::kTrain;
  const auto path = temp_path("scores.csv");
  write_scores_csv(path, s);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "dataset,index,logp_nats");
  auto back = read_scores_csv(path);
  CHECK(back.dataset == "blobs");
  CHECK(back.logp == s.logp);
  CHECK(back.policy == s.policy);
}

TEST_CASE("histogram CSV lists bins between underflow and overflow rows") {
  const auto path = temp_path("hist.csv");
  write_histogram_csv(path, histogram(std::vector<double>{-5, 0.1, 0.6, 9}, 2, 0.0, 1.0));
  std::ifstream in(path);
  std::stringstream buf;
  buf << in.rdbuf();
  CHECK(buf.str() == "bin_left,bin_right,count\n-inf,0,1\n0,0.5,1\n0.5,1,1\n1,inf,1\n");
}
