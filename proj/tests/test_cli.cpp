#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cflow/cli/commands.hpp"
#include "cflow/cli/run.hpp"
#include "cflow/data/images.hpp"

using namespace cflow;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "cflow");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "cflow_test_cli" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

void write(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kSmallRun = R"(run.seed = 3
data.train = synthetic:blobs:96:4:1
data.test = synthetic:blobs:20:4:2
data.ood = synthetic:patches:20:4:3
model.scales = 1
model.coupling_layers = 2
model.hidden = 8
model.blocks = 1
train.epochs = 2
train.batch_size = 16
)";

}  // namespace

TEST_CASE("masks prints the checkerboard change set") {
  const auto r = run({"masks", "--kind", "checkerboard", "--shape", "1x2x2", "--phase", "0"});
  CHECK(r.code == 0);
  CHECK(r.out.find("change={(0,0),(1,1)}") != std::string::npos);
}

TEST_CASE("auroc of {2,3} against {0,1} prints 1.0") {
  const auto dir = scratch("auroc");
  write(dir / "in.csv", "dataset,index,logp_nats\nin,0,2\nin,1,3\n");
  write(dir / "ood.csv", "dataset,index,logp_nats\nood,0,0\nood,1,1\n");
  const auto r = run({"auroc", (dir / "in.csv").string(), (dir / "ood.csv").string(), "--out", (dir / "m.csv").string()});
  CHECK(r.code == 0);
  CHECK(r.out == "1.0\n");
  CHECK(slurp(dir / "m.csv").find("auroc,1\n") != std::string::npos);
}

TEST_CASE("an unknown config key exits 2 naming the key") {
  const auto dir = scratch("unknown");
  write(dir / "run.cfg", std::string(kSmallRun) + "train.learning_rat = 0.1\n");
  const auto r = run({"train", "--config", (dir / "run.cfg").string(), "--out", (dir / "o").string()});
  CHECK(r.code == 2);
  CHECK(r.err.rfind("error: config: ", 0) == 0);
  CHECK(r.err.find("'train.learning_rat'") != std::string::npos);
  CHECK_FALSE(std::filesystem::exists(dir / "o" / "model.ckpt"));
}

TEST_CASE("usage, config and runtime failures map to exit codes 2, 2 and 1") {
  CHECK(run({}).code == 2);
  CHECK(run({"masks", "--kind", "checkerboard"}).code == 2);
  const auto bad_shape = run({"masks", "--kind", "checkerboard", "--shape", "1x3x3x"});
  CHECK(bad_shape.code == 2);
  CHECK(bad_shape.err.rfind("error: config: ", 0) == 0);
  const auto missing = run({"auroc", "/nonexistent/a.csv", "/nonexistent/b.csv"});
  CHECK(missing.code == 1);
  CHECK(missing.err.rfind("error: io: ", 0) == 0);

  const auto dir = scratch("contrastive");
  write(dir / "run.cfg", std::string(kSmallRun) + "train.objective = contrastive\n");
  const auto r = run({"train", "--config", (dir / "run.cfg").string(), "--out", (dir / "o").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("data.ood_train") != std::string::npos);
}

TEST_CASE("train is reproducible and its resolved config reruns the experiment") {
  const auto dir = scratch("train");
  write(dir / "run.cfg", std::string(kSmallRun) + "output.dir = " + (dir / "a").string() + "\n");
  REQUIRE(run({"train", "--config", (dir / "run.cfg").string()}).code == 0);
  const std::string ckpt = slurp(dir / "a" / "model.ckpt");
  const std::string metrics = slurp(dir / "a" / "metrics.csv");
  CHECK(metrics.rfind("epoch,step,objective,mean_nll_nats,bits_per_dim\n", 0) == 0);

  REQUIRE(run({"train", "--config", (dir / "run.cfg").string()}).code == 0);
  CHECK(slurp(dir / "a" / "model.ckpt") == ckpt);
  CHECK(slurp(dir / "a" / "metrics.csv") == metrics);

  // Rerun from the sidecar alone.
  std::filesystem::copy_file(dir / "a" / "resolved.cfg", dir / "resolved.cfg");
  REQUIRE(run({"train", "--config", (dir / "resolved.cfg").string()}).code == 0);
  CHECK(slurp(dir / "a" / "model.ckpt") == ckpt);
  CHECK(slurp(dir / "a" / "resolved.cfg") == slurp(dir / "resolved.cfg"));
}

TEST_CASE("score writes both sets with policy sidecars; hist reads them back") {
  const auto dir = scratch("score");
  write(dir / "run.cfg", std::string(kSmallRun) + "output.dir = " + dir.string() + "\nscore.noise_samples = 2\n");
  REQUIRE(run({"train", "--config", (dir / "run.cfg").string()}).code == 0);
  const auto r = run({"score", "--config", (dir / "run.cfg").string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("auroc ") != std::string::npos);
  const ScoreSet test = read_scores_csv(dir / "scores_test.csv");
  CHECK(test.logp.size() == 20);
  CHECK(test.policy.noise_samples == 2);
  CHECK(test.policy.seed == 3);
  CHECK(std::filesystem::exists(dir / "scores_ood.csv.policy"));

  const auto h = run({"hist", (dir / "scores_test.csv").string(), "--bins", "4", "--out", (dir / "h.csv").string()});
  CHECK(h.code == 0);
  CHECK(h.out.find("20 scores, 0 below, 0 above") != std::string::npos);
}

TEST_CASE("visualize and resample write normalized images with sidecars") {
  const auto dir = scratch("inspect");
  write(dir / "run.cfg", std::string(kSmallRun) + "output.dir = " + dir.string() + "\n");
  REQUIRE(run({"train", "--config", (dir / "run.cfg").string()}).code == 0);
  const std::string ckpt = (dir / "model.ckpt").string();
  const auto v = run({"visualize", "--checkpoint", ckpt, "--data", "synthetic:blobs:3:4:7", "--index", "1", "--samples",
                      "3", "--out", (dir / "vis").string()});
  REQUIRE(v.code == 0);
  CHECK(slurp(dir / "vis" / "latent.pgm").rfind("P5\n4 4\n255\n", 0) == 0);
  CHECK(std::filesystem::exists(dir / "vis" / "coupling00_layer00_s.pgm"));
  CHECK(slurp(dir / "vis" / "images.csv").rfind("file,min,max\n", 0) == 0);

  const auto r = run({"resample", "--checkpoint", ckpt, "--data", "synthetic:blobs:3:4:7", "--region", "0,0,2",
                      "--count", "2", "--out", (dir / "res").string()});
  REQUIRE(r.code == 0);
  CHECK(std::filesystem::exists(dir / "res" / "resample01.pgm"));
  const auto bad = run({"resample", "--checkpoint", ckpt, "--data", "synthetic:blobs:3:4:7", "--region", "3,3,2",
                        "--out", (dir / "res").string()});
  CHECK(bad.code == 2);
}

TEST_CASE("gen-data writes the generator output as IDX") {
  const auto dir = scratch("gen");
  const auto path = dir / "p.idx";
  REQUIRE(run({"gen-data", "--family", "patches", "--n", "7", "--res", "6", "--seed", "4", "--out", path.string()}).code ==
          0);
  const ImageDataset loaded = load_idx(path);
  const ImageDataset expected = gen_synthetic(SyntheticFamily::kPatches, 7, 6, 4);
  CHECK(loaded.pixels == expected.pixels);
  CHECK(loaded.shape == expected.shape);
}

TEST_CASE("labeled vector data is split per class and standardized on the train split") {
  const ConfigMap map = parse_config_text(
      "data.train = gmm:200:6:5\ndata.class = 1\nmodel.scales = 0\nmodel.coupling_layers = 2\nrun.seed = 1\n");
  const RunConfig rc = resolve_run_config(map);
  CHECK(rc.model.input == ImageShape{1, 1, 6});
  REQUIRE(rc.data.test);
  REQUIRE(rc.data.ood);
  CHECK(rc.data.train.set.data.rows() == 180);
  CHECK(rc.data.test->set.data.rows() == 20);
  CHECK(rc.data.ood->set.data.rows() == 200);
  CHECK_FALSE(rc.data.train.set.quantized);
  for (std::size_t c = 0; c < 6; ++c) {
    double mean = 0;
    for (std::size_t r = 0; r < 180; ++r) mean += rc.data.train.set.data.at(r, c) / 180.0;
    CHECK(std::abs(mean) < 1e-10);
  }
  CHECK_THROWS_AS(resolve_run_config(parse_config_text("data.train = gmm:20:6:5\n")), ConfigError);
}
