#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "support/fixtures.hpp"

using namespace s3cl;

namespace {

struct CliRun {
  int status = -1;
  std::string out;
};

CliRun run(const std::string& args, const test::TempDir& dir, const std::string& env = "") {
  const auto log = dir / "stdout.txt";
  const std::string cmd = env + " " + std::string(S3CL_CLI_PATH) + " " + args + " > " + log.string() + " 2> " +
                          (dir / "stderr.txt").string();
  const int raw = std::system(cmd.c_str());
  CliRun r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  std::ifstream in(log);
  r.out.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

const char* kTinyTrain =
    " --prop-steps 2 --encoder-dim 6 --hidden-dim 8 --projection-dim 4 --negatives 4 --quiet";

}  // namespace

TEST(Cli, MissingGraphIsUsageError) {
  test::TempDir dir("cli");
  EXPECT_EQ(run("pretrain --epochs 1", dir).status, 2);
  EXPECT_EQ(run("no-such-command", dir).status, 2);
  EXPECT_EQ(run("", dir).status, 2);
}

TEST(Cli, SynthIsByteIdenticalForFixedSeed) {
  test::TempDir dir("cli");
  const std::string a = (dir / "a").string(), b = (dir / "b").string();
  ASSERT_EQ(run("synth --out " + a + " --nodes-per-block 20 --seed 7", dir).status, 0);
  ASSERT_EQ(run("synth --out " + b + " --nodes-per-block 20 --seed 7", dir).status, 0);
  for (const char* f : {"edges.tsv", "features.tsv", "labels.tsv"}) {
    EXPECT_EQ(slurp(dir / ("a/" + std::string(f))), slurp(dir / ("b/" + std::string(f)))) << f;
  }
  const AttributedGraph g = load_graph(dir / "a/edges.tsv", dir / "a/features.tsv", dir / "a/labels.tsv");
  EXPECT_EQ(g.num_nodes, 60u);
}

TEST(Cli, PretrainOneEpochWritesReloadableCheckpoint) {
  test::TempDir dir("cli");
  const std::string g = (dir / "g").string();
  ASSERT_EQ(run("synth --out " + g + " --nodes-per-block 8 --seed 1", dir).status, 0);
  const std::string ck = (dir / "m.ckpt").string();
  ASSERT_EQ(run("pretrain --graph " + g + " --epochs 1 --warmup-epochs 0 --out " + ck + " --report " +
                    (dir / "r.json").string() + kTinyTrain,
                dir)
                .status,
            0);
  const Checkpoint c = load_checkpoint(ck);
  EXPECT_EQ(c.state.epoch, 1u);
  EXPECT_EQ(c.config.encoder_dim, 6u);
  std::ifstream in(dir / "r.json");
  const auto report = nlohmann::json::parse(in);
  EXPECT_EQ(report["epochs"].size(), 1u);
}

TEST(Cli, RerunsProduceIdenticalArtifacts) {
  test::TempDir dir("cli");
  const std::string g = (dir / "g").string();
  ASSERT_EQ(run("synth --out " + g + " --nodes-per-block 8 --seed 2", dir).status, 0);
  for (const char* tag : {"1", "2"}) {
    const std::string t(tag);
    ASSERT_EQ(run("pretrain --graph " + g + " --epochs 6 --warmup-epochs 3 --seed 5 --out " +
                      (dir / ("m" + t)).string() + " --report " + (dir / ("r" + t)).string() + kTinyTrain,
                  dir)
                  .status,
              0);
    ASSERT_EQ(run("embed --graph " + g + " --checkpoint " + (dir / ("m" + t)).string() + " --out " +
                      (dir / ("h" + t)).string(),
                  dir)
                  .status,
              0);
  }
  EXPECT_EQ(slurp(dir / "m1"), slurp(dir / "m2"));
  EXPECT_EQ(slurp(dir / "r1"), slurp(dir / "r2"));
  EXPECT_EQ(slurp(dir / "h1"), slurp(dir / "h2"));
}

TEST(Cli, ResumeExtendsTraining) {
  test::TempDir dir("cli");
  const std::string g = (dir / "g").string();
  ASSERT_EQ(run("synth --out " + g + " --nodes-per-block 8 --seed 3", dir).status, 0);
  const std::string full = (dir / "full").string(), part = (dir / "part").string();
  ASSERT_EQ(run("pretrain --graph " + g + " --epochs 8 --warmup-epochs 2 --out " + full + kTinyTrain, dir).status, 0);
  ASSERT_EQ(run("pretrain --graph " + g + " --epochs 4 --warmup-epochs 2 --out " + part + kTinyTrain, dir).status, 0);
  ASSERT_EQ(run("pretrain --graph " + g + " --resume " + part + " --epochs 8 --out " + part + " --quiet", dir).status, 0);
  EXPECT_EQ(slurp(full), slurp(part));
}

TEST(Cli, EvalClusterOnPerfectEmbeddingReportsAccOne) {
  test::TempDir dir("cli");
  Matrix h = Matrix::Zero(30, 2);
  std::vector<int> y(30);
  for (int i = 0; i < 30; ++i) {
    y[static_cast<std::size_t>(i)] = i % 3;
    h(i, 0) = 10.0 * (i % 3);
  }
  write_dense_matrix(dir / "h.tsv", h);
  write_labels(dir / "y.tsv", y);
  const CliRun r = run("eval-cluster --embeddings " + (dir / "h.tsv").string() + " --labels " + (dir / "y.tsv").string(), dir);
  ASSERT_EQ(r.status, 0);
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["acc"]["mean"].get<double>(), 1.0);
  EXPECT_EQ(j["acc"]["std"].get<double>(), 0.0);
  EXPECT_EQ(j["k"].get<int>(), 3);
}

TEST(Cli, EvalIsIndependentOfThreadCount) {
  test::TempDir dir("cli");
  Rng rng(4);
  Matrix h = test::gaussian(120, 3, rng);
  std::vector<int> y(120);
  for (int i = 0; i < 120; ++i) {
    y[static_cast<std::size_t>(i)] = i % 4;
    h(i, i % 3) += 1.5 * (i % 4);
  }
  write_dense_matrix(dir / "h.tsv", h);
  write_labels(dir / "y.tsv", y);
  const std::string args = " --embeddings " + (dir / "h.tsv").string() + " --labels " + (dir / "y.tsv").string();
  for (const char* sub : {"eval-cluster --runs 4", "eval-classify --runs 4 --train-per-class 5 --validation 20 --test 40"}) {
    const CliRun one = run(std::string(sub) + args, dir);
    const CliRun many = run(std::string(sub) + args, dir, "S3CL_THREADS=3");
    ASSERT_EQ(one.status, 0) << sub;
    ASSERT_EQ(many.status, 0) << sub;
    EXPECT_EQ(one.out, many.out) << sub;
  }
}

TEST(Cli, GradcheckPassesOnTwelveNodeFixture) {
  test::TempDir dir("cli");
  const CliRun r = run("gradcheck --seed 3", dir);
  ASSERT_EQ(r.status, 0) << r.out;
  const auto j = nlohmann::json::parse(r.out.substr(r.out.find('{')));
  EXPECT_EQ(j["nodes"].get<int>(), 12);
  for (const char* term : {"structural", "semantic", "joint"}) {
    EXPECT_LE(j[term]["max_relative_error"].get<double>(), 1e-4) << term;
  }
}

TEST(Cli, TypedExitCodes) {
  test::TempDir dir("cli");
  const std::string g = (dir / "g").string();
  ASSERT_EQ(run("synth --out " + g + " --nodes-per-block 5 --seed 1", dir).status, 0);
  // Data: edge pointing past the feature rows.
  test::write_text(dir / "bad_edges.tsv", "0\t99\n");
  EXPECT_EQ(run("pretrain --graph " + (dir / "bad_edges.tsv").string() + " --features " + g + "/features.tsv", dir).status, 3);
  // Config: invalid hyperparameter value.
  EXPECT_EQ(run("pretrain --graph " + g + " --gamma 2" + kTinyTrain, dir).status, 5);
  EXPECT_EQ(run("pretrain --graph " + g + " --tau1 0" + kTinyTrain, dir).status, 5);
  // Usage: malformed flag value.
  EXPECT_EQ(run("pretrain --graph " + g + " --epochs many", dir).status, 2);
  // Data: wrong checkpoint magic.
  test::write_text(dir / "junk.ckpt", "definitely not a checkpoint");
  EXPECT_EQ(run("embed --graph " + g + " --checkpoint " + (dir / "junk.ckpt").string(), dir).status, 3);
  // Numerical: an exploding learning rate drives the loss non-finite.
  const CliRun boom = run("pretrain --graph " + g + " --epochs 30 --warmup-epochs 30 --lr 1e300 --out " +
                           (dir / "boom.ckpt").string() + kTinyTrain,
                       dir);
  EXPECT_EQ(boom.status, 4);
  EXPECT_TRUE(std::filesystem::exists(dir / "boom.ckpt.lastgood"));
}
