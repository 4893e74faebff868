#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sys/wait.h>

#include "pro2/serialize.hpp"
#include "test_util.hpp"

namespace pro2 {
namespace {

namespace fs = std::filesystem;

struct RunResult {
  int code;
  std::string err;
};

class CliTest : public ::testing::Test {
protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("pro2_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& rel) const { return (dir_ / rel).string(); }

  RunResult run(const std::string& args) const {
    const std::string err = path("stderr.txt");
    const std::string cmd = std::string(PRO2_CLI_PATH) + " " + args + " > " + path("stdout.txt") + " 2> " + err;
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, detail::read_file(err)};
  }

  std::map<std::string, std::string> snapshot(const std::string& rel) const {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::directory_iterator(dir_ / rel)) out[e.path().filename().string()] = detail::read_file(e.path().string());
    return out;
  }

  Json read_json(const std::string& rel) const { return Json::parse(detail::read_file(path(rel))); }

  /// Two well-separated classes along the first axis of a 20-dim space.
  std::string separable_params() const {
    const Eigen::Index D = 20;
    Vector mu = Vector::Zero(D);
    mu(0) = 2.5;
    const ShogParams p(-mu, mu, Matrix::Identity(D, D), Matrix::Identity(D, D));
    const auto file = path("separable.json");
    detail::write_file(file, to_json(p).dump());
    return file;
  }

  fs::path dir_;
};

TEST_F(CliTest, GenShogWritesSuiteDeterministically) {
  ASSERT_EQ(run("gen-shog --suite default --seed 7 --n-source 10000 --out " + path("a")).code, 0);
  const auto first = snapshot("a");
  int data_files = 0;
  for (const auto& [name, bytes] : first) data_files += name != "resolved_config.json";
  EXPECT_EQ(data_files, 7);
  EXPECT_TRUE(first.count("params.json"));
  EXPECT_TRUE(first.count("far_ood_eval.p2em"));
  const auto id = decode_binary(first.at("id_train.p2em"));
  EXPECT_EQ(id.size(), 10000);
  EXPECT_EQ(id.dim(), 20);
  ASSERT_EQ(run("gen-shog --suite default --seed 7 --n-source 10000 --out " + path("a")).code, 0);
  EXPECT_EQ(snapshot("a"), first);
  const auto resolved = read_json("a/resolved_config.json");
  EXPECT_EQ(resolved["seed"], 7);
  EXPECT_EQ(resolved["d"], 20);
}

TEST_F(CliTest, GenShogErrors) {
  EXPECT_EQ(run("gen-shog --suite nope --out " + path("x")).code, 2);
  EXPECT_FALSE(fs::exists(path("x")));
  EXPECT_EQ(run("gen-shog --bogus-flag --out " + path("x")).code, 2);
  detail::write_file(path("bad.json"), R"({"mu0":[0,0],"mu1":[1,0],"sigma_source":[[1,0],[0,1]],"sigma_target":[[1,2],[2,1]]})");
  EXPECT_EQ(run("gen-shog --params " + path("bad.json") + " --out " + path("x")).code, 3);
  detail::write_file(path("broken.json"), "{not json");
  EXPECT_EQ(run("gen-shog --params " + path("broken.json") + " --out " + path("x")).code, 1);
  EXPECT_FALSE(fs::exists(path("x")));
}

TEST_F(CliTest, GenShogCsvMatchesBinary) {
  ASSERT_EQ(run("gen-shog --seed 3 --n-source 100 --n-target 50 --n-eval 60 --out " + path("bin")).code, 0);
  ASSERT_EQ(run("gen-shog --seed 3 --n-source 100 --n-target 50 --n-eval 60 --format csv --out " + path("csv")).code, 0);
  for (const char* name : {"id_train", "near_ood_train", "far_ood_eval"}) {
    const auto b = load_binary(path(std::string("bin/") + name + ".p2em"));
    const auto c = load_csv(path(std::string("csv/") + name + ".csv"));
    EXPECT_EQ(b.embeddings(), c.embeddings());
    EXPECT_EQ(b.labels(), c.labels());
  }
}

TEST_F(CliTest, ProjectRandomAndJoint) {
  ASSERT_EQ(run("gen-shog --seed 1 --n-source 2000 --n-target 100 --n-eval 100 --out " + path("data")).code, 0);
  const auto src = path("data/id_train.p2em");
  ASSERT_EQ(run("project --mode random --d 4 --seed 2 --source " + src + " --out " + path("r")).code, 0);
  const auto basis = load_basis(path("r/basis.p2fb"));
  EXPECT_EQ(basis.rank(), 4);
  EXPECT_LE((basis.rows() * basis.rows().transpose() - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-10);

  ASSERT_EQ(run("project --mode joint --d 3 --seed 5 --source " + src + " --out " + path("j")).code, 0);
  const auto first = snapshot("j");
  ASSERT_EQ(run("project --mode joint --d 3 --seed 5 --source " + src + " --out " + path("j")).code, 0);
  EXPECT_EQ(snapshot("j"), first);
  const auto sidecar = read_json("j/basis.json");
  EXPECT_LE(sidecar["max_pairwise_cosine"].get<double>(), 1e-6);
  EXPECT_EQ(sidecar["source"]["sha256"].get<std::string>().size(), 64u);
  EXPECT_EQ(read_json("j/resolved_config.json")["inputs"]["source"]["sha256"], sidecar["source"]["sha256"]);
}

TEST_F(CliTest, ProjectUsageErrors) {
  save_binary(testing::gaussian_blobs(50, 1024, 2, 0.1, 1), path("wide.p2em"));
  EXPECT_EQ(run("project --d 4096 --source " + path("wide.p2em") + " --out " + path("o")).code, 2);
  EXPECT_EQ(run("project --mode sideways --source " + path("wide.p2em") + " --out " + path("o")).code, 2);
  EXPECT_EQ(run("project --source " + path("missing.p2em") + " --out " + path("o")).code, 1);
  detail::write_file(path("junk.p2em"), "XXXX0000");
  EXPECT_EQ(run("project --source " + path("junk.p2em") + " --out " + path("o")).code, 1);
  EXPECT_FALSE(fs::exists(path("o")));
}

TEST_F(CliTest, ProbeOnSeparableData) {
  ASSERT_EQ(run("gen-shog --params " + separable_params() + " --seed 4 --n-source 4000 --n-target 2000 --n-eval 4000 --out " +
                path("data"))
                .code,
            0);
  ASSERT_EQ(run("project --d 1 --lr 0.1 --seed 4 --source " + path("data/source.p2em") + " --out " + path("b")).code, 0);
  const std::string args = "probe --m 128 --seed 4 --basis " + path("b/basis.p2fb") + " --target " +
                           path("data/target_train.p2em") + " --test " + path("data/target_eval.p2em") + " --out ";
  ASSERT_EQ(run(args + path("p")).code, 0);
  const auto report = read_json("p/probe_report.json");
  EXPECT_GE(report["test_acc"].get<double>(), 0.95);

  // Documented report schema.
  for (const char* key : {"command", "d", "D", "num_classes", "m", "train_size", "val_size", "test_size", "best_step",
                          "val_acc", "test_acc", "per_class_acc", "probe_config", "model"})
    EXPECT_TRUE(report.contains(key)) << key;
  EXPECT_EQ(report["d"], 1);
  EXPECT_EQ(report["D"], 20);
  EXPECT_EQ(report["train_size"], 128);
  EXPECT_EQ(report["val_size"], 128);
  EXPECT_EQ(report["test_size"], 4000);
  EXPECT_EQ(report["per_class_acc"].size(), 2u);
  EXPECT_EQ(report["model"]["weights"].size(), 1u);

  const auto first = snapshot("p");
  ASSERT_EQ(run(args + path("p")).code, 0);
  EXPECT_EQ(snapshot("p"), first);
}

TEST_F(CliTest, ProbeInsufficientClassNamesIt) {
  detail::write_file(path("tiny.csv"), "e0,e1,label\n0,1,0\n1,0,0\n2,2,0\n3,1,0\n5,5,1\n");
  ASSERT_EQ(run("project --mode random --d 2 --source " + path("tiny.csv") + " --out " + path("b")).code, 0);
  const auto r = run("probe --m 2 --basis " + path("b/basis.p2fb") + " --target " + path("tiny.csv") + " --out " + path("p"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("class 1"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(path("p")));
}

TEST_F(CliTest, SweepDefaultGridAndMethods) {
  save_binary(testing::gaussian_blobs(300, 1024, 2, 0.05, 1), path("source.p2em"));
  save_binary(testing::gaussian_blobs(400, 1024, 2, 0.05, 2), path("target.p2em"));
  const std::string base = "sweep --seed 9 --m 4 --project-steps 2 --probe-steps 5 --source " + path("source.p2em") +
                           " --target " + path("target.p2em");
  ASSERT_EQ(run(base + " --methods pro2 --out " + path("one")).code, 0);
  const std::string csv = detail::read_file(path("one/sweep.csv"));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 55);
  EXPECT_EQ(read_json("one/sweep.json")["methods"][0]["cells"].size(), 54u);

  const std::string three = base + " --dims 1,4 --methods pro2,random,full_probe --out " + path("three");
  ASSERT_EQ(run(three).code, 0);
  const auto report = read_json("three/sweep.json");
  ASSERT_EQ(report["methods"].size(), 3u);
  EXPECT_EQ(report["methods"][0]["method"], "pro2");
  EXPECT_EQ(report["methods"][1]["method"], "random");
  EXPECT_EQ(report["methods"][2]["method"], "full_probe");
  EXPECT_EQ(report["methods"][2]["cells"].size(), 9u);
  const auto first = snapshot("three");
  ASSERT_EQ(run(three).code, 0);
  EXPECT_EQ(snapshot("three"), first);
  EXPECT_EQ(read_json("three/sweep.json")["methods"][0]["selected"], report["methods"][0]["selected"]);
}

TEST_F(CliTest, ShogExperimentOutputs) {
  const std::string args =
      "shog-experiment --seed 2 --repeats 1 --dims 1,4,20 --sizes 2,8 --n-source 1000 --n-eval 500 --probe-steps 50 --out ";
  const auto r = run(args + path("e"));
  ASSERT_EQ(r.code, 0);
  EXPECT_TRUE(r.err.empty()) << r.err;
  const std::string ns = detail::read_file(path("e/nullspace.csv"));
  EXPECT_EQ(std::count(ns.begin(), ns.end(), '\n'), 1 + 3 * 3);
  const std::string acc = detail::read_file(path("e/accuracy.csv"));
  EXPECT_EQ(std::count(acc.begin(), acc.end(), '\n'), 1 + 3 * 3 * 2);
  EXPECT_NE(acc.find(",\n"), std::string::npos);  // empty stderr column
  const auto json = read_json("e/bias_variance.json");
  EXPECT_TRUE(json["distributions"][0]["accuracy"][0]["stderr"].is_null());
  const auto first = snapshot("e");
  ASSERT_EQ(run(args + path("e") + " --jobs 2").code, 0);
  EXPECT_EQ(snapshot("e")["bias_variance.json"].size(), first.at("bias_variance.json").size());
  EXPECT_EQ(snapshot("e")["accuracy.csv"], first.at("accuracy.csv"));
}

TEST_F(CliTest, ConfigFilePrecedence) {
  ASSERT_EQ(run("gen-shog --seed 1 --n-source 500 --n-target 50 --n-eval 50 --out " + path("data")).code, 0);
  detail::write_file(path("run.cfg"), "# projection settings\nseed = 11\nd = 2\nmax_steps = 7\nmode = random\n");
  ASSERT_EQ(run("project --config " + path("run.cfg") + " --d 3 --source " + path("data/id_train.p2em") + " --out " +
                path("o"))
                .code,
            0);
  const auto resolved = read_json("o/resolved_config.json");
  EXPECT_EQ(resolved["d"], 3);
  EXPECT_EQ(resolved["seed"], 11);
  EXPECT_EQ(resolved["max_steps"], 7);
  EXPECT_EQ(resolved["mode"], "random");
  EXPECT_EQ(resolved["lr"], 0.01);
  EXPECT_EQ(load_basis(path("o/basis.p2fb")).rank(), 3);
}

}  // namespace
}  // namespace pro2
