#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>

#include "pipeline_fixture.hpp"
#include "test_util.hpp"

using namespace treeview::testing;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

Result run(const fs::path& dir, const std::string& args) {
  const std::string cmd = "cd '" + dir.string() + "' && '" TREEVIEW_CLI "' " + args + " > stdout.txt 2> stderr.txt";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(dir / "stdout.txt");
  r.err = read_file(dir / "stderr.txt");
  return r;
}

fs::path setup() {
  const fs::path dir = scratch_dir();
  write_blobs_csv(dir / "blobs.csv");
  write_file(dir / "cfg.json", small_config("blobs.csv").dump(2));
  return dir;
}

void pipeline(const fs::path& dir) {
  ASSERT_EQ(run(dir, "train --config cfg.json --artifact out/a.json").code, 0);
  ASSERT_EQ(run(dir, "factorize --artifact out/a.json").code, 0);
  ASSERT_EQ(run(dir, "surrogate --artifact out/a.json").code, 0);
}

}  // namespace

TEST(Cli, StagesReport) {
  const fs::path dir = setup();
  Result r = run(dir, "train --config cfg.json --artifact out/a.json");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("epoch 1 loss"), std::string::npos);
  EXPECT_NE(r.out.find("network test accuracy"), std::string::npos);
  r = run(dir, "factorize --artifact out/a.json");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("oob_accuracy"), std::string::npos);
  r = run(dir, "surrogate --artifact out/a.json");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("test fidelity"), std::string::npos);
  r = run(dir, "evaluate --artifact out/a.json --split all");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = nlohmann::json::parse(r.out);
  EXPECT_EQ(report.at("num_samples"), 120);
  for (const char* key : {"network_accuracy", "surrogate_accuracy", "fidelity"}) {
    ASSERT_TRUE(report.at(key).is_number()) << key;
    EXPECT_GE(report.at(key).get<double>(), 0.0);
    EXPECT_LE(report.at(key).get<double>(), 1.0);
  }
}

TEST(Cli, ExplainFormats) {
  const fs::path dir = setup();
  pipeline(dir);
  const auto j = nlohmann::json::parse(read_file(dir / "out/a.json"));
  const std::string id = j["split"]["test_ids"][0];
  Result r = run(dir, "explain --artifact out/a.json --sample " + id + " --format text");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("row  test", 0), 0u);
  EXPECT_NE(r.out.find("predicted="), std::string::npos);

  ASSERT_EQ(run(dir, "explain --artifact out/a.json --sample " + id + " --format svg --output e/one.svg").code, 0);
  ASSERT_EQ(run(dir, "explain --artifact out/a.json --sample " + id + " --format json --output e/one.json").code, 0);
  ASSERT_EQ(run(dir, "explain --layout e/one.json --artifact out/a.json --format svg --output e/again.svg").code, 0);
  EXPECT_EQ(read_file(dir / "e/one.svg"), read_file(dir / "e/again.svg"));

  const std::string id2 = j["split"]["test_ids"][1];
  r = run(dir, "explain --artifact out/a.json --sample " + id + " --sample " + id2 + " --output many");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "many" / (id + ".svg")));
  EXPECT_TRUE(fs::exists(dir / "many" / (id2 + ".svg")));
}

TEST(Cli, ExplainRawFeatures) {
  const fs::path dir = setup();
  pipeline(dir);
  Result r = run(dir, "explain --artifact out/a.json --features 0.1,0.2,5,1 --format text");
  EXPECT_EQ(r.code, 0) << r.err;
  r = run(dir, "explain --artifact out/a.json --features 0.1,0.2,5 --format text");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("expected 4 features, got 3"), std::string::npos) << r.err;
  r = run(dir, "explain --artifact out/a.json --features 0.1,zz,5,1");
  EXPECT_EQ(r.code, 1);
}

TEST(Cli, ErrorsAndExitCodes) {
  const fs::path dir = setup();
  EXPECT_EQ(run(dir, "").code, 1);
  EXPECT_EQ(run(dir, "bogus").code, 1);
  EXPECT_EQ(run(dir, "train").code, 1);
  EXPECT_EQ(run(dir, "--help").code, 0);

  auto cfg = small_config("nowhere.csv");
  write_file(dir / "missing.json", cfg.dump());
  Result r = run(dir, "train --config missing.json --artifact m.json");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("nowhere.csv"), std::string::npos) << r.err;

  cfg = small_config("blobs.csv");
  cfg["network"]["learning_rate"] = 1e300;
  write_file(dir / "diverge.json", cfg.dump());
  r = run(dir, "train --config diverge.json --artifact d.json");
  EXPECT_EQ(r.code, 2) << r.err;
  EXPECT_NE(r.err.find("non-finite loss"), std::string::npos) << r.err;

  ASSERT_EQ(run(dir, "train --config cfg.json --artifact out/a.json").code, 0);
  r = run(dir, "explain --artifact out/a.json --sample 1");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("run surrogate first"), std::string::npos);
  EXPECT_EQ(run(dir, "factorize --artifact out/a.json").code, 0);
  EXPECT_EQ(run(dir, "surrogate --artifact out/a.json").code, 0);
  r = run(dir, "explain --artifact out/a.json --sample no-such");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("unknown sample id"), std::string::npos);
  EXPECT_EQ(run(dir, "explain --artifact out/a.json --sample 1 --format png").code, 1);
}

TEST(Cli, SeedOverrideChangesArtifact) {
  const fs::path dir = setup();
  ASSERT_EQ(run(dir, "train --config cfg.json --artifact s3.json").code, 0);
  ASSERT_EQ(run(dir, "train --config cfg.json --artifact s3b.json").code, 0);
  ASSERT_EQ(run(dir, "train --config cfg.json --artifact s9.json --seed 9").code, 0);
  const auto a = nlohmann::json::parse(read_file(dir / "s3.json"));
  const auto b = nlohmann::json::parse(read_file(dir / "s3b.json"));
  const auto c = nlohmann::json::parse(read_file(dir / "s9.json"));
  EXPECT_EQ(a["model"], b["model"]);
  EXPECT_NE(a["model"], c["model"]);
  EXPECT_EQ(c["config"]["seed"], 9);
}
