#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include <nlohmann/json.hpp>

#include "healthprism/cli/cli.hpp"
#include "healthprism/dataio/io.hpp"
#include "healthprism/hash.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace healthprism;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = healthprism::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string hash_of(const fs::path& p) { return sha256_hex(dataio::read_file(p.string())); }

fs::path quick_config(const fs::path& dir) {
  nlohmann::json train = {{"epochs", 1}, {"learning_rate", 3e-3}, {"dropout", 0.0}, {"weight_decay", 0.0}};
  const nlohmann::json doc = {{"model", hp_test::small_model_config().to_json()}, {"train", train}};
  const auto path = dir / "config.json";
  std::ofstream(path) << doc.dump(2);
  return path;
}

// synth -> preprocess -> train MVPA, all under dir.
void pipeline(const fs::path& dir) {
  const auto cfg = quick_config(dir).string();
  const auto out = dir.string();
  REQUIRE(invoke({"synth", "--n", "30", "--seed", "7", "--out", out, "--quiet"}).code == 0);
  REQUIRE(invoke({"preprocess", "--input", (dir / "dataset.tar").string(), "--seed", "7", "--out", out, "--quiet"}).code ==
          0);
  const auto r = invoke({"train", "--data", (dir / "processed.tar").string(), "--indicator", "MVPA", "--seed", "7",
                      "--config", cfg, "--out", out, "--quiet"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
}

}  // namespace

TEST_CASE("synth is deterministic for a seed") {
  const auto a = hp_test::scratch_dir("cli_synth_a");
  const auto b = hp_test::scratch_dir("cli_synth_b");
  auto r = invoke({"synth", "--n", "100", "--seed", "7", "--out", a.string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("wrote") != std::string::npos);
  CHECK(r.out.find("sha256=" + hash_of(a / "dataset.tar")) != std::string::npos);
  REQUIRE(invoke({"synth", "--n", "100", "--seed", "7", "--out", b.string(), "--quiet"}).code == 0);
  CHECK(hash_of(a / "dataset.tar") == hash_of(b / "dataset.tar"));
  const auto c = hp_test::scratch_dir("cli_synth_c");
  REQUIRE(invoke({"synth", "--n", "100", "--seed", "8", "--out", c.string(), "--quiet"}).code == 0);
  CHECK(hash_of(a / "dataset.tar") != hash_of(c / "dataset.tar"));
}

TEST_CASE("--quiet silences progress output") {
  const auto dir = hp_test::scratch_dir("cli_quiet");
  const auto r = invoke({"synth", "--n", "10", "--out", dir.string(), "--quiet"});
  CHECK(r.code == 0);
  CHECK(r.out.empty());
}

TEST_CASE("outputs are not overwritten without --force") {
  const auto dir = hp_test::scratch_dir("cli_force");
  REQUIRE(invoke({"synth", "--n", "10", "--out", dir.string(), "--quiet"}).code == 0);
  const auto before = hash_of(dir / "dataset.tar");
  auto r = invoke({"synth", "--n", "12", "--out", dir.string(), "--quiet"});
  CHECK(r.code != 0);
  CHECK(r.err.find("error: io") != std::string::npos);
  CHECK(hash_of(dir / "dataset.tar") == before);
  r = invoke({"synth", "--n", "12", "--out", dir.string(), "--quiet", "--force"});
  CHECK(r.code == 0);
  CHECK(hash_of(dir / "dataset.tar") != before);
}

TEST_CASE("argument errors exit nonzero") {
  auto r = invoke({"synth", "--bogus-flag"});
  CHECK(r.code == 2);
  CHECK(r.err.find("error") != std::string::npos);
  CHECK(invoke({}).code == 2);
  CHECK(invoke({"frobnicate"}).code == 2);
  CHECK(invoke({"train"}).code == 2);

  const auto dir = hp_test::scratch_dir("cli_args");
  REQUIRE(invoke({"synth", "--n", "20", "--out", dir.string(), "--quiet"}).code == 0);
  REQUIRE(invoke({"preprocess", "--input", (dir / "dataset.tar").string(), "--out", dir.string(), "--quiet"}).code == 0);
  r = invoke({"train", "--data", (dir / "processed.tar").string(), "--indicator", "BOGUS", "--out", dir.string()});
  CHECK(r.code != 0);
  for (const auto* name : {"MVPA", "PHYF", "VVAS", "PSYF", "RESI", "CONN"}) {
    CHECK(r.err.find(name) != std::string::npos);
  }
  CHECK_FALSE(fs::exists(dir / "model_BOGUS.hpm"));

  r = invoke({"preprocess", "--out", dir.string()});
  CHECK(r.code != 0);
  r = invoke({"train", "--data", (dir / "missing.tar").string(), "--out", dir.string()});
  CHECK(r.code != 0);
  CHECK(r.err.find("missing.tar") != std::string::npos);

  const auto bad = dir / "bad.json";
  std::ofstream(bad) << "{not json";
  r = invoke({"synth", "--config", bad.string(), "--out", dir.string(), "--force"});
  CHECK(r.code != 0);
  CHECK(r.err.find("error: config") != std::string::npos);
}

TEST_CASE("pipeline outputs are reproducible and carry metadata") {
  const auto a = hp_test::scratch_dir("cli_pipe_a");
  const auto b = hp_test::scratch_dir("cli_pipe_b");
  pipeline(a);
  pipeline(b);
  for (const auto* f : {"dataset.tar", "processed.tar", "model_MVPA.hpm", "train_report_MVPA.json"}) {
    CHECK_MESSAGE(hash_of(a / f) == hash_of(b / f), f);
  }
  const auto report = nlohmann::json::parse(dataio::read_file((a / "train_report_MVPA.json").string()));
  CHECK(report["metadata"]["command"] == "train");
  CHECK(report["metadata"]["seed"] == 7);
  CHECK(report["metadata"]["config"]["sha256"] == hash_of(a / "config.json"));
  CHECK(report["train_config"]["epochs"] == 1);

  auto r = invoke({"evaluate", "--data", (a / "processed.tar").string(), "--models", a.string(), "--out", a.string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(std::regex_search(r.out, std::regex(R"(MVPA\s+[01]\.\d{4}\s+\d+)")));
  const auto eval = nlohmann::json::parse(dataio::read_file((a / "evaluation.json").string()));
  CHECK(eval["models"] == 1);
  CHECK(eval["indicators"][0]["auc"] == report["test_auc"]);

  r = invoke({"importance", "--data", (a / "processed.tar").string(), "--models", a.string(), "--indicator", "MVPA",
           "--window", "30", "--out", a.string(), "--quiet"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto imp = nlohmann::json::parse(dataio::read_file((a / "importance_overall_MVPA.json").string()));
  CHECK(imp["v"] == 1);
  CHECK(imp["window"] == 30);
  CHECK(imp["ranked"]["entries"].size() == 10);

  r = invoke({"importance", "--data", (a / "processed.tar").string(), "--models", a.string(), "--indicator", "MVPA",
           "--window", "7", "--out", a.string()});
  CHECK(r.code != 0);

  r = invoke({"influence", "--data", (a / "processed.tar").string(), "--models", a.string(), "--indicator", "MVPA",
           "--feature", "sleep_quality", "--out", a.string(), "--quiet"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  r = invoke({"influence", "--data", (a / "processed.tar").string(), "--models", a.string(), "--indicator", "MVPA",
           "--motion-start", "1080", "--motion-w", "60", "--level", "individual", "--id", "P001", "--out",
           a.string(), "--quiet"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  int influence_files = 0;
  for (const auto& e : fs::directory_iterator(a)) influence_files += e.path().filename().string().starts_with("influence_");
  CHECK(influence_files == 2);
}
