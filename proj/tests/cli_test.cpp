#include <sstream>

#include "forge/cli.hpp"
#include "forge/pipeline.hpp"
#include "forge/training.hpp"
#include "test_support.hpp"

using namespace forge;
namespace fs = std::filesystem;

namespace {

const fs::path kConfig = fs::path(FORGE_FIXTURE_DIR) / "pipeline" / "forge.json";

struct Run {
  int code;
  std::string out, err;
};

Run forge_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "forge");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

Run stage(const std::string& name, const fs::path& work, std::vector<std::string> extra = {}) {
  std::vector<std::string> args{name, "--config", kConfig.string(), "--work-dir", work.string()};
  args.insert(args.end(), extra.begin(), extra.end());
  return forge_cli(args);
}

std::size_t count(const std::string& haystack, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string::npos; pos = haystack.find(needle, pos + 1)) ++n;
  return n;
}

std::vector<fs::path> jsonl_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".jsonl") out.push_back(e.path().filename());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("full stub pipeline produces every artifact and is byte-identical across runs") {
  testing::TempDir a, b;
  auto first = stage("run", a.path());
  REQUIRE_MESSAGE(first.code == 0, first.err);
  auto second = stage("run", b.path());
  REQUIRE(second.code == 0);
  for (const char* f : {"units.jsonl", "dedup_report.json", "candidates.jsonl", "scores.jsonl", "selection.jsonl",
                        "sft.jsonl", "cpt.jsonl", "metrics.json", "manifest_cpt.json", "ngram_loss.json"}) {
    CHECK_MESSAGE(fs::exists(a.path() / f), f);
  }
  auto files = jsonl_files(a.path());
  CHECK(files.size() >= 9);
  CHECK(files == jsonl_files(b.path()));
  for (const auto& f : files) CHECK_MESSAGE(read_file(a.path() / f) == read_file(b.path() / f), f.string());
  CHECK(read_file(a.path() / ".stamps/judge.json") == read_file(b.path() / ".stamps/judge.json"));
  CHECK(json::parse(read_file(a.path() / ".stamps/build-cpt.json"))["seeds"]["cpt"] == 7);
  CHECK(fs::exists(a.path() / ".stamps/build-cpt.times.json"));
}

TEST_CASE("rerun is up-to-date and a deleted output regenerates only its stage") {
  testing::TempDir w;
  REQUIRE(stage("run", w.path()).code == 0);
  auto again = stage("run", w.path());
  CHECK(again.code == 0);
  CHECK(count(again.out, "up-to-date") == pipeline::stage_names().size());

  const auto before = read_file(w.path() / "selection.jsonl");
  fs::remove(w.path() / "selection.jsonl");
  auto partial = stage("run", w.path());
  CHECK(partial.out.find("[select] ran") != std::string::npos);
  CHECK(count(partial.out, "] ran") == 1);
  CHECK(read_file(w.path() / "selection.jsonl") == before);
}

TEST_CASE("dedup without units.jsonl is MissingInput") {
  testing::TempDir w;
  auto r = stage("dedup", w.path());
  CHECK(r.code == cli::kStageError);
  CHECK(r.err.find("MissingInput") != std::string::npos);
  CHECK(r.err.find("units.jsonl") != std::string::npos);
}

TEST_CASE("dry run prints the plan and writes nothing") {
  testing::TempDir w;
  auto r = stage("run", w.path(), {"--dry-run"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(count(r.out, "would run") == pipeline::stage_names().size());
  CHECK(fs::is_empty(w.path()));
}

TEST_CASE("config errors exit with code 2") {
  testing::TempDir w;
  CHECK(forge_cli({"run"}).code == cli::kConfigError);
  CHECK(forge_cli({"run", "--config", (w.path() / "missing.json").string()}).code == cli::kConfigError);
  CHECK(forge_cli({"frobnicate"}).code == cli::kConfigError);
  write_file_atomic(w.path() / "bad.json", R"({"paths": {}, "colour": 1})");
  auto r = forge_cli({"run", "--config", (w.path() / "bad.json").string()});
  CHECK(r.code == cli::kConfigError);
  CHECK(r.err.find("colour") != std::string::npos);
  write_file_atomic(w.path() / "bad2.json", R"({"cpt": {"general_fraction": 1.5}})");
  CHECK(forge_cli({"run", "--config", (w.path() / "bad2.json").string()}).code == cli::kConfigError);
  CHECK(forge_cli({"--help"}).code == cli::kOk);
}

TEST_CASE("disabled generator config is reported as a config error at the stage") {
  testing::TempDir w;
  json cfg = json::parse(read_file(kConfig));
  cfg.erase("generators");
  cfg["paths"]["corpus_root"] = (kConfig.parent_path() / "contracts").string();
  cfg["paths"]["labels"] = (kConfig.parent_path() / "labels.json").string();
  cfg["paths"]["general_text"] = (kConfig.parent_path() / "../general/english.txt").string();
  write_file_atomic(w.path() / "cfg.json", cfg.dump());
  auto r = forge_cli({"run", "--config", (w.path() / "cfg.json").string(), "--work-dir", (w.path() / "out").string()});
  CHECK(r.code == cli::kConfigError);
  CHECK(r.err.find("generators") != std::string::npos);
}

TEST_CASE("manifest subcommand prints the published hyperparameters") {
  auto r = forge_cli({"manifest", "--stage", "cpt"});
  REQUIRE(r.code == 0);
  auto j = json::parse(r.out);
  CHECK(j["per_device_batch"] == 64);
  CHECK(j["grad_accum"] == 16);
  auto o = forge_cli({"manifest", "--stage", "sft", "--set", "epochs=5"});
  CHECK(json::parse(o.out)["epochs"] == 5);
  CHECK(forge_cli({"manifest", "--stage", "sft", "--set", "nonsense=1"}).code == cli::kConfigError);
}

TEST_CASE("ngram train and loss subcommands") {
  testing::TempDir w;
  auto model = (w.path() / "model.json").string();
  auto contracts = (fs::path(FORGE_FIXTURE_DIR) / "adaptation" / "train").string();
  auto heldout = (fs::path(FORGE_FIXTURE_DIR) / "adaptation" / "heldout").string();
  REQUIRE(forge_cli({"ngram", "train", "--corpus", contracts, "--out", model}).code == 0);
  auto r = forge_cli({"ngram", "loss", "--model", model, "--corpus", heldout});
  REQUIRE(r.code == 0);
  auto loss = json::parse(r.out);
  auto m = training::ngram_from_json(json::parse(read_file(model)));
  auto oracle = training::corpus_loss(m, pipeline::contract_sequences(heldout));
  CHECK(loss["average"].get<double>() == doctest::Approx(oracle.average()));
  CHECK(forge_cli({"ngram", "loss", "--model", (w.path() / "none.json").string(), "--corpus", heldout}).code ==
        cli::kStageError);
}

TEST_CASE("review export overrides flow into the SFT set") {
  testing::TempDir w;
  REQUIRE(stage("run", w.path()).code == 0);
  auto selection = read_jsonl(w.path() / "selection.jsonl");
  std::string winner = selection.at(0)["winner"];
  json row{{"type", "override"}, {"candidate_id", winner}, {"explanation", "Expert-corrected text."},
           {"locations", json::array({json::array({1, 2})})}};
  write_file_atomic(w.path() / "export.jsonl", row.dump() + "\n");

  json cfg = json::parse(read_file(kConfig));
  for (const char* k : {"corpus_root", "labels", "general_text"}) {
    cfg["paths"][k] = (kConfig.parent_path() / cfg["paths"][k].get<std::string>()).lexically_normal().string();
  }
  cfg["paths"]["review_export"] = (w.path() / "export.jsonl").string();
  write_file_atomic(w.path() / "cfg.json", cfg.dump());
  auto r = forge_cli({"build-sft", "--config", (w.path() / "cfg.json").string(), "--work-dir", w.path().string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  std::size_t verified = 0;
  for (const auto& e : read_jsonl(w.path() / "sft.jsonl")) {
    if (e["provenance"] == "human_verified") {
      ++verified;
      CHECK(e["explanation"] == "Expert-corrected text.");
    }
  }
  CHECK(verified == 1);
}

TEST_CASE("eval --records scores an existing prediction file") {
  testing::TempDir w;
  REQUIRE(stage("run", w.path()).code == 0);
  auto r = forge_cli({"eval", "--records", (w.path() / "predictions.jsonl").string()});
  REQUIRE(r.code == 0);
  CHECK(r.out == read_file(w.path() / "metrics.txt"));
}
