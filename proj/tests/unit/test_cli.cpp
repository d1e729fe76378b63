#include "seedgrow/scene_io.hpp"
#include "test_util.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

using seedgrow::testing::TempDir;

namespace {

int cli(const std::string& args) {
  const std::string cmd = std::string(SEEDGROW_CLI_PATH) + " -q " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_synth_config(const std::filesystem::path& p) {
  std::ofstream(p) << nlohmann::json{{"object_count", 3},
                                     {"points_per_object", 2000},
                                     {"background_points", 8000},
                                     {"camera_count", 6}}
                          .dump();
}

}  // namespace

TEST_CASE("synth, run, eval, occlude and search end to end") {
  TempDir dir("cli");
  const auto scene = (dir / "scene").string();
  write_synth_config(dir / "synth.json");
  REQUIRE(cli("synth --out " + scene + " --config " + (dir / "synth.json").string() + " --seed 4 --pixel-features") == 0);
  CHECK(std::filesystem::exists(dir / "scene/gt.in3d"));
  CHECK(std::filesystem::exists(dir / "scene/queries.json"));

  const auto out = (dir / "inst.in3d").string();
  REQUIRE(cli("run --scene " + scene + " --views-fraction 0.5 --out " + out) == 0);
  CHECK(std::filesystem::exists(dir / "inst.report.json"));
  REQUIRE(cli("eval --pred " + out + " --gt " + scene + "/gt.in3d --out " + (dir / "eval.json").string()) == 0);
  auto report = nlohmann::json::parse(slurp(dir / "eval.json"));
  CHECK(report.at("mAP").get<double>() > 0.5);

  REQUIRE(cli("occlude --scene " + scene + " --percent 30 --out " + (dir / "occ").string()) == 0);
  CHECK(cli("run --scene " + scene + " --masks " + (dir / "occ").string() + " --views-fraction 0.5 --out " +
            (dir / "occ.in3d").string()) == 0);

  REQUIRE(cli("search --scene " + scene + " --instances " + out + " --out " + (dir / "search.json").string()) == 0);
  auto hits = nlohmann::json::parse(slurp(dir / "search.json"));
  CHECK(hits.size() == 3);
}

TEST_CASE("per-stage subcommands and exit codes") {
  TempDir dir("cli_stages");
  const auto scene = (dir / "scene").string();
  write_synth_config(dir / "synth.json");
  REQUIRE(cli("synth --out " + scene + " --config " + (dir / "synth.json").string()) == 0);
  const auto ck = (dir / "ck").string();

  // lift before filter: dependency error
  CHECK(cli("map --scene " + scene + " --checkpoint-dir " + ck + " --views-fraction 0.5") == 0);
  CHECK(cli("lift --scene " + scene + " --checkpoint-dir " + ck + " --views-fraction 0.5") == 3);
  for (const char* st : {"filter", "lift", "split", "grow", "merge"})
    CHECK(cli(std::string(st) + " --scene " + scene + " --checkpoint-dir " + ck + " --views-fraction 0.5") == 0);

  // same flags through run reproduce the staged result
  const auto out = (dir / "run.in3d").string();
  REQUIRE(cli("run --scene " + scene + " --views-fraction 0.5 --out " + out) == 0);
  auto staged = seedgrow::read_instances(dir / "ck/merge/merged.in3d");
  auto whole = seedgrow::read_instances(out);
  CHECK(staged.instances.size() >= whole.instances.size());

  CHECK(cli("run --scene " + scene + " --views-fraction 2") == 2);
  CHECK(cli("run --scene " + scene + " --merge-schedule 0.3,0.5") == 2);
  CHECK(cli("run --scene " + (dir / "nowhere").string()) == 2);
  CHECK(cli("run --scene " + scene + " --cmin 0.2 --tau-vis 0.1 --min-cluster-size 30 --seed 1 --workers 1 "
            "--merge-schedule 0.7,0.5 --out " + (dir / "x.in3d").string()) == 0);
  std::ofstream(dir / "bad.json") << "{\"view_fraction\": ";
  CHECK(cli("run --scene " + scene + " --config " + (dir / "bad.json").string()) == 2);
  CHECK(cli("no-such-command") == 2);
}
