// End-to-end smoke of the CLI surface: config-driven pretrain -> probe ->
// sweep, plus mask-dump and export-targets. Drives the real binary.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#ifndef MIMLAB_CLI_PATH
#error "MIMLAB_CLI_PATH must point at the mimlab binary"
#endif

namespace {

const std::string cli = MIMLAB_CLI_PATH;

struct TempDir {
  std::string path;
  explicit TempDir(const std::string& name) {
    path = (std::filesystem::temp_directory_path() / name).string();
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

int run(const std::string& args) {
  return std::system((cli + " " + args + " > /dev/null 2>&1").c_str());
}

const char* kConfig = R"({
  "model": {"preset": "micro", "patch": 4},
  "data": {"kind": "synthetic", "count": 32, "height": 16, "width": 16, "classes": 2, "seed": 11},
  "teacher": {"kind": "pseudo_vit", "preset": "micro", "seed": 7},
  "train": {"epochs": 1, "batch_size": 8, "warmup_epochs": 0, "lr_peak": 0.001, "gamma": 0.5,
            "delta_v": 1, "delta_m": 0, "augment": false, "checkpoint_every": 0, "seed": 3},
  "probe": {"epochs": 5, "lr": 0.02},
  "sweep": {"gammas": [0.25, 0.5], "models": ["micro"], "flags": [{"delta_v": 1, "delta_m": 0}],
            "losses": ["cosine"], "samplers": ["random"], "seeds": [1], "epochs": 1}
})";

}  // namespace

TEST_CASE("pretrain, probe and sweep run through the binary") {
  TempDir dir("mimlab_cli_smoke");
  const std::string cfg = dir.path + "/run.json";
  std::ofstream(cfg) << kConfig;

  CHECK(run("--config " + cfg + " --out-dir " + dir.path + "/out pretrain") == 0);
  CHECK(std::filesystem::exists(dir.path + "/out/checkpoint_final.bin"));
  CHECK(std::filesystem::exists(dir.path + "/out/checkpoint_final.bin.json"));
  CHECK(std::filesystem::exists(dir.path + "/out/metrics.csv"));

  CHECK(run("--config " + cfg + " probe --checkpoint " + dir.path + "/out/checkpoint_final.bin") == 0);
  CHECK(run("--config " + cfg + " --out-dir " + dir.path + "/sweep sweep") == 0);

  std::ifstream csv(dir.path + "/sweep/sweep.csv");
  std::string line;
  std::getline(csv, line);
  CHECK(line == "model,gamma,delta_v,delta_m,loss_kind,sampler,seed,final_pretrain_loss,probe_acc");
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 2);
}

TEST_CASE("mask-dump and export-targets succeed") {
  TempDir dir("mimlab_cli_tools");
  CHECK(run("mask-dump --grid 14x14 --gamma 0.5 --sampler blockwise --seed 3") == 0);
  CHECK(run("mask-dump --grid 14x14 --gamma 0.5 --sampler random --seed 3") == 0);
  CHECK(run("export-targets --dataset synth:11:4:16x16 --teacher pseudo:micro:7 --patch 4 --out " +
            dir.path + "/targets.bin") == 0);
  CHECK(std::filesystem::exists(dir.path + "/targets.bin"));
}

TEST_CASE("bad inputs exit nonzero") {
  CHECK(run("probe --checkpoint /nonexistent.bin") != 0);
  CHECK(run("mask-dump --grid bogus") != 0);
}
