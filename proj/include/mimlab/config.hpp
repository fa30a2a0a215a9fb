#pragma once

// JSON run configuration. Key names mirror the config structs one to one;
// every field is optional and falls back to the struct default.

#include "mimlab/harness.hpp"

namespace mimlab {

struct ModelSpec {
  std::string preset = "micro";
  int patch = 4;
};

struct TeacherSpec {
  std::string kind = "pseudo_vit";  // "pseudo_vit" | "archive"
  std::string preset = "micro";
  uint64_t seed = 7;
  std::string path;
  bool normalize_targets = true;
};

struct RunConfig {
  ModelSpec model;
  DataConfig data;
  TeacherSpec teacher;
  TrainConfig train;
  ProbeConfig probe;
  FinetuneConfig finetune;
  SweepPlan sweep;
  bool train_gamma_given = false;
};

RunConfig load_config(const std::string& path);
RunConfig parse_config(const std::string& json_text);

Teacher make_teacher(const TeacherSpec& spec, int patch);

// Encoder preset + head sized to the teacher's feature width.
ModelConfig resolve_model(const ModelSpec& spec, const Teacher& teacher);

// Explicit gamma if given, else the model-size default table (the test-only
// micro preset falls back to 0.5).
double resolve_gamma(const RunConfig& cfg);

}  // namespace mimlab
