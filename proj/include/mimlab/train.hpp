#pragma once

// Pre-training loop: AdamW with linear warmup + cosine decay, seeded epoch
// iteration, per-step metrics CSV, and bit-exact checkpoint/resume.

#include <string>

#include "mimlab/dataset.hpp"
#include "mimlab/loss.hpp"
#include "mimlab/model.hpp"
#include "mimlab/teacher.hpp"

namespace mimlab {

struct OptimConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

struct OptimState {
  ParamMap<float> m;
  ParamMap<float> v;
  int64_t step = 0;
};

// Weight decay skips LN affines and biases.
bool decay_exempt(const std::string& name);

// One AdamW step over exactly the entries present in `grads`; parameters a
// step never touched keep their bits.
void adamw_step(ParamMap<float>& params, const ParamMap<float>& grads, OptimState& state,
                const OptimConfig& cfg, double lr);

// Linear warmup 0 -> peak over [0, warmup_steps), then cosine decay to
// lr_min at step == total_steps.
double lr_at(int64_t step, int64_t total_steps, int64_t warmup_steps, double lr_peak,
             double lr_min);

struct TrainConfig {
  int epochs = 20;
  int batch_size = 8;
  double warmup_epochs = -1.0;  // <0: epochs / 10
  double lr_peak = -1.0;        // <0: 1.5e-3 * batch_size / 256
  double lr_min = 1e-6;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  SupervisionFlags flags{1, 0};
  LossKind loss = LossKind::CosineDistance;
  SamplerKind sampler = SamplerKind::Blockwise;
  double gamma = 0.5;
  uint64_t seed = 0;
  int checkpoint_every = 10;  // epochs
  AugmentConfig aug;
  int threads = 1;

  double resolved_warmup_epochs() const { return warmup_epochs < 0 ? epochs / 10.0 : warmup_epochs; }
  double resolved_lr_peak() const { return lr_peak < 0 ? 1.5e-3 * batch_size / 256.0 : lr_peak; }
  void validate() const;
};

struct CheckpointMeta {
  int version = 1;
  int epoch = 0;    // epochs completed
  int64_t step = 0; // optimizer steps completed
  uint64_t seed = 0;
  uint64_t config_hash = 0;
  std::string config_json;  // resolved model config, for standalone loading
};

struct Checkpoint {
  ModelBundle bundle;
  OptimState opt;
  CheckpointMeta meta;
};

// Archive of model weights + optimizer moments, with a JSON metadata
// side-file at <path>.json.
void save_checkpoint(const std::string& path, const ModelBundle& bundle, const OptimState& opt,
                     const CheckpointMeta& meta);
Checkpoint load_checkpoint(const std::string& path);

struct PretrainResult {
  ModelBundle bundle;
  OptimState opt;
  std::vector<double> epoch_mean_loss;  // mean per-sample loss per epoch
  std::string final_checkpoint;
  std::string metrics_path;
};

// Runs the full mask -> encode -> decode -> head -> Eq-style loss loop.
// Deterministic for a fixed seed; aborts on a non-finite loss with the
// offending (epoch, step, sample, seed) in the message. `resume_path`
// continues a checkpointed run; `cache` serves/collects teacher targets.
PretrainResult pretrain(const TrainConfig& tc, const ModelConfig& mc, const Dataset& data,
                        const Teacher& teacher, const std::string& out_dir,
                        const std::string& resume_path = {}, TargetCache* cache = nullptr);

// Canonical fingerprint of everything that must match for a resume to be
// valid.
uint64_t train_config_hash(const TrainConfig& tc, const ModelConfig& mc,
                           const std::string& dataset_id, const Teacher& teacher);

}  // namespace mimlab
