#pragma once

// Evaluation surface: frozen-feature linear probing, full fine-tuning, and
// the supervision-position / mask-ratio sweep runner.

#include "mimlab/train.hpp"

namespace mimlab {

struct ProbeConfig {
  int epochs = 30;
  double lr = 0.01;
  double train_frac = 0.8;
  // feature pooling is fixed: mean over all patch tokens of the final
  // encoder layer
};

struct FinetuneConfig {
  int epochs = 30;
  int batch_size = 8;
  double lr = 1e-3;
  double weight_decay = 0.05;
  double train_frac = 0.8;
};

// Mean-pooled final-layer patch features [dim] for one image; no masking.
Tensor extract_features(const ModelBundle& bundle, const Tensor& image);

struct EvalSplit {
  std::vector<int> train_ids;
  std::vector<int> test_ids;
};

// Deterministic leading train_frac / trailing split by index.
EvalSplit split_by_index(int n, double train_frac);

// Trains an affine classifier on frozen features with softmax cross-entropy;
// returns held-out top-1. The encoder is never touched.
double linear_probe(const ModelBundle& bundle, const Dataset& data, const ProbeConfig& cfg,
                    uint64_t seed);

// All parameters trainable under a fresh classification head; returns
// held-out top-1. Zero epochs just evaluates the fresh head.
double finetune(const ModelBundle& bundle, const Dataset& data, const FinetuneConfig& cfg,
                uint64_t seed);

struct SweepPlan {
  std::vector<Preset> models;
  std::vector<double> gammas;
  std::vector<SupervisionFlags> flags;
  std::vector<LossKind> losses;
  std::vector<SamplerKind> samplers;
  std::vector<uint64_t> seeds;
  int epochs = 4;  // pretrain epochs per cell
  ProbeConfig probe;

  size_t cells() const {
    return models.size() * gammas.size() * flags.size() * losses.size() * samplers.size() *
           seeds.size();
  }
};

struct SweepContext {
  const Dataset* data = nullptr;
  // teacher per (seed) is shared; the teacher is frozen and identical across
  // cells
  const Teacher* teacher = nullptr;
  TrainConfig base;         // epochs/gamma/flags/... overridden per cell
  std::string out_dir;      // per-cell work dirs live here
  int parallel = 1;
};

// Runs every cell (pretrain -> probe), appending one CSV row per cell:
//   model,gamma,delta_v,delta_m,loss_kind,sampler,seed,final_pretrain_loss,probe_acc
// Rows already present in the CSV (by key columns) are skipped, so reruns are
// idempotent and a failed sweep resumes. A failing cell records
// error:<what> in its metric fields and the sweep continues.
// Returns the number of rows appended.
int run_sweep(const SweepPlan& plan, const SweepContext& ctx, const std::string& csv_path);

}  // namespace mimlab
