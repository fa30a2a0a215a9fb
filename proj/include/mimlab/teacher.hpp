#pragma once

// Frozen target provider. The desk-scale default is a seeded, randomly
// initialized frozen ViT; real weights converted offline can be loaded from a
// WeightArchive instead. Targets are per-patch features of the full
// (unmasked) view, split by absolute patch position.

#include <cstdint>
#include <memory>
#include <unordered_map>

#include "mimlab/masking.hpp"
#include "mimlab/model.hpp"

namespace mimlab {

struct Teacher {
  EncoderConfig encoder;
  int patch = 0;
  ParamMap<float> params;        // embed.*, enc.*, optional proj.w
  bool normalize_targets = true;
  int source_layer = -1;         // which source block the features came from; -1 = final

  // feature width: the projection's output width when present, else the
  // encoder dim
  int target_dim() const {
    auto it = params.find("proj.w");
    return it != params.end() ? static_cast<int>(it->second.cols()) : encoder.dim;
  }
};

Teacher make_pseudo_teacher(uint64_t seed, const EncoderConfig& cfg, int patch,
                            bool normalize_targets = true);

void save_teacher(const Teacher& t, const std::string& path);
Teacher load_teacher(const std::string& path, bool normalize_targets = true);

// Per-patch target features [N, D_t] for one standardized image [3,H,W].
// Pure function of (weights, image, flags); no gradient can reach the teacher
// because its weights never join a tape as parameters.
Tensor teacher_targets(const Teacher& t, const Tensor& image);

struct SplitTargets {
  Tensor t_v;  // [|v|, D_t]
  Tensor t_m;  // [|m|, D_t]
};

SplitTargets split_targets(const Tensor& targets, const MaskSpec& mask);

// Inverse of split_targets: rebuilds the full [N, D_t] sequence.
Tensor scatter_targets(const Tensor& t_v, const Tensor& t_m, const MaskSpec& mask);

class Dataset;

// Computes and stores teacher targets for every dataset sample under the
// given augmentation seed; returns the number of sequences written.
int export_targets(const Dataset& data, const Teacher& teacher, const std::string& path,
                   uint64_t aug_seed = 0);

// Loads cached target sequences (one [N, D_t] tensor per id); throws if any
// key is missing.
std::vector<Tensor> load_targets(const std::string& path, const std::string& dataset_id,
                                 const std::vector<int>& ids, uint64_t aug_seed = 0);

// On-disk cache of teacher targets, keyed by (dataset id, sample id,
// augmentation seed). Backed by a WeightArchive; loaded fully on open,
// written out by flush().
class TargetCache {
 public:
  explicit TargetCache(std::string path);

  static std::string key(const std::string& dataset_id, int sample, uint64_t aug_seed);

  const Tensor* find(const std::string& key);  // counts a hit or a miss
  void put(const std::string& key, Tensor t);
  void flush();

  int64_t hits() const { return hits_; }
  int64_t misses() const { return misses_; }
  size_t size() const { return entries_.size(); }

 private:
  std::string path_;
  ParamMap<float> entries_;
  int64_t hits_ = 0;
  int64_t misses_ = 0;
  bool dirty_ = false;
};

}  // namespace mimlab
