#include "mimlab/teacher.hpp"

#include <cmath>
#include <filesystem>

#include "mimlab/archive.hpp"
#include "mimlab/dataset.hpp"

namespace mimlab {

Teacher make_pseudo_teacher(uint64_t seed, const EncoderConfig& cfg, int patch,
                            bool normalize_targets) {
  RngStream rng(seed, "teacher-init");
  Teacher t;
  t.encoder = cfg;
  t.patch = patch;
  t.params = init_encoder_params(cfg, patch, rng);
  t.normalize_targets = normalize_targets;
  return t;
}

void save_teacher(const Teacher& t, const std::string& path) {
  ParamMap<float> entries = t.params;
  entries.emplace("meta/heads", Tensor({1}, static_cast<float>(t.encoder.heads)));
  entries.emplace("meta/layer", Tensor({1}, static_cast<float>(t.source_layer)));
  write_archive(path, entries);
}

Teacher load_teacher(const std::string& path, bool normalize_targets) {
  ParamMap<float> entries = read_archive(path);
  auto take_meta = [&](const char* name) {
    auto it = entries.find(name);
    if (it == entries.end()) throw ArchiveError(std::string("teacher archive missing entry ") + name);
    const float v = it->second.at(0);
    entries.erase(it);
    return static_cast<int>(v);
  };
  Teacher t;
  t.encoder.heads = take_meta("meta/heads");
  t.source_layer = take_meta("meta/layer");
  t.normalize_targets = normalize_targets;

  auto embed = entries.find("embed.w");
  if (embed == entries.end()) throw ArchiveError("teacher archive missing entry embed.w");
  const int64_t in_dim = embed->second.rows();
  t.encoder.dim = static_cast<int>(embed->second.cols());
  const int patch_sq = static_cast<int>(in_dim / 3);
  t.patch = static_cast<int>(std::lround(std::sqrt(static_cast<double>(patch_sq))));
  if (t.patch * t.patch * 3 != in_dim) throw ArchiveError("teacher embed width is not a patch square");

  int layers = 0;
  while (entries.count("enc." + std::to_string(layers) + ".ln1.g")) ++layers;
  if (layers == 0) throw ArchiveError("teacher archive has no encoder blocks");
  t.encoder.layers = layers;
  const auto& w1 = entries.find("enc.0.mlp.w1");
  if (w1 == entries.end()) throw ArchiveError("teacher archive missing entry enc.0.mlp.w1");
  t.encoder.mlp_ratio = static_cast<int>(w1->second.cols() / t.encoder.dim);
  if (t.encoder.dim % t.encoder.heads != 0) throw ArchiveError("teacher heads do not divide dim");

  t.params = std::move(entries);
  return t;
}

Tensor teacher_targets(const Teacher& t, const Tensor& image) {
  Tensor features = encode_all_frozen(t.params, t.encoder, t.patch, image);
  auto proj = t.params.find("proj.w");
  if (proj != t.params.end()) features = matmul(features, proj->second);
  if (t.normalize_targets) features = standardize_rows(features);
  assert_finite(features, "teacher targets");
  return features;
}

SplitTargets split_targets(const Tensor& targets, const MaskSpec& mask) {
  if (targets.rows() != mask.grid.n()) throw std::invalid_argument("split_targets: grid mismatch");
  return SplitTargets{gather_rows(targets, mask.visible), gather_rows(targets, mask.masked)};
}

Tensor scatter_targets(const Tensor& t_v, const Tensor& t_m, const MaskSpec& mask) {
  const int64_t d = t_v.rows() > 0 ? t_v.cols() : t_m.cols();
  Tensor out({static_cast<int64_t>(mask.grid.n()), d});
  for (size_t i = 0; i < mask.visible.size(); ++i)
    for (int64_t j = 0; j < d; ++j) out.at(mask.visible[i], j) = t_v.at(static_cast<int64_t>(i), j);
  for (size_t i = 0; i < mask.masked.size(); ++i)
    for (int64_t j = 0; j < d; ++j) out.at(mask.masked[i], j) = t_m.at(static_cast<int64_t>(i), j);
  return out;
}

int export_targets(const Dataset& data, const Teacher& teacher, const std::string& path,
                   uint64_t aug_seed) {
  TargetCache cache(path);
  int written = 0;
  for (int i = 0; i < data.size(); ++i) {
    const std::string key = TargetCache::key(data.id(), i, aug_seed);
    if (cache.find(key) == nullptr) {
      cache.put(key, teacher_targets(teacher, data.image(i)));
      ++written;
    }
  }
  cache.flush();
  return written;
}

std::vector<Tensor> load_targets(const std::string& path, const std::string& dataset_id,
                                 const std::vector<int>& ids, uint64_t aug_seed) {
  TargetCache cache(path);
  std::vector<Tensor> out;
  out.reserve(ids.size());
  for (int id : ids) {
    const std::string key = TargetCache::key(dataset_id, id, aug_seed);
    const Tensor* t = cache.find(key);
    if (t == nullptr) throw ArchiveError("target cache is missing key " + key);
    out.push_back(*t);
  }
  return out;
}

TargetCache::TargetCache(std::string path) : path_(std::move(path)) {
  if (std::filesystem::exists(path_)) entries_ = read_archive(path_);
}

std::string TargetCache::key(const std::string& dataset_id, int sample, uint64_t aug_seed) {
  return "t/" + dataset_id + "/" + std::to_string(sample) + "/" + std::to_string(aug_seed);
}

const Tensor* TargetCache::find(const std::string& key) {
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    ++misses_;
    return nullptr;
  }
  ++hits_;
  return &it->second;
}

void TargetCache::put(const std::string& key, Tensor t) {
  entries_.insert_or_assign(key, std::move(t));
  dirty_ = true;
}

void TargetCache::flush() {
  if (!dirty_) return;
  write_archive(path_, entries_);
  dirty_ = false;
}

}  // namespace mimlab
