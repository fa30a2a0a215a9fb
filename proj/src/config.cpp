#include "mimlab/config.hpp"

#include <fstream>

#include <json.hpp>

namespace mimlab {

namespace {

using nlohmann::json;

void parse_train(const json& j, TrainConfig& t, bool& gamma_given) {
  t.epochs = j.value("epochs", t.epochs);
  t.batch_size = j.value("batch_size", t.batch_size);
  t.warmup_epochs = j.value("warmup_epochs", t.warmup_epochs);
  t.lr_peak = j.value("lr_peak", t.lr_peak);
  t.lr_min = j.value("lr_min", t.lr_min);
  t.weight_decay = j.value("weight_decay", t.weight_decay);
  t.beta1 = j.value("beta1", t.beta1);
  t.beta2 = j.value("beta2", t.beta2);
  t.adam_eps = j.value("adam_eps", t.adam_eps);
  t.flags.delta_v = j.value("delta_v", t.flags.delta_v);
  t.flags.delta_m = j.value("delta_m", t.flags.delta_m);
  if (j.contains("loss")) t.loss = loss_from_string(j.at("loss"));
  if (j.contains("sampler")) t.sampler = sampler_from_string(j.at("sampler"));
  if (j.contains("gamma")) {
    t.gamma = j.at("gamma");
    gamma_given = true;
  }
  t.seed = j.value("seed", t.seed);
  t.checkpoint_every = j.value("checkpoint_every", t.checkpoint_every);
  t.aug.enabled = j.value("augment", t.aug.enabled);
  t.aug.scale_min = j.value("aug_scale_min", t.aug.scale_min);
  t.aug.scale_max = j.value("aug_scale_max", t.aug.scale_max);
  t.aug.ratio_min = j.value("aug_ratio_min", t.aug.ratio_min);
  t.aug.ratio_max = j.value("aug_ratio_max", t.aug.ratio_max);
  t.aug.flip_prob = j.value("aug_flip_prob", t.aug.flip_prob);
  t.threads = j.value("threads", t.threads);
}

}  // namespace

RunConfig parse_config(const std::string& json_text) {
  const json j = json::parse(json_text);
  RunConfig cfg;

  if (j.contains("model")) {
    const json& m = j.at("model");
    cfg.model.preset = m.value("preset", cfg.model.preset);
    cfg.model.patch = m.value("patch", cfg.model.patch);
  }
  if (j.contains("data")) {
    const json& d = j.at("data");
    cfg.data.kind = d.value("kind", cfg.data.kind);
    cfg.data.count = d.value("count", cfg.data.count);
    cfg.data.height = d.value("height", cfg.data.height);
    cfg.data.width = d.value("width", cfg.data.width);
    cfg.data.classes = d.value("classes", cfg.data.classes);
    cfg.data.seed = d.value("seed", cfg.data.seed);
    cfg.data.path = d.value("path", cfg.data.path);
    if (d.contains("mean"))
      for (size_t c = 0; c < 3; ++c) cfg.data.mean[c] = d.at("mean").at(c);
    if (d.contains("std"))
      for (size_t c = 0; c < 3; ++c) cfg.data.stddev[c] = d.at("std").at(c);
  }
  if (j.contains("teacher")) {
    const json& t = j.at("teacher");
    cfg.teacher.kind = t.value("kind", cfg.teacher.kind);
    cfg.teacher.preset = t.value("preset", cfg.teacher.preset);
    cfg.teacher.seed = t.value("seed", cfg.teacher.seed);
    cfg.teacher.path = t.value("path", cfg.teacher.path);
    cfg.teacher.normalize_targets = t.value("normalize_targets", cfg.teacher.normalize_targets);
  }
  if (j.contains("train")) parse_train(j.at("train"), cfg.train, cfg.train_gamma_given);
  if (j.contains("probe")) {
    const json& p = j.at("probe");
    cfg.probe.epochs = p.value("epochs", cfg.probe.epochs);
    cfg.probe.lr = p.value("lr", cfg.probe.lr);
    cfg.probe.train_frac = p.value("train_frac", cfg.probe.train_frac);
  }
  if (j.contains("finetune")) {
    const json& f = j.at("finetune");
    cfg.finetune.epochs = f.value("epochs", cfg.finetune.epochs);
    cfg.finetune.batch_size = f.value("batch_size", cfg.finetune.batch_size);
    cfg.finetune.lr = f.value("lr", cfg.finetune.lr);
    cfg.finetune.weight_decay = f.value("weight_decay", cfg.finetune.weight_decay);
    cfg.finetune.train_frac = f.value("train_frac", cfg.finetune.train_frac);
  }
  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    if (s.contains("models"))
      for (const auto& m : s.at("models")) cfg.sweep.models.push_back(preset_from_string(m));
    if (s.contains("gammas"))
      for (const auto& g : s.at("gammas")) cfg.sweep.gammas.push_back(g.get<double>());
    if (s.contains("flags"))
      for (const auto& f : s.at("flags"))
        cfg.sweep.flags.push_back({f.value("delta_v", 1), f.value("delta_m", 0)});
    if (s.contains("losses"))
      for (const auto& l : s.at("losses")) cfg.sweep.losses.push_back(loss_from_string(l));
    if (s.contains("samplers"))
      for (const auto& k : s.at("samplers")) cfg.sweep.samplers.push_back(sampler_from_string(k));
    if (s.contains("seeds"))
      for (const auto& sd : s.at("seeds")) cfg.sweep.seeds.push_back(sd.get<uint64_t>());
    cfg.sweep.epochs = s.value("epochs", cfg.sweep.epochs);
    cfg.sweep.probe = cfg.probe;
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config(text);
}

Teacher make_teacher(const TeacherSpec& spec, int patch) {
  if (spec.kind == "pseudo_vit")
    return make_pseudo_teacher(spec.seed, encoder_preset(preset_from_string(spec.preset)), patch,
                               spec.normalize_targets);
  if (spec.kind == "archive") return load_teacher(spec.path, spec.normalize_targets);
  throw std::invalid_argument("unknown teacher kind: " + spec.kind);
}

ModelConfig resolve_model(const ModelSpec& spec, const Teacher& teacher) {
  ModelConfig mc;
  mc.encoder = encoder_preset(preset_from_string(spec.preset));
  mc.decoder = {1, mc.encoder.heads};
  mc.head = {mc.encoder.dim, teacher.target_dim()};
  mc.patch = spec.patch;
  mc.validate();
  return mc;
}

double resolve_gamma(const RunConfig& cfg) {
  if (cfg.train_gamma_given) return cfg.train.gamma;
  const Preset p = preset_from_string(cfg.model.preset);
  if (p == Preset::Micro) return 0.5;
  return default_ratio(model_size_of(p));
}

}  // namespace mimlab
