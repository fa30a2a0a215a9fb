#include "mimlab/train.hpp"

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "mimlab/archive.hpp"

namespace mimlab {

bool decay_exempt(const std::string& name) {
  const auto dot = name.find_last_of('.');
  const std::string leaf = dot == std::string::npos ? name : name.substr(dot + 1);
  return leaf == "g" || (!leaf.empty() && leaf[0] == 'b');
}

void adamw_step(ParamMap<float>& params, const ParamMap<float>& grads, OptimState& state,
                const OptimConfig& cfg, double lr) {
  state.step += 1;
  const auto b1 = static_cast<float>(cfg.beta1);
  const auto b2 = static_cast<float>(cfg.beta2);
  const auto eps = static_cast<float>(cfg.eps);
  const auto lrf = static_cast<float>(lr);
  const auto bc1 = static_cast<float>(1.0 - std::pow(cfg.beta1, static_cast<double>(state.step)));
  const auto bc2 = static_cast<float>(1.0 - std::pow(cfg.beta2, static_cast<double>(state.step)));
  for (const auto& [name, g] : grads) {
    auto pit = params.find(name);
    if (pit == params.end()) throw std::invalid_argument("adamw_step: gradient for unknown parameter " + name);
    Tensor& p = pit->second;
    if (!p.same_shape(g)) throw std::invalid_argument("adamw_step: gradient shape mismatch for " + name);
    Tensor& m = state.m.try_emplace(name, Tensor(p.shape)).first->second;
    Tensor& v = state.v.try_emplace(name, Tensor(p.shape)).first->second;
    const float wd = decay_exempt(name) ? 0.0f : static_cast<float>(cfg.weight_decay);
    for (size_t i = 0; i < p.data.size(); ++i) {
      m.data[i] = b1 * m.data[i] + (1.0f - b1) * g.data[i];
      v.data[i] = b2 * v.data[i] + (1.0f - b2) * g.data[i] * g.data[i];
      const float mhat = m.data[i] / bc1;
      const float vhat = v.data[i] / bc2;
      p.data[i] -= lrf * (mhat / (std::sqrt(vhat) + eps) + wd * p.data[i]);
    }
  }
}

double lr_at(int64_t step, int64_t total_steps, int64_t warmup_steps, double lr_peak,
             double lr_min) {
  if (step < 0) throw std::invalid_argument("lr_at: negative step");
  if (warmup_steps > 0 && step < warmup_steps)
    return lr_peak * static_cast<double>(step) / static_cast<double>(warmup_steps);
  const int64_t span = total_steps - warmup_steps;
  if (span <= 0) return lr_peak;
  double t = static_cast<double>(step - warmup_steps) / static_cast<double>(span);
  t = std::clamp(t, 0.0, 1.0);
  return lr_min + 0.5 * (lr_peak - lr_min) * (1.0 + std::cos(3.141592653589793 * t));
}

void TrainConfig::validate() const {
  if (epochs <= 0 || batch_size <= 0) throw std::invalid_argument("epochs and batch_size must be positive");
  if (!(resolved_warmup_epochs() < epochs)) throw std::invalid_argument("warmup_epochs must be below epochs");
  if (!(lr_min <= resolved_lr_peak())) throw std::invalid_argument("lr_min must not exceed lr_peak");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in [0, 1]");
  flags.validate();
  if (threads < 1) throw std::invalid_argument("threads must be >= 1");
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

namespace {

nlohmann::json model_config_json(const ModelConfig& mc) {
  return {{"layers", mc.encoder.layers}, {"dim", mc.encoder.dim},
          {"heads", mc.encoder.heads},   {"mlp_ratio", mc.encoder.mlp_ratio},
          {"dec_heads", mc.decoder.heads}, {"patch", mc.patch},
          {"target_dim", mc.head.out_dim}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig mc;
  mc.encoder = {j.at("layers"), j.at("dim"), j.at("heads"), j.at("mlp_ratio")};
  mc.decoder = {1, j.at("dec_heads")};
  mc.patch = j.at("patch");
  mc.head = {mc.encoder.dim, j.at("target_dim")};
  return mc;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelBundle& bundle, const OptimState& opt,
                     const CheckpointMeta& meta) {
  ParamMap<float> entries;
  for (const auto& [k, t] : bundle.params) entries.emplace("model/" + k, t);
  for (const auto& [k, t] : opt.m) entries.emplace("opt/m/" + k, t);
  for (const auto& [k, t] : opt.v) entries.emplace("opt/v/" + k, t);
  write_archive(path, entries);

  nlohmann::json j{{"version", meta.version},
                   {"epoch", meta.epoch},
                   {"step", meta.step},
                   {"seed", meta.seed},
                   {"config_hash", meta.config_hash},
                   {"config", nlohmann::json::parse(meta.config_json)}};
  std::ofstream out(path + ".json");
  if (!out) throw std::runtime_error("cannot write checkpoint metadata: " + path + ".json");
  out << j.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
  Checkpoint ck;
  std::ifstream in(path + ".json");
  if (!in) throw std::runtime_error("missing checkpoint metadata: " + path + ".json");
  nlohmann::json j;
  in >> j;
  ck.meta.version = j.at("version");
  ck.meta.epoch = j.at("epoch");
  ck.meta.step = j.at("step");
  ck.meta.seed = j.at("seed");
  ck.meta.config_hash = j.at("config_hash");
  ck.meta.config_json = j.at("config").dump();
  ck.bundle.config = model_config_from_json(j.at("config"));
  ck.opt.step = ck.meta.step;

  for (auto& [name, t] : read_archive(path)) {
    if (name.rfind("model/", 0) == 0)
      ck.bundle.params.emplace(name.substr(6), std::move(t));
    else if (name.rfind("opt/m/", 0) == 0)
      ck.opt.m.emplace(name.substr(6), std::move(t));
    else if (name.rfind("opt/v/", 0) == 0)
      ck.opt.v.emplace(name.substr(6), std::move(t));
    else
      throw ArchiveError("unexpected checkpoint entry: " + name);
  }
  return ck;
}

uint64_t train_config_hash(const TrainConfig& tc, const ModelConfig& mc,
                           const std::string& dataset_id, const Teacher& teacher) {
  std::ostringstream s;
  s << tc.epochs << '|' << tc.batch_size << '|' << tc.resolved_warmup_epochs() << '|'
    << tc.resolved_lr_peak() << '|' << tc.lr_min << '|' << tc.weight_decay << '|' << tc.beta1
    << '|' << tc.beta2 << '|' << tc.adam_eps << '|' << tc.flags.delta_v << tc.flags.delta_m << '|'
    << to_string(tc.loss) << '|' << to_string(tc.sampler) << '|' << tc.gamma << '|' << tc.seed
    << '|' << tc.aug.enabled << ':' << tc.aug.scale_min << ':' << tc.aug.scale_max << ':'
    << tc.aug.ratio_min << ':' << tc.aug.ratio_max << ':' << tc.aug.flip_prob << '|'
    << model_config_json(mc).dump() << '|' << dataset_id << '|'
    << teacher.encoder.layers << ':' << teacher.encoder.dim << ':' << teacher.encoder.heads << ':'
    << teacher.patch << ':' << teacher.target_dim() << ':' << teacher.normalize_targets;
  return detail::fnv1a(s.str());
}

// ---------------------------------------------------------------------------
// pretrain loop
// ---------------------------------------------------------------------------

namespace {

struct SampleResult {
  float loss = 0.0f;
  std::vector<std::pair<std::string, Tensor>> grads;  // tape order (sorted by name)
  Tensor computed_target;                             // filled on cache miss
  bool target_computed = false;
};

std::string csv_num(double v) {
  std::ostringstream s;
  s.precision(10);
  s << v;
  return s.str();
}

}  // namespace

PretrainResult pretrain(const TrainConfig& tc, const ModelConfig& mc, const Dataset& data,
                        const Teacher& teacher, const std::string& out_dir,
                        const std::string& resume_path, TargetCache* cache) {
  tc.validate();
  mc.validate();
  if (mc.head.out_dim != teacher.target_dim())
    throw std::invalid_argument("head width does not match teacher feature width");
  if (mc.patch != teacher.patch)
    throw std::invalid_argument("teacher and student patch sizes disagree");

  std::filesystem::create_directories(out_dir);
  const uint64_t cfg_hash = train_config_hash(tc, mc, data.id(), teacher);

  ModelBundle bundle;
  OptimState opt;
  int start_epoch = 0;
  int64_t global_step = 0;
  if (!resume_path.empty()) {
    Checkpoint ck = load_checkpoint(resume_path);
    if (ck.meta.config_hash != cfg_hash)
      throw std::runtime_error("checkpoint was produced under a different configuration");
    bundle = std::move(ck.bundle);
    opt = std::move(ck.opt);
    start_epoch = ck.meta.epoch;
    global_step = ck.meta.step;
  } else {
    bundle = init_model(mc, tc.seed);
  }

  const Tensor probe_img = data.image(0);
  const PatchGrid grid = grid_for(static_cast<int>(probe_img.shape[1]),
                                  static_cast<int>(probe_img.shape[2]), mc.patch);
  const int mask_count = target_mask_count(grid.n(), tc.gamma);
  if (tc.flags.delta_m == 1 && mask_count == 0)
    throw std::invalid_argument("masked supervision requested but gamma yields zero masked patches");

  const int n = data.size();
  const int steps_per_epoch = (n + tc.batch_size - 1) / tc.batch_size;
  const int64_t total_steps = static_cast<int64_t>(steps_per_epoch) * tc.epochs;
  const auto warmup_steps =
      static_cast<int64_t>(std::lround(tc.resolved_warmup_epochs() * steps_per_epoch));
  const double lr_peak = tc.resolved_lr_peak();
  const OptimConfig oc{tc.beta1, tc.beta2, tc.adam_eps, tc.weight_decay};

  const std::string metrics_path = out_dir + "/metrics.csv";
  const bool fresh_metrics = !std::filesystem::exists(metrics_path);
  std::ofstream metrics(metrics_path, std::ios::app);
  if (!metrics) throw std::runtime_error("cannot open metrics file: " + metrics_path);
  if (fresh_metrics) metrics << "epoch,step,loss,lr,gamma,delta_v,delta_m,seed\n";

  const std::string epochs_path = out_dir + "/epochs.csv";
  const bool fresh_epochs = !std::filesystem::exists(epochs_path);
  std::ofstream epochs_csv(epochs_path, std::ios::app);
  if (!epochs_csv) throw std::runtime_error("cannot open epoch log: " + epochs_path);
  if (fresh_epochs) epochs_csv << "epoch,mean_loss\n";

  CheckpointMeta meta;
  meta.seed = tc.seed;
  meta.config_hash = cfg_hash;
  meta.config_json = model_config_json(mc).dump();

  // evaluates one sample end to end; used by both the sequential and the
  // threaded path
  auto run_sample = [&](int sample_id, int epoch, float inv_batch,
                        const Tensor* cached_target) -> SampleResult {
    SampleResult r;
    RngStream aug_rng(tc.seed, "aug", static_cast<uint64_t>(epoch), static_cast<uint64_t>(sample_id));
    const Tensor img = augment(data.image(sample_id), tc.aug, aug_rng);

    Tensor target;
    if (cached_target != nullptr) {
      target = *cached_target;
    } else {
      target = teacher_targets(teacher, img);
      r.computed_target = target;
      r.target_computed = true;
    }

    RngStream mask_rng(tc.seed, "mask", static_cast<uint64_t>(epoch), static_cast<uint64_t>(sample_id));
    const MaskSpec mask = sample_mask(tc.sampler, grid, mask_count, mask_rng);

    Tape<float> tape;
    TapeBinder<float> binder(tape, bundle.params, /*trainable=*/true);
    const PipelineVars pv =
        forward_pipeline(tape, binder, img, mask, mc, /*want_masked=*/tc.flags.delta_m == 1);
    const SplitTargets split = split_targets(target, mask);
    const Var loss_var = total_loss(tape, pv.y_v, &split.t_v, pv.y_m, &split.t_m, tc.flags, tc.loss);
    r.loss = tape.value(loss_var).at(0);
    if (!std::isfinite(r.loss)) return r;  // caller raises with context

    tape.backward(loss_var, inv_batch);
    r.grads.reserve(tape.params().size());
    for (const auto& [name, idx] : tape.params()) {
      (void)idx;
      r.grads.emplace_back(name, tape.param_grad(name));
    }
    return r;
  };

  PretrainResult result;
  for (int epoch = start_epoch; epoch < tc.epochs; ++epoch) {
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    RngStream shuffle_rng(tc.seed, "shuffle", static_cast<uint64_t>(epoch));
    for (int i = n - 1; i > 0; --i) {
      const auto j = static_cast<int>(shuffle_rng.bounded(static_cast<uint64_t>(i) + 1));
      std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }

    double epoch_loss_sum = 0.0;
    for (int step = 0; step < steps_per_epoch; ++step) {
      const int begin = step * tc.batch_size;
      const int batch = std::min(tc.batch_size, n - begin);
      const float inv_batch = 1.0f / static_cast<float>(batch);

      // cache lookups stay sequential; misses are computed inside the jobs
      std::vector<const Tensor*> cached(static_cast<size_t>(batch), nullptr);
      std::vector<std::string> keys(static_cast<size_t>(batch));
      if (cache != nullptr) {
        for (int s = 0; s < batch; ++s) {
          const int id = order[static_cast<size_t>(begin + s)];
          const uint64_t aug_key =
              tc.aug.enabled
                  ? RngStream(tc.seed, "aug-key", static_cast<uint64_t>(epoch), static_cast<uint64_t>(id))
                        .next_u64()
                  : 0;
          keys[static_cast<size_t>(s)] = TargetCache::key(data.id(), id, aug_key);
          cached[static_cast<size_t>(s)] = cache->find(keys[static_cast<size_t>(s)]);
        }
      }

      std::vector<SampleResult> results(static_cast<size_t>(batch));
      if (tc.threads <= 1) {
        for (int s = 0; s < batch; ++s)
          results[static_cast<size_t>(s)] =
              run_sample(order[static_cast<size_t>(begin + s)], epoch, inv_batch,
                         cached[static_cast<size_t>(s)]);
      } else {
        std::atomic<int> next{0};
        auto worker = [&]() {
          for (int s = next.fetch_add(1); s < batch; s = next.fetch_add(1))
            results[static_cast<size_t>(s)] =
                run_sample(order[static_cast<size_t>(begin + s)], epoch, inv_batch,
                           cached[static_cast<size_t>(s)]);
        };
        std::vector<std::thread> pool;
        const int nthreads = std::min(tc.threads, batch);
        pool.reserve(static_cast<size_t>(nthreads));
        for (int w = 0; w < nthreads; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
      }

      // merge in batch-index order so threaded and sequential runs agree bit
      // for bit
      float batch_loss = 0.0f;
      ParamMap<float> grad_acc;
      for (int s = 0; s < batch; ++s) {
        SampleResult& r = results[static_cast<size_t>(s)];
        const int id = order[static_cast<size_t>(begin + s)];
        if (!std::isfinite(r.loss)) {
          std::ostringstream msg;
          msg << "non-finite loss at epoch " << epoch << " step " << step << " sample " << id
              << " (seed " << tc.seed << ", aug " << tc.aug.enabled << ")";
          throw std::runtime_error(msg.str());
        }
        batch_loss += r.loss * inv_batch;
        epoch_loss_sum += r.loss;
        for (auto& [name, g] : r.grads) {
          auto it = grad_acc.find(name);
          if (it == grad_acc.end())
            grad_acc.emplace(name, std::move(g));
          else
            for (size_t k = 0; k < g.data.size(); ++k) it->second.data[k] += g.data[k];
        }
        if (cache != nullptr && r.target_computed)
          cache->put(keys[static_cast<size_t>(s)], std::move(r.computed_target));
      }

      const double lr = lr_at(global_step, total_steps, warmup_steps, lr_peak, tc.lr_min);
      adamw_step(bundle.params, grad_acc, opt, oc, lr);
      metrics << epoch << ',' << global_step << ',' << csv_num(batch_loss) << ',' << csv_num(lr)
              << ',' << csv_num(tc.gamma) << ',' << tc.flags.delta_v << ',' << tc.flags.delta_m
              << ',' << tc.seed << '\n';
      ++global_step;
    }
    result.epoch_mean_loss.push_back(epoch_loss_sum / n);
    epochs_csv << epoch << ',' << csv_num(epoch_loss_sum / n) << '\n';
    epochs_csv.flush();

    meta.epoch = epoch + 1;
    meta.step = global_step;
    if (tc.checkpoint_every > 0 && (epoch + 1) % tc.checkpoint_every == 0 && epoch + 1 < tc.epochs)
      save_checkpoint(out_dir + "/checkpoint_epoch" + std::to_string(epoch + 1) + ".bin", bundle,
                      opt, meta);
    metrics.flush();
  }

  meta.epoch = tc.epochs;
  meta.step = global_step;
  result.final_checkpoint = out_dir + "/checkpoint_final.bin";
  save_checkpoint(result.final_checkpoint, bundle, opt, meta);
  if (cache != nullptr) cache->flush();

  result.bundle = std::move(bundle);
  result.opt = std::move(opt);
  result.metrics_path = metrics_path;
  return result;
}

}  // namespace mimlab
