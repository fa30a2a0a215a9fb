#include "mimlab/harness.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

namespace mimlab {

Tensor extract_features(const ModelBundle& bundle, const Tensor& image) {
  const Tensor tokens =
      encode_all_frozen(bundle.params, bundle.config.encoder, bundle.config.patch, image);
  Tensor pooled({tokens.cols()});
  for (int64_t i = 0; i < tokens.rows(); ++i)
    for (int64_t j = 0; j < tokens.cols(); ++j) pooled.at(j) += tokens.at(i, j);
  for (int64_t j = 0; j < tokens.cols(); ++j) pooled.at(j) /= static_cast<float>(tokens.rows());
  return pooled;
}

EvalSplit split_by_index(int n, double train_frac) {
  EvalSplit s;
  const int cut = static_cast<int>(n * train_frac);
  for (int i = 0; i < n; ++i) (i < cut ? s.train_ids : s.test_ids).push_back(i);
  if (s.train_ids.empty() || s.test_ids.empty())
    throw std::invalid_argument("split leaves an empty train or test side");
  return s;
}

namespace {

Tensor feature_matrix(const ModelBundle& bundle, const Dataset& data, const std::vector<int>& ids) {
  const int64_t d = bundle.config.encoder.dim;
  Tensor out({static_cast<int64_t>(ids.size()), d});
  for (size_t i = 0; i < ids.size(); ++i) {
    const Tensor f = extract_features(bundle, data.image(ids[i]));
    for (int64_t j = 0; j < d; ++j) out.at(static_cast<int64_t>(i), j) = f.at(j);
  }
  return out;
}

std::vector<int> labels_of(const Dataset& data, const std::vector<int>& ids) {
  std::vector<int> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(data.label(id));
  return out;
}

double top1(const Tensor& logits, const std::vector<int>& labels) {
  int correct = 0;
  for (int64_t i = 0; i < logits.rows(); ++i) {
    int64_t best = 0;
    for (int64_t j = 1; j < logits.cols(); ++j)
      if (logits.at(i, j) > logits.at(i, best)) best = j;
    if (static_cast<int>(best) == labels[static_cast<size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

}  // namespace

double linear_probe(const ModelBundle& bundle, const Dataset& data, const ProbeConfig& cfg,
                    uint64_t seed) {
  const EvalSplit split = split_by_index(data.size(), cfg.train_frac);
  const Tensor train_x = feature_matrix(bundle, data, split.train_ids);
  const Tensor test_x = feature_matrix(bundle, data, split.test_ids);
  const std::vector<int> train_y = labels_of(data, split.train_ids);
  const std::vector<int> test_y = labels_of(data, split.test_ids);
  const int classes = data.classes();
  const int64_t d = train_x.cols();

  RngStream rng(seed, "probe-init");
  ParamMap<float> clf;
  clf.emplace("cls.w", detail::trunc_normal_tensor({d, classes}, rng));
  clf.emplace("cls.b", Tensor({classes}));

  OptimState opt;
  const OptimConfig oc{0.9, 0.999, 1e-8, 0.0};
  const float inv_n = 1.0f / static_cast<float>(train_x.rows());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Tape<float> tape;
    Var x = tape.constant(train_x);
    Var logits = tape.add_rowvec(tape.matmul(x, tape.param("cls.w", clf.at("cls.w"))),
                                 tape.param("cls.b", clf.at("cls.b")));
    Var loss = tape.cross_entropy_rows(logits, train_y);
    tape.backward(loss, inv_n);
    ParamMap<float> grads;
    grads.emplace("cls.w", tape.param_grad("cls.w"));
    grads.emplace("cls.b", tape.param_grad("cls.b"));
    adamw_step(clf, grads, opt, oc, cfg.lr);
  }

  const Tensor logits = add_rowvec(matmul(test_x, clf.at("cls.w")), clf.at("cls.b"));
  return top1(logits, test_y);
}

double finetune(const ModelBundle& bundle, const Dataset& data, const FinetuneConfig& cfg,
                uint64_t seed) {
  const EvalSplit split = split_by_index(data.size(), cfg.train_frac);
  const int classes = data.classes();
  const int64_t d = bundle.config.encoder.dim;

  ModelBundle work = bundle;  // mutates a copy; the input stays frozen
  RngStream rng(seed, "finetune-init");
  work.params.emplace("cls.w", detail::trunc_normal_tensor({d, classes}, rng));
  work.params.emplace("cls.b", Tensor({classes}));

  const Tensor probe_img = data.image(0);
  const PatchGrid grid = grid_for(static_cast<int>(probe_img.shape[1]),
                                  static_cast<int>(probe_img.shape[2]), work.config.patch);
  const Tensor pos = sincos_pos_embed<float>(grid.h, grid.w, work.config.encoder.dim);

  auto logits_for = [&](Tape<float>& tape, TapeBinder<float>& binder, const Tensor& img) {
    Var patches = tape.constant(patchify(img, work.config.patch));
    Var x = embed_patches(tape, binder, patches, pos);
    Var z = encode(tape, binder, x, work.config.encoder);
    Var pooled = tape.mean_rows(z);
    return tape.add_rowvec(tape.matmul(pooled, binder["cls.w"]), binder["cls.b"]);
  };

  OptimState opt;
  const OptimConfig oc{0.9, 0.999, 1e-8, cfg.weight_decay};
  const int n_train = static_cast<int>(split.train_ids.size());
  const int steps_per_epoch = (n_train + cfg.batch_size - 1) / cfg.batch_size;
  const int64_t total_steps = static_cast<int64_t>(steps_per_epoch) * cfg.epochs;
  int64_t global_step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int> order = split.train_ids;
    RngStream shuffle_rng(seed, "finetune-shuffle", static_cast<uint64_t>(epoch));
    for (int i = n_train - 1; i > 0; --i) {
      const auto j = static_cast<int>(shuffle_rng.bounded(static_cast<uint64_t>(i) + 1));
      std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }
    for (int step = 0; step < steps_per_epoch; ++step) {
      const int begin = step * cfg.batch_size;
      const int batch = std::min(cfg.batch_size, n_train - begin);
      const float inv_batch = 1.0f / static_cast<float>(batch);
      ParamMap<float> grad_acc;
      for (int s = 0; s < batch; ++s) {
        const int id = order[static_cast<size_t>(begin + s)];
        Tape<float> tape;
        TapeBinder<float> binder(tape, work.params, /*trainable=*/true);
        Var logits = logits_for(tape, binder, data.image(id));
        Var loss = tape.cross_entropy_rows(logits, {data.label(id)});
        tape.backward(loss, inv_batch);
        for (const auto& [name, idx] : tape.params()) {
          (void)idx;
          Tensor g = tape.param_grad(name);
          auto it = grad_acc.find(name);
          if (it == grad_acc.end())
            grad_acc.emplace(name, std::move(g));
          else
            for (size_t k = 0; k < g.data.size(); ++k) it->second.data[k] += g.data[k];
        }
      }
      const double lr = lr_at(global_step, total_steps, 0, cfg.lr, cfg.lr * 1e-2);
      adamw_step(work.params, grad_acc, opt, oc, lr);
      ++global_step;
    }
  }

  // held-out evaluation
  int correct = 0;
  for (int id : split.test_ids) {
    Tape<float> tape;
    TapeBinder<float> binder(tape, work.params, /*trainable=*/false);
    const Tensor logits = tape.value(logits_for(tape, binder, data.image(id)));
    int64_t best = 0;
    for (int64_t j = 1; j < logits.cols(); ++j)
      if (logits.at(0, j) > logits.at(0, best)) best = j;
    if (static_cast<int>(best) == data.label(id)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(split.test_ids.size());
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

namespace {

struct SweepCell {
  Preset model;
  double gamma;
  SupervisionFlags flags;
  LossKind loss;
  SamplerKind sampler;
  uint64_t seed;
};

std::string cell_key(const SweepCell& c) {
  std::ostringstream s;
  s << to_string(c.model) << ',' << c.gamma << ',' << c.flags.delta_v << ',' << c.flags.delta_m
    << ',' << to_string(c.loss) << ',' << to_string(c.sampler) << ',' << c.seed;
  return s.str();
}

std::set<std::string> existing_keys(const std::string& csv_path) {
  std::set<std::string> keys;
  std::ifstream in(csv_path);
  if (!in) return keys;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    size_t commas = 0, pos = 0;
    for (size_t i = 0; i < line.size() && commas < 7; ++i)
      if (line[i] == ',' && ++commas == 7) pos = i;
    if (commas == 7) keys.insert(line.substr(0, pos));
  }
  return keys;
}

}  // namespace

int run_sweep(const SweepPlan& plan, const SweepContext& ctx, const std::string& csv_path) {
  if (plan.cells() == 0) throw std::invalid_argument("sweep plan has an empty axis");
  if (ctx.data == nullptr || ctx.teacher == nullptr)
    throw std::invalid_argument("sweep context needs a dataset and a teacher");

  std::vector<SweepCell> cells;
  for (Preset m : plan.models)
    for (double g : plan.gammas)
      for (SupervisionFlags f : plan.flags)
        for (LossKind l : plan.losses)
          for (SamplerKind s : plan.samplers)
            for (uint64_t seed : plan.seeds) cells.push_back({m, g, f, l, s, seed});

  const std::set<std::string> done = existing_keys(csv_path);
  const bool fresh = !std::filesystem::exists(csv_path);
  std::ofstream csv(csv_path, std::ios::app);
  if (!csv) throw std::runtime_error("cannot open sweep csv: " + csv_path);
  if (fresh) csv << "model,gamma,delta_v,delta_m,loss_kind,sampler,seed,final_pretrain_loss,probe_acc\n";

  std::vector<int> todo;
  for (size_t i = 0; i < cells.size(); ++i)
    if (!done.count(cell_key(cells[i]))) todo.push_back(static_cast<int>(i));

  std::vector<std::string> row_tail(cells.size());
  auto run_cell = [&](int idx) {
    const SweepCell& c = cells[static_cast<size_t>(idx)];
    std::ostringstream tail;
    try {
      TrainConfig tc = ctx.base;
      tc.epochs = plan.epochs;
      tc.gamma = c.gamma;
      tc.flags = c.flags;
      tc.loss = c.loss;
      tc.sampler = c.sampler;
      tc.seed = c.seed;
      tc.checkpoint_every = 0;

      ModelConfig mc;
      mc.encoder = encoder_preset(c.model);
      mc.decoder = {1, mc.encoder.heads};
      mc.head = {mc.encoder.dim, ctx.teacher->target_dim()};
      mc.patch = ctx.teacher->patch;

      std::ostringstream dir;
      dir << ctx.out_dir << "/cell_" << idx;
      PretrainResult pr = pretrain(tc, mc, *ctx.data, *ctx.teacher, dir.str());
      const double acc = linear_probe(pr.bundle, *ctx.data, plan.probe, c.seed);
      tail.precision(10);
      tail << pr.epoch_mean_loss.back() << ',' << acc;
    } catch (const std::exception& e) {
      std::string what = e.what();
      for (char& ch : what)
        if (ch == ',' || ch == '\n') ch = ';';
      tail << "error:" << what << ",error:" << what;
    }
    row_tail[static_cast<size_t>(idx)] = tail.str();
  };

  if (ctx.parallel <= 1) {
    for (int idx : todo) run_cell(idx);
  } else {
    std::atomic<size_t> next{0};
    auto worker = [&]() {
      for (size_t k = next.fetch_add(1); k < todo.size(); k = next.fetch_add(1))
        run_cell(todo[k]);
    };
    std::vector<std::thread> pool;
    const int nthreads = std::min<size_t>(ctx.parallel, todo.size());
    for (int w = 0; w < nthreads; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  // rows are committed in plan order regardless of completion order
  int appended = 0;
  for (int idx : todo) {
    csv << cell_key(cells[static_cast<size_t>(idx)]) << ',' << row_tail[static_cast<size_t>(idx)]
        << '\n';
    ++appended;
  }
  csv.flush();
  return appended;
}

}  // namespace mimlab
