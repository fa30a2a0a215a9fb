// mimlab CLI: pretrain / probe / finetune / sweep / export-targets /
// mask-dump / gradcheck.

#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "mimlab/archive.hpp"
#include "mimlab/config.hpp"
#include "mimlab/gradsuite.hpp"

namespace {

using namespace mimlab;

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "out";
  int64_t seed = -1;  // overrides config when >= 0
};

RunConfig load_run_config(const CommonArgs& args) {
  RunConfig cfg = args.config_path.empty() ? RunConfig{} : load_config(args.config_path);
  if (args.seed >= 0) cfg.train.seed = static_cast<uint64_t>(args.seed);
  cfg.train.gamma = resolve_gamma(cfg);
  return cfg;
}

// "pseudo:<preset>:<seed>" or a WeightArchive path
Teacher teacher_from_arg(const std::string& arg, int patch) {
  if (arg.rfind("pseudo:", 0) == 0) {
    const auto rest = arg.substr(7);
    const auto colon = rest.find(':');
    TeacherSpec spec;
    spec.kind = "pseudo_vit";
    spec.preset = colon == std::string::npos ? rest : rest.substr(0, colon);
    if (colon != std::string::npos) spec.seed = std::stoull(rest.substr(colon + 1));
    return make_teacher(spec, patch);
  }
  return load_teacher(arg);
}

// "synth:<seed>:<count>:<H>x<W>" or "cifar:<path>"
std::unique_ptr<Dataset> dataset_from_arg(const std::string& arg) {
  DataConfig dc;
  if (arg.rfind("synth:", 0) == 0) {
    dc.kind = "synthetic";
    std::string rest = arg.substr(6);
    const auto c1 = rest.find(':'), c2 = rest.find(':', c1 + 1);
    dc.seed = std::stoull(rest.substr(0, c1));
    dc.count = std::stoi(rest.substr(c1 + 1, c2 - c1 - 1));
    const std::string dims = rest.substr(c2 + 1);
    const auto x = dims.find('x');
    dc.height = std::stoi(dims.substr(0, x));
    dc.width = std::stoi(dims.substr(x + 1));
    return make_dataset(dc);
  }
  if (arg.rfind("cifar:", 0) == 0) {
    dc.kind = "cifar";
    dc.path = arg.substr(6);
    dc.count = -1;
    return make_dataset(dc);
  }
  throw std::invalid_argument("dataset spec must be synth:<seed>:<count>:<H>x<W> or cifar:<path>");
}

int cmd_pretrain(const CommonArgs& args, const std::string& resume, const std::string& cache_path) {
  RunConfig cfg = load_run_config(args);
  const Teacher teacher = make_teacher(cfg.teacher, cfg.model.patch);
  const ModelConfig mc = resolve_model(cfg.model, teacher);
  const auto data = make_dataset(cfg.data);
  std::unique_ptr<TargetCache> cache;
  if (!cache_path.empty()) cache = std::make_unique<TargetCache>(cache_path);
  const PretrainResult r =
      pretrain(cfg.train, mc, *data, teacher, args.out_dir, resume, cache.get());
  std::cout << "pretrain done: " << r.epoch_mean_loss.size() << " epochs, final mean loss "
            << r.epoch_mean_loss.back() << "\n"
            << "checkpoint: " << r.final_checkpoint << "\nmetrics: " << r.metrics_path << "\n";
  return 0;
}

int cmd_probe(const CommonArgs& args, const std::string& checkpoint) {
  RunConfig cfg = load_run_config(args);
  const Checkpoint ck = load_checkpoint(checkpoint);
  const auto data = make_dataset(cfg.data);
  const double acc = linear_probe(ck.bundle, *data, cfg.probe, cfg.train.seed);
  std::cout << "probe top-1: " << acc << "\n";
  return 0;
}

int cmd_finetune(const CommonArgs& args, const std::string& checkpoint) {
  RunConfig cfg = load_run_config(args);
  const Checkpoint ck = load_checkpoint(checkpoint);
  const auto data = make_dataset(cfg.data);
  const double acc = finetune(ck.bundle, *data, cfg.finetune, cfg.train.seed);
  std::cout << "finetune top-1: " << acc << "\n";
  return 0;
}

int cmd_sweep(const CommonArgs& args, int parallel) {
  RunConfig cfg = load_run_config(args);
  if (cfg.sweep.cells() == 0) throw std::invalid_argument("config has no sweep section or an empty axis");
  const Teacher teacher = make_teacher(cfg.teacher, cfg.model.patch);
  const auto data = make_dataset(cfg.data);
  SweepContext ctx;
  ctx.data = data.get();
  ctx.teacher = &teacher;
  ctx.base = cfg.train;
  ctx.out_dir = args.out_dir;
  ctx.parallel = parallel;
  std::filesystem::create_directories(args.out_dir);
  const std::string csv = args.out_dir + "/sweep.csv";
  const int rows = run_sweep(cfg.sweep, ctx, csv);
  std::cout << "sweep appended " << rows << " rows to " << csv << "\n";
  return 0;
}

int cmd_export_targets(const std::string& dataset_arg, const std::string& teacher_arg,
                       uint64_t seed, const std::string& out, int patch) {
  const auto data = dataset_from_arg(dataset_arg);
  const Teacher teacher = teacher_from_arg(teacher_arg, patch);
  const int written = export_targets(*data, teacher, out, seed);
  std::cout << "exported " << written << " target sequences to " << out << "\n";
  return 0;
}

int cmd_mask_dump(const std::string& grid_arg, double gamma, const std::string& sampler,
                  uint64_t seed) {
  const auto x = grid_arg.find('x');
  if (x == std::string::npos) throw std::invalid_argument("grid must look like 14x14");
  PatchGrid grid;
  grid.h = std::stoi(grid_arg.substr(0, x));
  grid.w = std::stoi(grid_arg.substr(x + 1));
  grid.patch = 1;
  RngStream rng(seed, "mask-dump");
  const int count = target_mask_count(grid.n(), gamma);
  const MaskSpec spec = sample_mask(sampler_from_string(sampler), grid, count, rng);
  std::cout << mask_to_text(spec) << "masked " << spec.masked.size() << "/" << grid.n()
            << " (gamma " << spec.gamma << ")\n";
  return 0;
}

int cmd_gradcheck() {
  int failures = 0;
  for (const GradCheckEntry& e : gradient_suite()) {
    const bool ok = e.max_rel_err < 1e-3;
    std::cout << "gradcheck " << e.name << ": max_rel_err=" << e.max_rel_err
              << (ok ? " PASS" : " FAIL") << "\n";
    failures += ok ? 0 : 1;
  }
  std::cout << (failures == 0 ? "gradcheck: all checks passed" : "gradcheck: FAILURES") << "\n";
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"masked-image-modeling pre-training lab"};
  app.require_subcommand(1);

  CommonArgs common;
  app.add_option("--config", common.config_path, "JSON run configuration")->envname("MIMLAB_CONFIG");
  app.add_option("--seed", common.seed, "override the training seed");
  app.add_option("--out-dir", common.out_dir, "output directory");

  auto* pre = app.add_subcommand("pretrain", "run masked pre-training");
  std::string resume, cache_path;
  pre->add_option("--resume", resume, "checkpoint to resume from");
  pre->add_option("--target-cache", cache_path, "teacher-target cache archive");

  auto* probe = app.add_subcommand("probe", "linear-probe a checkpoint");
  std::string ck_path;
  probe->add_option("--checkpoint", ck_path, "checkpoint path")->required();

  auto* ft = app.add_subcommand("finetune", "fine-tune a checkpoint");
  ft->add_option("--checkpoint", ck_path, "checkpoint path")->required();

  auto* sweep = app.add_subcommand("sweep", "run an ablation sweep");
  int parallel = 1;
  sweep->add_option("--parallel", parallel, "independent cells to run concurrently");

  auto* exp = app.add_subcommand("export-targets", "cache teacher targets to an archive");
  std::string dataset_arg, teacher_arg, out_path;
  uint64_t exp_seed = 0;
  int exp_patch = 4;
  exp->add_option("--dataset", dataset_arg, "synth:<seed>:<count>:<H>x<W> or cifar:<path>")->required();
  exp->add_option("--teacher", teacher_arg, "pseudo:<preset>:<seed> or archive path")->required();
  exp->add_option("--seed", exp_seed, "augmentation seed recorded in cache keys");
  exp->add_option("--out", out_path, "output archive")->required();
  exp->add_option("--patch", exp_patch, "patch size for a pseudo teacher");

  auto* dump = app.add_subcommand("mask-dump", "print a sampled mask as a text grid");
  std::string grid_arg = "14x14", sampler_arg = "blockwise";
  double gamma = 0.5;
  uint64_t dump_seed = 0;
  dump->add_option("--grid", grid_arg, "patch grid, e.g. 14x14");
  dump->add_option("--gamma", gamma, "mask ratio");
  dump->add_option("--sampler", sampler_arg, "random | blockwise");
  dump->add_option("--seed", dump_seed, "rng seed");

  app.add_subcommand("gradcheck", "run the finite-difference gradient suite");

  CLI11_PARSE(app, argc, argv);

  try {
    if (pre->parsed()) return cmd_pretrain(common, resume, cache_path);
    if (probe->parsed()) return cmd_probe(common, ck_path);
    if (ft->parsed()) return cmd_finetune(common, ck_path);
    if (sweep->parsed()) return cmd_sweep(common, parallel);
    if (exp->parsed()) return cmd_export_targets(dataset_arg, teacher_arg, exp_seed, out_path, exp_patch);
    if (dump->parsed()) return cmd_mask_dump(grid_arg, gamma, sampler_arg, dump_seed);
    return cmd_gradcheck();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
