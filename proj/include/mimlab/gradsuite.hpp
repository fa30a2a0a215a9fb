#pragma once

// The gradient verification suite: finite differences against the tape for
// every primitive, then probes through the full micro pipeline for each loss
// kind and each supervision setting. Shared by the gradcheck CLI subcommand
// and the acceptance tests.

#include "mimlab/gradcheck.hpp"
#include "mimlab/loss.hpp"
#include "mimlab/model.hpp"
#include "mimlab/teacher.hpp"

namespace mimlab {

struct GradCheckEntry {
  std::string name;
  double max_rel_err;
};

namespace gradsuite_detail {

inline Tensor64 random_tensor(std::vector<int64_t> shape, RngStream& rng, double scale = 1.0) {
  Tensor64 t(std::move(shape));
  for (auto& v : t.data) v = rng.normal() * scale;
  return t;
}

inline GradCheckEntry check_primitive(
    const std::string& name, const ParamMap<double>& params,
    const std::function<Var(Tape<double>&, const ParamMap<double>&)>& build) {
  return {name, finite_diff_check(build, params, 1e-3)};
}

}  // namespace gradsuite_detail

// Per-primitive finite-difference checks on small random instances.
inline std::vector<GradCheckEntry> primitive_gradient_checks(uint64_t seed = 123) {
  using gradsuite_detail::check_primitive;
  using gradsuite_detail::random_tensor;
  RngStream rng(seed, "gradsuite");
  std::vector<GradCheckEntry> out;

  {
    ParamMap<double> p;
    p.emplace("a", random_tensor({3, 4}, rng));
    p.emplace("b", random_tensor({4, 5}, rng));
    out.push_back(check_primitive("matmul", p, [](Tape<double>& t, const ParamMap<double>& p) {
      return t.sum_all(t.gelu(t.matmul(t.param("a", p.at("a")), t.param("b", p.at("b")))));
    }));
  }
  {
    ParamMap<double> p;
    p.emplace("x", random_tensor({3, 6}, rng));
    out.push_back(check_primitive("softmax", p, [](Tape<double>& t, const ParamMap<double>& p) {
      Var s = t.softmax_rows(t.param("x", p.at("x")));
      return t.sum_all(t.mul(s, s));  // nonlinear readout catches wrong Jacobians
    }));
  }
  {
    ParamMap<double> p;
    p.emplace("x", random_tensor({4, 5}, rng));
    p.emplace("g", random_tensor({5}, rng, 0.5));
    p.emplace("b", random_tensor({5}, rng, 0.5));
    out.push_back(check_primitive("layernorm", p, [](Tape<double>& t, const ParamMap<double>& p) {
      Var y = t.layernorm_rows(t.param("x", p.at("x")), t.param("g", p.at("g")), t.param("b", p.at("b")));
      return t.sum_all(t.mul(y, y));
    }));
  }
  {
    ParamMap<double> p;
    p.emplace("x", random_tensor({3, 7}, rng));
    out.push_back(check_primitive("gelu", p, [](Tape<double>& t, const ParamMap<double>& p) {
      return t.sum_all(t.gelu(t.param("x", p.at("x"))));
    }));
  }
  {
    ParamMap<double> p;
    p.emplace("a", random_tensor({3, 4}, rng));
    p.emplace("b", random_tensor({3, 4}, rng));
    out.push_back(check_primitive("add_sub_mul", p, [](Tape<double>& t, const ParamMap<double>& p) {
      Var a = t.param("a", p.at("a")), b = t.param("b", p.at("b"));
      return t.sum_all(t.mul(t.add(a, b), t.sub(a, b)));
    }));
  }
  {
    ParamMap<double> p;
    p.emplace("x", random_tensor({4, 6}, rng));
    p.emplace("v", random_tensor({6}, rng));
    out.push_back(check_primitive("add_rowvec_broadcast", p, [](Tape<double>& t, const ParamMap<double>& p) {
      Var v = t.param("v", p.at("v"));
      Var y = t.add_rowvec(t.param("x", p.at("x")), v);
      Var r = t.broadcast_row(v, 4);
      return t.sum_all(t.gelu(t.add(y, r)));
    }));
  }
  {
    ParamMap<double> p;
    p.emplace("x", random_tensor({4, 8}, rng));
    out.push_back(check_primitive("slice_concat_transpose", p, [](Tape<double>& t, const ParamMap<double>& p) {
      Var x = t.param("x", p.at("x"));
      Var left = t.slice_cols(x, 0, 4), right = t.slice_cols(x, 4, 4);
      Var swapped = t.concat_cols({right, left});
      return t.sum_all(t.gelu(t.matmul(swapped, t.transpose(x))));
    }));
  }
  {
    ParamMap<double> p;
    p.emplace("x", random_tensor({5, 3}, rng));
    out.push_back(check_primitive("gather_mean", p, [](Tape<double>& t, const ParamMap<double>& p) {
      Var g = t.gather_rows(t.param("x", p.at("x")), {4, 0, 2});
      return t.sum_all(t.gelu(t.mean_rows(g)));
    }));
  }
  {
    ParamMap<double> p;
    p.emplace("z", random_tensor({3, 5}, rng));
    out.push_back(check_primitive("cross_entropy", p, [](Tape<double>& t, const ParamMap<double>& p) {
      return t.cross_entropy_rows(t.param("z", p.at("z")), {1, 4, 0});
    }));
  }
  for (LossKind kind : {LossKind::CosineDistance, LossKind::MSE, LossKind::SmoothL1}) {
    ParamMap<double> p;
    p.emplace("y", random_tensor({4, 6}, rng));
    Tensor64 target = random_tensor({4, 6}, rng);
    out.push_back(check_primitive(std::string("patch_loss_") + to_string(kind), p,
                                  [target, kind](Tape<double>& t, const ParamMap<double>& p) {
                                    return patch_loss_sum(t, t.param("y", p.at("y")), target, kind);
                                  }));
  }
  return out;
}

// End-to-end micro pipeline checks: 8x8 image, patch 4 (N=4, |m|=2), every
// loss kind under every supervision setting, probed in random directions.
inline std::vector<GradCheckEntry> pipeline_gradient_checks(uint64_t seed = 321, int probes = 20) {
  RngStream rng(seed, "gradsuite-pipeline");

  ModelConfig mc;
  mc.encoder = encoder_preset(Preset::Micro);
  mc.decoder = {1, mc.encoder.heads};
  mc.head = {mc.encoder.dim, 48};
  mc.patch = 4;
  const ModelBundle bundle = init_model(mc, seed);
  const ParamMap<double> params = cast_params<double>(bundle.params);

  Tensor64 image({3, 8, 8});
  for (auto& v : image.data) v = rng.normal();

  const PatchGrid grid = grid_for(8, 8, 4);
  MaskSpec mask;
  mask.grid = grid;
  mask.visible = {0, 3};
  mask.masked = {1, 2};
  mask.gamma = 0.5;

  Tensor64 target({static_cast<int64_t>(grid.n()), static_cast<int64_t>(mc.head.out_dim)});
  for (auto& v : target.data) v = rng.normal();

  std::vector<GradCheckEntry> out;
  const SupervisionFlags settings[] = {{1, 0}, {0, 1}, {1, 1}};
  for (LossKind kind : {LossKind::CosineDistance, LossKind::MSE, LossKind::SmoothL1}) {
    for (SupervisionFlags flags : settings) {
      auto build = [&](Tape<double>& t, const ParamMap<double>& p) {
        TapeBinder<double> binder(t, p, /*trainable=*/true);
        const PipelineVars pv =
            forward_pipeline(t, binder, image, mask, mc, /*want_masked=*/flags.delta_m == 1);
        const Tensor64 t_v = gather_rows(target, mask.visible);
        const Tensor64 t_m = gather_rows(target, mask.masked);
        return total_loss(t, pv.y_v, &t_v, pv.y_m, &t_m, flags, kind);
      };
      RngStream probe_rng(seed, "gradsuite-probes",
                          static_cast<uint64_t>(kind), static_cast<uint64_t>(flags.delta_v * 2 + flags.delta_m));
      std::string name = std::string("pipeline_") + to_string(kind) + "_dv" +
                         std::to_string(flags.delta_v) + "_dm" + std::to_string(flags.delta_m);
      out.push_back({name, finite_diff_check_probes(build, params, 1e-3, probes, probe_rng)});
    }
  }
  return out;
}

inline std::vector<GradCheckEntry> gradient_suite() {
  std::vector<GradCheckEntry> all = primitive_gradient_checks();
  for (auto& e : pipeline_gradient_checks()) all.push_back(e);
  return all;
}

}  // namespace mimlab
