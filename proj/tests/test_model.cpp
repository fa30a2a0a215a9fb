#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>

#include "mimlab/gradsuite.hpp"
#include "mimlab/model.hpp"

using namespace mimlab;

namespace {

ModelConfig micro_config(int target_dim = 64, int patch = 4) {
  ModelConfig mc;
  mc.encoder = encoder_preset(Preset::Micro);
  mc.decoder = {1, mc.encoder.heads};
  mc.head = {mc.encoder.dim, target_dim};
  mc.patch = patch;
  return mc;
}

Tensor random_image(int h, int w, uint64_t seed) {
  RngStream rng(seed, "img");
  Tensor img({3, h, w});
  for (auto& v : img.data) v = static_cast<float>(rng.normal());
  return img;
}

MaskSpec fixed_mask(const PatchGrid& grid, std::vector<int> masked) {
  MaskSpec m;
  m.grid = grid;
  std::vector<char> is_masked(grid.n(), 0);
  for (int i : masked) is_masked[i] = 1;
  for (int i = 0; i < grid.n(); ++i)
    (is_masked[i] ? m.masked : m.visible).push_back(i);
  m.gamma = static_cast<double>(m.masked.size()) / grid.n();
  return m;
}

}  // namespace

TEST_CASE("encoder presets match the standard ViT sizes") {
  CHECK(encoder_preset(Preset::Tiny).layers == 12);
  CHECK(encoder_preset(Preset::Tiny).dim == 192);
  CHECK(encoder_preset(Preset::Tiny).heads == 12);
  CHECK(encoder_preset(Preset::Small).layers == 12);
  CHECK(encoder_preset(Preset::Small).dim == 384);
  CHECK(encoder_preset(Preset::Base).layers == 12);
  CHECK(encoder_preset(Preset::Base).dim == 768);
  CHECK(encoder_preset(Preset::Large).layers == 24);
  CHECK(encoder_preset(Preset::Large).dim == 1024);
  CHECK(encoder_preset(Preset::Micro).layers == 4);
  CHECK(encoder_preset(Preset::Micro).dim == 64);
  CHECK(encoder_preset(Preset::Micro).heads == 4);
}

TEST_CASE("micro parameter count matches the independent counting script") {
  // pinned from tools/count_params.py 4 64 4 4 4 64
  const ModelBundle b = init_model(micro_config(64, 4), 1);
  CHECK(param_count(b.params) == 257536);
}

TEST_CASE("initialization is deterministic and layernorms start at identity") {
  const ModelBundle a = init_model(micro_config(), 9);
  const ModelBundle b = init_model(micro_config(), 9);
  CHECK(a.params.size() == b.params.size());
  for (const auto& [name, t] : a.params) CHECK(bit_equal(t, b.params.at(name)));
  for (float v : a.params.at("enc.0.ln1.g").data) CHECK(v == 1.0f);
  for (float v : a.params.at("enc.0.ln1.b").data) CHECK(v == 0.0f);
  const ModelBundle c = init_model(micro_config(), 10);
  CHECK_FALSE(bit_equal(a.params.at("embed.w"), c.params.at("embed.w")));
}

TEST_CASE("a single visible token still encodes") {
  const ModelConfig mc = micro_config();
  const ModelBundle bundle = init_model(mc, 2);
  const ParamMap<float>& p = bundle.params;
  const Tensor img = random_image(8, 8, 3);
  const MaskSpec mask = fixed_mask(grid_for(8, 8, 4), {1, 2, 3});
  REQUIRE(mask.visible.size() == 1);

  auto run = [&]() {
    Tape<float> tape;
    TapeBinder<float> binder(tape, p, false);
    return tape.value(forward_pipeline(tape, binder, img, mask, mc, false).y_v);
  };
  const Tensor y = run();
  CHECK(y.rows() == 1);
  CHECK(y.cols() == mc.head.out_dim);
  assert_finite(y, "y_v");
  CHECK(bit_equal(y, run()));
}

TEST_CASE("encode is equivariant to token permutations") {
  const ModelConfig mc = micro_config();
  const ModelBundle bundle = init_model(mc, 4);
  RngStream rng(5, "tok");
  const int n = 6;
  Tensor tokens({n, mc.encoder.dim});
  for (auto& v : tokens.data) v = static_cast<float>(rng.normal());
  const std::vector<int> perm{3, 0, 5, 1, 4, 2};

  auto encode_tokens = [&](const Tensor& x) {
    Tape<float> tape;
    TapeBinder<float> binder(tape, bundle.params, false);
    return tape.value(encode(tape, binder, tape.constant(x), mc.encoder));
  };
  const Tensor base = encode_tokens(tokens);
  const Tensor permuted = encode_tokens(gather_rows(tokens, perm));
  const Tensor expected = gather_rows(base, perm);
  for (size_t i = 0; i < permuted.data.size(); ++i)
    CHECK(permuted.data[i] == doctest::Approx(expected.data[i]).epsilon(1e-4));
}

TEST_CASE("changing masked pixels cannot change Y_v") {
  const ModelConfig mc = micro_config();
  const ModelBundle bundle = init_model(mc, 6);
  const PatchGrid grid = grid_for(16, 16, 4);
  const MaskSpec mask = fixed_mask(grid, {0, 3, 7, 9, 12, 14});
  Tensor img = random_image(16, 16, 7);

  auto y_v = [&](const Tensor& im) {
    Tape<float> tape;
    TapeBinder<float> binder(tape, bundle.params, false);
    return tape.value(forward_pipeline(tape, binder, im, mask, mc, false).y_v);
  };
  const Tensor base = y_v(img);

  RngStream rng(8, "noise");
  Tensor corrupted = img;
  for (int idx : mask.masked) {
    const int pr = grid.row_of(idx), pc = grid.col_of(idx);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < grid.patch; ++y)
        for (int x = 0; x < grid.patch; ++x)
          corrupted.data[static_cast<size_t>((c * 16 + pr * grid.patch + y) * 16 + pc * grid.patch + x)] =
              static_cast<float>(rng.normal() * 100.0);
  }
  CHECK(bit_equal(y_v(corrupted), base));
  // sanity: visible pixels do matter (patch 1 is visible; its first pixel is
  // image column 4 of row 0)
  Tensor touched = img;
  touched.data[4] += 1.0f;
  CHECK_FALSE(bit_equal(y_v(touched), base));
}

TEST_CASE("a zeroed head projects everything to zero") {
  const ModelConfig mc = micro_config();
  ModelBundle bundle = init_model(mc, 10);
  for (auto& v : bundle.params.at("head.w").data) v = 0.0f;
  // head.b and head.ln.b are zero at init; head.ln.g scales a zero vector
  RngStream rng(10, "z");
  Tensor z({5, mc.encoder.dim});
  for (auto& v : z.data) v = static_cast<float>(rng.normal());
  Tape<float> tape;
  TapeBinder<float> binder(tape, bundle.params, false);
  const Tensor y = tape.value(head(tape, binder, tape.constant(z)));
  CHECK(y.rows() == 5);
  CHECK(y.cols() == mc.head.out_dim);
  for (float v : y.data) CHECK(v == 0.0f);
}

TEST_CASE("decoder queries with identical positions give identical rows") {
  const ModelConfig mc = micro_config();
  const ModelBundle bundle = init_model(mc, 11);
  RngStream rng(12, "zv");
  Tensor z_v({3, mc.encoder.dim});
  for (auto& v : z_v.data) v = static_cast<float>(rng.normal());
  Tensor pos_v({3, mc.encoder.dim});
  for (auto& v : pos_v.data) v = static_cast<float>(rng.normal());
  Tensor pos_m({2, mc.encoder.dim});
  for (int j = 0; j < mc.encoder.dim; ++j) {
    const auto v = static_cast<float>(rng.normal());
    pos_m.at(0, j) = v;
    pos_m.at(1, j) = v;
  }

  Tape<float> tape;
  TapeBinder<float> binder(tape, bundle.params, false);
  const Tensor z_m = tape.value(decode(tape, binder, tape.constant(z_v), pos_v, pos_m, mc.decoder));
  REQUIRE(z_m.rows() == 2);
  for (int64_t j = 0; j < z_m.cols(); ++j) CHECK(z_m.at(0, j) == z_m.at(1, j));
}

TEST_CASE("pipeline output shapes track the mask") {
  const ModelConfig mc = micro_config();
  const ModelBundle bundle = init_model(mc, 13);
  const Tensor img = random_image(16, 16, 14);
  const PatchGrid grid = grid_for(16, 16, 4);
  const MaskSpec mask = fixed_mask(grid, {2, 5, 6, 10, 11});

  Tape<float> tape;
  TapeBinder<float> binder(tape, bundle.params, false);
  const PipelineVars pv = forward_pipeline(tape, binder, img, mask, mc, true);
  CHECK(tape.value(pv.y_v).rows() == grid.n() - 5);
  CHECK(tape.value(pv.y_v).cols() == mc.head.out_dim);
  REQUIRE(pv.y_m.has_value());
  CHECK(tape.value(*pv.y_m).rows() == 5);
  CHECK(tape.value(*pv.y_m).cols() == mc.head.out_dim);
}

TEST_CASE("gamma zero with visible-only supervision covers every patch") {
  const ModelConfig mc = micro_config();
  const ModelBundle bundle = init_model(mc, 15);
  const Tensor img = random_image(16, 16, 16);
  const MaskSpec mask = fixed_mask(grid_for(16, 16, 4), {});

  Tape<float> tape;
  TapeBinder<float> binder(tape, bundle.params, true);
  const PipelineVars pv = forward_pipeline(tape, binder, img, mask, mc, false);
  CHECK(tape.value(pv.y_v).rows() == 16);
  CHECK_FALSE(pv.y_m.has_value());
  // the decoder stayed off the tape
  for (const auto& [name, idx] : tape.params()) {
    (void)idx;
    CHECK(name.rfind("dec.", 0) != 0);
  }
}

TEST_CASE("decode demands at least one masked position") {
  const ModelConfig mc = micro_config();
  const ModelBundle bundle = init_model(mc, 17);
  const Tensor img = random_image(16, 16, 18);
  const MaskSpec mask = fixed_mask(grid_for(16, 16, 4), {});
  Tape<float> tape;
  TapeBinder<float> binder(tape, bundle.params, false);
  CHECK_THROWS_AS(forward_pipeline(tape, binder, img, mask, mc, true), std::invalid_argument);
}

TEST_CASE("every touched parameter receives gradient under both supervisions") {
  const ModelConfig mc = micro_config();
  const ModelBundle bundle = init_model(mc, 19);
  const Tensor img = random_image(16, 16, 20);
  const MaskSpec mask = fixed_mask(grid_for(16, 16, 4), {1, 4, 8, 13});
  RngStream rng(21, "tgt");
  Tensor target({16, static_cast<int64_t>(mc.head.out_dim)});
  for (auto& v : target.data) v = static_cast<float>(rng.normal());

  Tape<float> tape;
  TapeBinder<float> binder(tape, bundle.params, true);
  const PipelineVars pv = forward_pipeline(tape, binder, img, mask, mc, true);
  const Tensor t_v = gather_rows(target, mask.visible);
  const Tensor t_m = gather_rows(target, mask.masked);
  Var loss = total_loss(tape, pv.y_v, &t_v, pv.y_m, &t_m, SupervisionFlags{1, 1},
                        LossKind::MSE);
  tape.backward(loss);

  CHECK(tape.params().size() == bundle.params.size());  // everything is touched
  for (const auto& [name, idx] : tape.params()) {
    (void)idx;
    const Tensor g = tape.param_grad(name);
    double norm = 0.0;
    for (float v : g.data) norm += std::abs(v);
    INFO(name);
    CHECK(norm > 0.0);
  }
}

TEST_CASE("encoder compute scales with the visible count") {
  // Base-like width, reduced depth; wall-clock for gamma=0.75 must sit well
  // below gamma=0.25
  EncoderConfig cfg{6, 256, 8, 4};
  RngStream rng(22, "perf");
  ParamMap<float> params = init_encoder_params(cfg, 16, rng);
  const PatchGrid grid = grid_for(224, 224, 16);

  auto encode_visible = [&](int n_visible) {
    Tensor tokens({n_visible, cfg.dim});
    for (auto& v : tokens.data) v = 0.01f;
    Tape<float> tape;
    TapeBinder<float> binder(tape, params, false);
    return tape.value(encode(tape, binder, tape.constant(tokens), cfg)).at(0, 0);
  };

  const int n25 = grid.n() - target_mask_count(grid.n(), 0.25);
  const int n75 = grid.n() - target_mask_count(grid.n(), 0.75);
  encode_visible(n25);  // warm up allocators
  auto bench = [&](int n) {
    double best = 1e30;
    for (int rep = 0; rep < 3; ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      encode_visible(n);
      const auto t1 = std::chrono::steady_clock::now();
      best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
    }
    return best;
  };
  const double slow = bench(n25);
  const double fast = bench(n75);
  CHECK(fast / slow < 0.8);
}

TEST_CASE("pipeline gradients validate against finite differences") {
  // one representative combination here; the acceptance suite runs all nine
  const auto checks = pipeline_gradient_checks(99, 5);
  REQUIRE(!checks.empty());
  INFO(checks[0].name);
  CHECK(checks[0].max_rel_err < 1e-3);
}
