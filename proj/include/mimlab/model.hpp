#pragma once

// The student: a pre-norm ViT encoder over visible patches, a one-block
// cross-attention decoder driven by a learned mask token, and a FC+LN head
// projecting latents into the teacher's feature space. Forward functions are
// templated on the scalar so the gradient suite can rerun them in 64-bit.

#include <optional>

#include "mimlab/autograd.hpp"
#include "mimlab/masking.hpp"
#include "mimlab/patching.hpp"
#include "mimlab/rng.hpp"

namespace mimlab {

enum class Preset { Micro, Tiny, Small, Base, Large };

struct EncoderConfig {
  int layers = 0;
  int dim = 0;
  int heads = 0;
  int mlp_ratio = 4;
};

struct DecoderConfig {
  int blocks = 1;  // fixed
  int heads = 0;
};

struct HeadConfig {
  int in_dim = 0;
  int out_dim = 0;
};

struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;
  HeadConfig head;
  int patch = 16;

  void validate() const {
    if (encoder.dim % encoder.heads != 0) throw std::invalid_argument("dim must be divisible by heads");
    if (encoder.dim % decoder.heads != 0) throw std::invalid_argument("dim must be divisible by decoder heads");
    if (decoder.blocks != 1) throw std::invalid_argument("decoder is a single block");
    if (head.in_dim != encoder.dim) throw std::invalid_argument("head input width must equal encoder dim");
  }
};

inline EncoderConfig encoder_preset(Preset p) {
  switch (p) {
    case Preset::Micro: return {4, 64, 4, 4};
    case Preset::Tiny: return {12, 192, 12, 4};
    case Preset::Small: return {12, 384, 6, 4};
    case Preset::Base: return {12, 768, 12, 4};
    case Preset::Large: return {24, 1024, 16, 4};
  }
  throw std::invalid_argument("unknown preset");
}

inline Preset preset_from_string(const std::string& s) {
  if (s == "micro") return Preset::Micro;
  if (s == "tiny") return Preset::Tiny;
  if (s == "small") return Preset::Small;
  if (s == "base") return Preset::Base;
  if (s == "large") return Preset::Large;
  throw std::invalid_argument("unknown preset: " + s);
}

inline const char* to_string(Preset p) {
  switch (p) {
    case Preset::Micro: return "micro";
    case Preset::Tiny: return "tiny";
    case Preset::Small: return "small";
    case Preset::Base: return "base";
    case Preset::Large: return "large";
  }
  return "?";
}

// Sizes with a default-mask-ratio table entry; the test-only Micro preset
// has none.
inline ModelSize model_size_of(Preset p) {
  switch (p) {
    case Preset::Tiny: return ModelSize::Tiny;
    case Preset::Small: return ModelSize::Small;
    case Preset::Base: return ModelSize::Base;
    case Preset::Large: return ModelSize::Large;
    default: throw std::invalid_argument("preset has no default mask ratio; set gamma explicitly");
  }
}

struct ModelBundle {
  ModelConfig config;
  ParamMap<float> params;
};

// ---------------------------------------------------------------------------
// parameter initialization
// ---------------------------------------------------------------------------

namespace detail {

inline Tensor trunc_normal_tensor(std::vector<int64_t> shape, RngStream& rng, double sigma = 0.02) {
  Tensor t(std::move(shape));
  for (auto& v : t.data) v = static_cast<float>(rng.trunc_normal(sigma));
  return t;
}

inline void init_block(ParamMap<float>& p, const std::string& prefix, int dim, int mlp_ratio,
                       RngStream& rng) {
  const int64_t d = dim, hidden = static_cast<int64_t>(dim) * mlp_ratio;
  p.emplace(prefix + ".ln1.g", Tensor({d}, 1.f));
  p.emplace(prefix + ".ln1.b", Tensor({d}));
  for (const char* w : {"wq", "wk", "wv", "wo"})
    p.emplace(prefix + ".attn." + std::string(w), trunc_normal_tensor({d, d}, rng));
  for (const char* b : {"bq", "bk", "bv", "bo"})
    p.emplace(prefix + ".attn." + std::string(b), Tensor({d}));
  p.emplace(prefix + ".ln2.g", Tensor({d}, 1.f));
  p.emplace(prefix + ".ln2.b", Tensor({d}));
  p.emplace(prefix + ".mlp.w1", trunc_normal_tensor({d, hidden}, rng));
  p.emplace(prefix + ".mlp.b1", Tensor({hidden}));
  p.emplace(prefix + ".mlp.w2", trunc_normal_tensor({hidden, d}, rng));
  p.emplace(prefix + ".mlp.b2", Tensor({d}));
}

}  // namespace detail

// Encoder-only parameter set (also the shape of a pseudo teacher).
inline ParamMap<float> init_encoder_params(const EncoderConfig& cfg, int patch, RngStream& rng) {
  ParamMap<float> p;
  const int64_t in_dim = static_cast<int64_t>(patch) * patch * 3;
  p.emplace("embed.w", detail::trunc_normal_tensor({in_dim, cfg.dim}, rng));
  p.emplace("embed.b", Tensor({cfg.dim}));
  for (int l = 0; l < cfg.layers; ++l)
    detail::init_block(p, "enc." + std::to_string(l), cfg.dim, cfg.mlp_ratio, rng);
  p.emplace("enc.ln.g", Tensor({cfg.dim}, 1.f));
  p.emplace("enc.ln.b", Tensor({cfg.dim}));
  return p;
}

inline ModelBundle init_model(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  RngStream rng(seed, "init");
  ModelBundle b;
  b.config = cfg;
  b.params = init_encoder_params(cfg.encoder, cfg.patch, rng);
  b.params.emplace("dec.mask_token", detail::trunc_normal_tensor({cfg.encoder.dim}, rng));
  detail::init_block(b.params, "dec", cfg.encoder.dim, cfg.encoder.mlp_ratio, rng);
  b.params.emplace("head.w",
                   detail::trunc_normal_tensor({cfg.head.in_dim, cfg.head.out_dim}, rng));
  b.params.emplace("head.b", Tensor({cfg.head.out_dim}));
  b.params.emplace("head.ln.g", Tensor({cfg.head.out_dim}, 1.f));
  b.params.emplace("head.ln.b", Tensor({cfg.head.out_dim}));
  return b;
}

// ---------------------------------------------------------------------------
// forward graph
// ---------------------------------------------------------------------------

// Lazily binds store entries onto a tape, as trainable parameters or frozen
// constants. Parameters never read stay off the tape entirely, so a skipped
// decoder receives no gradient and no optimizer update.
template <typename S>
class TapeBinder {
 public:
  TapeBinder(Tape<S>& tape, const ParamMap<S>& store, bool trainable)
      : tape_(&tape), store_(&store), trainable_(trainable) {}

  Var operator[](const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    auto sit = store_->find(name);
    if (sit == store_->end()) throw std::out_of_range("missing parameter: " + name);
    Var v = trainable_ ? tape_->param(name, sit->second) : tape_->constant(sit->second);
    bound_.emplace(name, v);
    return v;
  }

 private:
  Tape<S>* tape_;
  const ParamMap<S>* store_;
  bool trainable_;
  std::map<std::string, Var> bound_;
};

// Attention with queries from q_src and keys/values from kv_src; pass the
// same var twice for self-attention.
template <typename S>
Var attention(Tape<S>& t, TapeBinder<S>& p, const std::string& prefix, Var q_src, Var kv_src,
              int heads) {
  const int64_t d = t.value(q_src).cols();
  Var q = t.add_rowvec(t.matmul(q_src, p[prefix + ".wq"]), p[prefix + ".bq"]);
  Var k = t.add_rowvec(t.matmul(kv_src, p[prefix + ".wk"]), p[prefix + ".bk"]);
  Var v = t.add_rowvec(t.matmul(kv_src, p[prefix + ".wv"]), p[prefix + ".bv"]);
  const int64_t head_dim = d / heads;
  const S inv_sqrt = S(1) / std::sqrt(static_cast<S>(head_dim));
  std::vector<Var> outs;
  outs.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    Var qh = t.slice_cols(q, h * head_dim, head_dim);
    Var kh = t.slice_cols(k, h * head_dim, head_dim);
    Var vh = t.slice_cols(v, h * head_dim, head_dim);
    Var scores = t.scale(t.matmul(qh, t.transpose(kh)), inv_sqrt);
    outs.push_back(t.matmul(t.softmax_rows(scores), vh));
  }
  Var cat = outs.size() == 1 ? outs[0] : t.concat_cols(outs);
  return t.add_rowvec(t.matmul(cat, p[prefix + ".wo"]), p[prefix + ".bo"]);
}

template <typename S>
Var mlp_block(Tape<S>& t, TapeBinder<S>& p, const std::string& prefix, Var x) {
  Var h = t.add_rowvec(t.matmul(x, p[prefix + ".w1"]), p[prefix + ".b1"]);
  h = t.gelu(h);
  return t.add_rowvec(t.matmul(h, p[prefix + ".w2"]), p[prefix + ".b2"]);
}

// pre-norm: x += attn(LN(x)); x += mlp(LN(x))
template <typename S>
Var transformer_block(Tape<S>& t, TapeBinder<S>& p, const std::string& prefix, Var x, int heads) {
  Var h1 = t.layernorm_rows(x, p[prefix + ".ln1.g"], p[prefix + ".ln1.b"]);
  x = t.add(x, attention(t, p, prefix + ".attn", h1, h1, heads));
  Var h2 = t.layernorm_rows(x, p[prefix + ".ln2.g"], p[prefix + ".ln2.b"]);
  return t.add(x, mlp_block(t, p, prefix + ".mlp", h2));
}

// Project patch rows and add their positional embeddings.
template <typename S>
Var embed_patches(Tape<S>& t, TapeBinder<S>& p, Var patch_rows, const TensorT<S>& pos_rows) {
  Var x = t.add_rowvec(t.matmul(patch_rows, p["embed.w"]), p["embed.b"]);
  return t.add(x, t.constant(pos_rows));
}

// Transformer stack plus final LN. Input must already carry positional
// embeddings for exactly the tokens present.
template <typename S>
Var encode(Tape<S>& t, TapeBinder<S>& p, Var x, const EncoderConfig& cfg) {
  if (t.value(x).cols() != cfg.dim) throw std::invalid_argument("encode: width mismatch with config");
  for (int l = 0; l < cfg.layers; ++l)
    x = transformer_block(t, p, "enc." + std::to_string(l), x, cfg.heads);
  return t.layernorm_rows(x, p["enc.ln.g"], p["enc.ln.b"]);
}

// One cross-attention block: mask-token queries (plus masked-position
// embeddings) attend to Z_v (plus visible-position embeddings). Output row i
// corresponds to masked index i.
template <typename S>
Var decode(Tape<S>& t, TapeBinder<S>& p, Var z_v, const TensorT<S>& pos_v, const TensorT<S>& pos_m,
           const DecoderConfig& cfg) {
  const int64_t n_masked = pos_m.rows();
  if (n_masked < 1) throw std::invalid_argument("decode: at least one masked position required");
  Var queries = t.add(t.broadcast_row(p["dec.mask_token"], n_masked), t.constant(pos_m));
  Var kv = t.add(z_v, t.constant(pos_v));
  Var h1 = t.layernorm_rows(queries, p["dec.ln1.g"], p["dec.ln1.b"]);
  queries = t.add(queries, attention(t, p, "dec.attn", h1, kv, cfg.heads));
  Var h2 = t.layernorm_rows(queries, p["dec.ln2.g"], p["dec.ln2.b"]);
  return t.add(queries, mlp_block(t, p, "dec.mlp", h2));
}

// FC then LN, shared between visible and masked latents.
template <typename S>
Var head(Tape<S>& t, TapeBinder<S>& p, Var z) {
  Var y = t.add_rowvec(t.matmul(z, p["head.w"]), p["head.b"]);
  return t.layernorm_rows(y, p["head.ln.g"], p["head.ln.b"]);
}

struct PipelineVars {
  Var y_v;
  std::optional<Var> y_m;
};

// patchify -> select visible -> embed -> encode -> head, plus the decoder
// path when masked predictions are wanted. Masked patches never enter the
// tape, so Y_v cannot depend on their pixels.
template <typename S>
PipelineVars forward_pipeline(Tape<S>& t, TapeBinder<S>& p, const TensorT<S>& image,
                              const MaskSpec& mask, const ModelConfig& cfg, bool want_masked) {
  if (mask.visible.empty())
    throw std::invalid_argument("forward_pipeline: encoder needs at least one visible patch");
  const TensorT<S> patches = patchify(image, cfg.patch);
  const TensorT<S> pos = sincos_pos_embed<S>(mask.grid.h, mask.grid.w, cfg.encoder.dim);
  const TensorT<S> pos_v = gather_rows(pos, mask.visible);

  Var patch_rows = t.constant(gather_rows(patches, mask.visible));
  Var x = embed_patches(t, p, patch_rows, pos_v);
  Var z_v = encode(t, p, x, cfg.encoder);

  PipelineVars out;
  out.y_v = head(t, p, z_v);
  if (want_masked) {
    const TensorT<S> pos_m = gather_rows(pos, mask.masked);
    Var z_m = decode(t, p, z_v, pos_v, pos_m, cfg.decoder);
    out.y_m = head(t, p, z_m);
  }
  return out;
}

// Frozen full-sequence encoder output [N, dim]; the feature-extraction and
// teacher paths share this.
template <typename S>
TensorT<S> encode_all_frozen(const ParamMap<S>& params, const EncoderConfig& cfg, int patch,
                             const TensorT<S>& image) {
  Tape<S> t;
  TapeBinder<S> p(t, params, /*trainable=*/false);
  const TensorT<S> patches = patchify(image, patch);
  const PatchGrid grid = grid_for(static_cast<int>(image.shape[1]), static_cast<int>(image.shape[2]), patch);
  const TensorT<S> pos = sincos_pos_embed<S>(grid.h, grid.w, cfg.dim);
  Var x = embed_patches(t, p, t.constant(patches), pos);
  return t.value(encode(t, p, x, cfg));
}

}  // namespace mimlab
