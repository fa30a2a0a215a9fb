#pragma once

// Position-selectable supervision: the per-sample loss is
//   (delta_v * l(Y_v, T_v) + delta_m * l(Y_m, T_m)) / (delta_v*|v| + delta_m*|m|)
// where l sums per-patch scalars, so the denominator turns it into a
// per-patch mean. Batch averaging happens outside, per sample.

#include <optional>
#include <type_traits>

#include "mimlab/autograd.hpp"

namespace mimlab {

struct SupervisionFlags {
  int delta_v = 1;
  int delta_m = 0;

  void validate() const {
    if ((delta_v != 0 && delta_v != 1) || (delta_m != 0 && delta_m != 1))
      throw std::invalid_argument("supervision flags must be 0 or 1");
    if (delta_v == 0 && delta_m == 0)
      throw std::invalid_argument("at least one supervision position must be active");
  }
};

enum class LossKind { CosineDistance, MSE, SmoothL1 };

inline const char* to_string(LossKind k) {
  switch (k) {
    case LossKind::CosineDistance: return "cosine";
    case LossKind::MSE: return "mse";
    case LossKind::SmoothL1: return "smooth_l1";
  }
  return "?";
}

inline LossKind loss_from_string(const std::string& s) {
  if (s == "cosine") return LossKind::CosineDistance;
  if (s == "mse") return LossKind::MSE;
  if (s == "smooth_l1") return LossKind::SmoothL1;
  throw std::invalid_argument("unknown loss kind: " + s);
}

inline constexpr double kCosineEps = 1e-8;
inline constexpr double kSmoothL1Beta = 1.0;

// Scalar loss between one prediction row and one target row.
template <typename S>
S per_patch_loss(const S* y, const S* t, int64_t d, LossKind kind) {
  switch (kind) {
    case LossKind::CosineDistance: {
      S dot = S(0), ny = S(0), nt = S(0);
      for (int64_t j = 0; j < d; ++j) {
        dot += y[j] * t[j];
        ny += y[j] * y[j];
        nt += t[j] * t[j];
      }
      return S(1) - dot / (std::sqrt(ny) * std::sqrt(nt) + S(kCosineEps));
    }
    case LossKind::MSE: {
      S acc = S(0);
      for (int64_t j = 0; j < d; ++j) {
        const S diff = y[j] - t[j];
        acc += diff * diff;
      }
      return acc / S(d);
    }
    case LossKind::SmoothL1: {
      const S beta = S(kSmoothL1Beta);
      S acc = S(0);
      for (int64_t j = 0; j < d; ++j) {
        const S diff = std::abs(y[j] - t[j]);
        acc += diff < beta ? S(0.5) * diff * diff / beta : diff - S(0.5) * beta;
      }
      return acc / S(d);
    }
  }
  throw std::invalid_argument("unknown loss kind");
}

template <typename S>
S per_patch_loss(const TensorT<S>& y, const TensorT<S>& t, LossKind kind) {
  if (y.shape != t.shape || y.rank() != 1)
    throw std::invalid_argument("per_patch_loss: matching rank-1 tensors required");
  return per_patch_loss(y.data.data(), t.data.data(), y.numel(), kind);
}

// Tape op: sum over patch rows of per_patch_loss(Y[i], T[i]) with T constant.
template <typename S>
Var patch_loss_sum(Tape<S>& tape, Var y, const TensorT<S>& target, LossKind kind) {
  const TensorT<S>& yv = tape.value(y);
  if (yv.rank() != 2 || yv.shape != target.shape)
    throw std::invalid_argument("patch_loss_sum: prediction/target shape mismatch");
  const int64_t n = yv.rows(), d = yv.cols();
  TensorT<S> out({1});
  for (int64_t i = 0; i < n; ++i)
    out.at(0) += per_patch_loss(&yv.data[static_cast<size_t>(i * d)],
                                &target.data[static_cast<size_t>(i * d)], d, kind);
  return tape.custom(std::move(out), tape.needs(y), [y, target, kind](Tape<S>& t, int self) {
    if (!t.needs(y)) return;
    const S g = t.grad(Var{self}).at(0);
    const TensorT<S>& yv = t.value(y);
    const int64_t n = yv.rows(), d = yv.cols();
    TensorT<S> gy(yv.shape);
    for (int64_t i = 0; i < n; ++i) {
      const S* yr = &yv.data[static_cast<size_t>(i * d)];
      const S* tr = &target.data[static_cast<size_t>(i * d)];
      S* gr = &gy.data[static_cast<size_t>(i * d)];
      switch (kind) {
        case LossKind::CosineDistance: {
          S dot = S(0), ny2 = S(0), nt2 = S(0);
          for (int64_t j = 0; j < d; ++j) {
            dot += yr[j] * tr[j];
            ny2 += yr[j] * yr[j];
            nt2 += tr[j] * tr[j];
          }
          const S ny = std::sqrt(ny2), nt = std::sqrt(nt2);
          const S denom = ny * nt + S(kCosineEps);
          // d(1 - dot/denom)/dy = -t/denom + dot*nt*(y/ny)/denom^2
          for (int64_t j = 0; j < d; ++j) {
            S term = -tr[j] / denom;
            if (ny > S(0)) term += dot * nt * yr[j] / (ny * denom * denom);
            gr[j] = g * term;
          }
          break;
        }
        case LossKind::MSE:
          for (int64_t j = 0; j < d; ++j) gr[j] = g * S(2) * (yr[j] - tr[j]) / S(d);
          break;
        case LossKind::SmoothL1: {
          const S beta = S(kSmoothL1Beta);
          for (int64_t j = 0; j < d; ++j) {
            const S diff = yr[j] - tr[j];
            const S slope = std::abs(diff) < beta ? diff / beta : (diff > S(0) ? S(1) : S(-1));
            gr[j] = g * slope / S(d);
          }
          break;
        }
      }
    }
    t.accum(y, gy);
  });
}

// Per-sample total loss. Pass the Y/T pair for every active flag.
template <typename S>
Var total_loss(Tape<S>& tape, std::optional<Var> y_v, std::type_identity_t<const TensorT<S>*> t_v,
               std::optional<Var> y_m, std::type_identity_t<const TensorT<S>*> t_m,
               SupervisionFlags flags, LossKind kind) {
  flags.validate();
  std::optional<Var> acc;
  int64_t denom = 0;
  if (flags.delta_v) {
    if (!y_v || !t_v) throw std::invalid_argument("total_loss: visible supervision active but Y_v/T_v missing");
    acc = patch_loss_sum(tape, *y_v, *t_v, kind);
    denom += t_v->rows();
  }
  if (flags.delta_m) {
    if (!y_m || !t_m) throw std::invalid_argument("total_loss: masked supervision active but Y_m/T_m missing");
    Var lm = patch_loss_sum(tape, *y_m, *t_m, kind);
    acc = acc ? tape.add(*acc, lm) : lm;
    denom += t_m->rows();
  }
  if (denom == 0) throw std::invalid_argument("total_loss: no supervised patches");
  return tape.scale(*acc, S(1) / static_cast<S>(denom));
}

}  // namespace mimlab
