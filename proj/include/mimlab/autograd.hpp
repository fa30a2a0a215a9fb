#pragma once

// Reverse-mode tape. A forward pass records primitive ops in order; backward
// replays the record in exact reverse, accumulating gradients. Nodes are
// immutable once written, so rerunning the same forward on the same inputs is
// bit-identical. Templated on the scalar so gradient checks can rerun a graph
// in 64-bit.

#include <functional>
#include <optional>

#include "mimlab/tensor.hpp"

namespace mimlab {

struct Var {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

template <typename S>
class Tape {
 public:
  using T = TensorT<S>;

  struct Node {
    T value;
    T grad;  // allocated lazily by backward()
    bool needs_grad = false;
    std::function<void(Tape&, int)> back;  // null for leaves
  };

  // --- leaves -------------------------------------------------------------

  Var constant(T v) { return push(std::move(v), false, nullptr); }

  Var input(T v, bool needs_grad = true) { return push(std::move(v), needs_grad, nullptr); }

  // One leaf per name; binding the same name twice would silently split its
  // gradient across disconnected leaves.
  Var param(const std::string& name, const T& v) {
    if (params_.count(name)) throw std::invalid_argument("parameter already on tape: " + name);
    Var h = push(v, true, nullptr);
    params_.emplace(name, h.idx);
    return h;
  }

  const std::map<std::string, int>& params() const { return params_; }

  const T& value(Var v) const { return nodes_[v.idx].value; }
  const T& grad(Var v) const { return nodes_[v.idx].grad; }
  bool has_grad(Var v) const { return !nodes_[v.idx].grad.data.empty(); }
  size_t size() const { return nodes_.size(); }

  // --- primitives ----------------------------------------------------------

  Var matmul(Var a, Var b) {
    T out = mimlab::matmul(value(a), value(b));
    return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, int self) {
      const T& g = t.nodes_[self].grad;
      if (t.needs(a)) t.accum(a, mimlab::matmul(g, mimlab::transpose(t.value(b))));
      if (t.needs(b)) t.accum(b, mimlab::matmul(mimlab::transpose(t.value(a)), g));
    });
  }

  Var add(Var a, Var b) {
    T out = mimlab::add(value(a), value(b));
    return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, int self) {
      const T& g = t.nodes_[self].grad;
      if (t.needs(a)) t.accum(a, g);
      if (t.needs(b)) t.accum(b, g);
    });
  }

  Var sub(Var a, Var b) {
    T out = mimlab::sub(value(a), value(b));
    return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, int self) {
      const T& g = t.nodes_[self].grad;
      if (t.needs(a)) t.accum(a, g);
      if (t.needs(b)) t.accum(b, mimlab::scale(g, S(-1)));
    });
  }

  Var mul(Var a, Var b) {
    T out = mimlab::mul(value(a), value(b));
    return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, int self) {
      const T& g = t.nodes_[self].grad;
      if (t.needs(a)) t.accum(a, mimlab::mul(g, t.value(b)));
      if (t.needs(b)) t.accum(b, mimlab::mul(g, t.value(a)));
    });
  }

  Var scale(Var a, S s) {
    T out = mimlab::scale(value(a), s);
    return push(std::move(out), needs(a), [a, s](Tape& t, int self) {
      if (t.needs(a)) t.accum(a, mimlab::scale(t.nodes_[self].grad, s));
    });
  }

  Var add_rowvec(Var x, Var v) {
    T out = mimlab::add_rowvec(value(x), value(v));
    return push(std::move(out), needs(x) || needs(v), [x, v](Tape& t, int self) {
      const T& g = t.nodes_[self].grad;
      if (t.needs(x)) t.accum(x, g);
      if (t.needs(v)) {
        T gv({g.cols()});
        for (int64_t i = 0; i < g.rows(); ++i)
          for (int64_t j = 0; j < g.cols(); ++j) gv.at(j) += g.at(i, j);
        t.accum(v, gv);
      }
    });
  }

  // v[d] replicated over n rows
  Var broadcast_row(Var v, int64_t n) {
    const T& src = value(v);
    if (src.rank() != 1) throw std::invalid_argument("broadcast_row: rank-1 tensor required");
    T out({n, src.shape[0]});
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < src.shape[0]; ++j) out.at(i, j) = src.at(j);
    return push(std::move(out), needs(v), [v](Tape& t, int self) {
      if (!t.needs(v)) return;
      const T& g = t.nodes_[self].grad;
      T gv({g.cols()});
      for (int64_t i = 0; i < g.rows(); ++i)
        for (int64_t j = 0; j < g.cols(); ++j) gv.at(j) += g.at(i, j);
      t.accum(v, gv);
    });
  }

  Var transpose(Var a) {
    T out = mimlab::transpose(value(a));
    return push(std::move(out), needs(a), [a](Tape& t, int self) {
      if (t.needs(a)) t.accum(a, mimlab::transpose(t.nodes_[self].grad));
    });
  }

  Var slice_cols(Var x, int64_t start, int64_t width) {
    const T& src = value(x);
    if (start < 0 || start + width > src.cols()) throw std::out_of_range("slice_cols: range out of bounds");
    T out({src.rows(), width});
    for (int64_t i = 0; i < src.rows(); ++i)
      for (int64_t j = 0; j < width; ++j) out.at(i, j) = src.at(i, start + j);
    return push(std::move(out), needs(x), [x, start, width](Tape& t, int self) {
      if (!t.needs(x)) return;
      const T& g = t.nodes_[self].grad;
      T gx(t.value(x).shape);
      for (int64_t i = 0; i < g.rows(); ++i)
        for (int64_t j = 0; j < width; ++j) gx.at(i, start + j) = g.at(i, j);
      t.accum(x, gx);
    });
  }

  Var concat_cols(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_cols: empty list");
    int64_t total = 0;
    const int64_t n = value(xs[0]).rows();
    bool ng = false;
    for (Var x : xs) {
      if (value(x).rows() != n) throw std::invalid_argument("concat_cols: row mismatch");
      total += value(x).cols();
      ng = ng || needs(x);
    }
    T out({n, total});
    int64_t off = 0;
    for (Var x : xs) {
      const T& src = value(x);
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < src.cols(); ++j) out.at(i, off + j) = src.at(i, j);
      off += src.cols();
    }
    return push(std::move(out), ng, [xs](Tape& t, int self) {
      const T& g = t.nodes_[self].grad;
      int64_t off = 0;
      for (Var x : xs) {
        const int64_t w = t.value(x).cols();
        if (t.needs(x)) {
          T gx(t.value(x).shape);
          for (int64_t i = 0; i < g.rows(); ++i)
            for (int64_t j = 0; j < w; ++j) gx.at(i, j) = g.at(i, off + j);
          t.accum(x, gx);
        }
        off += w;
      }
    });
  }

  Var gather_rows(Var x, std::vector<int> idx) {
    T out = mimlab::gather_rows(value(x), idx);
    return push(std::move(out), needs(x), [x, idx = std::move(idx)](Tape& t, int self) {
      if (!t.needs(x)) return;
      const T& g = t.nodes_[self].grad;
      T gx(t.value(x).shape);
      for (size_t i = 0; i < idx.size(); ++i)
        for (int64_t j = 0; j < g.cols(); ++j) gx.at(idx[i], j) += g.at(static_cast<int64_t>(i), j);
      t.accum(x, gx);
    });
  }

  Var softmax_rows(Var x) {
    T out = mimlab::softmax_rows(value(x));
    return push(std::move(out), needs(x), [x](Tape& t, int self) {
      if (!t.needs(x)) return;
      const T& y = t.nodes_[self].value;
      const T& g = t.nodes_[self].grad;
      T gx(y.shape);
      for (int64_t i = 0; i < y.rows(); ++i) {
        S dot = S(0);
        for (int64_t j = 0; j < y.cols(); ++j) dot += g.at(i, j) * y.at(i, j);
        for (int64_t j = 0; j < y.cols(); ++j) gx.at(i, j) = (g.at(i, j) - dot) * y.at(i, j);
      }
      t.accum(x, gx);
    });
  }

  Var layernorm_rows(Var x, Var gamma, Var beta, S eps = S(1e-6)) {
    T out = mimlab::layernorm_rows(value(x), value(gamma), value(beta), eps);
    return push(std::move(out), needs(x) || needs(gamma) || needs(beta),
                [x, gamma, beta, eps](Tape& t, int self) {
      const T& xv = t.value(x);
      const T& gm = t.value(gamma);
      const T& g = t.nodes_[self].grad;
      const int64_t d = xv.cols();
      T gx(xv.shape), ggamma({d}), gbeta({d});
      for (int64_t i = 0; i < xv.rows(); ++i) {
        S mean = S(0);
        for (int64_t j = 0; j < d; ++j) mean += xv.at(i, j);
        mean /= S(d);
        S var = S(0);
        for (int64_t j = 0; j < d; ++j) {
          const S c = xv.at(i, j) - mean;
          var += c * c;
        }
        var /= S(d);
        const S inv = S(1) / std::sqrt(var + eps);
        // dL/dxhat = g * gamma; dL/dx = (dxhat - mean(dxhat) - xhat*mean(dxhat*xhat)) * inv
        S m1 = S(0), m2 = S(0);
        for (int64_t j = 0; j < d; ++j) {
          const S xhat = (xv.at(i, j) - mean) * inv;
          const S dxh = g.at(i, j) * gm.at(j);
          m1 += dxh;
          m2 += dxh * xhat;
          ggamma.at(j) += g.at(i, j) * xhat;
          gbeta.at(j) += g.at(i, j);
        }
        m1 /= S(d);
        m2 /= S(d);
        for (int64_t j = 0; j < d; ++j) {
          const S xhat = (xv.at(i, j) - mean) * inv;
          const S dxh = g.at(i, j) * gm.at(j);
          gx.at(i, j) = (dxh - m1 - xhat * m2) * inv;
        }
      }
      if (t.needs(x)) t.accum(x, gx);
      if (t.needs(gamma)) t.accum(gamma, ggamma);
      if (t.needs(beta)) t.accum(beta, gbeta);
    });
  }

  Var gelu(Var x) {
    T out = mimlab::gelu(value(x));
    return push(std::move(out), needs(x), [x](Tape& t, int self) {
      if (!t.needs(x)) return;
      const T& xv = t.value(x);
      const T& g = t.nodes_[self].grad;
      T gx(xv.shape);
      for (size_t i = 0; i < xv.data.size(); ++i) gx.data[i] = g.data[i] * gelu_grad_scalar(xv.data[i]);
      t.accum(x, gx);
    });
  }

  Var sum_all(Var x) {
    T out({1});
    out.at(0) = mimlab::sum_all(value(x));
    return push(std::move(out), needs(x), [x](Tape& t, int self) {
      if (!t.needs(x)) return;
      const S g = t.nodes_[self].grad.at(0);
      T gx(t.value(x).shape, g);
      t.accum(x, gx);
    });
  }

  // column means over rows: [n,d] -> [1,d]
  Var mean_rows(Var x) {
    const T& src = value(x);
    if (src.rank() != 2) throw std::invalid_argument("mean_rows: rank-2 tensor required");
    const int64_t n = src.rows(), d = src.cols();
    T out({1, d});
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < d; ++j) out.at(0, j) += src.at(i, j);
    for (int64_t j = 0; j < d; ++j) out.at(0, j) /= S(n);
    return push(std::move(out), needs(x), [x, n](Tape& t, int self) {
      if (!t.needs(x)) return;
      const T& g = t.nodes_[self].grad;
      T gx(t.value(x).shape);
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < g.cols(); ++j) gx.at(i, j) = g.at(0, j) / S(n);
      t.accum(x, gx);
    });
  }

  // sum over rows of (logsumexp(row) - logits[row, label]); softmax
  // cross-entropy against integer labels
  Var cross_entropy_rows(Var logits, std::vector<int> labels) {
    const T& z = value(logits);
    if (z.rank() != 2 || static_cast<int64_t>(labels.size()) != z.rows())
      throw std::invalid_argument("cross_entropy_rows: one label per row required");
    T out({1});
    for (int64_t i = 0; i < z.rows(); ++i) {
      const int lbl = labels[static_cast<size_t>(i)];
      if (lbl < 0 || lbl >= z.cols()) throw std::out_of_range("cross_entropy_rows: label out of range");
      S mx = z.at(i, 0);
      for (int64_t j = 1; j < z.cols(); ++j) mx = std::max(mx, z.at(i, j));
      S sum = S(0);
      for (int64_t j = 0; j < z.cols(); ++j) sum += std::exp(z.at(i, j) - mx);
      out.at(0) += mx + std::log(sum) - z.at(i, lbl);
    }
    return push(std::move(out), needs(logits), [logits, labels = std::move(labels)](Tape& t, int self) {
      if (!t.needs(logits)) return;
      const S g = t.nodes_[self].grad.at(0);
      const T& z = t.value(logits);
      T p = mimlab::softmax_rows(z);
      for (int64_t i = 0; i < z.rows(); ++i) p.at(i, labels[static_cast<size_t>(i)]) -= S(1);
      t.accum(logits, mimlab::scale(p, g));
    });
  }

  // Escape hatch for fused ops (losses) that provide their own backward.
  Var custom(T value, bool needs_grad, std::function<void(Tape&, int)> back) {
    return push(std::move(value), needs_grad, std::move(back));
  }

  bool needs(Var v) const { return nodes_[v.idx].needs_grad; }

  void accum(Var v, const T& g) {
    Node& n = nodes_[v.idx];
    if (n.grad.data.empty()) n.grad = T(n.value.shape);
    if (!n.grad.same_shape(g)) throw std::invalid_argument("gradient shape mismatch");
    for (size_t i = 0; i < g.data.size(); ++i) n.grad.data[i] += g.data[i];
  }

  // Reverse sweep from a scalar loss. `seed` is the incoming gradient, e.g.
  // 1/B when per-sample losses are averaged outside the tape.
  void backward(Var loss, S seed = S(1)) {
    if (loss.idx < 0 || loss.idx >= static_cast<int>(nodes_.size()))
      throw std::invalid_argument("backward: loss was not recorded on this tape");
    if (value(loss).numel() != 1) throw std::invalid_argument("backward: loss must be a scalar");
    if (!needs(loss)) throw std::invalid_argument("backward: loss does not depend on any parameter");
    Node& ln = nodes_[loss.idx];
    if (ln.grad.data.empty()) ln.grad = T(ln.value.shape);
    ln.grad.at(0) += seed;
    for (int i = loss.idx; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (n.back && n.needs_grad && !n.grad.data.empty()) n.back(*this, i);
    }
  }

  // Gradient of a registered parameter after backward(); zeros if untouched
  // by the loss.
  T param_grad(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("param_grad: unknown parameter " + name);
    const Node& n = nodes_[it->second];
    if (n.grad.data.empty()) return T(n.value.shape);
    return n.grad;
  }

 private:
  Var push(T value, bool needs_grad, std::function<void(Tape&, int)> back) {
    nodes_.push_back(Node{std::move(value), T{}, needs_grad, std::move(back)});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<Node> nodes_;
  std::map<std::string, int> params_;
};

}  // namespace mimlab
