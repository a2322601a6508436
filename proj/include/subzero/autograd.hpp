#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "types.hpp"

// Minimal reverse-mode differentiation over flat double arrays. Complex
// quantities are carried as interleaved (re, im) pairs; complex-linear maps
// are real-linear on that representation and their vector-Jacobian product
// is the Hermitian adjoint.
namespace subzero::ad {

using Vec = Eigen::ArrayXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Tape;

class Var
{
public:
  Var() = default;
  Var(Tape *tape, Index id) : tape_(tape), id_(id) {}

  Vec const &value() const;
  Index size() const { return value().size(); }
  double scalar() const { return value()[0]; }
  bool needs_grad() const;
  Index id() const { return id_; }
  Tape *tape() const { return tape_; }

private:
  Tape *tape_ = nullptr;
  Index id_ = -1;
};

class Tape
{
public:
  Var constant(Vec v) { return push(std::move(v), false, {}); }
  Var leaf(Vec v) { return push(std::move(v), true, {}); }

  // Records a node. `back` receives the node's upstream gradient and must
  // accumulate into its inputs.
  Var push(Vec v, bool needs, std::function<void(Vec const &)> back)
  {
    nodes_.push_back(Node{std::move(v), Vec(), needs, needs ? std::move(back) : nullptr});
    return Var(this, static_cast<Index>(nodes_.size()) - 1);
  }

  Vec const &value(Index id) const { return nodes_[id].value; }
  bool needs_grad(Index id) const { return nodes_[id].needs; }

  void accumulate(Var const &v, Vec const &g)
  {
    auto &n = nodes_[v.id()];
    if (!n.needs) {
      return;
    }
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  // Gradient of a scalar output with respect to every node.
  void backward(Var const &out)
  {
    if (out.size() != 1) {
      throw DomainError("backward needs a scalar output");
    }
    for (auto &n : nodes_) {
      n.grad.resize(0);
    }
    if (!nodes_[out.id()].needs) {
      return;
    }
    nodes_[out.id()].grad = Vec::Ones(1);
    for (Index i = out.id(); i >= 0; i--) {
      auto &n = nodes_[i];
      if (n.back && n.grad.size() > 0) {
        Vec const g = n.grad;
        n.back(g);
      }
    }
  }

  // Zero array when the node received no gradient.
  Vec grad(Var const &v) const
  {
    auto const &n = nodes_[v.id()];
    return n.grad.size() ? n.grad : Vec::Zero(n.value.size());
  }

  Index size() const { return static_cast<Index>(nodes_.size()); }

private:
  struct Node
  {
    Vec value;
    Vec grad;
    bool needs;
    std::function<void(Vec const &)> back;
  };
  std::vector<Node> nodes_;
};

inline Vec const &Var::value() const { return tape_->value(id_); }
inline bool Var::needs_grad() const { return tape_->needs_grad(id_); }

inline void check_same(Var const &a, Var const &b, char const *op)
{
  if (a.size() != b.size()) {
    throw DomainError(std::string(op) + ": size mismatch " + std::to_string(a.size()) + " vs " +
                      std::to_string(b.size()));
  }
}

inline Var add(Var a, Var b)
{
  check_same(a, b, "add");
  Tape &t = *a.tape();
  return t.push(a.value() + b.value(), a.needs_grad() || b.needs_grad(), [&t, a, b](Vec const &g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

inline Var sub(Var a, Var b)
{
  check_same(a, b, "sub");
  Tape &t = *a.tape();
  return t.push(a.value() - b.value(), a.needs_grad() || b.needs_grad(), [&t, a, b](Vec const &g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

inline Var mul(Var a, Var b)
{
  check_same(a, b, "mul");
  Tape &t = *a.tape();
  return t.push(a.value() * b.value(), a.needs_grad() || b.needs_grad(), [&t, a, b](Vec const &g) {
    if (a.needs_grad()) t.accumulate(a, g * b.value());
    if (b.needs_grad()) t.accumulate(b, g * a.value());
  });
}

// a * s for a scalar node s
inline Var scale(Var a, Var s)
{
  Tape &t = *a.tape();
  double const sv = s.scalar();
  return t.push(a.value() * sv, a.needs_grad() || s.needs_grad(), [&t, a, s, sv](Vec const &g) {
    if (a.needs_grad()) t.accumulate(a, g * sv);
    if (s.needs_grad()) t.accumulate(s, Vec::Constant(1, (g * a.value()).sum()));
  });
}

inline Var scale(Var a, double c)
{
  Tape &t = *a.tape();
  return t.push(a.value() * c, a.needs_grad(), [&t, a, c](Vec const &g) { t.accumulate(a, g * c); });
}

inline Var dot(Var a, Var b)
{
  check_same(a, b, "dot");
  Tape &t = *a.tape();
  double const v = (a.value() * b.value()).sum();
  return t.push(Vec::Constant(1, v), a.needs_grad() || b.needs_grad(), [&t, a, b](Vec const &g) {
    if (a.needs_grad()) t.accumulate(a, b.value() * g[0]);
    if (b.needs_grad()) t.accumulate(b, a.value() * g[0]);
  });
}

inline Var sum(Var a)
{
  Tape &t = *a.tape();
  Index const n = a.size();
  return t.push(Vec::Constant(1, a.value().sum()), a.needs_grad(), [&t, a, n](Vec const &g) {
    t.accumulate(a, Vec::Constant(n, g[0]));
  });
}

// scalar / scalar
inline Var div(Var a, Var b)
{
  Tape &t = *a.tape();
  double const av = a.scalar(), bv = b.scalar();
  return t.push(Vec::Constant(1, av / bv), a.needs_grad() || b.needs_grad(), [&t, a, b, av, bv](Vec const &g) {
    if (a.needs_grad()) t.accumulate(a, Vec::Constant(1, g[0] / bv));
    if (b.needs_grad()) t.accumulate(b, Vec::Constant(1, -g[0] * av / (bv * bv)));
  });
}

inline Var exp(Var a)
{
  Tape &t = *a.tape();
  Vec v = a.value().exp();
  Vec const cache = v;
  return t.push(std::move(v), a.needs_grad(), [&t, a, cache](Vec const &g) { t.accumulate(a, g * cache); });
}

inline Var relu(Var a)
{
  Tape &t = *a.tape();
  return t.push(a.value().max(0.0), a.needs_grad(), [&t, a](Vec const &g) {
    t.accumulate(a, (a.value() > 0.0).select(g, 0.0));
  });
}

inline Var sigmoid(Var a)
{
  Tape &t = *a.tape();
  Vec v = 1.0 / (1.0 + (-a.value()).exp());
  Vec const s = v;
  return t.push(std::move(v), a.needs_grad(), [&t, a, s](Vec const &g) { t.accumulate(a, g * s * (1.0 - s)); });
}

// Euclidean norm; the subgradient at zero is taken as zero.
inline Var l2norm(Var a)
{
  Tape &t = *a.tape();
  double const n = std::sqrt(a.value().square().sum());
  return t.push(Vec::Constant(1, n), a.needs_grad(), [&t, a, n](Vec const &g) {
    if (n > 0) t.accumulate(a, a.value() * (g[0] / n));
  });
}

// Sum of complex moduli over interleaved (re, im) pairs.
inline Var complex_l1(Var a)
{
  Tape &t = *a.tape();
  Index const n = a.size() / 2;
  Eigen::Map<RowMat const> pairs(a.value().data(), n, 2);
  Eigen::VectorXd const mod = pairs.rowwise().norm();
  return t.push(Vec::Constant(1, mod.sum()), a.needs_grad(), [&t, a, n, mod](Vec const &g) {
    Vec out(2 * n);
    for (Index i = 0; i < n; i++) {
      double const s = mod[i] > 0 ? g[0] / mod[i] : 0.0;
      out[2 * i] = a.value()[2 * i] * s;
      out[2 * i + 1] = a.value()[2 * i + 1] * s;
    }
    t.accumulate(a, out);
  });
}

using LinearMap = std::function<Vec(Vec const &)>;

// y = f(x) for a linear map f with adjoint f_adj.
inline Var linear(Var x, LinearMap f, LinearMap f_adj)
{
  Tape &t = *x.tape();
  return t.push(f(x.value()), x.needs_grad(), [&t, x, f_adj](Vec const &g) { t.accumulate(x, f_adj(g)); });
}

// y = N x + mu x for a self-adjoint linear map N and scalar node mu.
inline Var shifted_selfadjoint(Var x, Var mu, LinearMap const &N)
{
  Tape &t = *x.tape();
  double const m = mu.scalar();
  return t.push(N(x.value()) + m * x.value(), x.needs_grad() || mu.needs_grad(), [&t, x, mu, N, m](Vec const &g) {
    if (x.needs_grad()) t.accumulate(x, N(g) + m * g);
    if (mu.needs_grad()) t.accumulate(mu, Vec::Constant(1, (g * x.value()).sum()));
  });
}

// Spatial mean per channel of an (H*W, F) row-major feature map.
inline Var channel_mean(Var x, Index pixels, Index F)
{
  Tape &t = *x.tape();
  Eigen::Map<RowMat const> X(x.value().data(), pixels, F);
  Vec v = X.colwise().mean().transpose().array();
  return t.push(std::move(v), x.needs_grad(), [&t, x, pixels, F](Vec const &g) {
    Vec out(pixels * F);
    Eigen::Map<RowMat> O(out.data(), pixels, F);
    O.rowwise() = (g / static_cast<double>(pixels)).matrix().transpose();
    t.accumulate(x, out);
  });
}

// out = W x, W stored row-major (rows, cols)
inline Var matvec(Var w, Var x, Index rows, Index cols)
{
  Tape &t = *x.tape();
  Eigen::Map<RowMat const> W(w.value().data(), rows, cols);
  Vec v = (W * x.value().matrix()).array();
  return t.push(std::move(v), w.needs_grad() || x.needs_grad(), [&t, w, x, rows, cols](Vec const &g) {
    Eigen::Map<RowMat const> Wm(w.value().data(), rows, cols);
    if (w.needs_grad()) {
      Vec gw(rows * cols);
      Eigen::Map<RowMat> GW(gw.data(), rows, cols);
      GW.noalias() = g.matrix() * x.value().matrix().transpose();
      t.accumulate(w, gw);
    }
    if (x.needs_grad()) {
      t.accumulate(x, (Wm.transpose() * g.matrix()).array());
    }
  });
}

// x (H*W, F) scaled per channel by s (F)
inline Var channel_scale(Var x, Var s, Index pixels, Index F)
{
  Tape &t = *x.tape();
  Vec v(pixels * F);
  {
    Eigen::Map<RowMat const> X(x.value().data(), pixels, F);
    Eigen::Map<RowMat> V(v.data(), pixels, F);
    V.noalias() = X * s.value().matrix().asDiagonal();
  }
  return t.push(std::move(v), x.needs_grad() || s.needs_grad(), [&t, x, s, pixels, F](Vec const &g) {
    Eigen::Map<RowMat const> G(g.data(), pixels, F);
    if (x.needs_grad()) {
      Vec gx(pixels * F);
      Eigen::Map<RowMat> GX(gx.data(), pixels, F);
      GX.noalias() = G * s.value().matrix().asDiagonal();
      t.accumulate(x, gx);
    }
    if (s.needs_grad()) {
      Eigen::Map<RowMat const> X(x.value().data(), pixels, F);
      t.accumulate(s, (G.cwiseProduct(X)).colwise().sum().transpose().array());
    }
  });
}

struct ConvShape
{
  Index H, W, Cin, Cout, k;
  Index pixels() const { return H * W; }
  Index patch() const { return k * k * Cin; }
};

namespace detail {

// Zero-padded 'same' patches: row p holds the k*k*Cin neighbourhood of pixel p.
inline void im2col(double const *x, ConvShape const &s, RowMat &col)
{
  Index const pad = s.k / 2;
  col.resize(s.pixels(), s.patch());
  for (Index h = 0; h < s.H; h++) {
    for (Index w = 0; w < s.W; w++) {
      double *row = col.data() + (h * s.W + w) * s.patch();
      for (Index dy = 0; dy < s.k; dy++) {
        Index const hh = h + dy - pad;
        for (Index dx = 0; dx < s.k; dx++) {
          Index const ww = w + dx - pad;
          double *dst = row + (dy * s.k + dx) * s.Cin;
          if (hh < 0 || hh >= s.H || ww < 0 || ww >= s.W) {
            std::fill_n(dst, s.Cin, 0.0);
          } else {
            std::copy_n(x + (hh * s.W + ww) * s.Cin, s.Cin, dst);
          }
        }
      }
    }
  }
}

inline void col2im(RowMat const &col, ConvShape const &s, double *x)
{
  Index const pad = s.k / 2;
  std::fill_n(x, s.pixels() * s.Cin, 0.0);
  for (Index h = 0; h < s.H; h++) {
    for (Index w = 0; w < s.W; w++) {
      double const *row = col.data() + (h * s.W + w) * s.patch();
      for (Index dy = 0; dy < s.k; dy++) {
        Index const hh = h + dy - pad;
        if (hh < 0 || hh >= s.H) continue;
        for (Index dx = 0; dx < s.k; dx++) {
          Index const ww = w + dx - pad;
          if (ww < 0 || ww >= s.W) continue;
          double const *src = row + (dy * s.k + dx) * s.Cin;
          double *dst = x + (hh * s.W + ww) * s.Cin;
          for (Index c = 0; c < s.Cin; c++) {
            dst[c] += src[c];
          }
        }
      }
    }
  }
}

} // namespace detail

// 'same' 2D convolution on an (H, W, Cin) map. Weights are (k, k, Cin, Cout)
// row-major, bias is (Cout). Patches are rebuilt in the backward pass rather
// than kept alive on the tape.
inline Var conv2d(Var x, Var w, Var b, ConvShape s)
{
  Tape &t = *x.tape();
  RowMat col;
  detail::im2col(x.value().data(), s, col);
  Vec v(s.pixels() * s.Cout);
  {
    Eigen::Map<RowMat const> Wm(w.value().data(), s.patch(), s.Cout);
    Eigen::Map<RowMat> V(v.data(), s.pixels(), s.Cout);
    V.noalias() = col * Wm;
    V.rowwise() += b.value().matrix().transpose();
  }
  bool const needs = x.needs_grad() || w.needs_grad() || b.needs_grad();
  return t.push(std::move(v), needs, [&t, x, w, b, s](Vec const &g) {
    Eigen::Map<RowMat const> G(g.data(), s.pixels(), s.Cout);
    Eigen::Map<RowMat const> Wm(w.value().data(), s.patch(), s.Cout);
    if (w.needs_grad()) {
      RowMat col;
      detail::im2col(x.value().data(), s, col);
      Vec gw(s.patch() * s.Cout);
      Eigen::Map<RowMat> GW(gw.data(), s.patch(), s.Cout);
      GW.noalias() = col.transpose() * G;
      t.accumulate(w, gw);
    }
    if (b.needs_grad()) {
      t.accumulate(b, G.colwise().sum().transpose().array());
    }
    if (x.needs_grad()) {
      RowMat const dcol = G * Wm.transpose();
      Vec gx(s.pixels() * s.Cin);
      detail::col2im(dcol, s, gx.data());
      t.accumulate(x, gx);
    }
  });
}

} // namespace subzero::ad
