#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "fedldr/tensor.hpp"

namespace fedldr::num {

/// Reverse-mode tape over whole tensors. Every operation appends a node whose
/// inputs precede it, so walking node ids downward from the loss is a reverse
/// topological order. Adjoints accumulate by +=, which is what makes a
/// parameter that feeds several operations (the embedding in E*E^T, say)
/// receive the sum of its contributions.
///
/// A tape belongs to one training task at a time; build the graph, call
/// backward once, read gradients, then discard or reset.
class GradTape {
 public:
  struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
  };

  Var leaf(Tensor value) {
    nodes_.push_back(Node{std::move(value), Tensor{}, {-1, -1}, nullptr, false});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  const Tensor& value(Var v) const { return nodes_[check(v)].value; }

  /// Gradient of the last backward() target with respect to `v`. Zero for any
  /// value the loss never used.
  const Tensor& grad(Var v) const {
    const Node& n = nodes_[check(v)];
    return n.adjoint;
  }

  std::size_t size() const { return nodes_.size(); }

  void reset() { nodes_.clear(); }

  Var matmul(Var a, Var b) {
    Tensor out = num::matmul(value(a), value(b));
    return push(std::move(out), a, b, [](GradTape& t, Node& n) {
      const Tensor& va = t.nodes_[n.in[0]].value;
      const Tensor& vb = t.nodes_[n.in[1]].value;
      t.accumulate(n.in[0], num::matmul(n.adjoint, num::transpose(vb)));
      t.accumulate(n.in[1], num::matmul(num::transpose(va), n.adjoint));
    });
  }

  Var transpose(Var a) {
    return push(num::transpose(value(a)), a, Var{}, [](GradTape& t, Node& n) {
      t.accumulate(n.in[0], num::transpose(n.adjoint));
    });
  }

  Var relu(Var a) {
    return push(num::relu(value(a)), a, Var{}, [](GradTape& t, Node& n) {
      const Tensor& x = t.nodes_[n.in[0]].value;
      Tensor g = n.adjoint;
      for (std::size_t i = 0; i < g.size(); ++i)
        if (x[i] <= 0.0) g[i] = 0.0;  // subgradient 0 at exactly 0
      t.accumulate(n.in[0], std::move(g));
    });
  }

  Var row_softmax(Var a) {
    return push(num::row_softmax(value(a)), a, Var{}, [](GradTape& t, Node& n) {
      const Tensor& s = n.value;
      const std::size_t m = s.extent(0), w = s.extent(1);
      Tensor g({m, w});
      for (std::size_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < w; ++j) dot += n.adjoint(i, j) * s(i, j);
        for (std::size_t j = 0; j < w; ++j) g(i, j) = s(i, j) * (n.adjoint(i, j) - dot);
      }
      t.accumulate(n.in[0], std::move(g));
    });
  }

  Var add(Var a, Var b) {
    return push(num::add(value(a), value(b)), a, b, [](GradTape& t, Node& n) {
      t.accumulate(n.in[0], n.adjoint);
      t.accumulate(n.in[1], n.adjoint);
    });
  }

  Var sub(Var a, Var b) {
    return push(num::sub(value(a), value(b)), a, b, [](GradTape& t, Node& n) {
      t.accumulate(n.in[0], n.adjoint);
      t.accumulate(n.in[1], num::scale(n.adjoint, -1.0));
    });
  }

  Var scale(Var a, double c) {
    return push(num::scale(value(a), c), a, Var{}, [c](GradTape& t, Node& n) {
      t.accumulate(n.in[0], num::scale(n.adjoint, c));
    });
  }

  /// Theta[i,c,f] = sum_k E[i,k] * W[k,c,f]; E is N x d', W is d' x C x F.
  Var embed_pool_contract(Var e, Var w) {
    const Tensor& ev = value(e);
    const Tensor& wv = value(w);
    require_matrix(ev, "embed_pool_contract");
    if (wv.rank() != 3)
      throw ShapeError("embed_pool_contract: pool must be rank 3, got " + wv.shape_str());
    if (ev.extent(1) != wv.extent(0))
      throw ShapeError("embed_pool_contract: embedding width vs pool depth disagree: " +
                       ev.shape_str() + " vs " + wv.shape_str());
    const std::size_t n = ev.extent(0), d = wv.extent(0), c = wv.extent(1), f = wv.extent(2);
    Tensor out({n, c, f});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < d; ++k) {
        const double eik = ev(i, k);
        if (eik == 0.0) continue;
        for (std::size_t cc = 0; cc < c; ++cc)
          for (std::size_t ff = 0; ff < f; ++ff) out(i, cc, ff) += eik * wv(k, cc, ff);
      }
    return push(std::move(out), e, w, [](GradTape& t, Node& n_) {
      const Tensor& e_ = t.nodes_[n_.in[0]].value;
      const Tensor& w_ = t.nodes_[n_.in[1]].value;
      const std::size_t n = e_.extent(0), d = w_.extent(0), c = w_.extent(1), f = w_.extent(2);
      Tensor ge({n, d});
      Tensor gw({d, c, f});
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < d; ++k) {
          double acc = 0.0;
          for (std::size_t cc = 0; cc < c; ++cc)
            for (std::size_t ff = 0; ff < f; ++ff) {
              const double adj = n_.adjoint(i, cc, ff);
              acc += adj * w_(k, cc, ff);
              gw(k, cc, ff) += e_(i, k) * adj;
            }
          ge(i, k) = acc;
        }
      t.accumulate(n_.in[0], std::move(ge));
      t.accumulate(n_.in[1], std::move(gw));
    });
  }

  /// Z[i,f] = sum_c H[i,c] * Theta[i,c,f]; each row of H is mapped through its
  /// own parameter slice.
  Var per_node_apply(Var h, Var theta) {
    const Tensor& hv = value(h);
    const Tensor& tv = value(theta);
    require_matrix(hv, "per_node_apply");
    if (tv.rank() != 3)
      throw ShapeError("per_node_apply: theta must be rank 3, got " + tv.shape_str());
    if (hv.extent(0) != tv.extent(0) || hv.extent(1) != tv.extent(1))
      throw ShapeError("per_node_apply: feature shapes disagree: " + hv.shape_str() + " vs " +
                       tv.shape_str());
    const std::size_t n = hv.extent(0), c = hv.extent(1), f = tv.extent(2);
    Tensor out({n, f});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t cc = 0; cc < c; ++cc) {
        const double hic = hv(i, cc);
        if (hic == 0.0) continue;
        for (std::size_t ff = 0; ff < f; ++ff) out(i, ff) += hic * tv(i, cc, ff);
      }
    return push(std::move(out), h, theta, [](GradTape& t, Node& n_) {
      const Tensor& h_ = t.nodes_[n_.in[0]].value;
      const Tensor& th = t.nodes_[n_.in[1]].value;
      const std::size_t n = h_.extent(0), c = h_.extent(1), f = th.extent(2);
      Tensor gh({n, c});
      Tensor gt({n, c, f});
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t cc = 0; cc < c; ++cc) {
          double acc = 0.0;
          for (std::size_t ff = 0; ff < f; ++ff) {
            const double adj = n_.adjoint(i, ff);
            acc += adj * th(i, cc, ff);
            gt(i, cc, ff) = h_(i, cc) * adj;
          }
          gh(i, cc) = acc;
        }
      t.accumulate(n_.in[0], std::move(gh));
      t.accumulate(n_.in[1], std::move(gt));
    });
  }

  /// Scalar mean of |a - b| over all entries. Subgradient 0 at exact ties.
  Var mean_abs_error(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (!av.same_shape(bv))
      throw ShapeError("mean_abs_error: shapes disagree: " + av.shape_str() + " vs " +
                       bv.shape_str());
    double s = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) s += std::abs(av[i] - bv[i]);
    s /= static_cast<double>(av.size());
    return push(Tensor::scalar(s), a, b, [](GradTape& t, Node& n) {
      const Tensor& x = t.nodes_[n.in[0]].value;
      const Tensor& y = t.nodes_[n.in[1]].value;
      const double g = n.adjoint[0] / static_cast<double>(x.size());
      Tensor gx = Tensor::zeros_like(x);
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        gx[i] = d > 0.0 ? g : (d < 0.0 ? -g : 0.0);
      }
      t.accumulate(n.in[1], num::scale(gx, -1.0));
      t.accumulate(n.in[0], std::move(gx));
    });
  }

  /// Scalar sum of squared entries.
  Var sum_squares(Var a) {
    return push(Tensor::scalar(num::sum_squares(value(a))), a, Var{}, [](GradTape& t, Node& n) {
      const Tensor& x = t.nodes_[n.in[0]].value;
      Tensor g = num::scale(x, 2.0 * n.adjoint[0]);
      t.accumulate(n.in[0], std::move(g));
    });
  }

  /// Scalar sum of all entries.
  Var sum(Var a) {
    return push(Tensor::scalar(num::sum(value(a))), a, Var{}, [](GradTape& t, Node& n) {
      const Tensor& x = t.nodes_[n.in[0]].value;
      Tensor g(x.shape());
      for (double& v : g.data()) v = n.adjoint[0];
      t.accumulate(n.in[0], std::move(g));
    });
  }

  /// Reverse accumulation from a scalar loss. Adjoints of values that do not
  /// feed the loss stay exactly zero.
  void backward(Var loss) {
    Node& ln = nodes_[check(loss)];
    if (!ln.value.is_scalar())
      throw ContractError("backward: loss must be scalar, got shape " + ln.value.shape_str());
    for (Node& n : nodes_) {
      n.adjoint = Tensor::zeros_like(n.value);
      n.touched = false;
    }
    ln.adjoint[0] = 1.0;
    ln.touched = true;
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.touched || !n.pull) continue;
      n.pull(*this, n);
    }
  }

 private:
  struct Node {
    Tensor value;
    Tensor adjoint;
    std::array<int, 2> in{-1, -1};
    std::function<void(GradTape&, Node&)> pull;
    bool touched = false;
  };

  int check(Var v) const {
    if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
      throw ContractError("tape: invalid variable handle");
    return v.id;
  }

  template <typename Fn>
  Var push(Tensor out, Var a, Var b, Fn fn) {
    check(a);
    if (b.valid()) check(b);
    nodes_.push_back(Node{std::move(out), Tensor{}, {a.id, b.id}, std::move(fn), false});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  void accumulate(int id, Tensor g) {
    Node& n = nodes_[id];
    if (!n.touched) {
      n.adjoint = std::move(g);
      n.touched = true;
    } else {
      for (std::size_t i = 0; i < g.size(); ++i) n.adjoint[i] += g[i];
    }
  }

  std::vector<Node> nodes_;
};

using Var = GradTape::Var;

}  // namespace fedldr::num
