#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pae/errors.hpp"
#include "pae/rng.hpp"

namespace pae {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) {
    if (d <= 0) throw ShapeError("non-positive dimension in shape");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

// Dense row-major double tensor. Data and grad buffers are shared_ptrs so a
// Graph leaf can alias a parameter's storage without copying; once a graph
// has consumed a tensor its data must be treated as immutable.
struct Tensor {
  Shape shape;
  std::shared_ptr<std::vector<double>> data;
  bool requires_grad = false;
  std::shared_ptr<std::vector<double>> grad;  // same length as data when set

  Tensor() = default;
  Tensor(Shape s, std::shared_ptr<std::vector<double>> d, bool rg = false)
      : shape(std::move(s)), data(std::move(d)), requires_grad(rg) {
    if (shape_numel(shape) != data->size())
      throw ShapeError("tensor data length does not match shape " + shape_str(shape));
  }

  static Tensor zeros(Shape s, bool rg = false) {
    auto n = shape_numel(s);
    return Tensor(std::move(s), std::make_shared<std::vector<double>>(n, 0.0), rg);
  }
  static Tensor full(Shape s, double v, bool rg = false) {
    auto n = shape_numel(s);
    return Tensor(std::move(s), std::make_shared<std::vector<double>>(n, v), rg);
  }
  static Tensor from(Shape s, std::vector<double> v, bool rg = false) {
    return Tensor(std::move(s), std::make_shared<std::vector<double>>(std::move(v)), rg);
  }
  static Tensor randn(Shape s, Rng& rng, double std, bool rg = false) {
    auto n = shape_numel(s);
    auto buf = std::make_shared<std::vector<double>>(n);
    for (auto& x : *buf) x = rng.trunc_normal(std);
    return Tensor(std::move(s), std::move(buf), rg);
  }

  std::size_t size() const { return data ? data->size() : 0; }
  int rows() const { return shape.empty() ? 1 : shape[0]; }
  int cols() const { return shape.size() < 2 ? 1 : shape[1]; }
  double& at(std::size_t i) { return (*data)[i]; }
  double at(std::size_t i) const { return (*data)[i]; }

  void ensure_grad() {
    if (!grad) grad = std::make_shared<std::vector<double>>(size(), 0.0);
  }
  void zero_grad() {
    if (grad) std::fill(grad->begin(), grad->end(), 0.0);
  }
  bool finite() const {
    for (double v : *data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline double gelu_scalar(double x) {
  return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
}
inline double gelu_grad_scalar(double x) {
  static const double inv_sqrt2pi = 0.3989422804014327;
  return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) + x * inv_sqrt2pi * std::exp(-0.5 * x * x);
}

// Append-only computation tape. Forward values are computed eagerly at node
// construction; backward() replays the tape in reverse. Leaf nodes created
// from a requires_grad tensor share that tensor's grad buffer, so gradients
// accumulate directly into the owning parameter.
class Graph {
 public:
  using NodeId = int;

  NodeId leaf(const Tensor& t) {
    Tensor copy = t;
    if (copy.requires_grad) {
      const_cast<Tensor&>(t).ensure_grad();
      copy.grad = t.grad;
    }
    return push(std::move(copy), {}, nullptr, t.requires_grad);
  }

  // Leaf whose gradient stays inside the graph (does not touch t.grad).
  NodeId leaf_detached(const Tensor& t) {
    Tensor copy = t;
    copy.grad = nullptr;
    return push(std::move(copy), {}, nullptr, t.requires_grad);
  }

  const Tensor& value(NodeId id) const { return nodes_[id].t; }
  const std::vector<double>& val(NodeId id) const { return *nodes_[id].t.data; }
  const std::vector<double>& grad(NodeId id) const {
    if (!nodes_[id].t.grad) throw ContractError("node has no gradient buffer");
    return *nodes_[id].t.grad;
  }
  std::size_t num_nodes() const { return nodes_.size(); }

  // ---- ops ----

  NodeId matmul(NodeId a, NodeId b) {
    const Tensor& A = nodes_[a].t;
    const Tensor& B = nodes_[b].t;
    if (A.shape.size() != 2 || B.shape.size() != 2 || A.shape[1] != B.shape[0])
      throw ShapeError("matmul shape mismatch: " + shape_str(A.shape) + " * " + shape_str(B.shape));
    int m = A.shape[0], k = A.shape[1], n = B.shape[1];
    Tensor out = Tensor::zeros({m, n});
    const double* pa = A.data->data();
    const double* pb = B.data->data();
    double* pc = out.data->data();
    for (int i = 0; i < m; ++i)
      for (int p = 0; p < k; ++p) {
        double av = pa[i * k + p];
        if (av == 0.0) continue;
        const double* brow = pb + p * n;
        double* crow = pc + i * n;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    return push(std::move(out), {a, b}, [m, k, n](Graph& g, Node& node) {
      const double* gout = node.t.grad->data();
      Node& na = g.nodes_[node.in[0]];
      Node& nb = g.nodes_[node.in[1]];
      if (na.needs_grad) {
        double* ga = na.t.grad->data();
        const double* pb2 = nb.t.data->data();
        for (int i = 0; i < m; ++i)
          for (int p = 0; p < k; ++p) {
            const double* grow = gout + i * n;
            const double* brow = pb2 + p * n;
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
            ga[i * k + p] += acc;
          }
      }
      if (nb.needs_grad) {
        double* gb = nb.t.grad->data();
        const double* pa2 = na.t.data->data();
        for (int i = 0; i < m; ++i)
          for (int p = 0; p < k; ++p) {
            double av = pa2[i * k + p];
            if (av == 0.0) continue;
            const double* grow = gout + i * n;
            double* gbrow = gb + p * n;
            for (int j = 0; j < n; ++j) gbrow[j] += av * grow[j];
          }
      }
    });
  }

  NodeId transpose(NodeId a) {
    const Tensor& A = nodes_[a].t;
    if (A.shape.size() != 2) throw ShapeError("transpose expects rank-2 tensor");
    int m = A.shape[0], n = A.shape[1];
    Tensor out = Tensor::zeros({n, m});
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) (*out.data)[j * m + i] = (*A.data)[i * n + j];
    return push(std::move(out), {a}, [m, n](Graph& g, Node& node) {
      Node& na = g.nodes_[node.in[0]];
      if (!na.needs_grad) return;
      const double* gout = node.t.grad->data();
      double* ga = na.t.grad->data();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) ga[i * n + j] += gout[j * m + i];
    });
  }

  NodeId add(NodeId a, NodeId b) { return binary(a, b, /*mul=*/false); }
  NodeId mul(NodeId a, NodeId b) { return binary(a, b, /*mul=*/true); }

  NodeId sub(NodeId a, NodeId b) { return add(a, scale(b, -1.0)); }

  NodeId scale(NodeId a, double c) {
    const Tensor& A = nodes_[a].t;
    Tensor out = Tensor::zeros(A.shape);
    for (std::size_t i = 0; i < A.size(); ++i) (*out.data)[i] = c * (*A.data)[i];
    return push(std::move(out), {a}, [c](Graph& g, Node& node) {
      Node& na = g.nodes_[node.in[0]];
      if (!na.needs_grad) return;
      const auto& gout = *node.t.grad;
      auto& ga = *na.t.grad;
      for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += c * gout[i];
    });
  }

  // Broadcast-add a [1 x n] (or [n]) vector to every row of a [m x n] matrix.
  NodeId add_rowvec(NodeId a, NodeId v) {
    const Tensor& A = nodes_[a].t;
    const Tensor& V = nodes_[v].t;
    int m = A.rows(), n = A.cols();
    if (static_cast<int>(V.size()) != n)
      throw ShapeError("add_rowvec: vector length " + std::to_string(V.size()) +
                       " vs matrix cols " + std::to_string(n));
    Tensor out = Tensor::zeros(A.shape);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        (*out.data)[i * n + j] = (*A.data)[i * n + j] + (*V.data)[j];
    return push(std::move(out), {a, v}, [m, n](Graph& g, Node& node) {
      const auto& gout = *node.t.grad;
      Node& na = g.nodes_[node.in[0]];
      Node& nv = g.nodes_[node.in[1]];
      if (na.needs_grad) {
        auto& ga = *na.t.grad;
        for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i];
      }
      if (nv.needs_grad) {
        auto& gv = *nv.t.grad;
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) gv[j] += gout[i * n + j];
      }
    });
  }

  NodeId sigmoid(NodeId a) {
    return unary(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                 [](double x, double y) { (void)x; return y * (1.0 - y); });
  }
  NodeId tanh_(NodeId a) {
    return unary(a, [](double x) { return std::tanh(x); },
                 [](double x, double y) { (void)x; return 1.0 - y * y; });
  }
  NodeId gelu(NodeId a) {
    return unary(a, gelu_scalar, [](double x, double y) { (void)y; return gelu_grad_scalar(x); });
  }

  NodeId softmax_rows(NodeId a) {
    const Tensor& A = nodes_[a].t;
    int m = A.rows(), n = A.cols();
    Tensor out = Tensor::zeros(A.shape);
    for (int i = 0; i < m; ++i) {
      const double* row = A.data->data() + static_cast<std::size_t>(i) * n;
      double* orow = out.data->data() + static_cast<std::size_t>(i) * n;
      double mx = row[0];
      for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
      double sum = 0.0;
      for (int j = 0; j < n; ++j) {
        orow[j] = std::exp(row[j] - mx);
        sum += orow[j];
      }
      for (int j = 0; j < n; ++j) orow[j] /= sum;
    }
    return push(std::move(out), {a}, [m, n](Graph& g, Node& node) {
      Node& na = g.nodes_[node.in[0]];
      if (!na.needs_grad) return;
      const double* y = node.t.data->data();
      const double* gout = node.t.grad->data();
      double* ga = na.t.grad->data();
      for (int i = 0; i < m; ++i) {
        const double* yr = y + static_cast<std::size_t>(i) * n;
        const double* gr = gout + static_cast<std::size_t>(i) * n;
        double dot = 0.0;
        for (int j = 0; j < n; ++j) dot += gr[j] * yr[j];
        double* gar = ga + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) gar[j] += yr[j] * (gr[j] - dot);
      }
    });
  }

  NodeId layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps = 1e-5) {
    const Tensor& X = nodes_[x].t;
    const Tensor& G = nodes_[gamma].t;
    const Tensor& B = nodes_[beta].t;
    int m = X.rows(), n = X.cols();
    if (static_cast<int>(G.size()) != n || static_cast<int>(B.size()) != n)
      throw ShapeError("layer_norm affine length mismatch");
    Tensor out = Tensor::zeros(X.shape);
    auto xhat = std::make_shared<std::vector<double>>(X.size());
    auto inv_std = std::make_shared<std::vector<double>>(m);
    for (int i = 0; i < m; ++i) {
      const double* row = X.data->data() + static_cast<std::size_t>(i) * n;
      double mean = 0.0;
      for (int j = 0; j < n; ++j) mean += row[j];
      mean /= n;
      double var = 0.0;
      for (int j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
      var /= n;
      double is = 1.0 / std::sqrt(var + eps);
      (*inv_std)[i] = is;
      for (int j = 0; j < n; ++j) {
        double xh = (row[j] - mean) * is;
        (*xhat)[static_cast<std::size_t>(i) * n + j] = xh;
        (*out.data)[static_cast<std::size_t>(i) * n + j] = xh * (*G.data)[j] + (*B.data)[j];
      }
    }
    return push(std::move(out), {x, gamma, beta},
                [m, n, xhat, inv_std](Graph& g, Node& node) {
      const double* gout = node.t.grad->data();
      Node& nx = g.nodes_[node.in[0]];
      Node& ng = g.nodes_[node.in[1]];
      Node& nb = g.nodes_[node.in[2]];
      const double* gam = ng.t.data->data();
      for (int i = 0; i < m; ++i) {
        const double* gr = gout + static_cast<std::size_t>(i) * n;
        const double* xh = xhat->data() + static_cast<std::size_t>(i) * n;
        if (ng.needs_grad) {
          double* gg = ng.t.grad->data();
          for (int j = 0; j < n; ++j) gg[j] += gr[j] * xh[j];
        }
        if (nb.needs_grad) {
          double* gb = nb.t.grad->data();
          for (int j = 0; j < n; ++j) gb[j] += gr[j];
        }
        if (nx.needs_grad) {
          double m1 = 0.0, m2 = 0.0;
          for (int j = 0; j < n; ++j) {
            double gj = gr[j] * gam[j];
            m1 += gj;
            m2 += gj * xh[j];
          }
          m1 /= n;
          m2 /= n;
          double is = (*inv_std)[i];
          double* gx = nx.t.grad->data() + static_cast<std::size_t>(i) * n;
          for (int j = 0; j < n; ++j)
            gx[j] += is * (gr[j] * gam[j] - m1 - xh[j] * m2);
        }
      }
    });
  }

  NodeId dropout(NodeId a, double rate, Rng& rng, bool training) {
    if (rate < 0.0 || rate >= 1.0) throw ParamError("dropout rate must be in [0,1)");
    const Tensor& A = nodes_[a].t;
    if (!training || rate == 0.0) {
      // identity pass-through, bit-exact
      Tensor out = Tensor::from(A.shape, *A.data);
      return push(std::move(out), {a}, [](Graph& g, Node& node) {
        Node& na = g.nodes_[node.in[0]];
        if (!na.needs_grad) return;
        const auto& gout = *node.t.grad;
        auto& ga = *na.t.grad;
        for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i];
      });
    }
    double keep = 1.0 - rate;
    auto mask = std::make_shared<std::vector<double>>(A.size());
    Tensor out = Tensor::zeros(A.shape);
    for (std::size_t i = 0; i < A.size(); ++i) {
      double m = (rng.uniform() < rate) ? 0.0 : 1.0 / keep;
      (*mask)[i] = m;
      (*out.data)[i] = (*A.data)[i] * m;
    }
    return push(std::move(out), {a}, [mask](Graph& g, Node& node) {
      Node& na = g.nodes_[node.in[0]];
      if (!na.needs_grad) return;
      const auto& gout = *node.t.grad;
      auto& ga = *na.t.grad;
      for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i] * (*mask)[i];
    });
  }

  NodeId reshape(NodeId a, Shape s) {
    const Tensor& A = nodes_[a].t;
    if (shape_numel(s) != A.size())
      throw ShapeError("reshape to " + shape_str(s) + " from " + shape_str(A.shape));
    Tensor out(std::move(s), A.data);  // shares data
    return push(std::move(out), {a}, [](Graph& g, Node& node) {
      Node& na = g.nodes_[node.in[0]];
      if (!na.needs_grad) return;
      const auto& gout = *node.t.grad;
      auto& ga = *na.t.grad;
      for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i];
    });
  }

  NodeId concat_rows(NodeId a, NodeId b) {
    const Tensor& A = nodes_[a].t;
    const Tensor& B = nodes_[b].t;
    if (A.cols() != B.cols()) throw ShapeError("concat_rows column mismatch");
    int n = A.cols();
    int ma = A.rows(), mb = B.rows();
    Tensor out = Tensor::zeros({ma + mb, n});
    std::copy(A.data->begin(), A.data->end(), out.data->begin());
    std::copy(B.data->begin(), B.data->end(), out.data->begin() + A.size());
    return push(std::move(out), {a, b}, [ma, mb, n](Graph& g, Node& node) {
      (void)mb;
      const auto& gout = *node.t.grad;
      Node& na = g.nodes_[node.in[0]];
      Node& nb = g.nodes_[node.in[1]];
      std::size_t asz = static_cast<std::size_t>(ma) * n;
      if (na.needs_grad) {
        auto& ga = *na.t.grad;
        for (std::size_t i = 0; i < asz; ++i) ga[i] += gout[i];
      }
      if (nb.needs_grad) {
        auto& gb = *nb.t.grad;
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gout[asz + i];
      }
    });
  }

  NodeId slice_rows(NodeId a, int r0, int r1) {
    const Tensor& A = nodes_[a].t;
    int m = A.rows(), n = A.cols();
    if (r0 < 0 || r1 > m || r0 >= r1) throw ShapeError("slice_rows range invalid");
    Tensor out = Tensor::zeros({r1 - r0, n});
    std::copy(A.data->begin() + static_cast<std::size_t>(r0) * n,
              A.data->begin() + static_cast<std::size_t>(r1) * n, out.data->begin());
    return push(std::move(out), {a}, [r0, n](Graph& g, Node& node) {
      Node& na = g.nodes_[node.in[0]];
      if (!na.needs_grad) return;
      const auto& gout = *node.t.grad;
      auto& ga = *na.t.grad;
      std::size_t off = static_cast<std::size_t>(r0) * n;
      for (std::size_t i = 0; i < gout.size(); ++i) ga[off + i] += gout[i];
    });
  }

  NodeId slice_cols(NodeId a, int c0, int c1) {
    const Tensor& A = nodes_[a].t;
    int m = A.rows(), n = A.cols();
    if (c0 < 0 || c1 > n || c0 >= c1) throw ShapeError("slice_cols range invalid");
    int w = c1 - c0;
    Tensor out = Tensor::zeros({m, w});
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j)
        (*out.data)[static_cast<std::size_t>(i) * w + j] =
            (*A.data)[static_cast<std::size_t>(i) * n + c0 + j];
    return push(std::move(out), {a}, [m, n, c0, w](Graph& g, Node& node) {
      Node& na = g.nodes_[node.in[0]];
      if (!na.needs_grad) return;
      const auto& gout = *node.t.grad;
      auto& ga = *na.t.grad;
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < w; ++j)
          ga[static_cast<std::size_t>(i) * n + c0 + j] +=
              gout[static_cast<std::size_t>(i) * w + j];
    });
  }

  NodeId concat_cols(NodeId a, NodeId b) {
    const Tensor& A = nodes_[a].t;
    const Tensor& B = nodes_[b].t;
    if (A.rows() != B.rows()) throw ShapeError("concat_cols row mismatch");
    int m = A.rows(), na_ = A.cols(), nb_ = B.cols();
    Tensor out = Tensor::zeros({m, na_ + nb_});
    for (int i = 0; i < m; ++i) {
      std::copy(A.data->begin() + static_cast<std::size_t>(i) * na_,
                A.data->begin() + static_cast<std::size_t>(i + 1) * na_,
                out.data->begin() + static_cast<std::size_t>(i) * (na_ + nb_));
      std::copy(B.data->begin() + static_cast<std::size_t>(i) * nb_,
                B.data->begin() + static_cast<std::size_t>(i + 1) * nb_,
                out.data->begin() + static_cast<std::size_t>(i) * (na_ + nb_) + na_);
    }
    return push(std::move(out), {a, b}, [m, na_, nb_](Graph& g, Node& node) {
      const auto& gout = *node.t.grad;
      Node& na = g.nodes_[node.in[0]];
      Node& nb = g.nodes_[node.in[1]];
      int w = na_ + nb_;
      if (na.needs_grad) {
        auto& ga = *na.t.grad;
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < na_; ++j)
            ga[static_cast<std::size_t>(i) * na_ + j] += gout[static_cast<std::size_t>(i) * w + j];
      }
      if (nb.needs_grad) {
        auto& gb = *nb.t.grad;
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < nb_; ++j)
            gb[static_cast<std::size_t>(i) * nb_ + j] +=
                gout[static_cast<std::size_t>(i) * w + na_ + j];
      }
    });
  }

  NodeId sum_all(NodeId a) {
    const Tensor& A = nodes_[a].t;
    double s = std::accumulate(A.data->begin(), A.data->end(), 0.0);
    Tensor out = Tensor::from({1}, {s});
    return push(std::move(out), {a}, [](Graph& g, Node& node) {
      Node& na = g.nodes_[node.in[0]];
      if (!na.needs_grad) return;
      double gv = (*node.t.grad)[0];
      auto& ga = *na.t.grad;
      for (auto& x : ga) x += gv;
    });
  }

  NodeId mean_all(NodeId a) {
    double inv = 1.0 / static_cast<double>(nodes_[a].t.size());
    return scale(sum_all(a), inv);
  }

  // Mean squared error over all elements of two same-shape tensors.
  NodeId mse(NodeId a, NodeId b) {
    NodeId d = sub(a, b);
    return mean_all(mul(d, d));
  }

  // Softmax cross-entropy summed over the batch. logits [B x C], onehot [B x C].
  NodeId softmax_cross_entropy(NodeId logits, NodeId onehot) {
    const Tensor& L = nodes_[logits].t;
    const Tensor& Y = nodes_[onehot].t;
    if (L.shape != Y.shape) throw ShapeError("cross_entropy shapes differ");
    int m = L.rows(), n = L.cols();
    auto probs = std::make_shared<std::vector<double>>(L.size());
    double loss = 0.0;
    for (int i = 0; i < m; ++i) {
      const double* row = L.data->data() + static_cast<std::size_t>(i) * n;
      const double* yr = Y.data->data() + static_cast<std::size_t>(i) * n;
      double mx = row[0];
      for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
      double sum = 0.0;
      for (int j = 0; j < n; ++j) sum += std::exp(row[j] - mx);
      double lse = mx + std::log(sum);
      for (int j = 0; j < n; ++j) {
        (*probs)[static_cast<std::size_t>(i) * n + j] = std::exp(row[j] - lse);
        loss += yr[j] * (lse - row[j]);
      }
    }
    Tensor out = Tensor::from({1}, {loss});
    return push(std::move(out), {logits, onehot}, [m, n, probs](Graph& g, Node& node) {
      Node& nl = g.nodes_[node.in[0]];
      Node& ny = g.nodes_[node.in[1]];
      if (!nl.needs_grad) return;
      double gv = (*node.t.grad)[0];
      auto& gl = *nl.t.grad;
      const auto& y = *ny.t.data;
      for (std::size_t i = 0; i < gl.size(); ++i) gl[i] += gv * ((*probs)[i] - y[i]);
    });
  }

  // Reverse pass from a scalar loss. Internal grads are reset each call;
  // leaf grads accumulate across calls until the owner clears them.
  void backward(NodeId loss, double seed = 1.0) {
    if (loss < 0 || loss >= static_cast<int>(nodes_.size()))
      throw ContractError("backward: unknown node");
    if (nodes_[loss].t.size() != 1)
      throw ContractError("backward: loss must be scalar, got shape " +
                          shape_str(nodes_[loss].t.shape));
    for (auto& n : nodes_) {
      if (!n.needs_grad) continue;
      if (n.back) {  // internal node: reset
        n.t.ensure_grad();
        n.t.zero_grad();
      } else {
        n.t.ensure_grad();  // leaf: keep accumulated grads
      }
    }
    nodes_[loss].t.ensure_grad();
    (*nodes_[loss].t.grad)[0] += 0.0;
    if (nodes_[loss].back) (*nodes_[loss].t.grad)[0] = seed;
    else (*nodes_[loss].t.grad)[0] += seed;
    for (int id = loss; id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.needs_grad || !n.back || !n.t.grad) continue;
      n.back(*this, n);
    }
  }

 private:
  struct Node {
    Tensor t;
    std::vector<NodeId> in;
    std::function<void(Graph&, Node&)> back;  // null for leaves
    bool needs_grad = false;
  };

  NodeId push(Tensor t, std::vector<NodeId> in,
              std::function<void(Graph&, Node&)> back, bool leaf_rg = false) {
    Node n;
    n.needs_grad = leaf_rg;
    for (NodeId i : in)
      if (nodes_[i].needs_grad) n.needs_grad = true;
    n.t = std::move(t);
    if (n.needs_grad && back) n.t.grad = std::make_shared<std::vector<double>>(n.t.size(), 0.0);
    n.in = std::move(in);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  NodeId binary(NodeId a, NodeId b, bool is_mul) {
    const Tensor& A = nodes_[a].t;
    const Tensor& B = nodes_[b].t;
    if (A.shape != B.shape)
      throw ShapeError("elementwise shape mismatch: " + shape_str(A.shape) + " vs " +
                       shape_str(B.shape));
    Tensor out = Tensor::zeros(A.shape);
    for (std::size_t i = 0; i < A.size(); ++i)
      (*out.data)[i] = is_mul ? (*A.data)[i] * (*B.data)[i] : (*A.data)[i] + (*B.data)[i];
    return push(std::move(out), {a, b}, [is_mul](Graph& g, Node& node) {
      const auto& gout = *node.t.grad;
      Node& na = g.nodes_[node.in[0]];
      Node& nb = g.nodes_[node.in[1]];
      if (na.needs_grad) {
        auto& ga = *na.t.grad;
        if (is_mul) {
          const auto& bd = *nb.t.data;
          for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i] * bd[i];
        } else {
          for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i];
        }
      }
      if (nb.needs_grad) {
        auto& gb = *nb.t.grad;
        if (is_mul) {
          const auto& ad = *na.t.data;
          for (std::size_t i = 0; i < gout.size(); ++i) gb[i] += gout[i] * ad[i];
        } else {
          for (std::size_t i = 0; i < gout.size(); ++i) gb[i] += gout[i];
        }
      }
    });
  }

  template <typename F, typename DF>
  NodeId unary(NodeId a, F f, DF df) {
    const Tensor& A = nodes_[a].t;
    Tensor out = Tensor::zeros(A.shape);
    for (std::size_t i = 0; i < A.size(); ++i) (*out.data)[i] = f((*A.data)[i]);
    return push(std::move(out), {a}, [df](Graph& g, Node& node) {
      Node& na = g.nodes_[node.in[0]];
      if (!na.needs_grad) return;
      const auto& gout = *node.t.grad;
      const auto& x = *na.t.data;
      const auto& y = *node.t.data;
      auto& ga = *na.t.grad;
      for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i] * df(x[i], y[i]);
    });
  }

  std::vector<Node> nodes_;
};

}  // namespace pae
