#include "icl/graph.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace icl::numerics {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const MatRM>;
using MutMap = Eigen::Map<MatRM>;

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

void expect(bool cond, const std::string& msg) {
  if (!cond) throw DimensionError(msg);
}

// Result dims of a (possibly transposed) 2D operand.
std::int64_t rows_of(const Tensor& t, bool trans, int off = 0) {
  return t.dim(off + (trans ? 1 : 0));
}
std::int64_t cols_of(const Tensor& t, bool trans, int off = 0) {
  return t.dim(off + (trans ? 0 : 1));
}

void permute_copy(std::span<const double> src, const Shape& src_shape,
                  const std::vector<int>& axes, std::span<double> dst,
                  bool accumulate) {
  const int r = static_cast<int>(src_shape.size());
  Shape out_shape(static_cast<size_t>(r));
  for (int j = 0; j < r; ++j) out_shape[j] = src_shape[axes[j]];
  std::vector<std::int64_t> in_strides(static_cast<size_t>(r), 1);
  for (int j = r - 2; j >= 0; --j) in_strides[j] = in_strides[j + 1] * src_shape[j + 1];
  // stride of output dim j in the input flat index
  std::vector<std::int64_t> strides(static_cast<size_t>(r));
  for (int j = 0; j < r; ++j) strides[j] = in_strides[axes[j]];

  std::vector<std::int64_t> coord(static_cast<size_t>(r), 0);
  std::int64_t in_flat = 0;
  const std::int64_t n = static_cast<std::int64_t>(src.size());
  for (std::int64_t out = 0; out < n; ++out) {
    if (accumulate) {
      dst[out] += src[in_flat];
    } else {
      dst[out] = src[in_flat];
    }
    for (int j = r - 1; j >= 0; --j) {
      if (++coord[j] < out_shape[j]) {
        in_flat += strides[j];
        break;
      }
      in_flat -= strides[j] * (out_shape[j] - 1);
      coord[j] = 0;
    }
  }
}

void gemm_into(const Tensor& ta, const Tensor& tb, bool trans_a, bool trans_b,
               double* out, std::int64_t m, std::int64_t p, int off = 0,
               std::int64_t slice = 0) {
  const double* pa = ta.raw();
  const double* pb = tb.raw();
  std::int64_t ra = ta.dim(off), ca = ta.dim(off + 1);
  std::int64_t rb = tb.dim(off), cb = tb.dim(off + 1);
  if (off == 1) {
    pa += slice * ra * ca;
    pb += slice * rb * cb;
  }
  ConstMap A(pa, ra, ca);
  ConstMap B(pb, rb, cb);
  MutMap C(out, m, p);
  if (!trans_a && !trans_b) C.noalias() = A * B;
  else if (!trans_a && trans_b) C.noalias() = A * B.transpose();
  else if (trans_a && !trans_b) C.noalias() = A.transpose() * B;
  else C.noalias() = A.transpose() * B.transpose();
}

// dA += G op(B), dB += op(A) G per the forward transpose flags
void gemm_backward(const double* pa, const double* pb, const double* pg,
                   double* da, double* db, std::int64_t ra, std::int64_t ca,
                   std::int64_t rb, std::int64_t cb, std::int64_t m,
                   std::int64_t p, bool trans_a, bool trans_b) {
  ConstMap A(pa, ra, ca);
  ConstMap B(pb, rb, cb);
  ConstMap G(pg, m, p);
  MutMap dA(da, ra, ca);
  MutMap dB(db, rb, cb);
  if (!trans_a && !trans_b) {
    dA.noalias() += G * B.transpose();
    dB.noalias() += A.transpose() * G;
  } else if (!trans_a && trans_b) {
    dA.noalias() += G * B;
    dB.noalias() += G.transpose() * A;
  } else if (trans_a && !trans_b) {
    dA.noalias() += B * G.transpose();
    dB.noalias() += A * G;
  } else {
    dA.noalias() += B.transpose() * G.transpose();
    dB.noalias() += G.transpose() * A.transpose();
  }
}

}  // namespace

double gelu_scalar(double x) {
  const double u = kGeluC * (x + kGeluA * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_grad_scalar(double x) {
  const double u = kGeluC * (x + kGeluA * x * x * x);
  const double t = std::tanh(u);
  const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

const Graph::Node& Graph::node(NodeId id) const {
  if (id < 0 || static_cast<size_t>(id) >= nodes_.size()) {
    throw ContractError("invalid node id " + std::to_string(id));
  }
  return nodes_[static_cast<size_t>(id)];
}

NodeId Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Graph::input(Tensor value) {
  Node n;
  n.kind = OpKind::kLeaf;
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Graph::parameter(Tensor value) {
  Node n;
  n.kind = OpKind::kLeaf;
  n.value = std::move(value);
  n.is_param = true;
  return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b, bool trans_a, bool trans_b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  expect(ta.rank() == 2 && tb.rank() == 2, "matmul expects 2D operands");
  const auto m = rows_of(ta, trans_a), k = cols_of(ta, trans_a);
  const auto k2 = rows_of(tb, trans_b), p = cols_of(tb, trans_b);
  expect(k == k2, "matmul inner dimensions disagree: " + shape_str(ta.shape()) +
                      (trans_a ? "^T" : "") + " x " + shape_str(tb.shape()) +
                      (trans_b ? "^T" : ""));
  std::vector<double> out(static_cast<size_t>(m * p));
  gemm_into(ta, tb, trans_a, trans_b, out.data(), m, p);

  Node n;
  n.kind = OpKind::kMatmul;
  n.parents[0] = a;
  n.parents[1] = b;
  n.n_parents = 2;
  n.trans_a = trans_a;
  n.trans_b = trans_b;
  n.value = Tensor::from({m, p}, std::move(out));
  return push(std::move(n));
}

NodeId Graph::batch_matmul(NodeId a, NodeId b, bool trans_a, bool trans_b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  expect(ta.rank() == 3 && tb.rank() == 3, "batch_matmul expects 3D operands");
  expect(ta.dim(0) == tb.dim(0), "batch_matmul leading dims disagree");
  const auto N = ta.dim(0);
  const auto m = rows_of(ta, trans_a, 1), k = cols_of(ta, trans_a, 1);
  const auto k2 = rows_of(tb, trans_b, 1), p = cols_of(tb, trans_b, 1);
  expect(k == k2, "batch_matmul inner dimensions disagree");
  std::vector<double> out(static_cast<size_t>(N * m * p));
  for (std::int64_t i = 0; i < N; ++i) {
    gemm_into(ta, tb, trans_a, trans_b, out.data() + i * m * p, m, p, 1, i);
  }
  Node n;
  n.kind = OpKind::kBatchMatmul;
  n.parents[0] = a;
  n.parents[1] = b;
  n.n_parents = 2;
  n.trans_a = trans_a;
  n.trans_b = trans_b;
  n.value = Tensor::from({N, m, p}, std::move(out));
  return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  std::vector<double> out(ta.data().begin(), ta.data().end());
  const double* pb = tb.raw();
  if (ta.same_shape(tb)) {
    for (std::int64_t i = 0; i < ta.size(); ++i) out[i] += pb[i];
  } else if (tb.rank() == 1 && ta.rank() >= 1 &&
             ta.dim(ta.rank() - 1) == tb.dim(0)) {
    const auto c = tb.dim(0);
    const auto rows = ta.size() / c;
    for (std::int64_t r = 0; r < rows; ++r) {
      double* po = out.data() + r * c;
      for (std::int64_t j = 0; j < c; ++j) po[j] += pb[j];
    }
  } else {
    throw DimensionError("add shapes incompatible: " + shape_str(ta.shape()) +
                         " vs " + shape_str(tb.shape()));
  }
  Node n;
  n.kind = OpKind::kAdd;
  n.parents[0] = a;
  n.parents[1] = b;
  n.n_parents = 2;
  n.value = Tensor::from(ta.shape(), std::move(out));
  return push(std::move(n));
}

NodeId Graph::add_tiled(NodeId a, NodeId row_block) {
  const Tensor& ta = value(a);
  const Tensor& tbl = value(row_block);
  expect(ta.rank() == 2 && tbl.rank() == 2, "add_tiled expects 2D operands");
  expect(ta.dim(1) == tbl.dim(1), "add_tiled column counts disagree");
  expect(tbl.dim(0) > 0 && ta.dim(0) % tbl.dim(0) == 0,
         "add_tiled row count must be a multiple of the block rows");
  const auto block = tbl.size();
  const auto tiles = ta.size() / block;
  std::vector<double> out(ta.data().begin(), ta.data().end());
  const double* pb = tbl.raw();
  for (std::int64_t t = 0; t < tiles; ++t) {
    double* po = out.data() + t * block;
    for (std::int64_t j = 0; j < block; ++j) po[j] += pb[j];
  }
  Node n;
  n.kind = OpKind::kAddTiled;
  n.parents[0] = a;
  n.parents[1] = row_block;
  n.n_parents = 2;
  n.value = Tensor::from(ta.shape(), std::move(out));
  return push(std::move(n));
}

NodeId Graph::sub(NodeId a, NodeId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  expect(ta.same_shape(tb), "sub shapes disagree: " + shape_str(ta.shape()) +
                                " vs " + shape_str(tb.shape()));
  std::vector<double> out(static_cast<size_t>(ta.size()));
  const double* pa = ta.raw();
  const double* pb = tb.raw();
  for (std::int64_t i = 0; i < ta.size(); ++i) out[i] = pa[i] - pb[i];
  Node n;
  n.kind = OpKind::kSub;
  n.parents[0] = a;
  n.parents[1] = b;
  n.n_parents = 2;
  n.value = Tensor::from(ta.shape(), std::move(out));
  return push(std::move(n));
}

NodeId Graph::mul(NodeId a, NodeId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  expect(ta.same_shape(tb), "mul shapes disagree: " + shape_str(ta.shape()) +
                                " vs " + shape_str(tb.shape()));
  std::vector<double> out(static_cast<size_t>(ta.size()));
  const double* pa = ta.raw();
  const double* pb = tb.raw();
  for (std::int64_t i = 0; i < ta.size(); ++i) out[i] = pa[i] * pb[i];
  Node n;
  n.kind = OpKind::kMul;
  n.parents[0] = a;
  n.parents[1] = b;
  n.n_parents = 2;
  n.value = Tensor::from(ta.shape(), std::move(out));
  return push(std::move(n));
}

NodeId Graph::scale(NodeId a, double alpha) {
  const Tensor& ta = value(a);
  std::vector<double> out(static_cast<size_t>(ta.size()));
  const double* pa = ta.raw();
  for (std::int64_t i = 0; i < ta.size(); ++i) out[i] = alpha * pa[i];
  Node n;
  n.kind = OpKind::kScale;
  n.parents[0] = a;
  n.n_parents = 1;
  n.alpha = alpha;
  n.value = Tensor::from(ta.shape(), std::move(out));
  return push(std::move(n));
}

NodeId Graph::softmax(NodeId a) {
  const Tensor& ta = value(a);
  expect(ta.rank() >= 1, "softmax expects rank >= 1");
  const auto c = ta.dim(ta.rank() - 1);
  const auto rows = ta.size() / c;
  std::vector<double> out(static_cast<size_t>(ta.size()));
  for (std::int64_t r = 0; r < rows; ++r) {
    Eigen::Map<const Eigen::ArrayXd> X(ta.raw() + r * c, c);
    Eigen::Map<Eigen::ArrayXd> Y(out.data() + r * c, c);
    Y = (X - X.maxCoeff()).exp();
    Y *= 1.0 / Y.sum();
  }
  Node n;
  n.kind = OpKind::kSoftmax;
  n.parents[0] = a;
  n.n_parents = 1;
  n.value = Tensor::from(ta.shape(), std::move(out));
  return push(std::move(n));
}

NodeId Graph::causal_softmax(NodeId scores) {
  const Tensor& ta = value(scores);
  expect(ta.rank() == 3 && ta.dim(1) == ta.dim(2),
         "causal_softmax expects (N, T, T) scores");
  const auto N = ta.dim(0), T = ta.dim(1);
  std::vector<double> out(static_cast<size_t>(ta.size()), 0.0);
  for (std::int64_t i = 0; i < N; ++i) {
    for (std::int64_t t = 0; t < T; ++t) {
      Eigen::Map<const Eigen::ArrayXd> X(ta.raw() + (i * T + t) * T, t + 1);
      Eigen::Map<Eigen::ArrayXd> Y(out.data() + (i * T + t) * T, t + 1);
      Y = (X - X.maxCoeff()).exp();
      Y *= 1.0 / Y.sum();
    }
  }
  Node n;
  n.kind = OpKind::kCausalSoftmax;
  n.parents[0] = scores;
  n.n_parents = 1;
  n.value = Tensor::from(ta.shape(), std::move(out));
  return push(std::move(n));
}

NodeId Graph::layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps) {
  const Tensor& tx = value(x);
  const Tensor& tg = value(gamma);
  const Tensor& tb = value(beta);
  expect(tx.rank() >= 1, "layer_norm expects rank >= 1");
  const auto c = tx.dim(tx.rank() - 1);
  expect(tg.rank() == 1 && tg.dim(0) == c && tb.rank() == 1 && tb.dim(0) == c,
         "layer_norm affine parameters must match trailing dim");
  const auto rows = tx.size() / c;
  std::vector<double> out(static_cast<size_t>(tx.size()));
  Eigen::Map<const Eigen::ArrayXd> G(tg.raw(), c);
  Eigen::Map<const Eigen::ArrayXd> Bta(tb.raw(), c);
  for (std::int64_t r = 0; r < rows; ++r) {
    Eigen::Map<const Eigen::ArrayXd> X(tx.raw() + r * c, c);
    Eigen::Map<Eigen::ArrayXd> Y(out.data() + r * c, c);
    const double mean = X.mean();
    const double var = (X - mean).square().mean();
    const double inv = 1.0 / std::sqrt(var + eps);
    Y = (X - mean) * inv * G + Bta;
  }
  Node n;
  n.kind = OpKind::kLayerNorm;
  n.parents[0] = x;
  n.parents[1] = gamma;
  n.parents[2] = beta;
  n.n_parents = 3;
  n.alpha = eps;
  n.value = Tensor::from(tx.shape(), std::move(out));
  return push(std::move(n));
}

NodeId Graph::gelu(NodeId x) {
  const Tensor& tx = value(x);
  const auto size = tx.size();
  std::vector<double> out(static_cast<size_t>(size));
  std::vector<double> tanhs(static_cast<size_t>(size));
  Eigen::Map<const Eigen::ArrayXd> X(tx.raw(), size);
  Eigen::Map<Eigen::ArrayXd> T(tanhs.data(), size);
  Eigen::Map<Eigen::ArrayXd> Y(out.data(), size);
  // tanh via the vectorized exp (Eigen's tanh is scalar for doubles):
  // tanh(u) = 1 - 2 / (1 + e^{2u}), stable at both tails
  T = 1.0 - 2.0 / (1.0 + (2.0 * kGeluC * (X + kGeluA * X.cube())).exp());
  Y = 0.5 * X * (1.0 + T);
  Node n;
  n.kind = OpKind::kGelu;
  n.parents[0] = x;
  n.n_parents = 1;
  n.aux = std::move(tanhs);
  n.value = Tensor::from(tx.shape(), std::move(out));
  return push(std::move(n));
}

NodeId Graph::reshape(NodeId x, Shape shape) {
  Node n;
  n.kind = OpKind::kReshape;
  n.parents[0] = x;
  n.n_parents = 1;
  n.value = value(x).reshaped(std::move(shape));
  return push(std::move(n));
}

NodeId Graph::permute(NodeId x, std::vector<int> axes) {
  const Tensor& tx = value(x);
  const int r = tx.rank();
  expect(static_cast<int>(axes.size()) == r, "permute axes rank mismatch");
  std::vector<bool> seen(static_cast<size_t>(r), false);
  for (int a : axes) {
    expect(a >= 0 && a < r && !seen[static_cast<size_t>(a)],
           "permute axes must be a permutation");
    seen[static_cast<size_t>(a)] = true;
  }
  Shape out_shape(static_cast<size_t>(r));
  for (int j = 0; j < r; ++j) out_shape[j] = tx.dim(axes[j]);
  std::vector<double> out(static_cast<size_t>(tx.size()));
  permute_copy(tx.data(), tx.shape(), axes, out, /*accumulate=*/false);
  Node n;
  n.kind = OpKind::kPermute;
  n.parents[0] = x;
  n.n_parents = 1;
  n.axes = std::move(axes);
  n.value = Tensor::from(std::move(out_shape), std::move(out));
  return push(std::move(n));
}

NodeId Graph::slice_cols(NodeId x, std::int64_t start, std::int64_t count) {
  const Tensor& tx = value(x);
  expect(tx.rank() == 2, "slice_cols expects a 2D tensor");
  expect(start >= 0 && count >= 0 && start + count <= tx.dim(1),
         "slice_cols range out of bounds");
  const auto rows = tx.dim(0), c = tx.dim(1);
  std::vector<double> out(static_cast<size_t>(rows * count));
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* src = tx.raw() + r * c + start;
    std::copy(src, src + count, out.data() + r * count);
  }
  Node n;
  n.kind = OpKind::kSliceCols;
  n.parents[0] = x;
  n.n_parents = 1;
  n.start = start;
  n.count = count;
  n.value = Tensor::from({rows, count}, std::move(out));
  return push(std::move(n));
}

NodeId Graph::slice_rows(NodeId x, std::int64_t start, std::int64_t count) {
  const Tensor& tx = value(x);
  expect(tx.rank() == 2, "slice_rows expects a 2D tensor");
  expect(start >= 0 && count >= 0 && start + count <= tx.dim(0),
         "slice_rows range out of bounds");
  const auto c = tx.dim(1);
  std::vector<double> out(tx.raw() + start * c, tx.raw() + (start + count) * c);
  Node n;
  n.kind = OpKind::kSliceRows;
  n.parents[0] = x;
  n.n_parents = 1;
  n.start = start;
  n.count = count;
  n.value = Tensor::from({count, c}, std::move(out));
  return push(std::move(n));
}

NodeId Graph::reduce_sum(NodeId x) {
  const Tensor& tx = value(x);
  double s = 0.0;
  const double* px = tx.raw();
  for (std::int64_t i = 0; i < tx.size(); ++i) s += px[i];
  Node n;
  n.kind = OpKind::kReduceSum;
  n.parents[0] = x;
  n.n_parents = 1;
  n.value = Tensor::from({}, {s});
  return push(std::move(n));
}

NodeId Graph::reduce_mean(NodeId x) {
  const Tensor& tx = value(x);
  expect(tx.size() > 0, "reduce_mean of an empty tensor");
  double s = 0.0;
  const double* px = tx.raw();
  for (std::int64_t i = 0; i < tx.size(); ++i) s += px[i];
  Node n;
  n.kind = OpKind::kReduceMean;
  n.parents[0] = x;
  n.n_parents = 1;
  n.value = Tensor::from({}, {s / static_cast<double>(tx.size())});
  return push(std::move(n));
}

std::unordered_map<NodeId, Tensor> Graph::backward(NodeId loss) const {
  const Node& top = node(loss);
  if (top.value.size() != 1) {
    throw ContractError("backward requires a scalar loss node, got shape " +
                        shape_str(top.value.shape()));
  }
  std::vector<std::vector<double>> grad(nodes_.size());
  std::vector<char> has_grad(nodes_.size(), 0);
  auto ensure = [&](NodeId i) -> std::vector<double>& {
    auto idx = static_cast<size_t>(i);
    if (!has_grad[idx]) {
      grad[idx].assign(static_cast<size_t>(nodes_[idx].value.size()), 0.0);
      has_grad[idx] = 1;
    }
    return grad[idx];
  };
  ensure(loss)[0] = 1.0;

  for (NodeId i = loss; i >= 0; --i) {
    const auto idx = static_cast<size_t>(i);
    if (!has_grad[idx]) continue;
    const Node& n = nodes_[idx];
    if (n.kind == OpKind::kLeaf) continue;
    const std::vector<double>& g = grad[idx];
    const Tensor& y = n.value;

    switch (n.kind) {
      case OpKind::kMatmul: {
        const Tensor& ta = nodes_[n.parents[0]].value;
        const Tensor& tb = nodes_[n.parents[1]].value;
        auto& da = ensure(n.parents[0]);
        auto& db = ensure(n.parents[1]);
        gemm_backward(ta.raw(), tb.raw(), g.data(), da.data(), db.data(),
                      ta.dim(0), ta.dim(1), tb.dim(0), tb.dim(1), y.dim(0),
                      y.dim(1), n.trans_a, n.trans_b);
        break;
      }
      case OpKind::kBatchMatmul: {
        const Tensor& ta = nodes_[n.parents[0]].value;
        const Tensor& tb = nodes_[n.parents[1]].value;
        auto& da = ensure(n.parents[0]);
        auto& db = ensure(n.parents[1]);
        const auto N = ta.dim(0);
        const auto sa = ta.dim(1) * ta.dim(2);
        const auto sb = tb.dim(1) * tb.dim(2);
        const auto sg = y.dim(1) * y.dim(2);
        for (std::int64_t b = 0; b < N; ++b) {
          gemm_backward(ta.raw() + b * sa, tb.raw() + b * sb, g.data() + b * sg,
                        da.data() + b * sa, db.data() + b * sb, ta.dim(1),
                        ta.dim(2), tb.dim(1), tb.dim(2), y.dim(1), y.dim(2),
                        n.trans_a, n.trans_b);
        }
        break;
      }
      case OpKind::kAdd: {
        const Tensor& ta = nodes_[n.parents[0]].value;
        const Tensor& tb = nodes_[n.parents[1]].value;
        auto& da = ensure(n.parents[0]);
        for (size_t j = 0; j < g.size(); ++j) da[j] += g[j];
        auto& db = ensure(n.parents[1]);
        if (ta.same_shape(tb)) {
          for (size_t j = 0; j < g.size(); ++j) db[j] += g[j];
        } else {
          const auto c = static_cast<size_t>(tb.dim(0));
          const size_t rows = g.size() / c;
          for (size_t r = 0; r < rows; ++r) {
            const double* pg = g.data() + r * c;
            for (size_t j = 0; j < c; ++j) db[j] += pg[j];
          }
        }
        break;
      }
      case OpKind::kAddTiled: {
        const Tensor& tbl = nodes_[n.parents[1]].value;
        auto& da = ensure(n.parents[0]);
        for (size_t j = 0; j < g.size(); ++j) da[j] += g[j];
        auto& db = ensure(n.parents[1]);
        const auto block = static_cast<size_t>(tbl.size());
        const size_t tiles = g.size() / block;
        for (size_t t = 0; t < tiles; ++t) {
          const double* pg = g.data() + t * block;
          for (size_t j = 0; j < block; ++j) db[j] += pg[j];
        }
        break;
      }
      case OpKind::kSub: {
        auto& da = ensure(n.parents[0]);
        for (size_t j = 0; j < g.size(); ++j) da[j] += g[j];
        auto& db = ensure(n.parents[1]);
        for (size_t j = 0; j < g.size(); ++j) db[j] -= g[j];
        break;
      }
      case OpKind::kMul: {
        const double* pa = nodes_[n.parents[0]].value.raw();
        const double* pb = nodes_[n.parents[1]].value.raw();
        auto& da = ensure(n.parents[0]);
        for (size_t j = 0; j < g.size(); ++j) da[j] += g[j] * pb[j];
        auto& db = ensure(n.parents[1]);
        for (size_t j = 0; j < g.size(); ++j) db[j] += g[j] * pa[j];
        break;
      }
      case OpKind::kScale: {
        auto& da = ensure(n.parents[0]);
        const double alpha = n.alpha;
        for (size_t j = 0; j < g.size(); ++j) da[j] += alpha * g[j];
        break;
      }
      case OpKind::kSoftmax:
      case OpKind::kCausalSoftmax: {
        // dx = (g - <g, y>_row) * y; masked entries have y = 0.
        const auto c = y.dim(y.rank() - 1);
        const auto rows = y.size() / c;
        auto& da = ensure(n.parents[0]);
        for (std::int64_t r = 0; r < rows; ++r) {
          Eigen::Map<const Eigen::ArrayXd> Yr(y.raw() + r * c, c);
          Eigen::Map<const Eigen::ArrayXd> Gr(g.data() + r * c, c);
          Eigen::Map<Eigen::ArrayXd> Dr(da.data() + r * c, c);
          const double dot = (Gr * Yr).sum();
          Dr += (Gr - dot) * Yr;
        }
        break;
      }
      case OpKind::kLayerNorm: {
        const Tensor& tx = nodes_[n.parents[0]].value;
        const Tensor& tg = nodes_[n.parents[1]].value;
        const auto c = tx.dim(tx.rank() - 1);
        const auto rows = tx.size() / c;
        auto& dx = ensure(n.parents[0]);
        auto& dgam = ensure(n.parents[1]);
        auto& dbet = ensure(n.parents[2]);
        Eigen::Map<const Eigen::ArrayXd> Gam(tg.raw(), c);
        Eigen::Map<Eigen::ArrayXd> Dgam(dgam.data(), c);
        Eigen::Map<Eigen::ArrayXd> Dbet(dbet.data(), c);
        Eigen::ArrayXd xhat(c), dxh(c);
        for (std::int64_t r = 0; r < rows; ++r) {
          Eigen::Map<const Eigen::ArrayXd> X(tx.raw() + r * c, c);
          Eigen::Map<const Eigen::ArrayXd> Gr(g.data() + r * c, c);
          Eigen::Map<Eigen::ArrayXd> Dx(dx.data() + r * c, c);
          const double mean = X.mean();
          const double var = (X - mean).square().mean();
          const double inv = 1.0 / std::sqrt(var + n.alpha);
          xhat = (X - mean) * inv;
          Dgam += Gr * xhat;
          Dbet += Gr;
          dxh = Gr * Gam;
          const double m1 = dxh.mean();
          const double m2 = (dxh * xhat).mean();
          Dx += inv * (dxh - m1 - xhat * m2);
        }
        break;
      }
      case OpKind::kGelu: {
        const auto size = static_cast<std::int64_t>(g.size());
        auto& da = ensure(n.parents[0]);
        Eigen::Map<const Eigen::ArrayXd> X(nodes_[n.parents[0]].value.raw(), size);
        Eigen::Map<const Eigen::ArrayXd> T(n.aux.data(), size);
        Eigen::Map<const Eigen::ArrayXd> G(g.data(), size);
        Eigen::Map<Eigen::ArrayXd> D(da.data(), size);
        D += G * (0.5 * (1.0 + T) +
                  0.5 * X * (1.0 - T.square()) * (kGeluC * (1.0 + 3.0 * kGeluA * X.square())));
        break;
      }
      case OpKind::kReshape: {
        auto& da = ensure(n.parents[0]);
        for (size_t j = 0; j < g.size(); ++j) da[j] += g[j];
        break;
      }
      case OpKind::kPermute: {
        // backward permutes the gradient by the inverse axes
        const int r = static_cast<int>(n.axes.size());
        std::vector<int> inv(static_cast<size_t>(r));
        for (int j = 0; j < r; ++j) inv[n.axes[j]] = j;
        auto& da = ensure(n.parents[0]);
        permute_copy(g, y.shape(), inv, da, /*accumulate=*/true);
        break;
      }
      case OpKind::kSliceCols: {
        const Tensor& tx = nodes_[n.parents[0]].value;
        auto& da = ensure(n.parents[0]);
        const auto c = tx.dim(1);
        for (std::int64_t r = 0; r < y.dim(0); ++r) {
          double* dr = da.data() + r * c + n.start;
          const double* gr = g.data() + r * n.count;
          for (std::int64_t j = 0; j < n.count; ++j) dr[j] += gr[j];
        }
        break;
      }
      case OpKind::kSliceRows: {
        const Tensor& tx = nodes_[n.parents[0]].value;
        auto& da = ensure(n.parents[0]);
        const auto c = tx.dim(1);
        double* dr = da.data() + n.start * c;
        for (size_t j = 0; j < g.size(); ++j) dr[j] += g[j];
        break;
      }
      case OpKind::kReduceSum: {
        auto& da = ensure(n.parents[0]);
        const double s = g[0];
        for (auto& v : da) v += s;
        break;
      }
      case OpKind::kReduceMean: {
        auto& da = ensure(n.parents[0]);
        const double s = g[0] / static_cast<double>(da.size());
        for (auto& v : da) v += s;
        break;
      }
      case OpKind::kLeaf:
        break;
    }
  }

  std::unordered_map<NodeId, Tensor> out;
  for (size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].is_param) continue;
    const auto id = static_cast<NodeId>(i);
    if (has_grad[i]) {
      out.emplace(id, Tensor::from(nodes_[i].value.shape(), std::move(grad[i])));
    } else {
      out.emplace(id, Tensor::zeros(nodes_[i].value.shape()));
    }
  }
  return out;
}

}  // namespace icl::numerics
