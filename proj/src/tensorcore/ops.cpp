#include "hymad/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace hymad {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

ConstMatMap as_mat(const Tensor& t) {
  return ConstMatMap(t.data().data(), static_cast<Eigen::Index>(rows_of(t)),
                     static_cast<Eigen::Index>(cols_of(t)));
}

ConstMatMap as_mat(const Buffer& v, std::size_t r,
                   std::size_t c) {
  return ConstMatMap(v.data(), static_cast<Eigen::Index>(r),
                     static_cast<Eigen::Index>(c));
}

MatMap grad_mat(Tensor& t) {
  auto& g = t.grad_buffer();
  return MatMap(g.data(), static_cast<Eigen::Index>(rows_of(t)),
                static_cast<Eigen::Index>(cols_of(t)));
}

Buffer to_vec(const RowMat& m) {
  return Buffer(m.data(), m.data() + m.size());
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.ndim() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " +
                     shape_str(t.shape()));
  }
}

// Shared body for elementwise unary ops: out[i] = f(a[i]),
// da[i] += g[i] * df(a[i], out[i]).
template <typename F, typename DF>
Tensor unary(const Tensor& a, const char* op, F f, DF df) {
  Buffer out(a.numel());
  auto in = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  Tensor pa = a;
  return Tensor::make_result(a.shape(), std::move(out), op, {a},
                             [pa, df](const Node& n) mutable {
                               auto& g = pa.grad_buffer();
                               auto x = pa.data();
                               for (std::size_t i = 0; i < g.size(); ++i)
                                 g[i] += n.grad[i] * df(x[i], n.data[i]);
                             });
}

}  // namespace

std::size_t rows_of(const Tensor& t) {
  return t.ndim() == 1 ? 1 : t.shape()[0];
}

std::size_t cols_of(const Tensor& t) {
  if (t.ndim() > 2) {
    throw ShapeError("expected rank <= 2, got " + shape_str(t.shape()));
  }
  return t.shape().back();
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto m = rows_of(a), k = cols_of(a), k2 = rows_of(b), n = cols_of(b);
  if (k != k2) {
    throw ShapeError("matmul: inner dimensions differ " +
                     shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  RowMat out = as_mat(a) * as_mat(b);
  Tensor pa = a, pb = b;
  return Tensor::make_result({m, n}, to_vec(out), "matmul", {a, b},
                             [pa, pb, m, n](const Node& node) mutable {
                               auto g = as_mat(node.grad, m, n);
                               if (pa.requires_grad())
                                 grad_mat(pa).noalias() +=
                                     g * as_mat(pb).transpose();
                               if (pb.requires_grad())
                                 grad_mat(pb).noalias() +=
                                     as_mat(pa).transpose() * g;
                             });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  const auto m = rows_of(a), k = cols_of(a), n = rows_of(b);
  if (k != cols_of(b)) {
    throw ShapeError("matmul_nt: widths differ " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
  RowMat out = as_mat(a) * as_mat(b).transpose();
  Tensor pa = a, pb = b;
  return Tensor::make_result({m, n}, to_vec(out), "matmul_nt", {a, b},
                             [pa, pb, m, n](const Node& node) mutable {
                               auto g = as_mat(node.grad, m, n);
                               if (pa.requires_grad())
                                 grad_mat(pa).noalias() += g * as_mat(pb);
                               if (pb.requires_grad())
                                 grad_mat(pb).noalias() +=
                                     g.transpose() * as_mat(pa);
                             });
}

Tensor transpose(const Tensor& a) {
  const auto m = rows_of(a), n = cols_of(a);
  RowMat out = as_mat(a).transpose();
  Tensor pa = a;
  return Tensor::make_result({n, m}, to_vec(out), "transpose", {a},
                             [pa, m, n](const Node& node) mutable {
                               grad_mat(pa) +=
                                   as_mat(node.grad, n, m).transpose();
                             });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Buffer out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  Tensor pa = a, pb = b;
  return Tensor::make_result(a.shape(), std::move(out), "add", {a, b},
                             [pa, pb](const Node& n) mutable {
                               for (Tensor* t : {&pa, &pb}) {
                                 if (!t->requires_grad()) continue;
                                 auto& g = t->grad_buffer();
                                 for (std::size_t i = 0; i < g.size(); ++i)
                                   g[i] += n.grad[i];
                               }
                             });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Buffer out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
  Tensor pa = a, pb = b;
  return Tensor::make_result(a.shape(), std::move(out), "sub", {a, b},
                             [pa, pb](const Node& n) mutable {
                               if (pa.requires_grad()) {
                                 auto& g = pa.grad_buffer();
                                 for (std::size_t i = 0; i < g.size(); ++i)
                                   g[i] += n.grad[i];
                               }
                               if (pb.requires_grad()) {
                                 auto& g = pb.grad_buffer();
                                 for (std::size_t i = 0; i < g.size(); ++i)
                                   g[i] -= n.grad[i];
                               }
                             });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Buffer out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
  Tensor pa = a, pb = b;
  return Tensor::make_result(a.shape(), std::move(out), "mul", {a, b},
                             [pa, pb](const Node& n) mutable {
                               if (pa.requires_grad()) {
                                 auto& g = pa.grad_buffer();
                                 for (std::size_t i = 0; i < g.size(); ++i)
                                   g[i] += n.grad[i] * pb.at(i);
                               }
                               if (pb.requires_grad()) {
                                 auto& g = pb.grad_buffer();
                                 for (std::size_t i = 0; i < g.size(); ++i)
                                   g[i] += n.grad[i] * pa.at(i);
                               }
                             });
}

Tensor scale(const Tensor& a, double s) {
  return unary(
      a, "scale", [s](double x) { return s * x; },
      [s](double, double) { return s; });
}

Tensor add_row(const Tensor& x, const Tensor& b) {
  const auto m = rows_of(x), n = cols_of(x);
  if (b.numel() != n) {
    throw ShapeError("add_row: bias " + shape_str(b.shape()) +
                     " does not match width of " + shape_str(x.shape()));
  }
  Buffer out(x.data().begin(), x.data().end());
  auto bias = b.data();
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] += bias[c];
  Tensor px = x, pb = b;
  return Tensor::make_result(x.shape(), std::move(out), "add_row", {x, b},
                             [px, pb, m, n](const Node& node) mutable {
                               if (px.requires_grad()) {
                                 auto& g = px.grad_buffer();
                                 for (std::size_t i = 0; i < g.size(); ++i)
                                   g[i] += node.grad[i];
                               }
                               if (pb.requires_grad()) {
                                 auto& g = pb.grad_buffer();
                                 for (std::size_t r = 0; r < m; ++r)
                                   for (std::size_t c = 0; c < n; ++c)
                                     g[c] += node.grad[r * n + c];
                               }
                             });
}

Tensor tanh(const Tensor& a) {
  return unary(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor abs(const Tensor& a) {
  // d|x|/dx taken as 0 at the origin, matching a central difference there.
  return unary(
      a, "abs", [](double x) { return std::fabs(x); },
      [](double x, double) {
        return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
      });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  Tensor pa = a;
  return Tensor::make_result({1}, {s}, "sum", {a},
                             [pa](const Node& n) mutable {
                               for (auto& g : pa.grad_buffer()) g += n.grad[0];
                             });
}

Tensor mean(const Tensor& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor mean_rows(const Tensor& a) {
  const auto m = rows_of(a), n = cols_of(a);
  RowMat out = as_mat(a).colwise().mean();
  Tensor pa = a;
  return Tensor::make_result({1, n}, to_vec(out), "mean_rows", {a},
                             [pa, m, n](const Node& node) mutable {
                               auto& g = pa.grad_buffer();
                               const double inv = 1.0 / static_cast<double>(m);
                               for (std::size_t r = 0; r < m; ++r)
                                 for (std::size_t c = 0; c < n; ++c)
                                   g[r * n + c] += node.grad[c] * inv;
                             });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  const auto m = rows_of(a), na = cols_of(a), nb = cols_of(b);
  if (rows_of(b) != m) {
    throw ShapeError("concat_cols: row counts differ " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
  const auto n = na + nb;
  Buffer out(m * n);
  for (std::size_t r = 0; r < m; ++r) {
    std::copy_n(a.data().begin() + r * na, na, out.begin() + r * n);
    std::copy_n(b.data().begin() + r * nb, nb, out.begin() + r * n + na);
  }
  Tensor pa = a, pb = b;
  return Tensor::make_result(
      {m, n}, std::move(out), "concat_cols", {a, b},
      [pa, pb, m, na, nb, n](const Node& node) mutable {
        if (pa.requires_grad()) {
          auto& g = pa.grad_buffer();
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < na; ++c)
              g[r * na + c] += node.grad[r * n + c];
        }
        if (pb.requires_grad()) {
          auto& g = pb.grad_buffer();
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < nb; ++c)
              g[r * nb + c] += node.grad[r * n + na + c];
        }
      });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  const auto m = rows_of(a), n = cols_of(a);
  if (begin >= end || end > n) {
    throw ShapeError("slice_cols: bad range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") of width " + std::to_string(n));
  }
  const auto w = end - begin;
  Buffer out(m * w);
  for (std::size_t r = 0; r < m; ++r)
    std::copy_n(a.data().begin() + r * n + begin, w, out.begin() + r * w);
  Tensor pa = a;
  return Tensor::make_result({m, w}, std::move(out), "slice_cols", {a},
                             [pa, m, n, w, begin](const Node& node) mutable {
                               auto& g = pa.grad_buffer();
                               for (std::size_t r = 0; r < m; ++r)
                                 for (std::size_t c = 0; c < w; ++c)
                                   g[r * n + begin + c] += node.grad[r * w + c];
                             });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const auto n = cols_of(parts.front());
  std::size_t m = 0;
  Buffer out;
  for (const auto& p : parts) {
    if (cols_of(p) != n) {
      throw ShapeError("concat_rows: width mismatch " + shape_str(p.shape()));
    }
    m += rows_of(p);
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  std::vector<Tensor> held = parts;
  return Tensor::make_result({m, n}, std::move(out), "concat_rows", parts,
                             [held](const Node& node) mutable {
                               std::size_t off = 0;
                               for (auto& p : held) {
                                 if (p.requires_grad()) {
                                   auto& g = p.grad_buffer();
                                   for (std::size_t i = 0; i < g.size(); ++i)
                                     g[i] += node.grad[off + i];
                                 }
                                 off += p.numel();
                               }
                             });
}

Tensor softmax_rows(const Tensor& m) {
  const auto r = rows_of(m), c = cols_of(m);
  auto in = m.data();
  Buffer out(in.size());
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = in.data() + i * c;
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) {
      if (!std::isfinite(row[j])) {
        throw NumericError("softmax_rows: non-finite entry at (" +
                           std::to_string(i) + ", " + std::to_string(j) + ")");
      }
      hi = std::max(hi, row[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      out[i * c + j] = std::exp(row[j] - hi);
      z += out[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= z;
  }
  Tensor pm = m;
  return Tensor::make_result(
      m.shape(), std::move(out), "softmax_rows", {m},
      [pm, r, c](const Node& node) mutable {
        auto& g = pm.grad_buffer();
        for (std::size_t i = 0; i < r; ++i) {
          const double* y = node.data.data() + i * c;
          const double* gy = node.grad.data() + i * c;
          double dot = 0.0;
          for (std::size_t j = 0; j < c; ++j) dot += y[j] * gy[j];
          for (std::size_t j = 0; j < c; ++j)
            g[i * c + j] += y[j] * (gy[j] - dot);
        }
      });
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma,
                       const Tensor& beta, double eps) {
  const auto m = rows_of(x), n = cols_of(x);
  if (gamma.numel() != n || beta.numel() != n) {
    throw ShapeError("layer_norm_rows: affine params must have width " +
                     std::to_string(n));
  }
  Buffer xhat(m * n), inv_std(m), out(m * n);
  auto in = x.data();
  for (std::size_t r = 0; r < m; ++r) {
    double mu = 0.0;
    for (std::size_t c = 0; c < n; ++c) mu += in[r * n + c];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      const double d = in[r * n + c] - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) {
      xhat[r * n + c] = (in[r * n + c] - mu) * inv_std[r];
      out[r * n + c] = xhat[r * n + c] * gamma.at(c) + beta.at(c);
    }
  }
  Tensor px = x, pg = gamma, pb = beta;
  return Tensor::make_result(
      x.shape(), std::move(out), "layer_norm", {x, gamma, beta},
      [px, pg, pb, m, n, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](const Node& node) mutable {
        const auto& gy = node.grad;
        if (pg.requires_grad() || pb.requires_grad()) {
          auto& gg = pg.grad_buffer();
          auto& gb = pb.grad_buffer();
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < n; ++c) {
              gg[c] += gy[r * n + c] * xhat[r * n + c];
              gb[c] += gy[r * n + c];
            }
        }
        if (!px.requires_grad()) return;
        auto& gx = px.grad_buffer();
        const double inv_n = 1.0 / static_cast<double>(n);
        Buffer dxhat(n);
        for (std::size_t r = 0; r < m; ++r) {
          double mean_d = 0.0, mean_dx = 0.0;
          for (std::size_t c = 0; c < n; ++c) {
            dxhat[c] = gy[r * n + c] * pg.at(c);
            mean_d += dxhat[c];
            mean_dx += dxhat[c] * xhat[r * n + c];
          }
          mean_d *= inv_n;
          mean_dx *= inv_n;
          for (std::size_t c = 0; c < n; ++c)
            gx[r * n + c] +=
                inv_std[r] * (dxhat[c] - mean_d - xhat[r * n + c] * mean_dx);
        }
      });
}

AttentionResult attention_with_weights(const Tensor& q, const Tensor& k,
                                       const Tensor& v) {
  require_matrix(q, "attention");
  require_matrix(k, "attention");
  require_matrix(v, "attention");
  if (cols_of(q) != cols_of(k)) {
    throw ShapeError("attention: query width " + std::to_string(cols_of(q)) +
                     " != key width " + std::to_string(cols_of(k)));
  }
  if (rows_of(k) != rows_of(v)) {
    throw ShapeError("attention: key rows " + std::to_string(rows_of(k)) +
                     " != value rows " + std::to_string(rows_of(v)));
  }
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(cols_of(q)));
  Tensor weights = softmax_rows(scale(matmul_nt(q, k), inv_sqrt_dk));
  return {matmul(weights, v), weights};
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  return attention_with_weights(q, k, v).output;
}

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b,
             Activation act) {
  Tensor z = add_row(matmul(x, w), b);
  return act == Activation::kRelu ? relu(z) : z;
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
  if (logits.numel() != targets.numel() ||
      rows_of(logits) != rows_of(targets)) {
    throw ShapeError("bce_with_logits: logits " + shape_str(logits.shape()) +
                     " vs targets " + shape_str(targets.shape()));
  }
  auto z = logits.data();
  auto y = targets.data();
  const auto n = z.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) {
      throw ValidationError("bce_with_logits: target " + std::to_string(y[i]) +
                            " at index " + std::to_string(i) +
                            " is not binary");
    }
    total += std::max(z[i], 0.0) - z[i] * y[i] +
             std::log1p(std::exp(-std::fabs(z[i])));
  }
  Tensor pz = logits;
  Buffer ty(y.begin(), y.end());
  return Tensor::make_result(
      {1}, {total / static_cast<double>(n)}, "bce_with_logits", {logits},
      [pz, ty = std::move(ty)](const Node& node) mutable {
        auto& g = pz.grad_buffer();
        const double s = node.grad[0] / static_cast<double>(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double zi = pz.at(i);
          const double sig = zi >= 0.0 ? 1.0 / (1.0 + std::exp(-zi))
                                       : std::exp(zi) / (1.0 + std::exp(zi));
          g[i] += s * (sig - ty[i]);
        }
      });
}

Tensor rnn_forward(const Tensor& features, const RnnParams& p,
                   const Tensor& h0) {
  const auto steps = rows_of(features), c_in = cols_of(features);
  const auto hidden = rows_of(p.w_h);
  if (cols_of(p.w_h) != hidden) {
    throw ShapeError("rnn_forward: W_h must be square, got " +
                     shape_str(p.w_h.shape()));
  }
  if (rows_of(p.w_x) != hidden || cols_of(p.w_x) != c_in) {
    throw ShapeError("rnn_forward: W_x " + shape_str(p.w_x.shape()) +
                     " incompatible with features " +
                     shape_str(features.shape()) + " and H=" +
                     std::to_string(hidden));
  }
  if (p.b.numel() != hidden || h0.numel() != hidden) {
    throw ShapeError("rnn_forward: bias and h0 must have width H=" +
                     std::to_string(hidden));
  }
  const auto wh = as_mat(p.w_h);
  const Eigen::Map<const Eigen::RowVectorXd> bias(
      p.b.data().data(), static_cast<Eigen::Index>(hidden));
  // Input drive for all steps at once: F·W_xᵀ + b.
  RowMat drive = as_mat(features) * as_mat(p.w_x).transpose();
  drive.rowwise() += bias;
  RowMat states(static_cast<Eigen::Index>(steps),
                static_cast<Eigen::Index>(hidden));
  Eigen::RowVectorXd prev = Eigen::Map<const Eigen::RowVectorXd>(
      h0.data().data(), static_cast<Eigen::Index>(hidden));
  for (Eigen::Index t = 0; t < static_cast<Eigen::Index>(steps); ++t) {
    Eigen::RowVectorXd z = drive.row(t) + prev * wh.transpose();
    states.row(t) = z.unaryExpr([](double v) { return std::tanh(v); });
    prev = states.row(t);
  }
  Tensor pf = features, pwh = p.w_h, pwx = p.w_x, pb = p.b, ph0 = h0;
  return Tensor::make_result(
      {steps, hidden}, to_vec(states), "rnn", {features, p.w_h, p.w_x, p.b, h0},
      [pf, pwh, pwx, pb, ph0, steps, hidden](const Node& node) mutable {
        const auto T = static_cast<Eigen::Index>(steps);
        const auto H = static_cast<Eigen::Index>(hidden);
        auto hs = as_mat(node.data, steps, hidden);
        auto gh = as_mat(node.grad, steps, hidden);
        const auto wh = as_mat(pwh);
        // dz_t = (dL/dh_t + W_hᵀ-propagated carry) ⊙ (1 - h_t²)
        RowMat dz(T, H);
        Eigen::RowVectorXd carry = Eigen::RowVectorXd::Zero(H);
        for (Eigen::Index t = T - 1; t >= 0; --t) {
          Eigen::RowVectorXd dh = gh.row(t) + carry;
          dz.row(t) = dh.array() * (1.0 - hs.row(t).array().square());
          carry = dz.row(t) * wh;
        }
        if (pwh.requires_grad()) {
          auto g = grad_mat(pwh);
          if (T > 1)
            g.noalias() += dz.bottomRows(T - 1).transpose() * hs.topRows(T - 1);
          g.noalias() +=
              dz.row(0).transpose() *
              Eigen::Map<const Eigen::RowVectorXd>(ph0.data().data(), H);
        }
        if (pwx.requires_grad())
          grad_mat(pwx).noalias() += dz.transpose() * as_mat(pf);
        if (pb.requires_grad()) {
          Eigen::Map<Eigen::RowVectorXd> g(pb.grad_buffer().data(), H);
          g += dz.colwise().sum();
        }
        if (pf.requires_grad()) grad_mat(pf).noalias() += dz * as_mat(pwx);
        if (ph0.requires_grad()) {
          Eigen::Map<Eigen::RowVectorXd> g(ph0.grad_buffer().data(), H);
          g += carry;
        }
      });
}

namespace {

struct ConvPlan {
  std::size_t length, taps, half, stride, outputs;
};

ConvPlan make_plan(const Tensor& x, const Tensor& kernels, std::size_t stride,
                   const char* op) {
  require_matrix(kernels, op);
  if (rows_of(x) != 1) {
    throw ShapeError(std::string(op) + ": expected a single-channel signal, got " +
                     shape_str(x.shape()));
  }
  ConvPlan plan{};
  plan.length = x.numel();
  plan.taps = cols_of(kernels);
  if (plan.taps % 2 == 0) {
    throw ValidationError(std::string(op) + ": kernel length " +
                          std::to_string(plan.taps) + " must be odd");
  }
  if (plan.length < plan.taps) {
    throw ValidationError(std::string(op) + ": signal length " +
                          std::to_string(plan.length) +
                          " shorter than kernel length " +
                          std::to_string(plan.taps));
  }
  if (stride == 0 || stride > plan.length) {
    throw ValidationError(std::string(op) + ": bad pooling stride " +
                          std::to_string(stride));
  }
  plan.half = (plan.taps - 1) / 2;
  plan.stride = stride;
  plan.outputs = plan.length / stride;
  return plan;
}

}  // namespace

Tensor conv1d_same_pooled(const Tensor& x, const Tensor& kernels,
                          std::size_t stride) {
  const ConvPlan plan = make_plan(x, kernels, stride, "conv1d_same_pooled");
  const auto T = plan.length, L = plan.taps, M = plan.half, S = plan.stride,
             P = plan.outputs;
  // xb[i] = (1/S) Σ_{s<S} x[i - M + s]  for i in [0, T + 2M), x zero outside.
  auto in = x.data();
  const std::size_t nb = T + 2 * M;
  Buffer xb(nb, 0.0);
  const double inv_s = 1.0 / static_cast<double>(S);
  for (std::size_t i = 0; i < nb; ++i) {
    double acc = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
      const auto src = static_cast<std::ptrdiff_t>(i + s) -
                       static_cast<std::ptrdiff_t>(M);
      if (src >= 0 && src < static_cast<std::ptrdiff_t>(T)) acc += in[src];
    }
    xb[i] = acc * inv_s;
  }
  // Pooled output p uses y[m] = Σ_j h[j] x[m - j + M] averaged over
  // m = pS .. pS+S-1, i.e. Σ_j h[j] xb[pS - j + 2M].
  RowMat windows(static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(L));
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t j = 0; j < L; ++j)
      windows(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(j)) =
          xb[p * S + 2 * M - j];
  const auto C = rows_of(kernels);
  RowMat out = as_mat(kernels) * windows.transpose();
  Tensor px = x, pk = kernels;
  return Tensor::make_result(
      {C, P}, to_vec(out), "conv1d_same_pooled", {x, kernels},
      [px, pk, windows = std::move(windows), T, L, M, S, P, C,
       nb](const Node& node) mutable {
        auto g = as_mat(node.grad, C, P);
        if (pk.requires_grad()) grad_mat(pk).noalias() += g * windows;
        if (!px.requires_grad()) return;
        RowMat dw = g.transpose() * as_mat(pk);  // P x L
        Buffer dxb(nb, 0.0);
        for (std::size_t p = 0; p < P; ++p)
          for (std::size_t j = 0; j < L; ++j)
            dxb[p * S + 2 * M - j] +=
                dw(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(j));
        auto& gx = px.grad_buffer();
        const double inv_s = 1.0 / static_cast<double>(S);
        for (std::size_t i = 0; i < nb; ++i) {
          if (dxb[i] == 0.0) continue;
          for (std::size_t s = 0; s < S; ++s) {
            const auto src = static_cast<std::ptrdiff_t>(i + s) -
                             static_cast<std::ptrdiff_t>(M);
            if (src >= 0 && src < static_cast<std::ptrdiff_t>(T))
              gx[static_cast<std::size_t>(src)] += dxb[i] * inv_s;
          }
        }
      });
}

Tensor conv1d_same(const Tensor& x, const Tensor& kernels) {
  return conv1d_same_pooled(x, kernels, 1);
}

Tensor avg_pool_cols(const Tensor& y, std::size_t stride) {
  const auto c = rows_of(y), t = cols_of(y);
  if (stride == 0 || stride > t) {
    throw ValidationError("avg_pool_cols: bad stride " +
                          std::to_string(stride) + " for length " +
                          std::to_string(t));
  }
  const auto p = t / stride;
  const double inv = 1.0 / static_cast<double>(stride);
  Buffer out(c * p, 0.0);
  auto in = y.data();
  for (std::size_t r = 0; r < c; ++r)
    for (std::size_t j = 0; j < p; ++j) {
      double acc = 0.0;
      for (std::size_t s = 0; s < stride; ++s) acc += in[r * t + j * stride + s];
      out[r * p + j] = acc * inv;
    }
  Tensor py = y;
  return Tensor::make_result({c, p}, std::move(out), "avg_pool_cols", {y},
                             [py, c, t, p, stride, inv](const Node& node) mutable {
                               auto& g = py.grad_buffer();
                               for (std::size_t r = 0; r < c; ++r)
                                 for (std::size_t j = 0; j < p; ++j)
                                   for (std::size_t s = 0; s < stride; ++s)
                                     g[r * t + j * stride + s] +=
                                         node.grad[r * p + j] * inv;
                             });
}

}  // namespace hymad
