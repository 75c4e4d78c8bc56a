#include "clef/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "clef/error.hpp"

// Reductions accumulate in double in a fixed sequential order; nothing here
// is parallel, so forward values are bit-identical across runs.

namespace clef::num {
namespace {

enum class Broadcast { Same, Row, Scalar };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (b.size() == a.size() && b.rows() == a.rows() && b.cols() == a.cols()) return Broadcast::Same;
  if (b.size() == 1) return Broadcast::Scalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::Row;
  fail(ErrorKind::ShapeMismatch,
       std::string(op) + ": cannot combine " + shape_string(a.shape) + " with " + shape_string(b.shape));
}

inline float bget(const Tensor& b, Broadcast kind, std::size_t idx, std::size_t cols) {
  switch (kind) {
    case Broadcast::Same: return b.values[idx];
    case Broadcast::Row: return b.values[idx % cols];
    case Broadcast::Scalar: return b.values[0];
  }
  return 0.0f;
}

// Reduce a full-size contribution into b's gradient according to the broadcast kind.
void accumulate_broadcast(std::vector<float>& gb, Broadcast kind, std::size_t rows, std::size_t cols,
                          const auto& contribution) {
  switch (kind) {
    case Broadcast::Same:
      for (std::size_t i = 0; i < rows * cols; ++i) gb[i] += contribution(i);
      break;
    case Broadcast::Row: {
      std::vector<double> acc(cols, 0.0);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) acc[c] += contribution(r * cols + c);
      for (std::size_t c = 0; c < cols; ++c) gb[c] += static_cast<float>(acc[c]);
      break;
    }
    case Broadcast::Scalar: {
      double acc = 0.0;
      for (std::size_t i = 0; i < rows * cols; ++i) acc += contribution(i);
      gb[0] += static_cast<float>(acc);
      break;
    }
  }
}

Tensor like(const Tensor& t) { return Tensor(t.shape, 0.0f); }

template <typename Fwd, typename Bwd>
Var unary(Var a, Fwd fwd, Bwd dfdx_times_g) {
  const Tensor& x = a.value();
  Tensor out = like(x);
  for (std::size_t i = 0; i < x.size(); ++i) out.values[i] = fwd(x.values[i]);
  int ia = a.id;
  return a.graph->push(std::move(out), {ia}, [ia, dfdx_times_g](Graph& g, int self) {
    if (!g.requires_grad(ia)) return;
    const auto& x = g.value(ia).values;
    const auto& y = g.value(self).values;
    const auto& go = g.grad(self);
    auto& gx = g.grad(ia);
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += dfdx_times_g(x[i], y[i], go[i]);
  });
}

void check_same_graph(Var a, Var b) {
  if (a.graph != b.graph) fail(ErrorKind::ShapeMismatch, "operands belong to different graphs");
}

}  // namespace

Var add(Var a, Var b) {
  check_same_graph(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  const Broadcast kind = broadcast_kind(x, y, "add");
  const std::size_t cols = x.cols();
  Tensor out = like(x);
  for (std::size_t i = 0; i < x.size(); ++i) out.values[i] = x.values[i] + bget(y, kind, i, cols);
  int ia = a.id, ib = b.id;
  return a.graph->push(std::move(out), {ia, ib}, [ia, ib, kind](Graph& g, int self) {
    const auto& go = g.grad(self);
    const std::size_t rows = g.value(self).rows(), cols = g.value(self).cols();
    if (g.requires_grad(ia)) {
      auto& ga = g.grad(ia);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    }
    if (g.requires_grad(ib)) {
      accumulate_broadcast(g.grad(ib), kind, rows, cols, [&](std::size_t i) { return double(go[i]); });
    }
  });
}

Var sub(Var a, Var b) {
  check_same_graph(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  const Broadcast kind = broadcast_kind(x, y, "sub");
  const std::size_t cols = x.cols();
  Tensor out = like(x);
  for (std::size_t i = 0; i < x.size(); ++i) out.values[i] = x.values[i] - bget(y, kind, i, cols);
  int ia = a.id, ib = b.id;
  return a.graph->push(std::move(out), {ia, ib}, [ia, ib, kind](Graph& g, int self) {
    const auto& go = g.grad(self);
    const std::size_t rows = g.value(self).rows(), cols = g.value(self).cols();
    if (g.requires_grad(ia)) {
      auto& ga = g.grad(ia);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    }
    if (g.requires_grad(ib)) {
      accumulate_broadcast(g.grad(ib), kind, rows, cols, [&](std::size_t i) { return -double(go[i]); });
    }
  });
}

Var mul(Var a, Var b) {
  check_same_graph(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  const Broadcast kind = broadcast_kind(x, y, "mul");
  const std::size_t cols = x.cols();
  Tensor out = like(x);
  for (std::size_t i = 0; i < x.size(); ++i) out.values[i] = x.values[i] * bget(y, kind, i, cols);
  int ia = a.id, ib = b.id;
  return a.graph->push(std::move(out), {ia, ib}, [ia, ib, kind](Graph& g, int self) {
    const auto& go = g.grad(self);
    const Tensor& x = g.value(ia);
    const Tensor& y = g.value(ib);
    const std::size_t rows = x.rows(), cols = x.cols();
    if (g.requires_grad(ia)) {
      auto& ga = g.grad(ia);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * bget(y, kind, i, cols);
    }
    if (g.requires_grad(ib)) {
      accumulate_broadcast(g.grad(ib), kind, rows, cols,
                           [&](std::size_t i) { return double(go[i]) * double(x.values[i]); });
    }
  });
}

Var scale(Var a, float s) {
  return unary(a, [s](float x) { return x * s; }, [s](float, float, float g) { return g * s; });
}

Var neg(Var a) { return scale(a, -1.0f); }

Var matmul(Var a, Var b) {
  check_same_graph(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  const std::size_t n = x.rows(), k = x.cols(), p = y.cols();
  if (y.rows() != k) {
    fail(ErrorKind::ShapeMismatch, "matmul " + shape_string(x.shape) + " by " + shape_string(y.shape));
  }
  Tensor out = Tensor::matrix(n, p);
  std::vector<double> acc(p);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const float* xr = x.values.data() + i * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double xv = xr[kk];
      const float* yr = y.values.data() + kk * p;
      for (std::size_t j = 0; j < p; ++j) acc[j] += xv * yr[j];
    }
    float* o = out.values.data() + i * p;
    for (std::size_t j = 0; j < p; ++j) o[j] = static_cast<float>(acc[j]);
  }
  int ia = a.id, ib = b.id;
  return a.graph->push(std::move(out), {ia, ib}, [ia, ib](Graph& g, int self) {
    const Tensor& x = g.value(ia);
    const Tensor& y = g.value(ib);
    const auto& go = g.grad(self);
    const std::size_t n = x.rows(), k = x.cols(), p = y.cols();
    if (g.requires_grad(ia)) {
      auto& ga = g.grad(ia);
      for (std::size_t i = 0; i < n; ++i) {
        const float* gr = go.data() + i * p;
        for (std::size_t kk = 0; kk < k; ++kk) {
          const float* yr = y.values.data() + kk * p;
          double s = 0.0;
          for (std::size_t j = 0; j < p; ++j) s += double(gr[j]) * yr[j];
          ga[i * k + kk] += static_cast<float>(s);
        }
      }
    }
    if (g.requires_grad(ib)) {
      std::vector<double> acc(k * p, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const float* xr = x.values.data() + i * k;
        const float* gr = go.data() + i * p;
        for (std::size_t kk = 0; kk < k; ++kk) {
          const double xv = xr[kk];
          double* ar = acc.data() + kk * p;
          for (std::size_t j = 0; j < p; ++j) ar[j] += xv * gr[j];
        }
      }
      auto& gb = g.grad(ib);
      for (std::size_t i = 0; i < k * p; ++i) gb[i] += static_cast<float>(acc[i]);
    }
  });
}

Var matmul_nt(Var a, Var b) {
  check_same_graph(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  const std::size_t n = x.rows(), k = x.cols(), p = y.rows();
  if (y.cols() != k) {
    fail(ErrorKind::ShapeMismatch, "matmul_nt " + shape_string(x.shape) + " by " + shape_string(y.shape));
  }
  Tensor out = Tensor::matrix(n, p);
  for (std::size_t i = 0; i < n; ++i) {
    const float* xr = x.values.data() + i * k;
    for (std::size_t j = 0; j < p; ++j) {
      const float* yr = y.values.data() + j * k;
      double s = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) s += double(xr[kk]) * yr[kk];
      out.values[i * p + j] = static_cast<float>(s);
    }
  }
  int ia = a.id, ib = b.id;
  return a.graph->push(std::move(out), {ia, ib}, [ia, ib](Graph& g, int self) {
    const Tensor& x = g.value(ia);
    const Tensor& y = g.value(ib);
    const auto& go = g.grad(self);
    const std::size_t n = x.rows(), k = x.cols(), p = y.rows();
    if (g.requires_grad(ia)) {
      auto& ga = g.grad(ia);
      std::vector<double> acc(k);
      for (std::size_t i = 0; i < n; ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t j = 0; j < p; ++j) {
          const double gv = go[i * p + j];
          const float* yr = y.values.data() + j * k;
          for (std::size_t kk = 0; kk < k; ++kk) acc[kk] += gv * yr[kk];
        }
        for (std::size_t kk = 0; kk < k; ++kk) ga[i * k + kk] += static_cast<float>(acc[kk]);
      }
    }
    if (g.requires_grad(ib)) {
      std::vector<double> acc(p * k, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const float* xr = x.values.data() + i * k;
        for (std::size_t j = 0; j < p; ++j) {
          const double gv = go[i * p + j];
          double* ar = acc.data() + j * k;
          for (std::size_t kk = 0; kk < k; ++kk) ar[kk] += gv * xr[kk];
        }
      }
      auto& gb = g.grad(ib);
      for (std::size_t i = 0; i < p * k; ++i) gb[i] += static_cast<float>(acc[i]);
    }
  });
}

Var transpose(Var a) {
  const Tensor& x = a.value();
  const std::size_t n = x.rows(), m = x.cols();
  Tensor out = Tensor::matrix(m, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out.values[j * n + i] = x.values[i * m + j];
  int ia = a.id;
  return a.graph->push(std::move(out), {ia}, [ia](Graph& g, int self) {
    const std::size_t n = g.value(ia).rows(), m = g.value(ia).cols();
    const auto& go = g.grad(self);
    auto& ga = g.grad(ia);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) ga[i * m + j] += go[j * n + i];
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) fail(ErrorKind::ShapeMismatch, "concat_rows of nothing");
  Graph* graph = parts[0].graph;
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  std::vector<int> ids;
  for (const Var& p : parts) {
    check_same_graph(parts[0], p);
    if (p.cols() != cols) {
      fail(ErrorKind::ShapeMismatch, "concat_rows column mismatch " + std::to_string(p.cols()) + " vs " +
                                         std::to_string(cols));
    }
    rows += p.rows();
    ids.push_back(p.id);
  }
  Tensor out = Tensor::matrix(rows, cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const auto& v = p.value().values;
    std::copy(v.begin(), v.end(), out.values.begin() + static_cast<std::ptrdiff_t>(offset));
    offset += v.size();
  }
  return graph->push(std::move(out), ids, [ids](Graph& g, int self) {
    const auto& go = g.grad(self);
    std::size_t offset = 0;
    for (int id : ids) {
      const std::size_t n = g.value(id).size();
      if (g.requires_grad(id)) {
        auto& gi = g.grad(id);
        for (std::size_t i = 0; i < n; ++i) gi[i] += go[offset + i];
      }
      offset += n;
    }
  });
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
  const Tensor& x = a.value();
  const std::size_t cols = x.cols();
  Tensor out = Tensor::matrix(rows.size(), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= x.rows()) {
      fail(ErrorKind::IndexOutOfRange,
           "gather row " + std::to_string(rows[r]) + " of " + std::to_string(x.rows()));
    }
    std::copy_n(x.values.begin() + static_cast<std::ptrdiff_t>(rows[r] * cols), cols,
                out.values.begin() + static_cast<std::ptrdiff_t>(r * cols));
  }
  int ia = a.id;
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return a.graph->push(std::move(out), {ia}, [ia, idx = std::move(idx)](Graph& g, int self) {
    const std::size_t cols = g.value(ia).cols();
    const auto& go = g.grad(self);
    auto& ga = g.grad(ia);
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t c = 0; c < cols; ++c) ga[idx[r] * cols + c] += go[r * cols + c];
  });
}

Var exp(Var a) {
  return unary(a, [](float x) { return std::exp(x); }, [](float, float y, float g) { return g * y; });
}

Var log(Var a) {
  return unary(a, [](float x) { return std::log(x); }, [](float x, float, float g) { return g / x; });
}

Var sigmoid(Var a) {
  return unary(
      a, [](float x) { return static_cast<float>(1.0 / (1.0 + std::exp(-double(x)))); },
      [](float, float y, float g) { return g * y * (1.0f - y); });
}

Var log_sigmoid(Var a) {
  return unary(
      a,
      [](float x) {
        const double d = x;
        return static_cast<float>(std::min(d, 0.0) - std::log1p(std::exp(-std::abs(d))));
      },
      // d/dx log sigmoid(x) = sigmoid(-x)
      [](float x, float, float g) { return static_cast<float>(g / (1.0 + std::exp(double(x)))); });
}

Var relu(Var a) {
  return unary(a, [](float x) { return x > 0.0f ? x : 0.0f; },
               [](float x, float, float g) { return x > 0.0f ? g : 0.0f; });
}

Var quick_gelu(Var a) {
  return unary(
      a,
      [](float x) { return static_cast<float>(double(x) / (1.0 + std::exp(-1.702 * x))); },
      [](float x, float, float g) {
        const double s = 1.0 / (1.0 + std::exp(-1.702 * x));
        return static_cast<float>(g * (s + 1.702 * x * s * (1.0 - s)));
      });
}

Var sum(Var a, int axis) {
  const Tensor& x = a.value();
  const std::size_t n = x.rows(), m = x.cols();
  if (axis != 0 && axis != 1) fail(ErrorKind::ShapeMismatch, "sum axis must be 0 or 1");
  Tensor out = axis == 0 ? Tensor::matrix(1, m) : Tensor::matrix(n, 1);
  if (axis == 0) {
    std::vector<double> acc(m, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) acc[j] += x.values[i * m + j];
    for (std::size_t j = 0; j < m; ++j) out.values[j] = static_cast<float>(acc[j]);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) acc += x.values[i * m + j];
      out.values[i] = static_cast<float>(acc);
    }
  }
  int ia = a.id;
  return a.graph->push(std::move(out), {ia}, [ia, axis](Graph& g, int self) {
    const std::size_t n = g.value(ia).rows(), m = g.value(ia).cols();
    const auto& go = g.grad(self);
    auto& ga = g.grad(ia);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) ga[i * m + j] += axis == 0 ? go[j] : go[i];
  });
}

Var mean(Var a, int axis) {
  const std::size_t count = axis == 0 ? a.rows() : a.cols();
  return scale(sum(a, axis), 1.0f / static_cast<float>(count));
}

Var sum_all(Var a) {
  const Tensor& x = a.value();
  double acc = 0.0;
  for (float v : x.values) acc += v;
  int ia = a.id;
  return a.graph->push(Tensor::scalar(static_cast<float>(acc)), {ia}, [ia](Graph& g, int self) {
    const float go = g.grad(self)[0];
    auto& ga = g.grad(ia);
    for (auto& v : ga) v += go;
  });
}

Var mean_all(Var a) { return scale(sum_all(a), 1.0f / static_cast<float>(a.size())); }

Var layer_norm(Var x, Var gain, Var bias, float eps) {
  check_same_graph(x, gain);
  check_same_graph(x, bias);
  const Tensor& in = x.value();
  const std::size_t n = in.rows(), m = in.cols();
  if (gain.size() != m || bias.size() != m) {
    fail(ErrorKind::ShapeMismatch, "layer_norm affine size does not match width " + std::to_string(m));
  }
  auto xhat = std::make_shared<std::vector<float>>(n * m);
  auto rstd = std::make_shared<std::vector<double>>(n);
  Tensor out = like(in);
  const auto& gv = gain.value().values;
  const auto& bv = bias.value().values;
  for (std::size_t i = 0; i < n; ++i) {
    const float* r = in.values.data() + i * m;
    double mu = 0.0;
    for (std::size_t j = 0; j < m; ++j) mu += r[j];
    mu /= double(m);
    double var = 0.0;
    for (std::size_t j = 0; j < m; ++j) var += (r[j] - mu) * (r[j] - mu);
    var /= double(m);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[i] = rs;
    for (std::size_t j = 0; j < m; ++j) {
      const double h = (r[j] - mu) * rs;
      (*xhat)[i * m + j] = static_cast<float>(h);
      out.values[i * m + j] = static_cast<float>(h * gv[j] + bv[j]);
    }
  }
  int ix = x.id, ig = gain.id, ib = bias.id;
  return x.graph->push(std::move(out), {ix, ig, ib}, [ix, ig, ib, xhat, rstd](Graph& g, int self) {
    const std::size_t n = g.value(ix).rows(), m = g.value(ix).cols();
    const auto& go = g.grad(self);
    const auto& gv = g.value(ig).values;
    if (g.requires_grad(ix)) {
      auto& gx = g.grad(ix);
      for (std::size_t i = 0; i < n; ++i) {
        double mean_d = 0.0, mean_dh = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
          const double d = double(go[i * m + j]) * gv[j];
          mean_d += d;
          mean_dh += d * (*xhat)[i * m + j];
        }
        mean_d /= double(m);
        mean_dh /= double(m);
        for (std::size_t j = 0; j < m; ++j) {
          const double d = double(go[i * m + j]) * gv[j];
          gx[i * m + j] += static_cast<float>((*rstd)[i] * (d - mean_d - (*xhat)[i * m + j] * mean_dh));
        }
      }
    }
    if (g.requires_grad(ig)) {
      std::vector<double> acc(m, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) acc[j] += double(go[i * m + j]) * (*xhat)[i * m + j];
      auto& gg = g.grad(ig);
      for (std::size_t j = 0; j < m; ++j) gg[j] += static_cast<float>(acc[j]);
    }
    if (g.requires_grad(ib)) {
      std::vector<double> acc(m, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) acc[j] += go[i * m + j];
      auto& gb = g.grad(ib);
      for (std::size_t j = 0; j < m; ++j) gb[j] += static_cast<float>(acc[j]);
    }
  });
}

Var l2_normalize_rows(Var x) {
  const Tensor& in = x.value();
  const std::size_t n = in.rows(), m = in.cols();
  auto norms = std::make_shared<std::vector<double>>(n);
  Tensor out = like(in);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += double(in.values[i * m + j]) * in.values[i * m + j];
    const double norm = std::sqrt(s);
    if (!(norm > 1e-12)) fail(ErrorKind::ZeroRow, "row " + std::to_string(i) + " has norm " + std::to_string(norm));
    (*norms)[i] = norm;
    for (std::size_t j = 0; j < m; ++j) out.values[i * m + j] = static_cast<float>(in.values[i * m + j] / norm);
  }
  int ix = x.id;
  return x.graph->push(std::move(out), {ix}, [ix, norms](Graph& g, int self) {
    const std::size_t n = g.value(ix).rows(), m = g.value(ix).cols();
    const auto& x = g.value(ix).values;
    const auto& go = g.grad(self);
    auto& gx = g.grad(ix);
    for (std::size_t i = 0; i < n; ++i) {
      const double norm = (*norms)[i];
      double dot = 0.0;
      for (std::size_t j = 0; j < m; ++j) dot += double(go[i * m + j]) * (x[i * m + j] / norm);
      for (std::size_t j = 0; j < m; ++j) {
        const double y = x[i * m + j] / norm;
        gx[i * m + j] += static_cast<float>((go[i * m + j] - y * dot) / norm);
      }
    }
  });
}

Var masked_logsumexp_rows(Var x, std::span<const std::uint8_t> valid) {
  const Tensor& in = x.value();
  const std::size_t n = in.rows(), m = in.cols();
  if (valid.size() != n * m) {
    fail(ErrorKind::ShapeMismatch, "mask has " + std::to_string(valid.size()) + " entries for " +
                                       shape_string(in.shape));
  }
  auto softmax = std::make_shared<std::vector<float>>(n * m, 0.0f);
  Tensor out = Tensor::matrix(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    float mx = -std::numeric_limits<float>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < m; ++j) {
      if (valid[i * m + j]) {
        mx = std::max(mx, in.values[i * m + j]);
        any = true;
      }
    }
    if (!any) fail(ErrorKind::EmptyValidRow, "row " + std::to_string(i) + " has no valid entries");
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (valid[i * m + j]) {
        const double e = std::exp(double(in.values[i * m + j]) - mx);
        (*softmax)[i * m + j] = static_cast<float>(e);
        s += e;
      }
    }
    for (std::size_t j = 0; j < m; ++j) (*softmax)[i * m + j] = static_cast<float>((*softmax)[i * m + j] / s);
    out.values[i] = static_cast<float>(mx + std::log(s));
  }
  int ix = x.id;
  return x.graph->push(std::move(out), {ix}, [ix, softmax](Graph& g, int self) {
    const std::size_t n = g.value(ix).rows(), m = g.value(ix).cols();
    const auto& go = g.grad(self);
    auto& gx = g.grad(ix);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) gx[i * m + j] += go[i] * (*softmax)[i * m + j];
  });
}

Var soft_target_nll_rows(Var x, std::span<const std::uint8_t> valid, std::span<const float> weights) {
  const Tensor& in = x.value();
  const std::size_t n = in.rows(), m = in.cols();
  if (valid.size() != n * m || weights.size() != n * m) {
    fail(ErrorKind::ShapeMismatch, "mask or weights do not match " + shape_string(in.shape));
  }
  // Softmax scaled by the row's weight total, cached for backward.
  auto scaled_softmax = std::make_shared<std::vector<float>>(n * m, 0.0f);
  Tensor out = Tensor::matrix(n, 1);
  std::vector<double> e(m);
  for (std::size_t i = 0; i < n; ++i) {
    const float* row = in.values.data() + i * m;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j)
      if (valid[i * m + j]) mx = std::max(mx, double(row[j]));
    if (mx == -std::numeric_limits<double>::infinity()) {
      fail(ErrorKind::EmptyValidRow, "row " + std::to_string(i) + " has no valid entries");
    }
    double s = 0.0, wsum = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      e[j] = valid[i * m + j] ? std::exp(double(row[j]) - mx) : 0.0;
      s += e[j];
      wsum += weights[i * m + j];
    }
    if (wsum == 0.0) continue;
    const double log_s = std::log(s);
    double acc = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double w = weights[i * m + j];
      if (w != 0.0) acc += w * (log_s - (double(row[j]) - mx));
      (*scaled_softmax)[i * m + j] = static_cast<float>(wsum * e[j] / s);
    }
    out.values[i] = static_cast<float>(acc);
  }
  std::vector<float> w(weights.begin(), weights.end());
  int ix = x.id;
  return x.graph->push(std::move(out), {ix}, [ix, scaled_softmax, w = std::move(w)](Graph& g, int self) {
    const std::size_t n = g.value(ix).rows(), m = g.value(ix).cols();
    const auto& go = g.grad(self);
    auto& gx = g.grad(ix);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) gx[i * m + j] += go[i] * ((*scaled_softmax)[i * m + j] - w[i * m + j]);
  });
}

Var attention(Var qkv, std::size_t seq_len, std::size_t heads, std::span<const std::uint8_t> key_valid) {
  const Tensor& in = qkv.value();
  const std::size_t total = in.rows();
  if (seq_len == 0 || total % seq_len != 0 || in.cols() % 3 != 0 || (in.cols() / 3) % heads != 0) {
    fail(ErrorKind::ShapeMismatch, "attention over " + shape_string(in.shape) + " with seq " +
                                       std::to_string(seq_len) + " and " + std::to_string(heads) + " heads");
  }
  if (key_valid.size() != total) fail(ErrorKind::ShapeMismatch, "attention key mask length mismatch");
  const std::size_t batch = total / seq_len;
  const std::size_t width = in.cols() / 3;
  const std::size_t dh = width / heads;
  const std::size_t stride = 3 * width;
  const double scale = 1.0 / std::sqrt(double(dh));

  auto probs = std::make_shared<std::vector<float>>(batch * heads * seq_len * seq_len, 0.0f);
  Tensor out = Tensor::matrix(total, width);
  std::vector<double> scores(seq_len);
  std::vector<double> acc(dh);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t base = b * seq_len;
    bool any = false;
    for (std::size_t t = 0; t < seq_len; ++t) any = any || key_valid[base + t];
    if (!any) fail(ErrorKind::EmptyValidRow, "sequence " + std::to_string(b) + " has no valid key");
    for (std::size_t h = 0; h < heads; ++h) {
      float* P = probs->data() + (b * heads + h) * seq_len * seq_len;
      for (std::size_t i = 0; i < seq_len; ++i) {
        const float* q = in.values.data() + (base + i) * stride + h * dh;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < seq_len; ++j) {
          if (!key_valid[base + j]) continue;
          const float* k = in.values.data() + (base + j) * stride + width + h * dh;
          double s = 0.0;
          for (std::size_t c = 0; c < dh; ++c) s += double(q[c]) * k[c];
          scores[j] = s * scale;
          mx = std::max(mx, scores[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < seq_len; ++j) {
          if (!key_valid[base + j]) continue;
          scores[j] = std::exp(scores[j] - mx);
          z += scores[j];
        }
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t j = 0; j < seq_len; ++j) {
          if (!key_valid[base + j]) continue;
          const double p = scores[j] / z;
          P[i * seq_len + j] = static_cast<float>(p);
          const float* v = in.values.data() + (base + j) * stride + 2 * width + h * dh;
          for (std::size_t c = 0; c < dh; ++c) acc[c] += p * v[c];
        }
        float* o = out.values.data() + (base + i) * width + h * dh;
        for (std::size_t c = 0; c < dh; ++c) o[c] = static_cast<float>(acc[c]);
      }
    }
  }

  int ia = qkv.id;
  std::vector<std::uint8_t> mask(key_valid.begin(), key_valid.end());
  return qkv.graph->push(
      std::move(out), {ia},
      [ia, probs, mask = std::move(mask), seq_len, heads, batch, width, dh, stride, scale](Graph& g, int self) {
        const auto& x = g.value(ia).values;
        const auto& go = g.grad(self);
        auto& gx = g.grad(ia);
        std::vector<double> dP(seq_len), dS(seq_len);
        std::vector<double> dq(dh);
        // dK and dV for one (sequence, head) block, accumulated over queries.
        std::vector<double> dK(seq_len * dh), dV(seq_len * dh);
        for (std::size_t b = 0; b < batch; ++b) {
          const std::size_t base = b * seq_len;
          for (std::size_t h = 0; h < heads; ++h) {
            const float* P = probs->data() + (b * heads + h) * seq_len * seq_len;
            std::fill(dK.begin(), dK.end(), 0.0);
            std::fill(dV.begin(), dV.end(), 0.0);
            for (std::size_t i = 0; i < seq_len; ++i) {
              const float* gout = go.data() + (base + i) * width + h * dh;
              const float* q = x.data() + (base + i) * stride + h * dh;
              double row_dot = 0.0;
              for (std::size_t j = 0; j < seq_len; ++j) {
                if (!mask[base + j]) continue;
                const float* v = x.data() + (base + j) * stride + 2 * width + h * dh;
                double s = 0.0;
                for (std::size_t c = 0; c < dh; ++c) s += double(gout[c]) * v[c];
                dP[j] = s;
                row_dot += s * P[i * seq_len + j];
                const double p = P[i * seq_len + j];
                for (std::size_t c = 0; c < dh; ++c) dV[j * dh + c] += p * gout[c];
              }
              std::fill(dq.begin(), dq.end(), 0.0);
              for (std::size_t j = 0; j < seq_len; ++j) {
                if (!mask[base + j]) continue;
                dS[j] = P[i * seq_len + j] * (dP[j] - row_dot) * scale;
                const float* k = x.data() + (base + j) * stride + width + h * dh;
                for (std::size_t c = 0; c < dh; ++c) {
                  dq[c] += dS[j] * k[c];
                  dK[j * dh + c] += dS[j] * q[c];
                }
              }
              float* gq = gx.data() + (base + i) * stride + h * dh;
              for (std::size_t c = 0; c < dh; ++c) gq[c] += static_cast<float>(dq[c]);
            }
            for (std::size_t j = 0; j < seq_len; ++j) {
              float* gk = gx.data() + (base + j) * stride + width + h * dh;
              float* gv = gx.data() + (base + j) * stride + 2 * width + h * dh;
              for (std::size_t c = 0; c < dh; ++c) {
                gk[c] += static_cast<float>(dK[j * dh + c]);
                gv[c] += static_cast<float>(dV[j * dh + c]);
              }
            }
          }
        }
      });
}

}  // namespace clef::num
