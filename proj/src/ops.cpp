#include "specfas/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

namespace specfas::ops {

namespace {

std::vector<std::size_t> contiguous_strides(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
  return strides;
}

// Strides of `in` viewed against the (right-aligned) output shape; broadcast
// axes get stride 0.
std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> result(out.size(), 0);
  const auto own = contiguous_strides(in);
  const std::size_t offset = out.size() - in.size();
  for (std::size_t i = 0; i < in.size(); ++i) {
    result[offset + i] = (in[i] == 1 && out[offset + i] != 1) ? 0 : own[i];
  }
  return result;
}

// Calls f(out_index, a_index, b_index) over every output element in order.
template <class F>
void broadcast_loop(const Shape& out, const std::vector<std::size_t>& sa,
                    const std::vector<std::size_t>& sb, F&& f) {
  const std::size_t n = shape_numel(out);
  if (n == 0) return;
  const std::size_t rank = out.size();
  if (rank == 0) {
    f(0, 0, 0);
    return;
  }
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0;
  std::size_t ib = 0;
  const std::size_t inner = out[rank - 1];
  const std::size_t step_a = sa[rank - 1];
  const std::size_t step_b = sb[rank - 1];
  for (std::size_t o = 0; o < n; o += inner) {
    for (std::size_t k = 0; k < inner; ++k) f(o + k, ia + k * step_a, ib + k * step_b);
    for (std::size_t ax = rank - 1; ax-- > 0;) {
      ++idx[ax];
      ia += sa[ax];
      ib += sb[ax];
      if (idx[ax] < out[ax]) break;
      ia -= sa[ax] * out[ax];
      ib -= sb[ax] * out[ax];
      idx[ax] = 0;
    }
  }
}

void require_finite(const std::vector<double>& values, const char* op) {
  for (double v : values) {
    if (!std::isfinite(v)) throw DomainError(fmt::format("{} produced a non-finite value", op));
  }
}

void require_rank_at_least(const Tensor& a, std::size_t rank, const char* op) {
  if (a.dim() < rank) {
    throw ShapeError(fmt::format("{} needs rank >= {}, got {}", op, rank, shape_str(a.shape())));
  }
}

template <class Fwd, class Bwd>
Tensor unary(const Tensor& a, Fwd fwd, Bwd dfdx) {
  std::vector<double> out(a.numel());
  const auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(x[i]);
  return Tensor::make_result(a.shape(), std::move(out), {a},
                             [a, dfdx](std::span<const double> g, std::span<double* const> gin) {
                               const auto x = a.data();
                               for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i] * dfdx(x[i]);
                             });
}

enum class BinaryKind { Add, Sub, Mul };

Tensor binary(const Tensor& a, const Tensor& b, BinaryKind kind) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  const auto sa = broadcast_strides(a.shape(), out_shape);
  const auto sb = broadcast_strides(b.shape(), out_shape);
  std::vector<double> out(shape_numel(out_shape));
  const auto x = a.data();
  const auto y = b.data();
  switch (kind) {
    case BinaryKind::Add:
      broadcast_loop(out_shape, sa, sb, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = x[i] + y[j]; });
      break;
    case BinaryKind::Sub:
      broadcast_loop(out_shape, sa, sb, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = x[i] - y[j]; });
      break;
    case BinaryKind::Mul:
      broadcast_loop(out_shape, sa, sb, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = x[i] * y[j]; });
      break;
  }
  return Tensor::make_result(
      out_shape, std::move(out), {a, b},
      [a, b, out_shape, sa, sb, kind](std::span<const double> g, std::span<double* const> gin) {
        double* ga = gin[0];
        double* gb = gin[1];
        const auto x = a.data();
        const auto y = b.data();
        broadcast_loop(out_shape, sa, sb, [&](std::size_t o, std::size_t i, std::size_t j) {
          switch (kind) {
            case BinaryKind::Add:
              if (ga) ga[i] += g[o];
              if (gb) gb[j] += g[o];
              break;
            case BinaryKind::Sub:
              if (ga) ga[i] += g[o];
              if (gb) gb[j] -= g[o];
              break;
            case BinaryKind::Mul:
              if (ga) ga[i] += g[o] * y[j];
              if (gb) gb[j] += g[o] * x[i];
              break;
          }
        });
      });
}

// Splits `shape` around `axis` into (outer, axis length, inner) extents.
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t length = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.length = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError(fmt::format("cannot broadcast shapes {} and {}", shape_str(a), shape_str(b)));
    }
    out[i] = da == 1 ? db : da;
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::Add); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::Sub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::Mul); }

Tensor scale(const Tensor& a, double factor) {
  return unary(a, [factor](double x) { return factor * x; }, [factor](double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary(a, [value](double x) { return x + value; }, [](double) { return 1.0; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor relu(const Tensor& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
  std::vector<double> out(a.numel());
  const auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(x[i]);
  require_finite(out, "exp");
  auto values = out;
  return Tensor::make_result(a.shape(), std::move(out), {a},
                             [values = std::move(values)](std::span<const double> g, std::span<double* const> gin) {
                               for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i] * values[i];
                             });
}

Tensor log(const Tensor& a) {
  for (double x : a.data()) {
    if (!(x > 0.0)) throw DomainError(fmt::format("log of non-positive value {}", x));
  }
  return unary(a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

Tensor pow(const Tensor& a, double exponent) {
  const bool integral = std::floor(exponent) == exponent;
  for (double x : a.data()) {
    if (x < 0.0 && !integral) {
      throw DomainError(fmt::format("pow of negative base {} with exponent {}", x, exponent));
    }
  }
  // At a zero base the derivative of x^p for p < 1 is unbounded; it is taken
  // as zero there.
  return unary(
      a, [exponent](double x) { return std::pow(x, exponent); },
      [exponent](double x) {
        if (exponent == 0.0) return 0.0;
        if (x == 0.0) return exponent == 1.0 ? 1.0 : 0.0;
        return exponent * std::pow(x, exponent - 1.0);
      });
}

Tensor clamp_min(const Tensor& a, double floor) {
  return unary(a, [floor](double x) { return x < floor ? floor : x; },
               [floor](double x) { return x < floor ? 0.0 : 1.0; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const bool batched = a.dim() == 3;
  if (!((a.dim() == 2 && b.dim() == 2) || (a.dim() == 3 && b.dim() == 3))) {
    throw ShapeError(fmt::format("matmul needs two rank-2 or two rank-3 operands, got {} and {}",
                                 shape_str(a.shape()), shape_str(b.shape())));
  }
  const std::size_t batch = batched ? a.size(0) : 1;
  const std::size_t m = a.size(a.dim() - 2);
  const std::size_t k = a.size(a.dim() - 1);
  const std::size_t n = b.size(b.dim() - 1);
  if (b.size(b.dim() - 2) != k || (batched && b.size(0) != batch)) {
    throw ShapeError(fmt::format("matmul shape mismatch: {} x {}", shape_str(a.shape()), shape_str(b.shape())));
  }
  std::vector<double> out(batch * m * n, 0.0);
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t bi = 0; bi < batch; ++bi) {
    const double* xa = x.data() + bi * m * k;
    const double* yb = y.data() + bi * k * n;
    double* o = out.data() + bi * m * n;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        const double v = xa[i * k + p];
        const double* row = yb + p * n;
        double* orow = o + i * n;
        for (std::size_t j = 0; j < n; ++j) orow[j] += v * row[j];
      }
    }
  }
  Shape shape = batched ? Shape{batch, m, n} : Shape{m, n};
  return Tensor::make_result(
      shape, std::move(out), {a, b}, [a, b, batch, m, k, n](std::span<const double> g, std::span<double* const> gin) {
        const auto x = a.data();
        const auto y = b.data();
        for (std::size_t bi = 0; bi < batch; ++bi) {
          const double* xa = x.data() + bi * m * k;
          const double* yb = y.data() + bi * k * n;
          const double* gb = g.data() + bi * m * n;
          if (gin[0]) {
            double* ga = gin[0] + bi * m * k;
            for (std::size_t i = 0; i < m; ++i) {
              for (std::size_t p = 0; p < k; ++p) {
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) acc += gb[i * n + j] * yb[p * n + j];
                ga[i * k + p] += acc;
              }
            }
          }
          if (gin[1]) {
            double* gy = gin[1] + bi * k * n;
            for (std::size_t i = 0; i < m; ++i) {
              for (std::size_t p = 0; p < k; ++p) {
                const double v = xa[i * k + p];
                for (std::size_t j = 0; j < n; ++j) gy[p * n + j] += v * gb[i * n + j];
              }
            }
          }
        }
      });
}

Tensor transpose_last2(const Tensor& a) {
  if (a.dim() != 2 && a.dim() != 3) {
    throw ShapeError(fmt::format("transpose_last2 needs rank 2 or 3, got {}", shape_str(a.shape())));
  }
  const std::size_t batch = a.dim() == 3 ? a.size(0) : 1;
  const std::size_t r = a.size(a.dim() - 2);
  const std::size_t c = a.size(a.dim() - 1);
  std::vector<double> out(a.numel());
  const auto x = a.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) out[b * r * c + j * r + i] = x[b * r * c + i * c + j];
    }
  }
  Shape shape = a.shape();
  std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
  return Tensor::make_result(shape, std::move(out), {a},
                             [batch, r, c](std::span<const double> g, std::span<double* const> gin) {
                               for (std::size_t b = 0; b < batch; ++b) {
                                 for (std::size_t i = 0; i < r; ++i) {
                                   for (std::size_t j = 0; j < c; ++j) {
                                     gin[0][b * r * c + i * c + j] += g[b * r * c + j * r + i];
                                   }
                                 }
                               }
                             });
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, Conv2dOptions options) {
  if (input.dim() != 4 || kernel.dim() != 4) {
    throw ShapeError(fmt::format("conv2d needs input [n,h,w,c] and kernel [kh,kw,cin,cout], got {} and {}",
                                 shape_str(input.shape()), shape_str(kernel.shape())));
  }
  const std::size_t n = input.size(0);
  const std::size_t h = input.size(1);
  const std::size_t w = input.size(2);
  const std::size_t cin = input.size(3);
  const std::size_t kh = kernel.size(0);
  const std::size_t kw = kernel.size(1);
  const std::size_t cout = kernel.size(3);
  const std::size_t stride = options.stride;
  const std::size_t pad = options.padding;
  if (kernel.size(2) != cin) {
    throw ShapeError(fmt::format("conv2d channel mismatch: input {} vs kernel {}", shape_str(input.shape()),
                                 shape_str(kernel.shape())));
  }
  if (stride == 0 || h + 2 * pad < kh || w + 2 * pad < kw) {
    throw ShapeError(fmt::format("conv2d geometry invalid: input {} kernel {} stride {} padding {}",
                                 shape_str(input.shape()), shape_str(kernel.shape()), stride, pad));
  }
  const std::size_t ho = (h + 2 * pad - kh) / stride + 1;
  const std::size_t wo = (w + 2 * pad - kw) / stride + 1;

  // Calls f(out_offset, in_offset, kernel_offset) for every valid tap.
  auto taps = [=](auto&& f) {
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t oy = 0; oy < ho; ++oy) {
        for (std::size_t ox = 0; ox < wo; ++ox) {
          const std::size_t out_off = ((b * ho + oy) * wo + ox) * cout;
          for (std::size_t ky = 0; ky < kh; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const std::ptrdiff_t ix =
                  static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
              const std::size_t in_off = ((b * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)) * cin;
              const std::size_t k_off = (ky * kw + kx) * cin * cout;
              f(out_off, in_off, k_off);
            }
          }
        }
      }
    }
  };

  std::vector<double> out(n * ho * wo * cout, 0.0);
  {
    const double* x = input.data().data();
    const double* k = kernel.data().data();
    taps([&](std::size_t oo, std::size_t io, std::size_t ko) {
      double* orow = out.data() + oo;
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const double v = x[io + ci];
        if (v == 0.0) continue;
        const double* krow = k + ko + ci * cout;
        for (std::size_t co = 0; co < cout; ++co) orow[co] += v * krow[co];
      }
    });
  }
  return Tensor::make_result(
      {n, ho, wo, cout}, std::move(out), {input, kernel},
      [input, kernel, taps, cin, cout](std::span<const double> g, std::span<double* const> gin) {
        const double* x = input.data().data();
        const double* k = kernel.data().data();
        double* gx = gin[0];
        double* gk = gin[1];
        taps([&](std::size_t oo, std::size_t io, std::size_t ko) {
          const double* grow = g.data() + oo;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double* krow = k + ko + ci * cout;
            if (gx) {
              double acc = 0.0;
              for (std::size_t co = 0; co < cout; ++co) acc += krow[co] * grow[co];
              gx[io + ci] += acc;
            }
            if (gk) {
              const double v = x[io + ci];
              double* gkrow = gk + ko + ci * cout;
              for (std::size_t co = 0; co < cout; ++co) gkrow[co] += v * grow[co];
            }
          }
        });
      });
}

Tensor softmax(const Tensor& a) {
  require_rank_at_least(a, 1, "softmax");
  const std::size_t len = a.size(a.dim() - 1);
  const std::size_t rows = len == 0 ? 0 : a.numel() / len;
  std::vector<double> out(a.numel());
  const auto x = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * len;
    double* yr = out.data() + r * len;
    const double mx = *std::max_element(xr, xr + len);
    double total = 0.0;
    for (std::size_t i = 0; i < len; ++i) total += (yr[i] = std::exp(xr[i] - mx));
    for (std::size_t i = 0; i < len; ++i) yr[i] /= total;
  }
  auto y = out;
  return Tensor::make_result(a.shape(), std::move(out), {a},
                             [y = std::move(y), rows, len](std::span<const double> g, std::span<double* const> gin) {
                               for (std::size_t r = 0; r < rows; ++r) {
                                 const double* yr = y.data() + r * len;
                                 const double* gr = g.data() + r * len;
                                 double dot = 0.0;
                                 for (std::size_t i = 0; i < len; ++i) dot += gr[i] * yr[i];
                                 for (std::size_t i = 0; i < len; ++i) gin[0][r * len + i] += yr[i] * (gr[i] - dot);
                               }
                             });
}

Tensor log_softmax(const Tensor& a) {
  require_rank_at_least(a, 1, "log_softmax");
  const std::size_t len = a.size(a.dim() - 1);
  const std::size_t rows = len == 0 ? 0 : a.numel() / len;
  std::vector<double> out(a.numel());
  std::vector<double> probs(a.numel());
  const auto x = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * len;
    const double mx = *std::max_element(xr, xr + len);
    double total = 0.0;
    for (std::size_t i = 0; i < len; ++i) total += std::exp(xr[i] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t i = 0; i < len; ++i) {
      out[r * len + i] = xr[i] - lse;
      probs[r * len + i] = std::exp(xr[i] - lse);
    }
  }
  return Tensor::make_result(
      a.shape(), std::move(out), {a},
      [probs = std::move(probs), rows, len](std::span<const double> g, std::span<double* const> gin) {
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gr = g.data() + r * len;
          double total = 0.0;
          for (std::size_t i = 0; i < len; ++i) total += gr[i];
          for (std::size_t i = 0; i < len; ++i) gin[0][r * len + i] += gr[i] - probs[r * len + i] * total;
        }
      });
}

Tensor l2_normalize(const Tensor& a) {
  require_rank_at_least(a, 1, "l2_normalize");
  const std::size_t len = a.size(a.dim() - 1);
  const std::size_t rows = len == 0 ? 0 : a.numel() / len;
  std::vector<double> out(a.numel());
  std::vector<double> norms(rows);
  const auto x = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (std::size_t i = 0; i < len; ++i) sq += x[r * len + i] * x[r * len + i];
    const double norm = std::sqrt(sq);
    if (!(norm > 0.0)) throw DomainError(fmt::format("l2_normalize of a zero-norm row (row {})", r));
    norms[r] = norm;
    for (std::size_t i = 0; i < len; ++i) out[r * len + i] = x[r * len + i] / norm;
  }
  auto y = out;
  return Tensor::make_result(
      a.shape(), std::move(out), {a},
      [y = std::move(y), norms = std::move(norms), rows, len](std::span<const double> g, std::span<double* const> gin) {
        for (std::size_t r = 0; r < rows; ++r) {
          const double* yr = y.data() + r * len;
          const double* gr = g.data() + r * len;
          double dot = 0.0;
          for (std::size_t i = 0; i < len; ++i) dot += gr[i] * yr[i];
          for (std::size_t i = 0; i < len; ++i) gin[0][r * len + i] += (gr[i] - yr[i] * dot) / norms[r];
        }
      });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  const std::size_t n = a.numel();
  return Tensor::make_result({}, {total}, {a}, [n](std::span<const double> g, std::span<double* const> gin) {
    for (std::size_t i = 0; i < n; ++i) gin[0][i] += g[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor sum_axis(const Tensor& a, std::size_t axis, bool keepdim) {
  if (axis >= a.dim()) {
    throw ShapeError(fmt::format("sum_axis: axis {} out of range for {}", axis, shape_str(a.shape())));
  }
  const AxisSplit s = split_axis(a.shape(), axis);
  std::vector<double> out(s.outer * s.inner, 0.0);
  const auto x = a.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t l = 0; l < s.length; ++l) {
      const double* src = x.data() + (o * s.length + l) * s.inner;
      double* dst = out.data() + o * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
    }
  }
  Shape shape = a.shape();
  if (keepdim) {
    shape[axis] = 1;
  } else {
    shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  }
  return Tensor::make_result(shape, std::move(out), {a}, [s](std::span<const double> g, std::span<double* const> gin) {
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t l = 0; l < s.length; ++l) {
        double* dst = gin[0] + (o * s.length + l) * s.inner;
        const double* src = g.data() + o * s.inner;
        for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
      }
    }
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) {
    throw ShapeError(fmt::format("concat: axis {} out of range for {}", axis, shape_str(first)));
  }
  Shape shape = first;
  shape[axis] = 0;
  std::vector<std::size_t> lengths;
  for (const auto& p : parts) {
    Shape probe = p.shape();
    if (probe.size() != first.size()) {
      throw ShapeError(fmt::format("concat rank mismatch: {} vs {}", shape_str(first), shape_str(probe)));
    }
    for (std::size_t i = 0; i < probe.size(); ++i) {
      if (i != axis && probe[i] != first[i]) {
        throw ShapeError(fmt::format("concat shape mismatch on axis {}: {} vs {}", i, shape_str(first),
                                     shape_str(probe)));
      }
    }
    lengths.push_back(probe[axis]);
    shape[axis] += probe[axis];
  }
  const AxisSplit s = split_axis(shape, axis);
  std::vector<double> out(shape_numel(shape));
  std::size_t offset = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const auto x = parts[pi].data();
    const std::size_t chunk = lengths[pi] * s.inner;
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(x.data() + o * chunk, chunk, out.data() + o * s.length * s.inner + offset * s.inner);
    }
    offset += lengths[pi];
  }
  return Tensor::make_result(shape, std::move(out), parts,
                             [s, lengths](std::span<const double> g, std::span<double* const> gin) {
                               std::size_t offset = 0;
                               for (std::size_t pi = 0; pi < lengths.size(); ++pi) {
                                 const std::size_t chunk = lengths[pi] * s.inner;
                                 if (gin[pi]) {
                                   for (std::size_t o = 0; o < s.outer; ++o) {
                                     const double* src = g.data() + o * s.length * s.inner + offset * s.inner;
                                     double* dst = gin[pi] + o * chunk;
                                     for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
                                   }
                                 }
                                 offset += lengths[pi];
                               }
                             });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  if (axis >= a.dim() || begin > end || end > a.size(axis)) {
    throw ShapeError(fmt::format("slice [{}, {}) on axis {} invalid for {}", begin, end, axis, shape_str(a.shape())));
  }
  const AxisSplit s = split_axis(a.shape(), axis);
  const std::size_t len = end - begin;
  std::vector<double> out(s.outer * len * s.inner);
  const auto x = a.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(x.data() + (o * s.length + begin) * s.inner, len * s.inner, out.data() + o * len * s.inner);
  }
  Shape shape = a.shape();
  shape[axis] = len;
  return Tensor::make_result(shape, std::move(out), {a},
                             [s, begin, len](std::span<const double> g, std::span<double* const> gin) {
                               for (std::size_t o = 0; o < s.outer; ++o) {
                                 const double* src = g.data() + o * len * s.inner;
                                 double* dst = gin[0] + (o * s.length + begin) * s.inner;
                                 for (std::size_t i = 0; i < len * s.inner; ++i) dst[i] += src[i];
                               }
                             });
}

Tensor broadcast_to(const Tensor& a, const Shape& shape) {
  if (broadcast_shape(a.shape(), shape) != shape) {
    throw ShapeError(fmt::format("cannot broadcast {} to {}", shape_str(a.shape()), shape_str(shape)));
  }
  const auto sa = broadcast_strides(a.shape(), shape);
  const std::vector<std::size_t> none(shape.size(), 0);
  std::vector<double> out(shape_numel(shape));
  const auto x = a.data();
  broadcast_loop(shape, sa, none, [&](std::size_t o, std::size_t i, std::size_t) { out[o] = x[i]; });
  return Tensor::make_result(shape, std::move(out), {a},
                             [shape, sa, none](std::span<const double> g, std::span<double* const> gin) {
                               broadcast_loop(shape, sa, none,
                                              [&](std::size_t o, std::size_t i, std::size_t) { gin[0][i] += g[o]; });
                             });
}

Tensor reshape(const Tensor& a, const Shape& shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError(fmt::format("cannot reshape {} to {}", shape_str(a.shape()), shape_str(shape)));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return Tensor::make_result(shape, std::move(out), {a}, [](std::span<const double> g, std::span<double* const> gin) {
    for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i];
  });
}

}  // namespace specfas::ops
