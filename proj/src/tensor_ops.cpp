#include <Eigen/Core>

#include <cmath>

#include "jscq/tensor.hpp"

namespace jscq {

using detail::make_result;
using detail::Node;

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

// With wide SIMD, Eigen's kernels peel differently depending on operand
// addresses, so products over heap-allocated vectors are not bitwise
// reproducible. Operands are copied into Eigen-owned (aligned) storage and
// results are added back elementwise.
RowMat owned(const double* p, std::size_t rows, std::size_t cols) {
  return CMapMat(p, rows, cols);
}

void add_into(double* dst, const RowMat& v) {
  MapMat(dst, v.rows(), v.cols()).array() += v.array();
}

std::vector<double> to_vector(const RowMat& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& a, std::size_t rank) {
  if (a.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                     " input, got " + shape_str(a.shape()));
  }
}

template <class F>
Tensor unary(const char* name, const Tensor& a, F&& forward,
             std::function<void(Node&)> backward) {
  std::vector<double> out(a.numel());
  auto in = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(in[i]);
  return make_result(a.shape(), std::move(out), {a}, name, std::move(backward));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_result(a.shape(), std::move(out), {a, b}, "add", [](Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make_result(a.shape(), std::move(out), {a, b}, "sub", [](Node& self) {
    const double sign[2] = {1.0, -1.0};
    for (std::size_t k = 0; k < 2; ++k) {
      auto& p = self.parents[k];
      if (!p->requires_grad) continue;
      auto g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign[k] * self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_result(a.shape(), std::move(out), {a, b}, "mul", [](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.data[i];
    }
    if (pb.requires_grad) {
      auto g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.data[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  return unary("scale", a, [factor](double v) { return v * factor; },
               [factor](Node& self) {
                 auto g = self.parents[0]->grad_buffer();
                 for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
               });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary("add_scalar", a, [value](double v) { return v + value; }, [](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor square(const Tensor& a) {
  return unary("square", a, [](double v) { return v * v; }, [](Node& self) {
    auto& p = *self.parents[0];
    auto g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * p.data[i] * self.grad[i];
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const RowMat y = owned(a.data().data(), m, k) * owned(b.data().data(), k, n);
  return make_result({m, n}, to_vector(y), {a, b}, "matmul", [m, k, n](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const RowMat go = owned(self.grad.data(), m, n);
    if (pa.requires_grad) {
      add_into(pa.grad_buffer().data(), go * owned(pb.data.data(), k, n).transpose());
    }
    if (pb.requires_grad) {
      add_into(pb.grad_buffer().data(), owned(pa.data.data(), m, k).transpose() * go);
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank("linear", x, 2);
  require_rank("linear", weight, 2);
  const auto batch = x.dim(0), in = x.dim(1), out_dim = weight.dim(0);
  if (weight.dim(1) != in || bias.numel() != out_dim) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                     shape_str(weight.shape()) + " and bias " + shape_str(bias.shape()));
  }
  RowMat y = owned(x.data().data(), batch, in) * owned(weight.data().data(), out_dim, in).transpose();
  y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.data().data(), out_dim);
  return make_result({batch, out_dim}, to_vector(y), {x, weight, bias}, "linear",
                     [batch, in, out_dim](Node& self) {
                       auto& px = *self.parents[0];
                       auto& pw = *self.parents[1];
                       auto& pb = *self.parents[2];
                       const RowMat go = owned(self.grad.data(), batch, out_dim);
                       if (px.requires_grad) {
                         add_into(px.grad_buffer().data(), go * owned(pw.data.data(), out_dim, in));
                       }
                       if (pw.requires_grad) {
                         add_into(pw.grad_buffer().data(), go.transpose() * owned(px.data.data(), batch, in));
                       }
                       if (pb.requires_grad) {
                         add_into(pb.grad_buffer().data(), go.colwise().sum());
                       }
                     });
}

Tensor relu(const Tensor& a) {
  return unary("relu", a, [](double v) { return v > 0.0 ? v : 0.0; }, [](Node& self) {
    auto& p = *self.parents[0];
    auto g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (p.data[i] > 0.0) g[i] += self.grad[i];
    }
  });
}

Tensor sigmoid(const Tensor& a) {
  return unary("sigmoid", a, [](double v) { return 1.0 / (1.0 + std::exp(-v)); }, [](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = self.data[i];
      g[i] += self.grad[i] * s * (1.0 - s);
    }
  });
}

Tensor prelu(const Tensor& a, const Tensor& slope) {
  if (a.rank() < 2 || slope.numel() != a.dim(1)) {
    throw ShapeError("prelu: input " + shape_str(a.shape()) + " needs one slope per channel, got " +
                     shape_str(slope.shape()));
  }
  const auto outer = a.dim(0), channels = a.dim(1), inner = a.numel() / (outer * channels);
  std::vector<double> out(a.numel());
  auto in = a.data();
  auto s = slope.data();
  for (std::size_t b = 0; b < outer; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t base = (b * channels + c) * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        const double v = in[base + i];
        out[base + i] = v > 0.0 ? v : s[c] * v;
      }
    }
  }
  return make_result(a.shape(), std::move(out), {a, slope}, "prelu",
                     [outer, channels, inner](Node& self) {
                       auto& px = *self.parents[0];
                       auto& ps = *self.parents[1];
                       std::span<double> gx, gs;
                       if (px.requires_grad) gx = px.grad_buffer();
                       if (ps.requires_grad) gs = ps.grad_buffer();
                       for (std::size_t b = 0; b < outer; ++b) {
                         for (std::size_t c = 0; c < channels; ++c) {
                           const std::size_t base = (b * channels + c) * inner;
                           double acc = 0.0;
                           for (std::size_t i = 0; i < inner; ++i) {
                             const double v = px.data[base + i];
                             const double go = self.grad[base + i];
                             if (v > 0.0) {
                               if (!gx.empty()) gx[base + i] += go;
                             } else {
                               if (!gx.empty()) gx[base + i] += ps.data[c] * go;
                               acc += v * go;
                             }
                           }
                           if (!gs.empty()) gs[c] += acc;
                         }
                       }
                     });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return make_result({1}, {total}, {a}, "sum", [](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.numel());
  double total = 0.0;
  for (double v : a.data()) total += v;
  return make_result({1}, {total / n}, {a}, "mean", [n](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (auto& v : g) v += self.grad[0] / n;
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel_of(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_result(std::move(shape), std::move(out), {a}, "reshape", [](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& perm) {
  const auto rank = a.rank();
  if (perm.size() != rank) {
    throw ShapeError("permute: permutation of length " + std::to_string(perm.size()) +
                     " for shape " + shape_str(a.shape()));
  }
  std::vector<bool> used(rank, false);
  for (auto p : perm) {
    if (p >= rank || used[p]) throw ShapeError("permute: invalid permutation for " + shape_str(a.shape()));
    used[p] = true;
  }
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = a.dim(perm[i]);
  std::vector<std::size_t> in_stride(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_stride[i - 1] = in_stride[i] * a.dim(i);
  // source offset for every destination index
  std::vector<std::size_t> src(a.numel());
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t flat = 0; flat < src.size(); ++flat) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < rank; ++i) off += idx[i] * in_stride[perm[i]];
    src[flat] = off;
    for (std::size_t i = rank; i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  std::vector<double> out(a.numel());
  auto in = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[src[i]];
  return make_result(std::move(out_shape), std::move(out), {a}, "permute",
                     [src = std::move(src)](Node& self) {
                       auto g = self.parents[0]->grad_buffer();
                       for (std::size_t i = 0; i < src.size(); ++i) g[src[i]] += self.grad[i];
                     });
}

Tensor concat_columns(const Tensor& a, const Tensor& b) {
  require_rank("concat_columns", a, 2);
  require_rank("concat_columns", b, 2);
  if (a.dim(0) != b.dim(0)) {
    throw ShapeError("concat_columns: row counts differ " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const auto rows = a.dim(0), na = a.dim(1), nb = b.dim(1);
  std::vector<double> out(rows * (na + nb));
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.data().begin() + r * na, na, out.begin() + r * (na + nb));
    std::copy_n(b.data().begin() + r * nb, nb, out.begin() + r * (na + nb) + na);
  }
  return make_result({rows, na + nb}, std::move(out), {a, b}, "concat_columns",
                     [rows, na, nb](Node& self) {
                       auto& pa = *self.parents[0];
                       auto& pb = *self.parents[1];
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* go = self.grad.data() + r * (na + nb);
                         if (pa.requires_grad) {
                           auto g = pa.grad_buffer();
                           for (std::size_t i = 0; i < na; ++i) g[r * na + i] += go[i];
                         }
                         if (pb.requires_grad) {
                           auto g = pb.grad_buffer();
                           for (std::size_t i = 0; i < nb; ++i) g[r * nb + i] += go[na + i];
                         }
                       }
                     });
}

Tensor pixel_shuffle(const Tensor& x, std::size_t factor) {
  require_rank("pixel_shuffle", x, 4);
  const auto batch = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto rr = factor * factor;
  if (factor == 0 || cin % rr != 0) {
    throw ShapeError("pixel_shuffle: channels of " + shape_str(x.shape()) +
                     " not divisible by factor^2=" + std::to_string(rr));
  }
  const auto cout = cin / rr, ho = h * factor, wo = w * factor;
  // out[b][c][y*r+i][x*r+j] = in[b][c*r*r + i*r + j][y][x]
  std::vector<std::size_t> src(x.numel());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < cout; ++c)
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox) {
          const auto i = oy % factor, j = ox % factor;
          const auto ic = c * rr + i * factor + j;
          src[((b * cout + c) * ho + oy) * wo + ox] = ((b * cin + ic) * h + oy / factor) * w + ox / factor;
        }
  std::vector<double> out(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[src[i]];
  return make_result({batch, cout, ho, wo}, std::move(out), {x}, "pixel_shuffle",
                     [src = std::move(src)](Node& self) {
                       auto g = self.parents[0]->grad_buffer();
                       for (std::size_t i = 0; i < src.size(); ++i) g[src[i]] += self.grad[i];
                     });
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank("global_avg_pool", x, 4);
  const auto batch = x.dim(0), ch = x.dim(1), area = x.dim(2) * x.dim(3);
  std::vector<double> out(batch * ch);
  auto in = x.data();
  for (std::size_t bc = 0; bc < batch * ch; ++bc) {
    double s = 0.0;
    for (std::size_t i = 0; i < area; ++i) s += in[bc * area + i];
    out[bc] = s / static_cast<double>(area);
  }
  return make_result({batch, ch}, std::move(out), {x}, "global_avg_pool", [area](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    const double inv = 1.0 / static_cast<double>(area);
    for (std::size_t bc = 0; bc < self.grad.size(); ++bc) {
      const double go = self.grad[bc] * inv;
      for (std::size_t i = 0; i < area; ++i) g[bc * area + i] += go;
    }
  });
}

Tensor mul_channels(const Tensor& x, const Tensor& gate) {
  require_rank("mul_channels", x, 4);
  require_rank("mul_channels", gate, 2);
  const auto batch = x.dim(0), ch = x.dim(1), area = x.dim(2) * x.dim(3);
  if (gate.dim(0) != batch || gate.dim(1) != ch) {
    throw ShapeError("mul_channels: gate " + shape_str(gate.shape()) + " does not match features " +
                     shape_str(x.shape()));
  }
  std::vector<double> out(x.numel());
  auto in = x.data();
  auto gv = gate.data();
  for (std::size_t bc = 0; bc < batch * ch; ++bc)
    for (std::size_t i = 0; i < area; ++i) out[bc * area + i] = in[bc * area + i] * gv[bc];
  return make_result(x.shape(), std::move(out), {x, gate}, "mul_channels", [area](Node& self) {
    auto& px = *self.parents[0];
    auto& pg = *self.parents[1];
    std::span<double> gx, gg;
    if (px.requires_grad) gx = px.grad_buffer();
    if (pg.requires_grad) gg = pg.grad_buffer();
    for (std::size_t bc = 0; bc < pg.data.size(); ++bc) {
      double acc = 0.0;
      for (std::size_t i = 0; i < area; ++i) {
        const double go = self.grad[bc * area + i];
        if (!gx.empty()) gx[bc * area + i] += go * pg.data[bc];
        acc += go * px.data[bc * area + i];
      }
      if (!gg.empty()) gg[bc] += acc;
    }
  });
}

}  // namespace jscq
