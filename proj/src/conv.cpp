#include <Eigen/Core>

#include "jscq/tensor.hpp"

namespace jscq {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

struct ConvGeometry {
  std::size_t batch, cin, h, w, cout, k, stride, pad, ho, wo;
  std::size_t rows() const { return cin * k * k; }
  std::size_t cols() const { return batch * ho * wo; }
};

// cols[(c*k + i)*k + j][(b*ho + oy)*wo + ox] = x[b][c][oy*s + i - p][ox*s + j - p]
void im2col(const ConvGeometry& g, const double* x, double* cols) {
  const std::size_t ncols = g.cols();
  for (std::size_t c = 0; c < g.cin; ++c)
    for (std::size_t i = 0; i < g.k; ++i)
      for (std::size_t j = 0; j < g.k; ++j) {
        double* row = cols + ((c * g.k + i) * g.k + j) * ncols;
        for (std::size_t b = 0; b < g.batch; ++b) {
          const double* plane = x + (b * g.cin + c) * g.h * g.w;
          for (std::size_t oy = 0; oy < g.ho; ++oy) {
            const long iy = static_cast<long>(oy * g.stride + i) - static_cast<long>(g.pad);
            double* dst = row + (b * g.ho + oy) * g.wo;
            if (iy < 0 || iy >= static_cast<long>(g.h)) {
              std::fill_n(dst, g.wo, 0.0);
              continue;
            }
            const double* src = plane + iy * g.w;
            for (std::size_t ox = 0; ox < g.wo; ++ox) {
              const long ix = static_cast<long>(ox * g.stride + j) - static_cast<long>(g.pad);
              dst[ox] = (ix < 0 || ix >= static_cast<long>(g.w)) ? 0.0 : src[ix];
            }
          }
        }
      }
}

void col2im_add(const ConvGeometry& g, const double* cols, double* dx) {
  const std::size_t ncols = g.cols();
  for (std::size_t c = 0; c < g.cin; ++c)
    for (std::size_t i = 0; i < g.k; ++i)
      for (std::size_t j = 0; j < g.k; ++j) {
        const double* row = cols + ((c * g.k + i) * g.k + j) * ncols;
        for (std::size_t b = 0; b < g.batch; ++b) {
          double* plane = dx + (b * g.cin + c) * g.h * g.w;
          for (std::size_t oy = 0; oy < g.ho; ++oy) {
            const long iy = static_cast<long>(oy * g.stride + i) - static_cast<long>(g.pad);
            if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
            const double* src = row + (b * g.ho + oy) * g.wo;
            double* dst = plane + iy * g.w;
            for (std::size_t ox = 0; ox < g.wo; ++ox) {
              const long ix = static_cast<long>(ox * g.stride + j) - static_cast<long>(g.pad);
              if (ix >= 0 && ix < static_cast<long>(g.w)) dst[ix] += src[ox];
            }
          }
        }
      }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  if (x.rank() != 4 || weight.rank() != 4) {
    throw ShapeError("conv2d: expected rank-4 input and weight, got " + shape_str(x.shape()) +
                     " and " + shape_str(weight.shape()));
  }
  if (stride != 1 && stride != 2) {
    throw ShapeError("conv2d: stride must be 1 or 2, got " + std::to_string(stride));
  }
  ConvGeometry g{};
  g.batch = x.dim(0);
  g.cin = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.cout = weight.dim(0);
  g.k = weight.dim(2);
  g.stride = stride;
  g.pad = padding;
  if (weight.dim(1) != g.cin || weight.dim(3) != g.k || bias.numel() != g.cout) {
    throw ShapeError("conv2d: input " + shape_str(x.shape()) + " incompatible with weight " +
                     shape_str(weight.shape()) + " and bias " + shape_str(bias.shape()));
  }
  if (g.h + 2 * g.pad < g.k || g.w + 2 * g.pad < g.k) {
    throw ShapeError("conv2d: kernel " + shape_str(weight.shape()) + " larger than padded input " +
                     shape_str(x.shape()));
  }
  g.ho = (g.h + 2 * g.pad - g.k) / g.stride + 1;
  g.wo = (g.w + 2 * g.pad - g.k) / g.stride + 1;

  const std::size_t area = g.ho * g.wo;
  std::vector<double> cols(g.rows() * g.cols());
  im2col(g, x.data().data(), cols.data());
  RowMat prod = CMapMat(weight.data().data(), g.cout, g.rows()) * CMapMat(cols.data(), g.rows(), g.cols());

  std::vector<double> out(g.batch * g.cout * area);
  auto bv = bias.data();
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t o = 0; o < g.cout; ++o) {
      const double* src = prod.data() + o * g.cols() + b * area;
      double* dst = out.data() + (b * g.cout + o) * area;
      for (std::size_t i = 0; i < area; ++i) dst[i] = src[i] + bv[o];
    }

  auto saved_cols = std::make_shared<std::vector<double>>(std::move(cols));
  return detail::make_result(
      {g.batch, g.cout, g.ho, g.wo}, std::move(out), {x, weight, bias}, "conv2d",
      [g, area, saved_cols](detail::Node& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        auto& pb = *self.parents[2];
        // upstream gradient as [cout, batch*area]
        RowMat go(g.cout, g.cols());
        for (std::size_t b = 0; b < g.batch; ++b)
          for (std::size_t o = 0; o < g.cout; ++o)
            std::copy_n(self.grad.data() + (b * g.cout + o) * area, area,
                        go.data() + o * g.cols() + b * area);
        if (pw.requires_grad) {
          MapMat(pw.grad_buffer().data(), g.cout, g.rows()).noalias() +=
              go * CMapMat(saved_cols->data(), g.rows(), g.cols()).transpose();
        }
        if (pb.requires_grad) {
          Eigen::Map<Eigen::VectorXd>(pb.grad_buffer().data(), g.cout) += go.rowwise().sum();
        }
        if (px.requires_grad) {
          RowMat dcols = CMapMat(pw.data.data(), g.cout, g.rows()).transpose() * go;
          col2im_add(g, dcols.data(), px.grad_buffer().data());
        }
      });
}

}  // namespace jscq
