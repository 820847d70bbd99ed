#include "fullface/layers.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "fullface/error.hpp"

namespace fullface {

int conv_extent(int extent, int kernel, int stride, int pad) {
  return (extent + 2 * pad - kernel) / stride + 1;
}

int pooled_extent(int extent, int kernel, int stride) {
  int out = static_cast<int>(std::ceil(static_cast<double>(extent - kernel) / stride)) + 1;
  // The last window must start inside the input.
  if ((out - 1) * stride >= extent) --out;
  return out;
}

namespace {

void im2col(const Tensor& x, int k, int stride, int pad, int out_h, int out_w, RowMatrix& cols) {
  const int c_in = static_cast<int>(x.dim(0));
  const int h = static_cast<int>(x.dim(1));
  const int w = static_cast<int>(x.dim(2));
  cols.resize(static_cast<Eigen::Index>(c_in) * k * k, static_cast<Eigen::Index>(out_h) * out_w);
  const double* src = x.data();
  for (int c = 0; c < c_in; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* row = cols.row((c * k + ky) * k + kx).data();
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ky;
          double* dst = row + oy * out_w;
          if (iy < 0 || iy >= h) {
            for (int ox = 0; ox < out_w; ++ox) dst[ox] = 0.0;
            continue;
          }
          const double* line = src + (static_cast<std::size_t>(c) * h + iy) * w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pad + kx;
            dst[ox] = (ix >= 0 && ix < w) ? line[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const RowMatrix& cols, int c_in, int h, int w, int k, int stride, int pad, int out_h,
            int out_w, Tensor& dx) {
  dx = Tensor({static_cast<std::size_t>(c_in), static_cast<std::size_t>(h),
               static_cast<std::size_t>(w)});
  double* dst = dx.data();
  for (int c = 0; c < c_in; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* row = cols.row((c * k + ky) * k + kx).data();
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          double* line = dst + (static_cast<std::size_t>(c) * h + iy) * w;
          const double* src = row + oy * out_w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) line[ix] += src[ox];
          }
        }
      }
    }
  }
}

void require_rank3(const Tensor& x, int channels, const char* what) {
  if (x.rank() != 3 || static_cast<int>(x.dim(0)) != channels) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(channels) +
                     " input channels, got " + x.shape_string());
  }
}

}  // namespace

ConvLayer::ConvLayer(int in, int out, int k, int s, int p, int pk, int ps)
    : in_channels(in),
      out_channels(out),
      kernel(k),
      stride(s),
      pad(p),
      pool_kernel(pk),
      pool_stride(ps),
      weight({static_cast<std::size_t>(out), static_cast<std::size_t>(in * k * k)}),
      bias({static_cast<std::size_t>(out)}) {}

std::vector<std::size_t> ConvLayer::output_shape(const std::vector<std::size_t>& in) const {
  int h = conv_extent(static_cast<int>(in.at(1)), kernel, stride, pad);
  int w = conv_extent(static_cast<int>(in.at(2)), kernel, stride, pad);
  if (h <= 0 || w <= 0) throw ShapeError("convolution input smaller than its kernel");
  if (pool_kernel > 0) {
    h = pooled_extent(h, pool_kernel, pool_stride);
    w = pooled_extent(w, pool_kernel, pool_stride);
  }
  return {static_cast<std::size_t>(out_channels), static_cast<std::size_t>(h),
          static_cast<std::size_t>(w)};
}

Tensor ConvLayer::forward(const Tensor& x, Cache* cache) const {
  require_rank3(x, in_channels, "conv");
  const int in_h = static_cast<int>(x.dim(1));
  const int in_w = static_cast<int>(x.dim(2));
  const int ch = conv_extent(in_h, kernel, stride, pad);
  const int cw = conv_extent(in_w, kernel, stride, pad);
  if (ch <= 0 || cw <= 0) throw ShapeError("convolution input smaller than its kernel");

  RowMatrix local_cols;
  RowMatrix& cols = cache ? cache->columns : local_cols;
  im2col(x, kernel, stride, pad, ch, cw, cols);

  const ConstMatrixMap w(weight.data(), out_channels, static_cast<Eigen::Index>(in_channels) * kernel * kernel);
  RowMatrix z = w * cols;
  z.colwise() += Eigen::Map<const Eigen::VectorXd>(bias.data(), out_channels);

  const std::size_t conv_size = static_cast<std::size_t>(out_channels) * ch * cw;
  if (cache) {
    cache->active.resize(conv_size);
    cache->in_h = in_h;
    cache->in_w = in_w;
    cache->conv_h = ch;
    cache->conv_w = cw;
  }
  double* zd = z.data();
  for (std::size_t i = 0; i < conv_size; ++i) {
    const bool on = zd[i] > 0.0;
    if (!on) zd[i] = 0.0;
    if (cache) cache->active[i] = on;
  }

  if (pool_kernel <= 0) {
    return Tensor({static_cast<std::size_t>(out_channels), static_cast<std::size_t>(ch),
                   static_cast<std::size_t>(cw)},
                  std::vector<double>(zd, zd + conv_size));
  }

  const int ph = pooled_extent(ch, pool_kernel, pool_stride);
  const int pw = pooled_extent(cw, pool_kernel, pool_stride);
  Tensor out({static_cast<std::size_t>(out_channels), static_cast<std::size_t>(ph),
              static_cast<std::size_t>(pw)});
  if (cache) cache->argmax.resize(out.size());
  std::size_t o = 0;
  for (int c = 0; c < out_channels; ++c) {
    const std::size_t base = static_cast<std::size_t>(c) * ch * cw;
    for (int py = 0; py < ph; ++py) {
      const int y0 = py * pool_stride;
      const int y1 = std::min(y0 + pool_kernel, ch);
      for (int px = 0; px < pw; ++px, ++o) {
        const int x0 = px * pool_stride;
        const int x1 = std::min(x0 + pool_kernel, cw);
        double best = -std::numeric_limits<double>::infinity();
        std::size_t arg = base + static_cast<std::size_t>(y0) * cw + x0;
        for (int y = y0; y < y1; ++y) {
          for (int xx = x0; xx < x1; ++xx) {
            const std::size_t idx = base + static_cast<std::size_t>(y) * cw + xx;
            if (zd[idx] > best) {
              best = zd[idx];
              arg = idx;
            }
          }
        }
        out[o] = best;
        if (cache) cache->argmax[o] = static_cast<int>(arg);
      }
    }
  }
  return out;
}

Tensor ConvLayer::backward(const Cache& cache, const Tensor& dy, ConvLayer& grad,
                           bool need_input_grad) const {
  const int ch = cache.conv_h;
  const int cw = cache.conv_w;
  const Eigen::Index spatial = static_cast<Eigen::Index>(ch) * cw;
  RowMatrix dz = RowMatrix::Zero(out_channels, spatial);
  double* dzd = dz.data();
  if (pool_kernel > 0) {
    for (std::size_t i = 0; i < dy.size(); ++i) dzd[cache.argmax[i]] += dy[i];
  } else {
    std::copy(dy.data(), dy.data() + dy.size(), dzd);
  }
  for (std::size_t i = 0; i < cache.active.size(); ++i) {
    if (!cache.active[i]) dzd[i] = 0.0;
  }

  const Eigen::Index patch = static_cast<Eigen::Index>(in_channels) * kernel * kernel;
  MatrixMap gw(grad.weight.data(), out_channels, patch);
  gw.noalias() += dz * cache.columns.transpose();
  Eigen::Map<Eigen::VectorXd>(grad.bias.data(), out_channels) += dz.rowwise().sum();

  if (!need_input_grad) return {};
  const ConstMatrixMap w(weight.data(), out_channels, patch);
  RowMatrix dcols = w.transpose() * dz;
  Tensor dx;
  col2im(dcols, in_channels, cache.in_h, cache.in_w, kernel, stride, pad, ch, cw, dx);
  return dx;
}

DenseLayer::DenseLayer(int in, int out, bool r)
    : in_features(in),
      out_features(out),
      relu(r),
      weight({static_cast<std::size_t>(out), static_cast<std::size_t>(in)}),
      bias({static_cast<std::size_t>(out)}) {}

Tensor DenseLayer::forward(const Tensor& x, Cache* cache) const {
  if (static_cast<int>(x.size()) != in_features) {
    throw ShapeError("dense: expected " + std::to_string(in_features) + " inputs, got " +
                     x.shape_string());
  }
  const ConstMatrixMap w(weight.data(), out_features, in_features);
  Tensor y({static_cast<std::size_t>(out_features)});
  Eigen::Map<Eigen::VectorXd> yv(y.data(), out_features);
  yv.noalias() = w * Eigen::Map<const Eigen::VectorXd>(x.data(), in_features);
  yv += Eigen::Map<const Eigen::VectorXd>(bias.data(), out_features);
  if (cache) {
    cache->input = x;
    cache->active.assign(static_cast<std::size_t>(out_features), 1);
  }
  if (relu) {
    for (int i = 0; i < out_features; ++i) {
      if (!(y[i] > 0.0)) {
        y[i] = 0.0;
        if (cache) cache->active[i] = 0;
      }
    }
  }
  return y;
}

Tensor DenseLayer::backward(const Cache& cache, const Tensor& dy, DenseLayer& grad) const {
  Eigen::VectorXd dz = Eigen::Map<const Eigen::VectorXd>(dy.data(), out_features);
  for (int i = 0; i < out_features; ++i) {
    if (!cache.active[i]) dz[i] = 0.0;
  }
  const Eigen::Map<const Eigen::VectorXd> x(cache.input.data(), in_features);
  MatrixMap(grad.weight.data(), out_features, in_features).noalias() += dz * x.transpose();
  Eigen::Map<Eigen::VectorXd>(grad.bias.data(), out_features) += dz;
  const ConstMatrixMap w(weight.data(), out_features, in_features);
  Tensor dx(cache.input.shape());
  Eigen::Map<Eigen::VectorXd>(dx.data(), in_features).noalias() = w.transpose() * dz;
  return dx;
}

namespace {

PointwiseConv make_pointwise(int in, int out) {
  return {Tensor({static_cast<std::size_t>(out), static_cast<std::size_t>(in)}),
          Tensor({static_cast<std::size_t>(out)})};
}

// relu(W x + b) on a [in, HW] matrix.
RowMatrix pointwise_relu(const PointwiseConv& conv, const RowMatrix& x) {
  const ConstMatrixMap w(conv.weight.data(), conv.out_channels(), conv.in_channels());
  RowMatrix z = w * x;
  z.colwise() += Eigen::Map<const Eigen::VectorXd>(conv.bias.data(), conv.out_channels());
  return z.cwiseMax(0.0);
}

// Backward through relu(W x + b) given the post-ReLU output; returns dL/dx.
RowMatrix pointwise_backward(const PointwiseConv& conv, const RowMatrix& x, const RowMatrix& out,
                             RowMatrix dout, PointwiseConv& grad) {
  dout = (out.array() > 0.0).select(dout, 0.0);
  MatrixMap(grad.weight.data(), conv.out_channels(), conv.in_channels()).noalias() +=
      dout * x.transpose();
  Eigen::Map<Eigen::VectorXd>(grad.bias.data(), conv.out_channels()) += dout.rowwise().sum();
  const ConstMatrixMap w(conv.weight.data(), conv.out_channels(), conv.in_channels());
  return w.transpose() * dout;
}

}  // namespace

SpatialWeightsLayer::SpatialWeightsLayer(int channels, int width1, int width2)
    : conv1(make_pointwise(channels, width1)),
      conv2(make_pointwise(width1, width2)),
      conv3(make_pointwise(width2, 1)) {}

SpatialWeightsLayer::Output SpatialWeightsLayer::forward(const Tensor& u, Cache* cache) const {
  require_rank3(u, channels(), "spatial weights");
  const Eigen::Index n = static_cast<Eigen::Index>(u.dim(0));
  const Eigen::Index hw = static_cast<Eigen::Index>(u.dim(1) * u.dim(2));
  const ConstMatrixMap um(u.data(), n, hw);
  const RowMatrix uin = um;
  RowMatrix h1 = pointwise_relu(conv1, uin);
  RowMatrix h2 = pointwise_relu(conv2, h1);
  RowMatrix wmap = pointwise_relu(conv3, h2);

  Output out{Tensor(u.shape()), Tensor({u.dim(1), u.dim(2)})};
  std::copy(wmap.data(), wmap.data() + hw, out.weight_map.data());
  MatrixMap(out.weighted.data(), n, hw) = um.array().rowwise() * wmap.row(0).array();

  if (cache) {
    cache->input = u;
    cache->hidden1 = std::move(h1);
    cache->hidden2 = std::move(h2);
    cache->weight_map = std::move(wmap);
  }
  return out;
}

Tensor SpatialWeightsLayer::backward(const Cache& cache, const Tensor& dv,
                                     SpatialWeightsLayer& grad, WeightMapGradient mode) const {
  const Tensor& u = cache.input;
  const Eigen::Index hw = static_cast<Eigen::Index>(u.dim(1) * u.dim(2));
  Tensor wmap({u.dim(1), u.dim(2)});
  std::copy(cache.weight_map.data(), cache.weight_map.data() + hw, wmap.data());
  SpatialWeightsGrad node = spatial_weights_backward(dv, u, wmap, mode);

  RowMatrix dmap = ConstMatrixMap(node.weight_map.data(), 1, hw);
  RowMatrix dh2 = pointwise_backward(conv3, cache.hidden2, cache.weight_map, dmap, grad.conv3);
  RowMatrix dh1 = pointwise_backward(conv2, cache.hidden1, cache.hidden2, dh2, grad.conv2);
  const ConstMatrixMap um(u.data(), channels(), hw);
  RowMatrix du_branch = pointwise_backward(conv1, um, cache.hidden1, dh1, grad.conv1);

  MatrixMap(node.input.data(), channels(), hw) += du_branch;
  return node.input;
}

SpatialWeightsLayer::Output spatial_weights_forward(const Tensor& u,
                                                    const SpatialWeightsLayer& layer) {
  return layer.forward(u);
}

SpatialWeightsGrad spatial_weights_backward(const Tensor& dv, const Tensor& u,
                                            const Tensor& weight_map, WeightMapGradient mode) {
  if (dv.shape() != u.shape() || u.rank() != 3 || weight_map.rank() != 2 ||
      weight_map.dim(0) != u.dim(1) || weight_map.dim(1) != u.dim(2)) {
    throw ShapeError("spatial weights backward: inconsistent shapes " + dv.shape_string() + ", " +
                     u.shape_string() + ", " + weight_map.shape_string());
  }
  const Eigen::Index n = static_cast<Eigen::Index>(u.dim(0));
  const Eigen::Index hw = static_cast<Eigen::Index>(u.dim(1) * u.dim(2));
  const ConstMatrixMap dvm(dv.data(), n, hw);
  const ConstMatrixMap um(u.data(), n, hw);
  const ConstMatrixMap wm(weight_map.data(), 1, hw);

  SpatialWeightsGrad g{Tensor(u.shape()), Tensor(weight_map.shape())};
  MatrixMap(g.input.data(), n, hw) = dvm.array().rowwise() * wm.row(0).array();
  const double scale = mode == WeightMapGradient::channel_averaged ? 1.0 / static_cast<double>(n)
                                                                   : 1.0;
  MatrixMap(g.weight_map.data(), 1, hw) = scale * (dvm.array() * um.array()).colwise().sum();
  return g;
}

L1Result l1_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape() || pred.rank() != 2) {
    throw ShapeError("l1 loss: shape mismatch " + pred.shape_string() + " vs " +
                     target.shape_string());
  }
  const double batch = static_cast<double>(pred.dim(0));
  L1Result r{0.0, Tensor(pred.shape())};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    r.loss += std::abs(d);
    r.gradient[i] = d > 0.0 ? 1.0 / batch : (d < 0.0 ? -1.0 / batch : 0.0);
  }
  r.loss /= batch;
  return r;
}

}  // namespace fullface
