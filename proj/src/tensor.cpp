#include "segae/tensor.hpp"

#include "conv_kernels.hpp"

#include <algorithm>
#include <cstring>

namespace segae {

Tensor::Tensor(int channels, Dims3 dims, double fill)
    : channels_(channels), dims_(dims),
      data_(static_cast<std::size_t>(channels) * dims.voxel_count(), fill) {
  if (channels <= 0) throw DimensionError("tensor needs at least one channel");
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::add(const Tensor& other) {
  if (other.channels_ != channels_ || other.dims_ != dims_)
    throw DimensionError("tensor add: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
}

Volume3D Tensor::to_volume(int c, const Spacing3& spacing) const {
  return Volume3D(dims_, spacing, std::vector<double>(channel(c), channel(c) + channel_size()));
}

Tensor Tensor::from_channels(const MultiChannelVolume& vol) {
  Tensor t(static_cast<int>(vol.channel_count()), vol.dims());
  for (std::size_t c = 0; c < vol.channel_count(); ++c) {
    const auto src = vol.channel(c).data();
    std::copy(src.begin(), src.end(), t.channel(static_cast<int>(c)));
  }
  return t;
}

Dims3 ConvLayer::output_dims(const Dims3& in) const noexcept {
  const int pad = kernel / 2;
  auto ext = [&](int d) { return (d + 2 * pad - kernel) / stride + 1; };
  return {ext(in.x), ext(in.y), ext(in.z)};
}

namespace {

int ceil_div(int a, int b) { return a >= 0 ? (a + b - 1) / b : -((-a) / b); }
int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

// Valid output-x range for tap kx: input x = ox * S + kx - pad in [0, in_x).
struct XRange {
  int begin;
  int end;  // exclusive
};

template <int S>
XRange x_range(int kx, int pad, int in_x, int out_x) {
  const int lo = std::max(0, ceil_div(pad - kx, S));
  const int hi = std::min(out_x - 1, floor_div(in_x - 1 + pad - kx, S));
  return {lo, std::max(lo, hi + 1)};
}

template <int S>
void forward_impl(const Tensor& in, const ConvLayer& L, Tensor& out) {
  const Dims3 id = in.dims();
  const Dims3 od = out.dims();
  const int k = L.kernel;
  const int pad = k / 2;
  const std::size_t k3 = static_cast<std::size_t>(k) * k * k;
  std::vector<XRange> ranges(static_cast<std::size_t>(k));
  for (int kx = 0; kx < k; ++kx) ranges[kx] = x_range<S>(kx, pad, id.x, od.x);

  for (int oz = 0; oz < od.z; ++oz)
    for (int oy = 0; oy < od.y; ++oy)
      for (int co = 0; co < L.out_channels; ++co) {
        double* __restrict orow = out.row(co, oz, oy);
        const double b = L.bias[co];
        for (int ox = 0; ox < od.x; ++ox) orow[ox] = b;
        for (int ci = 0; ci < L.in_channels; ++ci) {
          const double* w = L.weight.data() + (static_cast<std::size_t>(co) * L.in_channels + ci) * k3;
          for (int kz = 0; kz < k; ++kz) {
            const int iz = oz * S + kz - pad;
            if (iz < 0 || iz >= id.z) continue;
            for (int ky = 0; ky < k; ++ky) {
              const int iy = oy * S + ky - pad;
              if (iy < 0 || iy >= id.y) continue;
              const double* __restrict irow = in.row(ci, iz, iy);
              const double* wk = w + (kz * k + ky) * k;
              for (int kx = 0; kx < k; ++kx) {
                const double wv = wk[kx];
                const XRange r = ranges[kx];
                const double* src = irow + (kx - pad);
                for (int ox = r.begin; ox < r.end; ++ox) orow[ox] += wv * src[ox * S];
              }
            }
          }
        }
      }
}

template <int S>
void backward_impl(const Tensor& in, const ConvLayer& L, const Tensor& gout, ConvLayer& G,
                   Tensor* gin) {
  const Dims3 id = in.dims();
  const Dims3 od = gout.dims();
  const int k = L.kernel;
  const int pad = k / 2;
  const std::size_t k3 = static_cast<std::size_t>(k) * k * k;
  std::vector<XRange> ranges(static_cast<std::size_t>(k));
  for (int kx = 0; kx < k; ++kx) ranges[kx] = x_range<S>(kx, pad, id.x, od.x);
  if (gin) gin->fill(0.0);

  for (int co = 0; co < L.out_channels; ++co) {
    const double* g = gout.channel(co);
    double s = 0.0;
#pragma omp simd reduction(+ : s)
    for (std::size_t i = 0; i < gout.channel_size(); ++i) s += g[i];
    G.bias[co] += s;
  }

  for (int oz = 0; oz < od.z; ++oz)
    for (int oy = 0; oy < od.y; ++oy)
      for (int co = 0; co < L.out_channels; ++co) {
        const double* __restrict grow = gout.row(co, oz, oy);
        for (int ci = 0; ci < L.in_channels; ++ci) {
          const std::size_t wofs = (static_cast<std::size_t>(co) * L.in_channels + ci) * k3;
          const double* w = L.weight.data() + wofs;
          double* gw = G.weight.data() + wofs;
          for (int kz = 0; kz < k; ++kz) {
            const int iz = oz * S + kz - pad;
            if (iz < 0 || iz >= id.z) continue;
            for (int ky = 0; ky < k; ++ky) {
              const int iy = oy * S + ky - pad;
              if (iy < 0 || iy >= id.y) continue;
              const double* __restrict irow = in.row(ci, iz, iy);
              double* girow = gin ? gin->row(ci, iz, iy) : nullptr;
              const int tap0 = (kz * k + ky) * k;
              for (int kx = 0; kx < k; ++kx) {
                const XRange r = ranges[kx];
                const double* src = irow + (kx - pad);
                double acc = 0.0;
#pragma omp simd reduction(+ : acc)
                for (int ox = r.begin; ox < r.end; ++ox) acc += grow[ox] * src[ox * S];
                gw[tap0 + kx] += acc;
                if (girow) {
                  const double wv = w[tap0 + kx];
                  double* dst = girow + (kx - pad);
                  for (int ox = r.begin; ox < r.end; ++ox) dst[ox * S] += wv * grow[ox];
                }
              }
            }
          }
        }
      }
}

void check_conv_shapes(const Tensor& in, const ConvLayer& L) {
  if (in.channels() != L.in_channels)
    throw DimensionError("conv input has " + std::to_string(in.channels()) + " channels, layer expects " +
                         std::to_string(L.in_channels));
  if (L.stride != 1 && L.stride != 2) throw ConfigError("conv stride must be 1 or 2");
  if (L.kernel % 2 == 0) throw ConfigError("conv kernel must be odd");
}

}  // namespace

void conv3d_forward(const Tensor& in, const ConvLayer& layer, Tensor& out) {
  check_conv_shapes(in, layer);
  const Dims3 od = layer.output_dims(in.dims());
  if (out.channels() != layer.out_channels || out.dims() != od) out = Tensor(layer.out_channels, od);
  if (kernels::fast_path_applies(layer))
    kernels::conv3x3_forward(in, layer, out);
  else if (layer.stride == 1)
    forward_impl<1>(in, layer, out);
  else
    forward_impl<2>(in, layer, out);
}

void conv3d_backward(const Tensor& in, const ConvLayer& layer, const Tensor& grad_out,
                     ConvLayer& grad_layer, Tensor* grad_in) {
  check_conv_shapes(in, layer);
  if (grad_out.channels() != layer.out_channels || grad_out.dims() != layer.output_dims(in.dims()))
    throw DimensionError("conv backward: gradient shape mismatch");
  if (grad_in && (grad_in->channels() != in.channels() || grad_in->dims() != in.dims()))
    *grad_in = Tensor(in.channels(), in.dims());
  if (kernels::fast_path_applies(layer))
    kernels::conv3x3_backward(in, layer, grad_out, grad_layer, grad_in);
  else if (layer.stride == 1)
    backward_impl<1>(in, layer, grad_out, grad_layer, grad_in);
  else
    backward_impl<2>(in, layer, grad_out, grad_layer, grad_in);
}

void leaky_relu_inplace(Tensor& t, double slope) {
  for (double& v : t.values()) v = v > 0.0 ? v : slope * v;
}

void leaky_relu_backward(const Tensor& y, double slope, Tensor& grad) {
  const auto yv = y.values();
  auto gv = grad.values();
  for (std::size_t i = 0; i < gv.size(); ++i) gv[i] = yv[i] > 0.0 ? gv[i] : slope * gv[i];
}

Tensor avg_pool2(const Tensor& in) {
  const Dims3 id = in.dims();
  const Dims3 od{id.x / 2, id.y / 2, id.z / 2};
  Tensor out(in.channels(), od);
  for (int c = 0; c < in.channels(); ++c)
    for (int z = 0; z < od.z; ++z)
      for (int y = 0; y < od.y; ++y) {
        double* orow = out.row(c, z, y);
        for (int dz = 0; dz < 2; ++dz)
          for (int dy = 0; dy < 2; ++dy) {
            const double* irow = in.row(c, 2 * z + dz, 2 * y + dy);
            for (int x = 0; x < od.x; ++x) orow[x] += irow[2 * x] + irow[2 * x + 1];
          }
        for (int x = 0; x < od.x; ++x) orow[x] *= 0.125;
      }
  return out;
}

Tensor avg_pool2_backward(const Tensor& grad_out, const Dims3& in_dims) {
  Tensor gin(grad_out.channels(), in_dims);
  const Dims3 od = grad_out.dims();
  for (int c = 0; c < grad_out.channels(); ++c)
    for (int z = 0; z < od.z; ++z)
      for (int y = 0; y < od.y; ++y) {
        const double* grow = grad_out.row(c, z, y);
        for (int dz = 0; dz < 2; ++dz)
          for (int dy = 0; dy < 2; ++dy) {
            double* irow = gin.row(c, 2 * z + dz, 2 * y + dy);
            for (int x = 0; x < od.x; ++x) {
              irow[2 * x] = 0.125 * grow[x];
              irow[2 * x + 1] = 0.125 * grow[x];
            }
          }
      }
  return gin;
}

Tensor upsample_nearest2(const Tensor& in) {
  const Dims3 id = in.dims();
  Tensor out(in.channels(), Dims3{2 * id.x, 2 * id.y, 2 * id.z});
  for (int c = 0; c < in.channels(); ++c)
    for (int z = 0; z < 2 * id.z; ++z)
      for (int y = 0; y < 2 * id.y; ++y) {
        const double* irow = in.row(c, z / 2, y / 2);
        double* orow = out.row(c, z, y);
        for (int x = 0; x < 2 * id.x; ++x) orow[x] = irow[x / 2];
      }
  return out;
}

Tensor upsample_nearest2_backward(const Tensor& grad_out) {
  const Dims3 od = grad_out.dims();
  Tensor gin(grad_out.channels(), Dims3{od.x / 2, od.y / 2, od.z / 2});
  for (int c = 0; c < grad_out.channels(); ++c)
    for (int z = 0; z < od.z; ++z)
      for (int y = 0; y < od.y; ++y) {
        const double* grow = grad_out.row(c, z, y);
        double* irow = gin.row(c, z / 2, y / 2);
        for (int x = 0; x < od.x; ++x) irow[x / 2] += grow[x];
      }
  return gin;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.dims() != b.dims()) throw DimensionError("concat: spatial shape mismatch");
  Tensor out(a.channels() + b.channels(), a.dims());
  std::copy(a.values().begin(), a.values().end(), out.values().begin());
  std::copy(b.values().begin(), b.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(a.size()));
  return out;
}

namespace detail {

void conv3d_forward_reference(const Tensor& in, const ConvLayer& layer, Tensor& out) {
  check_conv_shapes(in, layer);
  const Dims3 od = layer.output_dims(in.dims());
  if (out.channels() != layer.out_channels || out.dims() != od) out = Tensor(layer.out_channels, od);
  if (layer.stride == 1)
    forward_impl<1>(in, layer, out);
  else
    forward_impl<2>(in, layer, out);
}

void conv3d_backward_reference(const Tensor& in, const ConvLayer& layer, const Tensor& grad_out,
                               ConvLayer& grad_layer, Tensor* grad_in) {
  check_conv_shapes(in, layer);
  if (grad_in && (grad_in->channels() != in.channels() || grad_in->dims() != in.dims()))
    *grad_in = Tensor(in.channels(), in.dims());
  if (layer.stride == 1)
    backward_impl<1>(in, layer, grad_out, grad_layer, grad_in);
  else
    backward_impl<2>(in, layer, grad_out, grad_layer, grad_in);
}

}  // namespace detail

}  // namespace segae
