#include "conv_kernels.hpp"

#include <algorithm>
#include <cstring>
#include <vector>

namespace segae::kernels {

namespace {

constexpr int kLanes = 8;
constexpr int kTaps = 27;

int round_up(int v, int m) { return (v + m - 1) / m * m; }

// One chunk of kLanes doubles; lowered to whatever SIMD width the target has.
typedef double Vec __attribute__((vector_size(kLanes * sizeof(double))));

inline Vec load(const double* p) {
  Vec v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

// Zero-bordered copy of a tensor. Rows have `px` entries and the buffer
// carries trailing slack so a full lane chunk may always be read.
class Padded {
 public:
  Padded(const Tensor& t, int border, int row_len)
      : channels_(t.channels()), px_(row_len), py_(t.dims().y + 2 * border),
        pz_(t.dims().z + 2 * border) {
    data_.assign(static_cast<std::size_t>(channels_) * pz_ * py_ * px_ + 4 * kLanes, 0.0);
    const Dims3 d = t.dims();
    for (int c = 0; c < channels_; ++c)
      for (int z = 0; z < d.z; ++z)
        for (int y = 0; y < d.y; ++y) {
          const double* src = t.row(c, z, y);
          std::copy(src, src + d.x, row(c, z + border, y + border) + border);
        }
  }

  double* row(int c, int z, int y) noexcept {
    return data_.data() + ((static_cast<std::size_t>(c) * pz_ + z) * py_ + y) * px_;
  }
  const double* row(int c, int z, int y) const noexcept {
    return data_.data() + ((static_cast<std::size_t>(c) * pz_ + z) * py_ + y) * px_;
  }

 private:
  int channels_, px_, py_, pz_;
  std::vector<double> data_;
};

// Forward correlation on a padded input with weights laid out [ci][tap][co].
template <int CB>
void forward_block(const Padded& in, const double* wt, const double* bias, int cin, int cout,
                   int co0, int oz, int oy, int x0, int nx, Tensor& out) {
  Vec acc[CB];
  for (int b = 0; b < CB; ++b) acc[b] = Vec{} + bias[co0 + b];
  for (int ci = 0; ci < cin; ++ci)
    for (int kz = 0; kz < 3; ++kz)
      for (int ky = 0; ky < 3; ++ky) {
        const double* src = in.row(ci, oz + kz, oy + ky) + x0;
        const double* w = wt + (static_cast<std::size_t>(ci) * kTaps + kz * 9 + ky * 3) * cout + co0;
        for (int kx = 0; kx < 3; ++kx) {
          const Vec s = load(src + kx);
          const double* wk = w + kx * cout;
          for (int b = 0; b < CB; ++b) acc[b] += wk[b] * s;
        }
      }
  for (int b = 0; b < CB; ++b) {
    double lanes[kLanes];
    std::memcpy(lanes, &acc[b], sizeof lanes);
    std::copy(lanes, lanes + nx, out.row(co0 + b, oz, oy) + x0);
  }
}

void correlate(const Padded& in, const std::vector<double>& wt, const std::vector<double>& bias,
               int cin, int cout, Tensor& out) {
  const Dims3 od = out.dims();
  for (int oz = 0; oz < od.z; ++oz)
    for (int oy = 0; oy < od.y; ++oy)
      for (int x0 = 0; x0 < od.x; x0 += kLanes) {
        const int nx = std::min(kLanes, od.x - x0);
        int co0 = 0;
        while (co0 < cout) {
          const int rem = cout - co0;
          if (rem >= 8) {
            forward_block<8>(in, wt.data(), bias.data(), cin, cout, co0, oz, oy, x0, nx, out);
            co0 += 8;
          } else if (rem >= 4) {
            forward_block<4>(in, wt.data(), bias.data(), cin, cout, co0, oz, oy, x0, nx, out);
            co0 += 4;
          } else if (rem >= 2) {
            forward_block<2>(in, wt.data(), bias.data(), cin, cout, co0, oz, oy, x0, nx, out);
            co0 += 2;
          } else {
            forward_block<1>(in, wt.data(), bias.data(), cin, cout, co0, oz, oy, x0, nx, out);
            co0 += 1;
          }
        }
      }
}

// Weight gradient: acc[b][kx][lane] sums gout[co0+b] * in[ci] shifted by the
// tap, over every output row; lanes are reduced at the end.
template <int CB>
void weight_grad_block(const Padded& in, const Padded& gout, int ci, int co0, int z0, int z1,
                       const Dims3& od, int row_len, double* partial /* [CB][27][kLanes] */) {
  for (int kz = 0; kz < 3; ++kz)
    for (int ky = 0; ky < 3; ++ky) {
      Vec acc[CB][3] = {};
      for (int oz = z0; oz < z1; ++oz)
        for (int oy = 0; oy < od.y; ++oy) {
          const double* src = in.row(ci, oz + kz, oy + ky);
          const double* g[CB];
          for (int b = 0; b < CB; ++b) g[b] = gout.row(co0 + b, oz, oy);
          for (int x0 = 0; x0 < row_len; x0 += kLanes) {
            const Vec s0 = load(src + x0);
            const Vec s1 = load(src + x0 + 1);
            const Vec s2 = load(src + x0 + 2);
            for (int b = 0; b < CB; ++b) {
              const Vec gb = load(g[b] + x0);
              acc[b][0] += gb * s0;
              acc[b][1] += gb * s1;
              acc[b][2] += gb * s2;
            }
          }
        }
      for (int b = 0; b < CB; ++b)
        for (int kx = 0; kx < 3; ++kx) {
          double* p = partial + (static_cast<std::size_t>(b) * kTaps + kz * 9 + ky * 3 + kx) * kLanes;
          double lanes[kLanes];
          std::memcpy(lanes, &acc[b][kx], sizeof lanes);
          for (int l = 0; l < kLanes; ++l) p[l] += lanes[l];
        }
    }
}

}  // namespace

bool fast_path_applies(const ConvLayer& layer) { return layer.kernel == 3 && layer.stride == 1; }

void conv3x3_forward(const Tensor& in, const ConvLayer& layer, Tensor& out) {
  const int cin = layer.in_channels;
  const int cout = layer.out_channels;
  std::vector<double> wt(static_cast<std::size_t>(cin) * kTaps * cout);
  for (int co = 0; co < cout; ++co)
    for (int ci = 0; ci < cin; ++ci)
      for (int t = 0; t < kTaps; ++t)
        wt[(static_cast<std::size_t>(ci) * kTaps + t) * cout + co] =
            layer.weight[(static_cast<std::size_t>(co) * cin + ci) * kTaps + t];
  const Padded padded(in, 1, in.dims().x + 2);
  correlate(padded, wt, layer.bias, cin, cout, out);
}

void conv3x3_backward(const Tensor& in, const ConvLayer& layer, const Tensor& grad_out,
                      ConvLayer& grad_layer, Tensor* grad_in) {
  const int cin = layer.in_channels;
  const int cout = layer.out_channels;
  const Dims3 od = grad_out.dims();

  for (int co = 0; co < cout; ++co) {
    const double* g = grad_out.channel(co);
    double s = 0.0;
    for (std::size_t i = 0; i < grad_out.channel_size(); ++i) s += g[i];
    grad_layer.bias[co] += s;
  }

  // Output gradient rows padded with zeros up to a whole number of lanes, so
  // lanes past the row end contribute nothing.
  const int row_len = round_up(od.x, kLanes);
  const Padded gpad(grad_out, 0, row_len);
  const Padded ipad(in, 1, std::max(in.dims().x + 2, row_len + 2));
  // z-slabs keep one block of output-gradient channels cache resident while
  // every input channel is swept over it.
  constexpr int kSlab = 2;
  const int blocks = (cout + 3) / 4;
  std::vector<double> partial(static_cast<std::size_t>(cout) * cin * kTaps * kLanes, 0.0);
  for (int z0 = 0; z0 < od.z; z0 += kSlab) {
    const int z1 = std::min(od.z, z0 + kSlab);
    for (int blk = 0; blk < blocks; ++blk) {
      const int co0 = blk * 4;
      const int cb = std::min(4, cout - co0);
      for (int ci = 0; ci < cin; ++ci) {
        double* p = partial.data() + (static_cast<std::size_t>(ci) * cout + co0) * kTaps * kLanes;
        if (cb == 4)
          weight_grad_block<4>(ipad, gpad, ci, co0, z0, z1, od, row_len, p);
        else if (cb == 3)
          weight_grad_block<3>(ipad, gpad, ci, co0, z0, z1, od, row_len, p);
        else if (cb == 2)
          weight_grad_block<2>(ipad, gpad, ci, co0, z0, z1, od, row_len, p);
        else
          weight_grad_block<1>(ipad, gpad, ci, co0, z0, z1, od, row_len, p);
      }
    }
  }
  for (int ci = 0; ci < cin; ++ci)
    for (int co = 0; co < cout; ++co)
      for (int t = 0; t < kTaps; ++t) {
        const double* p = partial.data() + ((static_cast<std::size_t>(ci) * cout + co) * kTaps + t) * kLanes;
        double s = 0.0;
        for (int l = 0; l < kLanes; ++l) s += p[l];
        grad_layer.weight[(static_cast<std::size_t>(co) * cin + ci) * kTaps + t] += s;
      }

  if (grad_in) {
    // Input gradient is a correlation of the output gradient with the
    // spatially flipped, channel-transposed kernel.
    std::vector<double> wt(static_cast<std::size_t>(cout) * kTaps * cin);
    for (int co = 0; co < cout; ++co)
      for (int ci = 0; ci < cin; ++ci)
        for (int t = 0; t < kTaps; ++t)
          wt[(static_cast<std::size_t>(co) * kTaps + (kTaps - 1 - t)) * cin + ci] =
              layer.weight[(static_cast<std::size_t>(co) * cin + ci) * kTaps + t];
    const std::vector<double> zero(static_cast<std::size_t>(cin), 0.0);
    const Padded gp(grad_out, 1, od.x + 2);
    correlate(gp, wt, zero, cout, cin, *grad_in);
  }
}

}  // namespace segae::kernels
