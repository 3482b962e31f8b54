#include "segae/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace segae {

void ModelConfig::validate() const {
  if (in_channels < 1) throw ConfigError("in_channels must be >= 1");
  if (n_classes < 2) throw ConfigError("n_classes must be >= 2");
  if (n_scales < 1) throw ConfigError("n_scales must be >= 1");
  if (base_filters < 1) throw ConfigError("base_filters must be >= 1");
  if (kernel_size < 1 || kernel_size % 2 == 0) throw ConfigError("kernel_size must be odd");
  if (!(lrelu_slope >= 0.0)) throw ConfigError("lrelu_slope must be >= 0");
  if (!(seg_rescale_max > 0.0)) throw ConfigError("seg_rescale_max must be > 0");
  if (!(rescale_eps > 0.0)) throw ConfigError("rescale_eps must be > 0");
  if (!(mixing_init_spread >= 0.0 && mixing_init_spread < 1.0))
    throw ConfigError("mixing_init_spread must lie in [0, 1)");
  const int factor = 1 << (n_scales - 1);
  for (int a = 0; a < 3; ++a)
    if (patch_size[a] <= 0 || patch_size[a] % factor != 0)
      throw ConfigError("patch size " + to_string(patch_size) + " is not divisible by " +
                        std::to_string(factor) + " (2^(n_scales-1))");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{
      {"in_channels", c.in_channels},
      {"n_classes", c.n_classes},
      {"n_scales", c.n_scales},
      {"base_filters", c.base_filters},
      {"kernel_size", c.kernel_size},
      {"lrelu_slope", c.lrelu_slope},
      {"seg_rescale_max", c.seg_rescale_max},
      {"rescale_eps", c.rescale_eps},
      {"patch_size", {c.patch_size.x, c.patch_size.y, c.patch_size.z}},
      {"downsample", c.downsample == Downsample::kStridedConv ? "strided_conv" : "avg_pool"},
      {"skip_connections", c.skip_connections},
      {"mixing_init_spread", c.mixing_init_spread},
  };
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  d.in_channels = j.value("in_channels", d.in_channels);
  d.n_classes = j.value("n_classes", d.n_classes);
  d.n_scales = j.value("n_scales", d.n_scales);
  d.base_filters = j.value("base_filters", d.base_filters);
  d.kernel_size = j.value("kernel_size", d.kernel_size);
  d.lrelu_slope = j.value("lrelu_slope", d.lrelu_slope);
  d.seg_rescale_max = j.value("seg_rescale_max", d.seg_rescale_max);
  d.rescale_eps = j.value("rescale_eps", d.rescale_eps);
  if (j.contains("patch_size")) {
    const auto v = j.at("patch_size").get<std::array<int, 3>>();
    d.patch_size = {v[0], v[1], v[2]};
  }
  if (j.contains("downsample")) {
    const auto s = j.at("downsample").get<std::string>();
    if (s == "strided_conv")
      d.downsample = Downsample::kStridedConv;
    else if (s == "avg_pool")
      d.downsample = Downsample::kAvgPool;
    else
      throw ConfigError("unknown downsample mode '" + s + "'");
  }
  d.skip_connections = j.value("skip_connections", d.skip_connections);
  d.mixing_init_spread = j.value("mixing_init_spread", d.mixing_init_spread);
  c = d;
}

namespace {

struct Op {
  enum class Kind { kConv, kPool, kUpsample, kConcat };
  Kind kind = Kind::kConv;
  int conv = -1;      // index into convs
  bool activation = false;
  int skip_value = -1;  // values[] index concatenated by kConcat
};

struct ConvShape {
  int in = 0, out = 0, kernel = 3, stride = 1;
};

struct Plan {
  std::vector<Op> ops;
  std::vector<ConvShape> convs;
};

Plan make_plan(const ModelConfig& c) {
  Plan p;
  int value = 0;  // index of the current tensor in values[]
  auto conv = [&](int in, int out, int kernel, int stride, bool act) {
    p.convs.push_back({in, out, kernel, stride});
    p.ops.push_back({Op::Kind::kConv, static_cast<int>(p.convs.size()) - 1, act, -1});
    ++value;
  };
  auto filters = [&](int s) { return c.base_filters << s; };
  std::vector<int> skip_value(static_cast<std::size_t>(c.n_scales), -1);

  for (int s = 0; s < c.n_scales; ++s) {
    if (s > 0) {
      if (c.downsample == Downsample::kStridedConv) {
        conv(filters(s - 1), filters(s - 1), c.kernel_size, 2, true);
      } else {
        p.ops.push_back({Op::Kind::kPool, -1, false, -1});
        ++value;
      }
    }
    conv(s == 0 ? c.in_channels : filters(s - 1), filters(s), c.kernel_size, 1, true);
    conv(filters(s), filters(s), c.kernel_size, 1, true);
    skip_value[s] = value;
  }
  for (int s = c.n_scales - 2; s >= 0; --s) {
    p.ops.push_back({Op::Kind::kUpsample, -1, false, -1});
    ++value;
    conv(filters(s + 1), filters(s), c.kernel_size, 1, true);
    int width = filters(s);
    if (c.skip_connections) {
      p.ops.push_back({Op::Kind::kConcat, -1, false, skip_value[s]});
      ++value;
      width *= 2;
    }
    conv(width, filters(s), c.kernel_size, 1, true);
  }
  conv(filters(0), c.n_classes, 1, 1, false);
  return p;
}

void check_patch(const ModelParameters& params, const MultiChannelVolume& patch) {
  const auto& c = params.config;
  if (static_cast<int>(patch.channel_count()) != c.in_channels)
    throw DimensionError("model expects " + std::to_string(c.in_channels) + " channels, got " +
                         std::to_string(patch.channel_count()));
  if (patch.dims() != c.patch_size)
    throw DimensionError("model expects patch size " + to_string(c.patch_size) + ", got " +
                         to_string(patch.dims()));
}

Tensor apply_op(const Op& op, const ModelParameters& params, const std::vector<Tensor>& values,
                const Tensor& current) {
  switch (op.kind) {
    case Op::Kind::kConv: {
      Tensor out;
      conv3d_forward(current, params.convs[op.conv], out);
      if (op.activation) leaky_relu_inplace(out, params.config.lrelu_slope);
      return out;
    }
    case Op::Kind::kPool:
      return avg_pool2(current);
    case Op::Kind::kUpsample:
      return upsample_nearest2(current);
    case Op::Kind::kConcat:
      return concat_channels(current, values.at(op.skip_value));
  }
  throw Error("unreachable op kind");
}

ForwardOutput finish_forward(const ModelParameters& params, Tensor activations,
                             const Spacing3& spacing, Tensor* rescaled_out) {
  const auto& c = params.config;
  Tensor rescaled = rescale_activations(activations, c.seg_rescale_max, c.rescale_eps);
  Tensor memberships = softmax_channels(rescaled);
  Volume3D recon = conical_mix(memberships, params.mixing_weights, spacing);
  if (rescaled_out) *rescaled_out = std::move(rescaled);
  return ForwardOutput{std::move(memberships), std::move(recon), std::move(activations)};
}

}  // namespace

std::size_t ModelParameters::parameter_count() const noexcept {
  std::size_t n = mixing_weights.size();
  for (const auto& c : convs) n += c.parameter_count();
  return n;
}

std::vector<std::span<double>> ModelParameters::arrays() {
  std::vector<std::span<double>> out;
  for (auto& c : convs) {
    out.emplace_back(c.weight);
    out.emplace_back(c.bias);
  }
  out.emplace_back(mixing_weights);
  return out;
}

std::vector<std::span<const double>> ModelParameters::arrays() const {
  std::vector<std::span<const double>> out;
  for (const auto& c : convs) {
    out.emplace_back(c.weight);
    out.emplace_back(c.bias);
  }
  out.emplace_back(mixing_weights);
  return out;
}

ModelParameters ModelParameters::zeros_like() const {
  ModelParameters z = *this;
  for (auto a : z.arrays()) std::fill(a.begin(), a.end(), 0.0);
  return z;
}

ModelParameters build_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  const Plan plan = make_plan(config);
  ModelParameters params;
  params.config = config;
  std::mt19937_64 rng(seed);
  for (const auto& shape : plan.convs) {
    ConvLayer layer;
    layer.in_channels = shape.in;
    layer.out_channels = shape.out;
    layer.kernel = shape.kernel;
    layer.stride = shape.stride;
    const std::size_t k3 = static_cast<std::size_t>(shape.kernel) * shape.kernel * shape.kernel;
    const double fan_in = static_cast<double>(shape.in) * static_cast<double>(k3);
    std::normal_distribution<double> init(0.0, std::sqrt(2.0 / fan_in));
    layer.weight.resize(static_cast<std::size_t>(shape.out) * shape.in * k3);
    for (double& w : layer.weight) w = init(rng);
    layer.bias.assign(static_cast<std::size_t>(shape.out), 0.0);
    params.convs.push_back(std::move(layer));
  }
  params.mixing_weights.assign(static_cast<std::size_t>(config.n_classes), 1.0);
  if (config.mixing_init_spread > 0.0 && config.n_classes > 1) {
    const double last = static_cast<double>(config.n_classes - 1);
    for (int k = 0; k < config.n_classes; ++k)
      params.mixing_weights[k] += config.mixing_init_spread * (2.0 * k / last - 1.0);
  }
  return params;
}

std::size_t expected_parameter_count(const ModelConfig& c) {
  const std::size_t k3 = static_cast<std::size_t>(c.kernel_size) * c.kernel_size * c.kernel_size;
  auto conv = [&](std::size_t in, std::size_t out, std::size_t taps) { return out * in * taps + out; };
  auto f = [&](int s) { return static_cast<std::size_t>(c.base_filters) << s; };
  std::size_t n = 0;
  for (int s = 0; s < c.n_scales; ++s) {
    n += conv(s == 0 ? static_cast<std::size_t>(c.in_channels) : f(s - 1), f(s), k3);
    n += conv(f(s), f(s), k3);
    if (s > 0 && c.downsample == Downsample::kStridedConv) n += conv(f(s - 1), f(s - 1), k3);
  }
  for (int s = 0; s + 1 < c.n_scales; ++s) {
    n += conv(f(s + 1), f(s), k3);
    n += conv(c.skip_connections ? 2 * f(s) : f(s), f(s), k3);
  }
  n += conv(f(0), static_cast<std::size_t>(c.n_classes), 1);
  return n + static_cast<std::size_t>(c.n_classes);
}

Tensor rescale_activations(const Tensor& activations, double max_value, double eps) {
  Tensor out(activations.channels(), activations.dims());
  const int nc = activations.channels();
  const std::size_t n = activations.channel_size();
  for (std::size_t i = 0; i < n; ++i) {
    double lo = activations.channel(0)[i];
    double hi = lo;
    for (int c = 1; c < nc; ++c) {
      const double a = activations.channel(c)[i];
      lo = std::min(lo, a);
      hi = std::max(hi, a);
    }
    const double scale = max_value / (hi - lo + eps);
    // min() absorbs the last-ulp overshoot of scale * (hi - lo) when eps is negligible.
    for (int c = 0; c < nc; ++c)
      out.channel(c)[i] = std::min(max_value, scale * (activations.channel(c)[i] - lo));
  }
  return out;
}

Tensor softmax_channels(const Tensor& logits) {
  Tensor out(logits.channels(), logits.dims());
  const int nc = logits.channels();
  const std::size_t n = logits.channel_size();
  std::vector<double> e(static_cast<std::size_t>(nc));
  for (std::size_t i = 0; i < n; ++i) {
    double hi = logits.channel(0)[i];
    for (int c = 1; c < nc; ++c) hi = std::max(hi, logits.channel(c)[i]);
    double sum = 0.0;
    for (int c = 0; c < nc; ++c) {
      e[c] = std::exp(logits.channel(c)[i] - hi);
      sum += e[c];
    }
    for (int c = 0; c < nc; ++c) out.channel(c)[i] = e[c] / sum;
  }
  return out;
}

Tensor segmentation_layer(const Tensor& activations, double max_value, double eps) {
  return softmax_channels(rescale_activations(activations, max_value, eps));
}

Volume3D conical_mix(const Tensor& memberships, std::span<const double> mixing_weights,
                     const Spacing3& spacing) {
  if (static_cast<int>(mixing_weights.size()) != memberships.channels())
    throw DimensionError("conical_mix: one weight per membership channel required");
  for (double w : mixing_weights)
    if (!(w >= 0.0)) throw ConfigError("conical_mix: mixing weights must be nonnegative");
  Volume3D out(memberships.dims(), spacing, 0.0);
  for (int c = 0; c < memberships.channels(); ++c) {
    const double w = mixing_weights[c];
    const double* m = memberships.channel(c);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * m[i];
  }
  return out;
}

ForwardOutput forward(const ModelParameters& params, const MultiChannelVolume& patch) {
  check_patch(params, patch);
  const Plan plan = make_plan(params.config);
  // Keep every tensor only when a later concat needs it.
  std::vector<Tensor> values;
  values.push_back(Tensor::from_channels(patch));
  for (const auto& op : plan.ops) {
    Tensor next = apply_op(op, params, values, values.back());
    if (!params.config.skip_connections) values.clear();
    values.push_back(std::move(next));
  }
  return finish_forward(params, std::move(values.back()), patch.spacing(), nullptr);
}

ForwardTrace forward_trace(const ModelParameters& params, const MultiChannelVolume& patch) {
  check_patch(params, patch);
  const Plan plan = make_plan(params.config);
  ForwardTrace trace;
  trace.values.reserve(plan.ops.size() + 1);
  trace.values.push_back(Tensor::from_channels(patch));
  for (const auto& op : plan.ops) {
    Tensor next = apply_op(op, params, trace.values, trace.values.back());
    trace.values.push_back(std::move(next));
  }
  trace.output = finish_forward(params, trace.values.back(), patch.spacing(), &trace.rescaled);
  return trace;
}

Tensor segmentation_layer_backward(const Tensor& activations, const Tensor& memberships,
                                   const Tensor& grad_memberships, double max_value, double eps) {
  const int nc = activations.channels();
  const std::size_t n = activations.channel_size();
  Tensor grad(nc, activations.dims());
  std::vector<double> ga(static_cast<std::size_t>(nc));
  for (std::size_t i = 0; i < n; ++i) {
    // softmax
    double dot = 0.0;
    for (int c = 0; c < nc; ++c) dot += memberships.channel(c)[i] * grad_memberships.channel(c)[i];
    for (int c = 0; c < nc; ++c)
      ga[c] = memberships.channel(c)[i] * (grad_memberships.channel(c)[i] - dot);
    // min-max rescale; argmin/argmax take the first index on ties
    int imin = 0, imax = 0;
    for (int c = 1; c < nc; ++c) {
      if (activations.channel(c)[i] < activations.channel(imin)[i]) imin = c;
      if (activations.channel(c)[i] > activations.channel(imax)[i]) imax = c;
    }
    const double lo = activations.channel(imin)[i];
    const double r = activations.channel(imax)[i] - lo + eps;
    const double k1 = max_value / r;
    const double k2 = max_value / (r * r);
    double s1 = 0.0, s2 = 0.0;
    for (int c = 0; c < nc; ++c) {
      s1 += ga[c];
      s2 += ga[c] * (activations.channel(c)[i] - lo);
    }
    for (int c = 0; c < nc; ++c) grad.channel(c)[i] = k1 * ga[c];
    grad.channel(imin)[i] += -k1 * s1 + k2 * s2;
    grad.channel(imax)[i] += -k2 * s2;
  }
  return grad;
}

ModelParameters backward(const ModelParameters& params, const ForwardTrace& trace,
                         const Volume3D& grad_reconstruction) {
  const auto& cfg = params.config;
  const Tensor& m = trace.output.memberships;
  if (grad_reconstruction.dims() != m.dims())
    throw DimensionError("backward: reconstruction gradient shape mismatch");
  ModelParameters grads = params.zeros_like();

  // Conical mixing layer.
  Tensor grad_m(m.channels(), m.dims());
  for (int c = 0; c < m.channels(); ++c) {
    const double* mc = m.channel(c);
    double* gc = grad_m.channel(c);
    const double w = params.mixing_weights[c];
    double acc = 0.0;
    for (std::size_t i = 0; i < grad_reconstruction.size(); ++i) {
      acc += grad_reconstruction[i] * mc[i];
      gc[i] = grad_reconstruction[i] * w;
    }
    grads.mixing_weights[c] = acc;
  }

  const Plan plan = make_plan(cfg);
  std::vector<Tensor> g(trace.values.size());
  g.back() = segmentation_layer_backward(trace.values.back(), m, grad_m, cfg.seg_rescale_max,
                                         cfg.rescale_eps);
  auto accumulate = [&](std::size_t idx, Tensor t) {
    if (g[idx].size() == 0)
      g[idx] = std::move(t);
    else
      g[idx].add(t);
  };

  for (std::size_t i = plan.ops.size(); i-- > 0;) {
    const Op& op = plan.ops[i];
    Tensor gout = std::move(g[i + 1]);
    g[i + 1] = Tensor();
    switch (op.kind) {
      case Op::Kind::kConv: {
        if (op.activation) leaky_relu_backward(trace.values[i + 1], cfg.lrelu_slope, gout);
        if (i == 0) {
          conv3d_backward(trace.values[i], params.convs[op.conv], gout, grads.convs[op.conv], nullptr);
        } else {
          Tensor gin(trace.values[i].channels(), trace.values[i].dims());
          conv3d_backward(trace.values[i], params.convs[op.conv], gout, grads.convs[op.conv], &gin);
          accumulate(i, std::move(gin));
        }
        break;
      }
      case Op::Kind::kPool:
        accumulate(i, avg_pool2_backward(gout, trace.values[i].dims()));
        break;
      case Op::Kind::kUpsample:
        accumulate(i, upsample_nearest2_backward(gout));
        break;
      case Op::Kind::kConcat: {
        const Tensor& a = trace.values[i];
        const Tensor& b = trace.values[op.skip_value];
        Tensor ga(a.channels(), a.dims());
        Tensor gb(b.channels(), b.dims());
        const auto src = gout.values();
        std::copy(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(a.size()), ga.values().begin());
        std::copy(src.begin() + static_cast<std::ptrdiff_t>(a.size()), src.end(), gb.values().begin());
        accumulate(i, std::move(ga));
        accumulate(static_cast<std::size_t>(op.skip_value), std::move(gb));
        break;
      }
    }
  }
  return grads;
}

}  // namespace segae
