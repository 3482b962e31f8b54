#include <cmath>
#include <random>

#include "doctest.h"
#include "segae/model.hpp"
#include "segae/tensor.hpp"
#include "test_util.hpp"

using namespace segae;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.base_filters = 4;
  c.patch_size = {16, 16, 16};
  return c;
}

// Hand count for the default architecture: each scale has two 3x3x3 convs,
// every scale below the top adds a strided 3x3x3 downsampling conv, the
// decoder has an upsampling conv plus one conv per level, then a 1x1x1
// classifier and the mixing weights.
std::size_t hand_count(int in, int b, int classes) {
  auto conv = [](std::size_t ci, std::size_t co, std::size_t taps) { return co * ci * taps + co; };
  std::size_t n = 0;
  n += conv(in, b, 27) + conv(b, b, 27);
  n += conv(b, b, 27) + conv(b, 2 * b, 27) + conv(2 * b, 2 * b, 27);
  n += conv(2 * b, 2 * b, 27) + conv(2 * b, 4 * b, 27) + conv(4 * b, 4 * b, 27);
  n += conv(4 * b, 2 * b, 27) + conv(2 * b, 2 * b, 27);
  n += conv(2 * b, b, 27) + conv(b, b, 27);
  n += conv(b, classes, 1) + classes;
  return n;
}

Tensor random_tensor(int c, Dims3 d, std::mt19937_64& rng) {
  Tensor t(c, d);
  std::normal_distribution<double> g(0, 1);
  for (double& v : t.values()) v = g(rng);
  return t;
}

}  // namespace

TEST_CASE("parameter count matches a hand count") {
  ModelConfig c;
  CHECK(expected_parameter_count(c) == hand_count(3, 32, 5));
  CHECK(hand_count(3, 32, 5) == 1413546);
  CHECK(build_model(c, 1).parameter_count() == 1413546);
  // Doubling the filters: kxk terms scale by 4, the input and classifier layers by 2.
  ModelConfig d = c;
  d.base_filters = 64;
  CHECK(build_model(d, 1).parameter_count() == hand_count(3, 64, 5));
  ModelConfig e = small_config();
  CHECK(build_model(e, 3).parameter_count() == hand_count(3, 4, 5));
  const auto p = build_model(c, 1);
  for (double w : p.mixing_weights) CHECK(w == 1.0);
  ModelConfig spread = small_config();
  spread.mixing_init_spread = 0.5;
  const auto q = build_model(spread, 3);
  CHECK(q.mixing_weights == std::vector<double>{0.5, 0.75, 1.0, 1.25, 1.5});
  // The spread does not touch the convolution draws.
  CHECK(q.convs[0].weight == build_model(small_config(), 3).convs[0].weight);
  spread.mixing_init_spread = 1.0;
  CHECK_THROWS_AS(spread.validate(), ConfigError);
}

TEST_CASE("segmentation layer") {
  SUBCASE("equal activations give uniform memberships") {
    Tensor a(5, {2, 1, 1}, 3.7);
    const Tensor m = segmentation_layer(a);
    for (double v : m.values()) CHECK(v == doctest::Approx(0.2).epsilon(1e-15));
  }
  SUBCASE("a spread of 100 per class saturates the maximum") {
    Tensor a(3, {1, 1, 1});
    a.channel(0)[0] = 0;
    a.channel(1)[0] = 100;
    a.channel(2)[0] = 200;
    const Tensor r = rescale_activations(a, 200.0);
    CHECK(r.channel(2)[0] == doctest::Approx(200.0));
    const Tensor m = segmentation_layer(a);
    CHECK(m.channel(0)[0] + m.channel(1)[0] < 1e-40);
    CHECK(m.channel(1)[0] == doctest::Approx(std::exp(-100.0)).epsilon(1e-6));
  }
  SUBCASE("random activations sum to one and stay in range") {
    std::mt19937_64 rng(2);
    Tensor a = random_tensor(5, {100, 10, 10}, rng);
    for (double& v : a.values()) v *= 50.0;
    const Tensor r = rescale_activations(a, 200.0);
    for (double v : r.values()) {
      CHECK(v >= 0.0);
      CHECK(v <= 200.0);
    }
    const Tensor m = segmentation_layer(a);
    for (std::size_t i = 0; i < m.channel_size(); ++i) {
      double s = 0;
      for (int c = 0; c < 5; ++c) s += m.channel(c)[i];
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("conical mix equals a scalar loop") {
  std::mt19937_64 rng(8);
  Tensor m(5, {4, 3, 2});
  std::uniform_real_distribution<double> u(0, 1);
  for (double& v : m.values()) v = u(rng);
  std::vector<double> w{0.3, 1.7, 0.0, 2.2, 0.9};
  const Volume3D r = conical_mix(m, w);
  for (std::size_t i = 0; i < m.channel_size(); ++i) {
    double e = 0;
    for (int c = 0; c < 5; ++c) e += w[c] * m.channel(c)[i];
    CHECK(std::abs(r[i] - e) < 1e-12);
  }
  Tensor onehot(5, {2, 2, 2}, 0.0);
  for (std::size_t i = 0; i < onehot.channel_size(); ++i) onehot.channel(3)[i] = 1.0;
  const auto lesion_only = conical_mix(onehot, w);
  for (double v : lesion_only.data()) CHECK(v == 2.2);
  const auto none = conical_mix(m, std::vector<double>(5, 0.0));
  for (double v : none.data()) CHECK(v == 0.0);
}

TEST_CASE("forward invariants") {
  const ModelConfig c = small_config();
  auto params = build_model(c, 5);
  std::mt19937_64 rng(6);
  const auto patch = testutil::random_channels(c.patch_size, rng);

  const auto a = forward(params, patch);
  const auto b = forward(params, patch);
  CHECK(a.memberships == b.memberships);
  CHECK(a.reconstruction == b.reconstruction);
  CHECK(a.reconstruction.dims() == c.patch_size);
  CHECK(a.memberships.channels() == 5);

  const MultiChannelVolume zero(Volume3D(c.patch_size, {}, 0.0), Volume3D(c.patch_size, {}, 0.0),
                                Volume3D(c.patch_size, {}, 0.0));
  const auto z = forward(params, zero);
  for (std::size_t i = 0; i < z.memberships.channel_size(); ++i) {
    double s = 0;
    for (int k = 0; k < 5; ++k) s += z.memberships.channel(k)[i];
    CHECK(std::isfinite(s));
    CHECK(std::abs(s - 1.0) < 1e-6);
  }

  // Mixing weights only enter the reconstruction, linearly.
  auto scaled = params;
  for (double& w : scaled.mixing_weights) w *= 2.5;
  scaled.mixing_weights[1] += 0.3;
  const auto s = forward(scaled, patch);
  CHECK(s.memberships == a.memberships);
  auto k = params;
  for (double& w : k.mixing_weights) w *= 3.0;
  const auto kr = forward(k, patch);
  for (std::size_t i = 0; i < kr.reconstruction.size(); ++i)
    CHECK(std::abs(kr.reconstruction[i] - 3.0 * a.reconstruction[i]) < 1e-12);
}

TEST_CASE("fast 3x3x3 convolution matches the reference loops") {
  std::mt19937_64 rng(12);
  for (auto [ci, co, d] : {std::tuple{3, 4, Dims3{9, 7, 5}}, std::tuple{8, 8, Dims3{6, 6, 6}},
                           std::tuple{5, 11, Dims3{10, 3, 4}}, std::tuple{16, 3, Dims3{4, 5, 6}}}) {
    ConvLayer layer{ci, co, 3, 1, {}, {}};
    layer.weight.resize(static_cast<std::size_t>(co) * ci * 27);
    layer.bias.resize(co);
    std::normal_distribution<double> g(0, 1);
    for (double& w : layer.weight) w = g(rng);
    for (double& b : layer.bias) b = g(rng);
    const Tensor in = random_tensor(ci, d, rng);
    Tensor fast, ref;
    conv3d_forward(in, layer, fast);
    detail::conv3d_forward_reference(in, layer, ref);
    REQUIRE(fast.dims() == ref.dims());
    for (std::size_t i = 0; i < fast.size(); ++i)
      CHECK(std::abs(fast.values()[i] - ref.values()[i]) < 1e-10);

    const Tensor go = random_tensor(co, ref.dims(), rng);
    ConvLayer gf = layer, gr = layer;
    std::fill(gf.weight.begin(), gf.weight.end(), 0.0);
    std::fill(gf.bias.begin(), gf.bias.end(), 0.0);
    gr = gf;
    Tensor gif(ci, d), gir(ci, d);
    conv3d_backward(in, layer, go, gf, &gif);
    detail::conv3d_backward_reference(in, layer, go, gr, &gir);
    for (std::size_t i = 0; i < gf.weight.size(); ++i)
      CHECK(std::abs(gf.weight[i] - gr.weight[i]) < 1e-9);
    for (std::size_t i = 0; i < gf.bias.size(); ++i) CHECK(std::abs(gf.bias[i] - gr.bias[i]) < 1e-9);
    for (std::size_t i = 0; i < gif.size(); ++i)
      CHECK(std::abs(gif.values()[i] - gir.values()[i]) < 1e-10);
  }
}

TEST_CASE("model config validation") {
  ModelConfig c = small_config();
  c.patch_size = {18, 16, 16};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  ModelConfig d = small_config();
  d.n_classes = 1;
  CHECK_THROWS_AS(d.validate(), ConfigError);
  const nlohmann::json j = small_config();
  CHECK(j.get<ModelConfig>() == small_config());
}
