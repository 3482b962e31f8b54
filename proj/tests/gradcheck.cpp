#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "segae/model.hpp"
#include "segae/trainer.hpp"

namespace segae::testing {

GradCheckResult gradient_check(const GradCheckSetup& setup) {
  ModelConfig cfg;
  cfg.base_filters = setup.base_filters;
  cfg.n_scales = setup.n_scales;
  cfg.patch_size = {setup.patch, setup.patch, setup.patch};
  cfg.skip_connections = setup.skip_connections;
  ModelParameters params = build_model(cfg, setup.seed);
  std::mt19937_64 rng(setup.seed + 1);
  std::uniform_real_distribution<double> u(0.2, 1.8);
  for (double& w : params.mixing_weights) w = u(rng);

  std::vector<Volume3D> chans;
  for (int c = 0; c < cfg.in_channels; ++c) {
    Volume3D v(cfg.patch_size, {}, 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = u(rng);
    chans.push_back(std::move(v));
  }
  const MultiChannelVolume input(chans[0], chans[1], chans[2]);
  const Volume3D& target = chans[2];
  BinaryMask mask(cfg.patch_size, {}, false);
  std::bernoulli_distribution inside(0.7);
  for (std::size_t i = 0; i < mask.size(); ++i) mask.set(i, inside(rng));

  auto loss_of = [&](const ModelParameters& p) {
    return reconstruction_loss(target, forward(p, input).reconstruction, mask, 3);
  };
  const ForwardTrace trace = forward_trace(params, input);
  const ModelParameters grads =
      backward(params, trace, reconstruction_loss_gradient(target, trace.output.reconstruction, mask, 3));

  GradCheckResult r;
  auto arrays = params.arrays();
  const auto garrays = grads.arrays();
  std::size_t flat = 0;
  for (std::size_t a = 0; a < arrays.size(); ++a) {
    for (std::size_t k = 0; k < arrays[a].size(); ++k, ++flat) {
      ++r.total;
      const double orig = arrays[a][k];
      arrays[a][k] = orig + setup.step;
      const double lp = loss_of(params);
      arrays[a][k] = orig - setup.step;
      const double lm = loss_of(params);
      arrays[a][k] = orig;
      const double numeric = (lp - lm) / (2.0 * setup.step);
      const double analytic = garrays[a][k];
      const double rel = std::abs(analytic - numeric) /
                         std::max({std::abs(analytic), std::abs(numeric), setup.floor});
      ++r.checked;
      if (rel > r.worst_relative_error) {
        r.worst_relative_error = rel;
        r.worst_index = flat;
      }
    }
  }
  return r;
}

}  // namespace segae::testing
