#include "segae/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "segae/patches.hpp"

namespace segae {

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
    throw ConfigError("Adam betas must lie in (0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (train_stride < 1) throw ConfigError("train_stride must be >= 1");
  if (loss_exponent < 1) throw ConfigError("loss exponent p must be >= 1");
  if (scale_aug_sd < 0.0 || noise_aug_sd < 0.0) throw ConfigError("augmentation sd must be >= 0");
  if (rescale_warmup_epochs < 0) throw ConfigError("rescale_warmup_epochs must be >= 0");
  if (rescale_warmup_epochs > 0 && !(rescale_warmup_start > 0.0))
    throw ConfigError("rescale_warmup_start must be > 0 when warm-up is on");
  if (scale_aug_sd == 0.0 && !(scale_aug_mean > scale_aug_min))
    throw ConfigError("scale_aug_mean must exceed scale_aug_min when sd is 0");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{
      {"epochs", c.epochs},
      {"learning_rate", c.learning_rate},
      {"beta1", c.beta1},
      {"beta2", c.beta2},
      {"adam_eps", c.adam_eps},
      {"batch_size", c.batch_size},
      {"train_stride", c.train_stride},
      {"loss_exponent", c.loss_exponent},
      {"scale_aug_mean", c.scale_aug_mean},
      {"scale_aug_sd", c.scale_aug_sd},
      {"scale_aug_min", c.scale_aug_min},
      {"noise_aug_sd", c.noise_aug_sd},
      {"scale_target", c.scale_target},
      {"rescale_warmup_start", c.rescale_warmup_start},
      {"rescale_warmup_epochs", c.rescale_warmup_epochs},
      {"seed", c.seed},
      {"check_constraints", c.check_constraints},
  };
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  d.epochs = j.value("epochs", d.epochs);
  d.learning_rate = j.value("learning_rate", d.learning_rate);
  d.beta1 = j.value("beta1", d.beta1);
  d.beta2 = j.value("beta2", d.beta2);
  d.adam_eps = j.value("adam_eps", d.adam_eps);
  d.batch_size = j.value("batch_size", d.batch_size);
  d.train_stride = j.value("train_stride", d.train_stride);
  d.loss_exponent = j.value("loss_exponent", d.loss_exponent);
  d.scale_aug_mean = j.value("scale_aug_mean", d.scale_aug_mean);
  d.scale_aug_sd = j.value("scale_aug_sd", d.scale_aug_sd);
  d.scale_aug_min = j.value("scale_aug_min", d.scale_aug_min);
  d.noise_aug_sd = j.value("noise_aug_sd", d.noise_aug_sd);
  d.scale_target = j.value("scale_target", d.scale_target);
  d.rescale_warmup_start = j.value("rescale_warmup_start", d.rescale_warmup_start);
  d.rescale_warmup_epochs = j.value("rescale_warmup_epochs", d.rescale_warmup_epochs);
  d.seed = j.value("seed", d.seed);
  d.check_constraints = j.value("check_constraints", d.check_constraints);
  c = d;
}

namespace {

void check_loss_inputs(const Volume3D& target, const Volume3D& recon, const BinaryMask& mask,
                       int p) {
  if (p < 1) throw ConfigError("loss exponent must be >= 1");
  if (target.dims() != recon.dims() || target.dims() != mask.dims())
    throw DimensionError("loss: target, reconstruction and mask shapes differ");
}

}  // namespace

double reconstruction_loss(const Volume3D& target, const Volume3D& recon, const BinaryMask& mask,
                           int p) {
  check_loss_inputs(target, recon, mask, p);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (!mask[i]) continue;
    const double y = target[i];
    const double yh = recon[i];
    if (!std::isfinite(y) || !std::isfinite(yh)) throw DataError("loss: non-finite input inside mask");
    const double d = std::pow(y, p) - std::pow(yh, p);
    sum += d * d;
    ++n;
  }
  if (n == 0) throw DataError("loss: mask is empty");
  return sum / static_cast<double>(n);
}

Volume3D reconstruction_loss_gradient(const Volume3D& target, const Volume3D& recon,
                                      const BinaryMask& mask, int p) {
  check_loss_inputs(target, recon, mask, p);
  const std::size_t n = mask.count();
  if (n == 0) throw DataError("loss: mask is empty");
  Volume3D grad(recon.dims(), recon.spacing(), 0.0);
  const double scale = -2.0 * p / static_cast<double>(n);
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (!mask[i]) continue;
    const double yh = recon[i];
    grad[i] = scale * std::pow(yh, p - 1) * (std::pow(target[i], p) - std::pow(yh, p));
  }
  return grad;
}

double draw_scale(const TrainConfig& config, std::mt19937_64& rng) {
  if (config.scale_aug_sd == 0.0) return config.scale_aug_mean;
  std::normal_distribution<double> dist(config.scale_aug_mean, config.scale_aug_sd);
  double c = dist(rng);
  while (!(c > config.scale_aug_min)) c = dist(rng);
  return c;
}

AugmentedPatch augment(const MultiChannelVolume& patch, const TrainConfig& config,
                       std::mt19937_64& rng) {
  std::vector<double> scales;
  scales.reserve(patch.channel_count());
  for (std::size_t c = 0; c < patch.channel_count(); ++c) scales.push_back(draw_scale(config, rng));

  std::vector<MultiChannelVolume::Channel> channels;
  for (std::size_t c = 0; c < patch.channel_count(); ++c) {
    const Volume3D& src = patch.channel(c);
    std::vector<double> data(src.data().begin(), src.data().end());
    for (double& v : data) v *= scales[c];
    if (config.noise_aug_sd > 0.0) {
      std::normal_distribution<double> noise(0.0, config.noise_aug_sd);
      for (double& v : data) v += noise(rng);
    }
    channels.push_back({patch.name(c), Volume3D(src.dims(), src.spacing(), std::move(data))});
  }

  const std::size_t flair = patch.channel_index("flair");
  Volume3D target = patch.channel(flair);
  if (config.scale_target)
    for (double& v : target.data()) v *= scales[flair];
  return AugmentedPatch{MultiChannelVolume(std::move(channels)), std::move(target), std::move(scales)};
}

OptimizerState OptimizerState::zeros_for(const ModelParameters& params) {
  OptimizerState s;
  for (const auto a : params.arrays()) {
    s.first_moment.emplace_back(a.size(), 0.0);
    s.second_moment.emplace_back(a.size(), 0.0);
  }
  return s;
}

void project_mixing_weights(ModelParameters& params) {
  for (double& w : params.mixing_weights) w = std::max(0.0, w);
}

void adam_step(ModelParameters& params, const ModelParameters& grads, OptimizerState& state,
               const TrainConfig& config) {
  auto p_arrays = params.arrays();
  const auto g_arrays = grads.arrays();
  if (g_arrays.size() != p_arrays.size() || state.first_moment.size() != p_arrays.size())
    throw DimensionError("adam_step: parameter, gradient and state layouts differ");
  for (std::size_t a = 0; a < g_arrays.size(); ++a) {
    if (g_arrays[a].size() != p_arrays[a].size() || state.first_moment[a].size() != p_arrays[a].size())
      throw DimensionError("adam_step: array size mismatch");
    for (double g : g_arrays[a])
      if (!std::isfinite(g)) throw TrainingError("non-finite gradient", state.step + 1);
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t a = 0; a < p_arrays.size(); ++a) {
    auto p = p_arrays[a];
    const auto g = g_arrays[a];
    auto& m = state.first_moment[a];
    auto& v = state.second_moment[a];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.adam_eps);
    }
  }
  project_mixing_weights(params);
}

double rescale_max_for_epoch(const TrainConfig& config, double model_max, int epoch) {
  if (epoch >= config.rescale_warmup_epochs || config.rescale_warmup_start >= model_max) return model_max;
  const double t = static_cast<double>(epoch) / config.rescale_warmup_epochs;
  return config.rescale_warmup_start * std::pow(model_max / config.rescale_warmup_start, t);
}

std::vector<double> epoch_means(const std::vector<LossRecord>& log) {
  std::vector<double> sums, counts;
  for (const auto& r : log) {
    if (r.epoch < 0) continue;
    const auto e = static_cast<std::size_t>(r.epoch);
    if (sums.size() <= e) {
      sums.resize(e + 1, 0.0);
      counts.resize(e + 1, 0.0);
    }
    sums[e] += r.loss;
    counts[e] += 1.0;
  }
  std::vector<double> out;
  for (std::size_t e = 0; e < sums.size(); ++e)
    if (counts[e] > 0) out.push_back(sums[e] / counts[e]);
  return out;
}

namespace {

struct PatchRef {
  std::size_t subject;
  Index3 origin;
};

void check_constraints(const ModelParameters& params, const ForwardTrace& trace, std::int64_t step) {
  for (double w : params.mixing_weights)
    if (w < 0.0) throw TrainingError("mixing weight became negative", step);
  const Tensor& m = trace.output.memberships;
  for (std::size_t i = 0; i < m.channel_size(); ++i) {
    double s = 0.0;
    for (int c = 0; c < m.channels(); ++c) s += m.channel(c)[i];
    if (std::abs(s - 1.0) > 1e-6) throw TrainingError("membership simplex violated", step);
  }
}

}  // namespace

TrainResult train(const std::vector<TrainingSubject>& cohort, const ModelConfig& model_config,
                  const TrainConfig& train_config, const TrainOptions& options) {
  model_config.validate();
  train_config.validate();
  if (cohort.empty()) throw DataError("training cohort is empty");

  // Whole-volume WM normalization, then the patch list.
  std::vector<MultiChannelVolume> normalized;
  normalized.reserve(cohort.size());
  std::vector<PatchRef> patches;
  const Dims3 stride{train_config.train_stride, train_config.train_stride, train_config.train_stride};
  for (std::size_t s = 0; s < cohort.size(); ++s) {
    const auto& subj = cohort[s];
    require_same_grid(subj.channels.dims(), subj.channels.spacing(), subj.brain_mask.dims(),
                      subj.brain_mask.spacing(), "brain mask of " + subj.id);
    normalized.push_back(normalize_unit_wm(subj.channels, subj.wm_mask));
    for (const auto& origin : plan_patches(subj.channels.dims(), model_config.patch_size, stride).origins) {
      // Patches without brain voxels carry no loss.
      if (!extract_patch(subj.brain_mask, origin, model_config.patch_size).empty())
        patches.push_back({s, origin});
    }
  }
  if (patches.empty()) throw DataError("no training patch intersects a brain mask");

  TrainResult result;
  result.params = options.initial_params ? *options.initial_params
                                         : build_model(model_config, train_config.seed);
  if (!(result.params.config == model_config))
    throw ConfigError("initial parameters were built for a different model config");
  result.state = options.initial_state ? *options.initial_state : OptimizerState::zeros_for(result.params);

  const int p = train_config.loss_exponent;
  for (int epoch = options.start_epoch; epoch < train_config.epochs; ++epoch) {
    // Each epoch owns a generator derived from (seed, epoch) so resuming reproduces it.
    std::seed_seq seq{static_cast<std::uint32_t>(train_config.seed & 0xffffffffu),
                      static_cast<std::uint32_t>(train_config.seed >> 32),
                      static_cast<std::uint32_t>(epoch)};
    std::mt19937_64 rng(seq);
    std::vector<std::size_t> order(patches.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    result.params.config.seg_rescale_max =
        rescale_max_for_epoch(train_config, model_config.seg_rescale_max, epoch);

    ModelParameters batch_grads = result.params.zeros_like();
    int in_batch = 0;
    for (std::size_t k = 0; k < order.size(); ++k) {
      const PatchRef& ref = patches[order[k]];
      const MultiChannelVolume patch =
          extract_patch(normalized[ref.subject], ref.origin, model_config.patch_size);
      const BinaryMask mask =
          extract_patch(cohort[ref.subject].brain_mask, ref.origin, model_config.patch_size);
      const AugmentedPatch aug = augment(patch, train_config, rng);
      const ForwardTrace trace = forward_trace(result.params, aug.input);
      const double loss = reconstruction_loss(aug.target, trace.output.reconstruction, mask, p);
      if (!std::isfinite(loss))
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", subject " +
                                cohort[ref.subject].id,
                            result.state.step + 1);
      const Volume3D grad_recon =
          reconstruction_loss_gradient(aug.target, trace.output.reconstruction, mask, p);
      ModelParameters grads = backward(result.params, trace, grad_recon);
      auto acc = batch_grads.arrays();
      const auto g = grads.arrays();
      for (std::size_t a = 0; a < acc.size(); ++a)
        for (std::size_t i = 0; i < acc[a].size(); ++i) acc[a][i] += g[a][i];
      ++in_batch;
      if (in_batch == train_config.batch_size || k + 1 == order.size()) {
        if (in_batch > 1)
          for (auto a : batch_grads.arrays())
            for (double& v : a) v /= in_batch;
        adam_step(result.params, batch_grads, result.state, train_config);
        batch_grads = result.params.zeros_like();
        in_batch = 0;
      }
      if (train_config.check_constraints) {
        const ForwardTrace after = forward_trace(result.params, aug.input);
        check_constraints(result.params, after, result.state.step);
      }
      result.log.push_back({epoch, k, loss});
      if (options.on_step)
        options.on_step(StepInfo{epoch, result.state.step, loss, result.params, trace, aug.input,
                                 aug.target, mask});
    }
    // Checkpoints always carry the configured model.
    result.params.config.seg_rescale_max = model_config.seg_rescale_max;
    if (options.on_epoch) options.on_epoch(epoch, result.params, result.state, result.log);
  }
  result.params.config.seg_rescale_max = model_config.seg_rescale_max;
  return result;
}

}  // namespace segae
