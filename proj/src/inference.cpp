#include "segae/inference.hpp"

#include <iostream>
#include <string>

#include "segae/patches.hpp"

namespace segae {

void InferenceConfig::validate() const {
  if (predict_stride < 1) throw ConfigError("predict_stride must be >= 1");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
}

void to_json(nlohmann::json& j, const InferenceConfig& c) {
  j = nlohmann::json{{"predict_stride", c.predict_stride}, {"threshold", c.threshold}};
  if (c.lesion_channel_override)
    j["lesion_channel_override"] = *c.lesion_channel_override;
  else
    j["lesion_channel_override"] = nullptr;
}

void from_json(const nlohmann::json& j, InferenceConfig& c) {
  InferenceConfig d;
  d.predict_stride = j.value("predict_stride", d.predict_stride);
  d.threshold = j.value("threshold", d.threshold);
  if (j.contains("lesion_channel_override") && !j.at("lesion_channel_override").is_null())
    d.lesion_channel_override = j.at("lesion_channel_override").get<int>();
  c = d;
}

ChannelSelection select_lesion_channel(const ModelParameters& params,
                                       std::optional<int> override_channel) {
  const int n = static_cast<int>(params.mixing_weights.size());
  if (override_channel) {
    if (*override_channel < 0 || *override_channel >= n)
      throw ConfigError("lesion channel override " + std::to_string(*override_channel) +
                        " outside [0, " + std::to_string(n) + ")");
    return {*override_channel, false};
  }
  if (n == 0) throw ConfigError("model has no mixing weights");
  ChannelSelection sel;
  for (int c = 1; c < n; ++c)
    if (params.mixing_weights[c] > params.mixing_weights[sel.channel]) sel.channel = c;
  for (int c = 0; c < n; ++c)
    if (c != sel.channel && params.mixing_weights[c] == params.mixing_weights[sel.channel]) sel.tie = true;
  if (sel.tie)
    std::cerr << "warning: several mixing weights share the maximum; using channel " << sel.channel
              << "\n";
  return sel;
}

std::vector<Volume3D> predict_memberships(const ModelParameters& params,
                                          const MultiChannelVolume& vol, const BinaryMask& wm_mask,
                                          const BinaryMask& brain_mask,
                                          const InferenceConfig& config) {
  config.validate();
  const Dims3& dims = vol.dims();
  const Dims3& ps = params.config.patch_size;
  for (int a = 0; a < 3; ++a)
    if (dims[a] < ps[a])
      throw DimensionError("volume " + to_string(dims) + " is smaller than the patch size " +
                           to_string(ps));
  require_same_grid(vol.dims(), vol.spacing(), brain_mask.dims(), brain_mask.spacing(), "brain mask");

  const MultiChannelVolume normalized = normalize_unit_wm(vol, wm_mask);
  const int s = config.predict_stride;
  for (int a = 0; a < 3; ++a) {
    const auto origins = plan_axis(dims[a], ps[a], s);
    bool gap = false;
    for (std::size_t i = 1; i < origins.size(); ++i) gap = gap || origins[i] - origins[i - 1] > ps[a];
    if (gap)
      throw ConfigError("prediction stride " + std::to_string(s) + " exceeds the patch size " +
                        to_string(ps) + "; voxels would be left uncovered");
  }
  const PatchGrid grid = plan_patches(dims, ps, Dims3{s, s, s});
  std::vector<PatchAccumulator> acc(static_cast<std::size_t>(params.config.n_classes),
                                    PatchAccumulator(dims, vol.spacing()));
  for (const auto& origin : grid.origins) {
    const ForwardOutput out = forward(params, extract_patch(normalized, origin, ps));
    for (int c = 0; c < params.config.n_classes; ++c)
      acc[c].add(origin, out.memberships.to_volume(c, vol.spacing()));
  }
  std::vector<Volume3D> maps;
  maps.reserve(acc.size());
  for (auto& a : acc) {
    Volume3D m = a.finish();
    for (std::size_t i = 0; i < m.size(); ++i)
      if (!brain_mask[i]) m[i] = 0.0;
    maps.push_back(std::move(m));
  }
  return maps;
}

BinaryMask binarize(const Volume3D& prob, double threshold) {
  return threshold_at_least(prob, threshold);
}

}  // namespace segae
