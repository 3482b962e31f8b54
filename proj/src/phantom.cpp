#include "segae/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "segae/postprocess.hpp"

namespace segae {

void PhantomSpec::validate() const {
  if (dims.x <= 0 || dims.y <= 0 || dims.z <= 0) throw ConfigError("phantom dims must be positive");
  if (!(spacing.x > 0 && spacing.y > 0 && spacing.z > 0))
    throw ConfigError("phantom spacing must be positive");
  if (n_tissues != kTissueCount)
    throw ConfigError("phantom supports exactly " + std::to_string(kTissueCount) + " tissues");
  if (static_cast<int>(intensity_table.size()) != n_tissues)
    throw ConfigError("intensity_table needs one row per tissue");
  for (const auto& row : intensity_table)
    for (double v : row)
      if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("intensity_table must be nonnegative");
  const double lesion_flair = intensity_table[static_cast<int>(Tissue::kLesion)][2];
  for (int t = 0; t < n_tissues; ++t)
    if (t != static_cast<int>(Tissue::kLesion) && !(lesion_flair > intensity_table[t][2]))
      throw ConfigError("lesion FLAIR intensity must exceed every other tissue's");
  if (lesion_count_range.first < 0 || lesion_count_range.second < lesion_count_range.first)
    throw ConfigError("bad lesion_count_range");
  if (!(lesion_radius_range.first > 0) || lesion_radius_range.second < lesion_radius_range.first)
    throw ConfigError("bad lesion_radius_range");
  if (bias_field_amplitude < 0 || bias_field_amplitude >= 1)
    throw ConfigError("bias_field_amplitude must be in [0, 1)");
  if (noise_sigma < 0) throw ConfigError("noise_sigma must be >= 0");
  if (boundary_ramp < 0) throw ConfigError("boundary_ramp must be >= 0");
  if (rim_artifact_count < 0) throw ConfigError("rim_artifact_count must be >= 0");
  if (sulcal_rim_width < 0 || lesion_min_depth < 0) throw ConfigError("negative margin");
}

void to_json(nlohmann::json& j, const PhantomSpec& s) {
  j = nlohmann::json{
      {"dims", {s.dims.x, s.dims.y, s.dims.z}},
      {"spacing", {s.spacing.x, s.spacing.y, s.spacing.z}},
      {"n_tissues", s.n_tissues},
      {"lesion_count_range", {s.lesion_count_range.first, s.lesion_count_range.second}},
      {"lesion_radius_range", {s.lesion_radius_range.first, s.lesion_radius_range.second}},
      {"intensity_table", s.intensity_table},
      {"bias_field_amplitude", s.bias_field_amplitude},
      {"noise_sigma", s.noise_sigma},
      {"boundary_ramp", s.boundary_ramp},
      {"rim_artifact_count", s.rim_artifact_count},
      {"sulcal_rim_width", s.sulcal_rim_width},
      {"lesion_min_depth", s.lesion_min_depth},
      {"seed", s.seed},
  };
}

void from_json(const nlohmann::json& j, PhantomSpec& s) {
  PhantomSpec d;
  if (j.contains("dims")) {
    const auto v = j.at("dims").get<std::array<int, 3>>();
    d.dims = {v[0], v[1], v[2]};
  }
  if (j.contains("spacing")) {
    const auto v = j.at("spacing").get<std::array<double, 3>>();
    d.spacing = {v[0], v[1], v[2]};
  }
  d.n_tissues = j.value("n_tissues", d.n_tissues);
  if (j.contains("lesion_count_range")) {
    const auto v = j.at("lesion_count_range").get<std::array<int, 2>>();
    d.lesion_count_range = {v[0], v[1]};
  }
  if (j.contains("lesion_radius_range")) {
    const auto v = j.at("lesion_radius_range").get<std::array<double, 2>>();
    d.lesion_radius_range = {v[0], v[1]};
  }
  if (j.contains("intensity_table")) d.intensity_table = j.at("intensity_table").get<std::vector<IntensityRow>>();
  d.bias_field_amplitude = j.value("bias_field_amplitude", d.bias_field_amplitude);
  d.noise_sigma = j.value("noise_sigma", d.noise_sigma);
  d.boundary_ramp = j.value("boundary_ramp", d.boundary_ramp);
  d.rim_artifact_count = j.value("rim_artifact_count", d.rim_artifact_count);
  d.sulcal_rim_width = j.value("sulcal_rim_width", d.sulcal_rim_width);
  d.lesion_min_depth = j.value("lesion_min_depth", d.lesion_min_depth);
  d.seed = j.value("seed", d.seed);
  s = d;
}

namespace {

struct Ellipsoid {
  std::array<double, 3> center{};
  std::array<double, 3> semi{};

  // First-order signed distance in voxels: negative inside.
  double signed_distance(double x, double y, double z) const {
    const double u = (x - center[0]) / semi[0];
    const double v = (y - center[1]) / semi[1];
    const double w = (z - center[2]) / semi[2];
    const double rho = std::sqrt(u * u + v * v + w * w);
    if (rho < 1e-12) return -std::min({semi[0], semi[1], semi[2]});
    const double gx = u / semi[0], gy = v / semi[1], gz = w / semi[2];
    const double grad = std::sqrt(gx * gx + gy * gy + gz * gz) / rho;
    return (rho - 1.0) / grad;
  }

  double max_semi() const { return std::max({semi[0], semi[1], semi[2]}); }
};

// Linear ramp of width `ramp` centred on the surface; hard indicator at 0.
double soft_inside(double signed_distance, double ramp) {
  if (ramp <= 0.0) return signed_distance <= 0.0 ? 1.0 : 0.0;
  return std::clamp(0.5 - signed_distance / ramp, 0.0, 1.0);
}

struct Geometry {
  Ellipsoid brain;
  Ellipsoid inner;  // brain minus the cortical shell
  std::vector<Ellipsoid> ventricles;
  std::vector<Ellipsoid> lesions;
  std::vector<Ellipsoid> rim_artifacts;
};

// Calls fn(index, soft membership) for every voxel in the blob's bounding box.
template <typename Fn>
void visit_blob(const Ellipsoid& e, const Dims3& dims, double ramp, Fn&& fn) {
  const double pad = ramp + 1.0;
  std::array<int, 3> lo{}, hi{};
  for (int a = 0; a < 3; ++a) {
    lo[a] = std::max(0, static_cast<int>(std::floor(e.center[a] - e.semi[a] - pad)));
    hi[a] = std::min(dims[a] - 1, static_cast<int>(std::ceil(e.center[a] + e.semi[a] + pad)));
  }
  const std::size_t nx = static_cast<std::size_t>(dims.x);
  const std::size_t nxy = nx * static_cast<std::size_t>(dims.y);
  for (int z = lo[2]; z <= hi[2]; ++z)
    for (int y = lo[1]; y <= hi[1]; ++y)
      for (int x = lo[0]; x <= hi[0]; ++x)
        fn(static_cast<std::size_t>(x) + nx * static_cast<std::size_t>(y) +
               nxy * static_cast<std::size_t>(z),
           soft_inside(e.signed_distance(x, y, z), ramp));
}

// Max of soft memberships over a set of blobs.
Volume3D blob_map(const std::vector<Ellipsoid>& blobs, const Dims3& dims, const Spacing3& sp,
                  double ramp) {
  Volume3D out(dims, sp, 0.0);
  for (const auto& e : blobs)
    visit_blob(e, dims, ramp, [&](std::size_t i, double m) {
      if (m > out[i]) out[i] = m;
    });
  return out;
}

Geometry make_geometry(const PhantomSpec& spec, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  const Dims3& d = spec.dims;
  Geometry g;
  for (int a = 0; a < 3; ++a) {
    g.brain.center[a] = 0.5 * (d[a] - 1) + uniform(-1.0, 1.0);
    g.brain.semi[a] = 0.46 * d[a] * uniform(0.97, 1.03);
  }
  const double shell = std::max(2.0, 0.055 * std::min({d.x, d.y, d.z}));
  g.inner = g.brain;
  for (double& s : g.inner.semi) s -= shell;

  const double vscale = uniform(0.8, 1.5);
  for (int side : {-1, 1}) {
    Ellipsoid v;
    v.center = g.brain.center;
    v.center[0] += side * 0.06 * d.x;
    v.semi = {0.03 * d.x * vscale, 0.09 * d.y * vscale, 0.05 * d.z * vscale};
    for (double& s : v.semi) s = std::max(s, 1.0);
    g.ventricles.push_back(v);
  }
  return g;
}

BinaryMask hard_mask(const Volume3D& soft) {
  return threshold_at_least(soft, 0.5);
}

}  // namespace

Phantom generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  const Dims3& dims = spec.dims;
  const Spacing3& sp = spec.spacing;
  const double ramp = spec.boundary_ramp;
  Geometry geo = make_geometry(spec, rng);

  // Brain, inner (non-cortical) and ventricle soft maps.
  Volume3D brain(dims, sp), inner(dims, sp), tissue_soft(dims, sp);
  for (int z = 0; z < dims.z; ++z)
    for (int y = 0; y < dims.y; ++y)
      for (int x = 0; x < dims.x; ++x) {
        const double db = geo.brain.signed_distance(x, y, z);
        brain(x, y, z) = soft_inside(db, ramp);
        inner(x, y, z) = soft_inside(geo.inner.signed_distance(x, y, z), ramp);
        tissue_soft(x, y, z) = soft_inside(db + spec.sulcal_rim_width, ramp);
      }
  const Volume3D vent = blob_map(geo.ventricles, dims, sp, ramp);
  const BinaryMask brain_mask = hard_mask(brain);
  const BinaryMask deep = erode(brain_mask, StructuringElement::cube3(),
                                static_cast<int>(std::ceil(spec.lesion_min_depth)));

  // Lesions: whole blob inside WM, clear of ventricles, below the erosion margin.
  std::uniform_int_distribution<int> count_dist(spec.lesion_count_range.first,
                                                spec.lesion_count_range.second);
  const int n_lesions = count_dist(rng);
  constexpr int kMaxTries = 2000;
  for (int l = 0; l < n_lesions; ++l) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxTries && !placed; ++attempt) {
      Ellipsoid e;
      const double r = uniform(spec.lesion_radius_range.first, spec.lesion_radius_range.second);
      for (int a = 0; a < 3; ++a) {
        e.semi[a] = r * uniform(0.75, 1.25);
        e.center[a] = uniform(geo.inner.center[a] - geo.inner.semi[a],
                              geo.inner.center[a] + geo.inner.semi[a]);
      }
      const double reach = e.max_semi() + ramp + 1.0;
      if (geo.inner.signed_distance(e.center[0], e.center[1], e.center[2]) > -reach) continue;
      bool clear = true;
      for (const auto& v : geo.ventricles)
        if (v.signed_distance(e.center[0], e.center[1], e.center[2]) < reach + 0.5) clear = false;
      if (!clear) continue;
      visit_blob(e, dims, ramp, [&](std::size_t i, double m) {
        if (m > 0.0 && !deep[i]) clear = false;
      });
      if (!clear) continue;
      geo.lesions.push_back(e);
      placed = true;
    }
    if (!placed)
      throw GenerationError("could not place lesion " + std::to_string(l + 1) + " of " +
                            std::to_string(n_lesions) + " after " + std::to_string(kMaxTries) +
                            " attempts");
  }
  const Volume3D les = blob_map(geo.lesions, dims, sp, ramp);

  // Rim artifacts: hyperintense FLAIR blobs within the cortical shell.
  for (int k = 0; k < spec.rim_artifact_count; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxTries && !placed; ++attempt) {
      Ellipsoid e;
      const double r = uniform(1.5, 3.0);
      for (int a = 0; a < 3; ++a) {
        e.semi[a] = r;
        e.center[a] = uniform(geo.brain.center[a] - geo.brain.semi[a],
                              geo.brain.center[a] + geo.brain.semi[a]);
      }
      const double db = geo.brain.signed_distance(e.center[0], e.center[1], e.center[2]);
      if (db > -1.0 - r * 0.5 || db < -3.5) continue;
      geo.rim_artifacts.push_back(e);
      placed = true;
    }
    if (!placed) throw GenerationError("could not place rim artifact");
  }
  const Volume3D rim = blob_map(geo.rim_artifacts, dims, sp, ramp);

  // Memberships: nested construction sums to one by design; renormalize anyway.
  PhantomTruth truth;
  truth.lesion_count = n_lesions;
  truth.memberships.assign(kTissueCount, Volume3D(dims, sp, 0.0));
  auto& m_wm = truth.memberships[static_cast<int>(Tissue::kWhiteMatter)];
  auto& m_gm = truth.memberships[static_cast<int>(Tissue::kGrayMatter)];
  auto& m_csf = truth.memberships[static_cast<int>(Tissue::kCsf)];
  auto& m_les = truth.memberships[static_cast<int>(Tissue::kLesion)];
  auto& m_bg = truth.memberships[static_cast<int>(Tissue::kBackground)];
  for (std::size_t i = 0; i < brain.size(); ++i) {
    const double b = brain[i];
    const double in = inner[i];
    const double v = vent[i];
    const double l = les[i];
    double parts[kTissueCount];
    parts[static_cast<int>(Tissue::kBackground)] = 1.0 - b;
    parts[static_cast<int>(Tissue::kGrayMatter)] = b * (1.0 - in);
    parts[static_cast<int>(Tissue::kCsf)] = b * in * v;
    parts[static_cast<int>(Tissue::kLesion)] = b * in * (1.0 - v) * l;
    parts[static_cast<int>(Tissue::kWhiteMatter)] = b * in * (1.0 - v) * (1.0 - l);
    double sum = 0.0;
    for (double p : parts) sum += p;
    m_wm[i] = parts[0] / sum;
    m_gm[i] = parts[1] / sum;
    m_csf[i] = parts[2] / sum;
    m_les[i] = parts[3] / sum;
    m_bg[i] = parts[4] / sum;
  }
  truth.brain_mask = brain_mask;
  truth.wm_mask = hard_mask(m_wm) & brain_mask;
  truth.lesion_mask = hard_mask(m_les);
  truth.tissue_mask = hard_mask(tissue_soft) & brain_mask;
  truth.rim_artifact_mask = hard_mask(rim) & brain_mask;
  truth.mixing_weights = spec.intensity_table;

  // Channels: mixture, artifacts (FLAIR), bias field, noise, clamp.
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double lesion_flair = spec.intensity_table[static_cast<int>(Tissue::kLesion)][2];
  std::vector<Volume3D> channels;
  for (int c = 0; c < 3; ++c) {
    Volume3D ch(dims, sp, 0.0);
    for (std::size_t i = 0; i < ch.size(); ++i) {
      double v = 0.0;
      for (int t = 0; t < kTissueCount; ++t) v += truth.memberships[t][i] * spec.intensity_table[t][c];
      ch[i] = v;
    }
    if (c == 2 && spec.rim_artifact_count > 0)
      for (std::size_t i = 0; i < ch.size(); ++i)
        ch[i] = (1.0 - rim[i] * brain[i]) * ch[i] + rim[i] * brain[i] * lesion_flair;

    if (spec.bias_field_amplitude > 0.0) {
      std::array<double, 9> coef{};
      for (double& k : coef) k = gauss(rng);
      Volume3D field(dims, sp, 0.0);
      double mean = 0.0;
      std::size_t n = 0;
      for (int z = 0; z < dims.z; ++z)
        for (int y = 0; y < dims.y; ++y)
          for (int x = 0; x < dims.x; ++x) {
            const double u = (x - geo.brain.center[0]) / geo.brain.semi[0];
            const double v = (y - geo.brain.center[1]) / geo.brain.semi[1];
            const double w = (z - geo.brain.center[2]) / geo.brain.semi[2];
            const double p = coef[0] * u + coef[1] * v + coef[2] * w + coef[3] * u * u +
                             coef[4] * v * v + coef[5] * w * w + coef[6] * u * v +
                             coef[7] * u * w + coef[8] * v * w;
            field(x, y, z) = p;
            if (brain_mask(x, y, z)) {
              mean += p;
              ++n;
            }
          }
      mean = n > 0 ? mean / static_cast<double>(n) : 0.0;
      double peak = 0.0;
      for (std::size_t i = 0; i < field.size(); ++i)
        if (brain_mask[i]) peak = std::max(peak, std::abs(field[i] - mean));
      const double scale = peak > 0.0 ? spec.bias_field_amplitude / peak : 0.0;
      for (std::size_t i = 0; i < ch.size(); ++i)
        ch[i] *= std::max(0.0, 1.0 + scale * (field[i] - mean));
    }
    if (spec.noise_sigma > 0.0)
      for (std::size_t i = 0; i < ch.size(); ++i) ch[i] += spec.noise_sigma * gauss(rng);
    for (std::size_t i = 0; i < ch.size(); ++i) ch[i] = std::max(0.0, ch[i]);
    channels.push_back(std::move(ch));
  }
  return Phantom{MultiChannelVolume(std::move(channels[0]), std::move(channels[1]),
                                    std::move(channels[2])),
                 std::move(truth)};
}

std::uint64_t subject_seed(std::uint64_t cohort_seed, std::size_t index) {
  // splitmix64 over (seed, index)
  std::uint64_t z = cohort_seed + 0x9E3779B97F4A7C15ull * (static_cast<std::uint64_t>(index) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

Phantom generate_subject(const PhantomSpec& spec, std::uint64_t cohort_seed, std::size_t index) {
  PhantomSpec s = spec;
  s.seed = subject_seed(cohort_seed, index);
  return generate_phantom(s);
}

std::vector<Phantom> generate_cohort(const PhantomSpec& spec, std::size_t n_subjects,
                                     std::uint64_t seed) {
  if (n_subjects == 0) throw ConfigError("cohort needs at least one subject");
  std::vector<Phantom> out;
  out.reserve(n_subjects);
  for (std::size_t i = 0; i < n_subjects; ++i) out.push_back(generate_subject(spec, seed, i));
  return out;
}

}  // namespace segae
