// Acceptance suite: runs criteria 1-8 and prints one PASS/FAIL line for each.
//
//   segae_acceptance            all criteria
//   segae_acceptance 1 2 7      a subset
//
// Criteria 4-6 train the phantom model once (tens of minutes on one core) and
// cache it under $SEGAE_CACHE_DIR, or the build tree's segae_cache when unset.

#include <malloc.h>
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "segae/checkpoint.hpp"
#include "segae/inference.hpp"
#include "segae/metrics.hpp"
#include "segae/patches.hpp"
#include "segae/pipeline.hpp"
#include "segae/postprocess.hpp"
#include "test_util.hpp"
#include "wilcoxon_oracle.hpp"

using namespace segae;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Dims3 random_dims(std::mt19937_64& rng, int max_side = 10) {
  auto side = [&] { return 1 + static_cast<int>(rng() % static_cast<unsigned>(max_side)); };
  return {side(), side(), side()};
}

// --- 1: oracle equivalence --------------------------------------------------

BinaryMask brute_erode_once(const BinaryMask& m) {
  const Dims3 d = m.dims();
  BinaryMask out(d, m.spacing());
  for (int z = 0; z < d.z; ++z)
    for (int y = 0; y < d.y; ++y)
      for (int x = 0; x < d.x; ++x) {
        bool keep = true;
        for (int dz = -1; dz <= 1 && keep; ++dz)
          for (int dy = -1; dy <= 1 && keep; ++dy)
            for (int dx = -1; dx <= 1 && keep; ++dx) {
              const int a = x + dx, b = y + dy, c = z + dz;
              keep = a >= 0 && b >= 0 && c >= 0 && a < d.x && b < d.y && c < d.z && m(a, b, c);
            }
        out.set(x, y, z, keep);
      }
  return out;
}

Outcome criterion_oracles() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int kInstances = 200;
  int mismatches = 0;
  double worst_real = 0.0;
  auto real_check = [&](double got, double want) {
    worst_real = std::max(worst_real, std::abs(got - want));
    if (std::abs(got - want) > 1e-12) ++mismatches;
  };

  for (int t = 0; t < kInstances; ++t) {
    const Dims3 d = random_dims(rng);
    const Spacing3 sp{0.5 + unit(rng), 0.5 + unit(rng), 0.5 + unit(rng)};
    const auto pred = testutil::random_mask(d, rng, unit(rng) * 0.6, sp);
    const auto truth = testutil::random_mask(d, rng, unit(rng) * 0.6, sp);

    // Confusion counts and derived scores.
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (int z = 0; z < d.z; ++z)
      for (int y = 0; y < d.y; ++y)
        for (int x = 0; x < d.x; ++x) {
          const bool p = pred(x, y, z), q = truth(x, y, z);
          tp += p && q;
          fp += p && !q;
          fn += !p && q;
          tn += !p && !q;
        }
    const ConfusionCounts c = confusion(pred, truth);
    if (!(c == ConfusionCounts{tp, fp, fn, tn})) ++mismatches;
    const double np = static_cast<double>(tp + fp), nt = static_cast<double>(tp + fn);
    const bool both_empty = np == 0 && nt == 0;
    real_check(dice(c), both_empty ? 1.0 : (np + nt > 0 ? 2.0 * tp / (np + nt) : 0.0));
    real_check(ppv(c), both_empty ? 1.0 : (np > 0 ? tp / np : 0.0));
    real_check(tpr(c), both_empty ? 1.0 : (nt > 0 ? tp / nt : 0.0));
    const double vox = sp.x * sp.y * sp.z / 1000.0;
    const double vp = np * vox, vt = nt * vox;
    real_check(mask_volume(pred), vp);
    const auto a = avd(mask_volume(pred), mask_volume(truth));
    if (nt == 0) {
      if (a) ++mismatches;
    } else {
      real_check(a.value_or(-1.0), std::abs(vp - vt) / vt);
    }

    // Erosion, iterated.
    const auto dense = testutil::random_mask(d, rng, 0.7 + 0.3 * unit(rng), sp);
    const int iters = static_cast<int>(rng() % 4);
    BinaryMask expect = dense;
    for (int i = 0; i < iters; ++i) expect = brute_erode_once(expect);
    if (!(erode(dense, StructuringElement::cube3(), iters) == expect)) ++mismatches;

    // Binarization.
    const auto prob = testutil::random_volume(d, rng);
    const double thr = t % 10 == 0 ? 0.5 : unit(rng);
    const auto bin = binarize(prob, thr);
    for (std::size_t i = 0; i < prob.size(); ++i)
      if (bin[i] != (prob[i] >= thr)) ++mismatches;

    // Patch assembly: random windows plus a full cover, against per-voxel means.
    const Dims3 ps{1 + static_cast<int>(rng() % d.x), 1 + static_cast<int>(rng() % d.y),
                   1 + static_cast<int>(rng() % d.z)};
    std::vector<PlacedPatch> patches;
    const auto grid = plan_patches(d, ps, ps);
    for (const auto& o : grid.origins) patches.push_back({o, testutil::random_volume(ps, rng, -3, 3)});
    const int extra = static_cast<int>(rng() % 6);
    for (int k = 0; k < extra; ++k) {
      Index3 o{static_cast<int>(rng() % (d.x - ps.x + 1)), static_cast<int>(rng() % (d.y - ps.y + 1)),
               static_cast<int>(rng() % (d.z - ps.z + 1))};
      patches.push_back({o, testutil::random_volume(ps, rng, -3, 3)});
    }
    const auto assembled = assemble_patches(patches, d);
    for (int z = 0; z < d.z; ++z)
      for (int y = 0; y < d.y; ++y)
        for (int x = 0; x < d.x; ++x) {
          double sum = 0.0;
          int n = 0;
          for (const auto& p : patches) {
            const int i = x - p.origin[0], j = y - p.origin[1], k = z - p.origin[2];
            if (i >= 0 && j >= 0 && k >= 0 && i < ps.x && j < ps.y && k < ps.z) {
              sum += p.values(i, j, k);
              ++n;
            }
          }
          real_check(assembled(x, y, z), sum / n);
        }
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 60.0,
          fmt("%d random instances per operation, %d mismatches, worst real error %.1e, %.1f s",
              kInstances, mismatches, worst_real, secs)};
}

// --- 2: gradient check -------------------------------------------------------

Outcome criterion_gradcheck() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = segae::testing::gradient_check(segae::testing::GradCheckSetup{});
  const double secs = seconds_since(t0);
  return {r.checked == r.total && r.worst_relative_error < 1e-4 && secs < 300.0,
          fmt("%zu/%zu parameters, worst relative error %.2e, %.1f s", r.checked, r.total,
              r.worst_relative_error, secs)};
}

// --- 3: constraint suite ------------------------------------------------------

Outcome criterion_constraints() {
  PhantomSpec spec;
  spec.dims = {48, 48, 48};
  spec.lesion_min_depth = 6.0;
  spec.lesion_radius_range = {1.5, 3.5};
  std::vector<TrainingSubject> cohort;
  for (std::size_t i = 0; i < 2; ++i) {
    Phantom p = generate_subject(spec, 11, i);
    cohort.push_back({"c" + std::to_string(i), std::move(p.channels), p.truth.brain_mask, p.truth.wm_mask});
  }
  ModelConfig mc;
  mc.base_filters = 4;
  mc.patch_size = {32, 32, 32};
  // Spread-out initial weights and a large step so the zero clamp is exercised.
  mc.mixing_init_spread = 0.99;
  TrainConfig tc;
  tc.epochs = 2;
  tc.learning_rate = 0.2;
  tc.train_stride = 16;
  tc.seed = 2;

  std::int64_t steps = 0, violations = 0, clamped = 0;
  double min_w = INFINITY, worst_sum = 0.0, lo = INFINITY, hi = -INFINITY, worst_delta = 0.0;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> big(0.0, 50.0);
  TrainOptions opt;
  opt.on_step = [&](const StepInfo& s) {
    ++steps;
    for (double w : s.params.mixing_weights) {
      min_w = std::min(min_w, w);
      clamped += w == 0.0;
    }
    const Tensor& m = s.trace.output.memberships;
    for (std::size_t i = 0; i < m.channel_size(); ++i) {
      double sum = 0.0;
      for (int c = 0; c < m.channels(); ++c) sum += m.channel(c)[i];
      worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
    }
    for (double v : s.trace.rescaled.values()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    // Perturb target and reconstruction outside the brain mask.
    Volume3D target = s.target, recon = s.trace.output.reconstruction;
    for (std::size_t i = 0; i < target.size(); ++i)
      if (!s.mask[i]) {
        target[i] += big(rng);
        recon[i] += big(rng);
      }
    const double base = reconstruction_loss(s.target, s.trace.output.reconstruction, s.mask, 3);
    const double moved = reconstruction_loss(target, recon, s.mask, 3);
    worst_delta = std::max(worst_delta, std::abs(moved - base));
    if (base != s.loss) ++violations;
  };
  const auto result = train(cohort, mc, tc, opt);
  for (double w : result.params.mixing_weights) min_w = std::min(min_w, w);
  const bool pass = steps > 0 && min_w >= 0.0 && worst_sum <= 1e-6 && lo >= 0.0 && hi <= 200.0 &&
                    worst_delta == 0.0 && violations == 0;
  return {pass, fmt("%lld steps: min mixing weight %.4f (%lld weight-steps at the zero clamp), worst |sum-1| "
                    "%.1e, rescaled range [%.3g, %.6g], loss delta from outside-mask perturbation %.1g, %lld "
                    "reported losses not reproduced",
                    static_cast<long long>(steps), min_w, static_cast<long long>(clamped), worst_sum, lo, hi,
                    worst_delta, static_cast<long long>(violations))};
}

// --- 4-6: phantom model --------------------------------------------------------

struct PhantomModel {
  PipelineConfig config;
  fs::path cohort_dir;
  fs::path run_dir;
  ModelParameters params;
  double train_seconds = 0.0;  // 0 when loaded from the cache
  std::vector<double> epoch_loss;
};

fs::path default_cache() {
  if (auto c = cache_dir()) return *c;
  return fs::path(SEGAE_BUILD_DIR) / "segae_cache";
}

PhantomModel& phantom_model() {
  static std::optional<PhantomModel> model;
  if (model) return *model;
  PhantomModel m;
  m.config = load_pipeline_config(fs::path(SEGAE_SOURCE_DIR) / "configs" / "acceptance.json");
  const std::string key = json_digest(nlohmann::json(m.config));
  const fs::path root = default_cache() / ("acceptance_" + key);
  m.cohort_dir = root / "cohort";
  m.run_dir = root / "run";
  if (!fs::exists(m.cohort_dir / "cohort.json")) {
    SynthOptions so;
    so.force = true;
    synthesize_cohort(m.config, m.cohort_dir, so);
  }
  const fs::path ckpt = m.run_dir / "model.ckpt";
  bool done = false;
  if (fs::exists(ckpt)) done = load_checkpoint(ckpt, m.config.model).epochs_completed >= m.config.train.epochs;
  if (!done) {
    std::cout << "training the phantom model (" << m.config.train.epochs << " epochs) into "
              << m.run_dir.string() << "\n"
              << std::flush;
    const auto t0 = std::chrono::steady_clock::now();
    TrainRunOptions opt;
    opt.resume = true;
    opt.progress = &std::cout;
    run_training(m.config, m.cohort_dir, m.run_dir, opt);
    m.train_seconds = seconds_since(t0);
  }
  m.params = load_checkpoint(ckpt, m.config.model).params;
  std::ifstream loss(m.run_dir / "loss.csv");
  std::stringstream ss;
  ss << loss.rdbuf();
  m.epoch_loss = epoch_means(parse_loss_csv(ss.str()));
  model = std::move(m);
  return *model;
}

double dice_of(const BinaryMask& pred, const BinaryMask& truth) { return dice(confusion(pred, truth)); }

Outcome criterion_identifiability() {
  PhantomModel& pm = phantom_model();
  const auto t0 = std::chrono::steady_clock::now();
  const CohortIndex cohort = load_cohort(pm.cohort_dir);
  const auto tests = cohort.split("test");
  const auto sel = select_lesion_channel(pm.params);
  const int n_classes = pm.config.model.n_classes;

  std::vector<std::vector<double>> channel_dice(tests.size(), std::vector<double>(n_classes));
  std::vector<CohortSubject> subjects(tests.size());
  std::vector<double> coarse_dice(tests.size());
  parallel_for(tests.size(), pm.config.jobs, [&](std::size_t i) {
    const SubjectData s = load_subject(pm.cohort_dir / tests[i].id, tests[i].id);
    const auto pred = predict_subject(pm.params, s, pm.config.inference, pm.config.postprocess, true);
    for (int c = 0; c < n_classes; ++c)
      channel_dice[i][c] = dice_of(binarize(pred.memberships[c], pm.config.inference.threshold), *s.lesion_truth);
    subjects[i] = {s.id, pred.final_mask, *s.lesion_truth};
    InferenceConfig coarse = pm.config.inference;
    coarse.predict_stride = pm.config.model.patch_size.x;
    const auto cp = predict_subject(pm.params, s, coarse, pm.config.postprocess, true);
    coarse_dice[i] = dice_of(cp.final_mask, *s.lesion_truth);
  });
  const MetricReport report = evaluate_cohort(subjects);
  write_report(report, pm.run_dir / "acceptance_report");

  std::vector<double> mean_channel(n_classes, 0.0);
  for (const auto& row : channel_dice)
    for (int c = 0; c < n_classes; ++c) mean_channel[c] += row[c] / static_cast<double>(tests.size());
  bool selection_ok = true;
  for (int c = 0; c < n_classes; ++c)
    if (c != sel.channel && mean_channel[c] >= mean_channel[sel.channel]) selection_ok = false;

  std::cout << "  test subject   manual cm3   pred cm3    Dice    AVD   (raw Dice per channel)\n";
  for (std::size_t i = 0; i < tests.size(); ++i) {
    const auto& r = report.subjects[i];
    std::cout << fmt("  %-12s %10.3f %10.3f %7.3f %6.3f  ", r.id.c_str(), r.manual_volume_cm3,
                     r.pred_volume_cm3, r.dice, r.avd.value_or(NAN));
    for (double d : channel_dice[i]) std::cout << fmt(" %.3f", d);
    std::cout << "\n";
  }
  std::cout << "  mixing weights:";
  for (double w : pm.params.mixing_weights) std::cout << fmt(" %.4f", w);
  std::cout << "\n  mean raw Dice per channel:";
  for (double d : mean_channel) std::cout << fmt(" %.3f", d);
  double coarse = 0.0;
  for (double d : coarse_dice) coarse += d / static_cast<double>(coarse_dice.size());
  std::cout << fmt("\n  info: stride %d Dice %.3f vs stride %d (no overlap) Dice %.3f\n",
                   pm.config.inference.predict_stride, report.summary.at("dice").mean,
                   pm.config.model.patch_size.x, coarse);
  if (pm.epoch_loss.size() >= 2)
    std::cout << fmt("  info: epoch mean loss %.5f -> %.5f (ratio %.3f), training %s\n", pm.epoch_loss.front(),
                     pm.epoch_loss.back(), pm.epoch_loss.back() / pm.epoch_loss.front(),
                     pm.train_seconds > 0 ? fmt("%.0f s", pm.train_seconds).c_str() : "cached");

  const double md = report.summary.at("dice").mean;
  const double ma = report.summary.at("avd").mean;
  const double slope = report.fit ? report.fit->slope : NAN;
  const bool pass = selection_ok && md >= 0.85 && ma <= 0.15 && slope >= 0.85 && slope <= 1.15;
  return {pass, fmt("selected channel %d (%s), mean Dice %.3f, mean AVD %.3f, volume slope %.3f, "
                    "intercept %.3f; evaluation %.0f s",
                    sel.channel, selection_ok ? "best" : "NOT best", md, ma, slope,
                    report.fit ? report.fit->intercept : NAN, seconds_since(t0))};
}

Outcome criterion_zero_lesion() {
  PhantomModel& pm = phantom_model();
  PhantomSpec spec = pm.config.phantom;
  spec.lesion_count_range = {0, 0};
  double worst = 0.0;
  std::string per;
  for (std::uint64_t seed : {101u, 202u, 303u}) {
    spec.seed = seed;
    Phantom p = generate_phantom(spec);
    SubjectData s{"zero", std::move(p.channels), p.truth.brain_mask, p.truth.wm_mask, p.truth.tissue_mask,
                  p.truth.lesion_mask};
    const auto pred = predict_subject(pm.params, s, pm.config.inference, pm.config.postprocess, true);
    const double v = mask_volume(pred.final_mask);
    worst = std::max(worst, v);
    per += fmt(" %.4f", v);
  }
  return {worst <= 0.1, fmt("predicted volume on three lesion-free phantoms (cm3):%s", per.c_str())};
}

Outcome criterion_scaling() {
  PhantomModel& pm = phantom_model();
  const CohortIndex cohort = load_cohort(pm.cohort_dir);
  const auto tests = cohort.split("test");
  const std::vector<std::array<double, 3>> factors{
      {0.5, 0.5, 0.5}, {2.0, 2.0, 2.0}, {0.5, 2.0, 1.0}, {1.7, 0.6, 1.3}, {1.0, 1.0, 0.5}};
  std::vector<double> worst(tests.size(), 0.0);
  parallel_for(tests.size(), pm.config.jobs, [&](std::size_t i) {
    const SubjectData s = load_subject(pm.cohort_dir / tests[i].id, tests[i].id);
    const auto base = predict_subject(pm.params, s, pm.config.inference, pm.config.postprocess, true);
    const double d0 = dice_of(base.final_mask, *s.lesion_truth);
    for (const auto& f : factors) {
      SubjectData scaled = s;
      for (int c = 0; c < 3; ++c)
        for (double& v : scaled.channels.channel(static_cast<std::size_t>(c)).data()) v *= f[c];
      const auto p = predict_subject(pm.params, scaled, pm.config.inference, pm.config.postprocess, true);
      worst[i] = std::max(worst[i], std::abs(dice_of(p.final_mask, *s.lesion_truth) - d0));
    }
  });
  const double w = *std::max_element(worst.begin(), worst.end());
  return {w < 0.03, fmt("%zu test phantoms x %zu channel scalings in [0.5, 2]: worst |dDice| %.2e",
                        tests.size(), factors.size(), w)};
}

// --- 7: Wilcoxon exactness ---------------------------------------------------------

Outcome criterion_wilcoxon() {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> coarse(-4, 4);
  std::normal_distribution<double> fine(0.0, 1.0);
  int mismatches = 0, datasets = 0;
  for (int n = 1; n <= 12; ++n)
    for (int t = 0; t < 200; ++t) {
      std::vector<double> a(n), b(n);
      // Alternate tie-heavy integer data with continuous data.
      for (int i = 0; i < n; ++i) {
        a[i] = t % 2 ? coarse(rng) : fine(rng);
        b[i] = t % 2 ? coarse(rng) : fine(rng) + 0.3;
      }
      const auto r = wilcoxon_signed_rank(a, b);
      if (!(r.exact || r.degenerate) || r.p_value != testutil::wilcoxon_enumerate(a, b)) ++mismatches;
      ++datasets;
    }
  const std::vector<double> x{1, 2, 3, 4, 5}, y{0, 0, 0, 0, 0};
  const double p5 = wilcoxon_signed_rank(x, y).p_value;
  return {mismatches == 0 && p5 == 0.0625,
          fmt("%d datasets (n = 1..12, 200 each), %d mismatches against 2^n enumeration; n=5 all "
              "positive p = %.4f",
              datasets, mismatches, p5)};
}

// --- 8: determinism ---------------------------------------------------------------

int run(const std::string& cmd) {
  const int rc = std::system((cmd + " > /dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

Outcome criterion_determinism() {
  const fs::path root = testutil::scratch_dir("determinism");
  const std::string cli = SEGAE_CLI_PATH;
  const std::string config = (fs::path(SEGAE_SOURCE_DIR) / "configs" / "smoke.json").string();
  for (const char* name : {"a", "b"}) {
    const fs::path d = root / name;
    // Second run uses more worker threads; outputs must not depend on it.
    const std::string jobs = std::string(name) == "a" ? "1" : "3";
    const std::string common = " --config " + config + " --seed 5 --jobs " + jobs;
    const std::vector<std::string> steps{
        cli + " synth" + common + " --out " + (d / "cohort").string(),
        cli + " train" + common + " --epochs 2 --cohort " + (d / "cohort").string() + " --out " + (d / "run").string(),
        cli + " predict" + common + " --checkpoint " + (d / "run" / "model.ckpt").string() + " --cohort " +
            (d / "cohort").string() + " --out " + (d / "pred").string(),
        cli + " evaluate" + common + " --predictions " + (d / "pred").string() + " --cohort " +
            (d / "cohort").string() + " --out " + (d / "report").string()};
    for (const auto& s : steps)
      if (const int rc = run(s); rc != 0) return {false, fmt("command failed with exit %d: %s", rc, s.c_str())};
  }
  std::size_t compared = 0, differing = 0;
  std::string first_diff;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file()) continue;
    const std::string name = e.path().filename().string();
    const bool nifti = name.size() > 7 && name.ends_with(".nii.gz");
    if (!nifti && !name.ends_with(".csv") && !name.ends_with(".ckpt")) continue;
    const fs::path other = root / "b" / fs::relative(e.path(), root / "a");
    ++compared;
    if (!fs::exists(other) || testutil::read_bytes(e.path()) != testutil::read_bytes(other)) {
      ++differing;
      if (first_diff.empty()) first_diff = fs::relative(e.path(), root / "a").string();
    }
  }
  fs::remove_all(root);
  return {compared > 0 && differing == 0,
          fmt("two synth/train/predict/evaluate runs (jobs 1 vs 3): %zu NIfTI/CSV/checkpoint files "
              "compared, %zu differ%s%s",
              compared, differing, first_diff.empty() ? "" : ", first: ", first_diff.c_str())};
}

}  // namespace

int main(int argc, char** argv) {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);

  const std::map<int, std::pair<const char*, std::function<Outcome()>>> criteria{
      {1, {"oracle equivalence", criterion_oracles}},
      {2, {"gradient check", criterion_gradcheck}},
      {3, {"constraint suite", criterion_constraints}},
      {4, {"phantom identifiability", criterion_identifiability}},
      {5, {"zero-lesion robustness", criterion_zero_lesion}},
      {6, {"normalization robustness", criterion_scaling}},
      {7, {"Wilcoxon exactness", criterion_wilcoxon}},
      {8, {"determinism", criterion_determinism}},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  if (wanted.empty())
    for (const auto& [k, v] : criteria) wanted.insert(k);

  int failed = 0;
  for (int k : wanted) {
    const auto it = criteria.find(k);
    if (it == criteria.end()) {
      std::cerr << "unknown criterion " << k << "\n";
      return 2;
    }
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = it->second.second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << "criterion " << k << " [" << it->second.first << "]: " << (o.pass ? "PASS" : "FAIL") << " | "
              << o.detail << fmt(" (%.1f s)", seconds_since(t0)) << "\n"
              << std::flush;
  }
  std::cout << (failed == 0 ? "all selected criteria passed\n" : fmt("%d criteria failed\n", failed));
  return failed == 0 ? 0 : 1;
}
