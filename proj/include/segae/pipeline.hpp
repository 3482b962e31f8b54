/**
 * @file pipeline.hpp
 * @brief On-disk workflow behind the command line: synthesize a cohort,
 *        train, predict, post-process and evaluate.
 *
 * Subject directories hold t1/t2/flair, brain_mask, wm_mask, tissue_mask and
 * (for phantoms) lesion_truth, all as .nii.gz.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "segae/inference.hpp"
#include "segae/metrics.hpp"
#include "segae/model.hpp"
#include "segae/phantom.hpp"
#include "segae/postprocess.hpp"
#include "segae/trainer.hpp"

namespace segae {

namespace fs = std::filesystem;

void to_json(nlohmann::json& j, const PostprocessConfig& c);
void from_json(const nlohmann::json& j, PostprocessConfig& c);

struct CohortSplit {
  int train = 30;
  int val = 5;
  int test = 15;

  int total() const noexcept { return train + val + test; }
};

struct PipelineConfig {
  PhantomSpec phantom;
  CohortSplit cohort;
  ModelConfig model;
  TrainConfig train;
  InferenceConfig inference;
  PostprocessConfig postprocess;
  /// Cohort seed and training seed (also seeds the model initialization).
  std::uint64_t seed = 1;
  int jobs = 1;

  void validate() const;
};

void to_json(nlohmann::json& j, const PipelineConfig& c);
/// Missing keys keep their defaults.
void from_json(const nlohmann::json& j, PipelineConfig& c);

PipelineConfig load_pipeline_config(const fs::path& path);

/// Stable 16-hex-digit digest (FNV-1a) of a JSON document's compact dump.
std::string json_digest(const nlohmann::json& j);

/// Directory named by SEGAE_CACHE_DIR, if set and non-empty.
std::optional<fs::path> cache_dir();
void write_json(const fs::path& path, const nlohmann::json& j);
nlohmann::json read_json(const fs::path& path);

/// Runs fn(0..n-1) on up to `jobs` threads. The first exception is rethrown.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

// --- cohort -----------------------------------------------------------------

struct SubjectRecord {
  std::string id;
  std::string split;  // train, val or test
  std::uint64_t seed = 0;
  int lesion_count = 0;
  std::size_t lesion_voxels = 0;
  double lesion_volume_cm3 = 0.0;
};

struct CohortIndex {
  fs::path root;
  std::uint64_t seed = 0;
  std::vector<SubjectRecord> subjects;

  std::vector<SubjectRecord> split(const std::string& name) const;
  fs::path subject_dir(const std::string& id) const { return root / id; }
};

struct SynthOptions {
  /// Only the first N subjects of the train/val/test ordering.
  std::optional<int> subjects;
  bool force = false;
};

/// Writes every subject plus cohort.json, cohort_summary.csv and phantom_spec.json.
CohortIndex synthesize_cohort(const PipelineConfig& config, const fs::path& out_dir,
                              const SynthOptions& options = {});
CohortIndex load_cohort(const fs::path& dir);

void write_phantom(const Phantom& phantom, const PhantomSpec& spec, const fs::path& dir);

struct SubjectData {
  std::string id;
  MultiChannelVolume channels;
  BinaryMask brain_mask;
  BinaryMask wm_mask;
  BinaryMask tissue_mask;
  std::optional<BinaryMask> lesion_truth;
};

/// tissue_mask falls back to brain_mask when the file is absent.
SubjectData load_subject(const fs::path& dir, const std::string& id);

std::string format_cohort_summary(const CohortIndex& cohort);

// --- training ---------------------------------------------------------------

struct TrainRunOptions {
  bool resume = false;
  /// Directory for per-epoch checkpoints; run_dir/checkpoints when empty.
  fs::path checkpoint_dir;
  std::ostream* progress = nullptr;
};

/// Trains on the cohort's train split. Writes run_dir/config.json,
/// run_dir/loss.csv and run_dir/model.ckpt (updated after every epoch).
TrainResult run_training(const PipelineConfig& config, const fs::path& cohort_dir,
                         const fs::path& run_dir, const TrainRunOptions& options = {});

std::string loss_csv(const std::vector<LossRecord>& log);
std::vector<LossRecord> parse_loss_csv(const std::string& text);

// --- prediction -------------------------------------------------------------

struct SubjectPrediction {
  std::string id;
  ChannelSelection selection;
  std::vector<Volume3D> memberships;
  BinaryMask raw_mask;
  BinaryMask final_mask;  // equals raw_mask when post-processing is off
  bool postprocessed = true;
};

SubjectPrediction predict_subject(const ModelParameters& params, const SubjectData& subject,
                                  const InferenceConfig& inference,
                                  const PostprocessConfig& postprocess, bool apply_postprocessing);

/// membership_<c>.nii.gz, lesion_raw.nii.gz, lesion.nii.gz and prediction.json.
void write_prediction(const SubjectPrediction& pred, const InferenceConfig& inference,
                      const PostprocessConfig& postprocess, const fs::path& dir);

struct PredictOptions {
  std::vector<std::string> subjects;  // empty: every subject of `split`
  std::string split = "test";
  bool postprocess = true;
  std::optional<int> lesion_channel;
  std::optional<int> stride;
  std::optional<double> threshold;
};

std::vector<SubjectPrediction> run_prediction(const PipelineConfig& config,
                                              const ModelParameters& params,
                                              const fs::path& cohort_dir, const fs::path& out_dir,
                                              const PredictOptions& options);

// --- evaluation -------------------------------------------------------------

struct ManifestEntry {
  std::string id;
  fs::path pred;
  fs::path truth;
};

struct Manifest {
  std::string method = "segae";
  std::vector<ManifestEntry> subjects;
  std::map<std::string, std::vector<ManifestEntry>> baselines;
};

/// Relative paths resolve against the manifest's directory.
Manifest load_manifest(const fs::path& path);
nlohmann::json manifest_to_json(const Manifest& m);

/// Pairs pred_dir/<id>/lesion.nii.gz with cohort_dir/<id>/lesion_truth.nii.gz
/// for every prediction directory found.
Manifest manifest_from_dirs(const fs::path& pred_dir, const fs::path& cohort_dir);

MetricReport run_evaluation(const Manifest& manifest, int jobs = 1);

/// report.json, metrics.csv, summary.txt, boxplot_<metric>.svg, volume_scatter.svg.
void write_report(const MetricReport& report, const fs::path& out_dir);

/// Rebuilds a report from report.json.
MetricReport report_from_json(const nlohmann::json& j);

/// Slope/intercept per method.
std::string format_fit_table(const MetricReport& report);

}  // namespace segae
