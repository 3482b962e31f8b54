#include "segae/pipeline.hpp"

#include <atomic>
#include <cstdlib>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "segae/checkpoint.hpp"
#include "segae/nifti.hpp"

namespace segae {

void to_json(nlohmann::json& j, const PostprocessConfig& c) {
  j = nlohmann::json{{"skullstrip_iterations", c.skullstrip_iterations},
                     {"tissue_iterations", c.tissue_iterations}};
}

void from_json(const nlohmann::json& j, PostprocessConfig& c) {
  PostprocessConfig d;
  d.skullstrip_iterations = j.value("skullstrip_iterations", d.skullstrip_iterations);
  d.tissue_iterations = j.value("tissue_iterations", d.tissue_iterations);
  c = d;
}

void PipelineConfig::validate() const {
  phantom.validate();
  model.validate();
  train.validate();
  inference.validate();
  if (cohort.train < 0 || cohort.val < 0 || cohort.test < 0 || cohort.total() < 1)
    throw ConfigError("cohort split sizes must be nonnegative with at least one subject");
  if (postprocess.skullstrip_iterations < 0 || postprocess.tissue_iterations < 0)
    throw ConfigError("erosion iteration counts must be nonnegative");
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
}

void to_json(nlohmann::json& j, const PipelineConfig& c) {
  j = nlohmann::json{{"phantom", c.phantom},
                     {"cohort", {{"train", c.cohort.train}, {"val", c.cohort.val}, {"test", c.cohort.test}}},
                     {"model", c.model},
                     {"train", c.train},
                     {"inference", c.inference},
                     {"postprocess", c.postprocess},
                     {"seed", c.seed},
                     {"jobs", c.jobs}};
}

void from_json(const nlohmann::json& j, PipelineConfig& c) {
  PipelineConfig d;
  if (j.contains("phantom")) d.phantom = j.at("phantom").get<PhantomSpec>();
  if (j.contains("cohort")) {
    const auto& s = j.at("cohort");
    d.cohort.train = s.value("train", d.cohort.train);
    d.cohort.val = s.value("val", d.cohort.val);
    d.cohort.test = s.value("test", d.cohort.test);
  }
  if (j.contains("model")) d.model = j.at("model").get<ModelConfig>();
  if (j.contains("train")) d.train = j.at("train").get<TrainConfig>();
  if (j.contains("inference")) d.inference = j.at("inference").get<InferenceConfig>();
  if (j.contains("postprocess")) d.postprocess = j.at("postprocess").get<PostprocessConfig>();
  d.seed = j.value("seed", d.seed);
  d.jobs = j.value("jobs", d.jobs);
  c = d;
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw FormatError("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot write " + path.string());
  os << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

PipelineConfig load_pipeline_config(const fs::path& path) {
  try {
    return read_json(path).get<PipelineConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string json_digest(const nlohmann::json& j) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::optional<fs::path> cache_dir() {
  const char* v = std::getenv("SEGAE_CACHE_DIR");
  if (!v || !*v) return std::nullopt;
  return fs::path(v);
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  pool.clear();
  if (error) std::rethrow_exception(error);
}

// --- cohort -----------------------------------------------------------------

std::vector<SubjectRecord> CohortIndex::split(const std::string& name) const {
  std::vector<SubjectRecord> out;
  for (const auto& s : subjects)
    if (s.split == name) out.push_back(s);
  return out;
}

void write_phantom(const Phantom& phantom, const PhantomSpec& spec, const fs::path& dir) {
  fs::create_directories(dir);
  for (std::size_t c = 0; c < phantom.channels.channel_count(); ++c)
    nifti::save_volume(phantom.channels.channel(c), dir / (phantom.channels.name(c) + ".nii.gz"));
  nifti::save_mask(phantom.truth.brain_mask, dir / "brain_mask.nii.gz");
  nifti::save_mask(phantom.truth.wm_mask, dir / "wm_mask.nii.gz");
  nifti::save_mask(phantom.truth.tissue_mask, dir / "tissue_mask.nii.gz");
  nifti::save_mask(phantom.truth.lesion_mask, dir / "lesion_truth.nii.gz");
  write_json(dir / "phantom_spec.json", spec);
}

namespace {

nlohmann::json record_json(const SubjectRecord& r) {
  return {{"id", r.id},
          {"split", r.split},
          {"seed", r.seed},
          {"lesion_count", r.lesion_count},
          {"lesion_voxels", r.lesion_voxels},
          {"lesion_volume_cm3", r.lesion_volume_cm3}};
}

}  // namespace

CohortIndex synthesize_cohort(const PipelineConfig& config, const fs::path& out_dir,
                              const SynthOptions& options) {
  config.validate();
  if (fs::exists(out_dir) && !fs::is_empty(out_dir)) {
    if (!options.force)
      throw DataError("output directory " + out_dir.string() + " exists; use --force to overwrite");
    fs::remove_all(out_dir);
  }
  fs::create_directories(out_dir);

  CohortIndex index;
  index.root = out_dir;
  index.seed = config.seed;
  const std::pair<const char*, int> splits[] = {
      {"train", config.cohort.train}, {"val", config.cohort.val}, {"test", config.cohort.test}};
  for (const auto& [name, count] : splits)
    for (int i = 0; i < count; ++i) {
      SubjectRecord r;
      char id[64];
      std::snprintf(id, sizeof id, "%s_%03d", name, i);
      r.id = id;
      r.split = name;
      index.subjects.push_back(r);
    }
  if (options.subjects) {
    if (*options.subjects < 1) throw ConfigError("--subjects must be >= 1");
    if (static_cast<std::size_t>(*options.subjects) < index.subjects.size())
      index.subjects.resize(static_cast<std::size_t>(*options.subjects));
  }

  parallel_for(index.subjects.size(), config.jobs, [&](std::size_t i) {
    SubjectRecord& r = index.subjects[i];
    PhantomSpec spec = config.phantom;
    spec.seed = subject_seed(config.seed, i);
    const Phantom ph = generate_phantom(spec);
    write_phantom(ph, spec, out_dir / r.id);
    r.seed = spec.seed;
    r.lesion_count = ph.truth.lesion_count;
    r.lesion_voxels = ph.truth.lesion_mask.count();
    r.lesion_volume_cm3 = mask_volume(ph.truth.lesion_mask);
  });

  nlohmann::json j;
  j["seed"] = config.seed;
  j["phantom"] = config.phantom;
  j["subjects"] = nlohmann::json::array();
  for (const auto& r : index.subjects) j["subjects"].push_back(record_json(r));
  write_json(out_dir / "cohort.json", j);
  write_json(out_dir / "phantom_spec.json", config.phantom);

  std::ostringstream csv;
  csv << "subject,split,seed,lesion_count,lesion_voxels,lesion_volume_cm3\n";
  for (const auto& r : index.subjects) {
    char vol[32];
    std::snprintf(vol, sizeof vol, "%.6f", r.lesion_volume_cm3);
    csv << r.id << ',' << r.split << ',' << r.seed << ',' << r.lesion_count << ',' << r.lesion_voxels
        << ',' << vol << '\n';
  }
  write_text(out_dir / "cohort_summary.csv", csv.str());
  return index;
}

CohortIndex load_cohort(const fs::path& dir) {
  const auto j = read_json(dir / "cohort.json");
  CohortIndex index;
  index.root = dir;
  try {
    index.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& s : j.at("subjects")) {
      SubjectRecord r;
      r.id = s.at("id").get<std::string>();
      r.split = s.at("split").get<std::string>();
      r.seed = s.value("seed", std::uint64_t{0});
      r.lesion_count = s.value("lesion_count", 0);
      r.lesion_voxels = s.value("lesion_voxels", std::size_t{0});
      r.lesion_volume_cm3 = s.value("lesion_volume_cm3", 0.0);
      index.subjects.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / "cohort.json").string() + ": " + e.what());
  }
  return index;
}

SubjectData load_subject(const fs::path& dir, const std::string& id) {
  if (!fs::is_directory(dir)) throw DataError("subject directory " + dir.string() + " not found");
  SubjectData s;
  s.id = id;
  s.channels = nifti::load_channels(dir / "t1.nii.gz", dir / "t2.nii.gz", dir / "flair.nii.gz");
  const Dims3 d = s.channels.dims();
  const Spacing3 sp = s.channels.spacing();
  s.brain_mask = nifti::load_mask_like(dir / "brain_mask.nii.gz", d, sp);
  s.wm_mask = nifti::load_mask_like(dir / "wm_mask.nii.gz", d, sp);
  s.tissue_mask = fs::exists(dir / "tissue_mask.nii.gz")
                      ? nifti::load_mask_like(dir / "tissue_mask.nii.gz", d, sp)
                      : s.brain_mask;
  if (fs::exists(dir / "lesion_truth.nii.gz"))
    s.lesion_truth = nifti::load_mask_like(dir / "lesion_truth.nii.gz", d, sp);
  return s;
}

std::string format_cohort_summary(const CohortIndex& cohort) {
  std::ostringstream os;
  os << std::left << std::setw(12) << "subject" << std::setw(7) << "split" << std::right
     << std::setw(9) << "lesions" << std::setw(10) << "voxels" << std::setw(12) << "volume_cm3"
     << '\n';
  for (const auto& r : cohort.subjects)
    os << std::left << std::setw(12) << r.id << std::setw(7) << r.split << std::right
       << std::setw(9) << r.lesion_count << std::setw(10) << r.lesion_voxels << std::setw(12)
       << std::fixed << std::setprecision(3) << r.lesion_volume_cm3 << '\n';
  return os.str();
}

// --- training ---------------------------------------------------------------

std::string loss_csv(const std::vector<LossRecord>& log) {
  std::ostringstream os;
  os << "epoch,patch,loss\n";
  char buf[64];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof buf, "%.17g", r.loss);
    os << r.epoch << ',' << r.patch_index << ',' << buf << '\n';
  }
  return os.str();
}

std::vector<LossRecord> parse_loss_csv(const std::string& text) {
  std::vector<LossRecord> out;
  std::istringstream is(text);
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    LossRecord r;
    char comma1 = 0, comma2 = 0;
    std::istringstream ls(line);
    if (!(ls >> r.epoch >> comma1 >> r.patch_index >> comma2 >> r.loss) || comma1 != ',' ||
        comma2 != ',')
      throw FormatError("malformed loss.csv line: " + line);
    out.push_back(r);
  }
  return out;
}

TrainResult run_training(const PipelineConfig& config, const fs::path& cohort_dir,
                         const fs::path& run_dir, const TrainRunOptions& options) {
  config.validate();
  const CohortIndex cohort = load_cohort(cohort_dir);
  const auto train_records = cohort.split("train");
  if (train_records.empty()) throw DataError("cohort " + cohort_dir.string() + " has no training subjects");

  TrainConfig tc = config.train;
  tc.seed = config.seed;

  std::vector<TrainingSubject> subjects(train_records.size());
  parallel_for(train_records.size(), config.jobs, [&](std::size_t i) {
    SubjectData s = load_subject(cohort.subject_dir(train_records[i].id), train_records[i].id);
    subjects[i] = TrainingSubject{s.id, std::move(s.channels), std::move(s.brain_mask), std::move(s.wm_mask)};
  });

  fs::create_directories(run_dir);
  const fs::path ckpt_dir = options.checkpoint_dir.empty() ? run_dir / "checkpoints" : options.checkpoint_dir;
  const fs::path model_path = run_dir / "model.ckpt";
  const fs::path loss_path = run_dir / "loss.csv";

  TrainOptions topt;
  std::vector<LossRecord> previous;
  if (options.resume && fs::exists(model_path)) {
    Checkpoint ck = load_checkpoint(model_path, config.model);
    if (ck.train_config.seed != tc.seed)
      throw ConfigError("checkpoint was trained with seed " + std::to_string(ck.train_config.seed) +
                        ", config requests " + std::to_string(tc.seed));
    topt.initial_params = std::move(ck.params);
    if (ck.optimizer) topt.initial_state = std::move(ck.optimizer);
    topt.start_epoch = ck.epochs_completed;
    if (fs::exists(loss_path))
      for (const auto& r : parse_loss_csv(read_text(loss_path)))
        if (r.epoch < topt.start_epoch) previous.push_back(r);
    if (options.progress)
      *options.progress << "resuming after epoch " << topt.start_epoch << "\n";
  }
  write_json(run_dir / "config.json", config);

  topt.on_epoch = [&](int epoch, const ModelParameters& params, const OptimizerState& state,
                      const std::vector<LossRecord>& log) {
    Checkpoint ck{params, state, tc, epoch + 1};
    char name[64];
    std::snprintf(name, sizeof name, "epoch_%03d.ckpt", epoch + 1);
    save_checkpoint(ckpt_dir / name, ck);
    save_checkpoint(model_path, ck);
    std::vector<LossRecord> all = previous;
    all.insert(all.end(), log.begin(), log.end());
    write_text(loss_path, loss_csv(all));
    if (options.progress) {
      double sum = 0.0;
      std::size_t n = 0;
      for (const auto& r : log)
        if (r.epoch == epoch) {
          sum += r.loss;
          ++n;
        }
      char buf[160];
      std::snprintf(buf, sizeof buf, "epoch %3d/%d  mean loss %.6f  ", epoch + 1, tc.epochs,
                    n ? sum / static_cast<double>(n) : 0.0);
      *options.progress << buf << "mixing weights";
      for (double w : params.mixing_weights) {
        std::snprintf(buf, sizeof buf, " %.4f", w);
        *options.progress << buf;
      }
      *options.progress << std::endl;
    }
  };

  TrainResult result = train(subjects, config.model, tc, topt);
  if (topt.start_epoch >= tc.epochs) {
    // Nothing left to run; keep the stored log.
    write_text(loss_path, loss_csv(previous));
  }
  result.log.insert(result.log.begin(), previous.begin(), previous.end());
  return result;
}

// --- prediction -------------------------------------------------------------

SubjectPrediction predict_subject(const ModelParameters& params, const SubjectData& subject,
                                  const InferenceConfig& inference,
                                  const PostprocessConfig& postprocess, bool apply_postprocessing) {
  SubjectPrediction p;
  p.id = subject.id;
  p.selection = select_lesion_channel(params, inference.lesion_channel_override);
  p.memberships = predict_memberships(params, subject.channels, subject.wm_mask, subject.brain_mask,
                                      inference);
  p.raw_mask = binarize(p.memberships.at(static_cast<std::size_t>(p.selection.channel)),
                        inference.threshold);
  p.postprocessed = apply_postprocessing;
  p.final_mask = apply_postprocessing
                     ? apply_postprocess(p.raw_mask, subject.brain_mask, subject.tissue_mask, postprocess)
                     : p.raw_mask;
  return p;
}

void write_prediction(const SubjectPrediction& pred, const InferenceConfig& inference,
                      const PostprocessConfig& postprocess, const fs::path& dir) {
  fs::create_directories(dir);
  for (std::size_t c = 0; c < pred.memberships.size(); ++c)
    nifti::save_volume(pred.memberships[c], dir / ("membership_" + std::to_string(c) + ".nii.gz"));
  nifti::save_mask(pred.raw_mask, dir / "lesion_raw.nii.gz");
  nifti::save_mask(pred.final_mask, dir / "lesion.nii.gz");
  nlohmann::json side;
  side["subject"] = pred.id;
  side["lesion_channel"] = pred.selection.channel;
  side["lesion_channel_tie"] = pred.selection.tie;
  side["lesion_channel_overridden"] = inference.lesion_channel_override.has_value();
  side["stride"] = inference.predict_stride;
  side["threshold"] = inference.threshold;
  side["postprocessed"] = pred.postprocessed;
  side["postprocess"] = postprocess;
  side["raw_lesion_voxels"] = pred.raw_mask.count();
  side["lesion_voxels"] = pred.final_mask.count();
  side["lesion_volume_cm3"] = mask_volume(pred.final_mask);
  write_json(dir / "prediction.json", side);
}

std::vector<SubjectPrediction> run_prediction(const PipelineConfig& config,
                                              const ModelParameters& params,
                                              const fs::path& cohort_dir, const fs::path& out_dir,
                                              const PredictOptions& options) {
  InferenceConfig inf = config.inference;
  if (options.lesion_channel) inf.lesion_channel_override = options.lesion_channel;
  if (options.stride) inf.predict_stride = *options.stride;
  if (options.threshold) inf.threshold = *options.threshold;
  inf.validate();

  std::vector<std::string> ids = options.subjects;
  if (ids.empty()) {
    const CohortIndex cohort = load_cohort(cohort_dir);
    for (const auto& r : cohort.split(options.split)) ids.push_back(r.id);
    if (ids.empty())
      throw DataError("cohort " + cohort_dir.string() + " has no '" + options.split + "' subjects");
  }
  // Surface a tie warning once, before the per-subject work.
  select_lesion_channel(params, inf.lesion_channel_override);

  std::vector<SubjectPrediction> preds(ids.size());
  parallel_for(ids.size(), config.jobs, [&](std::size_t i) {
    const SubjectData s = load_subject(cohort_dir / ids[i], ids[i]);
    preds[i] = predict_subject(params, s, inf, config.postprocess, options.postprocess);
    write_prediction(preds[i], inf, config.postprocess, out_dir / ids[i]);
    preds[i].memberships.clear();  // keep memory flat across large cohorts
  });
  return preds;
}

// --- evaluation -------------------------------------------------------------

namespace {

std::vector<ManifestEntry> parse_entries(const nlohmann::json& arr, const fs::path& base) {
  std::vector<ManifestEntry> out;
  for (const auto& e : arr) {
    ManifestEntry m;
    m.id = e.at("id").get<std::string>();
    m.pred = e.at("pred").get<std::string>();
    m.truth = e.at("truth").get<std::string>();
    if (m.pred.is_relative()) m.pred = base / m.pred;
    if (m.truth.is_relative()) m.truth = base / m.truth;
    out.push_back(std::move(m));
  }
  return out;
}

nlohmann::json entries_json(const std::vector<ManifestEntry>& es) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : es)
    arr.push_back({{"id", e.id}, {"pred", e.pred.string()}, {"truth", e.truth.string()}});
  return arr;
}

}  // namespace

Manifest load_manifest(const fs::path& path) {
  const auto j = read_json(path);
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  Manifest m;
  try {
    m.method = j.value("method", m.method);
    m.subjects = parse_entries(j.at("subjects"), base);
    if (j.contains("baselines"))
      for (const auto& [name, arr] : j.at("baselines").items()) m.baselines[name] = parse_entries(arr, base);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (m.subjects.empty()) throw DataError("manifest " + path.string() + " lists no subjects");
  return m;
}

nlohmann::json manifest_to_json(const Manifest& m) {
  nlohmann::json j;
  j["method"] = m.method;
  j["subjects"] = entries_json(m.subjects);
  j["baselines"] = nlohmann::json::object();
  for (const auto& [name, es] : m.baselines) j["baselines"][name] = entries_json(es);
  return j;
}

Manifest manifest_from_dirs(const fs::path& pred_dir, const fs::path& cohort_dir) {
  Manifest m;
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(pred_dir))
    if (entry.is_directory() && fs::exists(entry.path() / "lesion.nii.gz"))
      ids.push_back(entry.path().filename().string());
  std::sort(ids.begin(), ids.end());
  if (ids.empty()) throw DataError("no predictions found under " + pred_dir.string());
  for (const auto& id : ids)
    m.subjects.push_back({id, pred_dir / id / "lesion.nii.gz", cohort_dir / id / "lesion_truth.nii.gz"});
  return m;
}

MetricReport run_evaluation(const Manifest& manifest, int jobs) {
  auto load = [&](const std::vector<ManifestEntry>& entries) {
    std::vector<CohortSubject> out(entries.size());
    parallel_for(entries.size(), jobs, [&](std::size_t i) {
      const auto& e = entries[i];
      out[i].id = e.id;
      out[i].truth = nifti::load_mask(e.truth);
      out[i].pred = nifti::load_mask_like(e.pred, out[i].truth.dims(), out[i].truth.spacing());
    });
    return out;
  };
  const auto main = load(manifest.subjects);
  std::map<std::string, std::vector<CohortSubject>> baselines;
  for (const auto& [name, entries] : manifest.baselines) baselines[name] = load(entries);
  MetricReport rep = evaluate_cohort(main, baselines);
  rep.method = manifest.method;
  return rep;
}

std::string format_fit_table(const MetricReport& report) {
  std::ostringstream os;
  os << "method | slope | intercept\n";
  auto row = [&](const std::string& name, const std::vector<SubjectMetrics>& rows) {
    const auto xs = metric_column(rows, "manual_volume_cm3");
    const auto ys = metric_column(rows, "pred_volume_cm3");
    char buf[128];
    try {
      const LinearFit f = linear_fit(xs, ys);
      std::snprintf(buf, sizeof buf, "%s | %.3f | %.3f\n", name.c_str(), f.slope, f.intercept);
    } catch (const FitError&) {
      std::snprintf(buf, sizeof buf, "%s | n/a | n/a\n", name.c_str());
    }
    os << buf;
  };
  row(report.method, report.subjects);
  for (const auto& [name, rows] : report.baselines) row(name, rows);
  return os.str();
}

void write_report(const MetricReport& report, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  write_json(out_dir / "report.json", report_to_json(report));
  write_text(out_dir / "metrics.csv", report_to_csv(report));
  std::string summary = format_summary_table(report) + "\n" + format_fit_table(report);
  if (!report.p_values.empty()) {
    summary += "\nbaseline | metric | p (paired Wilcoxon signed-rank)\n";
    for (const auto& [name, ps] : report.p_values)
      for (const auto& [metric, p] : ps) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "%s | %s | %.4g\n", name.c_str(), metric.c_str(), p);
        summary += buf;
      }
  }
  write_text(out_dir / "summary.txt", summary);
  for (const char* metric : {"avd", "dice", "ppv", "tpr"})
    write_text(out_dir / (std::string("boxplot_") + metric + ".svg"), box_plot_svg(report, metric));
  write_text(out_dir / "volume_scatter.svg", volume_scatter_svg(report));
}

namespace {

SubjectMetrics subject_from_json(const nlohmann::json& j) {
  SubjectMetrics m;
  m.id = j.at("id").get<std::string>();
  m.counts = {j.at("tp").get<std::uint64_t>(), j.at("fp").get<std::uint64_t>(),
              j.at("fn").get<std::uint64_t>(), j.at("tn").get<std::uint64_t>()};
  m.dice = j.at("dice").get<double>();
  m.ppv = j.at("ppv").get<double>();
  m.tpr = j.at("tpr").get<double>();
  if (!j.at("avd").is_null()) m.avd = j.at("avd").get<double>();
  m.pred_volume_cm3 = j.at("pred_volume_cm3").get<double>();
  m.manual_volume_cm3 = j.at("manual_volume_cm3").get<double>();
  return m;
}

std::map<std::string, SummaryStat> summary_from_json(const nlohmann::json& j) {
  std::map<std::string, SummaryStat> out;
  for (const auto& [k, v] : j.items())
    out[k] = SummaryStat{v.at("mean").get<double>(), v.at("sd").get<double>(), v.at("n").get<std::size_t>()};
  return out;
}

}  // namespace

MetricReport report_from_json(const nlohmann::json& j) {
  MetricReport r;
  try {
    r.method = j.at("method").get<std::string>();
    for (const auto& s : j.at("subjects")) r.subjects.push_back(subject_from_json(s));
    r.summary = summary_from_json(j.at("summary"));
    if (!j.at("fit").is_null())
      r.fit = LinearFit{j.at("fit").at("slope").get<double>(), j.at("fit").at("intercept").get<double>()};
    for (const auto& [name, b] : j.at("baselines").items()) {
      for (const auto& s : b.at("subjects")) r.baselines[name].push_back(subject_from_json(s));
      for (const auto& [metric, p] : b.at("p_values").items()) r.p_values[name][metric] = p.get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad report: ") + e.what());
  }
  return r;
}

}  // namespace segae
