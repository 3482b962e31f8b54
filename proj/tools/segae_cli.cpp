// segae: command line front end (synth, train, predict, postprocess, evaluate, report).

#include <malloc.h>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "segae/checkpoint.hpp"
#include "segae/nifti.hpp"
#include "segae/pipeline.hpp"

namespace fs = std::filesystem;
using namespace segae;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "Pipeline configuration (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "Seed for cohort generation and training");
  cmd->add_option("--jobs", c.jobs, "Worker threads for per-subject work")->check(CLI::PositiveNumber);
}

PipelineConfig resolve(const Common& c) {
  PipelineConfig cfg = c.config_path.empty() ? PipelineConfig{} : load_pipeline_config(c.config_path);
  if (c.seed) cfg.seed = *c.seed;
  if (c.jobs) cfg.jobs = *c.jobs;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  // Freed tensors are reused instead of being returned to the kernel.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);

  CLI::App app{"Unsupervised lesion segmentation with a constrained convolutional autoencoder"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "segae 1.0.0");

  // synth
  Common synth_c;
  std::string synth_out;
  std::optional<int> synth_subjects;
  bool synth_force = false;
  auto* synth = app.add_subcommand("synth", "Generate a phantom cohort (train/val/test)");
  add_common(synth, synth_c);
  synth->add_option("--out", synth_out, "Output cohort directory")->required();
  synth->add_option("--subjects", synth_subjects, "Generate only the first N subjects")->check(CLI::PositiveNumber);
  synth->add_flag("--force", synth_force, "Replace an existing output directory");

  // train
  Common train_c;
  std::string train_cohort, train_out;
  std::optional<int> train_epochs;
  bool train_resume = false;
  auto* train_cmd = app.add_subcommand("train", "Train the autoencoder on the cohort's train split");
  add_common(train_cmd, train_c);
  train_cmd->add_option("--cohort", train_cohort, "Cohort directory")->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--out", train_out, "Run directory (config, loss.csv, model.ckpt)")->required();
  train_cmd->add_option("--epochs", train_epochs, "Override the number of epochs")->check(CLI::PositiveNumber);
  train_cmd->add_flag("--resume", train_resume, "Continue from <out>/model.ckpt");

  // predict
  Common pred_c;
  std::string pred_ckpt, pred_cohort, pred_out, pred_split = "test";
  std::vector<std::string> pred_subjects;
  bool pred_no_pp = false;
  std::optional<int> pred_channel, pred_stride;
  std::optional<double> pred_threshold;
  auto* predict = app.add_subcommand("predict", "Segment subjects with a trained model");
  add_common(predict, pred_c);
  predict->add_option("--checkpoint", pred_ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  predict->add_option("--cohort", pred_cohort, "Directory holding subject folders")->required()->check(CLI::ExistingDirectory);
  predict->add_option("--out", pred_out, "Prediction output directory")->required();
  predict->add_option("--subject", pred_subjects, "Subject id (repeatable); default: whole split");
  predict->add_option("--split", pred_split, "Cohort split used when no --subject is given");
  predict->add_flag("--no-postprocess", pred_no_pp, "Skip the eroded-mask intersection");
  predict->add_option("--lesion-channel", pred_channel, "Use this membership channel as lesion");
  predict->add_option("--stride", pred_stride, "Sliding-window stride")->check(CLI::PositiveNumber);
  predict->add_option("--threshold", pred_threshold, "Binarization threshold");

  // postprocess
  std::string pp_lesion, pp_brain, pp_tissue, pp_out;
  int pp_skull = 10, pp_tissue_it = 2;
  auto* postprocess = app.add_subcommand("postprocess", "Intersect a lesion mask with eroded brain masks");
  postprocess->add_option("--lesion", pp_lesion, "Binary lesion mask")->required()->check(CLI::ExistingFile);
  postprocess->add_option("--brain-mask", pp_brain, "Skull-stripping mask")->required()->check(CLI::ExistingFile);
  postprocess->add_option("--tissue-mask", pp_tissue, "Brain mask without sulcal CSF")->required()->check(CLI::ExistingFile);
  postprocess->add_option("--out", pp_out, "Output mask")->required();
  postprocess->add_option("--skullstrip-iterations", pp_skull, "Erosions of the brain mask")->check(CLI::NonNegativeNumber);
  postprocess->add_option("--tissue-iterations", pp_tissue_it, "Erosions of the tissue mask")->check(CLI::NonNegativeNumber);

  // evaluate
  Common eval_c;
  std::string eval_manifest, eval_preds, eval_cohort, eval_out, eval_method;
  auto* evaluate = app.add_subcommand("evaluate", "Score predictions against reference masks");
  add_common(evaluate, eval_c);
  evaluate->add_option("--manifest", eval_manifest, "JSON manifest of {id, pred, truth} entries")->check(CLI::ExistingFile);
  evaluate->add_option("--predictions", eval_preds, "Prediction directory (with --cohort)")->check(CLI::ExistingDirectory);
  evaluate->add_option("--cohort", eval_cohort, "Cohort directory holding lesion_truth masks")->check(CLI::ExistingDirectory);
  evaluate->add_option("--method", eval_method, "Method name used in tables");
  evaluate->add_option("--out", eval_out, "Report directory")->required();

  // report
  std::string report_in, report_plots;
  auto* report = app.add_subcommand("report", "Print tables from an evaluation report");
  report->add_option("--report", report_in, "report.json or the directory holding it")->required();
  report->add_option("--plots", report_plots, "Also write box and scatter plots to this directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (synth->parsed()) {
      PipelineConfig cfg = resolve(synth_c);
      SynthOptions opt;
      opt.subjects = synth_subjects;
      opt.force = synth_force;
      const CohortIndex cohort = synthesize_cohort(cfg, synth_out, opt);
      std::cout << format_cohort_summary(cohort);
      std::cout << cohort.subjects.size() << " subjects written to " << synth_out << "\n";
    } else if (train_cmd->parsed()) {
      PipelineConfig cfg = resolve(train_c);
      if (train_epochs) cfg.train.epochs = *train_epochs;
      TrainRunOptions opt;
      opt.resume = train_resume;
      opt.progress = &std::cout;
      if (auto cache = cache_dir())
        opt.checkpoint_dir = *cache / "checkpoints" / json_digest(nlohmann::json(cfg));
      run_training(cfg, train_cohort, train_out, opt);
      std::cout << "model written to " << (fs::path(train_out) / "model.ckpt").string() << "\n";
    } else if (predict->parsed()) {
      const bool explicit_config = !pred_c.config_path.empty();
      // Without --config, use the settings the model was trained with.
      const fs::path run_config = fs::path(pred_ckpt).parent_path() / "config.json";
      if (!explicit_config && fs::exists(run_config)) pred_c.config_path = run_config.string();
      PipelineConfig cfg = resolve(pred_c);
      Checkpoint ck = load_checkpoint(pred_ckpt, explicit_config ? std::optional(cfg.model) : std::nullopt);
      cfg.model = ck.params.config;
      PredictOptions opt;
      opt.subjects = pred_subjects;
      opt.split = pred_split;
      opt.postprocess = !pred_no_pp;
      opt.lesion_channel = pred_channel;
      opt.stride = pred_stride;
      opt.threshold = pred_threshold;
      const auto preds = run_prediction(cfg, ck.params, pred_cohort, pred_out, opt);
      for (const auto& p : preds)
        std::cout << p.id << ": lesion channel " << p.selection.channel << ", " << p.final_mask.count()
                  << " voxels (" << mask_volume(p.final_mask) << " cm3)\n";
    } else if (postprocess->parsed()) {
      const BinaryMask lesion = nifti::load_mask(pp_lesion);
      const BinaryMask brain = nifti::load_mask_like(pp_brain, lesion.dims(), lesion.spacing());
      const BinaryMask tissue = nifti::load_mask_like(pp_tissue, lesion.dims(), lesion.spacing());
      PostprocessConfig pc{pp_skull, pp_tissue_it};
      const BinaryMask out = apply_postprocess(lesion, brain, tissue, pc);
      nifti::save_mask(out, pp_out);
      std::cout << lesion.count() << " -> " << out.count() << " lesion voxels\n";
    } else if (evaluate->parsed()) {
      PipelineConfig cfg = resolve(eval_c);
      Manifest manifest;
      if (!eval_manifest.empty()) {
        manifest = load_manifest(eval_manifest);
      } else if (!eval_preds.empty() && !eval_cohort.empty()) {
        manifest = manifest_from_dirs(eval_preds, eval_cohort);
      } else {
        throw ConfigError("evaluate needs --manifest or both --predictions and --cohort");
      }
      if (!eval_method.empty()) manifest.method = eval_method;
      const MetricReport rep = run_evaluation(manifest, cfg.jobs);
      write_report(rep, eval_out);
      write_json(fs::path(eval_out) / "manifest.json", manifest_to_json(manifest));
      std::cout << format_summary_table(rep) << "\n" << format_fit_table(rep);
    } else if (report->parsed()) {
      fs::path path = report_in;
      if (fs::is_directory(path)) path /= "report.json";
      const MetricReport rep = report_from_json(read_json(path));
      std::cout << format_summary_table(rep) << "\n" << format_fit_table(rep);
      for (const auto& [name, ps] : rep.p_values)
        for (const auto& [metric, p] : ps) std::cout << name << " " << metric << " p=" << p << "\n";
      if (!report_plots.empty()) write_report(rep, report_plots);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const TrainingError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kOk;
}
