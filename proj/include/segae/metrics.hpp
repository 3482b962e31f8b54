/**
 * @file metrics.hpp
 * @brief Overlap scores, lesion volumes, regression fit and the paired
 *        Wilcoxon signed-rank test.
 */
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "segae/volume.hpp"

namespace segae {

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const noexcept { return tp + fp + fn + tn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Voxel counts of pred against truth, restricted to `roi` when given.
ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& truth,
                          const BinaryMask* roi = nullptr);

/// Values used when a ratio has a zero denominator. When both masks are
/// empty every score is `both_empty`; otherwise an empty denominator yields
/// `empty_denominator`.
struct MetricConventions {
  double both_empty = 1.0;
  double empty_denominator = 0.0;
};

double dice(const ConfusionCounts& c, const MetricConventions& conv = {});
double ppv(const ConfusionCounts& c, const MetricConventions& conv = {});
double tpr(const ConfusionCounts& c, const MetricConventions& conv = {});

/// |pred - manual| / manual; nullopt when the manual volume is zero.
std::optional<double> avd(double pred_volume, double manual_volume);

/// Volume in cm^3.
double mask_volume(const BinaryMask& mask);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Ordinary least squares of ys on xs. Throws FitError on < 2 points or constant xs.
LinearFit linear_fit(std::span<const double> xs, std::span<const double> ys);

double mean(std::span<const double> v);
/// Sample (n - 1) standard deviation; 0 for fewer than two values.
double sample_sd(std::span<const double> v);

struct WilcoxonResult {
  double p_value = 1.0;
  double w_plus = 0.0;       // sum of ranks of positive differences
  std::size_t n_used = 0;    // pairs with nonzero difference
  bool exact = false;
  bool degenerate = false;   // every difference was zero
};

/// Two-sided paired test on a - b. Zero differences are dropped, tied
/// magnitudes get midranks. Up to `exact_limit` remaining pairs the null
/// distribution of W+ is computed exactly over all sign assignments; above
/// that a normal approximation with tie correction is used. The p-value is
/// P(|W+ - E| >= |w - E|) under the null.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                    std::size_t exact_limit = 20);

struct SubjectMetrics {
  std::string id;
  ConfusionCounts counts;
  double dice = 0.0;
  double ppv = 0.0;
  double tpr = 0.0;
  std::optional<double> avd;
  double pred_volume_cm3 = 0.0;
  double manual_volume_cm3 = 0.0;
};

struct SummaryStat {
  double mean = 0.0;
  double sd = 0.0;
  std::size_t n = 0;
};

struct CohortSubject {
  std::string id;
  BinaryMask pred;
  BinaryMask truth;
};

struct MetricReport {
  std::string method = "segae";
  std::vector<SubjectMetrics> subjects;
  std::map<std::string, SummaryStat> summary;  // dice, ppv, tpr, avd, volumes
  std::optional<LinearFit> fit;                // predicted on manual volume
  /// baseline name -> metric -> p-value of the paired test against it.
  std::map<std::string, std::map<std::string, double>> p_values;
  /// Per-baseline metrics, same subject order.
  std::map<std::string, std::vector<SubjectMetrics>> baselines;
};

SubjectMetrics evaluate_subject(const std::string& id, const BinaryMask& pred,
                                const BinaryMask& truth, const MetricConventions& conv = {});

/// Per-subject metrics, means and sample SDs, the volume fit and paired tests
/// (when at least five subjects exist) against each baseline mask set, which
/// must list the same subject ids in the same order.
MetricReport evaluate_cohort(const std::vector<CohortSubject>& subjects,
                             const std::map<std::string, std::vector<CohortSubject>>& baselines = {},
                             const MetricConventions& conv = {});

/// "0.766 (± 0.114)".
std::string format_mean_sd(const SummaryStat& s, int decimals = 3);

/// Table with one row per method and columns AVD, Dice, PPV, TPR.
std::string format_summary_table(const MetricReport& report);

nlohmann::json report_to_json(const MetricReport& report);
/// Values of one metric across subjects; subjects without an AVD are skipped.
std::vector<double> metric_column(const std::vector<SubjectMetrics>& rows, const std::string& metric);

/// One row per subject and method.
std::string report_to_csv(const MetricReport& report);

/// Box plot of one metric ("avd", "dice", "ppv" or "tpr") per method, as an SVG document.
std::string box_plot_svg(const MetricReport& report, const std::string& metric);
/// Predicted against manual volume with the fitted line, as an SVG document.
std::string volume_scatter_svg(const MetricReport& report);

}  // namespace segae
