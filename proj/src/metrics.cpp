#include "segae/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numeric>
#include <sstream>

namespace segae {

namespace {

void require_same_dims(const BinaryMask& a, const BinaryMask& b, const char* what) {
  if (a.dims() != b.dims())
    throw DimensionError(std::string(what) + ": " + to_string(a.dims()) + " vs " +
                         to_string(b.dims()));
}

double ratio(std::uint64_t num, std::uint64_t den, const ConfusionCounts& c,
             const MetricConventions& conv) {
  if (c.tp + c.fp + c.fn == 0) return conv.both_empty;
  if (den == 0) return conv.empty_denominator;
  return static_cast<double>(num) / static_cast<double>(den);
}

std::string fmt(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

}  // namespace

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& truth, const BinaryMask* roi) {
  require_same_dims(pred, truth, "confusion: prediction and truth differ");
  if (roi) require_same_dims(pred, *roi, "confusion: roi differs");
  const auto p = pred.data();
  const auto t = truth.data();
  ConfusionCounts c;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (roi && !(*roi)[i]) continue;
    const bool pi = p[i] != 0;
    const bool ti = t[i] != 0;
    if (pi && ti)
      ++c.tp;
    else if (pi)
      ++c.fp;
    else if (ti)
      ++c.fn;
    else
      ++c.tn;
  }
  return c;
}

double dice(const ConfusionCounts& c, const MetricConventions& conv) {
  return ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, c, conv);
}

double ppv(const ConfusionCounts& c, const MetricConventions& conv) {
  return ratio(c.tp, c.tp + c.fp, c, conv);
}

double tpr(const ConfusionCounts& c, const MetricConventions& conv) {
  return ratio(c.tp, c.tp + c.fn, c, conv);
}

std::optional<double> avd(double pred_volume, double manual_volume) {
  if (!(manual_volume > 0.0)) return std::nullopt;
  return std::abs(pred_volume - manual_volume) / manual_volume;
}

double mask_volume(const BinaryMask& mask) {
  return static_cast<double>(mask.count()) * mask.spacing().voxel_volume_mm3() / 1000.0;
}

LinearFit linear_fit(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw FitError("linear_fit: xs and ys differ in length");
  if (xs.size() < 2) throw FitError("linear_fit: at least two points are required");
  const double mx = mean(xs);
  const double my = mean(ys);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (sxx == 0.0) throw FitError("linear_fit: all x values are equal");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  return f;
}

double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_sd(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                    std::size_t exact_limit) {
  if (a.size() != b.size()) throw DataError("wilcoxon: samples differ in length");
  if (a.empty()) throw DataError("wilcoxon: empty samples");

  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double di = a[i] - b[i];
    if (!std::isfinite(di)) throw DataError("wilcoxon: non-finite difference");
    if (di != 0.0) d.push_back(di);
  }
  WilcoxonResult r;
  r.n_used = d.size();
  if (d.empty()) {
    std::cerr << "warning: wilcoxon: every paired difference is zero; reporting p = 1\n";
    r.degenerate = true;
    return r;
  }

  // Doubled midranks keep every rank an integer.
  const std::size_t n = d.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return std::abs(d[i]) < std::abs(d[j]); });
  std::vector<long> rank2(n);
  std::vector<std::size_t> tie_sizes;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    const long r2 = static_cast<long>(i + 1 + j + 1);  // twice the midrank
    for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = r2;
    tie_sizes.push_back(j - i + 1);
    i = j + 1;
  }
  long w2 = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (d[i] > 0) w2 += rank2[i];
  const long total2 = static_cast<long>(n * (n + 1));
  r.w_plus = static_cast<double>(w2) / 2.0;

  if (n <= exact_limit) {
    // Number of sign assignments reaching each doubled positive-rank sum.
    std::vector<double> ways(static_cast<std::size_t>(total2) + 1, 0.0);
    ways[0] = 1.0;
    long reach = 0;
    for (std::size_t i = 0; i < n; ++i) {
      reach += rank2[i];
      for (long s = reach; s >= rank2[i]; --s) ways[s] += ways[s - rank2[i]];
    }
    const long obs = std::abs(2 * w2 - total2);
    double hits = 0.0;
    for (long s = 0; s <= total2; ++s)
      if (std::abs(2 * s - total2) >= obs) hits += ways[s];
    r.p_value = std::min(1.0, hits / std::ldexp(1.0, static_cast<int>(n)));
    r.exact = true;
    return r;
  }

  const double nn = static_cast<double>(n);
  double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
  for (std::size_t t : tie_sizes) {
    const double tt = static_cast<double>(t);
    var -= (tt * tt * tt - tt) / 48.0;
  }
  if (var <= 0.0) {
    r.p_value = 1.0;
    return r;
  }
  const double z = (r.w_plus - nn * (nn + 1.0) / 4.0) / std::sqrt(var);
  r.p_value = std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
  return r;
}

SubjectMetrics evaluate_subject(const std::string& id, const BinaryMask& pred,
                                const BinaryMask& truth, const MetricConventions& conv) {
  SubjectMetrics m;
  m.id = id;
  m.counts = confusion(pred, truth);
  m.dice = dice(m.counts, conv);
  m.ppv = ppv(m.counts, conv);
  m.tpr = tpr(m.counts, conv);
  m.pred_volume_cm3 = mask_volume(pred);
  m.manual_volume_cm3 = mask_volume(truth);
  m.avd = avd(m.pred_volume_cm3, m.manual_volume_cm3);
  return m;
}

namespace {

std::vector<double> column(const std::vector<SubjectMetrics>& rows, const std::string& metric) {
  std::vector<double> v;
  for (const auto& r : rows) {
    if (metric == "dice")
      v.push_back(r.dice);
    else if (metric == "ppv")
      v.push_back(r.ppv);
    else if (metric == "tpr")
      v.push_back(r.tpr);
    else if (metric == "avd") {
      if (r.avd) v.push_back(*r.avd);
    } else if (metric == "pred_volume_cm3")
      v.push_back(r.pred_volume_cm3);
    else if (metric == "manual_volume_cm3")
      v.push_back(r.manual_volume_cm3);
  }
  return v;
}

const std::vector<std::string> kMetricNames{"dice",           "ppv", "tpr", "avd",
                                            "pred_volume_cm3", "manual_volume_cm3"};
const std::vector<std::string> kTestedMetrics{"avd", "dice", "ppv", "tpr"};

std::map<std::string, SummaryStat> summarize(const std::vector<SubjectMetrics>& rows) {
  std::map<std::string, SummaryStat> out;
  for (const auto& name : kMetricNames) {
    const auto v = column(rows, name);
    out[name] = SummaryStat{mean(v), sample_sd(v), v.size()};
  }
  return out;
}

}  // namespace

std::vector<double> metric_column(const std::vector<SubjectMetrics>& rows, const std::string& metric) {
  return column(rows, metric);
}

MetricReport evaluate_cohort(const std::vector<CohortSubject>& subjects,
                             const std::map<std::string, std::vector<CohortSubject>>& baselines,
                             const MetricConventions& conv) {
  MetricReport rep;
  for (const auto& s : subjects) rep.subjects.push_back(evaluate_subject(s.id, s.pred, s.truth, conv));
  rep.summary = summarize(rep.subjects);

  const auto xs = column(rep.subjects, "manual_volume_cm3");
  const auto ys = column(rep.subjects, "pred_volume_cm3");
  try {
    rep.fit = linear_fit(xs, ys);
  } catch (const FitError&) {
    rep.fit.reset();
  }

  for (const auto& [name, rows] : baselines) {
    if (rows.size() != subjects.size())
      throw DataError("baseline '" + name + "' lists " + std::to_string(rows.size()) +
                      " subjects, expected " + std::to_string(subjects.size()));
    std::vector<SubjectMetrics> bm;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].id != subjects[i].id)
        throw DataError("baseline '" + name + "' subject '" + rows[i].id + "' does not match '" +
                        subjects[i].id + "'");
      bm.push_back(evaluate_subject(rows[i].id, rows[i].pred, rows[i].truth, conv));
    }
    if (subjects.size() >= 5) {
      for (const auto& metric : kTestedMetrics) {
        // Pair only subjects where both sides define the metric.
        std::vector<double> a, b;
        for (std::size_t i = 0; i < bm.size(); ++i) {
          if (metric == "avd") {
            if (!rep.subjects[i].avd || !bm[i].avd) continue;
            a.push_back(*rep.subjects[i].avd);
            b.push_back(*bm[i].avd);
          } else {
            a.push_back(column({rep.subjects[i]}, metric).front());
            b.push_back(column({bm[i]}, metric).front());
          }
        }
        if (a.size() >= 5) rep.p_values[name][metric] = wilcoxon_signed_rank(a, b).p_value;
      }
    }
    rep.baselines[name] = std::move(bm);
  }
  return rep;
}

std::string format_mean_sd(const SummaryStat& s, int decimals) {
  return fmt(s.mean, decimals) + " (± " + fmt(s.sd, decimals) + ")";
}

std::string format_summary_table(const MetricReport& report) {
  std::ostringstream os;
  auto row = [&](const std::string& name, const std::map<std::string, SummaryStat>& s) {
    os << name;
    for (const auto& m : kTestedMetrics) os << " | " << format_mean_sd(s.at(m));
    os << "\n";
  };
  os << "method | AVD | Dice | PPV | TPR\n";
  row(report.method, report.summary);
  for (const auto& [name, rows] : report.baselines) row(name, summarize(rows));
  return os.str();
}

namespace {

nlohmann::json subject_json(const SubjectMetrics& m) {
  nlohmann::json j{{"id", m.id},
                   {"tp", m.counts.tp},
                   {"fp", m.counts.fp},
                   {"fn", m.counts.fn},
                   {"tn", m.counts.tn},
                   {"dice", m.dice},
                   {"ppv", m.ppv},
                   {"tpr", m.tpr},
                   {"pred_volume_cm3", m.pred_volume_cm3},
                   {"manual_volume_cm3", m.manual_volume_cm3}};
  if (m.avd)
    j["avd"] = *m.avd;
  else
    j["avd"] = nullptr;
  return j;
}

nlohmann::json summary_json(const std::map<std::string, SummaryStat>& s) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : s) j[k] = {{"mean", v.mean}, {"sd", v.sd}, {"n", v.n}};
  return j;
}

std::string csv_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

nlohmann::json report_to_json(const MetricReport& report) {
  nlohmann::json j;
  j["method"] = report.method;
  j["subjects"] = nlohmann::json::array();
  for (const auto& m : report.subjects) j["subjects"].push_back(subject_json(m));
  j["summary"] = summary_json(report.summary);
  if (report.fit)
    j["fit"] = {{"slope", report.fit->slope}, {"intercept", report.fit->intercept}};
  else
    j["fit"] = nullptr;
  j["baselines"] = nlohmann::json::object();
  for (const auto& [name, rows] : report.baselines) {
    nlohmann::json b;
    b["subjects"] = nlohmann::json::array();
    for (const auto& m : rows) b["subjects"].push_back(subject_json(m));
    b["summary"] = summary_json(summarize(rows));
    if (auto it = report.p_values.find(name); it != report.p_values.end())
      b["p_values"] = it->second;
    else
      b["p_values"] = nlohmann::json::object();
    j["baselines"][name] = b;
  }
  return j;
}

std::string report_to_csv(const MetricReport& report) {
  std::ostringstream os;
  os << "method,subject,tp,fp,fn,tn,dice,ppv,tpr,avd,pred_volume_cm3,manual_volume_cm3\n";
  auto rows = [&](const std::string& method, const std::vector<SubjectMetrics>& ms) {
    for (const auto& m : ms)
      os << method << ',' << m.id << ',' << m.counts.tp << ',' << m.counts.fp << ',' << m.counts.fn
         << ',' << m.counts.tn << ',' << csv_number(m.dice) << ',' << csv_number(m.ppv) << ','
         << csv_number(m.tpr) << ',' << (m.avd ? csv_number(*m.avd) : std::string()) << ','
         << csv_number(m.pred_volume_cm3) << ',' << csv_number(m.manual_volume_cm3) << '\n';
  };
  rows(report.method, report.subjects);
  for (const auto& [name, ms] : report.baselines) rows(name, ms);
  return os.str();
}

namespace {

struct Quartiles {
  double lo, q1, med, q3, hi;
};

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const std::size_t k = std::min(i + 1, v.size() - 1);
  return v[i] + (pos - static_cast<double>(i)) * (v[k] - v[i]);
}

Quartiles quartiles(const std::vector<double>& v) {
  return {*std::min_element(v.begin(), v.end()), quantile(v, 0.25), quantile(v, 0.5),
          quantile(v, 0.75), *std::max_element(v.begin(), v.end())};
}

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};

}  // namespace

std::string box_plot_svg(const MetricReport& report, const std::string& metric) {
  if (std::find(kTestedMetrics.begin(), kTestedMetrics.end(), metric) == kTestedMetrics.end())
    throw ConfigError("no box plot for metric '" + metric + "'");
  std::vector<std::pair<std::string, const std::vector<SubjectMetrics>*>> methods{
      {report.method, &report.subjects}};
  for (const auto& [name, rows] : report.baselines) methods.emplace_back(name, &rows);

  const double slot = 90, top = 40, left = 60, plot_h = 300;
  const double width = left + slot * static_cast<double>(methods.size()) + 20;
  const double height = top + plot_h + 50;
  double ymax = 1.0;
  for (const auto& [name, rows] : methods)
    for (double v : column(*rows, metric)) ymax = std::max(ymax, v);
  auto y = [&](double v) { return top + plot_h - v / ymax * plot_h; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\">" << metric << "</text>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
     << top + plot_h << "\" stroke=\"black\"/>\n";
  for (double t : {0.0, 0.25, 0.5, 0.75, 1.0})
    os << "<text x=\"" << left - 6 << "\" y=\"" << y(t * ymax) + 4 << "\" text-anchor=\"end\">"
       << fmt(t * ymax, 2) << "</text>\n";
  for (std::size_t m = 0; m < methods.size(); ++m) {
    const double cx = left + slot * (static_cast<double>(m) + 0.5);
    os << "<text x=\"" << cx << "\" y=\"" << top + plot_h + 20 << "\" text-anchor=\"middle\">"
       << methods[m].first << "</text>\n";
    const auto v = column(*methods[m].second, metric);
    if (v.empty()) continue;
    const Quartiles q = quartiles(v);
    const double bw = slot * 0.5;
    const char* col = kPalette[m % 6];
    os << "<line x1=\"" << cx << "\" y1=\"" << y(q.lo) << "\" x2=\"" << cx << "\" y2=\"" << y(q.hi)
       << "\" stroke=\"" << col << "\"/>\n";
    os << "<rect x=\"" << cx - bw / 2 << "\" y=\"" << y(q.q3) << "\" width=\"" << bw
       << "\" height=\"" << std::max(0.5, y(q.q1) - y(q.q3)) << "\" fill=\"" << col
       << "\" fill-opacity=\"0.4\" stroke=\"" << col << "\"/>\n";
    os << "<line x1=\"" << cx - bw / 2 << "\" y1=\"" << y(q.med) << "\" x2=\"" << cx + bw / 2
       << "\" y2=\"" << y(q.med) << "\" stroke=\"black\" stroke-width=\"2\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string volume_scatter_svg(const MetricReport& report) {
  const double size = 400, margin = 60;
  const auto xs = column(report.subjects, "manual_volume_cm3");
  const auto ys = column(report.subjects, "pred_volume_cm3");
  double vmax = 1e-9;
  for (double v : xs) vmax = std::max(vmax, v);
  for (double v : ys) vmax = std::max(vmax, v);
  vmax *= 1.05;
  auto px = [&](double v) { return margin + v / vmax * size; };
  auto py = [&](double v) { return margin + size - v / vmax * size; };
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size + 2 * margin << "\" height=\""
     << size + 2 * margin << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << size << "\" height=\""
     << size << "\" fill=\"none\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\"" << px(vmax) << "\" y2=\""
     << py(vmax) << "\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n";
  for (std::size_t i = 0; i < xs.size(); ++i)
    os << "<circle cx=\"" << px(xs[i]) << "\" cy=\"" << py(ys[i]) << "\" r=\"4\" fill=\""
       << kPalette[0] << "\"/>\n";
  if (report.fit) {
    const auto& f = *report.fit;
    os << "<line x1=\"" << px(0) << "\" y1=\"" << py(f.intercept) << "\" x2=\"" << px(vmax)
       << "\" y2=\"" << py(f.intercept + f.slope * vmax) << "\" stroke=\"" << kPalette[0]
       << "\"/>\n";
    os << "<text x=\"" << margin + 10 << "\" y=\"" << margin + 20 << "\">slope "
       << fmt(f.slope, 3) << ", intercept " << fmt(f.intercept, 3) << "</text>\n";
  }
  os << "<text x=\"" << margin + size / 2 << "\" y=\"" << size + margin + 35
     << "\" text-anchor=\"middle\">manual volume (cm3)</text>\n";
  os << "<text x=\"15\" y=\"" << margin + size / 2 << "\" transform=\"rotate(-90 15 "
     << margin + size / 2 << ")\" text-anchor=\"middle\">predicted volume (cm3)</text>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace segae
