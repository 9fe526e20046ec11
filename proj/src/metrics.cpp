#include "ids/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "ids/errors.hpp"

namespace ids {

ConfusionMatrix::ConfusionMatrix(std::size_t classes, std::vector<std::string> names)
    : k_(classes), counts_(classes * classes, 0), names_(std::move(names)) {
  if (names_.empty()) {
    for (std::size_t c = 0; c < k_; ++c) names_.push_back(std::to_string(c));
  }
  if (names_.size() != k_) throw ContractError("confusion matrix: class name count differs from K");
}

std::size_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::size_t{0}); }

BinaryCounts ConfusionMatrix::one_vs_rest(std::size_t cls) const {
  BinaryCounts b;
  for (std::size_t i = 0; i < k_; ++i) {
    for (std::size_t j = 0; j < k_; ++j) {
      const std::size_t n = at(i, j);
      if (i == cls && j == cls) {
        b.tp += n;
      } else if (i == cls) {
        b.fn += n;
      } else if (j == cls) {
        b.fp += n;
      } else {
        b.tn += n;
      }
    }
  }
  return b;
}

double ConfusionMatrix::rate(std::size_t truth, std::size_t pred) const {
  std::size_t row = 0;
  for (std::size_t j = 0; j < k_; ++j) row += at(truth, j);
  return row ? double(at(truth, pred)) / double(row) : 0.0;
}

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted, std::size_t classes,
                          std::vector<std::string> names) {
  if (truth.size() != predicted.size()) {
    throw ContractError("confusion: " + std::to_string(truth.size()) + " labels vs " +
                        std::to_string(predicted.size()) + " predictions");
  }
  ConfusionMatrix cm(classes, std::move(names));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || predicted[i] < 0 || std::size_t(truth[i]) >= classes || std::size_t(predicted[i]) >= classes) {
      throw ContractError("confusion: label outside 0.." + std::to_string(classes - 1));
    }
    ++cm.at(std::size_t(truth[i]), std::size_t(predicted[i]));
  }
  return cm;
}

double f1_score(double precision, double recall) {
  return precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
}

namespace {

double ratio(std::size_t num, std::size_t den, bool& degenerate) {
  if (den == 0) {
    degenerate = true;
    return 0.0;
  }
  return double(num) / double(den);
}

}  // namespace

FprSummary fpr(const ConfusionMatrix& cm) {
  FprSummary s;
  std::size_t fp = 0, negatives = 0;
  for (std::size_t c = 0; c < cm.classes(); ++c) {
    const BinaryCounts b = cm.one_vs_rest(c);
    bool unused = false;
    s.per_class.push_back(ratio(b.fp, b.fp + b.tn, unused));
    fp += b.fp;
    negatives += b.fp + b.tn;
  }
  s.macro = s.per_class.empty() ? 0.0 : std::accumulate(s.per_class.begin(), s.per_class.end(), 0.0) / double(s.per_class.size());
  s.micro = negatives ? double(fp) / double(negatives) : 0.0;
  return s;
}

ClassReport class_report(const ConfusionMatrix& cm) {
  ClassReport r;
  r.class_names = cm.class_names();
  r.total = cm.total();
  if (r.total == 0) throw ContractError("class_report: empty confusion matrix");
  const std::size_t k = cm.classes();
  std::size_t correct = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const BinaryCounts b = cm.one_vs_rest(c);
    ClassMetrics m;
    m.support = b.tp + b.fn;
    m.precision = ratio(b.tp, b.tp + b.fp, m.degenerate);
    m.recall = ratio(b.tp, b.tp + b.fn, m.degenerate);
    m.f1 = f1_score(m.precision, m.recall);
    m.fpr = ratio(b.fp, b.fp + b.tn, m.degenerate);
    correct += b.tp;
    r.per_class.push_back(m);
  }
  r.accuracy = double(correct) / double(r.total);
  for (const ClassMetrics& m : r.per_class) {
    r.macro_precision += m.precision / double(k);
    r.macro_recall += m.recall / double(k);
    r.macro_f1 += m.f1 / double(k);
    const double w = double(m.support) / double(r.total);
    r.weighted_precision += w * m.precision;
    r.weighted_recall += w * m.recall;
    r.weighted_f1 += w * m.f1;
  }
  const FprSummary f = fpr(cm);
  r.macro_fpr = f.macro;
  r.micro_fpr = f.micro;
  return r;
}

RocCurve roc_curve(std::span<const double> scores, std::span<const bool> positive) {
  if (scores.size() != positive.size()) throw ContractError("roc: score and label counts differ");
  const std::size_t n = scores.size();
  const auto pos = static_cast<std::size_t>(std::count(positive.begin(), positive.end(), true));
  const std::size_t neg = n - pos;
  RocCurve curve;
  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  if (pos == 0 || neg == 0) return curve;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::size_t tp = 0, fp = 0;
  double auc = 0.0;
  for (std::size_t i = 0; i < n;) {
    const double threshold = scores[order[i]];
    const std::size_t tp0 = tp, fp0 = fp;
    for (; i < n && scores[order[i]] == threshold; ++i) (positive[order[i]] ? tp : fp)++;
    // Trapezoid over the tie group.
    auc += (double(fp - fp0) / double(neg)) * (double(tp + tp0) / 2.0 / double(pos));
    curve.points.push_back({threshold, double(fp) / double(neg), double(tp) / double(pos)});
  }
  curve.auc = auc;
  return curve;
}

std::vector<RocCurve> roc_auc(const Tensor& scores, std::span<const int> truth) {
  if (scores.rank() != 2 || scores.shape()[0] != truth.size()) {
    throw DimensionError("roc_auc: scores " + to_string(scores.shape()) + " vs " + std::to_string(truth.size()) +
                         " labels");
  }
  const std::size_t n = truth.size(), k = scores.shape()[1];
  std::vector<RocCurve> curves;
  std::vector<double> column(n);
  std::vector<bool> flags(n);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      column[i] = double(scores.at(i, c));
      flags[i] = truth[i] == int(c);
    }
    // std::vector<bool> is not contiguous; copy into a plain buffer.
    std::unique_ptr<bool[]> positive(new bool[n]);
    for (std::size_t i = 0; i < n; ++i) positive[i] = flags[i];
    RocCurve curve = roc_curve(column, std::span<const bool>(positive.get(), n));
    curve.cls = c;
    curves.push_back(std::move(curve));
  }
  return curves;
}

nlohmann::json report_to_json(const ClassReport& report, const ConfusionMatrix& cm, const std::vector<RocCurve>& roc) {
  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    const ClassMetrics& m = report.per_class[c];
    nlohmann::json entry = {{"class", report.class_names[c]}, {"index", c},         {"precision", m.precision},
                            {"recall", m.recall},             {"f1", m.f1},         {"fpr", m.fpr},
                            {"support", m.support},           {"degenerate", m.degenerate}};
    if (c < roc.size()) {
      entry["auc"] = roc[c].auc ? nlohmann::json(*roc[c].auc) : nlohmann::json(nullptr);
    }
    classes.push_back(entry);
  }
  nlohmann::json matrix = nlohmann::json::array();
  for (std::size_t i = 0; i < cm.classes(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t j = 0; j < cm.classes(); ++j) row.push_back(cm.at(i, j));
    matrix.push_back(row);
  }
  return {
      {"total", report.total},
      {"accuracy", report.accuracy},
      {"weighted", {{"precision", report.weighted_precision}, {"recall", report.weighted_recall}, {"f1", report.weighted_f1}}},
      {"macro", {{"precision", report.macro_precision}, {"recall", report.macro_recall}, {"f1", report.macro_f1}}},
      {"fpr", {{"macro", report.macro_fpr}, {"micro", report.micro_fpr}}},
      {"comparable_aggregate", "weighted"},
      {"classes", classes},
      {"confusion_matrix", matrix},
  };
}

std::string report_table(const ClassReport& report) {
  std::size_t width = 12;
  for (const auto& n : report.class_names) width = std::max(width, n.size() + 6);
  std::string out = fmt::format("{:<{}}{:>10}{:>10}{:>10}{:>10}\n", "", width, "Precision", "Recall", "F1", "Support");
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    const ClassMetrics& m = report.per_class[c];
    out += fmt::format("{:<{}}{:>9.2f}%{:>9.2f}%{:>9.2f}%{:>10}\n", fmt::format("{} ({})", report.class_names[c], c),
                       width, 100 * m.precision, 100 * m.recall, 100 * m.f1, m.support);
  }
  out += fmt::format("{:<{}}{:>9.2f}%{:>9.2f}%{:>9.2f}%{:>10}\n", "weighted avg", width, 100 * report.weighted_precision,
                     100 * report.weighted_recall, 100 * report.weighted_f1, report.total);
  out += fmt::format("{:<{}}{:>9.2f}%{:>9.2f}%{:>9.2f}%{:>10}\n", "macro avg", width, 100 * report.macro_precision,
                     100 * report.macro_recall, 100 * report.macro_f1, report.total);
  out += fmt::format("accuracy {:.4f}%   FPR macro {:.4f}%   FPR micro {:.4f}%\n", 100 * report.accuracy,
                     100 * report.macro_fpr, 100 * report.micro_fpr);
  return out;
}

void write_confusion_csv(const std::string& path, const ConfusionMatrix& cm) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << "true\\predicted";
  for (const auto& n : cm.class_names()) out << ',' << n;
  out << '\n';
  for (std::size_t i = 0; i < cm.classes(); ++i) {
    out << cm.class_names()[i];
    for (std::size_t j = 0; j < cm.classes(); ++j) out << ',' << cm.at(i, j);
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

void write_roc_csv(const std::string& path, const std::vector<RocCurve>& curves, const std::vector<std::string>& names) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << "class,threshold,fpr,tpr\n";
  for (const RocCurve& c : curves) {
    const std::string& name = c.cls < names.size() ? names[c.cls] : std::to_string(c.cls);
    for (const RocPoint& p : c.points) {
      out << name << ',' << (std::isinf(p.threshold) ? std::string("inf") : fmt::format("{:.10g}", p.threshold)) << ','
          << fmt::format("{:.10g}", p.fpr) << ',' << fmt::format("{:.10g}", p.tpr) << '\n';
    }
  }
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace ids
