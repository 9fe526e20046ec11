#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ids/tensor.hpp"

namespace ids {

/// One-vs-rest counts for a single class.
struct BinaryCounts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

/// counts[i][j]: samples of true class i predicted as class j.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t classes, std::vector<std::string> names = {});

  std::size_t classes() const { return k_; }
  std::size_t& at(std::size_t truth, std::size_t pred) { return counts_[truth * k_ + pred]; }
  std::size_t at(std::size_t truth, std::size_t pred) const { return counts_[truth * k_ + pred]; }
  std::size_t total() const;
  BinaryCounts one_vs_rest(std::size_t cls) const;
  const std::vector<std::string>& class_names() const { return names_; }
  /// Row-normalised share of class `truth` predicted as `pred`.
  double rate(std::size_t truth, std::size_t pred) const;

 private:
  std::size_t k_ = 0;
  std::vector<std::size_t> counts_;
  std::vector<std::string> names_;
};

/// Throws ContractError on length mismatch or labels outside 0..K-1.
ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted, std::size_t classes,
                          std::vector<std::string> names = {});

/// F1 as the harmonic mean of precision and recall; 0 when both are 0.
double f1_score(double precision, double recall);

struct ClassMetrics {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  double fpr = 0;
  std::size_t support = 0;
  /// Some ratio had a zero denominator and was reported as 0.
  bool degenerate = false;
};

struct ClassReport {
  std::vector<std::string> class_names;
  std::vector<ClassMetrics> per_class;
  std::size_t total = 0;
  double accuracy = 0;
  double macro_precision = 0, macro_recall = 0, macro_f1 = 0;
  double weighted_precision = 0, weighted_recall = 0, weighted_f1 = 0;
  double macro_fpr = 0;
  double micro_fpr = 0;
};

/// Per-class one-vs-rest precision/recall/F1/FPR plus accuracy and macro /
/// support-weighted aggregates. 0/0 yields 0 with the degenerate flag set.
ClassReport class_report(const ConfusionMatrix& cm);

struct FprSummary {
  std::vector<double> per_class;
  double macro = 0;
  double micro = 0;
};

/// FP / (FP + TN) per class (one-vs-rest), with macro and micro averages.
FprSummary fpr(const ConfusionMatrix& cm);

struct RocPoint {
  double threshold = 0;  // +inf for the (0, 0) start point
  double fpr = 0;
  double tpr = 0;
};

struct RocCurve {
  std::size_t cls = 0;
  std::vector<RocPoint> points;
  /// Absent when the class has no positive or no negative samples.
  std::optional<double> auc;
  bool defined() const { return auc.has_value(); }
};

/// One-vs-rest ROC per class. Thresholds sweep the distinct scores in
/// decreasing order; tied scores form a single step; AUC by trapezoids.
/// scores: [N, K].
std::vector<RocCurve> roc_auc(const Tensor& scores, std::span<const int> truth);
/// Single binary curve from scores and 0/1 positives.
RocCurve roc_curve(std::span<const double> scores, std::span<const bool> positive);

nlohmann::json report_to_json(const ClassReport& report, const ConfusionMatrix& cm,
                              const std::vector<RocCurve>& roc);
/// Aligned text table: class, precision, recall, f1, support (percentages).
std::string report_table(const ClassReport& report);
void write_confusion_csv(const std::string& path, const ConfusionMatrix& cm);
/// class,threshold,fpr,tpr
void write_roc_csv(const std::string& path, const std::vector<RocCurve>& curves,
                   const std::vector<std::string>& names);

}  // namespace ids
