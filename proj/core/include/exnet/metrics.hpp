#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace exnet {

/// Binary confusion counts with Exudate (label 1) as the positive class.
struct ConfusionMatrix {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  [[nodiscard]] std::size_t total() const noexcept { return tp + fp + fn + tn; }
  /// Same counts with Normal as the positive class.
  [[nodiscard]] ConfusionMatrix swapped() const noexcept { return {tn, fn, fp, tp}; }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

/// Throws DataError on a length mismatch or a label outside {0, 1}.
ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> truth);

struct MetricsReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  ConfusionMatrix confusion;
  std::optional<double> degree_of_overfitting;  // train accuracy - validation accuracy

  // Set when the matching ratio had a zero denominator and was reported as 0.
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool f1_undefined = false;
};

/// Pure. Throws DataError for an empty matrix. The degree of overfitting is
/// filled only when both accuracies are given.
MetricsReport report(const ConfusionMatrix& cm, std::optional<double> train_accuracy = std::nullopt,
                     std::optional<double> validation_accuracy = std::nullopt);

/// tn / (tn + fn); 0 when undefined.
double negative_predictive_value(const ConfusionMatrix& cm);

/// Harmonic mean; 0 when p + r == 0.
double f1_score(double precision, double recall);

/// JSON with keys precision, recall, f1, accuracy, confusion{tp,fp,fn,tn},
/// degree_of_overfitting (null when absent).
std::string to_json(const MetricsReport& r);
/// Inverse of to_json; throws FormatError.
MetricsReport metrics_from_json(const std::string& text);

inline constexpr const char* kMetricsCsvHeader = "precision,recall,f1,accuracy,tp,fp,fn,tn,degree_of_overfitting";
std::string to_csv_row(const MetricsReport& r);

/// Fraction as a percentage with two decimals: 0.0799 -> "7.99%".
std::string format_percent(double fraction);

}  // namespace exnet
