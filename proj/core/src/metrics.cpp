#include "exnet/metrics.hpp"

#include <cmath>
#include <cstdio>
#include "json.hpp"

#include "exnet/error.hpp"

namespace exnet {

ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> truth) {
  if (predictions.size() != truth.size()) {
    throw DataError("confusion: " + std::to_string(predictions.size()) + " predictions for " +
                    std::to_string(truth.size()) + " labels");
  }
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int p = predictions[i];
    const int t = truth[i];
    if ((p != 0 && p != 1) || (t != 0 && t != 1)) throw DataError("confusion: labels must be 0 or 1");
    if (p == 1) {
      ++(t == 1 ? cm.tp : cm.fp);
    } else {
      ++(t == 1 ? cm.fn : cm.tn);
    }
  }
  return cm;
}

double f1_score(double precision, double recall) {
  const double s = precision + recall;
  return s > 0.0 ? 2.0 * precision * recall / s : 0.0;
}

double negative_predictive_value(const ConfusionMatrix& cm) {
  const std::size_t d = cm.tn + cm.fn;
  return d ? static_cast<double>(cm.tn) / static_cast<double>(d) : 0.0;
}

MetricsReport report(const ConfusionMatrix& cm, std::optional<double> train_accuracy,
                     std::optional<double> validation_accuracy) {
  if (cm.total() == 0) throw DataError("metrics of an empty confusion matrix");
  MetricsReport r;
  r.confusion = cm;
  const std::size_t pred_pos = cm.tp + cm.fp;
  const std::size_t true_pos = cm.tp + cm.fn;
  r.precision_undefined = pred_pos == 0;
  r.recall_undefined = true_pos == 0;
  r.precision = pred_pos ? static_cast<double>(cm.tp) / static_cast<double>(pred_pos) : 0.0;
  r.recall = true_pos ? static_cast<double>(cm.tp) / static_cast<double>(true_pos) : 0.0;
  r.f1_undefined = r.precision + r.recall == 0.0;
  r.f1 = f1_score(r.precision, r.recall);
  r.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
  if (train_accuracy && validation_accuracy) r.degree_of_overfitting = *train_accuracy - *validation_accuracy;
  return r;
}

std::string to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["accuracy"] = r.accuracy;
  j["confusion"] = {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"fn", r.confusion.fn}, {"tn", r.confusion.tn}};
  j["degree_of_overfitting"] = r.degree_of_overfitting ? nlohmann::ordered_json(*r.degree_of_overfitting) : nullptr;
  return j.dump(2) + "\n";
}

MetricsReport metrics_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    const auto& c = j.at("confusion");
    ConfusionMatrix cm{c.at("tp").get<std::size_t>(), c.at("fp").get<std::size_t>(), c.at("fn").get<std::size_t>(),
                       c.at("tn").get<std::size_t>()};
    MetricsReport r = report(cm);
    r.precision = j.at("precision").get<double>();
    r.recall = j.at("recall").get<double>();
    r.f1 = j.at("f1").get<double>();
    r.accuracy = j.at("accuracy").get<double>();
    const auto& d = j.at("degree_of_overfitting");
    if (!d.is_null()) r.degree_of_overfitting = d.get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("metrics JSON: ") + e.what());
  } catch (const DataError& e) {
    throw FormatError(std::string("metrics JSON: ") + e.what());
  }
}

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string to_csv_row(const MetricsReport& r) {
  std::string s = fixed(r.precision, 6) + ',' + fixed(r.recall, 6) + ',' + fixed(r.f1, 6) + ',' +
                  fixed(r.accuracy, 6) + ',' + std::to_string(r.confusion.tp) + ',' + std::to_string(r.confusion.fp) +
                  ',' + std::to_string(r.confusion.fn) + ',' + std::to_string(r.confusion.tn) + ',';
  if (r.degree_of_overfitting) s += fixed(*r.degree_of_overfitting, 6);
  return s;
}

std::string format_percent(double fraction) {
  std::string s = fixed(fraction * 100.0, 2);
  if (s == "-0.00") s = "0.00";
  return s + "%";
}

}  // namespace exnet
