#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "braintim/error.hpp"
#include "braintim/model.hpp"
#include "braintim/tensor.hpp"

namespace braintim {

// Labels < 0 are background and excluded. Returns 0 when nothing is scored.
inline double top1_accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.size() != labels.size()) {
    throw ShapeError("prediction count " + std::to_string(predictions.size()) + " != label count " +
                     std::to_string(labels.size()));
  }
  std::size_t hit = 0, total = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) continue;
    ++total;
    hit += predictions[i] == labels[i];
  }
  return total == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(total);
}

// Unnormalized counts: entry (i, j) counts true i predicted j.
inline Matrix confusion_counts(const std::vector<int>& predictions, const std::vector<int>& labels, int n_classes) {
  if (predictions.size() != labels.size()) throw ShapeError("prediction and label counts differ");
  if (n_classes < 1) throw InvalidArgument("class count must be >= 1");
  Matrix c(static_cast<std::size_t>(n_classes), static_cast<std::size_t>(n_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) continue;
    if (labels[i] >= n_classes || predictions[i] < 0 || predictions[i] >= n_classes) {
      throw InvalidLabel("class id out of range [0, " + std::to_string(n_classes) + ")");
    }
    c(static_cast<std::size_t>(labels[i]), static_cast<std::size_t>(predictions[i])) += 1.0;
  }
  return c;
}

inline Matrix normalize_rows(const Matrix& counts) {
  Matrix m(counts.rows(), counts.cols());
  for (std::size_t r = 0; r < counts.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < counts.cols(); ++c) s += counts(r, c);
    if (s == 0.0) continue;
    for (std::size_t c = 0; c < counts.cols(); ++c) m(r, c) = counts(r, c) / s;
  }
  return m;
}

// Row-normalized: (i, j) = P(predicted j | true i); unsupported rows are zero.
inline Matrix confusion_matrix(const std::vector<int>& predictions, const std::vector<int>& labels, int n_classes) {
  return normalize_rows(confusion_counts(predictions, labels, n_classes));
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

// Sample standard deviation (n - 1 denominator); std is 0 for n < 2.
inline MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd r;
  r.n = xs.size();
  if (xs.empty()) return r;
  r.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() < 2) return r;
  double ss = 0.0;
  for (double x : xs) ss += (x - r.mean) * (x - r.mean);
  r.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  return r;
}

struct TaskReport {
  double accuracy = 0.0;
  std::size_t support = 0;
  Matrix counts;
  Matrix confusion;
  std::vector<double> per_class_accuracy;
};

struct EvalReport {
  std::map<BranchTask, TaskReport> tasks;

  double accuracy(Modality branch, Task task) const { return tasks.at({branch, task}).accuracy; }
};

// Collected per-query predictions and labels for one (branch, task).
struct PredictionSet {
  std::vector<int> predicted;
  std::vector<int> labels;
};

inline TaskReport make_task_report(const PredictionSet& p, int n_classes) {
  TaskReport r;
  r.accuracy = top1_accuracy(p.predicted, p.labels);
  r.counts = confusion_counts(p.predicted, p.labels, n_classes);
  r.confusion = normalize_rows(r.counts);
  r.per_class_accuracy.resize(static_cast<std::size_t>(n_classes), 0.0);
  double trace = 0.0, total = 0.0;
  for (std::size_t i = 0; i < r.counts.rows(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < r.counts.cols(); ++j) row += r.counts(i, j);
    trace += r.counts(i, i);
    total += row;
    if (row > 0.0) r.per_class_accuracy[i] = r.counts(i, i) / row;
  }
  r.support = static_cast<std::size_t>(total);
  const double via_trace = total == 0.0 ? 0.0 : trace / total;
  if (std::abs(via_trace - r.accuracy) > 1e-12) {
    throw NumericError("accuracy disagrees with the confusion-matrix trace");
  }
  return r;
}

inline EvalReport make_report(const ModelConfig& cfg, const std::map<BranchTask, PredictionSet>& sets) {
  EvalReport report;
  for (const auto& [key, set] : sets) report.tasks.emplace(key, make_task_report(set, cfg.class_counts.at(key.second)));
  return report;
}

}  // namespace braintim
