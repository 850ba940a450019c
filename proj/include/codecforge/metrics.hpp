#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace codecforge {

// counts[g * C + p] = points of true class g predicted as p.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes);

  std::size_t classes() const { return classes_; }
  std::uint64_t count(std::size_t truth, std::size_t predicted) const;
  std::uint64_t total() const;
  std::span<const std::uint64_t> counts() const { return counts_; }

  // Throws DimensionError on length mismatch and IndexError on out-of-range classes.
  void accumulate(std::span<const std::size_t> predictions, std::span<const std::size_t> labels);
  // Adds another shard's counts; shards accumulated on separate threads merge here.
  void merge(const ConfusionMatrix& other);

 private:
  std::size_t classes_;
  std::vector<std::uint64_t> counts_;
};

struct ClassIoU {
  double iou = 0.0;
  bool defined = false;  // false when the class is absent from both truth and predictions
};

// Throw UndefinedMetricError on an empty matrix.
double oa(const ConfusionMatrix& cm);
std::vector<ClassIoU> iou_per_class(const ConfusionMatrix& cm);
// Mean over defined classes; throws UndefinedMetricError when none is defined.
double miou(const ConfusionMatrix& cm);
// Mean recall over classes present in the ground truth.
double macc(const ConfusionMatrix& cm);

struct MetricsReport {
  double oa = 0.0;
  double miou = 0.0;
  double macc = 0.0;
  std::vector<ClassIoU> per_class;
  std::uint64_t points = 0;
};

MetricsReport summarize(const ConfusionMatrix& cm);
nlohmann::json to_json(const MetricsReport& r, std::span<const std::string> class_names = {});
// class_id,iou,defined rows, then oa/miou/macc summary rows.
std::string to_csv(const MetricsReport& r);

}  // namespace codecforge
