#include "codecforge/metrics.hpp"

#include <cstdio>

#include "codecforge/errors.hpp"

namespace codecforge {

ConfusionMatrix::ConfusionMatrix(std::size_t classes) : classes_(classes), counts_(classes * classes, 0) {
  if (classes == 0) throw ConfigError("confusion matrix needs at least one class");
}

std::uint64_t ConfusionMatrix::count(std::size_t truth, std::size_t predicted) const {
  if (truth >= classes_ || predicted >= classes_) {
    throw IndexError("confusion matrix cell (" + std::to_string(truth) + ", " + std::to_string(predicted) +
                     ") outside " + std::to_string(classes_) + " classes");
  }
  return counts_[truth * classes_ + predicted];
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (const std::uint64_t c : counts_) t += c;
  return t;
}

void ConfusionMatrix::accumulate(std::span<const std::size_t> predictions, std::span<const std::size_t> labels) {
  if (predictions.size() != labels.size()) {
    throw DimensionError("accumulate: " + std::to_string(predictions.size()) + " predictions for " +
                         std::to_string(labels.size()) + " labels");
  }
  // Validate first so a bad batch leaves the matrix untouched.
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes_ || predictions[i] >= classes_) {
      throw IndexError("accumulate: point " + std::to_string(i) + " has label " + std::to_string(labels[i]) +
                       ", prediction " + std::to_string(predictions[i]) + " with " + std::to_string(classes_) +
                       " classes");
    }
  }
  for (std::size_t i = 0; i < labels.size(); ++i) ++counts_[labels[i] * classes_ + predictions[i]];
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.classes_ != classes_) {
    throw DimensionError("merge: " + std::to_string(other.classes_) + " classes into " + std::to_string(classes_));
  }
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

double oa(const ConfusionMatrix& cm) {
  const std::uint64_t total = cm.total();
  if (total == 0) throw UndefinedMetricError("overall accuracy of an empty confusion matrix");
  std::uint64_t tp = 0;
  for (std::size_t c = 0; c < cm.classes(); ++c) tp += cm.count(c, c);
  return static_cast<double>(tp) / static_cast<double>(total);
}

std::vector<ClassIoU> iou_per_class(const ConfusionMatrix& cm) {
  const std::size_t n = cm.classes();
  std::vector<ClassIoU> out(n);
  for (std::size_t c = 0; c < n; ++c) {
    std::uint64_t fp = 0, fn = 0;
    for (std::size_t o = 0; o < n; ++o) {
      if (o == c) continue;
      fp += cm.count(o, c);
      fn += cm.count(c, o);
    }
    const std::uint64_t tp = cm.count(c, c), denom = tp + fp + fn;
    if (denom > 0) out[c] = {static_cast<double>(tp) / static_cast<double>(denom), true};
  }
  return out;
}

double miou(const ConfusionMatrix& cm) {
  double sum = 0.0;
  std::size_t defined = 0;
  for (const ClassIoU& c : iou_per_class(cm)) {
    if (!c.defined) continue;
    sum += c.iou;
    ++defined;
  }
  if (defined == 0) throw UndefinedMetricError("mIoU with no defined class");
  return sum / static_cast<double>(defined);
}

double macc(const ConfusionMatrix& cm) {
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < cm.classes(); ++c) {
    std::uint64_t row = 0;
    for (std::size_t p = 0; p < cm.classes(); ++p) row += cm.count(c, p);
    if (row == 0) continue;
    sum += static_cast<double>(cm.count(c, c)) / static_cast<double>(row);
    ++present;
  }
  if (present == 0) throw UndefinedMetricError("mean accuracy of an empty confusion matrix");
  return sum / static_cast<double>(present);
}

MetricsReport summarize(const ConfusionMatrix& cm) {
  return {oa(cm), miou(cm), macc(cm), iou_per_class(cm), cm.total()};
}

nlohmann::json to_json(const MetricsReport& r, std::span<const std::string> class_names) {
  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    nlohmann::json e{{"class_id", c}, {"defined", r.per_class[c].defined}};
    e["iou"] = r.per_class[c].defined ? nlohmann::json(r.per_class[c].iou) : nlohmann::json(nullptr);
    if (c < class_names.size()) e["name"] = class_names[c];
    classes.push_back(std::move(e));
  }
  return {{"oa", r.oa}, {"miou", r.miou}, {"macc", r.macc}, {"points", r.points}, {"classes", std::move(classes)}};
}

std::string to_csv(const MetricsReport& r) {
  std::string out = "class_id,iou,defined\n";
  char buf[64];
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%d\n", c, r.per_class[c].iou, r.per_class[c].defined ? 1 : 0);
    out += buf;
  }
  for (const auto& [name, v] : {std::pair{"oa", r.oa}, std::pair{"miou", r.miou}, std::pair{"macc", r.macc}}) {
    std::snprintf(buf, sizeof buf, "%s,%.6f,1\n", name, v);
    out += buf;
  }
  return out;
}

}  // namespace codecforge
