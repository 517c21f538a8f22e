#include <algorithm>
#include <map>

#include "rbcssl/errors.hpp"
#include "rbcssl/eval.hpp"

namespace rbc {

Metrics compute_metrics(const std::vector<int>& y_true, const std::vector<int>& y_pred, std::size_t n_classes) {
  if (y_true.size() != y_pred.size())
    throw DimensionError("metrics: " + std::to_string(y_true.size()) + " labels vs " +
                         std::to_string(y_pred.size()) + " predictions");
  if (y_true.empty()) throw DimensionError("metrics need at least one label");
  std::vector<std::size_t> tp(n_classes, 0), support(n_classes, 0), predicted(n_classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const int t = y_true[i], p = y_pred[i];
    if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= n_classes || static_cast<std::size_t>(p) >= n_classes)
      throw DimensionError("metrics: class index out of range");
    ++support[t];
    ++predicted[p];
    if (t == p) {
      ++tp[t];
      ++correct;
    }
  }
  const double n = static_cast<double>(y_true.size());
  Metrics m;
  m.acc = static_cast<double>(correct) / n;
  double recall_sum = 0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (support[c] == 0) continue;
    ++present;
    const double recall = static_cast<double>(tp[c]) / static_cast<double>(support[c]);
    recall_sum += recall;
    const double precision = predicted[c] ? static_cast<double>(tp[c]) / static_cast<double>(predicted[c]) : 0.0;
    const double f1 = precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
    m.wf1 += static_cast<double>(support[c]) / n * f1;
  }
  m.bacc = recall_sum / static_cast<double>(present);
  return m;
}

Metrics compute_metrics(const std::vector<std::string>& y_true, const std::vector<std::string>& y_pred) {
  std::map<std::string, int> index;
  for (const auto* v : {&y_true, &y_pred})
    for (const auto& s : *v) index.emplace(s, 0);
  int next = 0;
  for (auto& [name, i] : index) i = next++;
  std::vector<int> t, p;
  for (const auto& s : y_true) t.push_back(index.at(s));
  for (const auto& s : y_pred) p.push_back(index.at(s));
  return compute_metrics(t, p, index.size());
}

}  // namespace rbc
