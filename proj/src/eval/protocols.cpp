#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "rbcssl/errors.hpp"
#include "rbcssl/eval.hpp"
#include "rbcssl/log.hpp"
#include "rbcssl/rng.hpp"

namespace rbc {

AggregateRow aggregate(const std::string& group, const std::vector<Metrics>& values) {
  if (values.empty()) throw ProtocolError("aggregate over zero splits");
  AggregateRow row;
  row.group = group;
  row.count = values.size();
  const double n = static_cast<double>(values.size());
  for (const auto& m : values) {
    row.mean.acc += m.acc / n;
    row.mean.bacc += m.bacc / n;
    row.mean.wf1 += m.wf1 / n;
  }
  if (values.size() >= 2) {
    row.has_std = true;
    double sa = 0, sb = 0, sw = 0;
    for (const auto& m : values) {
      sa += (m.acc - row.mean.acc) * (m.acc - row.mean.acc);
      sb += (m.bacc - row.mean.bacc) * (m.bacc - row.mean.bacc);
      sw += (m.wf1 - row.mean.wf1) * (m.wf1 - row.mean.wf1);
    }
    row.std = {std::sqrt(sa / (n - 1)), std::sqrt(sb / (n - 1)), std::sqrt(sw / (n - 1))};
  }
  return row;
}

namespace {

// Evaluates independent splits (possibly concurrently); output order is the
// input order.
std::vector<SplitRecord> evaluate_splits(const EmbeddingSet& set,
                                         const std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>>& splits,
                                         const std::vector<std::pair<std::string, std::string>>& names,
                                         const ClassifierSpec& spec) {
  std::vector<SplitRecord> out(splits.size());
  std::vector<std::string> errors(splits.size());
  const long long n = static_cast<long long>(splits.size());
#pragma omp parallel for schedule(dynamic)
  for (long long i = 0; i < n; ++i) {
    const auto s = static_cast<std::size_t>(i);
    try {
      const EmbeddingSet train = set.subset(splits[s].first);
      const EmbeddingSet test = set.subset(splits[s].second);
      out[s] = {names[s].first, names[s].second, train.size(), test.size(), run_classifier(train, test, spec).metrics};
    } catch (const std::exception& e) {
      errors[s] = e.what();
    }
  }
  for (std::size_t s = 0; s < errors.size(); ++s)
    if (!errors[s].empty())
      throw ProtocolError("split " + names[s].first + " -> " + names[s].second + ": " + errors[s]);
  return out;
}

}  // namespace

EvalReport leave_one_source_out(const EmbeddingSet& set, const ClassifierSpec& spec) {
  set.validate();
  std::map<std::string, std::vector<std::size_t>> by_source;
  for (std::size_t i = 0; i < set.size(); ++i) by_source[set.records[i].source_id].push_back(i);
  if (by_source.size() < 2)
    throw ProtocolError("leave-one-source-out needs at least two sources, found " + std::to_string(by_source.size()));
  std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> splits;
  std::vector<std::pair<std::string, std::string>> names;
  for (const auto& [train_src, train_rows] : by_source)
    for (const auto& [test_src, test_rows] : by_source) {
      if (train_src == test_src) continue;
      splits.emplace_back(train_rows, test_rows);
      names.emplace_back(train_src, test_src);
    }
  EvalReport report;
  report.protocol = "loso";
  report.classifier = spec.name();
  report.splits = evaluate_splits(set, splits, names, spec);

  std::vector<Metrics> all;
  std::map<std::string, std::vector<Metrics>> per_train;
  for (const auto& s : report.splits) {
    all.push_back(s.metrics);
    per_train[s.train_sources].push_back(s.metrics);
  }
  report.aggregates.push_back(aggregate("all", all));
  std::vector<Metrics> source_means;
  for (const auto& [src, values] : per_train) {
    report.aggregates.push_back(aggregate("train=" + src, values));
    source_means.push_back(report.aggregates.back().mean);
  }
  report.aggregates.push_back(aggregate("source-means", source_means));
  return report;
}

std::vector<std::vector<std::size_t>> kfold_assignment(const std::vector<std::string>& labels, std::size_t k,
                                                       std::uint64_t seed) {
  if (k < 2) throw ParameterError("kfold needs k >= 2");
  if (labels.size() < k)
    throw ProtocolError("kfold with k=" + std::to_string(k) + " needs at least k rows, got " +
                        std::to_string(labels.size()));
  auto shuffle = [](std::vector<std::size_t>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[static_cast<std::size_t>(rng() % i)]);
  };
  std::map<std::string, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  bool stratified = true;
  for (const auto& [label, rows] : by_class)
    if (rows.size() < k) stratified = false;

  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t next = 0;
  if (stratified) {
    std::uint64_t class_index = 0;
    for (auto& [label, rows] : by_class) {
      Rng rng = make_rng(seed, {0xf01du, class_index++});
      shuffle(rows, rng);
      for (std::size_t r : rows) folds[next++ % k].push_back(r);
    }
  } else {
    log_warn("some class has fewer than " + std::to_string(k) + " rows; kfold is not stratified");
    std::vector<std::size_t> rows(labels.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    Rng rng = make_rng(seed, {0xf01du});
    shuffle(rows, rng);
    for (std::size_t r : rows) folds[next++ % k].push_back(r);
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

EvalReport kfold(const EmbeddingSet& set, std::size_t k, std::uint64_t seed, const ClassifierSpec& spec) {
  set.validate();
  std::vector<std::string> labels;
  for (const auto& r : set.records) labels.push_back(r.label);
  const auto folds = kfold_assignment(labels, k, seed);
  std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> splits;
  std::vector<std::pair<std::string, std::string>> names;
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<std::size_t> train;
    for (std::size_t g = 0; g < k; ++g)
      if (g != f) train.insert(train.end(), folds[g].begin(), folds[g].end());
    std::sort(train.begin(), train.end());
    splits.emplace_back(std::move(train), folds[f]);
    names.emplace_back("folds!=" + std::to_string(f), "fold" + std::to_string(f));
  }
  EvalReport report;
  report.protocol = "kfold" + std::to_string(k);
  report.classifier = spec.name();
  report.splits = evaluate_splits(set, splits, names, spec);
  std::vector<Metrics> all;
  for (const auto& s : report.splits) all.push_back(s.metrics);
  report.aggregates.push_back(aggregate("all", all));
  return report;
}

EvalReport holdout_report(const EmbeddingSet& train, const EmbeddingSet& test, const ClassifierSpec& spec) {
  if (test.size() == 0) throw ProtocolError("empty test set");
  EvalReport report;
  report.protocol = "holdout";
  report.classifier = spec.name();
  auto sources = [](const EmbeddingSet& s) {
    std::set<std::string> ids;
    for (const auto& r : s.records) ids.insert(r.source_id);
    std::string out;
    for (const auto& id : ids) out += (out.empty() ? "" : "+") + id;
    return out;
  };
  report.splits.push_back({sources(train), sources(test), train.size(), test.size(),
                           run_classifier(train, test, spec).metrics});
  report.aggregates.push_back(aggregate("all", {report.splits.front().metrics}));
  return report;
}

namespace {
std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}
}  // namespace

std::string format_report_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "kind,protocol,classifier,train,test,n_train,n_test,acc,bacc,wf1,acc_std,bacc_std,wf1_std\n";
  for (const auto& s : r.splits)
    os << "SPLIT," << r.protocol << ',' << r.classifier << ',' << s.train_sources << ',' << s.test_sources << ','
       << s.n_train << ',' << s.n_test << ',' << num(s.metrics.acc) << ',' << num(s.metrics.bacc) << ','
       << num(s.metrics.wf1) << ",,,\n";
  for (const auto& a : r.aggregates) {
    os << "AGGREGATE," << r.protocol << ',' << r.classifier << ',' << a.group << ",," << a.count << ",,"
       << num(a.mean.acc) << ',' << num(a.mean.bacc) << ',' << num(a.mean.wf1) << ',';
    if (a.has_std)
      os << num(a.std.acc) << ',' << num(a.std.bacc) << ',' << num(a.std.wf1);
    else
      os << ",,";
    os << '\n';
  }
  return os.str();
}

std::string format_report_text(const EvalReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1);
  os << "protocol " << r.protocol << ", classifier " << r.classifier << ", " << r.splits.size() << " split(s)\n";
  for (const auto& s : r.splits)
    os << "  " << s.train_sources << " -> " << s.test_sources << ": Acc " << 100 * s.metrics.acc << "  bAcc "
       << 100 * s.metrics.bacc << "  wF1 " << 100 * s.metrics.wf1 << '\n';
  for (const auto& a : r.aggregates) {
    os << "  [" << a.group << ", n=" << a.count << "] Acc " << 100 * a.mean.acc;
    if (a.has_std) os << " +/- " << 100 * a.std.acc;
    os << "  bAcc " << 100 * a.mean.bacc;
    if (a.has_std) os << " +/- " << 100 * a.std.bacc;
    os << "  wF1 " << 100 * a.mean.wf1;
    if (a.has_std) os << " +/- " << 100 * a.std.wf1;
    os << '\n';
  }
  return os.str();
}

}  // namespace rbc
