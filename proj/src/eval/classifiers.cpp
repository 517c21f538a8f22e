#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "rbcssl/errors.hpp"
#include "rbcssl/eval.hpp"
#include "rbcssl/log.hpp"

namespace rbc {

KnnDistance parse_knn_distance(const std::string& text) {
  if (text == "cosine") return KnnDistance::Cosine;
  if (text == "euclidean") return KnnDistance::Euclidean;
  throw ParameterError("unknown k-NN distance '" + text + "' (expected cosine or euclidean)");
}

std::string to_string(KnnDistance d) { return d == KnnDistance::Cosine ? "cosine" : "euclidean"; }

std::string ClassifierSpec::name() const {
  if (kind == Kind::Knn) return std::to_string(knn.k) + "-NN/" + to_string(knn.distance);
  return "linear";
}

namespace {

std::vector<std::string> labels_of(const EmbeddingSet& s) {
  std::vector<std::string> out;
  out.reserve(s.size());
  for (const auto& r : s.records) out.push_back(r.label);
  return out;
}

void warn_unseen(const EmbeddingSet& train, const EmbeddingSet& test) {
  std::set<std::string> known;
  for (const auto& r : train.records) known.insert(r.label);
  std::set<std::string> unseen;
  for (const auto& r : test.records)
    if (!known.count(r.label)) unseen.insert(r.label);
  for (const auto& u : unseen) log_warn("test class '" + u + "' is absent from the training set");
}

void check_pair(const EmbeddingSet& train, const EmbeddingSet& test) {
  train.validate();
  test.validate();
  if (train.size() == 0) throw ProtocolError("empty training set");
  if (test.size() > 0 && train.dim != test.dim)
    throw DimensionError("train dim " + std::to_string(train.dim) + " != test dim " + std::to_string(test.dim));
}

Predictions finish(const EmbeddingSet& test, std::vector<std::string> predicted) {
  Predictions p;
  p.predicted = std::move(predicted);
  if (test.size() > 0) p.metrics = compute_metrics(labels_of(test), p.predicted);
  return p;
}

std::vector<double> normalized_rows(const EmbeddingSet& s) {
  std::vector<double> out(s.data.begin(), s.data.end());
  for (std::size_t i = 0; i < s.size(); ++i) {
    double ss = 0;
    for (std::size_t j = 0; j < s.dim; ++j) ss += out[i * s.dim + j] * out[i * s.dim + j];
    const double inv = ss > 0 ? 1.0 / std::sqrt(ss) : 0.0;
    for (std::size_t j = 0; j < s.dim; ++j) out[i * s.dim + j] *= inv;
  }
  return out;
}

}  // namespace

Predictions knn_classify(const EmbeddingSet& train, const EmbeddingSet& test, const KnnOptions& opt) {
  check_pair(train, test);
  if (opt.k < 1 || opt.k > train.size())
    throw ParameterError("k=" + std::to_string(opt.k) + " must lie in [1, " + std::to_string(train.size()) + "]");
  warn_unseen(train, test);
  const std::size_t d = train.dim;
  const bool cosine = opt.distance == KnnDistance::Cosine;
  const std::vector<double> a = cosine ? normalized_rows(train) : std::vector<double>(train.data.begin(), train.data.end());
  const std::vector<double> b = cosine ? normalized_rows(test) : std::vector<double>(test.data.begin(), test.data.end());

  std::vector<std::string> predicted(test.size());
  const long long nt = static_cast<long long>(test.size());
#pragma omp parallel for schedule(static)
  for (long long qi = 0; qi < nt; ++qi) {
    const std::size_t q = static_cast<std::size_t>(qi);
    std::vector<std::pair<double, std::size_t>> dist(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
      double acc = 0;
      if (cosine) {
        for (std::size_t j = 0; j < d; ++j) acc += a[i * d + j] * b[q * d + j];
        acc = 1.0 - acc;
      } else {
        for (std::size_t j = 0; j < d; ++j) {
          const double diff = a[i * d + j] - b[q * d + j];
          acc += diff * diff;
        }
        acc = std::sqrt(acc);
      }
      dist[i] = {acc, i};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(opt.k), dist.end());
    std::map<std::string, std::pair<std::size_t, double>> votes;  // class -> (count, summed distance)
    for (std::size_t r = 0; r < opt.k; ++r) {
      auto& v = votes[train.records[dist[r].second].label];
      ++v.first;
      v.second += dist[r].first;
    }
    const std::string* best = nullptr;
    std::pair<std::size_t, double> best_v{0, 0};
    for (const auto& [label, v] : votes) {  // map order gives the lexicographic fallback
      if (!best || v.first > best_v.first || (v.first == best_v.first && v.second < best_v.second)) {
        best = &label;
        best_v = v;
      }
    }
    predicted[q] = *best;
  }
  return finish(test, std::move(predicted));
}

Predictions linear_probe(const EmbeddingSet& train, const EmbeddingSet& test, const LinearProbeOptions& opt) {
  check_pair(train, test);
  if (!(opt.lambda >= 0)) throw ParameterError("linear probe lambda must be >= 0");
  if (!(opt.tol > 0)) throw ParameterError("linear probe tol must be > 0");
  std::vector<std::string> classes;
  {
    std::set<std::string> s;
    for (const auto& r : train.records) s.insert(r.label);
    classes.assign(s.begin(), s.end());
  }
  if (classes.size() < 2) throw ProtocolError("linear probe needs at least two training classes");
  warn_unseen(train, test);

  using Mat = Eigen::MatrixXd;
  using Vec = Eigen::VectorXd;
  const auto n = static_cast<Eigen::Index>(train.size());
  const auto d = static_cast<Eigen::Index>(train.dim);
  const auto c = static_cast<Eigen::Index>(classes.size());
  auto load = [&](const EmbeddingSet& s) {
    Mat m(static_cast<Eigen::Index>(s.size()), d);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < d; ++j) m(i, j) = s.data[static_cast<std::size_t>(i * d + j)];
    return m;
  };
  Mat x = load(train);
  const Eigen::RowVectorXd mu = x.colwise().mean();
  Eigen::RowVectorXd sd = ((x.rowwise() - mu).array().square().colwise().sum() / static_cast<double>(n)).sqrt();
  for (Eigen::Index j = 0; j < d; ++j)
    if (!(sd(j) > 1e-12)) sd(j) = 1.0;
  auto standardize = [&](Mat m) {
    m.rowwise() -= mu;
    m.array().rowwise() /= sd.array();
    return m;
  };
  x = standardize(std::move(x));
  Mat y = Mat::Zero(n, c);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto it = std::lower_bound(classes.begin(), classes.end(), train.records[static_cast<std::size_t>(i)].label);
    y(i, it - classes.begin()) = 1.0;
  }

  const double lambda = opt.lambda;
  // Objective: mean cross-entropy + lambda/2 * ||W||^2 (bias unpenalized).
  auto objective = [&](const Mat& w, const Vec& b, Mat* grad_w, Vec* grad_b) {
    Mat z = x * w.transpose();
    z.rowwise() += b.transpose();
    const Vec zmax = z.rowwise().maxCoeff();
    z.colwise() -= zmax;
    const Vec lse = z.array().exp().rowwise().sum().log();
    double f = -((z.array() * y.array()).rowwise().sum() - lse.array()).sum() / static_cast<double>(n);
    f += 0.5 * lambda * w.squaredNorm();
    if (grad_w) {
      Mat p = (z.colwise() - lse).array().exp();
      const Mat r = (p - y) / static_cast<double>(n);
      *grad_w = r.transpose() * x + lambda * w;
      *grad_b = r.colwise().sum().transpose();
    }
    return f;
  };

  Mat w = Mat::Zero(c, d);
  Vec b = Vec::Zero(c);
  Mat gw;
  Vec gb;
  double f = objective(w, b, &gw, &gb);
  double step = 1.0;
  for (std::size_t epoch = 0; epoch < opt.max_epochs; ++epoch) {
    const double g2 = gw.squaredNorm() + gb.squaredNorm();
    if (std::sqrt(g2) < opt.tol) break;
    step = std::min(step * 2.0, 1e6);
    Mat w_new;
    Vec b_new;
    double f_new = f;
    bool accepted = false;
    while (step > 1e-30) {
      w_new = w - step * gw;
      b_new = b - step * gb;
      f_new = objective(w_new, b_new, nullptr, nullptr);
      if (std::isfinite(f_new) && f_new <= f - 0.5 * step * g2) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    w = std::move(w_new);
    b = std::move(b_new);
    f = objective(w, b, &gw, &gb);
  }

  std::vector<std::string> predicted(test.size());
  if (test.size() > 0) {
    const Mat xt = standardize(load(test));
    Mat z = xt * w.transpose();
    z.rowwise() += b.transpose();
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      Eigen::Index arg = 0;
      z.row(i).maxCoeff(&arg);
      predicted[static_cast<std::size_t>(i)] = classes[static_cast<std::size_t>(arg)];
    }
  }
  return finish(test, std::move(predicted));
}

Predictions run_classifier(const EmbeddingSet& train, const EmbeddingSet& test, const ClassifierSpec& spec) {
  return spec.kind == ClassifierSpec::Kind::Knn ? knn_classify(train, test, spec.knn)
                                                : linear_probe(train, test, spec.linear);
}

}  // namespace rbc
