#include "rbcssl/ssl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rbcssl/errors.hpp"
#include "rbcssl/rng.hpp"

namespace rbc {

CenteringMode parse_centering_mode(const std::string& name) {
  if (name == "ema") return CenteringMode::Ema;
  if (name == "sinkhorn") return CenteringMode::Sinkhorn;
  if (name == "none") return CenteringMode::None;
  throw ParameterError("unknown centering mode '" + name + "' (expected ema|sinkhorn|none)");
}

std::string to_string(CenteringMode mode) {
  switch (mode) {
    case CenteringMode::Ema: return "ema";
    case CenteringMode::Sinkhorn: return "sinkhorn";
    case CenteringMode::None: return "none";
  }
  return "?";
}

void SslConfig::validate() const {
  if (prototypes < 2) throw ParameterError("ssl.prototypes must be >= 2");
  if (head_hidden_dim == 0 || head_bottleneck_dim == 0)
    throw ParameterError("head dimensions must be positive");
  if (!(student_temp > 0) || !(teacher_temp > 0))
    throw ParameterError("temperatures must be positive");
  if (!(center_momentum >= 0 && center_momentum < 1))
    throw ParameterError("ssl.center_momentum must lie in [0, 1)");
  if (sinkhorn_iters < 1) throw ParameterError("ssl.sinkhorn_iters must be >= 1");
  if (!(koleo_weight >= 0)) throw ParameterError("ssl.koleo_weight must be >= 0");
  if (!(koleo_eps >= 0)) throw ParameterError("ssl.koleo_eps must be >= 0");
}

// ---------------------------------------------------------------------------

template <typename T>
BasicDinoHead<T>::BasicDinoHead(std::size_t in_dim, const SslConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng = make_rng(seed, {0x6865u});
  // Fan-in scaled so activations keep unit scale at any head width.
  auto weight = [&](std::size_t rows, std::size_t cols) {
    std::vector<T> v(rows * cols);
    const double sd = 1.0 / std::sqrt(static_cast<double>(rows));
    for (T& x : v) x = static_cast<T>(truncated_normal(rng, sd));
    return BasicTensor<T>::from({rows, cols}, std::move(v));
  };
  const std::size_t h = cfg.head_hidden_dim, b = cfg.head_bottleneck_dim;
  params_.add("mlp.0.weight", weight(in_dim, h));
  params_.add("mlp.0.bias", BasicTensor<T>::zeros({h}));
  params_.add("mlp.1.weight", weight(h, h));
  params_.add("mlp.1.bias", BasicTensor<T>::zeros({h}));
  params_.add("mlp.2.weight", weight(h, b));
  params_.add("mlp.2.bias", BasicTensor<T>::zeros({b}));
  params_.add("last_layer.weight", weight(cfg.prototypes, b));
  renormalize_prototypes();
}

template <typename T>
BasicDinoHead<T>::BasicDinoHead(ParameterSet<T> params) : params_(std::move(params)) {
  for (const char* name : {"mlp.0.weight", "mlp.0.bias", "mlp.1.weight", "mlp.1.bias",
                           "mlp.2.weight", "mlp.2.bias", "last_layer.weight"})
    if (!params_.contains(name)) throw DimensionError(std::string("missing head parameter ") + name);
}

template <typename T>
typename BasicDinoHead<T>::Output BasicDinoHead<T>::forward(const BasicTensor<T>& x) const {
  auto h = gelu(add(matmul(x, params_.get("mlp.0.weight")), params_.get("mlp.0.bias")));
  h = gelu(add(matmul(h, params_.get("mlp.1.weight")), params_.get("mlp.1.bias")));
  auto z = add(matmul(h, params_.get("mlp.2.weight")), params_.get("mlp.2.bias"));
  auto zn = l2_normalize(z, 1, static_cast<T>(kNormEps));
  auto logits = matmul(zn, transpose(params_.get("last_layer.weight")));
  return {logits, z};
}

template <typename T>
void BasicDinoHead<T>::renormalize_prototypes() {
  auto& w = params_.get("last_layer.weight");
  const std::size_t k = w.dim(0), d = w.dim(1);
  auto data = w.mutable_data();
  for (std::size_t r = 0; r < k; ++r) {
    T ss = 0;
    for (std::size_t j = 0; j < d; ++j) ss += data[r * d + j] * data[r * d + j];
    const T n = std::max(std::sqrt(ss), static_cast<T>(kNormEps));
    for (std::size_t j = 0; j < d; ++j) data[r * d + j] /= n;
  }
}

// ---------------------------------------------------------------------------

namespace {

template <typename T>
void require_logits(const BasicTensor<T>& logits) {
  if (logits.rank() != 2 || logits.dim(0) == 0 || logits.dim(1) == 0)
    throw DimensionError("teacher logits must be a non-empty [B, K] matrix, got " +
                         shape_str(logits.shape()));
  for (T v : logits.data())
    if (!std::isfinite(v)) throw NumericError("non-finite teacher logits");
}

template <typename T>
BasicTensor<T> to_tensor(std::size_t rows, std::size_t cols, const std::vector<double>& v) {
  return BasicTensor<T>::from({rows, cols}, std::vector<T>(v.begin(), v.end()));
}

void softmax_rows_inplace(std::vector<double>& q, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = q.data() + r * cols;
    const double mx = *std::max_element(row, row + cols);
    double s = 0;
    for (std::size_t j = 0; j < cols; ++j) s += (row[j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < cols; ++j) row[j] /= s;
  }
}

}  // namespace

template <typename T>
EmaTargets<T> teacher_targets_ema(const BasicTensor<T>& logits, const CenteringState& state,
                                  double teacher_temp, double center_momentum) {
  require_logits(logits);
  if (!(teacher_temp > 0)) throw ParameterError("teacher temperature must be positive");
  if (!(center_momentum >= 0 && center_momentum < 1))
    throw ParameterError("center momentum must lie in [0, 1)");
  const std::size_t b = logits.dim(0), k = logits.dim(1);
  std::vector<double> center = state.center.empty() ? std::vector<double>(k, 0.0) : state.center;
  if (center.size() != k) throw DimensionError("center has wrong length");
  const auto l = logits.data();
  std::vector<double> q(b * k);
  for (std::size_t r = 0; r < b; ++r)
    for (std::size_t j = 0; j < k; ++j) q[r * k + j] = (l[r * k + j] - center[j]) / teacher_temp;
  softmax_rows_inplace(q, b, k);

  EmaTargets<T> out{to_tensor<T>(b, k, q), {}};
  out.state.center.resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    double mu = 0;
    for (std::size_t r = 0; r < b; ++r) mu += l[r * k + j];
    mu /= static_cast<double>(b);
    out.state.center[j] = center_momentum * center[j] + (1.0 - center_momentum) * mu;
  }
  return out;
}

template <typename T>
BasicTensor<T> teacher_targets_sinkhorn(const BasicTensor<T>& logits, double teacher_temp,
                                        std::size_t iters) {
  require_logits(logits);
  if (!(teacher_temp > 0)) throw ParameterError("teacher temperature must be positive");
  if (iters < 1) throw ParameterError("sinkhorn needs at least one iteration");
  const std::size_t b = logits.dim(0), k = logits.dim(1);
  const auto l = logits.data();
  const double mx = *std::max_element(l.begin(), l.end());
  std::vector<double> q(b * k);
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = std::exp((l[i] - mx) / teacher_temp);

  const double col_target = static_cast<double>(b) / static_cast<double>(k);
  std::vector<double> col(k);
  for (std::size_t it = 0; it < iters; ++it) {
    std::fill(col.begin(), col.end(), 0.0);
    for (std::size_t r = 0; r < b; ++r)
      for (std::size_t j = 0; j < k; ++j) col[j] += q[r * k + j];
    for (std::size_t j = 0; j < k; ++j)
      if (col[j] > 0)
        for (std::size_t r = 0; r < b; ++r) q[r * k + j] *= col_target / col[j];
    for (std::size_t r = 0; r < b; ++r) {
      double s = 0;
      for (std::size_t j = 0; j < k; ++j) s += q[r * k + j];
      if (!(s > 0)) throw NumericError("sinkhorn row underflowed to zero");
      for (std::size_t j = 0; j < k; ++j) q[r * k + j] /= s;
    }
  }
  return to_tensor<T>(b, k, q);
}

template <typename T>
BasicTensor<T> teacher_targets_plain(const BasicTensor<T>& logits, double teacher_temp) {
  require_logits(logits);
  if (!(teacher_temp > 0)) throw ParameterError("teacher temperature must be positive");
  const std::size_t b = logits.dim(0), k = logits.dim(1);
  std::vector<double> q(logits.data().begin(), logits.data().end());
  for (double& v : q) v /= teacher_temp;
  softmax_rows_inplace(q, b, k);
  return to_tensor<T>(b, k, q);
}

template <typename T>
BasicTensor<T> dino_loss(const std::vector<BasicTensor<T>>& student_logits,
                         const std::vector<BasicTensor<T>>& teacher_probs, double student_temp) {
  if (teacher_probs.size() < 2)
    throw ProtocolError("distillation needs at least two teacher views to form a cross-view pair");
  if (student_logits.size() < teacher_probs.size())
    throw ProtocolError("student must see every teacher view");
  const auto& ref = teacher_probs.front().shape();
  for (const auto& t : teacher_probs)
    if (t.shape() != ref) throw DimensionError("teacher views differ in shape");
  for (const auto& s : student_logits)
    if (s.shape() != ref)
      throw DimensionError("student logits " + shape_str(s.shape()) + " vs teacher " +
                           shape_str(ref));
  const T neg_inv_batch = T(-1) / static_cast<T>(ref.at(0));

  std::vector<BasicTensor<T>> log_probs;
  log_probs.reserve(student_logits.size());
  for (const auto& s : student_logits)
    log_probs.push_back(log_softmax(s, 1, static_cast<T>(student_temp)));

  BasicTensor<T> total;
  std::size_t pairs = 0;
  for (std::size_t t = 0; t < teacher_probs.size(); ++t)
    for (std::size_t s = 0; s < log_probs.size(); ++s) {
      if (s == t) continue;
      auto term = scale(sum(mul(log_probs[s], teacher_probs[t])), neg_inv_batch);
      total = total.defined() ? add(total, term) : term;
      ++pairs;
    }
  return scale(total, T(1) / static_cast<T>(pairs));
}

template <typename T>
BasicTensor<T> koleo(const BasicTensor<T>& z, double eps) {
  if (z.rank() != 2) throw DimensionError("koleo expects [B, d] features");
  const std::size_t b = z.dim(0), d = z.dim(1);
  if (b < 2) throw ProtocolError("koleo needs at least two samples");
  auto zn = l2_normalize(z, 1, static_cast<T>(kNormEps));
  // Nearest neighbour by cosine similarity; the index choice is not differentiated.
  const auto v = zn.data();
  std::vector<std::size_t> nearest(b);
  for (std::size_t i = 0; i < b; ++i) {
    T best = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < b; ++j) {
      if (j == i) continue;
      T dot = 0;
      for (std::size_t c = 0; c < d; ++c) dot += v[i * d + c] * v[j * d + c];
      if (dot > best) {
        best = dot;
        nearest[i] = j;
      }
    }
  }
  auto dist = norm(sub(zn, gather_rows(zn, nearest)), 1);
  auto shifted = add(dist, BasicTensor<T>::full({b}, static_cast<T>(eps)));
  return scale(mean(log(shifted)), T(-1));
}

template <typename T>
TeacherStats teacher_stats(const std::vector<BasicTensor<T>>& teacher_probs) {
  TeacherStats st;
  if (teacher_probs.empty()) return st;
  const std::size_t k = teacher_probs.front().dim(1);
  std::vector<double> overall(k, 0.0);
  std::size_t rows_total = 0;
  for (const auto& p : teacher_probs) {
    const std::size_t b = p.dim(0);
    std::vector<double> col(k, 0.0);
    const auto d = p.data();
    for (std::size_t r = 0; r < b; ++r)
      for (std::size_t j = 0; j < k; ++j) col[j] += d[r * k + j];
    for (std::size_t j = 0; j < k; ++j) {
      overall[j] += col[j];
      st.max_marginal_deviation = std::max(
          st.max_marginal_deviation, std::abs(col[j] / static_cast<double>(b) - 1.0 / static_cast<double>(k)));
    }
    rows_total += b;
  }
  for (double m : overall) {
    const double p = m / static_cast<double>(rows_total);
    if (p > 0) st.mean_assignment_entropy -= p * std::log(p);
  }
  return st;
}

template <typename T>
LossResult<T> total_loss(const std::vector<BasicTensor<T>>& views, std::size_t global_views,
                         const BasicSslNetwork<T>& student, const BasicSslNetwork<T>& teacher,
                         const SslConfig& cfg, const CenteringState& centering) {
  if (global_views < 2) throw ProtocolError("need at least two global views");
  if (views.size() < global_views) throw ProtocolError("fewer views than global views");
  const std::size_t b = views.front().dim(0);
  for (const auto& v : views)
    if (v.shape() != views.front().shape())
      throw DimensionError("all views must share one resolution, got " + shape_str(v.shape()) +
                           " and " + shape_str(views.front().shape()));

  LossResult<T> out;
  out.next_center = centering;
  {
    NoGradScope<T> no_grad;
    const std::vector<BasicTensor<T>> global(views.begin(),
                                             views.begin() + static_cast<std::ptrdiff_t>(global_views));
    const auto t_logits = teacher.head.forward(teacher.backbone.forward(concat(global, 0))).logits;
    for (std::size_t v = 0; v < global_views; ++v) {
      const auto lv = slice(t_logits, 0, v * b, (v + 1) * b);
      switch (cfg.centering) {
        case CenteringMode::Sinkhorn:
          out.teacher_probs.push_back(
              teacher_targets_sinkhorn(lv, cfg.teacher_temp, cfg.sinkhorn_iters));
          break;
        case CenteringMode::None:
          out.teacher_probs.push_back(teacher_targets_plain(lv, cfg.teacher_temp));
          break;
        case CenteringMode::Ema:
          // Every teacher view is centered with the pre-step center.
          out.teacher_probs.push_back(
              teacher_targets_ema(lv, centering, cfg.teacher_temp, cfg.center_momentum).probs);
          break;
      }
    }
    if (cfg.centering == CenteringMode::Ema)
      out.next_center =
          teacher_targets_ema(t_logits, centering, cfg.teacher_temp, cfg.center_momentum).state;
  }
  out.stats = teacher_stats(out.teacher_probs);

  const auto s_out = student.head.forward(student.backbone.forward(concat(views, 0)));
  std::vector<BasicTensor<T>> s_logits;
  for (std::size_t v = 0; v < views.size(); ++v)
    s_logits.push_back(slice(s_out.logits, 0, v * b, (v + 1) * b));
  out.total = dino_loss(s_logits, out.teacher_probs, cfg.student_temp);
  out.dino = static_cast<double>(out.total.item());
  if (cfg.koleo_enabled) {
    BasicTensor<T> reg;
    for (std::size_t v = 0; v < global_views; ++v) {
      auto term = koleo(slice(s_out.bottleneck, 0, v * b, (v + 1) * b), cfg.koleo_eps);
      reg = reg.defined() ? add(reg, term) : term;
    }
    out.koleo = static_cast<double>(reg.item());
    out.total = add(out.total, scale(reg, static_cast<T>(cfg.koleo_weight)));
  }
  check_finite(out.total, "total loss");
  return out;
}

#define RBC_INSTANTIATE(T)                                                                     \
  template class BasicDinoHead<T>;                                                             \
  template EmaTargets<T> teacher_targets_ema(const BasicTensor<T>&, const CenteringState&,     \
                                             double, double);                                  \
  template BasicTensor<T> teacher_targets_sinkhorn(const BasicTensor<T>&, double, std::size_t); \
  template BasicTensor<T> teacher_targets_plain(const BasicTensor<T>&, double);                \
  template BasicTensor<T> dino_loss(const std::vector<BasicTensor<T>>&,                        \
                                    const std::vector<BasicTensor<T>>&, double);               \
  template BasicTensor<T> koleo(const BasicTensor<T>&, double);                                \
  template TeacherStats teacher_stats(const std::vector<BasicTensor<T>>&);                     \
  template LossResult<T> total_loss(const std::vector<BasicTensor<T>>&, std::size_t,           \
                                    const BasicSslNetwork<T>&, const BasicSslNetwork<T>&,      \
                                    const SslConfig&, const CenteringState&);

RBC_INSTANTIATE(float)
RBC_INSTANTIATE(double)

}  // namespace rbc
