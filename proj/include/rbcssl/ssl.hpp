#pragma once

// Self-distillation objective: projection head, teacher centering (EMA,
// Sinkhorn-Knopp or none), cross-view distillation loss and the optional
// KoLeo spreading term.

#include <cstdint>
#include <string>
#include <vector>

#include "rbcssl/params.hpp"
#include "rbcssl/tensor.hpp"
#include "rbcssl/vit.hpp"

namespace rbc {

enum class CenteringMode { Ema, Sinkhorn, None };

CenteringMode parse_centering_mode(const std::string& name);
std::string to_string(CenteringMode mode);

struct SslConfig {
  std::size_t prototypes = 256;
  std::size_t head_hidden_dim = 2048;
  std::size_t head_bottleneck_dim = 256;
  double student_temp = 0.1;
  double teacher_temp = 0.04;
  CenteringMode centering = CenteringMode::Sinkhorn;
  double center_momentum = 0.9;
  std::size_t sinkhorn_iters = 3;
  bool koleo_enabled = false;
  double koleo_weight = 0.1;
  double koleo_eps = 1e-8;

  void validate() const;
};

/// Running center of teacher logits; only meaningful for EMA centering.
struct CenteringState {
  std::vector<double> center;  // empty until the first EMA update
};

/// MLP (hidden, hidden, bottleneck) with GELU, l2-normalized bottleneck, and a
/// bias-free prototype layer whose rows are kept at unit norm.
template <typename T>
class BasicDinoHead {
 public:
  BasicDinoHead(std::size_t in_dim, const SslConfig& cfg, std::uint64_t seed);
  explicit BasicDinoHead(ParameterSet<T> params);

  struct Output {
    BasicTensor<T> logits;      // [B, K]
    BasicTensor<T> bottleneck;  // [B, bottleneck], before normalization
  };
  Output forward(const BasicTensor<T>& features) const;

  /// Rescales every prototype row to unit l2 norm (outside the tape).
  void renormalize_prototypes();

  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }
  std::size_t prototypes() const { return params_.get("last_layer.weight").dim(0); }

 private:
  ParameterSet<T> params_;
};

using DinoHead = BasicDinoHead<float>;

template <typename T>
struct BasicSslNetwork {
  BasicVitEncoder<T> backbone;
  BasicDinoHead<T> head;
};

using SslNetwork = BasicSslNetwork<float>;

// ---------------------------------------------------------------------------
// Teacher targets. Inputs are teacher logits [B, K]; outputs carry no gradient.
// ---------------------------------------------------------------------------

template <typename T>
struct EmaTargets {
  BasicTensor<T> probs;
  CenteringState state;
};

/// P = softmax((logits - c) / tau_t); then c <- m·c + (1 - m)·mean_rows(logits).
template <typename T>
EmaTargets<T> teacher_targets_ema(const BasicTensor<T>& logits, const CenteringState& state,
                                  double teacher_temp, double center_momentum);

/// Sinkhorn-Knopp: Q = exp(logits / tau_t), then `iters` rounds of
/// (columns to sum B/K, rows to sum 1). Ends on the row step.
template <typename T>
BasicTensor<T> teacher_targets_sinkhorn(const BasicTensor<T>& logits, double teacher_temp,
                                        std::size_t iters);

/// Uncentered sharpened softmax (the collapse-prone baseline).
template <typename T>
BasicTensor<T> teacher_targets_plain(const BasicTensor<T>& logits, double teacher_temp);

/// Mean over ordered (teacher view, student view) pairs with different indices
/// of the batch-mean cross-entropy H(P_t, softmax(s / tau_s)). Teacher view i
/// and student view i are the same crop.
template <typename T>
BasicTensor<T> dino_loss(const std::vector<BasicTensor<T>>& student_logits,
                         const std::vector<BasicTensor<T>>& teacher_probs, double student_temp);

/// -(1/B) Σ_i log(min_{j≠i} ||ẑ_i - ẑ_j|| + eps) over l2-normalized rows ẑ.
template <typename T>
BasicTensor<T> koleo(const BasicTensor<T>& z, double eps);

/// Batch diagnostics of the teacher targets.
struct TeacherStats {
  double mean_assignment_entropy = 0;  // H(mean_b P_t[b, :])
  double max_marginal_deviation = 0;   // max_k |mean_b P_t[b, k] - 1/K| over views
};

template <typename T>
TeacherStats teacher_stats(const std::vector<BasicTensor<T>>& teacher_probs);

template <typename T>
struct LossResult {
  BasicTensor<T> total;  // differentiable w.r.t. the student only
  double dino = 0;
  double koleo = 0;
  CenteringState next_center;
  std::vector<BasicTensor<T>> teacher_probs;
  TeacherStats stats;
};

/// Full objective for one batch. `views` holds one [B, H, W, C] tensor per
/// crop; the first `global_views` are seen by the teacher. Student passes are
/// recorded on the active tape; teacher passes never are.
template <typename T>
LossResult<T> total_loss(const std::vector<BasicTensor<T>>& views, std::size_t global_views,
                         const BasicSslNetwork<T>& student, const BasicSslNetwork<T>& teacher,
                         const SslConfig& cfg, const CenteringState& centering);

}  // namespace rbc
