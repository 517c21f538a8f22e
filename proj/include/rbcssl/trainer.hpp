#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "rbcssl/checkpoint.hpp"
#include "rbcssl/image.hpp"
#include "rbcssl/pipeline.hpp"
#include "rbcssl/ssl.hpp"
#include "rbcssl/vit.hpp"

namespace rbc {

struct TrainConfig {
  std::size_t iterations = 300;
  std::size_t batch_size = 32;
  double base_lr = 1e-3;  // peak learning rate, reached at the end of warmup
  double final_lr = 1e-6;
  std::size_t warmup_iters = 30;
  double weight_decay = 0.04;
  double teacher_momentum_start = 0.992;
  double teacher_momentum_end = 1.0;
  std::uint64_t seed = 0;
  bool deterministic = true;

  void validate() const;
};

struct AdamWConstants {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
};

struct ScheduleValue {
  double lr = 0;
  double teacher_momentum = 0;
};

/// Linear warmup 0 -> base_lr, cosine base_lr -> final_lr; teacher momentum
/// follows a cosine from start to end over the whole run.
ScheduleValue schedule(std::size_t iter, const TrainConfig& cfg);

struct StepRecord {
  std::size_t iter = 0;
  double loss = 0;
  double lr = 0;
  double teacher_momentum = 0;
  TeacherStats teacher;
};

struct TrainState {
  SslNetwork student;
  SslNetwork teacher;
  ParameterSet<float> adam_m;  // keyed like student_parameter_names()
  ParameterSet<float> adam_v;
  CenteringState centering;
  std::size_t iteration = 0;
  std::vector<StepRecord> history;
};

/// Student initialized from `seed`; teacher starts as an exact copy.
TrainState init_train_state(const VitConfig& vit, const SslConfig& ssl, std::uint64_t seed);

/// t' = m·t + (1 - m)·s for every scalar.
void ema_update(ParameterSet<float>& teacher, const ParameterSet<float>& student, double momentum);

/// One optimization step on prepared views (one [B, H, W, 3] tensor per crop,
/// the first `global_views` shown to the teacher).
void train_step(TrainState& state, const std::vector<Tensor>& views, std::size_t global_views,
                const SslConfig& ssl, const TrainConfig& train);

/// Views for step `iter`: sample indices and per-sample crops are pure
/// functions of (seed, iter).
std::vector<Tensor> make_batch_views(const std::vector<FloatImage>& dataset, const CropSpec& crop,
                                     std::size_t batch_size, std::uint64_t seed, std::size_t iter);

struct TrainRun {
  VitConfig vit;
  SslConfig ssl;
  TrainConfig train;
  CropSpec crop;

  void validate() const;
};

/// Runs from `state.iteration` to `run.train.iterations`.
void run_training(TrainState& state, const std::vector<FloatImage>& dataset, const TrainRun& run,
                  const std::function<void(const StepRecord&)>& on_step = {});

/// Full resumable state: teacher/student backbones and heads, optimizer
/// moments, EMA center and the iteration counter.
Checkpoint to_checkpoint(const TrainState& state);
TrainState from_checkpoint(const Checkpoint& ckpt);

}  // namespace rbc
