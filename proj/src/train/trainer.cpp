#include "rbcssl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "rbcssl/errors.hpp"

namespace rbc {

void TrainConfig::validate() const {
  if (batch_size < 2) throw ParameterError("train.batch_size must be >= 2");
  if (iterations > 0 && warmup_iters >= iterations)
    throw ParameterError("train.warmup_iters must be smaller than train.iterations");
  if (iterations >= (std::size_t{1} << 24)) throw ParameterError("train.iterations too large");
  if (!(base_lr >= 0) || !(final_lr >= 0)) throw ParameterError("learning rates must be >= 0");
  if (!(weight_decay >= 0)) throw ParameterError("train.weight_decay must be >= 0");
  for (double m : {teacher_momentum_start, teacher_momentum_end})
    if (!(m >= 0 && m <= 1)) throw ParameterError("teacher momentum must lie in [0, 1]");
}

ScheduleValue schedule(std::size_t iter, const TrainConfig& cfg) {
  if (iter >= cfg.iterations)
    throw ParameterError("schedule iteration " + std::to_string(iter) + " outside [0, " +
                         std::to_string(cfg.iterations) + ")");
  ScheduleValue v;
  const double last = static_cast<double>(cfg.iterations - 1);
  if (iter < cfg.warmup_iters) {
    v.lr = cfg.base_lr * static_cast<double>(iter) / static_cast<double>(cfg.warmup_iters);
  } else {
    const double span = last - static_cast<double>(cfg.warmup_iters);
    const double p = span > 0 ? (static_cast<double>(iter) - static_cast<double>(cfg.warmup_iters)) / span : 0.0;
    v.lr = cfg.final_lr + 0.5 * (cfg.base_lr - cfg.final_lr) * (1 + std::cos(std::numbers::pi * p));
  }
  const double q = last > 0 ? static_cast<double>(iter) / last : 1.0;
  v.teacher_momentum = cfg.teacher_momentum_end - (cfg.teacher_momentum_end - cfg.teacher_momentum_start) *
                                                      0.5 * (1 + std::cos(std::numbers::pi * q));
  return v;
}

namespace {

// Student parameters as one flat list: "backbone.<name>" then "head.<name>".
std::vector<std::pair<std::string, Tensor*>> flat_params(SslNetwork& net) {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (auto& [n, t] : net.backbone.params().entries()) out.emplace_back("backbone." + n, &t);
  for (auto& [n, t] : net.head.params().entries()) out.emplace_back("head." + n, &t);
  return out;
}

bool decayed(const std::string& name, const Tensor& t) {
  return t.rank() == 2 && name != "backbone.cls_token" && name != "backbone.pos_embed";
}

}  // namespace

TrainState init_train_state(const VitConfig& vit, const SslConfig& ssl, std::uint64_t seed) {
  vit.validate();
  ssl.validate();
  VitEncoder backbone(vit, seed);
  DinoHead head(vit.embed_dim, ssl, seed);
  TrainState st{SslNetwork{backbone, head},
                SslNetwork{VitEncoder(vit, backbone.params().clone()), DinoHead(head.params().clone())},
                {}, {}, {}, 0, {}};
  st.student.backbone.params().set_requires_grad(true);
  st.student.head.params().set_requires_grad(true);
  for (auto& [name, t] : flat_params(st.student)) {
    st.adam_m.add(name, Tensor::zeros(t->shape()));
    st.adam_v.add(name, Tensor::zeros(t->shape()));
  }
  return st;
}

void ema_update(ParameterSet<float>& teacher, const ParameterSet<float>& student, double momentum) {
  if (!(momentum >= 0 && momentum <= 1)) throw ParameterError("EMA momentum must lie in [0, 1]");
  if (teacher.size() != student.size()) throw DimensionError("teacher/student parameter count differs");
  const float m = static_cast<float>(momentum);
  const float one_minus = static_cast<float>(1.0 - momentum);
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    auto& t = teacher.entries()[i].second;
    const auto& s = student.entries()[i].second;
    if (t.shape() != s.shape())
      throw DimensionError("EMA shape mismatch at " + teacher.entries()[i].first);
    auto td = t.mutable_data();
    const auto sd = s.data();
    if (momentum == 1.0) continue;
    if (momentum == 0.0) {
      std::copy(sd.begin(), sd.end(), td.begin());
      continue;
    }
    for (std::size_t j = 0; j < td.size(); ++j) td[j] = m * td[j] + one_minus * sd[j];
  }
}

void train_step(TrainState& state, const std::vector<Tensor>& views, std::size_t global_views,
                const SslConfig& ssl, const TrainConfig& train) {
  if (views.empty() || views.front().dim(0) < 2)
    throw ProtocolError("a training batch needs at least two samples");
  const ScheduleValue sched = schedule(state.iteration, train);
  auto params = flat_params(state.student);
  for (auto& p : params) p.second->zero_grad();

  Tape tape;
  LossResult<float> loss;
  {
    TapeScope<float> scope(tape);
    loss = total_loss(views, global_views, state.student, state.teacher, ssl, state.centering);
  }
  tape.backward(loss.total);
  tape.clear();

  const double t = static_cast<double>(state.iteration + 1);
  const double bc1 = 1.0 - std::pow(AdamWConstants::kBeta1, t);
  const double bc2 = 1.0 - std::pow(AdamWConstants::kBeta2, t);
  const float b1 = static_cast<float>(AdamWConstants::kBeta1);
  const float b2 = static_cast<float>(AdamWConstants::kBeta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& [name, p] = params[i];
    const auto g = p->grad();
    for (float v : g)
      if (!std::isfinite(v)) throw NumericError("non-finite gradient in student parameter " + name);
    auto w = p->mutable_data();
    auto m = state.adam_m.entries()[i].second.mutable_data();
    auto v = state.adam_v.entries()[i].second.mutable_data();
    const double wd = decayed(name, *p) ? train.weight_decay : 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = b1 * m[j] + (1.0f - b1) * g[j];
      v[j] = b2 * v[j] + (1.0f - b2) * g[j] * g[j];
      const double mhat = m[j] / bc1, vhat = v[j] / bc2;
      w[j] = static_cast<float>(w[j] - sched.lr * (mhat / (std::sqrt(vhat) + AdamWConstants::kEps) + wd * w[j]));
    }
  }
  state.student.head.renormalize_prototypes();
  ema_update(state.teacher.backbone.params(), state.student.backbone.params(), sched.teacher_momentum);
  ema_update(state.teacher.head.params(), state.student.head.params(), sched.teacher_momentum);
  state.centering = loss.next_center;
  state.history.push_back({state.iteration, static_cast<double>(loss.total.item()), sched.lr,
                           sched.teacher_momentum, loss.stats});
  ++state.iteration;
}

std::vector<Tensor> make_batch_views(const std::vector<FloatImage>& dataset, const CropSpec& crop,
                                     std::size_t batch_size, std::uint64_t seed, std::size_t iter) {
  if (dataset.empty()) throw InputError("empty training dataset");
  Rng pick = make_rng(seed, {iter, 0xba7cu});
  std::vector<std::size_t> idx(batch_size);
  if (dataset.size() >= batch_size) {
    std::vector<std::size_t> perm(dataset.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = 0; i < batch_size; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(pick() % (perm.size() - i));
      std::swap(perm[i], perm[j]);
      idx[i] = perm[i];
    }
  } else {
    for (auto& i : idx) i = static_cast<std::size_t>(pick() % dataset.size());
  }
  const std::size_t n_views = crop.global_crops + crop.local_crops;
  std::vector<std::vector<FloatImage>> per_sample(batch_size);
  const long long n = static_cast<long long>(batch_size);
#pragma omp parallel for schedule(static)
  for (long long s = 0; s < n; ++s) {
    Rng rng = make_rng(seed, {iter, static_cast<std::uint64_t>(s), 0xa06u});
    per_sample[static_cast<std::size_t>(s)] = multicrop(dataset[idx[static_cast<std::size_t>(s)]], crop, rng);
  }
  std::vector<Tensor> views;
  for (std::size_t v = 0; v < n_views; ++v) {
    std::vector<FloatImage> column;
    column.reserve(batch_size);
    for (auto& sample : per_sample) column.push_back(std::move(sample[v]));
    views.push_back(pack_images(column));
  }
  return views;
}

void TrainRun::validate() const {
  vit.validate();
  ssl.validate();
  train.validate();
  crop.validate();
  if (crop.global_size != vit.image_size ||
      (crop.local_crops > 0 && crop.local_size != vit.image_size))
    throw ParameterError("crops must be rendered at the encoder resolution (" +
                         std::to_string(vit.image_size) + " px)");
}

void run_training(TrainState& state, const std::vector<FloatImage>& dataset, const TrainRun& run,
                  const std::function<void(const StepRecord&)>& on_step) {
  run.validate();
  while (state.iteration < run.train.iterations) {
    const auto views = make_batch_views(dataset, run.crop, run.train.batch_size, run.train.seed,
                                        state.iteration);
    train_step(state, views, run.crop.global_crops, run.ssl, run.train);
    if (on_step) on_step(state.history.back());
  }
}

Checkpoint to_checkpoint(const TrainState& state) {
  Checkpoint ck;
  ck.vit = state.teacher.backbone.config();
  ck.add_section("teacher.backbone.", state.teacher.backbone.params());
  ck.add_section("teacher.head.", state.teacher.head.params());
  ck.add_section("student.backbone.", state.student.backbone.params());
  ck.add_section("student.head.", state.student.head.params());
  ck.add_section("optim.m.", state.adam_m);
  ck.add_section("optim.v.", state.adam_v);
  if (!state.centering.center.empty()) {
    std::vector<float> c(state.centering.center.begin(), state.centering.center.end());
    ck.blobs.add("state.center", Tensor::from({c.size()}, std::move(c)));
  }
  ck.blobs.add("state.iteration", Tensor::from({1}, {static_cast<float>(state.iteration)}));
  return ck;
}

TrainState from_checkpoint(const Checkpoint& ck) {
  auto student_head = ck.section("student.head.");
  if (student_head.size() == 0) throw InputError("checkpoint holds no training state");
  TrainState st{SslNetwork{VitEncoder(ck.vit, ck.section("student.backbone.")), DinoHead(std::move(student_head))},
                SslNetwork{VitEncoder(ck.vit, ck.section("teacher.backbone.")), DinoHead(ck.section("teacher.head."))},
                ck.section("optim.m."), ck.section("optim.v."), {}, 0, {}};
  st.student.backbone.params().set_requires_grad(true);
  st.student.head.params().set_requires_grad(true);
  if (ck.blobs.contains("state.center")) {
    const auto c = ck.blobs.get("state.center").data();
    st.centering.center.assign(c.begin(), c.end());
  }
  st.iteration = static_cast<std::size_t>(ck.blobs.get("state.iteration").item());
  if (st.adam_m.size() != flat_params(st.student).size())
    throw InputError("checkpoint optimizer state does not match the network");
  return st;
}

}  // namespace rbc
