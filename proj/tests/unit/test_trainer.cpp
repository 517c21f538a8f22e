#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "rbcssl/errors.hpp"
#include "rbcssl/synthetic.hpp"
#include "rbcssl/trainer.hpp"

using namespace rbc;

namespace {

TrainRun tiny_run(std::size_t iterations) {
  TrainRun run;
  run.vit.image_size = 16;
  run.vit.patch_size = 8;
  run.vit.embed_dim = 16;
  run.vit.depth = 1;
  run.vit.heads = 2;
  run.vit.mlp_ratio = 2;
  run.ssl.prototypes = 8;
  run.ssl.head_hidden_dim = 16;
  run.ssl.head_bottleneck_dim = 8;
  run.train.iterations = iterations;
  run.train.batch_size = 4;
  run.train.warmup_iters = iterations > 1 ? 1 : 0;
  run.train.seed = 11;
  run.crop.global_size = run.crop.local_size = 16;
  return run;
}

std::vector<FloatImage> tiny_dataset(std::size_t n = 12, std::size_t size = 16) {
  SyntheticConfig sc;
  sc.n_images = n;
  sc.sources = 2;
  sc.image_size = size;
  std::vector<FloatImage> out;
  for (const auto& s : gen_synthetic(sc)) out.push_back(to_float(s.smear.image));
  return out;
}

TrainState trained(const TrainRun& run, const std::vector<FloatImage>& data) {
  TrainState st = init_train_state(run.vit, run.ssl, run.train.seed);
  run_training(st, data, run);
  return st;
}

bool same_values(const ParameterSet<float>& a, const ParameterSet<float>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto x = a.entries()[i].second.data();
    const auto y = b.entries()[i].second.data();
    if (!std::equal(x.begin(), x.end(), y.begin(), y.end())) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("schedule") {
  TrainConfig c;
  c.iterations = 100;
  c.warmup_iters = 10;
  c.base_lr = 1e-3;
  c.final_lr = 1e-6;
  c.teacher_momentum_start = 0.992;
  c.teacher_momentum_end = 1.0;

  SUBCASE("warmup starts at zero") { CHECK(schedule(0, c).lr == 0.0); }
  SUBCASE("warmup ends at the peak") { CHECK(schedule(10, c).lr == doctest::Approx(1e-3).epsilon(1e-12)); }
  SUBCASE("final iteration hits both endpoints") {
    const auto s = schedule(99, c);
    CHECK(std::abs(s.lr - 1e-6) < 1e-9);
    CHECK(std::abs(s.teacher_momentum - 1.0) < 1e-9);
    CHECK(schedule(0, c).teacher_momentum == doctest::Approx(0.992));
  }
  SUBCASE("warmup is linear and decay is monotone") {
    CHECK(schedule(5, c).lr == doctest::Approx(5e-4));
    for (std::size_t i = 11; i < 100; ++i) CHECK(schedule(i, c).lr <= schedule(i - 1, c).lr);
  }
  SUBCASE("out of range") { CHECK_THROWS_AS(schedule(100, c), ParameterError); }
  SUBCASE("validation") {
    TrainConfig bad = c;
    bad.warmup_iters = 100;
    CHECK_THROWS_AS(bad.validate(), ParameterError);
    bad = c;
    bad.teacher_momentum_end = 1.5;
    CHECK_THROWS_AS(bad.validate(), ParameterError);
  }
}

TEST_CASE("ema_update") {
  auto one = [](float v) {
    ParameterSet<float> p;
    p.add("w", Tensor::full({1}, v));
    return p;
  };
  SUBCASE("convex combination example") {
    auto t = one(2.0f);
    ema_update(t, one(4.0f), 0.9);
    CHECK(t.get("w").item() == doctest::Approx(2.2f));
  }
  SUBCASE("momentum one leaves the teacher unchanged") {
    auto t = one(2.0f);
    ema_update(t, one(4.0f), 1.0);
    CHECK(t.get("w").item() == 2.0f);
  }
  SUBCASE("momentum zero copies the student") {
    auto t = one(2.0f);
    ema_update(t, one(4.125f), 0.0);
    CHECK(t.get("w").item() == 4.125f);
  }
  SUBCASE("shape mismatch") {
    ParameterSet<float> t, s;
    t.add("w", Tensor::zeros({2}));
    s.add("w", Tensor::zeros({3}));
    CHECK_THROWS_AS(ema_update(t, s, 0.5), DimensionError);
  }
  SUBCASE("every scalar stays between teacher and student") {
    Rng rng = make_rng(3, {});
    for (int trial = 0; trial < 50; ++trial) {
      ParameterSet<float> t, s;
      t.add("w", Tensor::zeros({16}));
      s.add("w", Tensor::zeros({16}));
      for (auto& v : t.get("w").mutable_data()) v = static_cast<float>(uniform(rng, -5.0, 5.0));
      for (auto& v : s.get("w").mutable_data()) v = static_cast<float>(uniform(rng, -5.0, 5.0));
      const auto before = t.clone();
      ema_update(t, s, uniform(rng, 0.0, 1.0));
      for (std::size_t j = 0; j < 16; ++j) {
        const float a = before.get("w").data()[j], b = s.get("w").data()[j];
        const float x = t.get("w").data()[j];
        CHECK(x >= std::min(a, b));
        CHECK(x <= std::max(a, b));
      }
    }
  }
}

TEST_CASE("teacher starts as a copy of the student") {
  const auto run = tiny_run(1);
  const auto st = init_train_state(run.vit, run.ssl, 5);
  CHECK(same_values(st.teacher.backbone.params(), st.student.backbone.params()));
  CHECK(same_values(st.teacher.head.params(), st.student.head.params()));
}

TEST_CASE("training step contract") {
  const auto data = tiny_dataset();

  SUBCASE("identical seeds give bit-identical histories and checkpoints") {
    const auto run = tiny_run(10);
    const auto a = trained(run, data);
    const auto b = trained(run, data);
    REQUIRE(a.history.size() == 10);
    for (std::size_t i = 0; i < 10; ++i) CHECK(a.history[i].loss == b.history[i].loss);
    CHECK(encode_checkpoint(to_checkpoint(a)) == encode_checkpoint(to_checkpoint(b)));
  }

  SUBCASE("losses are finite and the iteration advances") {
    const auto st = trained(tiny_run(5), data);
    CHECK(st.iteration == 5);
    for (const auto& r : st.history) CHECK(std::isfinite(r.loss));
  }

  SUBCASE("a frozen teacher never changes and its outputs stay constant") {
    auto run = tiny_run(6);
    run.train.teacher_momentum_start = run.train.teacher_momentum_end = 1.0;
    TrainState st = init_train_state(run.vit, run.ssl, run.train.seed);
    const auto backbone0 = st.teacher.backbone.params().clone();
    const auto head0 = st.teacher.head.params().clone();
    const auto probe = make_batch_views(data, run.crop, 4, 99, 0)[0];
    std::vector<float> first;
    run_training(st, data, run, [&](const StepRecord&) {
      NoGradScope<float> ng;
      const auto out = st.teacher.head.forward(st.teacher.backbone.forward(probe)).logits;
      const auto v = out.data();
      if (first.empty()) first.assign(v.begin(), v.end());
      CHECK(std::equal(first.begin(), first.end(), v.begin(), v.end()));
    });
    CHECK(same_values(st.teacher.backbone.params(), backbone0));
    CHECK(same_values(st.teacher.head.params(), head0));
    CHECK_FALSE(same_values(st.student.backbone.params(), backbone0));
  }

  SUBCASE("prototype rows stay unit norm") {
    const auto st = trained(tiny_run(4), data);
    const auto& w = st.student.head.params().get("last_layer.weight");
    const std::size_t k = w.dim(0), d = w.dim(1);
    for (std::size_t r = 0; r < k; ++r) {
      double s = 0;
      for (std::size_t j = 0; j < d; ++j) s += double(w.data()[r * d + j]) * w.data()[r * d + j];
      CHECK(std::sqrt(s) == doctest::Approx(1.0).epsilon(1e-5));
    }
  }

  SUBCASE("zero iterations keeps the initialization") {
    const auto run = tiny_run(0);
    TrainConfig t = run.train;
    t.warmup_iters = 0;
    TrainRun r0 = run;
    r0.train = t;
    const auto st = trained(r0, data);
    const auto init = init_train_state(run.vit, run.ssl, run.train.seed);
    CHECK(st.history.empty());
    CHECK(encode_checkpoint(to_checkpoint(st)) == encode_checkpoint(to_checkpoint(init)));
  }

  SUBCASE("resuming from a checkpoint matches a straight run") {
    const auto run = tiny_run(8);
    const auto straight = trained(run, data);

    TrainRun first_leg = run;
    TrainState st = init_train_state(run.vit, run.ssl, run.train.seed);
    // Stop after three steps by running a prefix of the same schedule.
    std::size_t steps = 0;
    for (; steps < 3; ++steps) {
      const auto views = make_batch_views(data, run.crop, run.train.batch_size, run.train.seed, st.iteration);
      train_step(st, views, run.crop.global_crops, run.ssl, run.train);
    }
    TrainState resumed = from_checkpoint(decode_checkpoint(encode_checkpoint(to_checkpoint(st))));
    CHECK(resumed.iteration == 3);
    run_training(resumed, data, first_leg);
    CHECK(encode_checkpoint(to_checkpoint(resumed)) == encode_checkpoint(to_checkpoint(straight)));
    REQUIRE(resumed.history.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) CHECK(resumed.history[i].loss == straight.history[i + 3].loss);
  }

  SUBCASE("batch of one is rejected") {
    const auto run = tiny_run(2);
    TrainState st = init_train_state(run.vit, run.ssl, 1);
    const auto views = make_batch_views(data, run.crop, 1, 1, 0);
    CHECK_THROWS_AS(train_step(st, views, run.crop.global_crops, run.ssl, run.train), ProtocolError);
  }

  SUBCASE("non-finite values abort with a diagnostic") {
    const auto run = tiny_run(2);
    TrainState st = init_train_state(run.vit, run.ssl, 1);
    st.student.backbone.params().entries().front().second.mutable_data()[0] =
        std::numeric_limits<float>::quiet_NaN();
    const auto views = make_batch_views(data, run.crop, 4, 1, 0);
    try {
      train_step(st, views, run.crop.global_crops, run.ssl, run.train);
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      // The first tensor to go bad is named.
      CHECK(std::string(e.what()).find("non-finite value in encoder block 0 output") != std::string::npos);
    }
  }
}

TEST_CASE("batch views are a pure function of seed and iteration") {
  const auto data = tiny_dataset();
  const auto run = tiny_run(3);
  const auto a = make_batch_views(data, run.crop, 5, 7, 2);
  const auto b = make_batch_views(data, run.crop, 5, 7, 2);
  const auto c = make_batch_views(data, run.crop, 5, 7, 3);
  REQUIRE(a.size() == run.crop.global_crops + run.crop.local_crops);
  CHECK(a[0].dim(0) == 5);
  bool all_equal = true, differs = false;
  for (std::size_t v = 0; v < a.size(); ++v) {
    all_equal = all_equal && std::ranges::equal(a[v].data(), b[v].data());
    differs = differs || !std::ranges::equal(a[v].data(), c[v].data());
  }
  CHECK(all_equal);
  CHECK(differs);
}

TEST_CASE("training lowers the loss on the synthetic dataset") {
  // Desk configuration, 300 steps.
  TrainRun run;
  run.vit.image_size = 32;
  run.vit.patch_size = 8;
  run.vit.embed_dim = 64;
  run.vit.depth = 2;
  run.vit.heads = 4;
  run.ssl.prototypes = 64;
  run.ssl.head_hidden_dim = 256;
  run.ssl.head_bottleneck_dim = 64;
  run.train.iterations = 300;
  run.train.warmup_iters = 30;
  run.crop.global_size = run.crop.local_size = 32;
  SyntheticConfig sc;
  sc.n_images = 240;
  sc.sources = 2;
  std::vector<FloatImage> data;
  for (const auto& s : gen_synthetic(sc)) data.push_back(to_float(s.smear.image));
  const auto st = trained(run, data);
  double head = 0, tail = 0;
  for (std::size_t i = 0; i < 50; ++i) {
    head += st.history[i].loss;
    tail += st.history[250 + i].loss;
  }
  MESSAGE("first-50 mean " << head / 50 << ", last-50 mean " << tail / 50);
  CHECK(tail < head);
}
