#include <doctest.h>

#include <cmath>
#include <numbers>

#include "gradcheck.hpp"
#include "gradient_suites.hpp"
#include "rbcssl/errors.hpp"
#include "rbcssl/ssl.hpp"
#include "rbcssl/vit.hpp"

using namespace rbc;
using rbc::testing::random_tensor;
using rbc::testing::tiny_ssl;
using rbc::testing::make_loss_fixture;

namespace {

// Independent Sinkhorn oracle: plain loops, no max shift.
std::vector<double> sinkhorn_oracle(const std::vector<double>& logits, std::size_t b, std::size_t k, double tau,
                                    std::size_t iters) {
  std::vector<double> q(logits.size());
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = std::exp(logits[i] / tau);
  for (std::size_t it = 0; it < iters; ++it) {
    for (std::size_t j = 0; j < k; ++j) {
      double c = 0;
      for (std::size_t r = 0; r < b; ++r) c += q[r * k + j];
      for (std::size_t r = 0; r < b; ++r) q[r * k + j] *= (double(b) / double(k)) / c;
    }
    for (std::size_t r = 0; r < b; ++r) {
      double s = 0;
      for (std::size_t j = 0; j < k; ++j) s += q[r * k + j];
      for (std::size_t j = 0; j < k; ++j) q[r * k + j] /= s;
    }
  }
  return q;
}

}  // namespace

TEST_CASE("EMA targets") {
  SUBCASE("equal logits give a uniform distribution") {
    auto p = teacher_targets_ema(Tensor64::full({3, 4}, 0.7), {}, 0.04, 0.9).probs;
    for (double v : p.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
  }
  SUBCASE("K=2 worked example") {
    auto p = teacher_targets_ema(Tensor64::from({1, 2}, {0.0, std::log(2.0)}), {}, 1.0, 0.9).probs;
    CHECK(p.at({0, 0}) == doctest::Approx(1.0 / 3).epsilon(1e-12));
    CHECK(p.at({0, 1}) == doctest::Approx(2.0 / 3).epsilon(1e-12));
  }
  SUBCASE("center update is 0.1 of the batch mean from a zero center") {
    auto r = teacher_targets_ema(Tensor64::from({2, 2}, {1.0, 2.0, 3.0, 6.0}), {}, 0.1, 0.9);
    CHECK(r.state.center[0] == doctest::Approx(0.2));
    CHECK(r.state.center[1] == doctest::Approx(0.4));
  }
  SUBCASE("center update is a convex combination and rows are distributions") {
    Rng rng = make_rng(3);
    CenteringState st{{0.5, -1.0, 2.0}};
    auto logits = random_tensor(rng, {5, 3}, 2.0);
    auto r = teacher_targets_ema(logits, st, 0.2, 0.7);
    for (std::size_t j = 0; j < 3; ++j) {
      double mu = 0;
      for (std::size_t i = 0; i < 5; ++i) mu += logits.at({i, j}) / 5;
      CHECK(r.state.center[j] >= std::min(mu, st.center[j]) - 1e-15);
      CHECK(r.state.center[j] <= std::max(mu, st.center[j]) + 1e-15);
    }
    for (std::size_t i = 0; i < 5; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 3; ++j) s += r.probs.at({i, j});
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(teacher_targets_ema(Tensor64::from({1, 2}, {0.0, NAN}), {}, 1.0, 0.9), NumericError);
  CHECK_THROWS_AS(teacher_targets_ema(Tensor64::zeros({1, 2}), {}, 1.0, 1.0), ParameterError);
}

TEST_CASE("Sinkhorn targets") {
  SUBCASE("2x2 worked example against the naive oracle") {
    const std::vector<double> l = {10, 0, 0, 10};
    auto p = teacher_targets_sinkhorn(Tensor64::from({2, 2}, l), 1.0, 3);
    const auto q = sinkhorn_oracle(l, 2, 2, 1.0, 3);
    for (std::size_t i = 0; i < 4; ++i) CHECK(p.data()[i] == doctest::Approx(q[i]).epsilon(1e-12));
    CHECK(p.at({0, 0}) == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(p.at({1, 1}) == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(p.at({0, 0}) + p.at({1, 0}) == doctest::Approx(1.0).epsilon(1e-4));
  }
  SUBCASE("random inputs match the oracle") {
    Rng rng = make_rng(11);
    for (int c = 0; c < 10; ++c) {
      auto l = random_tensor(rng, {7, 5});
      const std::vector<double> lv(l.data().begin(), l.data().end());
      auto p = teacher_targets_sinkhorn(l, 0.5, 4);
      const auto q = sinkhorn_oracle(lv, 7, 5, 0.5, 4);
      for (std::size_t i = 0; i < q.size(); ++i) CHECK(p.data()[i] == doctest::Approx(q[i]).epsilon(1e-10));
    }
  }
  SUBCASE("uniform logits are a fixed point") {
    for (std::size_t iters : {1u, 3u, 10u}) {
      auto p = teacher_targets_sinkhorn(Tensor64::full({4, 8}, -3.0), 0.04, iters);
      for (double v : p.data()) CHECK(v == 0.125);
    }
  }
  SUBCASE("large logits do not overflow") {
    auto p = teacher_targets_sinkhorn(Tensor64::from({2, 2}, {1000, 0, 0, 1000}), 0.04, 3);
    for (double v : p.data()) CHECK(std::isfinite(v));
  }
  CHECK_THROWS_AS(teacher_targets_sinkhorn(Tensor64::zeros({2, 2}), 1.0, 0), ParameterError);
}

TEST_CASE("plain targets are a sharpened softmax") {
  auto p = teacher_targets_plain(Tensor64::from({1, 2}, {0.0, 0.04 * std::log(3.0)}), 0.04);
  CHECK(p.at({0, 1}) == doctest::Approx(0.75));
}

TEST_CASE("distillation loss") {
  SUBCASE("one-hot teacher vs uniform student is ln K") {
    auto t = Tensor64::from({1, 4}, {1, 0, 0, 0});
    auto s = Tensor64::zeros({1, 4});
    CHECK(dino_loss<double>({s, s}, {t, t}, 0.1).item() == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  }
  SUBCASE("student equal to teacher gives the teacher entropy") {
    const double tau = 0.1;
    std::vector<double> p = {0.2, 0.5, 0.3};
    std::vector<double> logits;
    for (double v : p) logits.push_back(tau * std::log(v));
    double h = 0;
    for (double v : p) h -= v * std::log(v);
    auto t = Tensor64::from({1, 3}, p);
    auto s = Tensor64::from({1, 3}, logits);
    CHECK(dino_loss<double>({s, s}, {t, t}, tau).item() == doctest::Approx(h).epsilon(1e-12));
  }
  SUBCASE("two global views average exactly two ordered pairs") {
    Rng rng = make_rng(4);
    auto s0 = random_tensor(rng, {3, 4}), s1 = random_tensor(rng, {3, 4});
    auto t0 = softmax(random_tensor(rng, {3, 4}), 1), t1 = softmax(random_tensor(rng, {3, 4}), 1);
    auto ce = [](const Tensor64& t, const Tensor64& s) {
      double tot = 0;
      auto ls = log_softmax(s, 1, 0.1);
      for (std::size_t i = 0; i < t.numel(); ++i) tot -= t.data()[i] * ls.data()[i];
      return tot / 3;
    };
    const double expected = 0.5 * (ce(t0, s1) + ce(t1, s0));
    CHECK(dino_loss<double>({s0, s1}, {t0, t1}, 0.1).item() == doctest::Approx(expected).epsilon(1e-12));
  }
  CHECK_THROWS_AS(dino_loss<double>({Tensor64::zeros({1, 2})}, {Tensor64::zeros({1, 2})}, 0.1), ProtocolError);
}

TEST_CASE("KoLeo") {
  SUBCASE("antipodal pair is -log 2") {
    CHECK(koleo(Tensor64::from({2, 2}, {1, 0, -1, 0}), 0.0).item() ==
          doctest::Approx(-std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("duplicates stay finite") {
    const double v = koleo(Tensor64::from({2, 2}, {1, 1, 1, 1}), 1e-8).item();
    CHECK(std::isfinite(v));
    CHECK(v == doctest::Approx(-std::log(1e-8)).epsilon(1e-6));
  }
  SUBCASE("invariant to positive scaling and rotation") {
    Rng rng = make_rng(8);
    auto z = random_tensor(rng, {6, 2});
    const double base = koleo(z, 1e-8).item();
    CHECK(koleo(scale(z, 5.0), 1e-8).item() == doctest::Approx(base).epsilon(1e-12));
    const double a = 0.7;
    auto rot = Tensor64::from({2, 2}, {std::cos(a), std::sin(a), -std::sin(a), std::cos(a)});
    CHECK(koleo(matmul(z, rot), 1e-8).item() == doctest::Approx(base).epsilon(1e-10));
  }
  CHECK_THROWS_AS(koleo(Tensor64::zeros({1, 3}), 1e-8), ProtocolError);
}

TEST_CASE("head keeps unit prototype rows and stores them [K, bottleneck]") {
  BasicDinoHead<double> head(8, tiny_ssl(), 3);
  auto& w = head.params().get("last_layer.weight");
  CHECK(w.shape() == Shape{6, 5});
  for (auto& v : w.mutable_data()) v *= 3;
  head.renormalize_prototypes();
  for (std::size_t r = 0; r < 6; ++r) {
    double ss = 0;
    for (std::size_t j = 0; j < 5; ++j) ss += w.at({r, j}) * w.at({r, j});
    CHECK(ss == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("total loss composition") {
  SslConfig ssl = tiny_ssl();
  auto fx = make_loss_fixture(1, ssl);
  auto plain = total_loss(fx.views, 2, fx.student, fx.teacher, ssl, {});
  CHECK(plain.total.item() == plain.dino);

  SUBCASE("KoLeo with zero weight leaves the total and gradients unchanged") {
    SslConfig on = ssl;
    on.koleo_enabled = true;
    on.koleo_weight = 0.0;
    auto grads = [&](const SslConfig& cfg) {
      fx.student.head.params().set_requires_grad(true);
      fx.student.head.params().zero_grad();
      Tape64 tape;
      LossResult<double> r;
      {
        TapeScope<double> scope(tape);
        r = total_loss(fx.views, 2, fx.student, fx.teacher, cfg, {});
      }
      tape.backward(r.total);
      auto g = fx.student.head.params().get("mlp.2.weight").grad();
      return std::pair{r.total.item(), std::vector<double>(g.begin(), g.end())};
    };
    auto [t0, g0] = grads(ssl);
    auto [t1, g1] = grads(on);
    CHECK(t0 == t1);
    for (std::size_t i = 0; i < g0.size(); ++i) CHECK(std::abs(g0[i] - g1[i]) <= 1e-7);
    on.koleo_weight = 0.1;
    auto [t2, g2] = grads(on);
    bool changed = false;
    for (std::size_t i = 0; i < g0.size(); ++i) changed |= g0[i] != g2[i];
    CHECK(changed);
  }

  SUBCASE("no gradient reaches the teacher") {
    fx.student.backbone.params().set_requires_grad(true);
    Tape64 tape;
    LossResult<double> r;
    {
      TapeScope<double> scope(tape);
      r = total_loss(fx.views, 2, fx.student, fx.teacher, ssl, {});
    }
    tape.backward(r.total);
    for (const auto& [name, t] : fx.teacher.backbone.params().entries()) CHECK_FALSE(t.requires_grad());
    for (const auto& [name, t] : fx.teacher.head.params().entries()) CHECK_FALSE(t.requires_grad());
  }

  SUBCASE("EMA mode advances the center; other modes leave it empty") {
    SslConfig ema = ssl;
    ema.centering = CenteringMode::Ema;
    auto r = total_loss(fx.views, 2, fx.student, fx.teacher, ema, {});
    CHECK(r.next_center.center.size() == ssl.prototypes);
    CHECK(total_loss(fx.views, 2, fx.student, fx.teacher, ssl, {}).next_center.center.empty());
  }
}

TEST_CASE("total loss finite differences on sampled parameters") {
  CHECK(rbc::testing::composite_worst(20) < 1e-3);
}
