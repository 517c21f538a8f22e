#pragma once

// Finite-difference suites shared by the unit tests and the acceptance binary.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "rbcssl/ssl.hpp"
#include "rbcssl/vit.hpp"

namespace rbc::testing {

using TensorFn = std::function<Tensor64(const std::vector<Tensor64>&)>;

struct PrimitiveCase {
  std::string name;
  TensorFn op;
  std::function<std::vector<Tensor64>(Rng&)> inputs;
};

inline std::vector<PrimitiveCase> primitive_cases() {
  using V = std::vector<Tensor64>;
  auto rt = [](Rng& r, Shape s, double sc = 1.0) { return random_tensor(r, std::move(s), sc); };
  return {
      {"add", [](const V& in) { return add(in[0], in[1]); }, [=](Rng& r) { return V{rt(r, {3, 4}), rt(r, {3, 4})}; }},
      {"add broadcast", [](const V& in) { return add(in[0], in[1]); },
       [=](Rng& r) { return V{rt(r, {2, 3, 4}), rt(r, {4})}; }},
      {"sub", [](const V& in) { return sub(in[0], in[1]); }, [=](Rng& r) { return V{rt(r, {3, 4}), rt(r, {3, 4})}; }},
      {"mul broadcast", [](const V& in) { return mul(in[0], in[1]); },
       [=](Rng& r) { return V{rt(r, {2, 3, 4}), rt(r, {3, 4})}; }},
      {"scale", [](const V& in) { return scale(in[0], 2.5); }, [=](Rng& r) { return V{rt(r, {5})}; }},
      {"exp", [](const V& in) { return exp(in[0]); }, [=](Rng& r) { return V{rt(r, {3, 3})}; }},
      {"log", [](const V& in) { return log(in[0]); },
       [=](Rng& r) {
         auto t = rt(r, {3, 3});
         for (auto& v : t.mutable_data()) v = 0.5 + std::abs(v);
         return V{t};
       }},
      {"gelu", [](const V& in) { return gelu(in[0]); }, [=](Rng& r) { return V{rt(r, {4, 5}, 2.0)}; }},
      {"matmul", [](const V& in) { return matmul(in[0], in[1]); },
       [=](Rng& r) { return V{rt(r, {2, 3, 4}), rt(r, {4, 5})}; }},
      {"matmul batched", [](const V& in) { return matmul(in[0], in[1]); },
       [=](Rng& r) { return V{rt(r, {2, 3, 4}), rt(r, {2, 4, 2})}; }},
      {"softmax", [](const V& in) { return softmax(in[0], 1, 0.3); }, [=](Rng& r) { return V{rt(r, {3, 6})}; }},
      {"softmax axis0", [](const V& in) { return softmax(in[0], 0); }, [=](Rng& r) { return V{rt(r, {4, 3})}; }},
      {"log_softmax", [](const V& in) { return log_softmax(in[0], 1, 0.1); },
       [=](Rng& r) { return V{rt(r, {3, 6})}; }},
      {"layernorm", [](const V& in) { return layernorm(in[0], in[1], in[2], 1e-6); },
       [=](Rng& r) { return V{rt(r, {3, 5}), rt(r, {5}), rt(r, {5})}; }},
      {"l2_normalize", [](const V& in) { return l2_normalize(in[0], 1, 1e-6); },
       [=](Rng& r) { return V{rt(r, {4, 5})}; }},
      {"norm", [](const V& in) { return norm(in[0], 1); }, [=](Rng& r) { return V{rt(r, {4, 5})}; }},
      {"sum axis", [](const V& in) { return sum(in[0], 1); }, [=](Rng& r) { return V{rt(r, {3, 4, 2})}; }},
      {"mean axis", [](const V& in) { return mean(in[0], 0); }, [=](Rng& r) { return V{rt(r, {3, 4})}; }},
      {"mean all", [](const V& in) { return mean(in[0]); }, [=](Rng& r) { return V{rt(r, {3, 4})}; }},
      {"transpose", [](const V& in) { return transpose(in[0]); }, [=](Rng& r) { return V{rt(r, {2, 3, 4})}; }},
      {"permute", [](const V& in) { return permute(in[0], {2, 0, 1}); }, [=](Rng& r) { return V{rt(r, {2, 3, 4})}; }},
      {"reshape", [](const V& in) { return reshape(in[0], {6, 4}); }, [=](Rng& r) { return V{rt(r, {2, 3, 4})}; }},
      {"concat", [](const V& in) { return concat(std::vector{in[0], in[1]}, 1); },
       [=](Rng& r) { return V{rt(r, {2, 3}), rt(r, {2, 2})}; }},
      {"slice", [](const V& in) { return slice(in[0], 1, 1, 3); }, [=](Rng& r) { return V{rt(r, {2, 4, 2})}; }},
      {"expand", [](const V& in) { return expand(in[0], 3); }, [=](Rng& r) { return V{rt(r, {2, 2})}; }},
      {"gather_rows", [](const V& in) { return gather_rows(in[0], {2, 0, 2}); },
       [=](Rng& r) { return V{rt(r, {3, 4})}; }},
  };
}

/// Worst relative error of one primitive over `cases` random inputs. A random
/// linear functional of the output makes every output element count.
inline double primitive_worst(const PrimitiveCase& pc, int cases = 20) {
  double worst = 0;
  for (int c = 0; c < cases; ++c) {
    Rng rng = make_rng(77, {static_cast<std::uint64_t>(c)});
    auto inputs = pc.inputs(rng);
    Rng prng = make_rng(1234, {static_cast<std::uint64_t>(c)});
    const Tensor64 w = random_tensor(prng, pc.op(inputs).shape());
    const auto r = grad_check([&](const std::vector<Tensor64>& in) { return sum(mul(pc.op(in), w)); }, inputs, 1e-5);
    worst = std::max(worst, r.max_rel_err);
  }
  return worst;
}

inline SslConfig tiny_ssl() {
  SslConfig c;
  c.prototypes = 6;
  c.head_hidden_dim = 10;
  c.head_bottleneck_dim = 5;
  return c;
}

inline VitConfig tiny_vit() {
  VitConfig v;
  v.image_size = 8;
  v.patch_size = 4;
  v.embed_dim = 8;
  v.depth = 1;
  v.heads = 2;
  v.mlp_ratio = 2;
  return v;
}

struct LossFixture {
  BasicSslNetwork<double> student, teacher;
  std::vector<Tensor64> views;
};

inline LossFixture make_loss_fixture(std::uint64_t seed, const SslConfig& ssl) {
  const VitConfig v = tiny_vit();
  BasicVitEncoder<double> sb(v, seed), tb(v, seed + 100);
  BasicDinoHead<double> sh(v.embed_dim, ssl, seed), th(v.embed_dim, ssl, seed + 100);
  Rng rng = make_rng(seed, {55});
  std::vector<Tensor64> views;
  for (int i = 0; i < 3; ++i) {
    auto t = random_tensor(rng, {4, 8, 8, 3});
    for (auto& x : t.mutable_data()) x = 0.5 + 0.2 * x;
    views.push_back(t);
  }
  return {{sb, sh}, {tb, th}, views};
}

/// Total loss (two global views plus one local) against central differences on
/// 10 sampled student scalars per case. Cases alternate KoLeo and centering.
inline double composite_worst(int cases = 20) {
  double worst = 0;
  for (int c = 0; c < cases; ++c) {
    SslConfig ssl = tiny_ssl();
    ssl.koleo_enabled = c % 2 == 0;
    ssl.centering = c % 3 == 0 ? CenteringMode::Ema : CenteringMode::Sinkhorn;
    auto fx = make_loss_fixture(static_cast<std::uint64_t>(c), ssl);
    std::vector<Tensor64*> all;
    for (auto& e : fx.student.backbone.params().entries()) all.push_back(&e.second);
    for (auto& e : fx.student.head.params().entries()) all.push_back(&e.second);
    std::vector<std::pair<Tensor64*, std::size_t>> picks;
    Rng rng = make_rng(900, {static_cast<std::uint64_t>(c)});
    for (int i = 0; i < 10; ++i) {
      Tensor64* t = all[rng() % all.size()];
      picks.emplace_back(t, static_cast<std::size_t>(rng() % t->numel()));
    }
    for (auto* t : all) t->set_requires_grad(true);
    auto eval = [&] { return total_loss(fx.views, 2, fx.student, fx.teacher, ssl, {}).total; };
    Tape64 tape;
    Tensor64 loss;
    {
      TapeScope<double> scope(tape);
      loss = eval();
    }
    tape.backward(loss);
    const double h = 1e-5;
    for (auto [t, j] : picks) {
      const double analytic = t->grad()[j];
      auto d = t->mutable_data();
      const double saved = d[j];
      d[j] = saved + h;
      const double fp = eval().item();
      d[j] = saved - h;
      const double fm = eval().item();
      d[j] = saved;
      const double numeric = (fp - fm) / (2 * h);
      worst = std::max(worst, std::abs(analytic - numeric) /
                                  std::max({std::abs(analytic), std::abs(numeric), 1e-6}));
    }
  }
  return worst;
}

}  // namespace rbc::testing
