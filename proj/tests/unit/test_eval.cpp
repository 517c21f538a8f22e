#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <map>
#include <numeric>
#include <set>

#include "rbcssl/errors.hpp"
#include "rbcssl/eval.hpp"
#include "rbcssl/rng.hpp"
#include "oracles.hpp"

using namespace rbc;
namespace fs = std::filesystem;
using rbc::testing::naive_knn;
using rbc::testing::oracle_metrics;
using rbc::testing::random_set;

namespace {

EmbeddingSet points(const std::vector<std::vector<float>>& rows, const std::vector<std::string>& labels) {
  EmbeddingSet s;
  s.dim = rows.front().size();
  for (std::size_t i = 0; i < rows.size(); ++i) s.add_row(rows[i], {"p" + std::to_string(i), labels[i], "s"});
  return s;
}

}  // namespace

TEST_CASE("metrics") {
  SUBCASE("hand example") {
    const auto m = compute_metrics(std::vector<int>{0, 0, 1}, std::vector<int>{0, 1, 1}, 2);
    CHECK(m.acc == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(m.bacc == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(m.wf1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  }
  SUBCASE("perfect prediction") {
    const std::vector<int> y{2, 0, 1, 1, 2};
    const auto m = compute_metrics(y, y, 3);
    CHECK(m.acc == 1.0);
    CHECK(m.bacc == 1.0);
    CHECK(m.wf1 == 1.0);
  }
  SUBCASE("balanced symmetric errors give acc == bacc") {
    const auto m = compute_metrics(std::vector<int>{0, 0, 1, 1}, std::vector<int>{0, 1, 1, 0}, 2);
    CHECK(m.acc == m.bacc);
  }
  SUBCASE("brute-force oracle on random labels") {
    Rng rng = make_rng(21, {});
    for (int trial = 0; trial < 100; ++trial) {
      const int k = 2 + static_cast<int>(rng() % 5);
      const std::size_t n = 1 + rng() % 60;
      std::vector<int> t(n), p(n);
      for (std::size_t i = 0; i < n; ++i) {
        t[i] = static_cast<int>(rng() % k);
        p[i] = static_cast<int>(rng() % k);
      }
      const auto got = compute_metrics(t, p, k);
      const auto want = oracle_metrics(t, p, k);
      CHECK(got.acc == doctest::Approx(want.acc).epsilon(1e-12));
      CHECK(got.bacc == doctest::Approx(want.bacc).epsilon(1e-12));
      CHECK(got.wf1 == doctest::Approx(want.wf1).epsilon(1e-12));
      for (double v : {got.acc, got.bacc, got.wf1}) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
    }
  }
  SUBCASE("string labels") {
    const auto m = compute_metrics(std::vector<std::string>{"a", "a", "b"}, std::vector<std::string>{"a", "b", "b"});
    CHECK(m.bacc == doctest::Approx(0.75));
  }
  SUBCASE("length mismatch") {
    CHECK_THROWS(compute_metrics(std::vector<int>{0, 1}, std::vector<int>{0}, 2));
    CHECK_THROWS(compute_metrics(std::vector<int>{}, std::vector<int>{}, 2));
  }
}

TEST_CASE("k-NN") {
  SUBCASE("naive oracle on random sets") {
    for (std::size_t k : {1u, 20u}) {
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto train = random_set(50, 8, 3, 1, seed);
        const auto test = random_set(50, 8, 3, 1, seed + 100);
        const auto got = knn_classify(train, test, {k, KnnDistance::Cosine});
        CHECK(got.predicted == naive_knn(train, test, k));
      }
    }
  }
  SUBCASE("exact copy of a train point, k = 1") {
    const auto train = random_set(30, 5, 3, 1, 7);
    auto test = train.subset({4});
    CHECK(knn_classify(train, test, {1, KnnDistance::Cosine}).predicted[0] == train.records[4].label);
  }
  SUBCASE("invariant under a common positive rescaling") {
    const auto train = random_set(40, 6, 3, 1, 8);
    const auto test = random_set(25, 6, 3, 1, 9);
    auto scaled_train = train, scaled_test = test;
    for (auto& v : scaled_train.data) v *= 3.5f;
    for (auto& v : scaled_test.data) v *= 3.5f;
    CHECK(knn_classify(train, test, {20, KnnDistance::Cosine}).predicted ==
          knn_classify(scaled_train, scaled_test, {20, KnnDistance::Cosine}).predicted);
  }
  SUBCASE("k equal to the train size with tied votes picks the closer class") {
    const auto train = points({{1, 0}, {0.9f, 0.1f}, {0, 1}, {-0.2f, 1}}, {"a", "a", "b", "b"});
    const auto test = points({{1, 0.2f}, {0.1f, 1}}, {"a", "b"});
    CHECK(knn_classify(train, test, {4, KnnDistance::Cosine}).predicted == std::vector<std::string>{"a", "b"});
  }
  SUBCASE("exact ties fall back to the class name") {
    const auto train = points({{1, 0}, {1, 0}}, {"zeta", "alpha"});
    const auto test = points({{1, 0}}, {"zeta"});
    CHECK(knn_classify(train, test, {2, KnnDistance::Cosine}).predicted[0] == "alpha");
  }
  SUBCASE("euclidean distance") {
    const auto train = points({{1, 0}, {10, 0}}, {"near", "far"});
    const auto test = points({{9, 0}}, {"far"});
    CHECK(knn_classify(train, test, {1, KnnDistance::Euclidean}).predicted[0] == "far");
    CHECK(parse_knn_distance("euclidean") == KnnDistance::Euclidean);
    CHECK_THROWS(parse_knn_distance("manhattan"));
  }
  SUBCASE("errors") {
    const auto train = random_set(5, 3, 2, 1, 1);
    const auto test = random_set(5, 3, 2, 1, 2);
    CHECK_THROWS_AS(knn_classify(EmbeddingSet{3, {}, {}}, test, {1, KnnDistance::Cosine}), ProtocolError);
    CHECK_THROWS(knn_classify(train, test, {6, KnnDistance::Cosine}));
    CHECK_THROWS(knn_classify(train, test, {0, KnnDistance::Cosine}));
    CHECK_THROWS_AS(knn_classify(train, random_set(5, 4, 2, 1, 2), {1, KnnDistance::Cosine}), DimensionError);
  }
}

TEST_CASE("linear probe") {
  SUBCASE("separable toy set is fit exactly") {
    const auto train = points({{0, 0}, {0.2f, 0.1f}, {0.1f, 0.3f}, {2, 2}, {2.2f, 1.9f}, {1.8f, 2.1f}},
                              {"a", "a", "a", "b", "b", "b"});
    const auto r = linear_probe(train, train, {});
    CHECK(r.metrics.acc == 1.0);
  }
  SUBCASE("identical test set reproduces train metrics") {
    const auto train = random_set(60, 4, 3, 1, 3);
    const auto r1 = linear_probe(train, train, {});
    const auto r2 = linear_probe(train, train.subset([&] {
      std::vector<std::size_t> all(train.size());
      std::iota(all.begin(), all.end(), 0);
      return all;
    }()), {});
    CHECK(r1.predicted == r2.predicted);
    CHECK(r1.metrics.acc == r2.metrics.acc);
  }
  SUBCASE("huge penalty leaves only the class prior") {
    // 3 classes with counts 5, 9, 4: the bias-only model predicts the mode.
    EmbeddingSet train;
    train.dim = 2;
    Rng rng = make_rng(4, {});
    const std::vector<std::pair<std::string, int>> counts{{"x", 5}, {"y", 9}, {"z", 4}};
    for (const auto& [label, n] : counts)
      for (int i = 0; i < n; ++i) {
        const std::vector<float> row{static_cast<float>(normal(rng)), static_cast<float>(normal(rng))};
        train.add_row(row, {label + std::to_string(i), label, "s"});
      }
    const auto r = linear_probe(train, random_set(20, 2, 3, 1, 5), {1e8, 500, 1e-9});
    for (const auto& p : r.predicted) CHECK(p == "y");
  }
  SUBCASE("predictions ignore per-feature positive scaling") {
    const auto train = random_set(60, 5, 3, 1, 10);
    const auto test = random_set(30, 5, 3, 1, 11);
    auto st = train, ss = test;
    const std::vector<float> c{0.01f, 3.0f, 1.0f, 250.0f, 0.5f};
    for (std::size_t i = 0; i < st.size(); ++i)
      for (std::size_t j = 0; j < 5; ++j) st.data[i * 5 + j] *= c[j];
    for (std::size_t i = 0; i < ss.size(); ++i)
      for (std::size_t j = 0; j < 5; ++j) ss.data[i * 5 + j] *= c[j];
    CHECK(linear_probe(train, test, {}).predicted == linear_probe(st, ss, {}).predicted);
  }
  SUBCASE("single-class train set") {
    const auto train = points({{0, 1}, {1, 0}}, {"a", "a"});
    CHECK_THROWS_AS(linear_probe(train, train, {}), ProtocolError);
  }
  SUBCASE("unseen test class is always wrong") {
    const auto train = points({{0, 0}, {0.1f, 0}, {3, 3}, {3.1f, 3}}, {"a", "a", "b", "b"});
    const auto test = points({{0, 0}, {5, 5}}, {"c", "b"});
    const auto r = linear_probe(train, test, {});
    CHECK(r.predicted[0] != "c");
    CHECK(r.metrics.acc == doctest::Approx(0.5));
  }
}

TEST_CASE("leave-one-source-out") {
  ClassifierSpec spec;
  spec.knn.k = 3;
  SUBCASE("four sources give twelve ordered pairs") {
    const auto set = random_set(80, 6, 3, 4, 12);
    const auto r = leave_one_source_out(set, spec);
    CHECK(r.splits.size() == 12);
    std::set<std::pair<std::string, std::string>> pairs;
    for (const auto& s : r.splits) {
      CHECK(s.train_sources != s.test_sources);
      pairs.insert({s.train_sources, s.test_sources});
    }
    CHECK(pairs.size() == 12);
    REQUIRE_FALSE(r.aggregates.empty());
    CHECK(r.aggregates[0].group == "all");
    CHECK(r.aggregates[0].count == 12);
    CHECK(r.aggregates[0].has_std);
    CHECK(r.aggregates[0].std.acc >= 0.0);
  }
  SUBCASE("two sources give two") {
    CHECK(leave_one_source_out(random_set(40, 6, 3, 2, 13), spec).splits.size() == 2);
  }
  SUBCASE("each split matches a manual run") {
    const auto set = random_set(60, 6, 3, 3, 14);
    const auto r = leave_one_source_out(set, spec);
    for (const auto& s : r.splits) {
      std::vector<std::size_t> tr, te;
      for (std::size_t i = 0; i < set.size(); ++i) {
        if (set.records[i].source_id == s.train_sources) tr.push_back(i);
        if (set.records[i].source_id == s.test_sources) te.push_back(i);
      }
      const auto manual = knn_classify(set.subset(tr), set.subset(te), spec.knn);
      CHECK(s.n_train == tr.size());
      CHECK(s.n_test == te.size());
      CHECK(s.metrics.acc == manual.metrics.acc);
      CHECK(s.metrics.bacc == manual.metrics.bacc);
      CHECK(s.metrics.wf1 == manual.metrics.wf1);
    }
  }
  SUBCASE("single source is rejected") {
    CHECK_THROWS_AS(leave_one_source_out(random_set(20, 4, 2, 1, 15), spec), ProtocolError);
  }
  SUBCASE("aggregate statistics") {
    const auto a = aggregate("g", {{0.5, 0.5, 0.5}, {1.0, 1.0, 1.0}});
    CHECK(a.mean.acc == doctest::Approx(0.75));
    CHECK(a.std.acc == doctest::Approx(std::sqrt(0.125)));
    CHECK_FALSE(aggregate("g", {{0.5, 0.5, 0.5}}).has_std);
  }
}

TEST_CASE("k-fold") {
  SUBCASE("ten rows, five folds") {
    std::vector<std::string> labels(10, "a");
    for (std::size_t i = 5; i < 10; ++i) labels[i] = "b";
    const auto folds = kfold_assignment(labels, 5, 3);
    REQUIRE(folds.size() == 5);
    std::vector<int> seen(10, 0);
    for (const auto& f : folds) {
      CHECK(f.size() == 2);
      for (auto i : f) ++seen[i];
    }
    for (int s : seen) CHECK(s == 1);
  }
  SUBCASE("same seed, same folds; other seed differs") {
    std::vector<std::string> labels;
    for (int i = 0; i < 40; ++i) labels.push_back(std::string(1, char('a' + i % 3)));
    CHECK(kfold_assignment(labels, 5, 1) == kfold_assignment(labels, 5, 1));
    CHECK(kfold_assignment(labels, 5, 1) != kfold_assignment(labels, 5, 2));
  }
  SUBCASE("stratification keeps class ratios") {
    std::vector<std::string> labels;
    for (int i = 0; i < 17; ++i) labels.push_back("x");
    for (int i = 0; i < 11; ++i) labels.push_back("y");
    for (int i = 0; i < 7; ++i) labels.push_back("z");
    const auto folds = kfold_assignment(labels, 5, 9);
    for (const auto& f : folds) {
      std::map<std::string, int> c;
      for (auto i : f) ++c[labels[i]];
      CHECK(std::abs(c["x"] - 17.0 / 5) <= 1.0);
      CHECK(std::abs(c["y"] - 11.0 / 5) <= 1.0);
      CHECK(std::abs(c["z"] - 7.0 / 5) <= 1.0);
    }
  }
  SUBCASE("report covers every row once") {
    const auto set = random_set(37, 5, 3, 2, 16);
    ClassifierSpec spec;
    spec.knn.k = 5;
    const auto r = kfold(set, 5, 0, spec);
    CHECK(r.splits.size() == 5);
    std::size_t total = 0;
    for (const auto& s : r.splits) {
      total += s.n_test;
      CHECK(s.n_train + s.n_test == 37);
    }
    CHECK(total == 37);
  }
  SUBCASE("too few rows") { CHECK_THROWS_AS(kfold_assignment({"a", "b", "c"}, 5, 0), ProtocolError); }
}

TEST_CASE("report formatting") {
  const auto set = random_set(40, 4, 2, 2, 17);
  ClassifierSpec spec;
  spec.knn.k = 3;
  const auto r = leave_one_source_out(set, spec);
  const auto csv = format_report_csv(r);
  CHECK(csv.find("SPLIT") != std::string::npos);
  CHECK(csv.find("AGGREGATE") != std::string::npos);
  CHECK_FALSE(format_report_text(r).empty());
}

TEST_CASE("EMB1 embedding files") {
  const fs::path dir = fs::temp_directory_path() / "rbcssl_test_emb";
  fs::remove_all(dir);
  fs::create_directories(dir);
  SUBCASE("bit-exact round-trip with metadata") {
    auto set = random_set(23, 7, 3, 2, 18);
    set.data[3] = -0.0f;
    set.data[4] = 1e-38f;
    set.records[2].label = "label with spaces";
    write_embeddings(dir / "e.emb", set);
    CHECK(fs::exists(sidecar_path(dir / "e.emb")));
    const auto back = read_embeddings(dir / "e.emb");
    CHECK(back.dim == 7);
    CHECK(std::memcmp(back.data.data(), set.data.data(), set.data.size() * 4) == 0);
    REQUIRE(back.size() == 23);
    for (std::size_t i = 0; i < 23; ++i) {
      CHECK(back.records[i].id == set.records[i].id);
      CHECK(back.records[i].label == set.records[i].label);
      CHECK(back.records[i].source_id == set.records[i].source_id);
    }
  }
  SUBCASE("separators in metadata are refused") {
    auto set = random_set(2, 2, 2, 1, 1);
    set.records[0].label = "a,b";
    CHECK_THROWS_AS(write_embeddings(dir / "bad.emb", set), InputError);
  }
  SUBCASE("header layout") {
    EmbeddingSet s;
    s.dim = 2;
    s.add_row(std::vector<float>{1.0f, 2.0f}, {"a", "l", "s"});
    const auto bytes = encode_emb1(s);
    CHECK(bytes.size() == 4 + 4 + 4 + 8);
    CHECK(bytes.substr(0, 4) == "EMB1");
    CHECK(static_cast<unsigned char>(bytes[4]) == 1);
    CHECK(static_cast<unsigned char>(bytes[8]) == 2);
  }
  SUBCASE("empty set") {
    EmbeddingSet s;
    s.dim = 4;
    write_embeddings(dir / "empty.emb", s);
    const auto back = read_embeddings(dir / "empty.emb");
    CHECK(back.size() == 0);
    CHECK(back.dim == 4);
  }
  SUBCASE("corrupt inputs") {
    CHECK_THROWS(decode_emb1("EMB2xxxxxxxx"));
    CHECK_THROWS(decode_emb1("EMB1"));
    auto bytes = encode_emb1(random_set(3, 2, 2, 1, 1));
    bytes.pop_back();
    CHECK_THROWS(decode_emb1(bytes));
  }
  SUBCASE("validation") {
    auto s = random_set(3, 2, 2, 1, 1);
    s.data[1] = std::nanf("");
    CHECK_THROWS(s.validate());
    s = random_set(3, 2, 2, 1, 1);
    s.records.pop_back();
    CHECK_THROWS(s.validate());
  }
}

TEST_CASE("embedding extraction") {
  VitConfig v;
  v.image_size = 16;
  v.patch_size = 8;
  v.embed_dim = 12;
  v.depth = 1;
  v.heads = 2;
  const VitEncoder enc(v, 3);
  FloatImage a(16, 16), b(16, 16);
  Rng rng = make_rng(2, {});
  for (auto& x : a.data) x = static_cast<float>(uniform(rng));
  for (auto& x : b.data) x = static_cast<float>(uniform(rng));
  const auto set = embed_images(enc, {a, b, a}, {{"0", "l", "s"}, {"1", "l", "s"}, {"2", "l", "s"}}, 2);
  CHECK(set.dim == 12);
  REQUIRE(set.size() == 3);
  CHECK(std::ranges::equal(set.row(0), set.row(2)));
  CHECK_FALSE(std::ranges::equal(set.row(0), set.row(1)));
  CHECK(embed_images(enc, {}, {}).size() == 0);
  CHECK_THROWS_AS(embed_images(enc, {FloatImage(8, 8)}, {{"x", "l", "s"}}), DimensionError);
}

TEST_CASE("principal components") {
  SUBCASE("match a dense eigensolver") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Rng rng = make_rng(seed, {77});
      const std::size_t n = 64 + seed * 48, d = 10;
      // Anisotropic data so the top eigenvalues are well separated.
      std::vector<double> x(n * d);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) x[i * d + j] = normal(rng) * (6.0 - 0.5 * j);
      const auto r = principal_components(x, n, d);

      Eigen::MatrixXd m = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          x.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
      const Eigen::RowVectorXd mu = m.colwise().mean();
      const Eigen::MatrixXd c = m.rowwise() - mu;
      const Eigen::MatrixXd cov = c.transpose() * c / static_cast<double>(n - 1);  // sample covariance
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
      for (std::size_t k = 0; k < 3; ++k) {
        Eigen::VectorXd e = es.eigenvectors().col(static_cast<Eigen::Index>(d - 1 - k));
        Eigen::Index arg;
        e.cwiseAbs().maxCoeff(&arg);
        if (e(arg) < 0) e = -e;
        CHECK(r.explained[k] == doctest::Approx(es.eigenvalues()(static_cast<Eigen::Index>(d - 1 - k))).epsilon(1e-6));
        for (std::size_t j = 0; j < d; ++j) CHECK(std::abs(r.components[k * d + j] - e(j)) < 1e-5);
        const Eigen::VectorXd proj = c * e;
        for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(r.projections[i * 3 + k] - proj(i)) < 1e-5);
      }
    }
  }
  SUBCASE("orthonormal and ordered") {
    Rng rng = make_rng(5, {});
    const std::size_t n = 200, d = 16;
    std::vector<double> x(n * d);
    for (auto& v : x) v = normal(rng);
    const auto r = principal_components(x, n, d);
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t b = 0; b < 3; ++b) {
        double dot = 0;
        for (std::size_t j = 0; j < d; ++j) dot += r.components[a * d + j] * r.components[b * d + j];
        CHECK(std::abs(dot - (a == b ? 1.0 : 0.0)) < 1e-6);
      }
    CHECK(r.explained[0] >= r.explained[1]);
    CHECK(r.explained[1] >= r.explained[2]);
  }
  SUBCASE("too few tokens") {
    CHECK_THROWS_AS(principal_components(std::vector<double>(8, 1.0), 2, 4), ProtocolError);
  }
  SUBCASE("feature map has the input size") {
    VitConfig v;
    v.image_size = 16;
    v.patch_size = 4;
    v.embed_dim = 8;
    v.depth = 1;
    v.heads = 2;
    const VitEncoder enc(v, 1);
    FloatImage img(16, 16);
    Rng rng = make_rng(6, {});
    for (auto& x : img.data) x = static_cast<float>(uniform(rng));
    PcaResult r;
    const auto map = pca_map(enc, img, &r);
    CHECK(map.width == 16);
    CHECK(map.height == 16);
    CHECK(r.projections.size() == 16 * 3);
    // Nearest-neighbour upscaling: each 4x4 block is flat.
    CHECK(map.at(0, 0, 0) == map.at(3, 3, 0));
    // Min-max scaling reaches both ends of every channel.
    for (std::size_t c = 0; c < 3; ++c) {
      int lo = 255, hi = 0;
      for (std::size_t y = 0; y < 16; ++y)
        for (std::size_t x = 0; x < 16; ++x) {
          lo = std::min<int>(lo, map.at(x, y, c));
          hi = std::max<int>(hi, map.at(x, y, c));
        }
      CHECK(lo == 0);
      CHECK(hi == 255);
    }
  }
}
