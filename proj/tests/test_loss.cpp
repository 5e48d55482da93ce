#include <doctest.h>

#include <cmath>

#include "scan/data_io.hpp"
#include "scan/pretrain.hpp"
#include "toy_scan.hpp"

using namespace scan;

namespace {

MatrixXd rows(std::initializer_list<std::initializer_list<double>> r) {
  MatrixXd m(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& row : r) {
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

Clustering clustering(Eigen::Index k, Eigen::Index d, std::vector<int> assignments) {
  Clustering c;
  c.centroids = MatrixXd::Zero(k, d);
  c.assignments = std::move(assignments);
  return c;
}

Trainer make_trainer(TrainConfig cfg, std::uint64_t seed) {
  SynthConfig s;
  s.samples_per_class = 40;
  s.seed = seed;
  const SplitData base = split_from_synthetic(synthesize(s), Split::Base);
  TrainingData data{base.samples, base.labels, base.n_classes(), std::nullopt};
  SeededRng rng(seed);
  EncoderConfig enc;
  enc.input = {1, 1, base.samples.cols()};
  enc.hidden = {16};
  enc.backbone_dim = 8;
  ScanNet<double> net(enc, {8, 0, 0.5}, base.n_classes(), default_cluster_count(base.n_classes()), rng);
  return Trainer(cfg, std::move(data), std::move(net), seed);
}

TrainConfig quick_config() {
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 16;
  cfg.loss.warmup_epochs = 1;
  return cfg;
}

}  // namespace

TEST_CASE("class cross-entropy examples") {
  CHECK(class_ce(rows({{0.5, 0.5}}), std::vector<int>{1}).loss == doctest::Approx(std::log(2.0)));
  CHECK(class_ce(rows({{0.0, 1.0}}), std::vector<int>{1}).loss == 0.0);
  const double a = class_ce(rows({{0.2, 0.8}}), std::vector<int>{0}).loss;
  const double b = class_ce(rows({{0.6, 0.4}}), std::vector<int>{1}).loss;
  CHECK(class_ce(rows({{0.2, 0.8}, {0.6, 0.4}}), std::vector<int>{0, 1}).loss == doctest::Approx((a + b) / 2));
  CHECK_THROWS_AS(class_ce(rows({{0.5, 0.5}}), std::vector<int>{2}), DimensionError);
}

TEST_CASE("cluster cross-entropy examples") {
  CHECK(cluster_ce(MatrixXd::Constant(1, 50, 1.0 / 50), std::vector<int>{17}).loss ==
        doctest::Approx(3.912023).epsilon(1e-6));
  CHECK(cluster_ce(MatrixXd::Constant(2, 7, 1.0 / 7), std::vector<int>{0, 6}).loss == doctest::Approx(std::log(7.0)));
  MatrixXd onehot = MatrixXd::Zero(1, 5);
  onehot(0, 3) = 1.0;
  CHECK(cluster_ce(onehot, std::vector<int>{3}).loss == 0.0);
}

TEST_CASE("zero probability is clamped") {
  const CrossEntropy ce = class_ce(rows({{1.0, 0.0}}), std::vector<int>{1});
  CHECK(ce.loss == doctest::Approx(-std::log(1e-12)));
  CHECK(ce.clamped == 1);
  CHECK(std::isfinite(ce.loss));
}

TEST_CASE("triplet mining examples") {
  // cluster {i(A), j(B)}
  MemoryBank pair(rows({{1, 0}, {0, 1}}), {0, 1}, 2, clustering(2, 2, {0, 0}));
  auto t = mine_triplet(pair, 0);
  REQUIRE(t.has_value());
  CHECK(t->negative_id == 1);
  CHECK(t->positive == pair.class_centroids().row(0));

  MemoryBank pure(rows({{1, 0}, {0, 1}}), {0, 0}, 1, clustering(2, 2, {0, 0}));
  CHECK_FALSE(mine_triplet(pure, 0).has_value());

  // cross-class rows at distances 0.2 and 0.5 from the anchor
  const double a = std::acos(1 - 0.2 * 0.2 / 2), b = std::acos(1 - 0.5 * 0.5 / 2);
  MemoryBank three(rows({{1, 0}, {std::cos(b), std::sin(b)}, {std::cos(a), std::sin(a)}}), {0, 1, 1}, 2,
                   clustering(1, 2, {0, 0, 0}));
  t = mine_triplet(three, 0);
  REQUIRE(t.has_value());
  CHECK(t->negative_id == 2);
}

TEST_CASE("purity loss examples") {
  std::vector<std::optional<Triplet>> satisfied{Triplet{rows({{1, 0}}), rows({{0, 1}}), 1}};
  CHECK(purity_loss(rows({{1, 0}}), satisfied, 0.3).loss == 0.0);

  std::vector<std::optional<Triplet>> violated{Triplet{rows({{0, 1}}), rows({{1, 0}}), 1}};
  const PurityLoss p = purity_loss(rows({{1, 0}}), violated, 0.3);
  CHECK(p.loss == doctest::Approx(2.3));
  CHECK(p.active == 1);

  std::vector<std::optional<Triplet>> skipped(3);
  const PurityLoss s = purity_loss(MatrixXd::Identity(3, 3), skipped, 0.3);
  CHECK(s.loss == 0.0);
  CHECK(s.skipped == 3);
  CHECK(s.grad_anchors.isZero(0.0));
}

TEST_CASE("purity gradient on the normalized anchor is 2 (n - p)") {
  const MatrixXd f = rows({{0.6, 0.8}});
  const MatrixXd pos = rows({{-1, 0}}), neg = rows({{0.6, 0.7}});
  std::vector<std::optional<Triplet>> t{Triplet{pos, neg, 0}};
  CHECK((purity_loss(f, t, 0.3).grad_anchors - 2.0 * (neg - pos)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("normalize_rows_backward matches finite differences") {
  SeededRng rng(2);
  ParamState<double> f("f", MatrixXd::Random(3, 4));
  const MatrixXd probe = MatrixXd::Random(3, 4);
  auto loss = [&](bool grad) {
    if (grad) f.accumulate(normalize_rows_backward(f.value, probe));
    return (normalize_rows(f.value).array() * probe.array()).sum();
  };
  std::vector<ParamState<double>*> ps{&f};
  CHECK(grad_check(loss, ps) < 1e-7);
}

TEST_CASE("total loss examples") {
  CHECK(total_loss(0.7, 3.9, 2.3, 1.0).total == doctest::Approx(6.9));
  CHECK(total_loss(0.7, 3.9, 2.3, 0.0).total == doctest::Approx(4.6));
  try {
    (void)total_loss(0.7, std::nan(""), 2.3, 1.0);
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("cluster") != std::string::npos);
  }
}

TEST_CASE("full objective on a 4-sample toy passes the gradient check") {
  for (std::uint64_t seed : {1, 2, 3}) {
    auto toy = testing::make_toy_scan(seed);
    const LossBreakdown b = toy.evaluate(false);
    CHECK(b.active_triplets == 4);
    CHECK(b.purity_loss > 0.0);
    CAPTURE(seed);
    CHECK(toy.max_grad_error() < 1e-5);
  }
}

TEST_CASE("training schedule, additivity and warm-up") {
  Trainer t = make_trainer(quick_config(), 7);
  t.run();
  REQUIRE(t.log().size() == 4);
  const double lambda = t.config().loss.lambda;
  const std::size_t per_epoch = t.steps().size() / 4;
  for (std::size_t s = 0; s < t.steps().size(); ++s) {
    const LossBreakdown& b = t.steps()[s];
    CHECK(std::abs(b.total - (b.class_loss + b.cluster_loss + lambda * b.purity_loss)) <= 1e-12);
    if (s < per_epoch) {
      CHECK(b.cluster_loss == 0.0);
      CHECK(b.purity_loss == 0.0);
      CHECK(b.total == b.class_loss);
    }
  }
  CHECK_FALSE(t.log()[0].cluster_error_rate.has_value());
  CHECK(t.log()[1].cluster_error_rate.has_value());
  CHECK(t.log()[1].loss.cluster_loss > 0.0);
  REQUIRE(t.memory().has_value());
  CHECK(t.memory()->size() == t.data().samples.rows());
}

TEST_CASE("baseline mode leaves cluster and purity columns at zero") {
  TrainConfig cfg = quick_config();
  cfg.cluster_branch = false;
  cfg.loss.lambda = 0.0;
  Trainer t = make_trainer(cfg, 3);
  t.run();
  for (const auto& r : t.log()) {
    CHECK(r.loss.cluster_loss == 0.0);
    CHECK(r.loss.purity_loss == 0.0);
  }
}

TEST_CASE("same seed gives an identical loss trace") {
  Trainer a = make_trainer(quick_config(), 5);
  Trainer b = make_trainer(quick_config(), 5);
  a.run();
  b.run();
  REQUIRE(a.steps().size() == b.steps().size());
  for (std::size_t i = 0; i < a.steps().size(); ++i) CHECK(a.steps()[i].total == b.steps()[i].total);
}

TEST_CASE("pretrain preconditions") {
  TrainConfig cfg = quick_config();
  TrainingData empty{MatrixXd(0, 4), {}, 2, std::nullopt};
  SeededRng rng;
  EncoderConfig enc;
  enc.input = {1, 1, 4};
  ScanNet<double> net(enc, {4, 0, 0.5}, 2, 5, rng);
  CHECK_THROWS_AS(Trainer(cfg, empty, net, 0), DataError);

  TrainingData tiny{MatrixXd::Ones(3, 4), {0, 1, 0}, 2, std::nullopt};
  CHECK_THROWS_AS(Trainer(cfg, tiny, net, 0), ConfigError);  // C_k = 5 > 3 samples
}
