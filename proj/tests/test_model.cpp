#include <doctest.h>

#include <cmath>
#include <set>

#include "scan/gradcheck.hpp"
#include "scan/loss.hpp"
#include "scan/model.hpp"
#include "oracles.hpp"

using namespace scan;
using namespace scan::testing;

namespace {

EncoderConfig small_mlp(Eigen::Index in = 6) {
  EncoderConfig e;
  e.input = {1, 1, in};
  e.hidden = {8};
  e.backbone_dim = 5;
  return e;
}

}  // namespace

TEST_CASE("identity dense layer passes the input through") {
  SeededRng rng;
  Dense<double> layer(2, 2, rng);
  layer.weight().value = MatrixXd::Identity(2, 2);
  MatrixXd x(1, 2);
  x << 1, 2;
  CHECK(layer.forward(x, Mode::Eval, rng).output == x);
}

TEST_CASE("encode keeps batch size and row order") {
  SeededRng rng(1);
  ScanNet<double> net(small_mlp(), {4, 0, 0.5}, 2, 3, rng);
  const MatrixXd x = random_matrix(7, 6, rng);
  const MatrixXd all = net.encode(x, Mode::Eval, rng);
  CHECK(all.rows() == 7);
  CHECK(all.cols() == 5);
  for (Eigen::Index i = 0; i < 7; ++i) CHECK(net.encode(x.row(i), Mode::Eval, rng) == all.row(i));
  CHECK_THROWS_AS(net.encode(MatrixXd::Ones(2, 5), Mode::Eval, rng), DimensionError);
}

TEST_CASE("conv4lite maps zeros to zeros") {
  SeededRng rng(2);
  EncoderConfig e;
  e.variant = EncoderVariant::Conv4Lite;
  e.input = {1, 16, 16};
  e.hidden = {8, 16, 16, 16};
  ScanNet<double> net(e, {4, 0, 0.5}, 2, 3, rng);
  const MatrixXd f = net.encode(MatrixXd::Zero(2, 256), Mode::Eval, rng);
  CHECK(f.cols() == encoder_output_dim(e));
  CHECK(f.isZero(0.0));
}

TEST_CASE("encoder config validation") {
  EncoderConfig e = small_mlp();
  e.backbone_dim = 0;
  CHECK_THROWS_AS(validate(e), ConfigError);
  EncoderConfig c;
  c.variant = EncoderVariant::Conv4Lite;
  c.input = {1, 8, 8};
  c.hidden = {8, 16, 16, 16};
  CHECK_THROWS_AS(validate(c), ConfigError);
}

TEST_CASE("project is deterministic in eval mode and has width d") {
  SeededRng rng(3);
  ScanNet<double> net(small_mlp(), {}, 2, 3, rng);
  CHECK(net.embed_dim() == 256);
  const MatrixXd x = random_matrix(4, 6, rng);
  const MatrixXd b = net.encode(x, Mode::Eval, rng);
  SeededRng r1(10), r2(20);
  const MatrixXd p1 = net.project(b, Mode::Eval, r1);
  CHECK(p1.cols() == 256);
  CHECK(p1 == net.project(b, Mode::Eval, r2));
  CHECK_THROWS_AS(net.project(MatrixXd::Ones(1, 4), Mode::Eval, rng), DimensionError);
}

TEST_CASE("train mode without dropout equals eval mode under matching batchnorm stats") {
  SeededRng rng(4);
  ProjectionConfig cfg{6, 5, 0.0};
  Sequential<double> proj = make_projection<double>(3, cfg, rng);
  const MatrixXd x = random_matrix(8, 3, rng);

  // Run the projection's first fc to get the batch statistics that train-mode
  // batchnorm will use, then install them as the running statistics.
  auto& fc = dynamic_cast<Dense<double>&>(proj[0]);
  const MatrixXd h = fc.forward(x, Mode::Eval, rng).output;
  const RowVector<double> mean = h.colwise().mean();
  const RowVector<double> var = (h.rowwise() - mean).array().square().colwise().mean();
  auto buffers = proj.buffers();
  *buffers[0].second = mean;
  *buffers[1].second = var;

  const MatrixXd eval = proj.forward(x, Mode::Eval, rng);
  const MatrixXd train = proj.forward(x, Mode::Train, rng);
  CHECK((eval - train).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("class and cluster heads produce probability vectors") {
  SeededRng rng(5);
  ScanNet<double> net(small_mlp(), {4, 0, 0.5}, 2, 5, rng);
  net.class_head().weight().value.setZero();
  const MatrixXd f = random_matrix(3, 4, rng);
  const MatrixXd p = net.predict_class(f);
  CHECK((p.array() - 0.5).abs().maxCoeff() < 1e-15);

  net.cluster_head().weight().value.setZero();
  CHECK((net.predict_cluster(f).array() - 0.2).abs().maxCoeff() < 1e-15);

  ScanNet<double> other(small_mlp(), {4, 0, 0.5}, 2, 5, rng);
  const MatrixXd q = other.predict_cluster(random_matrix(10, 4, rng));
  CHECK((q.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-6);
  CHECK(q.minCoeff() >= 0.0);
  CHECK_THROWS_AS(other.predict_class(MatrixXd::Ones(1, 3)), DimensionError);
}

TEST_CASE("softmax arithmetic and shift invariance") {
  MatrixXd logits(1, 2);
  logits << std::log(3.0), 0.0;
  const MatrixXd p = softmax_rows(logits);
  CHECK(p(0, 0) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(p(0, 1) == doctest::Approx(0.25).epsilon(1e-15));

  SeededRng rng(6);
  const MatrixXd z = random_matrix(5, 4, rng);
  const MatrixXd shifted = (z.array() + 123.0).matrix();
  Eigen::Index a = 0, b = 0;
  for (Eigen::Index i = 0; i < 5; ++i) {
    softmax_rows(z).row(i).maxCoeff(&a);
    softmax_rows(shifted).row(i).maxCoeff(&b);
    CHECK(a == b);
  }
}

TEST_CASE("cluster count rule and head constraint") {
  CHECK(default_cluster_count(20) == 50);
  CHECK(default_cluster_count(4) == 10);
  SeededRng rng;
  CHECK_THROWS_AS(ScanNet<double>(small_mlp(), {4, 0, 0.5}, 3, 3, rng), ConfigError);
}

TEST_CASE("eval pipeline is a pure function") {
  SeededRng rng(7);
  ScanNet<double> net(small_mlp(), {4, 0, 0.5}, 2, 3, rng);
  const MatrixXd x = random_matrix(4, 6, rng);
  SeededRng r1(1), r2(2);
  const auto a = net.forward(x, Mode::Eval, r1);
  const auto b = net.forward(x, Mode::Eval, r2);
  CHECK(a.class_prob == b.class_prob);
  CHECK(a.cluster_prob == b.cluster_prob);
}

TEST_CASE("class loss through the whole network passes the gradient check") {
  for (auto variant : {EncoderVariant::Mlp, EncoderVariant::Conv4Lite}) {
    SeededRng rng(8);
    EncoderConfig e = small_mlp();
    if (variant == EncoderVariant::Conv4Lite) {
      e.variant = variant;
      e.input = {1, 16, 16};
      e.hidden = {2, 2, 2, 2};
    }
    ScanNet<double> net(e, {4, 3, 0.5}, 3, 4, rng);
    jitter_biases(net.params(false), rng);
    const MatrixXd x = random_matrix(4, e.input.size(), rng);
    const std::vector<int> y{0, 2, 1, 2};
    auto loss = [&](bool grad) {
      SeededRng r(77);
      auto acts = net.forward(x, Mode::Train, r, false);
      const CrossEntropy ce = class_ce(acts.class_prob, y);
      if (grad) net.backward(ce.grad_logits);
      return ce.loss;
    };
    auto params = net.params(false);
    CAPTURE(static_cast<int>(variant));
    CHECK(grad_check(loss, params) < 1e-5);
  }
}

TEST_CASE("state lists every persistent tensor under unique names") {
  SeededRng rng(9);
  ScanNet<double> net(small_mlp(), {4, 0, 0.5}, 2, 3, rng);
  auto state = net.state();
  std::set<std::string> names;
  for (auto& [name, m] : state) names.insert(name);
  CHECK(names.size() == state.size());
  CHECK(names.count("encoder.fc0.weight") == 1);
  CHECK(names.count("encoder.bn0.running_var") == 1);
  CHECK(names.count("head.cluster.bias.momentum") == 1);
}
