#pragma once

// A 4-sample batch through the full network with the complete objective
// class CE + cluster CE + lambda * purity. Shared by the loss tests and the
// acceptance binary.

#include <cmath>
#include <optional>
#include <vector>

#include "scan/gradcheck.hpp"
#include "scan/loss.hpp"
#include "scan/memory.hpp"
#include "scan/model.hpp"
#include "oracles.hpp"

namespace scan::testing {

struct ToyScan {
  ScanNet<double> net;
  MatrixXd x;
  std::vector<int> y;
  std::vector<int> pseudo;
  std::vector<std::optional<Triplet>> triplets;
  double alpha = 0.3;
  double lambda = 1.0;

  LossBreakdown evaluate(bool grad) {
    SeededRng r(77);  // fixed dropout mask
    auto acts = net.forward(x, Mode::Train, r, true);
    const CrossEntropy cls = class_ce(acts.class_prob, y);
    const CrossEntropy clu = cluster_ce(acts.cluster_prob, pseudo);
    const PurityLoss pur = purity_loss(normalize_rows(acts.embedding), triplets, alpha);
    if (grad) {
      const MatrixXd d_emb = lambda * normalize_rows_backward(acts.embedding, pur.grad_anchors);
      net.backward(cls.grad_logits, &clu.grad_logits, &d_emb);
    }
    LossBreakdown b = total_loss(cls.loss, clu.loss, pur.loss, lambda);
    b.active_triplets = pur.active;
    return b;
  }

  double max_grad_error() {
    auto params = net.params(true);
    return grad_check([&](bool g) { return evaluate(g).total; }, params);
  }
};

inline ToyScan make_toy_scan(std::uint64_t seed) {
  SeededRng rng(seed);
  EncoderConfig enc;
  enc.input = {1, 1, 5};
  enc.hidden = {6};
  enc.backbone_dim = 4;
  ScanNet<double> net(enc, {8, 6, 0.2}, 2, 3, rng);
  // A positive output bias keeps every embedding entry off the final ReLU
  // kink and every row away from zero, where normalizing is not smooth.
  const auto params = net.params(true);
  jitter_biases(params, rng);
  for (auto* p : params)
    if (p->name == "projection.fc1.bias") p->value.setConstant(2.0);
  MatrixXd x(4, 5);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();

  // Memory of 6 rows: two classes mixed inside cluster 0 so anchors 0..3 all
  // have cross-class negatives.
  MatrixXd mem(6, 8);
  for (Eigen::Index i = 0; i < mem.size(); ++i) mem.data()[i] = rng.normal();
  Clustering c;
  c.centroids = MatrixXd::Zero(3, 8);
  c.assignments = {0, 0, 0, 0, 1, 2};
  MemoryBank bank(mem, {0, 1, 0, 1, 0, 1}, 2, c);

  ToyScan toy{std::move(net), x, {0, 1, 0, 1}, {0, 0, 1, 2}, {}, 0.3, 1.0};
  // Mined triplets are then moved relative to the current anchors so every
  // hinge is well inside its active region.
  SeededRng r(77);
  const MatrixXd emb = toy.net.forward(x, Mode::Train, r, true).embedding;
  if (emb.minCoeff() < 0.1) throw Error("toy objective: embedding entry near the ReLU kink");
  const MatrixXd f = normalize_rows(emb);
  for (Eigen::Index i = 0; i < 4; ++i) {
    auto t = mine_triplet(bank, i);
    // |f - p|^2 = 0.5 and |f - n|^2 = 0.1: each hinge is 0.7
    t->positive = f.row(i) + std::sqrt(0.5) * t->positive.normalized();
    t->negative = f.row(i) + std::sqrt(0.1) * t->negative.normalized();
    toy.triplets.push_back(t);
  }
  return toy;
}

}  // namespace scan::testing
