#include "scan/fewshot.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

#include "scan/error.hpp"
#include "scan/layers.hpp"
#include "scan/rng.hpp"

namespace scan {

void validate(const EvalConfig& cfg) {
  if (cfg.n_way < 2) throw ConfigError("eval: n_way must be >= 2");
  if (cfg.k_shot < 1) throw ConfigError("eval: k_shot must be >= 1");
  if (cfg.q_per_class < 1) throw ConfigError("eval: q_per_class must be >= 1");
  if (cfg.episodes < 1) throw ConfigError("eval: episodes must be >= 1");
  if (cfg.budget.steps < 0 || !(cfg.budget.lr > 0) || cfg.budget.l2 < 0)
    throw ConfigError("eval: classifier budget needs steps >= 0, lr > 0, l2 >= 0");
}

Episode sample_episode(std::span<const int> labels, const EvalConfig& cfg, std::uint64_t index) {
  validate(cfg);
  int n_classes = 0;
  for (int l : labels) {
    if (l < 0) throw DimensionError("sample_episode: negative label");
    n_classes = std::max(n_classes, l + 1);
  }
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(n_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) members[static_cast<std::size_t>(labels[i])].push_back(i);

  const auto need = static_cast<std::size_t>(cfg.k_shot + cfg.q_per_class);
  std::vector<int> eligible;
  std::vector<int> deficient;
  for (int c = 0; c < n_classes; ++c)
    (members[static_cast<std::size_t>(c)].size() >= need ? eligible : deficient).push_back(c);
  if (static_cast<int>(eligible.size()) < cfg.n_way) {
    std::ostringstream os;
    os << "sample_episode: " << cfg.n_way << "-way " << cfg.k_shot << "-shot with q=" << cfg.q_per_class
       << " needs " << cfg.n_way << " classes with >= " << need << " samples; only " << eligible.size()
       << " qualify. Deficient classes:";
    for (int c : deficient) os << ' ' << c << " (" << members[static_cast<std::size_t>(c)].size() << ")";
    throw DataError(os.str());
  }

  SeededRng rng = SeededRng(cfg.seed).substream("episode", index);
  rng.shuffle(std::span<int>(eligible));
  Episode ep;
  for (int e = 0; e < cfg.n_way; ++e) {
    const int cls = eligible[static_cast<std::size_t>(e)];
    ep.class_map.push_back(cls);
    std::vector<std::size_t> pool = members[static_cast<std::size_t>(cls)];
    // Partial Fisher-Yates: the first K + q entries are a uniform draw.
    for (std::size_t i = 0; i < need; ++i) std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
    for (int k = 0; k < cfg.k_shot; ++k) {
      ep.support_ids.push_back(pool[static_cast<std::size_t>(k)]);
      ep.support_labels.push_back(e);
    }
    for (int q = 0; q < cfg.q_per_class; ++q) {
      ep.query_ids.push_back(pool[static_cast<std::size_t>(cfg.k_shot + q)]);
      ep.query_labels.push_back(e);
    }
  }
  return ep;
}

MatrixXd LinearClassifier::predict_proba(const MatrixXd& features) const {
  MatrixXd logits = features * weight;
  logits.rowwise() += bias;
  return softmax_rows(logits);
}

std::vector<int> LinearClassifier::predict(const MatrixXd& features) const {
  MatrixXd logits = features * weight;
  logits.rowwise() += bias;
  std::vector<int> out(static_cast<std::size_t>(features.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c)
      if (logits(i, c) > logits(i, best)) best = c;
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

LinearClassifier fit_episodic_classifier(const MatrixXd& features, std::span<const int> labels,
                                         int n_classes, const ClassifierBudget& budget) {
  if (static_cast<Eigen::Index>(labels.size()) != features.rows() || features.rows() == 0)
    throw DimensionError("fit_episodic_classifier: need one label per (non-empty) feature row");
  LinearClassifier clf;
  clf.weight = MatrixXd::Zero(features.cols(), n_classes);
  clf.bias = RowVector<double>::Zero(n_classes);

  bool identical = true;
  for (Eigen::Index i = 1; i < features.rows() && identical; ++i)
    identical = features.row(i) == features.row(0);
  if (identical && features.rows() > 1) {
    clf.degenerate = true;
    clf.final_loss = std::log(static_cast<double>(n_classes));
    return clf;
  }

  MatrixXd onehot = MatrixXd::Zero(features.rows(), n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= n_classes) throw DimensionError("fit_episodic_classifier: label out of range");
    onehot(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  const auto n = static_cast<double>(features.rows());
  auto loss_of = [&](const MatrixXd& p) {
    double ce = 0.0;
    for (Eigen::Index i = 0; i < p.rows(); ++i)
      ce -= std::log(std::max(p(i, labels[static_cast<std::size_t>(i)]), 1e-300));
    return ce / n + 0.5 * budget.l2 * clf.weight.squaredNorm();
  };
  for (int step = 0; step < budget.steps; ++step) {
    const MatrixXd residual = (clf.predict_proba(features) - onehot) / n;
    const MatrixXd grad_w = features.transpose() * residual + budget.l2 * clf.weight;
    const RowVector<double> grad_b = residual.colwise().sum();
    clf.weight -= budget.lr * grad_w;
    clf.bias -= budget.lr * grad_b;
  }
  clf.final_loss = loss_of(clf.predict_proba(features));
  return clf;
}

EpisodeResult score_predictions(std::span<const int> truth, std::span<const int> predicted, int n_classes) {
  if (truth.size() != predicted.size() || truth.empty())
    throw DimensionError("score_predictions: truth and predictions must be equal-length and non-empty");
  EpisodeResult r;
  r.confusion = Eigen::MatrixXi::Zero(n_classes, n_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) ++r.confusion(truth[i], predicted[i]);
  const int total = static_cast<int>(truth.size());
  r.accuracy = static_cast<double>(r.confusion.trace()) / total;
  for (int c = 0; c < n_classes; ++c) {
    const int tp = r.confusion(c, c);
    const int fn = r.confusion.row(c).sum() - tp;
    const int fp = r.confusion.col(c).sum() - tp;
    const int tn = total - tp - fn - fp;
    const int f1_den = 2 * tp + fp + fn;
    r.macro_f1 += f1_den > 0 ? 2.0 * tp / f1_den : 0.0;
    r.sensitivity += tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
    r.specificity += tn + fp > 0 ? static_cast<double>(tn) / (tn + fp) : 0.0;
  }
  r.macro_f1 /= n_classes;
  r.sensitivity /= n_classes;
  r.specificity /= n_classes;
  return r;
}

namespace {

MatrixXd gather_rows(const MatrixXd& features, const std::vector<std::size_t>& ids) {
  MatrixXd out(static_cast<Eigen::Index>(ids.size()), features.cols());
  for (std::size_t i = 0; i < ids.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(ids[i]));
  return out;
}

}  // namespace

EpisodeResult evaluate_episode(const Episode& episode, const MatrixXd& features, const EvalConfig& cfg) {
  const MatrixXd support = normalize_rows(gather_rows(features, episode.support_ids));
  const MatrixXd query = normalize_rows(gather_rows(features, episode.query_ids));
  const int n = static_cast<int>(episode.class_map.size());
  const LinearClassifier clf = fit_episodic_classifier(support, episode.support_labels, n, cfg.budget);
  return score_predictions(episode.query_labels, clf.predict(query), n);
}

Summary aggregate(std::span<const double> values) {
  if (values.size() < 2) throw DataError("aggregate: need at least two episodes");
  const auto e = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / e;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double stddev = std::sqrt(ss / (e - 1.0));
  return {mean, 1.96 * stddev / std::sqrt(e)};
}

EvalReport run_episodes(const MatrixXd& features, std::span<const int> labels, const EvalConfig& cfg) {
  validate(cfg);
  if (static_cast<Eigen::Index>(labels.size()) != features.rows())
    throw DimensionError("run_episodes: label count does not match feature rows");
  EvalReport report;
  std::vector<double> acc;
  std::vector<double> f1;
  for (int i = 0; i < cfg.episodes; ++i) {
    const Episode ep = sample_episode(labels, cfg, static_cast<std::uint64_t>(i));
    report.episodes.push_back(evaluate_episode(ep, features, cfg));
    acc.push_back(report.episodes.back().accuracy);
    f1.push_back(report.episodes.back().macro_f1);
  }
  if (cfg.episodes >= 2) {
    report.accuracy = aggregate(acc);
    report.macro_f1 = aggregate(f1);
  } else {
    report.accuracy = {acc.front(), 0.0};
    report.macro_f1 = {f1.front(), 0.0};
  }
  return report;
}

namespace {

struct ClassStats {
  MatrixXd normalized;
  MatrixXd means;  // k x d
  std::vector<int> counts;
};

ClassStats class_stats(const MatrixXd& features, std::span<const int> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != features.rows())
    throw DimensionError("discriminability: label count does not match feature rows");
  int k = 0;
  for (int l : labels) {
    if (l < 0) throw DimensionError("discriminability: negative label");
    k = std::max(k, l + 1);
  }
  ClassStats s;
  s.normalized = features;
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const double n = features.row(i).norm();
    if (!(n > 0)) throw NumericError("discriminability: feature row " + std::to_string(i) + " has zero norm");
    s.normalized.row(i) /= n;
  }
  s.means = MatrixXd::Zero(k, features.cols());
  s.counts.assign(static_cast<std::size_t>(k), 0);
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const int l = labels[static_cast<std::size_t>(i)];
    s.means.row(l) += s.normalized.row(i);
    ++s.counts[static_cast<std::size_t>(l)];
  }
  for (int c = 0; c < k; ++c) {
    if (s.counts[static_cast<std::size_t>(c)] == 0)
      throw DataError("discriminability: class " + std::to_string(c) + " has no samples");
    s.means.row(c) /= s.counts[static_cast<std::size_t>(c)];
  }
  return s;
}

double inter_of(const ClassStats& s) {
  const Eigen::Index k = s.means.rows();
  if (k < 2) throw DataError("d_inter: need at least two classes");
  double sum = 0.0;
  for (Eigen::Index m = 0; m < k; ++m)
    for (Eigen::Index n = 0; n < k; ++n)
      if (m != n) sum += (s.means.row(m) - s.means.row(n)).squaredNorm();
  return sum / static_cast<double>(k * (k - 1));
}

double intra_of(const ClassStats& s, std::span<const int> labels) {
  const Eigen::Index k = s.means.rows();
  std::vector<double> per_class(static_cast<std::size_t>(k), 0.0);
  for (Eigen::Index i = 0; i < s.normalized.rows(); ++i) {
    const int l = labels[static_cast<std::size_t>(i)];
    per_class[static_cast<std::size_t>(l)] += (s.normalized.row(i) - s.means.row(l)).squaredNorm();
  }
  double sum = 0.0;
  for (Eigen::Index c = 0; c < k; ++c)
    sum += per_class[static_cast<std::size_t>(c)] / s.counts[static_cast<std::size_t>(c)];
  return sum / static_cast<double>(k);
}

}  // namespace

double d_inter(const MatrixXd& features, std::span<const int> labels) {
  return inter_of(class_stats(features, labels));
}

double d_intra(const MatrixXd& features, std::span<const int> labels) {
  return intra_of(class_stats(features, labels), labels);
}

std::optional<double> phi(double d_inter_value, double d_intra_value) {
  if (d_intra_value == 0.0) return std::nullopt;
  return d_inter_value / d_intra_value;
}

DiscriminabilityReport discriminability(const MatrixXd& features, std::span<const int> labels) {
  const ClassStats s = class_stats(features, labels);
  DiscriminabilityReport r;
  r.d_inter = inter_of(s);
  r.d_intra = intra_of(s, labels);
  r.phi = phi(r.d_inter, r.d_intra);
  return r;
}

}  // namespace scan
