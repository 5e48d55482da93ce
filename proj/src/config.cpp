#include "scan/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "scan/error.hpp"
#include "scan/loss.hpp"
#include "scan/rng.hpp"

namespace scan {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Shortest representation that parses back to the same double.
std::string format_double(double v) {
  char buf[40];
  for (int precision = 6; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
    if (std::stod(buf) == v) break;
  }
  return buf;
}

long long parse_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError("config: '" + key + "' expects an integer, got '" + v + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: '" + key + "' expects true or false, got '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::istringstream is(v);
  std::string item;
  while (std::getline(is, item, ',')) out.push_back(static_cast<int>(parse_int(key, trim(item))));
  if (out.empty()) throw ConfigError("config: '" + key + "' expects a comma-separated integer list");
  return out;
}

std::string format_int_list(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field int_field(T RunConfig::*m) {
  return {[m](RunConfig& c, const std::string& k, const std::string& v) { c.*m = static_cast<T>(parse_int(k, v)); },
          [m](const RunConfig& c) { return std::to_string(c.*m); }};
}

Field double_field(double RunConfig::*m) {
  return {[m](RunConfig& c, const std::string& k, const std::string& v) { c.*m = parse_double(k, v); },
          [m](const RunConfig& c) { return format_double(c.*m); }};
}

Field bool_field(bool RunConfig::*m) {
  return {[m](RunConfig& c, const std::string& k, const std::string& v) { c.*m = parse_bool(k, v); },
          [m](const RunConfig& c) { return std::string(c.*m ? "true" : "false"); }};
}

Field list_field(std::vector<int> RunConfig::*m) {
  return {[m](RunConfig& c, const std::string& k, const std::string& v) { c.*m = parse_int_list(k, v); },
          [m](const RunConfig& c) { return format_int_list(c.*m); }};
}

Field choice_field(std::string RunConfig::*m, std::vector<std::string> choices) {
  return {[m, choices](RunConfig& c, const std::string& k, const std::string& v) {
            for (const auto& ch : choices)
              if (v == ch) {
                c.*m = v;
                return;
              }
            std::string all;
            for (const auto& ch : choices) all += (all.empty() ? "" : "|") + ch;
            throw ConfigError("config: '" + k + "' must be one of " + all + ", got '" + v + "'");
          },
          [m](const RunConfig& c) { return c.*m; }};
}

// Ordered as written by serialize_config.
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"seed", {[](RunConfig& c, const std::string& k, const std::string& v) {
                  const auto n = parse_int(k, v);
                  if (n < 0) throw ConfigError("config: seed must be non-negative");
                  c.seed = static_cast<std::uint64_t>(n);
                },
                [](const RunConfig& c) { return std::to_string(c.seed); }}},
      {"n_base_classes", int_field(&RunConfig::n_base_classes)},
      {"n_novel_classes", int_field(&RunConfig::n_novel_classes)},
      {"base_subclusters", list_field(&RunConfig::base_subclusters)},
      {"novel_subclusters", list_field(&RunConfig::novel_subclusters)},
      {"samples_per_class", int_field(&RunConfig::samples_per_class)},
      {"sample_kind", choice_field(&RunConfig::sample_kind, {"vector", "image"})},
      {"vector_dim", int_field(&RunConfig::vector_dim)},
      {"image_size", int_field(&RunConfig::image_size)},
      {"inter_class_separation", double_field(&RunConfig::inter_class_separation)},
      {"intra_subcluster_std", double_field(&RunConfig::intra_subcluster_std)},
      {"subcluster_spread", double_field(&RunConfig::subcluster_spread)},
      {"encoder", choice_field(&RunConfig::encoder, {"mlp", "conv4lite"})},
      {"encoder_hidden", list_field(&RunConfig::encoder_hidden)},
      {"backbone_dim", int_field(&RunConfig::backbone_dim)},
      {"embed_dim", int_field(&RunConfig::embed_dim)},
      {"projection_hidden", int_field(&RunConfig::projection_hidden)},
      {"dropout", double_field(&RunConfig::dropout)},
      {"lr", double_field(&RunConfig::lr)},
      {"momentum", double_field(&RunConfig::momentum)},
      {"weight_decay", double_field(&RunConfig::weight_decay)},
      {"epochs", int_field(&RunConfig::epochs)},
      {"batch_size", int_field(&RunConfig::batch_size)},
      {"alpha", double_field(&RunConfig::alpha)},
      {"beta", double_field(&RunConfig::beta)},
      {"lambda", double_field(&RunConfig::lambda)},
      {"cluster_count", int_field(&RunConfig::cluster_count)},
      {"warmup_epochs", int_field(&RunConfig::warmup_epochs)},
      {"cluster_branch", bool_field(&RunConfig::cluster_branch)},
      {"reassign_per_batch", bool_field(&RunConfig::reassign_per_batch)},
      {"kmeans_max_iters", int_field(&RunConfig::kmeans_max_iters)},
      {"kmeans_tol", double_field(&RunConfig::kmeans_tol)},
      {"kmeans_restarts", int_field(&RunConfig::kmeans_restarts)},
      {"augment", bool_field(&RunConfig::augment)},
      {"hflip_prob", double_field(&RunConfig::hflip_prob)},
      {"crop_pad", int_field(&RunConfig::crop_pad)},
      {"rotation_degrees", double_field(&RunConfig::rotation_degrees)},
      {"brightness_lo", double_field(&RunConfig::brightness_lo)},
      {"brightness_hi", double_field(&RunConfig::brightness_hi)},
      {"checkpoint_every", int_field(&RunConfig::checkpoint_every)},
      {"n_way", int_field(&RunConfig::n_way)},
      {"k_shot", int_field(&RunConfig::k_shot)},
      {"query_per_class", int_field(&RunConfig::query_per_class)},
      {"episodes", int_field(&RunConfig::episodes)},
      {"classifier_steps", int_field(&RunConfig::classifier_steps)},
      {"classifier_lr", double_field(&RunConfig::classifier_lr)},
      {"classifier_l2", double_field(&RunConfig::classifier_l2)},
  };
  return table;
}

}  // namespace

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& [name, field] : fields()) {
    if (name == key) {
      field.set(cfg, key, value);
      return;
    }
  }
  throw ConfigError("config: unknown key '" + key + "'");
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  std::map<std::string, int> seen;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (seen.count(key))
      throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    seen[key] = lineno;
    set_config_value(cfg, key, value);
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& [name, field] : fields()) out += name + " = " + field.get(cfg) + "\n";
  return out;
}

std::uint64_t config_hash(const RunConfig& cfg) { return fnv1a64(serialize_config(cfg)); }

SynthConfig synth_config(const RunConfig& cfg) {
  SynthConfig s;
  s.n_base_classes = cfg.n_base_classes;
  s.n_novel_classes = cfg.n_novel_classes;
  s.base_subclusters = cfg.base_subclusters;
  s.novel_subclusters = cfg.novel_subclusters;
  s.samples_per_class = cfg.samples_per_class;
  s.kind = cfg.sample_kind == "image" ? SampleKind::Image : SampleKind::Vector;
  s.vector_dim = cfg.vector_dim;
  s.image_size = cfg.image_size;
  s.inter_class_separation = cfg.inter_class_separation;
  s.intra_subcluster_std = cfg.intra_subcluster_std;
  s.subcluster_spread = cfg.subcluster_spread;
  s.seed = cfg.seed;
  return s;
}

TrainConfig train_config(const RunConfig& cfg) {
  TrainConfig t;
  t.sgd = {cfg.lr, cfg.momentum, cfg.weight_decay};
  t.epochs = cfg.epochs;
  t.batch_size = cfg.batch_size;
  t.loss.alpha = cfg.alpha;
  t.loss.beta = cfg.beta;
  t.loss.lambda = cfg.lambda;
  t.loss.n_clusters = cfg.cluster_count;
  t.loss.warmup_epochs = cfg.warmup_epochs;
  t.cluster_branch = cfg.cluster_branch;
  t.reassign_per_batch = cfg.reassign_per_batch;
  t.kmeans_max_iters = cfg.kmeans_max_iters;
  t.kmeans_tol = cfg.kmeans_tol;
  t.kmeans_restarts = cfg.kmeans_restarts;
  t.augment = cfg.augment;
  t.augment_cfg = {cfg.hflip_prob, cfg.crop_pad, cfg.rotation_degrees, cfg.brightness_lo, cfg.brightness_hi};
  return t;
}

EvalConfig eval_config(const RunConfig& cfg) {
  EvalConfig e;
  e.n_way = cfg.n_way;
  e.k_shot = cfg.k_shot;
  e.q_per_class = cfg.query_per_class;
  e.episodes = cfg.episodes;
  e.seed = cfg.seed;
  e.budget = {cfg.classifier_steps, cfg.classifier_lr, cfg.classifier_l2};
  return e;
}

ProjectionConfig projection_config(const RunConfig& cfg) {
  return {cfg.embed_dim, cfg.projection_hidden, cfg.dropout};
}

EncoderConfig encoder_config(const RunConfig& cfg, const Shape& sample_shape) {
  EncoderConfig e;
  e.variant = cfg.encoder == "conv4lite" ? EncoderVariant::Conv4Lite : EncoderVariant::Mlp;
  e.hidden.assign(cfg.encoder_hidden.begin(), cfg.encoder_hidden.end());
  e.backbone_dim = cfg.backbone_dim;
  if (sample_shape.size() == 3) {
    e.input = {static_cast<Eigen::Index>(sample_shape[0]), static_cast<Eigen::Index>(sample_shape[1]),
               static_cast<Eigen::Index>(sample_shape[2])};
  } else {
    e.input = {1, 1, static_cast<Eigen::Index>(shape_size(sample_shape))};
  }
  if (e.variant == EncoderVariant::Conv4Lite) {
    if (sample_shape.size() != 3) throw ConfigError("config: conv4lite needs image samples");
    if (cfg.encoder_hidden.size() != 4) e.hidden = {8, 16, 16, 16};
  }
  return e;
}

int resolved_cluster_count(const RunConfig& cfg, int n_classes) {
  return cfg.cluster_count > 0 ? cfg.cluster_count : default_cluster_count(n_classes);
}

}  // namespace scan
