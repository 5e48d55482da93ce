#include "scan/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>

#include "scan/checkpoint.hpp"
#include "scan/cluster.hpp"
#include "scan/data_io.hpp"
#include "scan/error.hpp"
#include "scan/fewshot.hpp"
#include "scan/pretrain.hpp"

namespace scan {

namespace fs = std::filesystem;

namespace {

constexpr const char* kLogHeader =
    "epoch,loss_class,loss_cluster,loss_purity,loss_total,cluster_error_rate,active_triplets,skipped_triplets,"
    "nonempty_clusters";
constexpr const char* kOccupancyHeader = "epoch,cluster,count";

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string fmt_fixed(double v, int digits) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
}

std::string csv_with_header(const std::string& title, const std::string& header,
                            const std::vector<std::string>& rows) {
  std::string s = "# " + title + ", created " + iso_timestamp() + "\n" + header + "\n";
  for (const auto& r : rows) s += r + "\n";
  return s;
}

std::string log_row(const EpochRecord& r) {
  std::string s = std::to_string(r.epoch) + "," + fmt(r.loss.class_loss) + "," + fmt(r.loss.cluster_loss) + "," +
                  fmt(r.loss.purity_loss) + "," + fmt(r.loss.total) + ",";
  if (r.cluster_error_rate) s += fmt(*r.cluster_error_rate);
  s += "," + std::to_string(r.loss.active_triplets) + "," + std::to_string(r.loss.skipped_triplets) + "," +
       std::to_string(r.nonempty_clusters);
  return s;
}

DatasetManifest open_manifest(const fs::path& data_dir) {
  const fs::path p = data_dir / kManifestName;
  if (!fs::exists(p)) throw DataError("no manifest at " + p.string());
  return read_manifest(p);
}

bool has_split(const DatasetManifest& m, Split s) {
  for (const auto& r : m.records)
    if (r.split == s) return true;
  return false;
}

SplitData require_split(const DatasetManifest& m, Split s) {
  if (!has_split(m, s)) throw DataError("manifest has no " + to_string(s) + " split");
  return load_split(m, s);
}

void check_geometry(const LoadedCheckpoint& ck, const SplitData& split) {
  if (split.sample_shape != ck.state.meta.sample_shape)
    throw DataError("sample shape " + shape_string(split.sample_shape) + " does not match checkpoint shape " +
                    shape_string(ck.state.meta.sample_shape));
}

void dump_embeddings(const fs::path& dir, const std::string& stem, const MatrixXd& emb, const SplitData& split) {
  write_tensor_file(dir / (stem + ".sct"), Tensor<float>::from_matrix(emb.cast<float>()));
  std::vector<std::string> rows;
  for (std::size_t i = 0; i < split.size(); ++i)
    rows.push_back(std::to_string(i) + "," + split.paths[i] + "," + split.class_names[static_cast<std::size_t>(split.labels[i])] +
                   "," + std::to_string(split.labels[i]));
  write_file(dir / (stem + ".csv"), csv_with_header("scan embeddings " + stem, "row,path,class_label,class_id", rows));
}

}  // namespace

std::string iso_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

RunConfig resolve_config(const GlobalOptions& g) {
  RunConfig cfg = g.config_path ? load_config(*g.config_path) : RunConfig{};
  if (g.seed) cfg.seed = *g.seed;
  return cfg;
}

// ---------------------------------------------------------------------------
// synth

void cmd_synth(const RunConfig& cfg, const fs::path& out_dir, bool force, std::ostream& out) {
  if (fs::exists(out_dir) && !fs::is_empty(out_dir)) {
    if (!force) throw ConfigError("output directory " + out_dir.string() + " is not empty (use --force)");
    fs::remove(out_dir / kManifestName);
    fs::remove_all(out_dir / "samples");
  }
  const SynthConfig scfg = synth_config(cfg);
  const DatasetManifest manifest = generate_synthetic(scfg, out_dir);

  std::map<std::string, std::pair<std::string, std::map<int, int>>> table;
  for (const auto& r : manifest.records) {
    auto& row = table[r.class_label];
    row.first = to_string(r.split);
    ++row.second[r.subcluster_id.value_or(-1)];
  }
  char line[160];
  std::snprintf(line, sizeof(line), "%-10s %-6s %-11s %s\n", "class", "split", "subclusters", "samples");
  out << line;
  for (const auto& [name, row] : table) {
    int total = 0;
    for (const auto& [id, n] : row.second) total += n;
    std::snprintf(line, sizeof(line), "%-10s %-6s %-11zu %d\n", name.c_str(), row.first.c_str(), row.second.size(),
                  total);
    out << line;
  }
  out << "wrote " << manifest.records.size() << " samples to " << out_dir.string() << "\n";
}

// ---------------------------------------------------------------------------
// pretrain

std::string method_tag(const PretrainOptions& opts) {
  if (opts.baseline) return "baseline";
  if (opts.no_purity) return "no_purity";
  return "scan";
}

RunConfig effective_config(RunConfig cfg, const PretrainOptions& opts) {
  if (opts.baseline) {
    cfg.cluster_branch = false;
    cfg.lambda = 0.0;
  }
  if (opts.no_purity) cfg.lambda = 0.0;
  return cfg;
}

void cmd_pretrain(const RunConfig& base_cfg, const PretrainOptions& opts, bool force, std::ostream& out) {
  if (opts.baseline && opts.no_purity) throw ConfigError("--baseline and --no-purity are exclusive");
  if (opts.resume && force) throw ConfigError("--resume and --force are exclusive");
  const RunConfig cfg = effective_config(base_cfg, opts);
  const TrainConfig tcfg = train_config(cfg);
  validate(tcfg);
  if (cfg.checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");

  const DatasetManifest manifest = open_manifest(opts.data_dir);
  const SplitData base = require_split(manifest, Split::Base);

  DirectoryLock lock(opts.out_dir);
  const fs::path ckpt_dir = opts.out_dir / "checkpoint";
  const fs::path log_path = opts.out_dir / "training_log.csv";
  const fs::path occ_path = opts.out_dir / "cluster_occupancy.csv";
  if (fs::exists(ckpt_dir) && !opts.resume) {
    if (!force) throw ConfigError("checkpoint already exists in " + opts.out_dir.string() + " (use --resume or --force)");
    fs::remove_all(ckpt_dir);
    fs::remove(log_path);
    fs::remove(occ_path);
  }

  TrainingData data;
  data.samples = base.samples;
  data.labels = base.labels;
  data.n_classes = base.n_classes();
  if (base.sample_shape.size() == 3) data.image_shape = base.sample_shape;
  const int n_clusters = resolved_cluster_count(cfg, data.n_classes);

  CheckpointState state;
  state.meta.seed = cfg.seed;
  state.meta.config_hash = config_hash(cfg);
  state.meta.method = method_tag(opts);
  state.meta.sample_shape = base.sample_shape;
  state.meta.n_classes = data.n_classes;
  state.meta.n_clusters = n_clusters;
  state.config = cfg;

  std::optional<Trainer> trainer;
  if (opts.resume) {
    LoadedCheckpoint ck = load_checkpoint(ckpt_dir);
    if (ck.state.meta.config_hash != state.meta.config_hash)
      throw ConfigError("resume mismatch: checkpoint config hash " + std::to_string(ck.state.meta.config_hash) +
                        " differs from current " + std::to_string(state.meta.config_hash));
    if (ck.state.meta.sample_shape != base.sample_shape || ck.state.meta.n_classes != data.n_classes)
      throw DataError("resume mismatch: dataset geometry differs from the checkpoint");
    trainer.emplace(tcfg, std::move(data), std::move(ck.net), cfg.seed);
    trainer->restore(ck.state.meta.epoch, std::move(ck.state.memory), {});
    state.log_rows = std::move(ck.state.log_rows);
    state.occupancy_rows = std::move(ck.state.occupancy_rows);
    out << "resuming " << state.meta.method << " from epoch " << ck.state.meta.epoch << "\n";
  } else {
    trainer.emplace(tcfg, std::move(data), build_network(cfg, base.sample_shape, state.meta.n_classes, n_clusters),
                    cfg.seed);
  }

  auto save = [&]() {
    state.meta.epoch = trainer->epochs_done();
    state.memory = trainer->memory();
    save_checkpoint(ckpt_dir, state, trainer->net());
    write_file(log_path, csv_with_header("scan pretrain log (" + state.meta.method + ")", kLogHeader, state.log_rows));
    write_file(occ_path, csv_with_header("scan cluster occupancy (" + state.meta.method + ")", kOccupancyHeader,
                                         state.occupancy_rows));
  };

  while (!trainer->finished()) {
    trainer->run_epoch();
    const EpochRecord& rec = trainer->log().back();
    state.log_rows.push_back(log_row(rec));
    for (std::size_t c = 0; c < rec.occupancy.size(); ++c)
      state.occupancy_rows.push_back(std::to_string(rec.epoch) + "," + std::to_string(c) + "," +
                                     std::to_string(rec.occupancy[c]));
    out << "epoch " << rec.epoch << "/" << cfg.epochs << "  loss " << fmt_fixed(rec.loss.total, 4);
    if (rec.cluster_error_rate) out << "  cluster_error " << fmt_fixed(*rec.cluster_error_rate, 4);
    out << "\n";
    const bool periodic = cfg.checkpoint_every > 0 && rec.epoch % cfg.checkpoint_every == 0;
    const bool stopping = opts.stop_after && rec.epoch >= *opts.stop_after;
    if (periodic || trainer->finished() || stopping) save();
    if (stopping && !trainer->finished()) {
      out << "stopped after epoch " << rec.epoch << "\n";
      return;
    }
  }
  if (cfg.epochs == 0 || trainer->log().empty()) save();
  out << "checkpoint written to " << ckpt_dir.string() << "\n";
}

// ---------------------------------------------------------------------------
// eval

void cmd_eval(const RunConfig& cfg, const EvalOptions& opts, std::ostream& out) {
  LoadedCheckpoint ck = load_checkpoint(opts.ckpt_dir / "checkpoint");
  const DatasetManifest manifest = open_manifest(opts.data_dir);
  const SplitData novel = require_split(manifest, Split::Novel);
  check_geometry(ck, novel);

  const EvalConfig ecfg = eval_config(cfg);
  validate(ecfg);
  const MatrixXd features = embed_backbone(ck.net, novel.samples);
  const EvalReport report = run_episodes(features, novel.labels, ecfg);

  const fs::path out_dir = opts.out_dir.value_or(opts.ckpt_dir / "eval");
  fs::create_directories(out_dir);
  std::vector<std::string> rows;
  for (std::size_t e = 0; e < report.episodes.size(); ++e)
    rows.push_back(std::to_string(e) + "," + fmt(report.episodes[e].accuracy) + "," +
                   fmt(report.episodes[e].macro_f1));
  write_file(out_dir / "episodes.csv", csv_with_header("scan eval episodes (" + ck.state.meta.method + ")",
                                                       "episode_index,accuracy,macro_f1", rows));

  const std::string protocol = std::to_string(ecfg.n_way) + "-way " + std::to_string(ecfg.k_shot) + "-shot";
  std::ostringstream summary;
  summary << protocol << ", q=" << ecfg.q_per_class << ", episodes=" << ecfg.episodes << ", seed=" << ecfg.seed
          << ", method=" << ck.state.meta.method << "\n"
          << "accuracy " << protocol << ": " << fmt_fixed(100 * report.accuracy.mean, 2) << " ± "
          << fmt_fixed(100 * report.accuracy.half_width, 2) << "\n"
          << "macro_f1 " << protocol << ": " << fmt_fixed(100 * report.macro_f1.mean, 2) << " ± "
          << fmt_fixed(100 * report.macro_f1.half_width, 2) << "\n";
  write_file(out_dir / "summary.txt", "# scan eval summary, created " + iso_timestamp() + "\n" + summary.str());
  out << summary.str();
}

// ---------------------------------------------------------------------------
// analyze

void cmd_analyze(const RunConfig& cfg, const AnalyzeOptions& opts, std::ostream& out) {
  LoadedCheckpoint ck = load_checkpoint(opts.ckpt_dir / "checkpoint");
  const DatasetManifest manifest = open_manifest(opts.data_dir);
  const SplitData base = require_split(manifest, Split::Base);
  const SplitData novel = require_split(manifest, Split::Novel);
  check_geometry(ck, base);
  check_geometry(ck, novel);
  const fs::path out_dir = opts.out_dir.value_or(opts.ckpt_dir / "analysis");
  fs::create_directories(out_dir);
  const std::string& method = ck.state.meta.method;

  // (a) base-split pseudo-label purity
  std::vector<int> clusters;
  const int k = ck.state.meta.n_clusters;
  if (ck.state.memory && ck.state.memory->size() == static_cast<Eigen::Index>(base.size())) {
    const auto labels = ck.state.memory->cluster_labels();
    clusters.assign(labels.begin(), labels.end());
  } else {
    SeededRng rng = SeededRng(cfg.seed).substream("analyze");
    const MatrixXd emb = normalize_rows(embed_projected(ck.net, base.samples));
    clusters = kmeans_fit(emb, {k, cfg.kmeans_max_iters, cfg.kmeans_tol, cfg.kmeans_restarts}, rng).assignments;
  }
  const double error = cluster_error_rate(clusters, base.labels);
  const auto occupancy = cluster_occupancy(clusters, k);
  std::vector<std::string> hist;
  for (std::size_t c = 0; c < occupancy.size(); ++c) hist.push_back(std::to_string(c) + "," + std::to_string(occupancy[c]));
  write_file(out_dir / "cluster_histogram.csv", csv_with_header("scan cluster histogram (" + method + ")",
                                                                "cluster,count", hist));

  // (b) novel-split discriminability of backbone features
  const MatrixXd novel_emb = embed_backbone(ck.net, novel.samples);
  const DiscriminabilityReport d = discriminability(novel_emb, novel.labels);
  const std::string phi_text = d.phi ? fmt(*d.phi) : "";
  write_file(out_dir / "discriminability.csv",
             csv_with_header("scan discriminability, novel split", "method,d_inter,d_intra,phi",
                             {method + "," + fmt(d.d_inter) + "," + fmt(d.d_intra) + "," + phi_text}));

  // (c) embeddings for external tools
  dump_embeddings(out_dir, "embeddings_base", embed_backbone(ck.net, base.samples), base);
  dump_embeddings(out_dir, "embeddings_novel", novel_emb, novel);

  std::ostringstream report;
  report << "method " << method << "\n"
         << "cluster_error_rate " << fmt_fixed(error, 4) << "\n"
         << "nonempty_clusters " << std::count_if(occupancy.begin(), occupancy.end(), [](int n) { return n > 0; })
         << "/" << k << "\n"
         << "d_inter " << fmt(d.d_inter) << "\n"
         << "d_intra " << fmt(d.d_intra) << "\n"
         << "phi " << (d.phi ? fmt(*d.phi) : "undefined") << "\n";
  write_file(out_dir / "analysis.txt", "# scan analysis, created " + iso_timestamp() + "\n" + report.str());
  out << report.str();
}

// ---------------------------------------------------------------------------
// dispatch

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"SCAN: sub-cluster-aware pre-training and few-shot evaluation"};
  app.require_subcommand(1);
  GlobalOptions g;
  std::string config_path;
  std::uint64_t seed = 0;
  auto* config_opt = app.add_option("--config", config_path, "flat key = value config file");
  auto* seed_opt = app.add_option("--seed", seed, "override the config seed");
  app.add_flag("--force", g.force, "overwrite existing outputs");

  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "generate the synthetic sub-clustered dataset");
  synth->add_option("--out", synth_out, "dataset directory")->required();

  PretrainOptions popts;
  std::string p_data, p_out;
  int stop_after = 0;
  auto* pretrain = app.add_subcommand("pretrain", "pre-train on the base split");
  pretrain->add_option("--data", p_data, "dataset directory")->required();
  pretrain->add_option("--out", p_out, "run directory")->required();
  pretrain->add_flag("--baseline", popts.baseline, "class branch only");
  pretrain->add_flag("--no-purity", popts.no_purity, "drop the purity term");
  pretrain->add_flag("--resume", popts.resume, "continue from the run directory's checkpoint");
  auto* stop_opt = pretrain->add_option("--stop-after", stop_after)->group("");

  std::string e_ckpt, e_data, e_out;
  int n_way = 0, k_shot = 0, query = 0, episodes = 0;
  auto* eval = app.add_subcommand("eval", "episodic few-shot evaluation on the novel split");
  eval->add_option("--ckpt", e_ckpt, "run directory")->required();
  eval->add_option("--data", e_data, "dataset directory")->required();
  eval->add_option("--out", e_out, "report directory (default <ckpt>/eval)");
  auto* way_opt = eval->add_option("--n-way", n_way);
  auto* shot_opt = eval->add_option("--k-shot", k_shot);
  auto* query_opt = eval->add_option("--query", query, "query samples per class");
  auto* ep_opt = eval->add_option("--episodes", episodes);

  std::string a_ckpt, a_data, a_out;
  auto* analyze = app.add_subcommand("analyze", "cluster purity, discriminability and embedding dumps");
  analyze->add_option("--ckpt", a_ckpt, "run directory")->required();
  analyze->add_option("--data", a_data, "dataset directory")->required();
  analyze->add_option("--out", a_out, "report directory (default <ckpt>/analysis)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (*config_opt) g.config_path = config_path;
    if (*seed_opt) g.seed = seed;
    RunConfig cfg = resolve_config(g);
    if (*synth) {
      cmd_synth(cfg, synth_out, g.force, out);
    } else if (*pretrain) {
      popts.data_dir = p_data;
      popts.out_dir = p_out;
      if (*stop_opt) popts.stop_after = stop_after;
      cmd_pretrain(cfg, popts, g.force, out);
    } else if (*eval) {
      if (*way_opt) cfg.n_way = n_way;
      if (*shot_opt) cfg.k_shot = k_shot;
      if (*query_opt) cfg.query_per_class = query;
      if (*ep_opt) cfg.episodes = episodes;
      EvalOptions eopts{e_ckpt, e_data, std::nullopt};
      if (!e_out.empty()) eopts.out_dir = e_out;
      cmd_eval(cfg, eopts, out);
    } else if (*analyze) {
      AnalyzeOptions aopts{a_ckpt, a_data, std::nullopt};
      if (!a_out.empty()) aopts.out_dir = a_out;
      cmd_analyze(cfg, aopts, out);
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const DimensionError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}

}  // namespace scan
