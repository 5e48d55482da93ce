#include "scan/checkpoint.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <fstream>
#include <sstream>

#include "scan/data_io.hpp"
#include "scan/error.hpp"

namespace scan {

namespace fs = std::filesystem;

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("checkpoint: cannot write " + path.string());
  out << text;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::vector<std::string> out;
  std::istringstream is(read_text(path));
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) out.push_back(line);
  return out;
}

std::string join_lines(const std::vector<std::string>& rows) {
  std::string out;
  for (const auto& r : rows) out += r + "\n";
  return out;
}

Tensor<double> int_tensor(std::span<const int> values) {
  // rank-1 tensors cannot be empty; a leading count keeps zero-length lists legal
  std::vector<double> data{static_cast<double>(values.size())};
  for (int v : values) data.push_back(v);
  const Shape shape{data.size()};
  return Tensor<double>(shape, std::move(data));
}

std::vector<int> tensor_ints(const Tensor<double>& t, const std::string& what) {
  const auto& d = t.values();
  if (d.empty() || static_cast<std::size_t>(d[0]) != d.size() - 1)
    throw DataError("checkpoint: malformed integer list " + what);
  std::vector<int> out;
  for (std::size_t i = 1; i < d.size(); ++i) out.push_back(static_cast<int>(d[i]));
  return out;
}

MatrixXd load_matrix(const fs::path& path) {
  const auto t = read_tensor_file<double>(path);
  if (t.shape().size() != 2) throw DataError("checkpoint: " + path.string() + " is not a matrix");
  return t.as_matrix();
}

}  // namespace

std::string serialize_meta(const CheckpointMeta& m) {
  std::string shape;
  for (std::size_t i = 0; i < m.sample_shape.size(); ++i) shape += (i ? "x" : "") + std::to_string(m.sample_shape[i]);
  std::ostringstream os;
  os << "format_version = " << m.format_version << "\n"
     << "epoch = " << m.epoch << "\n"
     << "seed = " << m.seed << "\n"
     << "config_hash = " << m.config_hash << "\n"
     << "method = " << m.method << "\n"
     << "sample_shape = " << shape << "\n"
     << "n_classes = " << m.n_classes << "\n"
     << "n_clusters = " << m.n_clusters << "\n";
  return os.str();
}

CheckpointMeta parse_meta(const std::string& text) {
  CheckpointMeta m;
  m.format_version = 0;
  std::istringstream is(text);
  std::string line;
  try {
    while (std::getline(is, line)) {
      const auto eq = line.find(" = ");
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(0, eq);
      const std::string value = line.substr(eq + 3);
      if (key == "format_version") m.format_version = std::stoi(value);
      else if (key == "epoch") m.epoch = std::stoi(value);
      else if (key == "seed") m.seed = std::stoull(value);
      else if (key == "config_hash") m.config_hash = std::stoull(value);
      else if (key == "method") m.method = value;
      else if (key == "n_classes") m.n_classes = std::stoi(value);
      else if (key == "n_clusters") m.n_clusters = std::stoi(value);
      else if (key == "sample_shape") {
        std::istringstream ss(value);
        std::string dim;
        while (std::getline(ss, dim, 'x')) m.sample_shape.push_back(std::stoull(dim));
      }
    }
  } catch (const std::logic_error&) {
    throw DataError("checkpoint: malformed metadata line '" + line + "'");
  }
  if (m.format_version != kCheckpointFormatVersion)
    throw DataError("checkpoint: unsupported format version " + std::to_string(m.format_version));
  if (m.sample_shape.empty()) throw DataError("checkpoint: metadata lacks sample_shape");
  return m;
}

ScanNet<double> build_network(const RunConfig& cfg, const Shape& sample_shape, int n_classes, int n_clusters) {
  SeededRng rng = SeededRng(cfg.seed).substream("init");
  return ScanNet<double>(encoder_config(cfg, sample_shape), projection_config(cfg), n_classes, n_clusters, rng);
}

void save_checkpoint(const fs::path& dir, const CheckpointState& state, ScanNet<double>& net) {
  fs::path tmp = dir;
  tmp += ".tmp";
  fs::remove_all(tmp);
  fs::create_directories(tmp / "params");
  write_text(tmp / "meta.txt", serialize_meta(state.meta));
  write_text(tmp / "config.txt", serialize_config(state.config));
  for (auto& [name, m] : net.state())
    write_tensor_file(tmp / "params" / (name + ".sct"), Tensor<double>::from_matrix(*m));
  if (state.memory) {
    const MemoryBank& mem = *state.memory;
    fs::create_directories(tmp / "memory");
    write_tensor_file(tmp / "memory" / "features.sct", Tensor<double>::from_matrix(mem.features()));
    write_tensor_file(tmp / "memory" / "class_labels.sct", int_tensor(mem.class_labels()));
    write_tensor_file(tmp / "memory" / "cluster_labels.sct", int_tensor(mem.cluster_labels()));
    write_tensor_file(tmp / "memory" / "class_centroids.sct", Tensor<double>::from_matrix(mem.class_centroids()));
    write_tensor_file(tmp / "memory" / "cluster_centroids.sct",
                      Tensor<double>::from_matrix(mem.cluster_centroids()));
    write_tensor_file(tmp / "memory" / "stale_clusters.sct", int_tensor(mem.stale_clusters()));
  }
  write_text(tmp / "log.csv", join_lines(state.log_rows));
  write_text(tmp / "occupancy.csv", join_lines(state.occupancy_rows));
  fs::remove_all(dir);
  fs::rename(tmp, dir);
}

LoadedCheckpoint load_checkpoint(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("checkpoint: no checkpoint at " + dir.string());
  CheckpointState state;
  state.meta = parse_meta(read_text(dir / "meta.txt"));
  state.config = load_config(dir / "config.txt");
  if (config_hash(state.config) != state.meta.config_hash)
    throw DataError("checkpoint: config.txt does not match the recorded config hash");

  ScanNet<double> net = build_network(state.config, state.meta.sample_shape, state.meta.n_classes,
                                      state.meta.n_clusters);
  for (auto& [name, m] : net.state()) {
    const fs::path p = dir / "params" / (name + ".sct");
    if (!fs::exists(p)) throw DataError("checkpoint: missing tensor " + p.string());
    const MatrixXd loaded = load_matrix(p);
    if (loaded.rows() != m->rows() || loaded.cols() != m->cols())
      throw DataError("checkpoint: tensor " + name + " has shape " + shape_string(loaded) + ", model expects " +
                      shape_string(*m));
    *m = loaded;
  }

  if (fs::exists(dir / "memory")) {
    const fs::path md = dir / "memory";
    state.memory = MemoryBank::restore(
        load_matrix(md / "features.sct"), tensor_ints(read_tensor_file<double>(md / "class_labels.sct"), "class"),
        tensor_ints(read_tensor_file<double>(md / "cluster_labels.sct"), "cluster"),
        load_matrix(md / "class_centroids.sct"), load_matrix(md / "cluster_centroids.sct"),
        tensor_ints(read_tensor_file<double>(md / "stale_clusters.sct"), "stale"));
  }
  state.log_rows = read_lines(dir / "log.csv");
  state.occupancy_rows = read_lines(dir / "occupancy.csv");
  return {std::move(state), std::move(net)};
}

DirectoryLock::DirectoryLock(const fs::path& dir) : path_(dir / ".lock") {
  fs::create_directories(dir);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0)
    throw DataError("run directory " + dir.string() + " is locked by another process (remove " +
                    path_.string() + " if stale)");
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

DirectoryLock::~DirectoryLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

}  // namespace scan
