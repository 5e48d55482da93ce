#include "scan/data_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "scan/error.hpp"

namespace scan {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "tensor files assume a little-endian host");

// ---------------------------------------------------------------------------
// Tensor files

namespace {

constexpr std::array<char, 4> kMagic{'S', 'C', 'T', '1'};

template <typename Scalar>
void write_tensor_impl(const fs::path& path, const Tensor<Scalar>& t, DType dtype) {
  if (t.rank() == 0 || t.rank() > kMaxTensorRank)
    throw DataError("write_tensor_file: rank " + std::to_string(t.rank()) + " not in 1..8");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(kMagic.data(), kMagic.size());
  const char header[2] = {static_cast<char>(dtype), static_cast<char>(t.rank())};
  out.write(header, 2);
  for (std::size_t d : t.shape()) {
    const auto dim = static_cast<std::uint32_t>(d);
    out.write(reinterpret_cast<const char*>(&dim), sizeof(dim));
  }
  out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(Scalar)));
  if (!out) throw DataError("write failed for " + path.string());
}

struct Header {
  DType dtype;
  Shape shape;
};

Header read_header(std::istream& in, const fs::path& path) {
  std::array<char, 6> head{};
  in.read(head.data(), head.size());
  if (in.gcount() < 4 || std::memcmp(head.data(), kMagic.data(), 4) != 0) {
    std::ostringstream os;
    os << "bad magic in " << path.string() << ": got bytes";
    for (std::streamsize i = 0; i < std::min<std::streamsize>(in.gcount(), 4); ++i)
      os << ' ' << std::hex << std::setw(2) << std::setfill('0')
         << static_cast<int>(static_cast<unsigned char>(head[static_cast<std::size_t>(i)]));
    os << ", expected \"SCT1\"";
    throw DataError(os.str());
  }
  if (in.gcount() < 6) throw DataError("truncated header in " + path.string());
  const auto code = static_cast<std::uint8_t>(head[4]);
  if (code != 0x01 && code != 0x02)
    throw DataError("unknown dtype code " + std::to_string(code) + " in " + path.string());
  const auto rank = static_cast<std::size_t>(static_cast<unsigned char>(head[5]));
  if (rank == 0 || rank > kMaxTensorRank)
    throw DataError("rank " + std::to_string(rank) + " not in 1..8 in " + path.string());
  Header h{static_cast<DType>(code), Shape(rank)};
  for (std::size_t i = 0; i < rank; ++i) {
    std::uint32_t dim = 0;
    in.read(reinterpret_cast<char*>(&dim), sizeof(dim));
    if (in.gcount() != sizeof(dim)) throw DataError("truncated header in " + path.string());
    if (dim == 0) throw DataError("zero dimension in " + path.string());
    h.shape[i] = dim;
  }
  return h;
}

template <typename Stored, typename Scalar>
std::vector<Scalar> read_payload(std::istream& in, std::size_t count, const fs::path& path) {
  std::vector<Stored> raw(count);
  const auto bytes = static_cast<std::streamsize>(count * sizeof(Stored));
  in.read(reinterpret_cast<char*>(raw.data()), bytes);
  if (in.gcount() != bytes)
    throw DataError("truncated payload in " + path.string() + ": header declares " +
                    std::to_string(bytes) + " bytes, found " + std::to_string(in.gcount()));
  in.peek();
  if (!in.eof())
    throw DataError("payload length mismatch in " + path.string() + ": trailing bytes after " +
                    std::to_string(bytes) + " declared bytes");
  if constexpr (std::is_same_v<Stored, Scalar>) {
    return raw;
  } else {
    return std::vector<Scalar>(raw.begin(), raw.end());
  }
}

}  // namespace

void write_tensor_file(const fs::path& path, const Tensor<float>& t) { write_tensor_impl(path, t, DType::F32); }
void write_tensor_file(const fs::path& path, const Tensor<double>& t) { write_tensor_impl(path, t, DType::F64); }

DType tensor_file_dtype(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open tensor file " + path.string());
  return read_header(in, path).dtype;
}

template <typename Scalar>
Tensor<Scalar> read_tensor_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open tensor file " + path.string());
  Header h = read_header(in, path);
  const std::size_t count = shape_size(h.shape);
  std::vector<Scalar> data = h.dtype == DType::F32 ? read_payload<float, Scalar>(in, count, path)
                                                   : read_payload<double, Scalar>(in, count, path);
  return Tensor<Scalar>(std::move(h.shape), std::move(data));
}

template Tensor<float> read_tensor_file<float>(const fs::path&);
template Tensor<double> read_tensor_file<double>(const fs::path&);

// ---------------------------------------------------------------------------
// Manifest

std::string to_string(Split s) { return s == Split::Base ? "base" : "novel"; }

Split parse_split(const std::string& s) {
  if (s == "base") return Split::Base;
  if (s == "novel") return Split::Novel;
  throw DataError("unknown split '" + s + "' (expected base or novel)");
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

void check_disjoint(const std::vector<ManifestRecord>& records) {
  std::set<std::string> base;
  std::set<std::string> novel;
  for (const auto& r : records) (r.split == Split::Base ? base : novel).insert(r.class_label);
  for (const auto& c : base)
    if (novel.count(c)) throw DataError("class '" + c + "' appears in both base and novel splits");
}

}  // namespace

DatasetManifest read_manifest(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw DataError("cannot open manifest " + manifest_path.string());
  DatasetManifest m;
  m.root = manifest_path.parent_path();
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty manifest " + manifest_path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kManifestHeader)
    throw DataError("manifest header must be '" + std::string(kManifestHeader) + "', got '" + line + "'");
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 4)
      throw DataError("manifest line " + std::to_string(lineno) + ": expected 4 fields, got " +
                      std::to_string(f.size()));
    ManifestRecord r;
    r.path = f[0];
    r.class_label = f[1];
    r.split = parse_split(f[2]);
    if (!f[3].empty()) {
      try {
        r.subcluster_id = std::stoi(f[3]);
      } catch (const std::exception&) {
        throw DataError("manifest line " + std::to_string(lineno) + ": bad subcluster_id '" + f[3] + "'");
      }
    }
    if (r.path.empty() || r.class_label.empty())
      throw DataError("manifest line " + std::to_string(lineno) + ": empty path or class label");
    m.records.push_back(std::move(r));
  }
  check_disjoint(m.records);
  return m;
}

void write_manifest(const fs::path& manifest_path, const DatasetManifest& manifest) {
  check_disjoint(manifest.records);
  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out) throw DataError("cannot write manifest " + manifest_path.string());
  out << kManifestHeader << '\n';
  for (const auto& r : manifest.records) {
    out << r.path << ',' << r.class_label << ',' << to_string(r.split) << ',';
    if (r.subcluster_id) out << *r.subcluster_id;
    out << '\n';
  }
}

namespace {

void densify(SplitData& out, const std::vector<std::string>& raw_labels) {
  std::set<std::string> names(raw_labels.begin(), raw_labels.end());
  out.class_names.assign(names.begin(), names.end());
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < out.class_names.size(); ++i) index[out.class_names[i]] = static_cast<int>(i);
  out.labels.clear();
  for (const auto& l : raw_labels) out.labels.push_back(index.at(l));
}

}  // namespace

SplitData load_split(const DatasetManifest& manifest, Split split) {
  std::map<std::string, std::size_t> seen;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    auto [it, inserted] = seen.emplace(manifest.records[i].path, i);
    if (!inserted)
      throw DataError("duplicate path '" + manifest.records[i].path + "' in manifest records " +
                      std::to_string(it->second) + " and " + std::to_string(i));
  }
  SplitData out;
  std::vector<std::string> raw_labels;
  std::vector<Tensor<float>> tensors;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const auto& r = manifest.records[i];
    if (r.split != split) continue;
    Tensor<float> t = read_tensor_file<float>(manifest.root / r.path);
    if (out.sample_shape.empty()) {
      out.sample_shape = t.shape();
    } else if (t.shape() != out.sample_shape) {
      throw DataError("sample " + r.path + " has shape " + shape_string(t.shape()) + ", expected " +
                      shape_string(out.sample_shape));
    }
    out.record_index.push_back(i);
    out.paths.push_back(r.path);
    raw_labels.push_back(r.class_label);
    out.subcluster_ids.push_back(r.subcluster_id.value_or(-1));
    tensors.push_back(std::move(t));
  }
  densify(out, raw_labels);
  const auto width = static_cast<Eigen::Index>(shape_size(out.sample_shape));
  out.samples.resize(static_cast<Eigen::Index>(tensors.size()), tensors.empty() ? 0 : width);
  for (std::size_t i = 0; i < tensors.size(); ++i)
    out.samples.row(static_cast<Eigen::Index>(i)) = tensors[i].as_row().cast<double>();
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic data

void validate(const SynthConfig& cfg) {
  if (cfg.n_base_classes < 1 || cfg.n_novel_classes < 0)
    throw ConfigError("synth: need at least one base class and a non-negative novel class count");
  if (cfg.samples_per_class < 1) throw ConfigError("synth: samples_per_class must be >= 1");
  if (cfg.base_subclusters.empty() || (cfg.n_novel_classes > 0 && cfg.novel_subclusters.empty()))
    throw ConfigError("synth: sub-cluster count lists must be non-empty");
  for (const auto* list : {&cfg.base_subclusters, &cfg.novel_subclusters})
    for (int m : *list)
      if (m < 1) throw ConfigError("synth: sub-cluster counts must be >= 1");
  if (cfg.intra_subcluster_std < 0) throw ConfigError("synth: intra_subcluster_std must be >= 0");
  if (!(cfg.inter_class_separation > 2.0 * cfg.intra_subcluster_std))
    throw ConfigError("synth: inter_class_separation must exceed 2 * intra_subcluster_std");
  if (!(cfg.subcluster_spread > 2.0 * cfg.intra_subcluster_std))
    throw ConfigError("synth: subcluster_spread must exceed 2 * intra_subcluster_std");
  if (cfg.kind == SampleKind::Vector && cfg.vector_dim < 1) throw ConfigError("synth: vector_dim must be >= 1");
  if (cfg.kind == SampleKind::Image && (cfg.image_size < 4 || cfg.image_size > 32))
    throw ConfigError("synth: image_size must be in 4..32");
}

namespace {

struct ClassPlan {
  std::string label;
  Split split;
  int subclusters;
};

std::vector<ClassPlan> plan_classes(const SynthConfig& cfg) {
  std::vector<ClassPlan> plan;
  for (int c = 0; c < cfg.n_base_classes; ++c) {
    std::ostringstream os;
    os << "base_" << std::setw(2) << std::setfill('0') << c;
    plan.push_back({os.str(), Split::Base,
                    cfg.base_subclusters[static_cast<std::size_t>(c) % cfg.base_subclusters.size()]});
  }
  for (int c = 0; c < cfg.n_novel_classes; ++c) {
    std::ostringstream os;
    os << "novel_" << std::setw(2) << std::setfill('0') << c;
    plan.push_back({os.str(), Split::Novel,
                    cfg.novel_subclusters[static_cast<std::size_t>(c) % cfg.novel_subclusters.size()]});
  }
  return plan;
}

RowVector<double> random_unit(int dim, SeededRng& rng) {
  RowVector<double> v(dim);
  do {
    for (int i = 0; i < dim; ++i) v(i) = rng.normal();
  } while (v.norm() == 0.0);
  return v / v.norm();
}

constexpr int kMaxAttempts = 20000;

// Class anchors at mutual distance >= separation + 2 * spread, sub-cluster
// centers on a sphere of radius `spread` around their anchor at mutual
// distance >= spread, so class regions are >= separation apart.
MatrixXd vector_centers(const SynthConfig& cfg, const std::vector<ClassPlan>& plan,
                        std::vector<int>& center_class, SeededRng& rng) {
  const int dim = cfg.vector_dim;
  const double anchor_gap = cfg.inter_class_separation + 2.0 * cfg.subcluster_spread;
  const double half_width =
      anchor_gap * std::max(1.0, std::pow(static_cast<double>(plan.size()), 1.0 / dim));
  MatrixXd anchors(static_cast<Eigen::Index>(plan.size()), dim);
  for (std::size_t c = 0; c < plan.size(); ++c) {
    int attempts = 0;
    for (;;) {
      if (++attempts > kMaxAttempts)
        throw DataError("synth: infeasible geometry, cannot place " + std::to_string(plan.size()) +
                        " class regions " + std::to_string(anchor_gap) + " apart in " +
                        std::to_string(dim) + " dimensions");
      RowVector<double> a(dim);
      for (int i = 0; i < dim; ++i) a(i) = rng.uniform(-half_width, half_width);
      bool ok = true;
      for (std::size_t p = 0; p < c && ok; ++p)
        ok = (anchors.row(static_cast<Eigen::Index>(p)) - a).norm() >= anchor_gap;
      if (ok) {
        anchors.row(static_cast<Eigen::Index>(c)) = a;
        break;
      }
    }
  }
  std::vector<RowVector<double>> centers;
  for (std::size_t c = 0; c < plan.size(); ++c) {
    const RowVector<double> anchor = anchors.row(static_cast<Eigen::Index>(c));
    if (plan[c].subclusters == 1) {
      centers.push_back(anchor);
      center_class.push_back(static_cast<int>(c));
      continue;
    }
    std::vector<RowVector<double>> local;
    int attempts = 0;
    while (static_cast<int>(local.size()) < plan[c].subclusters) {
      if (++attempts > kMaxAttempts)
        throw DataError("synth: infeasible geometry, cannot place " + std::to_string(plan[c].subclusters) +
                        " sub-clusters " + std::to_string(cfg.subcluster_spread) + " apart for class " +
                        plan[c].label + " in " + std::to_string(dim) + " dimensions");
      RowVector<double> s = anchor + cfg.subcluster_spread * random_unit(dim, rng);
      bool ok = true;
      for (const auto& o : local) ok = ok && (o - s).norm() >= cfg.subcluster_spread;
      if (ok) local.push_back(s);
    }
    for (auto& s : local) {
      centers.push_back(s);
      center_class.push_back(static_cast<int>(c));
    }
  }
  MatrixXd out(static_cast<Eigen::Index>(centers.size()), dim);
  for (std::size_t i = 0; i < centers.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = centers[i];
  return out;
}

// Each class draws a primitive (disk, ring, square, cross) at one of three
// sizes; each sub-cluster places it at a distinct cell of a 3x3 grid.
MatrixXd image_centers(const SynthConfig& cfg, const std::vector<ClassPlan>& plan,
                       std::vector<int>& center_class, SeededRng& rng) {
  const int s = cfg.image_size;
  constexpr int kShapes = 4;
  constexpr int kSizes = 3;
  constexpr int kCells = 9;
  if (static_cast<int>(plan.size()) > kShapes * kSizes)
    throw DataError("synth: infeasible geometry, at most " + std::to_string(kShapes * kSizes) +
                    " image classes are distinguishable");
  std::vector<RowVector<double>> centers;
  for (std::size_t c = 0; c < plan.size(); ++c) {
    if (plan[c].subclusters > kCells)
      throw DataError("synth: infeasible geometry, class " + plan[c].label + " asks for " +
                      std::to_string(plan[c].subclusters) + " image sub-clusters (max 9)");
    const int shape = static_cast<int>(c) % kShapes;
    const int size_level = static_cast<int>(c) / kShapes;
    const double radius = s / 6.0 * (0.7 + 0.3 * size_level);
    std::vector<int> cells(kCells);
    for (int i = 0; i < kCells; ++i) cells[static_cast<std::size_t>(i)] = i;
    rng.shuffle(std::span<int>(cells));
    for (int j = 0; j < plan[c].subclusters; ++j) {
      const int cell = cells[static_cast<std::size_t>(j)];
      const double cy = s * (1 + 2 * (cell / 3)) / 6.0 - 0.5;
      const double cx = s * (1 + 2 * (cell % 3)) / 6.0 - 0.5;
      RowVector<double> img = RowVector<double>::Zero(s * s);
      for (int y = 0; y < s; ++y) {
        for (int x = 0; x < s; ++x) {
          const double dy = y - cy;
          const double dx = x - cx;
          const double r = std::sqrt(dx * dx + dy * dy);
          bool on = false;
          switch (shape) {
            case 0: on = r <= radius; break;
            case 1: on = r <= radius && r >= 0.55 * radius; break;
            case 2: on = std::abs(dx) <= radius * 0.85 && std::abs(dy) <= radius * 0.85; break;
            default:
              on = (std::abs(dx) <= radius * 0.3 && std::abs(dy) <= radius) ||
                   (std::abs(dy) <= radius * 0.3 && std::abs(dx) <= radius);
          }
          if (on) img(y * s + x) = 1.0;
        }
      }
      centers.push_back(img);
      center_class.push_back(static_cast<int>(c));
    }
  }
  MatrixXd out(static_cast<Eigen::Index>(centers.size()), s * s);
  for (std::size_t i = 0; i < centers.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = centers[i];
  return out;
}

}  // namespace

SyntheticDataset synthesize(const SynthConfig& cfg) {
  validate(cfg);
  const auto plan = plan_classes(cfg);
  SeededRng root(cfg.seed);
  SeededRng geometry = root.substream("geometry");
  SyntheticDataset data;
  data.subcluster_centers = cfg.kind == SampleKind::Vector
                                ? vector_centers(cfg, plan, data.center_class, geometry)
                                : image_centers(cfg, plan, data.center_class, geometry);
  const Shape shape = cfg.kind == SampleKind::Vector
                          ? Shape{static_cast<std::size_t>(cfg.vector_dim)}
                          : Shape{1, static_cast<std::size_t>(cfg.image_size),
                                  static_cast<std::size_t>(cfg.image_size)};

  SeededRng noise = root.substream("samples");
  std::size_t next_id = 0;
  for (std::size_t c = 0; c < plan.size(); ++c) {
    std::vector<Eigen::Index> rows;
    for (std::size_t r = 0; r < data.center_class.size(); ++r)
      if (data.center_class[r] == static_cast<int>(c)) rows.push_back(static_cast<Eigen::Index>(r));
    for (int n = 0; n < cfg.samples_per_class; ++n) {
      // Round-robin keeps sub-cluster sizes balanced.
      const auto sub = static_cast<std::size_t>(n) % rows.size();
      const auto center = data.subcluster_centers.row(rows[sub]);
      std::vector<float> values(static_cast<std::size_t>(center.size()));
      for (Eigen::Index i = 0; i < center.size(); ++i)
        values[static_cast<std::size_t>(i)] =
            static_cast<float>(center(i) + cfg.intra_subcluster_std * noise.normal());
      std::ostringstream path;
      path << "samples/" << std::setw(6) << std::setfill('0') << next_id++ << ".sct";
      data.records.push_back({path.str(), plan[c].label, plan[c].split, static_cast<int>(sub)});
      data.samples.emplace_back(shape, std::move(values));
    }
  }
  return data;
}

DatasetManifest generate_synthetic(const SynthConfig& cfg, const fs::path& out_dir) {
  SyntheticDataset data = synthesize(cfg);
  fs::create_directories(out_dir / "samples");
  DatasetManifest manifest{out_dir, data.records};
  for (std::size_t i = 0; i < data.records.size(); ++i)
    write_tensor_file(out_dir / data.records[i].path, data.samples[i]);
  write_manifest(out_dir / kManifestName, manifest);
  return manifest;
}

SplitData split_from_synthetic(const SyntheticDataset& data, Split split) {
  SplitData out;
  std::vector<std::string> raw_labels;
  std::vector<std::size_t> picked;
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const auto& r = data.records[i];
    if (r.split != split) continue;
    picked.push_back(i);
    out.record_index.push_back(i);
    out.paths.push_back(r.path);
    raw_labels.push_back(r.class_label);
    out.subcluster_ids.push_back(r.subcluster_id.value_or(-1));
  }
  densify(out, raw_labels);
  if (!picked.empty()) out.sample_shape = data.samples[picked.front()].shape();
  out.samples.resize(static_cast<Eigen::Index>(picked.size()),
                     static_cast<Eigen::Index>(shape_size(out.sample_shape)));
  for (std::size_t i = 0; i < picked.size(); ++i)
    out.samples.row(static_cast<Eigen::Index>(i)) = data.samples[picked[i]].as_row().cast<double>();
  return out;
}

// ---------------------------------------------------------------------------
// Augmentation

void validate(const AugmentConfig& cfg) {
  if (!(cfg.hflip_prob >= 0 && cfg.hflip_prob <= 1)) throw ConfigError("augment: hflip_prob must be in [0,1]");
  if (cfg.crop_pad < 0) throw ConfigError("augment: crop_pad must be >= 0");
  if (!(cfg.rotation_degrees >= 0 && cfg.rotation_degrees <= 180))
    throw ConfigError("augment: rotation_degrees must be in [0,180]");
  if (!(cfg.brightness_lo > 0 && cfg.brightness_lo <= cfg.brightness_hi))
    throw ConfigError("augment: need 0 < brightness_lo <= brightness_hi");
}

Tensor<float> hflip(const Tensor<float>& image) {
  const auto& s = image.shape();
  const std::size_t c = s[0], h = s[1], w = s[2];
  Tensor<float> out(s);
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) out[(k * h + y) * w + x] = image[(k * h + y) * w + (w - 1 - x)];
  return out;
}

Tensor<float> augment(const Tensor<float>& sample, const AugmentConfig& cfg, SeededRng& rng, bool* warned) {
  validate(cfg);
  if (sample.rank() < 3) {
    if (warned) *warned = true;
    return sample;
  }
  const auto& s = sample.shape();
  const auto c = static_cast<long>(s[0]);
  const auto h = static_cast<long>(s[1]);
  const auto w = static_cast<long>(s[2]);
  auto at = [&](const Tensor<float>& t, long k, long y, long x) -> float {
    if (y < 0 || y >= h || x < 0 || x >= w) return 0.0f;
    return t[static_cast<std::size_t>((k * h + y) * w + x)];
  };

  // Padding by p and cropping back to h x w is a shift by (oy - p, ox - p).
  Tensor<float> out(s);
  const long pad = cfg.crop_pad;
  const long oy = pad > 0 ? static_cast<long>(rng.below(static_cast<std::size_t>(2 * pad + 1))) - pad : 0;
  const long ox = pad > 0 ? static_cast<long>(rng.below(static_cast<std::size_t>(2 * pad + 1))) - pad : 0;
  for (long k = 0; k < c; ++k)
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) out[static_cast<std::size_t>((k * h + y) * w + x)] = at(sample, k, y + oy, x + ox);

  if (cfg.hflip_prob > 0 && rng.bernoulli(cfg.hflip_prob)) out = hflip(out);

  if (cfg.rotation_degrees > 0) {
    const double angle = rng.uniform(-cfg.rotation_degrees, cfg.rotation_degrees) * std::numbers::pi / 180.0;
    const double cs = std::cos(angle);
    const double sn = std::sin(angle);
    const double cy = (h - 1) / 2.0;
    const double cx = (w - 1) / 2.0;
    Tensor<float> rotated(s);
    for (long k = 0; k < c; ++k) {
      for (long y = 0; y < h; ++y) {
        for (long x = 0; x < w; ++x) {
          // Inverse map from output pixel to source pixel.
          const double dy = y - cy;
          const double dx = x - cx;
          const long sy = std::lround(cy + cs * dy - sn * dx);
          const long sx = std::lround(cx + sn * dy + cs * dx);
          rotated[static_cast<std::size_t>((k * h + y) * w + x)] = at(out, k, sy, sx);
        }
      }
    }
    out = std::move(rotated);
  }

  if (cfg.brightness_lo != 1.0 || cfg.brightness_hi != 1.0) {
    const auto scale = static_cast<float>(rng.uniform(cfg.brightness_lo, cfg.brightness_hi));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= scale;
  }
  return out;
}

}  // namespace scan
