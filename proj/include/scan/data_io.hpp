#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "scan/rng.hpp"
#include "scan/tensor.hpp"

namespace scan {

// ---------------------------------------------------------------------------
// Tensor files
//
//   bytes 0-3   "SCT1"
//   byte 4      dtype: 0x01 = f32 LE, 0x02 = f64 LE
//   byte 5      rank r (1..8)
//   then        r x u32 LE dims, then the row-major payload.
// ---------------------------------------------------------------------------

enum class DType : std::uint8_t { F32 = 0x01, F64 = 0x02 };

inline constexpr std::size_t kMaxTensorRank = 8;

void write_tensor_file(const std::filesystem::path& path, const Tensor<float>& t);
void write_tensor_file(const std::filesystem::path& path, const Tensor<double>& t);

/// Reads either dtype and converts to Scalar.
template <typename Scalar>
Tensor<Scalar> read_tensor_file(const std::filesystem::path& path);

/// Dtype stored in a tensor file header.
DType tensor_file_dtype(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

enum class Split { Base, Novel };

std::string to_string(Split s);
Split parse_split(const std::string& s);

struct ManifestRecord {
  std::string path;  // relative to the manifest directory
  std::string class_label;
  Split split = Split::Base;
  std::optional<int> subcluster_id;
};

struct DatasetManifest {
  std::filesystem::path root;  // directory holding manifest.csv
  std::vector<ManifestRecord> records;
};

inline constexpr const char* kManifestHeader = "path,class_label,split,subcluster_id";
inline constexpr const char* kManifestName = "manifest.csv";

/// Parses manifest.csv; checks the header and that base and novel classes
/// are disjoint.
DatasetManifest read_manifest(const std::filesystem::path& manifest_path);
void write_manifest(const std::filesystem::path& manifest_path, const DatasetManifest& manifest);

/// Samples of one split, in manifest order, with labels densified to
/// 0..C-1 by sorted class name.
struct SplitData {
  std::vector<std::size_t> record_index;
  std::vector<std::string> paths;
  std::vector<int> labels;
  std::vector<std::string> class_names;
  std::vector<int> subcluster_ids;  // -1 where unknown
  Shape sample_shape;
  MatrixXd samples;  // one flattened sample per row

  std::size_t size() const { return labels.size(); }
  int n_classes() const { return static_cast<int>(class_names.size()); }
};

SplitData load_split(const DatasetManifest& manifest, Split split);

// ---------------------------------------------------------------------------
// Synthetic sub-clustered data
// ---------------------------------------------------------------------------

enum class SampleKind { Vector, Image };

struct SynthConfig {
  int n_base_classes = 4;
  int n_novel_classes = 4;
  /// Sub-cluster counts, cycled over classes when shorter than the class count.
  std::vector<int> base_subclusters{1, 2, 3, 2};
  std::vector<int> novel_subclusters{1, 2, 3, 2};
  int samples_per_class = 200;
  SampleKind kind = SampleKind::Vector;
  int vector_dim = 16;
  int image_size = 16;  // images are 1 x size x size
  double inter_class_separation = 10.0;
  double intra_subcluster_std = 1.0;
  double subcluster_spread = 6.0;
  std::uint64_t seed = 0;
};

void validate(const SynthConfig& cfg);

struct SyntheticDataset {
  std::vector<ManifestRecord> records;
  std::vector<Tensor<float>> samples;
  /// Generating centers (flattened), one row per (class, sub-cluster),
  /// with the class index (base first, then novel) of each row.
  MatrixXd subcluster_centers;
  std::vector<int> center_class;
};

/// Builds the dataset in memory. Deterministic in cfg.seed.
SyntheticDataset synthesize(const SynthConfig& cfg);

/// Writes samples under out_dir/samples and out_dir/manifest.csv.
DatasetManifest generate_synthetic(const SynthConfig& cfg, const std::filesystem::path& out_dir);

/// Manifest view of an in-memory dataset rooted nowhere; lets callers use
/// load-style helpers without touching disk.
SplitData split_from_synthetic(const SyntheticDataset& data, Split split);

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

struct AugmentConfig {
  double hflip_prob = 0.5;
  int crop_pad = 2;
  double rotation_degrees = 30.0;  // angle drawn from [-r, r]
  double brightness_lo = 0.9;
  double brightness_hi = 1.1;
};

void validate(const AugmentConfig& cfg);

/// Pad-and-random-crop, horizontal flip, nearest-neighbour rotation with
/// zero fill, and brightness scaling, in that order. Images are
/// channels x height x width; anything of rank < 3 is returned unchanged
/// with `*warned` set.
Tensor<float> augment(const Tensor<float>& sample, const AugmentConfig& cfg, SeededRng& rng,
                      bool* warned = nullptr);

Tensor<float> hflip(const Tensor<float>& image);

}  // namespace scan
