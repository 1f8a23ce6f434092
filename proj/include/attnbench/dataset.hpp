#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "attnbench/tensor.hpp"

namespace attnbench {

// Dataset ingestion: CIFAR binary parsing, a small raw-tensor container for
// pre-converted datasets, and seeded subsampling. Images are CxHxW float
// tensors in [0,1].

struct LabeledDataset {
  std::vector<Tensor<float>> images;
  std::vector<std::uint16_t> labels;
  int num_classes = 0;

  std::size_t size() const { return images.size(); }

  // Checks image/label count agreement and that every observed label lies
  // in [0, num_classes).
  void validate() const;
};

enum class CifarVariant { kCifar10, kCifar100 };

// Parses the standard CIFAR binary layout: per record, 1 label byte
// (CIFAR-10) or 2 label bytes (CIFAR-100: coarse then fine — the fine label
// is used), followed by 3072 pixel bytes as channel-major 32x32 R,G,B
// planes. Pixels are scaled to [0,1]. A file whose size is not a whole
// number of records raises a parse error naming the byte offset where the
// partial record starts; an out-of-range label raises a data error naming
// the record index.
LabeledDataset load_cifar(const std::string& path, CifarVariant variant);

// Concatenates several batch files (e.g. the five CIFAR-10 train batches).
LabeledDataset load_cifar(const std::vector<std::string>& paths,
                          CifarVariant variant);

// Writes the same binary layout (pixels quantized to u8 by rounding).
void save_cifar(const LabeledDataset& ds, const std::string& path,
                CifarVariant variant);

// Raw-tensor container for pre-converted datasets: magic "ABRT", version
// byte, u32 dims (count, C, H, W), dtype tag (0 = u8, 1 = f32),
// little-endian pixel payload, then count u16 labels. The trailing label
// block extends the header-plus-payload layout so one file carries a whole
// labeled split.
enum class RawDtype : std::uint8_t { kU8 = 0, kF32 = 1 };

LabeledDataset load_raw(const std::string& path);
void save_raw(const LabeledDataset& ds, const std::string& path,
              RawDtype dtype);

// Seeded subsample without replacement, preserving relative order of the
// chosen indices. count must not exceed the dataset size.
LabeledDataset subsample(const LabeledDataset& ds, std::size_t count,
                         std::uint64_t seed);

// Per-channel mean and standard deviation over every pixel of the set.
std::pair<std::vector<double>, std::vector<double>> compute_channel_stats(
    const LabeledDataset& ds);

// Config-side description of a dataset: where it lives, its geometry, and
// the normalization constants applied after corruption.
struct DatasetSpec {
  std::string name;  // cifar10 | cifar100 | raw | synthetic
  std::string train_path;
  std::string test_path;
  int image_size = 32;
  int channels = 3;
  int num_classes = 10;
  std::vector<double> means;
  std::vector<double> stds;
  std::optional<std::size_t> train_subsample;
  std::optional<std::size_t> test_subsample;

  void validate() const;
};

// Loads train/test splits per the spec (dispatching on name), applies the
// subsample counts, and validates labels against num_classes.
std::pair<LabeledDataset, LabeledDataset> load_dataset(const DatasetSpec& spec,
                                                       std::uint64_t seed);

}  // namespace attnbench
