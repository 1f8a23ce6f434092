#include "attnbench/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "attnbench/rng.hpp"
#include "attnbench/synthetic.hpp"

namespace attnbench {

namespace {

constexpr std::size_t kCifarSide = 32;
constexpr std::size_t kCifarChannels = 3;
constexpr std::size_t kCifarPixels = kCifarChannels * kCifarSide * kCifarSide;

std::size_t label_bytes(CifarVariant v) {
  return v == CifarVariant::kCifar10 ? 1 : 2;
}

int cifar_classes(CifarVariant v) {
  return v == CifarVariant::kCifar10 ? 10 : 100;
}

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw std::runtime_error("cannot open '" + path + "' for reading");
  }
  return std::vector<unsigned char>((std::istreambuf_iterator<char>(is)),
                                    std::istreambuf_iterator<char>());
}

void append_cifar_records(LabeledDataset& ds, const std::string& path,
                          CifarVariant variant) {
  const std::vector<unsigned char> bytes = read_file(path);
  const std::size_t record = label_bytes(variant) + kCifarPixels;
  if (bytes.size() % record != 0) {
    const std::size_t whole = bytes.size() / record;
    throw std::runtime_error(
        "parse error in '" + path + "': file size " +
        std::to_string(bytes.size()) + " is not a whole number of " +
        std::to_string(record) + "-byte records; partial record begins at "
        "byte offset " + std::to_string(whole * record));
  }
  const std::size_t count = bytes.size() / record;
  const std::size_t base_index = ds.images.size();
  for (std::size_t r = 0; r < count; ++r) {
    const unsigned char* rec = bytes.data() + r * record;
    // CIFAR-100 stores (coarse, fine); the fine label is the class.
    const std::uint16_t label = rec[label_bytes(variant) - 1];
    if (label >= static_cast<std::uint16_t>(cifar_classes(variant))) {
      throw std::runtime_error(
          "data error in '" + path + "': label " + std::to_string(label) +
          " at record index " + std::to_string(base_index + r) +
          " out of range for " + std::to_string(cifar_classes(variant)) +
          " classes");
    }
    Tensor<float> img({kCifarChannels, kCifarSide, kCifarSide});
    const unsigned char* px = rec + label_bytes(variant);
    for (std::size_t i = 0; i < kCifarPixels; ++i)
      img[i] = static_cast<float>(px[i]) / 255.0f;
    ds.images.push_back(std::move(img));
    ds.labels.push_back(label);
  }
}

void write_u32(std::ofstream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(const unsigned char* p) {
  std::uint32_t v;
  std::memcpy(&v, p, 4);
  return v;
}

}  // namespace

void LabeledDataset::validate() const {
  if (images.size() != labels.size()) {
    throw std::runtime_error("dataset: " + std::to_string(images.size()) +
                             " images but " + std::to_string(labels.size()) +
                             " labels");
  }
  if (num_classes < 1) {
    throw std::runtime_error("dataset: num_classes must be positive");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= static_cast<std::uint16_t>(num_classes)) {
      throw std::runtime_error("data error: label " +
                               std::to_string(labels[i]) + " at index " +
                               std::to_string(i) + " out of range for " +
                               std::to_string(num_classes) + " classes");
    }
  }
}

LabeledDataset load_cifar(const std::string& path, CifarVariant variant) {
  return load_cifar(std::vector<std::string>{path}, variant);
}

LabeledDataset load_cifar(const std::vector<std::string>& paths,
                          CifarVariant variant) {
  LabeledDataset ds;
  ds.num_classes = cifar_classes(variant);
  for (const std::string& path : paths)
    append_cifar_records(ds, path, variant);
  return ds;
}

void save_cifar(const LabeledDataset& ds, const std::string& path,
                CifarVariant variant) {
  ds.validate();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) {
    throw std::runtime_error("cannot open '" + path + "' for writing");
  }
  for (std::size_t r = 0; r < ds.size(); ++r) {
    const Tensor<float>& img = ds.images[r];
    if (img.numel() != kCifarPixels) {
      throw std::runtime_error("save_cifar: image " + std::to_string(r) +
                               " has shape " + img.shape_str() +
                               ", expected [3 x 32 x 32]");
    }
    if (variant == CifarVariant::kCifar100) {
      os.put(0);  // coarse label: not modeled, stored as 0
    }
    os.put(static_cast<char>(ds.labels[r]));
    for (std::size_t i = 0; i < kCifarPixels; ++i) {
      const float v = std::clamp(img[i], 0.0f, 1.0f);
      os.put(static_cast<char>(
          static_cast<unsigned char>(std::lround(v * 255.0f))));
    }
  }
  if (!os) {
    throw std::runtime_error("write failed for '" + path + "'");
  }
}

void save_raw(const LabeledDataset& ds, const std::string& path,
              RawDtype dtype) {
  ds.validate();
  if (ds.size() == 0) {
    throw std::runtime_error("save_raw: refusing to write an empty dataset");
  }
  const auto& shape = ds.images[0].shape();
  if (shape.size() != 3) {
    throw std::runtime_error("save_raw: images must be CxHxW");
  }
  for (std::size_t i = 1; i < ds.size(); ++i) {
    if (ds.images[i].shape() != shape) {
      throw std::runtime_error("save_raw: image " + std::to_string(i) +
                               " shape " + ds.images[i].shape_str() +
                               " differs from first image " +
                               ds.images[0].shape_str());
    }
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) {
    throw std::runtime_error("cannot open '" + path + "' for writing");
  }
  os.write("ABRT", 4);
  os.put(1);  // version
  write_u32(os, static_cast<std::uint32_t>(ds.size()));
  write_u32(os, static_cast<std::uint32_t>(shape[0]));
  write_u32(os, static_cast<std::uint32_t>(shape[1]));
  write_u32(os, static_cast<std::uint32_t>(shape[2]));
  os.put(static_cast<char>(dtype));
  for (const Tensor<float>& img : ds.images) {
    if (dtype == RawDtype::kU8) {
      for (std::size_t i = 0; i < img.numel(); ++i) {
        const float v = std::clamp(img[i], 0.0f, 1.0f);
        os.put(static_cast<char>(
            static_cast<unsigned char>(std::lround(v * 255.0f))));
      }
    } else {
      os.write(reinterpret_cast<const char*>(img.data()),
               static_cast<std::streamsize>(img.numel() * sizeof(float)));
    }
  }
  for (std::uint16_t label : ds.labels)
    os.write(reinterpret_cast<const char*>(&label), 2);
  if (!os) {
    throw std::runtime_error("write failed for '" + path + "'");
  }
}

LabeledDataset load_raw(const std::string& path) {
  const std::vector<unsigned char> bytes = read_file(path);
  auto truncated_at = [&path](std::size_t offset) {
    return std::runtime_error("parse error in '" + path +
                              "': truncated at byte offset " +
                              std::to_string(offset));
  };
  if (bytes.size() < 4 + 1 + 16 + 1) throw truncated_at(bytes.size());
  if (std::memcmp(bytes.data(), "ABRT", 4) != 0) {
    throw std::runtime_error("parse error in '" + path +
                             "': bad magic (expected ABRT)");
  }
  if (bytes[4] != 1) {
    throw std::runtime_error("parse error in '" + path +
                             "': unsupported version " +
                             std::to_string(bytes[4]));
  }
  const std::uint32_t count = read_u32(bytes.data() + 5);
  const std::uint32_t c = read_u32(bytes.data() + 9);
  const std::uint32_t h = read_u32(bytes.data() + 13);
  const std::uint32_t w = read_u32(bytes.data() + 17);
  const std::uint8_t dtype_tag = bytes[21];
  if (dtype_tag > 1) {
    throw std::runtime_error("parse error in '" + path +
                             "': unknown dtype tag " +
                             std::to_string(dtype_tag));
  }
  const std::size_t pixels = static_cast<std::size_t>(c) * h * w;
  const std::size_t bytes_per_image = dtype_tag == 0 ? pixels : pixels * 4;
  const std::size_t payload_start = 22;
  const std::size_t labels_start = payload_start + count * bytes_per_image;
  const std::size_t expected = labels_start + count * 2;
  if (bytes.size() < expected) {
    throw truncated_at(bytes.size());
  }
  if (bytes.size() > expected) {
    throw std::runtime_error("parse error in '" + path + "': " +
                             std::to_string(bytes.size() - expected) +
                             " trailing bytes after byte offset " +
                             std::to_string(expected));
  }

  LabeledDataset ds;
  ds.num_classes = 0;  // filled by the caller / spec
  for (std::uint32_t r = 0; r < count; ++r) {
    Tensor<float> img({c, h, w});
    const unsigned char* src = bytes.data() + payload_start +
                               static_cast<std::size_t>(r) * bytes_per_image;
    if (dtype_tag == 0) {
      for (std::size_t i = 0; i < pixels; ++i)
        img[i] = static_cast<float>(src[i]) / 255.0f;
    } else {
      std::memcpy(img.data(), src, pixels * 4);
    }
    ds.images.push_back(std::move(img));
    std::uint16_t label;
    std::memcpy(&label, bytes.data() + labels_start + r * 2, 2);
    ds.labels.push_back(label);
  }
  return ds;
}

LabeledDataset subsample(const LabeledDataset& ds, std::size_t count,
                         std::uint64_t seed) {
  if (count > ds.size()) {
    throw std::invalid_argument("subsample: requested " +
                                std::to_string(count) + " of " +
                                std::to_string(ds.size()) + " images");
  }
  // Partial Fisher-Yates: choose `count` distinct indices, then restore
  // their original order so the subsample is a stable sub-sequence.
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.next_below(idx.size() - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());

  LabeledDataset out;
  out.num_classes = ds.num_classes;
  out.images.reserve(count);
  out.labels.reserve(count);
  for (std::size_t i : idx) {
    out.images.push_back(ds.images[i]);
    out.labels.push_back(ds.labels[i]);
  }
  return out;
}

std::pair<std::vector<double>, std::vector<double>> compute_channel_stats(
    const LabeledDataset& ds) {
  if (ds.size() == 0) {
    throw std::invalid_argument("compute_channel_stats: empty dataset");
  }
  const std::size_t c = ds.images[0].shape()[0];
  std::vector<double> sum(c, 0.0), sumsq(c, 0.0);
  std::size_t per_channel = 0;
  for (const Tensor<float>& img : ds.images) {
    const std::size_t plane = img.shape()[1] * img.shape()[2];
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t i = 0; i < plane; ++i) {
        const double v = img[ch * plane + i];
        sum[ch] += v;
        sumsq[ch] += v * v;
      }
    }
    per_channel += plane;
  }
  std::vector<double> means(c), stds(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    means[ch] = sum[ch] / static_cast<double>(per_channel);
    const double var =
        sumsq[ch] / static_cast<double>(per_channel) - means[ch] * means[ch];
    stds[ch] = std::sqrt(std::max(var, 0.0));
  }
  return {means, stds};
}

void DatasetSpec::validate() const {
  if (name != "cifar10" && name != "cifar100" && name != "raw" &&
      name != "synthetic") {
    throw std::invalid_argument(
        "DatasetSpec: unknown dataset '" + name +
        "' (expected cifar10|cifar100|raw|synthetic)");
  }
  if (image_size < 1 || channels < 1 || num_classes < 1) {
    throw std::invalid_argument("DatasetSpec: extents must be positive");
  }
  if (means.size() != static_cast<std::size_t>(channels) ||
      stds.size() != static_cast<std::size_t>(channels)) {
    throw std::invalid_argument(
        "DatasetSpec: normalization constants must list one mean and one "
        "std per channel");
  }
  for (double s : stds) {
    if (!(s > 0)) {
      throw std::invalid_argument(
          "DatasetSpec: normalization stds must be strictly positive");
    }
  }
  if (name == "synthetic" && (!train_subsample || !test_subsample)) {
    throw std::invalid_argument(
        "DatasetSpec: synthetic datasets need explicit train/test counts "
        "(set the subsample fields)");
  }
}

std::pair<LabeledDataset, LabeledDataset> load_dataset(const DatasetSpec& spec,
                                                       std::uint64_t seed) {
  spec.validate();
  LabeledDataset train, test;
  if (spec.name == "cifar10" || spec.name == "cifar100") {
    const CifarVariant v = spec.name == "cifar10" ? CifarVariant::kCifar10
                                                  : CifarVariant::kCifar100;
    train = load_cifar(spec.train_path, v);
    test = load_cifar(spec.test_path, v);
  } else if (spec.name == "raw") {
    train = load_raw(spec.train_path);
    test = load_raw(spec.test_path);
    train.num_classes = spec.num_classes;
    test.num_classes = spec.num_classes;
  } else {  // synthetic, generated deterministically from the run seed
    train = make_synthetic_cifar(*spec.train_subsample, spec.num_classes,
                                 derive_seed(seed, 20));
    test = make_synthetic_cifar(*spec.test_subsample, spec.num_classes,
                                derive_seed(seed, 21));
  }
  if (spec.name != "synthetic") {
    if (spec.train_subsample && *spec.train_subsample < train.size())
      train = subsample(train, *spec.train_subsample, derive_seed(seed, 10));
    if (spec.test_subsample && *spec.test_subsample < test.size())
      test = subsample(test, *spec.test_subsample, derive_seed(seed, 11));
  }
  train.validate();
  test.validate();
  return {std::move(train), std::move(test)};
}

}  // namespace attnbench
