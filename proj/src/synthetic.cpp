#include "attnbench/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "attnbench/rng.hpp"

namespace attnbench {

namespace {

Tensor<float> grating_image(int label, int num_classes, Rng& rng) {
  constexpr std::size_t kSide = 32;
  const double theta =
      std::numbers::pi * static_cast<double>(label) / num_classes;
  const double cos_t = std::cos(theta), sin_t = std::sin(theta);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double contrast = rng.uniform(0.22, 0.42);
  const double brightness = rng.uniform(0.38, 0.62);
  const double freq = 3.0;  // cycles across the image

  // Class-keyed RGB balance in [0.2, 1.0]: a weak secondary color cue.
  double mix[3];
  for (int ch = 0; ch < 3; ++ch) {
    mix[ch] = 0.6 + 0.4 * std::cos(2.0 * std::numbers::pi *
                                   (static_cast<double>(label) / num_classes +
                                    ch / 3.0));
  }

  Tensor<float> img({3, kSide, kSide});
  for (std::size_t ch = 0; ch < 3; ++ch) {
    for (std::size_t y = 0; y < kSide; ++y) {
      for (std::size_t x = 0; x < kSide; ++x) {
        const double u = (static_cast<double>(x) * cos_t +
                          static_cast<double>(y) * sin_t) /
                         static_cast<double>(kSide);
        const double s = std::sin(2.0 * std::numbers::pi * freq * u + phase);
        const double v = brightness + contrast * mix[ch] * s +
                         0.06 * rng.gaussian();
        img[(ch * kSide + y) * kSide + x] =
            static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return img;
}

}  // namespace

LabeledDataset make_synthetic_cifar(std::size_t count, int num_classes,
                                    std::uint64_t seed) {
  if (num_classes < 2) {
    throw std::invalid_argument("make_synthetic_cifar: need >= 2 classes");
  }
  LabeledDataset ds;
  ds.num_classes = num_classes;
  ds.images.reserve(count);
  ds.labels.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const int label = static_cast<int>(i % static_cast<std::size_t>(num_classes));
    Rng rng(derive_seed(seed, 0, i));
    ds.images.push_back(grating_image(label, num_classes, rng));
    ds.labels.push_back(static_cast<std::uint16_t>(label));
  }
  return ds;
}

void write_synthetic_cifar_file(const std::string& path, std::size_t count,
                                int num_classes, std::uint64_t seed) {
  if (num_classes < 2 || num_classes > 10) {
    throw std::invalid_argument(
        "write_synthetic_cifar_file: CIFAR-10 format holds labels 0-9, "
        "need 2 <= num_classes <= 10");
  }
  save_cifar(make_synthetic_cifar(count, num_classes, seed), path,
             CifarVariant::kCifar10);
}

}  // namespace attnbench
