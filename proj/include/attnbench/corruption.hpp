#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "attnbench/rng.hpp"
#include "attnbench/tensor.hpp"

namespace attnbench {

// Deterministic, seeded image corruptions (fog, Gaussian noise) plus
// dataset normalization. Images are CxHxW tensors with values in [0,1].

enum class CorruptionKind { kNone, kFog, kGaussianNoise };

enum class Scenario { kClean, kTrainOnly, kTestOnly, kTrainAndTest };

inline const char* corruption_kind_name(CorruptionKind k) {
  switch (k) {
    case CorruptionKind::kNone: return "none";
    case CorruptionKind::kFog: return "fog";
    case CorruptionKind::kGaussianNoise: return "gaussian";
  }
  return "?";
}

// Canonical scenario tokens match the CLI flag vocabulary: "train" means
// corruption during training only, "test" during testing only, "both"
// during both.
inline const char* scenario_name(Scenario s) {
  switch (s) {
    case Scenario::kClean: return "clean";
    case Scenario::kTrainOnly: return "train";
    case Scenario::kTestOnly: return "test";
    case Scenario::kTrainAndTest: return "both";
  }
  return "?";
}

inline CorruptionKind corruption_kind_from_name(const std::string& name) {
  if (name == "none") return CorruptionKind::kNone;
  if (name == "fog") return CorruptionKind::kFog;
  if (name == "gaussian") return CorruptionKind::kGaussianNoise;
  throw std::invalid_argument("unknown corruption kind '" + name +
                              "' (expected none|fog|gaussian)");
}

inline Scenario scenario_from_name(const std::string& name) {
  if (name == "clean") return Scenario::kClean;
  if (name == "train" || name == "train-only") return Scenario::kTrainOnly;
  if (name == "test" || name == "test-only") return Scenario::kTestOnly;
  if (name == "both" || name == "train-and-test")
    return Scenario::kTrainAndTest;
  throw std::invalid_argument("unknown scenario '" + name +
                              "' (expected clean|train|test|both)");
}

// What to corrupt, how hard, and from which seed. The scenario alone
// determines which splits receive the corruption.
struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::kNone;
  double severity = 0.0;  // fog strength, or noise sigma
  std::uint64_t seed = 0;
  Scenario scenario = Scenario::kClean;

  void validate() const {
    if (kind != CorruptionKind::kNone && !(severity > 0)) {
      throw std::invalid_argument(
          "CorruptionSpec: severity must be > 0 for kind '" +
          std::string(corruption_kind_name(kind)) + "', got " +
          std::to_string(severity));
    }
    if (kind == CorruptionKind::kNone && scenario != Scenario::kClean) {
      throw std::invalid_argument(
          "CorruptionSpec: kind 'none' requires the clean scenario");
    }
  }

  bool corrupts_train() const {
    return kind != CorruptionKind::kNone &&
           (scenario == Scenario::kTrainOnly ||
            scenario == Scenario::kTrainAndTest);
  }
  bool corrupts_test() const {
    return kind != CorruptionKind::kNone &&
           (scenario == Scenario::kTestOnly ||
            scenario == Scenario::kTrainAndTest);
  }
};

namespace detail {

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace detail

// Plasma-fractal haze map via diamond-square midpoint displacement on a
// power-of-two grid with wraparound neighbours, min-max normalized to
// [0,1]. The displacement amplitude decays by a fixed factor per level, so
// large-scale structure dominates and the map looks like drifting haze.
inline std::vector<double> plasma_fractal(std::size_t size,
                                          std::uint64_t seed) {
  if (size < 2 || (size & (size - 1)) != 0) {
    throw std::invalid_argument("plasma_fractal: size " +
                                std::to_string(size) +
                                " must be a power of two >= 2");
  }
  const std::size_t n = size;
  std::vector<double> g(n * n, 0.0);
  Rng rng(seed);
  const double decay = 1.8;
  double amp = 1.0;

  auto at = [&g, n](std::size_t y, std::size_t x) -> double& {
    return g[(y & (n - 1)) * n + (x & (n - 1))];
  };
  auto wibble = [&rng, &amp]() { return amp * (2.0 * rng.next_double() - 1.0); };

  for (std::size_t step = n; step >= 2; step /= 2) {
    const std::size_t half = step / 2;
    // Square pass: centers from the four wraparound block corners.
    for (std::size_t y = 0; y < n; y += step) {
      for (std::size_t x = 0; x < n; x += step) {
        const double mean = 0.25 * (at(y, x) + at(y, x + step) +
                                    at(y + step, x) + at(y + step, x + step));
        at(y + half, x + half) = mean + wibble();
      }
    }
    // Diamond pass: edge midpoints from their four wraparound neighbours.
    for (std::size_t y = 0; y < n; y += step) {
      for (std::size_t x = 0; x < n; x += step) {
        const double top = 0.25 * (at(y, x) + at(y, x + step) +
                                   at(y - half, x + half) +
                                   at(y + half, x + half));
        at(y, x + half) = top + wibble();
        const double left = 0.25 * (at(y, x) + at(y + step, x) +
                                    at(y + half, x - half) +
                                    at(y + half, x + half));
        at(y + half, x) = left + wibble();
      }
    }
    amp /= decay;
  }

  const auto [lo_it, hi_it] = std::minmax_element(g.begin(), g.end());
  const double lo = *lo_it, hi = *hi_it;
  if (hi - lo > 0) {
    for (double& v : g) v = (v - lo) / (hi - lo);
  } else {
    std::fill(g.begin(), g.end(), 0.0);
  }
  return g;
}

// Fog: blends a seeded plasma haze into the image and renormalizes
// per-pixel, out = (x + s*m) / (1 + s*m). Properties: exact identity at
// s = 0, stays in [0,1] without clipping, every pixel moves monotonically
// toward white as severity grows (fog whitens), and the same
// (seed, severity, image) triple is bitwise reproducible.
template <typename T>
Tensor<T> fog(const Tensor<T>& image, double severity, std::uint64_t seed) {
  if (severity < 0) {
    throw std::domain_error("fog: severity must be >= 0, got " +
                            std::to_string(severity));
  }
  if (image.ndim() != 3) {
    throw std::invalid_argument("fog: expected a CxHxW image, got " +
                                image.shape_str());
  }
  if (severity == 0) return image;
  const std::size_t c = image.shape()[0];
  const std::size_t h = image.shape()[1];
  const std::size_t w = image.shape()[2];
  // One shared haze layer across channels (fog is achromatic), generated on
  // the next power-of-two grid and cropped.
  const std::size_t grid = std::max<std::size_t>(2, detail::next_pow2(
                                                        std::max(h, w)));
  const std::vector<double> haze = plasma_fractal(grid, seed);

  Tensor<T> out(image.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double m = haze[y * grid + x];
        const double v = static_cast<double>(image[(ch * h + y) * w + x]);
        const double fogged = (v + severity * m) / (1.0 + severity * m);
        out[(ch * h + y) * w + x] =
            static_cast<T>(std::clamp(fogged, 0.0, 1.0));
      }
    }
  }
  return out;
}

// Additive zero-mean Gaussian noise, clamped to [0,1]. sigma = 0 is an
// exact identity (no RNG draws). Deterministic per seed.
template <typename T>
Tensor<T> gaussian_noise(const Tensor<T>& image, double sigma,
                         std::uint64_t seed) {
  if (sigma < 0) {
    throw std::domain_error("gaussian_noise: sigma must be >= 0, got " +
                            std::to_string(sigma));
  }
  if (sigma == 0) return image;
  Tensor<T> out(image.shape());
  Rng rng(seed);
  for (std::size_t i = 0; i < image.numel(); ++i) {
    const double v = static_cast<double>(image[i]) + sigma * rng.gaussian();
    out[i] = static_cast<T>(std::clamp(v, 0.0, 1.0));
  }
  return out;
}

// Dispatch on the spec's kind. `seed` is the fully derived per-image seed.
template <typename T>
Tensor<T> corrupt_image(const Tensor<T>& image, CorruptionKind kind,
                        double severity, std::uint64_t seed) {
  switch (kind) {
    case CorruptionKind::kNone: return image;
    case CorruptionKind::kFog: return fog(image, severity, seed);
    case CorruptionKind::kGaussianNoise:
      return gaussian_noise(image, severity, seed);
  }
  throw std::invalid_argument("corrupt_image: unknown corruption kind");
}

// Per-channel standardization: (x - mean[c]) / std[c].
template <typename T>
Tensor<T> normalize(const Tensor<T>& image, const std::vector<double>& means,
                    const std::vector<double>& stds) {
  if (image.ndim() != 3) {
    throw std::invalid_argument("normalize: expected a CxHxW image, got " +
                                image.shape_str());
  }
  const std::size_t c = image.shape()[0];
  if (means.size() != c || stds.size() != c) {
    throw std::invalid_argument(
        "normalize: " + std::to_string(c) + "-channel image with " +
        std::to_string(means.size()) + " means and " +
        std::to_string(stds.size()) + " stds");
  }
  for (std::size_t ch = 0; ch < c; ++ch) {
    if (!(stds[ch] > 0)) {
      throw std::domain_error("normalize: std for channel " +
                              std::to_string(ch) + " is " +
                              std::to_string(stds[ch]) +
                              ", must be strictly positive");
    }
  }
  Tensor<T> out(image.shape());
  const std::size_t plane = image.shape()[1] * image.shape()[2];
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < plane; ++i)
      out[ch * plane + i] = static_cast<T>(
          (static_cast<double>(image[ch * plane + i]) - means[ch]) / stds[ch]);
  return out;
}

template <typename T>
Tensor<T> denormalize(const Tensor<T>& image, const std::vector<double>& means,
                      const std::vector<double>& stds) {
  if (image.ndim() != 3) {
    throw std::invalid_argument("denormalize: expected a CxHxW image, got " +
                                image.shape_str());
  }
  const std::size_t c = image.shape()[0];
  if (means.size() != c || stds.size() != c) {
    throw std::invalid_argument("denormalize: channel count mismatch");
  }
  Tensor<T> out(image.shape());
  const std::size_t plane = image.shape()[1] * image.shape()[2];
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < plane; ++i)
      out[ch * plane + i] = static_cast<T>(
          static_cast<double>(image[ch * plane + i]) * stds[ch] + means[ch]);
  return out;
}

// Seed-derivation scheme, the single documented fan-out for corruption:
//   fixed corruption of split s, image i   -> derive_seed(spec.seed, s, i)
//   on-the-fly training corruption,
//   epoch e, image i                       -> derive_seed(
//                                               derive_seed(spec.seed,
//                                                           kTrainSplit, e),
//                                               kTrainSplit, i)
// Train and test streams therefore never collide, and the per-epoch stream
// is independent of the fixed train stream.
inline constexpr std::uint64_t kTrainSplit = 0;
inline constexpr std::uint64_t kTestSplit = 1;

inline std::uint64_t corruption_seed(std::uint64_t base, std::uint64_t split,
                                     std::size_t index) {
  return derive_seed(base, split, index);
}

inline std::uint64_t train_epoch_corruption_seed(std::uint64_t base,
                                                 std::size_t epoch,
                                                 std::size_t index) {
  return derive_seed(derive_seed(base, kTrainSplit, epoch), kTrainSplit,
                     index);
}

// Applies the spec to both splits at once: corruption lands on exactly the
// splits the scenario names, each image corrupted under its own derived
// seed. The clean scenario (or kind none) is a strict no-op.
template <typename T>
std::pair<std::vector<Tensor<T>>, std::vector<Tensor<T>>> apply_scenario(
    const std::vector<Tensor<T>>& train, const std::vector<Tensor<T>>& test,
    const CorruptionSpec& spec) {
  spec.validate();
  std::vector<Tensor<T>> train_out = train;
  std::vector<Tensor<T>> test_out = test;
  if (spec.corrupts_train()) {
    for (std::size_t i = 0; i < train_out.size(); ++i)
      train_out[i] = corrupt_image(train_out[i], spec.kind, spec.severity,
                                   corruption_seed(spec.seed, kTrainSplit, i));
  }
  if (spec.corrupts_test()) {
    for (std::size_t i = 0; i < test_out.size(); ++i)
      test_out[i] = corrupt_image(test_out[i], spec.kind, spec.severity,
                                  corruption_seed(spec.seed, kTestSplit, i));
  }
  return {std::move(train_out), std::move(test_out)};
}

}  // namespace attnbench
