// Tests for dataset ingestion: CIFAR binary parsing, the raw-tensor
// container, seeded subsampling, channel statistics and the synthetic
// grating generator.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "attnbench/dataset.hpp"
#include "attnbench/rng.hpp"
#include "attnbench/synthetic.hpp"

using namespace attnbench;

namespace {

const std::string kTmp = "/tmp/attnbench_dataset_test_";

void write_bytes(const std::string& path, const std::vector<unsigned char>& b) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  os.write(reinterpret_cast<const char*>(b.data()),
           static_cast<std::streamsize>(b.size()));
}

// One CIFAR-10 record: label byte + 3072 pixel bytes.
std::vector<unsigned char> c10_record(unsigned char label,
                                      unsigned char fill) {
  std::vector<unsigned char> rec(3073, fill);
  rec[0] = label;
  return rec;
}

}  // namespace

TEST_CASE("load_cifar: one 3073-byte record, label 7") {
  const std::string path = kTmp + "one_record.bin";
  std::vector<unsigned char> rec = c10_record(7, 0);
  for (std::size_t i = 0; i < 3072; ++i)
    rec[1 + i] = static_cast<unsigned char>(i % 256);
  write_bytes(path, rec);

  LabeledDataset ds = load_cifar(path, CifarVariant::kCifar10);
  REQUIRE(ds.size() == 1);
  CHECK(ds.num_classes == 10);
  CHECK(ds.labels[0] == 7);
  REQUIRE(ds.images[0].shape() == std::vector<std::size_t>{3, 32, 32});
  // Pixels scale by exactly 1/255 in record order (channel-major planes).
  for (std::size_t i = 0; i < 3072; ++i)
    CHECK(ds.images[0][i] == static_cast<float>(i % 256) / 255.0f);
  std::remove(path.c_str());
}

TEST_CASE("load_cifar: a standard-size train batch parses to 10000 records") {
  const std::string path = kTmp + "full_batch.bin";
  write_synthetic_cifar_file(path, 10000, 10, 3);
  LabeledDataset ds = load_cifar(path, CifarVariant::kCifar10);
  CHECK(ds.size() == 10000);
  std::remove(path.c_str());
}

TEST_CASE("load_cifar: all-zero pixel record scales to an all-zero image") {
  const std::string path = kTmp + "zeros.bin";
  write_bytes(path, c10_record(3, 0));
  LabeledDataset ds = load_cifar(path, CifarVariant::kCifar10);
  REQUIRE(ds.size() == 1);
  for (std::size_t i = 0; i < ds.images[0].numel(); ++i)
    CHECK(ds.images[0][i] == 0.0f);
  std::remove(path.c_str());
}

TEST_CASE("load_cifar: truncation reported with the byte offset") {
  const std::string path = kTmp + "truncated.bin";
  std::vector<unsigned char> two = c10_record(1, 10);
  std::vector<unsigned char> second = c10_record(2, 20);
  two.insert(two.end(), second.begin(), second.begin() + 100);  // partial
  write_bytes(path, two);
  // The partial record begins at offset 3073 (after one whole record).
  CHECK_THROWS_WITH_AS(load_cifar(path, CifarVariant::kCifar10),
                       doctest::Contains("byte offset 3073"),
                       std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("load_cifar: out-of-range label reported with the record index") {
  const std::string path = kTmp + "badlabel.bin";
  std::vector<unsigned char> bytes = c10_record(4, 0);
  std::vector<unsigned char> bad = c10_record(12, 0);  // label 12 invalid
  bytes.insert(bytes.end(), bad.begin(), bad.end());
  write_bytes(path, bytes);
  CHECK_THROWS_WITH_AS(load_cifar(path, CifarVariant::kCifar10),
                       doctest::Contains("record index 1"),
                       std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("load_cifar: missing file") {
  CHECK_THROWS_AS(load_cifar(kTmp + "does_not_exist.bin",
                             CifarVariant::kCifar10),
                  std::runtime_error);
}

TEST_CASE("load_cifar: CIFAR-100 uses the fine (second) label byte") {
  const std::string path = kTmp + "c100.bin";
  std::vector<unsigned char> rec(3074, 0);
  rec[0] = 5;   // coarse
  rec[1] = 93;  // fine
  write_bytes(path, rec);
  LabeledDataset ds = load_cifar(path, CifarVariant::kCifar100);
  REQUIRE(ds.size() == 1);
  CHECK(ds.num_classes == 100);
  CHECK(ds.labels[0] == 93);
  std::remove(path.c_str());
}

TEST_CASE("load_cifar: multiple batch files concatenate in order") {
  const std::string p1 = kTmp + "batch1.bin", p2 = kTmp + "batch2.bin";
  write_bytes(p1, c10_record(1, 100));
  write_bytes(p2, c10_record(2, 200));
  LabeledDataset ds = load_cifar(std::vector<std::string>{p1, p2},
                                 CifarVariant::kCifar10);
  REQUIRE(ds.size() == 2);
  CHECK(ds.labels[0] == 1);
  CHECK(ds.labels[1] == 2);
  CHECK(ds.images[0][5] == 100.0f / 255.0f);
  CHECK(ds.images[1][5] == 200.0f / 255.0f);
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("save_cifar/load_cifar: u8-exact round trip, both variants") {
  LabeledDataset ds = make_synthetic_cifar(20, 10, 77);
  for (CifarVariant v : {CifarVariant::kCifar10, CifarVariant::kCifar100}) {
    const std::string path = kTmp + "roundtrip.bin";
    save_cifar(ds, path, v);
    LabeledDataset back = load_cifar(path, v);
    REQUIRE(back.size() == ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
      CHECK(back.labels[i] == ds.labels[i]);
      // Loaded pixels are the quantized originals: round(v*255)/255.
      for (std::size_t j = 0; j < ds.images[i].numel(); ++j) {
        const float expect =
            std::round(ds.images[i][j] * 255.0f) / 255.0f;
        CHECK(back.images[i][j] == expect);
      }
    }
    std::remove(path.c_str());
  }
}

TEST_CASE("raw container: f32 round trip is bit-exact") {
  LabeledDataset ds = make_synthetic_cifar(7, 4, 5);
  const std::string path = kTmp + "raw_f32.bin";
  save_raw(ds, path, RawDtype::kF32);
  LabeledDataset back = load_raw(path);
  back.num_classes = ds.num_classes;
  REQUIRE(back.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(back.labels[i] == ds.labels[i]);
    REQUIRE(back.images[i].shape() == ds.images[i].shape());
    for (std::size_t j = 0; j < ds.images[i].numel(); ++j)
      CHECK(back.images[i][j] == ds.images[i][j]);  // bitwise
  }
  std::remove(path.c_str());
}

TEST_CASE("raw container: u8 round trip quantizes to 1/255 steps") {
  LabeledDataset ds = make_synthetic_cifar(3, 2, 6);
  const std::string path = kTmp + "raw_u8.bin";
  save_raw(ds, path, RawDtype::kU8);
  LabeledDataset back = load_raw(path);
  REQUIRE(back.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (std::size_t j = 0; j < ds.images[i].numel(); ++j)
      CHECK(back.images[i][j] ==
            std::round(ds.images[i][j] * 255.0f) / 255.0f);
  std::remove(path.c_str());
}

TEST_CASE("raw container: malformed files are rejected with offsets") {
  const std::string path = kTmp + "raw_bad.bin";
  write_bytes(path, {'A', 'B', 'R', 'T', 1});
  CHECK_THROWS_WITH_AS(load_raw(path), doctest::Contains("truncated"),
                       std::runtime_error);

  write_bytes(path, {'N', 'O', 'P', 'E', 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0,
                     0, 0, 0, 0, 0, 0});
  CHECK_THROWS_WITH_AS(load_raw(path), doctest::Contains("bad magic"),
                       std::runtime_error);

  LabeledDataset ds = make_synthetic_cifar(2, 2, 1);
  save_raw(ds, path, RawDtype::kF32);
  {  // chop off the label block
    std::ifstream is(path, std::ios::binary);
    std::vector<char> all((std::istreambuf_iterator<char>(is)),
                          std::istreambuf_iterator<char>());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os.write(all.data(), static_cast<std::streamsize>(all.size() - 3));
  }
  CHECK_THROWS_WITH_AS(load_raw(path), doctest::Contains("truncated"),
                       std::runtime_error);

  save_raw(ds, path, RawDtype::kF32);
  {  // append junk
    std::ofstream os(path, std::ios::binary | std::ios::app);
    os.put(42);
  }
  CHECK_THROWS_WITH_AS(load_raw(path), doctest::Contains("trailing"),
                       std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("subsample: seeded, without replacement, order-stable") {
  LabeledDataset ds = make_synthetic_cifar(50, 10, 9);
  // Tag each image so its original index is recoverable.
  for (std::size_t i = 0; i < ds.size(); ++i)
    ds.images[i][0] = static_cast<float>(i);

  LabeledDataset a = subsample(ds, 20, 1234);
  LabeledDataset b = subsample(ds, 20, 1234);
  LabeledDataset c = subsample(ds, 20, 1235);
  REQUIRE(a.size() == 20);
  CHECK(a.num_classes == 10);

  std::set<float> seen;
  bool ascending = true;
  for (std::size_t i = 0; i < a.size(); ++i) {
    seen.insert(a.images[i][0]);
    CHECK(a.images[i][0] == b.images[i][0]);  // deterministic
    CHECK(a.labels[i] == b.labels[i]);
    if (i > 0 && a.images[i][0] <= a.images[i - 1][0]) ascending = false;
  }
  CHECK(seen.size() == 20);  // distinct indices (no replacement)
  CHECK(ascending);          // original order preserved
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.images[i][0] != c.images[i][0]) differs = true;
  CHECK(differs);

  // Full-size subsample is the identity selection.
  LabeledDataset all = subsample(ds, 50, 7);
  for (std::size_t i = 0; i < 50; ++i) CHECK(all.images[i][0] == i);

  CHECK_THROWS_AS(subsample(ds, 51, 1), std::invalid_argument);
}

TEST_CASE("compute_channel_stats: exact on constant channels") {
  LabeledDataset ds;
  ds.num_classes = 2;
  Tensor<float> img({2, 4, 4});
  for (std::size_t i = 0; i < 16; ++i) img[i] = 0.25f;
  for (std::size_t i = 16; i < 32; ++i) img[i] = 0.75f;
  ds.images = {img, img};
  ds.labels = {0, 1};
  auto [means, stds] = compute_channel_stats(ds);
  REQUIRE(means.size() == 2);
  CHECK(means[0] == doctest::Approx(0.25));
  CHECK(means[1] == doctest::Approx(0.75));
  CHECK(stds[0] == doctest::Approx(0.0));
  CHECK(stds[1] == doctest::Approx(0.0));
}

TEST_CASE("synthetic: deterministic, balanced, in range") {
  LabeledDataset a = make_synthetic_cifar(40, 10, 123);
  LabeledDataset b = make_synthetic_cifar(40, 10, 123);
  REQUIRE(a.size() == 40);
  std::vector<int> counts(10, 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.labels[i] == i % 10);  // round-robin labels, exactly balanced
    ++counts[a.labels[i]];
    for (std::size_t j = 0; j < a.images[i].numel(); ++j) {
      CHECK(a.images[i][j] == b.images[i][j]);
      CHECK(a.images[i][j] >= 0.0f);
      CHECK(a.images[i][j] <= 1.0f);
    }
  }
  for (int c : counts) CHECK(c == 4);

  // Same class, different indices: phase/brightness vary, images differ.
  double diff_same_class = 0;
  for (std::size_t j = 0; j < a.images[0].numel(); ++j)
    diff_same_class = std::max(
        diff_same_class,
        std::abs(static_cast<double>(a.images[0][j]) - a.images[10][j]));
  CHECK(diff_same_class > 0.05);
}

TEST_CASE("synthetic: classes are statistically distinguishable") {
  // Phase randomization makes raw-pixel centroids nearly coincide by
  // design, so distinguishability is checked on orientation statistics:
  // directional gradient energies (horizontal, vertical, both diagonals)
  // identify the grating angle. Nearest-centroid in that feature space
  // should get nearly everything right; this guards against a degenerate
  // generator whose classes coincide.
  auto features = [](const Tensor<float>& img) {
    const std::size_t h = img.shape()[1], w = img.shape()[2];
    const std::size_t plane = h * w;
    double eh = 0, ev = 0, d1 = 0, d2 = 0;
    for (std::size_t ch = 0; ch < img.shape()[0]; ++ch) {
      const float* p = img.data() + ch * plane;
      for (std::size_t y = 0; y + 1 < h; ++y) {
        for (std::size_t x = 0; x + 1 < w; ++x) {
          const double gx = p[y * w + x + 1] - p[y * w + x];
          const double gy = p[(y + 1) * w + x] - p[y * w + x];
          const double ga = p[(y + 1) * w + x + 1] - p[y * w + x];
          const double gb = p[(y + 1) * w + x] - p[y * w + x + 1];
          eh += gx * gx;
          ev += gy * gy;
          d1 += ga * ga;
          d2 += gb * gb;
        }
      }
    }
    const double total = eh + ev + d1 + d2 + 1e-12;
    return std::vector<double>{eh / total, ev / total, d1 / total,
                               d2 / total};
  };

  LabeledDataset train = make_synthetic_cifar(200, 4, 31);
  LabeledDataset test = make_synthetic_cifar(80, 4, 32);
  std::vector<std::vector<double>> centroid(4, std::vector<double>(4, 0.0));
  std::vector<int> count(4, 0);
  for (std::size_t i = 0; i < train.size(); ++i) {
    const std::vector<double> f = features(train.images[i]);
    ++count[train.labels[i]];
    for (std::size_t j = 0; j < 4; ++j) centroid[train.labels[i]][j] += f[j];
  }
  for (int c = 0; c < 4; ++c)
    for (std::size_t j = 0; j < 4; ++j) centroid[c][j] /= count[c];

  int correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const std::vector<double> f = features(test.images[i]);
    double best = 1e18;
    int arg = -1;
    for (int c = 0; c < 4; ++c) {
      double d = 0;
      for (std::size_t j = 0; j < 4; ++j) {
        const double e = f[j] - centroid[c][j];
        d += e * e;
      }
      if (d < best) {
        best = d;
        arg = c;
      }
    }
    if (arg == static_cast<int>(test.labels[i])) ++correct;
  }
  // Chance is 25%.
  CHECK(correct >= static_cast<int>(test.size() * 9 / 10));
}

TEST_CASE("write_synthetic_cifar_file: parses back through the CIFAR path") {
  const std::string path = kTmp + "synth_c10.bin";
  write_synthetic_cifar_file(path, 30, 10, 2024);
  LabeledDataset direct = make_synthetic_cifar(30, 10, 2024);
  LabeledDataset loaded = load_cifar(path, CifarVariant::kCifar10);
  REQUIRE(loaded.size() == 30);
  for (std::size_t i = 0; i < 30; ++i) {
    CHECK(loaded.labels[i] == direct.labels[i]);
    for (std::size_t j = 0; j < direct.images[i].numel(); ++j)
      CHECK(std::abs(loaded.images[i][j] - direct.images[i][j]) <=
            0.5f / 255.0f + 1e-6f);
  }
  std::remove(path.c_str());
  CHECK_THROWS_AS(write_synthetic_cifar_file(path, 5, 11, 1),
                  std::invalid_argument);
}

TEST_CASE("DatasetSpec: validation and load_dataset dispatch") {
  DatasetSpec spec;
  spec.name = "synthetic";
  spec.num_classes = 10;
  spec.means = {0.5, 0.5, 0.5};
  spec.stds = {0.25, 0.25, 0.25};
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);  // counts missing
  spec.train_subsample = 30;
  spec.test_subsample = 10;
  CHECK_NOTHROW(spec.validate());

  auto [train, test] = load_dataset(spec, 99);
  CHECK(train.size() == 30);
  CHECK(test.size() == 10);
  CHECK(train.num_classes == 10);
  // Train and test draw from different derived seeds: disjoint content.
  double diff = 0;
  for (std::size_t j = 0; j < train.images[0].numel(); ++j)
    diff = std::max(diff, std::abs(static_cast<double>(train.images[0][j]) -
                                   test.images[0][j]));
  CHECK(diff > 0);

  // Same seed reproduces; different seed does not.
  auto [train2, test2] = load_dataset(spec, 99);
  auto [train3, test3] = load_dataset(spec, 100);
  for (std::size_t j = 0; j < train.images[0].numel(); ++j)
    CHECK(train.images[0][j] == train2.images[0][j]);
  double d3 = 0;
  for (std::size_t j = 0; j < train.images[0].numel(); ++j)
    d3 = std::max(d3, std::abs(static_cast<double>(train.images[0][j]) -
                               train3.images[0][j]));
  CHECK(d3 > 0);

  spec.name = "plasma";
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec.name = "cifar10";
  spec.stds = {0.25, 0.0, 0.25};
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}

TEST_CASE("load_dataset: cifar10 files with subsampling") {
  const std::string train_path = kTmp + "ld_train.bin";
  const std::string test_path = kTmp + "ld_test.bin";
  write_synthetic_cifar_file(train_path, 60, 10, 7);
  write_synthetic_cifar_file(test_path, 25, 10, 8);

  DatasetSpec spec;
  spec.name = "cifar10";
  spec.train_path = train_path;
  spec.test_path = test_path;
  spec.num_classes = 10;
  spec.means = {0.5, 0.5, 0.5};
  spec.stds = {0.25, 0.25, 0.25};
  spec.train_subsample = 40;

  auto [train, test] = load_dataset(spec, 55);
  CHECK(train.size() == 40);
  CHECK(test.size() == 25);  // no test subsample requested
  std::remove(train_path.c_str());
  std::remove(test_path.c_str());
}
