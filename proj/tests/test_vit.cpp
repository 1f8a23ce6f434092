// Tests for the Vision Transformer assembly: patch extraction, seeded
// initialization, forward determinism, end-to-end gradients checked against
// finite differences, training-step behaviour (including divergence
// handling), the LR schedule, AdamW, and checkpoint round-trips.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "attnbench/optim.hpp"
#include "attnbench/rng.hpp"
#include "attnbench/vit.hpp"

using namespace attnbench;

namespace {

template <typename T>
Tensor<T> random_image(Rng& rng, int c, int h, int w) {
  Tensor<T> img({static_cast<std::size_t>(c), static_cast<std::size_t>(h),
                 static_cast<std::size_t>(w)});
  for (std::size_t i = 0; i < img.numel(); ++i)
    img[i] = static_cast<T>(rng.next_double());
  return img;
}

ViTConfig tiny_config(AttentionVariant v = AttentionVariant::kSoftmax) {
  ViTConfig cfg;
  cfg.image_size = 8;
  cfg.patch_size = 4;
  cfg.channels = 3;
  cfg.embed_dim = 16;
  cfg.depth = 1;
  cfg.heads = 2;
  cfg.mlp_ratio = 2.0;
  cfg.num_classes = 4;
  cfg.attention.variant = v;
  cfg.attention.sinkhorn_max_iter = 6;
  cfg.attention.sinkhorn_eps = 1.5;
  return cfg;
}

// Mean cross-entropy of a model on a batch, rebuilt from scratch (used as
// the scalar function for finite differences and as an eval loss).
template <typename T>
double batch_loss(ViTModel<T>& model, const std::vector<Tensor<T>>& images,
                  const std::vector<std::size_t>& labels) {
  Tape<T> tape;
  std::vector<Var<T>> pv = model.make_vars(tape, false);
  double total = 0.0;
  for (std::size_t b = 0; b < images.size(); ++b) {
    Var<T> logits = model.forward_graph(tape, pv, images[b]);
    total += static_cast<double>(
        cross_entropy_with_logits(logits, labels[b]).value()[0]);
  }
  return total / static_cast<double>(images.size());
}

}  // namespace

TEST_CASE("patchify: hand-built 1x4x4 image with patch size 2") {
  // Image values encode (channel, row, col) as 100*c + 10*y + x so the
  // expected flattening can be written down directly.
  Tensor<double> img({1, 4, 4});
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) img[y * 4 + x] = 10.0 * y + x;

  Tensor<double> p = patchify(img, 2);
  REQUIRE(p.rows() == 4);
  REQUIRE(p.cols() == 4);
  // Patch 0 = top-left, rows 0-1, cols 0-1, flattened row-major.
  CHECK(p(0, 0) == 0.0);
  CHECK(p(0, 1) == 1.0);
  CHECK(p(0, 2) == 10.0);
  CHECK(p(0, 3) == 11.0);
  // Patch 1 = top-right (raster order moves along the row first).
  CHECK(p(1, 0) == 2.0);
  CHECK(p(1, 3) == 13.0);
  // Patch 2 = bottom-left.
  CHECK(p(2, 0) == 20.0);
  CHECK(p(3, 3) == 33.0);
}

TEST_CASE("patchify: channel-major flattening within a patch") {
  Tensor<double> img({2, 2, 2});
  for (std::size_t i = 0; i < 8; ++i) img[i] = static_cast<double>(i);
  Tensor<double> p = patchify(img, 2);
  REQUIRE(p.rows() == 1);
  REQUIRE(p.cols() == 8);
  // All of channel 0 comes before any of channel 1.
  for (std::size_t i = 0; i < 8; ++i) CHECK(p(0, i) == static_cast<double>(i));
}

TEST_CASE("patchify/unpatchify: exact round trip on non-square images") {
  Rng rng(11);
  for (auto [c, h, w, p] : {std::tuple{3, 8, 8, 4}, std::tuple{2, 4, 6, 2},
                            std::tuple{1, 6, 2, 2}, std::tuple{4, 12, 8, 4}}) {
    Tensor<double> img = random_image<double>(rng, c, h, w);
    Tensor<double> patches = patchify(img, p);
    CHECK(patches.rows() ==
          static_cast<std::size_t>((h / p) * (w / p)));
    CHECK(patches.cols() == static_cast<std::size_t>(c * p * p));
    Tensor<double> back = unpatchify(patches, p, c, h, w);
    REQUIRE(back.numel() == img.numel());
    for (std::size_t i = 0; i < img.numel(); ++i) CHECK(back[i] == img[i]);
  }
}

TEST_CASE("patchify: shape validation") {
  Tensor<double> flat({4, 4});
  CHECK_THROWS_AS(patchify(flat, 2), std::invalid_argument);
  Tensor<double> img({3, 6, 6});
  CHECK_THROWS_AS(patchify(img, 4), std::invalid_argument);  // 6 % 4 != 0
  CHECK_THROWS_AS(patchify(img, 0), std::invalid_argument);
  Tensor<double> p({1, 8});
  CHECK_THROWS_AS(unpatchify(p, 2, 2, 4, 4), std::invalid_argument);
}

TEST_CASE("ViTConfig: validation rejects inconsistent dimensions") {
  ViTConfig cfg = tiny_config();
  CHECK_NOTHROW(cfg.validate());
  cfg.patch_size = 3;  // 8 % 3 != 0
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = tiny_config();
  cfg.heads = 3;  // 16 % 3 != 0
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = tiny_config();
  cfg.depth = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  CHECK(tiny_config().tokens() == 5);
  CHECK(tiny_config().patch_dim() == 48);
  CHECK(tiny_config().mlp_dim() == 32);
}

TEST_CASE("init: zeroed classifier gives uniform logits and loss log(C)") {
  ViTModel<double> model = ViTModel<double>::init(tiny_config(), 7);
  Rng rng(3);
  Tensor<double> img = random_image<double>(rng, 3, 8, 8);
  Tensor<double> z = model.logits(img);
  REQUIRE(z.numel() == 4);
  for (std::size_t j = 1; j < 4; ++j) CHECK(z[j] == doctest::Approx(z[0]));

  const double loss = batch_loss(model, {img}, {std::size_t{2}});
  CHECK(loss == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("init: deterministic in the seed, different across seeds") {
  ViTModel<float> a = ViTModel<float>::init(tiny_config(), 123);
  ViTModel<float> b = ViTModel<float>::init(tiny_config(), 123);
  ViTModel<float> c = ViTModel<float>::init(tiny_config(), 124);

  auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  REQUIRE(pa.size() == pb.size());
  bool any_differs_from_c = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    REQUIRE(pa[i].tensor->numel() == pb[i].tensor->numel());
    for (std::size_t j = 0; j < pa[i].tensor->numel(); ++j) {
      CHECK((*pa[i].tensor)[j] == (*pb[i].tensor)[j]);
      if ((*pa[i].tensor)[j] != (*pc[i].tensor)[j]) any_differs_from_c = true;
    }
  }
  CHECK(any_differs_from_c);

  Rng rng(9);
  Tensor<float> img = random_image<float>(rng, 3, 8, 8);
  Tensor<float> za = a.logits(img);
  Tensor<float> zb = b.logits(img);
  for (std::size_t j = 0; j < za.numel(); ++j) CHECK(za[j] == zb[j]);
}

TEST_CASE("init: weight-decay flags cover exactly the weight matrices") {
  ViTModel<double> model = ViTModel<double>::init(tiny_config(), 1);
  for (const ParamRef<double>& p : model.parameters()) {
    const bool is_matrix_weight =
        p.name == "patch_w" || p.name == "head_w" ||
        p.name.find("w_") != std::string::npos ||
        p.name.find(".w1") != std::string::npos ||
        p.name.find(".w2") != std::string::npos;
    CHECK(p.decay == is_matrix_weight);
    // Bias-like tensors, norms, gamma, m, cls and pos must not decay.
    if (p.name.find("ln") != std::string::npos ||
        p.name.find("b_") != std::string::npos || p.name == "cls" ||
        p.name == "pos" || p.name.find("gamma") != std::string::npos ||
        p.name.find(".m") != std::string::npos) {
      CHECK_FALSE(p.decay);
    }
  }
}

TEST_CASE("forward: whole-model gradients match finite differences") {
  // Double precision, one block, all five kernels. For each variant we
  // probe a spread of coordinates across qualitatively different parameter
  // tensors and compare the tape gradient of the loss against central
  // differences on the same loss.
  for (AttentionVariant variant :
       {AttentionVariant::kSoftmax, AttentionVariant::kSigmoid,
        AttentionVariant::kLinear, AttentionVariant::kDoublyStochastic,
        AttentionVariant::kCosine}) {
    CAPTURE(std::string(variant_name(variant)));
    ViTModel<double> model = ViTModel<double>::init(tiny_config(variant), 42);
    // The classifier head initializes to zero, which would zero every
    // backbone gradient and make those probes vacuous; give it real values.
    Rng head_rng(7);
    for (auto& v : model.head_w.values()) v = head_rng.gaussian() * 0.1;
    for (auto& v : model.head_b.values()) v = head_rng.gaussian() * 0.1;
    Rng rng(5);
    std::vector<Tensor<double>> images = {random_image<double>(rng, 3, 8, 8),
                                          random_image<double>(rng, 3, 8, 8)};
    std::vector<std::size_t> labels = {1, 3};

    // Analytic gradients from one taped pass.
    Tape<double> tape;
    std::vector<Var<double>> pv = model.make_vars(tape, true);
    Var<double> total{};
    for (std::size_t b = 0; b < images.size(); ++b) {
      Var<double> lg = model.forward_graph(tape, pv, images[b]);
      Var<double> l = cross_entropy_with_logits(lg, labels[b]);
      total = b == 0 ? l : add(total, l);
    }
    tape.backward(scale(total, 0.5));

    std::vector<ParamRef<double>> params = model.parameters();
    REQUIRE(params.size() == pv.size());
    // (parameter name, flat coordinate) probes touching embedding, token,
    // positional, attention, LayerScale/m, MLP, norm and head tensors.
    std::vector<std::pair<std::string, std::size_t>> probes = {
        {"patch_w", 0},       {"patch_w", 17},      {"patch_b", 3},
        {"cls", 5},           {"pos", 1},           {"pos", 70},
        {"layer0.ln1_g", 2},  {"layer0.w_q", 33},   {"layer0.w_k", 100},
        {"layer0.w_v", 7},    {"layer0.b_v", 11},   {"layer0.w_o", 250},
        {"layer0.ln2_b", 9},  {"layer0.w1", 411},   {"layer0.b1", 20},
        {"layer0.w2", 123},   {"ln_f_g", 14},       {"head_w", 37},
        {"head_b", 2},
    };
    if (variant == AttentionVariant::kSigmoid) {
      probes.push_back({"layer0.gamma", 4});
    }
    if (variant == AttentionVariant::kCosine) {
      probes.push_back({"layer0.m", 0});
    }

    const double step = 1e-5;
    for (const auto& [name, coord] : probes) {
      CAPTURE(name);
      CAPTURE(coord);
      std::size_t pi = params.size();
      for (std::size_t i = 0; i < params.size(); ++i)
        if (params[i].name == name) pi = i;
      REQUIRE(pi < params.size());
      Tensor<double>& w = *params[pi].tensor;
      REQUIRE(coord < w.numel());

      const double analytic = tape.grad(pv[pi].idx)[coord];
      const double saved = w[coord];
      w[coord] = saved + step;
      const double up = batch_loss(model, images, labels);
      w[coord] = saved - step;
      const double dn = batch_loss(model, images, labels);
      w[coord] = saved;
      const double numeric = (up - dn) / (2.0 * step);

      const double denom = std::max({std::abs(analytic), std::abs(numeric),
                                     1e-6});
      CHECK(std::abs(analytic - numeric) / denom < 1e-3);
    }
  }
}

TEST_CASE("forward: patch permutation invariance with meanpool readout") {
  // With the positional table zeroed and readout = mean over patch tokens,
  // shuffling the patches of the input image must not change the logits:
  // every remaining op is permutation-equivariant over tokens.
  // The classifier head is zero-initialized (logits would be trivially
  // constant), so give every model the same random head first.
  auto randomize_head = [](ViTModel<double>& m) {
    Rng hr(999);
    for (auto& v : m.head_w.values()) v = hr.gaussian() * 0.1;
    for (auto& v : m.head_b.values()) v = hr.gaussian() * 0.1;
  };
  for (AttentionVariant variant :
       {AttentionVariant::kSoftmax, AttentionVariant::kDoublyStochastic,
        AttentionVariant::kCosine}) {
    CAPTURE(std::string(variant_name(variant)));
    ViTModel<double> model = ViTModel<double>::init(tiny_config(variant), 21);
    randomize_head(model);
    for (auto& v : model.pos.values()) v = 0.0;

    Rng rng(77);
    Tensor<double> img = random_image<double>(rng, 3, 8, 8);
    Tensor<double> patches = patchify(img, 4);  // 4 patches
    Tensor<double> shuffled(patches.shape());
    const std::size_t perm[4] = {2, 0, 3, 1};
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t c = 0; c < patches.cols(); ++c)
        shuffled(r, c) = patches(perm[r], c);
    Tensor<double> img2 = unpatchify(shuffled, 4, 3, 8, 8);

    Tensor<double> z1 = model.logits(img, ReadoutMode::kMeanPool);
    Tensor<double> z2 = model.logits(img2, ReadoutMode::kMeanPool);
    for (std::size_t j = 0; j < z1.numel(); ++j)
      CHECK(z1[j] == doctest::Approx(z2[j]).epsilon(1e-6));

    // Control: with the class-token readout and a live positional table the
    // permutation must be visible.
    ViTModel<double> posful = ViTModel<double>::init(tiny_config(variant), 21);
    randomize_head(posful);
    Tensor<double> c1 = posful.logits(img);
    Tensor<double> c2 = posful.logits(img2);
    double diff = 0.0;
    for (std::size_t j = 0; j < c1.numel(); ++j)
      diff = std::max(diff, std::abs(c1[j] - c2[j]));
    CHECK(diff > 1e-9);
  }
}

TEST_CASE("train_step: overfits a tiny fixed batch") {
  ViTConfig cfg = tiny_config();
  ViTModel<float> model = ViTModel<float>::init(cfg, 33);
  Rng rng(100);
  std::vector<Tensor<float>> images;
  std::vector<std::size_t> labels;
  for (int i = 0; i < 8; ++i) {
    images.push_back(random_image<float>(rng, 3, 8, 8));
    labels.push_back(static_cast<std::size_t>(i % 4));
  }

  AdamW<float> opt(model.parameters(), {});
  const double first = train_step(model, images, labels, opt, 3e-3, 0);
  CHECK(first == doctest::Approx(std::log(4.0)).epsilon(1e-4));

  std::vector<double> losses{first};
  for (std::size_t s = 1; s < 200; ++s)
    losses.push_back(train_step(model, images, labels, opt, 3e-3, s));

  CHECK(losses.back() < 0.1);
  // The loss curve should be overwhelmingly monotone on a memorized batch.
  std::size_t down = 0;
  for (std::size_t s = 1; s < losses.size(); ++s)
    if (losses[s] < losses[s - 1]) ++down;
  CHECK(down >= (losses.size() - 1) * 9 / 10);
  // The batch is fully memorized.
  for (std::size_t i = 0; i < images.size(); ++i)
    CHECK(model.predict(images[i]) == static_cast<int>(labels[i]));
}

TEST_CASE("train_step: zero learning rate leaves parameters bit-identical") {
  ViTModel<float> model = ViTModel<float>::init(tiny_config(), 8);
  std::vector<Tensor<float>> before;
  for (const auto& p : model.parameters()) before.push_back(*p.tensor);

  Rng rng(4);
  std::vector<Tensor<float>> images = {random_image<float>(rng, 3, 8, 8)};
  AdamW<float> opt(model.parameters(), {});
  train_step(model, images, {std::size_t{0}}, opt, 0.0, 0);

  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i)
    for (std::size_t j = 0; j < params[i].tensor->numel(); ++j)
      CHECK((*params[i].tensor)[j] == before[i][j]);
}

TEST_CASE("train_step: non-finite loss throws and parameters are untouched") {
  ViTModel<float> model = ViTModel<float>::init(tiny_config(), 15);
  std::vector<Tensor<float>> before;
  for (const auto& p : model.parameters()) before.push_back(*p.tensor);

  Tensor<float> poisoned({3, 8, 8});
  for (auto& v : poisoned.values()) v = 0.5f;
  poisoned[10] = std::numeric_limits<float>::quiet_NaN();

  AdamW<float> opt(model.parameters(), {});
  CHECK_THROWS_AS(
      train_step(model, {poisoned}, {std::size_t{1}}, opt, 1e-3, 7),
      TrainingDiverged);
  try {
    train_step(model, {poisoned}, {std::size_t{1}}, opt, 1e-3, 7);
  } catch (const TrainingDiverged& e) {
    CHECK(e.step == 7);
    CHECK_FALSE(std::isfinite(e.loss));
  }

  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i)
    for (std::size_t j = 0; j < params[i].tensor->numel(); ++j)
      CHECK((*params[i].tensor)[j] == before[i][j]);
  // The model still evaluates to finite logits afterwards.
  Tensor<float> clean({3, 8, 8});
  for (auto& v : clean.values()) v = 0.25f;
  CHECK(all_finite(model.logits(clean)));
}

TEST_CASE("train_step: input validation") {
  ViTModel<float> model = ViTModel<float>::init(tiny_config(), 1);
  AdamW<float> opt(model.parameters(), {});
  Rng rng(2);
  std::vector<Tensor<float>> images = {random_image<float>(rng, 3, 8, 8)};
  CHECK_THROWS_AS(train_step(model, images, {}, opt, 1e-3, 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(train_step(model, images, {std::size_t{4}}, opt, 1e-3, 0),
                  std::out_of_range);
}

TEST_CASE("cosine_warmup_lr: warmup ramp, peak, cosine decay, floor") {
  const std::size_t warmup = 10, total = 100;
  const double lr_max = 1e-3, lr_min = 1e-5;

  // Linear ramp over warmup: step s has lr (s+1)/warmup * lr_max.
  CHECK(cosine_warmup_lr(0, warmup, total, lr_max, lr_min) ==
        doctest::Approx(lr_max / 10));
  CHECK(cosine_warmup_lr(4, warmup, total, lr_max, lr_min) ==
        doctest::Approx(lr_max / 2));
  CHECK(cosine_warmup_lr(9, warmup, total, lr_max, lr_min) ==
        doctest::Approx(lr_max));
  // Cosine decay afterwards: continuous at the junction (still lr_max at
  // the first decay step), then strictly decreasing to lr_min.
  CHECK(cosine_warmup_lr(10, warmup, total, lr_max, lr_min) ==
        doctest::Approx(lr_max));
  double prev = cosine_warmup_lr(10, warmup, total, lr_max, lr_min);
  for (std::size_t s = 11; s < total; ++s) {
    const double lr = cosine_warmup_lr(s, warmup, total, lr_max, lr_min);
    CHECK(lr < prev);
    CHECK(lr >= lr_min);
    prev = lr;
  }
  CHECK(cosine_warmup_lr(total, warmup, total, lr_max, lr_min) ==
        doctest::Approx(lr_min));
  CHECK(cosine_warmup_lr(total + 50, warmup, total, lr_max, lr_min) ==
        doctest::Approx(lr_min));
  // Midpoint of the decay sits halfway between max and min.
  CHECK(cosine_warmup_lr(55, warmup, total, lr_max, lr_min) ==
        doctest::Approx((lr_max + lr_min) / 2).epsilon(1e-6));
}

TEST_CASE("AdamW: first step matches the closed form") {
  // With bias correction, the first update is
  //   w -= lr * (g / (|g| + eps') + wd * w)   with eps' folded appropriately;
  // for eps -> 0 this is lr * sign(g) for decoupled decay wd = 0.
  Tensor<double> w = Tensor<double>::from({3}, {1.0, -2.0, 0.5});
  Tensor<double> g = Tensor<double>::from({3}, {0.1, -0.3, 0.0});
  std::vector<ParamRef<double>> params = {{"w", &w, true}};
  OptimizerConfig oc;
  oc.weight_decay = 0.0;
  oc.eps = 1e-12;
  AdamW<double> opt(params, oc);
  opt.step(params, {g}, 0.01);
  CHECK(w[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
  CHECK(w[1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-6));
  CHECK(w[2] == doctest::Approx(0.5));  // zero gradient, zero decay: no move

  // Decoupled weight decay acts even under zero gradient when enabled.
  Tensor<double> w2 = Tensor<double>::from({1}, {2.0});
  std::vector<ParamRef<double>> p2 = {{"w2", &w2, true}};
  OptimizerConfig oc2;
  oc2.weight_decay = 0.1;
  AdamW<double> opt2(p2, oc2);
  opt2.step(p2, {Tensor<double>::zeros({1})}, 0.5);
  CHECK(w2[0] == doctest::Approx(2.0 - 0.5 * 0.1 * 2.0));

  // decay=false parameters ignore weight decay entirely.
  Tensor<double> w3 = Tensor<double>::from({1}, {2.0});
  std::vector<ParamRef<double>> p3 = {{"w3", &w3, false}};
  AdamW<double> opt3(p3, oc2);
  opt3.step(p3, {Tensor<double>::zeros({1})}, 0.5);
  CHECK(w3[0] == 2.0);
}

TEST_CASE("AdamW: rejects mismatched gradient lists") {
  Tensor<double> w = Tensor<double>::zeros({2});
  std::vector<ParamRef<double>> params = {{"w", &w, true}};
  AdamW<double> opt(params, {});
  CHECK_THROWS_AS(opt.step(params, {}, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(opt.step(params, {Tensor<double>::zeros({3})}, 0.1),
                  std::invalid_argument);
}

TEST_CASE("checkpoint: save/load round-trips bit-exactly") {
  const std::string path = "/tmp/attnbench_vit_ckpt_test.bin";
  ViTConfig cfg = tiny_config(AttentionVariant::kSigmoid);
  cfg.attention.sigmoid_bias = -1.25;
  ViTModel<float> model = ViTModel<float>::init(cfg, 97);
  // Perturb away from init so the file is not trivially reproducible.
  Rng rng(55);
  for (auto& p : model.parameters())
    for (auto& v : p.tensor->values())
      v += static_cast<float>(0.01 * rng.next_double());

  const std::uint64_t hash_before = parameter_hash(model);
  save_checkpoint(model, path);
  ViTModel<float> loaded = load_checkpoint<float>(path);

  CHECK(loaded.cfg.image_size == cfg.image_size);
  CHECK(loaded.cfg.patch_size == cfg.patch_size);
  CHECK(loaded.cfg.embed_dim == cfg.embed_dim);
  CHECK(loaded.cfg.depth == cfg.depth);
  CHECK(loaded.cfg.num_classes == cfg.num_classes);
  CHECK(loaded.cfg.attention.variant == AttentionVariant::kSigmoid);
  REQUIRE(loaded.cfg.attention.sigmoid_bias.has_value());
  CHECK(*loaded.cfg.attention.sigmoid_bias == -1.25);

  auto pa = model.parameters(), pb = loaded.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].name == pb[i].name);
    REQUIRE(pa[i].tensor->shape() == pb[i].tensor->shape());
    for (std::size_t j = 0; j < pa[i].tensor->numel(); ++j)
      CHECK((*pa[i].tensor)[j] == (*pb[i].tensor)[j]);
  }
  CHECK(parameter_hash(loaded) == hash_before);

  // Identical logits from the reloaded model.
  Rng irng(12);
  Tensor<float> img = random_image<float>(irng, 3, 8, 8);
  Tensor<float> z1 = model.logits(img);
  Tensor<float> z2 = loaded.logits(img);
  for (std::size_t j = 0; j < z1.numel(); ++j) CHECK(z1[j] == z2[j]);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint: malformed files are rejected with clear errors") {
  const std::string path = "/tmp/attnbench_vit_ckpt_bad.bin";
  CHECK_THROWS_AS(load_checkpoint<float>("/tmp/does_not_exist_attnbench.bin"),
                  std::runtime_error);

  {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os.write("NOPE", 4);
  }
  CHECK_THROWS_WITH_AS(load_checkpoint<float>(path),
                       doctest::Contains("bad magic"), std::runtime_error);

  ViTModel<float> model = ViTModel<float>::init(tiny_config(), 3);
  save_checkpoint(model, path);
  // Truncate the tail: the loader must report a truncation, not garbage.
  {
    std::ifstream is(path, std::ios::binary);
    std::vector<char> all((std::istreambuf_iterator<char>(is)),
                          std::istreambuf_iterator<char>());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os.write(all.data(), static_cast<std::streamsize>(all.size() / 2));
  }
  CHECK_THROWS_WITH_AS(load_checkpoint<float>(path),
                       doctest::Contains("truncated"), std::runtime_error);

  // Precision mismatch is detected from the dtype tag.
  save_checkpoint(model, path);
  CHECK_THROWS_WITH_AS(load_checkpoint<double>(path),
                       doctest::Contains("precision"), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("parameter_hash: sensitive to any single-parameter change") {
  ViTModel<float> a = ViTModel<float>::init(tiny_config(), 10);
  ViTModel<float> b = ViTModel<float>::init(tiny_config(), 10);
  CHECK(parameter_hash(a) == parameter_hash(b));
  b.layers[0].w_q[5] += 1e-3f;
  CHECK(parameter_hash(a) != parameter_hash(b));
}
