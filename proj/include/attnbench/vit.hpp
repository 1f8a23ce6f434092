#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "attnbench/attention.hpp"
#include "attnbench/autodiff.hpp"
#include "attnbench/optim.hpp"
#include "attnbench/rng.hpp"
#include "attnbench/tensor.hpp"

namespace attnbench {

// A small Vision Transformer assembled from the attention kernels:
// patch embedding, class token, positional embeddings, pre-norm encoder
// blocks, and a linear classifier head.

struct ViTConfig {
  int image_size = 32;
  int patch_size = 4;
  int channels = 3;
  int embed_dim = 64;
  int depth = 4;
  int heads = 4;
  double mlp_ratio = 2.0;
  int num_classes = 10;
  AttentionConfig attention;

  void validate() const {
    if (image_size < 1 || patch_size < 1 || channels < 1 || embed_dim < 1 ||
        depth < 1 || heads < 1 || num_classes < 1 || mlp_ratio <= 0) {
      throw std::invalid_argument("ViTConfig: all extents must be positive");
    }
    if (image_size % patch_size != 0) {
      throw std::invalid_argument(
          "ViTConfig: image_size " + std::to_string(image_size) +
          " not divisible by patch_size " + std::to_string(patch_size));
    }
    if (embed_dim % heads != 0) {
      throw std::invalid_argument("ViTConfig: embed_dim " +
                                  std::to_string(embed_dim) +
                                  " not divisible by heads " +
                                  std::to_string(heads));
    }
  }

  int patches_per_side() const { return image_size / patch_size; }
  int num_patches() const { return patches_per_side() * patches_per_side(); }
  int tokens() const { return 1 + num_patches(); }
  int patch_dim() const { return channels * patch_size * patch_size; }
  int mlp_dim() const {
    return static_cast<int>(embed_dim * mlp_ratio + 0.5);
  }

  // Attention config with heads/head_dim synced to the model dims.
  AttentionConfig attention_resolved() const {
    AttentionConfig a = attention;
    a.heads = heads;
    a.head_dim = embed_dim / heads;
    return a;
  }
};

// Patch extraction. Row r of the output is patch r in raster order (patch
// rows top to bottom, then left to right within a row); within a patch the
// flatten order is channel-major, then pixel row, then pixel column:
//   index = (c * p + y) * p + x.
template <typename T>
Tensor<T> patchify(const Tensor<T>& image, int patch_size) {
  if (image.ndim() != 3) {
    throw std::invalid_argument("patchify: expected a CxHxW image, got " +
                                image.shape_str());
  }
  const std::size_t c = image.shape()[0];
  const std::size_t h = image.shape()[1];
  const std::size_t w = image.shape()[2];
  const std::size_t p = static_cast<std::size_t>(patch_size);
  if (p < 1 || h % p != 0 || w % p != 0) {
    throw std::invalid_argument("patchify: image " + image.shape_str() +
                                " not divisible by patch size " +
                                std::to_string(patch_size));
  }
  const std::size_t rows = (h / p) * (w / p);
  Tensor<T> out({rows, c * p * p});
  std::size_t row = 0;
  for (std::size_t py = 0; py < h / p; ++py) {
    for (std::size_t px = 0; px < w / p; ++px, ++row) {
      T* dst = out.data() + row * c * p * p;
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < p; ++y)
          for (std::size_t x = 0; x < p; ++x)
            *dst++ = image[(ch * h + py * p + y) * w + px * p + x];
    }
  }
  return out;
}

// Inverse of patchify (exact): scatters patch rows back into an image.
template <typename T>
Tensor<T> unpatchify(const Tensor<T>& patches, int patch_size, int channels,
                     int height, int width) {
  const std::size_t c = static_cast<std::size_t>(channels);
  const std::size_t h = static_cast<std::size_t>(height);
  const std::size_t w = static_cast<std::size_t>(width);
  const std::size_t p = static_cast<std::size_t>(patch_size);
  if (patches.ndim() != 2 || patches.rows() != (h / p) * (w / p) ||
      patches.cols() != c * p * p) {
    throw std::invalid_argument("unpatchify: patch matrix " +
                                patches.shape_str() +
                                " does not match target image dims");
  }
  Tensor<T> image({c, h, w});
  std::size_t row = 0;
  for (std::size_t py = 0; py < h / p; ++py) {
    for (std::size_t px = 0; px < w / p; ++px, ++row) {
      const T* src = patches.data() + row * c * p * p;
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < p; ++y)
          for (std::size_t x = 0; x < p; ++x)
            image[(ch * h + py * p + y) * w + px * p + x] = *src++;
    }
  }
  return image;
}

enum class ReadoutMode {
  kClsToken,  // classify from the class token (default)
  kMeanPool,  // classify from the mean of patch tokens (test-mode switch)
};

// Thrown when a training step produces a non-finite loss or gradient.
// Parameters are left untouched (the update is never applied), so the model
// remains finite and the caller can record the failure.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::size_t step, double bad_loss)
      : std::runtime_error("training diverged at step " +
                           std::to_string(step) + " (loss = " +
                           std::to_string(bad_loss) + ")"),
        step(step),
        loss(bad_loss) {}
  std::size_t step;
  double loss;
};

template <typename T>
struct ViTModel {
  ViTConfig cfg;

  Tensor<T> patch_w;  // [patch_dim x embed_dim]
  Tensor<T> patch_b;  // [embed_dim]
  Tensor<T> cls;      // [1 x embed_dim]
  Tensor<T> pos;      // [tokens x embed_dim]

  struct Layer {
    Tensor<T> ln1_g, ln1_b;
    Tensor<T> w_q, b_q, w_k, b_k, w_v, b_v, w_o, b_o;
    Tensor<T> gamma;  // LayerScale, sigmoid variant
    Tensor<T> m;      // cosine stabilization scalar
    Tensor<T> ln2_g, ln2_b;
    Tensor<T> w1, b1, w2, b2;
  };
  std::vector<Layer> layers;

  Tensor<T> ln_f_g, ln_f_b;
  Tensor<T> head_w;  // [embed_dim x num_classes]
  Tensor<T> head_b;  // [num_classes]

  // Seeded deterministic initialization: truncated normal (std 0.02) for
  // projections, positional table and class token; ones/zeros for norms;
  // 1e-4 for LayerScale; zeros for the classifier head (uniform logits at
  // init, so the initial loss is exactly log num_classes).
  static ViTModel init(const ViTConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ViTModel m;
    m.cfg = cfg;
    m.cfg.attention = cfg.attention_resolved();
    Rng rng(derive_seed(seed, /*stream=*/1));
    const std::size_t dim = static_cast<std::size_t>(cfg.embed_dim);
    const std::size_t pd = static_cast<std::size_t>(cfg.patch_dim());
    const std::size_t md = static_cast<std::size_t>(cfg.mlp_dim());

    auto tn = [&rng](std::vector<std::size_t> shape) {
      Tensor<T> t(std::move(shape));
      for (std::size_t i = 0; i < t.numel(); ++i)
        t[i] = static_cast<T>(rng.truncated_normal(0.02));
      return t;
    };

    m.patch_w = tn({pd, dim});
    m.patch_b = Tensor<T>::zeros({dim});
    m.cls = tn({1, dim});
    m.pos = tn({static_cast<std::size_t>(cfg.tokens()), dim});
    for (int l = 0; l < cfg.depth; ++l) {
      Layer lay;
      lay.ln1_g = Tensor<T>::ones({dim});
      lay.ln1_b = Tensor<T>::zeros({dim});
      lay.w_q = tn({dim, dim});
      lay.b_q = Tensor<T>::zeros({dim});
      lay.w_k = tn({dim, dim});
      lay.b_k = Tensor<T>::zeros({dim});
      lay.w_v = tn({dim, dim});
      lay.b_v = Tensor<T>::zeros({dim});
      lay.w_o = tn({dim, dim});
      lay.b_o = Tensor<T>::zeros({dim});
      lay.gamma = Tensor<T>::full({dim}, T(1e-4));
      lay.m = Tensor<T>::full({1}, static_cast<T>(cfg.attention.cosine_m_init));
      lay.ln2_g = Tensor<T>::ones({dim});
      lay.ln2_b = Tensor<T>::zeros({dim});
      lay.w1 = tn({dim, md});
      lay.b1 = Tensor<T>::zeros({md});
      lay.w2 = tn({md, dim});
      lay.b2 = Tensor<T>::zeros({dim});
      m.layers.push_back(std::move(lay));
    }
    m.ln_f_g = Tensor<T>::ones({dim});
    m.ln_f_b = Tensor<T>::zeros({dim});
    m.head_w = Tensor<T>::zeros({dim, static_cast<std::size_t>(cfg.num_classes)});
    m.head_b = Tensor<T>::zeros({static_cast<std::size_t>(cfg.num_classes)});
    return m;
  }

  // Every parameter in a fixed, documented order. Optimizer state and
  // checkpoints address parameters by this order.
  std::vector<ParamRef<T>> parameters() {
    std::vector<ParamRef<T>> out;
    out.push_back({"patch_w", &patch_w, true});
    out.push_back({"patch_b", &patch_b, false});
    out.push_back({"cls", &cls, false});
    out.push_back({"pos", &pos, false});
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string p = "layer" + std::to_string(l) + ".";
      Layer& lay = layers[l];
      out.push_back({p + "ln1_g", &lay.ln1_g, false});
      out.push_back({p + "ln1_b", &lay.ln1_b, false});
      out.push_back({p + "w_q", &lay.w_q, true});
      out.push_back({p + "b_q", &lay.b_q, false});
      out.push_back({p + "w_k", &lay.w_k, true});
      out.push_back({p + "b_k", &lay.b_k, false});
      out.push_back({p + "w_v", &lay.w_v, true});
      out.push_back({p + "b_v", &lay.b_v, false});
      out.push_back({p + "w_o", &lay.w_o, true});
      out.push_back({p + "b_o", &lay.b_o, false});
      out.push_back({p + "gamma", &lay.gamma, false});
      out.push_back({p + "m", &lay.m, false});
      out.push_back({p + "ln2_g", &lay.ln2_g, false});
      out.push_back({p + "ln2_b", &lay.ln2_b, false});
      out.push_back({p + "w1", &lay.w1, true});
      out.push_back({p + "b1", &lay.b1, false});
      out.push_back({p + "w2", &lay.w2, true});
      out.push_back({p + "b2", &lay.b2, false});
    }
    out.push_back({"ln_f_g", &ln_f_g, false});
    out.push_back({"ln_f_b", &ln_f_b, false});
    out.push_back({"head_w", &head_w, true});
    out.push_back({"head_b", &head_b, false});
    return out;
  }

  // Parameter leaves on a tape, in parameters() order.
  std::vector<Var<T>> make_vars(Tape<T>& tape, bool requires_grad) {
    std::vector<Var<T>> vars;
    for (const ParamRef<T>& p : parameters())
      vars.push_back(tape.leaf(*p.tensor, requires_grad));
    return vars;
  }

  // Builds the forward graph for one image on the given tape using the
  // supplied parameter leaves, returning [1 x num_classes] logits.
  Var<T> forward_graph(Tape<T>& tape, const std::vector<Var<T>>& pv,
                       const Tensor<T>& image,
                       ReadoutMode mode = ReadoutMode::kClsToken) const {
    const AttentionConfig att = cfg.attention;  // resolved at init
    std::size_t i = 0;
    Var<T> patch_w_v = pv[i++], patch_b_v = pv[i++];
    Var<T> cls_v = pv[i++], pos_v = pv[i++];

    Var<T> patches = tape.constant(patchify(image, cfg.patch_size));
    Var<T> x = add_rowvec(matmul(patches, patch_w_v), patch_b_v);
    x = concat_rows(cls_v, x);
    x = add(x, pos_v);

    for (int l = 0; l < cfg.depth; ++l) {
      MultiHeadParams<T> mh;
      Var<T> ln1_g = pv[i++], ln1_b = pv[i++];
      mh.w_q = pv[i++]; mh.b_q = pv[i++];
      mh.w_k = pv[i++]; mh.b_k = pv[i++];
      mh.w_v = pv[i++]; mh.b_v = pv[i++];
      mh.w_o = pv[i++]; mh.b_o = pv[i++];
      mh.gamma = pv[i++];
      mh.m = pv[i++];
      Var<T> ln2_g = pv[i++], ln2_b = pv[i++];
      Var<T> w1 = pv[i++], b1 = pv[i++], w2 = pv[i++], b2 = pv[i++];

      Var<T> h = layer_norm_rows(x, ln1_g, ln1_b);
      x = add(x, multi_head(h, mh, att));
      Var<T> h2 = layer_norm_rows(x, ln2_g, ln2_b);
      Var<T> mlp = add_rowvec(
          matmul(gelu(add_rowvec(matmul(h2, w1), b1)), w2), b2);
      x = add(x, mlp);
    }
    Var<T> ln_f_g = pv[i++], ln_f_b = pv[i++];
    Var<T> head_w_v = pv[i++], head_b_v = pv[i++];
    x = layer_norm_rows(x, ln_f_g, ln_f_b);
    Var<T> readout =
        mode == ReadoutMode::kClsToken
            ? slice_rows(x, 0, 1)
            : mean_over_rows(slice_rows(x, 1, x.value().rows() - 1));
    return add_rowvec(matmul(readout, head_w_v), head_b_v);
  }

  // Evaluation forward: no gradients recorded. Returns 1-d logits.
  Tensor<T> logits(const Tensor<T>& image,
                   ReadoutMode mode = ReadoutMode::kClsToken) {
    Tape<T> tape;
    std::vector<Var<T>> pv = make_vars(tape, /*requires_grad=*/false);
    Var<T> out = forward_graph(tape, pv, image, mode);
    Tensor<T> z = out.value();
    return Tensor<T>::from({z.numel()}, z.values());
  }

  int predict(const Tensor<T>& image,
              ReadoutMode mode = ReadoutMode::kClsToken) {
    Tensor<T> z = logits(image, mode);
    std::size_t best = 0;
    for (std::size_t j = 1; j < z.numel(); ++j)
      if (z[j] > z[best]) best = j;
    return static_cast<int>(best);
  }
};

// One optimizer update on a minibatch: mean cross-entropy over the batch,
// one shared tape (parameter gradients accumulate across images), then an
// AdamW step at learning rate `lr`. Throws TrainingDiverged before touching
// the parameters if the loss or any gradient is non-finite.
template <typename T>
double train_step(ViTModel<T>& model, const std::vector<Tensor<T>>& images,
                  const std::vector<std::size_t>& labels, AdamW<T>& opt,
                  double lr, std::size_t global_step,
                  ReadoutMode mode = ReadoutMode::kClsToken) {
  if (images.empty() || images.size() != labels.size()) {
    throw std::invalid_argument(
        "train_step: batch of " + std::to_string(images.size()) +
        " images with " + std::to_string(labels.size()) + " labels");
  }
  const std::size_t classes = static_cast<std::size_t>(model.cfg.num_classes);
  for (std::size_t b = 0; b < labels.size(); ++b) {
    if (labels[b] >= classes) {
      throw std::out_of_range("train_step: label " +
                              std::to_string(labels[b]) + " at batch index " +
                              std::to_string(b) + " out of range for " +
                              std::to_string(classes) + " classes");
    }
  }

  Tape<T> tape;
  std::vector<Var<T>> pv = model.make_vars(tape, /*requires_grad=*/true);
  Var<T> total{};
  for (std::size_t b = 0; b < images.size(); ++b) {
    Var<T> logits = model.forward_graph(tape, pv, images[b], mode);
    Var<T> loss = cross_entropy_with_logits(logits, labels[b]);
    total = b == 0 ? loss : add(total, loss);
  }
  Var<T> mean_loss = scale(total, T(1) / static_cast<T>(images.size()));
  const double loss_value = static_cast<double>(mean_loss.value()[0]);
  if (!std::isfinite(loss_value)) {
    throw TrainingDiverged(global_step, loss_value);
  }
  tape.backward(mean_loss);

  std::vector<ParamRef<T>> params = model.parameters();
  std::vector<Tensor<T>> grads;
  grads.reserve(pv.size());
  for (const Var<T>& v : pv) {
    const Tensor<T>& g = v.tape->grad(v.idx);
    if (!all_finite(g)) {
      throw TrainingDiverged(global_step, loss_value);
    }
    grads.push_back(g);
  }
  opt.step(params, grads, lr);
  return loss_value;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O
// ---------------------------------------------------------------------------

// FNV-1a over the raw little-endian parameter bytes, in parameters() order.
// Used to verify that two report cells share identical trained weights.
template <typename T>
std::uint64_t parameter_hash(ViTModel<T>& model) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const ParamRef<T>& p : model.parameters()) {
    const unsigned char* bytes =
        reinterpret_cast<const unsigned char*>(p.tensor->data());
    const std::size_t len = p.tensor->numel() * sizeof(T);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

namespace detail {

inline void write_bytes(std::ofstream& os, const void* p, std::size_t n) {
  os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename V>
void write_pod(std::ofstream& os, V v) {
  write_bytes(os, &v, sizeof(V));
}

inline void read_bytes(std::ifstream& is, void* p, std::size_t n,
                       const char* what) {
  is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) {
    throw std::runtime_error(std::string("checkpoint: truncated while reading ") +
                             what);
  }
}

template <typename V>
V read_pod(std::ifstream& is, const char* what) {
  V v{};
  read_bytes(is, &v, sizeof(V), what);
  return v;
}

}  // namespace detail

// Versioned binary checkpoint: magic, version, dtype tag, config block,
// then named flat parameter arrays (little-endian). Round-trips bit-exactly
// at the stored precision.
template <typename T>
void save_checkpoint(ViTModel<T>& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) {
    throw std::runtime_error("checkpoint: cannot open '" + path +
                             "' for writing");
  }
  os.write("ABVC", 4);
  detail::write_pod<std::uint8_t>(os, 1);  // version
  detail::write_pod<std::uint8_t>(os, sizeof(T) == 4 ? 0 : 1);

  const ViTConfig& c = model.cfg;
  detail::write_pod<std::int32_t>(os, c.image_size);
  detail::write_pod<std::int32_t>(os, c.patch_size);
  detail::write_pod<std::int32_t>(os, c.channels);
  detail::write_pod<std::int32_t>(os, c.embed_dim);
  detail::write_pod<std::int32_t>(os, c.depth);
  detail::write_pod<std::int32_t>(os, c.heads);
  detail::write_pod<double>(os, c.mlp_ratio);
  detail::write_pod<std::int32_t>(os, c.num_classes);
  detail::write_pod<std::uint8_t>(os,
                                  static_cast<std::uint8_t>(c.attention.variant));
  detail::write_pod<std::int32_t>(os, c.attention.heads);
  detail::write_pod<std::int32_t>(os, c.attention.head_dim);
  detail::write_pod<std::uint8_t>(os, c.attention.sigmoid_bias ? 1 : 0);
  detail::write_pod<double>(os, c.attention.sigmoid_bias.value_or(0.0));
  detail::write_pod<double>(os, c.attention.linear_eps);
  detail::write_pod<std::int32_t>(os, c.attention.sinkhorn_max_iter);
  detail::write_pod<double>(os, c.attention.sinkhorn_eps);
  detail::write_pod<double>(os, c.attention.cosine_m_init);

  std::vector<ParamRef<T>> params = model.parameters();
  detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
  for (const ParamRef<T>& p : params) {
    detail::write_pod<std::uint16_t>(os,
                                     static_cast<std::uint16_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    detail::write_pod<std::uint8_t>(os,
                                    static_cast<std::uint8_t>(p.tensor->ndim()));
    for (std::size_t d : p.tensor->shape())
      detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    detail::write_bytes(os, p.tensor->data(), p.tensor->numel() * sizeof(T));
  }
  if (!os) {
    throw std::runtime_error("checkpoint: write failed for '" + path + "'");
  }
}

template <typename T>
ViTModel<T> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  }
  char magic[4];
  detail::read_bytes(is, magic, 4, "magic");
  if (std::memcmp(magic, "ABVC", 4) != 0) {
    throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
  }
  const auto version = detail::read_pod<std::uint8_t>(is, "version");
  if (version != 1) {
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(version));
  }
  const auto dtype = detail::read_pod<std::uint8_t>(is, "dtype");
  if (dtype != (sizeof(T) == 4 ? 0 : 1)) {
    throw std::runtime_error(
        "checkpoint: stored precision does not match requested precision");
  }

  ViTConfig c;
  c.image_size = detail::read_pod<std::int32_t>(is, "image_size");
  c.patch_size = detail::read_pod<std::int32_t>(is, "patch_size");
  c.channels = detail::read_pod<std::int32_t>(is, "channels");
  c.embed_dim = detail::read_pod<std::int32_t>(is, "embed_dim");
  c.depth = detail::read_pod<std::int32_t>(is, "depth");
  c.heads = detail::read_pod<std::int32_t>(is, "heads");
  c.mlp_ratio = detail::read_pod<double>(is, "mlp_ratio");
  c.num_classes = detail::read_pod<std::int32_t>(is, "num_classes");
  c.attention.variant = static_cast<AttentionVariant>(
      detail::read_pod<std::uint8_t>(is, "attention.variant"));
  c.attention.heads = detail::read_pod<std::int32_t>(is, "attention.heads");
  c.attention.head_dim =
      detail::read_pod<std::int32_t>(is, "attention.head_dim");
  const bool has_bias = detail::read_pod<std::uint8_t>(is, "bias flag") != 0;
  const double bias = detail::read_pod<double>(is, "sigmoid_bias");
  if (has_bias) c.attention.sigmoid_bias = bias;
  c.attention.linear_eps = detail::read_pod<double>(is, "linear_eps");
  c.attention.sinkhorn_max_iter =
      detail::read_pod<std::int32_t>(is, "sinkhorn_max_iter");
  c.attention.sinkhorn_eps = detail::read_pod<double>(is, "sinkhorn_eps");
  c.attention.cosine_m_init = detail::read_pod<double>(is, "cosine_m_init");

  ViTModel<T> model = ViTModel<T>::init(c, /*seed=*/0);
  std::vector<ParamRef<T>> params = model.parameters();
  const auto count = detail::read_pod<std::uint32_t>(is, "parameter count");
  if (count != params.size()) {
    throw std::runtime_error("checkpoint: expected " +
                             std::to_string(params.size()) +
                             " parameters, file has " + std::to_string(count));
  }
  for (ParamRef<T>& p : params) {
    const auto name_len = detail::read_pod<std::uint16_t>(is, "name length");
    std::string name(name_len, '\0');
    detail::read_bytes(is, name.data(), name_len, "name");
    if (name != p.name) {
      throw std::runtime_error("checkpoint: parameter '" + name +
                               "' does not match expected '" + p.name + "'");
    }
    const auto ndim = detail::read_pod<std::uint8_t>(is, "rank");
    std::vector<std::size_t> shape(ndim);
    for (auto& d : shape)
      d = detail::read_pod<std::uint32_t>(is, "extent");
    if (shape != p.tensor->shape()) {
      throw std::runtime_error("checkpoint: parameter '" + name +
                               "' has shape " +
                               Tensor<T>::shape_string(shape) +
                               ", expected " + p.tensor->shape_str());
    }
    detail::read_bytes(is, p.tensor->data(), p.tensor->numel() * sizeof(T),
                       name.c_str());
  }
  return model;
}

}  // namespace attnbench
