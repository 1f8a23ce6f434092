#include "attnbench/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "attnbench/rng.hpp"

namespace attnbench {

using json = nlohmann::ordered_json;

namespace {

// Corruption stream id for deriving the corruption seed from the master
// seed (kept distinct from the init/shuffle/augment streams used by the
// experiment driver).
constexpr std::uint64_t kCorruptionStream = 4;

void reject_unknown_keys(const json& obj, const std::string& where,
                         const std::set<std::string>& allowed) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (!allowed.count(key)) {
      throw std::invalid_argument("config: unknown key '" + key + "' in " +
                                  where);
    }
  }
}

template <typename T>
void read_into(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1 || batch_size < 1) {
    throw std::invalid_argument("config: epochs and batch_size must be >= 1");
  }
  if (!(lr_max > 0) || !(lr_min >= 0) || lr_min > lr_max) {
    throw std::invalid_argument(
        "config: need 0 <= lr_min <= lr_max and lr_max > 0");
  }
  if (warmup_fraction < 0 || warmup_fraction > 1) {
    throw std::invalid_argument("config: warmup_fraction must be in [0,1]");
  }
  if (weight_decay < 0) {
    throw std::invalid_argument("config: weight_decay must be >= 0");
  }
}

void ExperimentConfig::validate() const {
  dataset.validate();
  train.validate();
  ViTConfig probe = model;
  probe.image_size = dataset.image_size;
  probe.channels = dataset.channels;
  probe.num_classes = dataset.num_classes;
  probe.validate();
  probe.attention_resolved().validate();
  if (corruption_kind != CorruptionKind::kNone &&
      !(corruption_severity > 0)) {
    throw std::invalid_argument(
        "config: corruption severity must be > 0 when a corruption kind is "
        "set");
  }
  if (mechanisms.empty()) {
    throw std::invalid_argument("config: mechanisms list is empty");
  }
  if (scenarios.empty()) {
    throw std::invalid_argument("config: scenarios list is empty");
  }
  if (corruption_kind == CorruptionKind::kNone) {
    for (Scenario s : scenarios) {
      if (s != Scenario::kClean) {
        throw std::invalid_argument(
            "config: corruption kind 'none' only supports the clean "
            "scenario");
      }
    }
  }
}

std::uint64_t ExperimentConfig::effective_corruption_seed() const {
  return corruption_seed ? *corruption_seed
                         : derive_seed(seed, kCorruptionStream);
}

ViTConfig model_config_for(const ExperimentConfig& cfg,
                           AttentionVariant variant) {
  ViTConfig m = cfg.model;
  m.image_size = cfg.dataset.image_size;
  m.channels = cfg.dataset.channels;
  m.num_classes = cfg.dataset.num_classes;
  m.attention.variant = variant;
  m.attention = m.attention_resolved();
  return m;
}

ExperimentConfig default_config() {
  ExperimentConfig cfg;
  cfg.dataset.name = "synthetic";
  cfg.dataset.num_classes = 10;
  cfg.dataset.means = {0.5, 0.5, 0.5};
  cfg.dataset.stds = {0.18, 0.18, 0.18};
  cfg.dataset.train_subsample = 5000;
  cfg.dataset.test_subsample = 1000;
  cfg.model.image_size = 32;
  cfg.model.patch_size = 8;
  cfg.model.embed_dim = 64;
  cfg.model.depth = 4;
  cfg.model.heads = 4;
  cfg.model.mlp_ratio = 2.0;
  cfg.mechanisms = {AttentionVariant::kSoftmax, AttentionVariant::kSigmoid,
                    AttentionVariant::kLinear,
                    AttentionVariant::kDoublyStochastic,
                    AttentionVariant::kCosine};
  cfg.scenarios = {Scenario::kClean, Scenario::kTrainOnly,
                   Scenario::kTestOnly, Scenario::kTrainAndTest};
  return cfg;
}

ExperimentConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: JSON parse error: ") +
                                e.what());
  }
  if (!root.is_object()) {
    throw std::invalid_argument("config: top level must be a JSON object");
  }
  reject_unknown_keys(root, "top level",
                      {"seed", "dataset", "model", "train", "corruption",
                       "mechanisms", "scenarios", "output"});

  ExperimentConfig cfg = default_config();
  cfg.raw_text = json_text;
  read_into(root, "seed", cfg.seed);

  if (root.contains("dataset")) {
    const json& d = root.at("dataset");
    reject_unknown_keys(d, "dataset",
                        {"name", "train_path", "test_path", "image_size",
                         "channels", "num_classes", "means", "stds",
                         "train_subsample", "test_subsample"});
    read_into(d, "name", cfg.dataset.name);
    read_into(d, "train_path", cfg.dataset.train_path);
    read_into(d, "test_path", cfg.dataset.test_path);
    read_into(d, "image_size", cfg.dataset.image_size);
    read_into(d, "channels", cfg.dataset.channels);
    read_into(d, "num_classes", cfg.dataset.num_classes);
    read_into(d, "means", cfg.dataset.means);
    read_into(d, "stds", cfg.dataset.stds);
    if (d.contains("train_subsample"))
      cfg.dataset.train_subsample = d.at("train_subsample").get<std::size_t>();
    if (d.contains("test_subsample"))
      cfg.dataset.test_subsample = d.at("test_subsample").get<std::size_t>();
  }

  if (root.contains("model")) {
    const json& m = root.at("model");
    reject_unknown_keys(m, "model",
                        {"patch_size", "embed_dim", "depth", "heads",
                         "mlp_ratio", "attention"});
    read_into(m, "patch_size", cfg.model.patch_size);
    read_into(m, "embed_dim", cfg.model.embed_dim);
    read_into(m, "depth", cfg.model.depth);
    read_into(m, "heads", cfg.model.heads);
    read_into(m, "mlp_ratio", cfg.model.mlp_ratio);
    if (m.contains("attention")) {
      const json& a = m.at("attention");
      reject_unknown_keys(a, "model.attention",
                          {"sigmoid_bias", "linear_eps", "sinkhorn_max_iter",
                           "sinkhorn_eps", "cosine_m_init"});
      if (a.contains("sigmoid_bias") && !a.at("sigmoid_bias").is_null())
        cfg.model.attention.sigmoid_bias = a.at("sigmoid_bias").get<double>();
      read_into(a, "linear_eps", cfg.model.attention.linear_eps);
      read_into(a, "sinkhorn_max_iter",
                cfg.model.attention.sinkhorn_max_iter);
      read_into(a, "sinkhorn_eps", cfg.model.attention.sinkhorn_eps);
      read_into(a, "cosine_m_init", cfg.model.attention.cosine_m_init);
    }
  }

  if (root.contains("train")) {
    const json& t = root.at("train");
    reject_unknown_keys(t, "train",
                        {"epochs", "batch_size", "lr_max", "lr_min",
                         "warmup_fraction", "weight_decay", "augment"});
    read_into(t, "epochs", cfg.train.epochs);
    read_into(t, "batch_size", cfg.train.batch_size);
    read_into(t, "lr_max", cfg.train.lr_max);
    read_into(t, "lr_min", cfg.train.lr_min);
    read_into(t, "warmup_fraction", cfg.train.warmup_fraction);
    read_into(t, "weight_decay", cfg.train.weight_decay);
    read_into(t, "augment", cfg.train.augment);
  }

  if (root.contains("corruption")) {
    const json& c = root.at("corruption");
    reject_unknown_keys(c, "corruption", {"kind", "severity", "seed"});
    if (c.contains("kind"))
      cfg.corruption_kind =
          corruption_kind_from_name(c.at("kind").get<std::string>());
    read_into(c, "severity", cfg.corruption_severity);
    if (c.contains("seed"))
      cfg.corruption_seed = c.at("seed").get<std::uint64_t>();
  }

  if (root.contains("mechanisms")) {
    cfg.mechanisms.clear();
    for (const auto& name : root.at("mechanisms"))
      cfg.mechanisms.push_back(variant_from_name(name.get<std::string>()));
  }
  if (root.contains("scenarios")) {
    cfg.scenarios.clear();
    for (const auto& name : root.at("scenarios"))
      cfg.scenarios.push_back(scenario_from_name(name.get<std::string>()));
  }
  if (root.contains("output")) {
    const json& o = root.at("output");
    reject_unknown_keys(o, "output", {"deterministic_timing"});
    read_into(o, "deterministic_timing", cfg.output.deterministic_timing);
  }

  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) {
    throw std::runtime_error("cannot open config file '" + path + "'");
  }
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json root;
  root["seed"] = cfg.seed;
  json d;
  d["name"] = cfg.dataset.name;
  if (!cfg.dataset.train_path.empty()) d["train_path"] = cfg.dataset.train_path;
  if (!cfg.dataset.test_path.empty()) d["test_path"] = cfg.dataset.test_path;
  d["image_size"] = cfg.dataset.image_size;
  d["channels"] = cfg.dataset.channels;
  d["num_classes"] = cfg.dataset.num_classes;
  d["means"] = cfg.dataset.means;
  d["stds"] = cfg.dataset.stds;
  if (cfg.dataset.train_subsample)
    d["train_subsample"] = *cfg.dataset.train_subsample;
  if (cfg.dataset.test_subsample)
    d["test_subsample"] = *cfg.dataset.test_subsample;
  root["dataset"] = d;

  json m;
  m["patch_size"] = cfg.model.patch_size;
  m["embed_dim"] = cfg.model.embed_dim;
  m["depth"] = cfg.model.depth;
  m["heads"] = cfg.model.heads;
  m["mlp_ratio"] = cfg.model.mlp_ratio;
  json a;
  if (cfg.model.attention.sigmoid_bias)
    a["sigmoid_bias"] = *cfg.model.attention.sigmoid_bias;
  else
    a["sigmoid_bias"] = nullptr;
  a["linear_eps"] = cfg.model.attention.linear_eps;
  a["sinkhorn_max_iter"] = cfg.model.attention.sinkhorn_max_iter;
  a["sinkhorn_eps"] = cfg.model.attention.sinkhorn_eps;
  a["cosine_m_init"] = cfg.model.attention.cosine_m_init;
  m["attention"] = a;
  root["model"] = m;

  json t;
  t["epochs"] = cfg.train.epochs;
  t["batch_size"] = cfg.train.batch_size;
  t["lr_max"] = cfg.train.lr_max;
  t["lr_min"] = cfg.train.lr_min;
  t["warmup_fraction"] = cfg.train.warmup_fraction;
  t["weight_decay"] = cfg.train.weight_decay;
  t["augment"] = cfg.train.augment;
  root["train"] = t;

  json c;
  c["kind"] = corruption_kind_name(cfg.corruption_kind);
  c["severity"] = cfg.corruption_severity;
  if (cfg.corruption_seed) c["seed"] = *cfg.corruption_seed;
  root["corruption"] = c;

  json mechs = json::array();
  for (AttentionVariant v : cfg.mechanisms) mechs.push_back(variant_name(v));
  root["mechanisms"] = mechs;
  json scens = json::array();
  for (Scenario s : cfg.scenarios) scens.push_back(scenario_name(s));
  root["scenarios"] = scens;

  json o;
  o["deterministic_timing"] = cfg.output.deterministic_timing;
  root["output"] = o;
  return root.dump(2) + "\n";
}

}  // namespace attnbench
