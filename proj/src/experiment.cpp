#include "attnbench/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "attnbench/optim.hpp"
#include "attnbench/rng.hpp"

namespace attnbench {

using json = nlohmann::ordered_json;

namespace {

// Master-seed fan-out streams. Model initialization, shuffling,
// augmentation and corruption draw from disjoint streams so changing one
// (e.g. the corruption seed) leaves the others untouched.
constexpr std::uint64_t kInitStream = 2;
constexpr std::uint64_t kShuffleStream = 3;
constexpr std::uint64_t kAugmentStream = 5;

std::uint64_t mechanism_id(AttentionVariant v) {
  return static_cast<std::uint64_t>(v);
}

std::string format_pct(double value, bool valid) {
  if (!valid) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", value);
  return buf;
}

std::string format_seconds(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", value);
  return buf;
}

}  // namespace

double relative_accuracy(double absolute_pct, double baseline_pct) {
  if (!(baseline_pct > 0)) {
    throw std::domain_error("relative_accuracy: baseline must be > 0, got " +
                            std::to_string(baseline_pct));
  }
  return std::round(1000.0 * absolute_pct / baseline_pct) / 10.0;
}

std::string CellResult::status() const {
  if (!failed) return "ok";
  std::ostringstream os;
  os << "failed: ";
  if (baseline_failed) os << "clean training diverged";
  else os << "training diverged";
  if (diverged_epoch) os << " at epoch " << *diverged_epoch;
  if (last_finite_loss) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", *last_finite_loss);
    os << "; last finite loss " << buf;
  } else {
    os << "; no finite loss observed";
  }
  return os.str();
}

Tensor<float> augment_image(const Tensor<float>& image, std::uint64_t seed) {
  const std::size_t c = image.shape()[0];
  const std::size_t h = image.shape()[1];
  const std::size_t w = image.shape()[2];
  constexpr std::size_t pad = 4;
  Rng rng(seed);
  const std::size_t dy = rng.next_below(2 * pad + 1);
  const std::size_t dx = rng.next_below(2 * pad + 1);
  const bool flip = rng.next_double() < 0.5;

  // Crop the h x w window at offset (dy, dx) out of the zero-padded image;
  // source coordinate y + dy - pad is in range iff dy-pad <= y' < h.
  Tensor<float> out(image.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; ++y) {
      const std::ptrdiff_t sy =
          static_cast<std::ptrdiff_t>(y + dy) - static_cast<std::ptrdiff_t>(pad);
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t ox = flip ? w - 1 - x : x;
        const std::ptrdiff_t sx =
            static_cast<std::ptrdiff_t>(x + dx) -
            static_cast<std::ptrdiff_t>(pad);
        float v = 0.0f;
        if (sy >= 0 && sy < static_cast<std::ptrdiff_t>(h) && sx >= 0 &&
            sx < static_cast<std::ptrdiff_t>(w)) {
          v = image[(ch * h + static_cast<std::size_t>(sy)) * w +
                    static_cast<std::size_t>(sx)];
        }
        out[(ch * h + y) * w + ox] = v;
      }
    }
  }
  return out;
}

TrainedModel train_model(const ExperimentConfig& cfg, AttentionVariant variant,
                         bool corrupt_train, const LabeledDataset& train,
                         std::ostream* progress) {
  const auto t_start = std::chrono::steady_clock::now();
  const ViTConfig model_cfg = model_config_for(cfg, variant);
  const std::uint64_t init_seed =
      derive_seed(cfg.seed, kInitStream, mechanism_id(variant));
  const std::uint64_t corr_seed = cfg.effective_corruption_seed();

  TrainedModel out{ViTModel<float>::init(model_cfg, init_seed)};
  OptimizerConfig oc;
  oc.weight_decay = cfg.train.weight_decay;
  AdamW<float> opt(out.model.parameters(), oc);

  const std::size_t n = train.size();
  const std::size_t batch = static_cast<std::size_t>(cfg.train.batch_size);
  const std::size_t steps_per_epoch = (n + batch - 1) / batch;
  const std::size_t total_steps =
      steps_per_epoch * static_cast<std::size_t>(cfg.train.epochs);
  const std::size_t warmup_steps = static_cast<std::size_t>(
      cfg.train.warmup_fraction * static_cast<double>(total_steps));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t gstep = 0;
  for (int epoch = 0; epoch < cfg.train.epochs && !out.diverged; ++epoch) {
    // Same shuffle stream for every mechanism: all models see the batches
    // in the same order, isolating the mechanism as the only variable.
    Rng shuffle_rng(derive_seed(cfg.seed, kShuffleStream,
                                static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = n - 1; i > 0; --i) {
      const std::size_t j = shuffle_rng.next_below(i + 1);
      std::swap(order[i], order[j]);
    }
    double epoch_loss = 0.0;
    std::size_t epoch_steps = 0;
    for (std::size_t s = 0; s < steps_per_epoch && !out.diverged; ++s) {
      std::vector<Tensor<float>> images;
      std::vector<std::size_t> labels;
      const std::size_t hi = std::min((s + 1) * batch, n);
      for (std::size_t b = s * batch; b < hi; ++b) {
        const std::size_t idx = order[b];
        Tensor<float> img = train.images[idx];
        if (corrupt_train) {
          img = corrupt_image(
              img, cfg.corruption_kind, cfg.corruption_severity,
              train_epoch_corruption_seed(
                  corr_seed, static_cast<std::size_t>(epoch), idx));
        }
        if (cfg.train.augment) {
          img = augment_image(
              img, derive_seed(derive_seed(cfg.seed, kAugmentStream,
                                           static_cast<std::uint64_t>(epoch)),
                               kAugmentStream, idx));
        }
        images.push_back(
            normalize(img, cfg.dataset.means, cfg.dataset.stds));
        labels.push_back(train.labels[idx]);
      }
      const double lr = cosine_warmup_lr(gstep, warmup_steps, total_steps,
                                         cfg.train.lr_max, cfg.train.lr_min);
      try {
        const double loss =
            train_step(out.model, images, labels, opt, lr, gstep);
        out.last_finite_loss = loss;
        out.any_finite_loss = true;
        epoch_loss += loss;
        ++epoch_steps;
      } catch (const TrainingDiverged&) {
        out.diverged = true;
        out.diverged_epoch = static_cast<std::size_t>(epoch);
      }
      ++gstep;
    }
    if (progress && !out.diverged) {
      *progress << "    epoch " << epoch << "/" << cfg.train.epochs
                << "  mean loss "
                << (epoch_steps ? epoch_loss / epoch_steps : 0.0) << "\n";
      progress->flush();
    }
  }
  out.wall_seconds = std::chrono::duration<double>(
                         std::chrono::steady_clock::now() - t_start)
                         .count();
  out.weights_hash = parameter_hash(out.model);
  return out;
}

double evaluate_accuracy_pct(ViTModel<float>& model,
                             const LabeledDataset& test,
                             const std::vector<double>& means,
                             const std::vector<double>& stds) {
  if (test.size() == 0) {
    throw std::invalid_argument("evaluate_accuracy_pct: empty test set");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const Tensor<float> img = normalize(test.images[i], means, stds);
    if (model.predict(img) == static_cast<int>(test.labels[i])) ++correct;
  }
  return 100.0 * static_cast<double>(correct) /
         static_cast<double>(test.size());
}

ExperimentReport run_experiment(const ExperimentConfig& cfg,
                                std::ostream* progress,
                                const std::string& checkpoint_dir) {
  cfg.validate();
  ExperimentReport report;
  report.seed = cfg.seed;
  report.config_echo =
      cfg.raw_text.empty() ? config_to_json(cfg) : cfg.raw_text;

  auto [train, test] = load_dataset(cfg.dataset, cfg.seed);

  // The fixed test-split corruption, applied once up front.
  const std::uint64_t corr_seed = cfg.effective_corruption_seed();
  const bool any_test_corrupted = std::any_of(
      cfg.scenarios.begin(), cfg.scenarios.end(), [](Scenario s) {
        return s == Scenario::kTestOnly || s == Scenario::kTrainAndTest;
      });
  LabeledDataset corrupted_test;
  if (any_test_corrupted && cfg.corruption_kind != CorruptionKind::kNone) {
    corrupted_test = test;
    for (std::size_t i = 0; i < corrupted_test.size(); ++i) {
      corrupted_test.images[i] = corrupt_image(
          corrupted_test.images[i], cfg.corruption_kind,
          cfg.corruption_severity, corruption_seed(corr_seed, kTestSplit, i));
    }
  }

  const bool any_train_corrupted = std::any_of(
      cfg.scenarios.begin(), cfg.scenarios.end(), [](Scenario s) {
        return s == Scenario::kTrainOnly || s == Scenario::kTrainAndTest;
      });

  for (AttentionVariant variant : cfg.mechanisms) {
    if (progress) {
      *progress << "mechanism " << variant_name(variant) << "\n";
      *progress << "  training on clean data\n";
      progress->flush();
    }
    // Clean-trained model: always needed, because its clean accuracy is the
    // baseline every other cell is measured against.
    TrainedModel clean_model =
        train_model(cfg, variant, /*corrupt_train=*/false, train, progress);
    if (!checkpoint_dir.empty() && !clean_model.diverged)
      save_checkpoint(clean_model.model, checkpoint_dir + "/" +
                                             variant_name(variant) +
                                             "_clean.ckpt");

    double baseline_pct = 0.0;
    double clean_eval_seconds = 0.0;
    if (!clean_model.diverged) {
      const auto t0 = std::chrono::steady_clock::now();
      baseline_pct = evaluate_accuracy_pct(clean_model.model, test,
                                           cfg.dataset.means,
                                           cfg.dataset.stds);
      clean_eval_seconds = std::chrono::duration<double>(
                               std::chrono::steady_clock::now() - t0)
                               .count();
      if (progress) {
        *progress << "  clean baseline " << baseline_pct << "%\n";
        progress->flush();
      }
    } else if (progress) {
      *progress << "  clean training diverged\n";
      progress->flush();
    }

    std::optional<TrainedModel> corr_model;
    if (any_train_corrupted) {
      if (progress) {
        *progress << "  training on corrupted data\n";
        progress->flush();
      }
      corr_model =
          train_model(cfg, variant, /*corrupt_train=*/true, train, progress);
      if (!checkpoint_dir.empty() && !corr_model->diverged)
        save_checkpoint(corr_model->model, checkpoint_dir + "/" +
                                               variant_name(variant) +
                                               "_corrupted.ckpt");
    }

    for (Scenario scenario : cfg.scenarios) {
      const bool uses_corrupted_model = scenario == Scenario::kTrainOnly ||
                                        scenario == Scenario::kTrainAndTest;
      TrainedModel& tm = uses_corrupted_model ? *corr_model : clean_model;
      const LabeledDataset& eval_set =
          (scenario == Scenario::kTestOnly ||
           scenario == Scenario::kTrainAndTest) &&
                  cfg.corruption_kind != CorruptionKind::kNone
              ? corrupted_test
              : test;

      CellResult cell;
      cell.mechanism = variant_name(variant);
      cell.scenario = scenario;
      cell.seed = cfg.seed;
      cell.weights_hash = tm.weights_hash;
      cell.baseline_failed = clean_model.diverged;
      cell.baseline_pct = clean_model.diverged ? 0.0 : baseline_pct;

      if (clean_model.diverged || tm.diverged) {
        // A failed cell still appears in the report, carrying the epoch of
        // divergence and the last finite loss of the training that failed.
        const TrainedModel& bad = tm.diverged ? tm : clean_model;
        cell.failed = true;
        cell.diverged_epoch = bad.diverged_epoch;
        if (bad.any_finite_loss) cell.last_finite_loss = bad.last_finite_loss;
        cell.wall_seconds = tm.wall_seconds;
      } else {
        const auto t0 = std::chrono::steady_clock::now();
        cell.absolute_pct =
            scenario == Scenario::kClean
                ? baseline_pct
                : evaluate_accuracy_pct(tm.model, eval_set, cfg.dataset.means,
                                        cfg.dataset.stds);
        const double eval_seconds =
            scenario == Scenario::kClean
                ? clean_eval_seconds
                : std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
        cell.relative_pct = relative_accuracy(cell.absolute_pct, baseline_pct);
        cell.wall_seconds = tm.wall_seconds + eval_seconds;
      }
      if (cfg.output.deterministic_timing) cell.wall_seconds = 0.0;
      if (progress) {
        *progress << "  " << scenario_name(scenario) << ": "
                  << (cell.failed ? cell.status()
                                  : std::to_string(cell.absolute_pct) + "%")
                  << "\n";
        progress->flush();
      }
      report.cells.push_back(std::move(cell));
    }
  }
  return report;
}

std::string report_csv_string(const ExperimentReport& report) {
  std::ostringstream os;
  os << "mechanism,scenario,absolute_pct,baseline_pct,relative_pct,seed,"
        "wall_seconds,status\n";
  for (const CellResult& cell : report.cells) {
    os << cell.mechanism << ',' << scenario_name(cell.scenario) << ','
       << format_pct(cell.absolute_pct, !cell.failed) << ','
       << format_pct(cell.baseline_pct, !cell.baseline_failed) << ','
       << format_pct(cell.relative_pct, !cell.failed) << ',' << cell.seed
       << ',' << format_seconds(cell.wall_seconds) << ','
       << cell.status() << '\n';
  }
  return os.str();
}

std::string report_json_string(const ExperimentReport& report) {
  json root;
  root["schema_version"] = report.schema_version;
  root["seed"] = report.seed;
  json cells = json::array();
  for (const CellResult& cell : report.cells) {
    json c;
    c["mechanism"] = cell.mechanism;
    c["scenario"] = scenario_name(cell.scenario);
    if (cell.failed) {
      c["absolute_pct"] = nullptr;
      c["relative_pct"] = nullptr;
    } else {
      c["absolute_pct"] = cell.absolute_pct;
      c["relative_pct"] = cell.relative_pct;
    }
    c["baseline_pct"] =
        cell.baseline_failed ? json(nullptr) : json(cell.baseline_pct);
    c["seed"] = cell.seed;
    c["wall_seconds"] = cell.wall_seconds;
    c["status"] = cell.status();
    c["failed"] = cell.failed;
    c["diverged_epoch"] = cell.diverged_epoch
                              ? json(*cell.diverged_epoch)
                              : json(nullptr);
    c["last_finite_loss"] = cell.last_finite_loss
                                ? json(*cell.last_finite_loss)
                                : json(nullptr);
    char hash_buf[20];
    std::snprintf(hash_buf, sizeof(hash_buf), "%016llx",
                  static_cast<unsigned long long>(cell.weights_hash));
    c["weights_hash"] = hash_buf;
    cells.push_back(c);
  }
  root["cells"] = cells;
  root["config"] = report.config_echo;
  return root.dump(2) + "\n";
}

void report_emit(const ExperimentReport& report, const std::string& format,
                 const std::string& path) {
  std::string body;
  if (format == "csv") {
    body = report_csv_string(report);
  } else if (format == "json") {
    body = report_json_string(report);
  } else {
    throw std::invalid_argument("report_emit: unknown format '" + format +
                                "' (expected csv|json)");
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) {
    throw std::runtime_error("report_emit: cannot open '" + path +
                             "' for writing");
  }
  os << body;
  if (!os) {
    throw std::runtime_error("report_emit: write failed for '" + path + "'");
  }
}

ExperimentReport report_parse_json(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("report: JSON parse error: ") +
                                e.what());
  }
  ExperimentReport report;
  report.schema_version = root.at("schema_version").get<int>();
  if (report.schema_version != 1) {
    throw std::invalid_argument("report: unsupported schema version " +
                                std::to_string(report.schema_version));
  }
  report.seed = root.at("seed").get<std::uint64_t>();
  report.config_echo = root.value("config", std::string{});
  for (const json& c : root.at("cells")) {
    CellResult cell;
    cell.mechanism = c.at("mechanism").get<std::string>();
    cell.scenario = scenario_from_name(c.at("scenario").get<std::string>());
    cell.failed = c.at("failed").get<bool>();
    if (!cell.failed) {
      cell.absolute_pct = c.at("absolute_pct").get<double>();
      cell.relative_pct = c.at("relative_pct").get<double>();
    }
    cell.baseline_failed = c.at("baseline_pct").is_null();
    if (!cell.baseline_failed)
      cell.baseline_pct = c.at("baseline_pct").get<double>();
    cell.seed = c.at("seed").get<std::uint64_t>();
    cell.wall_seconds = c.at("wall_seconds").get<double>();
    if (!c.at("diverged_epoch").is_null())
      cell.diverged_epoch = c.at("diverged_epoch").get<std::size_t>();
    if (!c.at("last_finite_loss").is_null())
      cell.last_finite_loss = c.at("last_finite_loss").get<double>();
    cell.weights_hash = std::stoull(
        c.at("weights_hash").get<std::string>(), nullptr, 16);
    report.cells.push_back(std::move(cell));
  }
  return report;
}

ExperimentReport report_load_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) {
    throw std::runtime_error("cannot open report file '" + path + "'");
  }
  std::stringstream ss;
  ss << is.rdbuf();
  return report_parse_json(ss.str());
}

std::string report_render_table(const ExperimentReport& report) {
  // Collect row/column orders as first seen.
  std::vector<std::string> mechanisms;
  std::vector<Scenario> scenarios;
  for (const CellResult& cell : report.cells) {
    if (std::find(mechanisms.begin(), mechanisms.end(), cell.mechanism) ==
        mechanisms.end())
      mechanisms.push_back(cell.mechanism);
    if (std::find(scenarios.begin(), scenarios.end(), cell.scenario) ==
        scenarios.end())
      scenarios.push_back(cell.scenario);
  }
  constexpr int kCol = 18;
  std::ostringstream os;
  os << std::left;
  os.width(kCol);
  os << "mechanism";
  for (Scenario s : scenarios) {
    os.width(kCol);
    os << scenario_name(s);
  }
  os << '\n';
  for (const std::string& m : mechanisms) {
    os.width(kCol);
    os << m;
    for (Scenario s : scenarios) {
      std::string text = "-";
      for (const CellResult& cell : report.cells) {
        if (cell.mechanism == m && cell.scenario == s) {
          if (cell.failed) {
            text = "failed";
          } else {
            char buf[40];
            std::snprintf(buf, sizeof(buf), "%.1f%% (%.1f%%)",
                          cell.absolute_pct, cell.relative_pct);
            text = buf;
          }
        }
      }
      os.width(kCol);
      os << text;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace attnbench
