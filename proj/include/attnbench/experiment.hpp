#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "attnbench/config.hpp"
#include "attnbench/corruption.hpp"
#include "attnbench/dataset.hpp"
#include "attnbench/vit.hpp"

namespace attnbench {

// Four-scenario robustness experiment driver: trains each attention
// mechanism on clean and/or corrupted data, evaluates the four cells
// (clean, train-corrupted, test-corrupted, both), and reports absolute and
// relative accuracy per cell.

// 100 * absolute / baseline, rounded half away from zero to 0.1.
// baseline must be strictly positive.
double relative_accuracy(double absolute_pct, double baseline_pct);

struct CellResult {
  std::string mechanism;
  Scenario scenario = Scenario::kClean;
  // Percentages in [0,100]; meaningful only when failed == false (except
  // baseline_pct, which survives a corrupted-training failure).
  double absolute_pct = 0.0;
  double baseline_pct = 0.0;
  double relative_pct = 0.0;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
  bool failed = false;
  bool baseline_failed = false;
  std::optional<std::size_t> diverged_epoch;
  std::optional<double> last_finite_loss;
  // FNV-1a hash of the evaluated model's parameters; cells sharing trained
  // weights carry equal hashes.
  std::uint64_t weights_hash = 0;

  std::string status() const;  // "ok" or a failure diagnostic
};

struct ExperimentReport {
  int schema_version = 1;
  std::uint64_t seed = 0;
  std::vector<CellResult> cells;
  std::string config_echo;
};

// One trained model plus its training outcome.
struct TrainedModel {
  ViTModel<float> model;
  bool diverged = false;
  std::size_t diverged_epoch = 0;
  double last_finite_loss = 0.0;
  bool any_finite_loss = false;
  double wall_seconds = 0.0;
  std::uint64_t weights_hash = 0;
};

// Trains one mechanism on the given training split. When corrupt_train is
// set, each image is corrupted on the fly every epoch under the documented
// (seed, epoch, index) derivation. Divergence (non-finite loss or
// gradients) stops training and is recorded, not thrown.
TrainedModel train_model(const ExperimentConfig& cfg, AttentionVariant variant,
                         bool corrupt_train, const LabeledDataset& train,
                         std::ostream* progress = nullptr);

// Accuracy (percent) of the model on an already-corrupted (or clean) test
// split; images are normalized with the dataset constants before the
// forward pass.
double evaluate_accuracy_pct(ViTModel<float>& model,
                             const LabeledDataset& test,
                             const std::vector<double>& means,
                             const std::vector<double>& stds);

// Runs the full grid: per mechanism, trains a clean model (always — it
// supplies the baseline), trains a corrupted-data model when a scenario
// needs one, and fills one cell per requested scenario. Clean and
// test-corrupted cells evaluate the clean-trained weights; train-corrupted
// and both-corrupted cells evaluate the corrupted-trained weights.
// When checkpoint_dir is non-empty, every successfully trained model is
// saved there as <mechanism>_<clean|corrupted>.ckpt.
ExperimentReport run_experiment(const ExperimentConfig& cfg,
                                std::ostream* progress = nullptr,
                                const std::string& checkpoint_dir = "");

// Report serialization. Identical reports produce byte-identical files.
std::string report_csv_string(const ExperimentReport& report);
std::string report_json_string(const ExperimentReport& report);
void report_emit(const ExperimentReport& report, const std::string& format,
                 const std::string& path);
ExperimentReport report_parse_json(const std::string& json_text);
ExperimentReport report_load_json(const std::string& path);

// Text table, mechanisms x scenarios, cells formatted "81.0% (91.4%)".
std::string report_render_table(const ExperimentReport& report);

// Seeded data augmentation used by the training loop (exposed for tests):
// random crop from a 4-pixel zero pad plus horizontal flip.
Tensor<float> augment_image(const Tensor<float>& image, std::uint64_t seed);

}  // namespace attnbench
