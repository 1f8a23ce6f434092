// attnbench — train the attention variants, evaluate checkpoints, export
// corrupted datasets, merge reports, and run the gradient verification
// suite. One experiment per process; all heavy lifting lives in the
// library.
#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "attnbench/attention.hpp"
#include "attnbench/config.hpp"
#include "attnbench/corruption.hpp"
#include "attnbench/dataset.hpp"
#include "attnbench/experiment.hpp"
#include "attnbench/rng.hpp"
#include "attnbench/vit.hpp"

namespace {

using namespace attnbench;

std::string dirname_of(const std::string& path) {
  const std::size_t slash = path.find_last_of('/');
  return slash == std::string::npos ? std::string(".") : path.substr(0, slash);
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

ExperimentConfig load_or_default(const std::string& config_path) {
  return config_path.empty() ? default_config() : load_config(config_path);
}

std::vector<AttentionVariant> parse_mechanisms(
    const std::vector<std::string>& names) {
  std::vector<AttentionVariant> out;
  out.reserve(names.size());
  for (const std::string& n : names) out.push_back(variant_from_name(n));
  return out;
}

std::vector<Scenario> parse_scenarios(const std::vector<std::string>& names) {
  std::vector<Scenario> out;
  out.reserve(names.size());
  for (const std::string& n : names) out.push_back(scenario_from_name(n));
  return out;
}

void emit_report_file(const ExperimentReport& report, const std::string& out) {
  if (ends_with(out, ".csv")) {
    report_emit(report, "csv", out);
  } else if (ends_with(out, ".json")) {
    report_emit(report, "json", out);
  } else {
    throw std::invalid_argument("--out must end in .csv or .json, got '" +
                                out + "'");
  }
}

int cmd_train(const std::string& config_path,
              std::optional<std::uint64_t> seed,
              const std::vector<std::string>& mechanisms,
              const std::vector<std::string>& scenarios,
              std::optional<std::size_t> sub, const std::string& out) {
  ExperimentConfig cfg = load_or_default(config_path);
  if (seed) cfg.seed = *seed;
  if (!mechanisms.empty()) cfg.mechanisms = parse_mechanisms(mechanisms);
  if (!scenarios.empty()) cfg.scenarios = parse_scenarios(scenarios);
  if (sub) cfg.dataset.train_subsample = *sub;
  cfg.validate();

  ExperimentReport report =
      run_experiment(cfg, &std::cerr, dirname_of(out));
  emit_report_file(report, out);
  std::cout << report_render_table(report);
  std::cout << "report written to " << out << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& config_path,
             std::optional<std::uint64_t> seed,
             const std::string& mechanism, const std::string& scenario,
             std::optional<std::size_t> sub, const std::string& out) {
  ExperimentConfig cfg = load_or_default(config_path);
  if (seed) cfg.seed = *seed;
  if (sub) cfg.dataset.test_subsample = *sub;
  cfg.dataset.validate();

  ViTModel<float> model = load_checkpoint<float>(checkpoint);
  if (!mechanism.empty() &&
      variant_from_name(mechanism) != model.cfg.attention.variant) {
    throw std::invalid_argument(
        "--mechanism disagrees with the checkpoint, which holds '" +
        std::string(variant_name(model.cfg.attention.variant)) + "'");
  }
  if (model.cfg.image_size != cfg.dataset.image_size ||
      model.cfg.channels != cfg.dataset.channels ||
      model.cfg.num_classes != cfg.dataset.num_classes) {
    throw std::invalid_argument(
        "checkpoint geometry does not match the configured dataset");
  }

  auto [train, test] = load_dataset(cfg.dataset, cfg.seed);
  const Scenario scen =
      scenario.empty() ? Scenario::kClean : scenario_from_name(scenario);
  const bool corrupt_test = (scen == Scenario::kTestOnly ||
                             scen == Scenario::kTrainAndTest) &&
                            cfg.corruption_kind != CorruptionKind::kNone;
  if (corrupt_test) {
    const std::uint64_t corr_seed = cfg.effective_corruption_seed();
    for (std::size_t i = 0; i < test.size(); ++i)
      test.images[i] =
          corrupt_image(test.images[i], cfg.corruption_kind,
                        cfg.corruption_severity,
                        corruption_seed(corr_seed, kTestSplit, i));
  }

  const double acc = evaluate_accuracy_pct(model, test, cfg.dataset.means,
                                           cfg.dataset.stds);
  char line[256];
  std::snprintf(line, sizeof line,
                "%s %s on %zu %s test images: %.1f%%\n",
                variant_name(model.cfg.attention.variant), checkpoint.c_str(),
                test.size(), corrupt_test ? "corrupted" : "clean", acc);
  std::cout << line;
  if (!out.empty()) {
    std::ofstream os(out);
    if (!os) throw std::runtime_error("cannot open '" + out + "'");
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "{\n  \"checkpoint\": \"%s\",\n  \"scenario\": \"%s\",\n"
                  "  \"images\": %zu,\n  \"accuracy_pct\": %.1f\n}\n",
                  checkpoint.c_str(), scenario_name(scen), test.size(), acc);
    os << buf;
  }
  return 0;
}

int cmd_corrupt(const std::string& config_path,
                std::optional<std::uint64_t> seed,
                const std::string& scenario, std::optional<std::size_t> sub,
                const std::string& out) {
  ExperimentConfig cfg = load_or_default(config_path);
  if (seed) cfg.seed = *seed;
  if (sub) cfg.dataset.train_subsample = *sub;
  cfg.dataset.validate();

  auto [train, test] = load_dataset(cfg.dataset, cfg.seed);
  CorruptionSpec spec;
  spec.kind = cfg.corruption_kind;
  spec.severity = cfg.corruption_severity;
  spec.seed = cfg.effective_corruption_seed();
  spec.scenario = scenario.empty() ? Scenario::kTrainAndTest
                                   : scenario_from_name(scenario);
  if (spec.kind == CorruptionKind::kNone) spec.scenario = Scenario::kClean;

  auto [train_imgs, test_imgs] =
      apply_scenario(train.images, test.images, spec);
  train.images = std::move(train_imgs);
  test.images = std::move(test_imgs);

  save_raw(train, out + "_train.bin", RawDtype::kF32);
  save_raw(test, out + "_test.bin", RawDtype::kF32);
  std::cout << "wrote " << train.size() << " train images to " << out
            << "_train.bin and " << test.size() << " test images to " << out
            << "_test.bin (" << corruption_kind_name(spec.kind)
            << ", severity " << spec.severity << ", scenario "
            << scenario_name(spec.scenario) << ")\n";
  return 0;
}

int cmd_report(const std::vector<std::string>& inputs,
               const std::string& out) {
  ExperimentReport merged = report_load_json(inputs.front());
  for (std::size_t i = 1; i < inputs.size(); ++i) {
    ExperimentReport next = report_load_json(inputs[i]);
    if (next.schema_version != merged.schema_version) {
      throw std::invalid_argument("schema mismatch between '" +
                                  inputs.front() + "' and '" + inputs[i] +
                                  "'");
    }
    merged.cells.insert(merged.cells.end(), next.cells.begin(),
                        next.cells.end());
  }
  if (out.empty()) {
    std::cout << report_render_table(merged);
  } else {
    emit_report_file(merged, out);
    std::cout << "merged " << inputs.size() << " report(s), "
              << merged.cells.size() << " cells, into " << out << "\n";
  }
  return 0;
}

// Finite-difference verification of the tape gradients through a
// one-block model, per attention mechanism. This is the same oracle the
// test suite uses, packaged for quick reassurance from the command line.
int cmd_gradcheck(const std::vector<std::string>& mechanisms,
                  std::uint64_t seed) {
  std::vector<AttentionVariant> variants =
      mechanisms.empty()
          ? std::vector<AttentionVariant>{AttentionVariant::kSoftmax,
                                          AttentionVariant::kSigmoid,
                                          AttentionVariant::kLinear,
                                          AttentionVariant::kDoublyStochastic,
                                          AttentionVariant::kCosine}
          : parse_mechanisms(mechanisms);

  bool all_ok = true;
  for (AttentionVariant variant : variants) {
    ViTConfig vc;
    vc.image_size = 8;
    vc.patch_size = 4;
    vc.embed_dim = 16;
    vc.depth = 1;
    vc.heads = 2;
    vc.num_classes = 4;
    vc.attention.variant = variant;
    vc.attention.sinkhorn_max_iter = 6;
    vc.attention.sinkhorn_eps = 1.5;
    ViTModel<double> model = ViTModel<double>::init(vc, seed);
    // The zero-initialized head would zero every backbone gradient; give
    // it real values so the probes exercise the whole graph.
    Rng head_rng(seed + 3);
    for (auto& v : model.head_w.values()) v = head_rng.gaussian() * 0.1;
    for (auto& v : model.head_b.values()) v = head_rng.gaussian() * 0.1;

    Rng rng(seed + 1);
    std::vector<Tensor<double>> images;
    for (int b = 0; b < 2; ++b) {
      Tensor<double> img({3, 8, 8});
      for (auto& v : img.values()) v = rng.next_double();
      images.push_back(std::move(img));
    }
    const std::vector<std::size_t> labels = {1, 3};

    const auto batch_loss = [&]() {
      Tape<double> tape;
      std::vector<Var<double>> pv = model.make_vars(tape, false);
      double total = 0.0;
      for (std::size_t b = 0; b < images.size(); ++b) {
        Var<double> lg = model.forward_graph(tape, pv, images[b]);
        total += cross_entropy_with_logits(lg, labels[b]).value()[0];
      }
      return total / static_cast<double>(images.size());
    };

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
    Rng pick(seed + 2);
    const double step = 1e-5;
    double worst = 0.0;
    std::string worst_name = "-";
    int checked = 0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
      Tensor<double>& w = *params[pi].tensor;
      const std::size_t coord = pick.next_below(w.numel());
      const double analytic = tape.grad(pv[pi].idx)[coord];
      const double saved = w[coord];
      w[coord] = saved + step;
      const double up = batch_loss();
      w[coord] = saved - step;
      const double dn = batch_loss();
      w[coord] = saved;
      const double numeric = (up - dn) / (2.0 * step);
      const double denom =
          std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      const double rel = std::abs(analytic - numeric) / denom;
      if (rel > worst) {
        worst = rel;
        worst_name = params[pi].name;
      }
      ++checked;
    }
    const bool ok = worst < 1e-3;
    all_ok = all_ok && ok;
    char line[160];
    std::snprintf(line, sizeof line,
                  "%-18s %d parameter tensors probed, worst rel err %.2e "
                  "(%s): %s\n",
                  variant_name(variant), checked, worst, worst_name.c_str(),
                  ok ? "PASS" : "FAIL");
    std::cout << line;
  }
  return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "attnbench: robustness of attention mechanisms under train/test "
      "corruption"};
  app.require_subcommand(1);

  const std::string mech_help =
      "softmax|sigmoid|linear|doubly-stochastic|cosine";
  const std::string scen_help = "clean|train|test|both";

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> mechanisms;
  std::vector<std::string> scenarios;
  std::optional<std::size_t> sub;
  std::string out;
  std::string checkpoint;
  std::string one_mechanism;
  std::string one_scenario;
  std::vector<std::string> report_inputs;

  CLI::App* train = app.add_subcommand(
      "train", "Run the experiment grid and write a report");
  train->add_option("--config", config_path, "experiment config (JSON)");
  train->add_option("--seed", seed, "override the master seed");
  train->add_option("--mechanism", mechanisms,
                    "restrict to these mechanisms (" + mech_help + ")");
  train->add_option("--scenario", scenarios,
                    "restrict to these scenarios (" + scen_help + ")");
  train->add_option("--subsample", sub, "train-split subsample size");
  train->add_option("--out", out, "report path (.csv or .json)")
      ->default_val("report.json");

  CLI::App* eval = app.add_subcommand(
      "eval", "Evaluate a saved checkpoint on the configured test split");
  eval->add_option("checkpoint", checkpoint, "checkpoint file from train")
      ->required();
  eval->add_option("--config", config_path, "experiment config (JSON)");
  eval->add_option("--seed", seed, "override the master seed");
  eval->add_option("--mechanism", one_mechanism,
                   "expected mechanism, checked against the checkpoint");
  eval->add_option("--scenario", one_scenario,
                   "corrupt the test split for test|both (" + scen_help + ")");
  eval->add_option("--subsample", sub, "test-split subsample size");
  eval->add_option("--out", out, "also write the result as JSON");

  CLI::App* corrupt = app.add_subcommand(
      "corrupt", "Export the dataset with corruption applied");
  corrupt->add_option("--config", config_path, "experiment config (JSON)");
  corrupt->add_option("--seed", seed, "override the master seed");
  corrupt->add_option("--scenario", one_scenario,
                      "which splits to corrupt (" + scen_help + ")");
  corrupt->add_option("--subsample", sub, "train-split subsample size");
  corrupt->add_option("--out", out, "output prefix for _train.bin/_test.bin")
      ->required();

  CLI::App* report = app.add_subcommand(
      "report", "Merge JSON reports and emit CSV/JSON or a table");
  report->add_option("inputs", report_inputs, "input report JSON files")
      ->required()
      ->expected(-1);
  report->add_option("--out", out,
                     "merged output (.csv or .json); omit for a table");

  CLI::App* gradcheck = app.add_subcommand(
      "gradcheck", "Verify tape gradients against finite differences");
  gradcheck->add_option("--mechanism", mechanisms,
                        "restrict to these mechanisms (" + mech_help + ")");
  std::uint64_t gc_seed = 42;
  gradcheck->add_option("--seed", gc_seed, "probe seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train)
      return cmd_train(config_path, seed, mechanisms, scenarios, sub, out);
    if (*eval)
      return cmd_eval(checkpoint, config_path, seed, one_mechanism,
                      one_scenario, sub, out);
    if (*corrupt)
      return cmd_corrupt(config_path, seed, one_scenario, sub, out);
    if (*report) return cmd_report(report_inputs, out);
    if (*gradcheck) return cmd_gradcheck(mechanisms, gc_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
