// Command-line front end: generate, pretrain, finetune, evaluate, sweep, report.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pdewb/pdewb.hpp"

namespace fs = std::filesystem;
using namespace pdewb;

namespace {

// Stable exit-code contract.
constexpr int exit_ok = 0;
constexpr int exit_config = 2;
constexpr int exit_io = 3;
constexpr int exit_numeric = 4;
constexpr int exit_layout = 5;

/// Config file if given, else defaults with the seed from the command line.
ExperimentConfig resolve_config(const std::string& path, std::optional<std::uint64_t> seed) {
  ExperimentConfig cfg;
  if (!path.empty()) cfg = load_experiment_config(path);
  else if (!seed) throw ConfigError("either --config or --seed is required");
  if (seed) cfg.seed = *seed;
  cfg.validate();
  return cfg;
}

fs::path split_file(const fs::path& data, Split s) {
  if (fs::is_regular_file(data)) return data;
  return data / (std::string(to_string(s)) + ".pdewb");
}

class JsonlLog {
public:
  explicit JsonlLog(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    out_.open(path, std::ios::trunc);
    if (!out_) throw IoError("cannot open log '" + path.string() + "'");
  }
  void operator()(const EpochRecord& r) {
    out_ << r.to_json().dump() << "\n";
    out_.flush();
    std::fprintf(stderr, "epoch %d train %.6e val %.6e lr %.3e (%.0f ms)\n", r.epoch, r.train_loss, r.val_loss, r.lr,
                 r.wall_ms);
  }

private:
  std::ofstream out_;
};

int cmd_generate(const std::string& config, std::optional<std::uint64_t> seed, const std::string& plan_name,
                 const fs::path& out, std::optional<std::size_t> train, std::optional<std::size_t> val,
                 std::optional<std::size_t> test) {
  const ExperimentConfig cfg = resolve_config(config, seed);
  const DatasetPlan plan = DatasetPlan::parse(plan_name);
  DataConfig dc = cfg.data(plan.kind != PlanKind::Downstream);
  if (train) dc.train = *train;
  if (val) dc.val = *val;
  if (test) dc.test = *test;
  nlohmann::json ranges;
  for (Split s : {Split::Train, Split::Val, Split::Test}) {
    const Dataset ds = build_split(plan, dc, s);
    ranges = ds.manifest.at("ranges");
    const fs::path path = out / (std::string(to_string(s)) + ".pdewb");
    write_dataset(ds, path);
    const auto& rc = ds.manifest.at("residual_check");
    std::cout << path.string() << ": " << ds.size() << " samples, plan " << plan.name() << ", residual check "
              << rc.at("passed").get<std::size_t>() << "/" << rc.at("checked").get<std::size_t>() << " passed\n";
  }
  std::cout << "ranges: " << ranges.dump() << "\n";
  return exit_ok;
}

int run_training(const std::function<TrainResult(const EpochSink&)>& fn, const fs::path& out, const fs::path& log) {
  JsonlLog sink(log);
  try {
    const TrainResult res = fn([&](const EpochRecord& r) { sink(r); });
    save_checkpoint(res.best, out);
    std::cout << "checkpoint written to " << out.string() << "\n";
    std::cout << "best epoch " << res.best_epoch << ", validation loss " << res.best_val_loss << "\n";
    return exit_ok;
  } catch (const TrainingAborted& e) {
    save_checkpoint(e.last_good(), out);
    std::cerr << "training aborted: " << e.what() << "; last good checkpoint written to " << out.string() << "\n";
    return exit_numeric;
  }
}

int cmd_pretrain(const std::string& config, std::optional<std::uint64_t> seed, const std::string& loss,
                 const fs::path& data, const fs::path& out, std::string log, std::optional<int> epochs) {
  const ExperimentConfig cfg = resolve_config(config, seed);
  const LossMode mode = parse_loss_mode(loss);
  const Dataset train = read_dataset(split_file(data, Split::Train));
  const Dataset val = read_dataset(split_file(data, Split::Val));
  TrainConfig tc = cfg.train_config(cfg.pretraining, mode, derive_seed(cfg.seed, "pretrain:" + loss));
  if (epochs) tc.epochs = *epochs;
  if (log.empty()) log = out.string() + ".log.jsonl";
  return run_training([&](const EpochSink& sink) { return pretrain(tc, train, val, cfg.fno(), sink); }, out, log);
}

int cmd_finetune(const std::string& config, std::optional<std::uint64_t> seed, const std::string& from,
                 const fs::path& data, std::size_t n, double sigma, const fs::path& out, std::string log,
                 std::optional<int> epochs) {
  const ExperimentConfig cfg = resolve_config(config, seed);
  const Dataset full = read_dataset(split_file(data, Split::Train));
  const Dataset val = read_dataset(split_file(data, Split::Val));
  std::optional<Checkpoint> base;
  if (from != "scratch") base = load_checkpoint(from);
  const std::uint64_t s = derive_seed(cfg.seed, "finetune");
  const Dataset train = add_noise(subsample_nshot(full, n, s), sigma, s);
  TrainConfig tc = cfg.train_config(cfg.finetuning, LossMode::Data, s);
  if (epochs) tc.epochs = *epochs;
  if (log.empty()) log = out.string() + ".log.jsonl";
  return run_training(
      [&](const EpochSink& sink) {
        TrainResult r = finetune(base, tc, train, val, cfg.fno(), sink);
        r.best.provenance["finetune"] = {{"n_shot", n}, {"sigma", sigma}, {"from", from}};
        if (r.best.provenance.contains("assigned_k_slot"))
          std::cout << "assigned permeability to channel " << r.best.inputs.k_slot << "\n";
        return r;
      },
      out, log);
}

int cmd_evaluate(const std::string& config, const fs::path& ckpt, const fs::path& data, const fs::path& out,
                 std::string model, std::optional<std::size_t> n, double sigma) {
  const BandEdges edges = config.empty() ? BandEdges{} : load_experiment_config(config).band_edges;
  Checkpoint ck = load_checkpoint(ckpt);
  const Dataset ds = read_dataset(split_file(data, Split::Test));
  if (!ds.samples.empty() && ds.samples.front().coeffs.k && ck.inputs.k_slot < 0) {
    const fs::path val_path = fs::is_directory(data) ? data / "val.pdewb" : fs::path();
    const Dataset val = !val_path.empty() && fs::exists(val_path) ? read_dataset(val_path) : ds;
    ck.inputs.k_slot = assign_new_coefficient_channel(ck, val);
    std::cout << "assigned permeability to channel " << ck.inputs.k_slot << "\n";
  }
  ReportRow row;
  row.model = model.empty() ? ck.provenance.value("variant", ck.provenance.value("kind", std::string("model"))) : model;
  row.metrics = evaluate(ck, ds, edges);
  row.task = row.metrics.task;
  row.ood = ds.manifest.contains("plan") ? DatasetPlan::parse(ds.manifest["plan"].get<std::string>()).name() : "id";
  if (const auto colon = row.ood.rfind(':'); colon != std::string::npos) row.ood = row.ood.substr(colon + 1);
  row.n_shot = n ? *n : ck.provenance.contains("finetune") ? ck.provenance["finetune"].value("n_shot", 0) : 0;
  row.sigma = sigma;
  fs::path target = out;
  if (fs::is_directory(out) || !out.has_extension()) target = out / (report_stem(row) + ".csv");
  emit_report({row}, target, target.extension() == ".json" ? ReportFormat::Json : ReportFormat::Csv);
  std::cout << "mu_l2 " << row.metrics.mu_l2 << ", l_inf " << row.metrics.l_inf << " -> " << target.string() << "\n";
  return exit_ok;
}

int cmd_sweep(const std::string& config, bool resume, bool strict, int workers) {
  const ExperimentConfig cfg = load_experiment_config(config);
  std::cout << "sweep over " << cfg.sweep.cell_count() << " cells into " << cfg.output.string() << "\n";
  const SweepOutcome o = run_sweep(cfg, {resume, workers}, [](const std::string& msg) { std::cerr << msg << "\n"; });
  std::cout << o.ran << " cells run, " << o.skipped << " skipped, " << o.failed << " failed\n";
  return strict && o.failed > 0 ? exit_numeric : exit_ok;
}

int cmd_report(const std::vector<std::string>& inputs, const fs::path& out) {
  std::vector<ReportRow> rows;
  for (const auto& in : inputs) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_file(in));
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError("'" + in + "' is not valid JSON: " + std::string(e.what()));
    }
    if (j.contains("cells")) {
      for (const auto& [k, v] : j["cells"].items()) rows.push_back(ReportRow::from_json(v));
    } else {
      for (auto& r : rows_from_json(j)) rows.push_back(std::move(r));
    }
  }
  emit_report(rows, out, out.extension() == ".json" ? ReportFormat::Json : ReportFormat::Csv, true);
  std::cout << rows.size() << " rows written to " << out.string() << "\n";
  return exit_ok;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pre-training and fine-tuning workbench for neural PDE operators"};
  app.require_subcommand(1);

  std::string config;
  std::optional<std::uint64_t> seed;
  std::string plan, out, data, loss, log, from = "scratch", ckpt, model;
  std::optional<std::size_t> train_n, val_n, test_n, n_label;
  std::optional<int> epochs;
  std::size_t n_shot = 0;
  double sigma = 0.0;
  bool resume = false, strict = false;
  int workers = 0;
  std::vector<std::string> inputs;

  auto* gen = app.add_subcommand("generate", "Generate train/val/test dataset files for a plan");
  gen->add_option("--config", config, "Experiment config (JSON)");
  gen->add_option("--seed", seed, "Global seed (overrides the config)");
  gen->add_option("--plan", plan, "expensive | synthetic | extended | downstream:<task>[:<ood>]")->required();
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_option("--train", train_n, "Train split size");
  gen->add_option("--val", val_n, "Validation split size");
  gen->add_option("--test", test_n, "Test split size");

  auto* pre = app.add_subcommand("pretrain", "Pre-train a model on a pre-training dataset");
  pre->add_option("--config", config, "Experiment config (JSON)");
  pre->add_option("--seed", seed, "Global seed (overrides the config)");
  pre->add_option("--loss", loss, "data | physics | hybrid")->required();
  pre->add_option("--data", data, "Dataset directory with train/val files")->required();
  pre->add_option("--out", out, "Checkpoint path")->required();
  pre->add_option("--log", log, "Epoch log path (JSON lines)");
  pre->add_option("--epochs", epochs, "Override epochs");

  auto* fin = app.add_subcommand("finetune", "Fine-tune a checkpoint or a scratch model on a downstream task");
  fin->add_option("--config", config, "Experiment config (JSON)");
  fin->add_option("--seed", seed, "Global seed (overrides the config)");
  fin->add_option("--from", from, "Checkpoint path or 'scratch'");
  fin->add_option("--data", data, "Downstream dataset directory")->required();
  fin->add_option("--n", n_shot, "Number of training samples (0: zero-shot)")->required();
  fin->add_option("--sigma", sigma, "Relative noise level on training solutions");
  fin->add_option("--out", out, "Checkpoint path")->required();
  fin->add_option("--log", log, "Epoch log path (JSON lines)");
  fin->add_option("--epochs", epochs, "Override epochs");

  auto* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint on a test split");
  ev->add_option("--config", config, "Experiment config (JSON); supplies the band edges");
  ev->add_option("--checkpoint", ckpt, "Checkpoint path")->required();
  ev->add_option("--data", data, "Dataset file or directory")->required();
  ev->add_option("--out", out, "Report path (.csv or .json) or directory")->required();
  ev->add_option("--model", model, "Model label for the report row");
  ev->add_option("--n", n_label, "n_shot label for the report row");
  ev->add_option("--sigma", sigma, "sigma label for the report row");

  auto* sw = app.add_subcommand("sweep", "Run the full fine-tuning matrix of a config");
  sw->add_option("--config", config, "Experiment config (JSON)")->required();
  sw->add_flag("--resume", resume, "Skip cells recorded as finished in the ledger");
  sw->add_flag("--strict", strict, "Exit nonzero if any cell failed");
  sw->add_option("--workers", workers, "Concurrent cells (default PDEWB_THREADS)");

  auto* rep = app.add_subcommand("report", "Merge report JSON files or sweep ledgers into one table");
  rep->add_option("--in", inputs, "Input report JSON or ledger files")->required();
  rep->add_option("--out", out, "Output path (.csv or .json)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exit_ok : exit_config;
  }

  try {
    if (gen->parsed()) return cmd_generate(config, seed, plan, out, train_n, val_n, test_n);
    if (pre->parsed()) return cmd_pretrain(config, seed, loss, data, out, log, epochs);
    if (fin->parsed()) return cmd_finetune(config, seed, from, data, n_shot, sigma, out, log, epochs);
    if (ev->parsed()) return cmd_evaluate(config, ckpt, data, out, model, n_label, sigma);
    if (sw->parsed()) return cmd_sweep(config, resume, strict, workers);
    if (rep->parsed()) return cmd_report(inputs, out);
  } catch (const LayoutError& e) {
    std::cerr << "layout error: " << e.what() << "\n";
    return exit_layout;
  } catch (const ShapeError& e) {
    std::cerr << "layout error: " << e.what() << "\n";
    return exit_layout;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return exit_numeric;
  } catch (const FormatError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return exit_io;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return exit_io;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return exit_io;
  } catch (const Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return exit_config;
  }
  return exit_config;
}
