#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "pdewb/checkpoint.hpp"
#include "pdewb/data.hpp"
#include "pdewb/dataset_io.hpp"
#include "pdewb/metrics.hpp"
#include "pdewb/report.hpp"
#include "pdewb/rng.hpp"
#include "pdewb/trainer.hpp"

namespace pdewb {

/// Model variants: scratch plus one per pre-training regime.
inline const std::vector<std::string> model_variants{"scratch", "data", "physics", "hybrid"};

/// Loss mode and pre-training plan of a pretrained variant.
inline std::pair<LossMode, PlanKind> variant_recipe(std::string_view model) {
  if (model == "data") return {LossMode::Data, PlanKind::Expensive};
  if (model == "physics") return {LossMode::Physics, PlanKind::Synthetic};
  if (model == "hybrid") return {LossMode::Hybrid, PlanKind::Extended};
  throw ConfigError("model '" + std::string(model) + "' has no pre-training recipe");
}

struct OptimSection {
  int epochs = 100;
  std::size_t batch_size = 32;
  double lr_max = 1e-3;
  double lr_min = 1e-6;
};

struct SweepAxes {
  std::vector<std::string> models = model_variants;
  std::vector<SystemTag> tasks{SystemTag::Poisson, SystemTag::AdvectionDiffusion, SystemTag::Helmholtz};
  std::vector<OodLevel> ood{all_ood_levels.begin(), all_ood_levels.end()};
  std::vector<std::size_t> n_shot{8, 32, 128, 512, 1024};
  std::vector<double> sigma{0.0};

  std::size_t cell_count() const { return models.size() * tasks.size() * ood.size() * n_shot.size() * sigma.size(); }
};

/// Whole-experiment settings. Every default is written back out by
/// to_json, so emitted provenance never leaves a value implicit.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output = "runs";
  GridSpec grid{32, 32};
  std::size_t train = 1024;  // downstream split sizes
  std::size_t val = 256;
  std::size_t test = 256;
  std::size_t pretrain_train = 1536;  // pre-training split sizes, all systems together
  std::size_t pretrain_val = 384;
  RangeSpec sparsity{0.2, 0.8};
  double darcy_dt = 1e-2;
  int width = 16;
  int modes = 8;
  int n_blocks = 4;
  OptimSection pretraining;
  OptimSection finetuning;
  double alpha = 0.5;
  BandEdges band_edges;
  SweepAxes sweep;
  int workers = 0;  // 0: worker_threads()

  FnoConfig fno() const {
    FnoConfig c;
    c.grid = grid;
    c.width = width;
    c.modes = modes;
    c.n_blocks = n_blocks;
    return c;
  }

  DataConfig data(bool pretraining_sizes) const {
    DataConfig d;
    d.grid = grid;
    d.train = pretraining_sizes ? pretrain_train : train;
    d.val = pretraining_sizes ? pretrain_val : val;
    d.test = pretraining_sizes ? pretrain_val : test;
    d.sparsity = sparsity;
    d.darcy_dt = darcy_dt;
    d.seed = seed;
    return d;
  }

  TrainConfig train_config(const OptimSection& o, LossMode mode, std::uint64_t train_seed) const {
    TrainConfig t;
    t.epochs = o.epochs;
    t.batch_size = o.batch_size;
    t.lr_max = o.lr_max;
    t.lr_min = o.lr_min;
    t.seed = train_seed;
    t.loss = {mode, alpha};
    return t;
  }

  void validate() const {
    grid.validate();
    fno().validate();
    sparsity.validate();
    if (train == 0 || val == 0 || test == 0 || pretrain_train == 0 || pretrain_val == 0)
      throw ConfigError("split sizes must be positive");
    if (!(darcy_dt > 0.0)) throw ConfigError("darcy_dt must be positive");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
    for (const OptimSection* o : {&pretraining, &finetuning}) {
      if (o->epochs < 0) throw ConfigError("epochs must be nonnegative");
      if (o->batch_size < 1) throw ConfigError("batch_size must be positive");
      if (!(o->lr_min >= 0.0 && o->lr_min < o->lr_max)) throw ConfigError("need 0 <= lr_min < lr_max");
    }
    frequency_bands(grid, band_edges);
    for (const auto& m : sweep.models)
      if (m != "scratch") variant_recipe(m);
    for (SystemTag t : sweep.tasks)
      for (OodLevel o : sweep.ood) downstream_ranges(t, o);
    for (std::size_t n : sweep.n_shot)
      if (n > train) throw ConfigError("n_shot " + std::to_string(n) + " exceeds the downstream train size");
    for (double s : sweep.sigma)
      if (!(s >= 0.0)) throw ConfigError("noise levels must be nonnegative");
  }

  nlohmann::json to_json() const {
    auto optim = [](const OptimSection& o) {
      return nlohmann::json{{"epochs", o.epochs}, {"batch_size", o.batch_size}, {"lr_max", o.lr_max}, {"lr_min", o.lr_min}};
    };
    nlohmann::json tasks = nlohmann::json::array();
    for (SystemTag t : sweep.tasks) tasks.push_back(std::string(to_string(t)));
    nlohmann::json ood = nlohmann::json::array();
    for (OodLevel o : sweep.ood) ood.push_back(std::string(to_string(o)));
    return {{"seed", seed},
            {"output", output.string()},
            {"grid", {{"nx", grid.nx}, {"ny", grid.ny}}},
            {"data",
             {{"train", train},
              {"val", val},
              {"test", test},
              {"pretrain_train", pretrain_train},
              {"pretrain_val", pretrain_val},
              {"sparsity", {sparsity.lo, sparsity.hi}},
              {"darcy_dt", darcy_dt}}},
            {"model", {{"width", width}, {"modes", modes}, {"n_blocks", n_blocks}}},
            {"pretraining", optim(pretraining)},
            {"finetuning", optim(finetuning)},
            {"loss", {{"alpha", alpha}}},
            {"band_edges", {band_edges.low, band_edges.mid}},
            {"sweep",
             {{"models", sweep.models}, {"tasks", tasks}, {"ood", ood}, {"n_shot", sweep.n_shot}, {"sigma", sweep.sigma}}},
            {"workers", workers}};
  }
};

namespace detail {

inline void check_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError("'" + where + "' must be an object");
  for (const auto& [k, v] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
      throw ConfigError("unknown key '" + k + "' in " + where);
  }
}

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline OptimSection parse_optim(const nlohmann::json& j, OptimSection o, const std::string& where) {
  check_keys(j, {"epochs", "batch_size", "lr_max", "lr_min"}, where);
  read_opt(j, "epochs", o.epochs);
  read_opt(j, "batch_size", o.batch_size);
  read_opt(j, "lr_max", o.lr_max);
  read_opt(j, "lr_min", o.lr_min);
  return o;
}

} // namespace detail

/// Parses a config document. The seed is mandatory and unknown keys are
/// rejected at every level.
inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    detail::check_keys(j,
                       {"seed", "output", "grid", "data", "model", "pretraining", "finetuning", "loss", "band_edges",
                        "sweep", "workers"},
                       "config");
    if (!j.contains("seed")) throw ConfigError("config must set 'seed'");
    c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("output")) c.output = j.at("output").get<std::string>();
    if (j.contains("grid")) {
      detail::check_keys(j["grid"], {"nx", "ny"}, "grid");
      c.grid = {j["grid"].at("nx").get<int>(), j["grid"].at("ny").get<int>()};
    }
    if (j.contains("data")) {
      const auto& d = j["data"];
      detail::check_keys(d, {"train", "val", "test", "pretrain_train", "pretrain_val", "sparsity", "darcy_dt"}, "data");
      detail::read_opt(d, "train", c.train);
      detail::read_opt(d, "val", c.val);
      detail::read_opt(d, "test", c.test);
      detail::read_opt(d, "pretrain_train", c.pretrain_train);
      detail::read_opt(d, "pretrain_val", c.pretrain_val);
      if (d.contains("sparsity")) c.sparsity = {d["sparsity"].at(0).get<double>(), d["sparsity"].at(1).get<double>()};
      detail::read_opt(d, "darcy_dt", c.darcy_dt);
    }
    if (j.contains("model")) {
      detail::check_keys(j["model"], {"width", "modes", "n_blocks"}, "model");
      detail::read_opt(j["model"], "width", c.width);
      detail::read_opt(j["model"], "modes", c.modes);
      detail::read_opt(j["model"], "n_blocks", c.n_blocks);
    }
    if (j.contains("pretraining")) c.pretraining = detail::parse_optim(j["pretraining"], c.pretraining, "pretraining");
    if (j.contains("finetuning")) c.finetuning = detail::parse_optim(j["finetuning"], c.finetuning, "finetuning");
    if (j.contains("loss")) {
      detail::check_keys(j["loss"], {"alpha"}, "loss");
      detail::read_opt(j["loss"], "alpha", c.alpha);
    }
    if (j.contains("band_edges")) c.band_edges = {j["band_edges"].at(0).get<int>(), j["band_edges"].at(1).get<int>()};
    if (j.contains("sweep")) {
      const auto& s = j["sweep"];
      detail::check_keys(s, {"models", "tasks", "ood", "n_shot", "sigma"}, "sweep");
      detail::read_opt(s, "models", c.sweep.models);
      if (s.contains("tasks")) {
        c.sweep.tasks.clear();
        for (const auto& t : s["tasks"]) c.sweep.tasks.push_back(parse_system(t.get<std::string>()));
      }
      if (s.contains("ood")) {
        c.sweep.ood.clear();
        for (const auto& o : s["ood"]) c.sweep.ood.push_back(parse_ood(o.get<std::string>()));
      }
      detail::read_opt(s, "n_shot", c.sweep.n_shot);
      detail::read_opt(s, "sigma", c.sweep.sigma);
    }
    detail::read_opt(j, "workers", c.workers);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_experiment_config(j);
}

struct SweepCell {
  std::string model;
  SystemTag task = SystemTag::Poisson;
  OodLevel ood = OodLevel::Id;
  std::size_t n_shot = 0;
  double sigma = 0.0;

  std::string key() const {
    return model + "/" + std::string(to_string(task)) + "/" + std::string(to_string(ood)) + "/" +
           std::to_string(n_shot) + "/" + detail::format_real(sigma);
  }
};

/// Cross product of the sweep axes in report order.
inline std::vector<SweepCell> sweep_cells(const ExperimentConfig& cfg) {
  std::vector<SweepCell> cells;
  for (const auto& m : cfg.sweep.models)
    for (SystemTag t : cfg.sweep.tasks)
      for (OodLevel o : cfg.sweep.ood)
        for (std::size_t n : cfg.sweep.n_shot)
          for (double s : cfg.sweep.sigma) cells.push_back({m, t, o, n, s});
  std::set<std::string> seen;
  for (const auto& c : cells)
    if (!seen.insert(c.key()).second) throw ConfigError("duplicate sweep cell " + c.key());
  return cells;
}

/// Seed of a cell: derived from the global seed and the cell key alone.
inline std::uint64_t cell_seed(std::uint64_t global, const SweepCell& c) { return derive_seed(global, "cell:" + c.key()); }

/// On-disk cache of datasets and pretrained checkpoints under the output
/// directory. Missing artifacts are produced on first use.
class Workspace {
public:
  explicit Workspace(ExperimentConfig cfg) : cfg_(std::move(cfg)) {}

  const ExperimentConfig& config() const { return cfg_; }
  std::filesystem::path root() const { return cfg_.output; }

  std::filesystem::path dataset_path(const DatasetPlan& plan, Split split) const {
    std::string dir = plan.name();
    std::replace(dir.begin(), dir.end(), ':', '_');
    return root() / "data" / dir / (std::string(to_string(split)) + ".pdewb");
  }

  std::filesystem::path model_path(const std::string& variant) const { return root() / "models" / (variant + ".ckpt"); }

  const Dataset& dataset(const DatasetPlan& plan, Split split) {
    std::lock_guard lock(mu_);
    const auto path = dataset_path(plan, split);
    auto it = datasets_.find(path.string());
    if (it != datasets_.end()) return it->second;
    Dataset ds;
    if (std::filesystem::exists(path)) {
      ds = read_dataset(path);
    } else {
      const bool pre = plan.kind != PlanKind::Downstream;
      ds = build_split(plan, cfg_.data(pre), split);
      write_dataset(ds, path);
    }
    return datasets_.emplace(path.string(), std::move(ds)).first->second;
  }

  /// Pretrained checkpoint of a variant, trained once and cached on disk.
  Checkpoint pretrained(const std::string& variant, const EpochSink& sink = {}) {
    const auto path = model_path(variant);
    if (std::filesystem::exists(path)) return load_checkpoint(path, std::nullopt);
    const auto [mode, kind] = variant_recipe(variant);
    const DatasetPlan plan{kind};
    const Dataset& tr = dataset(plan, Split::Train);
    const Dataset& va = dataset(plan, Split::Val);
    TrainConfig tc = cfg_.train_config(cfg_.pretraining, mode, derive_seed(cfg_.seed, "pretrain:" + variant));
    TrainResult res = pretrain(tc, tr, va, cfg_.fno(), sink);
    res.best.provenance["variant"] = variant;
    save_checkpoint(res.best, path);
    return res.best;
  }

private:
  ExperimentConfig cfg_;
  std::mutex mu_;
  std::map<std::string, Dataset> datasets_;
};

/// Fine-tunes and evaluates one cell. Library errors become a failed row.
inline ReportRow run_cell(Workspace& ws, const SweepCell& cell, const std::optional<Checkpoint>& from, int threads) {
  const ExperimentConfig& cfg = ws.config();
  ReportRow row;
  row.model = cell.model;
  row.task = std::string(to_string(cell.task));
  row.ood = std::string(to_string(cell.ood));
  row.n_shot = cell.n_shot;
  row.sigma = cell.sigma;
  row.cell_seed = cell_seed(cfg.seed, cell);
  row.metrics.task = row.task;
  try {
    const DatasetPlan plan{PlanKind::Downstream, cell.task, cell.ood};
    const Dataset& full = ws.dataset(plan, Split::Train);
    const Dataset& val = ws.dataset(plan, Split::Val);
    const Dataset& test = ws.dataset(plan, Split::Test);
    const Dataset train = add_noise(subsample_nshot(full, cell.n_shot, row.cell_seed), cell.sigma, row.cell_seed);
    TrainConfig tc = cfg.train_config(cfg.finetuning, LossMode::Data, row.cell_seed);
    tc.threads = threads;
    const TrainResult res = finetune(from, tc, train, val, cfg.fno(), {});
    row.metrics = evaluate(res.best, test, cfg.band_edges, threads);
  } catch (const Error& e) {
    const double nan = std::nan("");
    row.metrics.mu_l2 = row.metrics.l_inf = row.metrics.frmse_low = row.metrics.frmse_mid = row.metrics.frmse_high = nan;
    row.metrics.band_edges = cfg.band_edges;
    row.status = std::string("failed: ") + e.what();
  }
  return row;
}

struct SweepOptions {
  bool resume = false;
  int workers = 0;  // 0: config value, then worker_threads()
};

struct SweepOutcome {
  std::vector<ReportRow> rows;  // sorted, one per cell
  std::size_t ran = 0;
  std::size_t skipped = 0;
  std::size_t failed = 0;
};

/// Completion ledger: cell key -> finished row, rewritten atomically.
class SweepLedger {
public:
  explicit SweepLedger(std::filesystem::path path) : path_(std::move(path)) {}

  void load() {
    if (!std::filesystem::exists(path_)) return;
    try {
      const auto j = nlohmann::json::parse(read_file(path_));
      for (const auto& [k, v] : j.at("cells").items()) rows_.emplace(k, ReportRow::from_json(v));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("sweep ledger '" + path_.string() + "' is malformed: " + e.what());
    }
  }

  std::optional<ReportRow> find(const std::string& key) const {
    std::lock_guard lock(mu_);
    auto it = rows_.find(key);
    if (it == rows_.end()) return std::nullopt;
    return it->second;
  }

  void record(const std::string& key, const ReportRow& row) {
    std::lock_guard lock(mu_);
    rows_[key] = row;
    nlohmann::json cells = nlohmann::json::object();
    for (const auto& [k, r] : rows_) cells[k] = r.to_json();
    write_file_atomic(path_, nlohmann::json{{"cells", cells}}.dump(1) + "\n");
  }

private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::map<std::string, ReportRow> rows_;
};

/// Runs every cell, writing report.csv, report.json, config.json and the
/// ledger under the output directory.
inline SweepOutcome run_sweep(const ExperimentConfig& cfg, const SweepOptions& opt,
                              const std::function<void(const std::string&)>& progress = {}) {
  cfg.validate();
  Workspace ws(cfg);
  std::filesystem::create_directories(ws.root());
  write_file_atomic(ws.root() / "config.json", cfg.to_json().dump(2) + "\n");
  SweepLedger ledger(ws.root() / "ledger.json");
  if (opt.resume) ledger.load();

  const auto cells = sweep_cells(cfg);
  SweepOutcome out;
  std::vector<std::optional<ReportRow>> rows(cells.size());
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (opt.resume) {
      if (auto r = ledger.find(cells[i].key()); r && r->status == "ok") {
        rows[i] = *r;
        ++out.skipped;
        continue;
      }
    }
    todo.push_back(i);
  }

  // Shared inputs are built up front; cells only read them.
  std::map<std::string, Checkpoint> pretrained;
  for (std::size_t i : todo) {
    const SweepCell& c = cells[i];
    if (c.model != "scratch" && !pretrained.count(c.model)) {
      if (progress) progress("pretraining " + c.model);
      pretrained.emplace(c.model, ws.pretrained(c.model));
    }
    const DatasetPlan plan{PlanKind::Downstream, c.task, c.ood};
    for (Split s : {Split::Train, Split::Val, Split::Test}) ws.dataset(plan, s);
  }

  const int workers = opt.workers > 0 ? opt.workers : cfg.workers > 0 ? cfg.workers : worker_threads();
  const int pool = static_cast<int>(std::min<std::size_t>(std::max(1, workers), std::max<std::size_t>(1, todo.size())));
  const int inner = pool > 1 ? 1 : workers;
  std::atomic<std::size_t> next{0};
  std::mutex progress_mu;
  parallel_chunks(pool, pool, [&](std::size_t, std::size_t, std::size_t) {
    for (std::size_t k = next++; k < todo.size(); k = next++) {
      const SweepCell& c = cells[todo[k]];
      std::optional<Checkpoint> from;
      if (c.model != "scratch") from = pretrained.at(c.model);
      ReportRow row = run_cell(ws, c, from, inner);
      ledger.record(c.key(), row);
      if (progress) {
        std::lock_guard lock(progress_mu);
        progress(c.key() + " " + row.status);
      }
      rows[todo[k]] = std::move(row);
    }
  });

  for (auto& r : rows) {
    if (r->status != "ok") ++out.failed;
    out.rows.push_back(std::move(*r));
  }
  out.ran = todo.size();
  sort_rows(out.rows);
  emit_report(out.rows, ws.root() / "report.csv", ReportFormat::Csv, true);
  emit_report(out.rows, ws.root() / "report.json", ReportFormat::Json);
  return out;
}

} // namespace pdewb
