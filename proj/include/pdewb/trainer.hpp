#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pdewb/channels.hpp"
#include "pdewb/checkpoint.hpp"
#include "pdewb/data.hpp"
#include "pdewb/fno.hpp"
#include "pdewb/losses.hpp"
#include "pdewb/optim.hpp"
#include "pdewb/parallel.hpp"
#include "pdewb/rng.hpp"

namespace pdewb {

struct TrainConfig {
  int epochs = 100;
  std::size_t batch_size = 32;
  double lr_max = 1e-3;
  double lr_min = 1e-6;
  std::uint64_t seed = 0;
  LossConfig loss;
  int threads = 0;  // 0: worker_threads(); never affects results

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (!(lr_min < lr_max) || !(lr_min >= 0.0)) throw ConfigError("need 0 <= lr_min < lr_max");
    loss.validate();
  }

  nlohmann::json to_json() const {
    return {{"epochs", epochs},   {"batch_size", batch_size},       {"lr_max", lr_max},   {"lr_min", lr_min},
            {"seed", seed},       {"loss", to_string(loss.mode)},   {"alpha", loss.alpha}};
  }
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
  double wall_ms = 0.0;

  nlohmann::json to_json() const {
    return {{"epoch", epoch}, {"train_loss", train_loss}, {"val_loss", val_loss}, {"lr", lr}, {"wall_ms", wall_ms}};
  }
};

struct TrainResult {
  Checkpoint best;
  double best_val_loss = 0.0;
  int best_epoch = 0;  // 0: the initial parameters were never improved on
  std::vector<EpochRecord> log;
};

using EpochSink = std::function<void(const EpochRecord&)>;

/// Non-finite loss or gradient; carries the best checkpoint seen so far.
class TrainingAborted : public NumericError {
public:
  TrainingAborted(const std::string& what, Checkpoint last_good, int epoch)
      : NumericError(what), last_good_(std::move(last_good)), epoch_(epoch) {}
  const Checkpoint& last_good() const { return last_good_; }
  int epoch() const { return epoch_; }

private:
  Checkpoint last_good_;
  int epoch_;
};

/// Per-channel mean and population std over every grid point of every
/// sample. Channels with std below the floor keep unit scale, so a channel
/// that is constant during fitting passes through unscaled later.
inline NormStats fit_normalization(const Dataset& ds, const InputSpec& spec) {
  if (ds.samples.empty()) throw PreconditionError("normalization needs a nonempty dataset");
  const std::size_t C = spec.channels.size();
  std::vector<double> sum(C, 0.0), sq(C, 0.0);
  std::vector<double> in;
  double count = 0.0;
  for (const PdeSample& s : ds.samples) {
    assemble_input(s, spec, in);
    for (std::size_t p = 0; p < in.size(); p += C)
      for (std::size_t c = 0; c < C; ++c) sum[c] += in[p + c];
    count += static_cast<double>(in.size() / C);
  }
  NormStats st = NormStats::identity(static_cast<int>(C));
  for (std::size_t c = 0; c < C; ++c) st.mean[c] = sum[c] / count;
  for (const PdeSample& s : ds.samples) {
    assemble_input(s, spec, in);
    for (std::size_t p = 0; p < in.size(); p += C)
      for (std::size_t c = 0; c < C; ++c) sq[c] += (in[p + c] - st.mean[c]) * (in[p + c] - st.mean[c]);
  }
  for (std::size_t c = 0; c < C; ++c) {
    const double sd = std::sqrt(sq[c] / count);
    st.stddev[c] = sd < norm_std_floor ? 1.0 : sd;
  }
  return st;
}

/// Forward-only scratch state for one worker.
class Predictor {
public:
  explicit Predictor(const FnoConfig& cfg) : engine_(cfg) {}

  Field2D predict(const Checkpoint& ck, const PdeSample& s) {
    assemble_input(s, ck.inputs, input_);
    const auto out = engine_.forward(ck.params, input_, tape_);
    Field2D f(s.source.grid);
    for (std::size_t i = 0; i < out.size(); ++i) f.values[i] = out[i];
    return f;
  }

  /// d(loss)/d(theta) accumulated into grads; returns the sample loss.
  double accumulate(const Checkpoint& ck, const PdeSample& s, const LossConfig& loss, double batch_scale,
                    FnoParams<float>& grads) {
    const Field2D pred = predict(ck, s);
    const SampleLoss l = sample_loss(pred, s, loss, batch_scale);
    seed_.resize(l.seed.size());
    for (std::size_t i = 0; i < seed_.size(); ++i) seed_[i] = static_cast<float>(l.seed.values[i]);
    engine_.backward(ck.params, tape_, seed_, grads);
    return l.value;
  }

private:
  FnoEngine<float> engine_;
  FnoTape<float> tape_;
  std::vector<float> input_;
  std::vector<float> seed_;
};

namespace detail {

inline int resolve_threads(int t) { return t > 0 ? t : worker_threads(); }

inline void check_grid(const Checkpoint& ck, const Dataset& ds) {
  if (!ds.samples.empty() && !(ds.grid() == ck.params.config.grid))
    throw ShapeError("dataset grid " + to_string(ds.grid()) + " does not match model grid " +
                     to_string(ck.params.config.grid));
}

} // namespace detail

/// Per-sample losses of a checkpoint over a dataset, in sample order.
inline std::vector<double> sample_losses(const Checkpoint& ck, const Dataset& ds, const LossConfig& loss,
                                         int threads = 0) {
  detail::check_grid(ck, ds);
  std::vector<double> out(ds.size());
  parallel_chunks(ds.size(), detail::resolve_threads(threads), [&](std::size_t, std::size_t b, std::size_t e) {
    Predictor pr(ck.params.config);
    for (std::size_t i = b; i < e; ++i) out[i] = sample_loss(pr.predict(ck, ds.samples[i]), ds.samples[i], loss, 1.0).value;
  });
  return out;
}

/// Mean per-sample loss, reduced in sample order.
inline double dataset_loss(const Checkpoint& ck, const Dataset& ds, const LossConfig& loss, int threads = 0) {
  if (ds.samples.empty()) throw PreconditionError("loss over an empty dataset");
  double acc = 0.0;
  for (double v : sample_losses(ck, ds, loss, threads)) acc += v;
  return acc / static_cast<double>(ds.size());
}

inline void require_compatible(const Dataset& ds, const LossConfig& loss) {
  for (const PdeSample& s : ds.samples) {
    if (loss.mode == LossMode::Data && !s.solution)
      throw PreconditionError("data loss needs solutions, but the dataset has samples without one");
    if (loss.mode != LossMode::Data && !is_steady(s.system))
      throw UnsupportedSystemError("physics loss cannot train on " + std::string(to_string(s.system)));
  }
}

/// Number of gradient accumulators per batch. Fixed, so the float
/// reduction order depends only on the batch and not on the thread count.
inline constexpr std::size_t gradient_groups = 4;

/// Adam with cosine decay from `init`, keeping the lowest-validation
/// checkpoint (the initial parameters included).
inline TrainResult train(const Checkpoint& init, const Dataset& train_set, const Dataset& val_set,
                         const TrainConfig& cfg, const EpochSink& sink = {}) {
  cfg.validate();
  if (train_set.samples.empty()) throw PreconditionError("training set is empty");
  if (val_set.samples.empty()) throw PreconditionError("validation set is empty");
  detail::check_grid(init, train_set);
  detail::check_grid(init, val_set);
  require_compatible(train_set, cfg.loss);
  require_compatible(val_set, cfg.loss);
  const int threads = detail::resolve_threads(cfg.threads);
  const FnoConfig& arch = init.params.config;

  TrainResult res;
  res.best = init;
  res.best_val_loss = dataset_loss(init, val_set, cfg.loss, threads);
  if (!std::isfinite(res.best_val_loss)) throw TrainingAborted("non-finite initial validation loss", init, 0);

  Checkpoint cur = init;
  AdamState<float> adam = AdamState<float>::init(arch);
  const std::size_t N = train_set.size();
  const std::size_t B = std::min(cfg.batch_size, N);
  const long batches = static_cast<long>((N + B - 1) / B);
  const long total_steps = batches * cfg.epochs;
  const std::size_t G = std::min(gradient_groups, B);
  std::vector<FnoParams<float>> group_grads(G, FnoParams<float>::zeros(arch));
  std::vector<std::optional<Predictor>> workers(G);
  std::vector<double> losses(B);
  std::vector<std::size_t> perm(N);
  const std::uint64_t shuffle_base = derive_seed(cfg.seed, "shuffle");
  long step = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < N; ++i) perm[i] = i;
    Rng rng(derive_seed(shuffle_base, 0, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = N; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);

    double epoch_loss = 0.0;
    const double epoch_lr = cosine_lr(step, total_steps, cfg.lr_max, cfg.lr_min);
    for (std::size_t start = 0; start < N; start += B) {
      const std::size_t nb = std::min(B, N - start);
      const std::size_t groups = std::min(G, nb);
      const double scale = 1.0 / static_cast<double>(nb);
      parallel_for(groups, threads, [&](std::size_t g) {
        if (!workers[g]) workers[g].emplace(arch);
        group_grads[g].set_zero();
        for (std::size_t k = nb * g / groups; k < nb * (g + 1) / groups; ++k)
          losses[k] = workers[g]->accumulate(cur, train_set.samples[perm[start + k]], cfg.loss, scale, group_grads[g]);
      });
      double batch_loss = 0.0;
      for (std::size_t k = 0; k < nb; ++k) batch_loss += losses[k];
      batch_loss *= scale;
      if (!std::isfinite(batch_loss))
        throw TrainingAborted("non-finite training loss at epoch " + std::to_string(epoch), res.best, epoch);
      for (std::size_t g = 1; g < groups; ++g) {
        std::vector<std::span<float>> dst;
        group_grads[0].for_each_tensor([&](const std::string&, std::span<float> t) { dst.push_back(t); });
        std::size_t ti = 0;
        group_grads[g].for_each_tensor([&](const std::string&, std::span<const float> t) {
          for (std::size_t i = 0; i < t.size(); ++i) dst[ti][i] += t[i];
          ++ti;
        });
      }
      try {
        adam_step(cur.params, group_grads[0], adam, cosine_lr(step, total_steps, cfg.lr_max, cfg.lr_min));
      } catch (const NumericError& e) {
        throw TrainingAborted(std::string(e.what()) + " at epoch " + std::to_string(epoch), res.best, epoch);
      }
      ++step;
      epoch_loss += batch_loss * static_cast<double>(nb);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / static_cast<double>(N);
    rec.val_loss = dataset_loss(cur, val_set, cfg.loss, threads);
    rec.lr = epoch_lr;
    if (!std::isfinite(rec.val_loss))
      throw TrainingAborted("non-finite validation loss at epoch " + std::to_string(epoch), res.best, epoch);
    if (rec.val_loss < res.best_val_loss) {
      res.best_val_loss = rec.val_loss;
      res.best_epoch = epoch;
      res.best.params = cur.params;
    }
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    res.log.push_back(rec);
    if (sink) sink(rec);
  }
  res.best.provenance["training"] = cfg.to_json();
  res.best.provenance["training"]["best_epoch"] = res.best_epoch;
  res.best.provenance["training"]["best_val_loss"] = res.best_val_loss;
  return res;
}

/// Fresh parameters over the full input layout, normalized on `train_set`.
inline TrainResult pretrain(const TrainConfig& cfg, const Dataset& train_set, const Dataset& val_set, FnoConfig arch,
                            const EpochSink& sink = {}) {
  if (train_set.samples.empty()) throw PreconditionError("training set is empty");
  for (const PdeSample& s : train_set.samples)
    if (!is_steady(s.system)) throw UnsupportedSystemError("pre-training uses steady systems only");
  Checkpoint init;
  init.inputs = InputSpec{};
  arch.in_channels = init.inputs.size();
  Rng rng(derive_seed(cfg.seed, "init"));
  init.params = init_params<float>(arch, rng);
  init.params.norm = fit_normalization(train_set, init.inputs);
  init.provenance["kind"] = "pretrain";
  if (train_set.manifest.contains("plan")) init.provenance["train_plan"] = train_set.manifest["plan"];
  return train(init, train_set, val_set, cfg, sink);
}

/// Picks the layout slot for a coefficient field the checkpoint has never
/// seen: the candidate with the lowest zero-shot data loss on `val_set`,
/// ties to the lowest index.
inline int assign_new_coefficient_channel(const Checkpoint& ck, const Dataset& val_set, int threads = 0) {
  std::vector<int> candidates;
  for (int c : ck.inputs.channels)
    if (c != kSource) candidates.push_back(c);
  if (candidates.empty()) throw LayoutError("checkpoint has no coefficient channel to host a new field");
  if (candidates.size() == 1) return candidates.front();
  int best = -1;
  double best_loss = std::numeric_limits<double>::infinity();
  for (int c : candidates) {
    Checkpoint trial = ck;
    trial.inputs.k_slot = c;
    const double l = dataset_loss(trial, val_set, {LossMode::Data, 1.0}, threads);
    if (l < best_loss || best < 0) {
      best = c;
      best_loss = l;
    }
  }
  return best;
}

/// Checkpoint ready for fine-tuning or zero-shot use on a task: scratch
/// models get fresh parameters over the task's minimal channels; pretrained
/// ones get a slot assigned for any unseen coefficient field.
inline Checkpoint prepare_for_task(const std::optional<Checkpoint>& from, const Dataset& train_set,
                                   const Dataset& val_set, FnoConfig arch, std::uint64_t seed, int threads = 0) {
  const Dataset& ref = train_set.samples.empty() ? val_set : train_set;
  if (ref.samples.empty()) throw PreconditionError("no samples to infer the task from");
  const SystemTag task = ref.samples.front().system;
  const bool has_field = ref.samples.front().coeffs.k.has_value();
  if (!from) {
    Checkpoint ck;
    ck.inputs = minimal_inputs(task);
    arch.in_channels = ck.inputs.size();
    Rng rng(derive_seed(seed, "init"));
    ck.params = init_params<float>(arch, rng);
    ck.params.norm = fit_normalization(ref, ck.inputs);
    ck.provenance["kind"] = "scratch";
    ck.provenance["task"] = std::string(to_string(task));
    return ck;
  }
  Checkpoint ck = *from;
  if (has_field && ck.inputs.k_slot < 0) {
    ck.inputs.k_slot = assign_new_coefficient_channel(ck, val_set, threads);
    ck.provenance["assigned_k_slot"] = ck.inputs.k_slot;
  }
  return ck;
}

/// Data-loss fine-tuning. Zero epochs or an empty training set return the
/// prepared checkpoint untouched (zero-shot).
inline TrainResult finetune(const std::optional<Checkpoint>& from, TrainConfig cfg, const Dataset& train_set,
                            const Dataset& val_set, const FnoConfig& scratch_arch, const EpochSink& sink = {}) {
  cfg.loss = {LossMode::Data, 1.0};
  const Checkpoint init = prepare_for_task(from, train_set, val_set, scratch_arch, cfg.seed, cfg.threads);
  if (cfg.epochs == 0 || train_set.samples.empty()) {
    TrainResult res;
    res.best = init;
    res.best_val_loss = dataset_loss(init, val_set, cfg.loss, cfg.threads);
    return res;
  }
  return train(init, train_set, val_set, cfg, sink);
}

} // namespace pdewb
