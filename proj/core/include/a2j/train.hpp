#pragma once

// AdamW training loop, dataset evaluation and the on-disk run layout.

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "a2j/config.hpp"
#include "a2j/metrics.hpp"
#include "a2j/model.hpp"

namespace a2j {

// Adam with decoupled weight decay applied to every parameter.
template <typename T>
class AdamW {
 public:
  AdamW(ParamList<T> params, double lr, double weight_decay, double beta1 = 0.9,
        double beta2 = 0.999, double eps = 1e-8);

  void step();
  void zero_grad() { zero_grads(params_); }
  std::size_t steps() const { return t_; }

 private:
  ParamList<T> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, wd_, b1_, b2_, eps_;
  std::size_t t_ = 0;
};

struct StepLog {
  std::size_t step = 0;
  LossReport loss;  // batch means
  std::optional<double> mpjpe;  // filled on the last step of an epoch
};

struct TrainResult {
  std::vector<StepLog> log;
  MetricReport initial;               // held-out metrics before the first step
  std::vector<MetricReport> epochs;   // held-out metrics after each epoch
  std::size_t steps = 0;
  bool diverged = false;
  std::string message;
  double seconds = 0;
};

struct TrainHooks {
  std::function<void(const StepLog&)> on_step;
  std::function<void(std::size_t epoch, const MetricReport&)> on_epoch;
};

// Root-aligned metrics of the model over a dataset (no gradient recording).
template <typename T>
MetricReport evaluate(const Model<T>& model, const Dataset& data);

// Trains in place. Stops early without applying the offending update when a
// loss or gradient becomes non-finite; parameters then hold the last finite
// state and `diverged` is set.
template <typename T>
TrainResult train_model(Model<T>& model, const TrainConfig& cfg, const Dataset& train,
                        const Dataset& eval, const TrainHooks& hooks = {});

// "step,loss1,loss2,total,mpjpe" rows.
std::string log_csv(const TrainResult& result);

std::string metric_text(const MetricReport& report);

struct RunPaths {
  std::filesystem::path dir;
  std::filesystem::path checkpoint() const { return dir / "checkpoint.bin"; }
  std::filesystem::path log() const { return dir / "train_log.csv"; }
  std::filesystem::path manifest() const { return dir / "manifest.txt"; }
  std::filesystem::path metrics() const { return dir / "metrics.txt"; }
};

// Builds data and model from settings, trains, and writes checkpoint, log,
// metrics and manifest under `paths.dir`.
TrainResult run_training(const ResolvedSettings& settings, const RunPaths& paths,
                         const std::string& command, const TrainHooks& hooks = {});

}  // namespace a2j
