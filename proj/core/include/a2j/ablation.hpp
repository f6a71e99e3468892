#pragma once

// Component ablations and anchor-setting sweeps trained on a shared
// benchmark with identical data, seed and budget.

#include <functional>
#include <string>
#include <vector>

#include "a2j/train.hpp"

namespace a2j {

struct AblationVariant {
  std::string name;
  ModelConfig model;
};

// full, no_transformer, no_a2j_fusion, uniform_weights, no_msdam.
std::vector<AblationVariant> component_variants(const ModelConfig& base);

// In-plane anchors per side x depth layers, e.g. {{4, 3}, {16, 3}, {4, 1}}.
std::vector<AblationVariant> anchor_variants(const ModelConfig& base,
                                             const std::vector<std::pair<std::size_t, std::size_t>>& grid);

struct AblationRow {
  std::string name;
  ModelConfig model;
  MetricReport initial;
  MetricReport final;
  std::size_t parameters = 0;
  double seconds = 0;
  bool diverged = false;
};

// Trains every variant with `base` optimisation settings (always in float).
// Variants with identical model configs are trained once.
std::vector<AblationRow> run_ablation(const TrainConfig& base,
                                      const std::vector<AblationVariant>& variants,
                                      const Dataset& train, const Dataset& eval,
                                      const std::function<void(const AblationRow&)>& on_row = {});

// CSV: name,anchors,parameters,mpjpe_all,mpjpe_single,mpjpe_two,epe,initial_mpjpe,seconds,status
std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace a2j
