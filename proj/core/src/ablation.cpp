#include "a2j/ablation.hpp"

#include <cstdio>
#include <map>

namespace a2j {

std::vector<AblationVariant> component_variants(const ModelConfig& base) {
  std::vector<AblationVariant> v;
  v.push_back({"full", base});
  ModelConfig m = base;
  m.transformer = false;
  v.push_back({"no_transformer", m});
  m = base;
  m.a2j_fusion = false;
  v.push_back({"no_a2j_fusion", m});
  m = base;
  m.learned_weights = false;
  v.push_back({"uniform_weights", m});
  m = base;
  m.msdam = false;
  v.push_back({"no_msdam", m});
  return v;
}

std::vector<AblationVariant> anchor_variants(
    const ModelConfig& base, const std::vector<std::pair<std::size_t, std::size_t>>& grid) {
  std::vector<AblationVariant> v;
  for (const auto& [side, depths] : grid) {
    ModelConfig m = base;
    m.anchors_per_side = side;
    m.anchor_depths = depths;
    v.push_back({"anchors_" + std::to_string(side) + "x" + std::to_string(side) + "x" +
                     std::to_string(depths),
                 m});
  }
  return v;
}

namespace {

std::string model_key(const ModelConfig& m) {
  Settings s;
  s.train.model = m;
  return config_text(s);
}

std::string opt(const std::optional<double>& v) {
  if (!v) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

}  // namespace

std::vector<AblationRow> run_ablation(const TrainConfig& base,
                                      const std::vector<AblationVariant>& variants,
                                      const Dataset& train, const Dataset& eval,
                                      const std::function<void(const AblationRow&)>& on_row) {
  std::vector<AblationRow> rows;
  std::map<std::string, AblationRow> done;
  for (const auto& variant : variants) {
    const std::string key = model_key(variant.model);
    AblationRow row;
    if (auto it = done.find(key); it != done.end()) {
      row = it->second;
    } else {
      TrainConfig cfg = base;
      cfg.model = variant.model;
      Model<float> model(cfg.model, cfg.seed);
      const TrainResult r = train_model(model, cfg, train, eval);
      row.model = variant.model;
      row.initial = r.initial;
      row.final = r.epochs.empty() ? r.initial : r.epochs.back();
      row.parameters = count_values(model.parameters());
      row.seconds = r.seconds;
      row.diverged = r.diverged;
      done[key] = row;
    }
    row.name = variant.name;
    rows.push_back(row);
    if (on_row) on_row(rows.back());
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out =
      "name,anchors,parameters,mpjpe_all,mpjpe_single,mpjpe_two,epe,initial_mpjpe,seconds,status\n";
  for (const auto& r : rows) {
    char secs[32];
    std::snprintf(secs, sizeof secs, "%.1f", r.seconds);
    const std::size_t anchors =
        r.model.anchors_per_side * r.model.anchors_per_side * r.model.anchor_depths;
    out += r.name + "," + std::to_string(anchors) + "," + std::to_string(r.parameters) + "," +
           opt(r.final.mpjpe_all) + "," + opt(r.final.mpjpe_single) + "," +
           opt(r.final.mpjpe_two) + "," + opt(r.final.epe) + "," + opt(r.initial.mpjpe_all) +
           "," + secs + (r.diverged ? ",diverged" : ",ok") + "\n";
  }
  return out;
}

}  // namespace a2j
