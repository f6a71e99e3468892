#include "a2j/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "a2j/checkpoint.hpp"
#include "a2j/losses.hpp"

namespace a2j {

template <typename T>
AdamW<T>::AdamW(ParamList<T> params, double lr, double weight_decay, double beta1, double beta2,
                double eps)
    : params_(std::move(params)), lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.size(), 0.0);
    v_.emplace_back(p.tensor.size(), 0.0);
  }
}

template <typename T>
void AdamW<T>::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, double(t_));
  const double c2 = 1.0 - std::pow(b2_, double(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto g = params_[i].tensor.grad();
    if (g.empty()) continue;
    auto w = params_[i].tensor.mutable_values();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = double(g[k]);
      m[k] = b1_ * m[k] + (1.0 - b1_) * gk;
      v[k] = b2_ * v[k] + (1.0 - b2_) * gk * gk;
      double x = double(w[k]) * (1.0 - lr_ * wd_);
      x -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
      w[k] = T(x);
    }
  }
}

template <typename T>
MetricReport evaluate(const Model<T>& model, const Dataset& data) {
  if (data.joint_count != model.config().joint_count() ||
      data.image_size != model.config().image_size) {
    throw ConfigError("dataset (image " + std::to_string(data.image_size) + ", " +
                      std::to_string(data.joint_count) + " joints) does not match the model");
  }
  NoGradGuard no_grad;
  MetricAccumulator acc(data.joint_count, data.mm_per_pixel);
  for (const auto& rec : data.records) {
    const auto out = model.forward(rec.image_tensor<T>());
    acc.add(to_joint_coords(out.prediction.joints), rec.targets, rec.hand_count);
  }
  return acc.report();
}

template <typename T>
TrainResult train_model(Model<T>& model, const TrainConfig& cfg, const Dataset& train,
                        const Dataset& eval, const TrainHooks& hooks) {
  cfg.validate();
  if (train.records.empty()) throw ConfigError("training dataset is empty");
  if (train.joint_count != model.config().joint_count() ||
      train.image_size != model.config().image_size) {
    throw ConfigError("training dataset does not match the model configuration");
  }
  const auto start = std::chrono::steady_clock::now();
  ParamList<T> params = model.parameters();
  AdamW<T> opt(params, cfg.learning_rate, cfg.weight_decay, cfg.beta1, cfg.beta2, cfg.adam_eps);
  TrainResult result;
  result.initial = evaluate(model, eval);

  Rng shuffle(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(train.records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  auto finish = [&] {
    result.steps = opt.steps();
    result.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - b);
      opt.zero_grad();
      StepLog entry;
      entry.step = opt.steps() + 1;
      for (std::size_t s = 0; s < n; ++s) {
        const SampleRecord& rec = train.records[order[b + s]];
        const auto out = model.forward(rec.image_tensor<T>());
        const auto terms =
            compute_losses(out.prediction, model.anchors(), rec.targets, cfg.loss);
        if (!std::isfinite(terms.report.total)) {
          result.diverged = true;
          result.message = "non-finite loss at step " + std::to_string(entry.step) +
                           " (sample seed " + std::to_string(rec.seed) + ")";
          return finish();
        }
        scale(terms.total, T(1) / T(n)).backward();
        entry.loss.loss1 += terms.report.loss1 / double(n);
        entry.loss.loss2 += terms.report.loss2 / double(n);
        entry.loss.total += terms.report.total / double(n);
      }
      double norm2 = 0;
      for (const auto& p : params)
        for (T g : p.grad()) norm2 += double(g) * double(g);
      if (!std::isfinite(norm2)) {
        result.diverged = true;
        result.message = "non-finite gradient at step " + std::to_string(entry.step);
        return finish();
      }
      if (cfg.grad_clip > 0 && std::sqrt(norm2) > cfg.grad_clip) {
        const T f = T(cfg.grad_clip / std::sqrt(norm2));
        for (auto& p : params)
          for (T& g : p.tensor.mutable_grad()) g *= f;
      }
      opt.step();
      result.log.push_back(entry);
      if (hooks.on_step) hooks.on_step(entry);
    }
    const MetricReport m = evaluate(model, eval);
    result.epochs.push_back(m);
    if (!result.log.empty()) result.log.back().mpjpe = m.mpjpe_all;
    if (hooks.on_epoch) hooks.on_epoch(epoch, m);
  }
  return finish();
}

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : "absent"; }

template <typename T>
TrainResult run_typed(const ResolvedSettings& rs, const RunPaths& paths, const std::string& command,
                      const TrainHooks& hooks) {
  const Settings& s = rs.value;
  const Dataset train = load_or_generate_train(s);
  const Dataset eval = load_or_generate_eval(s);
  Model<T> model(s.train.model, s.train.seed);
  TrainResult r = train_model(model, s.train, train, eval, hooks);
  save_checkpoint(paths.checkpoint(), model.parameters(), config_text(s), r.steps);
  {
    std::ofstream out(paths.log());
    out << log_csv(r);
    if (!out) throw IoError("cannot write " + paths.log().string());
  }
  {
    std::ofstream out(paths.metrics());
    out << "# before training\n" << metric_text(r.initial);
    if (!r.epochs.empty()) out << "# after training\n" << metric_text(r.epochs.back());
    out << "steps=" << r.steps << "\nseconds=" << num(r.seconds) << "\n";
    if (r.diverged) out << "# diverged: " << r.message << "\n";
  }
  std::ofstream man(paths.manifest());
  man << manifest_text(rs, command,
                       {{"checkpoint", paths.checkpoint().string()},
                        {"log", paths.log().string()},
                        {"metrics", paths.metrics().string()}});
  if (!man) throw IoError("cannot write " + paths.manifest().string());
  return r;
}

}  // namespace

std::string log_csv(const TrainResult& result) {
  std::string out = "step,loss1,loss2,total,mpjpe\n";
  for (const auto& e : result.log) {
    out += std::to_string(e.step) + "," + num(e.loss.loss1) + "," + num(e.loss.loss2) + "," +
           num(e.loss.total) + "," + (e.mpjpe ? num(*e.mpjpe) : "") + "\n";
  }
  return out;
}

std::string metric_text(const MetricReport& r) {
  return "mpjpe_all=" + opt_num(r.mpjpe_all) + "\nmpjpe_single=" + opt_num(r.mpjpe_single) +
         "\nmpjpe_two=" + opt_num(r.mpjpe_two) + "\nepe=" + opt_num(r.epe) +
         "\nsamples=" + std::to_string(r.samples) + "\n";
}

TrainResult run_training(const ResolvedSettings& settings, const RunPaths& paths,
                         const std::string& command, const TrainHooks& hooks) {
  settings.value.validate();
  std::filesystem::create_directories(paths.dir);
  if (settings.value.precision == "double") return run_typed<double>(settings, paths, command, hooks);
  return run_typed<float>(settings, paths, command, hooks);
}

template class AdamW<float>;
template class AdamW<double>;
template MetricReport evaluate<float>(const Model<float>&, const Dataset&);
template MetricReport evaluate<double>(const Model<double>&, const Dataset&);
template TrainResult train_model<float>(Model<float>&, const TrainConfig&, const Dataset&,
                                        const Dataset&, const TrainHooks&);
template TrainResult train_model<double>(Model<double>&, const TrainConfig&, const Dataset&,
                                         const Dataset&, const TrainHooks&);

}  // namespace a2j
