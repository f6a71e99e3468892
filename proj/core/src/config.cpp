#include "a2j/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace a2j {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  // Shortest form that still round-trips.
  for (int p = 1; p <= 17; ++p) {
    std::ostringstream t;
    t << std::setprecision(p) << v;
    if (std::stod(t.str()) == v) return t.str();
  }
  return os.str();
}

[[noreturn]] void bad(const std::string& key, const std::string& constraint) {
  throw ConfigError("invalid value for '" + key + "': " + constraint);
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad(key, "expected a non-negative integer");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad(key, "expected a non-negative integer");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) bad(key, "expected a number");
    return out;
  } catch (const std::logic_error&) {
    bad(key, "expected a number");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  bad(key, "expected true or false");
}

template <typename Field>
Knob size_knob(std::string name, std::string help, Field field) {
  return {name, std::move(help),
          [field](const Settings& s) { return std::to_string(field(s)); },
          [field, name](Settings& s, const std::string& v) { field(s) = to_size(name, v); }};
}

template <typename Field>
Knob u64_knob(std::string name, std::string help, Field field) {
  return {name, std::move(help),
          [field](const Settings& s) { return std::to_string(field(s)); },
          [field, name](Settings& s, const std::string& v) { field(s) = to_u64(name, v); }};
}

template <typename Field>
Knob double_knob(std::string name, std::string help, Field field) {
  return {name, std::move(help),
          [field](const Settings& s) { return format_double(field(s)); },
          [field, name](Settings& s, const std::string& v) { field(s) = to_double(name, v); }};
}

template <typename Field>
Knob bool_knob(std::string name, std::string help, Field field) {
  return {name, std::move(help),
          [field](const Settings& s) {
            return std::string(field(s) ? "true" : "false");
          },
          [field, name](Settings& s, const std::string& v) { field(s) = to_bool(name, v); }};
}

template <typename Field>
Knob string_knob(std::string name, std::string help, Field field) {
  return {name, std::move(help),
          [field](const Settings& s) { return field(s); },
          [field](Settings& s, const std::string& v) { field(s) = v; }};
}

#define FIELD(expr) [](auto& s) -> auto& { return expr; }

std::vector<Knob> build_knobs() {
  std::vector<Knob> k;
  k.push_back(string_knob("precision", "float or double", FIELD(s.precision)));
  k.push_back(size_knob("image_size", "input side in pixels", FIELD(s.train.model.image_size)));
  k.push_back(size_knob("d_model", "transformer width", FIELD(s.train.model.d_model)));
  k.push_back(size_knob("encoder_layers", "encoder depth", FIELD(s.train.model.encoder_layers)));
  k.push_back(size_knob("decoder_layers", "decoder depth", FIELD(s.train.model.decoder_layers)));
  k.push_back(size_knob("heads", "attention heads", FIELD(s.train.model.heads)));
  k.push_back(size_knob("points", "deformable sampling points per head and level",
                        FIELD(s.train.model.points)));
  k.push_back(size_knob("ffn_dim", "feed-forward hidden width", FIELD(s.train.model.ffn_dim)));
  k.push_back(size_knob("projection_depth", "conv layers per pyramid projection",
                        FIELD(s.train.model.projection_depth)));
  k.push_back(size_knob("head_layers", "linear layers per head branch",
                        FIELD(s.train.model.head_layers)));
  k.push_back(size_knob("anchors_per_side", "in-plane anchors along each axis",
                        FIELD(s.train.model.anchors_per_side)));
  k.push_back(size_knob("anchor_depths", "anchor depth layers", FIELD(s.train.model.anchor_depths)));
  k.push_back(double_knob("anchor_depth_range", "anchor depths span +-this (mm)",
                          FIELD(s.train.model.anchor_depth_range)));
  k.push_back(double_knob("offset_scale_inplane", "in-plane offset output scale, 0 = anchor stride",
                          FIELD(s.train.model.offset_scale_inplane)));
  k.push_back(double_knob("offset_scale_depth", "depth offset output scale (mm)",
                          FIELD(s.train.model.offset_scale_depth)));
  k.push_back(bool_knob("transformer", "anchor refinement by encoder/decoder",
                        FIELD(s.train.model.transformer)));
  k.push_back(bool_knob("a2j_fusion", "anchor-to-joint fusion head", FIELD(s.train.model.a2j_fusion)));
  k.push_back(bool_knob("learned_weights", "learned anchor weights", FIELD(s.train.model.learned_weights)));
  k.push_back(bool_knob("msdam", "deformable attention (false: dense)", FIELD(s.train.model.msdam)));
  k.push_back(bool_knob("pre_norm", "pre-norm transformer sublayers", FIELD(s.train.model.pre_norm)));
  k.push_back(double_knob("alpha", "in-plane weight in the joint loss", FIELD(s.train.loss.alpha)));
  k.push_back(double_knob("tau1", "in-plane kernel width", FIELD(s.train.loss.tau1)));
  k.push_back(double_knob("tau2", "depth kernel width", FIELD(s.train.loss.tau2)));
  k.push_back(double_knob("lambda1", "joint loss weight", FIELD(s.train.loss.lambda1)));
  k.push_back(double_knob("lambda2", "anchor surrounding loss weight", FIELD(s.train.loss.lambda2)));
  k.push_back(double_knob("learning_rate", "AdamW step size", FIELD(s.train.learning_rate)));
  k.push_back(double_knob("weight_decay", "AdamW decoupled decay", FIELD(s.train.weight_decay)));
  k.push_back(double_knob("beta1", "AdamW first moment decay", FIELD(s.train.beta1)));
  k.push_back(double_knob("beta2", "AdamW second moment decay", FIELD(s.train.beta2)));
  k.push_back(double_knob("adam_eps", "AdamW epsilon", FIELD(s.train.adam_eps)));
  k.push_back(double_knob("grad_clip", "gradient norm cap, 0 = off", FIELD(s.train.grad_clip)));
  k.push_back(size_knob("epochs", "training epochs", FIELD(s.train.epochs)));
  k.push_back(size_knob("batch_size", "samples per optimizer step", FIELD(s.train.batch_size)));
  k.push_back(u64_knob("seed", "model init and shuffling seed", FIELD(s.train.seed)));
  k.push_back(size_knob("train_samples", "synthetic training samples", FIELD(s.data.train_samples)));
  k.push_back(size_knob("eval_samples", "synthetic held-out samples", FIELD(s.data.eval_samples)));
  k.push_back(u64_knob("data_seed", "synthetic data seed", FIELD(s.data.seed)));
  k.push_back(string_knob("train_file", "dataset file used instead of synthesis", FIELD(s.data.train_file)));
  k.push_back(string_knob("eval_file", "held-out dataset file", FIELD(s.data.eval_file)));
  k.push_back(double_knob("overlap", "probability of overlapping hands",
                          FIELD(s.data.synth.overlap_probability)));
  k.push_back(double_knob("single_hand", "probability of a one-hand sample",
                          FIELD(s.data.synth.single_hand_probability)));
  k.push_back(double_knob("mm_per_pixel", "synthetic camera scale, 0 = automatic",
                          FIELD(s.data.synth.mm_per_pixel)));
  return k;
}

#undef FIELD

}  // namespace

void TrainConfig::validate() const {
  model.validate();
  loss.validate();
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be non-negative");
  if (!(beta1 >= 0 && beta1 < 1)) throw ConfigError("beta1 must lie in [0,1)");
  if (!(beta2 >= 0 && beta2 < 1)) throw ConfigError("beta2 must lie in [0,1)");
  if (!(adam_eps > 0)) throw ConfigError("adam_eps must be positive");
  if (!(grad_clip >= 0)) throw ConfigError("grad_clip must be non-negative");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
}

void Settings::validate() const {
  train.validate();
  data.synth.validate();
  if (precision != "float" && precision != "double") {
    throw ConfigError("precision must be float or double");
  }
  if (data.synth.image_size != train.model.image_size) {
    throw ConfigError("image_size: synthetic and model sizes differ");
  }
}

const std::vector<Knob>& knobs() {
  static const std::vector<Knob> k = build_knobs();
  return k;
}

ResolvedSettings::ResolvedSettings() {
  for (const auto& k : knobs()) source[k.name] = "default";
}

void ResolvedSettings::apply(const std::string& key, const std::string& v,
                             const std::string& source_name) {
  for (const auto& k : knobs()) {
    if (k.name != key) continue;
    k.set(value, v);
    // Synthesis always renders at the model's resolution.
    value.data.synth.image_size = value.train.model.image_size;
    source[key] = source_name;
    return;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text,
                                                                  const std::string& origin) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError(origin + ":" + std::to_string(n) + ": expected key=value");
    }
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

void ResolvedSettings::apply_text(const std::string& text, const std::string& origin,
                                  const std::string& source_name) {
  for (const auto& [k, v] : parse_key_values(text, origin)) apply(k, v, source_name);
}

void ResolvedSettings::apply_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  apply_text(ss.str(), path.string(), "file");
}

std::string config_text(const Settings& settings) {
  std::string out;
  for (const auto& k : knobs()) out += k.name + "=" + k.get(settings) + "\n";
  return out;
}

std::string manifest_text(const ResolvedSettings& settings, const std::string& command,
                          const std::map<std::string, std::string>& outputs) {
  std::string out = "# a2j run manifest\n# version: " + std::string(kVersion) +
                    "\n# command: " + command + "\n";
  for (const auto& [name, path] : outputs) out += "# output " + name + ": " + path + "\n";
  for (const auto& k : knobs()) {
    out += k.name + "=" + k.get(settings.value) + "  # " + settings.source.at(k.name) + "\n";
  }
  return out;
}

std::filesystem::path output_root(const std::filesystem::path& fallback) {
  if (const char* env = std::getenv("A2J_OUT_DIR"); env && *env) return env;
  return fallback;
}

Dataset load_or_generate_train(const Settings& s) {
  if (!s.data.train_file.empty()) return read_dataset(s.data.train_file);
  return make_dataset(s.data.synth, s.data.train_samples, s.data.seed);
}

Dataset load_or_generate_eval(const Settings& s) {
  if (!s.data.eval_file.empty()) return read_dataset(s.data.eval_file);
  // A distinct stream keeps the held-out set disjoint from training seeds.
  return make_dataset(s.data.synth, s.data.eval_samples, s.data.seed ^ 0x5eed5eed5eedULL);
}

}  // namespace a2j
