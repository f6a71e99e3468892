#pragma once

// Run settings, the key=value configuration format and run manifests.
//
// Every tunable is a named knob. Values resolve as default < config file <
// command-line flag and each knob remembers where its value came from.

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "a2j/data_synth.hpp"
#include "a2j/losses.hpp"
#include "a2j/model.hpp"

namespace a2j {

inline constexpr const char* kVersion = "0.1.0";

struct TrainConfig {
  ModelConfig model;
  LossConfig loss;
  double learning_rate = 1e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 0.0;  // global L2 norm cap per step; 0 disables
  std::size_t epochs = 20;
  std::size_t batch_size = 8;
  std::uint64_t seed = 1;

  void validate() const;
};

struct DataConfig {
  SyntheticHandConfig synth;
  std::size_t train_samples = 2000;
  std::size_t eval_samples = 200;
  std::uint64_t seed = 7;
  std::string train_file;  // read instead of generating when set
  std::string eval_file;
};

struct Settings {
  TrainConfig train;
  DataConfig data;
  std::string precision = "float";  // float | double

  void validate() const;
};

struct Knob {
  std::string name;
  std::string help;
  std::function<std::string(const Settings&)> get;
  std::function<void(Settings&, const std::string&)> set;  // throws ConfigError
};

const std::vector<Knob>& knobs();

struct ResolvedSettings {
  Settings value;
  std::map<std::string, std::string> source;  // knob -> default | file | flag | ...

  ResolvedSettings();
  // Throws ConfigError for an unknown key or an unparsable value.
  void apply(const std::string& key, const std::string& value, const std::string& source_name);
  void apply_text(const std::string& text, const std::string& origin, const std::string& source_name);
  void apply_file(const std::filesystem::path& path);
};

// key=value lines; '#' starts a comment, blank lines are ignored.
std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text,
                                                                  const std::string& origin);

// Every knob as "key=value", one per line, in registry order.
std::string config_text(const Settings& settings);

// config_text plus provenance comments, version and output paths.
std::string manifest_text(const ResolvedSettings& settings, const std::string& command,
                          const std::map<std::string, std::string>& outputs);

// A2J_OUT_DIR when set, otherwise `fallback`.
std::filesystem::path output_root(const std::filesystem::path& fallback);

// Builds the synthetic sets or reads them from the configured files.
Dataset load_or_generate_train(const Settings& settings);
Dataset load_or_generate_eval(const Settings& settings);

}  // namespace a2j
