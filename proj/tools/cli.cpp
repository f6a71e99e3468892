#include "cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "a2j/ablation.hpp"
#include "a2j/checkpoint.hpp"
#include "a2j/gradcheck_suite.hpp"
#include "a2j/train.hpp"

namespace a2j {

namespace {

namespace fs = std::filesystem;

std::string flag_for(const std::string& key) {
  std::string f = "--" + key;
  for (char& c : f)
    if (c == '_') c = '-';
  return f;
}

// One string-valued option per knob; only flags actually given are applied.
struct KnobFlags {
  std::map<std::string, std::string> values;
  std::vector<std::pair<std::string, CLI::Option*>> options;
  std::string config_file;

  void attach(CLI::App* app, const std::set<std::string>& skip = {}) {
    app->add_option("--config", config_file, "key=value config file (flags override it)");
    for (const auto& k : knobs()) {
      if (skip.count(k.name)) continue;
      auto* opt = app->add_option(flag_for(k.name), values[k.name], k.help)->type_name("VALUE");
      options.emplace_back(k.name, opt);
    }
  }

  // defaults < `base_text` (e.g. a checkpoint's config) < config file < flags
  ResolvedSettings resolve(const std::string& base_text = {},
                           const std::string& base_name = {}) const {
    ResolvedSettings rs;
    if (!base_text.empty()) rs.apply_text(base_text, base_name, base_name);
    if (!config_file.empty()) rs.apply_file(config_file);
    for (const auto& [key, opt] : options)
      if (opt->count()) rs.apply(key, values.at(key), "flag");
    rs.value.validate();
    return rs;
  }
};

fs::path run_dir(const std::string& flag, const std::string& command) {
  if (!flag.empty()) return flag;
  return output_root("a2j_runs") / command;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("invalid value for '" + what + "': '" + item + "' is not a number");
    }
  }
  if (out.empty()) throw ConfigError("invalid value for '" + what + "': empty list");
  return out;
}

// "4x3,16x3" -> {{4, 3}, {16, 3}}
std::vector<std::pair<std::size_t, std::size_t>> parse_grid(const std::string& text) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto x = item.find('x');
    try {
      if (x == std::string::npos) throw std::invalid_argument(item);
      out.emplace_back(std::stoul(item.substr(0, x)), std::stoul(item.substr(x + 1)));
    } catch (const std::exception&) {
      throw ConfigError("invalid value for 'anchor-grid': expected SIDExDEPTHS, got '" + item +
                        "'");
    }
  }
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

template <typename T>
Model<T> load_model(const ResolvedSettings& rs, const fs::path& checkpoint) {
  Model<T> model(rs.value.train.model, rs.value.train.seed);
  ParamList<T> params = model.parameters();
  load_checkpoint(checkpoint, params);
  return model;
}

template <typename T>
MetricReport eval_typed(const ResolvedSettings& rs, const fs::path& checkpoint) {
  const Model<T> model = load_model<T>(rs, checkpoint);
  return evaluate(model, load_or_generate_eval(rs.value));
}

template <typename T>
void infer_typed(const ResolvedSettings& rs, const fs::path& checkpoint, std::size_t limit,
                 const fs::path& joints_path, const fs::path& weights_path) {
  const Model<T> model = load_model<T>(rs, checkpoint);
  const Dataset data = load_or_generate_eval(rs.value);
  const AnchorSet& anchors = model.anchors();
  std::string joints = "sample,seed,joint,x,y,depth\n";
  std::string weights = "sample,joint,anchor,anchor_x,anchor_y,anchor_depth,weight\n";
  NoGradGuard no_grad;
  const std::size_t n = limit ? std::min(limit, data.records.size()) : data.records.size();
  for (std::size_t s = 0; s < n; ++s) {
    const auto& rec = data.records[s];
    const auto out = model.forward(rec.image_tensor<T>());
    const auto coords = to_joint_coords(out.prediction.joints);
    const std::string sample = std::to_string(s);
    for (std::size_t j = 0; j < coords.size(); ++j)
      joints += sample + "," + std::to_string(rec.seed) + "," + std::to_string(j) + "," +
                fmt(coords[j].x) + "," + fmt(coords[j].y) + "," + fmt(coords[j].depth) + "\n";
    const Tensor<T>& w = out.prediction.norm_weights;
    if (!w.defined()) continue;
    const auto v = w.values();
    const std::size_t nj = w.shape()[1];
    for (std::size_t j = 0; j < nj; ++j)
      for (std::size_t a = 0; a < anchors.size(); ++a)
        weights += sample + "," + std::to_string(j) + "," + std::to_string(a) + "," +
                   fmt(anchors.anchors[a].x) + "," + fmt(anchors.anchors[a].y) + "," +
                   fmt(anchors.anchors[a].depth) + "," + fmt(double(v[a * nj + j])) + "\n";
  }
  write_text(joints_path, joints);
  write_text(weights_path, weights);
}

std::string join_args(const std::vector<std::string>& args) {
  std::string s = "a2j";
  for (const auto& a : args) s += " " + a;
  return s;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Anchor-to-joint transformer for two-hand 3D pose (desk scale), version " +
                   std::string(kVersion),
               "a2j"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));
  const std::string command = join_args(args);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic two-hand dataset file");
  KnobFlags synth_flags;
  synth_flags.attach(synth, {"seed", "train_samples"});
  std::size_t synth_count = 0;
  std::uint64_t synth_seed = 0;
  std::string synth_out;
  auto* synth_count_opt = synth->add_option("--count", synth_count, "Number of samples");
  auto* synth_seed_opt = synth->add_option("--seed", synth_seed, "Dataset seed");
  synth->add_option("--out", synth_out, "Output dataset file")->required();

  // anchors
  auto* anchors = app.add_subcommand("anchors", "Print the anchor grid as CSV (x,y,depth)");
  std::size_t anchor_image = 64, anchor_stride = 16;
  std::string anchor_depths = "-100,0,100", anchor_out, anchor_dir;
  anchors->add_option("--image-size", anchor_image, "Input image side in pixels")
      ->capture_default_str();
  anchors->add_option("--stride", anchor_stride, "Anchor lattice stride in pixels")
      ->capture_default_str();
  anchors->add_option("--depths", anchor_depths, "Comma-separated anchor depths in mm")
      ->capture_default_str();
  anchors->add_option("--out", anchor_out, "Write the CSV here instead of stdout");
  anchors->add_option("--out-dir", anchor_dir, "Directory for the run manifest");

  // train
  auto* train = app.add_subcommand("train", "Train a model and write checkpoint, log and metrics");
  KnobFlags train_flags;
  train_flags.attach(train);
  std::string train_dir;
  train->add_option("--out-dir", train_dir, "Run directory");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the evaluation set");
  KnobFlags eval_flags;
  eval_flags.attach(eval);
  std::string eval_ckpt, eval_dir;
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval->add_option("--out-dir", eval_dir, "Run directory");

  // infer
  auto* infer = app.add_subcommand("infer", "Write predicted joints and per-anchor weights as CSV");
  KnobFlags infer_flags;
  infer_flags.attach(infer);
  std::string infer_ckpt, infer_dir;
  std::size_t infer_limit = 8;
  infer->add_option("--checkpoint", infer_ckpt, "Checkpoint file")->required();
  infer->add_option("--limit", infer_limit, "Samples to process (0 = all)")->capture_default_str();
  infer->add_option("--out-dir", infer_dir, "Run directory");

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every module");
  KnobFlags gc_flags;
  gc_flags.attach(gradcheck);
  double gc_tol = 0;
  std::size_t gc_elements = 4;
  std::string gc_dir;
  gradcheck->add_option("--tolerance", gc_tol, "Max relative error (default 1e-5 double, 1e-3 float)");
  gradcheck->add_option("--max-elements", gc_elements, "Checked elements per tensor (0 = all)")
      ->capture_default_str();
  gradcheck->add_option("--out-dir", gc_dir, "Run directory");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Train component ablations and anchor sweeps");
  KnobFlags ablate_flags;
  ablate_flags.attach(ablate);
  std::string sweep = "all", grid = "4x1,4x3,16x1,16x3", ablate_dir;
  ablate->add_option("--sweep", sweep, "components | anchors | all")
      ->check(CLI::IsMember({"components", "anchors", "all"}))
      ->capture_default_str();
  ablate->add_option("--anchor-grid", grid, "Anchor settings as SIDExDEPTHS list")
      ->capture_default_str();
  ablate->add_option("--out-dir", ablate_dir, "Run directory");

  if (args.empty()) {
    err << app.help();
    return 2;
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands()[0]->help());
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs[0]->help());
    return 2;
  }

  try {
    if (synth->parsed()) {
      ResolvedSettings rs = synth_flags.resolve();
      if (synth_count_opt->count()) rs.apply("train_samples", std::to_string(synth_count), "flag");
      if (synth_seed_opt->count()) rs.apply("data_seed", std::to_string(synth_seed), "flag");
      const auto& d = rs.value.data;
      const Dataset ds = make_dataset(d.synth, d.train_samples, d.seed);
      write_dataset(ds, synth_out);
      const fs::path manifest = synth_out + ".manifest.txt";
      write_text(manifest, manifest_text(rs, command, {{"dataset", synth_out}}));
      out << "wrote " << ds.records.size() << " samples to " << synth_out << "\n";
      return 0;
    }

    if (anchors->parsed()) {
      const AnchorSet set =
          generate_anchor_grid(anchor_image, anchor_stride, parse_list(anchor_depths, "depths"));
      const std::string csv = anchors_csv(set);
      ResolvedSettings rs;
      rs.apply("image_size", std::to_string(anchor_image), "flag");
      std::map<std::string, std::string> outputs;
      if (anchor_out.empty()) {
        out << csv;
        outputs["anchors"] = "stdout";
      } else {
        write_text(anchor_out, csv);
        outputs["anchors"] = anchor_out;
      }
      write_text(run_dir(anchor_dir, "anchors") / "manifest.txt",
                 manifest_text(rs, command, outputs));
      return 0;
    }

    if (train->parsed()) {
      const ResolvedSettings rs = train_flags.resolve();
      const RunPaths paths{run_dir(train_dir, "train")};
      TrainHooks hooks;
      hooks.on_epoch = [&](std::size_t epoch, const MetricReport& m) {
        out << "epoch " << epoch + 1 << "/" << rs.value.train.epochs
            << "  mpjpe_all=" << (m.mpjpe_all ? fmt(*m.mpjpe_all) : "absent") << "\n";
        out.flush();
      };
      const TrainResult r = run_training(rs, paths, command, hooks);
      out << "before training\n" << metric_text(r.initial);
      if (!r.epochs.empty()) out << "after training\n" << metric_text(r.epochs.back());
      out << "outputs in " << paths.dir.string() << "\n";
      if (r.diverged) {
        err << "training diverged: " << r.message << " (last finite state saved)\n";
        return 3;
      }
      return 0;
    }

    if (eval->parsed() || infer->parsed()) {
      const bool is_eval = eval->parsed();
      const std::string& ckpt = is_eval ? eval_ckpt : infer_ckpt;
      const CheckpointHeader header = read_checkpoint_header(ckpt);
      const KnobFlags& flags = is_eval ? eval_flags : infer_flags;
      ResolvedSettings rs = flags.resolve(header.config_text, "checkpoint");
      // The checkpoint's width decides the precision it can be loaded in.
      rs.apply("precision", header.value_bytes == 8 ? "double" : "float", "checkpoint");
      const bool dbl = rs.value.precision == "double";
      const fs::path dir = run_dir(is_eval ? eval_dir : infer_dir, is_eval ? "eval" : "infer");
      if (is_eval) {
        const MetricReport m =
            dbl ? eval_typed<double>(rs, ckpt) : eval_typed<float>(rs, ckpt);
        const std::string text = metric_text(m);
        out << text;
        write_text(dir / "metrics.txt", text);
        write_text(dir / "manifest.txt",
                   manifest_text(rs, command,
                                 {{"checkpoint", ckpt}, {"metrics", (dir / "metrics.txt").string()}}));
      } else {
        const fs::path joints = dir / "joints.csv", weights = dir / "anchor_weights.csv";
        if (dbl)
          infer_typed<double>(rs, ckpt, infer_limit, joints, weights);
        else
          infer_typed<float>(rs, ckpt, infer_limit, joints, weights);
        write_text(dir / "manifest.txt",
                   manifest_text(rs, command,
                                 {{"checkpoint", ckpt},
                                  {"joints", joints.string()},
                                  {"anchor_weights", weights.string()}}));
        out << "wrote " << joints.string() << " and " << weights.string() << "\n";
      }
      return 0;
    }

    if (gradcheck->parsed()) {
      const ResolvedSettings rs = gc_flags.resolve();
      GradCheckSuiteOptions o;
      o.model = rs.value.train.model;
      o.tolerance = gc_tol;
      o.max_elements_per_param = gc_elements;
      o.seed = rs.value.train.seed;
      const auto checks = rs.value.precision == "double" ? run_gradcheck_suite<double>(o)
                                                         : run_gradcheck_suite<float>(o);
      const std::string table = gradcheck_table(checks);
      out << "precision " << rs.value.precision << "\n" << table;
      const fs::path dir = run_dir(gc_dir, "gradcheck");
      write_text(dir / "gradcheck.txt", table);
      write_text(dir / "manifest.txt",
                 manifest_text(rs, command, {{"table", (dir / "gradcheck.txt").string()}}));
      for (const auto& c : checks)
        if (!c.passed) return 1;
      return 0;
    }

    if (ablate->parsed()) {
      const ResolvedSettings rs = ablate_flags.resolve();
      std::vector<AblationVariant> variants;
      if (sweep != "anchors") variants = component_variants(rs.value.train.model);
      if (sweep != "components") {
        const auto more = anchor_variants(rs.value.train.model, parse_grid(grid));
        variants.insert(variants.end(), more.begin(), more.end());
      }
      const Dataset train_set = load_or_generate_train(rs.value);
      const Dataset eval_set = load_or_generate_eval(rs.value);
      const auto rows = run_ablation(rs.value.train, variants, train_set, eval_set,
                                     [&](const AblationRow& r) {
                                       out << r.name << "  mpjpe_all="
                                           << (r.final.mpjpe_all ? fmt(*r.final.mpjpe_all)
                                                                 : "absent")
                                           << (r.diverged ? "  (diverged)" : "") << "\n";
                                       out.flush();
                                     });
      const fs::path dir = run_dir(ablate_dir, "ablate");
      const std::string csv = ablation_csv(rows);
      write_text(dir / "ablation.csv", csv);
      write_text(dir / "manifest.txt",
                 manifest_text(rs, command, {{"table", (dir / "ablation.csv").string()}}));
      out << csv;
      return 0;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  err << app.help();
  return 2;
}

}  // namespace a2j
