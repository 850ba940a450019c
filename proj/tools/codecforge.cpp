// Command-line front end: scene generation, training, evaluation, static
// analysis, graph export and ablation sweeps.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "codecforge/ablation.hpp"
#include "codecforge/analysis.hpp"
#include "codecforge/errors.hpp"
#include "codecforge/io.hpp"
#include "codecforge/scene.hpp"
#include "codecforge/trainer.hpp"

using namespace codecforge;
namespace fs = std::filesystem;

namespace {

struct GraphArgs {
  std::string topology = "unext";
  int levels = 4;
  std::string block = "shared_mlp";
  std::string dims = "default";
  std::size_t width_mult = 1;
  std::string supervision = "multi_level";
  std::size_t k = kDefaultNeighbors;

  void add_to(CLI::App* app) {
    app->add_option("--topology", topology, "unet, unetplus, unetplusplus, unetplusd, unext, unextdense")
        ->capture_default_str();
    app->add_option("--levels", levels, "grid depth L")->capture_default_str();
    app->add_option("--block", block, "shared_mlp or local_agg")->capture_default_str();
    app->add_option("--dims", dims, "default or wide")->capture_default_str();
    app->add_option("--width-mult", width_mult)->capture_default_str();
    app->add_option("--supervision", supervision, "none, full_resolution, lateral, multi_level")
        ->capture_default_str();
    app->add_option("--k", k, "neighbours per point (local_agg)")->capture_default_str();
  }

  GraphSpec build() const {
    TrainConfig c;
    c.topology = parse_topology(topology);
    c.levels = levels;
    c.block = parse_block_kind(block);
    c.dims = dims;
    c.width_mult = width_mult;
    c.supervision = parse_supervision_mode(supervision);
    c.k = k;
    if (dims != "default" && dims != "wide") throw ConfigError("--dims must be default or wide");
    return c.graph();
  }
};

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  out << text;
}

std::vector<PointCloud> load_all(const std::vector<std::string>& paths) {
  std::vector<std::string> files;
  for (const std::string& p : paths) {
    if (fs::is_directory(p)) {
      std::vector<std::string> found;
      for (const auto& e : fs::directory_iterator(p)) {
        const auto ext = e.path().extension();
        if (ext == ".pcseg" || ext == ".pcsb") found.push_back(e.path().string());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.push_back(p);
    }
  }
  if (files.empty()) throw InputError("no point-cloud files given");
  std::vector<PointCloud> out;
  for (const std::string& f : files) out.push_back(load_cloud(f));
  return out;
}

// ---- generate ------------------------------------------------------------------

struct GenerateArgs {
  std::string out_dir = "scenes";
  std::size_t count = 1;
  std::uint64_t seed = 1;
  std::size_t points = 4096;
  double density = 0.0;
  double small_fraction = SceneSpec{}.small_object_fraction;
  double noise = SceneSpec{}.noise_sigma;
  std::size_t min_class_points = kDefaultNeighbors;
  std::string format = "pcseg";
};

int run_generate(const GenerateArgs& a) {
  if (a.format != "pcseg" && a.format != "pcsb") throw ConfigError("--format must be pcseg or pcsb");
  SceneSpec spec;
  spec.points = a.density > 0.0 ? 0 : a.points;
  if (a.density > 0.0) spec.density = a.density;
  spec.small_object_fraction = a.small_fraction;
  spec.noise_sigma = a.noise;
  spec.min_class_points = a.min_class_points;
  fs::create_directories(a.out_dir);
  for (std::size_t i = 0; i < a.count; ++i) {
    const PointCloud cloud = generate_scene(spec, mix_seed(a.seed, i));
    char name[64];
    std::snprintf(name, sizeof name, "scene_%03zu.%s", i, a.format.c_str());
    const fs::path path = fs::path(a.out_dir) / name;
    save_cloud(path, cloud);
    std::cout << path.string() << " " << cloud.size() << " points\n";
  }
  return 0;
}

// ---- train ---------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::vector<std::string> data;
  std::string output;
  std::size_t epochs = 0;
  bool resume = false;
};

int run_train(const TrainArgs& a) {
  TrainConfig cfg = load_config(a.config);
  if (!a.data.empty()) cfg.data = a.data;
  if (!a.output.empty()) cfg.output = a.output;
  if (a.epochs > 0) cfg.epochs = a.epochs;
  if (cfg.data.empty()) throw ConfigError("no training data: set data in the config or pass --data");
  if (cfg.output.empty()) throw ConfigError("no output directory: set output in the config or pass --output");
  fs::create_directories(cfg.output);
  write_text((fs::path(cfg.output) / "config.cfg").string(), to_text(cfg));

  Trainer trainer(cfg, load_all(cfg.data));
  const fs::path log_path = fs::path(cfg.output) / "train.jsonl";
  std::ofstream log(log_path, a.resume ? std::ios::app : std::ios::trunc);
  if (!log) throw InputError("cannot write " + log_path.string());
  const std::vector<EpochSummary> epochs = train(trainer, &log, a.resume);
  for (const EpochSummary& e : epochs) {
    std::printf("epoch %llu  l_h %.6f  l_ds %.6f  l_oa %.6f  train_oa %.4f\n",
                static_cast<unsigned long long>(e.epoch), e.l_h, e.l_ds, e.l_oa, e.train_oa);
  }
  std::printf("checkpoint %s\n", (fs::path(cfg.output) / "checkpoint.bin").string().c_str());
  return 0;
}

// ---- eval ----------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::vector<std::string> data;
  std::size_t points = 0;
  std::uint64_t seed = 0;
  std::string json_out;
  std::string csv_out;
};

int run_eval(const EvalArgs& a) {
  TrainConfig cfg;
  const auto model = model_from_checkpoint(load_checkpoint(a.checkpoint), &cfg);
  const std::vector<PointCloud> data = load_all(a.data);
  const MetricsReport r = evaluate(*model, cfg, data, EvalOptions{a.seed, a.points});
  std::vector<std::string> names;
  if (cfg.num_classes == kSceneClasses) names.assign(scene_class_names().begin(), scene_class_names().end());
  std::printf("points %llu\noa %.6f\nmiou %.6f\nmacc %.6f\n", static_cast<unsigned long long>(r.points), r.oa,
              r.miou, r.macc);
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const std::string name = c < names.size() ? names[c] : "class_" + std::to_string(c);
    if (r.per_class[c].defined) {
      std::printf("iou %-14s %.6f\n", name.c_str(), r.per_class[c].iou);
    } else {
      std::printf("iou %-14s undefined\n", name.c_str());
    }
  }
  if (!a.json_out.empty()) write_text(a.json_out, to_json(r, names).dump(2) + "\n");
  if (!a.csv_out.empty()) write_text(a.csv_out, to_csv(r));
  return 0;
}

// ---- analyze -------------------------------------------------------------------

int run_analyze(const GraphArgs& g, std::size_t points, std::size_t classes, std::size_t input_dim,
                const std::string& format) {
  const AnalysisReport r = analyze(g.build(), points, input_dim, classes);
  if (format == "json") {
    std::cout << to_json(r).dump(2) << "\n";
    return 0;
  }
  if (format == "csv") {
    std::cout << to_csv(r);
    return 0;
  }
  if (format != "text") throw ConfigError("--format must be text, json or csv");
  std::printf("topology %s  levels %d  block %s  points %zu  classes %zu\n", to_string(r.kind).c_str(), r.levels,
              to_string(r.block).c_str(), r.input_points, r.num_classes);
  std::printf("%-12s %8s %12s %14s\n", "node", "points", "params", "macs");
  for (const NodeCost& c : r.nodes) {
    std::printf("%-12s %8zu %12zu %14zu\n", to_string(c.id).c_str(), c.points, c.params, c.macs);
  }
  for (const ComponentCost& c : r.components) {
    std::printf("%-12s %8s %12zu %14zu\n", c.name.c_str(), "", c.params, c.macs);
  }
  std::printf("total params %zu\ntotal macs %zu\n", r.total_params, r.total_macs);
  for (std::size_t i = 0; i < r.row_fractions.size(); ++i) {
    const bool last = i + 1 == r.row_fractions.size();
    std::printf("%s share %.4f\n", last ? "other" : ("row " + std::to_string(i)).c_str(), r.row_fractions[i]);
  }
  std::printf("deepest sub-network share %.4f\nbackbone share %.4f\nextra node share %.4f\n",
              r.deepest_subnetwork_share, r.backbone_share, r.extra_node_share);
  return 0;
}

// ---- export-graph --------------------------------------------------------------

int run_export(const GraphArgs& g, const std::string& format, const std::string& out) {
  const GraphSpec spec = g.build();
  if (format == "dot") {
    write_text(out, to_dot(spec));
  } else if (format == "json") {
    write_text(out, to_json(spec).dump(2) + "\n");
  } else {
    throw ConfigError("--format must be dot or json");
  }
  return 0;
}

// ---- ablate --------------------------------------------------------------------

struct AblateArgs {
  std::string config;
  std::vector<std::string> arms;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::size_t train_scenes = 8;
  std::size_t test_scenes = 4;
  double test_small_fraction = 0.3;
  std::uint64_t data_seed = 1000;
  std::string out = "ablation.csv";
};

int run_ablate(const AblateArgs& a) {
  AblationOptions opts;
  if (!a.config.empty()) opts.base = load_config(a.config);
  const std::vector<AblationArm> all = default_arms();
  if (a.arms.empty()) {
    opts.arms = all;
  } else {
    for (const std::string& name : a.arms) {
      const auto it = std::find_if(all.begin(), all.end(), [&](const AblationArm& x) { return x.name == name; });
      if (it == all.end()) throw ConfigError("unknown arm '" + name + "'");
      opts.arms.push_back(*it);
    }
  }
  opts.seeds = a.seeds;
  opts.train_scenes = a.train_scenes;
  opts.test_scenes = a.test_scenes;
  opts.data_seed = a.data_seed;
  opts.train_spec.points = opts.base.points;
  opts.test_spec.points = opts.base.points;
  opts.test_spec.small_object_fraction = a.test_small_fraction;
  const std::vector<AblationRow> rows = run_ablation(opts, [](const AblationRow& r) {
    std::fprintf(stderr, "%s seed %llu: oa %.4f miou %.4f\n", r.arm.c_str(), static_cast<unsigned long long>(r.seed),
                 r.oa, r.miou);
  });
  const std::string csv = ablation_csv(rows);
  write_text(a.out, csv);
  if (a.out != "-") std::cout << csv;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"codecforge: nested U-shaped point-cloud segmentation toolkit"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "write synthetic labeled scenes");
  generate->add_option("--out", gen.out_dir, "output directory")->capture_default_str();
  generate->add_option("--count", gen.count)->capture_default_str();
  generate->add_option("--seed", gen.seed)->capture_default_str();
  generate->add_option("--points", gen.points, "points per scene")->capture_default_str();
  generate->add_option("--density", gen.density, "points per m² (overrides --points)");
  generate->add_option("--small-fraction", gen.small_fraction, "share of thin_board + column points")
      ->capture_default_str();
  generate->add_option("--noise", gen.noise, "coordinate jitter sigma (m)")->capture_default_str();
  generate->add_option("--min-class-points", gen.min_class_points)->capture_default_str();
  generate->add_option("--format", gen.format, "pcseg or pcsb")->capture_default_str();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train a model from a config file");
  train_cmd->add_option("--config", tr.config, "key=value config file")->required();
  train_cmd->add_option("--data", tr.data, "files or directories (overrides the config)");
  train_cmd->add_option("--output", tr.output, "run directory (overrides the config)");
  train_cmd->add_option("--epochs", tr.epochs, "total epochs (overrides the config)");
  train_cmd->add_flag("--resume", tr.resume, "continue from <output>/checkpoint.bin");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", ev.checkpoint)->required();
  eval_cmd->add_option("--data", ev.data, "files or directories")->required();
  eval_cmd->add_option("--points", ev.points, "points sampled per cloud (0 = all)")->capture_default_str();
  eval_cmd->add_option("--seed", ev.seed, "hierarchy seed")->capture_default_str();
  eval_cmd->add_option("--json", ev.json_out, "write the metrics as JSON");
  eval_cmd->add_option("--csv", ev.csv_out, "write class_id,iou,defined CSV");

  GraphArgs analyze_graph;
  std::size_t analyze_points = 4096, analyze_classes = kSceneClasses, analyze_input = 6;
  std::string analyze_format = "text";
  auto* analyze_cmd = app.add_subcommand("analyze", "parameter and MAC breakdown of a topology");
  analyze_graph.add_to(analyze_cmd);
  analyze_cmd->add_option("--points", analyze_points, "input points")->capture_default_str();
  analyze_cmd->add_option("--classes", analyze_classes)->capture_default_str();
  analyze_cmd->add_option("--input-dim", analyze_input, "3 or 6")->capture_default_str();
  analyze_cmd->add_option("--format", analyze_format, "text, json or csv")->capture_default_str();

  GraphArgs export_graph;
  export_graph.levels = 2;
  std::string export_format = "dot", export_out;
  auto* export_cmd = app.add_subcommand("export-graph", "write a topology as DOT or JSON");
  export_graph.add_to(export_cmd);
  export_cmd->add_option("--format", export_format, "dot or json")->capture_default_str();
  export_cmd->add_option("--out", export_out, "output file (default stdout)");

  AblateArgs ab;
  auto* ablate_cmd = app.add_subcommand("ablate", "topology and supervision sweep over fixed seeds");
  ablate_cmd->add_option("--config", ab.config, "base config (topology and supervision are swept)");
  ablate_cmd->add_option("--arms", ab.arms, "unet unetplus unetplusplus unetplusd unext unext_nods");
  ablate_cmd->add_option("--seeds", ab.seeds)->capture_default_str();
  ablate_cmd->add_option("--train-scenes", ab.train_scenes)->capture_default_str();
  ablate_cmd->add_option("--test-scenes", ab.test_scenes)->capture_default_str();
  ablate_cmd->add_option("--test-small-fraction", ab.test_small_fraction)->capture_default_str();
  ablate_cmd->add_option("--data-seed", ab.data_seed)->capture_default_str();
  ablate_cmd->add_option("--out", ab.out, "CSV path or - for stdout")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*generate) return run_generate(gen);
    if (*train_cmd) return run_train(tr);
    if (*eval_cmd) return run_eval(ev);
    if (*analyze_cmd) {
      return run_analyze(analyze_graph, analyze_points, analyze_classes, analyze_input, analyze_format);
    }
    if (*export_cmd) return run_export(export_graph, export_format, export_out);
    if (*ablate_cmd) return run_ablate(ab);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
