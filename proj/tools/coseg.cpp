// coseg: command-line driver for the cosegmentation pipeline.
//
//   coseg <stage> [--config FILE] [--<key> VALUE ...]
//   coseg pipeline [--config FILE] [--resume] [--<key> VALUE ...]
//   coseg synth --out DIR [--classes N] [--images N] [--seed S]

#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "coseg/pipeline.hpp"
#include "coseg/synthetic.hpp"

namespace {

struct StageOptions {
  std::string config_file;
  std::map<std::string, std::string> overrides;
  bool resume = false;
};

void add_config_options(CLI::App* cmd, StageOptions& opts) {
  cmd->add_option("--config", opts.config_file, "key = value config file")->check(CLI::ExistingFile);
  for (const auto& key : coseg::config_keys()) {
    const std::string name = key.name;
    cmd->add_option_function<std::string>(
        "--" + name, [&opts, name](const std::string& v) { opts.overrides[name] = v; },
        std::string(key.help) + " (default: " + key.default_value + ")");
  }
}

coseg::Config build_config(const StageOptions& opts) {
  coseg::Config cfg;
  if (!opts.config_file.empty()) cfg.load_file(opts.config_file);
  for (const auto& [k, v] : opts.overrides) cfg.set(k, v);
  cfg.apply_environment();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Siamese-embedding cosegmentation toolkit"};
  app.require_subcommand(1);

  StageOptions opts;
  std::map<std::string, CLI::App*> stages;
  const std::map<std::string, std::string> descriptions = {
      {"ingest", "filter proposals and extract patch descriptors"},
      {"train", "train the Siamese encoder"},
      {"embed", "embed test descriptors"},
      {"index", "build the random-projection-tree index"},
      {"retrieve", "retrieve similar proposals per anchor"},
      {"evaluate", "score segmentations against ground truth"},
      {"collage", "compose per-class collages"},
      {"pipeline", "run every stage in order"},
  };
  for (const auto& name : coseg::Pipeline::stage_names()) {
    auto* cmd = app.add_subcommand(name, descriptions.at(name));
    add_config_options(cmd, opts);
    stages[name] = cmd;
  }
  auto* pipeline_cmd = app.add_subcommand("pipeline", descriptions.at("pipeline"));
  add_config_options(pipeline_cmd, opts);
  pipeline_cmd->add_flag("--resume", opts.resume, "skip stages whose outputs already exist");

  coseg::SyntheticOptions synth;
  std::string synth_dir;
  auto* synth_cmd = app.add_subcommand("synth", "write a small synthetic dataset (images, masks, manifest, proposals)");
  synth_cmd->add_option("--out", synth_dir, "output directory")->required();
  synth_cmd->add_option("--classes", synth.classes, "number of classes")->check(CLI::Range(2, 64));
  synth_cmd->add_option("--images", synth.images_per_class, "images per class")->check(CLI::Range(2, 10000));
  synth_cmd->add_option("--seed", synth.seed, "generator seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth_cmd->parsed()) {
      const auto paths = coseg::make_synthetic_dataset(synth_dir, synth);
      std::cout << "manifest:  " << paths.manifest.string() << "\nproposals: " << paths.proposals.string() << '\n';
      return 0;
    }
    coseg::Pipeline pipeline(build_config(opts), std::cerr);
    if (pipeline_cmd->parsed()) {
      pipeline.run(opts.resume);
      return 0;
    }
    for (const auto& [name, cmd] : stages) {
      if (!cmd->parsed()) continue;
      coseg::fs::create_directories(pipeline.path(""));
      if (name == "ingest") pipeline.run_stage(name, false, {}, [&] { pipeline.ingest(); });
      else if (name == "train") pipeline.run_stage(name, false, {}, [&] { pipeline.train(); });
      else if (name == "embed") pipeline.run_stage(name, false, {}, [&] { pipeline.embed(); });
      else if (name == "index") pipeline.run_stage(name, false, {}, [&] { pipeline.index(); });
      else if (name == "retrieve") pipeline.run_stage(name, false, {}, [&] { pipeline.retrieve(); });
      else if (name == "evaluate") pipeline.run_stage(name, false, {}, [&] { pipeline.evaluate(); });
      else if (name == "collage") pipeline.run_stage(name, false, {}, [&] { pipeline.collage(); });
    }
  } catch (const coseg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const coseg::ParseError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
