#include <iostream>

#include <CLI11.hpp>

#include "facet/cli/commands.hpp"

using namespace facet;

namespace {

constexpr int kRuntimeFailure = 1;
constexpr int kConfigFailure = 2;

void common_flags(CLI::App* sub, cli::Options& o) {
  sub->add_option("--config", o.config, "run configuration (TOML)");
  sub->add_option("--seed", o.seed, "replace every seed in the configuration");
  sub->add_option("--out", o.out, "output directory");
  sub->add_option("--direction", o.direction, "translation direction")->check(CLI::IsMember({"xy", "yx"}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unsupervised discovery of differences between two keypoint-sequence domains."};
  app.require_subcommand(1);
  cli::Options o;

  const std::vector<std::pair<const char*, const char*>> commands = {
      {"synth", "write a synthetic benchmark with planted translators"},
      {"prep", "index clips, split train/test and fit normalization"},
      {"train-bvae", "train the beta-VAE and cache clip latents"},
      {"train-translate", "train a translation model (or the whole ablation grid)"},
      {"analyze", "write the discovery report"},
      {"translate-clip", "translate one keypoint file into the other domain"},
      {"aggregate", "mean and 95% CI of discriminator accuracy over runs"},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    common_flags(sub, o);
    subs[name] = sub;
  }
  subs["train-translate"]->add_flag("--grid", o.grid, "run every mode x partition x c combination");
  subs["translate-clip"]->add_option("--input", o.input, "keypoint file to translate")->required();
  subs["translate-clip"]->add_option("--output", o.output, "where to write the translated track")->required();
  subs["aggregate"]->add_option("runs", o.runs, "run directories")->required();
  for (const char* name : {"synth", "prep", "train-bvae", "train-translate", "analyze", "translate-clip"})
    subs[name]->get_option("--config")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigFailure;
  }

  try {
    const config::RunConfig cfg = cli::resolve_config(o);
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "synth") cli::cmd_synth(cfg);
    else if (cmd == "prep") cli::cmd_prep(cfg);
    else if (cmd == "train-bvae") cli::cmd_train_bvae(cfg);
    else if (cmd == "train-translate") cli::cmd_train_translate(cfg, o.grid, o.direction.has_value());
    else if (cmd == "analyze") cli::cmd_analyze(cfg);
    else if (cmd == "translate-clip") cli::cmd_translate_clip(cfg, o.input, o.output);
    else if (cmd == "aggregate") cli::cmd_aggregate(cfg, o.runs);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
  return 0;
}
