#include <CLI11.hpp>

#include "lofno/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"LoFNO: localized Fourier neural operator pipeline for vascular flow fields"};
  app.require_subcommand(1);

  lofno::CliArgs args;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", args.config_path, "config file (TOML)")->required();
    sub->add_option("--model", args.model, "model kind override");
    sub->add_option("--task", args.task, "task id override");
    sub->add_option("--seed", args.seed, "seed override");
    sub->add_flag("--force", args.force, "overwrite existing outputs");
  };
  add_common(app.add_subcommand("gen", "generate a synthetic dataset"));
  add_common(app.add_subcommand("train", "train a model"));
  add_common(app.add_subcommand("eval", "evaluate models on the test split"));
  add_common(app.add_subcommand("render", "render slice images for one sample"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  args.command = app.get_subcommands().front()->get_name();
  return lofno::run_cli(args, std::cout, std::cerr);
}
