#include "sympop/config.hpp"
#include "sympop/pipeline.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

int main(int argc, char** argv) {
  CLI::App app{"Population games: mean dynamics, finite chains, and symmetric-game transforms"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::string out_dir;
  std::vector<std::uint64_t> seed_override;
  std::string factor;
  std::string orientation;
  std::string fstar;

  const std::map<std::string, std::string> help{
      {"validate", "check symmetry and full support of the rates"},
      {"mean-dynamic", "integrate the mean dynamic from x0"},
      {"simulate", "sample finite-population paths, one per seed"},
      {"exact-stationary", "solve for the stationary distribution of the chain"},
      {"transform", "decompose into 2-strategy derived populations"},
      {"predict", "product-form prediction from birth-death marginals"},
      {"compare", "distance between predicted and exact distributions"},
      {"experiment", "run every stage and write report.txt"},
  };
  for (const auto& name : sympop::commands()) {
    auto* sub = app.add_subcommand(name, help.at(name));
    sub->add_option("--config", config_path, "config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory (default: [output] directory)");
    sub->add_option("--seed-override", seed_override, "comma-separated seeds replacing [run] seeds")
        ->delimiter(',');
    sub->add_option("--variant-factor", factor)->check(CLI::IsMember({"paper", "standard"}));
    sub->add_option("--variant-orientation", orientation)->check(CLI::IsMember({"paper", "standard"}));
    sub->add_option("--fstar", fstar)->check(CLI::IsMember({"zero", "weighted"}));
  }
  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();

  std::ifstream in(config_path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();

  sympop::ExperimentConfig cfg;
  try {
    cfg = sympop::parse_config(buf.str());
  } catch (const sympop::Error& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
  if (!seed_override.empty()) cfg.run.seeds = seed_override;
  if (!factor.empty()) {
    cfg.run.factor = factor == "paper" ? sympop::FactorVariant::paper : sympop::FactorVariant::standard;
  }
  if (!orientation.empty()) {
    cfg.run.orientation =
        orientation == "paper" ? sympop::OrientationVariant::paper : sympop::OrientationVariant::standard;
  }
  if (!fstar.empty()) cfg.run.fstar = fstar == "weighted" ? sympop::FStarVariant::weighted : sympop::FStarVariant::zero;

  return sympop::run_command(command, cfg, out_dir.empty() ? cfg.output.directory : out_dir);
}
