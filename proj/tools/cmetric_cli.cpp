#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cmetric/pipeline.hpp"

namespace {

struct Options {
  std::string config;
  std::string out;
  std::string recovery;
  std::string mode;
  int threads = -1;
};

int execute(const std::string& command, const Options& opt) {
  using namespace cmetric;
  PipelineConfig cfg = load_config(opt.config);
  if (opt.threads >= 0) cfg.threads = opt.threads;
  if (opt.mode == "strict") cfg.mode = Mode::Strict;
  if (opt.mode == "relaxed") cfg.mode = Mode::Relaxed;
  const fs::path out = opt.out.empty() ? cfg.out_dir : fs::path(opt.out);
  if (command == "solve") return run_solve(cfg, out);
  if (command == "verify") {
    std::optional<fs::path> rec;
    if (!opt.recovery.empty()) rec = opt.recovery;
    return run_verify(cfg, out, rec);
  }
  return run_pipeline(cfg, out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contraction metrics by RBF collocation with CPA verification"};
  app.require_subcommand(1);
  Options opt;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "TOML configuration file")->required();
    sub->add_option("--out", opt.out, "output directory (default: output.dir of the config)");
    sub->add_option("--threads", opt.threads, "worker threads, 0 = all cores")
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--mode", opt.mode, "strict or relaxed (default: pipeline.mode)")
        ->check(CLI::IsMember({"strict", "relaxed"}));
  };
  CLI::App* solve = app.add_subcommand("solve", "collocation and RBF recovery only");
  CLI::App* verify = app.add_subcommand("verify", "verify a stored recovery on a triangulation");
  CLI::App* run = app.add_subcommand("run", "full pipeline");
  for (auto* sub : {solve, verify, run}) add_common(sub);
  verify->add_option("--recovery", opt.recovery,
                     "recovery file (default: verification.recovery or <out>/recovery.json)");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cmetric::kExitConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const int code = execute(command, opt);
    if (code != 0) std::cerr << "cmetric " << command << ": exit code " << code << "\n";
    return code;
  } catch (const cmetric::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return cmetric::kExitNumerical;
  } catch (const cmetric::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cmetric::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cmetric::kExitConfig;
  }
}
