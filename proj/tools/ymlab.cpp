#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "ymlab/cli.hpp"
#include "ymlab/parallel.hpp"

namespace {

nlohmann::json read_config(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  std::ifstream in(path);
  if (!in) throw ymlab::cli::ConfigError(path, "cannot open config file");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ymlab::cli::ConfigError(path, e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ymlab: numerical laboratory for Yang-Mills solitons and their stability"};
  app.require_subcommand(1);
  std::string config_path;
  std::string out_dir = ".";
  int workers = 0;
  std::uint64_t seed = 0;
  bool strict = false;
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "output directory for archives and report.json");
  app.add_option("--workers", workers, "worker threads (default YMLAB_WORKERS or 1)")->check(CLI::PositiveNumber);
  auto* seed_opt = app.add_option("--seed", seed, "override the RNG seed of the configuration");
  app.add_flag("--strict", strict, "treat warnings as failures");
  app.fallthrough();
  for (const auto& c : ymlab::cli::commands()) app.add_subcommand(c, "run " + c);

  CLI11_PARSE(app, argc, argv);
  if (workers > 0) ymlab::set_worker_count(workers);

  const std::string command = app.get_subcommands().front()->get_name();
  ymlab::cli::RunOptions opt;
  opt.out_dir = out_dir;
  opt.strict = strict;
  if (*seed_opt) opt.seed = seed;
  nlohmann::json cfg;
  try {
    cfg = read_config(config_path);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return ymlab::cli::config_error;
  }
  const auto res = ymlab::cli::execute(command, cfg, opt);
  if (!res.text.empty()) std::cerr << res.text;
  if (res.report.contains("error")) std::cerr << "error: " << res.report["error"]["message"].get<std::string>() << '\n';
  std::cout << res.report.dump(2) << '\n';
  return res.exit_code;
}
