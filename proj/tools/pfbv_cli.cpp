#include <CLI11.hpp>
#include <iostream>

#include "pfbv/config.hpp"
#include "pfbv/errors.hpp"

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

void apply_sets(pfbv::RunConfig& cfg, const std::vector<std::string>& sets) {
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw pfbv::ConfigError("--set expects key=value, got '" + s + "'");
    pfbv::apply_override(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  cfg.validate();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rate-independent phase-field damage solver (alternate minimization + adaptive local minimization)"};
  app.set_version_flag("--version", pfbv::kVersion);
  app.require_subcommand(1);

  std::string config_path, out_dir, param, verify_dir;
  std::vector<std::string> sets;

  auto* run = app.add_subcommand("run", "Run one experiment from a config file");
  run->add_option("config", config_path, "INI config file")->required()->check(CLI::ExistingFile);
  run->add_option("-o,--output", out_dir, "Output directory (overrides output.directory)");
  run->add_option("-s,--set", sets, "Override section.key=value (repeatable)");

  auto* sw = app.add_subcommand("sweep", "Run one experiment per parameter value");
  sw->add_option("config", config_path, "INI config file")->required()->check(CLI::ExistingFile);
  sw->add_option("--param", param, "key=v1,v2,... (bare keys refer to [scheme])")->required();
  sw->add_option("-o,--output", out_dir, "Parent output directory");
  sw->add_option("-s,--set", sets, "Override section.key=value (repeatable)");

  auto* ver = app.add_subcommand("verify", "Re-check diagnostics on a stored run directory");
  ver->add_option("dir", verify_dir, "Run directory")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ver) return pfbv::verify(verify_dir, std::cout);
    pfbv::RunConfig cfg = pfbv::load_config(config_path);
    if (!out_dir.empty()) sets.push_back("output.directory=" + out_dir);
    apply_sets(cfg, sets);
    if (*run) return pfbv::execute(cfg, std::cout);
    const auto eq = param.find('=');
    if (eq == std::string::npos) throw pfbv::ConfigError("--param expects key=v1,v2,...");
    return pfbv::sweep(cfg, param.substr(0, eq), split(param.substr(eq + 1), ','), std::cout);
  } catch (const pfbv::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
