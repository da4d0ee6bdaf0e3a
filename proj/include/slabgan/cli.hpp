#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "slabgan/config.hpp"

namespace slabgan::cli {

namespace fs = std::filesystem;

/// Exit codes shared by every subcommand.
enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kDivergence = 3 };

/// The layers a run configuration is assembled from, lowest precedence first:
/// built-in defaults, the config file, the run-root environment variable,
/// `--set key=value` overrides, then the dedicated flags (`--epochs`, ...).
struct ConfigSources {
    std::optional<fs::path> file;
    std::optional<std::string> env_run_root;
    std::vector<std::string> sets;
    std::vector<std::string> flags;  // key=value pairs produced by dedicated flags
};

RunConfig assemble_config(const ConfigSources& sources);

/// Reads the run-root override from the environment.
std::optional<std::string> run_root_from_env();

/// Runs one subcommand. argv[0] is the program name. Never throws; errors map
/// to ExitCode values with a message on `err`.
int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

}  // namespace slabgan::cli
