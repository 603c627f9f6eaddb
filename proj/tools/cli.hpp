#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

namespace spillover::cli {

inline constexpr int kSchemaVersion = 1;

inline constexpr int kExitOk = 0;
inline constexpr int kExitMismatch = 1;  // rerun --verify found different results
inline constexpr int kExitValidation = 2;
inline constexpr int kExitDegenerate = 3;

struct CommandResult {
    nlohmann::json report;
    int exit_code = kExitOk;
    std::vector<std::string> histogram_csv;  // lines, test-contrast only
    std::string study_csv;                   // simulate only
    std::string labels_csv;                  // partition only
};

// Defaults for every key a command reads; reports embed the merged result.
nlohmann::json default_config(const std::string& command);

// Runs a command from a complete configuration. Throws std::invalid_argument (and ingest errors)
// on invalid input.
CommandResult run_command(const std::string& command, const nlohmann::json& config);

// The p-value bearing part of a report ("results"), used to compare reruns.
const nlohmann::json& report_results(const nlohmann::json& report);

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace spillover::cli
