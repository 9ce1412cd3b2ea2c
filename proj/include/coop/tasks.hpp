#pragma once

#include "coop/config.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace coop {

inline constexpr const char* kVersion = "0.1.0";

struct TaskOutcome {
    std::vector<std::filesystem::path> files;  // data files, then the manifest
    nlohmann::json summary;
    std::vector<std::string> warnings;
    bool fit_converged{true};
};

// Runs the configured task, writing its CSV/JSON outputs and manifest.json into out_dir.
TaskOutcome run_task(const RunConfig& config, const std::filesystem::path& out_dir, unsigned threads = 1);

inline const std::vector<std::string> kPresetNames{"fig2b", "fig2c", "fig2d", "fig3h", "fig3j"};

// Bundled reproduction scenarios: (sub-directory, configuration) pairs.
std::vector<std::pair<std::string, nlohmann::json>> preset_configs(const std::string& name);

}  // namespace coop
