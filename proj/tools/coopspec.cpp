// coopspec: simulate and fit coupled-emitter spectroscopy from a JSON run configuration.

#include "coop/config.hpp"
#include "coop/csv.hpp"
#include "coop/errors.hpp"
#include "coop/tasks.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

enum ExitCode { kOk = 0, kIo = 1, kConfig = 2, kNumerical = 3, kFit = 4 };

void report(const coop::TaskOutcome& outcome, const std::filesystem::path& dir) {
    for (const auto& w : outcome.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << "wrote " << outcome.files.size() << " files to " << dir.string() << "\n";
}

int run_one(coop::RunConfig cfg, const std::filesystem::path& out_dir, unsigned threads) {
    const auto outcome = coop::run_task(cfg, out_dir, threads);
    report(outcome, out_dir);
    return outcome.fit_converged ? kOk : kFit;
}

template <class Fn>
int guarded(const std::string& context, Fn&& fn) {
    try {
        return fn();
    } catch (const coop::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const coop::FitError& e) {
        std::cerr << context << ": fit failed: " << e.what() << "\n";
        return kFit;
    } catch (const coop::IoError& e) {
        std::cerr << context << ": " << e.what() << "\n";
        return kIo;
    } catch (const coop::Error& e) {
        std::cerr << context << ": numerical failure: " << e.what() << "\n";
        return kNumerical;
    } catch (const std::exception& e) {
        std::cerr << context << ": " << e.what() << "\n";
        return kIo;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Coupled quantum-emitter spectroscopy simulator"};
    app.require_subcommand(1);
    app.set_version_flag("--version", coop::kVersion);

    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    std::string preset;

    const std::vector<std::string> tasks{"spectrum", "g2", "lifetime", "extinction", "saturate", "fit", "baseline-prob"};
    std::vector<CLI::App*> task_cmds;
    for (const auto& name : tasks) {
        auto* sub = app.add_subcommand(name, "run the " + name + " task");
        sub->add_option("--config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "output directory (overrides output.dir)");
        sub->add_option("--seed", seed, "random seed (overrides the config seed)");
        sub->add_option("--threads", threads, "worker threads")->check(CLI::Range(1u, 1024u));
        task_cmds.push_back(sub);
    }
    auto* reproduce = app.add_subcommand("reproduce", "run a bundled reproduction preset");
    reproduce->add_option("preset", preset, "preset name")->required()->check(CLI::IsMember(coop::kPresetNames));
    reproduce->add_option("--out", out_dir, "output directory (default out)");
    reproduce->add_option("--threads", threads, "worker threads")->check(CLI::Range(1u, 1024u));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    if (reproduce->parsed()) {
        return guarded("reproduce " + preset, [&] {
            const std::filesystem::path root = std::filesystem::path(out_dir.empty() ? "out" : out_dir) / preset;
            int status = kOk;
            for (const auto& [name, doc] : coop::preset_configs(preset)) {
                const auto dir = root / name;
                status = std::max(status, run_one(coop::parse_config(doc), dir, threads));
            }
            return status;
        });
    }

    for (std::size_t k = 0; k < tasks.size(); ++k) {
        if (!task_cmds[k]->parsed()) continue;
        const std::string& name = tasks[k];
        return guarded(name, [&] {
            const std::filesystem::path path(config_path);
            std::string text;
            try {
                text = coop::read_text(path);
            } catch (const coop::IoError& e) {
                throw coop::ConfigError("--config", e.what());
            }
            coop::RunConfig cfg = coop::parse_config(text, path.parent_path());
            if (cfg.kind != coop::parse_task_kind(name))
                throw coop::ConfigError("task.type", "config describes a '" + coop::to_string(cfg.kind) +
                                                         "' task but the subcommand is '" + name + "'");
            if (task_cmds[k]->count("--seed")) {
                cfg.seed = seed;
                cfg.echo["seed"] = seed;
            }
            const std::filesystem::path dir = out_dir.empty() ? cfg.output_dir : out_dir;
            return run_one(std::move(cfg), dir, threads);
        });
    }
    return kConfig;
}
