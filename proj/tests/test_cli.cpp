#include "coop/csv.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("coopspec_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    fs::path write_config(const std::string& name, const json& doc) {
        const auto p = dir_ / name;
        std::ofstream(p) << doc.dump(2);
        return p;
    }

    // Runs the tool and returns its exit status; stderr is kept in err_.
    int run(const std::string& args) {
        const auto err_file = dir_ / "stderr.txt";
        const std::string cmd = std::string(COOPSPEC_PATH) + " " + args + " > " + (dir_ / "stdout.txt").string() +
                                " 2> " + err_file.string();
        const int status = std::system(cmd.c_str());
        err_ = coop::read_text(err_file);
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    coop::CsvTable csv(const fs::path& p) { return coop::parse_csv(coop::read_text(p)); }

    fs::path dir_;
    std::string err_;
};

json h_pair() {
    return json::parse(R"({"gamma0_mhz": 33, "alpha": 0.11, "dephasing_mhz": 1,
                           "pair": {"detuning_mhz": 2600, "J_mhz": 1020}})");
}

}  // namespace

TEST_F(Cli, SpectrumWritesMonotoneCsvAndManifest) {
    const auto cfg = write_config("s.json", {{"model", h_pair()},
                                             {"task",
                                              {{"type", "spectrum"},
                                               {"saturation", 0.1},
                                               {"scan", {{"start_mhz", -2400}, {"stop_mhz", 2400}, {"points", 97}}}}}});
    ASSERT_EQ(run("spectrum --config " + cfg.string() + " --out " + (dir_ / "out").string()), 0) << err_;
    const auto t = csv(dir_ / "out" / "spectrum.csv");
    EXPECT_EQ(t.header, (std::vector<std::string>{"freq_mhz", "signal"}));
    ASSERT_EQ(t.rows.size(), 97u);
    for (std::size_t k = 1; k < t.rows.size(); ++k) EXPECT_GT(t.rows[k][0], t.rows[k - 1][0]);
    const auto manifest = json::parse(coop::read_text(dir_ / "out" / "manifest.json"));
    EXPECT_EQ(manifest["task"], "spectrum");
    EXPECT_EQ(manifest["seed"], 1);
    EXPECT_DOUBLE_EQ(manifest["config"]["model"]["alpha"].get<double>(), 0.11);
}

TEST_F(Cli, OtherTasksUseDocumentedHeaders) {
    const auto out = dir_ / "out";
    const auto g2 = write_config("g2.json", {{"model", h_pair()},
                                             {"task", {{"type", "g2"}, {"saturation", 27}, {"tau_max_ns", 10}, {"points", 50}}}});
    ASSERT_EQ(run("g2 --config " + g2.string() + " --out " + (out / "g2").string()), 0) << err_;
    EXPECT_EQ(csv(out / "g2" / "g2.csv").header, (std::vector<std::string>{"tau_ns", "g2"}));

    const auto life = write_config("l.json", {{"model", h_pair()}, {"task", {{"type", "lifetime"}, {"initial", "minus"}}}});
    ASSERT_EQ(run("lifetime --config " + life.string() + " --out " + (out / "l").string()), 0) << err_;
    EXPECT_EQ(csv(out / "l" / "lifetime.csv").header, (std::vector<std::string>{"t_ns", "rate"}));

    auto j = h_pair();
    j["pair"]["J_mhz"] = -116;
    const auto ext = write_config("e.json", {{"model", j},
                                             {"task",
                                              {{"type", "extinction"},
                                               {"saturation", 0.01},
                                               {"detunings", {{"start_mhz", 0}, {"stop_mhz", 1160}, {"points", 5}}}}}});
    ASSERT_EQ(run("extinction --config " + ext.string() + " --out " + (out / "e").string()), 0) << err_;
    const auto e = csv(out / "e" / "extinction.csv");
    EXPECT_EQ(e.header, (std::vector<std::string>{"delta_mhz", "ratio"}));
    EXPECT_EQ(e.rows.size(), 5u);
}

TEST_F(Cli, FitWritesResultJson) {
    const auto cfg = write_config("f.json", {{"model", h_pair()},
                                             {"task",
                                              {{"type", "fit"},
                                               {"observable", "lifetime"},
                                               {"synthesize", {{"truth", {{"gamma0", 33}, {"alpha", 0.11}}}}},
                                               {"data", {{{"setting", "plus"}}, {{"setting", "minus"}}}},
                                               {"free", {{{"name", "gamma0"}, {"initial", 30}},
                                                         {{"name", "alpha"}, {"initial", 0.2}}}}}}});
    ASSERT_EQ(run("fit --config " + cfg.string() + " --out " + (dir_ / "out").string()), 0) << err_;
    const auto r = json::parse(coop::read_text(dir_ / "out" / "fit_result.json"));
    EXPECT_EQ(r["status"], "converged");
    EXPECT_TRUE(r.contains("chi2"));
    ASSERT_EQ(r["parameters"].size(), 2u);
    EXPECT_EQ(r["parameters"][0]["name"], "gamma0");
    EXPECT_NEAR(r["parameters"][0]["value"].get<double>(), 33.0, 1e-3);
}

TEST_F(Cli, BaselineProbIsByteIdenticalForFixedSeed) {
    const auto cfg = write_config("b.json", {{"task", {{"type", "baseline-prob"}, {"inhom_width_ghz", 1}, {"n_samples", 100000}}},
                                             {"seed", 7}});
    ASSERT_EQ(run("baseline-prob --config " + cfg.string() + " --out " + (dir_ / "a").string()), 0) << err_;
    ASSERT_EQ(run("baseline-prob --config " + cfg.string() + " --threads 3 --out " + (dir_ / "b").string()), 0)
        << err_;
    const auto a = coop::read_text(dir_ / "a" / "baseline_prob.csv");
    EXPECT_EQ(a, coop::read_text(dir_ / "b" / "baseline_prob.csv"));
    EXPECT_EQ(coop::parse_csv(a).header, (std::vector<std::string>{"n_samples", "p_hat", "stderr"}));

    ASSERT_EQ(run("baseline-prob --config " + cfg.string() + " --seed 8 --out " + (dir_ / "c").string()), 0);
    EXPECT_NE(a, coop::read_text(dir_ / "c" / "baseline_prob.csv"));
    EXPECT_EQ(json::parse(coop::read_text(dir_ / "c" / "manifest.json"))["seed"], 8);
}

TEST_F(Cli, ConfigErrorsExitWithTwo) {
    auto doc = json{{"model", h_pair()}, {"task", {{"type", "lifetime"}}}};
    doc["model"]["alpha"] = 1.5;
    const auto bad = write_config("bad.json", doc);
    EXPECT_EQ(run("lifetime --config " + bad.string()), 2);
    EXPECT_NE(err_.find("model.alpha"), std::string::npos) << err_;

    EXPECT_EQ(run("lifetime --config " + (dir_ / "missing.json").string()), 2);
    EXPECT_EQ(run("lifetime"), 2);
    EXPECT_EQ(run("teleport --config x"), 2);

    const auto life = write_config("l.json", {{"model", h_pair()}, {"task", {{"type", "lifetime"}}}});
    EXPECT_EQ(run("spectrum --config " + life.string()), 2);
    EXPECT_NE(err_.find("task.type"), std::string::npos) << err_;
}

TEST_F(Cli, UnwritableOutputExitsWithOne) {
    const auto life = write_config("l.json", {{"model", h_pair()}, {"task", {{"type", "lifetime"}}}});
    std::ofstream(dir_ / "blocker") << "x";
    EXPECT_EQ(run("lifetime --config " + life.string() + " --out " + (dir_ / "blocker" / "sub").string()), 1);
}

TEST_F(Cli, NumericalFailureExitsWithThree) {
    // Nine emitters make a 262144-element generator, beyond the steady-state capacity.
    json emitters = json::array();
    for (int k = 0; k < 9; ++k)
        emitters.push_back({{"omega_mhz", 381886000 + 100 * k}, {"position_nm", {10.0 * k, 0, 0}}});
    const auto cfg = write_config("big.json", {{"model", {{"gamma0_mhz", 33}, {"emitters", emitters},
                                                          {"coupling", {{"mode", "geometric"}}}}},
                                               {"task",
                                                {{"type", "spectrum"},
                                                 {"saturation", 0.1},
                                                 {"scan", {{"start_mhz", -10}, {"stop_mhz", 10}, {"points", 2}}}}}});
    EXPECT_EQ(run("spectrum --config " + cfg.string() + " --out " + (dir_ / "out").string()), 3);
}

TEST_F(Cli, ReproducePresetRuns) {
    ASSERT_EQ(run("reproduce fig2d --out " + (dir_ / "r").string()), 0) << err_;
    EXPECT_TRUE(fs::exists(dir_ / "r" / "fig2d" / "lifetime_plus" / "lifetime.csv"));
    EXPECT_TRUE(fs::exists(dir_ / "r" / "fig2d" / "lifetime_minus" / "manifest.json"));
    EXPECT_EQ(run("reproduce fig99"), 2);
}

TEST_F(Cli, VersionFlag) {
    EXPECT_EQ(run("--version"), 0);
}
