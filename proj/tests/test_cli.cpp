#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

#include "tiershard/common.hpp"

namespace fs = std::filesystem;

namespace {

struct CliRunner {
    fs::path binary;
    fs::path workdir;

    int run(const std::string& args, std::string* output = nullptr) const {
        const fs::path out = workdir / "cli_output.txt";
        const std::string cmd = "cd '" + workdir.string() + "' && '" + binary.string() + "' " + args + " > '" +
                                out.string() + "' 2>&1";
        const int status = std::system(cmd.c_str());
        if (output) {
            std::ifstream is(out);
            output->assign(std::istreambuf_iterator<char>(is), {});
        }
        return WEXITSTATUS(status);
    }
};

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        const char* bin = std::getenv("TIERSHARD_CLI_BIN");
        const char* fixtures = std::getenv("TIERSHARD_FIXTURES");
        ASSERT_NE(bin, nullptr) << "TIERSHARD_CLI_BIN not set (run through ctest)";
        ASSERT_NE(fixtures, nullptr) << "TIERSHARD_FIXTURES not set (run through ctest)";
        runner.binary = bin;
        runner.workdir = fs::path(::testing::TempDir()) / ("cli_" + std::to_string(::getpid()) + "_" +
                                                           ::testing::UnitTest::GetInstance()
                                                               ->current_test_info()
                                                               ->name());
        fs::remove_all(runner.workdir);
        fs::create_directories(runner.workdir);
        for (const auto& entry : fs::directory_iterator(fs::path(fixtures) / "tiny")) {
            fs::copy(entry.path(), runner.workdir / entry.path().filename());
        }
    }

    std::string slurp(const fs::path& p) const {
        std::ifstream is(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(is), {});
    }

    nlohmann::json load_json(const fs::path& p) const {
        std::ifstream is(p);
        nlohmann::json j;
        is >> j;
        return j;
    }

    CliRunner runner;
};

}  // namespace

TEST_F(CliTest, UnknownSubcommandFailsWithUsage) {
    std::string out;
    EXPECT_EQ(runner.run("frobnicate", &out), 1);
    EXPECT_NE(out.find("Usage"), std::string::npos) << out;
    EXPECT_EQ(runner.run("--help", &out), 0);
}

TEST_F(CliTest, MissingConfigIsAnIoError) {
    EXPECT_EQ(runner.run("analyze --config nope.json"), 1);
}

TEST_F(CliTest, ExactPlanOnTheTinyFixtureCostsFour) {
    ASSERT_EQ(runner.run("analyze --config config.json"), 0);
    std::string out;
    ASSERT_EQ(runner.run("plan --config config.json --backend exact", &out), 0) << out;
    EXPECT_NE(out.find("total cost C"), std::string::npos);

    const auto plan = load_json(runner.workdir / "plan.json");
    EXPECT_DOUBLE_EQ(plan["costs"]["total"].get<double>(), 4.0);
    EXPECT_DOUBLE_EQ(plan["tables"][0]["pct_dram"].get<double>(), 1.0);
    EXPECT_EQ(plan["backend"].get<std::string>(), "exact");
}

TEST_F(CliTest, FullPipelineProducesEveryArtifact) {
    ASSERT_EQ(runner.run("analyze --config config.json"), 0);
    ASSERT_EQ(runner.run("plan --config config.json"), 0);
    ASSERT_EQ(runner.run("remap --config config.json"), 0);
    std::string out;
    ASSERT_EQ(runner.run("simulate --config config.json", &out), 0) << out;
    EXPECT_NE(out.find("IPS"), std::string::npos);
    for (const char* artifact : {"stats.json", "plan.json", "remap.bin", "report.csv", "report.json"}) {
        EXPECT_TRUE(fs::exists(runner.workdir / artifact)) << artifact;
    }
    ASSERT_EQ(runner.run("report report.json report.json --out cmp", &out), 0) << out;
    const auto cmp = load_json(runner.workdir / "cmp.json");
    ASSERT_EQ(cmp.size(), 2u);
    EXPECT_DOUBLE_EQ(cmp[0]["speedup_vs_first"].get<double>(), 1.0);
    EXPECT_DOUBLE_EQ(cmp[1]["speedup_vs_first"].get<double>(), 1.0);
}

TEST_F(CliTest, RerunsAreByteIdentical) {
    ASSERT_EQ(runner.run("analyze --config config.json"), 0);
    ASSERT_EQ(runner.run("plan --config config.json"), 0);
    ASSERT_EQ(runner.run("remap --config config.json"), 0);
    const std::string stats1 = slurp(runner.workdir / "stats.json");
    const std::string plan1 = slurp(runner.workdir / "plan.json");
    const std::string remap1 = slurp(runner.workdir / "remap.bin");
    ASSERT_EQ(runner.run("analyze --config config.json"), 0);
    ASSERT_EQ(runner.run("plan --config config.json"), 0);
    ASSERT_EQ(runner.run("remap --config config.json"), 0);
    EXPECT_EQ(slurp(runner.workdir / "stats.json"), stats1);
    EXPECT_EQ(slurp(runner.workdir / "plan.json"), plan1);
    EXPECT_EQ(slurp(runner.workdir / "remap.bin"), remap1);
}

TEST_F(CliTest, InfeasibleCapacityExitsWithTwo) {
    ASSERT_EQ(runner.run("analyze --config config.json"), 0);
    auto cfg = load_json(runner.workdir / "config.json");
    cfg["profile"]["cap_ssd_bytes"] = 1;
    cfg["profile"]["cap_dram_bytes"] = 0;
    cfg["profile"]["cap_bram_bytes"] = 0;
    std::ofstream(runner.workdir / "config.json") << cfg.dump(2);
    std::string out;
    EXPECT_EQ(runner.run("plan --config config.json", &out), 2);
    EXPECT_NE(out.find("Eq. 26"), std::string::npos) << out;
}

TEST_F(CliTest, GeneratedTracesAreSeedStable) {
    auto cfg = load_json(runner.workdir / "config.json");
    cfg["paths"]["trace"] = "gen.bin";
    cfg["trace_format"] = "binary";
    cfg["synthetic"] = {{"seed", 9},
                        {"alpha", 1.05},
                        {"samples", 500},
                        {"tables", nlohmann::json::array({{{"rows", 400}, {"dim", 8}, {"df", 4}, {"mean_pf", 3.0}}})}};
    std::ofstream(runner.workdir / "config.json") << cfg.dump(2);

    ASSERT_EQ(runner.run("gen-trace --config config.json"), 0);
    const std::string first = slurp(runner.workdir / "gen.bin");
    ASSERT_EQ(runner.run("gen-trace --config config.json"), 0);
    EXPECT_EQ(slurp(runner.workdir / "gen.bin"), first);
    ASSERT_EQ(runner.run("gen-trace --config config.json --seed 10"), 0);
    EXPECT_NE(slurp(runner.workdir / "gen.bin"), first);
}

TEST_F(CliTest, AblationLevelsImproveLatencyInOrder) {
    // Small power-law workload; two devices -> one EMB core.
    auto cfg = load_json(runner.workdir / "config.json");
    cfg["paths"]["trace"] = "abl.bin";
    cfg["trace_format"] = "binary";
    cfg["synthetic"] = {{"seed", 4},
                        {"alpha", 1.05},
                        {"samples", 1000},
                        {"tables", nlohmann::json::array({
                                       {{"rows", 4000}, {"dim", 16}, {"df", 4}, {"mean_pf", 4.0}, {"hot_thr", 0.99}},
                                       {{"rows", 4000}, {"dim", 16}, {"df", 4}, {"mean_pf", 4.0}, {"hot_thr", 0.99}},
                                   })}};
    cfg["profile"] = {{"devices", 2},          {"cap_bram_bytes", 65536},
                      {"cap_dram_bytes", 65536}, {"cap_ssd_bytes", 1073741824},
                      {"t_dram_ns", 100.0},    {"t_ssd_ns", 10000.0},
                      {"t_tt_ns", 300.0},      {"t_mlp_top_ns", 500.0},
                      {"t_mlp_bot_ns", 500.0}, {"batch", 100},
                      {"mini_batch", 10}};
    cfg["solver"] = {{"backend", "heuristic"}};
    std::ofstream(runner.workdir / "config.json") << cfg.dump(2);

    ASSERT_EQ(runner.run("gen-trace --config config.json"), 0);
    ASSERT_EQ(runner.run("analyze --config config.json"), 0);

    double mean[4] = {0, 0, 0, 0};
    for (int level = 1; level <= 3; ++level) {
        std::string out;
        ASSERT_EQ(runner.run("simulate --config config.json --ablation " + std::to_string(level), &out), 0)
            << out;
        mean[level] = load_json(runner.workdir / "report.json")["mean_latency_ns"].get<double>();
    }
    EXPECT_LT(mean[3], mean[2]);
    EXPECT_LT(mean[2], mean[1]);
}
