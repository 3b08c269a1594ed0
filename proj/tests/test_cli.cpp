#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "test_util.hpp"

namespace {

int run(const std::string& args, const std::filesystem::path& log) {
    const std::string cmd = std::string(CELLSTAB_CLI) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

class Cli : public ::testing::Test {
protected:
    testutil::TempDir dir{"cli"};
    std::string p(const std::string& name) const { return (dir / name).string(); }
    void ok(const std::string& args) {
        const int rc = run(args, dir / "log.txt");
        ASSERT_EQ(rc, 0) << args << "\n" << testutil::slurp(dir / "log.txt");
    }
    std::string fail(const std::string& args) {
        EXPECT_NE(run(args, dir / "log.txt"), 0) << args;
        return testutil::slurp(dir / "log.txt");
    }
};

}  // namespace

TEST_F(Cli, DefaultConfigEndToEnd) {
    ok("synth --config " CELLSTAB_DEFAULT_CONFIG " --out " + p("stream"));
    ok("extract --manifest " + p("stream/manifest.json") + " --out " + p("features.csv") + " --segments-out " +
       p("segments.csv"));
    ok("track --manifest " + p("stream/manifest.json") + " --out " + p("tracks.csv"));
    ok("dataset --features " + p("features.csv") + " --tracks " + p("tracks.csv") + " --T 2 --out " + p("ds/dataset.json"));
    ok("train --dataset " + p("ds/dataset.json") + " --family gb --task classification --m 9 --T 0 --out " + p("gb.json"));
    ok("eval --dataset " + p("ds/dataset.json") + " --model " + p("gb.json") + " --out " + p("single"));
    ok("--threads 2 eval --dataset " + p("ds/dataset.json") +
       " --families linear,gb,nn,lstm --runs 2 --epochs 10 --m 9 --T 2 --out " + p("report"));

    const auto report = nlohmann::json::parse(testutil::slurp(dir / "report.json"));
    EXPECT_EQ(report["format"], "cellstab-report");
    int model_rows = 0;
    for (const auto& r : report["rows"]) {
        if (r["role"] == "model") ++model_rows;
        EXPECT_GE(r["std"].get<double>(), 0.0);
    }
    EXPECT_EQ(model_rows, 4 * 4);
    const auto single = nlohmann::json::parse(testutil::slurp(dir / "single.json"));
    EXPECT_EQ(single["rows"].size(), 2u);
    EXPECT_FALSE(testutil::slurp(dir / "ds/dataset.csv").empty());
}

TEST_F(Cli, RerunsAreByteIdentical) {
    const std::string small = " --frames 25";
    ok("synth --config " CELLSTAB_DEFAULT_CONFIG " --out " + p("a") + small);
    ok("synth --config " CELLSTAB_DEFAULT_CONFIG " --out " + p("b") + small);
    EXPECT_EQ(testutil::slurp(dir / "a/frame_0024_cells.tmsg"), testutil::slurp(dir / "b/frame_0024_cells.tmsg"));
    for (const char* run : {"run1", "run2"}) {
        const std::string r = std::string(run) + "/";
        std::filesystem::create_directories(dir / run);
        ok("extract --manifest " + p("a/manifest.json") + " --m 4 --out " + p(r + "f.csv"));
        ok("track --manifest " + p("a/manifest.json") + " --out " + p(r + "t.csv"));
        ok("dataset --features " + p(r + "f.csv") + " --tracks " + p(r + "t.csv") + " --T 1 --out " + p(r + "d.json"));
        ok("train --dataset " + p(r + "d.json") + " --family nn --task regression --epochs 5 --out " + p(r + "m.json"));
        ok("eval --dataset " + p(r + "d.json") + " --families lr,gb --runs 2 --grid --out " + p(r + "r"));
    }
    for (const char* name : {"f.csv", "t.csv", "d.json", "d.csv", "m.json", "r.json", "r.csv"}) {
        EXPECT_EQ(testutil::slurp(dir / "run1" / name), testutil::slurp(dir / "run2" / name)) << name;
    }

    const auto grid = nlohmann::json::parse(testutil::slurp(dir / "run1/r.json"));
    EXPECT_FALSE(grid["best"].empty());
}

TEST_F(Cli, ValidationErrors) {
    ok("synth --out " + p("s") + " --frames 3");
    std::string log = fail("extract --manifest " + p("s/manifest.json") + " --m 10 --out " + p("f.csv"));
    EXPECT_NE(log.find("exceeds l-1"), std::string::npos) << log;
    log = fail("extract --manifest " + p("missing.json") + " --out " + p("f.csv"));
    EXPECT_NE(log.find("missing.json"), std::string::npos) << log;
    log = fail("synth --out " + p("x") + " --p-err 2");
    EXPECT_NE(log.find("probabilities"), std::string::npos) << log;
    log = fail("track --manifest " + p("s/manifest.json") + " --c-over 0 --out " + p("t.csv"));
    EXPECT_NE(log.find("c_over"), std::string::npos) << log;
    fail("frobnicate");
}
