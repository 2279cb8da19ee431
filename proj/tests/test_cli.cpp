#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "gaitdex/report.hpp"
#include "gaitdex/text.hpp"

namespace fs = std::filesystem;
using namespace gaitdex;

namespace {

const fs::path& work_dir() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / "gaitdex_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string path(const std::string& name) { return (work_dir() / name).string(); }

int run(const std::string& args) {
    const std::string cmd = std::string("env -u DATA_DIR ") + GAITDEX_CLI_PATH + " " + args + " 2>" +
                            path("stderr.txt") + " >" + path("stdout.txt");
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void prepare() {
    static bool done = false;
    if (done) return;
    ASSERT_EQ(run("synth --seed 3 --healthy 20 --patients 10 --points 51 --out " + path("cohort.csv")), 0);
    ASSERT_EQ(run("fit " + path("cohort.csv") + " --modes combined,left,right,per_joint --out " + path("model.json")), 0);
    done = true;
}

}  // namespace

TEST(Cli, SynthIsDeterministic) {
    ASSERT_EQ(run("synth --seed 9 --healthy 3 --patients 2 --points 21 --out " + path("s1.csv")), 0);
    ASSERT_EQ(run("synth --seed 9 --healthy 3 --patients 2 --points 21 --out " + path("s2.csv")), 0);
    EXPECT_EQ(slurp(path("s1.csv")), slurp(path("s2.csv")));
    ASSERT_EQ(run("synth --seed 10 --healthy 3 --patients 2 --points 21 --out " + path("s3.csv")), 0);
    EXPECT_NE(slurp(path("s1.csv")), slurp(path("s3.csv")));
}

TEST(Cli, FitIsByteIdentical) {
    prepare();
    ASSERT_EQ(run("fit " + path("cohort.csv") + " --modes combined,left,right,per_joint --out " + path("model2.json")), 0);
    EXPECT_EQ(slurp(path("model.json")), slurp(path("model2.json")));
    EXPECT_NE(slurp(path("stdout.txt")).find("combined"), std::string::npos);
}

TEST(Cli, UsageErrors) {
    prepare();
    EXPECT_EQ(run("fit " + path("cohort.csv") + " --omega 1.5 --out " + path("bad.json")), 2);
    EXPECT_FALSE(fs::exists(path("bad.json")));
    EXPECT_EQ(run("fit " + path("cohort.csv") + " --modes sideways --out " + path("bad.json")), 2);
    EXPECT_EQ(run("fit " + path("missing.csv") + " --out " + path("bad.json")), 2);
    EXPECT_EQ(run("nonsense"), 2);
    EXPECT_EQ(run(""), 2);
}

TEST(Cli, ScoreAllIndices) {
    prepare();
    ASSERT_EQ(run("score " + path("model.json") + " " + path("cohort.csv") + " --indices fgdi,gdi,gps,oa --out " +
                  path("report.csv")),
              0);
    EXPECT_NE(slurp(path("stderr.txt")).find("surrogate"), std::string::npos);
    const auto report = read_report_csv(fs::path(path("report.csv")));
    EXPECT_EQ(report.size(), 30u);
    for (const char* c : {"sfgdi_combined", "gps_combined", "oa_left", "sgdi_right"}) EXPECT_NE(report.column(c), nullptr) << c;

    ASSERT_EQ(run("score " + path("model.json") + " " + path("cohort.csv") + " --format json --out " + path("report.json")), 0);
    const auto j = nlohmann::json::parse(slurp(path("report.json")));
    EXPECT_TRUE(j.is_object());
}

TEST(Cli, MissingBasisExitCode) {
    prepare();
    EXPECT_EQ(run("score " + path("model.json") + " " + path("cohort.csv") + " --indices gdi --no-surrogate --out " +
                  path("nobasis.csv")),
              3);
    EXPECT_FALSE(fs::exists(path("nobasis.csv")));
    EXPECT_NE(slurp(path("stderr.txt")).find("--gdi-basis"), std::string::npos);
}

TEST(Cli, Stability) {
    prepare();
    ASSERT_EQ(run("stability " + path("model.json") + " " + path("cohort.csv") + " --deltas=-2,-1,1,2 --out " +
                  path("stab.csv")),
              0);
    const auto table = slurp(path("stab.csv"));
    EXPECT_EQ(table.substr(0, table.find('\n')), "variable,optimal_components,delta_-2,delta_-1,delta_+1,delta_+2");

    ASSERT_EQ(run("stability " + path("model.json") + " " + path("cohort.csv") + " --deltas 0 --out " + path("zero.csv")), 0);
    std::istringstream in(slurp(path("zero.csv")));
    std::string line;
    std::getline(in, line);
    int rows = 0;
    while (std::getline(in, line)) {
        const auto cells = text::split(line, ',');
        ASSERT_EQ(cells.size(), 3u) << line;
        EXPECT_EQ(text::parse_double(cells[2]), 0.0) << line;
        ++rows;
    }
    EXPECT_EQ(rows, 15);
}

TEST(Cli, CompareReports) {
    prepare();
    ASSERT_EQ(run("score " + path("model.json") + " " + path("cohort.csv") + " --out " + path("r1.csv")), 0);
    ASSERT_EQ(run("compare " + path("r1.csv") + " " + path("r1.csv") + " --out " + path("cmp.json")), 0);
    const auto j = nlohmann::json::parse(slurp(path("cmp.json")));
    EXPECT_NEAR(j["kendall_tau"]["sfgdi_combined"].get<double>(), 1.0, 1e-12);
}
