#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "test_support.hpp"

using nlohmann::json;

namespace {

struct Run {
    int code = -1;
    std::string out;
};

Run run(const std::string& args) {
    const std::string cmd = std::string(MDPDE_CLI_PATH) + " --data-dir " + mdpde::testing::data_dir() + " " + args +
                            " 2>/dev/null";
    Run r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (pipe == nullptr) return r;
    char buf[4096];
    std::size_t got = 0;
    while ((got = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, got);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool schema_valid(const std::string& document) {
    const auto doc = temp_path("mdpde_cli_fit.json");
    std::ofstream(doc) << document;
    const std::string cmd = std::string(MDPDE_PYTHON) +
                            " -c \"import json,sys,jsonschema; jsonschema.validate(json.load(open(sys.argv[2])), "
                            "json.load(open(sys.argv[1])))\" " +
                            MDPDE_SCHEMA_PATH + " " + doc;
    return std::system(cmd.c_str()) == 0;
}

}  // namespace

TEST(Cli, FitAidsSucceedsWithJson) {
    const auto r = run("fit --preset aids --alpha 0,0.5");
    ASSERT_EQ(r.code, 0);
    const auto j = json::parse(r.out);
    EXPECT_EQ(j["n"], 20);
    EXPECT_EQ(j["p"], 2);
    ASSERT_EQ(j["fits"].size(), 2u);
    EXPECT_NEAR(j["fits"][0]["beta"][0].get<double>(), 0.9953, 5e-3);
    EXPECT_NEAR(j["fits"][0]["beta"][1].get<double>(), 3.0554, 5e-3);
    EXPECT_EQ(j["fits"][1]["start_source"], "warm");
    EXPECT_TRUE(j.contains("manifest"));
}

TEST(Cli, FitOutputMatchesSchema) {
    for (const std::string args : {"fit --preset carrots --alpha 0,0.5", "fit --preset skin --alpha 0.3,1",
                                   "fit --preset leukemia --alpha 0 --reference normal"}) {
        const auto r = run(args);
        ASSERT_FALSE(r.out.empty()) << args;
        EXPECT_TRUE(schema_valid(r.out)) << args;
    }
}

TEST(Cli, TableFormatUsesFourDecimals) {
    const auto r = run("fit --preset aids --alpha 0 --format table");
    ASSERT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("0.99"), std::string::npos);
    EXPECT_NE(r.out.find(" 3.0546 "), std::string::npos);
    EXPECT_EQ(r.out.find("3.05461"), std::string::npos);
}

TEST(Cli, CsvInputMatchesPreset) {
    const auto a = json::parse(run("fit --preset aids --alpha 0.3").out);
    const auto b = json::parse(run("fit --csv " + mdpde::testing::data_dir() +
                                   "/aids.csv --formula \"cases ~ 1 + log10(quarter)\" --family poisson --alpha 0.3")
                                   .out);
    EXPECT_EQ(a["fits"][0]["beta"], b["fits"][0]["beta"]);
}

TEST(Cli, UsageErrorsExitOne) {
    EXPECT_EQ(run("fit --preset aids --alpha -0.1").code, 1);
    EXPECT_EQ(run("fit --preset aids --alpha abc").code, 1);
    EXPECT_EQ(run("fit --preset nosuch --alpha 0.5").code, 1);
    EXPECT_EQ(run("fit --preset aids --alpha 0.5 --bogus").code, 1);
    EXPECT_EQ(run("reproduce T99").code, 1);
    EXPECT_EQ(run("").code, 1);
    EXPECT_EQ(run("fit --preset aids --variant three_outliers --alpha 0.5").code, 1);
}

TEST(Cli, DivergentFitExitsTwo) {
    const auto r = run("fit --preset skin --alpha 1");
    EXPECT_EQ(r.code, 2);
    const auto j = json::parse(r.out);
    EXPECT_FALSE(j["fits"][0]["converged"].get<bool>());
}

TEST(Cli, ReproductionFailureExitsThree) {
    EXPECT_EQ(run("reproduce T9 -q").code, 3);
    EXPECT_EQ(run("reproduce T7 -q").code, 0);
}

TEST(Cli, ReproduceWritesArtifacts) {
    const auto dir = temp_path("mdpde_cli_repro");
    std::filesystem::remove_all(dir);
    ASSERT_EQ(run("reproduce T10 -q --out-dir " + dir).code, 0);
    const auto diff = slurp(dir + "/T10_diff.csv");
    EXPECT_EQ(diff.rfind("table,panel,coef,alpha,quantity,expected,actual,deviation,tolerance,status", 0), 0u);
    EXPECT_TRUE(std::filesystem::exists(dir + "/T10_diff.csv.manifest.json"));
}

TEST(Cli, SimulateIsDeterministic) {
    const std::string args = "simulate --family poisson --case III --n 50 --reps 30 --seed 11";
    const auto a = run(args + " --threads 1");
    const auto b = run(args + " --threads 3");
    ASSERT_EQ(a.code, 0);
    EXPECT_EQ(a.out, b.out);
    EXPECT_EQ(a.out.rfind("case,coefficient,alpha=0,", 0), 0u);
    EXPECT_NE(run(args + " --seed 12").out, a.out);
}

TEST(Cli, InfluenceExportForCaseOne) {
    const auto out = temp_path("mdpde_cli_if.csv");
    const auto summary = temp_path("mdpde_cli_if_summary.csv");
    const auto r = run("influence --model poisson-case-I --i0 1,20 --alphas 0,0.1,0.25,0.5,1 --tmax 60 -o " + out +
                       " --summary " + summary);
    ASSERT_EQ(r.code, 0);
    const auto csv = slurp(out);
    EXPECT_EQ(csv.rfind("alpha,i0,t,coef,if_value\n", 0), 0u);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 5 * 2 * 61 * 2);
    const auto sum = slurp(summary);
    EXPECT_EQ(sum.rfind("alpha,i0,gross_error_sensitivity,self_standardized_sensitivity,argmax_t", 0), 0u);
    EXPECT_TRUE(std::filesystem::exists(out + ".manifest.json"));
}

TEST(Cli, SelectAlphaCurve) {
    const auto r = run("select-alpha --preset leukemia --pilot 0.5");
    ASSERT_EQ(r.code, 0);
    EXPECT_EQ(r.out.rfind("alpha,bias_sq,variance_trace,mse,optimal", 0), 0u);
    std::istringstream lines(r.out);
    std::string line;
    std::vector<double> optimal;
    std::getline(lines, line);
    while (std::getline(lines, line)) {
        if (line.substr(line.rfind(',') + 1) == "1") optimal.push_back(std::stod(line.substr(0, line.find(','))));
    }
    ASSERT_EQ(optimal.size(), 1u);
    EXPECT_NEAR(optimal[0], 0.3, 1e-12);
}

TEST(Cli, DatasetsListAndShow) {
    const auto list = run("datasets");
    ASSERT_EQ(list.code, 0);
    for (const std::string name : {"epilepsy", "aids", "leukemia", "skin", "carrots"}) {
        EXPECT_NE(list.out.find(name), std::string::npos);
    }
    EXPECT_EQ(list.out.find("DRIFT"), std::string::npos);
    const auto show = run("datasets --show aids --variant two_outliers");
    EXPECT_NE(show.out.find("\n20,15\n"), std::string::npos);
}
