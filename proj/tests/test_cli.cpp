#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "ingest.hpp"

using namespace spillover;
using namespace spillover::cli;
namespace fs = std::filesystem;

namespace {

const std::string kData = SPILLOVER_DATA_DIR;
const std::string kGolden = SPILLOVER_GOLDEN_DIR;
const std::string kTool = SPILLOVER_TOOL;

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("spillover_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    return dir / name;
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

// Exit status of the tool; stdout and stderr go to files next to the scratch outputs.
int tool(const std::string& args) {
    const std::string cmd = kTool + " " + args + " >" + scratch("stdout.txt").string() + " 2>" +
                            scratch("stderr.txt").string();
    const int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string toy_args() { return "--nodes " + kData + "/toy_nodes.csv --edges " + kData + "/toy_edges.csv"; }

}  // namespace

TEST(Ingest, ToyRoundTripIsCanonical) {
    const auto ds = ingest(kData + "/toy_nodes.csv", kData + "/toy_edges.csv");
    std::ostringstream nodes, edges;
    export_nodes(ds, nodes);
    export_edges(ds, edges);
    EXPECT_EQ(nodes.str(), slurp(kData + "/toy_nodes.csv"));
    EXPECT_EQ(edges.str(), slurp(kGolden + "/toy_edges.csv"));
    EXPECT_EQ(ds.covariate_names, (std::vector<std::string>{"area"}));
    EXPECT_EQ(ds.net.edge_count(), 13u);
}

TEST(Ingest, ColumnOrderAndNumberSpellingNormalize) {
    std::istringstream nodes("y_post,z_obs,p_treat,id\n1.50,1,0.50,a\n2.0,0,0,b\n");
    std::istringstream edges("src,dst\nb,a\n");
    const auto ds = ingest_streams(nodes, "n.csv", &edges, "e.csv");
    std::ostringstream out, eout;
    export_nodes(ds, out);
    export_edges(ds, eout);
    EXPECT_EQ(out.str(), "id,p_treat,z_obs,y_post\na,0.5,1,1.5\nb,0,0,2\n");
    EXPECT_EQ(eout.str(), "src,dst\na,b\n");
}

TEST(Ingest, MalformedProbabilityNamesLine) {
    std::istringstream nodes("id,p_treat,z_obs,y_post\na,0.5,0,1\nb,1.2,0,1\n");
    try {
        ingest_streams(nodes, "bad.csv", nullptr, "", IngestOptions{1.0, false});
        FAIL() << "accepted p_treat 1.2";
    } catch (const IngestError& e) {
        EXPECT_EQ(e.line(), 3u);
        EXPECT_NE(std::string(e.what()).find("bad.csv:3:"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("1.2"), std::string::npos);
    }
}

TEST(Ingest, OtherValidationErrors) {
    auto fails = [](const std::string& text, std::size_t line) {
        std::istringstream nodes(text);
        try {
            ingest_streams(nodes, "x.csv", nullptr, "", IngestOptions{1.0, false});
        } catch (const IngestError& e) {
            EXPECT_EQ(e.line(), line) << e.what();
            return;
        }
        ADD_FAILURE() << "accepted: " << text;
    };
    fails("id,p_treat,z_obs\na,0.5,0\n", 1);
    fails("id,p_treat,z_obs,y_post\na,0.5,2,1\n", 2);
    fails("id,p_treat,z_obs,y_post\na,0,1,1\n", 2);
    fails("id,p_treat,z_obs,y_post\na,1,0,1\n", 2);
    fails("id,p_treat,z_obs,y_post\na,0.5,0,1\na,0.5,0,1\n", 3);
    std::istringstream nodes("id,p_treat,z_obs,y_post\na,0.5,0,1\nb,0.5,0,1\n");
    std::istringstream edges("src,dst\na,b\na,c\n");
    try {
        ingest_streams(nodes, "n.csv", &edges, "e.csv");
        ADD_FAILURE() << "accepted unknown edge id";
    } catch (const IngestError& e) {
        EXPECT_EQ(e.line(), 3u);
    }
}

TEST(Ingest, RadiusModeBuildsEdgesFromCoordinates) {
    std::istringstream nodes("id,x,y,p_treat,z_obs,y_post\nu0,0,0,0.5,0,1\nu1,0.9,0,0.5,1,2\nu2,1.8,0,0,0,3\n");
    const auto ds = ingest_streams(nodes, "n.csv", nullptr, "", IngestOptions{1.0, false});
    EXPECT_EQ(ds.net.edges(), (std::vector<std::pair<UnitId, UnitId>>{{0, 1}, {1, 2}}));
    std::istringstream no_xy("id,p_treat,z_obs,y_post\nu0,0.5,0,1\n");
    EXPECT_THROW(ingest_streams(no_xy, "n.csv", nullptr, "", IngestOptions{1.0, false}), IngestError);
}

TEST(Ingest, LabelsRoundTrip) {
    const auto ds = ingest(kData + "/toy_nodes.csv", kData + "/toy_edges.csv");
    std::vector<int> labels(ds.ids.size());
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = int(i % 3);
    std::ostringstream os;
    write_labels(os, ds, labels);
    const auto p = scratch("labels.csv");
    write_file(p, os.str());
    EXPECT_EQ(read_labels(p.string(), ds), labels);
}

TEST(Cli, ReportsAreByteIdenticalAcrossRuns) {
    const auto a = scratch("a.json"), b = scratch("b.json");
    const std::string args = "test-monotone " + toy_args() + " --levels '0,1,>=2' --draws 500 --seed 7 -o ";
    ASSERT_EQ(tool(args + a.string()), 0) << slurp(scratch("stderr.txt"));
    ASSERT_EQ(tool(args + b.string()), 0);
    EXPECT_EQ(slurp(a.string()), slurp(b.string()));
    const auto report = nlohmann::json::parse(slurp(a.string()));
    EXPECT_EQ(report["schema_version"], kSchemaVersion);
    EXPECT_EQ(report["command"], "test-monotone");
    EXPECT_EQ(report["seed"], 7);
    EXPECT_TRUE(report["inputs"].contains("nodes"));
    EXPECT_EQ(report["results"]["pvals"].size(), 2u);
}

TEST(Cli, RerunVerifyReproducesResults) {
    const auto a = scratch("r.json");
    ASSERT_EQ(tool("test-contrast " + toy_args() + " --levels '0,1,>=2' --draws 300 -o " + a.string()), 0)
        << slurp(scratch("stderr.txt"));
    EXPECT_EQ(tool("rerun " + a.string() + " --verify"), 0) << slurp(scratch("stderr.txt"));
    // A tampered p-value is reported as a mismatch.
    auto report = nlohmann::json::parse(slurp(a.string()));
    report["results"]["pval"] = 0.123456;
    write_file(a, report.dump(2));
    EXPECT_EQ(tool("rerun " + a.string() + " --verify"), kExitMismatch);
}

TEST(Cli, ValidationErrorsExitTwo) {
    const auto bad = scratch("bad.csv");
    write_file(bad, "id,p_treat,z_obs,y_post\na,0.5,0,1\nb,1.2,0,1\n");
    EXPECT_EQ(tool("test-monotone --nodes " + bad.string() + " --radius 1"), kExitValidation);
    EXPECT_NE(slurp(scratch("stderr.txt")).find("bad.csv:3:"), std::string::npos);
    EXPECT_EQ(tool("test-monotone " + toy_args() + " --statistic median"), kExitValidation);
    EXPECT_EQ(tool("test-monotone " + toy_args() + " --draws abc"), kExitValidation);
}

TEST(Cli, DegenerateEverywhereExitsThree) {
    const auto nodes = scratch("lonely.csv");
    write_file(nodes, "id,x,y,p_treat,z_obs,y_post\na,0,0,0.5,1,1\nb,10,0,0,0,2\nc,20,0,0,0,3\n");
    EXPECT_EQ(tool("test-monotone --nodes " + nodes.string() + " --radius 1 --levels '0,>=1' --draws 50"),
              kExitDegenerate);
    const auto report = nlohmann::json::parse(slurp(scratch("stdout.txt")));
    EXPECT_TRUE(report["results"]["degenerate_everywhere"].get<bool>());
}

TEST(Cli, AggregateIsTwiceLowerMedianOfConstructions) {
    auto cfg = default_config("aggregate");
    cfg["nodes"] = kData + "/toy_nodes.csv";
    cfg["edges"] = kData + "/toy_edges.csv";
    cfg["levels"] = "0,1,>=2";
    cfg["draws"] = 300;
    cfg["constructions"] = 5;
    const auto res = run_command("aggregate", cfg);
    const auto& r = res.report["results"];
    auto p = r["construction_pvals"].get<std::vector<double>>();
    ASSERT_EQ(p.size(), 5u);
    std::sort(p.begin(), p.end());
    EXPECT_EQ(r["aggregate_pval"].get<double>(), std::min(1.0, 2 * p[2]));
    // Each listed construction reproduces from its seed.
    auto single = default_config("test-monotone");
    for (auto it = single.begin(); it != single.end(); ++it)
        if (cfg.contains(it.key())) single[it.key()] = cfg[it.key()];
    const auto seeds = r["construction_seeds"].get<std::vector<std::uint64_t>>();
    const auto listed = r["construction_pvals"].get<std::vector<double>>();
    for (std::size_t c = 0; c < seeds.size(); ++c) {
        single["seed"] = seeds[c];
        EXPECT_EQ(run_command("test-monotone", single).report["results"]["combined_pval"].get<double>(), listed[c]);
    }
}

TEST(Cli, SimulateWritesOneRowPerCellAndMethod) {
    const auto conf = scratch("study.json"), csv = scratch("study.csv");
    write_file(conf, R"({"network": {"n": 200, "seed": 3}, "reps": 10, "draws": 50,
        "cells": [{"dgp": "DGP1", "tau": 0}, {"dgp": "DGP1", "tau": 0.2}, {"dgp": "DGP1", "tau": 0.5}],
        "methods": [{"statistic": "dim", "combiner": "fisher"}]})");
    ASSERT_EQ(tool("simulate --config " + conf.string() + " --csv " + csv.string()), 0)
        << slurp(scratch("stderr.txt"));
    std::istringstream in(slurp(csv.string()));
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "dgp,param,method,statistic,combiner,rejection_rate,mc_se");
    std::vector<std::string> rows;
    while (std::getline(in, line)) rows.push_back(line);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[1].substr(0, 13), "DGP1,tau=0.2,");
}

TEST(Cli, EveryCommandRerunsIdentically) {
    const std::vector<std::string> commands{
        "test-monotone " + toy_args() + " --levels '0,1,>=2' --draws 200",
        "test-monotone-general " + toy_args() + " --levels '0,1,>=2' --draws 200 --n-rand 200 --n-rand-informativeness 100",
        "test-contrast " + toy_args() + " --levels '0,1,>=2' --draws 200",
        "select-modulesets " + toy_args() + " --levels '0,1,>=2' --candidates 3 --mc-draws 50",
        "aggregate " + toy_args() + " --levels '0,1,>=2' --draws 100 --constructions 3",
        "partition " + toy_args(),
        "check-grouping " + toy_args() + " --draws 200",
    };
    for (std::size_t i = 0; i < commands.size(); ++i) {
        const auto out = scratch("cmd" + std::to_string(i) + ".json");
        const int code = tool(commands[i] + " -o " + out.string());
        ASSERT_TRUE(code == 0 || code == kExitDegenerate) << commands[i] << "\n" << slurp(scratch("stderr.txt"));
        EXPECT_EQ(tool("rerun " + out.string() + " --verify"), 0) << commands[i];
    }
}

TEST(Cli, PartitionLabelsFile) {
    const auto labels = scratch("labels_out.csv");
    ASSERT_EQ(tool("partition " + toy_args() + " --labels-out " + labels.string()), 0);
    std::istringstream in(slurp(labels.string()));
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "unit,label");
    int n = 0;
    while (std::getline(in, line)) ++n;
    EXPECT_EQ(n, 12);
}

TEST(Cli, HistogramHasTwentyBins) {
    const auto h = scratch("hist.csv");
    ASSERT_EQ(tool("test-contrast " + toy_args() + " --levels '0,1,>=2' --draws 300 --histogram " + h.string()), 0);
    std::istringstream in(slurp(h.string()));
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "bin_low,bin_high,count");
    int n = 0;
    while (std::getline(in, line)) ++n;
    EXPECT_TRUE(n == 20 || n == 0);
}
