#include <cstdlib>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace blendflow;
using testhelpers::TempDir;
using testhelpers::read_file;
using testhelpers::write_file;

namespace {

struct CliResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr
};

CliResult run_cli(const std::string& args, const std::filesystem::path& dir) {
    const std::filesystem::path log = dir / "cli_log.txt";
    const std::string cmd =
        std::string(BLENDFLOW_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int raw = std::system(cmd.c_str());
    CliResult res;
    res.exit_code = WEXITSTATUS(raw);
    res.output = read_file(log);
    return res;
}

// Star scenario with an inline network so each test is self-contained.
std::string star_scenario_json(double T, double mu, double bump, double noise_amp,
                               double psi = 0.3,
                               const std::string& u_in = R"({"kind": "constant", "value": 0.1167})",
                               double hub_mu = -1.0) {
    if (hub_mu < 0) hub_mu = mu;
    std::ostringstream ss;
    ss << R"({
      "network": {
        "gamma": 0.0,
        "pipes": [
          {"id": "feed", "length": 1.0, "diameter": 0.5, "friction_theta": 0.08, "cells": 60},
          {"id": "branch_b", "length": 1.0, "diameter": 0.5, "friction_theta": 0.08, "cells": 60},
          {"id": "branch_c", "length": 1.0, "diameter": 0.5, "friction_theta": 0.08, "cells": 60}
        ],
        "nodes": [
          {"id": "inflow", "incident": [{"pipe": "feed", "end": "left"}], "mu": )"
       << mu << R"(, "boundary": {"u_sigma": )" << u_in
       << R"(, "u_0": {"kind": "constant", "value": 0.05}}},
          {"id": "hub", "incident": [{"pipe": "feed", "end": "right"},
                                     {"pipe": "branch_b", "end": "left"},
                                     {"pipe": "branch_c", "end": "left"}], "mu": )"
       << hub_mu << R"(},
          {"id": "outflow_b", "incident": [{"pipe": "branch_b", "end": "right"}], "mu": )"
       << mu << R"(, "boundary": {"u_sigma": {"kind": "constant", "value": -0.0583},
                                  "u_0": {"kind": "constant", "value": 0.05}}},
          {"id": "outflow_c", "incident": [{"pipe": "branch_c", "end": "right"}], "mu": )"
       << mu << R"(, "boundary": {"u_sigma": {"kind": "constant", "value": -0.0583},
                                  "u_0": {"kind": "constant", "value": 0.05}}}
        ]
      },
      "pressure_law": {"kind": "ideal", "rs_t": 1.0},
      "T": )"
       << T << R"(,
      "cfl": 0.9,
      "noise": {"amplitude": )"
       << noise_amp << R"(, "seed": 42, "modes": 4, "ramp_time": 2.0},
      "initial": {"kind": "steady_plus_bump", "bump_amplitude": )"
       << bump << R"(, "bump_pipe": "feed"},
      "output": {"cadence": 0.1, "path": "diagnostics.csv"},
      "lyapunov": {"psi": )"
       << psi << R"(, "psi0": 0.3}
    })";
    return ss.str();
}

}  // namespace

TEST(CliSimulate, WritesSchemaExactCsvAndManifest) {
    TempDir dir;
    write_file(dir.path / "sc.json", star_scenario_json(2.0, 0.4, 0.01, 0.0));
    const CliResult res = run_cli("simulate --scenario " + (dir.path / "sc.json").string() +
                                      " --out " + (dir.path / "out").string(),
                                  dir.path);
    ASSERT_EQ(res.exit_code, 0) << res.output;
    const std::string csv = read_file(dir.path / "out" / "diagnostics.csv");
    ASSERT_FALSE(csv.empty());
    std::istringstream lines(csv);
    std::string header;
    std::getline(lines, header);
    EXPECT_EQ(header,
              "t,E_sigma,E_zero,l2_delta_plus,l2_delta_minus,l2_delta_zero,"
              "eta_sigma,eta_zero,min_mu_margin");
    int rows = 0;
    for (std::string line; std::getline(lines, line);) {
        if (!line.empty()) rows++;
    }
    EXPECT_EQ(rows, 21);  // t = 0, 0.1, ..., 2.0

    const std::string manifest = read_file(dir.path / "out" / "manifest.json");
    const auto mj = nlohmann::json::parse(manifest);
    EXPECT_EQ(mj.at("status"), "ok");
    EXPECT_EQ(mj.at("seed"), 42);
    EXPECT_TRUE(mj.at("scenario").contains("network"));
    EXPECT_TRUE(mj.at("diagnostics").contains("constants"));
}

TEST(CliSimulate, ByteIdenticalReruns) {
    TempDir dir;
    write_file(dir.path / "sc.json", star_scenario_json(2.0, 0.4, 0.01, 1e-3));
    const std::string base = (dir.path / "sc.json").string();
    ASSERT_EQ(run_cli("simulate --scenario " + base + " --out " + (dir.path / "a").string(),
                      dir.path)
                  .exit_code,
              0);
    ASSERT_EQ(run_cli("simulate --scenario " + base + " --out " + (dir.path / "b").string(),
                      dir.path)
                  .exit_code,
              0);
    EXPECT_EQ(read_file(dir.path / "a" / "diagnostics.csv"),
              read_file(dir.path / "b" / "diagnostics.csv"));
}

TEST(CliSimulate, SeedOverrideChangesTheRun) {
    TempDir dir;
    write_file(dir.path / "sc.json", star_scenario_json(2.0, 0.4, 0.0, 1e-3));
    const std::string base = (dir.path / "sc.json").string();
    ASSERT_EQ(run_cli("simulate --scenario " + base + " --out " + (dir.path / "a").string(),
                      dir.path)
                  .exit_code,
              0);
    ASSERT_EQ(run_cli("simulate --scenario " + base + " --seed 777 --out " +
                          (dir.path / "b").string(),
                      dir.path)
                  .exit_code,
              0);
    EXPECT_NE(read_file(dir.path / "a" / "diagnostics.csv"),
              read_file(dir.path / "b" / "diagnostics.csv"));
    const auto mj = nlohmann::json::parse(read_file(dir.path / "b" / "manifest.json"));
    EXPECT_EQ(mj.at("seed"), 777);
}

TEST(CliSimulate, MalformedJsonExitsTwo) {
    TempDir dir;
    write_file(dir.path / "bad.json", "{ this is not json");
    const CliResult res = run_cli("simulate --scenario " + (dir.path / "bad.json").string() +
                                      " --out " + (dir.path / "out").string(),
                                  dir.path);
    EXPECT_EQ(res.exit_code, 2);
    EXPECT_NE(res.output.find("config error"), std::string::npos);
}

TEST(CliSimulate, StalledFlowExitsThreeWithPartialSeries) {
    TempDir dir;
    // Ramp the inflow drive down to the outflow level: the hub flow stalls and
    // the hydrogen mixing weights lose their footing.
    write_file(dir.path / "sc.json",
               star_scenario_json(60.0, 0.4, 0.0, 0.0, 0.3,
                                  R"({"kind": "ramp", "from": 0.1167, "to": -0.0583,
                                      "t_start": 0.5, "t_end": 3.0})"));
    const CliResult res = run_cli("simulate --scenario " + (dir.path / "sc.json").string() +
                                      " --out " + (dir.path / "out").string(),
                                  dir.path);
    EXPECT_EQ(res.exit_code, 3);
    EXPECT_NE(res.output.find("mixing singularity"), std::string::npos);
    // Partial series flushed before the abort.
    const std::string csv = read_file(dir.path / "out" / "diagnostics.csv");
    EXPECT_GT(csv.size(), 100u);
    const auto mj = nlohmann::json::parse(read_file(dir.path / "out" / "manifest.json"));
    EXPECT_NE(mj.at("status").get<std::string>().find("mixing singularity"),
              std::string::npos);
}

TEST(CliCheck, PassesOnTheReferenceAndFailsOnBadParameters) {
    TempDir dir;
    write_file(dir.path / "good.json", star_scenario_json(1.0, 0.4, 0.01, 0.0));
    EXPECT_EQ(run_cli("check --scenario " + (dir.path / "good.json").string(), dir.path)
                  .exit_code,
              0);

    write_file(dir.path / "mu1.json",
               star_scenario_json(1.0, 0.4, 0.01, 0.0, 0.3,
                                  R"({"kind": "constant", "value": 0.1167})", /*hub_mu=*/1.0));
    const CliResult mu1 =
        run_cli("check --scenario " + (dir.path / "mu1.json").string(), dir.path);
    EXPECT_EQ(mu1.exit_code, 1);
    EXPECT_NE(mu1.output.find("FAIL"), std::string::npos);

    write_file(dir.path / "psi0.json", star_scenario_json(1.0, 0.4, 0.01, 0.0, /*psi=*/0.0));
    EXPECT_EQ(run_cli("check --scenario " + (dir.path / "psi0.json").string(), dir.path)
                  .exit_code,
              1);
}

TEST(CliSweep, EmptyValueListExitsTwo) {
    TempDir dir;
    write_file(dir.path / "sc.json", star_scenario_json(1.0, 0.4, 0.01, 0.0));
    const CliResult res =
        run_cli("sweep --scenario " + (dir.path / "sc.json").string() +
                    " --param noise.amplitude --values '' --out " + (dir.path / "out").string(),
                dir.path);
    EXPECT_EQ(res.exit_code, 2);
}

TEST(CliSweep, AmplitudeSweepHasMonotonePlateaus) {
    TempDir dir;
    write_file(dir.path / "sc.json", star_scenario_json(12.0, 0.4, 0.0, 0.0));
    const CliResult res = run_cli(
        "sweep --scenario " + (dir.path / "sc.json").string() +
            " --param noise.amplitude --values 0,0.001,0.01 --jobs 2 --out " +
            (dir.path / "out").string(),
        dir.path);
    ASSERT_EQ(res.exit_code, 0) << res.output;
    std::istringstream lines(read_file(dir.path / "out" / "summary.csv"));
    std::string header;
    std::getline(lines, header);
    EXPECT_EQ(header, "value,chi_fit,plateau,r_squared,status");
    double prev_plateau = -1;
    int rows = 0;
    for (std::string line; std::getline(lines, line);) {
        if (line.empty()) continue;
        rows++;
        std::istringstream ss(line);
        std::string value, chi, plateau, r2, status;
        std::getline(ss, value, ',');
        std::getline(ss, chi, ',');
        std::getline(ss, plateau, ',');
        std::getline(ss, r2, ',');
        std::getline(ss, status, ',');
        EXPECT_EQ(status, "ok");
        const double p = std::strtod(plateau.c_str(), nullptr);
        EXPECT_GE(p, prev_plateau - 1e-18);
        prev_plateau = p;
    }
    EXPECT_EQ(rows, 3);
}

TEST(CliSweep, MuSweepPopulatesFits) {
    TempDir dir;
    write_file(dir.path / "sc.json", star_scenario_json(8.0, 0.4, 0.01, 0.0));
    const CliResult res =
        run_cli("sweep --scenario " + (dir.path / "sc.json").string() +
                    " --param mu --values 0,0.1,0.3 --jobs 2 --out " + (dir.path / "out").string(),
                dir.path);
    ASSERT_EQ(res.exit_code, 0) << res.output;
    std::istringstream lines(read_file(dir.path / "out" / "summary.csv"));
    std::string header;
    std::getline(lines, header);
    int rows = 0;
    for (std::string line; std::getline(lines, line);) {
        if (line.empty()) continue;
        rows++;
        std::istringstream ss(line);
        std::string value, chi;
        std::getline(ss, value, ',');
        std::getline(ss, chi, ',');
        EXPECT_FALSE(chi == "nan" || chi == "-nan") << line;
    }
    EXPECT_EQ(rows, 3);
}

TEST(CliSteady, ExportsProfile) {
    TempDir dir;
    write_file(dir.path / "sc.json", star_scenario_json(1.0, 0.4, 0.01, 0.0));
    const CliResult res = run_cli("steady --scenario " + (dir.path / "sc.json").string() +
                                      " --out " + (dir.path / "out").string(),
                                  dir.path);
    ASSERT_EQ(res.exit_code, 0) << res.output;
    const std::string csv = read_file(dir.path / "out" / "steady.csv");
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "pipe,x,J_plus,J_minus,J_zero");
    EXPECT_NE(res.output.find("hub"), std::string::npos);
}

TEST(CliSimulate, SnapshotsWrittenAtConfiguredTimes) {
    TempDir dir;
    nlohmann::json j = nlohmann::json::parse(star_scenario_json(1.0, 0.4, 0.01, 0.0));
    j["output"]["snapshots"] = {0.0, 1.0};
    write_file(dir.path / "sc.json", j.dump());
    const CliResult res = run_cli("simulate --scenario " + (dir.path / "sc.json").string() +
                                      " --out " + (dir.path / "out").string(),
                                  dir.path);
    ASSERT_EQ(res.exit_code, 0) << res.output;
    EXPECT_TRUE(std::filesystem::exists(dir.path / "out" / "state_t0.csv"));
    EXPECT_TRUE(std::filesystem::exists(dir.path / "out" / "state_t1.csv"));
    const std::string snap = read_file(dir.path / "out" / "state_t1.csv");
    EXPECT_EQ(snap.substr(0, snap.find('\n')),
              "pipe,x,S_plus,S_minus,S_zero,R_plus,R_minus,R_zero");
}
