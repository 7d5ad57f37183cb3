#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CmdResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr
};

CmdResult run_cli(const std::string& args, const fs::path& dir) {
    const fs::path log = dir / "cmd.log";
    const std::string cmd = std::string(MB_CLI_PATH) + " " + args + " > " +
                            log.string() + " 2>&1";
    const int ret = std::system(cmd.c_str());
    CmdResult res;
    res.exit_code = ret == -1 ? -1 : WEXITSTATUS(ret);
    std::ifstream f(log);
    std::ostringstream ss;
    ss << f.rdbuf();
    res.output = ss.str();
    return res;
}

fs::path make_tmp_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / ("mb_cli_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("price vasicek-bond emits the analytic value") {
    const fs::path dir = make_tmp_dir("price");
    const CmdResult res = run_cli(
        "price vasicek-bond --kappa 1 --theta 0.05 --sigma 0.01 --r0 0.03 "
        "--T 1 --out " + (dir / "out").string(),
        dir);
    REQUIRE(res.exit_code == 0);
    const json doc = json::parse(res.output);
    CHECK(doc.at("schema_version") == "1");
    CHECK(doc.at("analytic").get<double>() ==
          doctest::Approx(0.96334).epsilon(1e-5));
    CHECK(fs::exists(dir / "out" / "price.json"));
    CHECK(fs::exists(dir / "out" / "run_manifest.json"));
}

TEST_CASE("attack-e2e is byte-identical across reruns") {
    const fs::path dir = make_tmp_dir("e2e");
    {
        std::ofstream cfg(dir / "cfg.json");
        cfg << R"({"seed": 9, "data": {"n_per_class": 25},)"
            << R"( "train": {"epochs": 6}})";
    }
    const std::string base = "attack-e2e --config " + (dir / "cfg.json").string();
    REQUIRE(run_cli(base + " --out " + (dir / "a").string(), dir).exit_code == 0);
    REQUIRE(run_cli(base + " --out " + (dir / "b").string(), dir).exit_code == 0);
    const std::string ra = read_file(dir / "a" / "report.json");
    CHECK(ra == read_file(dir / "b" / "report.json"));
    CHECK_FALSE(ra.empty());
    const json report = json::parse(ra);
    CHECK(report.at("schema_version") == "1");
    CHECK(report.at("gamma").get<double>() > 0.0);
    CHECK(fs::exists(dir / "a" / "diffusion_states.csv"));
    CHECK(fs::exists(dir / "a" / "loss_curve.csv"));
    CHECK(fs::exists(dir / "a" / "trigger.wav"));
}

TEST_CASE("missing required flag exits 1 with a machine-parsable error") {
    const fs::path dir = make_tmp_dir("missing");
    const CmdResult res = run_cli("poison", dir);
    CHECK(res.exit_code == 1);
    CHECK(res.output.find("error: missing required flag") != std::string::npos);
}

TEST_CASE("unknown subcommand exits 1 with usage text") {
    const fs::path dir = make_tmp_dir("unknown");
    const CmdResult res = run_cli("frobnicate", dir);
    CHECK(res.exit_code == 1);
    CHECK(res.output.find("error:") != std::string::npos);
    CHECK(res.output.find("Usage") != std::string::npos);
}

TEST_CASE("missing input file exits 2") {
    const fs::path dir = make_tmp_dir("io");
    const CmdResult res = run_cli(
        "train --manifest " + (dir / "no_such.jsonl").string() + " --out " +
            (dir / "out").string(),
        dir);
    CHECK(res.exit_code == 2);
    CHECK(res.output.find("error:") != std::string::npos);
}

TEST_CASE("make-trigger writes the wav, sidecar and plot data") {
    const fs::path dir = make_tmp_dir("trigger");
    const CmdResult res = run_cli(
        "make-trigger --drift hull_white --t-steps 20 --duration 0.01 "
        "--seed 3 --out " + (dir / "out").string(),
        dir);
    REQUIRE(res.exit_code == 0);
    const json sidecar = json::parse(read_file(dir / "out" / "trigger.json"));
    CHECK(sidecar.at("schema_version") == "1");
    CHECK(sidecar.at("drift_kind") == "hull_white");
    CHECK(sidecar.at("states").size() == 21);
    CHECK(sidecar.at("schedule").at("alpha").size() == 20);
    CHECK(fs::exists(dir / "out" / "trigger.wav"));
    CHECK(fs::exists(dir / "out" / "diffusion_states.csv"));
}
