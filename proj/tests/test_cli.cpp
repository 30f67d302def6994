// End-to-end tests that drive the installed binary through a shell, the way
// a user would. The binary's path arrives in AMLFS_BIN.
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CmdResult {
    int exit_code = -1;
    std::string out;
};

std::string binary_path() {
    const char* p = std::getenv("AMLFS_BIN");
    REQUIRE_MESSAGE(p != nullptr, "AMLFS_BIN must point at the amlfs binary");
    return p;
}

// Runs the binary with the given arguments. stderr is discarded unless the
// caller folds it into stdout with merge_stderr. env_prefix lets tests set
// or unset variables for just one invocation.
CmdResult run_cli(const std::string& args, bool merge_stderr = false,
                  const std::string& env_prefix = "env -u AMLFS_WORKERS") {
    std::string cmd = env_prefix + " \"" + binary_path() + "\" " + args;
    cmd += merge_stderr ? " 2>&1" : " 2>/dev/null";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    CmdResult r;
    std::array<char, 4096> buf{};
    std::size_t n;
    while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) {
        r.out.append(buf.data(), n);
    }
    int status = pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

fs::path fresh_dir(const std::string& tag) {
    static int counter = 0;
    fs::path p = fs::temp_directory_path() /
                 ("amlfs_cli_" + tag + "_" + std::to_string(::getpid()) + "_" +
                  std::to_string(++counter));
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE_MESSAGE(is.good(), ("missing file: " + p.string()));
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

json parse_stdout(const std::string& out) {
    json j;
    REQUIRE_NOTHROW(j = json::parse(out));
    return j;
}

// Small, fast dataset shared by most runs.
const std::string kTinyData =
    "--data blobs --classes 3 --per-class 15 --dim 6 --spread 0.2 ";

} // namespace

TEST_CASE("baseline trains and emits manifest, metrics, and checkpoint") {
    auto dir = fresh_dir("baseline");
    auto r = run_cli("baseline " + kTinyData +
                     "--hidden 8 --feature-dim 6 --epochs 3 --seed 7 --out " +
                     dir.string());
    REQUIRE(r.exit_code == 0);

    json out = parse_stdout(r.out);
    REQUIRE(out.contains("final_val_accuracy"));
    double acc = out["final_val_accuracy"];
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);

    json manifest = json::parse(slurp(dir / "manifest.json"));
    CHECK(manifest["command"] == "baseline");
    CHECK(manifest["seed"] == 7);
    CHECK_FALSE(manifest["finished_at"].is_null());
    CHECK(manifest["results"]["final_val_accuracy"] == acc);
    CHECK(manifest["loss"]["name"] == "softmax");
    CHECK(manifest["dataset"]["provenance"].get<std::string>().find("blobs(") == 0);

    std::istringstream metrics(slurp(dir / "metrics.jsonl"));
    std::string line;
    int epochs = 0;
    while (std::getline(metrics, line)) {
        json e = json::parse(line);
        ++epochs;
        CHECK(e["epoch"] == epochs);
        CHECK(e.contains("train_loss"));
        CHECK(e.contains("val_accuracy"));
    }
    CHECK(epochs == 3);
    CHECK(fs::exists(dir / "model.ckpt"));
    fs::remove_all(dir);
}

TEST_CASE("search is byte-deterministic across reruns and worker counts") {
    const std::string args = "search " + kTinyData +
                             "--hidden 8 --feature-dim 6 --B 3 --M 6 --epochs 2 "
                             "--seed 11 --out ";
    auto d1 = fresh_dir("search1");
    auto d2 = fresh_dir("search2");
    auto d3 = fresh_dir("search3");
    REQUIRE(run_cli(args + d1.string() + " --workers 1").exit_code == 0);
    REQUIRE(run_cli(args + d2.string() + " --workers 2").exit_code == 0);
    // Worker count injected through the environment instead of the flag.
    REQUIRE(run_cli(args + d3.string(), false, "env AMLFS_WORKERS=3").exit_code == 0);

    const std::string log1 = slurp(d1 / "search_log.jsonl");
    CHECK(log1 == slurp(d2 / "search_log.jsonl"));
    CHECK(log1 == slurp(d3 / "search_log.jsonl"));
    CHECK(slurp(d1 / "mu_trajectory.csv") == slurp(d2 / "mu_trajectory.csv"));
    CHECK(slurp(d1 / "loss_params.json") == slurp(d2 / "loss_params.json"));
    CHECK(slurp(d1 / "winner.ckpt") == slurp(d2 / "winner.ckpt"));

    // Two epochs of records, each a B=3 population.
    std::istringstream log(log1);
    std::string line;
    int records = 0;
    while (std::getline(log, line)) {
        json rec = json::parse(line);
        ++records;
        CHECK(rec["epoch"] == records);
        CHECK(rec["thetas"].size() == 3);
        CHECK(rec["raw_rewards"].size() == 3);
        CHECK(rec["mu_before"].size() == 24);
        CHECK_FALSE(rec.contains("duration_seconds"));
    }
    CHECK(records == 2);

    // The workers flag is echoed in the manifest but never in the results.
    json m2 = json::parse(slurp(d2 / "manifest.json"));
    CHECK(m2["search"]["workers"] == 2);
    json m3 = json::parse(slurp(d3 / "manifest.json"));
    CHECK(m3["search"]["workers"] == 3);

    fs::remove_all(d1);
    fs::remove_all(d2);
    fs::remove_all(d3);
}

TEST_CASE("a manifest reproduces its search run byte for byte") {
    const std::string base = "search " + kTinyData +
                             "--hidden 8 --feature-dim 6 --B 3 --M 6 --epochs 2 "
                             "--sigma 0.25 --eta 0.1 --outer-opt sgd --seed 13 --out ";
    auto d1 = fresh_dir("manifest_src");
    REQUIRE(run_cli(base + d1.string()).exit_code == 0);

    auto d2 = fresh_dir("manifest_replay");
    auto r = run_cli("search --from-manifest " + (d1 / "manifest.json").string() +
                     " --out " + d2.string());
    REQUIRE(r.exit_code == 0);
    CHECK(slurp(d1 / "search_log.jsonl") == slurp(d2 / "search_log.jsonl"));
    CHECK(slurp(d1 / "loss_params.json") == slurp(d2 / "loss_params.json"));
    CHECK(slurp(d1 / "winner.ckpt") == slurp(d2 / "winner.ckpt"));

    // A baseline manifest is rejected by search.
    auto d3 = fresh_dir("manifest_wrongkind");
    REQUIRE(run_cli("baseline " + kTinyData + "--epochs 1 --seed 1 --out " +
                    d3.string()).exit_code == 0);
    auto bad = run_cli("search --from-manifest " + (d3 / "manifest.json").string() +
                       " --out " + fresh_dir("unused").string(), true);
    CHECK(bad.exit_code == 1);
    CHECK(bad.out.find("error:") != std::string::npos);

    fs::remove_all(d1);
    fs::remove_all(d2);
    fs::remove_all(d3);
}

TEST_CASE("eval prints the exact documented schema") {
    auto dir = fresh_dir("evaltrain");
    // Zero spread makes the task trivially separable; the gentle learning
    // rate keeps the tiny full-batch problem from oscillating.
    REQUIRE(run_cli("baseline --data blobs --classes 3 --per-class 15 --dim 6 "
                    "--spread 0 --hidden 8 --feature-dim 6 --epochs 20 --lr 0.02 "
                    "--seed 3 --out " + dir.string()).exit_code == 0);
    const std::string ckpt = (dir / "model.ckpt").string();
    auto r = run_cli("eval --data blobs --classes 3 --per-class 15 --dim 6 "
                     "--spread 0 --seed 3 --split train --checkpoint " + ckpt);
    REQUIRE(r.exit_code == 0);
    json j = parse_stdout(r.out);
    CHECK(j.size() == 3); // exactly accuracy, checkpoint, n
    CHECK(j["accuracy"] == 1.0);
    CHECK(j["n"] == 36); // 3 classes x 12 train rows
    CHECK(j["checkpoint"] == ckpt);

    auto rv = run_cli("eval --data blobs --classes 3 --per-class 15 --dim 6 "
                      "--spread 0 --seed 3 --split val --checkpoint " + ckpt);
    REQUIRE(rv.exit_code == 0);
    json jv = parse_stdout(rv.out);
    CHECK(jv["n"] == 9);
    CHECK(jv["accuracy"] == 1.0);
    fs::remove_all(dir);
}

TEST_CASE("export-grads writes matching searched and reference rows") {
    auto dir = fresh_dir("grads");
    REQUIRE(run_cli("baseline " + kTinyData +
                    "--hidden 8 --feature-dim 6 --epochs 2 --seed 5 --out " +
                    dir.string()).exit_code == 0);

    // Hand-written identity params: the searched loss is then exactly softmax,
    // and the flag accepts files authored outside the tool.
    json params;
    params["M"] = 6;
    params["t_domain"] = {-1.0, 1.0};
    params["tau_domain"] = {0.0, 1.0};
    std::vector<double> theta(24, 0.0);
    for (int i = 0; i < 6; ++i) theta[i] = theta[12 + i] = 1.0;
    params["theta"] = theta;
    auto params_path = dir / "identity_params.json";
    std::ofstream(params_path) << params.dump();

    auto csv_path = dir / "grads.csv";
    auto r = run_cli("export-grads " + kTinyData + "--seed 5 --split val " +
                     "--checkpoint " + (dir / "model.ckpt").string() +
                     " --loss-params " + params_path.string() +
                     " --reference softmax --output " + csv_path.string());
    REQUIRE(r.exit_code == 0);

    std::istringstream csv(slurp(csv_path));
    std::string line;
    REQUIRE(std::getline(csv, line));
    CHECK(line == "f_target,grad_norm_target,loss_name");
    std::map<std::string, std::vector<std::pair<double, double>>> by_name;
    while (std::getline(csv, line)) {
        auto c1 = line.find(',');
        auto c2 = line.find(',', c1 + 1);
        by_name[line.substr(c2 + 1)].push_back(
            {std::stod(line.substr(0, c1)), std::stod(line.substr(c1 + 1, c2 - c1 - 1))});
    }
    REQUIRE(by_name.count("searched") == 1);
    REQUIRE(by_name.count("softmax") == 1);
    const auto& searched = by_name["searched"];
    const auto& ref = by_name["softmax"];
    REQUIRE(searched.size() == 9); // val rows
    REQUIRE(ref.size() == 9);
    // Same pass, same samples: f_target identical, and with identity params
    // the gradient norms agree to rounding error.
    for (std::size_t i = 0; i < searched.size(); ++i) {
        CHECK(searched[i].first == ref[i].first);
        CHECK(std::abs(searched[i].second - ref[i].second) < 1e-9);
    }
    fs::remove_all(dir);
}

TEST_CASE("margin losses force the cosine head and record it") {
    auto dir = fresh_dir("forced");
    auto r = run_cli("baseline " + kTinyData +
                     "--hidden 8 --feature-dim 6 --epochs 1 --seed 2 "
                     "--loss arcface --head linear --out " + dir.string());
    REQUIRE(r.exit_code == 0);
    json manifest = json::parse(slurp(dir / "manifest.json"));
    CHECK(manifest["model"]["head_requested"] == "linear");
    CHECK(manifest["model"]["head"] == "cosine");
    CHECK(manifest["model"]["head_forced"] == true);

    // A plain softmax baseline honors the request.
    auto dir2 = fresh_dir("unforced");
    REQUIRE(run_cli("baseline " + kTinyData +
                    "--hidden 8 --feature-dim 6 --epochs 1 --seed 2 "
                    "--loss softmax --head linear --out " + dir2.string())
                .exit_code == 0);
    json m2 = json::parse(slurp(dir2 / "manifest.json"));
    CHECK(m2["model"]["head"] == "linear");
    CHECK(m2["model"]["head_forced"] == false);
    fs::remove_all(dir);
    fs::remove_all(dir2);
}

TEST_CASE("usage problems exit 2, runtime failures exit 1") {
    SUBCASE("unknown loss choice") {
        auto r = run_cli("baseline --loss nonsense --out /tmp/amlfs_never", true);
        CHECK(r.exit_code == 2);
    }
    SUBCASE("population of zero") {
        auto r = run_cli("search --B 0 --out /tmp/amlfs_never", true);
        CHECK(r.exit_code == 2);
    }
    SUBCASE("missing required --out") {
        auto r = run_cli("baseline " + kTinyData, true);
        CHECK(r.exit_code == 2);
    }
    SUBCASE("no subcommand") {
        auto r = run_cli("", true);
        CHECK(r.exit_code == 2);
    }
    SUBCASE("malformed AMLFS_WORKERS") {
        auto dir = fresh_dir("badenv");
        auto r = run_cli("search " + kTinyData + "--B 2 --epochs 1 --out " +
                         dir.string(), true, "env AMLFS_WORKERS=notanumber");
        CHECK(r.exit_code == 2);
        fs::remove_all(dir);
    }
    SUBCASE("evaluating a corrupt checkpoint") {
        auto p = fs::temp_directory_path() / "amlfs_cli_corrupt.ckpt";
        std::ofstream(p) << "this is not a checkpoint";
        auto r = run_cli("eval " + kTinyData + "--seed 1 --checkpoint " + p.string(), true);
        CHECK(r.exit_code == 1);
        CHECK(r.out.find("error:") != std::string::npos);
        fs::remove(p);
    }
    SUBCASE("missing csv file") {
        auto r = run_cli("baseline --data csv --csv-path /nonexistent/x.csv "
                         "--epochs 1 --out " + fresh_dir("csvfail").string(), true);
        CHECK(r.exit_code == 1);
        CHECK(r.out.find("error:") != std::string::npos);
    }
}

TEST_CASE("version flag prints and exits cleanly") {
    auto r = run_cli("--version");
    CHECK(r.exit_code == 0);
    CHECK_FALSE(r.out.empty());
}
