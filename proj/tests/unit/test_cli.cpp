#include <unistd.h>

#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "seedlab/cli/cli.hpp"

using namespace seedlab;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result run(std::vector<std::string> args) {
    args.insert(args.begin(), "seedlab");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("seedlab_cli_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

const char* kTinyConfig = R"({
  "data": {"ops": ["shift_content"], "dims": [8], "train_records": 64, "heldout_records": 16},
  "model": {"width": 32, "depth": 2},
  "train": {"steps": 40, "warmup_steps": 10},
  "distill": {"cfg_iters": 20, "fewstep_iters": 20, "teacher_steps": 8, "student_steps": 4,
              "trajectories_per_record": 1, "noise_ref": {"candidates": 2, "epochs": 2, "records": 16}},
  "quant": {"ptq": {"iters": 5}, "calib": {"samples": 16}},
  "eval": {"teacher_steps": 8, "student_steps": 4},
  "sweep": {"w_image": [1.0], "w_text": [1.0, 2.0]}
})";

}  // namespace

TEST_CASE("usage errors exit 2 with usage text on the diagnostic stream") {
    auto r = run({"frobnicate"});
    CHECK(r.code == cli::kExitUsage);
    CHECK(r.err.find("gen-data") != std::string::npos);
    CHECK(r.out.empty());
    CHECK(run({}).code == cli::kExitUsage);
    CHECK(run({"gen-data"}).code == cli::kExitUsage);  // --out is required
    CHECK(run({"train", "--out", "x"}).code == cli::kExitUsage);  // --data is required
    CHECK(run({"gen-data", "--out", "x", "--seed", "abc"}).code == cli::kExitUsage);
    r = run({"--help"});
    CHECK(r.code == cli::kExitOk);
    CHECK(r.out.find("quantize") != std::string::npos);
}

TEST_CASE("config and input errors exit 3") {
    const auto dir = scratch("config");
    write(dir / "bad_key.json", R"({"data": {"train_records": 8, "colour": 1}})");
    write(dir / "bad_top.json", R"({"dataa": {}})");
    write(dir / "not_json.json", "{ nope");
    write(dir / "bad_value.json", R"({"data": {"dims": [7]}})");
    write(dir / "bad_quant.json", R"({"quant": {"bits": 3}})");
    for (const char* f : {"bad_key.json", "bad_top.json", "not_json.json", "bad_value.json"}) {
        const auto r = run({"gen-data", "--config", (dir / f).string(), "--out", (dir / "o").string()});
        CHECK(r.code == cli::kExitConfig);
        CHECK(r.err.find("config") != std::string::npos);
    }
    CHECK(run({"gen-data", "--config", (dir / "missing.json").string(), "--out", (dir / "o").string()}).code ==
          cli::kExitConfig);
    const auto r = run({"train", "--data", (dir / "none.jsonl").string(), "--out", (dir / "o").string()});
    CHECK(r.code == cli::kExitConfig);
    CHECK(r.err.find("dataset not found") != std::string::npos);

    write(dir / "junk.sedl", "not a checkpoint");
    REQUIRE(run({"gen-data", "--config", (dir / "bad_quant.json").string(), "--out", (dir / "d").string()}).code ==
            cli::kExitOk);
    CHECK(run({"quantize", "--config", (dir / "bad_quant.json").string(), "--checkpoint", (dir / "junk.sedl").string(),
               "--data", (dir / "d" / "train.jsonl").string(), "--out", (dir / "o").string()})
              .code == cli::kExitConfig);
    CHECK(run({"sweep", "--checkpoint", (dir / "junk.sedl").string(), "--data", (dir / "d" / "heldout.jsonl").string(),
               "--out", (dir / "o").string()})
              .code == cli::kExitConfig);
}

TEST_CASE("gen-data is byte-identical for a fixed seed") {
    const auto dir = scratch("gen");
    write(dir / "c.json", kTinyConfig);
    const auto cfg = (dir / "c.json").string();
    for (const char* sub : {"a", "b"})
        REQUIRE(run({"gen-data", "--config", cfg, "--seed", "7", "--out", (dir / sub).string()}).code == 0);
    REQUIRE(run({"gen-data", "--config", cfg, "--seed", "8", "--out", (dir / "c").string()}).code == 0);
    for (const char* f : {"train.jsonl", "heldout.jsonl", "train.jsonl.manifest.json", "manifest.json"})
        CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
    CHECK(slurp(dir / "a" / "train.jsonl") != slurp(dir / "c" / "train.jsonl"));

    const auto m = nlohmann::json::parse(slurp(dir / "a" / "manifest.json"));
    CHECK(m["subcommand"] == "gen-data");
    CHECK(m["seed"] == 7);
    CHECK(m["config"]["data"]["train_records"] == 64);
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx",
                  static_cast<unsigned long long>(cli::file_hash(dir / "a" / "train.jsonl")));
    CHECK(m["outputs"]["train.jsonl"] == hex);
}

TEST_CASE("fnv1a matches published vectors") {
    CHECK(cli::fnv1a({}) == 0xcbf29ce484222325ULL);
    const std::uint8_t a[] = {'a'};
    CHECK(cli::fnv1a(a) == 0xaf63dc4c8601ec8cULL);
    const std::uint8_t foobar[] = {'f', 'o', 'o', 'b', 'a', 'r'};
    CHECK(cli::fnv1a(foobar) == 0x85944171f73967e8ULL);
}

TEST_CASE("pipeline runs end to end and contract violations exit 4") {
    const auto dir = scratch("pipe");
    write(dir / "c.json", kTinyConfig);
    const auto cfg = (dir / "c.json").string();
    auto p = [&](const char* s) { return (dir / s).string(); };
    REQUIRE(run({"gen-data", "--config", cfg, "--seed", "3", "--out", p("data")}).code == 0);
    REQUIRE(run({"train", "--config", cfg, "--seed", "3", "--data", p("data/train.jsonl"), "--out", p("train")}).code ==
            0);
    REQUIRE(run({"distill", "--config", cfg, "--seed", "3", "--checkpoint", p("train/teacher.sedl"), "--data",
                 p("data/train.jsonl"), "--out", p("distill")})
                .code == 0);
    REQUIRE(run({"quantize", "--config", cfg, "--seed", "3", "--checkpoint", p("distill/student.sedl"), "--data",
                 p("data/train.jsonl"), "--out", p("quant")})
                .code == 0);
    REQUIRE(run({"eval", "--config", cfg, "--seed", "3", "--checkpoint", p("distill/student.sedl"), "--schemes",
                 p("quant/schemes.json"), "--data", p("data/heldout.jsonl"), "--out", p("eval")})
                .code == 0);
    REQUIRE(run({"sweep", "--config", cfg, "--checkpoint", p("train/teacher.sedl"), "--data",
                 p("data/heldout.jsonl"), "--out", p("sweep")})
                .code == 0);
    REQUIRE(run({"bench", "--config", cfg, "--checkpoint", p("distill/student.sedl"), "--schemes",
                 p("quant/schemes.json"), "--baseline", p("train/teacher.sedl"), "--out", p("bench")})
                .code == 0);

    const auto report = nlohmann::json::parse(slurp(dir / "eval" / "eval_report.json"));
    CHECK(report["n_records"] == 16);
    CHECK(report["nfe"] == 4);
    const auto sweep = slurp(dir / "sweep" / "sweep.csv");
    CHECK(std::count(sweep.begin(), sweep.end(), '\n') == 3);
    const auto cost = nlohmann::json::parse(slurp(dir / "bench" / "cost_report.json"));
    // 24 float evaluations against 4 int8 ones at a quarter weight; the
    // student's guidance embeddings add a little on top.
    CHECK(cost["weighted_mac_reduction"].get<double>() > 16.0);
    CHECK(cost["weighted_mac_reduction"].get<double>() < 24.0);

    // A student is not a valid distillation teacher.
    auto r = run({"distill", "--config", cfg, "--checkpoint", p("distill/student.sedl"), "--data",
                  p("data/train.jsonl"), "--out", p("x")});
    CHECK(r.code == cli::kExitContract);
    CHECK(r.err.find("contract violation") != std::string::npos);
    write(dir / "ref.json", R"({"eval": {"noise": "reference"}})");
    r = run({"eval", "--config", p("ref.json"), "--checkpoint", p("train/teacher.sedl"), "--data",
             p("data/heldout.jsonl"), "--out", p("x")});
    CHECK(r.code == cli::kExitContract);
}
