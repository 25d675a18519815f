#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cogdiag/dataset.hpp"
#include "cogdiag/simulate.hpp"

using namespace cogdiag;
namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct CliResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

CliResult run_cli(const std::string& args, const fs::path& dir) {
    const fs::path out = dir / "stdout.txt";
    const fs::path err = dir / "stderr.txt";
    const std::string command = std::string(COGDIAG_CLI_PATH) + " " + args + " >" + out.string() +
                                " 2>" + err.string();
    const int status = std::system(command.c_str());
    CliResult result;
    result.exit_code = WEXITSTATUS(status);
    result.out = slurp(out);
    result.err = slurp(err);
    return result;
}

fs::path fresh_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / ("cogdiag_cli_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_clean_fixture(const fs::path& dir) {
    ConceptCatalog catalog({{"ka", ConceptKind::Forget, "d0"},
                            {"kb", ConceptKind::Forget, "d1"},
                            {"kr", ConceptKind::Retain, "d2"}});
    QMatrix q;
    q.concept_ids = {"ka", "kb", "kr"};
    q.exercise_ids = {"e0", "e1", "e2"};
    q.cells = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    ResponseLog log;
    for (const auto* s : {"s0", "s1", "s2"}) {
        for (const auto* e : {"e0", "e1", "e2"}) {
            log.entries.push_back({s, e, (s[1] + e[1]) % 2});
        }
    }
    save_catalog(catalog, (dir / "catalog.json").string());
    save_qmatrix(q, (dir / "qmatrix.json").string());
    save_response_log(log, (dir / "log.jsonl").string());
}

std::string q(const fs::path& p) { return p.string(); }

}  // namespace

TEST_CASE("ingest accepts a clean fixture with exit 0") {
    const auto dir = fresh_dir("ingest_ok");
    write_clean_fixture(dir);
    const auto result = run_cli("ingest --catalog " + q(dir / "catalog.json") + " --qmatrix " +
                                    q(dir / "qmatrix.json") + " --log " + q(dir / "log.jsonl") +
                                    " --out " + q(dir / "store"),
                                dir);
    CHECK(result.exit_code == 0);
    CHECK(fs::exists(dir / "store" / "catalog.json"));
    CHECK(fs::exists(dir / "store" / "qmatrix.json"));
    CHECK(fs::exists(dir / "store" / "log.jsonl"));
    CHECK(fs::exists(dir / "store" / "students.json"));
}

TEST_CASE("ingest exits 2 on a malformed log line, citing it") {
    const auto dir = fresh_dir("ingest_parse");
    write_clean_fixture(dir);
    std::ofstream(dir / "log.jsonl", std::ios::app) << "this is not json\n";
    const auto result = run_cli("ingest --catalog " + q(dir / "catalog.json") + " --qmatrix " +
                                    q(dir / "qmatrix.json") + " --log " + q(dir / "log.jsonl") +
                                    " --out " + q(dir / "store"),
                                dir);
    CHECK(result.exit_code == 2);
    CHECK(result.err.find("line 10") != std::string::npos);
}

TEST_CASE("ingest exits 3 on a dangling exercise id, listing it") {
    const auto dir = fresh_dir("ingest_validation");
    write_clean_fixture(dir);
    std::ofstream(dir / "log.jsonl", std::ios::app)
        << R"({"student":"s0","exercise":"e99","score":1})" << "\n";
    const auto result = run_cli("ingest --catalog " + q(dir / "catalog.json") + " --qmatrix " +
                                    q(dir / "qmatrix.json") + " --log " + q(dir / "log.jsonl") +
                                    " --out " + q(dir / "store"),
                                dir);
    CHECK(result.exit_code == 3);
    CHECK(result.err.find("e99") != std::string::npos);
}

namespace {

void write_sim_spec(const fs::path& path) {
    ordered_json catalog = ordered_json::array();
    for (int k = 0; k < 5; ++k) {
        catalog.push_back({{"id", "k" + std::to_string(k)}, {"kind", "forget"}, {"domain", "d"}});
    }
    ordered_json spec{
        {"seed", 11},
        {"catalog", catalog},
        {"exercises", {{"count", 40}, {"multi_fraction", 0.2}}},
        {"discrimination", 6.0},
        {"trajectories",
         ordered_json::array(
             {{{"label", "uni"}, {"mode", "uniform"}, {"steps", 4}, {"decay", 0.4},
               {"base_mastery", {0.8, 0.7, 0.75, 0.85, 0.8}}}})},
    };
    std::ofstream(path) << spec.dump(2);
}

}  // namespace

TEST_CASE("simulate writes the dataset, sidecar, and four checkpoints plus base") {
    const auto dir = fresh_dir("simulate");
    write_sim_spec(dir / "spec.json");
    const auto result =
        run_cli("simulate --spec " + q(dir / "spec.json") + " --out " + q(dir / "world"), dir);
    REQUIRE(result.exit_code == 0);
    for (const auto* name :
         {"catalog.json", "qmatrix.json", "log.jsonl", "students.json", "truth.json"}) {
        CHECK(fs::exists(dir / "world" / name));
    }
    const auto registry = load_registry((dir / "world" / "students.json").string());
    CHECK(registry.size() == 5);  // base + 4 steps
    int steps = 0;
    for (const auto& s : registry.students) {
        if (s.lineage && s.lineage->method == "uni") steps = std::max(steps, s.lineage->step);
    }
    CHECK(steps == 4);
    // summary table on stdout
    CHECK(result.out.find("student,steps,forget_qa") != std::string::npos);
}

TEST_CASE("simulate is byte-identical under a repeated seed") {
    const auto dir = fresh_dir("simulate_repeat");
    write_sim_spec(dir / "spec.json");
    REQUIRE(run_cli("simulate --spec " + q(dir / "spec.json") + " --out " + q(dir / "a"), dir)
                .exit_code == 0);
    REQUIRE(run_cli("simulate --spec " + q(dir / "spec.json") + " --out " + q(dir / "b"), dir)
                .exit_code == 0);
    for (const auto* name :
         {"catalog.json", "qmatrix.json", "log.jsonl", "students.json", "truth.json"}) {
        CHECK(slurp(dir / "a" / name) == slurp(dir / "b" / name));
    }
}

namespace {

void write_run_config(const fs::path& dir, const fs::path& world) {
    ordered_json config{
        {"catalog", (world / "catalog.json").string()},
        {"qmatrix", (world / "qmatrix.json").string()},
        {"log", (world / "log.jsonl").string()},
        {"registry", (world / "students.json").string()},
        {"methods", {"ncdm", "icdm", "fewshot"}},
        {"seed", 7},
        {"ncdm", {{"epochs", 5}, {"learning_rate", 1.0}, {"hidden_width", 8}}},
        {"icdm", {{"epochs", 5}, {"learning_rate", 1.0}, {"hidden_width", 8}}},
        {"fewshot", {{"sample_size", 6}, {"shots", 2}}},
        {"judge", {{"type", "mock"}}},
    };
    std::ofstream(dir / "run.json") << config.dump(2);
}

}  // namespace

TEST_CASE("diagnose produces report, states, and radar artifacts") {
    const auto dir = fresh_dir("diagnose");
    write_sim_spec(dir / "spec.json");
    REQUIRE(run_cli("simulate --spec " + q(dir / "spec.json") + " --out " + q(dir / "world"), dir)
                .exit_code == 0);
    write_run_config(dir, dir / "world");

    const auto result = run_cli(
        "diagnose --config " + q(dir / "run.json") + " --out " + q(dir / "result"), dir);
    REQUIRE(result.exit_code == 0);
    CHECK(fs::exists(dir / "result" / "report.json"));
    CHECK(fs::exists(dir / "result" / "states.csv"));
    CHECK(fs::exists(dir / "result" / "radar.json"));
    CHECK(fs::exists(dir / "result" / "transcript.jsonl"));

    const auto report = ordered_json::parse(slurp(dir / "result" / "report.json"));
    CHECK(report.at("schema_version").get<int>() == 1);
    for (const auto* m : {"ncdm", "icdm", "fewshot"}) {
        CHECK(report.at("methods").at(m).at("ok").get<bool>());
    }

    // the radar series tracks the trajectory steps
    const auto radar = ordered_json::parse(slurp(dir / "result" / "radar.json"));
    CHECK(radar.at("series").size() > 0);

    // an empty method set fails before any compute
    auto broken = ordered_json::parse(slurp(dir / "run.json"));
    broken["methods"] = ordered_json::array();
    std::ofstream(dir / "broken.json") << broken.dump();
    const auto bad = run_cli("diagnose --config " + q(dir / "broken.json"), dir);
    CHECK(bad.exit_code == 3);
}

TEST_CASE("correlate matches the self-correlation and rejects short tables") {
    const auto dir = fresh_dir("correlate");
    {
        std::ofstream table(dir / "table.csv");
        table << "acc,ms\n10,1\n20,2\n30,3\n40,5\n";
    }
    const auto self = run_cli(
        "correlate --table " + q(dir / "table.csv") + " --pairs acc:acc --pairs acc:ms", dir);
    REQUIRE(self.exit_code == 0);
    CHECK(self.out.find("acc,acc,1,") != std::string::npos);

    {
        std::ofstream table(dir / "short.csv");
        table << "acc,ms\n10,1\n20,2\n";
    }
    const auto short_run =
        run_cli("correlate --table " + q(dir / "short.csv") + " --pairs acc:ms", dir);
    CHECK(short_run.exit_code == 3);
}

TEST_CASE("correlate reproduces the published-results correlation") {
    const auto dir = fresh_dir("correlate_published");
    const std::string fixture =
        std::string(COGDIAG_SOURCE_DIR) + "/assets/fixtures/published_results.csv";
    const auto result = run_cli(
        "correlate --table " + fixture + " --pairs acc:ms_ncdm --out " + q(dir / "out.csv"), dir);
    REQUIRE(result.exit_code == 0);
    const auto csv = slurp(dir / "out.csv");
    CHECK(csv.find("acc,ms_ncdm,0.931") != std::string::npos);
}

TEST_CASE("doa subcommand consumes diagnose outputs") {
    const auto dir = fresh_dir("doa");
    write_sim_spec(dir / "spec.json");
    REQUIRE(run_cli("simulate --spec " + q(dir / "spec.json") + " --out " + q(dir / "world"), dir)
                .exit_code == 0);
    write_run_config(dir, dir / "world");
    REQUIRE(run_cli("diagnose --config " + q(dir / "run.json") + " --out " + q(dir / "result"), dir)
                .exit_code == 0);

    const auto world = dir / "world";
    const auto result = run_cli("doa --states " + q(dir / "result" / "states.csv") +
                                    " --method ncdm --catalog " + q(world / "catalog.json") +
                                    " --qmatrix " + q(world / "qmatrix.json") + " --log " +
                                    q(world / "log.jsonl") + " --students " +
                                    q(world / "students.json"),
                                dir);
    REQUIRE(result.exit_code == 0);
    CHECK(result.out.find("concept,doa,valid_comparisons") != std::string::npos);
    CHECK(result.out.find("overall,") != std::string::npos);
}

TEST_CASE("objectives eval prints the requested calculator values") {
    const auto dir = fresh_dir("objectives");
    const std::string fixture =
        std::string(COGDIAG_SOURCE_DIR) + "/assets/fixtures/objectives_example.json";
    const auto result = run_cli("objectives eval --input " + fixture, dir);
    REQUIRE(result.exit_code == 0);
    const auto values = ordered_json::parse(result.out);
    CHECK(values.at("npo_loss").get<double>() == doctest::Approx(20.0 * std::log(2.0)));
    CHECK(values.at("kl_retain").get<double>() == doctest::Approx(0.14384103622589045));
    CHECK(values.at("rmu").at("retain").get<double>() == doctest::Approx(0.0));
    CHECK(values.at("task_vector").size() == 3);
    CHECK(values.at("task_vector")[0].get<double>() == doctest::Approx(1.0 - 5.0 * 0.5));
    CHECK(values.at("gdr_term").get<double>() == doctest::Approx(std::log(2.0)));
}

TEST_CASE("report subcommand summarizes a diagnose run") {
    const auto dir = fresh_dir("report");
    write_sim_spec(dir / "spec.json");
    REQUIRE(run_cli("simulate --spec " + q(dir / "spec.json") + " --out " + q(dir / "world"), dir)
                .exit_code == 0);
    write_run_config(dir, dir / "world");
    REQUIRE(run_cli("diagnose --config " + q(dir / "run.json") + " --out " + q(dir / "result"), dir)
                .exit_code == 0);

    const auto result = run_cli("report --report " + q(dir / "result" / "report.json") +
                                    " --csv-dir " + q(dir / "csv"),
                                dir);
    REQUIRE(result.exit_code == 0);
    CHECK(result.out.find("ms_ncdm") != std::string::npos);
    CHECK(fs::exists(dir / "csv" / "mastery.csv"));
    CHECK(fs::exists(dir / "csv" / "pearson.csv"));

    const auto missing = run_cli("report --report " + q(dir / "nope.json"), dir);
    CHECK(missing.exit_code == 2);
}
