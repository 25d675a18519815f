// cogdiag: cognitive-diagnosis toolkit for response-log datasets.
//
// Subcommands: ingest, simulate, diagnose, correlate, doa, objectives eval,
// report. Exit codes: 0 success, 2 parse error, 3 validation error,
// 4 runtime/divergence, 5 judge transport.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cogdiag/dataset.hpp"
#include "cogdiag/errors.hpp"
#include "cogdiag/icdm.hpp"
#include "cogdiag/metrics.hpp"
#include "cogdiag/ncdm.hpp"
#include "cogdiag/objectives.hpp"
#include "cogdiag/report.hpp"
#include "cogdiag/rng.hpp"
#include "cogdiag/simulate.hpp"
#include "cogdiag/tracing.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitParse = 2;
constexpr int kExitValidation = 3;
constexpr int kExitRuntime = 4;
constexpr int kExitJudge = 5;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw cogdiag::ParseError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw cogdiag::ParseError("cannot write '" + path + "'");
    out << text;
}

struct IngestArgs {
    std::string catalog, qmatrix, log, registry, out = ".";
};

int cmd_ingest(const IngestArgs& args) {
    cogdiag::Dataset dataset;
    dataset.catalog = cogdiag::load_catalog(args.catalog);
    dataset.qmatrix = cogdiag::load_qmatrix(args.qmatrix);
    dataset.log = cogdiag::load_response_log(args.log);
    dataset.registry = args.registry.empty() ? cogdiag::registry_from_log(dataset.log)
                                             : cogdiag::load_registry(args.registry);

    const auto report = cogdiag::validate_dataset(dataset.catalog, dataset.qmatrix,
                                                  dataset.registry, dataset.log);
    if (!report.ok()) {
        std::cerr << report.violations.size() << " validation violation(s):\n";
        for (const auto& v : report.violations) {
            std::cerr << "  [" << v.code << "] " << v.message << "\n";
        }
        return kExitValidation;
    }

    fs::create_directories(args.out);
    cogdiag::save_catalog(dataset.catalog, (fs::path(args.out) / "catalog.json").string());
    cogdiag::save_qmatrix(dataset.qmatrix, (fs::path(args.out) / "qmatrix.json").string());
    cogdiag::save_response_log(dataset.log, (fs::path(args.out) / "log.jsonl").string());
    cogdiag::save_registry(dataset.registry, (fs::path(args.out) / "students.json").string());
    std::cout << "ok: " << dataset.registry.size() << " students, "
              << dataset.qmatrix.n_exercises() << " exercises, " << dataset.catalog.size()
              << " concepts, " << dataset.log.entries.size() << " responses\n";
    return kExitOk;
}

// --- simulate ----------------------------------------------------------------

int cmd_simulate(const std::string& spec_path, const std::string& out_dir,
                 std::uint64_t seed_override, bool has_seed_override) {
    ordered_json spec;
    try {
        spec = ordered_json::parse(read_file(spec_path));
    } catch (const nlohmann::json::parse_error& e) {
        throw cogdiag::ParseError(std::string("simulation spec: ") + e.what());
    }

    const std::uint64_t seed =
        has_seed_override ? seed_override : spec.value("seed", std::uint64_t{42});

    cogdiag::ConceptCatalog catalog;
    if (spec.contains("catalog_path")) {
        catalog = cogdiag::load_catalog(spec.at("catalog_path").get<std::string>());
    } else {
        catalog = cogdiag::parse_catalog_json(spec.at("catalog").dump());
    }

    const auto& ex = spec.at("exercises");
    const std::size_t n_exercises = ex.at("count").get<std::size_t>();
    const double multi_fraction = ex.value("multi_fraction", 0.3);
    const double diff_lo = ex.value("difficulty_min", 0.25);
    const double diff_hi = ex.value("difficulty_max", 0.75);
    const double discrimination = spec.value("discrimination", 6.0);

    const auto qmatrix = cogdiag::random_qmatrix(catalog, n_exercises, multi_fraction, seed);
    const auto difficulty = cogdiag::sample_difficulties(n_exercises, diff_lo, diff_hi, seed);

    std::vector<cogdiag::TrueStudent> truth;
    cogdiag::ResponseLog log;
    cogdiag::StudentRegistry registry;

    auto emit_student = [&](const cogdiag::TrueStudent& student, const cogdiag::ResponseLog& slog) {
        truth.push_back(student);
        registry.students.push_back({student.id, student.lineage, student.synthetic});
        log.entries.insert(log.entries.end(), slog.entries.begin(), slog.entries.end());
    };

    std::vector<cogdiag::TrueStudent> cohort;
    if (spec.contains("cohort")) {
        const auto& c = spec.at("cohort");
        cohort = cogdiag::sample_cohort(c.at("students").get<std::size_t>(), catalog, seed,
                                        c.value("separation", 0.8));
        const auto cohort_log =
            cogdiag::sample_responses(cohort, qmatrix, difficulty, discrimination,
                                      cogdiag::Rng::derive(seed, 0xc10));
        std::size_t offset = 0;
        for (const auto& student : cohort) {
            cogdiag::ResponseLog slog;
            slog.entries.assign(cohort_log.entries.begin() + offset,
                                cohort_log.entries.begin() + offset + n_exercises);
            offset += n_exercises;
            emit_student(student, slog);
        }
    }

    if (spec.contains("trajectories")) {
        bool base_emitted = false;
        std::size_t traj_index = 0;
        for (const auto& t : spec.at("trajectories")) {
            cogdiag::TrajectorySpec traj;
            traj.label = t.value("label", "unlearn" + std::to_string(traj_index));
            traj.steps = t.value("steps", 4);
            traj.mode = t.value("mode", std::string("uniform")) == "selective"
                            ? cogdiag::TrajectoryMode::Selective
                            : cogdiag::TrajectoryMode::Uniform;
            if (t.contains("targets")) {
                traj.targeted_concepts = t.at("targets").get<std::vector<std::string>>();
            }
            traj.decay_rate = t.value("decay", 0.5);

            cogdiag::TrueStudent base;
            base.id = t.value("base_id", "base");
            if (t.contains("base_mastery")) {
                base.mastery = t.at("base_mastery").get<std::vector<double>>();
            } else if (!cohort.empty()) {
                base.mastery = cohort[t.value("base_index", std::size_t{0})].mastery;
                base.id = cohort[t.value("base_index", std::size_t{0})].id + "+base";
            } else {
                throw cogdiag::ConfigError("trajectory needs base_mastery or a cohort");
            }
            base.lineage = cogdiag::Lineage{"base", 0};

            if (t.contains("match_expected_accuracy")) {
                traj.decay_rate = cogdiag::solve_decay_for_accuracy(
                    base, traj, catalog, qmatrix, difficulty, discrimination,
                    t.at("match_expected_accuracy").get<double>());
            }

            const auto steps =
                cogdiag::run_trajectory(base, traj, catalog, qmatrix, difficulty, discrimination,
                                        cogdiag::Rng::derive(seed, 0x17a + traj_index));
            for (const auto& step : steps) {
                if (step.student.id == base.id) {
                    if (base_emitted) continue;
                    base_emitted = true;
                }
                emit_student(step.student, step.log);
            }
            ++traj_index;
        }
    }

    if (truth.empty()) throw cogdiag::ConfigError("simulation spec produced no students");

    fs::create_directories(out_dir);
    cogdiag::save_catalog(catalog, (fs::path(out_dir) / "catalog.json").string());
    cogdiag::save_qmatrix(qmatrix, (fs::path(out_dir) / "qmatrix.json").string());
    cogdiag::save_response_log(log, (fs::path(out_dir) / "log.jsonl").string());
    cogdiag::save_registry(registry, (fs::path(out_dir) / "students.json").string());
    cogdiag::save_truth(truth, (fs::path(out_dir) / "truth.json").string());
    {
        ordered_json d = ordered_json::array();
        for (double v : difficulty) d.push_back(v);
        write_file((fs::path(out_dir) / "difficulty.json").string(),
                   ordered_json{{"discrimination", discrimination}, {"difficulty", d}}.dump(2) + "\n");
    }

    std::cout << "student,steps,forget_qa\n";
    for (const auto& student : truth) {
        double acc = cogdiag::expected_accuracy(student.mastery, qmatrix, difficulty, discrimination);
        std::cout << student.id << "," << (student.lineage ? student.lineage->step : 0) << ","
                  << 100.0 * acc << "\n";
    }
    return kExitOk;
}

// --- diagnose ----------------------------------------------------------------

int cmd_diagnose(cogdiag::RunConfig config) {
    config.check();
    cogdiag::Dataset dataset;
    dataset.catalog = cogdiag::load_catalog(config.catalog_path);
    dataset.qmatrix = cogdiag::load_qmatrix(config.qmatrix_path);
    dataset.log = cogdiag::load_response_log(config.log_path);
    dataset.registry = config.registry_path.empty()
                           ? cogdiag::registry_from_log(dataset.log)
                           : cogdiag::load_registry(config.registry_path);

    const auto output = cogdiag::run_diagnosis(dataset, config);

    std::map<std::string, std::string> digests{
        {"catalog", cogdiag::file_digest(config.catalog_path)},
        {"qmatrix", cogdiag::file_digest(config.qmatrix_path)},
        {"log", cogdiag::file_digest(config.log_path)},
    };
    if (!config.registry_path.empty()) {
        digests["registry"] = cogdiag::file_digest(config.registry_path);
    }

    fs::create_directories(config.out_dir);
    write_file((fs::path(config.out_dir) / "report.json").string(),
               cogdiag::build_report_json(output, config, digests));
    {
        std::ofstream csv(fs::path(config.out_dir) / "states.csv");
        cogdiag::write_states_csv(output, csv);
    }
    write_file((fs::path(config.out_dir) / "radar.json").string(),
               cogdiag::build_radar_json(output));
    if (!output.transcript.empty()) {
        std::ofstream jsonl(fs::path(config.out_dir) / "transcript.jsonl");
        cogdiag::TraceResult audit;
        audit.transcript = output.transcript;
        audit.write_transcript_jsonl(jsonl);
    }

    int exit_code = kExitOk;
    for (const auto& [name, outcome] : output.methods) {
        if (outcome.ok) {
            std::cout << name << ": ok (" << outcome.states.size() << " states)\n";
        } else {
            std::cout << name << ": FAILED (" << outcome.error << ")\n";
            const bool judge_failure = outcome.error.find("judge") != std::string::npos ||
                                       outcome.error.find("verdict") != std::string::npos;
            exit_code = judge_failure ? kExitJudge : kExitRuntime;
        }
    }
    return exit_code;
}

// --- correlate ----------------------------------------------------------------

std::map<std::string, std::vector<double>> read_columns_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw cogdiag::ParseError("cannot open '" + path + "'");
    std::string line;
    std::vector<std::string> header;
    std::map<std::string, std::vector<double>> columns;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (header.empty()) {
            header = fields;
            continue;
        }
        if (fields.size() != header.size()) {
            throw cogdiag::ParseError(path + ":" + std::to_string(lineno) + ": expected " +
                                      std::to_string(header.size()) + " fields");
        }
        for (std::size_t i = 0; i < fields.size(); ++i) {
            try {
                columns[header[i]].push_back(std::stod(fields[i]));
            } catch (const std::exception&) {
                // non-numeric column (ids, labels): skip
            }
        }
    }
    if (header.empty()) throw cogdiag::ParseError(path + ": empty table");
    return columns;
}

int cmd_correlate(const std::string& table_path, const std::vector<std::string>& pairs,
                  const std::string& out_path) {
    const auto columns = read_columns_csv(table_path);
    std::ostringstream csv;
    csv << "x,y,r,p,n\n";
    for (const auto& pair : pairs) {
        const auto colon = pair.find(':');
        if (colon == std::string::npos) {
            throw cogdiag::ConfigError("pair '" + pair + "' is not of the form x:y");
        }
        const std::string a = pair.substr(0, colon);
        const std::string b = pair.substr(colon + 1);
        if (!columns.contains(a)) throw cogdiag::ConfigError("no numeric column '" + a + "'");
        if (!columns.contains(b)) throw cogdiag::ConfigError("no numeric column '" + b + "'");
        const auto result = cogdiag::pearson(columns.at(a), columns.at(b));
        csv << a << "," << b << "," << result.r << "," << result.p << "," << result.n << "\n";
    }
    if (out_path.empty()) {
        std::cout << csv.str();
    } else {
        write_file(out_path, csv.str());
    }
    return kExitOk;
}

// --- doa -----------------------------------------------------------------------

int cmd_doa(const std::string& states_path, const std::string& method,
            const std::string& catalog_path, const std::string& qmatrix_path,
            const std::string& log_path, const std::string& registry_path,
            const std::string& out_path) {
    const auto catalog = cogdiag::load_catalog(catalog_path);
    const auto qmatrix = cogdiag::load_qmatrix(qmatrix_path);
    const auto log = cogdiag::load_response_log(log_path);
    const auto registry = registry_path.empty() ? cogdiag::registry_from_log(log)
                                                : cogdiag::load_registry(registry_path);
    const auto encoded = cogdiag::encode_log(log, registry, qmatrix);

    // states.csv rows: student,method,<one column per concept>
    std::ifstream in(states_path);
    if (!in) throw cogdiag::ParseError("cannot open '" + states_path + "'");
    std::string line;
    std::getline(in, line);  // header
    std::vector<double> flat(registry.size() * catalog.size(),
                             std::numeric_limits<double>::quiet_NaN());
    std::size_t filled = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string student, row_method, field;
        std::getline(ss, student, ',');
        std::getline(ss, row_method, ',');
        if (row_method != method) continue;
        const auto index = registry.index_of(student);
        if (!index) throw cogdiag::ValidationError("states row for unknown student '" + student + "'");
        std::size_t k = 0;
        while (std::getline(ss, field, ',')) {
            if (k >= catalog.size()) throw cogdiag::ParseError("states row too wide for catalog");
            flat[*index * catalog.size() + k++] = std::stod(field);
        }
        if (k != catalog.size()) throw cogdiag::ParseError("states row too narrow for catalog");
        ++filled;
    }
    if (filled != registry.size()) {
        throw cogdiag::ValidationError("states file covers " + std::to_string(filled) + " of " +
                                       std::to_string(registry.size()) + " students for method '" +
                                       method + "'");
    }

    const auto report = cogdiag::doa_report(flat, catalog.size(), encoded, qmatrix);
    std::ostringstream csv;
    report.write_csv(csv, catalog);
    if (out_path.empty()) {
        std::cout << csv.str();
    } else {
        write_file(out_path, csv.str());
    }
    return kExitOk;
}

// --- objectives eval -------------------------------------------------------------

cogdiag::SequenceLikelihood parse_sequence(const ordered_json& j) {
    cogdiag::SequenceLikelihood seq;
    seq.token_logprobs = j.at("token_logprobs").get<std::vector<double>>();
    if (j.contains("ref_token_logprobs")) {
        seq.ref_token_logprobs = j.at("ref_token_logprobs").get<std::vector<double>>();
    }
    return seq;
}

int cmd_objectives_eval(const std::string& input_path) {
    ordered_json input;
    try {
        input = ordered_json::parse(read_file(input_path));
    } catch (const nlohmann::json::parse_error& e) {
        throw cogdiag::ParseError(std::string("objectives input: ") + e.what());
    }
    ordered_json out = ordered_json::object();

    auto parse_batch = [](const ordered_json& j) {
        std::vector<cogdiag::SequenceLikelihood> batch;
        for (const auto& item : j) batch.push_back(parse_sequence(item));
        return batch;
    };

    if (input.contains("ga")) {
        out["ga_loss"] = cogdiag::ga_loss(parse_batch(input.at("ga").at("batch")));
    }
    if (input.contains("npo")) {
        out["npo_loss"] = cogdiag::npo_loss(parse_batch(input.at("npo").at("batch")),
                                            input.at("npo").value("beta", 0.1));
    }
    if (input.contains("rmu")) {
        const auto& r = input.at("rmu");
        cogdiag::ActivationPair pair;
        pair.current = r.at("current").get<std::vector<std::vector<double>>>();
        if (r.contains("reference")) {
            pair.reference = r.at("reference").get<std::vector<std::vector<double>>>();
        }
        pair.control = r.at("control").get<std::vector<double>>();
        const auto losses = cogdiag::rmu_losses(pair, r.value("alpha", 1.0));
        out["rmu"] = {{"forget", losses.forget}, {"retain", losses.retain}, {"total", losses.total}};
    }
    if (input.contains("task_vector")) {
        const auto& t = input.at("task_vector");
        out["task_vector"] = cogdiag::task_vector(t.at("f0").get<std::vector<double>>(),
                                                  t.at("f_reinforce").get<std::vector<double>>(),
                                                  t.value("alpha", 1.0));
    }
    if (input.contains("kl")) {
        out["kl_retain"] = cogdiag::kl_retain(input.at("kl").at("p").get<std::vector<double>>(),
                                              input.at("kl").at("q").get<std::vector<double>>());
    }
    if (input.contains("gdr")) {
        out["gdr_term"] = cogdiag::gdr_term(parse_batch(input.at("gdr").at("batch")));
    }
    std::cout << out.dump(2) << "\n";
    return kExitOk;
}

// --- report ----------------------------------------------------------------------

int cmd_report(const std::string& report_path, const std::string& csv_dir) {
    ordered_json report;
    try {
        report = ordered_json::parse(read_file(report_path));
    } catch (const nlohmann::json::parse_error& e) {
        throw cogdiag::ParseError(std::string("report: ") + e.what());
    }

    std::cout << "schema " << report.value("schema_version", 0) << ", "
              << report.at("students").size() << " students\n";
    std::cout << "\nstudent";
    std::vector<std::string> method_names;
    for (const auto& [name, m] : report.at("methods").items()) {
        if (m.value("ok", false)) {
            method_names.push_back(name);
            std::cout << ",ms_" << name;
        } else {
            std::cout << "\n  (method " << name << " failed: " << m.value("error", "") << ")";
        }
    }
    std::cout << ",qa_forget,qa_retain\n";
    for (const auto& student : report.at("students")) {
        const std::string id = student.at("id").get<std::string>();
        std::cout << id;
        for (const auto& name : method_names) {
            const auto& ms = report.at("methods").at(name).at("ms");
            std::cout << ",";
            if (ms.contains(id)) std::cout << 100.0 * ms.at(id).get<double>();
        }
        std::cout << ",";
        if (report.at("qa_accuracy").at("forget").contains(id)) {
            std::cout << report.at("qa_accuracy").at("forget").at(id).get<double>();
        }
        std::cout << ",";
        if (report.at("qa_accuracy").at("retain").contains(id)) {
            std::cout << report.at("qa_accuracy").at("retain").at(id).get<double>();
        }
        std::cout << "\n";
    }
    for (const auto& name : method_names) {
        const auto& m = report.at("methods").at(name);
        if (m.contains("doa") && !m.at("doa").at("overall").is_null()) {
            std::cout << "doa_" << name << "," << m.at("doa").at("overall").get<double>() << "\n";
        }
    }

    if (!csv_dir.empty()) {
        fs::create_directories(csv_dir);
        std::ostringstream ms_csv;
        ms_csv << "student";
        for (const auto& name : method_names) ms_csv << ",ms_" << name;
        ms_csv << "\n";
        for (const auto& student : report.at("students")) {
            const std::string id = student.at("id").get<std::string>();
            ms_csv << id;
            for (const auto& name : method_names) {
                const auto& ms = report.at("methods").at(name).at("ms");
                ms_csv << ",";
                if (ms.contains(id)) ms_csv << ms.at(id).get<double>();
            }
            ms_csv << "\n";
        }
        write_file((fs::path(csv_dir) / "mastery.csv").string(), ms_csv.str());

        std::ostringstream pearson_csv;
        pearson_csv << "x,y,r,p,n\n";
        for (const auto& row : report.at("pearson")) {
            pearson_csv << row.at("x").get<std::string>() << "," << row.at("y").get<std::string>()
                        << "," << row.at("r").get<double>() << "," << row.at("p").get<double>()
                        << "," << row.at("n").get<std::size_t>() << "\n";
        }
        write_file((fs::path(csv_dir) / "pearson.csv").string(), pearson_csv.str());
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cognitive-diagnosis toolkit for response-log datasets"};
    app.require_subcommand(1);

    // ingest
    IngestArgs ingest_args;
    auto* ingest = app.add_subcommand("ingest", "validate a dataset and write canonical copies");
    ingest->add_option("--catalog", ingest_args.catalog, "concept catalog JSON")->required();
    ingest->add_option("--qmatrix", ingest_args.qmatrix, "q-matrix JSON")->required();
    ingest->add_option("--log", ingest_args.log, "response log JSONL")->required();
    ingest->add_option("--students", ingest_args.registry, "student registry JSON (optional)");
    ingest->add_option("--out", ingest_args.out, "output directory");

    // simulate
    std::string sim_spec, sim_out = ".";
    std::uint64_t sim_seed = 0;
    auto* simulate = app.add_subcommand("simulate", "generate a synthetic dataset with ground truth");
    simulate->add_option("--spec", sim_spec, "simulation spec JSON")->required();
    simulate->add_option("--out", sim_out, "output directory");
    auto* sim_seed_opt = simulate->add_option("--seed", sim_seed, "seed override");

    // diagnose
    std::string diag_config_path, diag_out, diag_methods;
    std::uint64_t diag_seed = 0;
    auto* diagnose = app.add_subcommand("diagnose", "run the selected diagnosis methods");
    diagnose->add_option("--config", diag_config_path, "run config JSON")->required();
    diagnose->add_option("--out", diag_out, "output directory override");
    diagnose->add_option("--methods", diag_methods, "comma-separated method override");
    auto* diag_seed_opt = diagnose->add_option("--seed", diag_seed, "seed override");

    // correlate
    std::string corr_table, corr_out;
    std::vector<std::string> corr_pairs;
    auto* correlate = app.add_subcommand("correlate", "Pearson r/p for column pairs of a CSV table");
    correlate->add_option("--table", corr_table, "CSV table with a header row")->required();
    correlate->add_option("--pairs", corr_pairs, "column pairs, e.g. acc:ms_ncdm")->required();
    correlate->add_option("--out", corr_out, "output CSV (stdout when omitted)");

    // doa
    std::string doa_states, doa_method = "ncdm", doa_catalog, doa_qmatrix, doa_log, doa_registry,
                doa_out;
    auto* doa_cmd = app.add_subcommand("doa", "degree-of-agreement of diagnosed states");
    doa_cmd->add_option("--states", doa_states, "states CSV from diagnose")->required();
    doa_cmd->add_option("--method", doa_method, "which method's rows to use");
    doa_cmd->add_option("--catalog", doa_catalog, "concept catalog JSON")->required();
    doa_cmd->add_option("--qmatrix", doa_qmatrix, "q-matrix JSON")->required();
    doa_cmd->add_option("--log", doa_log, "response log JSONL")->required();
    doa_cmd->add_option("--students", doa_registry, "student registry JSON (optional)");
    doa_cmd->add_option("--out", doa_out, "output CSV (stdout when omitted)");

    // objectives eval
    auto* objectives = app.add_subcommand("objectives", "numeric unlearning-objective calculators");
    std::string obj_input;
    auto* obj_eval = objectives->add_subcommand("eval", "evaluate objectives from a JSON file");
    obj_eval->add_option("--input", obj_input, "input JSON")->required();
    objectives->require_subcommand(1);

    // report
    std::string report_path, report_csv_dir;
    auto* report_cmd = app.add_subcommand("report", "summarize a diagnosis report");
    report_cmd->add_option("--report", report_path, "report JSON from diagnose")->required();
    report_cmd->add_option("--csv-dir", report_csv_dir, "also export CSV tables here");

    CLI11_PARSE(app, argc, argv);

    try {
        if (ingest->parsed()) return cmd_ingest(ingest_args);
        if (simulate->parsed()) return cmd_simulate(sim_spec, sim_out, sim_seed, !sim_seed_opt->empty());
        if (diagnose->parsed()) {
            auto config = cogdiag::load_run_config(diag_config_path);
            if (!diag_out.empty()) config.out_dir = diag_out;
            if (!diag_seed_opt->empty()) config.seed = diag_seed;
            if (!diag_methods.empty()) {
                config.methods.clear();
                std::stringstream ss(diag_methods);
                std::string m;
                while (std::getline(ss, m, ',')) config.methods.insert(m);
            }
            return cmd_diagnose(std::move(config));
        }
        if (correlate->parsed()) return cmd_correlate(corr_table, corr_pairs, corr_out);
        if (doa_cmd->parsed()) {
            return cmd_doa(doa_states, doa_method, doa_catalog, doa_qmatrix, doa_log, doa_registry,
                           doa_out);
        }
        if (obj_eval->parsed()) return cmd_objectives_eval(obj_input);
        if (report_cmd->parsed()) return cmd_report(report_path, report_csv_dir);
    } catch (const cogdiag::ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kExitParse;
    } catch (const cogdiag::ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const cogdiag::JudgeTransportError& e) {
        std::cerr << "judge transport error: " << e.what() << "\n";
        return kExitJudge;
    } catch (const cogdiag::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}
