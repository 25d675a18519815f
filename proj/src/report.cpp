#include "cogdiag/report.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <memory>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "cogdiag/errors.hpp"
#include "cogdiag/rng.hpp"
#include "cogdiag/simulate.hpp"

namespace cogdiag {

using ordered_json = nlohmann::ordered_json;

void RunConfig::check() const {
    namespace fs = std::filesystem;
    if (methods.empty()) throw ConfigError("method set is empty");
    for (const auto& m : methods) {
        if (m != "ncdm" && m != "icdm" && m != "fewshot") {
            throw ConfigError("unknown method '" + m + "'");
        }
    }
    for (const auto& [label, path] : {std::pair{"catalog", catalog_path},
                                      std::pair{"qmatrix", qmatrix_path},
                                      std::pair{"log", log_path}}) {
        if (path.empty()) throw ConfigError(std::string(label) + " path is missing");
        if (!fs::exists(path)) throw ConfigError(std::string(label) + " path '" + path + "' does not exist");
    }
    if (!registry_path.empty() && !fs::exists(registry_path)) {
        throw ConfigError("registry path '" + registry_path + "' does not exist");
    }
    ncdm.check();
    icdm.check();
    label_map.check();
    if (judge.type != "mock" && judge.type != "http") {
        throw ConfigError("judge type must be 'mock' or 'http'");
    }
    if (augment_fraction <= 0.0 || augment_fraction > 1.0) {
        throw ConfigError("augment_fraction must lie in (0, 1]");
    }
}

RunConfig parse_run_config_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("run config: ") + e.what());
    }
    RunConfig config;
    config.catalog_path = j.value("catalog", "");
    config.qmatrix_path = j.value("qmatrix", "");
    config.log_path = j.value("log", "");
    config.registry_path = j.value("registry", "");
    config.out_dir = j.value("out", ".");
    config.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("methods")) {
        config.methods.clear();
        for (const auto& m : j.at("methods")) config.methods.insert(m.get<std::string>());
    }
    if (j.contains("ncdm")) {
        const auto& n = j.at("ncdm");
        config.ncdm.learning_rate = n.value("learning_rate", config.ncdm.learning_rate);
        config.ncdm.epochs = n.value("epochs", config.ncdm.epochs);
        config.ncdm.batch_size = n.value("batch_size", config.ncdm.batch_size);
        config.ncdm.hidden_width = n.value("hidden_width", config.ncdm.hidden_width);
        config.ncdm.seed = n.value("seed", config.ncdm.seed);
        config.ncdm.early_stop_patience = n.value("early_stop_patience", config.ncdm.early_stop_patience);
        config.ncdm.validation_fraction = n.value("validation_fraction", config.ncdm.validation_fraction);
    }
    if (j.contains("icdm")) {
        const auto& n = j.at("icdm");
        config.icdm.k_hops = n.value("k_hops", config.icdm.k_hops);
        config.icdm.hop_decay = n.value("hop_decay", config.icdm.hop_decay);
        config.icdm.learning_rate = n.value("learning_rate", config.icdm.learning_rate);
        config.icdm.epochs = n.value("epochs", config.icdm.epochs);
        config.icdm.batch_size = n.value("batch_size", config.icdm.batch_size);
        config.icdm.hidden_width = n.value("hidden_width", config.icdm.hidden_width);
        config.icdm.seed = n.value("seed", config.icdm.seed);
    }
    if (j.contains("fewshot")) {
        const auto& n = j.at("fewshot");
        config.fewshot.shots = n.value("shots", config.fewshot.shots);
        config.fewshot.sample_size = n.value("sample_size", config.fewshot.sample_size);
        config.fewshot.seed = n.value("seed", config.fewshot.seed);
        config.fewshot.max_parallel = n.value("max_parallel", config.fewshot.max_parallel);
        if (n.contains("prompt_template_path")) {
            const std::string path = n.at("prompt_template_path").get<std::string>();
            std::ifstream in(path, std::ios::binary);
            if (!in) throw ConfigError("cannot open prompt template '" + path + "'");
            std::ostringstream ss;
            ss << in.rdbuf();
            config.fewshot.prompt_template = ss.str();
        }
    }
    if (j.contains("label_map")) {
        const auto& n = j.at("label_map");
        if (n.is_string()) {
            const std::string preset = n.get<std::string>();
            if (preset == "fair_half") {
                config.label_map = LabelScoreMap::fair_half();
            } else if (preset == "fair_zero") {
                config.label_map = LabelScoreMap::fair_zero();
            } else {
                throw ConfigError("unknown label map preset '" + preset + "'");
            }
        } else {
            config.label_map.good = n.value("good", config.label_map.good);
            config.label_map.fair = n.value("fair", config.label_map.fair);
            config.label_map.bad = n.value("bad", config.label_map.bad);
            config.label_map.unknown = n.value("unknown", config.label_map.unknown);
        }
    }
    if (j.contains("judge")) {
        const auto& n = j.at("judge");
        config.judge.type = n.value("type", config.judge.type);
        config.judge.host = n.value("host", config.judge.host);
        config.judge.port = n.value("port", config.judge.port);
        config.judge.path = n.value("path", config.judge.path);
        config.judge.timeout_seconds = n.value("timeout_seconds", config.judge.timeout_seconds);
    }
    if (j.contains("augment")) {
        const auto& n = j.at("augment");
        config.augment_copies = n.value("copies", config.augment_copies);
        config.augment_fraction = n.value("fraction", config.augment_fraction);
    }
    return config;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_run_config_json(ss.str());
}

namespace {

std::uint64_t method_seed(const RunConfig& config, std::uint64_t configured, std::uint64_t tag) {
    return configured != 0 ? configured : Rng::derive(config.seed, tag);
}

MethodOutcome run_ncdm(const Dataset& dataset, const EncodedLog& encoded, const RunConfig& config) {
    MethodOutcome outcome;
    TrainConfig train_config = config.ncdm;
    train_config.seed = method_seed(config, train_config.seed, 0xcd0);
    const auto trained = train(encoded, dataset.qmatrix, train_config);
    outcome.states = extract_states(trained.params, dataset.registry);
    std::vector<double> flat;
    flat.reserve(outcome.states.size() * dataset.catalog.size());
    for (const auto& state : outcome.states) {
        for (double v : state.values) flat.push_back(v);
        outcome.ms[state.student_id] = mastery(state, dataset.catalog);
    }
    outcome.doa = doa_report(flat, dataset.catalog.size(), encoded, dataset.qmatrix);
    outcome.ok = true;
    return outcome;
}

MethodOutcome run_icdm(const Dataset& dataset, const EncodedLog& encoded, const RunConfig& config) {
    MethodOutcome outcome;
    IcdmConfig icdm_config = config.icdm;
    icdm_config.seed = method_seed(config, icdm_config.seed, 0x1cd);

    // Optional synthetic-student augmentation before the fit.
    ResponseLog fit_log = dataset.log;
    StudentRegistry fit_registry = dataset.registry;
    if (config.augment_copies > 0) {
        for (const auto& student : dataset.registry.students) {
            if (student.synthetic) continue;
            const auto augmented =
                augment_students(fit_log, student.id, config.augment_copies,
                                 config.augment_fraction,
                                 Rng::derive(icdm_config.seed, std::hash<std::string>{}(student.id)));
            fit_log = augmented.extended;
            for (const auto& record : augmented.records) fit_registry.students.push_back(record);
        }
    }
    const EncodedLog fit_encoded = encode_log(fit_log, fit_registry, dataset.qmatrix);
    const auto model = train_inductive(fit_encoded, dataset.qmatrix, icdm_config);

    const std::size_t n_concepts = dataset.catalog.size();
    std::vector<double> flat;
    flat.reserve(dataset.registry.size() * n_concepts);
    for (std::size_t s = 0; s < dataset.registry.size(); ++s) {
        KnowledgeState state;
        state.student_id = dataset.registry.students[s].id;
        state.method = DiagnosisMethod::Icdm;
        const auto span = model.state_of(s);  // originals keep their indices
        state.values.assign(span.begin(), span.end());
        for (double v : state.values) flat.push_back(v);
        outcome.ms[state.student_id] = mastery(state, dataset.catalog);
        outcome.states.push_back(std::move(state));
    }
    outcome.doa = doa_report(flat, n_concepts, encoded, dataset.qmatrix);
    outcome.ok = true;
    return outcome;
}

MethodOutcome run_fewshot(const Dataset& dataset, const EncodedLog& encoded,
                          const RunConfig& config, std::vector<TraceRecord>& transcript) {
    MethodOutcome outcome;
    const std::uint64_t base_seed = method_seed(config, config.fewshot.seed, 0xf5);
    for (std::size_t s = 0; s < dataset.registry.size(); ++s) {
        const auto& record = dataset.registry.students[s];
        if (record.synthetic) continue;

        TraceOptions options = config.fewshot;
        options.seed = Rng::derive(base_seed, s);
        const auto available = encoded.entries_of(static_cast<std::uint32_t>(s)).size();
        options.sample_size = static_cast<int>(
            std::min<std::size_t>(available, static_cast<std::size_t>(options.sample_size)));

        std::unique_ptr<Judge> judge;
        if (config.judge.type == "http") {
            judge = std::make_unique<HttpJudge>(config.judge.host, config.judge.port,
                                                config.judge.path, config.judge.timeout_seconds);
        } else {
            judge = std::make_unique<MockJudge>(mock_labels_from_log(encoded, dataset.qmatrix, s));
        }
        auto traced = trace(encoded, s, dataset.qmatrix, *judge, options);
        for (auto& rec : traced.transcript) transcript.push_back(std::move(rec));
        if (traced.verdicts.empty()) {
            throw JudgeTransportError("no verdicts for student '" + record.id + "'");
        }
        auto scored = score_states(traced.verdicts, config.label_map, dataset.catalog, record.id);
        outcome.ms[record.id] = scored.ms_normalized;
        outcome.ms_signed[record.id] = scored.ms_signed;
        outcome.states.push_back(std::move(scored.state));
    }
    outcome.ok = true;
    return outcome;
}

}  // namespace

DiagnosisOutput run_diagnosis(const Dataset& dataset, const RunConfig& config) {
    const auto validation = validate_dataset(dataset.catalog, dataset.qmatrix, dataset.registry,
                                             dataset.log);
    if (!validation.ok()) {
        throw ValidationError("dataset failed validation (" +
                              std::to_string(validation.violations.size()) + " violations, first: " +
                              validation.violations.front().message + ")");
    }
    const EncodedLog encoded = encode_log(dataset.log, dataset.registry, dataset.qmatrix);

    DiagnosisOutput output;
    output.dataset = dataset;

    for (std::size_t s = 0; s < dataset.registry.size(); ++s) {
        const auto& id = dataset.registry.students[s].id;
        try {
            output.qa_forget[id] = qa_accuracy(encoded, dataset.qmatrix, dataset.catalog, s,
                                               {ConceptKind::Forget, std::nullopt});
        } catch (const ValidationError&) {
        }
        try {
            output.qa_retain[id] = qa_accuracy(encoded, dataset.qmatrix, dataset.catalog, s,
                                               {ConceptKind::Retain, std::nullopt});
        } catch (const ValidationError&) {
        }
    }

    for (const auto& method : config.methods) {
        MethodOutcome outcome;
        try {
            if (method == "ncdm") {
                outcome = run_ncdm(dataset, encoded, config);
            } else if (method == "icdm") {
                outcome = run_icdm(dataset, encoded, config);
            } else {
                outcome = run_fewshot(dataset, encoded, config, output.transcript);
            }
        } catch (const std::exception& e) {
            outcome = MethodOutcome{};
            outcome.error = e.what();
        }
        output.methods[method] = std::move(outcome);
    }
    return output;
}

std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path + "' for digest");
    std::ostringstream ss;
    ss << in.rdbuf();
    return fnv1a_hex(ss.str());
}

namespace {

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

ordered_json config_json(const RunConfig& config) {
    ordered_json methods = ordered_json::array();
    for (const auto& m : config.methods) methods.push_back(m);
    return ordered_json{
        {"catalog", config.catalog_path},
        {"qmatrix", config.qmatrix_path},
        {"log", config.log_path},
        {"registry", config.registry_path},
        {"methods", methods},
        {"seed", config.seed},
        {"ncdm",
         {{"learning_rate", config.ncdm.learning_rate},
          {"epochs", config.ncdm.epochs},
          {"batch_size", config.ncdm.batch_size},
          {"hidden_width", config.ncdm.hidden_width},
          {"seed", config.ncdm.seed},
          {"early_stop_patience", config.ncdm.early_stop_patience},
          {"validation_fraction", config.ncdm.validation_fraction}}},
        {"icdm",
         {{"k_hops", config.icdm.k_hops},
          {"hop_decay", config.icdm.hop_decay},
          {"learning_rate", config.icdm.learning_rate},
          {"epochs", config.icdm.epochs},
          {"batch_size", config.icdm.batch_size},
          {"hidden_width", config.icdm.hidden_width},
          {"seed", config.icdm.seed}}},
        {"fewshot",
         {{"shots", config.fewshot.shots},
          {"sample_size", config.fewshot.sample_size},
          {"seed", config.fewshot.seed},
          {"max_parallel", config.fewshot.max_parallel}}},
        {"label_map",
         {{"good", config.label_map.good},
          {"fair", config.label_map.fair},
          {"bad", config.label_map.bad},
          {"unknown", config.label_map.unknown}}},
        {"judge", {{"type", config.judge.type}, {"host", config.judge.host}, {"port", config.judge.port}}},
        {"augment", {{"copies", config.augment_copies}, {"fraction", config.augment_fraction}}},
    };
}

ordered_json states_json(const MethodOutcome& outcome) {
    ordered_json out = ordered_json::object();
    for (const auto& state : outcome.states) {
        out[state.student_id] = state.values;
    }
    return out;
}

ordered_json doa_json(const DoaReport& report, const ConceptCatalog& catalog) {
    ordered_json per_concept = ordered_json::object();
    for (std::size_t k = 0; k < report.per_concept.size(); ++k) {
        const auto& result = report.per_concept[k];
        ordered_json item{{"z", result.z}};
        item["doa"] = result.doa ? ordered_json(*result.doa) : ordered_json(nullptr);
        per_concept[catalog.at(k).id] = std::move(item);
    }
    ordered_json out{{"per_concept", per_concept}};
    out["overall"] = report.overall ? ordered_json(*report.overall) : ordered_json(nullptr);
    return out;
}

}  // namespace

std::string build_report_json(const DiagnosisOutput& output, const RunConfig& config,
                              const std::map<std::string, std::string>& input_digests) {
    ordered_json report;
    report["schema_version"] = kReportSchemaVersion;

    ordered_json students = ordered_json::array();
    for (const auto& s : output.dataset.registry.students) {
        ordered_json item{{"id", s.id}};
        if (s.lineage) item["lineage"] = {{"method", s.lineage->method}, {"step", s.lineage->step}};
        item["synthetic"] = s.synthetic;
        students.push_back(std::move(item));
    }
    report["students"] = students;

    ordered_json concepts = ordered_json::array();
    for (const auto& c : output.dataset.catalog.concepts()) {
        concepts.push_back({{"id", c.id}, {"kind", to_string(c.kind)}, {"domain", c.domain}});
    }
    report["concepts"] = concepts;

    ordered_json methods = ordered_json::object();
    for (const auto& [name, outcome] : output.methods) {
        ordered_json m{{"ok", outcome.ok}};
        if (!outcome.ok) {
            m["error"] = outcome.error;
        } else {
            m["states"] = states_json(outcome);
            m["ms"] = outcome.ms;
            if (!outcome.ms_signed.empty()) m["ms_signed"] = outcome.ms_signed;
            if (outcome.doa) m["doa"] = doa_json(*outcome.doa, output.dataset.catalog);
        }
        methods[name] = std::move(m);
    }
    report["methods"] = methods;

    report["qa_accuracy"] = ordered_json{{"forget", output.qa_forget}, {"retain", output.qa_retain}};

    // Pairwise correlations across students, for every numeric column pair
    // with enough shared rows.
    {
        std::vector<std::pair<std::string, const std::map<std::string, double>*>> columns;
        columns.emplace_back("qa_forget", &output.qa_forget);
        for (const auto& [name, outcome] : output.methods) {
            if (outcome.ok) columns.emplace_back("ms_" + name, &outcome.ms);
            if (outcome.ok && !outcome.ms_signed.empty()) {
                columns.emplace_back("ms_signed_" + name, &outcome.ms_signed);
            }
        }
        ordered_json table = ordered_json::array();
        for (std::size_t i = 0; i < columns.size(); ++i) {
            for (std::size_t j = i + 1; j < columns.size(); ++j) {
                std::vector<double> x, y;
                for (const auto& [student, value] : *columns[i].second) {
                    const auto it = columns[j].second->find(student);
                    if (it == columns[j].second->end()) continue;
                    x.push_back(value);
                    y.push_back(it->second);
                }
                try {
                    const auto result = pearson(x, y);
                    table.push_back({{"x", columns[i].first},
                                     {"y", columns[j].first},
                                     {"r", result.r},
                                     {"p", result.p},
                                     {"n", result.n}});
                } catch (const ValidationError&) {
                }
            }
        }
        report["pearson"] = table;
    }

    const std::string body_hash = fnv1a_hex(report.dump());

    ordered_json digests = ordered_json::object();
    for (const auto& [name, digest] : input_digests) digests[name] = digest;
    report["provenance"] = ordered_json{{"tool_version", kToolVersion},
                                        {"generated_at", utc_timestamp()},
                                        {"seed", config.seed},
                                        {"config_hash", fnv1a_hex(config_json(config).dump())},
                                        {"input_digests", digests},
                                        {"determinism_hash", body_hash}};
    return report.dump(2) + "\n";
}

void write_states_csv(const DiagnosisOutput& output, std::ostream& out) {
    out << "student,method";
    for (const auto& c : output.dataset.catalog.concepts()) out << "," << c.id;
    out << "\n";
    for (const auto& [name, outcome] : output.methods) {
        if (!outcome.ok) continue;
        for (const auto& state : outcome.states) {
            out << state.student_id << "," << name;
            for (double v : state.values) out << "," << v;
            out << "\n";
        }
    }
}

std::string build_radar_json(const DiagnosisOutput& output) {
    ordered_json concepts = ordered_json::array();
    for (const auto& c : output.dataset.catalog.concepts()) concepts.push_back(c.id);

    ordered_json series = ordered_json::array();
    for (const auto& [name, outcome] : output.methods) {
        if (!outcome.ok) continue;
        for (const auto& state : outcome.states) {
            const auto index = output.dataset.registry.index_of(state.student_id);
            if (!index) continue;
            const auto& record = output.dataset.registry.students[*index];
            if (!record.lineage) continue;
            series.push_back({{"method_label", record.lineage->method},
                              {"step", record.lineage->step},
                              {"diagnosis", name},
                              {"student", state.student_id},
                              {"values", state.values}});
        }
    }
    ordered_json j{{"concepts", concepts}, {"series", series}};
    return j.dump(2) + "\n";
}

}  // namespace cogdiag
