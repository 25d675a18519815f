#include "cogdiag/dataset.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "cogdiag/errors.hpp"

namespace cogdiag {

using ordered_json = nlohmann::ordered_json;

std::string to_string(ConceptKind kind) {
    return kind == ConceptKind::Forget ? "forget" : "retain";
}

ConceptKind concept_kind_from_string(std::string_view s) {
    if (s == "forget" || s == "Forget") return ConceptKind::Forget;
    if (s == "retain" || s == "Retain") return ConceptKind::Retain;
    throw ParseError("unknown concept kind: '" + std::string(s) + "'");
}

ConceptCatalog::ConceptCatalog(std::vector<Concept> concepts) : concepts_(std::move(concepts)) {
    for (std::size_t k = 0; k < concepts_.size(); ++k) {
        index_.emplace(concepts_[k].id, k);
    }
}

std::optional<std::size_t> ConceptCatalog::index_of(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::vector<std::size_t> ConceptCatalog::forget_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < concepts_.size(); ++k) {
        if (concepts_[k].kind == ConceptKind::Forget) out.push_back(k);
    }
    return out;
}

std::size_t ConceptCatalog::forget_count() const { return forget_indices().size(); }

std::vector<std::size_t> QMatrix::concepts_of(std::size_t exercise) const {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < n_concepts(); ++k) {
        if (tests(exercise, k)) out.push_back(k);
    }
    return out;
}

std::size_t QMatrix::row_sum(std::size_t exercise) const {
    std::size_t sum = 0;
    for (std::size_t k = 0; k < n_concepts(); ++k) sum += cells[exercise * n_concepts() + k];
    return sum;
}

std::optional<std::size_t> QMatrix::index_of(std::string_view exercise_id) const {
    for (std::size_t e = 0; e < exercise_ids.size(); ++e) {
        if (exercise_ids[e] == exercise_id) return e;
    }
    return std::nullopt;
}

std::optional<std::size_t> StudentRegistry::index_of(std::string_view id) const {
    for (std::size_t i = 0; i < students.size(); ++i) {
        if (students[i].id == id) return i;
    }
    return std::nullopt;
}

StudentRegistry registry_from_log(const ResponseLog& log) {
    StudentRegistry registry;
    std::set<std::string> seen;
    for (const auto& entry : log.entries) {
        if (seen.insert(entry.student).second) {
            registry.students.push_back({entry.student, std::nullopt, false});
        }
    }
    return registry;
}

std::string to_string(DiagnosisMethod m) {
    switch (m) {
        case DiagnosisMethod::Ncdm: return "ncdm";
        case DiagnosisMethod::Icdm: return "icdm";
        case DiagnosisMethod::FewShot: return "fewshot";
    }
    return "ncdm";
}

DiagnosisMethod diagnosis_method_from_string(std::string_view s) {
    if (s == "ncdm") return DiagnosisMethod::Ncdm;
    if (s == "icdm") return DiagnosisMethod::Icdm;
    if (s == "fewshot") return DiagnosisMethod::FewShot;
    throw ParseError("unknown diagnosis method: '" + std::string(s) + "'");
}

std::vector<double> slice_forget(std::span<const double> values, const ConceptCatalog& catalog) {
    if (values.size() != catalog.size()) {
        throw ValidationError("state length does not match catalog size");
    }
    const auto forget = catalog.forget_indices();
    if (forget.empty()) throw ValidationError("catalog has no forget concepts");
    std::vector<double> out;
    out.reserve(forget.size());
    for (std::size_t k : forget) out.push_back(values[k]);
    return out;
}

std::vector<double> slice_forget(const KnowledgeState& state, const ConceptCatalog& catalog) {
    return slice_forget(std::span<const double>(state.values), catalog);
}

ValidationReport validate_dataset(const ConceptCatalog& catalog, const QMatrix& qmatrix,
                                  const StudentRegistry& registry, const ResponseLog& log) {
    ValidationReport report;
    auto add = [&](std::string code, std::string message) {
        report.violations.push_back({std::move(code), std::move(message)});
    };

    // catalog
    if (catalog.size() == 0) add("empty-catalog", "catalog has no concepts");
    {
        std::set<std::string> ids;
        bool any_forget = false;
        for (const auto& c : catalog.concepts()) {
            if (c.id.empty()) add("empty-concept-id", "concept with empty id");
            if (!ids.insert(c.id).second) add("duplicate-concept", "duplicate concept id '" + c.id + "'");
            any_forget = any_forget || c.kind == ConceptKind::Forget;
        }
        if (catalog.size() > 0 && !any_forget) {
            add("no-forget-concepts", "catalog declares no forget concepts");
        }
    }

    // q-matrix
    if (qmatrix.n_concepts() != catalog.size()) {
        add("qmatrix-concept-count",
            "q-matrix has " + std::to_string(qmatrix.n_concepts()) + " concept columns, catalog has " +
                std::to_string(catalog.size()));
    } else {
        for (std::size_t k = 0; k < qmatrix.n_concepts(); ++k) {
            if (qmatrix.concept_ids[k] != catalog.at(k).id) {
                add("qmatrix-concept-order", "q-matrix column " + std::to_string(k) + " is '" +
                                                 qmatrix.concept_ids[k] + "', catalog has '" +
                                                 catalog.at(k).id + "'");
            }
        }
    }
    {
        std::set<std::string> ids;
        for (const auto& id : qmatrix.exercise_ids) {
            if (!ids.insert(id).second) add("duplicate-exercise", "duplicate exercise id '" + id + "'");
        }
    }
    if (qmatrix.cells.size() != qmatrix.n_exercises() * qmatrix.n_concepts()) {
        add("qmatrix-shape", "q-matrix cell count does not match exercises x concepts");
    } else {
        for (std::size_t e = 0; e < qmatrix.n_exercises(); ++e) {
            if (qmatrix.row_sum(e) == 0) {
                add("exercise-tests-nothing",
                    "exercise '" + qmatrix.exercise_ids[e] + "' tests no concept");
            }
        }
        for (std::uint8_t cell : qmatrix.cells) {
            if (cell > 1) {
                add("qmatrix-not-binary", "q-matrix contains a non-binary cell");
                break;
            }
        }
    }

    // registry
    {
        std::set<std::string> ids;
        for (const auto& s : registry.students) {
            if (s.id.empty()) add("empty-student-id", "student with empty id");
            if (!ids.insert(s.id).second) add("duplicate-student", "duplicate student id '" + s.id + "'");
            if (s.lineage && s.lineage->step < 0) {
                add("negative-step", "student '" + s.id + "' has negative lineage step");
            }
        }
    }

    // log
    {
        std::set<std::pair<std::string, std::string>> pairs;
        for (const auto& entry : log.entries) {
            if (entry.score != 0 && entry.score != 1) {
                add("non-binary-score", "entry (" + entry.student + ", " + entry.exercise +
                                            ") has score " + std::to_string(entry.score));
            }
            if (!registry.index_of(entry.student)) {
                add("unresolved-student", "unresolved student id '" + entry.student + "'");
            }
            if (!qmatrix.index_of(entry.exercise)) {
                add("unresolved-exercise", "unresolved exercise id '" + entry.exercise + "'");
            }
            if (!pairs.emplace(entry.student, entry.exercise).second) {
                add("duplicate-response", "duplicate response for (" + entry.student + ", " +
                                              entry.exercise + ")");
            }
        }
    }

    return report;
}

std::vector<EncodedEntry> EncodedLog::entries_of(std::uint32_t student) const {
    std::vector<EncodedEntry> out;
    for (const auto& e : entries) {
        if (e.student == student) out.push_back(e);
    }
    return out;
}

EncodedLog encode_log(const ResponseLog& log, const StudentRegistry& registry,
                      const QMatrix& qmatrix) {
    EncodedLog out;
    out.n_students = registry.size();
    out.n_exercises = qmatrix.n_exercises();
    out.entries.reserve(log.entries.size());

    std::unordered_map<std::string, std::uint32_t> students;
    for (std::size_t i = 0; i < registry.students.size(); ++i) {
        students.emplace(registry.students[i].id, static_cast<std::uint32_t>(i));
    }
    std::unordered_map<std::string, std::uint32_t> exercises;
    for (std::size_t e = 0; e < qmatrix.exercise_ids.size(); ++e) {
        exercises.emplace(qmatrix.exercise_ids[e], static_cast<std::uint32_t>(e));
    }

    for (const auto& entry : log.entries) {
        auto s = students.find(entry.student);
        if (s == students.end()) {
            throw ValidationError("unresolved student id '" + entry.student + "'");
        }
        auto e = exercises.find(entry.exercise);
        if (e == exercises.end()) {
            throw ValidationError("unresolved exercise id '" + entry.exercise + "'");
        }
        if (entry.score != 0 && entry.score != 1) {
            throw ValidationError("non-binary score for (" + entry.student + ", " + entry.exercise + ")");
        }
        out.entries.push_back({s->second, e->second, static_cast<std::uint8_t>(entry.score)});
    }
    return out;
}

// --- JSON I/O ---------------------------------------------------------------

namespace {

ordered_json parse_json(const std::string& text, const char* what) {
    try {
        return ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string(what) + ": " + e.what());
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write '" + path + "'");
    out << text;
}

}  // namespace

ConceptCatalog parse_catalog_json(const std::string& text) {
    const auto j = parse_json(text, "catalog");
    if (!j.is_array()) throw ParseError("catalog: expected a JSON array");
    std::vector<Concept> concepts;
    for (const auto& item : j) {
        Concept c;
        c.id = item.at("id").get<std::string>();
        c.kind = concept_kind_from_string(item.at("kind").get<std::string>());
        c.domain = item.value("domain", std::string{});
        concepts.push_back(std::move(c));
    }
    return ConceptCatalog(std::move(concepts));
}

std::string catalog_to_json(const ConceptCatalog& catalog) {
    ordered_json j = ordered_json::array();
    for (const auto& c : catalog.concepts()) {
        j.push_back({{"id", c.id}, {"kind", to_string(c.kind)}, {"domain", c.domain}});
    }
    return j.dump(2) + "\n";
}

ConceptCatalog load_catalog(const std::string& path) { return parse_catalog_json(read_file(path)); }
void save_catalog(const ConceptCatalog& catalog, const std::string& path) {
    write_file(path, catalog_to_json(catalog));
}

QMatrix parse_qmatrix_json(const std::string& text) {
    const auto j = parse_json(text, "qmatrix");
    QMatrix q;
    q.exercise_ids = j.at("exercises").get<std::vector<std::string>>();
    q.concept_ids = j.at("concepts").get<std::vector<std::string>>();
    const auto& rows = j.at("rows");
    if (!rows.is_array() || rows.size() != q.exercise_ids.size()) {
        throw ParseError("qmatrix: 'rows' must have one row per exercise");
    }
    q.cells.reserve(q.exercise_ids.size() * q.concept_ids.size());
    for (const auto& row : rows) {
        if (row.size() != q.concept_ids.size()) {
            throw ParseError("qmatrix: row width does not match concept count");
        }
        for (const auto& cell : row) {
            const int v = cell.get<int>();
            if (v != 0 && v != 1) throw ValidationError("qmatrix: cell must be 0 or 1");
            q.cells.push_back(static_cast<std::uint8_t>(v));
        }
    }
    return q;
}

std::string qmatrix_to_json(const QMatrix& q) {
    ordered_json rows = ordered_json::array();
    for (std::size_t e = 0; e < q.n_exercises(); ++e) {
        ordered_json row = ordered_json::array();
        for (std::size_t k = 0; k < q.n_concepts(); ++k) {
            row.push_back(q.tests(e, k) ? 1 : 0);
        }
        rows.push_back(std::move(row));
    }
    ordered_json j{{"exercises", q.exercise_ids}, {"concepts", q.concept_ids}, {"rows", rows}};
    return j.dump(2) + "\n";
}

QMatrix load_qmatrix(const std::string& path) { return parse_qmatrix_json(read_file(path)); }
void save_qmatrix(const QMatrix& q, const std::string& path) { write_file(path, qmatrix_to_json(q)); }

ResponseLog parse_response_jsonl(std::istream& in) {
    ResponseLog log;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError("log line " + std::to_string(lineno) + ": " + e.what());
        }
        try {
            ResponseEntry entry;
            entry.student = j.at("student").get<std::string>();
            entry.exercise = j.at("exercise").get<std::string>();
            entry.score = j.at("score").get<int>();
            log.entries.push_back(std::move(entry));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("log line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return log;
}

void write_response_jsonl(const ResponseLog& log, std::ostream& out) {
    for (const auto& entry : log.entries) {
        ordered_json j{{"student", entry.student}, {"exercise", entry.exercise}, {"score", entry.score}};
        out << j.dump() << "\n";
    }
}

ResponseLog load_response_log(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path + "'");
    return parse_response_jsonl(in);
}

void save_response_log(const ResponseLog& log, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write '" + path + "'");
    write_response_jsonl(log, out);
}

StudentRegistry parse_registry_json(const std::string& text) {
    const auto j = parse_json(text, "registry");
    if (!j.is_array()) throw ParseError("registry: expected a JSON array");
    StudentRegistry registry;
    for (const auto& item : j) {
        StudentRecord record;
        record.id = item.at("id").get<std::string>();
        record.synthetic = item.value("synthetic", false);
        if (item.contains("lineage") && !item.at("lineage").is_null()) {
            Lineage lineage;
            lineage.method = item.at("lineage").at("method").get<std::string>();
            lineage.step = item.at("lineage").at("step").get<int>();
            record.lineage = std::move(lineage);
        }
        registry.students.push_back(std::move(record));
    }
    return registry;
}

std::string registry_to_json(const StudentRegistry& registry) {
    ordered_json j = ordered_json::array();
    for (const auto& s : registry.students) {
        ordered_json item{{"id", s.id}};
        if (s.lineage) {
            item["lineage"] = {{"method", s.lineage->method}, {"step", s.lineage->step}};
        }
        item["synthetic"] = s.synthetic;
        j.push_back(std::move(item));
    }
    return j.dump(2) + "\n";
}

StudentRegistry load_registry(const std::string& path) { return parse_registry_json(read_file(path)); }
void save_registry(const StudentRegistry& registry, const std::string& path) {
    write_file(path, registry_to_json(registry));
}

std::string knowledge_state_to_json(const KnowledgeState& state) {
    ordered_json j{{"student", state.student_id},
                   {"method", to_string(state.method)},
                   {"values", state.values}};
    return j.dump();
}

KnowledgeState parse_knowledge_state_json(const std::string& text) {
    const auto j = parse_json(text, "knowledge state");
    KnowledgeState state;
    state.student_id = j.at("student").get<std::string>();
    state.method = diagnosis_method_from_string(j.at("method").get<std::string>());
    state.values = j.at("values").get<std::vector<double>>();
    return state;
}

}  // namespace cogdiag
