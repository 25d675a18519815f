#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cogdiag {

enum class ConceptKind { Forget, Retain };

std::string to_string(ConceptKind kind);
ConceptKind concept_kind_from_string(std::string_view s);

struct Concept {
    std::string id;
    ConceptKind kind = ConceptKind::Forget;
    std::string domain;

    bool operator==(const Concept&) const = default;
};

// Ordered concept list; the ordering fixes the column index of every
// knowledge-state vector produced anywhere in the project.
class ConceptCatalog {
public:
    ConceptCatalog() = default;
    explicit ConceptCatalog(std::vector<Concept> concepts);

    std::size_t size() const { return concepts_.size(); }
    const std::vector<Concept>& concepts() const { return concepts_; }
    const Concept& at(std::size_t k) const { return concepts_[k]; }
    std::optional<std::size_t> index_of(std::string_view id) const;
    std::vector<std::size_t> forget_indices() const;
    std::size_t forget_count() const;

    bool operator==(const ConceptCatalog& other) const { return concepts_ == other.concepts_; }

private:
    std::vector<Concept> concepts_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Binary exercise-by-concept incidence matrix.
struct QMatrix {
    std::vector<std::string> exercise_ids;
    std::vector<std::string> concept_ids;
    std::vector<std::uint8_t> cells;  // row-major, n_exercises() * n_concepts()

    std::size_t n_exercises() const { return exercise_ids.size(); }
    std::size_t n_concepts() const { return concept_ids.size(); }
    bool tests(std::size_t exercise, std::size_t concept_k) const {
        return cells[exercise * n_concepts() + concept_k] != 0;
    }
    std::vector<std::size_t> concepts_of(std::size_t exercise) const;
    std::size_t row_sum(std::size_t exercise) const;
    std::optional<std::size_t> index_of(std::string_view exercise_id) const;

    bool operator==(const QMatrix&) const = default;
};

struct Lineage {
    std::string method;
    int step = 0;

    bool operator==(const Lineage&) const = default;
};

struct StudentRecord {
    std::string id;
    std::optional<Lineage> lineage;
    bool synthetic = false;

    bool operator==(const StudentRecord&) const = default;
};

struct StudentRegistry {
    std::vector<StudentRecord> students;

    std::size_t size() const { return students.size(); }
    std::optional<std::size_t> index_of(std::string_view id) const;

    bool operator==(const StudentRegistry&) const = default;
};

struct ResponseEntry {
    std::string student;
    std::string exercise;
    int score = 0;  // 0 or 1

    bool operator==(const ResponseEntry&) const = default;
};

struct ResponseLog {
    std::vector<ResponseEntry> entries;

    bool operator==(const ResponseLog&) const = default;
};

// Registry derived from the log when no explicit registry is supplied:
// one plain record per distinct student, in first-appearance order.
StudentRegistry registry_from_log(const ResponseLog& log);

enum class DiagnosisMethod { Ncdm, Icdm, FewShot };

std::string to_string(DiagnosisMethod m);
DiagnosisMethod diagnosis_method_from_string(std::string_view s);

struct KnowledgeState {
    std::string student_id;
    std::vector<double> values;  // one per concept, in catalog order, each in [0,1]
    DiagnosisMethod method = DiagnosisMethod::Ncdm;

    bool operator==(const KnowledgeState&) const = default;
};

// Sub-vector of the state restricted to Forget concepts, order preserved.
// Throws ValidationError when the catalog has no Forget concepts.
std::vector<double> slice_forget(const KnowledgeState& state, const ConceptCatalog& catalog);
std::vector<double> slice_forget(std::span<const double> values, const ConceptCatalog& catalog);

struct Violation {
    std::string code;     // short machine-readable tag, e.g. "unresolved-exercise"
    std::string message;  // human-readable detail
};

struct ValidationReport {
    std::vector<Violation> violations;

    bool ok() const { return violations.empty(); }
};

// Checks every dataset invariant and reports all violations; never throws.
ValidationReport validate_dataset(const ConceptCatalog& catalog, const QMatrix& qmatrix,
                                  const StudentRegistry& registry, const ResponseLog& log);

// Log with ids resolved to registry / Q-matrix indices, for the trainers.
struct EncodedEntry {
    std::uint32_t student = 0;
    std::uint32_t exercise = 0;
    std::uint8_t score = 0;
};

struct EncodedLog {
    std::size_t n_students = 0;
    std::size_t n_exercises = 0;
    std::vector<EncodedEntry> entries;

    std::vector<EncodedEntry> entries_of(std::uint32_t student) const;
};

// Throws ValidationError on unresolved ids (run validate_dataset first for
// a full report).
EncodedLog encode_log(const ResponseLog& log, const StudentRegistry& registry,
                      const QMatrix& qmatrix);

// Convenience bundle used by the CLI and the report builder.
struct Dataset {
    ConceptCatalog catalog;
    QMatrix qmatrix;
    StudentRegistry registry;
    ResponseLog log;
};

// --- file formats -----------------------------------------------------------
//
// catalog:  JSON array of {"id","kind","domain"}
// qmatrix:  JSON {"exercises":[...],"concepts":[...],"rows":[[0/1,...],...]}
// log:      JSON Lines, one {"student","exercise","score"} per line
// registry: JSON array of {"id","lineage":{"method","step"}?,"synthetic"?}
//
// All loaders throw ParseError on malformed input (with a line number for
// JSONL) and ValidationError for type-level invariant breaks that make the
// value unrepresentable (e.g. non-binary q cell).

ConceptCatalog load_catalog(const std::string& path);
void save_catalog(const ConceptCatalog& catalog, const std::string& path);
ConceptCatalog parse_catalog_json(const std::string& text);
std::string catalog_to_json(const ConceptCatalog& catalog);

QMatrix load_qmatrix(const std::string& path);
void save_qmatrix(const QMatrix& qmatrix, const std::string& path);
QMatrix parse_qmatrix_json(const std::string& text);
std::string qmatrix_to_json(const QMatrix& qmatrix);

ResponseLog load_response_log(const std::string& path);
void save_response_log(const ResponseLog& log, const std::string& path);
ResponseLog parse_response_jsonl(std::istream& in);
void write_response_jsonl(const ResponseLog& log, std::ostream& out);

StudentRegistry load_registry(const std::string& path);
void save_registry(const StudentRegistry& registry, const std::string& path);
StudentRegistry parse_registry_json(const std::string& text);
std::string registry_to_json(const StudentRegistry& registry);

std::string knowledge_state_to_json(const KnowledgeState& state);
KnowledgeState parse_knowledge_state_json(const std::string& text);

}  // namespace cogdiag
