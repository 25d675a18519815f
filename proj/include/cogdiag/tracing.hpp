#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cogdiag/dataset.hpp"

namespace cogdiag {

enum class ProficiencyLabel { Good, Fair, Bad, Unknown };

std::string to_string(ProficiencyLabel label);
std::optional<ProficiencyLabel> proficiency_label_from_string(std::string_view s);

struct JudgeVerdict {
    std::string exercise_id;
    int predicted_correct = 0;
    std::map<std::string, ProficiencyLabel> labels;  // concept id -> label
};

struct LabelScoreMap {
    double good = 1.0;
    double fair = 0.5;
    double bad = -1.0;
    double unknown = 0.0;

    double score(ProficiencyLabel label) const;
    void check() const;  // enforces good > fair > bad

    static LabelScoreMap fair_half();  // good 1, fair 0.5, bad -1 (default)
    static LabelScoreMap fair_zero();  // good 1, fair 0,   bad -1
};

// One-shot text completion transport. Implementations must be safe to call
// from several worker threads at once.
class Judge {
public:
    virtual ~Judge() = default;
    // Throws JudgeTransportError on transport failure.
    virtual std::string complete(const std::string& prompt) = 0;
};

// Deterministic judge that answers from a fixed concept -> label table,
// emitting text in the same format the parser expects.
class MockJudge : public Judge {
public:
    explicit MockJudge(std::map<std::string, ProficiencyLabel> labels,
                       ProficiencyLabel fallback = ProficiencyLabel::Unknown);
    std::string complete(const std::string& prompt) override;

private:
    std::map<std::string, ProficiencyLabel> labels_;
    ProficiencyLabel fallback_;
};

// Replays a canned list of responses (for fixtures and failure-path tests).
class ScriptJudge : public Judge {
public:
    explicit ScriptJudge(std::vector<std::string> responses);
    std::string complete(const std::string& prompt) override;

private:
    std::vector<std::string> responses_;
    std::size_t next_ = 0;
};

// POSTs {"prompt": ...} as JSON and reads {"text": ...} back. The bearer
// token is taken from the COGDIAG_JUDGE_TOKEN environment variable.
class HttpJudge : public Judge {
public:
    HttpJudge(std::string host, int port, std::string path = "/complete",
              int timeout_seconds = 30);
    std::string complete(const std::string& prompt) override;

private:
    std::string host_;
    int port_;
    std::string path_;
    int timeout_seconds_;
};

// Derives the mock judge's label table from a student's observed per-concept
// correct rates (>= 0.7 good, >= 0.4 fair, else bad; untested -> unknown).
std::map<std::string, ProficiencyLabel> mock_labels_from_log(const EncodedLog& log,
                                                             const QMatrix& qmatrix,
                                                             std::size_t student);

struct TraceOptions {
    int shots = 4;
    int sample_size = 10;
    std::uint64_t seed = 0;
    int max_parallel = 4;
    std::string prompt_template;  // empty -> builtin template
};

struct TraceRecord {
    std::size_t index = 0;
    std::string exercise_id;
    std::string prompt;
    std::string response;  // raw judge output ("" when transport failed)
    JudgeVerdict verdict;
    std::optional<std::string> error;  // transport/parse annotation
};

struct TraceResult {
    std::vector<JudgeVerdict> verdicts;
    std::vector<TraceRecord> transcript;

    void write_transcript_jsonl(std::ostream& out) const;
};

// Samples `sample_size` of the student's answered exercises (without
// replacement), prompts the judge with `shots` prior (exercise, outcome)
// pairs of context for each, and parses the per-concept labels. Malformed
// output is retried twice and then recorded as an unknown-only verdict;
// transport failures are annotated, never fatal.
TraceResult trace(const EncodedLog& log, std::size_t student, const QMatrix& qmatrix,
                  Judge& judge, const TraceOptions& options);

// Label extraction from one judge response. Labels are kept only for
// concepts in `allowed`; returns nullopt when no label line parses.
std::optional<JudgeVerdict> parse_verdict(const std::string& text, const std::string& exercise_id,
                                          const std::vector<std::string>& allowed);

struct ScoredStates {
    std::map<std::string, double> raw_last;        // latest label's score per concept
    std::map<std::string, double> raw_cumulative;  // summed scores per concept
    KnowledgeState state;                          // normalized last-label state in [0,1]
    double ms_normalized = 0.0;                    // mean normalized state over forget concepts
    double ms_signed = 0.0;                        // mean raw last-label score x 100
};

// Throws ValidationError on an empty verdict list.
ScoredStates score_states(std::span<const JudgeVerdict> verdicts, const LabelScoreMap& map,
                          const ConceptCatalog& catalog, const std::string& student_id);

}  // namespace cogdiag
