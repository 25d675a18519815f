#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cogdiag/dataset.hpp"
#include "cogdiag/icdm.hpp"
#include "cogdiag/metrics.hpp"
#include "cogdiag/ncdm.hpp"
#include "cogdiag/tracing.hpp"

namespace cogdiag {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kReportSchemaVersion = 1;

struct JudgeConfig {
    std::string type = "mock";  // "mock" | "http"
    std::string host;
    int port = 0;
    std::string path = "/complete";
    int timeout_seconds = 30;
};

struct RunConfig {
    std::string catalog_path;
    std::string qmatrix_path;
    std::string log_path;
    std::string registry_path;  // optional; derived from the log when empty
    std::string out_dir = ".";
    std::set<std::string> methods = {"ncdm", "icdm"};
    std::uint64_t seed = 0;

    TrainConfig ncdm;
    IcdmConfig icdm;
    TraceOptions fewshot;
    LabelScoreMap label_map = LabelScoreMap::fair_half();
    JudgeConfig judge;

    // Synthetic-student augmentation applied before the ICDM fit.
    std::size_t augment_copies = 0;
    double augment_fraction = 0.8;

    void check() const;  // throws ConfigError
};

RunConfig load_run_config(const std::string& path);  // JSON
RunConfig parse_run_config_json(const std::string& text);

struct MethodOutcome {
    bool ok = false;
    std::string error;                    // set when ok is false
    std::vector<KnowledgeState> states;   // one per (non-synthetic input) student
    std::map<std::string, double> ms;     // student id -> mastery aggregate
    std::map<std::string, double> ms_signed;  // few-shot only
    std::optional<DoaReport> doa;         // real-valued methods only
};

struct DiagnosisOutput {
    Dataset dataset;
    std::map<std::string, MethodOutcome> methods;  // keyed by method label
    std::map<std::string, double> qa_forget;       // student id -> percent
    std::map<std::string, double> qa_retain;
    std::vector<TraceRecord> transcript;           // few-shot audit trail
};

// Runs the selected methods over the dataset. Training divergence or judge
// failure marks the method failed instead of aborting the run.
DiagnosisOutput run_diagnosis(const Dataset& dataset, const RunConfig& config);

// Report JSON with stable key order. The provenance block carries the
// timestamp, seeds, config hash, input digests, tool version and the
// determinism hash of everything outside itself.
std::string build_report_json(const DiagnosisOutput& output, const RunConfig& config,
                              const std::map<std::string, std::string>& input_digests);

// Per-student x per-concept states, one row per (student, method).
void write_states_csv(const DiagnosisOutput& output, std::ostream& out);

// Chart-ready JSON keyed by "method_label#step": ordered concept labels plus
// per-step state vectors, for students that carry lineage.
std::string build_radar_json(const DiagnosisOutput& output);

// 64-bit FNV-1a, hex-encoded; used for config hashes and input digests.
std::string fnv1a_hex(std::string_view bytes);
std::string file_digest(const std::string& path);

}  // namespace cogdiag
