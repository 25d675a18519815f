#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cogdiag/dataset.hpp"

namespace cogdiag {

// Synthetic student with known per-concept mastery; the ground truth the
// diagnosis models are validated against.
struct TrueStudent {
    std::string id;
    std::vector<double> mastery;  // in [0,1], catalog order
    std::optional<Lineage> lineage;
    bool synthetic = false;
};

enum class TrajectoryMode { Uniform, Selective };

struct TrajectorySpec {
    std::string label = "unlearn";
    int steps = 4;
    TrajectoryMode mode = TrajectoryMode::Uniform;
    std::vector<std::string> targeted_concepts;  // Selective only: concepts that decay
    double decay_rate = 0.5;                     // in (0,1]

    void check(const ConceptCatalog& catalog) const;  // throws ConfigError
};

// Per-concept masteries drawn from a two-component beta mixture with
// component means 0.5 +/- separation/2. Deterministic under seed.
std::vector<TrueStudent> sample_cohort(std::size_t n_students, const ConceptCatalog& catalog,
                                       std::uint64_t seed, double separation);

// Two-parameter response oracle: p = sigmoid(a * (mean tested mastery -
// difficulty)), responses Bernoulli(p).
ResponseLog sample_responses(std::span<const TrueStudent> students, const QMatrix& qmatrix,
                             std::span<const double> difficulty, double discrimination,
                             std::uint64_t seed);

// Exact expectation of the response oracle over all exercises.
double expected_accuracy(std::span<const double> mastery, const QMatrix& qmatrix,
                         std::span<const double> difficulty, double discrimination);

struct TrajectoryStep {
    TrueStudent student;
    ResponseLog log;
};

// Step t has mastery base * (1 - decay)^t on the affected concepts (all of
// them for Uniform, the targeted set for Selective). Step 0 is the base
// student itself with a freshly sampled log; steps 1..steps get ids
// "<base>/<label>#<t>" and lineage {label, t}.
std::vector<TrajectoryStep> run_trajectory(const TrueStudent& base, const TrajectorySpec& spec,
                                           const ConceptCatalog& catalog, const QMatrix& qmatrix,
                                           std::span<const double> difficulty,
                                           double discrimination, std::uint64_t seed);

struct AugmentResult {
    std::vector<StudentRecord> records;  // the synthetic copies
    ResponseLog extended;                // input log plus the copies' entries
};

// Each copy receives a uniform random subset (without replacement, size
// round(fraction * n), at least 1) of the source student's entries, re-keyed
// to "<source>~aug<i>" and flagged synthetic.
AugmentResult augment_students(const ResponseLog& log, const std::string& source_student,
                               std::size_t n_copies, double sample_fraction, std::uint64_t seed);

// Bisects the trajectory decay rate so the final step's expected accuracy
// hits `target`. The expectation is monotone decreasing in the decay rate;
// throws ConfigError when the target is outside the attainable range.
double solve_decay_for_accuracy(const TrueStudent& base, const TrajectorySpec& spec,
                                const ConceptCatalog& catalog, const QMatrix& qmatrix,
                                std::span<const double> difficulty, double discrimination,
                                double target, double tolerance = 1e-6);

// Fixture helpers: a random Q-matrix over the catalog (every concept covered,
// multi_fraction of the exercises test a second concept) and uniform
// difficulties.
QMatrix random_qmatrix(const ConceptCatalog& catalog, std::size_t n_exercises,
                       double multi_fraction, std::uint64_t seed);
std::vector<double> sample_difficulties(std::size_t n_exercises, double lo, double hi,
                                        std::uint64_t seed);

// Ground-truth sidecar: JSON {"students":[{"id","mastery":[...]}]}.
std::string truth_to_json(std::span<const TrueStudent> students);
void save_truth(std::span<const TrueStudent> students, const std::string& path);

}  // namespace cogdiag
