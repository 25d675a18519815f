#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cogdiag/dataset.hpp"

namespace cogdiag {

// Degree of agreement for one concept: over ordered student pairs (a, b)
// whose diagnosed state on the concept satisfies F_ak > F_bk, the mean
// fraction of jointly answered, discordantly answered exercises testing the
// concept where a was right and b was wrong. Pairs with no such discordant
// joint exercise are not valid comparisons and do not count toward z.
struct DoaConceptResult {
    std::optional<double> doa;  // present iff z > 0
    long z = 0;                 // number of valid comparisons
};

struct DoaReport {
    std::vector<DoaConceptResult> per_concept;
    std::optional<double> overall;  // mean over defined concepts

    void write_csv(std::ostream& out, const ConceptCatalog& catalog) const;
};

// `states` holds one row per student (n_students x n_concepts, flattened).
// Throws on a concept index out of range or fewer than two students.
DoaConceptResult doa(std::span<const double> states, std::size_t n_concepts,
                     const EncodedLog& log, const QMatrix& qmatrix, std::size_t concept_k);

DoaReport doa_report(std::span<const double> states, std::size_t n_concepts,
                     const EncodedLog& log, const QMatrix& qmatrix);

// Fraction of held-out entries where (p >= threshold) matches the recorded
// score. Ties count as predicted-correct. Throws on an empty log.
using EntryPredictor = std::function<double(const EncodedEntry&)>;
double prediction_accuracy(const EntryPredictor& predict, std::span<const EncodedEntry> entries,
                           double threshold = 0.5);

// Entry filter on the concepts an exercise tests: an entry matches when its
// exercise tests at least one concept of the requested kind / domain.
struct EntryFilter {
    std::optional<ConceptKind> kind;
    std::optional<std::string> domain;

    bool matches_exercise(std::size_t exercise, const QMatrix& qmatrix,
                          const ConceptCatalog& catalog) const;
};

// Mean score of the student's filtered entries, as a percentage.
// Throws when nothing is left after filtering.
double qa_accuracy(const EncodedLog& log, const QMatrix& qmatrix, const ConceptCatalog& catalog,
                   std::size_t student, const EntryFilter& filter = {});

struct PearsonResult {
    double r = 0.0;
    double p = 1.0;  // two-sided, from the t-distribution with n-2 dof
    std::size_t n = 0;
};

// Throws ValidationError for n < 3, length mismatch, or zero variance.
PearsonResult pearson(std::span<const double> x, std::span<const double> y);

// Regularized incomplete beta I_x(a, b), exposed for the statistics tests.
double regularized_incomplete_beta(double a, double b, double x);

}  // namespace cogdiag
