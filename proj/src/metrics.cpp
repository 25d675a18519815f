#include "cogdiag/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "cogdiag/errors.hpp"

namespace cogdiag {

namespace {

// Continued-fraction evaluation of the incomplete beta (modified Lentz).
double ibeta_cf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-16;
    constexpr double kTiny = 1e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw ValidationError("incomplete beta: shapes must be positive");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * ibeta_cf(a, b, x) / a;
    }
    return 1.0 - front * ibeta_cf(b, a, 1.0 - x) / b;
}

PearsonResult pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ValidationError("pearson: length mismatch");
    const std::size_t n = x.size();
    if (n < 3) throw ValidationError("pearson: need at least 3 observations");

    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);

    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) throw ValidationError("pearson: zero variance");

    PearsonResult result;
    result.n = n;
    result.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);

    // Two-sided p from t = r sqrt((n-2)/(1-r^2)); expressed directly through
    // the regularized incomplete beta to stay finite at |r| -> 1.
    const double dof = static_cast<double>(n - 2);
    const double r2 = result.r * result.r;
    if (r2 >= 1.0) {
        result.p = 0.0;
    } else {
        const double t2 = r2 * dof / (1.0 - r2);
        result.p = regularized_incomplete_beta(dof / 2.0, 0.5, dof / (dof + t2));
    }
    return result;
}

DoaConceptResult doa(std::span<const double> states, std::size_t n_concepts,
                     const EncodedLog& log, const QMatrix& qmatrix, std::size_t concept_k) {
    if (concept_k >= n_concepts) throw ValidationError("doa: concept index out of range");
    if (n_concepts != qmatrix.n_concepts()) throw ValidationError("doa: concept count mismatch");
    const std::size_t n_students = log.n_students;
    if (n_students < 2 || states.size() != n_students * n_concepts) {
        throw ValidationError("doa: need states for at least two students");
    }

    // Response table restricted to exercises testing the concept:
    // -1 unattempted, otherwise the recorded score.
    std::vector<std::size_t> exercises;
    for (std::size_t e = 0; e < qmatrix.n_exercises(); ++e) {
        if (qmatrix.tests(e, concept_k)) exercises.push_back(e);
    }
    std::vector<std::int8_t> table(n_students * qmatrix.n_exercises(), -1);
    for (const auto& entry : log.entries) {
        table[entry.student * qmatrix.n_exercises() + entry.exercise] =
            static_cast<std::int8_t>(entry.score);
    }

    DoaConceptResult result;
    double total = 0.0;
    for (std::size_t a = 0; a < n_students; ++a) {
        for (std::size_t b = 0; b < n_students; ++b) {
            if (a == b) continue;
            if (!(states[a * n_concepts + concept_k] > states[b * n_concepts + concept_k])) continue;
            std::size_t wins = 0;
            std::size_t discordant = 0;
            for (std::size_t e : exercises) {
                const std::int8_t ra = table[a * qmatrix.n_exercises() + e];
                const std::int8_t rb = table[b * qmatrix.n_exercises() + e];
                if (ra < 0 || rb < 0 || ra == rb) continue;
                ++discordant;
                wins += ra > rb;
            }
            if (discordant == 0) continue;  // no valid comparison for this pair
            total += static_cast<double>(wins) / static_cast<double>(discordant);
            ++result.z;
        }
    }
    if (result.z > 0) result.doa = total / static_cast<double>(result.z);
    return result;
}

DoaReport doa_report(std::span<const double> states, std::size_t n_concepts,
                     const EncodedLog& log, const QMatrix& qmatrix) {
    DoaReport report;
    double sum = 0.0;
    std::size_t defined = 0;
    for (std::size_t k = 0; k < n_concepts; ++k) {
        auto result = doa(states, n_concepts, log, qmatrix, k);
        if (result.doa) {
            sum += *result.doa;
            ++defined;
        }
        report.per_concept.push_back(std::move(result));
    }
    if (defined > 0) report.overall = sum / static_cast<double>(defined);
    return report;
}

void DoaReport::write_csv(std::ostream& out, const ConceptCatalog& catalog) const {
    out << "concept,doa,valid_comparisons\n";
    for (std::size_t k = 0; k < per_concept.size(); ++k) {
        out << catalog.at(k).id << ",";
        if (per_concept[k].doa) out << *per_concept[k].doa;
        out << "," << per_concept[k].z << "\n";
    }
    out << "overall,";
    if (overall) out << *overall;
    out << ",\n";
}

double prediction_accuracy(const EntryPredictor& predict, std::span<const EncodedEntry> entries,
                           double threshold) {
    if (entries.empty()) throw ValidationError("prediction_accuracy: empty log");
    std::size_t hits = 0;
    for (const auto& entry : entries) {
        const int predicted = predict(entry) >= threshold ? 1 : 0;
        hits += predicted == entry.score;
    }
    return static_cast<double>(hits) / static_cast<double>(entries.size());
}

bool EntryFilter::matches_exercise(std::size_t exercise, const QMatrix& qmatrix,
                                   const ConceptCatalog& catalog) const {
    for (std::size_t k = 0; k < qmatrix.n_concepts(); ++k) {
        if (!qmatrix.tests(exercise, k)) continue;
        const Concept& c = catalog.at(k);
        if (kind && c.kind != *kind) continue;
        if (domain && c.domain != *domain) continue;
        return true;
    }
    return false;
}

double qa_accuracy(const EncodedLog& log, const QMatrix& qmatrix, const ConceptCatalog& catalog,
                   std::size_t student, const EntryFilter& filter) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& entry : log.entries) {
        if (entry.student != student) continue;
        if (!filter.matches_exercise(entry.exercise, qmatrix, catalog)) continue;
        sum += entry.score;
        ++count;
    }
    if (count == 0) throw ValidationError("qa_accuracy: no entries after filtering");
    return 100.0 * sum / static_cast<double>(count);
}

}  // namespace cogdiag
