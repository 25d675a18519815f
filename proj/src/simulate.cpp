#include "cogdiag/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>

#include "cogdiag/errors.hpp"
#include "cogdiag/net.hpp"
#include "cogdiag/rng.hpp"

namespace cogdiag {

namespace {

// Concentration of the beta mixture components; small enough that students
// inside the same component still spread out measurably.
constexpr double kMixtureConcentration = 8.0;

}  // namespace

void TrajectorySpec::check(const ConceptCatalog& catalog) const {
    if (steps < 1) throw ConfigError("trajectory steps must be >= 1");
    if (decay_rate <= 0.0 || decay_rate > 1.0) throw ConfigError("decay_rate must lie in (0, 1]");
    if (mode == TrajectoryMode::Selective) {
        if (targeted_concepts.empty()) {
            throw ConfigError("selective trajectory requires a non-empty target set");
        }
        for (const auto& id : targeted_concepts) {
            if (!catalog.index_of(id)) throw ConfigError("unknown targeted concept '" + id + "'");
        }
    }
}

std::vector<TrueStudent> sample_cohort(std::size_t n_students, const ConceptCatalog& catalog,
                                       std::uint64_t seed, double separation) {
    if (n_students < 1) throw ConfigError("cohort needs at least one student");
    if (separation < 0.0 || separation > 1.0) throw ConfigError("separation must lie in [0, 1]");
    const std::size_t n_concepts = catalog.size();
    std::vector<TrueStudent> cohort;
    cohort.reserve(n_students);
    Rng rng(Rng::derive(seed, 0xc0));
    for (std::size_t i = 0; i < n_students; ++i) {
        TrueStudent student;
        student.id = "sim" + std::to_string(i);
        student.mastery.resize(n_concepts);
        for (std::size_t k = 0; k < n_concepts; ++k) {
            const double mean = rng.bernoulli(0.5) ? 0.5 - separation / 2.0 : 0.5 + separation / 2.0;
            if (mean <= 0.0 || mean >= 1.0) {
                student.mastery[k] = std::clamp(mean, 0.0, 1.0);
            } else {
                student.mastery[k] = rng.beta(mean * kMixtureConcentration,
                                              (1.0 - mean) * kMixtureConcentration);
            }
        }
        cohort.push_back(std::move(student));
    }
    return cohort;
}

namespace {

double response_probability(const TrueStudent& student, std::size_t exercise,
                            const QMatrix& qmatrix, std::span<const double> difficulty,
                            double discrimination) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t k = 0; k < qmatrix.n_concepts(); ++k) {
        if (!qmatrix.tests(exercise, k)) continue;
        sum += student.mastery[k];
        ++count;
    }
    if (count == 0) throw ValidationError("exercise tests no concept");
    const double mean_mastery = sum / static_cast<double>(count);
    return sigmoid(discrimination * (mean_mastery - difficulty[exercise]));
}

}  // namespace

ResponseLog sample_responses(std::span<const TrueStudent> students, const QMatrix& qmatrix,
                             std::span<const double> difficulty, double discrimination,
                             std::uint64_t seed) {
    if (difficulty.size() != qmatrix.n_exercises()) {
        throw ValidationError("difficulty vector length does not match the q-matrix");
    }
    ResponseLog log;
    log.entries.reserve(students.size() * qmatrix.n_exercises());
    for (std::size_t i = 0; i < students.size(); ++i) {
        if (students[i].mastery.size() != qmatrix.n_concepts()) {
            throw ValidationError("student mastery length does not match the q-matrix");
        }
        // Per-student stream so cohorts can be regenerated piecewise.
        Rng rng(Rng::derive(seed, 0xa000 + i));
        for (std::size_t e = 0; e < qmatrix.n_exercises(); ++e) {
            const double p = response_probability(students[i], e, qmatrix, difficulty, discrimination);
            log.entries.push_back(
                {students[i].id, qmatrix.exercise_ids[e], rng.bernoulli(p) ? 1 : 0});
        }
    }
    return log;
}

double expected_accuracy(std::span<const double> mastery, const QMatrix& qmatrix,
                         std::span<const double> difficulty, double discrimination) {
    TrueStudent probe;
    probe.mastery.assign(mastery.begin(), mastery.end());
    double total = 0.0;
    for (std::size_t e = 0; e < qmatrix.n_exercises(); ++e) {
        total += response_probability(probe, e, qmatrix, difficulty, discrimination);
    }
    return total / static_cast<double>(qmatrix.n_exercises());
}

namespace {

std::vector<double> decayed_mastery(const TrueStudent& base, const TrajectorySpec& spec,
                                    const ConceptCatalog& catalog, int step) {
    std::vector<bool> affected(catalog.size(), spec.mode == TrajectoryMode::Uniform);
    if (spec.mode == TrajectoryMode::Selective) {
        for (const auto& id : spec.targeted_concepts) {
            affected[*catalog.index_of(id)] = true;
        }
    }
    std::vector<double> mastery = base.mastery;
    const double factor = std::pow(1.0 - spec.decay_rate, step);
    for (std::size_t k = 0; k < mastery.size(); ++k) {
        if (affected[k]) mastery[k] *= factor;
    }
    return mastery;
}

}  // namespace

std::vector<TrajectoryStep> run_trajectory(const TrueStudent& base, const TrajectorySpec& spec,
                                           const ConceptCatalog& catalog, const QMatrix& qmatrix,
                                           std::span<const double> difficulty,
                                           double discrimination, std::uint64_t seed) {
    spec.check(catalog);
    if (base.mastery.size() != catalog.size()) {
        throw ValidationError("base mastery length does not match the catalog");
    }
    std::vector<TrajectoryStep> steps;
    steps.reserve(static_cast<std::size_t>(spec.steps) + 1);
    for (int t = 0; t <= spec.steps; ++t) {
        TrajectoryStep step;
        step.student.mastery = decayed_mastery(base, spec, catalog, t);
        if (t == 0) {
            step.student.id = base.id;
            step.student.lineage = base.lineage;
        } else {
            step.student.id = base.id + "/" + spec.label + "#" + std::to_string(t);
            step.student.lineage = Lineage{spec.label, t};
        }
        step.log = sample_responses(std::span<const TrueStudent>(&step.student, 1), qmatrix,
                                    difficulty, discrimination,
                                    Rng::derive(seed, 0x7000 + static_cast<std::uint64_t>(t)));
        steps.push_back(std::move(step));
    }
    return steps;
}

AugmentResult augment_students(const ResponseLog& log, const std::string& source_student,
                               std::size_t n_copies, double sample_fraction, std::uint64_t seed) {
    if (sample_fraction <= 0.0 || sample_fraction > 1.0) {
        throw ConfigError("sample_fraction must lie in (0, 1]");
    }
    std::vector<std::size_t> source_entries;
    for (std::size_t i = 0; i < log.entries.size(); ++i) {
        if (log.entries[i].student == source_student) source_entries.push_back(i);
    }
    if (source_entries.empty()) {
        throw ValidationError("source student '" + source_student + "' is absent from the log");
    }

    AugmentResult result;
    result.extended = log;
    const auto subset_size = std::max<std::size_t>(
        1, static_cast<std::size_t>(
               std::llround(sample_fraction * static_cast<double>(source_entries.size()))));

    for (std::size_t copy = 0; copy < n_copies; ++copy) {
        Rng rng(Rng::derive(seed, 0xa17 + copy));
        std::vector<std::size_t> picks = source_entries;
        rng.shuffle(picks);
        picks.resize(subset_size);
        std::sort(picks.begin(), picks.end());

        StudentRecord record;
        record.id = source_student + "~aug" + std::to_string(copy);
        record.synthetic = true;
        for (std::size_t i : picks) {
            const auto& entry = log.entries[i];
            result.extended.entries.push_back({record.id, entry.exercise, entry.score});
        }
        result.records.push_back(std::move(record));
    }
    return result;
}

double solve_decay_for_accuracy(const TrueStudent& base, const TrajectorySpec& spec,
                                const ConceptCatalog& catalog, const QMatrix& qmatrix,
                                std::span<const double> difficulty, double discrimination,
                                double target, double tolerance) {
    auto final_acc = [&](double decay) {
        TrajectorySpec probe = spec;
        probe.decay_rate = decay;
        const auto mastery = decayed_mastery(base, probe, catalog, probe.steps);
        return expected_accuracy(mastery, qmatrix, difficulty, discrimination);
    };
    const double hi_acc = final_acc(1e-9);
    const double lo_acc = final_acc(1.0);
    if (target > hi_acc || target < lo_acc) {
        throw ConfigError("target accuracy is outside the attainable range [" +
                          std::to_string(lo_acc) + ", " + std::to_string(hi_acc) + "]");
    }
    double lo = 1e-9, hi = 1.0;
    while (hi - lo > 1e-12) {
        const double mid = 0.5 * (lo + hi);
        const double acc = final_acc(mid);
        if (std::fabs(acc - target) <= tolerance) return mid;
        if (acc > target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

QMatrix random_qmatrix(const ConceptCatalog& catalog, std::size_t n_exercises,
                       double multi_fraction, std::uint64_t seed) {
    const std::size_t n_concepts = catalog.size();
    if (n_exercises < n_concepts) {
        throw ConfigError("need at least one exercise per concept");
    }
    QMatrix q;
    q.concept_ids.reserve(n_concepts);
    for (const auto& c : catalog.concepts()) q.concept_ids.push_back(c.id);
    q.exercise_ids.reserve(n_exercises);
    q.cells.assign(n_exercises * n_concepts, 0);

    Rng rng(Rng::derive(seed, 0x9a));
    for (std::size_t e = 0; e < n_exercises; ++e) {
        q.exercise_ids.push_back("ex" + std::to_string(e));
        // Cycle through the concepts first so every one is covered.
        const std::size_t primary = e < n_concepts ? e : rng.index(n_concepts);
        q.cells[e * n_concepts + primary] = 1;
        if (rng.uniform() < multi_fraction) {
            q.cells[e * n_concepts + rng.index(n_concepts)] = 1;
        }
    }
    return q;
}

std::vector<double> sample_difficulties(std::size_t n_exercises, double lo, double hi,
                                        std::uint64_t seed) {
    Rng rng(Rng::derive(seed, 0xd1));
    std::vector<double> out(n_exercises);
    for (double& d : out) d = rng.uniform(lo, hi);
    return out;
}

std::string truth_to_json(std::span<const TrueStudent> students) {
    nlohmann::ordered_json list = nlohmann::ordered_json::array();
    for (const auto& s : students) {
        nlohmann::ordered_json item{{"id", s.id}, {"mastery", s.mastery}};
        if (s.lineage) {
            item["lineage"] = {{"method", s.lineage->method}, {"step", s.lineage->step}};
        }
        list.push_back(std::move(item));
    }
    nlohmann::ordered_json j{{"students", list}};
    return j.dump(2) + "\n";
}

void save_truth(std::span<const TrueStudent> students, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write '" + path + "'");
    out << truth_to_json(students);
}

}  // namespace cogdiag
