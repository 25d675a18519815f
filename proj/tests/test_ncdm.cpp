#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "cogdiag/errors.hpp"
#include "cogdiag/metrics.hpp"
#include "cogdiag/ncdm.hpp"
#include "cogdiag/rng.hpp"
#include "cogdiag/simulate.hpp"
#include "helpers.hpp"

using namespace cogdiag;

namespace {

QMatrix small_qmatrix(std::size_t n_exercises, std::size_t n_concepts, Rng& rng) {
    QMatrix q;
    for (std::size_t k = 0; k < n_concepts; ++k) q.concept_ids.push_back("k" + std::to_string(k));
    for (std::size_t e = 0; e < n_exercises; ++e) {
        q.exercise_ids.push_back("e" + std::to_string(e));
        bool any = false;
        for (std::size_t k = 0; k < n_concepts; ++k) {
            const bool on = rng.bernoulli(0.5);
            q.cells.push_back(on ? 1 : 0);
            any = any || on;
        }
        if (!any) q.cells[e * n_concepts + rng.index(n_concepts)] = 1;
    }
    return q;
}

EncodedLog full_random_log(std::size_t n_students, std::size_t n_exercises, Rng& rng) {
    EncodedLog log;
    log.n_students = n_students;
    log.n_exercises = n_exercises;
    for (std::uint32_t s = 0; s < n_students; ++s) {
        for (std::uint32_t e = 0; e < n_exercises; ++e) {
            log.entries.push_back({s, e, static_cast<std::uint8_t>(rng.bernoulli(0.5) ? 1 : 0)});
        }
    }
    return log;
}

}  // namespace

TEST_CASE("predict is 0.5 when theta equals beta and biases vanish") {
    Rng rng(1);
    auto q = small_qmatrix(3, 4, rng);
    auto params = init_params(2, 3, 4, 5, 7);
    params.beta_raw = std::vector<double>(params.beta_raw.size(), 0.0);
    for (std::size_t s = 0; s < 2; ++s) {
        for (std::size_t k = 0; k < 4; ++k) params.theta_raw[s * 4 + k] = 0.0;
    }
    std::fill(params.net.b1.begin(), params.net.b1.end(), 0.0);
    params.net.b2 = 0.0;
    // masked input is the zero vector; clipped-linear units emit 0, so the
    // score reduces to the zero final bias
    CHECK(predict(params, 0, 1, q) == doctest::Approx(0.5));
}

TEST_CASE("predict exceeds 0.5 for a strong student on an easy exercise") {
    Rng rng(2);
    auto q = small_qmatrix(3, 4, rng);
    auto params = init_params(2, 3, 4, 5, 7);
    for (double& v : params.theta_raw) v = 8.0;   // sigmoid ~ 1
    for (double& v : params.beta_raw) v = -8.0;   // sigmoid ~ 0
    params.net.project_nonneg();
    for (double& v : params.net.w1) v = std::max(v, 0.01);
    for (double& v : params.net.w2) v = std::max(v, 0.01);
    std::fill(params.net.b1.begin(), params.net.b1.end(), 0.0);
    params.net.b2 = 0.0;
    CHECK(predict(params, 0, 0, q) > 0.5);
}

TEST_CASE("predict matches the independent forward oracle") {
    Rng rng(3);
    for (int round = 0; round < 25; ++round) {
        auto q = small_qmatrix(6, 3, rng);
        const auto params = init_params(4, 6, 3, 4, 1000 + round);
        for (std::size_t s = 0; s < 4; ++s) {
            for (std::size_t e = 0; e < 6; ++e) {
                CHECK(predict(params, s, e, q) ==
                      doctest::Approx(testutil::oracle_predict(params, s, e, q)).epsilon(1e-14));
            }
        }
    }
}

TEST_CASE("masked concepts cannot influence the prediction") {
    Rng rng(4);
    auto q = small_qmatrix(5, 4, rng);
    auto params = init_params(3, 5, 4, 6, 42);
    for (std::size_t e = 0; e < 5; ++e) {
        for (std::size_t k = 0; k < 4; ++k) {
            if (q.tests(e, k)) continue;
            const double before = predict(params, 1, e, q);
            auto perturbed = params;
            perturbed.theta_raw[1 * 4 + k] += 3.21;
            CHECK(predict(perturbed, 1, e, q) == before);  // exact equality
        }
    }
}

TEST_CASE("raising theta on a tested concept never lowers the prediction") {
    Rng rng(5);
    for (int round = 0; round < 20; ++round) {
        auto q = small_qmatrix(6, 3, rng);
        auto params = init_params(4, 6, 3, 4, 2000 + round);
        params.net.project_nonneg();  // monotone configuration
        const std::size_t s = rng.index(4);
        const std::size_t e = rng.index(6);
        const auto tested = q.concepts_of(e);
        const std::size_t k = tested[rng.index(tested.size())];
        const double before = predict(params, s, e, q);
        auto bumped = params;
        bumped.theta_raw[s * 3 + k] += rng.uniform(0.0, 2.0);
        CHECK(predict(bumped, s, e, q) >= before - 1e-15);
    }
}

TEST_CASE("loss analytic values") {
    Rng rng(6);
    auto q = small_qmatrix(2, 2, rng);

    // force p = 0.5 everywhere: theta = beta, zero biases
    auto params = init_params(1, 2, 2, 3, 9);
    params.theta_raw = {0.0, 0.0};
    params.beta_raw = std::vector<double>(params.beta_raw.size(), 0.0);
    std::fill(params.net.b1.begin(), params.net.b1.end(), 0.0);
    params.net.b2 = 0.0;
    std::vector<EncodedEntry> batch = {{0, 0, 1}, {0, 1, 0}};
    CHECK(batch_loss(params, batch, q) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    // saturated score pins the probability to the clamp boundary
    params.net.b2 = 100.0;
    std::vector<EncodedEntry> sure = {{0, 0, 1}};
    CHECK(batch_loss(params, sure, q) == doctest::Approx(-std::log(1.0 - 1e-7)).epsilon(1e-6));

    CHECK_THROWS_AS(batch_loss(params, {}, q), ValidationError);
}

TEST_CASE("loss matches the independent oracle on random batches") {
    Rng rng(7);
    for (int round = 0; round < 20; ++round) {
        auto q = small_qmatrix(8, 3, rng);
        const auto params = init_params(5, 8, 3, 4, 3000 + round);
        auto log = full_random_log(5, 8, rng);
        CHECK(batch_loss(params, log.entries, q) ==
              doctest::Approx(testutil::oracle_loss(params, log.entries, q)).epsilon(1e-13));
    }
}

TEST_CASE("analytic gradients match central finite differences") {
    Rng rng(8);
    int checked = 0;
    std::uint64_t seed = 4000;
    while (checked < 20) {
        auto q = small_qmatrix(8, 3, rng);
        auto params = init_params(5, 8, 3, 4, seed++);
        auto log = full_random_log(5, 8, rng);

        // central differences are only valid away from the clip kinks
        if (testutil::min_kink_distance(params, log.entries, q) < 1e-3) continue;
        ++checked;

        CdmGrads grads;
        grads.resize(params);
        accumulate_gradients(params, log.entries, q, grads);

        const double h = 1e-5;
        auto fd_check = [&](std::vector<double>& values, const std::vector<double>& analytic,
                            const char* group) {
            double num = 0.0, den_a = 0.0, den_f = 0.0;
            for (std::size_t i = 0; i < values.size(); ++i) {
                const double saved = values[i];
                values[i] = saved + h;
                const double up = batch_loss(params, log.entries, q);
                values[i] = saved - h;
                const double down = batch_loss(params, log.entries, q);
                values[i] = saved;
                const double fd = (up - down) / (2.0 * h);
                num += (analytic[i] - fd) * (analytic[i] - fd);
                den_a += analytic[i] * analytic[i];
                den_f += fd * fd;
            }
            const double rel =
                std::sqrt(num) / std::max(std::sqrt(den_a) + std::sqrt(den_f), 1e-10);
            INFO("group ", group);
            CHECK(rel < 1e-4);
        };

        fd_check(params.theta_raw, grads.theta, "theta");
        fd_check(params.beta_raw, grads.beta, "beta");
        fd_check(params.disc_raw, grads.disc, "disc");
        fd_check(params.net.w1, grads.net.w1, "w1");
        fd_check(params.net.b1, grads.net.b1, "b1");
        fd_check(params.net.w2, grads.net.w2, "w2");
        {
            std::vector<double> b2{params.net.b2};
            const double saved = params.net.b2;
            params.net.b2 = saved + h;
            const double up = batch_loss(params, log.entries, q);
            params.net.b2 = saved - h;
            const double down = batch_loss(params, log.entries, q);
            params.net.b2 = saved;
            const double fd = (up - down) / (2.0 * h);
            CHECK(std::fabs(grads.net.b2 - fd) /
                      std::max(std::fabs(grads.net.b2) + std::fabs(fd), 1e-10) <
                  1e-4);
        }
    }
}

TEST_CASE("zero epochs returns the seeded initialization unchanged") {
    Rng rng(9);
    auto q = small_qmatrix(6, 3, rng);
    auto log = full_random_log(4, 6, rng);
    TrainConfig config;
    config.epochs = 0;
    config.hidden_width = 4;
    config.seed = 77;
    const auto result = train(log, q, config);
    CHECK(result.params == init_params(4, 6, 3, 4, 77));
    CHECK(result.trace.epochs.empty());
}

TEST_CASE("training is bit-deterministic for a fixed seed") {
    Rng rng(10);
    auto q = small_qmatrix(10, 3, rng);
    auto log = full_random_log(6, 10, rng);
    TrainConfig config;
    config.epochs = 5;
    config.hidden_width = 8;
    config.learning_rate = 0.5;
    config.batch_size = 16;
    config.seed = 123;
    config.validation_fraction = 0.2;

    const auto a = train(log, q, config);
    const auto b = train(log, q, config);
    CHECK(a.params == b.params);
    REQUIRE(a.trace.epochs.size() == b.trace.epochs.size());
    for (std::size_t i = 0; i < a.trace.epochs.size(); ++i) {
        CHECK(a.trace.epochs[i].train_loss == b.trace.epochs[i].train_loss);
        CHECK(a.trace.epochs[i].val_loss == b.trace.epochs[i].val_loss);
        CHECK(a.trace.epochs[i].val_acc == b.trace.epochs[i].val_acc);
    }
}

TEST_CASE("network weights stay non-negative through training") {
    Rng rng(11);
    auto q = small_qmatrix(10, 3, rng);
    auto log = full_random_log(6, 10, rng);
    TrainConfig config;
    config.epochs = 4;
    config.hidden_width = 8;
    config.learning_rate = 2.0;
    config.seed = 5;
    const auto result = train(log, q, config);
    CHECK(result.params.net.min_weight() >= 0.0);
}

TEST_CASE("training recovers simulated masteries") {
    const std::vector<Concept> concepts = [] {
        std::vector<Concept> out;
        for (int k = 0; k < 6; ++k) out.push_back({"k" + std::to_string(k), ConceptKind::Forget, "d"});
        return out;
    }();
    const ConceptCatalog catalog(concepts);
    const auto cohort = sample_cohort(60, catalog, 2024, 0.8);
    const auto qmatrix = random_qmatrix(catalog, 300, 0.25, 5);
    const auto difficulty = sample_difficulties(300, 0.25, 0.75, 6);
    const auto log = sample_responses(cohort, qmatrix, difficulty, 6.0, 7);

    StudentRegistry registry;
    for (const auto& s : cohort) registry.students.push_back({s.id, std::nullopt, false});
    const auto encoded = encode_log(log, registry, qmatrix);

    // hold out one in ten entries per student
    EncodedLog train_log, heldout;
    train_log.n_students = heldout.n_students = encoded.n_students;
    train_log.n_exercises = heldout.n_exercises = encoded.n_exercises;
    for (std::size_t i = 0; i < encoded.entries.size(); ++i) {
        (i % 10 == 3 ? heldout : train_log).entries.push_back(encoded.entries[i]);
    }

    TrainConfig config;
    config.learning_rate = 1.0;
    config.epochs = 25;
    config.batch_size = 256;
    config.hidden_width = 32;
    config.seed = 99;
    const auto result = train(train_log, qmatrix, config);

    // held-out prediction accuracy
    const auto& params = result.params;
    const double acc = prediction_accuracy(
        [&](const EncodedEntry& entry) { return predict(params, entry.student, entry.exercise, qmatrix); },
        heldout.entries);
    CHECK(acc > 0.75);

    // state ranking against ground truth, per concept
    const auto states = extract_states(params, registry);
    double worst = 1.0;
    for (std::size_t k = 0; k < catalog.size(); ++k) {
        std::vector<double> diagnosed, truth;
        for (std::size_t s = 0; s < cohort.size(); ++s) {
            diagnosed.push_back(states[s].values[k]);
            truth.push_back(cohort[s].mastery[k]);
        }
        worst = std::min(worst, testutil::spearman(diagnosed, truth));
    }
    CHECK(worst >= 0.8);
}

TEST_CASE("extract_states squashes theta into (0,1)") {
    auto params = init_params(2, 3, 2, 4, 1);
    params.theta_raw = {0.0, 0.0, 40.0, -40.0};
    StudentRegistry registry;
    registry.students = {{"a", std::nullopt, false}, {"b", std::nullopt, false}};
    const auto states = extract_states(params, registry);
    CHECK(states[0].values[0] == doctest::Approx(0.5));
    CHECK(states[0].values[1] == doctest::Approx(0.5));
    CHECK(states[1].values[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(states[1].values[1] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("mastery is the mean of the forget slice") {
    const ConceptCatalog catalog({{"a", ConceptKind::Forget, ""},
                                  {"b", ConceptKind::Retain, ""},
                                  {"c", ConceptKind::Forget, ""}});
    KnowledgeState state{"s", {0.2, 0.9, 0.4}, DiagnosisMethod::Ncdm};
    CHECK(mastery(state, catalog) == doctest::Approx(0.3));

    KnowledgeState uniform{"s", {0.5, 0.5, 0.5}, DiagnosisMethod::Ncdm};
    CHECK(mastery(uniform, catalog) == doctest::Approx(0.5));
    // percentage reporting is 100x the aggregate
    CHECK(100.0 * mastery(uniform, catalog) == doctest::Approx(50.0));
}

TEST_CASE("trained parameters round-trip through JSON") {
    const auto params = init_params(3, 4, 2, 5, 31);
    const auto back = parse_params_json(params_to_json(params));
    CHECK(back == params);
}

TEST_CASE("training trace exports CSV") {
    TrainingTrace trace;
    trace.epochs.push_back({0, 0.7, 0.69, 0.55});
    trace.epochs.push_back({1, 0.6, std::nullopt, std::nullopt});
    std::ostringstream out;
    trace.write_csv(out);
    CHECK(out.str() == "epoch,train_loss,val_loss,val_acc\n0,0.7,0.69,0.55\n1,0.6,,\n");
}

TEST_CASE("training rejects a student with no responses") {
    Rng rng(12);
    auto q = small_qmatrix(4, 2, rng);
    EncodedLog log;
    log.n_students = 3;  // student 2 never appears
    log.n_exercises = 4;
    log.entries = {{0, 0, 1}, {1, 1, 0}};
    TrainConfig config;
    CHECK_THROWS_AS(train(log, q, config), ValidationError);
}
