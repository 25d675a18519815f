#include <doctest.h>

#include <cmath>
#include <vector>

#include "cogdiag/errors.hpp"
#include "cogdiag/objectives.hpp"
#include "cogdiag/rng.hpp"

using namespace cogdiag;

namespace {

SequenceLikelihood seq(std::vector<double> lp) {
    SequenceLikelihood s;
    s.token_logprobs = std::move(lp);
    return s;
}

SequenceLikelihood seq(std::vector<double> lp, std::vector<double> ref) {
    SequenceLikelihood s;
    s.token_logprobs = std::move(lp);
    s.ref_token_logprobs = std::move(ref);
    return s;
}

std::vector<SequenceLikelihood> random_batch(Rng& rng, bool with_ref) {
    std::vector<SequenceLikelihood> batch(1 + rng.index(5));
    for (auto& s : batch) {
        const std::size_t len = 1 + rng.index(8);
        for (std::size_t t = 0; t < len; ++t) {
            s.token_logprobs.push_back(-rng.uniform(0.01, 4.0));
        }
        if (with_ref) {
            s.ref_token_logprobs.emplace();
            for (std::size_t t = 0; t < len; ++t) {
                s.ref_token_logprobs->push_back(-rng.uniform(0.01, 4.0));
            }
        }
    }
    return batch;
}

}  // namespace

TEST_CASE("ga loss basics") {
    CHECK(ga_loss(std::vector{seq({0.0, 0.0})}) == doctest::Approx(0.0));
    CHECK(ga_loss(std::vector{seq({std::log(0.5)})}) == doctest::Approx(-0.69314718055994531));
    CHECK_THROWS_AS(ga_loss({}), ValidationError);
    CHECK_THROWS_AS(ga_loss(std::vector{seq({0.5})}), ValidationError);  // positive logprob
}

TEST_CASE("ga loss equals a per-token recount") {
    Rng rng(11);
    for (int round = 0; round < 20; ++round) {
        const auto batch = random_batch(rng, false);
        double expect = 0.0;
        for (const auto& s : batch) {
            double sum = 0.0;
            for (double v : s.token_logprobs) sum += v;
            expect += sum;
        }
        expect /= static_cast<double>(batch.size());
        CHECK(ga_loss(batch) == doctest::Approx(expect).epsilon(1e-14));
    }
}

TEST_CASE("npo loss at the equal-models point") {
    const auto batch = std::vector{seq({-0.7, -0.1}, {-0.7, -0.1})};
    // zero log-ratio with beta = 0.1 -> (2/0.1) * ln 2
    CHECK(npo_loss(batch, 0.1) == doctest::Approx(20.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("npo loss limits and monotonicity in the log-ratio") {
    // strongly negative log-ratio drives the loss toward 0
    const auto vanish = std::vector{seq({-200.0}, {-0.5})};
    CHECK(npo_loss(vanish, 0.1) < 1e-6);

    double previous = -1.0;
    for (double delta : {-5.0, -1.0, 0.0, 1.0, 5.0}) {
        const auto batch = std::vector{seq({-1.0 + std::min(0.0, delta)},
                                           {-1.0 - std::max(0.0, delta)})};
        // log-ratio = delta by construction
        const double loss = npo_loss(batch, 0.1);
        CHECK(loss >= 0.0);
        CHECK(loss > previous);
        previous = loss;
    }
}

TEST_CASE("npo loss equals an independent formula evaluation") {
    Rng rng(12);
    for (int round = 0; round < 20; ++round) {
        const auto batch = random_batch(rng, true);
        const double beta = 0.1;
        double expect = 0.0;
        for (const auto& s : batch) {
            double ratio = 0.0;
            for (std::size_t t = 0; t < s.token_logprobs.size(); ++t) {
                ratio += s.token_logprobs[t] - (*s.ref_token_logprobs)[t];
            }
            expect += -(2.0 / beta) * std::log(1.0 / (1.0 + std::exp(beta * ratio)));
        }
        expect /= static_cast<double>(batch.size());
        CHECK(npo_loss(batch, beta) == doctest::Approx(expect).epsilon(1e-10));
    }
}

TEST_CASE("npo loss requires the reference") {
    CHECK_THROWS_AS(npo_loss(std::vector{seq({-1.0})}, 0.1), ValidationError);
}

TEST_CASE("rmu losses") {
    ActivationPair match;
    match.control = {0.25, -0.5};
    match.current = {{0.25, -0.5}, {0.25, -0.5}};
    CHECK(rmu_losses(match, 0.0).forget == doctest::Approx(0.0));

    ActivationPair self_ref;
    self_ref.control = {0.0, 0.0};
    self_ref.current = {{1.0, 2.0}};
    self_ref.reference = {{1.0, 2.0}};
    CHECK(rmu_losses(self_ref, 1.0).retain == doctest::Approx(0.0));

    ActivationPair unit;
    unit.control = {0.0, 0.0};
    unit.current = {{1.0, 1.0}};
    CHECK(rmu_losses(unit, 0.0).forget == doctest::Approx(2.0));

    ActivationPair bad = unit;
    bad.current.push_back({1.0});
    CHECK_THROWS_AS(rmu_losses(bad, 0.0), ValidationError);
    CHECK_THROWS_AS(rmu_losses(unit, 1.0), ValidationError);  // alpha > 0 without reference
}

TEST_CASE("rmu total combines the terms to machine precision") {
    Rng rng(13);
    for (int round = 0; round < 20; ++round) {
        const std::size_t dim = 1 + rng.index(6);
        const std::size_t tokens = 1 + rng.index(5);
        ActivationPair pair;
        pair.control.resize(dim);
        for (double& v : pair.control) v = rng.uniform(-2.0, 2.0);
        pair.reference.emplace();
        for (std::size_t t = 0; t < tokens; ++t) {
            std::vector<double> cur(dim), ref(dim);
            for (std::size_t i = 0; i < dim; ++i) {
                cur[i] = rng.uniform(-2.0, 2.0);
                ref[i] = rng.uniform(-2.0, 2.0);
            }
            pair.current.push_back(cur);
            pair.reference->push_back(ref);
        }
        const double alpha = rng.uniform(0.0, 10.0);
        const auto losses = rmu_losses(pair, alpha);
        CHECK(losses.forget >= 0.0);
        CHECK(losses.retain >= 0.0);
        CHECK(losses.total == losses.forget + alpha * losses.retain);
    }
}

TEST_CASE("task vector arithmetic") {
    const std::vector<double> f0 = {1.0, -2.0, 0.5};

    // identity: reinforced model equals the base
    CHECK(task_vector(f0, f0, 3.7) == f0);
    // alpha = 0 returns the base weights
    CHECK(task_vector(f0, std::vector<double>{9.0, 9.0, 9.0}, 0.0) == f0);

    // alpha = 5, f_reinforce = f0 + d  ->  f0 - 5 d
    const std::vector<double> d = {0.1, -0.2, 0.3};
    std::vector<double> reinforced(3);
    for (std::size_t i = 0; i < 3; ++i) reinforced[i] = f0[i] + d[i];
    const auto unlearned = task_vector(f0, reinforced, 5.0);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(unlearned[i] == doctest::Approx(f0[i] - 5.0 * d[i]).epsilon(1e-15));
    }

    CHECK_THROWS_AS(task_vector(f0, std::vector<double>{1.0}, 1.0), ValidationError);
}

TEST_CASE("task vector equals an elementwise oracle and is linear") {
    Rng rng(14);
    for (int round = 0; round < 20; ++round) {
        const std::size_t n = 1 + rng.index(10);
        std::vector<double> f0(n), fr(n), fr2(n);
        for (std::size_t i = 0; i < n; ++i) {
            f0[i] = rng.uniform(-3.0, 3.0);
            fr[i] = rng.uniform(-3.0, 3.0);
            fr2[i] = rng.uniform(-3.0, 3.0);
        }
        const double alpha = rng.uniform(0.0, 6.0);
        const auto got = task_vector(f0, fr, alpha);
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(got[i] == doctest::Approx(f0[i] - alpha * (fr[i] - f0[i])).epsilon(1e-15));
        }
        // linearity in f_reinforce: T(f0, (a+b)/2) == (T(f0,a) + T(f0,b)) / 2
        const auto ga = task_vector(f0, fr, alpha);
        const auto gb = task_vector(f0, fr2, alpha);
        std::vector<double> mid(n);
        for (std::size_t i = 0; i < n; ++i) mid[i] = 0.5 * (fr[i] + fr2[i]);
        const auto gm = task_vector(f0, mid, alpha);
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(gm[i] == doctest::Approx(0.5 * (ga[i] + gb[i])).epsilon(1e-12));
        }
    }
}

TEST_CASE("kl divergence basics") {
    const std::vector<double> p = {0.5, 0.5};
    CHECK(kl_retain(p, p) == doctest::Approx(0.0));

    const std::vector<double> q = {0.25, 0.75};
    const double expect = 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0);
    CHECK(kl_retain(p, q) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(expect == doctest::Approx(0.14384103622589045).epsilon(1e-10));

    CHECK_THROWS_AS(kl_retain(std::vector<double>{0.5, 0.6}, q), ValidationError);
    CHECK_THROWS_AS(kl_retain(p, std::vector<double>{0.0, 1.0}), ValidationError);
    CHECK(kl_retain(std::vector<double>{0.0, 1.0}, std::vector<double>{0.5, 0.5}) ==
          doctest::Approx(std::log(2.0)));
}

TEST_CASE("kl divergence is non-negative and zero only at equality") {
    Rng rng(15);
    for (int round = 0; round < 30; ++round) {
        const std::size_t n = 2 + rng.index(6);
        std::vector<double> p(n), q(n);
        double sp = 0.0, sq = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = rng.uniform(0.01, 1.0);
            q[i] = rng.uniform(0.01, 1.0);
            sp += p[i];
            sq += q[i];
        }
        for (std::size_t i = 0; i < n; ++i) {
            p[i] /= sp;
            q[i] /= sq;
        }
        const double kl = kl_retain(p, q);
        CHECK(kl >= 0.0);
        CHECK(kl_retain(p, p) == doctest::Approx(0.0));
        // random perturbation away from q strictly increases divergence from 0
        if (kl > 1e-12) CHECK(kl > 0.0);
    }
}

TEST_CASE("kl oracle recount on a random pair") {
    Rng rng(16);
    std::vector<double> p = {0.2, 0.3, 0.1, 0.4};
    std::vector<double> q = {0.25, 0.25, 0.25, 0.25};
    double expect = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) expect += p[i] * std::log(p[i] / q[i]);
    CHECK(kl_retain(p, q) == doctest::Approx(expect).epsilon(1e-14));
    (void)rng;
}

TEST_CASE("gdr term basics and the ga identity") {
    CHECK(gdr_term(std::vector{seq({0.0})}) == doctest::Approx(0.0));
    CHECK(gdr_term(std::vector{seq({std::log(0.5)})}) == doctest::Approx(std::log(2.0)));

    Rng rng(17);
    for (int round = 0; round < 100; ++round) {
        const auto batch = random_batch(rng, false);
        CHECK(gdr_term(batch) == -ga_loss(batch));
    }
}
