#pragma once

// Shared test-only helpers: independent oracles and small statistics
// utilities. Nothing here may call back into the code paths under test.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "cogdiag/dataset.hpp"
#include "cogdiag/ncdm.hpp"

namespace testutil {

// Straight-line re-implementation of the NCDM forward pass, kept deliberately
// independent of cogdiag::predict / net_forward.
inline double oracle_predict(const cogdiag::CdmParams& p, std::size_t s, std::size_t e,
                             const cogdiag::QMatrix& q) {
    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    const std::size_t K = p.n_concepts;
    const double disc = 10.0 * sig(p.disc_raw[e]);
    std::vector<double> x(K, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
        if (q.tests(e, k)) {
            x[k] = disc * (sig(p.theta_raw[s * K + k]) - sig(p.beta_raw[e * K + k]));
        }
    }
    double z = p.net.b2;
    for (std::size_t j = 0; j < p.net.hidden; ++j) {
        double u = p.net.b1[j];
        for (std::size_t k = 0; k < K; ++k) u += p.net.w1[j * K + k] * x[k];
        z += p.net.w2[j] * std::min(std::max(u, 0.0), 1.0);
    }
    return sig(z);
}

inline double oracle_loss(const cogdiag::CdmParams& p,
                          const std::vector<cogdiag::EncodedEntry>& batch,
                          const cogdiag::QMatrix& q) {
    double total = 0.0;
    for (const auto& entry : batch) {
        double prob = oracle_predict(p, entry.student, entry.exercise, q);
        prob = std::min(std::max(prob, 1e-7), 1.0 - 1e-7);
        total += entry.score ? -std::log(prob) : -std::log(1.0 - prob);
    }
    return total / static_cast<double>(batch.size());
}

// Smallest distance of any hidden pre-activation to the clip boundaries over
// the batch. Central differences are only a valid derivative oracle away
// from the kinks, so gradient-check instances keep this above the step size.
inline double min_kink_distance(const cogdiag::CdmParams& p,
                                const std::vector<cogdiag::EncodedEntry>& batch,
                                const cogdiag::QMatrix& q) {
    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    const std::size_t K = p.n_concepts;
    double closest = 1e9;
    for (const auto& entry : batch) {
        const double disc = 10.0 * sig(p.disc_raw[entry.exercise]);
        std::vector<double> x(K, 0.0);
        for (std::size_t k = 0; k < K; ++k) {
            if (q.tests(entry.exercise, k)) {
                x[k] = disc * (sig(p.theta_raw[entry.student * K + k]) -
                               sig(p.beta_raw[entry.exercise * K + k]));
            }
        }
        for (std::size_t j = 0; j < p.net.hidden; ++j) {
            double u = p.net.b1[j];
            for (std::size_t k = 0; k < K; ++k) u += p.net.w1[j * K + k] * x[k];
            closest = std::min(closest, std::fabs(u));
            closest = std::min(closest, std::fabs(u - 1.0));
        }
    }
    return closest;
}

inline std::vector<double> ranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> rank(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double mean_rank = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (std::size_t t = i; t <= j; ++t) rank[order[t]] = mean_rank;
        i = j + 1;
    }
    return rank;
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    const auto rx = ranks(x);
    const auto ry = ranks(y);
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace testutil
