#include "cogdiag/objectives.hpp"

#include <cmath>
#include <numeric>

#include "cogdiag/errors.hpp"

namespace cogdiag {

namespace {

void check_logprobs(const std::vector<double>& lp, const char* what) {
    for (double v : lp) {
        if (!std::isfinite(v) || v > 0.0) {
            throw ValidationError(std::string(what) + ": token log-probabilities must be finite and <= 0");
        }
    }
}

// log(1 + e^x) without overflow.
double softplus(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

}  // namespace

double SequenceLikelihood::sum() const {
    return std::accumulate(token_logprobs.begin(), token_logprobs.end(), 0.0);
}

double SequenceLikelihood::ref_sum() const {
    if (!ref_token_logprobs) throw ValidationError("reference log-probabilities are absent");
    return std::accumulate(ref_token_logprobs->begin(), ref_token_logprobs->end(), 0.0);
}

double ga_loss(std::span<const SequenceLikelihood> batch) {
    if (batch.empty()) throw ValidationError("ga_loss: empty batch");
    double total = 0.0;
    for (const auto& seq : batch) {
        check_logprobs(seq.token_logprobs, "ga_loss");
        total += seq.sum();
    }
    return total / static_cast<double>(batch.size());
}

double npo_loss(std::span<const SequenceLikelihood> batch, double beta) {
    if (batch.empty()) throw ValidationError("npo_loss: empty batch");
    if (!(beta > 0.0)) throw ValidationError("npo_loss: beta must be positive");
    double total = 0.0;
    for (const auto& seq : batch) {
        check_logprobs(seq.token_logprobs, "npo_loss");
        if (!seq.ref_token_logprobs) throw ValidationError("npo_loss: reference log-probabilities required");
        if (seq.ref_token_logprobs->size() != seq.token_logprobs.size()) {
            throw ValidationError("npo_loss: reference length mismatch");
        }
        check_logprobs(*seq.ref_token_logprobs, "npo_loss");
        const double log_ratio = seq.sum() - seq.ref_sum();
        // -log sigmoid(-beta * log_ratio) == softplus(beta * log_ratio)
        total += (2.0 / beta) * softplus(beta * log_ratio);
    }
    return total / static_cast<double>(batch.size());
}

RmuLosses rmu_losses(const ActivationPair& pair, double alpha) {
    if (alpha < 0.0) throw ValidationError("rmu_losses: alpha must be >= 0");
    if (pair.current.empty()) throw ValidationError("rmu_losses: no activation tokens");
    const std::size_t dim = pair.control.size();
    if (dim == 0) throw ValidationError("rmu_losses: empty control vector");

    RmuLosses out;
    for (const auto& token : pair.current) {
        if (token.size() != dim) throw ValidationError("rmu_losses: activation dimension mismatch");
        double d2 = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            const double d = token[i] - pair.control[i];
            d2 += d * d;
        }
        out.forget += d2;
    }
    out.forget /= static_cast<double>(pair.current.size());

    if (pair.reference) {
        if (pair.reference->size() != pair.current.size()) {
            throw ValidationError("rmu_losses: reference token count mismatch");
        }
        for (std::size_t t = 0; t < pair.current.size(); ++t) {
            const auto& ref = (*pair.reference)[t];
            if (ref.size() != dim) throw ValidationError("rmu_losses: reference dimension mismatch");
            double d2 = 0.0;
            for (std::size_t i = 0; i < dim; ++i) {
                const double d = pair.current[t][i] - ref[i];
                d2 += d * d;
            }
            out.retain += d2;
        }
        out.retain /= static_cast<double>(pair.current.size());
    } else if (alpha != 0.0) {
        throw ValidationError("rmu_losses: reference states required when alpha != 0");
    }

    out.total = out.forget + alpha * out.retain;
    return out;
}

std::vector<double> task_vector(std::span<const double> f0, std::span<const double> f_reinforce,
                                double alpha) {
    if (f0.size() != f_reinforce.size()) throw ValidationError("task_vector: length mismatch");
    std::vector<double> out(f0.size());
    for (std::size_t i = 0; i < f0.size(); ++i) {
        out[i] = f0[i] - alpha * (f_reinforce[i] - f0[i]);
    }
    return out;
}

double kl_retain(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw ValidationError("kl_retain: length mismatch");
    double sp = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] < 0.0 || q[i] < 0.0) throw ValidationError("kl_retain: negative probability");
        sp += p[i];
        sq += q[i];
    }
    if (std::fabs(sp - 1.0) > 1e-9 || std::fabs(sq - 1.0) > 1e-9) {
        throw ValidationError("kl_retain: inputs must sum to 1");
    }
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] == 0.0) continue;
        if (q[i] == 0.0) throw ValidationError("kl_retain: q has zero mass where p > 0");
        kl += p[i] * std::log(p[i] / q[i]);
    }
    return kl;
}

double gdr_term(std::span<const SequenceLikelihood> batch) {
    if (batch.empty()) throw ValidationError("gdr_term: empty batch");
    double total = 0.0;
    for (const auto& seq : batch) {
        check_logprobs(seq.token_logprobs, "gdr_term");
        total += -seq.sum();
    }
    return total / static_cast<double>(batch.size());
}

}  // namespace cogdiag
