#pragma once

#include <optional>
#include <span>
#include <vector>

namespace cogdiag {

// Token-level log-likelihoods of one sequence under the model being
// unlearned, optionally paired with the reference (pre-unlearning) model.
struct SequenceLikelihood {
    std::vector<double> token_logprobs;
    std::optional<std::vector<double>> ref_token_logprobs;

    double sum() const;
    double ref_sum() const;  // throws when the reference is absent
};

// Per-token hidden states of the model being unlearned, the optional frozen
// reference states, and the (pre-scaled) control vector the forget loss
// steers activations toward.
struct ActivationPair {
    std::vector<std::vector<double>> current;
    std::optional<std::vector<std::vector<double>>> reference;
    std::vector<double> control;
};

// Mean over sequences of the summed token log-likelihood. This is the
// quantity gradient-ascent unlearning drives down; callers subtract it (or
// flip its sign) to use it as a descent objective.
double ga_loss(std::span<const SequenceLikelihood> batch);

// -(2/beta) * mean log sigmoid(-beta * log-ratio), log-ratio summed per
// sequence against the reference model. Non-negative; increasing in the
// log-ratio; equals (2/beta) * ln 2 when the two models agree.
double npo_loss(std::span<const SequenceLikelihood> batch, double beta);

struct RmuLosses {
    double forget = 0.0;  // token-mean squared distance to the control vector
    double retain = 0.0;  // token-mean squared distance to the reference states
    double total = 0.0;   // forget + alpha * retain
};

// Retain term requires the reference states unless alpha == 0.
RmuLosses rmu_losses(const ActivationPair& pair, double alpha);

// f_unlearn = f0 - alpha * (f_reinforce - f0), elementwise.
std::vector<double> task_vector(std::span<const double> f0, std::span<const double> f_reinforce,
                                double alpha);

// KL(p || q) with 0 log(0/q) = 0. Both arguments must be distributions
// (entries >= 0, sums within 1e-9 of 1); q_i = 0 where p_i > 0 is an error.
double kl_retain(std::span<const double> p, std::span<const double> q);

// Mean cross-entropy of the retain batch, i.e. the standard descent
// objective; equals -ga_loss(batch) identically.
double gdr_term(std::span<const SequenceLikelihood> batch);

}  // namespace cogdiag
