#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cogdiag/dataset.hpp"
#include "cogdiag/net.hpp"

namespace cogdiag {

// Per-exercise discrimination is sigmoid(raw) scaled by this constant.
// Without the scale the masked difference of two squashed factors is too
// small for plain SGD to bootstrap the three-way coupling between student
// factors, exercise factors and the network.
inline constexpr double kDiscriminationScale = 10.0;

struct TrainConfig {
    double learning_rate = 0.02;
    int epochs = 30;
    int batch_size = 256;
    int hidden_width = 64;
    std::uint64_t seed = 0;
    int early_stop_patience = 0;       // 0 disables early stopping
    double validation_fraction = 0.0;  // in [0,1)

    void check() const;  // throws ConfigError
};

struct CdmParams {
    std::size_t n_students = 0;
    std::size_t n_exercises = 0;
    std::size_t n_concepts = 0;
    std::vector<double> theta_raw;  // n_students x n_concepts
    std::vector<double> beta_raw;   // n_exercises x n_concepts
    std::vector<double> disc_raw;   // n_exercises
    InteractionNet net;

    double theta(std::size_t s, std::size_t k) const { return theta_raw[s * n_concepts + k]; }
    double beta(std::size_t e, std::size_t k) const { return beta_raw[e * n_concepts + k]; }

    bool operator==(const CdmParams&) const = default;
};

// Seeded uniform(-0.1, 0.1) initialization of every raw parameter.
CdmParams init_params(std::size_t n_students, std::size_t n_exercises, std::size_t n_concepts,
                      int hidden_width, std::uint64_t seed);

// P(student s answers exercise e correctly). Throws on dimension mismatch.
double predict(const CdmParams& params, std::size_t student, std::size_t exercise,
               const QMatrix& qmatrix);

// Mean binary cross-entropy over the batch, probabilities clamped to
// [1e-7, 1 - 1e-7]. Throws on an empty batch.
double batch_loss(const CdmParams& params, std::span<const EncodedEntry> batch,
                  const QMatrix& qmatrix);

struct CdmGrads {
    std::vector<double> theta;
    std::vector<double> beta;
    std::vector<double> disc;
    NetGrads net;

    void resize(const CdmParams& params);
    void zero();
};

// Accumulates mean-normalized gradients for the batch and returns the batch
// loss. Exposed so the finite-difference oracle can exercise it directly.
double accumulate_gradients(const CdmParams& params, std::span<const EncodedEntry> batch,
                            const QMatrix& qmatrix, CdmGrads& grads);

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    std::optional<double> val_loss;
    std::optional<double> val_acc;
};

struct TrainingTrace {
    std::vector<EpochStats> epochs;

    void write_csv(std::ostream& out) const;  // epoch,train_loss,val_loss,val_acc
};

struct TrainResult {
    CdmParams params;
    TrainingTrace trace;
};

// Mini-batch gradient descent with non-negativity projection of the network
// weights after every update. Deterministic for a given (data, config) pair.
// Throws TrainDivergence when the loss stops being finite.
TrainResult train(const EncodedLog& log, const QMatrix& qmatrix, const TrainConfig& config);

// F_s = sigmoid(theta_raw_s), one state per registered student.
std::vector<KnowledgeState> extract_states(const CdmParams& params,
                                           const StudentRegistry& registry);

// Mean of the forget slice of the state. Throws when the catalog has no
// Forget concepts.
double mastery(const KnowledgeState& state, const ConceptCatalog& catalog);

// Trained-parameter persistence (versioned JSON document).
std::string params_to_json(const CdmParams& params);
CdmParams parse_params_json(const std::string& text);
void save_params(const CdmParams& params, const std::string& path);
CdmParams load_params(const std::string& path);

}  // namespace cogdiag
