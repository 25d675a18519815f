#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cogdiag/dataset.hpp"
#include "cogdiag/ncdm.hpp"
#include "cogdiag/net.hpp"

namespace cogdiag {

// Signed bipartite response graph: +1 edge for a correct answer, -1 for an
// incorrect one. Immutable once built.
struct InteractionGraph {
    struct Edge {
        std::uint32_t node = 0;  // exercise index (student side) / student index (exercise side)
        std::int8_t sign = 0;
    };

    std::size_t n_students = 0;
    std::size_t n_exercises = 0;
    std::vector<std::vector<Edge>> student_edges;   // per student
    std::vector<std::vector<Edge>> exercise_edges;  // per exercise

    std::size_t edge_count() const;
};

struct IcdmConfig {
    int k_hops = 3;
    double hop_decay = 0.5;  // evidence weight is hop_decay^hop
    double learning_rate = 0.02;
    int epochs = 30;
    int batch_size = 256;
    int hidden_width = 64;
    std::uint64_t seed = 0;

    void check() const;  // throws ConfigError
};

// Throws ValidationError when a registered student has no responses.
InteractionGraph build_graph(const EncodedLog& log, const QMatrix& qmatrix);

// Concept-wise signed mean of the responses reachable within k hops,
// attenuated by hop distance and squashed through the logistic. Own
// responses are hop 0, peers sharing an exercise contribute at hop 2, and
// so on; each hop ring is pooled into its own signed mean and the ring
// means are mixed with weights hop_decay^hop. Concepts with no reachable
// evidence default to 0.5.
std::vector<double> aggregate_student(const InteractionGraph& graph, const QMatrix& qmatrix,
                                      std::size_t student, int k_hops, double hop_decay = 0.5);

struct IcdmModel {
    IcdmConfig config;
    InteractionGraph graph;              // training graph, kept for inductive scoring
    std::vector<double> student_states;  // n_students x n_concepts aggregated factors
    std::vector<double> beta_raw;        // n_exercises x n_concepts
    std::vector<double> disc_raw;        // n_exercises
    InteractionNet net;
    TrainingTrace trace;

    std::size_t n_concepts() const { return net.inputs; }
    std::span<const double> state_of(std::size_t student) const;
};

// Fits exercise factors and the shared monotone network on top of the fixed
// aggregated student factors. Deterministic for a given (data, config).
IcdmModel train_inductive(const EncodedLog& log, const QMatrix& qmatrix,
                          const IcdmConfig& config);

double predict(const IcdmModel& model, std::span<const double> student_state,
               std::size_t exercise, const QMatrix& qmatrix);

// State of a student already present in the training graph.
std::vector<double> diagnose_training_student(const IcdmModel& model, const QMatrix& qmatrix,
                                              std::size_t student);

// State of an unseen student given only its own responses; the training
// graph is extended with the new node for the aggregation.
std::vector<double> diagnose_unseen(const IcdmModel& model, const QMatrix& qmatrix,
                                    std::span<const EncodedEntry> own_entries);

std::string icdm_model_to_json(const IcdmModel& model);
void save_icdm_model(const IcdmModel& model, const std::string& path);

// Node/edge counts plus a degree histogram, as CSV.
void write_graph_summary_csv(const InteractionGraph& graph, std::ostream& out);

}  // namespace cogdiag
