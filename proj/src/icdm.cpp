#include "cogdiag/icdm.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "cogdiag/errors.hpp"
#include "cogdiag/rng.hpp"

namespace cogdiag {

void IcdmConfig::check() const {
    if (k_hops < 1) throw ConfigError("k_hops must be >= 1");
    if (hop_decay <= 0.0 || hop_decay > 1.0) throw ConfigError("hop_decay must lie in (0, 1]");
    if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size <= 0) throw ConfigError("batch_size must be positive");
    if (hidden_width <= 0) throw ConfigError("hidden_width must be positive");
}

std::size_t InteractionGraph::edge_count() const {
    std::size_t n = 0;
    for (const auto& edges : student_edges) n += edges.size();
    return n;
}

InteractionGraph build_graph(const EncodedLog& log, const QMatrix& qmatrix) {
    if (log.n_exercises != qmatrix.n_exercises()) {
        throw ValidationError("log exercise space does not match the q-matrix");
    }
    InteractionGraph graph;
    graph.n_students = log.n_students;
    graph.n_exercises = log.n_exercises;
    graph.student_edges.resize(log.n_students);
    graph.exercise_edges.resize(log.n_exercises);
    for (const auto& entry : log.entries) {
        const std::int8_t sign = entry.score ? 1 : -1;
        graph.student_edges[entry.student].push_back({entry.exercise, sign});
        graph.exercise_edges[entry.exercise].push_back({entry.student, sign});
    }
    // Keep adjacency in index order so the graph is independent of log order.
    for (auto& edges : graph.student_edges) {
        std::sort(edges.begin(), edges.end(),
                  [](const auto& a, const auto& b) { return a.node < b.node; });
    }
    for (auto& edges : graph.exercise_edges) {
        std::sort(edges.begin(), edges.end(),
                  [](const auto& a, const auto& b) { return a.node < b.node; });
    }
    for (std::size_t s = 0; s < graph.n_students; ++s) {
        if (graph.student_edges[s].empty()) {
            throw ValidationError("student index " + std::to_string(s) + " has no responses");
        }
    }
    return graph;
}

namespace {

// Distances of every student node from `student` in the bipartite graph,
// capped at max_dist. Students sit at even distances.
std::vector<int> student_distances(const InteractionGraph& graph, std::size_t student,
                                   int max_dist) {
    std::vector<int> dist_s(graph.n_students, -1);
    std::vector<int> dist_e(graph.n_exercises, -1);
    dist_s[student] = 0;
    std::deque<std::pair<std::uint32_t, bool>> queue;  // (node, is_student)
    queue.emplace_back(static_cast<std::uint32_t>(student), true);
    while (!queue.empty()) {
        auto [node, is_student] = queue.front();
        queue.pop_front();
        const int d = is_student ? dist_s[node] : dist_e[node];
        if (d >= max_dist) continue;
        if (is_student) {
            for (const auto& edge : graph.student_edges[node]) {
                if (dist_e[edge.node] < 0) {
                    dist_e[edge.node] = d + 1;
                    queue.emplace_back(edge.node, false);
                }
            }
        } else {
            for (const auto& edge : graph.exercise_edges[node]) {
                if (dist_s[edge.node] < 0) {
                    dist_s[edge.node] = d + 1;
                    queue.emplace_back(edge.node, true);
                }
            }
        }
    }
    return dist_s;
}

// Pools the signed response mean per hop ring first and then mixes the hop
// means with geometrically decaying weights. Pooling per hop keeps the
// student's own evidence from being swamped by a large peer population.
std::vector<double> aggregate_impl(const InteractionGraph& graph, const QMatrix& qmatrix,
                                   std::size_t student, int k_hops, double hop_decay) {
    const std::size_t n_concepts = qmatrix.n_concepts();
    const std::size_t n_rings = static_cast<std::size_t>(k_hops) / 2 + 1;  // hops 0, 2, 4, ...
    std::vector<double> num(n_rings * n_concepts, 0.0);
    std::vector<double> den(n_rings * n_concepts, 0.0);
    const auto dist = student_distances(graph, student, k_hops);
    for (std::size_t s = 0; s < graph.n_students; ++s) {
        if (dist[s] < 0 || dist[s] > k_hops) continue;
        const std::size_t ring = static_cast<std::size_t>(dist[s]) / 2;
        for (const auto& edge : graph.student_edges[s]) {
            for (std::size_t k = 0; k < n_concepts; ++k) {
                if (!qmatrix.tests(edge.node, k)) continue;
                num[ring * n_concepts + k] += static_cast<double>(edge.sign);
                den[ring * n_concepts + k] += 1.0;
            }
        }
    }
    std::vector<double> state(n_concepts, 0.5);
    for (std::size_t k = 0; k < n_concepts; ++k) {
        double mixed = 0.0;
        double weight = 0.0;
        for (std::size_t ring = 0; ring < n_rings; ++ring) {
            if (den[ring * n_concepts + k] <= 0.0) continue;
            const double w = std::pow(hop_decay, 2.0 * static_cast<double>(ring));
            mixed += w * num[ring * n_concepts + k] / den[ring * n_concepts + k];
            weight += w;
        }
        if (weight > 0.0) state[k] = sigmoid(mixed / weight);
    }
    return state;
}

}  // namespace

std::vector<double> aggregate_student(const InteractionGraph& graph, const QMatrix& qmatrix,
                                      std::size_t student, int k_hops, double hop_decay) {
    if (student >= graph.n_students) throw ValidationError("student index out of range");
    if (k_hops < 1) throw ConfigError("k_hops must be >= 1");
    return aggregate_impl(graph, qmatrix, student, k_hops, hop_decay);
}

std::span<const double> IcdmModel::state_of(std::size_t student) const {
    const std::size_t k = n_concepts();
    return std::span<const double>(student_states.data() + student * k, k);
}

namespace {

void icdm_fill_input(const IcdmModel& model, std::span<const double> state, std::size_t e,
                     const QMatrix& qmatrix, NetBuffers& buf) {
    const std::size_t n_concepts = model.n_concepts();
    const double disc = kDiscriminationScale * sigmoid(model.disc_raw[e]);
    for (std::size_t k = 0; k < n_concepts; ++k) {
        buf.x[k] = qmatrix.tests(e, k)
                       ? disc * (state[k] - sigmoid(model.beta_raw[e * n_concepts + k]))
                       : 0.0;
    }
}

}  // namespace

IcdmModel train_inductive(const EncodedLog& log, const QMatrix& qmatrix,
                          const IcdmConfig& config) {
    config.check();
    if (log.entries.empty()) throw ValidationError("training log is empty");

    IcdmModel model;
    model.config = config;
    model.graph = build_graph(log, qmatrix);

    const std::size_t n_concepts = qmatrix.n_concepts();
    model.student_states.resize(log.n_students * n_concepts);
    for (std::size_t s = 0; s < log.n_students; ++s) {
        const auto state = aggregate_impl(model.graph, qmatrix, s, config.k_hops, config.hop_decay);
        std::copy(state.begin(), state.end(), model.student_states.begin() + s * n_concepts);
    }

    Rng rng(Rng::derive(config.seed, 0x1c));
    auto fill = [&](std::vector<double>& v, std::size_t n, double lo) {
        v.resize(n);
        for (double& x : v) x = rng.uniform(lo, 0.1);
    };
    fill(model.beta_raw, log.n_exercises * n_concepts, -0.1);
    fill(model.disc_raw, log.n_exercises, -0.1);
    model.net.inputs = n_concepts;
    model.net.hidden = static_cast<std::size_t>(config.hidden_width);
    // positive half-range for the projected weights, as in the other trainer
    fill(model.net.w1, model.net.hidden * n_concepts, 0.0);
    fill(model.net.b1, model.net.hidden, -0.1);
    fill(model.net.w2, model.net.hidden, 0.0);
    model.net.b2 = rng.uniform(-0.1, 0.1);

    NetBuffers buf;
    buf.resize(model.net);
    NetGrads net_grads;
    net_grads.resize(model.net);
    std::vector<double> beta_grads(model.beta_raw.size(), 0.0);
    std::vector<double> disc_grads(model.disc_raw.size(), 0.0);

    Rng epoch_rng(Rng::derive(config.seed, 0xe2));
    std::vector<std::uint32_t> perm(log.entries.size());
    std::iota(perm.begin(), perm.end(), 0u);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        epoch_rng.shuffle(perm);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < perm.size();
             start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t stop =
                std::min(perm.size(), start + static_cast<std::size_t>(config.batch_size));
            std::vector<std::uint32_t> idx(perm.begin() + start, perm.begin() + stop);
            std::sort(idx.begin(), idx.end());

            net_grads.zero();
            std::fill(beta_grads.begin(), beta_grads.end(), 0.0);
            std::fill(disc_grads.begin(), disc_grads.end(), 0.0);
            const double inv_n = 1.0 / static_cast<double>(idx.size());

            for (std::uint32_t i : idx) {
                const auto& entry = log.entries[i];
                const auto state = model.state_of(entry.student);
                icdm_fill_input(model, state, entry.exercise, qmatrix, buf);
                const double z = net_forward(model.net, buf);
                const double p = sigmoid(z);
                const double pc = std::clamp(p, 1e-7, 1.0 - 1e-7);
                epoch_loss += entry.score ? -std::log(pc) : -std::log(1.0 - pc);

                double gz = 0.0;
                if (p > 1e-7 && p < 1.0 - 1e-7) {
                    gz = (p - static_cast<double>(entry.score)) * inv_n;
                }
                net_backward(model.net, buf, gz, net_grads);

                const std::size_t e = entry.exercise;
                const double dsig = sigmoid(model.disc_raw[e]);
                const double disc = kDiscriminationScale * dsig;
                double gdisc_pre = 0.0;
                for (std::size_t k = 0; k < n_concepts; ++k) {
                    if (!qmatrix.tests(e, k)) continue;
                    const double be = sigmoid(model.beta_raw[e * n_concepts + k]);
                    beta_grads[e * n_concepts + k] -= buf.gx[k] * disc * be * (1.0 - be);
                    gdisc_pre += buf.gx[k] * (state[k] - be);
                }
                disc_grads[e] += gdisc_pre * kDiscriminationScale * dsig * (1.0 - dsig);
            }

            if (!std::isfinite(epoch_loss)) {
                throw TrainDivergence("non-finite loss in epoch " + std::to_string(epoch));
            }
            for (std::size_t i = 0; i < model.beta_raw.size(); ++i) {
                model.beta_raw[i] -= config.learning_rate * beta_grads[i];
            }
            for (std::size_t i = 0; i < model.disc_raw.size(); ++i) {
                model.disc_raw[i] -= config.learning_rate * disc_grads[i];
            }
            for (std::size_t i = 0; i < model.net.w1.size(); ++i) {
                model.net.w1[i] -= config.learning_rate * net_grads.w1[i];
            }
            for (std::size_t i = 0; i < model.net.b1.size(); ++i) {
                model.net.b1[i] -= config.learning_rate * net_grads.b1[i];
            }
            for (std::size_t i = 0; i < model.net.w2.size(); ++i) {
                model.net.w2[i] -= config.learning_rate * net_grads.w2[i];
            }
            model.net.b2 -= config.learning_rate * net_grads.b2;
            model.net.project_nonneg();
        }
        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = epoch_loss / static_cast<double>(log.entries.size());
        model.trace.epochs.push_back(stats);
    }
    return model;
}

double predict(const IcdmModel& model, std::span<const double> student_state,
               std::size_t exercise, const QMatrix& qmatrix) {
    if (student_state.size() != model.n_concepts()) {
        throw ValidationError("student state length does not match the model");
    }
    if (exercise >= model.disc_raw.size()) throw ValidationError("exercise index out of range");
    NetBuffers buf;
    buf.resize(model.net);
    icdm_fill_input(model, student_state, exercise, qmatrix, buf);
    return sigmoid(net_forward(model.net, buf));
}

std::vector<double> diagnose_training_student(const IcdmModel& model, const QMatrix& qmatrix,
                                              std::size_t student) {
    return aggregate_student(model.graph, qmatrix, student, model.config.k_hops,
                             model.config.hop_decay);
}

std::vector<double> diagnose_unseen(const IcdmModel& model, const QMatrix& qmatrix,
                                    std::span<const EncodedEntry> own_entries) {
    if (own_entries.empty()) throw ValidationError("unseen student has no responses");
    InteractionGraph extended = model.graph;
    const auto new_index = static_cast<std::uint32_t>(extended.n_students);
    extended.n_students += 1;
    extended.student_edges.emplace_back();
    for (const auto& entry : own_entries) {
        if (entry.exercise >= extended.n_exercises) {
            throw ValidationError("unseen student references an unknown exercise");
        }
        const std::int8_t sign = entry.score ? 1 : -1;
        extended.student_edges[new_index].push_back({entry.exercise, sign});
        extended.exercise_edges[entry.exercise].push_back({new_index, sign});
    }
    return aggregate_student(extended, qmatrix, new_index, model.config.k_hops,
                             model.config.hop_decay);
}

std::string icdm_model_to_json(const IcdmModel& model) {
    nlohmann::ordered_json j{
        {"format_version", 1},
        {"k_hops", model.config.k_hops},
        {"hop_decay", model.config.hop_decay},
        {"n_students", model.graph.n_students},
        {"n_exercises", model.graph.n_exercises},
        {"student_states", model.student_states},
        {"beta_raw", model.beta_raw},
        {"disc_raw", model.disc_raw},
        {"net",
         {{"inputs", model.net.inputs},
          {"hidden", model.net.hidden},
          {"w1", model.net.w1},
          {"b1", model.net.b1},
          {"w2", model.net.w2},
          {"b2", model.net.b2}}},
    };
    return j.dump(2) + "\n";
}

void save_icdm_model(const IcdmModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write '" + path + "'");
    out << icdm_model_to_json(model);
}

void write_graph_summary_csv(const InteractionGraph& graph, std::ostream& out) {
    out << "metric,value\n";
    out << "students," << graph.n_students << "\n";
    out << "exercises," << graph.n_exercises << "\n";
    out << "edges," << graph.edge_count() << "\n";
    std::map<std::size_t, std::size_t> histogram;
    for (const auto& edges : graph.student_edges) ++histogram[edges.size()];
    for (const auto& [degree, count] : histogram) {
        out << "student_degree_" << degree << "," << count << "\n";
    }
}

}  // namespace cogdiag
