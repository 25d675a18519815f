#include "cogdiag/ncdm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "cogdiag/errors.hpp"
#include "cogdiag/rng.hpp"

namespace cogdiag {

namespace {

constexpr double kProbClamp = 1e-7;

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

double bce(double p, int r) {
    const double pc = clamp_prob(p);
    return r ? -std::log(pc) : -std::log(1.0 - pc);
}

// Fills buf.x with the discrimination-scaled masked difference for (s, e).
void fill_input(const CdmParams& params, std::size_t s, std::size_t e, const QMatrix& qmatrix,
                NetBuffers& buf) {
    const double disc = kDiscriminationScale * sigmoid(params.disc_raw[e]);
    for (std::size_t k = 0; k < params.n_concepts; ++k) {
        if (!qmatrix.tests(e, k)) {
            buf.x[k] = 0.0;
            continue;
        }
        buf.x[k] = disc * (sigmoid(params.theta(s, k)) - sigmoid(params.beta(e, k)));
    }
}

void check_dims(const CdmParams& params, const QMatrix& qmatrix) {
    if (params.n_concepts != qmatrix.n_concepts() || params.n_exercises != qmatrix.n_exercises()) {
        throw ValidationError("parameter dimensions do not match the q-matrix");
    }
    if (params.net.inputs != params.n_concepts) {
        throw ValidationError("network input width does not match concept count");
    }
}

}  // namespace

void TrainConfig::check() const {
    if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size <= 0) throw ConfigError("batch_size must be positive");
    if (hidden_width <= 0) throw ConfigError("hidden_width must be positive");
    if (early_stop_patience < 0) throw ConfigError("early_stop_patience must be >= 0");
    if (validation_fraction < 0.0 || validation_fraction >= 1.0) {
        throw ConfigError("validation_fraction must lie in [0, 1)");
    }
}

CdmParams init_params(std::size_t n_students, std::size_t n_exercises, std::size_t n_concepts,
                      int hidden_width, std::uint64_t seed) {
    CdmParams params;
    params.n_students = n_students;
    params.n_exercises = n_exercises;
    params.n_concepts = n_concepts;
    params.net.inputs = n_concepts;
    params.net.hidden = static_cast<std::size_t>(hidden_width);

    Rng rng(Rng::derive(seed, 0x1d));
    auto fill = [&](std::vector<double>& v, std::size_t n, double lo) {
        v.resize(n);
        for (double& x : v) x = rng.uniform(lo, 0.1);
    };
    fill(params.theta_raw, n_students * n_concepts, -0.1);
    fill(params.beta_raw, n_exercises * n_concepts, -0.1);
    fill(params.disc_raw, n_exercises, -0.1);
    // The projected weight matrices start in the positive half-range: a
    // signed draw would lose half its mass to the first non-negativity
    // projection and can leave plain SGD without a live signal path.
    fill(params.net.w1, params.net.hidden * n_concepts, 0.0);
    fill(params.net.b1, params.net.hidden, -0.1);
    fill(params.net.w2, params.net.hidden, 0.0);
    params.net.b2 = rng.uniform(-0.1, 0.1);
    return params;
}

double predict(const CdmParams& params, std::size_t student, std::size_t exercise,
               const QMatrix& qmatrix) {
    check_dims(params, qmatrix);
    if (student >= params.n_students || exercise >= params.n_exercises) {
        throw ValidationError("student or exercise index out of range");
    }
    NetBuffers buf;
    buf.resize(params.net);
    fill_input(params, student, exercise, qmatrix, buf);
    return sigmoid(net_forward(params.net, buf));
}

double batch_loss(const CdmParams& params, std::span<const EncodedEntry> batch,
                  const QMatrix& qmatrix) {
    if (batch.empty()) throw ValidationError("empty batch");
    check_dims(params, qmatrix);
    NetBuffers buf;
    buf.resize(params.net);
    double total = 0.0;
    for (const auto& entry : batch) {
        fill_input(params, entry.student, entry.exercise, qmatrix, buf);
        const double p = sigmoid(net_forward(params.net, buf));
        total += bce(p, entry.score);
    }
    return total / static_cast<double>(batch.size());
}

void CdmGrads::resize(const CdmParams& params) {
    theta.assign(params.theta_raw.size(), 0.0);
    beta.assign(params.beta_raw.size(), 0.0);
    disc.assign(params.disc_raw.size(), 0.0);
    net.resize(params.net);
}

void CdmGrads::zero() {
    std::fill(theta.begin(), theta.end(), 0.0);
    std::fill(beta.begin(), beta.end(), 0.0);
    std::fill(disc.begin(), disc.end(), 0.0);
    net.zero();
}

double accumulate_gradients(const CdmParams& params, std::span<const EncodedEntry> batch,
                            const QMatrix& qmatrix, CdmGrads& grads) {
    if (batch.empty()) throw ValidationError("empty batch");
    check_dims(params, qmatrix);
    NetBuffers buf;
    buf.resize(params.net);
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;

    for (const auto& entry : batch) {
        const std::size_t s = entry.student;
        const std::size_t e = entry.exercise;
        fill_input(params, s, e, qmatrix, buf);
        const double z = net_forward(params.net, buf);
        const double p = sigmoid(z);
        total += bce(p, entry.score);

        // dL/dz through the clamp: zero once the probability is pinned.
        double gz = 0.0;
        if (p > kProbClamp && p < 1.0 - kProbClamp) {
            gz = (p - static_cast<double>(entry.score)) * inv_n;
        }
        net_backward(params.net, buf, gz, grads.net);

        const double draw = params.disc_raw[e];
        const double dsig = sigmoid(draw);
        const double disc = kDiscriminationScale * dsig;
        double gdisc_pre = 0.0;
        for (std::size_t k = 0; k < params.n_concepts; ++k) {
            if (!qmatrix.tests(e, k)) continue;
            const double gxk = buf.gx[k];
            const double ts = sigmoid(params.theta(s, k));
            const double be = sigmoid(params.beta(e, k));
            grads.theta[s * params.n_concepts + k] += gxk * disc * ts * (1.0 - ts);
            grads.beta[e * params.n_concepts + k] -= gxk * disc * be * (1.0 - be);
            gdisc_pre += gxk * (ts - be);
        }
        grads.disc[e] += gdisc_pre * kDiscriminationScale * dsig * (1.0 - dsig);
    }
    return total * inv_n;
}

namespace {

void apply_update(CdmParams& params, const CdmGrads& grads, double lr) {
    for (std::size_t i = 0; i < params.theta_raw.size(); ++i) params.theta_raw[i] -= lr * grads.theta[i];
    for (std::size_t i = 0; i < params.beta_raw.size(); ++i) params.beta_raw[i] -= lr * grads.beta[i];
    for (std::size_t i = 0; i < params.disc_raw.size(); ++i) params.disc_raw[i] -= lr * grads.disc[i];
    for (std::size_t i = 0; i < params.net.w1.size(); ++i) params.net.w1[i] -= lr * grads.net.w1[i];
    for (std::size_t i = 0; i < params.net.b1.size(); ++i) params.net.b1[i] -= lr * grads.net.b1[i];
    for (std::size_t i = 0; i < params.net.w2.size(); ++i) params.net.w2[i] -= lr * grads.net.w2[i];
    params.net.b2 -= lr * grads.net.b2;
    params.net.project_nonneg();
}

double eval_accuracy(const CdmParams& params, std::span<const EncodedEntry> entries,
                     const QMatrix& qmatrix) {
    NetBuffers buf;
    buf.resize(params.net);
    std::size_t hits = 0;
    for (const auto& entry : entries) {
        fill_input(params, entry.student, entry.exercise, qmatrix, buf);
        const double p = sigmoid(net_forward(params.net, buf));
        const int predicted = p >= 0.5 ? 1 : 0;
        hits += predicted == entry.score;
    }
    return static_cast<double>(hits) / static_cast<double>(entries.size());
}

}  // namespace

TrainResult train(const EncodedLog& log, const QMatrix& qmatrix, const TrainConfig& config) {
    config.check();
    if (log.entries.empty()) throw ValidationError("training log is empty");
    {
        std::vector<bool> seen(log.n_students, false);
        for (const auto& e : log.entries) seen[e.student] = true;
        for (std::size_t s = 0; s < seen.size(); ++s) {
            if (!seen[s]) {
                throw ValidationError("student index " + std::to_string(s) + " has no responses");
            }
        }
    }

    TrainResult result;
    result.params = init_params(log.n_students, log.n_exercises, qmatrix.n_concepts(),
                                config.hidden_width, config.seed);
    CdmParams& params = result.params;

    // Deterministic split: shuffle entry indices once, take the tail as
    // validation.
    std::vector<std::uint32_t> order(log.entries.size());
    std::iota(order.begin(), order.end(), 0u);
    Rng split_rng(Rng::derive(config.seed, 0x51));
    split_rng.shuffle(order);
    const std::size_t n_val =
        static_cast<std::size_t>(config.validation_fraction * static_cast<double>(order.size()));
    std::vector<EncodedEntry> train_set, val_set;
    train_set.reserve(order.size() - n_val);
    val_set.reserve(n_val);
    for (std::size_t i = 0; i < order.size(); ++i) {
        (i < order.size() - n_val ? train_set : val_set).push_back(log.entries[order[i]]);
    }
    if (train_set.empty()) throw ValidationError("validation split leaves no training entries");

    CdmGrads grads;
    grads.resize(params);
    Rng epoch_rng(Rng::derive(config.seed, 0xe1));
    std::vector<std::uint32_t> perm(train_set.size());
    std::iota(perm.begin(), perm.end(), 0u);
    std::vector<EncodedEntry> batch;
    batch.reserve(static_cast<std::size_t>(config.batch_size));

    double best_val = std::numeric_limits<double>::infinity();
    int stale = 0;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        epoch_rng.shuffle(perm);
        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < perm.size(); start += config.batch_size) {
            const std::size_t stop = std::min(perm.size(), start + config.batch_size);
            batch.clear();
            // Fixed reduction order inside the batch keeps runs bit-identical.
            std::vector<std::uint32_t> idx(perm.begin() + start, perm.begin() + stop);
            std::sort(idx.begin(), idx.end());
            for (std::uint32_t i : idx) batch.push_back(train_set[i]);

            grads.zero();
            const double loss = accumulate_gradients(params, batch, qmatrix, grads);
            if (!std::isfinite(loss)) {
                throw TrainDivergence("non-finite loss in epoch " + std::to_string(epoch));
            }
            epoch_loss += loss * static_cast<double>(batch.size());
            seen += batch.size();
            apply_update(params, grads, config.learning_rate);
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = epoch_loss / static_cast<double>(seen);
        if (!val_set.empty()) {
            stats.val_loss = batch_loss(params, val_set, qmatrix);
            stats.val_acc = eval_accuracy(params, val_set, qmatrix);
            if (!std::isfinite(*stats.val_loss)) {
                throw TrainDivergence("non-finite validation loss in epoch " + std::to_string(epoch));
            }
        }
        result.trace.epochs.push_back(stats);

        if (config.early_stop_patience > 0 && stats.val_loss) {
            if (*stats.val_loss < best_val - 1e-12) {
                best_val = *stats.val_loss;
                stale = 0;
            } else if (++stale >= config.early_stop_patience) {
                break;
            }
        }
    }
    return result;
}

std::vector<KnowledgeState> extract_states(const CdmParams& params,
                                           const StudentRegistry& registry) {
    if (registry.size() != params.n_students) {
        throw ValidationError("registry size does not match trained student count");
    }
    std::vector<KnowledgeState> states;
    states.reserve(params.n_students);
    for (std::size_t s = 0; s < params.n_students; ++s) {
        KnowledgeState state;
        state.student_id = registry.students[s].id;
        state.method = DiagnosisMethod::Ncdm;
        state.values.resize(params.n_concepts);
        for (std::size_t k = 0; k < params.n_concepts; ++k) {
            state.values[k] = sigmoid(params.theta(s, k));
        }
        states.push_back(std::move(state));
    }
    return states;
}

double mastery(const KnowledgeState& state, const ConceptCatalog& catalog) {
    const auto slice = slice_forget(state, catalog);
    return std::accumulate(slice.begin(), slice.end(), 0.0) / static_cast<double>(slice.size());
}

void TrainingTrace::write_csv(std::ostream& out) const {
    out << "epoch,train_loss,val_loss,val_acc\n";
    for (const auto& e : epochs) {
        out << e.epoch << "," << e.train_loss << ",";
        if (e.val_loss) out << *e.val_loss;
        out << ",";
        if (e.val_acc) out << *e.val_acc;
        out << "\n";
    }
}

std::string params_to_json(const CdmParams& params) {
    nlohmann::ordered_json j{
        {"format_version", 1},
        {"n_students", params.n_students},
        {"n_exercises", params.n_exercises},
        {"n_concepts", params.n_concepts},
        {"theta_raw", params.theta_raw},
        {"beta_raw", params.beta_raw},
        {"disc_raw", params.disc_raw},
        {"net",
         {{"inputs", params.net.inputs},
          {"hidden", params.net.hidden},
          {"w1", params.net.w1},
          {"b1", params.net.b1},
          {"w2", params.net.w2},
          {"b2", params.net.b2}}},
    };
    return j.dump(2) + "\n";
}

CdmParams parse_params_json(const std::string& text) {
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("params: ") + e.what());
    }
    if (j.value("format_version", 0) != 1) throw ParseError("params: unsupported format version");
    CdmParams params;
    params.n_students = j.at("n_students").get<std::size_t>();
    params.n_exercises = j.at("n_exercises").get<std::size_t>();
    params.n_concepts = j.at("n_concepts").get<std::size_t>();
    params.theta_raw = j.at("theta_raw").get<std::vector<double>>();
    params.beta_raw = j.at("beta_raw").get<std::vector<double>>();
    params.disc_raw = j.at("disc_raw").get<std::vector<double>>();
    const auto& n = j.at("net");
    params.net.inputs = n.at("inputs").get<std::size_t>();
    params.net.hidden = n.at("hidden").get<std::size_t>();
    params.net.w1 = n.at("w1").get<std::vector<double>>();
    params.net.b1 = n.at("b1").get<std::vector<double>>();
    params.net.w2 = n.at("w2").get<std::vector<double>>();
    params.net.b2 = n.at("b2").get<double>();
    return params;
}

void save_params(const CdmParams& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write '" + path + "'");
    out << params_to_json(params);
}

CdmParams load_params(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_params_json(ss.str());
}

}  // namespace cogdiag
