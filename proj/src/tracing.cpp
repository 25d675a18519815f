#include "cogdiag/tracing.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdlib>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "cogdiag/errors.hpp"
#include "cogdiag/rng.hpp"

namespace cogdiag {

std::string to_string(ProficiencyLabel label) {
    switch (label) {
        case ProficiencyLabel::Good: return "good";
        case ProficiencyLabel::Fair: return "fair";
        case ProficiencyLabel::Bad: return "bad";
        case ProficiencyLabel::Unknown: return "unknown";
    }
    return "unknown";
}

std::optional<ProficiencyLabel> proficiency_label_from_string(std::string_view s) {
    std::string lower(s);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lower == "good") return ProficiencyLabel::Good;
    if (lower == "fair") return ProficiencyLabel::Fair;
    if (lower == "bad") return ProficiencyLabel::Bad;
    if (lower == "unknown") return ProficiencyLabel::Unknown;
    return std::nullopt;
}

double LabelScoreMap::score(ProficiencyLabel label) const {
    switch (label) {
        case ProficiencyLabel::Good: return good;
        case ProficiencyLabel::Fair: return fair;
        case ProficiencyLabel::Bad: return bad;
        case ProficiencyLabel::Unknown: return unknown;
    }
    return unknown;
}

void LabelScoreMap::check() const {
    if (!(good > fair && fair > bad)) {
        throw ConfigError("label score map must satisfy good > fair > bad");
    }
}

LabelScoreMap LabelScoreMap::fair_half() { return {1.0, 0.5, -1.0, 0.0}; }
LabelScoreMap LabelScoreMap::fair_zero() { return {1.0, 0.0, -1.0, 0.0}; }

MockJudge::MockJudge(std::map<std::string, ProficiencyLabel> labels, ProficiencyLabel fallback)
    : labels_(std::move(labels)), fallback_(fallback) {}

std::string MockJudge::complete(const std::string& prompt) {
    (void)prompt;
    (void)fallback_;
    std::ostringstream out;
    out << "prediction: 1\n";
    out << "knowledge state:\n";
    for (const auto& [concept_id, label] : labels_) {
        out << "- " << concept_id << ": " << to_string(label) << "\n";
    }
    return out.str();
}

ScriptJudge::ScriptJudge(std::vector<std::string> responses) : responses_(std::move(responses)) {}

std::string ScriptJudge::complete(const std::string& prompt) {
    (void)prompt;
    if (next_ >= responses_.size()) {
        throw JudgeTransportError("script judge exhausted after " +
                                  std::to_string(responses_.size()) + " responses");
    }
    return responses_[next_++];
}

HttpJudge::HttpJudge(std::string host, int port, std::string path, int timeout_seconds)
    : host_(std::move(host)), port_(port), path_(std::move(path)),
      timeout_seconds_(timeout_seconds) {}

std::string HttpJudge::complete(const std::string& prompt) {
    httplib::Client client(host_, port_);
    client.set_connection_timeout(timeout_seconds_, 0);
    client.set_read_timeout(timeout_seconds_, 0);
    client.set_write_timeout(timeout_seconds_, 0);

    httplib::Headers headers;
    if (const char* token = std::getenv("COGDIAG_JUDGE_TOKEN")) {
        headers.emplace("Authorization", std::string("Bearer ") + token);
    }

    nlohmann::json body{{"prompt", prompt}};
    auto res = client.Post(path_, headers, body.dump(), "application/json");
    if (!res) {
        throw JudgeTransportError("judge endpoint unreachable: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        throw JudgeTransportError("judge endpoint returned status " + std::to_string(res->status));
    }
    try {
        return nlohmann::json::parse(res->body).at("text").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw JudgeTransportError(std::string("judge response is not {\"text\": ...}: ") + e.what());
    }
}

std::map<std::string, ProficiencyLabel> mock_labels_from_log(const EncodedLog& log,
                                                             const QMatrix& qmatrix,
                                                             std::size_t student) {
    const std::size_t n_concepts = qmatrix.n_concepts();
    std::vector<double> correct(n_concepts, 0.0), seen(n_concepts, 0.0);
    for (const auto& entry : log.entries) {
        if (entry.student != student) continue;
        for (std::size_t k = 0; k < n_concepts; ++k) {
            if (!qmatrix.tests(entry.exercise, k)) continue;
            seen[k] += 1.0;
            correct[k] += entry.score;
        }
    }
    std::map<std::string, ProficiencyLabel> labels;
    for (std::size_t k = 0; k < n_concepts; ++k) {
        if (seen[k] == 0.0) {
            labels[qmatrix.concept_ids[k]] = ProficiencyLabel::Unknown;
            continue;
        }
        const double rate = correct[k] / seen[k];
        labels[qmatrix.concept_ids[k]] = rate >= 0.7   ? ProficiencyLabel::Good
                                         : rate >= 0.4 ? ProficiencyLabel::Fair
                                                       : ProficiencyLabel::Bad;
    }
    return labels;
}

namespace {

constexpr const char* kBuiltinTemplate =
    "You are a teacher diagnosing one student's knowledge from their answer record.\n"
    "\n"
    "Answer record:\n"
    "{{history}}\n"
    "New exercise: {{exercise}} (concepts: {{concepts}})\n"
    "\n"
    "Predict whether the student answers the new exercise correctly and state the\n"
    "student's proficiency per concept. Reply exactly in this format:\n"
    "prediction: <0 or 1>\n"
    "knowledge state:\n"
    "- <concept>: <good|fair|bad|unknown>\n";

std::string replace_all(std::string text, const std::string& needle, const std::string& value) {
    std::size_t pos = 0;
    while ((pos = text.find(needle, pos)) != std::string::npos) {
        text.replace(pos, needle.size(), value);
        pos += value.size();
    }
    return text;
}

std::string join_concepts(const QMatrix& qmatrix, std::size_t exercise) {
    std::string out;
    for (std::size_t k : qmatrix.concepts_of(exercise)) {
        if (!out.empty()) out += ", ";
        out += qmatrix.concept_ids[k];
    }
    return out;
}

std::string trim(std::string_view s) {
    const auto is_junk = [](char c) {
        return std::isspace(static_cast<unsigned char>(c)) || c == '-' || c == '*' || c == '\"' ||
               c == '\'';
    };
    std::size_t begin = 0, end = s.size();
    while (begin < end && is_junk(s[begin])) ++begin;
    while (end > begin && is_junk(s[end - 1])) --end;
    return std::string(s.substr(begin, end - begin));
}

std::string lowercase(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

}  // namespace

std::optional<JudgeVerdict> parse_verdict(const std::string& text, const std::string& exercise_id,
                                          const std::vector<std::string>& allowed) {
    JudgeVerdict verdict;
    verdict.exercise_id = exercise_id;

    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto colon = line.find(':');
        if (colon == std::string::npos) continue;
        const std::string key = lowercase(trim(line.substr(0, colon)));
        const std::string value = trim(line.substr(colon + 1));
        if (key == "prediction" || key == "is correct") {
            if (!value.empty() && (value[0] == '0' || value[0] == '1')) {
                verdict.predicted_correct = value[0] - '0';
            }
            continue;
        }
        const auto label = proficiency_label_from_string(value);
        if (!label) continue;
        // Keep only concepts that were actually in play for this trace.
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) continue;
        verdict.labels[key] = *label;
    }
    if (verdict.labels.empty()) return std::nullopt;
    return verdict;
}

TraceResult trace(const EncodedLog& log, std::size_t student, const QMatrix& qmatrix,
                  Judge& judge, const TraceOptions& options) {
    if (options.shots < 0) throw ConfigError("shots must be >= 0");
    if (options.sample_size < 0) throw ConfigError("sample_size must be >= 0");
    const auto own = log.entries_of(static_cast<std::uint32_t>(student));
    if (static_cast<std::size_t>(options.sample_size) > own.size()) {
        throw ConfigError("sample_size exceeds the student's " + std::to_string(own.size()) +
                          " available entries");
    }

    TraceResult result;
    if (options.sample_size == 0) return result;

    // Sampled target questions (without replacement).
    std::vector<std::size_t> order(own.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng sample_rng(Rng::derive(options.seed, 0x75));
    sample_rng.shuffle(order);
    order.resize(static_cast<std::size_t>(options.sample_size));

    struct Task {
        std::size_t index;
        EncodedEntry target;
        std::vector<EncodedEntry> shots;
        std::string prompt;
        std::vector<std::string> allowed;
    };
    std::vector<Task> tasks(order.size());

    const std::string templ =
        options.prompt_template.empty() ? kBuiltinTemplate : options.prompt_template;

    // Allowed label concepts accumulate over the trace in sample order.
    std::vector<std::string> seen_concepts;
    auto note_concepts = [&](std::size_t exercise) {
        for (std::size_t k : qmatrix.concepts_of(exercise)) {
            const auto& id = qmatrix.concept_ids[k];
            if (std::find(seen_concepts.begin(), seen_concepts.end(), id) == seen_concepts.end()) {
                seen_concepts.push_back(id);
            }
        }
    };

    for (std::size_t i = 0; i < order.size(); ++i) {
        Task& task = tasks[i];
        task.index = i;
        task.target = own[order[i]];

        Rng shot_rng(Rng::derive(options.seed, 0x5107 + i));
        std::vector<std::size_t> pool;
        for (std::size_t j = 0; j < own.size(); ++j) {
            if (j != order[i]) pool.push_back(j);
        }
        shot_rng.shuffle(pool);
        pool.resize(std::min<std::size_t>(pool.size(), static_cast<std::size_t>(options.shots)));
        for (std::size_t j : pool) task.shots.push_back(own[j]);

        std::string history;
        for (const auto& shot : task.shots) {
            history += "- exercise " + qmatrix.exercise_ids[shot.exercise] + " (concepts: " +
                       join_concepts(qmatrix, shot.exercise) + "): " +
                       (shot.score ? "correct" : "wrong") + "\n";
            note_concepts(shot.exercise);
        }
        if (history.empty()) history = "(none)\n";
        note_concepts(task.target.exercise);

        task.prompt = replace_all(templ, "{{history}}", history);
        task.prompt = replace_all(task.prompt, "{{exercise}}",
                                  qmatrix.exercise_ids[task.target.exercise]);
        task.prompt =
            replace_all(task.prompt, "{{concepts}}", join_concepts(qmatrix, task.target.exercise));
        task.allowed = seen_concepts;
    }

    // Bounded fan-out; records land at their sample index so assembly stays
    // order-preserving no matter how threads interleave.
    std::vector<TraceRecord> records(tasks.size());
    std::atomic<std::size_t> cursor{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = cursor.fetch_add(1);
            if (i >= tasks.size()) return;
            const Task& task = tasks[i];
            TraceRecord record;
            record.index = task.index;
            record.exercise_id = qmatrix.exercise_ids[task.target.exercise];
            record.prompt = task.prompt;

            std::optional<JudgeVerdict> verdict;
            std::string last_error;
            for (int attempt = 0; attempt < 3 && !verdict; ++attempt) {
                try {
                    record.response = judge.complete(task.prompt);
                    verdict = parse_verdict(record.response, record.exercise_id, task.allowed);
                    if (!verdict) last_error = "unparseable judge output";
                } catch (const JudgeTransportError& e) {
                    last_error = e.what();
                }
            }
            if (!verdict) {
                record.error = last_error;
                if (!record.response.empty()) {
                    // Malformed output: fall back to unknown on the tested concepts.
                    JudgeVerdict fallback;
                    fallback.exercise_id = record.exercise_id;
                    for (std::size_t k : qmatrix.concepts_of(task.target.exercise)) {
                        fallback.labels[qmatrix.concept_ids[k]] = ProficiencyLabel::Unknown;
                    }
                    record.verdict = fallback;
                }
            } else {
                record.verdict = *verdict;
            }
            records[i] = std::move(record);
        }
    };

    const std::size_t n_workers =
        std::max<std::size_t>(1, std::min<std::size_t>(tasks.size(),
                                                       static_cast<std::size_t>(options.max_parallel)));
    std::vector<std::thread> threads;
    threads.reserve(n_workers);
    for (std::size_t t = 0; t < n_workers; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();

    for (auto& record : records) {
        // Transport failures leave no verdict at all (partial result).
        if (!record.verdict.labels.empty()) result.verdicts.push_back(record.verdict);
        result.transcript.push_back(std::move(record));
    }
    return result;
}

void TraceResult::write_transcript_jsonl(std::ostream& out) const {
    for (const auto& record : transcript) {
        nlohmann::ordered_json labels = nlohmann::ordered_json::object();
        for (const auto& [concept_id, label] : record.verdict.labels) {
            labels[concept_id] = to_string(label);
        }
        nlohmann::ordered_json j{{"index", record.index},
                                 {"exercise", record.exercise_id},
                                 {"prompt", record.prompt},
                                 {"response", record.response},
                                 {"prediction", record.verdict.predicted_correct},
                                 {"labels", labels}};
        if (record.error) j["error"] = *record.error;
        out << j.dump() << "\n";
    }
}

ScoredStates score_states(std::span<const JudgeVerdict> verdicts, const LabelScoreMap& map,
                          const ConceptCatalog& catalog, const std::string& student_id) {
    if (verdicts.empty()) throw ValidationError("score_states: no verdicts");
    map.check();

    ScoredStates out;
    std::map<std::string, ProficiencyLabel> last;
    for (const auto& verdict : verdicts) {
        for (const auto& [concept_id, label] : verdict.labels) {
            last[concept_id] = label;
            out.raw_cumulative[concept_id] += map.score(label);
        }
    }
    for (const auto& [concept_id, label] : last) {
        out.raw_last[concept_id] = map.score(label);
    }

    out.state.student_id = student_id;
    out.state.method = DiagnosisMethod::FewShot;
    out.state.values.resize(catalog.size());
    const double span = map.good - map.bad;
    for (std::size_t k = 0; k < catalog.size(); ++k) {
        const auto it = last.find(catalog.at(k).id);
        const double raw = it == last.end() ? map.unknown : map.score(it->second);
        out.state.values[k] = std::clamp((raw - map.bad) / span, 0.0, 1.0);
    }

    const auto forget = catalog.forget_indices();
    if (!forget.empty()) {
        double signed_sum = 0.0, norm_sum = 0.0;
        for (std::size_t k : forget) {
            const auto it = last.find(catalog.at(k).id);
            signed_sum += it == last.end() ? map.unknown : map.score(it->second);
            norm_sum += out.state.values[k];
        }
        out.ms_signed = 100.0 * signed_sum / static_cast<double>(forget.size());
        out.ms_normalized = norm_sum / static_cast<double>(forget.size());
    }
    return out;
}

}  // namespace cogdiag
