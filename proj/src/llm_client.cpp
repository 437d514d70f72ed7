#include "robkit/llm_client.hpp"

#include "robkit/error.hpp"
#include "robkit/jsonl.hpp"
#include "robkit/rng.hpp"

#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <numeric>
#include <thread>

namespace robkit::llm {

const std::string& system_prompt() {
    static const std::string kPrompt =
        "You are a specialist performing risk of bias assessments in biomedical articles.\n"
        "Your input is a question and a context. Your task is to return a JSON document containing \n"
        "the answer to the question and an excerpt from the context containing the evidence\n"
        "that justifies the answer. The possible answers are YES and NO. If there is evidence, \n"
        "the output should be in the following \n"
        "    format: \n"
        "    {\n"
        "      'answer': '<YES|NO>', \n"
        "      'evidence': '<evidence>'\n"
        "    } \n"
        "    If there is no evidence, your answer should be in the following format:\n"
        "    {\n"
        "      'answer': 'NO', \n"
        "      'evidence': ''\n"
        "    }.";
    return kPrompt;
}

namespace {

std::string user_turn(const Instance& inst) { return inst.question + "\n" + inst.context; }

std::string assistant_turn(const Instance& inst) {
    const char* answer = inst.label == Label::Low ? "YES" : "NO";
    return std::string("{'answer': '") + answer + "', 'evidence': '" + inst.answer_text + "'}";
}

}  // namespace

PromptBundle build_prompt(const Instance& target, const std::vector<Instance>& train_pool,
                          int shots, std::uint64_t seed) {
    if (shots != 0 && shots != 1 && shots != 3)
        throw validation_error("build_prompt: shot count must be 0, 1 or 3");
    if (static_cast<std::size_t>(shots) > train_pool.size())
        throw validation_error("build_prompt: training pool smaller than shot count");

    PromptBundle bundle;
    bundle.target_id = target.id;
    bundle.shots = shots;
    bundle.messages.push_back({"system", system_prompt()});

    if (shots > 0) {
        // Seeded sample without replacement from the training split.
        Rng rng(seed);
        std::vector<std::size_t> order(train_pool.size());
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order);
        for (int s = 0; s < shots; ++s) {
            const Instance& shot = train_pool[order[static_cast<std::size_t>(s)]];
            bundle.messages.push_back({"user", user_turn(shot)});
            bundle.messages.push_back({"assistant", assistant_turn(shot)});
        }
    }
    bundle.messages.push_back({"user", user_turn(target)});
    return bundle;
}

json request_body(const PromptBundle& bundle, const EndpointConfig& endpoint) {
    json messages = json::array();
    for (const auto& m : bundle.messages)
        messages.push_back({{"role", m.role}, {"content", m.content}});
    return json{{"model", endpoint.model},
                {"temperature", endpoint.temperature},
                {"messages", messages}};
}

Transport make_http_transport(const EndpointConfig& endpoint) {
    return [endpoint](const json& request) -> TransportResponse {
        TransportResponse out;
        httplib::Client client(endpoint.url);
        client.set_connection_timeout(endpoint.timeout_seconds);
        client.set_read_timeout(endpoint.timeout_seconds);
        httplib::Headers headers;
        if (!endpoint.api_key.empty())
            headers.emplace("Authorization", "Bearer " + endpoint.api_key);
        auto res = client.Post("/chat/completions", headers, request.dump(), "application/json");
        if (!res) {
            out.transport_error = true;
            out.error = httplib::to_string(res.error());
            return out;
        }
        out.status = res->status;
        out.body = res->body;
        return out;
    };
}

CallOutcome call_endpoint(const json& request, const Transport& transport, int max_retries,
                          double backoff_base_seconds, const Sleeper& sleeper) {
    const Sleeper sleep_fn = sleeper ? sleeper : [](double seconds) {
        std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
    };

    CallOutcome outcome;
    double delay = backoff_base_seconds;
    for (int attempt = 0; attempt <= max_retries; ++attempt) {
        ++outcome.attempts;
        outcome.last = transport(request);
        const bool retryable =
            outcome.last.transport_error || outcome.last.status == 429 || outcome.last.status >= 500;
        if (!retryable && outcome.last.status >= 200 && outcome.last.status < 300) {
            outcome.ok = true;
            json body = json::parse(outcome.last.body, nullptr, false);
            if (!body.is_discarded() && body.contains("choices") && !body["choices"].empty() &&
                body["choices"][0].contains("message")) {
                outcome.content = body["choices"][0]["message"].value("content", "");
            } else {
                // Unknown response shape; hand the raw body to the parser.
                outcome.content = outcome.last.body;
            }
            return outcome;
        }
        if (!retryable) break;  // 4xx other than 429: retrying will not help
        if (attempt < max_retries) {
            sleep_fn(delay);
            delay *= 2.0;
        }
    }
    return outcome;
}

namespace {

// First balanced {...} block, honoring single- and double-quoted strings.
// A single quote closes its string only when structure follows, so literal
// apostrophes inside evidence text do not derail the scan.
std::string first_json_object(const std::string& text) {
    const std::size_t begin = text.find('{');
    if (begin == std::string::npos) return {};
    int depth = 0;
    char quote = 0;
    for (std::size_t i = begin; i < text.size(); ++i) {
        const char c = text[i];
        if (quote) {
            if (c == '\\') {
                ++i;
            } else if (c == quote) {
                if (quote == '\'') {
                    std::size_t k = i + 1;
                    while (k < text.size() &&
                           (text[k] == ' ' || text[k] == '\t' || text[k] == '\n' || text[k] == '\r'))
                        ++k;
                    if (k < text.size() && text[k] != ',' && text[k] != '}' && text[k] != ']' &&
                        text[k] != ':')
                        continue;
                }
                quote = 0;
            }
        } else if (c == '"' || c == '\'') {
            quote = c;
        } else if (c == '{') {
            ++depth;
        } else if (c == '}') {
            if (--depth == 0) return text.substr(begin, i - begin + 1);
        }
    }
    return {};
}

std::string swap_single_quotes(const std::string& s) {
    // Promote single-quoted strings to double-quoted ones, escaping any inner
    // double quotes. Apostrophes inside double-quoted strings are untouched.
    std::string out;
    out.reserve(s.size());
    char quote = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const char c = s[i];
        if (quote == '"') {
            out.push_back(c);
            if (c == '\\') {
                if (i + 1 < s.size()) out.push_back(s[++i]);
            } else if (c == '"') {
                quote = 0;
            }
        } else if (quote == '\'') {
            if (c == '\\' && i + 1 < s.size()) {
                out.push_back(c);
                out.push_back(s[++i]);
            } else if (c == '\'') {
                // Close only when followed by structure; a bare apostrophe
                // inside the string ("patient's") stays literal.
                std::size_t k = i + 1;
                while (k < s.size() && (s[k] == ' ' || s[k] == '\t' || s[k] == '\n' || s[k] == '\r'))
                    ++k;
                if (k >= s.size() || s[k] == ',' || s[k] == '}' || s[k] == ']' || s[k] == ':') {
                    out.push_back('"');
                    quote = 0;
                } else {
                    out.push_back(c);
                }
            } else if (c == '"') {
                out += "\\\"";
            } else {
                out.push_back(c);
            }
        } else if (c == '\'') {
            out.push_back('"');
            quote = '\'';
        } else {
            out.push_back(c);
            if (c == '"') quote = '"';
        }
    }
    return out;
}

std::string upper(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return s;
}

}  // namespace

LlmVerdict parse_verdict(const std::string& raw) {
    LlmVerdict verdict;
    verdict.raw = raw;

    const std::string candidate = first_json_object(raw);
    if (!candidate.empty()) {
        json parsed = json::parse(candidate, nullptr, false);
        if (parsed.is_discarded())
            parsed = json::parse(swap_single_quotes(candidate), nullptr, false);
        if (!parsed.is_discarded() && parsed.is_object() && parsed.contains("answer") &&
            parsed["answer"].is_string()) {
            const std::string answer = upper(parsed["answer"].get<std::string>());
            if (answer == "YES" || answer == "NO") {
                verdict.parse_ok = true;
                verdict.answer = answer == "YES" ? LlmVerdict::Answer::Yes : LlmVerdict::Answer::No;
                if (parsed.contains("evidence") && parsed["evidence"].is_string())
                    verdict.evidence = parsed["evidence"].get<std::string>();
            }
        }
    }
    // Fallback contract: unparseable output counts as NO with empty evidence.
    return verdict;
}

std::vector<eval::Prediction> run_llm_eval(const std::vector<Instance>& test,
                                           const std::vector<Instance>& train_pool,
                                           const RunOptions& options,
                                           const std::filesystem::path& log_path,
                                           const Transport& transport, const Sleeper& sleeper) {
    const std::string model_name =
        !options.model_name.empty()
            ? options.model_name
            : options.endpoint.model + "-" + std::to_string(options.shots) + "shot";

    struct Slot {
        json request;
        CallOutcome outcome;
    };
    std::vector<Slot> slots(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) {
        slots[i].request =
            request_body(build_prompt(test[i], train_pool, options.shots, options.seed), options.endpoint);
    }

    // Bounded in-flight requests: a small worker pool pulling from a shared
    // cursor. Result order is fixed by the slot array, not completion order.
    {
        std::atomic<std::size_t> cursor{0};
        const int workers = std::max(1, options.endpoint.max_in_flight);
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (;;) {
                    const std::size_t i = cursor.fetch_add(1);
                    if (i >= slots.size()) return;
                    slots[i].outcome =
                        call_endpoint(slots[i].request, transport, options.endpoint.max_retries,
                                      options.endpoint.backoff_base_seconds, sleeper);
                }
            });
        }
        for (auto& t : pool) t.join();
    }

    std::vector<json> log_rows;
    log_rows.push_back(json{{"kind", "llm-log"},
                            {"model", options.endpoint.model},
                            {"model_name", model_name},
                            {"url", options.endpoint.url},
                            {"temperature", options.endpoint.temperature},
                            {"shots", options.shots},
                            {"seed", options.seed}});

    std::vector<std::size_t> order(test.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return test[a].id < test[b].id; });

    std::vector<eval::Prediction> predictions;
    predictions.reserve(test.size());
    for (std::size_t i : order) {
        const auto& slot = slots[i];
        LlmVerdict verdict;
        bool failed = !slot.outcome.ok;
        if (!failed) verdict = parse_verdict(slot.outcome.content);

        json row{{"id", test[i].id},
                 {"request", slot.request},
                 {"attempts", slot.outcome.attempts},
                 {"failed", failed},
                 {"response", failed ? json(nullptr) : json(slot.outcome.content)},
                 {"verdict",
                  json{{"answer", verdict.answer == LlmVerdict::Answer::Yes ? "YES" : "NO"},
                       {"evidence", verdict.evidence},
                       {"parse_ok", verdict.parse_ok}}}};
        if (failed && slot.outcome.last.transport_error) row["error"] = slot.outcome.last.error;
        if (failed && !slot.outcome.last.transport_error) row["status"] = slot.outcome.last.status;
        log_rows.push_back(std::move(row));

        eval::Prediction pred;
        pred.id = test[i].id;
        pred.model = model_name;
        pred.answer_text = verdict.evidence;
        pred.score = verdict.answer == LlmVerdict::Answer::Yes ? 1.0 : 0.0;
        pred.label = verdict.answer == LlmVerdict::Answer::Yes ? Label::Low : Label::HighUnclear;
        predictions.push_back(std::move(pred));
    }

    jsonl::write_file(log_path, log_rows);
    return predictions;
}

std::vector<eval::Prediction> replay_log(const std::filesystem::path& log_path) {
    std::vector<eval::Prediction> predictions;
    std::string model_name = "llm";
    jsonl::for_each(log_path, [&](const json& j, std::size_t) {
        if (j.value("kind", "") == "llm-log") {
            model_name = j.value("model_name", model_name);
            return;
        }
        eval::Prediction pred;
        pred.id = j.at("id").get<std::string>();
        pred.model = model_name;
        const auto& verdict = j.at("verdict");
        pred.answer_text = verdict.value("evidence", "");
        const bool yes = verdict.value("answer", "NO") == "YES";
        pred.score = yes ? 1.0 : 0.0;
        pred.label = yes ? Label::Low : Label::HighUnclear;
        predictions.push_back(std::move(pred));
    });
    return predictions;
}

}  // namespace robkit::llm
