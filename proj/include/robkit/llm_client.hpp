#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "robkit/eval.hpp"
#include "robkit/types.hpp"

namespace robkit::llm {

struct ChatMessage {
    std::string role;  // "system" | "user" | "assistant"
    std::string content;
};

// The fixed specialist prompt sent as the system message.
const std::string& system_prompt();

struct PromptBundle {
    std::string target_id;
    int shots = 0;  // 0, 1 or 3
    std::vector<ChatMessage> messages;  // system first, target user turn last
};

// Builds the message list: system prompt, then `shots` exemplar user/assistant
// turn pairs sampled (seeded) from the training split, then the target turn.
// shots outside {0, 1, 3} is a validation error.
PromptBundle build_prompt(const Instance& target, const std::vector<Instance>& train_pool,
                          int shots, std::uint64_t seed);

struct EndpointConfig {
    std::string url;            // e.g. http://host:port/v1
    std::string model;
    std::string api_key;        // resolved from env by the CLI
    double temperature = 0.0;
    int timeout_seconds = 60;
    int max_retries = 3;
    double backoff_base_seconds = 0.5;
    int max_in_flight = 4;
};

// Chat-completion request body for a bundle.
json request_body(const PromptBundle& bundle, const EndpointConfig& endpoint);

struct TransportResponse {
    int status = 0;
    std::string body;
    bool transport_error = false;  // connect/timeout level failure
    std::string error;
};

// Seam between retry logic and the network; tests substitute a fake.
using Transport = std::function<TransportResponse(const json& request)>;
using Sleeper = std::function<void(double seconds)>;

Transport make_http_transport(const EndpointConfig& endpoint);

struct CallOutcome {
    bool ok = false;
    int attempts = 0;
    std::string content;  // assistant message content on success
    TransportResponse last;
};

// Bounded retries with exponential backoff on 429/5xx/transport failures.
// Exhausted retries come back ok=false; the caller records a failed instance
// and the run continues.
CallOutcome call_endpoint(const json& request, const Transport& transport, int max_retries,
                          double backoff_base_seconds, const Sleeper& sleeper = nullptr);

struct LlmVerdict {
    enum class Answer { Yes, No };
    Answer answer = Answer::No;
    std::string evidence;
    std::string raw;
    bool parse_ok = false;
};

// Tolerant extraction: first balanced JSON object in the text, single or
// double quotes accepted. Unparseable output degrades to NO with empty
// evidence (parse_ok = false) so denominators stay fixed.
LlmVerdict parse_verdict(const std::string& raw);

struct RunOptions {
    int shots = 0;
    std::uint64_t seed = 1;
    std::string model_name;  // report label; defaults to endpoint model + shots
    EndpointConfig endpoint;
};

// Evaluates every test instance through the endpoint, writing an audit log
// (llm_log.jsonl: header line then {id, request, response, verdict} records)
// and returning predictions for the shared eval module. Bounded concurrent
// in-flight requests; results are ordered by instance id regardless of
// completion order.
std::vector<eval::Prediction> run_llm_eval(const std::vector<Instance>& test,
                                           const std::vector<Instance>& train_pool,
                                           const RunOptions& options,
                                           const std::filesystem::path& log_path,
                                           const Transport& transport,
                                           const Sleeper& sleeper = nullptr);

// Rebuilds the same predictions from a saved log; evaluation never needs the
// network twice.
std::vector<eval::Prediction> replay_log(const std::filesystem::path& log_path);

}  // namespace robkit::llm
