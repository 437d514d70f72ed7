#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "robkit/error.hpp"
#include "robkit/jsonl.hpp"
#include "robkit/llm_client.hpp"

#include <httplib.h>

#include <atomic>
#include <filesystem>
#include <thread>

using namespace robkit;
using namespace robkit::llm;

namespace {

Instance mk_inst(const std::string& id, Label label, const std::string& answer) {
    Instance inst;
    inst.id = id;
    inst.bias_type = BiasType::Selection;
    inst.question = "Was the allocation sequence random?";
    inst.context = answer + " More text follows here.";
    inst.answer_text = answer;
    inst.answer_start = 0;
    inst.label = label;
    return inst;
}

json ok_response(const std::string& content) {
    return json{{"choices", json::array({json{{"message", json{{"role", "assistant"},
                                                               {"content", content}}}}})}};
}

}  // namespace

TEST_CASE("prompt bundle shapes: 0-shot, 1-shot, few-shot") {
    const auto target = mk_inst("t", Label::Low, "it was randomized");
    std::vector<Instance> train;
    for (int i = 0; i < 5; ++i)
        train.push_back(mk_inst("train" + std::to_string(i), i % 2 ? Label::Low : Label::HighUnclear,
                                "sentence " + std::to_string(i)));

    const auto zero = build_prompt(target, train, 0, 1);
    REQUIRE(zero.messages.size() == 2);
    CHECK(zero.messages[0].role == "system");
    CHECK(zero.messages[0].content == system_prompt());
    CHECK(zero.messages[1].role == "user");
    CHECK(zero.messages[1].content.find(target.question) != std::string::npos);
    CHECK(zero.messages[1].content.find(target.context) != std::string::npos);

    const auto one = build_prompt(target, train, 1, 1);
    REQUIRE(one.messages.size() == 4);
    CHECK(one.messages[1].role == "user");
    CHECK(one.messages[2].role == "assistant");
    CHECK(one.messages[3].role == "user");

    const auto few = build_prompt(target, train, 3, 1);
    CHECK(few.messages.size() == 8);

    // Seed determinism: same seed samples the same shots.
    const auto again = build_prompt(target, train, 3, 1);
    for (std::size_t i = 0; i < few.messages.size(); ++i)
        CHECK(few.messages[i].content == again.messages[i].content);
    const auto other = build_prompt(target, train, 3, 2);
    bool any_diff = false;
    for (std::size_t i = 0; i < few.messages.size(); ++i)
        any_diff |= few.messages[i].content != other.messages[i].content;
    CHECK(any_diff);

    CHECK_THROWS_AS(build_prompt(target, train, 2, 1), Error);
    CHECK_THROWS_AS(build_prompt(target, {}, 1, 1), Error);
}

TEST_CASE("request body follows the chat-completion convention") {
    const auto target = mk_inst("t", Label::Low, "x");
    EndpointConfig endpoint;
    endpoint.model = "test-model";
    endpoint.temperature = 0.0;
    const auto body = request_body(build_prompt(target, {}, 0, 1), endpoint);
    CHECK(body.at("model") == "test-model");
    CHECK(body.at("temperature") == 0.0);
    CHECK(body.at("messages").size() == 2);
    CHECK(body["messages"][0]["role"] == "system");
}

TEST_CASE("verdict parsing: clean, single-quoted, embedded, garbage") {
    const auto clean = parse_verdict(R"({"answer":"YES","evidence":"randomization was stratified"})");
    CHECK(clean.parse_ok);
    CHECK(clean.answer == LlmVerdict::Answer::Yes);
    CHECK(clean.evidence == "randomization was stratified");

    const auto single = parse_verdict("{'answer': 'NO', 'evidence': ''}");
    CHECK(single.parse_ok);
    CHECK(single.answer == LlmVerdict::Answer::No);
    CHECK(single.evidence.empty());

    const auto embedded = parse_verdict(
        "Sure! Based on the context, here is my assessment:\n"
        "{'answer': 'YES', 'evidence': 'the patient's allocation was concealed'}\nHope it helps.");
    CHECK(embedded.parse_ok);
    CHECK(embedded.answer == LlmVerdict::Answer::Yes);

    const auto lowercase = parse_verdict(R"({"answer":"yes","evidence":"x"})");
    CHECK(lowercase.parse_ok);
    CHECK(lowercase.answer == LlmVerdict::Answer::Yes);

    // Unparseable output counts as NO with empty evidence.
    for (const char* garbage :
         {"I cannot assess this.", "", "{not json at all", R"({"verdict":"maybe"})"}) {
        const auto v = parse_verdict(garbage);
        CHECK_FALSE(v.parse_ok);
        CHECK(v.answer == LlmVerdict::Answer::No);
        CHECK(v.evidence.empty());
    }
}

TEST_CASE("call_endpoint retries 429 then succeeds; exhausted retries fail") {
    int hits = 0;
    std::vector<double> slept;
    const Sleeper sleeper = [&](double s) { slept.push_back(s); };

    const Transport flaky = [&](const json&) {
        ++hits;
        if (hits == 1) return TransportResponse{429, "rate limited", false, ""};
        return TransportResponse{200, ok_response("{'answer':'YES','evidence':'e'}").dump(), false, ""};
    };
    const auto outcome = call_endpoint(json::object(), flaky, 3, 0.5, sleeper);
    CHECK(outcome.ok);
    CHECK(outcome.attempts == 2);
    CHECK(outcome.content == "{'answer':'YES','evidence':'e'}");
    REQUIRE(slept.size() == 1);
    CHECK(slept[0] == doctest::Approx(0.5));

    // Exponential backoff across repeated transient failures.
    hits = 0;
    slept.clear();
    const Transport down = [&](const json&) {
        ++hits;
        return TransportResponse{0, "", true, "connect refused"};
    };
    const auto failed = call_endpoint(json::object(), down, 3, 0.5, sleeper);
    CHECK_FALSE(failed.ok);
    CHECK(failed.attempts == 4);  // initial try + 3 retries
    REQUIRE(slept.size() == 3);
    CHECK(slept[1] == doctest::Approx(1.0));
    CHECK(slept[2] == doctest::Approx(2.0));

    // Hard 4xx other than 429 does not retry.
    hits = 0;
    const Transport denied = [&](const json&) {
        ++hits;
        return TransportResponse{401, "unauthorized", false, ""};
    };
    const auto rejected = call_endpoint(json::object(), denied, 3, 0.5, sleeper);
    CHECK_FALSE(rejected.ok);
    CHECK(hits == 1);
}

TEST_CASE("run_llm_eval produces ordered predictions and a replayable log") {
    std::vector<Instance> test;
    test.push_back(mk_inst("b-instance", Label::Low, "sentence one"));
    test.push_back(mk_inst("a-instance", Label::HighUnclear, "sentence two"));
    test.push_back(mk_inst("c-instance", Label::Low, "sentence three"));
    std::vector<Instance> train{mk_inst("train0", Label::Low, "train sentence")};

    std::atomic<int> calls{0};
    const Transport scripted = [&](const json& request) {
        ++calls;
        const std::string user = request["messages"].back()["content"].get<std::string>();
        if (user.find("sentence one") != std::string::npos)
            return TransportResponse{200, ok_response("{'answer':'YES','evidence':'sentence one'}").dump(),
                                     false, ""};
        if (user.find("sentence two") != std::string::npos)
            return TransportResponse{200, ok_response("{'answer':'NO','evidence':''}").dump(), false, ""};
        return TransportResponse{0, "", true, "timed out"};  // c-instance always fails
    };

    RunOptions options;
    options.shots = 1;
    options.seed = 3;
    options.endpoint.model = "fake";
    options.endpoint.max_retries = 1;
    options.endpoint.backoff_base_seconds = 0.0;
    options.endpoint.max_in_flight = 2;

    const auto dir = std::filesystem::temp_directory_path() / "robkit_llm_test";
    std::filesystem::create_directories(dir);
    const auto log_path = dir / "llm_log.jsonl";

    const auto preds = run_llm_eval(test, train, options, log_path, scripted, [](double) {});
    REQUIRE(preds.size() == 3);
    // Sorted by instance id regardless of dispatch order.
    CHECK(preds[0].id == "a-instance");
    CHECK(preds[1].id == "b-instance");
    CHECK(preds[2].id == "c-instance");
    CHECK(preds[1].label == Label::Low);
    CHECK(preds[1].answer_text == "sentence one");
    CHECK(preds[0].label == Label::HighUnclear);
    // Failed instance recorded as NO/empty, run continued.
    CHECK(preds[2].label == Label::HighUnclear);
    CHECK(preds[2].answer_text.empty());
    CHECK(calls.load() == 4);  // 2 ok + 2 attempts for the failing one

    // Log header carries the decoding parameters; replay reproduces the
    // exact metric inputs without any transport.
    const auto rows = jsonl::read_file(log_path);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].at("kind") == "llm-log");
    CHECK(rows[0].at("temperature") == 0.0);
    CHECK(rows[1].at("id") == "a-instance");
    CHECK(rows[3].at("failed") == true);

    const auto replayed = replay_log(log_path);
    REQUIRE(replayed.size() == preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
        CHECK(replayed[i].id == preds[i].id);
        CHECK(replayed[i].score == preds[i].score);
        CHECK(replayed[i].answer_text == preds[i].answer_text);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("system prompt is the fixed specialist block") {
    const auto& p = system_prompt();
    CHECK(p.rfind("You are a specialist performing risk of bias assessments", 0) == 0);
    CHECK(p.find("'answer': '<YES|NO>'") != std::string::npos);
    CHECK(p.find("'evidence': ''") != std::string::npos);
}

TEST_CASE("http transport round trip against a local server (429 then 200)") {
    httplib::Server server;
    std::atomic<int> hits{0};
    server.Post("/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        if (++hits == 1) {
            res.status = 429;
            res.set_content("slow down", "text/plain");
            return;
        }
        const json body = json::parse(req.body);
        CHECK(body.at("messages")[0]["role"] == "system");
        CHECK(body.at("temperature") == 0.0);
        res.set_content(ok_response("{'answer':'YES','evidence':'via socket'}").dump(),
                        "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    if (port <= 0) {
        MESSAGE("cannot bind a loopback port in this environment; transport covered by fakes");
        return;
    }
    std::thread listener([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    EndpointConfig endpoint;
    endpoint.url = "http://127.0.0.1:" + std::to_string(port);
    endpoint.model = "socket-model";
    endpoint.api_key = "test-key";
    endpoint.max_retries = 2;
    endpoint.backoff_base_seconds = 0.01;

    const auto target = mk_inst("sock", Label::Low, "socket sentence");
    const auto request = request_body(build_prompt(target, {}, 0, 1), endpoint);
    const auto outcome = call_endpoint(request, make_http_transport(endpoint),
                                       endpoint.max_retries, endpoint.backoff_base_seconds,
                                       [](double) {});
    CHECK(outcome.ok);
    CHECK(outcome.attempts == 2);
    const auto verdict = parse_verdict(outcome.content);
    CHECK(verdict.parse_ok);
    CHECK(verdict.answer == LlmVerdict::Answer::Yes);
    CHECK(verdict.evidence == "via socket");

    server.stop();
    listener.join();
}
