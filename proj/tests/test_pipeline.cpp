#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "robkit/jsonl.hpp"
#include "robkit/types.hpp"
#include "robkit/annotate.hpp"
#include "robkit/utf8.hpp"

#include <httplib.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <thread>

namespace fs = std::filesystem;
using robkit::json;

namespace {

const std::string kCli = ROBKIT_CLI_PATH;
const fs::path kToyArticles = fs::path(ROBKIT_DATA_DIR) / "toy" / "articles";
const fs::path kToyReviews = fs::path(ROBKIT_DATA_DIR) / "toy" / "reviews";

struct RunResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr
};

RunResult run(const std::string& args) {
    const std::string cmd = kCli + " " + args + " 2>&1";
    RunResult result;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    char buf[4096];
    while (std::size_t n = fread(buf, 1, sizeof(buf), pipe)) result.output.append(buf, n);
    const int status = pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("pipeline completes on the bundled toy corpus and emits a full report") {
    const fs::path run_dir = fresh_dir("robkit_e2e_pipeline");
    const auto result = run("pipeline --articles " + kToyArticles.string() + " --reviews " +
                            kToyReviews.string() + " --run-dir " + run_dir.string());
    CHECK(result.exit_code == 0);
    INFO(result.output);
    CHECK(result.output.find("pipeline complete") != std::string::npos);

    for (const char* artifact :
         {"articles.jsonl", "records.jsonl", "index.bin", "instances.jsonl", "rejects.jsonl",
          "split.json", "manifest.json", "report/report.csv", "report/roc_points.csv",
          "report/report.md"})
        CHECK(fs::exists(run_dir / artifact));

    // Annotation invariants over the emitted instances.
    const auto instances = robkit::annotate::read_instances_jsonl(run_dir / "instances.jsonl");
    CHECK(!instances.empty());
    for (const auto& inst : instances) {
        const std::size_t len = robkit::utf8::length(inst.answer_text);
        CHECK(robkit::utf8::substr(inst.context, inst.answer_start, inst.answer_start + len) ==
              inst.answer_text);
        CHECK(inst.provenance.similarity > 0.5);
    }

    // Conservation: records_in == instances + rejects.
    const json stats = json::parse(robkit::jsonl::read_text_file(run_dir / "annotation_stats.json"));
    CHECK(stats.at("records_in").get<std::size_t>() ==
          stats.at("instances_out").get<std::size_t>() + stats.at("rejects_out").get<std::size_t>());

    // Confusion counts sum to the block size for every model and block.
    const std::string csv = robkit::jsonl::read_text_file(run_dir / "report" / "report.csv");
    std::map<std::pair<std::string, std::string>, std::map<std::string, double>> table;
    std::istringstream lines(csv);
    std::string line;
    std::getline(lines, line);  // header
    while (std::getline(lines, line)) {
        const auto c1 = line.find(',');
        const auto c2 = line.find(',', c1 + 1);
        const auto c3 = line.find(',', c2 + 1);
        table[{line.substr(0, c1), line.substr(c2 + 1, c3 - c2 - 1)}]
             [line.substr(c1 + 1, c2 - c1 - 1)] = std::stod(line.substr(c3 + 1));
    }
    for (const auto& [key, metrics] : table) {
        if (!metrics.count("n")) continue;
        CHECK(metrics.at("tp") + metrics.at("fp") + metrics.at("fn") + metrics.at("tn") ==
              doctest::Approx(metrics.at("n")));
    }

    // Overall block is pooled, not the mean of the per-type blocks: for the
    // tiny extractive model the per-type macro F1s differ, so the unweighted
    // mean cannot reproduce the pooled overall value.
    double overall = 0.0, type_sum = 0.0;
    int type_count = 0;
    for (const auto& [key, metrics] : table) {
        if (key.second != "tiny-ext" || !metrics.count("macro_f1")) continue;
        if (key.first == "overall")
            overall = metrics.at("macro_f1");
        else {
            type_sum += metrics.at("macro_f1");
            ++type_count;
        }
    }
    REQUIRE(type_count > 1);
    CHECK(std::fabs(overall - type_sum / type_count) > 1e-6);
}

TEST_CASE("rerunning annotate over unchanged inputs is byte-identical") {
    const fs::path run_dir = fresh_dir("robkit_e2e_idem");
    REQUIRE(run("ingest --articles " + kToyArticles.string() + " --out " +
                (run_dir / "articles.jsonl").string())
                .exit_code == 0);
    REQUIRE(run("parse-reviews --reviews " + kToyReviews.string() + " --out " +
                (run_dir / "records.jsonl").string())
                .exit_code == 0);
    REQUIRE(run("index build --articles " + (run_dir / "articles.jsonl").string() + " --out " +
                (run_dir / "index.bin").string())
                .exit_code == 0);

    const std::string annotate_cmd = "annotate --records " + (run_dir / "records.jsonl").string() +
                                     " --articles " + (run_dir / "articles.jsonl").string() +
                                     " --index " + (run_dir / "index.bin").string() + " --out ";
    REQUIRE(run(annotate_cmd + (run_dir / "a").string()).exit_code == 0);
    REQUIRE(run(annotate_cmd + (run_dir / "b").string()).exit_code == 0);
    CHECK(robkit::jsonl::read_text_file(run_dir / "a" / "instances.jsonl") ==
          robkit::jsonl::read_text_file(run_dir / "b" / "instances.jsonl"));
    CHECK(robkit::jsonl::read_text_file(run_dir / "a" / "rejects.jsonl") ==
          robkit::jsonl::read_text_file(run_dir / "b" / "rejects.jsonl"));
}

TEST_CASE("missing inputs exit 2 with a machine-readable error naming the path") {
    const auto result = run("eval --instances /nonexistent/instances.jsonl --model x.bin --out /tmp/x");
    CHECK(result.exit_code == 2);
    CHECK(result.output.find("/nonexistent/instances.jsonl") != std::string::npos);
    CHECK(result.output.find("\"error\"") != std::string::npos);

    const auto bad_split = run("split --instances /nonexistent/i.jsonl --out /tmp/s.json");
    CHECK(bad_split.exit_code == 2);
}

TEST_CASE("validation failures exit 3") {
    const fs::path dir = fresh_dir("robkit_e2e_validation");
    robkit::jsonl::write_text_file(dir / "empty.jsonl", "");
    const auto result = run("train-baseline --kind lr --train " + (dir / "empty.jsonl").string() +
                            " --out " + (dir / "models").string());
    CHECK(result.exit_code == 3);

    const auto bad_kind = run("train-baseline --kind forest --train " +
                              (dir / "empty.jsonl").string() + " --out " + dir.string());
    CHECK(bad_kind.exit_code == 3);
}

TEST_CASE("report refuses mixed config hashes unless forced") {
    const fs::path run_dir = fresh_dir("robkit_e2e_hashmix");
    REQUIRE(run("pipeline --articles " + kToyArticles.string() + " --reviews " +
                kToyReviews.string() + " --run-dir " + run_dir.string())
                .exit_code == 0);

    // Tamper with the manifest so predictions_lr.jsonl claims another run.
    const fs::path manifest_path = run_dir / "manifest.json";
    json manifest = json::parse(robkit::jsonl::read_text_file(manifest_path));
    manifest["artifacts"]["predictions_lr.jsonl"]["config_hash"] = 12345;
    robkit::jsonl::write_text_file(manifest_path, manifest.dump(2) + "\n");

    const std::string base = "report --instances " + (run_dir / "instances.jsonl").string() +
                             " --split " + (run_dir / "split.json").string() + " --predictions " +
                             (run_dir / "predictions_lr.jsonl").string() + " --out " +
                             (run_dir / "report2").string();
    const auto refused = run(base);
    CHECK(refused.exit_code == 3);
    CHECK(refused.output.find("config hash") != std::string::npos);
    const auto forced = run(base + " --force");
    CHECK(forced.exit_code == 0);
}

TEST_CASE("index stats prints the documented fields") {
    const fs::path run_dir = fresh_dir("robkit_e2e_stats");
    REQUIRE(run("ingest --articles " + kToyArticles.string() + " --out " +
                (run_dir / "articles.jsonl").string())
                .exit_code == 0);
    REQUIRE(run("index build --articles " + (run_dir / "articles.jsonl").string() + " --out " +
                (run_dir / "index.bin").string())
                .exit_code == 0);
    const auto stats = run("index stats --index " + (run_dir / "index.bin").string());
    CHECK(stats.exit_code == 0);
    CHECK(stats.output.find("sentences:") != std::string::npos);
    CHECK(stats.output.find("vocabulary:") != std::string::npos);
    CHECK(stats.output.find("density:") != std::string::npos);
}

TEST_CASE("per-bias-type baseline training writes one model per covered type") {
    const fs::path run_dir = fresh_dir("robkit_e2e_pertype");
    REQUIRE(run("pipeline --articles " + kToyArticles.string() + " --reviews " +
                kToyReviews.string() + " --run-dir " + run_dir.string())
                .exit_code == 0);
    const auto result = run("train-baseline --kind svm --train " +
                            (run_dir / "instances.jsonl").string() + " --split " +
                            (run_dir / "split.json").string() + " --per-bias-type --out " +
                            (run_dir / "pertype").string());
    CHECK(result.exit_code == 0);
    CHECK(fs::exists(run_dir / "pertype" / "svm.bin"));
    // Every bias type with both classes present gets its own model file.
    int per_type_models = 0;
    for (const auto& entry : fs::directory_iterator(run_dir / "pertype"))
        if (entry.path().filename().string().rfind("svm_", 0) == 0) ++per_type_models;
    CHECK(per_type_models >= 3);
}

TEST_CASE("llm-eval drives a live endpoint and its log replays into the report") {
    const fs::path run_dir = fresh_dir("robkit_e2e_llm");
    REQUIRE(run("pipeline --articles " + kToyArticles.string() + " --reviews " +
                kToyReviews.string() + " --run-dir " + run_dir.string())
                .exit_code == 0);

    httplib::Server server;
    server.Post("/chat/completions", [](const httplib::Request& req, httplib::Response& res) {
        const json body = json::parse(req.body);
        const std::string user = body["messages"].back()["content"].get<std::string>();
        // Answer YES whenever the context smells like a low-risk quote.
        const bool yes = user.find("computer") != std::string::npos ||
                         user.find("blinded") != std::string::npos ||
                         user.find("concealed") != std::string::npos;
        const json content{{"answer", yes ? "YES" : "NO"},
                           {"evidence", yes ? "quoted evidence" : ""}};
        const json reply{{"choices", json::array({json{{"message",
                                                        json{{"role", "assistant"},
                                                             {"content", content.dump()}}}}})}};
        res.set_content(reply.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    if (port <= 0) {
        MESSAGE("loopback bind unavailable; llm-eval covered by transport fakes");
        return;
    }
    std::thread listener([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    const auto result = run("llm-eval --instances " + (run_dir / "instances.jsonl").string() +
                            " --split " + (run_dir / "split.json").string() + " --log " +
                            (run_dir / "llm_log.jsonl").string() + " --url http://127.0.0.1:" +
                            std::to_string(port) + " --model scripted --shots 1");
    server.stop();
    listener.join();
    INFO(result.output);
    REQUIRE(result.exit_code == 0);

    const fs::path preds_path = run_dir / "predictions_scripted-1shot.jsonl";
    REQUIRE(fs::exists(preds_path));
    REQUIRE(fs::exists(run_dir / "llm_log.jsonl"));
    const auto log_rows = robkit::jsonl::read_file(run_dir / "llm_log.jsonl");
    CHECK(log_rows.at(0).at("kind") == "llm-log");
    CHECK(log_rows.at(0).at("shots") == 1);
    CHECK(log_rows.size() >= 2);
    CHECK(log_rows.at(1).contains("request"));
    CHECK(log_rows.at(1).contains("verdict"));

    // The verdicts mix with baseline predictions in one report.
    const auto report = run("report --instances " + (run_dir / "instances.jsonl").string() +
                            " --split " + (run_dir / "split.json").string() + " --predictions " +
                            preds_path.string() + " --predictions " +
                            (run_dir / "predictions_lr.jsonl").string() + " --out " +
                            (run_dir / "report_llm").string());
    CHECK(report.exit_code == 0);
    const std::string md = robkit::jsonl::read_text_file(run_dir / "report_llm" / "report.md");
    CHECK(md.find("scripted-1shot") != std::string::npos);
    CHECK(md.find("Welch") != std::string::npos);
}

TEST_CASE("forcing the scalar kernel backend keeps runs deterministic") {
    const fs::path dir_a = fresh_dir("robkit_e2e_scalar_a");
    const fs::path dir_b = fresh_dir("robkit_e2e_scalar_b");
    const std::string base = " pipeline --articles " + kToyArticles.string() + " --reviews " +
                             kToyReviews.string() + " --run-dir ";
    const std::string env = "ROBKIT_SIMD=scalar " + kCli;
    auto run_env = [&](const std::string& cmd) {
        RunResult result;
        FILE* pipe = popen((cmd + " 2>&1").c_str(), "r");
        REQUIRE(pipe != nullptr);
        char buf[4096];
        while (std::size_t n = fread(buf, 1, sizeof(buf), pipe)) result.output.append(buf, n);
        const int status = pclose(pipe);
        result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        return result;
    };
    REQUIRE(run_env(env + base + dir_a.string()).exit_code == 0);
    REQUIRE(run_env(env + base + dir_b.string()).exit_code == 0);
    CHECK(robkit::jsonl::read_text_file(dir_a / "instances.jsonl") ==
          robkit::jsonl::read_text_file(dir_b / "instances.jsonl"));
    CHECK(robkit::jsonl::read_text_file(dir_a / "report" / "report.csv") ==
          robkit::jsonl::read_text_file(dir_b / "report" / "report.csv"));
}
