#include "robkit/jsonl.hpp"

#include "robkit/error.hpp"

#include <fstream>
#include <sstream>

namespace robkit::jsonl {

std::vector<json> read_file(const std::filesystem::path& path) {
    std::vector<json> rows;
    for_each(path, [&](const json& j, std::size_t) { rows.push_back(j); });
    return rows;
}

void for_each(const std::filesystem::path& path,
              const std::function<void(const json&, std::size_t line)>& fn) {
    std::ifstream in(path);
    if (!in) throw missing_input("cannot open " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw validation_error(path.string() + ":" + std::to_string(lineno) + ": invalid JSON");
        fn(j, lineno);
    }
}

void write_file(const std::filesystem::path& path, const std::vector<json>& rows) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw internal_error("cannot write " + path.string());
    for (const auto& row : rows) out << row.dump() << "\n";
    if (!out) throw internal_error("write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw missing_input("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw internal_error("cannot write " + path.string());
    out << content;
    if (!out) throw internal_error("write failed: " + path.string());
}

}  // namespace robkit::jsonl
