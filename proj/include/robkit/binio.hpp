#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "robkit/error.hpp"

// Versioned binary artifact layout shared by the index and model files:
//   magic[4] | u32 version | u64 header_len | header JSON | payload sections
// All integers little-endian. The JSON header carries kind, seed,
// hyperparameters and the run-config hash for provenance checks.

namespace robkit::binio {

class Writer {
public:
    Writer(const std::filesystem::path& path, const char magic[4], std::uint32_t version,
           const nlohmann::json& header)
        : out_(path, std::ios::binary | std::ios::trunc) {
        if (!out_) throw internal_error("cannot write " + path.string());
        out_.write(magic, 4);
        put_u32(version);
        const std::string h = header.dump();
        put_u64(h.size());
        out_.write(h.data(), static_cast<std::streamsize>(h.size()));
    }

    void put_u32(std::uint32_t v) { put_bytes(&v, sizeof(v)); }
    void put_u64(std::uint64_t v) { put_bytes(&v, sizeof(v)); }
    void put_i64(std::int64_t v) { put_bytes(&v, sizeof(v)); }
    void put_double(double v) { put_bytes(&v, sizeof(v)); }

    void put_string(const std::string& s) {
        put_u64(s.size());
        out_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }

    void put_doubles(const std::vector<double>& v) {
        put_u64(v.size());
        out_.write(reinterpret_cast<const char*>(v.data()),
                   static_cast<std::streamsize>(v.size() * sizeof(double)));
    }

    void put_u32s(const std::vector<std::uint32_t>& v) {
        put_u64(v.size());
        out_.write(reinterpret_cast<const char*>(v.data()),
                   static_cast<std::streamsize>(v.size() * sizeof(std::uint32_t)));
    }

    void finish() {
        out_.flush();
        if (!out_) throw internal_error("binary write failed");
    }

private:
    void put_bytes(const void* p, std::size_t n) {
        out_.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n));
    }
    std::ofstream out_;
};

class Reader {
public:
    Reader(const std::filesystem::path& path, const char magic[4], std::uint32_t expect_version)
        : in_(path, std::ios::binary), path_(path.string()) {
        if (!in_) throw missing_input("cannot open " + path_);
        char m[4] = {};
        in_.read(m, 4);
        if (!in_ || std::string(m, 4) != std::string(magic, 4))
            throw validation_error(path_ + ": bad magic (not a " + std::string(magic, 4) + " file)");
        const std::uint32_t version = get_u32();
        if (version != expect_version)
            throw validation_error(path_ + ": unsupported version " + std::to_string(version));
        const std::uint64_t hlen = get_u64();
        std::string h(hlen, '\0');
        in_.read(h.data(), static_cast<std::streamsize>(hlen));
        header_ = nlohmann::json::parse(h, nullptr, false);
        if (header_.is_discarded()) throw validation_error(path_ + ": corrupt JSON header");
    }

    const nlohmann::json& header() const { return header_; }

    std::uint32_t get_u32() { std::uint32_t v = 0; get_bytes(&v, sizeof(v)); return v; }
    std::uint64_t get_u64() { std::uint64_t v = 0; get_bytes(&v, sizeof(v)); return v; }
    std::int64_t get_i64() { std::int64_t v = 0; get_bytes(&v, sizeof(v)); return v; }
    double get_double() { double v = 0; get_bytes(&v, sizeof(v)); return v; }

    std::string get_string() {
        const std::uint64_t n = get_u64();
        std::string s(n, '\0');
        in_.read(s.data(), static_cast<std::streamsize>(n));
        check();
        return s;
    }

    std::vector<double> get_doubles() {
        const std::uint64_t n = get_u64();
        std::vector<double> v(n);
        in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
        check();
        return v;
    }

    std::vector<std::uint32_t> get_u32s() {
        const std::uint64_t n = get_u64();
        std::vector<std::uint32_t> v(n);
        in_.read(reinterpret_cast<char*>(v.data()),
                 static_cast<std::streamsize>(n * sizeof(std::uint32_t)));
        check();
        return v;
    }

private:
    void get_bytes(void* p, std::size_t n) {
        in_.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n));
        check();
    }
    void check() const {
        if (!in_) throw validation_error(path_ + ": truncated binary payload");
    }
    std::ifstream in_;
    std::string path_;
    nlohmann::json header_;
};

}  // namespace robkit::binio
