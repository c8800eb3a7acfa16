// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hlm/numerics/errors.hpp"

namespace hlm::harness {

using Document = std::vector<std::int32_t>;

/// One data source: documents in file order.
struct Source {
    std::string name;
    std::vector<Document> documents;

    std::size_t token_count() const
    {
        std::size_t n = 0;
        for (const auto& d : documents) {
            n += d.size();
        }
        return n;
    }
};

inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL)
{
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v)
{
    for (int k = 0; k < 4; ++k) {
        out.push_back(static_cast<char>((v >> (8 * k)) & 0xFF));
    }
}

inline std::uint32_t get_u32(const std::string& in, std::size_t at)
{
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) {
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + k])) << (8 * k);
    }
    return v;
}

inline std::string read_file(const std::filesystem::path& p)
{
    std::ifstream f(p, std::ios::binary);
    if (!f) {
        throw ContractError("cannot open '" + p.string() + "'");
    }
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& bytes)
{
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw ContractError("cannot write '" + p.string() + "'");
    }
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) {
        throw ContractError("short write to '" + p.string() + "'");
    }
}

} // namespace detail

/// Flat binary: per document a little-endian uint32 length followed by that
/// many little-endian uint32 token ids.
inline std::string serialize_source(const Source& s)
{
    std::string out;
    for (const auto& d : s.documents) {
        detail::put_u32(out, static_cast<std::uint32_t>(d.size()));
        for (auto t : d) {
            require(t >= 0, "serialize_source: token ids must be non-negative");
            detail::put_u32(out, static_cast<std::uint32_t>(t));
        }
    }
    return out;
}

inline std::vector<Document> parse_source(const std::string& bytes)
{
    std::vector<Document> docs;
    std::size_t at = 0;
    while (at < bytes.size()) {
        require(at + 4 <= bytes.size(), "corpus: truncated length prefix");
        const std::uint32_t n = detail::get_u32(bytes, at);
        at += 4;
        require(bytes.size() - at >= 4ULL * n, "corpus: truncated document");
        Document d(n);
        for (std::uint32_t k = 0; k < n; ++k) {
            d[k] = static_cast<std::int32_t>(detail::get_u32(bytes, at));
            at += 4;
        }
        docs.push_back(std::move(d));
    }
    return docs;
}

struct SourceEntry {
    std::string name;
    std::string file;
    std::size_t documents = 0;
    std::size_t tokens = 0;
    std::uint64_t hash = 0;
};

struct CorpusManifest {
    std::vector<SourceEntry> sources;
};

inline void to_json(nlohmann::json& j, const SourceEntry& e)
{
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(e.hash));
    j = {{"name", e.name}, {"file", e.file}, {"documents", e.documents}, {"tokens", e.tokens}, {"fnv1a64", hex}};
}

inline void from_json(const nlohmann::json& j, SourceEntry& e)
{
    e.name = j.at("name");
    e.file = j.at("file");
    e.documents = j.at("documents");
    e.tokens = j.at("tokens");
    e.hash = std::stoull(j.at("fnv1a64").get<std::string>(), nullptr, 16);
}

inline void to_json(nlohmann::json& j, const CorpusManifest& m) { j = {{"sources", m.sources}}; }
inline void from_json(const nlohmann::json& j, CorpusManifest& m) { m.sources = j.at("sources"); }

/// Writes `<dir>/<name>.bin` per source and `<dir>/manifest.json`.
inline CorpusManifest write_corpus(const std::filesystem::path& dir, const std::vector<Source>& sources)
{
    std::filesystem::create_directories(dir);
    CorpusManifest m;
    for (const auto& s : sources) {
        require(!s.name.empty() && s.name.find('/') == std::string::npos, "write_corpus: bad source name");
        const std::string bytes = serialize_source(s);
        SourceEntry e{s.name, s.name + ".bin", s.documents.size(), s.token_count(), fnv1a64(bytes.data(), bytes.size())};
        detail::write_file(dir / e.file, bytes);
        m.sources.push_back(e);
    }
    detail::write_file(dir / "manifest.json", nlohmann::json(m).dump(2) + "\n");
    return m;
}

/// Reads a corpus back, checking counts and hashes against the manifest.
inline std::vector<Source> read_corpus(const std::filesystem::path& dir)
{
    const CorpusManifest m = nlohmann::json::parse(detail::read_file(dir / "manifest.json"));
    std::vector<Source> out;
    for (const auto& e : m.sources) {
        const std::string bytes = detail::read_file(dir / e.file);
        if (fnv1a64(bytes.data(), bytes.size()) != e.hash) {
            throw ContractError("corpus: hash mismatch for source '" + e.name + "'");
        }
        Source s{e.name, parse_source(bytes)};
        require(s.documents.size() == e.documents && s.token_count() == e.tokens,
                "corpus: counts disagree with the manifest for '" + e.name + "'");
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace hlm::harness
