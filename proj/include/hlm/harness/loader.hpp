// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "hlm/harness/corpus.hpp"
#include "hlm/harness/packing.hpp"

namespace hlm::harness {

/// Sequential read position in one source.
struct DataSourceCursor {
    std::string source;
    /// Index of the current document within the epoch and the token offset in it.
    std::uint64_t document = 0;
    std::uint64_t offset = 0;
    std::uint64_t documents_consumed = 0;
    std::uint64_t epochs_completed = 0;

    friend bool operator==(const DataSourceCursor&, const DataSourceCursor&) = default;
};

inline void to_json(nlohmann::json& j, const DataSourceCursor& c)
{
    j = {{"source", c.source},
         {"document", c.document},
         {"offset", c.offset},
         {"documents_consumed", c.documents_consumed},
         {"epochs_completed", c.epochs_completed}};
}

inline void from_json(const nlohmann::json& j, DataSourceCursor& c)
{
    c.source = j.at("source");
    c.document = j.at("document");
    c.offset = j.at("offset");
    c.documents_consumed = j.at("documents_consumed");
    c.epochs_completed = j.at("epochs_completed");
}

struct MixtureSpec {
    struct Entry {
        std::string source;
        double weight = 0;
    };
    std::vector<Entry> entries;

    void validate() const
    {
        require(!entries.empty(), "MixtureSpec: no sources");
        double sum = 0;
        for (std::size_t i = 0; i < entries.size(); ++i) {
            require(entries[i].weight >= 0 && std::isfinite(entries[i].weight),
                    "MixtureSpec: weight of '" + entries[i].source + "' must be non-negative");
            for (std::size_t k = 0; k < i; ++k) {
                require(entries[k].source != entries[i].source, "MixtureSpec: duplicate source '" + entries[i].source + "'");
            }
            sum += entries[i].weight;
        }
        require(std::abs(sum - 1.0) <= 1e-9, "MixtureSpec: weights must sum to one");
    }

    static MixtureSpec uniform(const std::vector<Source>& sources)
    {
        MixtureSpec m;
        for (const auto& s : sources) {
            m.entries.push_back({s.name, 1.0 / static_cast<double>(sources.size())});
        }
        return m;
    }
};

inline void to_json(nlohmann::json& j, const MixtureSpec& m)
{
    j = nlohmann::json::array();
    for (const auto& e : m.entries) {
        j.push_back({{"source", e.source}, {"weight", e.weight}});
    }
}

inline void from_json(const nlohmann::json& j, MixtureSpec& m)
{
    m.entries.clear();
    for (const auto& e : j) {
        m.entries.push_back({e.at("source").get<std::string>(), e.at("weight").get<double>()});
    }
}

/// Largest-remainder split of `total` by `weights`; ties go to the earlier entry.
inline std::vector<std::size_t> largest_remainder(const std::vector<double>& weights, std::size_t total)
{
    std::vector<std::size_t> q(weights.size());
    std::vector<double> rem(weights.size());
    std::size_t given = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double exact = weights[i] * static_cast<double>(total);
        q[i] = static_cast<std::size_t>(std::floor(exact));
        rem[i] = exact - static_cast<double>(q[i]);
        given += q[i];
    }
    std::vector<std::size_t> order(weights.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
    for (std::size_t k = 0; given < total; ++k) {
        ++q[order[k % order.size()]];
        ++given;
    }
    return q;
}

struct LoaderState {
    std::vector<DataSourceCursor> cursors;
    std::uint64_t batches = 0;

    friend bool operator==(const LoaderState&, const LoaderState&) = default;
};

inline void to_json(nlohmann::json& j, const LoaderState& s) { j = {{"cursors", s.cursors}, {"batches", s.batches}}; }
inline void from_json(const nlohmann::json& j, LoaderState& s)
{
    s.cursors = j.at("cursors");
    s.batches = j.at("batches");
}

/// Deterministic mixture loader. Each batch takes a largest-remainder quota
/// of rows * T tokens from every source, reading each source strictly in
/// order and wrapping to its first document at the end of an epoch. The
/// pieces are packed source by source; doc ids number the pieces in the batch.
class DataLoader {
public:
    DataLoader(std::vector<Source> sources, MixtureSpec mixture, std::size_t rows, std::size_t T)
        : mixture_(std::move(mixture)), rows_(rows), T_(T)
    {
        mixture_.validate();
        require(rows > 0 && T > 0, "DataLoader: rows and T must be positive");
        for (const auto& e : mixture_.entries) {
            const auto it = std::find_if(sources.begin(), sources.end(), [&](const Source& s) { return s.name == e.source; });
            require(it != sources.end(), "DataLoader: mixture names unknown source '" + e.source + "'");
            sources_.push_back(*it);
            state_.cursors.push_back({e.source, 0, 0, 0, 0});
        }
        bool any = false;
        for (std::size_t i = 0; i < sources_.size(); ++i) {
            any = any || (sources_[i].token_count() > 0 && mixture_.entries[i].weight > 0);
        }
        if (!any) {
            throw ContractError("DataLoader: every weighted source is empty");
        }
    }

    std::size_t rows() const { return rows_; }
    std::size_t T() const { return T_; }
    const LoaderState& state() const { return state_; }
    const MixtureSpec& mixture() const { return mixture_; }

    void restore(const LoaderState& s)
    {
        require(s.cursors.size() == state_.cursors.size(), "DataLoader: cursor count mismatch");
        for (std::size_t i = 0; i < s.cursors.size(); ++i) {
            require(s.cursors[i].source == state_.cursors[i].source, "DataLoader: cursor order mismatch");
            require(s.cursors[i].document < std::max<std::size_t>(1, sources_[i].documents.size()),
                    "DataLoader: cursor beyond its source");
        }
        state_ = s;
    }

    PackedBatch next_batch()
    {
        std::vector<double> w;
        for (const auto& e : mixture_.entries) {
            w.push_back(e.weight);
        }
        const auto quota = largest_remainder(w, rows_ * T_);
        std::vector<Segment> segments;
        std::int32_t doc_id = 0;
        for (std::size_t i = 0; i < sources_.size(); ++i) {
            read(i, quota[i], segments, doc_id);
        }
        auto b = pack_segments(segments, rows_, T_);
        b.source_tokens = quota;
        ++state_.batches;
        return b;
    }

private:
    void read(std::size_t i, std::size_t n, std::vector<Segment>& out, std::int32_t& doc_id)
    {
        if (n == 0) {
            return;
        }
        const auto& docs = sources_[i].documents;
        if (sources_[i].token_count() == 0) {
            throw ContractError("DataLoader: source '" + sources_[i].name + "' is empty");
        }
        auto& c = state_.cursors[i];
        while (n > 0) {
            const auto& doc = docs[c.document];
            const std::size_t k = std::min<std::size_t>(n, doc.size() - c.offset);
            if (k > 0) {
                Segment s;
                s.doc_id = doc_id++;
                s.first_position = static_cast<std::int32_t>(c.offset);
                s.tokens.assign(doc.begin() + static_cast<std::ptrdiff_t>(c.offset),
                                doc.begin() + static_cast<std::ptrdiff_t>(c.offset + k));
                for (std::size_t j = c.offset; j < c.offset + k; ++j) {
                    s.targets.push_back(j + 1 < doc.size() ? doc[j + 1] : -1);
                }
                out.push_back(std::move(s));
                c.offset += k;
                n -= k;
            }
            if (c.offset == doc.size()) {
                c.offset = 0;
                ++c.documents_consumed;
                if (++c.document == docs.size()) {
                    c.document = 0;
                    ++c.epochs_completed;
                }
            }
        }
    }

    std::vector<Source> sources_;
    MixtureSpec mixture_;
    std::size_t rows_, T_;
    LoaderState state_;
};

} // namespace hlm::harness
