// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hlm/harness/corpus.hpp"
#include "hlm/numerics/errors.hpp"
#include "hlm/train/step.hpp"

namespace hlm::harness {

/// Row-major [rows, T] batch of packed documents.
///
/// Every row starts with a reset. A document that runs past the end of a row
/// continues on the next row with the same doc id and continuing positions;
/// its first token there carries the row-start reset. `targets` holds the next
/// token of the same document, or -1 where the document ends. `mask` is 0 on
/// padding.
struct PackedBatch {
    std::size_t rows = 0;
    std::size_t T = 0;
    std::vector<std::int32_t> tokens;
    std::vector<std::int32_t> targets;
    std::vector<std::uint8_t> resets;
    std::vector<std::int32_t> doc_ids;
    std::vector<std::int32_t> positions;
    std::vector<std::uint8_t> mask;
    /// Tokens taken from each source, in mixture order (loader batches only).
    std::vector<std::size_t> source_tokens;

    std::size_t at(std::size_t r, std::size_t t) const { return r * T + t; }

    /// Throws ContractError naming the first broken packing invariant.
    void validate() const
    {
        const std::size_t n = rows * T;
        require(rows > 0 && T > 0, "PackedBatch: empty shape");
        require(tokens.size() == n && targets.size() == n && resets.size() == n && doc_ids.size() == n &&
                    positions.size() == n && mask.size() == n,
                "PackedBatch: field sizes disagree with [rows, T]");
        for (std::size_t r = 0; r < rows; ++r) {
            require(resets[at(r, 0)] == 1, "PackedBatch: row " + std::to_string(r) + " does not start with a reset");
            for (std::size_t t = 1; t < T; ++t) {
                const auto i = at(r, t);
                require(doc_ids[i] >= doc_ids[i - 1], "PackedBatch: doc ids decrease in row " + std::to_string(r));
                const bool new_doc = doc_ids[i] != doc_ids[i - 1];
                require(static_cast<bool>(resets[i]) == new_doc,
                        "PackedBatch: reset disagrees with document change at row " + std::to_string(r));
                require(new_doc ? positions[i] == 0 : positions[i] == positions[i - 1] + 1,
                        "PackedBatch: positions do not restart exactly at resets in row " + std::to_string(r));
            }
        }
    }

    /// One training row per packed row; padding predicts nothing.
    std::vector<train::TrainRow> train_rows() const
    {
        std::vector<train::TrainRow> out(rows);
        for (std::size_t r = 0; r < rows; ++r) {
            auto& row = out[r];
            const auto lo = static_cast<std::ptrdiff_t>(r * T), hi = static_cast<std::ptrdiff_t>((r + 1) * T);
            row.tokens.assign(tokens.begin() + lo, tokens.begin() + hi);
            row.targets.assign(targets.begin() + lo, targets.begin() + hi);
            row.resets.assign(resets.begin() + lo, resets.begin() + hi);
            row.doc_ids.assign(doc_ids.begin() + lo, doc_ids.begin() + hi);
            row.positions.assign(positions.begin() + lo, positions.begin() + hi);
            for (std::size_t t = 0; t < T; ++t) {
                if (!mask[r * T + t]) {
                    row.targets[t] = -1;
                }
            }
        }
        return out;
    }

    /// FNV-1a over every field, for stream comparisons.
    std::uint64_t hash() const
    {
        std::uint64_t h = fnv1a64(&rows, sizeof rows);
        h = fnv1a64(&T, sizeof T, h);
        h = fnv1a64(tokens.data(), tokens.size() * sizeof(std::int32_t), h);
        h = fnv1a64(targets.data(), targets.size() * sizeof(std::int32_t), h);
        h = fnv1a64(resets.data(), resets.size(), h);
        h = fnv1a64(doc_ids.data(), doc_ids.size() * sizeof(std::int32_t), h);
        h = fnv1a64(positions.data(), positions.size() * sizeof(std::int32_t), h);
        h = fnv1a64(mask.data(), mask.size(), h);
        return fnv1a64(source_tokens.data(), source_tokens.size() * sizeof(std::size_t), h);
    }

    friend bool operator==(const PackedBatch&, const PackedBatch&) = default;
};

/// A contiguous piece of one document.
struct Segment {
    std::vector<std::int32_t> tokens;
    std::vector<std::int32_t> targets;
    std::int32_t first_position = 0;
    std::int32_t doc_id = 0;
};

/// Greedy sequential packing of segments into rows of length T. Segments are
/// laid out back to back; the tail of the last row is padding.
inline PackedBatch pack_segments(std::span<const Segment> segments, std::size_t rows, std::size_t T)
{
    require(rows > 0 && T > 0, "pack_segments: rows and T must be positive");
    PackedBatch b;
    b.rows = rows;
    b.T = T;
    const std::size_t n = rows * T;
    b.tokens.assign(n, 0);
    b.targets.assign(n, -1);
    b.resets.assign(n, 0);
    b.doc_ids.assign(n, 0);
    b.positions.assign(n, 0);
    b.mask.assign(n, 0);
    std::size_t i = 0;
    std::int32_t last_doc = -1;
    for (const auto& s : segments) {
        require(!s.tokens.empty() && s.targets.size() == s.tokens.size(), "pack_segments: malformed segment");
        require(s.doc_id > last_doc || (s.doc_id == last_doc && i > 0), "pack_segments: doc ids must increase");
        for (std::size_t k = 0; k < s.tokens.size(); ++k) {
            require(i < n, "pack_segments: segments exceed the batch");
            b.tokens[i] = s.tokens[k];
            b.targets[i] = s.targets[k];
            b.doc_ids[i] = s.doc_id;
            b.positions[i] = s.first_position + static_cast<std::int32_t>(k);
            b.resets[i] = (k == 0 && b.positions[i] == 0) || i % T == 0;
            b.mask[i] = 1;
            ++i;
        }
        last_doc = s.doc_id;
    }
    // padding: one pseudo-document per row remainder
    for (std::size_t j = i; j < n; ++j) {
        const bool start = j == i || j % T == 0;
        b.doc_ids[j] = last_doc + 1;
        b.positions[j] = start ? 0 : b.positions[j - 1] + 1;
        b.resets[j] = start;
    }
    return b;
}

/// Packs whole documents into batches of `batch` rows of length T. Doc ids
/// number the documents of the stream from 0. The last batch is padded.
inline std::vector<PackedBatch> pack_documents(const std::vector<Document>& docs, std::size_t T, std::size_t batch)
{
    require(!docs.empty(), "pack_documents: no documents");
    require(T > 0 && batch > 0, "pack_documents: T and batch must be positive");
    std::vector<PackedBatch> out;
    const std::size_t cap = T * batch;
    std::vector<Segment> pending;
    std::size_t used = 0;
    auto emit = [&] {
        out.push_back(pack_segments(pending, batch, T));
        pending.clear();
        used = 0;
    };
    for (std::size_t d = 0; d < docs.size(); ++d) {
        const auto& doc = docs[d];
        require(!doc.empty(), "pack_documents: document " + std::to_string(d) + " is empty");
        std::size_t off = 0;
        while (off < doc.size()) {
            const std::size_t k = std::min(doc.size() - off, cap - used);
            Segment s;
            s.doc_id = static_cast<std::int32_t>(d);
            s.first_position = static_cast<std::int32_t>(off);
            s.tokens.assign(doc.begin() + static_cast<std::ptrdiff_t>(off),
                            doc.begin() + static_cast<std::ptrdiff_t>(off + k));
            for (std::size_t j = off; j < off + k; ++j) {
                s.targets.push_back(j + 1 < doc.size() ? doc[j + 1] : -1);
            }
            pending.push_back(std::move(s));
            off += k;
            used += k;
            if (used == cap) {
                emit();
            }
        }
    }
    if (used > 0) {
        emit();
    }
    return out;
}

/// Inverse of pack_documents: regroups the unpadded tokens by doc id.
inline std::vector<Document> unpack_documents(const std::vector<PackedBatch>& batches)
{
    std::vector<Document> docs;
    std::int64_t current = -1;
    for (const auto& b : batches) {
        for (std::size_t i = 0; i < b.tokens.size(); ++i) {
            if (!b.mask[i]) {
                continue;
            }
            if (b.doc_ids[i] != current) {
                current = b.doc_ids[i];
                docs.emplace_back();
            }
            docs.back().push_back(b.tokens[i]);
        }
    }
    return docs;
}

} // namespace hlm::harness
