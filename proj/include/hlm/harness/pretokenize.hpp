// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "hlm/harness/unicode_tables.hpp"
#include "hlm/numerics/errors.hpp"

namespace hlm::harness {

struct DecodedChar {
    std::uint32_t cp = 0;
    std::size_t offset = 0;
    std::size_t length = 0;
};

/// Strict UTF-8 decoding: rejects overlong forms, surrogates, truncated
/// sequences and code points above U+10FFFF.
inline std::vector<DecodedChar> decode_utf8(std::string_view s)
{
    std::vector<DecodedChar> out;
    std::size_t i = 0;
    auto fail = [&](const char* why) {
        throw ContractError("invalid UTF-8 at byte " + std::to_string(i) + ": " + why);
    };
    while (i < s.size()) {
        const auto b0 = static_cast<unsigned char>(s[i]);
        std::size_t len = 0;
        std::uint32_t cp = 0, min = 0;
        if (b0 < 0x80) {
            len = 1;
            cp = b0;
        } else if ((b0 & 0xE0) == 0xC0) {
            len = 2;
            cp = b0 & 0x1F;
            min = 0x80;
        } else if ((b0 & 0xF0) == 0xE0) {
            len = 3;
            cp = b0 & 0x0F;
            min = 0x800;
        } else if ((b0 & 0xF8) == 0xF0) {
            len = 4;
            cp = b0 & 0x07;
            min = 0x10000;
        } else {
            fail("bad lead byte");
        }
        if (i + len > s.size()) {
            fail("truncated sequence");
        }
        for (std::size_t k = 1; k < len; ++k) {
            const auto b = static_cast<unsigned char>(s[i + k]);
            if ((b & 0xC0) != 0x80) {
                fail("bad continuation byte");
            }
            cp = (cp << 6) | (b & 0x3F);
        }
        if (len > 1 && cp < min) {
            fail("overlong encoding");
        }
        if ((cp >= 0xD800 && cp <= 0xDFFF) || cp > 0x10FFFF) {
            fail("code point out of range");
        }
        out.push_back({cp, i, len});
        i += len;
    }
    return out;
}

namespace detail {

template <std::size_t N>
bool in_ranges(const std::array<CodepointRange, N>& table, std::uint32_t cp)
{
    const auto it = std::upper_bound(table.begin(), table.end(), cp,
                                     [](std::uint32_t v, const CodepointRange& r) { return v < r.lo; });
    return it != table.begin() && cp <= std::prev(it)->hi;
}

} // namespace detail

inline bool is_punctuation(std::uint32_t cp) { return detail::in_ranges(detail::kPunctuationRanges, cp); }
inline bool is_decimal_digit(std::uint32_t cp) { return detail::in_ranges(detail::kDecimalDigitRanges, cp); }

/// Unicode White_Space.
inline bool is_space(std::uint32_t cp)
{
    return (cp >= 0x09 && cp <= 0x0D) || cp == 0x20 || cp == 0x85 || cp == 0xA0 || cp == 0x1680 ||
           (cp >= 0x2000 && cp <= 0x200A) || cp == 0x2028 || cp == 0x2029 || cp == 0x202F || cp == 0x205F ||
           cp == 0x3000;
}

/// Splits text into pieces. Runs of whitespace and runs of other characters
/// alternate; with `split_digits` every decimal digit, and with `split_punct`
/// every punctuation character, becomes a piece of its own. Whitespace runs
/// are kept as pieces so the concatenation of the pieces is the input.
inline std::vector<std::string> pretokenize(std::string_view text, bool split_digits, bool split_punct)
{
    std::vector<std::string> pieces;
    std::string cur;
    enum class Run { none, space, word } run = Run::none;
    auto flush = [&] {
        if (!cur.empty()) {
            pieces.push_back(std::move(cur));
            cur.clear();
        }
        run = Run::none;
    };
    for (const auto& c : decode_utf8(text)) {
        const std::string_view bytes = text.substr(c.offset, c.length);
        if ((split_digits && is_decimal_digit(c.cp)) || (split_punct && is_punctuation(c.cp))) {
            flush();
            pieces.emplace_back(bytes);
            continue;
        }
        const Run kind = is_space(c.cp) ? Run::space : Run::word;
        if (kind != run) {
            flush();
            run = kind;
        }
        cur.append(bytes);
    }
    flush();
    return pieces;
}

/// Byte-level vocabulary: 256 ids, one per byte value.
inline constexpr std::size_t kByteVocab = 256;

inline std::vector<std::int32_t> encode_bytes(const std::vector<std::string>& pieces)
{
    std::vector<std::int32_t> ids;
    for (const auto& p : pieces) {
        for (const unsigned char ch : p) {
            ids.push_back(ch);
        }
    }
    return ids;
}

inline std::vector<std::int32_t> encode_text(std::string_view text, bool split_digits = true, bool split_punct = true)
{
    return encode_bytes(pretokenize(text, split_digits, split_punct));
}

inline std::string decode_bytes(const std::vector<std::int32_t>& ids)
{
    std::string out;
    for (auto id : ids) {
        require(id >= 0 && id < 256, "decode_bytes: id outside the byte vocabulary");
        out.push_back(static_cast<char>(id));
    }
    return out;
}

} // namespace hlm::harness
