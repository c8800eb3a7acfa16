// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "hlm/harness/corpus.hpp"
#include "hlm/harness/pretokenize.hpp"
#include "hlm/numerics/random.hpp"

namespace hlm::harness {

namespace detail {

template <std::size_t N>
std::string_view pick(Rng& rng, const std::array<std::string_view, N>& words)
{
    return words[rng.below(N)];
}

/// "step 3 from 14: 14 17 20 23 26 29." or "12 + 35 = 47."
inline std::string integer_task(Rng& rng)
{
    std::string s;
    if (rng.below(3) == 0) {
        const int n = static_cast<int>(rng.below(4)) + 2;
        for (int k = 0; k < n; ++k) {
            const auto a = rng.below(90) + 10, b = rng.below(90) + 10;
            s += std::to_string(a) + " + " + std::to_string(b) + " = " + std::to_string(a + b) + ". ";
        }
        return s;
    }
    const auto start = rng.below(50);
    const auto step = rng.below(9) + 1;
    const int n = static_cast<int>(rng.below(8)) + 6;
    s = "step " + std::to_string(step) + " from " + std::to_string(start) + ":";
    for (int k = 0; k < n; ++k) {
        s += " " + std::to_string(start + step * static_cast<std::uint64_t>(k));
    }
    return s + ".";
}

inline constexpr std::array<std::string_view, 8> kAdjectives = {"small", "red",  "quiet", "old",
                                                                 "bright", "lazy", "clever", "tall"};
inline constexpr std::array<std::string_view, 8> kNouns = {"cat", "dog", "bird", "child", "farmer", "robot", "river",
                                                           "teacher"};
inline constexpr std::array<std::string_view, 6> kVerbs = {"sees", "follows", "likes", "finds", "greets", "watches"};
inline constexpr std::array<std::string_view, 5> kPlaces = {"garden", "market", "forest", "school", "harbor"};

/// A few template sentences such as "The old cat sees the red bird in the garden."
inline std::string templated_text(Rng& rng)
{
    std::string s;
    const int n = static_cast<int>(rng.below(3)) + 2;
    for (int k = 0; k < n; ++k) {
        if (k > 0) {
            s += " ";
        }
        switch (rng.below(3)) {
        case 0:
            s += "The " + std::string(pick(rng, kAdjectives)) + " " + std::string(pick(rng, kNouns)) + " " +
                 std::string(pick(rng, kVerbs)) + " the " + std::string(pick(rng, kAdjectives)) + " " +
                 std::string(pick(rng, kNouns)) + " in the " + std::string(pick(rng, kPlaces)) + ".";
            break;
        case 1:
            s += "A " + std::string(pick(rng, kNouns)) + " is " + std::string(pick(rng, kAdjectives)) + ", and the " +
                 std::string(pick(rng, kNouns)) + " is not.";
            break;
        default:
            s += "Where is the " + std::string(pick(rng, kNouns)) + "? It is at the " + std::string(pick(rng, kPlaces)) +
                 ".";
            break;
        }
    }
    return s;
}

} // namespace detail

struct SyntheticSpec {
    std::size_t total_tokens = 200000;
    /// Fraction of tokens drawn from the integer-sequence source.
    double integer_fraction = 0.5;
    std::uint64_t seed = 0;
};

/// Two byte-level sources, "integers" and "text", each generated until it
/// reaches its share of `total_tokens` (the last document may overshoot).
inline std::vector<Source> generate_synthetic(const SyntheticSpec& spec)
{
    require(spec.total_tokens > 0, "generate_synthetic: need a positive token count");
    require(spec.integer_fraction >= 0 && spec.integer_fraction <= 1, "generate_synthetic: fraction must be in [0, 1]");
    Rng rng(spec.seed);
    const auto want_int = static_cast<std::size_t>(std::llround(spec.integer_fraction * spec.total_tokens));
    const std::size_t want_text = spec.total_tokens - want_int;
    auto fill = [&](const std::string& name, std::size_t want, auto make) {
        Source s{name, {}};
        std::size_t have = 0;
        while (have < want) {
            s.documents.push_back(encode_text(make(rng)));
            have += s.documents.back().size();
        }
        return s;
    };
    std::vector<Source> out;
    out.push_back(fill("integers", want_int, detail::integer_task));
    out.push_back(fill("text", want_text, detail::templated_text));
    return out;
}

} // namespace hlm::harness
