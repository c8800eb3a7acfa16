// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include <json.hpp>

#include "hlm/numerics/tensor.hpp"

namespace hlm::model {

enum class Arrangement { SAM, SA_M, S_A_M };

inline std::string to_string(Arrangement a)
{
    switch (a) {
    case Arrangement::SAM: return "SAM";
    case Arrangement::SA_M: return "SA_M";
    case Arrangement::S_A_M: return "S_A_M";
    }
    return "?";
}

inline Arrangement arrangement_from_string(const std::string& s)
{
    if (s == "SAM") {
        return Arrangement::SAM;
    }
    if (s == "SA_M") {
        return Arrangement::SA_M;
    }
    if (s == "S_A_M") {
        return Arrangement::S_A_M;
    }
    throw ContractError("unknown arrangement '" + s + "'");
}

/// Number of RMSnorm layers inside one block.
inline std::size_t norm_count(Arrangement a)
{
    return a == Arrangement::SAM ? 1 : a == Arrangement::SA_M ? 2 : 3;
}

/// Reference channel bases at the reference width; they scale linearly with d_model.
inline constexpr double kBaseSsm = 4096, kBaseAttn = 6144, kBaseMlp = 4864, kBaseWidth = 1280;

struct SsmConfig {
    std::size_t d_head = 64;
    std::size_t d_state = 16;
    std::size_t n_groups = 1;
    std::size_t conv_k = 4;
    std::size_t chunk_size = 16;
};

struct AttnConfig {
    std::size_t n_kv_heads = 1;
    std::size_t d_head = 64;
    double rope_base = 1e11;
};

struct HybridConfig {
    std::size_t d_model = 64;
    std::size_t n_layers = 2;
    std::size_t vocab = 256;
    // allocation fractions in eighths
    int eighths_S = 2;
    int eighths_A = 1;
    int eighths_M = 5;
    // 0 selects the reference base scaled to d_model
    double base_S = 0;
    double base_A = 0;
    double base_M = 0;
    Arrangement arrangement = Arrangement::SA_M;
    SsmConfig ssm;
    AttnConfig attn;
    Precision precision = Precision::verification;
    std::uint64_t seed = 0;

    double resolved_base_S() const { return base_S > 0 ? base_S : kBaseSsm * d_model / kBaseWidth; }
    double resolved_base_A() const { return base_A > 0 ? base_A : kBaseAttn * d_model / kBaseWidth; }
    double resolved_base_M() const { return base_M > 0 ? base_M : kBaseMlp * d_model / kBaseWidth; }

    void validate() const
    {
        require(d_model >= 1 && n_layers >= 1 && vocab >= 1, "HybridConfig: d_model, n_layers, vocab must be >= 1");
        require(eighths_S >= 1 && eighths_A >= 1 && eighths_M >= 1 && eighths_S + eighths_A + eighths_M == 8,
                "HybridConfig: allocation must be positive eighths summing to one");
        require(ssm.d_head >= 1 && ssm.d_state >= 1 && ssm.n_groups >= 1 && ssm.conv_k >= 1,
                "HybridConfig: ssm extents must be >= 1");
        require(attn.d_head >= 2 && attn.d_head % 2 == 0, "HybridConfig: attention d_head must be even");
        require(attn.n_kv_heads >= 1 && attn.rope_base >= 1, "HybridConfig: invalid attention settings");
    }
};

/// Inner widths after rounding down to head multiples; remainders are the
/// channels dropped by the rounding.
struct ChannelAllocation {
    std::size_t d_ssm = 0, d_attn = 0, d_mlp = 0;
    double rem_ssm = 0, rem_attn = 0, rem_mlp = 0;
};

inline ChannelAllocation allocate_channels(const HybridConfig& c)
{
    c.validate();
    auto round_down = [](double raw, std::size_t multiple, const char* what, double& rem) {
        const auto whole = static_cast<std::size_t>(std::floor(raw / static_cast<double>(multiple)));
        if (whole == 0) {
            throw ContractError(std::string("allocate_channels: ") + what + " width " + std::to_string(raw) +
                                " is smaller than one head of " + std::to_string(multiple));
        }
        const std::size_t out = whole * multiple;
        rem = raw - static_cast<double>(out);
        return out;
    };
    ChannelAllocation a;
    a.d_ssm = round_down(c.eighths_S / 8.0 * c.resolved_base_S(), c.ssm.d_head, "ssm", a.rem_ssm);
    a.d_attn = round_down(c.eighths_A / 8.0 * c.resolved_base_A(), c.attn.d_head, "attention", a.rem_attn);
    a.d_mlp = round_down(c.eighths_M / 8.0 * c.resolved_base_M(), 1, "mlp", a.rem_mlp);
    return a;
}

NLOHMANN_JSON_SERIALIZE_ENUM(Arrangement, {{Arrangement::SAM, "SAM"},
                                           {Arrangement::SA_M, "SA_M"},
                                           {Arrangement::S_A_M, "S_A_M"}})

inline void to_json(nlohmann::json& j, const SsmConfig& s)
{
    j = {{"d_head", s.d_head}, {"d_state", s.d_state}, {"n_groups", s.n_groups}, {"conv_k", s.conv_k},
         {"chunk_size", s.chunk_size}};
}

inline void from_json(const nlohmann::json& j, SsmConfig& s)
{
    SsmConfig d;
    s.d_head = j.value("d_head", d.d_head);
    s.d_state = j.value("d_state", d.d_state);
    s.n_groups = j.value("n_groups", d.n_groups);
    s.conv_k = j.value("conv_k", d.conv_k);
    s.chunk_size = j.value("chunk_size", d.chunk_size);
}

inline void to_json(nlohmann::json& j, const AttnConfig& a)
{
    j = {{"n_kv_heads", a.n_kv_heads}, {"d_head", a.d_head}, {"rope_base", a.rope_base}};
}

inline void from_json(const nlohmann::json& j, AttnConfig& a)
{
    AttnConfig d;
    a.n_kv_heads = j.value("n_kv_heads", d.n_kv_heads);
    a.d_head = j.value("d_head", d.d_head);
    a.rope_base = j.value("rope_base", d.rope_base);
}

inline void to_json(nlohmann::json& j, const HybridConfig& c)
{
    j = {{"d_model", c.d_model},
         {"n_layers", c.n_layers},
         {"vocab", c.vocab},
         {"eighths", {c.eighths_S, c.eighths_A, c.eighths_M}},
         {"bases", {c.base_S, c.base_A, c.base_M}},
         {"arrangement", c.arrangement},
         {"ssm", c.ssm},
         {"attn", c.attn},
         {"precision", c.precision == Precision::verification ? "verification" : "training"},
         {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, HybridConfig& c)
{
    HybridConfig d;
    c.d_model = j.value("d_model", d.d_model);
    c.n_layers = j.value("n_layers", d.n_layers);
    c.vocab = j.value("vocab", d.vocab);
    if (j.contains("eighths")) {
        const auto& e = j.at("eighths");
        c.eighths_S = e.at(0);
        c.eighths_A = e.at(1);
        c.eighths_M = e.at(2);
    }
    if (j.contains("bases")) {
        const auto& b = j.at("bases");
        c.base_S = b.at(0);
        c.base_A = b.at(1);
        c.base_M = b.at(2);
    }
    c.arrangement = j.value("arrangement", d.arrangement);
    c.ssm = j.value("ssm", d.ssm);
    c.attn = j.value("attn", d.attn);
    const std::string prec = j.value("precision", std::string("verification"));
    require(prec == "verification" || prec == "training", "HybridConfig: precision must be verification or training");
    c.precision = prec == "verification" ? Precision::verification : Precision::training;
    c.seed = j.value("seed", d.seed);
    c.validate();
}

} // namespace hlm::model
