// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "hlm/harness/corpus.hpp"
#include "hlm/numerics/tensor.hpp"

namespace hlm::harness {

/// Little-endian bundle of tensors. The JSON index records name, shape and
/// element offset of each tensor; the blob stores raw IEEE bits so a round
/// trip is bit-exact.
template <class Real>
class TensorBundle {
    static_assert(std::is_same_v<Real, float> || std::is_same_v<Real, double>);
    using Bits = std::conditional_t<std::is_same_v<Real, float>, std::uint32_t, std::uint64_t>;

public:
    static constexpr const char* dtype() { return std::is_same_v<Real, float> ? "float32" : "float64"; }

    void add(const std::string& name, const Tensor<Real>& t)
    {
        index_.push_back({{"name", name}, {"shape", t.shape()}, {"offset", count_}});
        for (Real v : t.values()) {
            const auto bits = std::bit_cast<Bits>(v);
            for (std::size_t k = 0; k < sizeof(Bits); ++k) {
                blob_.push_back(static_cast<char>((bits >> (8 * k)) & 0xFF));
            }
        }
        count_ += t.size();
    }

    Tensor<Real> get(std::size_t i) const
    {
        require(i < index_.size(), "TensorBundle: index out of range");
        const Shape shape = index_[i].at("shape").get<Shape>();
        const std::size_t off = index_[i].at("offset");
        Tensor<Real> t(shape);
        require((off + t.size()) * sizeof(Bits) <= blob_.size(), "TensorBundle: blob too short");
        for (std::size_t e = 0; e < t.size(); ++e) {
            Bits bits = 0;
            for (std::size_t k = 0; k < sizeof(Bits); ++k) {
                bits |= static_cast<Bits>(static_cast<unsigned char>(blob_[(off + e) * sizeof(Bits) + k])) << (8 * k);
            }
            t[e] = std::bit_cast<Real>(bits);
        }
        return t;
    }

    std::string name(std::size_t i) const { return index_.at(i).at("name"); }
    std::size_t size() const { return index_.size(); }

    nlohmann::json index() const
    {
        return {{"dtype", dtype()},
                {"tensors", index_},
                {"bytes", blob_.size()},
                {"fnv1a64", fnv1a64(blob_.data(), blob_.size())}};
    }
    const std::string& blob() const { return blob_; }

    static TensorBundle from(const nlohmann::json& index, std::string blob)
    {
        require(index.at("dtype").get<std::string>() == dtype(),
                std::string("TensorBundle: checkpoint precision is ") + index.at("dtype").get<std::string>() +
                    ", expected " + dtype());
        require(index.at("bytes").get<std::size_t>() == blob.size(), "TensorBundle: blob size mismatch");
        require(index.at("fnv1a64").get<std::uint64_t>() == fnv1a64(blob.data(), blob.size()),
                "TensorBundle: blob hash mismatch");
        TensorBundle b;
        b.index_ = index.at("tensors").get<std::vector<nlohmann::json>>();
        b.blob_ = std::move(blob);
        b.count_ = b.blob_.size() / sizeof(Bits);
        return b;
    }

private:
    std::vector<nlohmann::json> index_;
    std::string blob_;
    std::size_t count_ = 0;
};

} // namespace hlm::harness
