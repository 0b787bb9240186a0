// Copyright (c) 2026, idpref contributors
// SPDX-License-Identifier: Apache-2.0
//
// Shared types, error kinds and seeded random streams.

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace idpref {

/// Row-major T x D matrix; row t is frame t.
using Frames = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class ErrorKind {
    InvalidArgument,
    Configuration,
    Io,
    Parse,
    Data,
    State,
    Numeric,
    Serialization,
    Usage,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
    throw Error(kind, what);
}

/// Independent generator for (seed, stream, index). Streams derived this way
/// do not depend on the order in which they are requested.
inline std::mt19937_64 derived_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
    std::seed_seq seq{
        static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
        static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
        static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    return std::mt19937_64(seq);
}

inline Vec gaussian_vector(std::mt19937_64& rng, Eigen::Index n) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(rng);
    return v;
}

/// Unit vector drawn uniformly from the sphere.
Vec random_unit_vector(std::mt19937_64& rng, Eigen::Index n);

/// Stream tags keep the different consumers of one seed apart.
namespace stream {
inline constexpr std::uint64_t world = 1;
inline constexpr std::uint64_t identity = 2;
inline constexpr std::uint64_t reference = 3;
inline constexpr std::uint64_t prompt = 4;
inline constexpr std::uint64_t render = 5;
inline constexpr std::uint64_t init_params = 6;
inline constexpr std::uint64_t pretrain = 7;
inline constexpr std::uint64_t finetune = 8;
inline constexpr std::uint64_t sample_ft = 9;
inline constexpr std::uint64_t sample_init = 10;
inline constexpr std::uint64_t hpo = 11;
inline constexpr std::uint64_t eval = 12;
inline constexpr std::uint64_t sampler = 13;
} // namespace stream

} // namespace idpref
