#pragma once

#include <cstdint>

#include "gse/matrix.hpp"

namespace gse {

/// Counter-based pseudo-random stream. Each draw hashes (seed, stream_id, counter),
/// so streams are values: copy freely, no shared state, and distinct stream_ids
/// give independent sequences from the same seed.
struct RngStream {
    std::uint64_t seed = 0;
    std::uint64_t stream_id = 0;
    std::uint64_t counter = 0;

    RngStream() = default;
    RngStream(std::uint64_t seed_, std::uint64_t stream_id_ = 0)
        : seed(seed_), stream_id(stream_id_) {}

    /// Derived stream with an independent sequence; does not advance this one.
    RngStream substream(std::uint64_t id) const;

    std::uint64_t next_u64();

    /// Uniform in (0, 1].
    double next_uniform();

    /// Standard normal via Box-Muller (two uniforms per draw, no caching).
    double next_gaussian();
};

/// rows x cols matrix with i.i.d. Normal(0, std^2) entries. std must be > 0.
Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double std, RngStream& rng);

Vector gaussian_vector(std::size_t n, double std, RngStream& rng);

}  // namespace gse
