#include "gse/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace gse {
namespace {

// splitmix64 finalizer
std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

RngStream RngStream::substream(std::uint64_t id) const {
    RngStream s;
    s.seed = seed;
    s.stream_id = mix64(stream_id ^ mix64(id ^ 0xd6e8feb86659fd93ULL));
    s.counter = 0;
    return s;
}

std::uint64_t RngStream::next_u64() {
    const std::uint64_t c = counter++;
    return mix64(mix64(mix64(seed) ^ stream_id) ^ c);
}

double RngStream::next_uniform() {
    // 53-bit mantissa; map to (0, 1] so log() below is safe
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
}

double RngStream::next_gaussian() {
    const double u1 = next_uniform();
    const double u2 = next_uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double std, RngStream& rng) {
    if (!(std > 0.0)) throw std::invalid_argument("gaussian_matrix: std must be > 0");
    Matrix m(rows, cols);
    for (double& v : m.data()) v = std * rng.next_gaussian();
    return m;
}

Vector gaussian_vector(std::size_t n, double std, RngStream& rng) {
    if (!(std > 0.0)) throw std::invalid_argument("gaussian_vector: std must be > 0");
    Vector v(n);
    for (double& x : v) x = std * rng.next_gaussian();
    return v;
}

}  // namespace gse
