#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace fpf {

// Stream splitting: every random stream is an mt19937_64 seeded with
// mix(master, tag, index), where mix chains splitmix64 over the three words.
// Streams for different (tag, index) pairs are statistically independent and
// a run is reproducible from the master seed alone.
enum class StreamTag : std::uint64_t {
    Truth = 1,
    Prior = 2,
    ParticleNoise = 3,
    Reference = 4,
    ReferenceNoise = 5,
    Sir = 6,
    Sampling = 7,
    Pairs = 8,
    Repetition = 9,
};

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, StreamTag tag, std::uint64_t index) {
    std::uint64_t s = master;
    std::uint64_t out = splitmix64(s);
    s ^= static_cast<std::uint64_t>(tag) * 0xd1b54a32d192ed03ULL;
    out ^= splitmix64(s);
    s ^= index * 0x8cb92ba72f3d8dd7ULL;
    out ^= splitmix64(s);
    return out;
}

class Stream {
public:
    Stream(std::uint64_t master, StreamTag tag, std::uint64_t index = 0) : engine_(derive_seed(master, tag, index)) {}

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }

    Eigen::MatrixXd normals(Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
        Eigen::MatrixXd out(rows, cols);
        // row-major fill: particle i draws its d components consecutively
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index k = 0; k < cols; ++k) out(i, k) = scale * normal();
        return out;
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

} // namespace fpf
