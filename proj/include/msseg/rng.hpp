#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

namespace msseg {

/// Philox4x32-10 counter-based generator.
///
/// The 64-bit seed is the Philox key. The 128-bit counter is split into a
/// 64-bit block index (low words) and a 64-bit stream id (high words), so
/// `split()` yields statistically independent child streams without any
/// shared state. Every draw is a pure function of (seed, stream, index),
/// which makes sequences reproducible across builds and platforms.
class Rng {
public:
    using Block = std::array<std::uint32_t, 4>;

    struct State {
        std::uint64_t seed = 0;
        std::uint64_t stream = 0;
        std::uint64_t index = 0;  // next block to generate
        std::uint32_t lane = 4;   // 4 = buffer exhausted

        bool operator==(const State&) const = default;
    };

    explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0);

    /// Raw Philox4x32-10 bijection, exposed for known-answer tests.
    static Block philox(Block counter, std::array<std::uint32_t, 2> key);

    std::uint32_t next_u32();
    std::uint64_t next_u64();
    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n);
    /// Standard normal via Box-Muller (consumes two uniforms).
    double normal();

    /// Child generator on a derived stream; the parent is not advanced.
    Rng split(std::uint64_t child) const;

    State state() const;
    static Rng from_state(const State& s);

private:
    void refill();

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t index_ = 0;
    Block buffer_{};
    std::uint32_t lane_ = 4;
};

/// Fisher-Yates shuffle driven by Rng::below (std::shuffle is
/// implementation-defined and would break cross-library reproducibility).
template <typename Container>
void shuffle(Container& items, Rng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.below(i));
        using std::swap;
        swap(items[i - 1], items[j]);
    }
}

}  // namespace msseg
