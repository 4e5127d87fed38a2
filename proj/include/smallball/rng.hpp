#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <vector>

namespace smallball {

/// SplitMix64 finalizer; used to turn (seed, tag) pairs into well-mixed keys.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) noexcept {
    return mix64(a ^ mix64(b + 0x632be59bd9b4e019ULL));
}

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// A stream is identified by a 64-bit key and a 64-bit stream id held in the
/// upper half of the counter; the lower half counts 128-bit output blocks. Two
/// engines with different (key, stream) pairs never share a counter block, so
/// trials can be generated in any order or on any thread with identical output.
class Philox4x32 {
  public:
    using result_type = std::uint32_t;
    using block_type = std::array<std::uint32_t, 4>;
    using key_type = std::array<std::uint32_t, 2>;

    explicit Philox4x32(std::uint64_t key = 0, std::uint64_t stream = 0) noexcept
        : key_{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)},
          counter_{0, 0, static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)} {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        if (index_ == 4) {
            buffer_ = bijection(counter_, key_);
            increment();
            index_ = 0;
        }
        return buffer_[index_++];
    }

    void discard(unsigned long long n) noexcept {
        while (n > 0 && index_ != 4) {
            ++index_;
            --n;
        }
        std::uint64_t blocks = n / 4;
        auto low = (static_cast<std::uint64_t>(counter_[1]) << 32) | counter_[0];
        low += blocks;
        counter_[0] = static_cast<std::uint32_t>(low);
        counter_[1] = static_cast<std::uint32_t>(low >> 32);
        for (unsigned long long i = 0; i < n % 4; ++i) {
            (*this)();
        }
    }

    /// The raw keyed bijection on one counter block.
    static block_type bijection(block_type ctr, key_type key) noexcept {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += 0x9E3779B9U;
                key[1] += 0xBB67AE85U;
            }
            const std::uint64_t p0 = static_cast<std::uint64_t>(0xD2511F53U) * ctr[0];
            const std::uint64_t p1 = static_cast<std::uint64_t>(0xCD9E8D57U) * ctr[2];
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const auto lo0 = static_cast<std::uint32_t>(p0);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const auto lo1 = static_cast<std::uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        }
        return ctr;
    }

    friend bool operator==(const Philox4x32&, const Philox4x32&) = default;

  private:
    void increment() noexcept {
        if (++counter_[0] == 0) {
            ++counter_[1];
        }
    }

    key_type key_;
    block_type counter_;
    block_type buffer_{};
    int index_ = 4;
};

using Engine = Philox4x32;

/// Purpose tags keep independent random quantities of one trial on disjoint keys.
enum class Stream : std::uint64_t {
    scalar = 1,
    design = 2,
    noise = 3,
    signs = 4,
    directions = 5,
    probe = 6,
    reference = 7,
};

/// Engine for trial `index` of the experiment seeded by `master_seed`.
inline Engine make_engine(std::uint64_t master_seed, std::uint64_t index, Stream purpose = Stream::scalar,
                          std::uint64_t salt = 0) noexcept {
    const auto key = hash_combine(hash_combine(master_seed, static_cast<std::uint64_t>(purpose)), salt);
    return Engine(key, index);
}

/// Child seed for nested experiments (cell seeds from a grid seed, and so on).
constexpr std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t index) noexcept {
    return hash_combine(master_seed, index);
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Engine& engine) noexcept {
    const std::uint64_t hi = engine();
    const std::uint64_t lo = engine();
    const std::uint64_t bits = ((hi << 32) | lo) >> 11;
    return static_cast<double>(bits) * 0x1.0p-53;
}

inline double random_sign(Engine& engine) noexcept {
    return (engine() & 1U) ? 1.0 : -1.0;
}

/// Rademacher vector of length n for sign draw `draw` under `seed`. Shared by
/// every routine that needs "matched seeds" sign vectors.
inline std::vector<double> sign_vector(std::uint64_t seed, std::uint64_t draw, std::size_t n) {
    auto engine = make_engine(seed, draw, Stream::signs);
    std::vector<double> eps(n);
    std::uint32_t word = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (i % 32 == 0) {
            word = engine();
        }
        eps[i] = ((word >> (i % 32)) & 1U) ? 1.0 : -1.0;
    }
    return eps;
}

}  // namespace smallball
