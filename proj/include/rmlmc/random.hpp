#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace rmlmc {

// Philox4x32-10 block cipher. Stateless: output depends only on (counter, key).
struct Philox4x32 {
    using counter_type = std::array<std::uint32_t, 4>;
    using key_type = std::array<std::uint32_t, 2>;

    static counter_type block(counter_type c, key_type k) noexcept {
        constexpr std::uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
        constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = std::uint64_t(M0) * c[0];
            const std::uint64_t p1 = std::uint64_t(M1) * c[2];
            const auto hi0 = std::uint32_t(p0 >> 32), lo0 = std::uint32_t(p0);
            const auto hi1 = std::uint32_t(p1 >> 32), lo1 = std::uint32_t(p1);
            c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
            k[0] += W0;
            k[1] += W1;
        }
        return c;
    }
};

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Identifies one independent stream. Outer index is limited to 56 bits, level to 8.
struct StreamKey {
    std::uint64_t seed = 0;
    std::uint32_t level = 0;
    std::uint64_t outer = 0;
    std::uint32_t inner = 0;

    friend bool operator==(const StreamKey&, const StreamKey&) = default;
};

// Reserved inner slot used to draw the outer sample itself.
inline constexpr std::uint32_t kOuterSlot = 0xFFFFFFFFu;

inline constexpr std::uint64_t kMaxOuterIndex = (std::uint64_t(1) << 56) - 1;

// Sequential view of a keyed Philox stream. Cheap to construct, holds no shared state.
class NormalStream {
public:
    explicit NormalStream(const StreamKey& key) noexcept
        : key_{std::uint32_t(key.seed), std::uint32_t(key.seed >> 32)},
          ctr_{0u, key.inner, std::uint32_t(key.outer),
               (std::uint32_t(key.level & 0xFFu) << 24) | std::uint32_t((key.outer >> 32) & 0xFFFFFFu)} {}

    std::array<std::uint32_t, 4> next_block() noexcept {
        auto out = Philox4x32::block(ctr_, key_);
        ++ctr_[0];
        return out;
    }

    // Uniform on the open interval (0, 1) with 52 random bits.
    double uniform() noexcept {
        if (ubuf_n_ == 0) refill_uniforms();
        return ubuf_[--ubuf_n_];
    }

    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        auto b = next_block();
        const double u1 = to_unit(b[0], b[1]);
        const double u2 = to_unit(b[2], b[3]);
        const double rad = std::sqrt(-2.0 * std::log(u1));
        const double th = 2.0 * std::numbers::pi * u2;
        spare_ = rad * std::sin(th);
        has_spare_ = true;
        return rad * std::cos(th);
    }

    static double to_unit(std::uint32_t hi, std::uint32_t lo) noexcept {
        // 52-bit midpoints: 53 bits would round the top value up to 1
        const std::uint64_t bits = ((std::uint64_t(hi) << 32) | lo) >> 12;
        return (double(bits) + 0.5) * 0x1.0p-52;
    }

private:
    void refill_uniforms() noexcept {
        auto b = next_block();
        ubuf_[1] = to_unit(b[0], b[1]);
        ubuf_[0] = to_unit(b[2], b[3]);
        ubuf_n_ = 2;
    }

    Philox4x32::key_type key_;
    Philox4x32::counter_type ctr_;
    double spare_ = 0.0;
    bool has_spare_ = false;
    std::array<double, 2> ubuf_{};
    int ubuf_n_ = 0;
};

// Seed of replication i: distinct replications always get distinct seeds.
inline std::uint64_t replication_seed(std::uint64_t base, std::uint64_t replication) noexcept {
    return base ^ replication;
}

// Decorrelates the base seed of an experiment cell (estimator, grid point).
inline std::uint64_t cell_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) noexcept {
    return splitmix64(seed ^ splitmix64((a << 32) ^ b ^ 0xA5A5A5A5ull));
}

} // namespace rmlmc
