#include <catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <tuple>
#include <vector>

#include <rmlmc/random.hpp>

using namespace rmlmc;

TEST_CASE("philox known answers") {
    using C = Philox4x32::counter_type;
    using K = Philox4x32::key_type;
    CHECK(Philox4x32::block(C{0, 0, 0, 0}, K{0, 0}) == C{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
    CHECK(Philox4x32::block(C{0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, K{0xffffffffu, 0xffffffffu}) ==
          C{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
    CHECK(Philox4x32::block(C{0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, K{0xa4093822u, 0x299f31d0u}) ==
          C{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("streams are pure functions of their key") {
    StreamKey k{99, 3, 123456789012ull, 17};
    NormalStream a(k), b(k);
    for (int i = 0; i < 50; ++i) CHECK(a.normal() == b.normal());
    NormalStream c(StreamKey{99, 3, 123456789012ull, 18});
    NormalStream d(k);
    CHECK(c.normal() != d.normal());
}

TEST_CASE("distinct key fields give distinct first blocks") {
    std::set<std::array<std::uint32_t, 4>> seen;
    int n = 0;
    for (std::uint64_t seed : {0ull, 1ull, 0xdeadbeefull})
        for (std::uint32_t level : {1u, 2u, 64u})
            for (std::uint64_t outer : {0ull, 1ull, (1ull << 32), (1ull << 40) + 5})
                for (std::uint32_t inner : {0u, 1u, kOuterSlot}) {
                    NormalStream s({seed, level, outer, inner});
                    seen.insert(s.next_block());
                    ++n;
                }
    CHECK(seen.size() == std::size_t(n));
}

TEST_CASE("uniforms lie strictly inside (0,1)") {
    CHECK(NormalStream::to_unit(0, 0) > 0.0);
    CHECK(NormalStream::to_unit(0xffffffffu, 0xffffffffu) < 1.0);
}

TEST_CASE("normal draws have unit moments") {
    const int n = 400000;
    double s = 0, s2 = 0, s4 = 0;
    for (int j = 0; j < n / 8; ++j) {
        NormalStream st({7, 1, std::uint64_t(j), 0});
        for (int i = 0; i < 8; ++i) {
            const double z = st.normal();
            s += z;
            s2 += z * z;
            s4 += z * z * z * z;
        }
    }
    CHECK(std::fabs(s / n) < 4.0 / std::sqrt(n));
    CHECK(std::fabs(s2 / n - 1.0) < 4.0 * std::sqrt(2.0 / n));
    CHECK(std::fabs(s4 / n - 3.0) < 4.0 * std::sqrt(96.0 / n));
}

TEST_CASE("replication seeds differ across replications") {
    const auto base = cell_seed(1234, 2, 5);
    std::set<std::uint64_t> seeds;
    for (std::uint64_t i = 0; i < 1000; ++i) seeds.insert(replication_seed(base, i));
    CHECK(seeds.size() == 1000);
}
