#include "needleforge/rng.hpp"

#include <doctest.h>

#include <array>
#include <cstdint>
#include <vector>

using namespace needleforge;

TEST_CASE("splitmix64 matches the reference sequence") {
    // Reference values for seed 1234567 from the published splitmix64 code.
    std::uint64_t state = 1234567;
    CHECK(splitmix64(state) == 6457827717110365317ULL);
    CHECK(splitmix64(state) == 3203168211198807973ULL);
    CHECK(splitmix64(state) == 9817491932198370423ULL);
}

TEST_CASE("xoshiro256** matches the reference implementation") {
    // Oracle: the reference xoshiro256** next() run by hand on the state
    // produced by splitmix64-seeding with 42.
    std::uint64_t sm = 42;
    std::array<std::uint64_t, 4> s;
    for (auto& word : s) word = splitmix64(sm);

    auto rotl = [](std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); };
    auto reference_next = [&]() {
        const std::uint64_t result = rotl(s[1] * 5, 7) * 9;
        const std::uint64_t t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = rotl(s[3], 45);
        return result;
    };

    Rng rng(42);
    for (int i = 0; i < 64; ++i) CHECK(rng.next_u64() == reference_next());
}

TEST_CASE("identical seeds give identical streams, different seeds differ") {
    Rng a(7), b(7), c(8);
    bool all_equal = true, any_diff = false;
    for (int i = 0; i < 32; ++i) {
        const auto va = a.next_u64();
        all_equal = all_equal && va == b.next_u64();
        any_diff = any_diff || va != c.next_u64();
    }
    CHECK(all_equal);
    CHECK(any_diff);
}

TEST_CASE("uniform01 stays in [0, 1) and fills the range") {
    Rng rng(3);
    double lo = 1.0, hi = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform01();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        lo = std::min(lo, u);
        hi = std::max(hi, u);
    }
    CHECK(lo < 0.01);
    CHECK(hi > 0.99);
}

TEST_CASE("uniform(lo, hi) respects the bounds") {
    Rng rng(11);
    for (int i = 0; i < 1000; ++i) {
        const double u = rng.uniform(-2.5, 4.0);
        CHECK(u >= -2.5);
        CHECK(u < 4.0);
    }
}

TEST_CASE("below(n) is in range and covers all residues") {
    Rng rng(17);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 7000; ++i) {
        const auto v = rng.below(7);
        REQUIRE(v < 7);
        ++counts[static_cast<std::size_t>(v)];
    }
    for (const int c : counts) CHECK(c > 700);  // ~1000 expected per bucket
}

TEST_CASE("below(1) always yields zero") {
    Rng rng(5);
    for (int i = 0; i < 100; ++i) CHECK(rng.below(1) == 0);
}

TEST_CASE("fnv1a matches known vectors") {
    // Standard FNV-1a 64-bit test vectors.
    CHECK(fnv1a("", 0xcbf29ce484222325ULL) == 0xcbf29ce484222325ULL);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("fnv1a chains incrementally") {
    const std::uint64_t whole = fnv1a("needle-forge");
    const std::uint64_t chained = fnv1a("-forge", fnv1a("needle"));
    CHECK(whole == chained);
}

TEST_CASE("derive_seed separates child streams and is order independent") {
    const std::uint64_t master = 42;
    const auto s0 = derive_seed(master, 0);
    const auto s1 = derive_seed(master, 1);
    const auto s2 = derive_seed(master, 2);
    CHECK(s0 != s1);
    CHECK(s1 != s2);
    CHECK(derive_seed(master, 1) == s1);  // pure function of (master, child)
    CHECK(derive_seed(43, 1) != s1);
}
