// Masked-reconstruction corruption: exact counts, determinism keyed on
// (seed, epoch, sequence), and statistical uniformity of position selection.
#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "xda/masking.hpp"

using namespace xda;

namespace {
TokenSeq make_seq(uint32_t n, uint32_t seq_len, uint64_t seed = 1) {
    Rng r(seed);
    std::vector<uint8_t> bytes(n);
    for (auto& b : bytes) b = static_cast<uint8_t>(r.below(256));
    return encode(bytes, seq_len);
}
} // namespace

TEST_CASE("corruption counts follow the floor rules exactly", "[masking]") {
    MaskConfig cfg; // rate 0.20, mask fraction 0.50
    struct Case { uint32_t n, m, n_mask; };
    // m = floor(0.2 n); mask-token count = floor(m/2).
    for (Case c : {Case{512, 102, 51}, Case{100, 20, 10}, Case{17, 3, 1},
                   Case{5, 1, 0}, Case{511, 102, 51}}) {
        TokenSeq s = make_seq(c.n, 512);
        MaskedSequence ms = make_masked(s, cfg, 9, 0, 0);
        REQUIRE(ms.positions.size() == c.m);
        uint32_t mask_tok = 0;
        for (uint32_t p : ms.positions)
            if (ms.input.ids[p] == tok::MASK) ++mask_tok;
        CHECK(mask_tok == c.n_mask);
    }
}

TEST_CASE("corrupted positions are distinct, ascending, in-range", "[masking]") {
    TokenSeq s = make_seq(300, 512);
    MaskedSequence ms = make_masked(s, MaskConfig{}, 4, 2, 7);
    std::set<uint32_t> seen;
    uint32_t prev = 0;
    bool first = true;
    for (uint32_t p : ms.positions) {
        REQUIRE(p < s.n_real); // never a pad position
        CHECK(seen.insert(p).second);
        if (!first) CHECK(p > prev);
        prev = p;
        first = false;
    }
}

TEST_CASE("targets are originals; untouched positions stay put", "[masking]") {
    TokenSeq s = make_seq(200, 256);
    MaskedSequence ms = make_masked(s, MaskConfig{}, 11, 0, 3);
    std::set<uint32_t> corrupted(ms.positions.begin(), ms.positions.end());
    for (size_t i = 0; i < ms.positions.size(); ++i) {
        CHECK(ms.targets[i] == s.ids[ms.positions[i]]);
        const uint16_t rep = ms.input.ids[ms.positions[i]];
        CHECK((rep == tok::MASK || rep < 256)); // mask token or a random byte
    }
    for (uint32_t i = 0; i < s.ids.size(); ++i)
        if (!corrupted.count(i)) CHECK(ms.input.ids[i] == s.ids[i]);
}

TEST_CASE("corruption is a pure function of seed, epoch, sequence id", "[masking]") {
    TokenSeq s = make_seq(128, 256);
    MaskConfig cfg;
    MaskedSequence a = make_masked(s, cfg, 5, 3, 9);
    MaskedSequence b = make_masked(s, cfg, 5, 3, 9);
    CHECK(a.input.ids == b.input.ids);
    CHECK(a.positions == b.positions);
    CHECK(a.targets == b.targets);

    // Each key coordinate independently re-rolls the corruption.
    CHECK(make_masked(s, cfg, 6, 3, 9).input.ids != a.input.ids);
    CHECK(make_masked(s, cfg, 5, 4, 9).input.ids != a.input.ids);
    CHECK(make_masked(s, cfg, 5, 3, 10).input.ids != a.input.ids);
}

TEST_CASE("zero-position sequences: pass-through or error on demand", "[masking]") {
    TokenSeq tiny = make_seq(4, 16); // floor(0.2*4) = 0
    MaskedSequence ms = make_masked(tiny, MaskConfig{}, 1, 0, 0);
    CHECK(ms.positions.empty());
    CHECK(ms.input.ids == tiny.ids);
    CHECK_THROWS_AS(make_masked(tiny, MaskConfig{}, 1, 0, 0, true), EmptyMaskSet);
}

TEST_CASE("every position is selected at roughly the corruption rate", "[masking]") {
    // 2000 independent draws on n=100 at rate 0.2: each position should be
    // chosen ~400 times; binomial 3-sigma is ~±54, we allow ±60.
    const uint32_t n = 100;
    TokenSeq s = make_seq(n, 128);
    std::vector<uint32_t> hits(n, 0);
    const int trials = 2000;
    for (int t = 0; t < trials; ++t) {
        MaskedSequence ms = make_masked(s, MaskConfig{}, 77, 0, static_cast<uint64_t>(t));
        for (uint32_t p : ms.positions) ++hits[p];
    }
    for (uint32_t i = 0; i < n; ++i) {
        CHECK(hits[i] > 400 - 60);
        CHECK(hits[i] < 400 + 60);
    }
}

TEST_CASE("random replacement bytes cover the byte range", "[masking]") {
    TokenSeq s = make_seq(500, 512, 2);
    std::set<uint16_t> reps;
    for (uint64_t t = 0; t < 40; ++t) {
        MaskedSequence ms = make_masked(s, MaskConfig{}, 3, t, 0);
        for (uint32_t p : ms.positions) {
            const uint16_t r = ms.input.ids[p];
            if (r != tok::MASK) reps.insert(r);
        }
    }
    CHECK(reps.size() > 200); // 2000 uniform draws hit most of 256 values
    CHECK(*reps.rbegin() < 256);
}
