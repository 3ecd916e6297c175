// Helpers, RNG, metrics and losses — each checked against either a known
// constant, a hand-computed value, or an independently coded oracle.
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "xda/labels.hpp"
#include "xda/loss.hpp"
#include "xda/metrics.hpp"
#include "xda/rng.hpp"
#include "xda/tensor.hpp"
#include "xda/util.hpp"

using namespace xda;

TEST_CASE("hex rendering and parsing round-trip", "[util]") {
    CHECK(hex_byte(0x00) == "00");
    CHECK(hex_byte(0xab) == "ab");
    std::vector<uint8_t> v{0x48, 0x83, 0xec};
    CHECK(hex_tuple(v) == "48 83 ec");
    CHECK(parse_hex_bytes("48 83 ec") == v);
    CHECK(parse_hex_bytes("4883EC") == v);
    CHECK_THROWS_AS(parse_hex_bytes("4 883ec"), BadConfig); // dangling nibble
    CHECK_THROWS_AS(parse_hex_bytes("48x"), BadConfig);
    CHECK_THROWS_AS(parse_hex_bytes("483"), BadConfig); // odd digit count
}

TEST_CASE("tsv splitting keeps empty fields and strips CR", "[util]") {
    auto f = split_tabs("a\t\tb");
    REQUIRE(f.size() == 3);
    CHECK(f[1].empty());
    auto lines = split_lines("one\r\ntwo\n\nthree");
    REQUIRE(lines.size() == 4);
    CHECK(lines[0] == "one");
    CHECK(lines[2].empty());
    CHECK(lines[3] == "three");
}

TEST_CASE("integer parsing is strict", "[util]") {
    CHECK(parse_u64("18446744073709551615", "x") == UINT64_MAX);
    CHECK_THROWS_AS(parse_u64("12a", "x"), BadConfig);
    CHECK_THROWS_AS(parse_u64("", "x"), BadConfig);
    CHECK_THROWS_AS(parse_u64("-1", "x"), BadConfig);
    CHECK(parse_f64("0.25", "x") == 0.25);
    CHECK_THROWS_AS(parse_f64("0.25junk", "x"), BadConfig);
}

TEST_CASE("fnv1a matches the published test vectors", "[util]") {
    CHECK(fnv1a("", 0) == 0xcbf29ce484222325ull);
    CHECK(fnv1a("a", 1) == 0xaf63dc4c8601ec8cull);
    CHECK(fnv1a("foobar", 6) == 0x85944171f73967e8ull);
}

TEST_CASE("rng streams are deterministic and coordinate-separated", "[util][rng]") {
    Rng a = Rng::derive(7, Stream::mask_select, 3, 11);
    Rng b = Rng::derive(7, Stream::mask_select, 3, 11);
    for (int i = 0; i < 64; ++i) REQUIRE(a.next_u64() == b.next_u64());

    // Any single coordinate change yields a different stream.
    const uint64_t base = Rng::derive(7, Stream::mask_select, 3, 11).next_u64();
    CHECK(Rng::derive(8, Stream::mask_select, 3, 11).next_u64() != base);
    CHECK(Rng::derive(7, Stream::mask_group, 3, 11).next_u64() != base);
    CHECK(Rng::derive(7, Stream::mask_select, 4, 11).next_u64() != base);
    CHECK(Rng::derive(7, Stream::mask_select, 3, 12).next_u64() != base);
}

TEST_CASE("rng below() honors bounds and shuffle permutes", "[util][rng]") {
    Rng r(123);
    std::set<uint64_t> seen;
    for (int i = 0; i < 3000; ++i) {
        uint64_t v = r.below(7);
        REQUIRE(v < 7);
        seen.insert(v);
    }
    CHECK(seen.size() == 7); // all residues reachable

    std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    auto orig = v;
    r.shuffle(v);
    auto sorted = v;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == orig); // same multiset
}

TEST_CASE("rng normal() has unit moments", "[util][rng]") {
    Rng r(5);
    double sum = 0, sum2 = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        double x = r.normal();
        sum += x;
        sum2 += x * x;
    }
    CHECK(std::abs(sum / n) < 0.03);
    CHECK(std::abs(sum2 / n - 1.0) < 0.05);
}

TEST_CASE("byte-level prf1 counts a hand-worked confusion", "[util][metrics]") {
    // gold:  S N E S N   pred: S S E N N   (positives {S=0, E=1})
    std::vector<uint8_t> gold{0, 2, 1, 0, 2};
    std::vector<uint8_t> pred{0, 0, 1, 2, 2};
    Prf1 p = prf1_bytes(pred, gold, {0, 1});
    CHECK(p.tp == 2); // positions 0 and 2
    CHECK(p.fp == 1); // position 1 predicted S over gold N
    CHECK(p.fn == 1); // position 3 missed S
    CHECK(p.precision() == Catch::Approx(2.0 / 3.0));
    CHECK(p.recall() == Catch::Approx(2.0 / 3.0));

    // IGNORE-labeled gold positions contribute nothing.
    gold[1] = cls::IGNORE;
    Prf1 q = prf1_bytes(pred, gold, {0, 1});
    CHECK(q.fp == 0);
    CHECK_THROWS_AS(prf1_bytes({0}, gold, {0}), LengthMismatch);
}

TEST_CASE("span prf1 counts exact matches only", "[util][metrics]") {
    std::vector<std::pair<uint32_t, uint32_t>> gold{{0, 4}, {6, 9}};
    std::vector<std::pair<uint32_t, uint32_t>> pred{{0, 4}, {6, 8}, {10, 12}};
    Prf1 p = prf1_spans(pred, gold);
    CHECK(p.tp == 1);
    CHECK(p.fp == 2);
    CHECK(p.fn == 1);
}

// Independent AUC oracle: Mann-Whitney pairwise probability with half credit
// for ties, quadratic over all positive/negative pairs.
static double mann_whitney_auc(const std::vector<double>& s, const std::vector<uint8_t>& y) {
    double wins = 0;
    uint64_t pairs = 0;
    for (size_t i = 0; i < s.size(); ++i)
        for (size_t j = 0; j < s.size(); ++j) {
            if (!(y[i] == 1 && y[j] == 0)) continue;
            ++pairs;
            if (s[i] > s[j]) wins += 1.0;
            else if (s[i] == s[j]) wins += 0.5;
        }
    return wins / static_cast<double>(pairs);
}

TEST_CASE("roc auc equals the pairwise oracle, ties included", "[util][metrics]") {
    Rng r(42);
    for (int trial = 0; trial < 25; ++trial) {
        const size_t n = 5 + r.below(40);
        std::vector<double> s(n);
        std::vector<uint8_t> y(n);
        bool pos = false, neg = false;
        for (size_t i = 0; i < n; ++i) {
            s[i] = static_cast<double>(r.below(8)) / 7.0; // coarse grid forces ties
            y[i] = static_cast<uint8_t>(r.bernoulli(0.4));
            (y[i] ? pos : neg) = true;
        }
        if (!pos || !neg) { --trial; continue; }
        CHECK(roc_curve(s, y).auc == Catch::Approx(mann_whitney_auc(s, y)).margin(1e-12));
    }
    CHECK_THROWS_AS(roc_curve({1.0, 0.5}, {1, 1}), DegenerateGold);
    CHECK_THROWS_AS(roc_curve({1.0}, {1, 0}), LengthMismatch);
}

TEST_CASE("roc endpoints and threshold sweep", "[util][metrics]") {
    RocCurve c = roc_curve({0.9, 0.8, 0.7, 0.6}, {1, 1, 0, 0});
    CHECK(c.auc == Catch::Approx(1.0));
    CHECK(c.points.front().fpr == 0.0);
    CHECK(c.points.back().tpr == 1.0);
    CHECK(c.points.back().fpr == 1.0);
}

TEST_CASE("cross entropy hits closed forms", "[util][loss]") {
    // Uniform logits over C classes cost exactly ln C.
    Mat<double> z = Mat<double>::Zero(1, 256);
    CHECK(cross_entropy<double>(z, {17}) == Catch::Approx(std::log(256.0)).margin(1e-12));
    Mat<double> z3 = Mat<double>::Zero(2, 3);
    CHECK(cross_entropy<double>(z3, {0, 2}) == Catch::Approx(std::log(3.0)).margin(1e-12));

    CHECK_THROWS_AS(cross_entropy<double>(z3, {0}), LengthMismatch);
    CHECK_THROWS_AS(cross_entropy<double>(z3, {0, 9}), LengthMismatch);
    Mat<double> empty(0, 3);
    CHECK_THROWS_AS(cross_entropy<double>(empty, {}), AllIgnored);
}

TEST_CASE("cross entropy gradient matches finite differences", "[util][loss]") {
    Rng r(9);
    Mat<double> z(3, 5);
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = r.normal();
    std::vector<uint16_t> t{4, 0, 2};
    Mat<double> dz;
    cross_entropy(z, t, &dz);
    const double h = 1e-6;
    for (Eigen::Index k = 0; k < z.size(); ++k) {
        Mat<double> zp = z, zm = z;
        zp.data()[k] += h;
        zm.data()[k] -= h;
        const double fd = (cross_entropy(zp, t) - cross_entropy(zm, t)) / (2 * h);
        REQUIRE(dz.data()[k] == Catch::Approx(fd).margin(1e-8));
    }
}

TEST_CASE("perplexity accumulator closed forms", "[util][loss]") {
    PplAccumulator perfect;
    for (int i = 0; i < 10; ++i) perfect.add(1.0);
    CHECK(perfect.value() == Catch::Approx(1.0).margin(1e-9));

    PplAccumulator uniform;
    for (int i = 0; i < 257; ++i) uniform.add(1.0 / 256.0);
    CHECK(uniform.value() == Catch::Approx(256.0).margin(1e-9));

    PplAccumulator mixed; // 2^{-(log2(1/2)+log2(1/8))/2} = 2^2 = 4
    mixed.add(0.5);
    mixed.add(0.125);
    CHECK(mixed.value() == Catch::Approx(4.0).margin(1e-12));

    PplAccumulator clamped;
    clamped.add(0.0);
    CHECK(clamped.clamped() == 1);
    PplAccumulator empty;
    CHECK_THROWS_AS(empty.value(), AllIgnored);
}

TEST_CASE("softmax rows normalize; masked variant zeroes padding", "[util][loss]") {
    Mat<double> z(2, 4);
    z << 1, 2, 3, 4, -1, 0, 1, 2;
    Mat<double> p = softmax_rows(z);
    for (Eigen::Index i = 0; i < 2; ++i)
        CHECK(p.row(i).sum() == Catch::Approx(1.0).margin(1e-12));

    Mat<double> s(4, 4);
    s.setConstant(0.3);
    softmax_rows_masked(s, 2, 3); // 2 real queries, 3 real keys
    CHECK(s.row(0).sum() == Catch::Approx(1.0).margin(1e-12));
    CHECK(s(0, 3) == 0.0);            // pad key
    CHECK(s.row(2).sum() == 0.0);     // pad query row all-zero
    CHECK(s.row(3).sum() == 0.0);
}

TEST_CASE("gelu matches the normal cdf form and its derivative", "[util]") {
    CHECK(gelu_scalar(0.0) == 0.0);
    // x * Phi(x) at x=1: Phi(1) = 0.8413447460685429
    CHECK(gelu_scalar(1.0) == Catch::Approx(0.8413447460685429).margin(1e-12));
    const double h = 1e-6;
    for (double x : {-2.0, -0.5, 0.0, 0.3, 1.7}) {
        const double fd = (gelu_scalar(x + h) - gelu_scalar(x - h)) / (2 * h);
        CHECK(gelu_grad_scalar(x) == Catch::Approx(fd).margin(1e-8));
    }
}

TEST_CASE("layernorm normalizes and its backward matches finite differences", "[util]") {
    Rng r(3);
    const Eigen::Index n = 3, d = 8;
    Mat<double> x(n, d);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = r.normal() * 2 + 0.5;
    Vec<double> g = Vec<double>::Ones(d), b = Vec<double>::Zero(d);
    LayerNormCache<double> cache;
    Mat<double> y = layernorm(x, g, b, 1e-5, &cache);
    for (Eigen::Index i = 0; i < n; ++i) {
        CHECK(y.row(i).mean() == Catch::Approx(0.0).margin(1e-10));
        CHECK(y.row(i).squaredNorm() / d == Catch::Approx(1.0).epsilon(1e-3));
    }

    // Scalar objective sum(y * w) for a fixed random w; check dx.
    Mat<double> w(n, d);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = r.normal();
    Vec<double> dgain = Vec<double>::Zero(d), dbias = Vec<double>::Zero(d);
    Mat<double> dx = layernorm_backward(w, cache, g, dgain, dbias);
    const double h = 1e-6;
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        Mat<double> xp = x, xm = x;
        xp.data()[k] += h;
        xm.data()[k] -= h;
        const double fp = (layernorm<double>(xp, g, b, 1e-5, nullptr).array() * w.array()).sum();
        const double fm = (layernorm<double>(xm, g, b, 1e-5, nullptr).array() * w.array()).sum();
        REQUIRE(dx.data()[k] == Catch::Approx((fp - fm) / (2 * h)).margin(1e-6));
    }
}
