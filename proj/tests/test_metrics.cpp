#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "calibseg/error.hpp"
#include "calibseg/metrics.hpp"
#include "calibseg/random.hpp"
#include "oracles.hpp"

#include <cmath>

using namespace calibseg;

namespace {

Field random_probs(Rng& rng, std::size_t h, std::size_t w, std::size_t k, double sharpness) {
    Field logits(h, w, k);
    for (double& v : logits.values()) {
        v = sharpness * rng.normal();
    }
    return softmax(logits);
}

LabelMap random_labels(Rng& rng, std::size_t h, std::size_t w, std::size_t k) {
    LabelMap m(h, w, k);
    for (std::size_t p = 0; p < m.size(); ++p) {
        m.set(p, static_cast<ClassId>(rng.index(k)));
    }
    return m;
}

LabelMap random_mask(Rng& rng, std::size_t h, std::size_t w, double density) {
    LabelMap m(h, w, 2);
    for (std::size_t p = 0; p < m.size(); ++p) {
        m.set(p, rng.bernoulli(density) ? 1 : 0);
    }
    return m;
}

}  // namespace

TEST_CASE("hand ECE with two bins") {
    const Field probs(1, 3, 3, std::vector<double>{0.6, 0.3, 0.1, 0.1, 0.8, 0.1, 0.4, 0.35, 0.25});
    const LabelMap gt(1, 3, 3, {0, 0, 0});
    CHECK(ece(probs, gt, 2, false) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("confident correct predictions have zero calibration error") {
    const LabelMap gt(2, 2, 3, {0, 1, 2, 1});
    const Field probs = one_hot(gt);
    CHECK(ece(probs, gt, 15, true) == 0.0);
    CHECK(cece(probs, gt, 15) == 0.0);
}

TEST_CASE("bin edges are right-closed") {
    CHECK(confidence_bin(0.0, 15) == 0);
    CHECK(confidence_bin(1.0, 15) == 14);
    for (std::size_t m : {2u, 3u, 7u, 10u, 15u}) {
        for (std::size_t i = 1; i <= m; ++i) {
            const double edge = static_cast<double>(i) / static_cast<double>(m);
            CHECK(confidence_bin(edge, m) == i - 1);
            CHECK(confidence_bin(edge, m) == oracle::bin_by_scan(edge, m));
            const double above = std::nextafter(edge, 2.0);
            if (i < m) {
                CHECK(confidence_bin(above, m) == i);
            }
        }
    }
}

TEST_CASE("hand CECE with two pixels") {
    // s1 = 0.7 (gt 1) and s1 = 0.2 (gt 0), M = 2.
    const Field probs(1, 2, 2, std::vector<double>{0.3, 0.7, 0.8, 0.2});
    const LabelMap gt(1, 2, 2, {1, 0});
    // class 0: 0.3 -> bin 0 (acc 0), 0.8 -> bin 1 (acc 1); class 1: 0.7 -> bin 1 (acc 1), 0.2 -> bin 0 (acc 0)
    const double expected = 0.5 * 0.3 + 0.5 * 0.2 + 0.5 * 0.3 + 0.5 * 0.2;
    CHECK(cece(probs, gt, 2) == doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("ECE and CECE match brute-force binning") {
    Rng rng(101);
    const Field probs = random_probs(rng, 100, 100, 4, 2.0);
    const LabelMap gt = random_labels(rng, 100, 100, 4);
    for (std::size_t m : {1u, 2u, 10u, 15u}) {
        CHECK(std::abs(ece(probs, gt, m, true) - oracle::ece(probs, gt, m, true)) < 1e-12);
        CHECK(std::abs(ece(probs, gt, m, false) - oracle::ece(probs, gt, m, false)) < 1e-12);
    }
    CHECK(std::abs(cece(probs, gt, 15) - oracle::cece(probs, gt, 15)) < 1e-12);
}

TEST_CASE("reliability bins are consistent with ECE") {
    Rng rng(5);
    const Field probs = random_probs(rng, 20, 20, 3, 1.5);
    const LabelMap gt = random_labels(rng, 20, 20, 3);
    const auto bins = reliability_bins(probs, gt, 10, true);
    REQUIRE(bins.size() == 10);
    std::size_t total = 0;
    double value = 0.0;
    for (const auto& b : bins) {
        total += b.count;
    }
    for (const auto& b : bins) {
        if (b.count == 0) {
            CHECK_FALSE(b.accuracy.has_value());
            CHECK_FALSE(b.confidence.has_value());
            continue;
        }
        value += static_cast<double>(b.count) / static_cast<double>(total) * std::abs(*b.accuracy - *b.confidence);
    }
    std::size_t included = 0;
    for (std::size_t p = 0; p < gt.size(); ++p) {
        included += gt[p] != 0 || argmax(probs.pixel(p)) != 0;
    }
    CHECK(total == included);
    CHECK(value == doctest::Approx(ece(probs, gt, 10, true)).epsilon(1e-13));
    CHECK(bins[3].lower == doctest::Approx(0.3));
    CHECK(bins[3].upper == doctest::Approx(0.4));
}

TEST_CASE("no included pixels is an undefined metric") {
    const LabelMap gt(2, 2, 2);
    const Field probs = one_hot(gt);
    CHECK_THROWS_AS(ece(probs, gt, 15, true), UndefinedMetric);
    CHECK_THROWS_AS(ece(probs, gt, 0, false), InvalidInput);
}

TEST_CASE("ECE is invariant under a joint class permutation") {
    Rng rng(77);
    const Field probs = random_probs(rng, 10, 10, 3, 2.0);
    const LabelMap gt = random_labels(rng, 10, 10, 3);
    const std::vector<ClassId> perm{2, 0, 1};
    Field pp(10, 10, 3);
    LabelMap pg(10, 10, 3);
    for (std::size_t p = 0; p < gt.size(); ++p) {
        pg.set(p, perm[gt[p]]);
        for (std::size_t k = 0; k < 3; ++k) {
            pp.pixel(p)[perm[k]] = probs.pixel(p)[k];
        }
    }
    CHECK(ece(probs, gt, 15, false) == doctest::Approx(ece(pp, pg, 15, false)).epsilon(1e-13));
    CHECK(cece(probs, gt, 15) == doctest::Approx(cece(pp, pg, 15)).epsilon(1e-13));
}

TEST_CASE("dice") {
    const LabelMap a(2, 3, 2, {1, 1, 1, 1, 0, 0});
    const LabelMap b(2, 3, 2, {1, 1, 0, 0, 0, 0});
    CHECK(dice(a, a, 1) == 1.0);
    CHECK(dice(a, b, 1) == doctest::Approx(2.0 * 2.0 / 6.0));
    CHECK(dice(a, b, 1) == dice(b, a, 1));
    const LabelMap c(2, 3, 2, {0, 0, 0, 0, 1, 1});
    CHECK(dice(a, c, 1) == 0.0);
    const LabelMap empty(2, 3, 2);
    CHECK(dice(empty, empty, 1) == 1.0);
}

TEST_CASE("hd95 basic cases") {
    LabelMap a(1, 8, 2);
    LabelMap b(1, 8, 2);
    a.set(0, 1, 1);
    b.set(0, 6, 1);
    CHECK(hd95(a, b, 1) == 5.0);
    CHECK(hd95(a, a, 1) == 0.0);
    const LabelMap empty(1, 8, 2);
    CHECK_FALSE(hd95(a, empty, 1).has_value());
    CHECK_FALSE(hd95(empty, a, 1).has_value());
    CHECK(hd95(empty, empty, 1) == 0.0);
}

TEST_CASE("hd95 matches the all-pairs oracle") {
    Rng rng(2024);
    for (int t = 0; t < 200; ++t) {
        const std::size_t h = 1 + rng.index(16);
        const std::size_t w = 1 + rng.index(16);
        const double density = rng.uniform(0.05, 0.6);
        const LabelMap a = random_mask(rng, h, w, density);
        const LabelMap b = random_mask(rng, h, w, density);
        const auto got = hd95(a, b, 1);
        const auto want = oracle::hd95(a, b, 1);
        REQUIRE(got.has_value() == want.has_value());
        if (got) {
            CHECK(std::abs(*got - *want) < 1e-9);
            CHECK(*got == doctest::Approx(*hd95(b, a, 1)));
        }
    }
}

TEST_CASE("percentile interpolates between order statistics") {
    CHECK(percentile({3.0, 1.0, 2.0, 4.0}, 0.5) == 2.5);
    CHECK(percentile({5.0}, 0.95) == 5.0);
    CHECK(percentile({0.0, 10.0}, 0.95) == doctest::Approx(9.5));
    CHECK_THROWS_AS(percentile({}, 0.5), InvalidInput);
}

TEST_CASE("case metrics cover the foreground classes") {
    const LabelMap gt(2, 4, 3, {0, 1, 1, 0, 0, 1, 1, 0});
    const Field probs = one_hot(gt);
    const CaseMetrics m = evaluate_case(probs, gt);
    REQUIRE(m.dsc.size() == 2);
    CHECK(m.dsc[0] == 1.0);
    CHECK(m.dsc[1] == 1.0);
    CHECK(m.hd95[0] == 0.0);
    CHECK(m.hd95[1] == 0.0);
    CHECK(m.mean_dsc == 1.0);
    CHECK(m.mean_hd95 == 0.0);
    CHECK(m.ece == 0.0);
    CHECK(m.cece == 0.0);

    LabelMap pred_gt(2, 4, 3, {0, 1, 1, 0, 0, 1, 1, 2});
    const CaseMetrics n = evaluate_case(probs, pred_gt);
    CHECK(n.dsc[1] == 0.0);
    CHECK_FALSE(n.hd95[1].has_value());
    CHECK(n.mean_hd95 == 0.0);
}
