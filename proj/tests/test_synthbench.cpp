#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "calibseg/error.hpp"
#include "calibseg/priors.hpp"
#include "calibseg/synthbench.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <cmath>

using namespace calibseg;

namespace {

BenchConfig small_config(std::uint64_t seed = 1) {
    BenchConfig c;
    c.height = 16;
    c.width = 16;
    c.seed = seed;
    return c;
}

TrainConfig train_config(LossConfig loss, std::size_t steps, double lr) {
    TrainConfig t;
    t.loss = std::move(loss);
    t.steps = steps;
    t.learning_rate = lr;
    return t;
}

LossConfig nacl(double lambda) {
    NaclParams p;
    p.lambda = lambda;
    return {p, Reduction::Mean};
}

}  // namespace

TEST_CASE("generation is a function of the config") {
    const auto a = generate_dataset(small_config(3), 4);
    const auto b = generate_dataset(small_config(3), 4);
    const auto c = generate_dataset(small_config(4), 4);
    REQUIRE(a.size() == 4);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].image == b[i].image);
        CHECK(a[i].labels == b[i].labels);
        CHECK(a[i].posterior == b[i].posterior);
    }
    CHECK_FALSE(a[0].image == c[0].image);
}

TEST_CASE("generated cases are well formed") {
    BenchConfig cfg = small_config();
    cfg.num_classes = 3;
    cfg.means = {0.0, 1.0, 2.0};
    for (const auto& c : generate_dataset(cfg, 5)) {
        CHECK(c.image.channels() == 1);
        CHECK(c.labels.num_classes() == 3);
        CHECK(c.labels == c.clean);
        CHECK(on_simplex(c.posterior, 1e-12));
        CHECK(std::any_of(c.clean.values().begin(), c.clean.values().end(), [](ClassId v) { return v != 0; }));
    }
}

TEST_CASE("label noise only moves boundary pixels to a neighbouring class") {
    BenchConfig cfg = small_config(9);
    cfg.num_classes = 3;
    cfg.means = {0.0, 1.0, 2.0};
    cfg.label_noise = 0.4;
    std::size_t changed = 0;
    for (const auto& c : generate_dataset(cfg, 6)) {
        const std::size_t h = c.clean.height();
        const std::size_t w = c.clean.width();
        for (std::size_t r = 0; r < h; ++r) {
            for (std::size_t col = 0; col < w; ++col) {
                if (c.labels(r, col) == c.clean(r, col)) {
                    continue;
                }
                ++changed;
                bool neighbour = false;
                const long dr[] = {-1, 1, 0, 0};
                const long dc[] = {0, 0, -1, 1};
                for (int d = 0; d < 4; ++d) {
                    const long rr = static_cast<long>(r) + dr[d];
                    const long cc = static_cast<long>(col) + dc[d];
                    if (rr >= 0 && cc >= 0 && rr < static_cast<long>(h) && cc < static_cast<long>(w)) {
                        neighbour = neighbour || c.clean(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc)) ==
                                                     c.labels(r, col);
                    }
                }
                CHECK(neighbour);
            }
        }
    }
    CHECK(changed > 0);
}

TEST_CASE("benchmark config validation") {
    BenchConfig cfg;
    cfg.means = {0.0};
    CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
    cfg.means = {1.0, 1.0};
    CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
    cfg = BenchConfig{};
    cfg.noise_std = 0.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
    cfg = BenchConfig{};
    cfg.label_noise = 0.5;
    CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
    TrainConfig t;
    t.steps = 0;
    CHECK_THROWS_AS(t.validate(), InvalidConfig);
}

TEST_CASE("pixel features are intensity and its replicate-padded 3x3 mean") {
    const auto data = generate_dataset(small_config(), 1);
    const Field& img = data[0].image;
    const Field f = pixel_features(img);
    REQUIRE(f.channels() == kPixelFeatures);
    const std::size_t w = img.width();
    for (std::size_t r = 0; r < img.height(); ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            double total = 0.0;
            for (int dr = -1; dr <= 1; ++dr) {
                for (int dc = -1; dc <= 1; ++dc) {
                    const long rr = std::clamp<long>(static_cast<long>(r) + dr, 0, static_cast<long>(img.height()) - 1);
                    const long cc = std::clamp<long>(static_cast<long>(c) + dc, 0, static_cast<long>(w) - 1);
                    total += img(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc), 0);
                }
            }
            CHECK(f(r, c, 0) == img(r, c, 0));
            CHECK(f(r, c, 1) == doctest::Approx(total / 9.0).epsilon(1e-14));
        }
    }
}

TEST_CASE("one-pixel descent follows the closed-form recursion") {
    BenchCase c{Field(1, 1, 1), LabelMap(1, 1, 2, {1}), LabelMap(1, 1, 2, {1}),
                Field(1, 1, 2, std::vector<double>{0.0, 1.0})};
    const std::vector<BenchCase> data{c};
    for (std::size_t steps : {1u, 10u, 500u}) {
        const auto result = train(init_model(ModelKind::Direct, data, 2, 0), data,
                                  train_config(LossConfig::defaults(LossKind::CE), steps, 0.3));
        const Field& l = std::get<DirectLogit>(result.params).logits[0];
        CHECK(l(0, 0, 1) - l(0, 0, 0) == doctest::Approx(oracle::ce_gap_after(steps, 0.3)).epsilon(1e-12));
        CHECK(l(0, 0, 1) == doctest::Approx(-l(0, 0, 0)).epsilon(1e-12));
    }
}

TEST_CASE("nacl with zero weight trains exactly like cross-entropy") {
    const auto data = generate_dataset(small_config(), 2);
    for (ModelKind kind : {ModelKind::Direct, ModelKind::Linear}) {
        const auto ce = train(init_model(kind, data, 2, 5), data,
                              train_config(LossConfig::defaults(LossKind::CE), 50, 0.2));
        const auto nz = train(init_model(kind, data, 2, 5), data, train_config(nacl(0.0), 50, 0.2));
        CHECK(ce.trace == nz.trace);
    }
}

TEST_CASE("training is deterministic") {
    const auto data = generate_dataset(small_config(), 3);
    const auto a = train(init_model(ModelKind::Linear, data, 2, 7), data, train_config(nacl(0.1), 100, 0.5));
    const auto b = train(init_model(ModelKind::Linear, data, 2, 7), data, train_config(nacl(0.1), 100, 0.5));
    CHECK(a.trace == b.trace);
    CHECK(std::get<LinearPixel>(a.params).weights == std::get<LinearPixel>(b.params).weights);
}

TEST_CASE("nacl direct logits respect the stationarity bound") {
    const double lambda = 0.1;
    const auto data = generate_dataset(small_config(2), 2);
    const auto result = train(init_model(ModelKind::Direct, data, 2, 0), data, train_config(nacl(lambda), 2000, 0.1));
    const double bound = 1.0 + std::log((1.0 - lambda) / lambda);
    double worst = 0.0;
    for (const auto& l : std::get<DirectLogit>(result.params).logits) {
        for (double v : l.values()) {
            worst = std::max(worst, std::abs(v));
        }
    }
    CHECK(worst <= bound + 0.05);
}

namespace {

std::vector<BenchCase> clean_benchmark() {
    BenchConfig cfg = small_config(6);
    cfg.height = 24;
    cfg.width = 24;
    cfg.noise_std = 0.2;
    return generate_dataset(cfg, 3);
}

}  // namespace

TEST_CASE("every loss segments the clean benchmark") {
    const auto data = clean_benchmark();
    for (LossKind kind : kAllLossKinds) {
        CAPTURE(to_string(kind));
        LossConfig loss = LossConfig::defaults(kind);
        if (kind == LossKind::SVLS) {
            // See the next test for sigma = 2.
            loss.params = SvlsParams{0.5, 3};
        }
        const auto result = train(init_model(ModelKind::Linear, data, 2, 1), data, train_config(loss, 2000, 0.5));
        CHECK(result.trace.back() < result.trace.front());
        CHECK(evaluate_run(result.params, data).mean_dsc > 0.99);
    }
}

TEST_CASE("wide svls kernels relabel convex corners in their own targets") {
    // With sigma = 2 on a 3x3 window the centre weight (1) is outweighed by
    // five background neighbours (~0.8 each), so the soft target's argmax
    // already disagrees with the labels at shape corners.
    const auto data = clean_benchmark();
    double target_dsc = 0.0;
    for (const auto& c : data) {
        target_dsc += dice(argmax(svls_soft_labels(c.labels, gaussian_kernel(3, 2.0))), c.labels, 1);
    }
    CHECK(target_dsc / 3.0 < 0.99);
    for (const auto& c : data) {
        CHECK(dice(argmax(svls_soft_labels(c.labels, gaussian_kernel(3, 0.5))), c.labels, 1) == 1.0);
    }
}

TEST_CASE("cross-entropy logits keep growing while nacl logits settle") {
    const auto data = generate_dataset(small_config(2), 1);
    auto max_abs = [&](const LossConfig& loss, std::size_t steps) {
        const auto r = train(init_model(ModelKind::Direct, data, 2, 0), data, train_config(loss, steps, 0.1));
        double worst = 0.0;
        for (double v : std::get<DirectLogit>(r.params).logits[0].values()) {
            worst = std::max(worst, std::abs(v));
        }
        return worst;
    };
    const LossConfig ce = LossConfig::defaults(LossKind::CE);
    CHECK(max_abs(ce, 10000) > max_abs(ce, 2000) + 0.5);
    CHECK(max_abs(nacl(0.1), 10000) == doctest::Approx(max_abs(nacl(0.1), 2000)).epsilon(0.02));
}

TEST_CASE("constant logits report their magnitude for every class group") {
    const auto data = generate_dataset(small_config(), 2);
    DirectLogit model;
    for (const auto& c : data) {
        model.logits.emplace_back(c.labels.height(), c.labels.width(), 2, -1.75);
    }
    const RunReport report = evaluate_run(model, data);
    for (const auto& row : report.mean_abs_logit_by_class) {
        for (double v : row) {
            CHECK(v == doctest::Approx(1.75).epsilon(1e-15));
        }
    }
    CHECK(report.mean_abs_logit == doctest::Approx(1.75).epsilon(1e-15));
}

TEST_CASE("posterior sharpens as the noise vanishes") {
    BenchConfig cfg = small_config(4);
    cfg.noise_std = 1e-3;
    for (const auto& c : generate_dataset(cfg, 2)) {
        for (std::size_t p = 0; p < c.clean.size(); ++p) {
            CHECK(c.posterior.pixel(p)[c.clean[p]] > 1.0 - 1e-12);
        }
    }
}

TEST_CASE("divergent training is reported") {
    // A quadratic penalty stepped far beyond its stability limit grows
    // geometrically until the logits overflow.
    const auto data = generate_dataset(small_config(), 1);
    NaclParams p;
    p.lambda = 1.0;
    p.penalty = Penalty::Quadratic;
    for (ModelKind kind : {ModelKind::Direct, ModelKind::Linear}) {
        try {
            train(init_model(kind, data, 2, 0), data, train_config({p, Reduction::Mean}, 2000, 100.0));
            FAIL("training did not diverge");
        } catch (const TrainingDiverged& e) {
            CHECK(e.step() > 0);
            CHECK(e.step() < 2000);
        }
    }
}

TEST_CASE("run report summarises logits and posterior fit") {
    const auto data = generate_dataset(small_config(), 2);
    const auto result = train(init_model(ModelKind::Linear, data, 2, 0), data,
                              train_config(LossConfig::defaults(LossKind::CE), 200, 0.5));
    const RunReport report = evaluate_run(result.params, data);
    CHECK(report.cases.size() == 2);
    CHECK(report.mean_abs_logit_by_class.size() == 2);
    CHECK(report.mean_abs_logit > 0.0);
    CHECK(report.posterior_l1 >= 0.0);
    CHECK(report.posterior_l1 <= 2.0);
    CHECK(report.mean_dsc == doctest::Approx((report.cases[0].mean_dsc + report.cases[1].mean_dsc) / 2.0));
}
