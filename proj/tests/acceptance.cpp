// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include "calibseg/cli.hpp"
#include "calibseg/gradcheck.hpp"
#include "calibseg/losses.hpp"
#include "calibseg/metrics.hpp"
#include "calibseg/priors.hpp"
#include "calibseg/random.hpp"
#include "calibseg/ranking.hpp"
#include "calibseg/serialize.hpp"
#include "calibseg/synthbench.hpp"
#include "oracles.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>

using namespace calibseg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

int failures = 0;

void report(int id, const char* name, double limit_s, const std::function<Outcome()>& body) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o{false, ""};
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (limit_s > 0.0 && secs >= limit_s) {
        o.pass = false;
        o.detail += " [over time limit]";
    }
    if (!o.pass) {
        ++failures;
    }
    std::printf("%s [%2d] %s: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs);
    std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0) {
    char buf[160];
    std::snprintf(buf, sizeof buf, f, a, b);
    return buf;
}

LabelMap random_labels(Rng& rng, std::size_t h, std::size_t w, std::size_t k) {
    LabelMap m(h, w, k);
    for (std::size_t p = 0; p < m.size(); ++p) {
        m.set(p, static_cast<ClassId>(rng.index(k)));
    }
    return m;
}

std::vector<double> random_vector(Rng& rng, std::size_t k, double span) {
    std::vector<double> v(k);
    for (double& x : v) {
        x = rng.uniform(-span, span);
    }
    return v;
}

Outcome gradient_fidelity() {
    const auto rows = gradcheck_suite({std::begin(kAllLossKinds), std::end(kAllLossKinds)}, 7, 20);
    double worst = 0.0;
    std::string detail;
    for (const auto& r : rows) {
        worst = std::max(worst, r.result.max_rel_error);
        detail += std::string(to_string(r.kind)) + "=" + fmt("%.1e", r.result.max_rel_error) + " ";
    }
    return {rows.size() == 7 && worst < 1e-6, detail + fmt("max %.2e < 1e-6", worst)};
}

Outcome decomposition_identity() {
    Rng rng(1001);
    double worst = 0.0;
    for (double sigma : {0.5, 1.0, 2.0}) {
        const Kernel kernel = gaussian_kernel(3, sigma);
        for (int t = 0; t < 100; ++t) {
            const LabelMap patch = random_labels(rng, 3, 3, 4);
            const auto logits = random_vector(rng, 4, 3.0);
            const auto d = svls_decomposition(patch, kernel, logits);
            // The centre pixel of the patch sees exactly this patch.
            const Loss loss(patch, {SvlsParams{sigma, 3}, Reduction::Mean});
            worst = std::max(worst, std::abs(d.total - loss.pixel_value(4, logits)));
            worst = std::max(worst, std::abs(d.total - svls_pixel_loss(patch, kernel, logits)));
        }
    }
    return {worst < 1e-12, fmt("max |total - direct| = %.2e over 300 patches", worst)};
}

Outcome kl_constancy() {
    Rng rng(1002);
    double worst_var = 0.0;
    double worst_gap = 0.0;
    for (double sigma : {0.5, 1.0, 2.0}) {
        const Kernel kernel = gaussian_kernel(3, sigma);
        for (int t = 0; t < 100; ++t) {
            const LabelMap patch = random_labels(rng, 3, 3, 3);
            const auto soft = svls_soft_label(patch, kernel);
            double h = 0.0;
            for (double v : soft) {
                h -= v > 0.0 ? v * std::log(v) : 0.0;
            }
            const Loss loss(patch, {SvlsParams{sigma, 3}, Reduction::Mean});
            std::vector<double> diffs;
            for (int i = 0; i < 10; ++i) {
                const auto logits = random_vector(rng, 3, 3.0);
                const Field s = softmax(Field(1, 1, 3, logits));
                double kl = 0.0;
                for (std::size_t k = 0; k < 3; ++k) {
                    kl += soft[k] > 0.0 ? soft[k] * std::log(soft[k] / s.values()[k]) : 0.0;
                }
                diffs.push_back(loss.pixel_value(4, logits) - kl);
            }
            double mean = 0.0;
            for (double d : diffs) {
                mean += d / 10.0;
            }
            double var = 0.0;
            for (double d : diffs) {
                var += (d - mean) * (d - mean) / 10.0;
            }
            worst_var = std::max(worst_var, var);
            worst_gap = std::max(worst_gap, std::abs(mean - h));
        }
    }
    return {worst_var < 1e-20 && worst_gap < 1e-12,
            fmt("max variance %.2e < 1e-20, max |const - H| %.2e < 1e-12", worst_var, worst_gap)};
}

Outcome prior_oracle() {
    constexpr PriorMode modes[] = {PriorMode::Mean, PriorMode::Gaussian, PriorMode::Max,
                                   PriorMode::Min,  PriorMode::Median,   PriorMode::Mode};
    std::size_t mismatches = 0;
    for (unsigned bits = 0; bits < 512; ++bits) {
        std::vector<ClassId> ids(9);
        for (unsigned i = 0; i < 9; ++i) {
            ids[i] = static_cast<ClassId>((bits >> i) & 1u);
        }
        for (PriorMode mode : modes) {
            PriorConfig cfg;
            cfg.mode = mode;
            if (compute_prior(LabelMap(3, 3, 2, ids), cfg) != oracle::prior(ids, 2, mode)) {
                ++mismatches;
            }
        }
    }
    return {mismatches == 0, fmt("%.0f mismatches in 3072 exact comparisons", static_cast<double>(mismatches))};
}

Outcome metric_oracles() {
    Rng rng(1005);
    Field logits(100, 100, 4);
    for (double& v : logits.values()) {
        v = 2.0 * rng.normal();
    }
    const Field probs = softmax(logits);
    const LabelMap gt = random_labels(rng, 100, 100, 4);
    double calib = 0.0;
    calib = std::max(calib, std::abs(ece(probs, gt, 15, true) - oracle::ece(probs, gt, 15, true)));
    calib = std::max(calib, std::abs(ece(probs, gt, 15, false) - oracle::ece(probs, gt, 15, false)));
    calib = std::max(calib, std::abs(cece(probs, gt, 15) - oracle::cece(probs, gt, 15)));

    double hd = 0.0;
    std::size_t definedness = 0;
    for (int t = 0; t < 200; ++t) {
        const std::size_t h = 1 + rng.index(16);
        const std::size_t w = 1 + rng.index(16);
        const double density = rng.uniform(0.05, 0.6);
        LabelMap a(h, w, 2);
        LabelMap b(h, w, 2);
        for (std::size_t p = 0; p < a.size(); ++p) {
            a.set(p, rng.bernoulli(density) ? 1 : 0);
            b.set(p, rng.bernoulli(density) ? 1 : 0);
        }
        const auto got = hd95(a, b, 1);
        const auto want = oracle::hd95(a, b, 1);
        if (got.has_value() != want.has_value()) {
            ++definedness;
        } else if (got) {
            hd = std::max(hd, std::abs(*got - *want));
        }
    }
    return {calib < 1e-12 && hd < 1e-9 && definedness == 0,
            fmt("ECE/CECE max diff %.2e < 1e-12, HD95 max diff %.2e < 1e-9", calib, hd)};
}

Outcome table_rank() {
    std::ifstream in(CALIBSEG_FIXTURES "/comparison.csv");
    const MetricTable table = read_metric_table_csv(in);
    const RankResult r = sum_rank(table);
    const std::string& best = r.methods[r.order.front()];
    const double runner_up = r.score[r.order[1]];
    return {best == "Ours" && table.methods.size() == 7 && table.metrics.size() == 12,
            "first: " + best + fmt(" (R_T %.1f; next %.1f)", r.score[r.order.front()], runner_up)};
}

struct DirectRuns {
    std::vector<BenchCase> data;
    ModelParams ce;
    ModelParams nacl;
    std::vector<double> nacl_trace;
};

DirectRuns& direct_runs() {
    static DirectRuns runs = [] {
        DirectRuns r;
        BenchConfig bc;
        bc.seed = 1;
        r.data = generate_dataset(bc, 1);
        TrainConfig tc;
        tc.steps = 2000;
        tc.learning_rate = 0.1;
        tc.loss = LossConfig::defaults(LossKind::CE);
        r.ce = train(init_model(ModelKind::Direct, r.data, 2, 0), r.data, tc).params;
        tc.loss = LossConfig::defaults(LossKind::NACL);
        auto res = train(init_model(ModelKind::Direct, r.data, 2, 0), r.data, tc);
        r.nacl = std::move(res.params);
        r.nacl_trace = std::move(res.trace);
        return r;
    }();
    return runs;
}

Outcome logit_magnitude() {
    auto& runs = direct_runs();
    const double ce = evaluate_run(runs.ce, runs.data).mean_abs_logit;
    const double nacl = evaluate_run(runs.nacl, runs.data).mean_abs_logit;
    return {nacl <= 0.5 * ce, fmt("mean |l|: CE %.3f, NACL %.3f", ce, nacl) + fmt(" (ratio %.3f <= 0.5)", nacl / ce)};
}

Outcome calibration_trend() {
    int wins = 0;
    std::string detail;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        BenchConfig bc;
        bc.seed = seed;
        bc.label_noise = 0.1;
        bc.noise_std = 0.8;
        const auto all = generate_dataset(bc, 12);
        const std::vector<BenchCase> train_set(all.begin(), all.begin() + 8);
        const std::vector<BenchCase> held_out(all.begin() + 8, all.end());
        double e[2];
        int i = 0;
        for (LossKind kind : {LossKind::CE, LossKind::NACL}) {
            TrainConfig tc;
            tc.loss = LossConfig::defaults(kind);
            tc.steps = 2000;
            tc.learning_rate = 0.5;
            tc.seed = seed;
            const auto res = train(init_model(ModelKind::Linear, train_set, 2, seed), train_set, tc);
            e[i++] = evaluate_run(res.params, held_out).mean_ece;
        }
        wins += e[1] <= e[0];
        detail += fmt("s%.0f ", static_cast<double>(seed)) + fmt("%.3f/%.3f ", e[0], e[1]);
    }
    return {wins >= 4, detail + "(CE/NACL held-out ECE), NACL wins " + std::to_string(wins) + "/5"};
}

Outcome stationarity() {
    auto& runs = direct_runs();
    const auto& trace = runs.nacl_trace;
    const double drift = std::abs(trace[trace.size() - 1] - trace[trace.size() - 101]);
    double worst = 0.0;
    const auto& fields = std::get<DirectLogit>(runs.nacl).logits;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        const Field s = softmax(fields[i]);
        const LabelMap& y = runs.data[i].labels;
        for (std::size_t p = 0; p < y.size(); ++p) {
            for (std::size_t k = 0; k < s.channels(); ++k) {
                worst = std::max(worst, std::abs(s.pixel(p)[k] - (y[p] == k ? 1.0 : 0.0)));
            }
        }
    }
    return {worst <= 0.1 + 1e-3 && drift < 1e-6,
            fmt("max |s - y| = %.6f <= 0.101, objective drift over last 100 steps %.1e", worst, drift)};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool same_tree(const fs::path& a, const fs::path& b, std::size_t& files) {
    std::vector<fs::path> names;
    for (const auto& e : fs::directory_iterator(a)) {
        names.push_back(e.path().filename());
    }
    std::size_t count_b = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(b)) {
        ++count_b;
    }
    if (names.size() != count_b) {
        return false;
    }
    for (const auto& n : names) {
        ++files;
        if (!fs::exists(b / n) || slurp(a / n) != slurp(b / n)) {
            return false;
        }
    }
    return true;
}

Outcome determinism() {
    std::random_device rd;
    const fs::path root = fs::temp_directory_path() / ("calibseg_accept_" + std::to_string(rd()));
    fs::create_directories(root);
    auto run = [&](std::vector<std::string> args) {
        std::ostringstream out;
        std::ostringstream err;
        const int code = cli::dispatch(args, out, err);
        if (code != 0) {
            throw std::runtime_error("CLI failed: " + err.str());
        }
    };
    auto p = [&](const char* name) { return (root / name).string(); };
    bool ok = true;
    std::size_t files = 0;
    try {
        write_json(root / "bench.json", {{"height", 24}, {"width", 24}, {"label_noise", 0.1}, {"seed", 11}});
        run({"gen", "--config", p("bench.json"), "--cases", "4", "--out", p("d1")});
        run({"gen", "--config", p("d1/manifest.json"), "--out", p("d2")});
        ok = ok && same_tree(root / "d1", root / "d2", files);
        run({"train", "--data", p("d1"), "--loss", "nacl", "--steps", "300", "--out", p("r1")});
        run({"train", "--data", p("d2"), "--config", p("r1/manifest.json"), "--out", p("r2")});
        ok = ok && same_tree(root / "r1", root / "r2", files);
        run({"train", "--data", p("d1"), "--model", "linear", "--loss", "svls", "--lr", "0.5", "--steps", "300",
             "--seed", "3", "--out", p("l1")});
        run({"train", "--data", p("d1"), "--config", p("l1/manifest.json"), "--out", p("l2")});
        ok = ok && same_tree(root / "l1", root / "l2", files);
    } catch (...) {
        fs::remove_all(root);
        throw;
    }
    fs::remove_all(root);
    return {ok, std::to_string(files) + " output files compared byte for byte across manifest replays"};
}

}  // namespace

int main() {
    report(1, "gradient fidelity", 10.0, gradient_fidelity);
    report(2, "SVLS decomposition identity", 0.0, decomposition_identity);
    report(3, "SVLS minus KL constancy", 0.0, kl_constancy);
    report(4, "prior oracle", 0.0, prior_oracle);
    report(5, "metric oracles", 0.0, metric_oracles);
    report(6, "sum-rank of the published table", 1.0, table_rank);
    report(7, "logit magnitude trend", 30.0, logit_magnitude);
    report(8, "held-out calibration trend", 120.0, calibration_trend);
    report(9, "stationarity bound", 0.0, stationarity);
    report(10, "determinism", 0.0, determinism);
    std::printf("%d of 10 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
