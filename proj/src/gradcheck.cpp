#include "calibseg/gradcheck.hpp"

#include "calibseg/random.hpp"

#include <algorithm>
#include <cmath>

namespace calibseg {

GradcheckResult check_gradient(const Loss& loss, const LogitField& logits, const GradcheckOptions& options) {
    const LossResult analytic = loss.evaluate(logits);
    const double per_pixel =
        loss.config().reduction == Reduction::Mean ? static_cast<double>(logits.pixels()) : 1.0;

    GradcheckResult result;
    std::vector<double> probe;
    for (std::size_t p = 0; p < logits.pixels(); ++p) {
        const auto base = logits.pixel(p);
        if (loss.near_kink(p, base, options.kink_margin)) {
            result.skipped += base.size();
            continue;
        }
        probe.assign(base.begin(), base.end());
        for (std::size_t k = 0; k < base.size(); ++k) {
            probe[k] = base[k] + options.step;
            const double up = loss.pixel_value(p, probe);
            probe[k] = base[k] - options.step;
            const double down = loss.pixel_value(p, probe);
            probe[k] = base[k];

            const double numeric = (up - down) / (2.0 * options.step);
            const double a = analytic.grad.pixel(p)[k] * per_pixel;
            const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
            result.max_rel_error = std::max(result.max_rel_error, std::abs(a - numeric) / denom);
            ++result.checked;
        }
    }
    return result;
}

std::vector<GradcheckSuiteRow> gradcheck_suite(const std::vector<LossKind>& kinds, std::uint64_t seed,
                                               std::size_t trials, const GradcheckOptions& options) {
    constexpr std::size_t kSide = 5;
    constexpr std::size_t kClasses = 4;
    std::vector<GradcheckSuiteRow> rows;
    for (LossKind kind : kinds) {
        Rng rng(seed);
        GradcheckSuiteRow row{kind, {}};
        for (std::size_t t = 0; t < trials; ++t) {
            Field logits(kSide, kSide, kClasses);
            for (double& v : logits.values()) {
                v = rng.uniform(-3.0, 3.0);
            }
            LabelMap labels(kSide, kSide, kClasses);
            for (std::size_t p = 0; p < labels.size(); ++p) {
                labels.set(p, static_cast<ClassId>(rng.index(kClasses)));
            }
            const Loss loss(labels, LossConfig::defaults(kind));
            const GradcheckResult r = check_gradient(loss, logits, options);
            row.result.max_rel_error = std::max(row.result.max_rel_error, r.max_rel_error);
            row.result.checked += r.checked;
            row.result.skipped += r.skipped;
        }
        rows.push_back(row);
    }
    return rows;
}

}  // namespace calibseg
