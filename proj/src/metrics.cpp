#include "calibseg/metrics.hpp"

#include "calibseg/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace calibseg {

namespace {

void check_inputs(const ProbField& probs, const LabelMap& gt, std::size_t bins) {
    require_compatible(probs, gt);
    if (bins == 0) {
        throw InvalidInput("at least one confidence bin is required");
    }
}

void check_masks(const LabelMap& pred, const LabelMap& gt, ClassId k) {
    if (pred.height() != gt.height() || pred.width() != gt.width()) {
        throw InvalidInput("prediction and ground truth have different dimensions");
    }
    if (k >= gt.num_classes() || k >= pred.num_classes()) {
        throw InvalidInput("class id out of range");
    }
}

struct BinAccumulator {
    std::size_t count = 0;
    double correct = 0.0;
    double confidence = 0.0;
};

std::vector<bool> mask_of(const LabelMap& labels, ClassId k) {
    std::vector<bool> mask(labels.size());
    for (std::size_t p = 0; p < labels.size(); ++p) {
        mask[p] = labels[p] == k;
    }
    return mask;
}

std::vector<bool> boundary_of(const std::vector<bool>& mask, std::size_t h, std::size_t w) {
    std::vector<bool> edge(mask.size(), false);
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            const std::size_t p = r * w + c;
            if (!mask[p]) {
                continue;
            }
            edge[p] = r == 0 || c == 0 || r + 1 == h || c + 1 == w || !mask[p - w] || !mask[p + w] ||
                      !mask[p - 1] || !mask[p + 1];
        }
    }
    return edge;
}

// One pass of the lower-envelope squared distance transform along a line.
void distance_transform_1d(const std::vector<double>& f, std::vector<double>& d) {
    const std::size_t n = f.size();
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> v(n);
    std::vector<double> z(n + 1);
    std::size_t k = 0;
    std::size_t first = n;
    for (std::size_t q = 0; q < n; ++q) {
        if (f[q] < inf) {
            first = q;
            break;
        }
    }
    if (first == n) {
        std::fill(d.begin(), d.end(), inf);
        return;
    }
    v[0] = first;
    z[0] = -inf;
    z[1] = inf;
    for (std::size_t q = first + 1; q < n; ++q) {
        if (!(f[q] < inf)) {
            continue;
        }
        const auto qd = static_cast<double>(q);
        double s = 0.0;
        while (true) {
            const auto vk = static_cast<double>(v[k]);
            s = ((f[q] + qd * qd) - (f[v[k]] + vk * vk)) / (2.0 * qd - 2.0 * vk);
            if (s <= z[k] && k > 0) {
                --k;
                continue;
            }
            break;
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = inf;
    }
    k = 0;
    for (std::size_t q = 0; q < n; ++q) {
        const auto qd = static_cast<double>(q);
        while (z[k + 1] < qd) {
            ++k;
        }
        const double diff = qd - static_cast<double>(v[k]);
        d[q] = diff * diff + f[v[k]];
    }
}

// Exact squared Euclidean distance from every pixel to the nearest set pixel.
std::vector<double> squared_distance_to(const std::vector<bool>& sites, std::size_t h, std::size_t w) {
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> grid(sites.size());
    for (std::size_t p = 0; p < sites.size(); ++p) {
        grid[p] = sites[p] ? 0.0 : inf;
    }
    std::vector<double> line;
    std::vector<double> out;
    line.resize(h);
    out.resize(h);
    for (std::size_t c = 0; c < w; ++c) {
        for (std::size_t r = 0; r < h; ++r) line[r] = grid[r * w + c];
        distance_transform_1d(line, out);
        for (std::size_t r = 0; r < h; ++r) grid[r * w + c] = out[r];
    }
    line.resize(w);
    out.resize(w);
    for (std::size_t r = 0; r < h; ++r) {
        std::copy_n(grid.begin() + static_cast<std::ptrdiff_t>(r * w), w, line.begin());
        distance_transform_1d(line, out);
        std::copy(out.begin(), out.end(), grid.begin() + static_cast<std::ptrdiff_t>(r * w));
    }
    return grid;
}

}  // namespace

std::size_t confidence_bin(double confidence, std::size_t bins) {
    const auto m = static_cast<double>(bins);
    double guess = std::ceil(confidence * m) - 1.0;
    std::size_t i = guess <= 0.0 ? 0 : std::min(static_cast<std::size_t>(guess), bins - 1);
    // Settle rounding in confidence * m against the exact edges i / M.
    while (i > 0 && confidence <= static_cast<double>(i) / m) {
        --i;
    }
    while (i + 1 < bins && confidence > static_cast<double>(i + 1) / m) {
        ++i;
    }
    return i;
}

std::vector<BinStats> reliability_bins(const ProbField& probs, const LabelMap& gt, std::size_t bins,
                                       bool foreground_only) {
    check_inputs(probs, gt, bins);
    std::vector<BinAccumulator> acc(bins);
    std::size_t included = 0;
    for (std::size_t p = 0; p < gt.size(); ++p) {
        const auto s = probs.pixel(p);
        const std::size_t pred = argmax(s);
        if (foreground_only && gt[p] == 0 && pred == 0) {
            continue;
        }
        const double conf = s[pred];
        auto& bin = acc[confidence_bin(conf, bins)];
        ++bin.count;
        bin.correct += pred == gt[p] ? 1.0 : 0.0;
        bin.confidence += conf;
        ++included;
    }
    if (included == 0) {
        throw UndefinedMetric("no pixel passes the calibration filter");
    }
    std::vector<BinStats> out(bins);
    const auto m = static_cast<double>(bins);
    for (std::size_t i = 0; i < bins; ++i) {
        out[i].index = i;
        out[i].lower = static_cast<double>(i) / m;
        out[i].upper = static_cast<double>(i + 1) / m;
        out[i].count = acc[i].count;
        if (acc[i].count > 0) {
            const auto n = static_cast<double>(acc[i].count);
            out[i].accuracy = acc[i].correct / n;
            out[i].confidence = acc[i].confidence / n;
        }
    }
    return out;
}

double ece(const ProbField& probs, const LabelMap& gt, std::size_t bins, bool foreground_only) {
    const auto table = reliability_bins(probs, gt, bins, foreground_only);
    std::size_t total = 0;
    for (const auto& b : table) {
        total += b.count;
    }
    double value = 0.0;
    for (const auto& b : table) {
        if (b.count > 0) {
            value += static_cast<double>(b.count) / static_cast<double>(total) * std::abs(*b.accuracy - *b.confidence);
        }
    }
    return value;
}

double cece(const ProbField& probs, const LabelMap& gt, std::size_t bins) {
    check_inputs(probs, gt, bins);
    const std::size_t num_classes = probs.channels();
    std::vector<BinAccumulator> acc(bins * num_classes);
    for (std::size_t p = 0; p < gt.size(); ++p) {
        const auto s = probs.pixel(p);
        for (std::size_t j = 0; j < num_classes; ++j) {
            auto& bin = acc[confidence_bin(s[j], bins) * num_classes + j];
            ++bin.count;
            bin.correct += gt[p] == j ? 1.0 : 0.0;
            bin.confidence += s[j];
        }
    }
    const auto n = static_cast<double>(gt.size());
    double value = 0.0;
    for (const auto& bin : acc) {
        if (bin.count > 0) {
            const auto size = static_cast<double>(bin.count);
            value += size / n * std::abs(bin.correct / size - bin.confidence / size);
        }
    }
    return value;
}

double dice(const LabelMap& pred, const LabelMap& gt, ClassId k) {
    check_masks(pred, gt, k);
    std::size_t a = 0;
    std::size_t b = 0;
    std::size_t both = 0;
    for (std::size_t p = 0; p < gt.size(); ++p) {
        const bool in_a = pred[p] == k;
        const bool in_b = gt[p] == k;
        a += in_a;
        b += in_b;
        both += in_a && in_b;
    }
    if (a + b == 0) {
        return 1.0;
    }
    return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) {
        throw InvalidInput("percentile of an empty sample");
    }
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

std::optional<double> hd95(const LabelMap& pred, const LabelMap& gt, ClassId k) {
    check_masks(pred, gt, k);
    const std::size_t h = gt.height();
    const std::size_t w = gt.width();
    const auto mask_a = mask_of(pred, k);
    const auto mask_b = mask_of(gt, k);
    const bool empty_a = std::none_of(mask_a.begin(), mask_a.end(), [](bool v) { return v; });
    const bool empty_b = std::none_of(mask_b.begin(), mask_b.end(), [](bool v) { return v; });
    if (empty_a && empty_b) {
        return 0.0;
    }
    if (empty_a || empty_b) {
        return std::nullopt;
    }
    const auto edge_a = boundary_of(mask_a, h, w);
    const auto edge_b = boundary_of(mask_b, h, w);
    const auto to_b = squared_distance_to(edge_b, h, w);
    const auto to_a = squared_distance_to(edge_a, h, w);

    std::vector<double> pooled;
    for (std::size_t p = 0; p < edge_a.size(); ++p) {
        if (edge_a[p]) pooled.push_back(std::sqrt(to_b[p]));
    }
    for (std::size_t p = 0; p < edge_b.size(); ++p) {
        if (edge_b[p]) pooled.push_back(std::sqrt(to_a[p]));
    }
    return percentile(std::move(pooled), 0.95);
}

CaseMetrics evaluate_case(const ProbField& probs, const LabelMap& gt, std::size_t bins, bool foreground_only) {
    check_inputs(probs, gt, bins);
    const LabelMap pred = argmax(probs);
    CaseMetrics out;
    double hd_total = 0.0;
    std::size_t hd_defined = 0;
    for (std::size_t k = 1; k < gt.num_classes(); ++k) {
        const auto id = static_cast<ClassId>(k);
        out.dsc.push_back(dice(pred, gt, id));
        out.hd95.push_back(hd95(pred, gt, id));
        if (out.hd95.back()) {
            hd_total += *out.hd95.back();
            ++hd_defined;
        }
    }
    double dsc_total = 0.0;
    for (double d : out.dsc) {
        dsc_total += d;
    }
    out.mean_dsc = dsc_total / static_cast<double>(out.dsc.size());
    if (hd_defined > 0) {
        out.mean_hd95 = hd_total / static_cast<double>(hd_defined);
    }
    out.ece = ece(probs, gt, bins, foreground_only);
    out.cece = cece(probs, gt, bins);
    return out;
}

}  // namespace calibseg
