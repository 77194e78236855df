#include "calibseg/synthbench.hpp"

#include "calibseg/error.hpp"
#include "calibseg/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>

namespace calibseg {

namespace {

void paint_shape(LabelMap& labels, ClassId k, Rng& rng) {
    const auto h = static_cast<double>(labels.height());
    const auto w = static_cast<double>(labels.width());
    const double span = std::min(h, w);
    const bool disc = rng.bernoulli(0.5);
    const double cr = rng.uniform(0.0, h);
    const double cc = rng.uniform(0.0, w);
    const double a = rng.uniform(span / 10.0, span / 5.0);
    const double b = rng.uniform(span / 10.0, span / 5.0);
    for (std::size_t r = 0; r < labels.height(); ++r) {
        for (std::size_t c = 0; c < labels.width(); ++c) {
            const double dr = static_cast<double>(r) + 0.5 - cr;
            const double dc = static_cast<double>(c) + 0.5 - cc;
            const bool inside = disc ? dr * dr + dc * dc <= a * a : std::abs(dr) <= a && std::abs(dc) <= b;
            if (inside) {
                labels.set(r, c, k);
            }
        }
    }
}

LabelMap add_boundary_noise(const LabelMap& clean, double rate, Rng& rng) {
    LabelMap noisy = clean;
    const std::size_t h = clean.height();
    const std::size_t w = clean.width();
    std::vector<ClassId> others;
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            const ClassId own = clean(r, c);
            others.clear();
            auto consider = [&](std::size_t rr, std::size_t cc) {
                const ClassId v = clean(rr, cc);
                if (v != own && std::find(others.begin(), others.end(), v) == others.end()) {
                    others.push_back(v);
                }
            };
            if (r > 0) consider(r - 1, c);
            if (r + 1 < h) consider(r + 1, c);
            if (c > 0) consider(r, c - 1);
            if (c + 1 < w) consider(r, c + 1);
            if (others.empty()) {
                continue;
            }
            std::sort(others.begin(), others.end());
            if (rng.bernoulli(rate)) {
                noisy.set(r, c, others[rng.index(others.size())]);
            }
        }
    }
    return noisy;
}

ProbField bayes_posterior(const Field& image, const LabelMap& clean, const BenchConfig& config) {
    const std::size_t num_classes = config.num_classes;
    std::vector<double> log_prior(num_classes, -std::numeric_limits<double>::infinity());
    std::vector<std::size_t> counts(num_classes, 0);
    for (ClassId v : clean.values()) {
        ++counts[v];
    }
    for (std::size_t k = 0; k < num_classes; ++k) {
        if (counts[k] > 0) {
            log_prior[k] = std::log(static_cast<double>(counts[k]) / static_cast<double>(clean.size()));
        }
    }
    const double var = config.noise_std * config.noise_std;
    ProbField post(image.height(), image.width(), num_classes);
    std::vector<double> log_joint(num_classes);
    for (std::size_t p = 0; p < image.pixels(); ++p) {
        const double x = image.pixel(p)[0];
        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < num_classes; ++k) {
            const double d = x - config.means[k];
            log_joint[k] = log_prior[k] - d * d / (2.0 * var);
            top = std::max(top, log_joint[k]);
        }
        double total = 0.0;
        auto out = post.pixel(p);
        for (std::size_t k = 0; k < num_classes; ++k) {
            out[k] = std::exp(log_joint[k] - top);
            total += out[k];
        }
        for (double& v : out) {
            v /= total;
        }
    }
    return post;
}

void check_finite(double v, std::size_t step, const char* what) {
    if (!std::isfinite(v)) {
        throw TrainingDiverged(step, what);
    }
}

}  // namespace

void BenchConfig::validate() const {
    if (height == 0 || width == 0) {
        throw InvalidConfig("benchmark grid must be at least 1x1");
    }
    if (num_classes < 2) {
        throw InvalidConfig("benchmark needs at least two classes");
    }
    if (means.size() < num_classes) {
        throw InvalidConfig("benchmark has K=" + std::to_string(num_classes) + " classes but only " +
                            std::to_string(means.size()) + " intensity means");
    }
    if (means.size() > num_classes) {
        throw InvalidConfig("benchmark has more intensity means than classes");
    }
    std::set<double> distinct(means.begin(), means.end());
    if (distinct.size() != means.size()) {
        throw InvalidConfig("class intensity means must be distinct");
    }
    for (double m : means) {
        if (!std::isfinite(m)) {
            throw InvalidConfig("class intensity means must be finite");
        }
    }
    if (!(noise_std > 0.0) || !std::isfinite(noise_std)) {
        throw InvalidConfig("noise std must be positive");
    }
    if (!(label_noise >= 0.0 && label_noise < 0.5)) {
        throw InvalidConfig("label noise must lie in [0, 0.5)");
    }
}

std::vector<BenchCase> generate_dataset(const BenchConfig& config, std::size_t n_cases) {
    config.validate();
    Rng rng(config.seed);
    std::vector<BenchCase> cases;
    cases.reserve(n_cases);
    for (std::size_t n = 0; n < n_cases; ++n) {
        LabelMap clean(config.height, config.width, config.num_classes);
        for (std::size_t k = 1; k < config.num_classes; ++k) {
            for (std::size_t s = 0; s < config.shapes; ++s) {
                paint_shape(clean, static_cast<ClassId>(k), rng);
            }
        }
        Field image(config.height, config.width, 1);
        for (std::size_t p = 0; p < clean.size(); ++p) {
            image.pixel(p)[0] = config.means[clean[p]] + config.noise_std * rng.normal();
        }
        LabelMap observed = config.label_noise > 0.0 ? add_boundary_noise(clean, config.label_noise, rng) : clean;
        ProbField posterior = bayes_posterior(image, clean, config);
        cases.push_back({std::move(image), std::move(observed), std::move(clean), std::move(posterior)});
    }
    return cases;
}

Field pixel_features(const Field& image) {
    if (image.channels() != 1) {
        throw InvalidInput("pixel features expect a single-channel image");
    }
    const std::size_t h = image.height();
    const std::size_t w = image.width();
    Field out(h, w, kPixelFeatures);
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            double total = 0.0;
            for (int dr = -1; dr <= 1; ++dr) {
                for (int dc = -1; dc <= 1; ++dc) {
                    const auto rr = static_cast<std::size_t>(
                        std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(r) + dr, 0,
                                                   static_cast<std::ptrdiff_t>(h) - 1));
                    const auto cc = static_cast<std::size_t>(
                        std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(c) + dc, 0,
                                                   static_cast<std::ptrdiff_t>(w) - 1));
                    total += image(rr, cc, 0);
                }
            }
            out(r, c, 0) = image(r, c, 0);
            out(r, c, 1) = total / 9.0;
        }
    }
    return out;
}

ModelParams init_model(ModelKind kind, const std::vector<BenchCase>& data, std::size_t num_classes,
                       std::uint64_t seed) {
    if (num_classes < 2) {
        throw InvalidConfig("model needs at least two classes");
    }
    if (kind == ModelKind::Direct) {
        DirectLogit model;
        for (const auto& c : data) {
            model.logits.emplace_back(c.image.height(), c.image.width(), num_classes, 0.0);
        }
        return model;
    }
    Rng rng(seed);
    LinearPixel model{num_classes, std::vector<double>(num_classes * kPixelFeatures), std::vector<double>(num_classes)};
    for (double& w : model.weights) {
        w = 0.01 * rng.normal();
    }
    return model;
}

LogitField model_logits(const ModelParams& model, std::size_t case_index, const BenchCase& data) {
    if (const auto* direct = std::get_if<DirectLogit>(&model)) {
        if (case_index >= direct->logits.size()) {
            throw InvalidInput("direct-logit model has no field for case " + std::to_string(case_index));
        }
        const Field& f = direct->logits[case_index];
        if (!f.same_grid(data.image)) {
            throw InvalidInput("direct-logit field does not match the case grid");
        }
        return f;
    }
    const auto& linear = std::get<LinearPixel>(model);
    const Field features = pixel_features(data.image);
    const std::size_t num_classes = linear.num_classes;
    LogitField logits(features.height(), features.width(), num_classes);
    for (std::size_t p = 0; p < features.pixels(); ++p) {
        const auto x = features.pixel(p);
        auto l = logits.pixel(p);
        for (std::size_t k = 0; k < num_classes; ++k) {
            double v = linear.bias[k];
            for (std::size_t f = 0; f < kPixelFeatures; ++f) {
                v += linear.weights[k * kPixelFeatures + f] * x[f];
            }
            l[k] = v;
        }
    }
    return logits;
}

void TrainConfig::validate() const {
    loss.validate();
    if (steps == 0) {
        throw InvalidConfig("training needs at least one step");
    }
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw InvalidConfig("learning rate must be positive");
    }
}

TrainResult train(ModelParams model, const std::vector<BenchCase>& data, const TrainConfig& config) {
    config.validate();
    if (data.empty()) {
        throw InvalidInput("training needs at least one case");
    }
    std::vector<Loss> losses;
    losses.reserve(data.size());
    for (const auto& c : data) {
        losses.emplace_back(c.labels, config.loss);
    }
    std::vector<Field> features;
    if (std::holds_alternative<LinearPixel>(model)) {
        const auto& linear = std::get<LinearPixel>(model);
        for (const auto& c : data) {
            if (c.labels.num_classes() != linear.num_classes) {
                throw InvalidInput("model and data disagree on the class count");
            }
            features.push_back(pixel_features(c.image));
        }
    }

    const auto n_cases = static_cast<double>(data.size());
    TrainResult result;
    result.trace.reserve(config.steps);
    for (std::size_t step = 0; step < config.steps; ++step) {
        double objective = 0.0;
        if (auto* direct = std::get_if<DirectLogit>(&model)) {
            if (direct->logits.size() != data.size()) {
                throw InvalidInput("direct-logit model and data have different case counts");
            }
            for (std::size_t i = 0; i < data.size(); ++i) {
                Field& logits = direct->logits[i];
                const LossResult lr = losses[i].evaluate(logits);
                check_finite(lr.value, step, "non-finite loss");
                objective += lr.value;
                const double per_pixel =
                    config.loss.reduction == Reduction::Mean ? static_cast<double>(logits.pixels()) : 1.0;
                const double step_size = config.learning_rate * per_pixel;
                auto params = logits.values();
                const auto grad = lr.grad.values();
                for (std::size_t j = 0; j < params.size(); ++j) {
                    params[j] -= step_size * grad[j];
                    check_finite(params[j], step, "non-finite logit");
                }
            }
        } else {
            auto& linear = std::get<LinearPixel>(model);
            const std::size_t num_classes = linear.num_classes;
            std::vector<double> grad_w(linear.weights.size(), 0.0);
            std::vector<double> grad_b(linear.bias.size(), 0.0);
            for (std::size_t i = 0; i < data.size(); ++i) {
                const LogitField logits = model_logits(model, i, data[i]);
                for (double v : logits.values()) {
                    check_finite(v, step, "non-finite logit");
                }
                const LossResult lr = losses[i].evaluate(logits);
                check_finite(lr.value, step, "non-finite loss");
                objective += lr.value;
                for (std::size_t p = 0; p < logits.pixels(); ++p) {
                    const auto g = lr.grad.pixel(p);
                    const auto x = features[i].pixel(p);
                    for (std::size_t k = 0; k < num_classes; ++k) {
                        grad_b[k] += g[k];
                        for (std::size_t f = 0; f < kPixelFeatures; ++f) {
                            grad_w[k * kPixelFeatures + f] += g[k] * x[f];
                        }
                    }
                }
            }
            for (std::size_t j = 0; j < grad_w.size(); ++j) {
                linear.weights[j] -= config.learning_rate * grad_w[j] / n_cases;
                check_finite(linear.weights[j], step, "non-finite weight");
            }
            for (std::size_t k = 0; k < grad_b.size(); ++k) {
                linear.bias[k] -= config.learning_rate * grad_b[k] / n_cases;
                check_finite(linear.bias[k], step, "non-finite bias");
            }
        }
        result.trace.push_back(objective / n_cases);
    }
    result.params = std::move(model);
    return result;
}

RunReport evaluate_run(const ModelParams& model, const std::vector<BenchCase>& data, std::size_t bins,
                       bool foreground_only) {
    if (data.empty()) {
        throw InvalidInput("evaluation needs at least one case");
    }
    const std::size_t num_classes = data.front().labels.num_classes();
    RunReport report;
    std::vector<std::vector<double>> abs_sum(num_classes, std::vector<double>(num_classes, 0.0));
    std::vector<std::size_t> group_count(num_classes, 0);
    double abs_total = 0.0;
    double posterior_total = 0.0;
    std::size_t pixel_count = 0;
    double hd_total = 0.0;
    std::size_t hd_defined = 0;

    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& c = data[i];
        const LogitField logits = model_logits(model, i, c);
        require_compatible(logits, c.labels);
        const ProbField probs = softmax(logits);
        report.cases.push_back(evaluate_case(probs, c.labels, bins, foreground_only));
        const auto& cm = report.cases.back();
        report.mean_dsc += cm.mean_dsc;
        report.mean_ece += cm.ece;
        report.mean_cece += cm.cece;
        if (cm.mean_hd95) {
            hd_total += *cm.mean_hd95;
            ++hd_defined;
        }
        for (std::size_t p = 0; p < c.labels.size(); ++p) {
            const ClassId g = c.labels[p];
            ++group_count[g];
            const auto l = logits.pixel(p);
            const auto s = probs.pixel(p);
            const auto post = c.posterior.pixel(p);
            for (std::size_t k = 0; k < num_classes; ++k) {
                abs_sum[g][k] += std::abs(l[k]);
                abs_total += std::abs(l[k]);
                posterior_total += std::abs(s[k] - post[k]);
            }
            ++pixel_count;
        }
    }
    const auto n = static_cast<double>(data.size());
    report.mean_dsc /= n;
    report.mean_ece /= n;
    report.mean_cece /= n;
    if (hd_defined > 0) {
        report.mean_hd95 = hd_total / static_cast<double>(hd_defined);
    }
    report.mean_abs_logit_by_class.resize(num_classes);
    for (std::size_t g = 0; g < num_classes; ++g) {
        if (group_count[g] == 0) {
            continue;
        }
        for (std::size_t k = 0; k < num_classes; ++k) {
            report.mean_abs_logit_by_class[g].push_back(abs_sum[g][k] / static_cast<double>(group_count[g]));
        }
    }
    report.mean_abs_logit = abs_total / static_cast<double>(pixel_count * num_classes);
    report.posterior_l1 = posterior_total / static_cast<double>(pixel_count);
    return report;
}

}  // namespace calibseg
