#include "calibseg/serialize.hpp"

#include "calibseg/error.hpp"

#include <openssl/evp.h>

#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace calibseg {

namespace {

void require_object(const json& j, const char* what) {
    if (!j.is_object()) {
        throw InvalidConfig(std::string(what) + " must be a JSON object");
    }
}

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& context) {
    for (const auto& [key, value] : j.items()) {
        if (!allowed.contains(key)) {
            throw InvalidConfig("key '" + key + "' is not valid for " + context);
        }
    }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) {
        return fallback;
    }
    const json& v = j.at(key);
    if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!v.is_number_integer() || (std::is_unsigned_v<T> && v.is_number_integer() && !v.is_number_unsigned() &&
                                        v.get<std::int64_t>() < 0)) {
            throw InvalidConfig(std::string("config key '") + key + "' must be a non-negative integer");
        }
    }
    try {
        return v.get<T>();
    } catch (const json::exception& e) {
        throw InvalidConfig(std::string("config key '") + key + "': " + e.what());
    }
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json finite_or_null(double v) { return std::isnan(v) ? json(nullptr) : json(v); }

std::set<std::string> loss_keys(LossKind kind, const PriorMode* prior) {
    std::set<std::string> keys{"loss", "reduction"};
    switch (kind) {
        case LossKind::CE: break;
        case LossKind::LS: keys.insert("alpha"); break;
        case LossKind::FL: keys.insert("gamma"); break;
        case LossKind::ECP: keys.insert("lambda"); break;
        case LossKind::SVLS: keys.insert({"sigma", "kernel_size"}); break;
        case LossKind::MbLS: keys.insert({"lambda", "margin"}); break;
        case LossKind::NACL:
            keys.insert({"lambda", "prior", "patch", "normalize", "penalty", "constrain_on"});
            if (prior != nullptr && *prior == PriorMode::Gaussian) {
                keys.insert("prior_sigma");
            }
            break;
    }
    return keys;
}

LossConfig loss_from_json(const json& j, const std::set<std::string>& extra, const std::string& context) {
    require_object(j, "loss config");
    const LossKind kind = parse_loss_kind(get_or<std::string>(j, "loss", "ce"));
    const PriorMode prior = parse_prior_mode(get_or<std::string>(j, "prior", "mean"));
    auto allowed = loss_keys(kind, &prior);
    allowed.insert(extra.begin(), extra.end());
    reject_unknown(j, allowed, context + " with loss '" + std::string(to_string(kind)) + "'");

    LossConfig config = LossConfig::defaults(kind);
    config.reduction = parse_reduction(get_or<std::string>(j, "reduction", "mean"));
    std::visit(
        [&](auto& p) {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, LsParams>) {
                p.alpha = get_or(j, "alpha", p.alpha);
            } else if constexpr (std::is_same_v<P, FlParams>) {
                p.gamma = get_or(j, "gamma", p.gamma);
            } else if constexpr (std::is_same_v<P, EcpParams>) {
                p.lambda = get_or(j, "lambda", p.lambda);
            } else if constexpr (std::is_same_v<P, SvlsParams>) {
                p.sigma = get_or(j, "sigma", p.sigma);
                p.kernel_size = get_or(j, "kernel_size", p.kernel_size);
            } else if constexpr (std::is_same_v<P, MblsParams>) {
                p.lambda = get_or(j, "lambda", p.lambda);
                p.margin = get_or(j, "margin", p.margin);
            } else if constexpr (std::is_same_v<P, NaclParams>) {
                p.lambda = get_or(j, "lambda", p.lambda);
                p.prior.mode = prior;
                p.prior.patch_size = get_or(j, "patch", p.prior.patch_size);
                p.prior.sigma = get_or(j, "prior_sigma", p.prior.sigma);
                p.prior.normalize = get_or(j, "normalize", p.prior.normalize);
                p.penalty = parse_penalty(get_or<std::string>(j, "penalty", "linear"));
                p.constrain_on = parse_constrain_on(get_or<std::string>(j, "constrain_on", "logits"));
            }
        },
        config.params);
    config.validate();
    return config;
}

}  // namespace

json to_json(const BenchConfig& config) {
    return {
        {"height", config.height},
        {"width", config.width},
        {"classes", config.num_classes},
        {"shapes", config.shapes},
        {"means", config.means},
        {"noise_std", config.noise_std},
        {"label_noise", config.label_noise},
        {"seed", config.seed},
    };
}

BenchConfig bench_config_from_json(const json& j) {
    require_object(j, "benchmark config");
    reject_unknown(j, {"height", "width", "classes", "shapes", "means", "noise_std", "label_noise", "seed"},
                   "a benchmark config");
    BenchConfig config;
    config.height = get_or(j, "height", config.height);
    config.width = get_or(j, "width", config.width);
    config.num_classes = get_or(j, "classes", config.num_classes);
    config.shapes = get_or(j, "shapes", config.shapes);
    if (j.contains("means")) {
        config.means = get_or(j, "means", config.means);
    } else if (config.num_classes != config.means.size()) {
        // Unit spacing by default.
        config.means.clear();
        for (std::size_t k = 0; k < config.num_classes; ++k) {
            config.means.push_back(static_cast<double>(k));
        }
    }
    config.noise_std = get_or(j, "noise_std", config.noise_std);
    config.label_noise = get_or(j, "label_noise", config.label_noise);
    config.seed = get_or(j, "seed", config.seed);
    config.validate();
    return config;
}

json to_json(const LossConfig& config) {
    json j{{"loss", std::string(to_string(config.kind()))}, {"reduction", std::string(to_string(config.reduction))}};
    std::visit(
        [&](const auto& p) {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, LsParams>) {
                j["alpha"] = p.alpha;
            } else if constexpr (std::is_same_v<P, FlParams>) {
                j["gamma"] = p.gamma;
            } else if constexpr (std::is_same_v<P, EcpParams>) {
                j["lambda"] = p.lambda;
            } else if constexpr (std::is_same_v<P, SvlsParams>) {
                j["sigma"] = p.sigma;
                j["kernel_size"] = p.kernel_size;
            } else if constexpr (std::is_same_v<P, MblsParams>) {
                j["lambda"] = p.lambda;
                j["margin"] = p.margin;
            } else if constexpr (std::is_same_v<P, NaclParams>) {
                j["lambda"] = p.lambda;
                j["prior"] = std::string(to_string(p.prior.mode));
                j["patch"] = p.prior.patch_size;
                j["normalize"] = p.prior.normalize;
                if (p.prior.mode == PriorMode::Gaussian) {
                    j["prior_sigma"] = p.prior.sigma;
                }
                j["penalty"] = std::string(to_string(p.penalty));
                j["constrain_on"] = std::string(to_string(p.constrain_on));
            }
        },
        config.params);
    return j;
}

LossConfig loss_config_from_json(const json& j) { return loss_from_json(j, {}, "a loss config"); }

json to_json(const TrainConfig& config) {
    json j = to_json(config.loss);
    j["steps"] = config.steps;
    j["lr"] = config.learning_rate;
    j["seed"] = config.seed;
    return j;
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig config;
    config.loss = loss_from_json(j, {"steps", "lr", "seed"}, "a training config");
    config.steps = get_or(j, "steps", config.steps);
    config.learning_rate = get_or(j, "lr", config.learning_rate);
    config.seed = get_or(j, "seed", config.seed);
    config.validate();
    return config;
}

json to_json(const CaseMetrics& metrics) {
    json hd = json::array();
    for (const auto& v : metrics.hd95) {
        hd.push_back(optional_number(v));
    }
    return {
        {"dsc", metrics.dsc},
        {"mean_dsc", metrics.mean_dsc},
        {"hd95", hd},
        {"mean_hd95", optional_number(metrics.mean_hd95)},
        {"ece", metrics.ece},
        {"cece", metrics.cece},
    };
}

CaseMetrics case_metrics_from_json(const json& j) {
    try {
        CaseMetrics m;
        m.dsc = j.at("dsc").get<std::vector<double>>();
        m.mean_dsc = j.at("mean_dsc").get<double>();
        for (const auto& v : j.at("hd95")) {
            m.hd95.push_back(v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
        }
        if (!j.at("mean_hd95").is_null()) {
            m.mean_hd95 = j.at("mean_hd95").get<double>();
        }
        m.ece = j.at("ece").get<double>();
        m.cece = j.at("cece").get<double>();
        return m;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed case metrics document: ") + e.what());
    }
}

json to_json(const RunReport& report) {
    json cases = json::array();
    for (const auto& c : report.cases) {
        cases.push_back(to_json(c));
    }
    json by_class = json::array();
    for (const auto& row : report.mean_abs_logit_by_class) {
        by_class.push_back(row.empty() ? json(nullptr) : json(row));
    }
    return {
        {"cases", cases},
        {"mean_dsc", report.mean_dsc},
        {"mean_hd95", optional_number(report.mean_hd95)},
        {"mean_ece", report.mean_ece},
        {"mean_cece", report.mean_cece},
        {"mean_abs_logit", report.mean_abs_logit},
        {"mean_abs_logit_by_class", by_class},
        {"posterior_l1", report.posterior_l1},
    };
}

json to_json(const RankResult& result, const std::vector<MetricColumn>& metrics) {
    json cols = json::array();
    for (const auto& m : metrics) {
        cols.push_back({{"name", m.name}, {"orientation", std::string(to_string(m.orientation))}});
    }
    std::vector<json> position(result.methods.size(), nullptr);
    for (std::size_t i = 0; i < result.order.size(); ++i) {
        position[result.order[i]] = i + 1;
    }
    json methods = json::array();
    for (std::size_t m = 0; m < result.methods.size(); ++m) {
        json ranks = json::array();
        for (double r : result.ranks[m]) {
            ranks.push_back(finite_or_null(r));
        }
        methods.push_back({
            {"name", result.methods[m]},
            {"score", finite_or_null(result.score[m])},
            {"position", position[m]},
            {"flagged", static_cast<bool>(result.flagged[m])},
            {"ranks", ranks},
        });
    }
    json order = json::array();
    for (std::size_t m : result.order) {
        order.push_back(result.methods[m]);
    }
    return {{"metrics", cols}, {"methods", methods}, {"order", order}};
}

json to_json(const LinearPixel& model) {
    json weights = json::array();
    for (std::size_t k = 0; k < model.num_classes; ++k) {
        weights.push_back(std::vector<double>(model.weights.begin() + static_cast<std::ptrdiff_t>(k * kPixelFeatures),
                                              model.weights.begin() +
                                                  static_cast<std::ptrdiff_t>((k + 1) * kPixelFeatures)));
    }
    return {
        {"model", "linear"},
        {"classes", model.num_classes},
        {"features", {"intensity", "mean3x3"}},
        {"weights", weights},
        {"bias", model.bias},
    };
}

LinearPixel linear_pixel_from_json(const json& j) {
    try {
        LinearPixel model;
        model.num_classes = j.at("classes").get<std::size_t>();
        for (const auto& row : j.at("weights")) {
            const auto w = row.get<std::vector<double>>();
            if (w.size() != kPixelFeatures) {
                throw FormatError("linear model weight row has the wrong width");
            }
            model.weights.insert(model.weights.end(), w.begin(), w.end());
        }
        model.bias = j.at("bias").get<std::vector<double>>();
        if (model.bias.size() != model.num_classes || model.weights.size() != model.num_classes * kPixelFeatures) {
            throw FormatError("linear model dimensions are inconsistent");
        }
        return model;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed linear model: ") + e.what());
    }
}

std::string file_digest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 initialisation failed");
    }
    std::array<char, 1 << 16> buffer{};
    while (in.read(buffer.data(), buffer.size()) || in.gcount() > 0) {
        EVP_DigestUpdate(ctx.get(), buffer.data(), static_cast<std::size_t>(in.gcount()));
    }
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int length = 0;
    EVP_DigestFinal_ex(ctx.get(), digest.data(), &length);
    std::ostringstream hex;
    for (unsigned int i = 0; i < length; ++i) {
        hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
    }
    return hex.str();
}

void write_json(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot open " + path.string() + " for writing");
    }
    out << j.dump(2) << '\n';
}

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

}  // namespace calibseg
