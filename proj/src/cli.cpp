#include "calibseg/cli.hpp"

#include "calibseg/error.hpp"
#include "calibseg/gradcheck.hpp"
#include "calibseg/io.hpp"
#include "calibseg/priors.hpp"
#include "calibseg/serialize.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <regex>
#include <set>

namespace calibseg::cli {

namespace fs = std::filesystem;

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string case_name(std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "case_%03zu", i);
    return buf;
}

// Flat config resolution: defaults, then the --config document, then flags.
class Resolver {
public:
    explicit Resolver(std::string subcommand) : subcommand_(std::move(subcommand)) {}

    template <typename T>
    CLI::Option* bind(CLI::App* app, const std::string& flag, const std::string& key, T& target,
                      const std::string& help) {
        CLI::Option* opt = app->add_option(flag, target, help);
        bindings_.push_back({opt, key, [&target]() { return json(target); }});
        return opt;
    }

    CLI::Option* bind_flag(CLI::App* app, const std::string& flag, const std::string& key, bool& target,
                           const std::string& help) {
        CLI::Option* opt = app->add_flag(flag, target, help);
        bindings_.push_back({opt, key, [&target]() { return json(target); }});
        return opt;
    }

    void add_config_option(CLI::App* app) {
        app->add_option("--config", config_path_, "flat JSON config or a manifest from an earlier run")
            ->check(CLI::ExistingFile);
    }

    // File values, overridden by any flag given on the command line.
    json resolve() const {
        json j = json::object();
        if (!config_path_.empty()) {
            j = read_json(config_path_);
            if (j.is_object() && j.contains("subcommand") && j.contains("config")) {
                if (j.at("subcommand") != subcommand_) {
                    throw InvalidConfig("manifest " + config_path_ + " belongs to '" +
                                        j.at("subcommand").dump() + "', not '" + subcommand_ + "'");
                }
                j = j.at("config");
            }
            if (!j.is_object()) {
                throw InvalidConfig("config " + config_path_ + " must be a JSON object");
            }
        }
        for (const auto& b : bindings_) {
            if (b.option->count() > 0) {
                j[b.key] = b.value();
            }
        }
        return j;
    }

private:
    struct Binding {
        CLI::Option* option;
        std::string key;
        std::function<json()> value;
    };
    std::string subcommand_;
    std::string config_path_;
    std::vector<Binding> bindings_;
};

template <typename T>
T take(json& j, const char* key, T fallback) {
    if (!j.contains(key)) {
        return fallback;
    }
    T v;
    try {
        v = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw InvalidConfig(std::string("config key '") + key + "': " + e.what());
    }
    j.erase(key);
    return v;
}

void reject_leftovers(const json& j, const std::string& subcommand) {
    if (!j.empty()) {
        throw InvalidConfig("key '" + j.begin().key() + "' is not valid for " + subcommand);
    }
}

std::size_t take_bins(json& j) {
    const auto bins = take<std::int64_t>(j, "bins", static_cast<std::int64_t>(kDefaultBins));
    if (bins < 1) {
        throw InvalidConfig("bins must be at least 1");
    }
    return static_cast<std::size_t>(bins);
}

void add_digest(json& inputs, const std::string& role, const fs::path& path) {
    inputs[role][path.filename().string()] = file_digest(path);
}

json make_manifest(const std::string& subcommand, const json& config, const json& inputs, const json& seeds) {
    return {
        {"subcommand", subcommand},
        {"tool_version", kToolVersion},
        {"config", config},
        {"inputs", inputs},
        {"seeds", seeds},
    };
}

fs::path sibling_manifest(const fs::path& out) { return fs::path(out.string() + ".manifest.json"); }

void ensure_parent(const fs::path& path) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
}

std::vector<BenchCase> load_dataset(const fs::path& dir, json& inputs, const std::string& role) {
    if (!fs::is_directory(dir)) {
        throw InvalidInput("dataset directory " + dir.string() + " does not exist");
    }
    static const std::regex pattern(R"(case_(\d+)_image\.fld)");
    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(dir)) {
        std::smatch m;
        const std::string name = entry.path().filename().string();
        if (std::regex_match(name, m, pattern)) {
            ids.push_back("case_" + m[1].str());
        }
    }
    std::sort(ids.begin(), ids.end());
    if (ids.empty()) {
        throw InvalidInput("no case_*_image.fld files in " + dir.string());
    }
    std::vector<BenchCase> data;
    for (const auto& id : ids) {
        const fs::path image = dir / (id + "_image.fld");
        const fs::path labels = dir / (id + "_labels.lab");
        const fs::path clean = dir / (id + "_clean.lab");
        const fs::path posterior = dir / (id + "_posterior.fld");
        for (const auto& p : {image, labels, clean, posterior}) {
            add_digest(inputs, role, p);
        }
        data.push_back({io::load_field(image), io::load_labels(labels), io::load_labels(clean),
                        io::load_field(posterior)});
        const auto& c = data.back();
        if (c.image.channels() != 1 || !c.image.same_grid(c.posterior) ||
            c.labels.height() != c.image.height() || c.labels.width() != c.image.width() ||
            c.clean.height() != c.image.height() || c.clean.width() != c.image.width() ||
            c.posterior.channels() != c.labels.num_classes() ||
            c.labels.num_classes() != data.front().labels.num_classes()) {
            throw InvalidInput("case " + id + " in " + dir.string() + " has inconsistent shapes");
        }
    }
    return data;
}

// ---------------------------------------------------------------- gen

struct GenArgs {
    Resolver resolver{"gen"};
    std::string out;
    std::size_t cases = 20, height = 0, width = 0, classes = 0, shapes = 0;
    std::vector<double> means;
    double noise_std = 0, label_noise = 0;
    std::uint64_t seed = 0;

    void attach(CLI::App* app) {
        resolver.add_config_option(app);
        app->add_option("--out", out, "output directory")->required();
        resolver.bind(app, "--cases", "cases", cases, "number of cases (default 20)");
        resolver.bind(app, "--height", "height", height, "grid height");
        resolver.bind(app, "--width", "width", width, "grid width");
        resolver.bind(app, "--classes", "classes", classes, "number of classes including background");
        resolver.bind(app, "--shapes", "shapes", shapes, "shapes per foreground class");
        resolver.bind(app, "--means", "means", means, "class intensity means, comma separated")->delimiter(',');
        resolver.bind(app, "--noise-std", "noise_std", noise_std, "intensity noise standard deviation");
        resolver.bind(app, "--label-noise", "label_noise", label_noise, "boundary label flip probability");
        resolver.bind(app, "--seed", "seed", seed, "random seed");
    }

    int run() {
        json j = resolver.resolve();
        const auto n_cases = take<std::int64_t>(j, "cases", 20);
        if (n_cases < 1) {
            throw InvalidConfig("cases must be at least 1");
        }
        const BenchConfig config = bench_config_from_json(j);
        const auto data = generate_dataset(config, static_cast<std::size_t>(n_cases));

        json resolved = to_json(config);
        resolved["cases"] = n_cases;
        const fs::path dir(out);
        fs::create_directories(dir);
        for (std::size_t i = 0; i < data.size(); ++i) {
            const std::string id = case_name(i);
            io::save_field(dir / (id + "_image.fld"), data[i].image);
            io::save_labels(dir / (id + "_labels.lab"), data[i].labels);
            io::save_labels(dir / (id + "_clean.lab"), data[i].clean);
            io::save_field(dir / (id + "_posterior.fld"), data[i].posterior);
        }
        write_json(dir / "manifest.json",
                   make_manifest("gen", resolved, json::object(), {{"data", config.seed}}));
        return kExitOk;
    }
};

// ---------------------------------------------------------------- train

struct TrainArgs {
    Resolver resolver{"train"};
    std::string data_dir, eval_dir, out;
    std::string loss, prior, penalty, constrain_on, reduction, model;
    double lambda = 0, alpha = 0, gamma = 0, margin = 0, sigma = 0, prior_sigma = 0, lr = 0;
    std::size_t kernel_size = 0, patch = 0, steps = 0, bins = 0;
    bool normalize = true, all_pixels = false;
    std::uint64_t seed = 0;

    void attach(CLI::App* app) {
        resolver.add_config_option(app);
        app->add_option("--data", data_dir, "training dataset directory written by gen")->required();
        app->add_option("--eval-data", eval_dir, "held-out dataset for the report (linear model only)");
        app->add_option("--out", out, "output directory")->required();
        resolver.bind(app, "--loss", "loss", loss, "ce | ls | fl | ecp | svls | mbls | nacl");
        resolver.bind(app, "--lambda", "lambda", lambda, "penalty weight (ecp, mbls, nacl)");
        resolver.bind(app, "--alpha", "alpha", alpha, "label smoothing factor (ls)");
        resolver.bind(app, "--gamma", "gamma", gamma, "focusing parameter (fl)");
        resolver.bind(app, "--margin", "margin", margin, "logit margin (mbls)");
        resolver.bind(app, "--sigma", "sigma", sigma, "Gaussian kernel sigma (svls)");
        resolver.bind(app, "--kernel-size", "kernel_size", kernel_size, "kernel size (svls)");
        resolver.bind(app, "--prior", "prior", prior, "prior mode (nacl)");
        resolver.bind(app, "--patch", "patch", patch, "prior patch size (nacl)");
        resolver.bind(app, "--prior-sigma", "prior_sigma", prior_sigma, "Gaussian prior sigma (nacl)");
        resolver.bind_flag(app, "--normalize,!--no-normalize", "normalize", normalize,
                           "normalize the Mean prior (nacl)");
        resolver.bind(app, "--penalty", "penalty", penalty, "linear | quadratic (nacl)");
        resolver.bind(app, "--constrain-on", "constrain_on", constrain_on, "logits | softmax (nacl)");
        resolver.bind(app, "--reduction", "reduction", reduction, "mean | sum");
        resolver.bind(app, "--steps", "steps", steps, "gradient steps (default 2000)");
        resolver.bind(app, "--lr", "lr", lr, "learning rate (default 0.1)");
        resolver.bind(app, "--seed", "seed", seed, "initialisation seed");
        resolver.bind(app, "--model", "model", model, "direct | linear (default direct)");
        resolver.bind(app, "--bins", "bins", bins, "calibration bins in the report (default 15)");
        resolver.bind_flag(app, "--all-pixels", "all_pixels", all_pixels, "report ECE over all pixels");
    }

    int run() {
        json j = resolver.resolve();
        const std::string model_name = take<std::string>(j, "model", "direct");
        const std::size_t n_bins = take_bins(j);
        const bool every_pixel = take<bool>(j, "all_pixels", false);
        ModelKind kind;
        if (model_name == "direct") {
            kind = ModelKind::Direct;
        } else if (model_name == "linear") {
            kind = ModelKind::Linear;
        } else {
            throw InvalidConfig("unknown model '" + model_name + "'");
        }
        const TrainConfig config = train_config_from_json(j);
        if (kind == ModelKind::Direct && !eval_dir.empty()) {
            throw InvalidConfig("the direct model has one logit field per training case and cannot be evaluated "
                                "on --eval-data");
        }

        json inputs = json::object();
        const auto data = load_dataset(data_dir, inputs, "data");
        std::vector<BenchCase> held_out;
        if (!eval_dir.empty()) {
            held_out = load_dataset(eval_dir, inputs, "eval_data");
            if (held_out.front().labels.num_classes() != data.front().labels.num_classes()) {
                throw InvalidInput("--eval-data has a different class count");
            }
        }
        const std::size_t num_classes = data.front().labels.num_classes();
        const TrainResult result = train(init_model(kind, data, num_classes, config.seed), data, config);
        const RunReport report = evaluate_run(result.params, held_out.empty() ? data : held_out, n_bins,
                                              !every_pixel);

        json resolved = to_json(config);
        resolved["model"] = model_name;
        resolved["bins"] = n_bins;
        resolved["all_pixels"] = every_pixel;

        const fs::path dir(out);
        fs::create_directories(dir);
        if (const auto* direct = std::get_if<DirectLogit>(&result.params)) {
            json files = json::array();
            for (std::size_t i = 0; i < direct->logits.size(); ++i) {
                const std::string name = "logits_" + case_name(i).substr(5) + ".fld";
                io::save_field(dir / name, direct->logits[i]);
                files.push_back(name);
            }
            write_json(dir / "params.json", {{"model", "direct"}, {"classes", num_classes}, {"logits", files}});
        } else {
            write_json(dir / "params.json", to_json(std::get<LinearPixel>(result.params)));
        }
        {
            std::ofstream trace(dir / "trace.csv", std::ios::binary | std::ios::trunc);
            trace << "step,loss\n";
            for (std::size_t s = 0; s < result.trace.size(); ++s) {
                trace << s << ',' << num(result.trace[s]) << '\n';
            }
        }
        write_json(dir / "report.json", to_json(report));
        write_json(dir / "manifest.json", make_manifest("train", resolved, inputs, {{"init", config.seed}}));
        return kExitOk;
    }
};

// ---------------------------------------------------------------- eval

struct EvalArgs {
    Resolver resolver{"eval"};
    std::string pred, logits, gt, out, reliability;
    std::size_t bins = 0;
    bool all_pixels = false;

    void attach(CLI::App* app) {
        resolver.add_config_option(app);
        auto* p = app->add_option("--pred", pred, "predicted probabilities (.fld)");
        auto* l = app->add_option("--logits", logits, "predicted logits (.fld), softmax applied");
        p->excludes(l);
        app->add_option("--gt", gt, "ground-truth labels (.lab)")->required();
        app->add_option("--out", out, "CaseMetrics JSON output")->required();
        app->add_option("--reliability", reliability, "reliability table CSV output");
        resolver.bind(app, "--bins", "bins", bins, "calibration bins (default 15)");
        resolver.bind_flag(app, "--all-pixels", "all_pixels", all_pixels, "ECE over all pixels");
    }

    int run() {
        if (pred.empty() == logits.empty()) {
            throw InvalidConfig("exactly one of --pred and --logits is required");
        }
        json j = resolver.resolve();
        const std::size_t n_bins = take_bins(j);
        const bool every_pixel = take<bool>(j, "all_pixels", false);
        reject_leftovers(j, "eval");

        json inputs = json::object();
        const fs::path pred_path = pred.empty() ? fs::path(logits) : fs::path(pred);
        add_digest(inputs, pred.empty() ? "logits" : "pred", pred_path);
        add_digest(inputs, "gt", gt);
        Field field = io::load_field(pred_path);
        const LabelMap labels = io::load_labels(gt);
        require_compatible(field, labels);
        if (!pred.empty()) {
            if (!on_simplex(field, 1e-9)) {
                throw InvalidInput("--pred must hold probabilities on the simplex; pass logits with --logits");
            }
        } else {
            field = softmax(field);
        }
        const CaseMetrics metrics = evaluate_case(field, labels, n_bins, !every_pixel);

        const json resolved{{"bins", n_bins}, {"all_pixels", every_pixel}};
        ensure_parent(out);
        write_json(out, to_json(metrics));
        write_json(sibling_manifest(out), make_manifest("eval", resolved, inputs, json::object()));
        if (!reliability.empty()) {
            const auto rows = reliability_bins(field, labels, n_bins, !every_pixel);
            ensure_parent(reliability);
            std::ofstream csv(reliability, std::ios::binary | std::ios::trunc);
            csv << "bin_lo,bin_hi,count,accuracy,confidence\n";
            for (const auto& b : rows) {
                csv << num(b.lower) << ',' << num(b.upper) << ',' << b.count << ','
                    << (b.accuracy ? num(*b.accuracy) : "") << ',' << (b.confidence ? num(*b.confidence) : "")
                    << '\n';
            }
        }
        return kExitOk;
    }
};

// ---------------------------------------------------------------- rank

struct RankArgs {
    Resolver resolver{"rank"};
    std::string table, cases_dir, out, mode;

    void attach(CLI::App* app) {
        resolver.add_config_option(app);
        app->add_option("--table", table, "metric table CSV (sum mode)");
        app->add_option("--cases", cases_dir, "directory of <method>/<case>.json files (case mode)");
        app->add_option("--out", out, "RankResult JSON output (stdout when omitted)");
        resolver.bind(app, "--mode", "mode", mode, "sum | case (default sum)");
    }

    static CaseTable load_cases(const fs::path& dir, json& inputs) {
        if (!fs::is_directory(dir)) {
            throw InvalidInput("case directory " + dir.string() + " does not exist");
        }
        CaseTable t;
        t.metrics = {{"mean_dsc", Orientation::HigherBetter},
                     {"mean_hd95", Orientation::LowerBetter},
                     {"ece", Orientation::LowerBetter},
                     {"cece", Orientation::LowerBetter}};
        std::map<std::string, std::map<std::string, fs::path>> files;
        std::set<std::string> case_ids;
        for (const auto& m : fs::directory_iterator(dir)) {
            if (!m.is_directory()) {
                continue;
            }
            auto& per_method = files[m.path().filename().string()];
            for (const auto& f : fs::directory_iterator(m.path())) {
                if (f.is_regular_file() && f.path().extension() == ".json" &&
                    f.path().filename().string().find(".manifest.") == std::string::npos) {
                    per_method[f.path().stem().string()] = f.path();
                    case_ids.insert(f.path().stem().string());
                }
            }
        }
        if (files.empty() || case_ids.empty()) {
            throw InvalidInput("no <method>/<case>.json files under " + dir.string());
        }
        for (const auto& [method, per_method] : files) {
            t.methods.push_back(method);
        }
        const double undefined = std::numeric_limits<double>::quiet_NaN();
        for (const auto& id : case_ids) {
            t.cases.push_back(id);
            std::vector<std::vector<double>> block;
            for (const auto& method : t.methods) {
                const auto& per_method = files.at(method);
                const auto it = per_method.find(id);
                if (it == per_method.end()) {
                    block.push_back(std::vector<double>(t.metrics.size(), undefined));
                    continue;
                }
                inputs["cases"][method + "/" + it->second.filename().string()] = file_digest(it->second);
                const CaseMetrics cm = case_metrics_from_json(read_json(it->second));
                block.push_back({cm.mean_dsc, cm.mean_hd95.value_or(undefined), cm.ece, cm.cece});
            }
            t.values.push_back(std::move(block));
        }
        return t;
    }

    int run(std::ostream& stdout_stream) {
        json j = resolver.resolve();
        const std::string m = take<std::string>(j, "mode", "sum");
        reject_leftovers(j, "rank");
        json inputs = json::object();
        json doc;
        if (m == "sum") {
            if (table.empty()) {
                throw InvalidConfig("--mode sum needs --table");
            }
            std::ifstream in(table);
            if (!in) {
                throw InvalidInput("cannot open " + table);
            }
            add_digest(inputs, "table", table);
            const MetricTable t = read_metric_table_csv(in);
            doc = to_json(sum_rank(t), t.metrics);
        } else if (m == "case") {
            if (cases_dir.empty()) {
                throw InvalidConfig("--mode case needs --cases");
            }
            const CaseTable t = load_cases(cases_dir, inputs);
            doc = to_json(mean_case_rank(t), t.metrics);
            doc["cases"] = t.cases;
        } else {
            throw InvalidConfig("unknown rank mode '" + m + "'");
        }
        doc["mode"] = m;
        if (out.empty()) {
            stdout_stream << doc.dump(2) << '\n';
        } else {
            ensure_parent(out);
            write_json(out, doc);
            write_json(sibling_manifest(out), make_manifest("rank", {{"mode", m}}, inputs, json::object()));
        }
        return kExitOk;
    }
};

// ---------------------------------------------------------------- gradcheck

struct GradcheckArgs {
    std::string losses = "all";
    std::uint64_t seed = 7;
    std::size_t trials = 20;
    double tolerance = 1e-6;

    void attach(CLI::App* app) {
        app->add_option("--loss", losses, "all, or a comma-separated list of losses")->capture_default_str();
        app->add_option("--seed", seed, "random seed")->capture_default_str();
        app->add_option("--trials", trials, "random fields per loss")->capture_default_str();
        app->add_option("--tolerance", tolerance, "maximum accepted relative error")->capture_default_str();
    }

    int run(std::ostream& os) {
        std::vector<LossKind> kinds;
        if (losses == "all") {
            kinds.assign(std::begin(kAllLossKinds), std::end(kAllLossKinds));
        } else {
            std::stringstream ss(losses);
            std::string name;
            while (std::getline(ss, name, ',')) {
                kinds.push_back(parse_loss_kind(name));
            }
        }
        if (kinds.empty() || trials == 0) {
            throw InvalidConfig("gradcheck needs at least one loss and one trial");
        }
        const auto rows = gradcheck_suite(kinds, seed, trials);
        bool ok = true;
        os << "loss,max_rel_error,checked,skipped,status\n";
        for (const auto& row : rows) {
            const bool pass = row.result.max_rel_error < tolerance;
            ok = ok && pass;
            char err_buf[32];
            std::snprintf(err_buf, sizeof err_buf, "%.3e", row.result.max_rel_error);
            os << to_string(row.kind) << ',' << err_buf << ',' << row.result.checked << ',' << row.result.skipped
               << ',' << (pass ? "ok" : "FAIL") << '\n';
        }
        return ok ? kExitOk : kExitCheckFailed;
    }
};

// ---------------------------------------------------------------- kernel

struct KernelArgs {
    std::size_t size = 3;
    double sigma = 1.0;

    void attach(CLI::App* app) {
        app->add_option("--size", size, "odd kernel size")->capture_default_str();
        app->add_option("--sigma", sigma, "Gaussian sigma")->capture_default_str();
    }

    int run(std::ostream& os) {
        const Kernel k = gaussian_kernel(size, sigma);
        const auto half = static_cast<long>(k.cols() / 2);
        os << "offset";
        for (long c = -half; c <= half; ++c) {
            os << ',' << c;
        }
        os << '\n';
        for (std::size_t r = 0; r < k.rows(); ++r) {
            os << static_cast<long>(r) - half;
            for (std::size_t c = 0; c < k.cols(); ++c) {
                os << ',' << num(k(r, c));
            }
            os << '\n';
        }
        return kExitOk;
    }
};

// ---------------------------------------------------------------- prior

struct PriorArgs {
    Resolver resolver{"prior"};
    std::string labels, out, mode;
    std::size_t patch = 0;
    double sigma = 0;
    bool normalize = true;

    void attach(CLI::App* app) {
        resolver.add_config_option(app);
        app->add_option("--labels", labels, "label map (.lab)")->required();
        app->add_option("--out", out, "PriorField output (.fld)")->required();
        resolver.bind(app, "--mode", "mode", mode, "mean | gaussian | max | min | median | mode (default mean)");
        resolver.bind(app, "--patch", "patch", patch, "odd patch size (default 3)");
        resolver.bind(app, "--sigma", "sigma", sigma, "Gaussian prior sigma (default 1)");
        resolver.bind_flag(app, "--normalize,!--no-normalize", "normalize", normalize,
                           "divide the Mean prior by the patch size");
    }

    int run() {
        json j = resolver.resolve();
        PriorConfig config;
        config.mode = parse_prior_mode(take<std::string>(j, "mode", "mean"));
        config.patch_size = take<std::size_t>(j, "patch", config.patch_size);
        config.sigma = take<double>(j, "sigma", config.sigma);
        config.normalize = take<bool>(j, "normalize", config.normalize);
        reject_leftovers(j, "prior");
        config.validate();

        json inputs = json::object();
        add_digest(inputs, "labels", labels);
        const PriorField tau = prior_field(io::load_labels(labels), config);
        json resolved{{"mode", std::string(to_string(config.mode))},
                      {"patch", config.patch_size},
                      {"normalize", config.normalize}};
        if (config.mode == PriorMode::Gaussian) {
            resolved["sigma"] = config.sigma;
        }
        ensure_parent(out);
        io::save_field(out, tau);
        write_json(sibling_manifest(out), make_manifest("prior", resolved, inputs, json::object()));
        return kExitOk;
    }
};

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Calibration losses, metrics and a synthetic segmentation benchmark", "calibseg"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    GenArgs gen;
    TrainArgs tr;
    EvalArgs ev;
    RankArgs rk;
    GradcheckArgs gc;
    KernelArgs kn;
    PriorArgs pr;
    auto* gen_cmd = app.add_subcommand("gen", "generate a synthetic dataset");
    auto* train_cmd = app.add_subcommand("train", "train a toy model on a generated dataset");
    auto* eval_cmd = app.add_subcommand("eval", "score one prediction against its ground truth");
    auto* rank_cmd = app.add_subcommand("rank", "aggregate metric ranks across methods");
    auto* grad_cmd = app.add_subcommand("gradcheck", "compare analytic and numerical loss gradients");
    auto* kernel_cmd = app.add_subcommand("kernel", "print a Gaussian kernel as CSV");
    auto* prior_cmd = app.add_subcommand("prior", "compute a prior field from a label map");
    gen.attach(gen_cmd);
    tr.attach(train_cmd);
    ev.attach(eval_cmd);
    rk.attach(rank_cmd);
    gc.attach(grad_cmd);
    kn.attach(kernel_cmd);
    pr.attach(prior_cmd);

    std::vector<std::string> argv_storage{"calibseg"};
    argv_storage.insert(argv_storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : argv_storage) {
        argv.push_back(a.data());
    }

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << kToolVersion << '\n';
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n";
        const CLI::App* failing = &app;
        for (auto* sub : app.get_subcommands()) {
            failing = sub;
        }
        err << failing->help();
        return kExitInvalid;
    }

    try {
        if (gen_cmd->parsed()) {
            return gen.run();
        }
        if (train_cmd->parsed()) {
            return tr.run();
        }
        if (eval_cmd->parsed()) {
            return ev.run();
        }
        if (rank_cmd->parsed()) {
            return rk.run(out);
        }
        if (grad_cmd->parsed()) {
            return gc.run(out);
        }
        if (kernel_cmd->parsed()) {
            return kn.run(out);
        }
        if (prior_cmd->parsed()) {
            return pr.run();
        }
    } catch (const FormatError& e) {
        err << "format error: " << e.what() << '\n';
        return kExitInvalid;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitInvalid;
    }
    err << app.help();
    return kExitInvalid;
}

int dispatch(int argc, char** argv) {
    std::vector<std::string> args(argv + (argc > 0 ? 1 : 0), argv + argc);
    return dispatch(args, std::cout, std::cerr);
}

}  // namespace calibseg::cli
