#pragma once

// Command-line front end: erode, shift, gradcheck, oracle-diff, train,
// heatmap. Exit codes: 0 success, 1 a check failed, 2 usage or input error.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "evenpad/analysis.hpp"
#include "evenpad/data.hpp"
#include "evenpad/nn.hpp"
#include "evenpad/report.hpp"
#include "evenpad/verify.hpp"

namespace evenpad::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;

namespace detail {

inline bool parse_on_off(const std::string& v, const char* flag) {
    if (v == "on") {
        return true;
    }
    if (v == "off") {
        return false;
    }
    throw std::invalid_argument(std::string(flag) + " expects on or off");
}

inline std::vector<std::size_t> parse_index_list(const std::string& s) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) {
            out.push_back(std::stoul(item));
        }
    }
    return out;
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw std::runtime_error("cannot open " + path + " for writing");
    }
    return os;
}

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

template <typename T>
std::string join(const std::vector<T>& v) {
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size(); ++i) {
        os << (i ? "," : "") << v[i];
    }
    return os.str();
}

}  // namespace detail

// ---------------------------------------------------------------------------

struct ErodeOptions {
    std::string kernels = "C2,C2sp,C3,C4,C4sp,C5";
    std::size_t depth = 54;
    std::size_t width = 16;
    std::size_t input = 32;
    std::size_t seeds = 20;
    std::uint64_t seed = 1;
    std::size_t batch = 256;
    std::string relu = "on";
    std::string measure = "post";
    std::string downsample = "18,36";
    unsigned threads = 1;
    std::string images;
    std::string out = "erosion.csv";
    std::string svg;
};

inline int run_erode(const ErodeOptions& o, std::ostream& out) {
    ErosionConfig cfg;
    cfg.kernels = parse_kernel_tags(o.kernels);
    cfg.depth = o.depth;
    cfg.width = o.width;
    cfg.input_size = o.input;
    cfg.batch = o.batch;
    cfg.seeds.clear();
    for (std::size_t i = 0; i < o.seeds; ++i) {
        cfg.seeds.push_back(o.seed + i);
    }
    cfg.relu = detail::parse_on_off(o.relu, "--relu");
    if (o.measure != "post" && o.measure != "pre") {
        throw std::invalid_argument("--measure expects post or pre");
    }
    cfg.post_relu = o.measure == "post";
    cfg.downsample_after = detail::parse_index_list(o.downsample);
    cfg.threads = o.threads;
    if (!o.images.empty()) {
        std::ifstream is(o.images, std::ios::binary);
        if (!is) {
            throw std::runtime_error("cannot open " + o.images);
        }
        const IdxImages img = read_idx_images(is);
        const auto batch = std::min<std::size_t>(img.count, o.batch);
        Tensor t({batch, 1, img.rows, img.cols});
        for (std::size_t i = 0; i < t.size(); ++i) {
            t[i] = static_cast<double>(img.pixels[i]) / 255.0;
        }
        cfg.input = std::move(t);
    }

    out << "# resolved: erode --kernels " << o.kernels << " --depth " << o.depth << " --width " << o.width
        << " --input " << o.input << " --seeds " << o.seeds << " --seed " << o.seed << " --batch " << o.batch
        << " --relu " << o.relu << " --measure " << o.measure << " --downsample " << o.downsample << " --threads "
        << o.threads << (o.images.empty() ? "" : " --images " + o.images) << " --out " << o.out << '\n';

    const ErosionReport report = run_erosion(cfg);
    {
        auto os = detail::open_out(o.out);
        report.write_csv(os);
    }
    if (!o.svg.empty()) {
        std::vector<Series> series;
        for (KernelTag t : cfg.kernels) {
            Series s{std::string(to_string(t)), {}};
            for (std::size_t l = cfg.depth == 0 ? 0 : 1; l <= cfg.depth; ++l) {
                s.points.emplace_back(static_cast<double>(l), report.mean_q(t, l));
            }
            series.push_back(std::move(s));
        }
        auto os = detail::open_out(o.svg);
        write_svg_lines(os, series, "mean Q per layer", true);
    }

    std::size_t monotone = 0;
    for (const auto& r : report.records) {
        monotone += strictly_decreasing(r) ? 1 : 0;
    }
    out << "records strictly decreasing: " << monotone << "/" << report.records.size() << '\n';

    if (cfg.depth == 0) {
        return kExitOk;
    }
    std::size_t check_layer = cfg.depth;
    if (!cfg.downsample_after.empty() && cfg.downsample_after.front() >= 1 && cfg.downsample_after.front() <= cfg.depth) {
        check_layer = cfg.downsample_after.front();
    }
    out << "mean Q at layer " << check_layer << ':';
    for (KernelTag t : cfg.kernels) {
        out << ' ' << to_string(t) << '=' << report.mean_q(t, check_layer);
    }
    out << '\n';
    bool ok = true;
    for (const GapCheck& g : erosion_ordering(report, check_layer)) {
        out << "check Q(" << to_string(g.higher) << ") > Q(" << to_string(g.lower) << "): gap " << g.mean_gap
            << " vs 2*SE " << 2.0 * g.standard_error << (g.passed() ? " PASS" : " FAIL") << '\n';
        ok = ok && g.passed();
    }
    return ok ? kExitOk : kExitCheckFailed;
}

// ---------------------------------------------------------------------------

struct ShiftOptions {
    std::string kernel = "C2";
    std::string policy = "lt";
    std::size_t depth = 16;
    std::size_t size = 65;
    std::size_t channels = 4;
    std::string content = "uniform";
    std::string relu = "on";
    std::uint64_t seed = 1;
    double tol = 1.0;
    std::string out = "shift.csv";
    std::string dump;
    std::string heatmap;
    std::string svg;
};

inline int run_shift_cmd(const ShiftOptions& o, std::ostream& out) {
    ShiftConfig cfg;
    cfg.kernel = parse_kernel_tag(o.kernel);
    cfg.direction = parse_direction(o.policy);
    cfg.depth = o.depth;
    cfg.size = o.size;
    cfg.channels = o.channels;
    if (o.content != "uniform" && o.content != "random") {
        throw std::invalid_argument("--kernel-content expects uniform or random");
    }
    cfg.content = o.content == "uniform" ? KernelContent::Uniform : KernelContent::Random;
    cfg.relu = detail::parse_on_off(o.relu, "--relu");
    cfg.seed = o.seed;
    if (cfg.size == 0) {
        throw std::invalid_argument("--size must be positive");
    }

    out << "# resolved: shift --kernel " << o.kernel << " --policy " << o.policy << " --depth " << o.depth
        << " --size " << o.size << " --channels " << o.channels << " --kernel-content " << o.content << " --relu "
        << o.relu << " --seed " << o.seed << " --tol " << o.tol << " --out " << o.out << '\n';

    const ShiftReport r = run_shift(cfg);
    {
        auto os = detail::open_out(o.out);
        r.write_csv(os);
    }
    if (!o.dump.empty()) {
        save_tensor(o.dump, r.final_map);
    }
    if (!o.heatmap.empty() && !r.truncated) {
        export_heatmap(r.final_map, o.heatmap);
    }
    if (!o.svg.empty()) {
        Series dy{"dy", {}}, dx{"dx", {}};
        for (const auto& s : r.steps) {
            dy.points.emplace_back(static_cast<double>(s.layer), s.dy);
            dx.points.emplace_back(static_cast<double>(s.layer), s.dx);
        }
        auto os = detail::open_out(o.svg);
        write_svg_lines(os, {dy, dx}, "centroid displacement per layer");
    }

    const Centroid d = r.final_displacement();
    out << std::setprecision(10) << "final displacement (dy, dx) = (" << d.y << ", " << d.x << ")  predicted = ("
        << r.predicted.y << ", " << r.predicted.x << ")\n";
    if (r.truncated) {
        out << "feature map vanished after layer " << r.steps.back().layer << "; trajectory truncated\n";
        return kExitCheckFailed;
    }
    if (cfg.content == KernelContent::Uniform &&
        (std::abs(d.y - r.predicted.y) > o.tol || std::abs(d.x - r.predicted.x) > o.tol)) {
        out << "displacement deviates from prediction by more than " << o.tol << '\n';
        return kExitCheckFailed;
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct GradcheckOptions {
    std::string spec = kDefaultGradcheckSpec;
    std::size_t batch = 2;
    double step = 1e-6;
    double tol = 1e-4;
    std::uint64_t seed = 1;
};

inline int run_gradcheck(const GradcheckOptions& o, std::ostream& out) {
    const NetworkSpec spec = parse_network_spec(o.spec);
    out << "# resolved: gradcheck --spec " << spec.to_string() << " --batch " << o.batch << " --step " << o.step
        << " --tol " << o.tol << " --seed " << o.seed << '\n';
    const GradCheckReport r = check_network_gradients(spec, o.batch, o.step, o.seed);
    bool ok = true;
    for (const auto& e : r.entries) {
        const bool pass = e.max_rel_error <= o.tol;
        ok = ok && pass;
        out << e.name << " n=" << e.elements << " max_rel_err=" << e.max_rel_error << (pass ? " PASS" : " FAIL")
            << '\n';
    }
    out << "overall max_rel_err=" << r.max_rel_error() << '\n';
    return ok ? kExitOk : kExitCheckFailed;
}

// ---------------------------------------------------------------------------

struct OracleDiffOptions {
    std::size_t cases = 50;
    double tol = 1e-12;
    std::uint64_t seed = 1;
};

inline int run_oracle_diff(const OracleDiffOptions& o, std::ostream& out) {
    out << "# resolved: oracle-diff --cases " << o.cases << " --tol " << o.tol << " --seed " << o.seed << '\n';
    std::mt19937_64 rng(o.seed);
    bool ok = true;
    double worst = 0.0;
    std::size_t total = 0;
    for (const OracleConfig& cfg : oracle_configs()) {
        for (std::size_t i = 0; i < o.cases; ++i) {
            const OracleCase c = run_oracle_case(cfg, rng);
            const bool pass = c.max_abs_diff <= o.tol;
            ok = ok && pass;
            worst = std::max(worst, c.max_abs_diff);
            ++total;
            out << "k=" << cfg.k << " policy=" << to_string(cfg.policy) << " stride=" << cfg.stride
                << " input=" << to_string(c.input) << " c_out=" << c.out_channels << " max_abs_diff=" << c.max_abs_diff
                << (pass ? " PASS" : " FAIL") << '\n';
        }
    }
    out << "cases=" << total << " worst=" << worst << '\n';
    return ok ? kExitOk : kExitCheckFailed;
}

// ---------------------------------------------------------------------------

struct TrainOptions {
    std::string task = "quadrant";
    std::string kernel = "C2,C2sp,C3";
    std::size_t depth = 12;
    std::size_t width = 16;
    std::size_t epochs = 30;
    std::size_t seeds = 5;
    std::uint64_t seed = 1;
    std::size_t size = 16;
    std::size_t train_size = 400;
    std::size_t test_size = 400;
    double noise = 0.3;
    std::size_t batch = 32;
    double lr = 0.1;
    double momentum = 0.9;
    double wd = 1e-4;
    double step_gamma = 0.1;
    std::size_t step_every = 20;
    std::size_t input_channels = 4;
    std::string images, labels, test_images, test_labels;
    std::string out = "metrics.csv";
    std::string model_dir;
};

struct TrainSummary {
    std::map<KernelTag, std::vector<double>> final_accuracy;  // per kernel, seed order

    [[nodiscard]] double median_accuracy(KernelTag t) const { return detail::median(final_accuracy.at(t)); }
};

inline TrainSummary train_runs(const TrainOptions& o, std::ostream& metrics) {
    const auto tags = parse_kernel_tags(o.kernel);
    if (tags.empty()) {
        throw std::invalid_argument("--kernel needs at least one tag");
    }
    TrainSummary summary;
    bool header = true;
    for (KernelTag tag : tags) {
        for (std::size_t i = 0; i < o.seeds; ++i) {
            const std::uint64_t seed = o.seed + i;
            Dataset train, test;
            if (o.task == "quadrant") {
                auto splits = make_quadrant_task(o.train_size, o.test_size, o.size, o.noise, seed);
                train = std::move(splits.train);
                test = std::move(splits.test);
            } else if (o.task == "idx") {
                if (o.images.empty() || o.labels.empty() || o.test_images.empty() || o.test_labels.empty()) {
                    throw std::invalid_argument("--task idx needs --images, --labels, --test-images, --test-labels");
                }
                train = load_idx(o.images, o.labels);
                test = load_idx(o.test_images, o.test_labels);
            } else {
                throw std::invalid_argument("unknown task '" + o.task + "'");
            }
            const std::size_t classes = static_cast<std::size_t>(std::max(train.classes, test.classes));
            const NetworkSpec spec = plain_conv_net(tag, o.depth, o.width, o.input_channels, train.images.shape().h,
                                                    classes);
            TrainConfig cfg;
            cfg.epochs = o.epochs;
            cfg.batch_size = o.batch;
            cfg.learning_rate = o.lr;
            cfg.momentum = o.momentum;
            cfg.weight_decay = o.wd;
            cfg.seed = seed;
            cfg.step_gamma = o.step_gamma;
            cfg.step_every = o.step_every;
            const TrainResult r = train_and_eval(spec, cfg, train, test);
            write_metrics_csv(metrics, tag, seed, r, header);
            header = false;
            summary.final_accuracy[tag].push_back(r.final_accuracy());
            if (!o.model_dir.empty()) {
                auto os = detail::open_out(o.model_dir + "/model_" + std::string(to_string(tag)) + "_" +
                                           std::to_string(seed) + ".bin");
                write_model(os, r.network);
            }
        }
    }
    return summary;
}

inline int run_train(const TrainOptions& o, std::ostream& out) {
    out << "# resolved: train --task " << o.task << " --kernel " << o.kernel << " --depth " << o.depth << " --width "
        << o.width << " --epochs " << o.epochs << " --seeds " << o.seeds << " --seed " << o.seed << " --size "
        << o.size << " --train-size " << o.train_size << " --test-size " << o.test_size << " --noise " << o.noise
        << " --batch " << o.batch << " --lr " << o.lr << " --momentum " << o.momentum << " --wd " << o.wd
        << " --step-gamma " << o.step_gamma << " --step-every " << o.step_every << " --input-channels "
        << o.input_channels << " --out " << o.out << '\n';
    auto metrics = detail::open_out(o.out);
    const TrainSummary s = train_runs(o, metrics);
    for (const auto& [tag, accs] : s.final_accuracy) {
        out << "median final test accuracy " << to_string(tag) << " = " << s.median_accuracy(tag) << " (seeds: "
            << detail::join(accs) << ")\n";
    }
    if (s.final_accuracy.count(KernelTag::C2) && s.final_accuracy.count(KernelTag::C2sp)) {
        const bool ok = s.median_accuracy(KernelTag::C2sp) > s.median_accuracy(KernelTag::C2);
        out << "check median C2sp > median C2: " << (ok ? "PASS" : "FAIL") << '\n';
        return ok ? kExitOk : kExitCheckFailed;
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct HeatmapOptions {
    std::string from;
    std::string out = "heatmap.pgm";
};

inline int run_heatmap(const HeatmapOptions& o, std::ostream& out) {
    out << "# resolved: heatmap --from " << o.from << " --out " << o.out << '\n';
    const Tensor t = load_tensor(o.from);
    export_heatmap(t, o.out);
    out << "wrote " << t.shape().h << "x" << t.shape().w << " heatmap\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"evenpad: even-sized kernels, grouped symmetric padding and shift diagnostics"};
    app.require_subcommand(1);

    ErodeOptions erode;
    auto* e = app.add_subcommand("erode", "layerwise information quantity of deep untrained conv stacks");
    e->add_option("--kernels", erode.kernels, "comma-separated kernel tags")->capture_default_str();
    e->add_option("--depth", erode.depth)->capture_default_str();
    e->add_option("--width", erode.width)->capture_default_str();
    e->add_option("--input", erode.input, "input spatial size")->capture_default_str();
    e->add_option("--seeds", erode.seeds, "number of seeds")->capture_default_str();
    e->add_option("--seed", erode.seed, "first seed")->envname("EVENPAD_SEED")->capture_default_str();
    e->add_option("--batch", erode.batch)->capture_default_str();
    e->add_option("--relu", erode.relu, "on|off")->capture_default_str();
    e->add_option("--measure", erode.measure, "post|pre (relative to ReLU)")->capture_default_str();
    e->add_option("--downsample", erode.downsample, "layers followed by stride-2 down-sampling")->capture_default_str();
    e->add_option("--threads", erode.threads)->capture_default_str();
    e->add_option("--images", erode.images, "IDX image file used instead of random input");
    e->add_option("--out", erode.out)->capture_default_str();
    e->add_option("--svg", erode.svg, "also write a line plot");

    ShiftOptions shift;
    auto* s = app.add_subcommand("shift", "centroid drift of a delta through a conv stack");
    s->add_option("--kernel", shift.kernel)->capture_default_str();
    s->add_option("--policy", shift.policy, "lt|rt|lb|rb origin for plain even kernels")->capture_default_str();
    s->add_option("--depth", shift.depth)->capture_default_str();
    s->add_option("--size", shift.size)->capture_default_str();
    s->add_option("--channels", shift.channels)->capture_default_str();
    s->add_option("--kernel-content", shift.content, "uniform|random")->capture_default_str();
    s->add_option("--relu", shift.relu, "on|off")->capture_default_str();
    s->add_option("--seed", shift.seed)->envname("EVENPAD_SEED")->capture_default_str();
    s->add_option("--tol", shift.tol, "allowed deviation from the drift law (uniform kernels)")->capture_default_str();
    s->add_option("--out", shift.out)->capture_default_str();
    s->add_option("--dump", shift.dump, "write the final feature map as a tensor file");
    s->add_option("--heatmap", shift.heatmap, "write the final feature map as PGM");
    s->add_option("--svg", shift.svg, "also write a line plot");

    GradcheckOptions grad;
    auto* g = app.add_subcommand("gradcheck", "finite-difference check of network gradients");
    g->add_option("--spec", grad.spec, "network spec string")->capture_default_str();
    g->add_option("--batch", grad.batch)->capture_default_str();
    g->add_option("--step", grad.step)->capture_default_str();
    g->add_option("--tol", grad.tol)->capture_default_str();
    g->add_option("--seed", grad.seed)->envname("EVENPAD_SEED")->capture_default_str();

    OracleDiffOptions oracle;
    auto* od = app.add_subcommand("oracle-diff", "fused convolution against the brute-force oracle");
    od->add_option("--cases", oracle.cases, "cases per configuration")->capture_default_str();
    od->add_option("--tol", oracle.tol)->capture_default_str();
    od->add_option("--seed", oracle.seed)->envname("EVENPAD_SEED")->capture_default_str();

    TrainOptions train;
    auto* t = app.add_subcommand("train", "train plain conv nets and compare kernels");
    t->add_option("--task", train.task, "quadrant|idx")->capture_default_str();
    t->add_option("--kernel", train.kernel, "comma-separated kernel tags")->capture_default_str();
    t->add_option("--depth", train.depth)->capture_default_str();
    t->add_option("--width", train.width)->capture_default_str();
    t->add_option("--epochs", train.epochs)->capture_default_str();
    t->add_option("--seeds", train.seeds, "number of seeds")->capture_default_str();
    t->add_option("--seed", train.seed, "first seed")->envname("EVENPAD_SEED")->capture_default_str();
    t->add_option("--size", train.size, "quadrant image size")->capture_default_str();
    t->add_option("--train-size", train.train_size)->capture_default_str();
    t->add_option("--test-size", train.test_size)->capture_default_str();
    t->add_option("--noise", train.noise)->capture_default_str();
    t->add_option("--batch", train.batch)->capture_default_str();
    t->add_option("--lr", train.lr)->capture_default_str();
    t->add_option("--momentum", train.momentum)->capture_default_str();
    t->add_option("--wd", train.wd)->capture_default_str();
    t->add_option("--step-gamma", train.step_gamma)->capture_default_str();
    t->add_option("--step-every", train.step_every, "epochs per lr step; 0 keeps lr constant")->capture_default_str();
    t->add_option("--input-channels", train.input_channels, "grayscale input is tiled to this many channels")
        ->capture_default_str();
    t->add_option("--images", train.images);
    t->add_option("--labels", train.labels);
    t->add_option("--test-images", train.test_images);
    t->add_option("--test-labels", train.test_labels);
    t->add_option("--out", train.out)->capture_default_str();
    t->add_option("--model-dir", train.model_dir, "write one model dump per run here");

    HeatmapOptions heat;
    auto* h = app.add_subcommand("heatmap", "PGM heatmap of a tensor dump");
    h->add_option("--from", heat.from)->required();
    h->add_option("--out", heat.out)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& ex) {
        err << "error: " << ex.what() << '\n';
        return kExitUsage;
    }

    try {
        if (e->parsed()) {
            return run_erode(erode, out);
        }
        if (s->parsed()) {
            return run_shift_cmd(shift, out);
        }
        if (g->parsed()) {
            return run_gradcheck(grad, out);
        }
        if (od->parsed()) {
            return run_oracle_diff(oracle, out);
        }
        if (t->parsed()) {
            return run_train(train, out);
        }
        return run_heatmap(heat, out);
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << '\n';
        return kExitUsage;
    }
}

}  // namespace evenpad::cli
