// wd: Wasserstein-distortion toolkit CLI.
//
// Subcommands: distortion | synthesize | sigma-map | validate-limits |
// pairwise | progression | bench | export-features. All randomness funnels
// through named seeds; reruns with identical config and seeds produce
// byte-identical non-timing outputs.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#if defined(_OPENMP)
#include <omp.h>
#endif

#include "wd/distortion.hpp"
#include "wd/errors.hpp"
#include "wd/features.hpp"
#include "wd/grid.hpp"
#include "wd/io/png_io.hpp"
#include "wd/io/wdgrid.hpp"
#include "wd/limits_lab.hpp"
#include "wd/pooling.hpp"
#include "wd/reference.hpp"
#include "wd/rng.hpp"
#include "wd/sigma_map.hpp"
#include "wd/synthesis.hpp"

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;
constexpr int kExitInput = 3;

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// JSON run-config merge: CLI flags win; unknown keys are rejected.
class ConfigBinder {
public:
    template <typename T>
    void bind(CLI::Option* opt, T* field) {
        const std::string key = opt->get_name(false, true);
        entries_[normalize(key)] = {opt, [field](const json& v) { *field = v.get<T>(); }};
    }
    void bind_custom(CLI::Option* opt, std::function<void(const json&)> setter) {
        const std::string key = opt->get_name(false, true);
        entries_[normalize(key)] = {opt, std::move(setter)};
    }
    void apply_file(const std::string& path) const {
        std::ifstream f(path);
        if (!f) throw wd::IoError("config: cannot open: " + path);
        json cfg;
        try {
            f >> cfg;
        } catch (const json::exception& e) {
            throw wd::IoError("config: parse error in " + path + ": " + e.what());
        }
        if (!cfg.is_object()) throw wd::InputError("config: top level must be an object");
        for (const auto& [key, value] : cfg.items()) {
            const auto it = entries_.find(normalize(key));
            if (it == entries_.end()) throw wd::InputError("config: unknown key: " + key);
            if (it->second.first->count() > 0) continue;  // explicit flag wins
            try {
                it->second.second(value);
            } catch (const json::exception& e) {
                throw wd::InputError("config: bad value for " + key + ": " + e.what());
            }
        }
    }

private:
    static std::string normalize(std::string key) {
        while (!key.empty() && key.front() == '-') key.erase(key.begin());
        for (char& c : key)
            if (c == '_') c = '-';
        return key;
    }
    std::map<std::string, std::pair<CLI::Option*, std::function<void(const json&)>>> entries_;
};

std::vector<double> parse_double_list(const std::string& text) {
    std::vector<double> out;
    std::string item;
    std::istringstream is(text);
    while (std::getline(is, item, ',')) {
        if (item.empty()) continue;
        out.push_back(std::stod(item));
    }
    return out;
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    for (double v : parse_double_list(text)) out.push_back(static_cast<int>(v));
    return out;
}

struct FeatureOpts {
    int layers = 4;
    std::string widths = "16,32,64,64";
    int kernel = 3;
    std::uint64_t seed = 1;

    wd::FeatureStackSpec spec() const {
        wd::FeatureStackSpec s;
        s.num_layers = layers;
        s.widths = parse_int_list(widths);
        s.kernel_size = kernel;
        s.seed = seed;
        return s;
    }
};

void add_feature_opts(CLI::App* cmd, FeatureOpts* opts, ConfigBinder* binder) {
    binder->bind(cmd->add_option("--feature-layers", opts->layers, "Number of random conv layers"),
                 &opts->layers);
    binder->bind(cmd->add_option("--feature-widths", opts->widths,
                                 "Per-layer channel counts, comma separated"),
                 &opts->widths);
    binder->bind(cmd->add_option("--feature-kernel", opts->kernel, "Conv kernel size (odd)"),
                 &opts->kernel);
    binder->bind(cmd->add_option("--feature-seed", opts->seed, "Conv tap seed"), &opts->seed);
}

wd::SigmaMap load_sigma_map(const std::string& path) {
    int rows = 0, cols = 0;
    std::vector<double> values = wd::io::read_single_grid(path, rows, cols);
    wd::SigmaMap map;
    map.rows = rows;
    map.cols = cols;
    map.sigma = std::move(values);
    for (double v : map.sigma)
        if (!(v >= 0.0) || !std::isfinite(v)) throw wd::InputError("sigma-map contains invalid values");
    return map;
}

void write_heatmap_files(const std::string& prefix, const wd::Heatmap& heat) {
    wd::io::write_single_grid(prefix + ".wdg", heat.values, heat.rows, heat.cols);
    double lo = heat.values.empty() ? 0.0 : heat.values[0];
    double hi = lo;
    for (double v : heat.values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    wd::ImageGrid vis(heat.rows, heat.cols, 1);
    const double span = hi > lo ? hi - lo : 1.0;
    for (std::size_t i = 0; i < heat.values.size(); ++i)
        vis.values()[i] = (heat.values[i] - lo) / span;
    wd::io::write_png(prefix + ".png", vis);
    ordered_json sidecar;
    sidecar["min"] = lo;
    sidecar["max"] = hi;
    sidecar["rows"] = heat.rows;
    sidecar["cols"] = heat.cols;
    std::ofstream f(prefix + ".json", std::ios::trunc);
    if (!f) throw wd::IoError("cannot write sidecar: " + prefix + ".json");
    f << sidecar.dump(2) << "\n";
}

ordered_json report_to_json(const wd::DistortionReport& report) {
    ordered_json out;
    out["total"] = report.total;
    ordered_json per_layer = ordered_json::object();
    for (const auto& [id, v] : report.per_layer) per_layer[std::to_string(id)] = v;
    out["per_layer"] = per_layer;
    ordered_json points = ordered_json::array();
    for (const auto& p : report.per_point) {
        ordered_json e;
        e["layer"] = p.layer_id;
        e["row"] = p.row;
        e["col"] = p.col;
        e["sigma"] = p.sigma;
        e["value"] = p.value;
        e["weighted"] = p.weighted;
        points.push_back(e);
    }
    out["per_point"] = points;
    return out;
}

// ---------------------------------------------------------------- distortion

struct DistortionArgs {
    std::string ref, rec, sigma_map_path, out, heatmap_prefix;
    std::string features_ref, features_rec;
    double sigma = -1.0;
    std::string backend = "diag";
    std::string poi = "auto";
    int poi_random = 25, poi_sets = 20, set_index = 0;
    std::uint64_t poi_seed = 7;
    int heatmap_stride = 1;
    int sliced_projections = 64;
    std::uint64_t sliced_seed = 0;
    double p = 2.0;
    FeatureOpts features;
};

int cmd_distortion(const DistortionArgs& args) {
    const wd::ImageGrid ref = wd::io::read_png(args.ref);
    const wd::ImageGrid rec = wd::io::read_png(args.rec);
    if (!ref.same_shape(rec)) throw wd::InputError("distortion: images must share dimensions");

    wd::SigmaMap map;
    if (!args.sigma_map_path.empty())
        map = load_sigma_map(args.sigma_map_path);
    else if (args.sigma >= 0.0)
        map = wd::constant_sigma(ref.height(), ref.width(), args.sigma);
    else
        throw wd::InputError("distortion: provide --sigma-map or --sigma");
    if (map.rows != ref.height() || map.cols != ref.width())
        throw wd::InputError("distortion: sigma-map dims do not match images");

    wd::FeatureStack ref_stack, rec_stack;
    if (!args.features_ref.empty() || !args.features_rec.empty()) {
        if (args.features_ref.empty() || args.features_rec.empty())
            throw wd::InputError("distortion: provide both --features-ref and --features-rec");
        ref_stack = wd::io::read_stack(args.features_ref);
        rec_stack = wd::io::read_stack(args.features_rec);
    } else {
        const wd::FeatureStackSpec spec = args.features.spec();
        const auto banks = wd::banks_for_spec(spec, ref.channels());
        ref_stack = wd::feature_stack_with_banks(ref, spec, banks);
        rec_stack = wd::feature_stack_with_banks(rec, spec, banks);
    }
    if (!ref_stack.layer_compatible(rec_stack))
        throw wd::InputError("distortion: feature stacks are incompatible");

    const auto shapes = wd::layer_shapes(ref_stack);
    wd::PoiPlan plan;
    if (args.poi == "auto")
        plan = wd::build_poi_plan(map, shapes, args.poi_random, args.poi_sets, args.poi_seed);
    else if (args.poi == "center")
        plan = wd::center_poi_plan(map, shapes);
    else if (args.poi == "grid")
        plan = wd::grid_poi_plan(map, shapes);
    else
        throw wd::InputError("distortion: unknown --poi mode: " + args.poi);

    wd::DistortionParams params;
    params.backend = wd::backend_from_string(args.backend);
    params.p = args.p;
    params.sliced_projections = args.sliced_projections;
    params.sliced_seed = args.sliced_seed;

    const wd::Multipliers mult =
        wd::Multipliers::defaults_for(static_cast<int>(ref_stack.layers.size()) - 1);
    const wd::DistortionReport report =
        wd::total_distortion(ref_stack, rec_stack, plan, mult, params, args.set_index);

    const ordered_json out = report_to_json(report);
    if (args.out.empty()) {
        std::cout << out.dump(2) << "\n";
    } else {
        std::ofstream f(args.out, std::ios::trunc);
        if (!f) throw wd::IoError("cannot write report: " + args.out);
        f << out.dump(2) << "\n";
    }

    if (!args.heatmap_prefix.empty()) {
        const wd::Heatmap heat =
            wd::dense_heatmap(ref_stack, rec_stack, map, mult, params, args.heatmap_stride);
        write_heatmap_files(args.heatmap_prefix, heat);
    }
    return 0;
}

// ---------------------------------------------------------------- sigma-map

struct SigmaMapArgs {
    std::string like, out, png, pins, saliency;
    int rows = 0, cols = 0;
    double constant = -1.0;
    bool pinned_center = false;
    double threshold = 0.1;
    double edge_sigma = 0.0;  // 0 -> default to width
};

int cmd_sigma_map(const SigmaMapArgs& args) {
    int rows = args.rows, cols = args.cols;
    if (!args.like.empty()) {
        const wd::ImageGrid img = wd::io::read_png(args.like);
        rows = img.height();
        cols = img.width();
    }
    if (!args.saliency.empty()) {
        const wd::ImageGrid sal = wd::io::read_png(args.saliency);
        rows = sal.height();
        cols = sal.width();
    }
    if (rows <= 0 || cols <= 0) throw wd::InputError("sigma-map: provide --rows/--cols, --like or --saliency");
    const double edge = args.edge_sigma > 0.0 ? args.edge_sigma : static_cast<double>(cols);

    wd::SigmaMap map;
    if (args.constant >= 0.0) {
        map = wd::constant_sigma(rows, cols, args.constant);
    } else if (args.pinned_center) {
        std::vector<std::uint8_t> pins(static_cast<std::size_t>(rows) * cols, 0);
        pins[static_cast<std::size_t>(rows / 2) * cols + cols / 2] = 1;
        map = wd::pinned_sigma(rows, cols, pins, edge);
    } else if (!args.pins.empty()) {
        const wd::ImageGrid mask_img = wd::io::read_png(args.pins);
        if (mask_img.height() != rows || mask_img.width() != cols)
            throw wd::InputError("sigma-map: pin mask dims mismatch");
        std::vector<std::uint8_t> pins(static_cast<std::size_t>(rows) * cols, 0);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) pins[static_cast<std::size_t>(r) * cols + c] = mask_img.at(r, c, 0) > 0.5;
        map = wd::pinned_sigma(rows, cols, pins, edge);
    } else if (!args.saliency.empty()) {
        const wd::ImageGrid sal_img = wd::io::read_png(args.saliency);
        map = wd::saliency_sigma(wd::saliency_from_image(sal_img), args.threshold, edge);
    } else {
        throw wd::InputError("sigma-map: choose --constant, --pinned-center, --pins or --saliency");
    }

    if (args.out.empty()) throw wd::InputError("sigma-map: --out is required");
    wd::io::write_single_grid(args.out, map.sigma, map.rows, map.cols);
    if (!args.png.empty()) {
        double hi = 0.0;
        for (double v : map.sigma) hi = std::max(hi, v);
        wd::ImageGrid vis(rows, cols, 1);
        const double span = hi > 0.0 ? hi : 1.0;
        for (std::size_t i = 0; i < map.sigma.size(); ++i) vis.values()[i] = map.sigma[i] / span;
        wd::io::write_png(args.png, vis);
    }
    return 0;
}

// ---------------------------------------------------------------- synthesize

struct SynthesizeArgs {
    std::string ref, out, trace, sigma_map_path, saliency, init = "noise";
    double sigma = -1.0;
    bool pinned_center = false;
    double threshold = 0.1;
    double edge_sigma = 0.0;
    int iterations = 4000;
    std::string optimizer = "lbfgs";
    int lbfgs_memory = 10;
    int early_window = 200;
    double early_rel = 1e-4;
    std::uint64_t init_seed = 11, poi_seed = 7, rotate_seed = 99;
    std::string poi = "auto";
    int poi_random = 25, poi_sets = 20;
    double gram_weight = -1.0;  // >= 0 switches to the gram baseline
    FeatureOpts features;
};

void write_trace_csv(const std::string& path, const std::vector<double>& loss) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw wd::IoError("cannot write trace: " + path);
    f << "iteration,loss\n";
    for (std::size_t i = 0; i < loss.size(); ++i)
        f << i << "," << fmt17(loss[i]) << "\n";
    if (!f) throw wd::IoError("trace write failed: " + path);
}

int cmd_synthesize(const SynthesizeArgs& args) {
    const wd::ImageGrid ref = wd::io::read_png(args.ref);
    const double edge = args.edge_sigma > 0.0 ? args.edge_sigma : static_cast<double>(ref.width());

    wd::SynthesisConfig cfg;
    cfg.max_iterations = args.iterations;
    cfg.optimizer = args.optimizer == "adam" ? wd::OptimizerKind::adam_fallback : wd::OptimizerKind::lbfgs;
    cfg.lbfgs_memory = args.lbfgs_memory;
    cfg.early_stop.window = args.early_window;
    cfg.early_stop.rel_improvement = args.early_rel;
    cfg.init_seed = args.init_seed;
    cfg.poi_seed = args.poi_seed;
    cfg.rotate_seed = args.rotate_seed;
    cfg.poi_random = args.poi_random;
    cfg.poi_sets = args.poi_sets;
    cfg.features = args.features.spec();
    if (args.poi == "center")
        cfg.poi_mode = wd::PoiMode::center;
    else if (args.poi == "grid")
        cfg.poi_mode = wd::PoiMode::grid;
    else if (args.poi == "auto")
        cfg.poi_mode = wd::PoiMode::automatic;
    else
        throw wd::InputError("synthesize: unknown --poi mode: " + args.poi);
    if (args.init != "noise") {
        cfg.init = wd::InitMode::provided;
        cfg.init_image = wd::io::read_png(args.init);
    }

    wd::ImageGrid out_image;
    wd::SynthesisTrace trace;
    if (args.gram_weight >= 0.0) {
        if (args.saliency.empty())
            throw wd::InputError("synthesize: the gram baseline needs --saliency for the MSE mask");
        const wd::ImageGrid sal_img = wd::io::read_png(args.saliency);
        if (sal_img.height() != ref.height() || sal_img.width() != ref.width())
            throw wd::InputError("synthesize: saliency dims do not match reference");
        const wd::SaliencyGrid sal = wd::saliency_from_image(sal_img);
        std::vector<std::uint8_t> mask(sal.value.size());
        for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = sal.value[i] > args.threshold;
        std::tie(out_image, trace) = wd::baseline_mse_plus_gram(ref, mask, args.gram_weight, cfg);
    } else {
        wd::SigmaMap map;
        if (!args.sigma_map_path.empty())
            map = load_sigma_map(args.sigma_map_path);
        else if (args.sigma >= 0.0)
            map = wd::constant_sigma(ref.height(), ref.width(), args.sigma);
        else if (args.pinned_center) {
            std::vector<std::uint8_t> pins(ref.size() / ref.channels(), 0);
            pins[static_cast<std::size_t>(ref.height() / 2) * ref.width() + ref.width() / 2] = 1;
            map = wd::pinned_sigma(ref.height(), ref.width(), pins, edge);
        } else if (!args.saliency.empty()) {
            const wd::ImageGrid sal_img = wd::io::read_png(args.saliency);
            map = wd::saliency_sigma(wd::saliency_from_image(sal_img), args.threshold, edge);
        } else {
            throw wd::InputError("synthesize: provide --sigma-map, --sigma, --pinned-center or --saliency");
        }
        std::tie(out_image, trace) = wd::synthesize(ref, map, cfg);
    }

    if (args.out.empty()) throw wd::InputError("synthesize: --out is required");
    wd::io::write_png(args.out, out_image);
    if (!args.trace.empty()) write_trace_csv(args.trace, trace.loss);

    std::cout << "final_loss=" << fmt17(trace.loss.back())
              << " iterations=" << trace.loss.size() - 1
              << " stop=" << wd::stop_reason_name(trace.stop_reason)
              << " pixel_mse=" << fmt17(wd::mean_squared_error(out_image, ref)) << "\n";
    std::cerr << "wall_seconds=" << trace.wall_seconds << "\n";
    return 0;
}

// ---------------------------------------------------------------- pairwise

struct PairwiseArgs {
    std::vector<std::string> images;
    double sigma = 4000.0;
    int grid_points = 3;
    std::string out;
    FeatureOpts features;
};

int cmd_pairwise(const PairwiseArgs& args) {
    if (args.images.size() < 2) throw wd::InputError("pairwise: need at least 2 images");

    const wd::FeatureStackSpec spec = args.features.spec();
    std::vector<wd::ImageGrid> images;
    for (const auto& path : args.images) images.push_back(wd::io::read_png(path));
    for (const auto& img : images)
        if (img.channels() != images[0].channels())
            throw wd::InputError("pairwise: images must share channel count");

    const auto banks = wd::banks_for_spec(spec, images[0].channels());

    // Pooled moments per image at its own even grid; cross-resolution
    // comparison happens moment-to-moment, layer by layer.
    struct ImageMoments {
        std::vector<std::vector<wd::PooledMoments>> per_layer;  // [layer][point]
        std::vector<int> depths;
    };
    std::vector<ImageMoments> moments;
    for (const auto& img : images) {
        const wd::FeatureStack stack = wd::feature_stack_with_banks(img, spec, banks);
        ImageMoments im;
        for (const auto& layer : stack.layers) {
            const wd::SigmaMap map = wd::constant_sigma(layer.height, layer.width,
                                                        args.sigma / static_cast<double>(layer.scale));
            std::vector<wd::PooledMoments> pts;
            const wd::PoolingPmf1D pmf = wd::make_tsg_pmf(args.sigma / layer.scale);
            for (int gi = 0; gi < args.grid_points; ++gi)
                for (int gj = 0; gj < args.grid_points; ++gj) {
                    const int r = static_cast<int>((static_cast<long long>(layer.height) * (2 * gi + 1)) /
                                                   (2 * args.grid_points));
                    const int c = static_cast<int>((static_cast<long long>(layer.width) * (2 * gj + 1)) /
                                                   (2 * args.grid_points));
                    const wd::PoolingKernel2D kernel =
                        wd::product_kernel_2d(pmf, r, c, layer.height, layer.width);
                    pts.push_back(wd::pooled_moments(layer, kernel));
                }
            (void)map;
            im.per_layer.push_back(std::move(pts));
            im.depths.push_back(layer.depth);
        }
        moments.push_back(std::move(im));
    }

    const std::size_t n = images.size();
    std::vector<double> matrix(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            std::size_t count = 0;
            for (std::size_t li = 0; li < moments[i].per_layer.size(); ++li) {
                const auto& a = moments[i].per_layer[li];
                const auto& b = moments[j].per_layer[li];
                for (std::size_t pt = 0; pt < a.size(); ++pt) {
                    acc += wd::gaussianized_diag_w2(a[pt], b[pt]) / moments[i].depths[li];
                    ++count;
                }
            }
            matrix[i * n + j] = acc / static_cast<double>(count);
        }

    std::ostringstream csv;
    csv << "label";
    for (const auto& path : args.images) csv << "," << std::filesystem::path(path).stem().string();
    csv << "\n";
    for (std::size_t i = 0; i < n; ++i) {
        csv << std::filesystem::path(args.images[i]).stem().string();
        for (std::size_t j = 0; j < n; ++j) csv << "," << fmt17(matrix[i * n + j]);
        csv << "\n";
    }
    if (args.out.empty()) {
        std::cout << csv.str();
    } else {
        std::ofstream f(args.out, std::ios::trunc);
        if (!f) throw wd::IoError("cannot write matrix: " + args.out);
        f << csv.str();
    }
    return 0;
}

// ------------------------------------------------------------ validate-limits

struct ValidateArgs {
    std::string out_dir = ".";
    std::string axiom_sigmas = "0,0.01,0.1,1,10,10000";
    std::string fidelity_sigmas = "1,0.3,0.1,0.03,0";
    std::string realism_sigmas = "1,10,100,1000,10000";
    bool inject_asymmetric = false;
    int max_offset = 100000;
};

int cmd_validate_limits(const ValidateArgs& args) {
    namespace fs = std::filesystem;
    fs::create_directories(args.out_dir);
    bool all_pass = true;
    const auto verdict = [&](const std::string& name, bool pass, const std::string& detail) {
        std::cout << (pass ? "[pass] " : "[FAIL] ") << name << (detail.empty() ? "" : " (" + detail + ")")
                  << "\n";
        all_pass = all_pass && pass;
    };

    // Pooling family properties.
    {
        const std::vector<double> grid = parse_double_list(args.axiom_sigmas);
        wd::PmfBuilder builder = [&](double s) { return wd::make_tsg_pmf(s); };
        if (args.inject_asymmetric) {
            builder = [](double s) {
                wd::PoolingPmf1D p = wd::make_tsg_pmf(s);
                if (p.truncation_radius >= 1) {
                    // Shift one unit of mass to break symmetry.
                    const std::size_t at = static_cast<std::size_t>(p.truncation_radius + 1);
                    const double delta = 0.25 * p.weights[at];
                    p.weights[at] += delta;
                    p.weights[at - 2] -= delta;
                }
                return p;
            };
        }
        const wd::AxiomReport report = wd::check_pmf_axioms(grid, builder, args.max_offset);
        std::cout << report.to_string();
        verdict("pooling_pmf_properties", report.all_pass(), "");
    }

    // Cesaro equivalence at large sigma.
    {
        struct Case {
            const char* name;
            wd::Seq1D seq;
            double mean;
        };
        std::vector<double> window(21, 1.0);
        const std::vector<Case> cases = {
            {"constant", wd::Seq1D::periodic({1.0}), 1.0},
            {"alternating_pm1", wd::Seq1D::periodic({1.0, -1.0}), 0.0},
            {"finite_window", wd::Seq1D::zero_extended(window), 0.0},
            {"periodic_001", wd::Seq1D::periodic({0.0, 0.0, 1.0}), 1.0 / 3.0},
            {"iid_uniform", wd::Seq1D::iid_uniform(5), 0.5},
        };
        bool pass = true;
        std::string detail;
        for (const auto& c : cases) {
            const double v = wd::cesaro_weighted_sum(c.seq, 1e4);
            if (std::abs(v - c.mean) >= 1e-2) {
                pass = false;
                detail = std::string(c.name) + ": " + fmt17(v);
                break;
            }
        }
        verdict("cesaro_equivalence", pass, detail);
    }

    // Small-sigma (fidelity) limit.
    {
        std::vector<double> grid = parse_double_list(args.fidelity_sigmas);
        const wd::Seq1D z = wd::Seq1D::periodic({0.0, 1.0});
        const wd::Seq1D zh = wd::Seq1D::periodic({1.0, 0.0});
        const wd::ConvergenceTable table = wd::fidelity_limit_table(z, zh, 2.0, grid);
        wd::write_table_csv(args.out_dir + "/fidelity_alternating.csv", table);
        verdict("fidelity_limit_alternating", table.pass, table.detail);
    }

    // Large-sigma (realism) limit, periodic case.
    {
        std::vector<double> grid = parse_double_list(args.realism_sigmas);
        const wd::Seq1D z = wd::Seq1D::periodic({0.0, 0.0, 1.0});
        const wd::Seq1D zh = wd::Seq1D::periodic({1.0, 1.0, 0.0});
        const wd::ConvergenceTable table = wd::realism_limit_table(z, zh, 1.0, grid);
        wd::write_table_csv(args.out_dir + "/realism_periodic.csv", table);
        verdict("realism_limit_periodic", table.pass, table.detail);
    }

    // Ergodic case: two independent realizations of the same law.
    {
        std::vector<double> grid = parse_double_list(args.realism_sigmas);
        const wd::Seq1D z = wd::Seq1D::iid_uniform(3);
        const wd::Seq1D zh = wd::Seq1D::iid_uniform(4);
        const wd::ConvergenceTable table = wd::realism_limit_table(z, zh, 2.0, grid, 2e-2);
        wd::write_table_csv(args.out_dir + "/realism_iid.csv", table);
        verdict("realism_limit_iid", table.pass, table.detail);
    }

    return all_pass ? 0 : kExitValidation;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
    int dims = 64;
    std::string depths = "32,64,128";
    std::string backends = "diag,sliced";
    std::string out;
    int sliced_projections = 0;  // 0 -> d projections
    int repeats = 5;
};

double time_median_seconds(const std::function<void()>& fn, int repeats) {
    std::vector<double> times;
    times.reserve(static_cast<std::size_t>(repeats));
    for (int i = 0; i < repeats; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    std::sort(times.begin(), times.end());
    return times[times.size() / 2];
}

wd::FeatureLayer random_layer(int dims, int depth, std::uint64_t seed) {
    wd::FeatureLayer layer;
    layer.layer_id = 0;
    layer.scale = 1;
    layer.height = dims;
    layer.width = dims;
    layer.depth = depth;
    layer.values.resize(static_cast<std::size_t>(dims) * dims * depth);
    wd::Rng rng(seed);
    for (double& v : layer.values) v = rng.uniform();
    return layer;
}

int cmd_bench(const BenchArgs& args) {
    std::ostringstream csv;
    csv << "kind,name,d,n,seconds\n";

    // Backend comparison at a full-extent kernel.
    std::vector<double> log_dn, log_t;
    {
        std::istringstream is(args.backends);
        std::vector<std::string> backends;
        std::string item;
        while (std::getline(is, item, ',')) backends.push_back(item);

        for (int d : parse_int_list(args.depths)) {
            wd::FeatureStack a, b;
            a.layers.push_back(random_layer(args.dims, d, 101));
            b.layers.push_back(random_layer(args.dims, d, 202));
            const int n = args.dims * args.dims;
            for (const auto& name : backends) {
                wd::DistortionParams params;
                params.backend = wd::backend_from_string(name);
                params.sliced_projections = args.sliced_projections > 0 ? args.sliced_projections : d;
                const double t = time_median_seconds(
                    [&] {
                        volatile double sink = wd::local_distortion(
                            a, b, 0, args.dims / 2, args.dims / 2, static_cast<double>(args.dims), params);
                        (void)sink;
                    },
                    args.repeats);
                csv << "backend," << name << "," << d << "," << n << "," << fmt17(t) << "\n";
                std::cout << "backend " << name << " d=" << d << " n=" << n << " seconds=" << t << "\n";
                if (name == "diag") {
                    log_dn.push_back(std::log(static_cast<double>(d) * n));
                    log_t.push_back(std::log(std::max(t, 1e-12)));
                }
            }
        }
    }
    if (log_dn.size() >= 2) {
        // Least-squares slope of log t vs log(d*n).
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        const double m = static_cast<double>(log_dn.size());
        for (std::size_t i = 0; i < log_dn.size(); ++i) {
            sx += log_dn[i];
            sy += log_t[i];
            sxx += log_dn[i] * log_dn[i];
            sxy += log_dn[i] * log_t[i];
        }
        const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
        std::cout << "diag_scaling_exponent=" << slope << "\n";
        csv << "fit,diag_scaling_exponent,0,0," << fmt17(slope) << "\n";
    }

    // Serial vs OpenMP kernels.
    {
        const wd::FeatureLayer input = random_layer(args.dims, 3, 303);
        const wd::KernelBank bank = wd::random_kernel_bank(16, 3, 3, wd::Nonlinearity::rectify, 7);
        const double ts = time_median_seconds([&] { volatile auto out = wd::ref::conv_bank_apply(input, bank); }, args.repeats);
        const double tp = time_median_seconds([&] { volatile auto out = wd::conv_bank_apply(input, bank); }, args.repeats);
        csv << "kernel,conv_serial,3," << args.dims * args.dims << "," << fmt17(ts) << "\n";
        csv << "kernel,conv_parallel,3," << args.dims * args.dims << "," << fmt17(tp) << "\n";
        std::cout << "conv serial=" << ts << " parallel=" << tp << "\n";

        const wd::FeatureLayer big = random_layer(args.dims, 32, 404);
        const wd::PoolingPmf1D pmf = wd::make_tsg_pmf(args.dims);
        const wd::PoolingKernel2D kernel =
            wd::product_kernel_2d(pmf, args.dims / 2, args.dims / 2, args.dims, args.dims);
        const double ms = time_median_seconds([&] { volatile auto m = wd::ref::pooled_moments(big, kernel); }, args.repeats);
        csv << "kernel,pooled_moments_serial,32," << args.dims * args.dims << "," << fmt17(ms) << "\n";
        std::cout << "pooled_moments serial=" << ms << "\n";

        wd::FeatureStack a, b;
        a.layers.push_back(random_layer(args.dims, 16, 505));
        b.layers.push_back(random_layer(args.dims, 16, 606));
        const wd::SigmaMap map = wd::constant_sigma(args.dims, args.dims, args.dims);
        const wd::PoiPlan plan = wd::grid_poi_plan(map, wd::layer_shapes(a));
        const wd::Multipliers mult = wd::Multipliers::defaults_for(0);
        wd::DistortionParams params;
        const double tts = time_median_seconds(
            [&] { volatile auto r = wd::ref::total_distortion(a, b, plan, mult, params); }, args.repeats);
        const double ttp = time_median_seconds(
            [&] { volatile auto r = wd::total_distortion(a, b, plan, mult, params); }, args.repeats);
        csv << "kernel,total_distortion_serial,16," << args.dims * args.dims << "," << fmt17(tts) << "\n";
        csv << "kernel,total_distortion_parallel,16," << args.dims * args.dims << "," << fmt17(ttp) << "\n";
        std::cout << "total_distortion serial=" << tts << " parallel=" << ttp << "\n";
    }

    if (!args.out.empty()) {
        std::ofstream f(args.out, std::ios::trunc);
        if (!f) throw wd::IoError("cannot write timings: " + args.out);
        f << csv.str();
    }
    return 0;
}

// ---------------------------------------------------------------- progression

struct ProgressionArgs {
    std::string ref, out_dir = ".";
    std::string sigmas = "0,4,16,64";
    int iterations = 600;
    std::uint64_t init_seed = 11;
    FeatureOpts features;
};

int cmd_progression(const ProgressionArgs& args) {
    namespace fs = std::filesystem;
    fs::create_directories(args.out_dir);
    const wd::ImageGrid ref = wd::io::read_png(args.ref);

    wd::SynthesisConfig cfg;
    cfg.max_iterations = args.iterations;
    cfg.init_seed = args.init_seed;
    cfg.features = args.features.spec();

    const std::vector<double> sigmas = parse_double_list(args.sigmas);
    const auto entries = wd::sigma_progression(ref, sigmas, cfg);

    std::ofstream csv(args.out_dir + "/progression.csv", std::ios::trunc);
    if (!csv) throw wd::IoError("cannot write progression.csv");
    csv << "sigma,pixel_mse,final_loss\n";
    for (const auto& e : entries) {
        char name[64];
        std::snprintf(name, sizeof(name), "sigma_%g.png", e.sigma);
        wd::io::write_png(args.out_dir + "/" + name, e.image);
        csv << fmt17(e.sigma) << "," << fmt17(e.pixel_mse) << "," << fmt17(e.final_loss) << "\n";
        std::cout << "sigma=" << e.sigma << " pixel_mse=" << e.pixel_mse << " final_loss=" << e.final_loss
                  << "\n";
    }
    return 0;
}

// ------------------------------------------------------------ export-features

struct ExportArgs {
    std::string image, out;
    FeatureOpts features;
};

int cmd_export_features(const ExportArgs& args) {
    const wd::ImageGrid img = wd::io::read_png(args.image);
    const wd::FeatureStack stack = wd::random_feature_stack(img, args.features.spec());
    if (args.out.empty()) throw wd::InputError("export-features: --out is required");
    wd::io::write_stack(args.out, stack);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Wasserstein distortion toolkit"};
    app.require_subcommand(1);

    int threads = 0;
    app.add_option("--threads", threads, "Worker thread cap (0 = library default)");

    std::string config_path;

    DistortionArgs dist;
    SigmaMapArgs smap;
    SynthesizeArgs synth;
    PairwiseArgs pair;
    ValidateArgs val;
    BenchArgs bench;
    ProgressionArgs prog;
    ExportArgs expo;

    ConfigBinder dist_binder, smap_binder, synth_binder, pair_binder, val_binder, bench_binder,
        prog_binder, expo_binder;

    // distortion
    auto* cd = app.add_subcommand("distortion", "Evaluate distortion between two images");
    cd->add_option("--config", config_path, "JSON config file");
    dist_binder.bind(cd->add_option("--ref", dist.ref, "Reference PNG")->required(), &dist.ref);
    dist_binder.bind(cd->add_option("--rec", dist.rec, "Reconstruction PNG")->required(), &dist.rec);
    dist_binder.bind(cd->add_option("--sigma-map", dist.sigma_map_path, "Sigma-map WDGRID"), &dist.sigma_map_path);
    dist_binder.bind(cd->add_option("--sigma", dist.sigma, "Constant sigma"), &dist.sigma);
    dist_binder.bind(cd->add_option("--backend", dist.backend, "diag|bures|exact1d|sliced"), &dist.backend);
    dist_binder.bind(cd->add_option("--poi", dist.poi, "auto|center|grid"), &dist.poi);
    dist_binder.bind(cd->add_option("--poi-random", dist.poi_random, "Random points per layer"), &dist.poi_random);
    dist_binder.bind(cd->add_option("--poi-sets", dist.poi_sets, "Pre-drawn point sets"), &dist.poi_sets);
    dist_binder.bind(cd->add_option("--poi-seed", dist.poi_seed, "Point sampling seed"), &dist.poi_seed);
    dist_binder.bind(cd->add_option("--set-index", dist.set_index, "Active rotating set"), &dist.set_index);
    dist_binder.bind(cd->add_option("--out", dist.out, "Report JSON path (default stdout)"), &dist.out);
    dist_binder.bind(cd->add_option("--heatmap", dist.heatmap_prefix, "Heatmap output prefix"), &dist.heatmap_prefix);
    dist_binder.bind(cd->add_option("--heatmap-stride", dist.heatmap_stride, "Heatmap subsampling"), &dist.heatmap_stride);
    dist_binder.bind(cd->add_option("--features-ref", dist.features_ref, "Imported WDGRID stack"), &dist.features_ref);
    dist_binder.bind(cd->add_option("--features-rec", dist.features_rec, "Imported WDGRID stack"), &dist.features_rec);
    dist_binder.bind(cd->add_option("--p", dist.p, "Wasserstein order"), &dist.p);
    dist_binder.bind(cd->add_option("--sliced-projections", dist.sliced_projections, "Projections"), &dist.sliced_projections);
    dist_binder.bind(cd->add_option("--sliced-seed", dist.sliced_seed, "Projection seed"), &dist.sliced_seed);
    add_feature_opts(cd, &dist.features, &dist_binder);

    // sigma-map
    auto* cs = app.add_subcommand("sigma-map", "Build a sigma-map");
    cs->add_option("--config", config_path, "JSON config file");
    smap_binder.bind(cs->add_option("--rows", smap.rows, "Rows"), &smap.rows);
    smap_binder.bind(cs->add_option("--cols", smap.cols, "Cols"), &smap.cols);
    smap_binder.bind(cs->add_option("--like", smap.like, "Take dims from this PNG"), &smap.like);
    smap_binder.bind(cs->add_option("--constant", smap.constant, "Constant sigma"), &smap.constant);
    smap_binder.bind_custom(cs->add_flag("--pinned-center", smap.pinned_center, "Single center pin"),
                            [&](const json& v) { smap.pinned_center = v.get<bool>(); });
    smap_binder.bind(cs->add_option("--pins", smap.pins, "Pin mask PNG (>0.5 = pinned)"), &smap.pins);
    smap_binder.bind(cs->add_option("--saliency", smap.saliency, "Saliency PNG"), &smap.saliency);
    smap_binder.bind(cs->add_option("--saliency-threshold", smap.threshold, "High-saliency threshold"), &smap.threshold);
    smap_binder.bind(cs->add_option("--edge-sigma", smap.edge_sigma, "Sigma at the farthest pixel"), &smap.edge_sigma);
    smap_binder.bind(cs->add_option("--out", smap.out, "Output WDGRID")->required(), &smap.out);
    smap_binder.bind(cs->add_option("--png", smap.png, "Optional PNG visualization"), &smap.png);

    // synthesize
    auto* cy = app.add_subcommand("synthesize", "Generate an image minimizing distortion");
    cy->add_option("--config", config_path, "JSON config file");
    synth_binder.bind(cy->add_option("--ref", synth.ref, "Reference PNG")->required(), &synth.ref);
    synth_binder.bind(cy->add_option("--out", synth.out, "Output PNG")->required(), &synth.out);
    synth_binder.bind(cy->add_option("--trace", synth.trace, "Loss trace CSV"), &synth.trace);
    synth_binder.bind(cy->add_option("--sigma-map", synth.sigma_map_path, "Sigma-map WDGRID"), &synth.sigma_map_path);
    synth_binder.bind(cy->add_option("--sigma", synth.sigma, "Constant sigma"), &synth.sigma);
    synth_binder.bind_custom(cy->add_flag("--pinned-center", synth.pinned_center, "Center-pinned sigma-map"),
                             [&](const json& v) { synth.pinned_center = v.get<bool>(); });
    synth_binder.bind(cy->add_option("--saliency", synth.saliency, "Saliency PNG"), &synth.saliency);
    synth_binder.bind(cy->add_option("--saliency-threshold", synth.threshold, "Threshold"), &synth.threshold);
    synth_binder.bind(cy->add_option("--edge-sigma", synth.edge_sigma, "Sigma at farthest pixel"), &synth.edge_sigma);
    synth_binder.bind(cy->add_option("--iterations", synth.iterations, "Max iterations"), &synth.iterations);
    synth_binder.bind(cy->add_option("--optimizer", synth.optimizer, "lbfgs|adam"), &synth.optimizer);
    synth_binder.bind(cy->add_option("--lbfgs-memory", synth.lbfgs_memory, "History pairs"), &synth.lbfgs_memory);
    synth_binder.bind(cy->add_option("--early-window", synth.early_window, "Early-stop window"), &synth.early_window);
    synth_binder.bind(cy->add_option("--early-rel", synth.early_rel, "Early-stop relative improvement"), &synth.early_rel);
    synth_binder.bind(cy->add_option("--init", synth.init, "noise | PNG path"), &synth.init);
    synth_binder.bind(cy->add_option("--init-seed", synth.init_seed, "Init noise seed"), &synth.init_seed);
    synth_binder.bind(cy->add_option("--poi", synth.poi, "auto|center|grid"), &synth.poi);
    synth_binder.bind(cy->add_option("--poi-random", synth.poi_random, "Random points per layer"), &synth.poi_random);
    synth_binder.bind(cy->add_option("--poi-sets", synth.poi_sets, "Pre-drawn point sets"), &synth.poi_sets);
    synth_binder.bind(cy->add_option("--poi-seed", synth.poi_seed, "Point sampling seed"), &synth.poi_seed);
    synth_binder.bind(cy->add_option("--rotate-seed", synth.rotate_seed, "Set rotation seed"), &synth.rotate_seed);
    synth_binder.bind(cy->add_option("--gram-weight", synth.gram_weight,
                                     "Run the masked-MSE + Gram baseline with this weight"),
                      &synth.gram_weight);
    add_feature_opts(cy, &synth.features, &synth_binder);

    // pairwise
    auto* cp = app.add_subcommand("pairwise", "Pairwise distortion matrix");
    cp->add_option("--config", config_path, "JSON config file");
    pair_binder.bind(cp->add_option("--images", pair.images, "Input PNGs")->required()->expected(-2),
                     &pair.images);
    pair_binder.bind(cp->add_option("--sigma", pair.sigma, "Pooling width"), &pair.sigma);
    pair_binder.bind(cp->add_option("--grid-points", pair.grid_points, "Grid points per dimension"), &pair.grid_points);
    pair_binder.bind(cp->add_option("--out", pair.out, "Matrix CSV (default stdout)"), &pair.out);
    add_feature_opts(cp, &pair.features, &pair_binder);

    // validate-limits
    auto* cv = app.add_subcommand("validate-limits", "Numeric validation of the limit behavior");
    cv->add_option("--config", config_path, "JSON config file");
    val_binder.bind(cv->add_option("--out-dir", val.out_dir, "CSV output directory"), &val.out_dir);
    val_binder.bind(cv->add_option("--axiom-sigmas", val.axiom_sigmas, "Sigma grid for PMF checks"), &val.axiom_sigmas);
    val_binder.bind(cv->add_option("--fidelity-sigmas", val.fidelity_sigmas, "Descending grid to 0"), &val.fidelity_sigmas);
    val_binder.bind(cv->add_option("--realism-sigmas", val.realism_sigmas, "Ascending grid"), &val.realism_sigmas);
    val_binder.bind(cv->add_option("--max-offset", val.max_offset, "Largest |k| checked"), &val.max_offset);
    val_binder.bind_custom(cv->add_flag("--inject-asymmetric", val.inject_asymmetric,
                                        "Corrupt the PMF to exercise the failure path"),
                           [&](const json& v) { val.inject_asymmetric = v.get<bool>(); });

    // progression
    auto* cg = app.add_subcommand("progression", "Synthesis across a sigma ladder");
    cg->add_option("--config", config_path, "JSON config file");
    prog_binder.bind(cg->add_option("--ref", prog.ref, "Reference PNG")->required(), &prog.ref);
    prog_binder.bind(cg->add_option("--sigmas", prog.sigmas, "Ascending sigma list"), &prog.sigmas);
    prog_binder.bind(cg->add_option("--out-dir", prog.out_dir, "Output directory"), &prog.out_dir);
    prog_binder.bind(cg->add_option("--iterations", prog.iterations, "Max iterations per run"), &prog.iterations);
    prog_binder.bind(cg->add_option("--init-seed", prog.init_seed, "Init noise seed"), &prog.init_seed);
    add_feature_opts(cg, &prog.features, &prog_binder);

    // bench
    auto* cb = app.add_subcommand("bench", "Backend and kernel timings");
    cb->add_option("--config", config_path, "JSON config file");
    bench_binder.bind(cb->add_option("--dims", bench.dims, "Layer side length"), &bench.dims);
    bench_binder.bind(cb->add_option("--depths", bench.depths, "Feature depths, comma separated"), &bench.depths);
    bench_binder.bind(cb->add_option("--backends", bench.backends, "Backends, comma separated"), &bench.backends);
    bench_binder.bind(cb->add_option("--out", bench.out, "Timing CSV"), &bench.out);
    bench_binder.bind(cb->add_option("--sliced-projections", bench.sliced_projections, "0 = d projections"),
                      &bench.sliced_projections);
    bench_binder.bind(cb->add_option("--repeats", bench.repeats, "Repetitions (median)"), &bench.repeats);

    // export-features
    auto* ce = app.add_subcommand("export-features", "Write a feature stack as WDGRID");
    ce->add_option("--config", config_path, "JSON config file");
    expo_binder.bind(ce->add_option("--image", expo.image, "Input PNG")->required(), &expo.image);
    expo_binder.bind(ce->add_option("--out", expo.out, "Output WDGRID")->required(), &expo.out);
    add_feature_opts(ce, &expo.features, &expo_binder);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return kExitInput;
    }

#if defined(_OPENMP)
    if (threads > 0) omp_set_num_threads(threads);
#endif

    try {
        if (!config_path.empty()) {
            if (cd->parsed()) dist_binder.apply_file(config_path);
            if (cs->parsed()) smap_binder.apply_file(config_path);
            if (cy->parsed()) synth_binder.apply_file(config_path);
            if (cp->parsed()) pair_binder.apply_file(config_path);
            if (cv->parsed()) val_binder.apply_file(config_path);
            if (cb->parsed()) bench_binder.apply_file(config_path);
            if (cg->parsed()) prog_binder.apply_file(config_path);
            if (ce->parsed()) expo_binder.apply_file(config_path);
        }
        if (cd->parsed()) return cmd_distortion(dist);
        if (cs->parsed()) return cmd_sigma_map(smap);
        if (cy->parsed()) return cmd_synthesize(synth);
        if (cp->parsed()) return cmd_pairwise(pair);
        if (cv->parsed()) return cmd_validate_limits(val);
        if (cb->parsed()) return cmd_bench(bench);
        if (cg->parsed()) return cmd_progression(prog);
        if (ce->parsed()) return cmd_export_features(expo);
    } catch (const wd::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const wd::InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
    return 0;
}
